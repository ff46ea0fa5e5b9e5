"""Config parsing, topology construction, and compilation to both engines."""

import dataclasses
import math

import numpy as np
import pytest

from csmafade.errors import ValidationError
from csmafade.scenarios import (
    Topology,
    apply_override,
    build_contention_tables,
    compile_sim_network,
    load_scenario,
    parse_config,
    scenario_from_config,
)

import topo_helpers


MINIMAL_STAR = """
topology:
  kind: star
  n_nodes: 3
lam: 5.0
"""


def scenario_of(text, **overrides):
    config = parse_config(text, "inline.yaml")
    for assignment in overrides.pop("set", ()):
        apply_override(config, assignment)
    return scenario_from_config(config, default_id="inline")


def test_minimal_config_fills_documented_defaults():
    s = scenario_of(MINIMAL_STAR)
    assert (s.mac.m0, s.mac.mb, s.mac.m, s.mac.n) == (3, 5, 4, 0)
    assert s.timing.l_pkt == pytest.approx(7.0)
    assert s.timing.l_ack == pytest.approx(1.1)
    assert s.channel.c0_db == -55.0 and s.channel.k == 2.0
    assert s.channel.a_dbm == -76.0 and s.channel.b_db == 6.0
    assert s.fading.sigma == 0.0 and s.fading.kappa is None
    assert s.sim.horizon_seconds == 200.0 and s.sim.replications == 20


def test_scalar_rate_expands_to_transmitters_only():
    s = scenario_of(MINIMAL_STAR)
    assert s.lam == (0.0, 5.0, 5.0)


def test_sigma_db_uses_the_power_convention():
    s = scenario_of(MINIMAL_STAR, set=["fading.sigma_db=8.686"])
    assert s.fading.sigma == pytest.approx(2.0, rel=1e-4)


def test_sigma_and_sigma_db_together_are_rejected():
    text = MINIMAL_STAR + "fading: {sigma: 1.0, sigma_db: 8.686}\n"
    with pytest.raises(ValidationError, match="sigma"):
        scenario_of(text)


def test_packet_bytes_convert_to_backoff_units():
    s = scenario_of(MINIMAL_STAR + "timing: {packet_bytes: 50, ack_bytes: 22}\n")
    assert s.timing.l_pkt == pytest.approx(5.0)
    assert s.timing.l_ack == pytest.approx(2.2)


def test_bytes_and_units_together_are_rejected():
    text = MINIMAL_STAR + "timing: {packet_bytes: 50, l_pkt: 5.0}\n"
    with pytest.raises(ValidationError, match="l_pkt"):
        scenario_of(text)


def test_unknown_keys_are_rejected_everywhere():
    with pytest.raises(ValidationError, match="unknown top-level"):
        scenario_of(MINIMAL_STAR + "lambda: 3\n")
    with pytest.raises(ValidationError, match="unknown key"):
        scenario_of(MINIMAL_STAR + "mac: {backoffs: 9}\n")


def test_parse_error_carries_source_and_line():
    with pytest.raises(ValidationError, match=r"broken\.yaml:"):
        parse_config("topology: [unclosed", "broken.yaml")


def test_override_parses_yaml_scalars():
    config = parse_config(MINIMAL_STAR, "inline.yaml")
    apply_override(config, "sim.replications=5")
    apply_override(config, "scenario_id=night-run")
    assert config["sim"]["replications"] == 5
    assert config["scenario_id"] == "night-run"
    with pytest.raises(ValidationError, match="key=value"):
        apply_override(config, "no-equals-sign")


def test_line_topology_hops_and_spacing():
    topo = Topology(kind="line", n_nodes=4, spacing_m=2.0)
    assert list(topo.hops()) == [-1, 0, 1, 2]
    pos = topo.positions()
    for h in range(1, 4):
        assert math.dist(pos[h], pos[h - 1]) == pytest.approx(2.0)


def test_star_topology_is_a_sink_plus_a_ring():
    topo = Topology(kind="star", n_nodes=5, spacing_m=3.0)
    assert list(topo.hops()) == [-1, 0, 0, 0, 0]
    pos = topo.positions()
    assert tuple(pos[0]) == (0.0, 0.0)
    for p in pos[1:]:
        assert math.hypot(*p) == pytest.approx(3.0)


def test_tree_topology_parents_follow_breadth_first_order():
    topo = Topology(kind="tree", n_nodes=7, branching=2)
    assert list(topo.hops()) == [-1, 0, 0, 1, 1, 2, 2]


def test_cyclic_explicit_routing_is_rejected():
    text = """
topology:
  kind: explicit
  positions_m: [[0, 0], [1, 0], [2, 0]]
  next_hop: [1, 2, 0]
lam: [1.0, 1.0, 1.0]
"""
    with pytest.raises(ValidationError, match="sink"):
        scenario_of(text)


def test_generating_node_without_route_is_rejected():
    text = """
topology:
  kind: explicit
  positions_m: [[0, 0], [1, 0], [2, 0]]
  next_hop: [-1, 0, -1]
lam: [0.0, 1.0, 1.0]
"""
    with pytest.raises(ValidationError, match="no route"):
        scenario_of(text)


def _tables_equal(a, b):
    assert a.others == b.others
    np.testing.assert_allclose(a.p_det, b.p_det, rtol=0, atol=0)
    np.testing.assert_allclose(a.p_out, b.p_out, rtol=0, atol=0)
    assert a.p_fad == b.p_fad


def test_contention_tables_match_reference_construction():
    s = scenario_of(MINIMAL_STAR + "fading: {sigma: 1.5}\n")
    positions = s.topology.positions()
    links = s.links()
    reference = topo_helpers.build_tables(positions, links, s.channel, s.fading)
    built = build_contention_tables(s)
    assert len(built) == len(reference) == 2
    for mine, ref in zip(built, reference):
        _tables_equal(mine, ref)


def test_sim_network_matches_reference_construction():
    s = scenario_of(MINIMAL_STAR + "fading: {sigma: 0.5}\n")
    positions = s.topology.positions()
    links = s.links()
    ref = topo_helpers.build_sim_network(
        positions, links, list(s.lam), s.channel, s.fading
    )
    net = compile_sim_network(s)
    np.testing.assert_allclose(net.mean_gain_mw, ref.mean_gain_mw)
    np.testing.assert_array_equal(net.next_hop, ref.next_hop)
    np.testing.assert_allclose(net.lam, ref.lam)
    assert net.sigma == ref.sigma
    assert net.cca_threshold_mw == pytest.approx(ref.cca_threshold_mw)
    assert net.sinr_threshold == pytest.approx(ref.sinr_threshold)


def test_bundled_configs_all_validate():
    import pathlib

    root = pathlib.Path(__file__).resolve().parent.parent / "configs"
    names = sorted(p.name for p in root.glob("*.yaml"))
    assert names, "no bundled configs found"
    for name in names:
        load_scenario(root / name)
