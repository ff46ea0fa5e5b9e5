"""Per-link CSMA/CA Markov quantities and the coupled MAC-PHY fixed point.

Each transmitting link carries unknowns (tau, alpha, gamma): the per-slot CCA
probability, the busy-channel probability seen by the transmitter, and the
packet-loss probability at the receiver.  They are coupled across links
through a contention functional that enumerates which subsets of the other
nodes transmit concurrently, weighting per-subset channel probabilities that
are precomputed once per scenario.  A damped Jacobi iteration closes the
system.

All chain formulas are evaluated as direct finite sums over backoff stages
and retry attempts (windows capped at 2^mb), which is algebraically identical
to the usual two-branch closed forms but free of their removable
singularities at alpha = 1/2 and xi = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceError, ValidationError

# Contention subsets are enumerated exhaustively; 2^14 tables per link is the
# supported ceiling.
MAX_CONTENDERS = 14

# Busy-channel probability is a duration-weighted rate and can exceed 1 at
# high traffic; it is capped just below 1 to keep the chain formulas valid.
ALPHA_CAP = 1.0 - 1e-9


@dataclass(frozen=True)
class MacParams:
    """CSMA/CA constants: macMinBE, macMaxBE, macMaxCSMABackoffs, macMaxFrameRetries."""

    m0: int = 3
    mb: int = 5
    m: int = 4
    n: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.m0 <= self.mb <= 8:
            raise ValidationError(f"require 0 <= m0 <= mb <= 8, got m0={self.m0}, mb={self.mb}")
        if not 0 <= self.m <= 5:
            raise ValidationError(f"macMaxCSMABackoffs m={self.m} outside [0, 5]")
        if not 0 <= self.n <= 7:
            raise ValidationError(f"macMaxFrameRetries n={self.n} outside [0, 7]")

    @property
    def windows(self) -> tuple[int, ...]:
        """Backoff window W_j = 2^min(m0+j, mb) for each CCA round j."""
        return tuple(2 ** min(self.m0 + j, self.mb) for j in range(self.m + 1))


@dataclass(frozen=True)
class TimingParams:
    """Frame and MAC durations in backoff units (one unit = sb_seconds)."""

    sb_seconds: float = 320e-6
    l_pkt: float = 7.0
    l_ack: float = 1.1
    t_ack: float = 2.7
    t_m_ack: float = 2.1
    ifs: float = 2.0
    turnaround: float = 0.6
    t_sc: float = 0.4

    def __post_init__(self) -> None:
        for name in ("sb_seconds", "l_pkt", "l_ack", "t_ack", "t_m_ack", "ifs", "turnaround", "t_sc"):
            if getattr(self, name) < 0.0:
                raise ValidationError(f"timing field {name} must be >= 0")
        if self.sb_seconds == 0.0:
            raise ValidationError("sb_seconds must be positive")

    @property
    def ls(self) -> float:
        """Duration of a successful transaction: data, ACK wait, ACK, IFS."""
        return self.l_pkt + self.t_ack + self.l_ack + self.ifs

    @property
    def lc(self) -> float:
        """Duration of a failed transaction: data plus ACK timeout."""
        return self.l_pkt + self.t_m_ack


@dataclass(frozen=True)
class LinkState:
    """Solved per-link MAC unknowns."""

    tau: float
    alpha_pkt: float
    alpha_ack: float
    gamma: float
    b000: float
    q: float
    q_succ: float = 0.0
    q_cf: float = 0.0
    q_cr: float = 0.0

    @property
    def alpha(self) -> float:
        return min(self.alpha_pkt + self.alpha_ack, ALPHA_CAP)


@dataclass(frozen=True)
class SolverConfig:
    """Damped Jacobi iteration settings."""

    damping: float = 0.5
    tol: float = 1e-8
    max_iter: int = 10_000

    def __post_init__(self) -> None:
        if not 0.0 < self.damping <= 1.0:
            raise ValidationError(f"damping {self.damping} outside (0, 1]")
        if self.tol <= 0.0 or self.max_iter < 1:
            raise ValidationError("tol must be positive and max_iter >= 1")


def arrival_probability(lambda_pkt_per_s: float, sb_seconds: float) -> float:
    """Per-backoff-unit probability of at least one Poisson arrival."""
    if lambda_pkt_per_s < 0.0:
        raise ValidationError(f"arrival rate {lambda_pkt_per_s} must be >= 0")
    return 1.0 - math.exp(-lambda_pkt_per_s * sb_seconds)


def xi_value(alpha: float, gamma: float, mac: MacParams) -> float:
    """Retry-branch probability: packet lost after a completed transmission."""
    return gamma * (1.0 - alpha ** (mac.m + 1))


def cca_probability(
    alpha: float,
    gamma: float,
    q: float,
    mac: MacParams,
    timing: TimingParams,
    q_succ: float = 0.0,
    q_cf: float = 0.0,
    q_cr: float = 0.0,
) -> tuple[float, float]:
    """Per-slot CCA probability tau and idle-state probability b000.

    Renewal-reward over one packet cycle: backoff-and-sense slots per CCA
    round, transaction durations, and the idle wait for the next arrival
    (scaled by the queue-empty probabilities after each outcome).
    """
    if not 0.0 <= alpha < 1.0:
        raise ValidationError(f"alpha {alpha} outside [0, 1)")
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError(f"gamma {gamma} outside [0, 1]")
    if not 0.0 < q <= 1.0:
        raise ValidationError(f"arrival probability q {q} outside (0, 1]")

    xi = xi_value(alpha, gamma, mac)
    geo_alpha = sum(alpha**j for j in range(mac.m + 1))
    geo_xi = sum(xi**h for h in range(mac.n + 1))
    p_cf_attempt = alpha ** (mac.m + 1)

    backoff_slots = sum(alpha**j * (w + 1) / 2.0 for j, w in enumerate(mac.windows))
    service = (timing.ls * (1.0 - gamma) + timing.lc * gamma) * (1.0 - p_cf_attempt)
    idle = (
        (1.0 - q_cf) / q * p_cf_attempt * geo_xi
        + (1.0 - q_cr) / q * xi ** (mac.n + 1)
        + (1.0 - q_succ) / q * (1.0 - gamma) * (1.0 - p_cf_attempt) * geo_xi
    )
    inv_b000 = backoff_slots * geo_xi + service * geo_xi + idle
    b000 = 1.0 / inv_b000
    tau = geo_alpha * geo_xi * b000
    return tau, b000


# ---------------------------------------------------------------------------
# contention functional


def _bit_matrix(k: int) -> np.ndarray:
    """(2^k, k) bool matrix: row mask, column z -> link z in the subset."""
    masks = np.arange(2**k, dtype=np.uint32)
    return (masks[:, None] >> np.arange(k)[None, :]) & 1 == 1


def subset_weights(taus: np.ndarray, alphas: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Probability of each transmitter subset among the contending links.

    A link is in the subset when it senses (tau) and finds the channel idle
    (1 - alpha); otherwise it either did not sense or backed off again.
    """
    eff = taus * (1.0 - alphas)
    return np.prod(np.where(bits, eff, 1.0 - eff), axis=1)


def h_functional(
    taus: Sequence[float],
    alphas: Sequence[float],
    chi: Callable[[tuple[int, ...]], float],
) -> float:
    """Sum of chi over non-empty transmitter subsets, subset-probability weighted.

    chi receives the subset as a tuple of indices into taus.
    """
    k = len(taus)
    if len(alphas) != k:
        raise ValidationError("taus and alphas must have equal length")
    if k > MAX_CONTENDERS:
        raise ValidationError(
            f"{k} contending links exceeds the enumeration cap {MAX_CONTENDERS}; "
            "reduce the topology or split the scenario"
        )
    if k == 0:
        return 0.0
    bits = _bit_matrix(k)
    weights = subset_weights(np.asarray(taus, float), np.asarray(alphas, float), bits)
    members = [tuple(int(z) for z in np.nonzero(bits[mask])[0]) for mask in range(2**k)]
    return float(sum(weights[mask] * chi(members[mask]) for mask in range(1, 2**k)))


@dataclass
class LinkTables:
    """Per-subset channel probabilities for one link, precomputed per scenario.

    others: contending link indices in mask-bit order.
    p_det: detection probability of each subset's aggregate power at this
        link's transmitter (index = subset mask over `others`).
    p_out: SINR outage probability at this link's receiver under each subset.
    p_fad: no-interferer outage probability of the link itself.
    """

    others: tuple[int, ...]
    p_det: np.ndarray
    p_out: np.ndarray
    p_fad: float


@dataclass
class ContentionSystem:
    """Everything the fixed point needs: per-link arrivals, timing, tables."""

    qs: np.ndarray
    mac: MacParams
    timing: TimingParams
    tables: list[LinkTables]
    q_succ: np.ndarray | None = None
    q_cf: np.ndarray | None = None
    q_cr: np.ndarray | None = None
    bits: np.ndarray = field(init=False)
    _counts: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        n = len(self.tables)
        if len(self.qs) != n:
            raise ValidationError("qs length must match table count")
        k = n - 1
        if k > MAX_CONTENDERS:
            raise ValidationError(
                f"{k} contending links exceeds the enumeration cap {MAX_CONTENDERS}"
            )
        for t in self.tables:
            if len(t.others) != k or len(t.p_det) != 2**k or len(t.p_out) != 2**k:
                raise ValidationError("table sizes inconsistent with link count")
        if self.q_succ is None:
            self.q_succ = np.zeros(n)
        if self.q_cf is None:
            self.q_cf = np.zeros(n)
        if self.q_cr is None:
            self.q_cr = np.zeros(n)
        self.bits = _bit_matrix(k)
        counts = self.bits.sum(axis=1).astype(float)
        counts[0] = 1.0  # unused empty-set slot, avoids divide-by-zero
        self._counts = counts


def busy_channel(
    link: int,
    system: ContentionSystem,
    taus: np.ndarray,
    alphas: np.ndarray,
    gammas: np.ndarray,
) -> tuple[float, float]:
    """Busy-channel components (alpha_pkt, alpha_ack) for one link.

    alpha_pkt weighs subset detection by the data duration; alpha_ack weighs
    it by the ACK duration and the subsets' mean transmission success.
    """
    t = system.tables[link]
    idx = list(t.others)
    weights = subset_weights(taus[idx], alphas[idx], system.bits)
    a_pkt = system.timing.l_pkt * float(weights[1:] @ t.p_det[1:])
    gamma_bar = (system.bits @ gammas[idx]) / system._counts
    a_ack = system.timing.l_ack * float(weights[1:] @ ((1.0 - gamma_bar[1:]) * t.p_det[1:]))
    return a_pkt, a_ack


def packet_loss(
    link: int,
    system: ContentionSystem,
    taus: np.ndarray,
    alphas: np.ndarray,
) -> float:
    """Packet-loss probability gamma for one link (clamped to [0, 1]).

    Fading-only loss when nobody else transmits, outage under concurrent
    transmitters, and the hidden-terminal window where the transmitter failed
    to detect them.
    """
    t = system.tables[link]
    idx = list(t.others)
    weights = subset_weights(taus[idx], alphas[idx], system.bits)
    h_one = 1.0 - float(weights[0])
    h_out = float(weights[1:] @ t.p_out[1:])
    h_hidden = float(weights[1:] @ ((1.0 - t.p_det[1:]) * t.p_out[1:]))
    raw = (1.0 - h_one) * t.p_fad + h_out + (2.0 * system.timing.l_pkt - 1.0) * h_hidden
    return min(max(raw, 0.0), 1.0)


@dataclass
class SolveResult:
    """Fixed-point solution with diagnostics."""

    states: list[LinkState]
    iterations: int
    residual: float
    warnings: list[str]


def solve_fixed_point(
    system: ContentionSystem,
    config: SolverConfig = SolverConfig(),
    init: tuple[float, float] = (0.0, 0.0),
) -> SolveResult:
    """Damped Jacobi iteration on (alpha, gamma) across all links.

    tau and b000 follow directly from (alpha, gamma, q) each sweep.  Links
    with q = 0 never transmit and are held at tau = 0.
    """
    n = len(system.tables)
    active = np.asarray(system.qs) > 0.0
    alphas = np.full(n, float(init[0]))
    gammas = np.full(n, float(init[1]))
    taus = np.zeros(n)
    b000s = np.zeros(n)
    a_pkts = np.zeros(n)
    a_acks = np.zeros(n)
    warnings: list[str] = []
    clamp_count = 0
    d = config.damping

    residual = math.inf
    for iteration in range(1, config.max_iter + 1):
        for l in range(n):
            if active[l]:
                taus[l], b000s[l] = cca_probability(
                    alphas[l],
                    gammas[l],
                    system.qs[l],
                    system.mac,
                    system.timing,
                    q_succ=system.q_succ[l],
                    q_cf=system.q_cf[l],
                    q_cr=system.q_cr[l],
                )
            else:
                taus[l], b000s[l] = 0.0, 0.0

        new_alpha = np.empty(n)
        new_gamma = np.empty(n)
        for l in range(n):
            a_pkts[l], a_acks[l] = busy_channel(l, system, taus, alphas, gammas)
            raw_alpha = a_pkts[l] + a_acks[l]
            if raw_alpha > ALPHA_CAP:
                clamp_count += 1
                raw_alpha = ALPHA_CAP
            new_alpha[l] = raw_alpha
            new_gamma[l] = packet_loss(l, system, taus, alphas)

        residual = float(
            max(np.max(np.abs(new_alpha - alphas)), np.max(np.abs(new_gamma - gammas)))
        )
        if residual < config.tol:
            # undamped polish: return the update map's own values so that
            # decoupled coordinates land exactly on their closed forms
            alphas = new_alpha
            gammas = new_gamma
            for l in range(n):
                if active[l]:
                    taus[l], b000s[l] = cca_probability(
                        alphas[l],
                        gammas[l],
                        system.qs[l],
                        system.mac,
                        system.timing,
                        q_succ=system.q_succ[l],
                        q_cf=system.q_cf[l],
                        q_cr=system.q_cr[l],
                    )
            break
        alphas = (1.0 - d) * alphas + d * new_alpha
        gammas = (1.0 - d) * gammas + d * new_gamma
    else:
        raise ConvergenceError(
            f"fixed point did not converge after {config.max_iter} iterations "
            f"(last residual {residual:.3e})"
        )

    if clamp_count:
        warnings.append(f"alpha clamped to {ALPHA_CAP} in {clamp_count} update(s)")

    states = []
    for l in range(n):
        states.append(
            LinkState(
                tau=float(taus[l]),
                alpha_pkt=float(a_pkts[l]),
                alpha_ack=float(a_acks[l]),
                gamma=float(gammas[l]),
                b000=float(b000s[l]),
                q=float(system.qs[l]),
                q_succ=float(system.q_succ[l]),
                q_cf=float(system.q_cf[l]),
                q_cr=float(system.q_cr[l]),
            )
        )
    return SolveResult(states=states, iterations=iteration, residual=residual, warnings=warnings)
