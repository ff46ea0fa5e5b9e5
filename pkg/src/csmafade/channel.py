"""Physical-layer probability models: path loss, shadowing, multipath.

Received power on a link is modeled as c0 * P_tx / r^k scaled by a unit-mean
multipath power factor (Gamma with shape kappa) and a lognormal shadowing
factor exp(y), y ~ N(0, sigma^2).  Sums of such terms (aggregate power at a
sensing node, interference-plus-noise at a receiver) are approximated by a
single lognormal fitted to the first two exact moments; carrier-detection and
outage probabilities fall out of that fit, with a Gauss-Hermite quadrature
layered on top when the useful link also carries multipath fading.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import erfc, gammainc, roots_hermite

from .errors import NumericsError, ValidationError
from .units import db_to_linear, dbm_to_mw

SQRT2 = math.sqrt(2.0)
SQRTPI = math.sqrt(math.pi)

# Degenerate-spread cutoff: below this the fitted lognormal is a point mass.
SIGMA_FLOOR = 1e-12

# Gauss-Hermite node ladder for the outage quadrature: start cheap, double
# until two successive estimates agree to QUAD_TOL.  Steep integrands (large
# kappa against wide shadowing) only resolve at the high end of the ladder.
QUAD_LADDER = (32, 64, 128, 256, 512, 1024, 2048)
QUAD_NODES = QUAD_LADDER[0]
QUAD_TOL = 1e-6


@dataclass(frozen=True)
class ChannelParams:
    """Deterministic channel constants.

    c0_db: path-loss scale at 1 m, in dB (negative).
    k: path-loss exponent.
    n0_dbm: noise floor.
    a_dbm: carrier-sensing (CCA) threshold.
    b_db: SINR threshold for correct reception.
    """

    c0_db: float = -55.0
    k: float = 2.0
    n0_dbm: float = -91.0
    a_dbm: float = -76.0
    b_db: float = 6.0

    def __post_init__(self) -> None:
        if not -80.0 <= self.c0_db <= -30.0:
            raise ValidationError(f"c0_db={self.c0_db} outside supported [-80, -30] dB")
        if not -60.0 <= self.c0_db <= -40.0:
            warnings.warn(
                f"c0_db={self.c0_db} outside the typical -60..-40 dB range",
                stacklevel=2,
            )
        if not 1.5 <= self.k <= 6.0:
            raise ValidationError(f"path-loss exponent k={self.k} outside [1.5, 6]")

    @property
    def noise_mw(self) -> float:
        return dbm_to_mw(self.n0_dbm)

    @property
    def cca_threshold_mw(self) -> float:
        return dbm_to_mw(self.a_dbm)

    @property
    def sinr_threshold(self) -> float:
        return db_to_linear(self.b_db)


@dataclass(frozen=True)
class FadingParams:
    """Stochastic channel state.

    sigma: shadowing spread of the natural-log power exponent (nepers).
    kappa: multipath shape parameter; None disables the multipath factor.
    rho: optional node-by-node shadowing correlation matrix (default independent).
    """

    sigma: float = 0.0
    kappa: float | None = None
    rho: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.sigma < 0.0:
            raise ValidationError(f"sigma={self.sigma} must be >= 0")
        if self.kappa is not None and self.kappa < 0.5:
            raise ValidationError(f"kappa={self.kappa} must be >= 0.5 (or None)")
        if self.rho is not None:
            rho = np.asarray(self.rho, dtype=float)
            if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
                raise ValidationError("rho must be a square matrix")
            if not np.allclose(rho, rho.T, atol=1e-12):
                raise ValidationError("rho must be symmetric")
            if not np.allclose(np.diag(rho), 1.0, atol=1e-12):
                raise ValidationError("rho must have unit diagonal")
            if np.any(np.abs(rho) > 1.0 + 1e-12):
                raise ValidationError("rho entries must lie in [-1, 1]")
            object.__setattr__(self, "rho", rho)

    @property
    def multipath(self) -> bool:
        return self.kappa is not None


@dataclass(frozen=True)
class PowerTerm:
    """One additive component of a received-power sum.

    weight: deterministic linear power coefficient (mW, or a ratio).
    sigma: spread of the term's lognormal exponent (nepers).
    has_multipath: whether the term carries the unit-mean Gamma power factor.
    """

    weight: float
    sigma: float = 0.0
    has_multipath: bool = False

    def __post_init__(self) -> None:
        if self.weight < 0.0:
            raise ValidationError(f"term weight {self.weight} must be >= 0")
        if self.sigma < 0.0:
            raise ValidationError(f"term sigma {self.sigma} must be >= 0")


@dataclass(frozen=True)
class LognormalApprox:
    """Lognormal exp(Z), Z ~ N(eta, sigma^2), fitted to a power sum."""

    eta: float
    sigma: float

    def mean(self) -> float:
        return math.exp(self.eta + 0.5 * self.sigma**2)

    def tail_probability(self, threshold: float) -> float:
        """P[exp(Z) > threshold]; degenerates to a step when sigma == 0."""
        if threshold <= 0.0:
            return 1.0
        ln_t = math.log(threshold)
        if self.sigma <= SIGMA_FLOOR:
            return 1.0 if self.eta > ln_t else 0.0
        return q_function((ln_t - self.eta) / self.sigma)


def q_function(z: float) -> float:
    """Standard normal tail probability Q(z)."""
    return 0.5 * erfc(z / SQRT2)


def mean_rx_power(ptx_dbm: float, distance_m: float, chan: ChannelParams) -> float:
    """Mean received power c0 * P_tx / r^k in mW."""
    if distance_m <= 0.0:
        raise ValidationError(f"distance {distance_m} must be positive")
    return dbm_to_mw(ptx_dbm + chan.c0_db - 10.0 * chan.k * math.log10(distance_m))


def _second_moment_factor(term: PowerTerm, fading: FadingParams | None) -> float:
    """E[f^2] of the term's multipath factor (1 when disabled)."""
    if fading is not None and fading.multipath and term.has_multipath:
        kap = fading.kappa
        return (kap + 1.0) / kap
    return 1.0


def mma_fit(
    terms: Sequence[PowerTerm],
    corr: np.ndarray | None = None,
    fading: FadingParams | None = None,
) -> LognormalApprox:
    """Fit a lognormal to sum_n w_n * f_n * exp(y_n) by matching two moments.

    corr is the correlation matrix of the exponents y_n (independent when
    omitted).  Multipath factors are independent across terms, unit mean,
    with second moment (kappa+1)/kappa.
    """
    if not terms:
        raise ValidationError("mma_fit requires at least one term")
    n = len(terms)
    w = np.array([t.weight for t in terms], dtype=float)
    s = np.array([t.sigma for t in terms], dtype=float)
    if np.all(w == 0.0):
        raise ValidationError("mma_fit requires at least one positive weight")
    if corr is None:
        rho = np.eye(n)
    else:
        rho = np.asarray(corr, dtype=float)
        if rho.shape != (n, n):
            raise ValidationError(f"corr shape {rho.shape} != ({n}, {n})")

    m1 = float(np.sum(w * np.exp(0.5 * s**2)))

    # E[A_m A_n] exp((s_m^2 + s_n^2)/2 + rho_mn s_m s_n); the diagonal carries
    # the multipath second moment, cross terms the product of unit means.
    f2 = np.array([_second_moment_factor(t, fading) for t in terms])
    cross = np.outer(w, w) * np.exp(
        0.5 * (s**2)[:, None] + 0.5 * (s**2)[None, :] + rho * np.outer(s, s)
    )
    diag_scale = np.ones((n, n))
    np.fill_diagonal(diag_scale, f2)
    m2 = float(np.sum(cross * diag_scale))

    if not (math.isfinite(m1) and math.isfinite(m2)) or m1 <= 0.0 or m2 <= 0.0:
        raise NumericsError(f"moment matching overflowed: M1={m1!r}, M2={m2!r}")
    var = math.log(m2) - 2.0 * math.log(m1)
    if var < -1e-9:
        raise NumericsError(
            f"moment matching produced negative log-variance {var:.3e}; "
            "check the supplied correlation matrix"
        )
    var = max(var, 0.0)
    eta = 2.0 * math.log(m1) - 0.5 * math.log(m2)
    return LognormalApprox(eta=eta, sigma=math.sqrt(var))


def detection_probability(
    terms: Sequence[PowerTerm],
    threshold_mw: float,
    fading: FadingParams | None = None,
    corr: np.ndarray | None = None,
) -> float:
    """P[aggregate received power of the given terms exceeds threshold_mw]."""
    if threshold_mw <= 0.0:
        raise ValidationError(f"threshold {threshold_mw} must be positive")
    if not terms:
        return 0.0
    approx = mma_fit(terms, corr=corr, fading=fading)
    return approx.tail_probability(threshold_mw)


@functools.lru_cache(maxsize=None)
def _gh_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    return roots_hermite(n)


def lognormal_expectation(
    fn: Callable[[np.ndarray], np.ndarray],
    eta: float,
    sigma: float,
    nodes: int = QUAD_NODES,
) -> float:
    """E[fn(W)] for W = exp(Z), Z ~ N(eta, sigma^2), by Gauss-Hermite."""
    if sigma <= SIGMA_FLOOR:
        return float(fn(np.array([math.exp(eta)]))[0])
    t, wgt = _gh_nodes(nodes)
    x = np.exp(eta + SQRT2 * sigma * t)
    return float(wgt @ np.asarray(fn(x), dtype=float)) / SQRTPI


def _gamma_cdf_unit_mean(kappa: float, x: np.ndarray) -> np.ndarray:
    """CDF of the unit-mean Gamma multipath factor evaluated at x / kappa scale.

    For integer kappa this is the finite series 1 - exp(-k x) sum (k x)^i / i!,
    accumulated as Poisson terms for stability; otherwise the regularized
    lower incomplete gamma function.
    """
    arg = kappa * np.asarray(x, dtype=float)
    if float(kappa).is_integer():
        k_int = int(kappa)
        term = np.exp(-arg)
        total = term.copy()
        for i in range(1, k_int):
            term = term * arg / i
            total += term
        return 1.0 - total
    return gammainc(kappa, arg)


def outage_probability(
    useful: PowerTerm,
    interferers: Sequence[PowerTerm],
    noise: PowerTerm,
    sinr_threshold: float,
    fading: FadingParams | None = None,
    corr_y: np.ndarray | None = None,
) -> float:
    """P[SINR < threshold] for the useful term against interferers plus noise.

    The SINR denominator is normalized by the useful link's mean power and
    shadowing, which adds a common -y_u component to every normalized term;
    the induced covariance is built here.  corr_y, when given, is the
    correlation matrix of the base exponents ordered (interferers..., useful).
    """
    if useful.weight <= 0.0:
        raise ValidationError("useful term must have positive weight")
    if noise.weight <= 0.0:
        raise ValidationError("noise term must have positive weight")
    if noise.sigma != 0.0 or noise.has_multipath:
        raise ValidationError("noise term must be deterministic (sigma 0, no multipath)")
    if sinr_threshold <= 0.0:
        raise ValidationError(f"SINR threshold {sinr_threshold} must be positive")

    # Base exponents ordered (interferers..., noise); the noise base is
    # deterministic (sigma 0).  rho_iu holds each base's correlation with y_u.
    n_i = len(interferers)
    base_sigma = np.array([t.sigma for t in interferers] + [0.0], dtype=float)
    s_u = useful.sigma
    base_corr = np.eye(n_i + 1)
    rho_iu = np.zeros(n_i + 1)
    if corr_y is not None:
        given = np.asarray(corr_y, dtype=float)
        if given.shape != (n_i + 1, n_i + 1):
            raise ValidationError(
                f"corr_y shape {given.shape} != ({n_i + 1}, {n_i + 1})"
            )
        if n_i:
            base_corr[:n_i, :n_i] = given[:n_i, :n_i]
            rho_iu[:n_i] = given[:n_i, n_i]

    # Normalized denominator terms: interferer n becomes (w_n / w_u) with
    # exponent y_n - y_u; noise becomes (N0 / w_u) with exponent -y_u.
    sig2 = base_sigma**2 + s_u**2 - 2.0 * rho_iu * base_sigma * s_u
    sig2 = np.maximum(sig2, 0.0)
    tilde_sigma = np.sqrt(sig2)

    denom_terms = [
        PowerTerm(
            weight=t.weight / useful.weight,
            sigma=float(tilde_sigma[j]),
            has_multipath=t.has_multipath,
        )
        for j, t in enumerate(interferers)
    ]
    denom_terms.append(PowerTerm(weight=noise.weight / useful.weight, sigma=float(tilde_sigma[-1])))

    m = n_i + 1
    cov = np.empty((m, m))
    for a in range(m):
        for b in range(m):
            cov[a, b] = (
                base_corr[a, b] * base_sigma[a] * base_sigma[b]
                - rho_iu[a] * base_sigma[a] * s_u
                - rho_iu[b] * base_sigma[b] * s_u
                + s_u**2
            )
    denom_corr = np.eye(m)
    for a in range(m):
        for b in range(m):
            if a != b and tilde_sigma[a] > 0.0 and tilde_sigma[b] > 0.0:
                denom_corr[a, b] = cov[a, b] / (tilde_sigma[a] * tilde_sigma[b])

    approx = mma_fit(denom_terms, corr=denom_corr, fading=fading)

    multipath_useful = fading is not None and fading.multipath and useful.has_multipath
    if not multipath_useful:
        # SINR = exp(-ln S); outage when -ln S < ln b.
        eta_y = -approx.eta
        if approx.sigma <= SIGMA_FLOOR:
            return 1.0 if eta_y < math.log(sinr_threshold) else 0.0
        z = (math.log(sinr_threshold) - eta_y) / approx.sigma
        return 1.0 - q_function(z)

    kappa = fading.kappa

    def integrand(wv: np.ndarray) -> np.ndarray:
        return _gamma_cdf_unit_mean(kappa, sinr_threshold * wv)

    prev = lognormal_expectation(integrand, approx.eta, approx.sigma, nodes=QUAD_LADDER[0])
    diff = math.inf
    for nodes in QUAD_LADDER[1:]:
        val = lognormal_expectation(integrand, approx.eta, approx.sigma, nodes=nodes)
        diff = abs(val - prev)
        if diff <= QUAD_TOL:
            return min(max(val, 0.0), 1.0)
        prev = val
    raise NumericsError(
        f"outage quadrature did not converge at {QUAD_LADDER[-1]} nodes "
        f"(last successive change {diff:.3e} > {QUAD_TOL}; "
        f"eta={approx.eta:.4f}, sigma={approx.sigma:.4f}, kappa={kappa}, "
        f"threshold={sinr_threshold:.4f})"
    )
