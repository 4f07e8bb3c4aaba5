"""Equilibrium thermodynamics of zero-range processes.

Everything here is derived from the single-site weights ``phi**k / g!(k)``:
the partition function ``Z``, the mean density ``R(phi) = phi Z'(phi)/Z(phi)``,
its inverse ``Phi`` (the mean jump rate), the critical quantities and the
extended homologues used to describe condensed states.

Series are summed in log space. Near the critical fugacity the terms decay
only algebraically, so at ``phi == phi_c`` the tail beyond the rate table is
estimated from a power-law fit of the last decade of terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import zeta

__all__ = [
    "SeriesDivergence",
    "CapacityError",
    "UnstableExtrapolation",
    "JumpRateSpec",
    "JumpRate",
    "ThermoProfile",
    "CylinderObservable",
    "partition_Z",
    "critical_fugacity",
    "mean_density",
    "mean_jump_rate",
    "extended_homologue",
    "rate_function",
    "entropy_density",
]

SERIES_EPS = 1e-14
MIN_TERMS = 64
DIVERGENCE_RUN = 32
BOUNDARY_REL = 1e-12
OVERSHOOT_REL = 1e-9
INVERSION_TOL = 1e-10


class SeriesDivergence(ArithmeticError):
    """A power series was detected to be non-summable."""


class CapacityError(ValueError):
    """An occupancy exceeded the tabulated range of the jump rate."""


class UnstableExtrapolation(ArithmeticError):
    """Richardson extrapolants of the critical fugacity disagree."""


@dataclass(frozen=True, eq=False)
class JumpRateSpec:
    """Local jump rate ``g`` tabulated on ``0..k_max``.

    Use the constructors :meth:`evans`, :meth:`from_table` or
    :meth:`from_function` rather than building the table by hand.
    """

    table: np.ndarray
    family: str = "custom"
    b: Optional[float] = None
    phi_c_hint: Optional[float] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("rate table needs at least g(0) and g(1)")
        if t[0] != 0.0:
            raise ValueError("g(0) must be 0")
        if np.any(t[1:] <= 0) or not np.all(np.isfinite(t)):
            raise ValueError("g(k) must be finite and positive for k >= 1")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @classmethod
    def evans(cls, b: float, k_max: int = 100_000) -> "JumpRateSpec":
        """``g(k) = 1 + b/k`` for ``k >= 1``; ``phi_c = 1`` for every ``b >= 0``."""
        if b < 0:
            raise ValueError("Evans parameter b must be >= 0")
        k = np.arange(k_max + 1, dtype=np.float64)
        t = np.zeros(k_max + 1)
        t[1:] = 1.0 + b / k[1:]
        return cls(t, family="evans", b=float(b), phi_c_hint=1.0,
                   params={"b": float(b), "k_max": int(k_max)})

    @classmethod
    def from_table(cls, values: Sequence[float], k_max: int = 100_000) -> "JumpRateSpec":
        """Rates ``g(1), ..., g(m)`` continued by the last value up to ``k_max``."""
        vals = np.asarray(values, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("custom rate table must be a non-empty list")
        if k_max < vals.size:
            raise ValueError("k_max shorter than the custom table")
        t = np.empty(k_max + 1)
        t[0] = 0.0
        t[1:vals.size + 1] = vals
        t[vals.size + 1:] = vals[-1]
        return cls(t, family="table", phi_c_hint=float(vals[-1]),
                   params={"values": vals.tolist(), "k_max": int(k_max)})

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], k_max: int = 100_000,
                      phi_c: Optional[float] = None, name: str = "custom") -> "JumpRateSpec":
        k = np.arange(k_max + 1)
        t = np.asarray(fn(k), dtype=np.float64).copy()
        t[0] = 0.0
        return cls(t, family=name, phi_c_hint=phi_c, params={"k_max": int(k_max)})

    @property
    def k_max(self) -> int:
        return self.table.size - 1

    @cached_property
    def log_gfact(self) -> np.ndarray:
        out = np.zeros_like(self.table)
        np.cumsum(np.log(self.table[1:]), out=out[1:])
        out.setflags(write=False)
        return out

    @cached_property
    def grad_sup(self) -> float:
        return float(np.max(np.abs(np.diff(self.table))))

    def rate(self, k):
        k = np.asarray(k)
        if np.any(k < 0) or np.any(k > self.k_max):
            raise CapacityError(f"occupancy outside the rate table 0..{self.k_max}")
        return self.table[k]

    __call__ = rate

    def describe(self) -> dict:
        return {"family": self.family, **self.params}


def critical_fugacity(spec: JumpRateSpec, rtol: float = 1e-3) -> float:
    """Radius of convergence of ``Z``: ``lim g!(k)**(1/k)``.

    Analytic for the Evans family. Otherwise the k-th roots at ``k_max``,
    ``k_max/2`` and ``k_max/4`` are Richardson-extrapolated assuming an
    ``O(1/k)`` error, and the two extrapolants must agree to ``rtol``.
    """
    if spec.family == "evans":
        return 1.0
    if spec.phi_c_hint is not None and math.isinf(spec.phi_c_hint):
        return math.inf
    K = spec.k_max
    if K < 1000:
        raise ValueError("critical_fugacity needs a rate table with k_max >= 1000")
    lg = spec.log_gfact
    r = [lg[K // m] / (K // m) for m in (1, 2, 4)]
    e1 = 2.0 * r[0] - r[1]
    e2 = 2.0 * r[1] - r[2]
    if abs(e1 - e2) > rtol * max(1.0, abs(e1)):
        raise UnstableExtrapolation(f"extrapolants {math.exp(e1)} and {math.exp(e2)} disagree")
    return math.exp(e1)


@dataclass
class _Moments:
    log_s0: float
    log_s1: float  # -inf when the first moment is zero


def _tail_fit(spec: JumpRateSpec, phi_c: float) -> tuple[float, float, float]:
    """Fit ``log t_k = m + log C - p log k`` over the last decade of the table at ``phi_c``."""
    K = spec.k_max
    k = np.arange(K // 10, K + 1, dtype=np.float64)
    log_t = k * math.log(phi_c) - spec.log_gfact[K // 10:]
    m = float(log_t.max())
    slope, icept = np.polyfit(np.log(k), log_t - m, 1)
    return m, math.exp(icept), -slope


def _boundary_moments(spec: JumpRateSpec, phi: float) -> _Moments:
    """Moments at the critical fugacity with a power-law tail correction."""
    K = spec.k_max
    k = np.arange(K + 1, dtype=np.float64)
    log_t = k * math.log(phi) - spec.log_gfact
    m0, C, p = _tail_fit(spec, phi)
    m = max(float(log_t.max()), m0)
    C *= math.exp(m0 - m)
    t = np.exp(log_t - m)
    if p <= 1.0 + 0.02:
        raise SeriesDivergence(f"Z diverges at phi_c (tail exponent {p:.3f})")
    s0 = math.fsum(t) + C * float(zeta(p, K + 1))
    log_s0 = m + math.log(s0)
    if p - 1.0 <= 1.0 + 0.02:
        return _Moments(log_s0, math.inf)
    s1 = math.fsum(k * t) + C * float(zeta(p - 1.0, K + 1))
    return _Moments(log_s0, m + math.log(s1))


def _moments_vec(spec: JumpRateSpec, phis: np.ndarray, phi_c: float) -> tuple[np.ndarray, np.ndarray]:
    """Log of ``sum phi^k/g!(k)`` and ``sum k phi^k/g!(k)`` for many ``phi < phi_c``.

    Terms are accumulated chunk by chunk with a running log-sum-exp; a row
    stops once its latest term is below ``SERIES_EPS`` of the partial sum
    (and at least ``MIN_TERMS`` were summed), after which a geometric tail
    bound is added.
    """
    phis = np.asarray(phis, dtype=np.float64)
    n = phis.size
    log_s0 = np.zeros(n)
    log_s1 = np.full(n, -np.inf)
    pos = phis > 0
    if not pos.any():
        return log_s0, log_s1
    lgf = spec.log_gfact
    K = spec.k_max
    idx_all = np.flatnonzero(pos)
    logphi_all = np.log(phis)
    q_floor = phis / phi_c if math.isfinite(phi_c) else np.zeros(n)
    row_batch = 512
    for b0 in range(0, idx_all.size, row_batch):
        idx = idx_all[b0:b0 + row_batch]
        lp = logphi_all[idx]
        s0 = np.full(idx.size, -np.inf)
        s1 = np.full(idx.size, -np.inf)
        last2 = np.full((idx.size, 2), -np.inf)
        done = np.zeros(idx.size, dtype=bool)
        kstop = np.full(idx.size, K)
        k0, chunk = 0, 256
        while not done.all() and k0 <= K:
            k1 = min(K + 1, k0 + chunk)
            act = np.flatnonzero(~done)
            kk = np.arange(k0, k1, dtype=np.float64)
            L = kk[None, :] * lp[act, None] - lgf[None, k0:k1]
            s0[act] = np.logaddexp(s0[act], _lse(L))
            with np.errstate(divide="ignore"):
                L1 = L + np.log(kk)[None, :]
            s1[act] = np.logaddexp(s1[act], _lse(L1))
            if k1 - k0 >= 2:
                last2[act] = L[:, -2:]
            else:
                last2[act, 0] = last2[act, 1]
                last2[act, 1] = L[:, -1]
            conv = (last2[act, 1] - s0[act] < math.log(SERIES_EPS)) & (k1 - 1 >= MIN_TERMS) \
                & (last2[act, 1] < last2[act, 0])
            done[act[conv]] = True
            kstop[act[conv]] = k1 - 1
            k0 = k1
            chunk = min(chunk * 2, 8192)
        # geometric tail bound from the ratio of the last two terms
        kl = kstop.astype(np.float64)
        ratio = np.exp(last2[:, 1] - last2[:, 0])
        q = np.maximum(ratio, q_floor[idx])
        ok = done & (q < 1.0)
        qs = np.where(ok, q, 0.5)
        tail0 = np.where(ok, last2[:, 1] + np.log(qs / (1.0 - qs)), np.inf)
        q1 = qs * (kl + 1.0) / kl
        ok1 = ok & (q1 < 1.0)
        q1 = np.where(ok1, q1, 0.5)
        tail1 = np.where(ok1, last2[:, 1] + np.log(kl) + np.log(q1 / (1.0 - q1)), np.inf)
        rest = np.flatnonzero(~ok1)
        if rest.size:
            tail0[rest], tail1[rest] = _powerlaw_tail(spec, phi_c, lp[rest], phis[idx][rest])
        log_s0[idx] = np.logaddexp(s0, tail0)
        log_s1[idx] = np.logaddexp(s1, tail1)
    return log_s0, log_s1


def _powerlaw_tail(spec: JumpRateSpec, phi_c: float, logphi: np.ndarray, phis: np.ndarray):
    """Tails beyond the table for fugacities just below ``phi_c``.

    Terms are bounded by the critical power law times ``(phi/phi_c)^k``.
    """
    if not math.isfinite(phi_c):
        raise SeriesDivergence(f"partition series at phi={phis[0]} is not summable within the table")
    K = spec.k_max
    m0, C, p = _tail_fit(spec, phi_c)
    if p <= 1.0 + 0.02:
        raise SeriesDivergence(f"partition series at phi={phis[0]} is not summable within the table")
    logr = logphi - math.log(phi_c)
    base = m0 + math.log(C) + (K + 1) * logr
    tail0 = base + math.log(float(zeta(p, K + 1)))
    if p > 2.0 + 0.02:
        tail1 = base + math.log(float(zeta(p - 1.0, K + 1)))
    else:
        tail1 = base + (1.0 - p) * math.log(K + 1) - np.log(-np.expm1(logr))
    return tail0, tail1


def _lse(L: np.ndarray) -> np.ndarray:
    m = np.max(L, axis=1)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return safe + np.log(np.sum(np.exp(L - safe[:, None]), axis=1))


class ThermoProfile:
    """Cached thermodynamics of one jump rate.

    Immutable after construction; ``phi_c`` and ``rho_c`` are computed on
    first access.
    """

    def __init__(self, spec: JumpRateSpec):
        self.spec = spec

    @cached_property
    def phi_c(self) -> float:
        return critical_fugacity(self.spec)

    @cached_property
    def rho_c(self) -> float:
        if not math.isfinite(self.phi_c):
            return math.inf
        try:
            m = _boundary_moments(self.spec, self.phi_c)
        except SeriesDivergence:
            return math.inf
        if not math.isfinite(m.log_s1):
            return math.inf
        return math.exp(m.log_s1 - m.log_s0)

    @property
    def grad_sup(self) -> float:
        return self.spec.grad_sup

    def _classify(self, phi: np.ndarray) -> np.ndarray:
        """0 = interior, 1 = boundary (phi == phi_c), raises beyond."""
        if np.any(phi < 0):
            raise ValueError("fugacity must be >= 0")
        pc = self.phi_c
        if not math.isfinite(pc):
            return np.zeros(phi.shape, dtype=np.int8)
        if np.any(phi > pc * (1 + OVERSHOOT_REL)):
            raise SeriesDivergence(f"fugacity above phi_c={pc}")
        return (phi >= pc * (1 - BOUNDARY_REL)).astype(np.int8)

    def log_moments(self, phi) -> tuple[np.ndarray, np.ndarray]:
        phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
        cls = self._classify(phi)
        s0 = np.empty(phi.shape)
        s1 = np.empty(phi.shape)
        inner = cls == 0
        if inner.any():
            s0[inner], s1[inner] = _moments_vec(self.spec, phi[inner], self.phi_c)
        if (~inner).any():
            m = _boundary_moments(self.spec, self.phi_c)
            s0[~inner] = m.log_s0
            s1[~inner] = m.log_s1
        return s0, s1

    def Z(self, phi):
        s0, _ = self.log_moments(phi)
        return _unwrap(np.exp(s0), phi)

    def Zprime(self, phi):
        phi_a = np.atleast_1d(np.asarray(phi, dtype=np.float64))
        s0, s1 = self.log_moments(phi_a)
        with np.errstate(divide="ignore"):
            out = np.where(phi_a > 0, np.exp(s1 - np.log(np.where(phi_a > 0, phi_a, 1.0))), 1.0 / self.spec.table[1])
        return _unwrap(out, phi)

    def R(self, phi):
        phi_a = np.atleast_1d(np.asarray(phi, dtype=np.float64))
        s0, s1 = self.log_moments(phi_a)
        if np.any(np.isinf(s1) & (s1 > 0)):
            raise SeriesDivergence("first moment is infinite at the critical fugacity")
        return _unwrap(np.exp(s1 - s0), phi)

    def Phi(self, rho):
        """Inverse of ``R`` by bisection; ``phi_c`` for ``rho >= rho_c`` (this is Phi-bar)."""
        rho_a = np.atleast_1d(np.asarray(rho, dtype=np.float64))
        if np.any(rho_a < 0) or np.any(~np.isfinite(rho_a)):
            raise ValueError("density must be finite and >= 0")
        out = np.zeros(rho_a.shape)
        rc, pc = self.rho_c, self.phi_c
        sup = rho_a >= rc
        out[sup] = pc
        todo = np.flatnonzero((rho_a > 0) & ~sup)
        if todo.size:
            out[todo] = self._invert(rho_a[todo])
        return _unwrap(out, rho)

    Phibar = Phi

    def _invert(self, rho: np.ndarray) -> np.ndarray:
        pc = self.phi_c
        lo = np.zeros(rho.shape)
        if math.isfinite(pc):
            hi = np.full(rho.shape, pc)
        else:
            hi = np.ones(rho.shape)
            while True:
                grow = self.R(hi) < rho
                if not np.any(grow):
                    break
                hi[grow] *= 2.0
        mid = 0.5 * (lo + hi)
        active = np.ones(rho.shape, dtype=bool)
        for _ in range(200):
            a = np.flatnonzero(active)
            if a.size == 0:
                break
            mid[a] = 0.5 * (lo[a] + hi[a])
            r = np.atleast_1d(self.R(mid[a]))
            below = r < rho[a]
            lo[a[below]] = mid[a[below]]
            hi[a[~below]] = mid[a[~below]]
            fin = (np.abs(r - rho[a]) < INVERSION_TOL * rho[a]) | (hi[a] - lo[a] <= 4 * np.finfo(float).eps * hi[a])
            active[a[fin]] = False
        return mid

    def pmf(self, phi: float, k_max: Optional[int] = None) -> np.ndarray:
        """Single-site law ``phi^k / (g!(k) Z(phi))`` on ``0..k_max``."""
        K = self.spec.k_max if k_max is None else min(k_max, self.spec.k_max)
        if phi == 0:
            out = np.zeros(K + 1)
            out[0] = 1.0
            return out
        s0, _ = self.log_moments(phi)
        k = np.arange(K + 1)
        return np.exp(k * math.log(phi) - self.spec.log_gfact[:K + 1] - s0[0])

    def expectation(self, psi: Callable[[np.ndarray], np.ndarray], phi: float) -> float:
        """``E[psi(eta)]`` under the single-site law of fugacity ``phi``."""
        w = self.pmf(phi)
        k = np.arange(w.size)
        keep = w > 1e-300
        vals = np.asarray(psi(k[keep]), dtype=np.float64)
        return float(np.dot(w[keep], vals))


def _unwrap(arr, like):
    if np.ndim(like) == 0:
        return float(np.asarray(arr).reshape(-1)[0])
    return arr


def partition_Z(spec: JumpRateSpec, phi: float) -> float:
    return ThermoProfile(spec).Z(phi)


def mean_density(spec: JumpRateSpec, phi: float) -> float:
    return ThermoProfile(spec).R(phi)


def mean_jump_rate(spec: JumpRateSpec, rho: float) -> float:
    return ThermoProfile(spec).Phi(rho)


# -- cylinder observables ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class CylinderObservable:
    """A cylinder map ``Psi`` evaluated on windows of occupancies.

    ``offsets`` is the support ``J`` as integer offsets (shape ``(|J|, d)``);
    ``evaluate`` maps an array of shape ``(..., |J|)`` to values. For maps
    depending on ``eta(0)`` only, ``site_fn`` is the scalar function and the
    homologue is computed exactly from the single-site law.
    """

    name: str
    offsets: np.ndarray
    evaluate: Callable[[np.ndarray], np.ndarray]
    slope_at_infinity: float = 0.0
    site_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    homologue_fn: Optional[Callable[[float], float]] = None
    kind: str = "generic"
    mc_samples: int = 1_000_000
    mc_seed: int = 12345

    @property
    def support_radius(self) -> int:
        return int(np.max(np.abs(self.offsets))) if len(self.offsets) else 0

    @property
    def sublinear(self) -> bool:
        return self.slope_at_infinity == 0.0

    @classmethod
    def occupation(cls, d: int = 1) -> "CylinderObservable":
        """``Psi = eta(0)``."""
        return cls("eta0", np.zeros((1, d), dtype=int), lambda w: w[..., 0].astype(float),
                   slope_at_infinity=1.0, site_fn=lambda k: np.asarray(k, dtype=float),
                   kind="identity")

    @classmethod
    def jump_rate(cls, spec: JumpRateSpec, d: int = 1) -> "CylinderObservable":
        """``Psi = g(eta(0))``; its homologue is the mean jump rate."""
        slope = 0.0
        tail = spec.table[-100:]
        if spec.family == "evans" or np.ptp(tail) < 1e-3 * max(1.0, abs(tail[-1])):
            slope = 0.0
        return cls("g_eta0", np.zeros((1, d), dtype=int), lambda w: spec.table[w[..., 0]],
                   slope_at_infinity=slope, site_fn=lambda k: spec.table[np.asarray(k)],
                   kind="jump_rate")

    @classmethod
    def indicator(cls, threshold: int, d: int = 1) -> "CylinderObservable":
        """``Psi = 1{eta(0) >= threshold}``."""
        return cls(f"ind_ge_{threshold}", np.zeros((1, d), dtype=int),
                   lambda w: (w[..., 0] >= threshold).astype(float),
                   site_fn=lambda k: (np.asarray(k) >= threshold).astype(float),
                   kind="indicator")

    @classmethod
    def site(cls, fn: Callable[[np.ndarray], np.ndarray], slope_at_infinity: float = 0.0,
             name: str = "site", d: int = 1) -> "CylinderObservable":
        return cls(name, np.zeros((1, d), dtype=int), lambda w: np.asarray(fn(w[..., 0]), dtype=float),
                   slope_at_infinity=slope_at_infinity, site_fn=fn, kind="site")

    def homologue(self, profile: ThermoProfile, rho: float) -> float:
        """``E[Psi]`` under the product law of density ``rho <= rho_c``."""
        if rho == 0:
            return float(self.evaluate(np.zeros((1, len(self.offsets)), dtype=np.int64))[0])
        if self.kind == "identity":
            return float(rho)
        if self.kind == "jump_rate":
            return profile.Phi(rho)
        if self.homologue_fn is not None:
            return float(self.homologue_fn(rho))
        phi = profile.Phi(rho)
        if self.site_fn is not None:
            return profile.expectation(self.site_fn, phi)
        return self._mc_homologue(profile, phi)

    def _mc_homologue(self, profile: ThermoProfile, phi: float) -> float:
        rng = np.random.Generator(np.random.Philox(self.mc_seed))
        cdf = np.cumsum(profile.pmf(phi))
        draws = np.searchsorted(cdf, rng.random((self.mc_samples, len(self.offsets))) * cdf[-1], side="right")
        return float(np.mean(self.evaluate(draws)))


def extended_homologue(obs: CylinderObservable, profile: ThermoProfile, rho: float) -> float:
    """``Psi~(rho ^ rho_c) + slope * (rho - rho_c)^+``."""
    if rho < 0:
        raise ValueError("density must be >= 0")
    if obs.kind == "identity":
        return float(rho)
    rc = profile.rho_c
    if obs.kind == "jump_rate":
        return profile.Phi(rho) + (obs.slope_at_infinity * (rho - rc) if rho > rc else 0.0)
    base = obs.homologue(profile, min(rho, rc))
    if rho > rc:
        base += obs.slope_at_infinity * (rho - rc)
    return base


def rate_function(profile: ThermoProfile, rho_star: float, rho: float) -> float:
    """Legendre transform of the log-moment generating function of the site law."""
    if not 0 < rho_star < profile.rho_c:
        raise ValueError("reference density must lie in (0, rho_c)")
    if rho < 0:
        return math.inf
    if rho == rho_star:
        return 0.0
    rc = profile.rho_c
    phi = profile.Phi(min(rho, rc))
    phi_s = profile.Phi(rho_star)
    logz = float(profile.log_moments(phi)[0][0])
    logz_s = float(profile.log_moments(phi_s)[0][0])
    if phi == 0:
        return logz_s - logz
    return rho * math.log(phi / phi_s) - (logz - logz_s)


def entropy_density(profile: ThermoProfile, rho0: np.ndarray, rho_star: float,
                    condensate_mass: float = 0.0) -> float:
    """Relative entropy per site of a slowly varying product law.

    ``rho0`` holds profile values on a uniform grid of the torus; an optional
    condensate of mass ``condensate_mass`` adds ``alpha log(phi_c/Phi(rho*))``.
    Returns ``inf`` when ``phi_c`` is infinite and a condensate is present.
    """
    vals = np.asarray(rho0, dtype=np.float64).ravel()
    if np.any(vals < 0):
        raise ValueError("profile must be nonnegative")
    rc = profile.rho_c
    capped = np.minimum(vals, rc)
    uniq, inv = np.unique(capped, return_inverse=True)
    lam = np.array([rate_function(profile, rho_star, float(r)) for r in uniq])
    out = float(np.mean(lam[inv]))
    if condensate_mass > 0:
        if not math.isfinite(profile.phi_c):
            return math.inf
        out += condensate_mass * math.log(profile.phi_c / profile.Phi(rho_star))
    return out
JumpRate = JumpRateSpec
