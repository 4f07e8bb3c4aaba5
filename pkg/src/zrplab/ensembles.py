"""Canonical tables and initial-condition samplers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels
from .lattice import Lattice
from .thermo import CapacityError, JumpRateSpec, ThermoProfile

K_DP_MAX = 5000


class SupercriticalProfile(ValueError):
    """A product profile exceeded the critical density."""


@dataclass(frozen=True, eq=False)
class CanonicalTable:
    """``logZ[m, k]`` for ``m <= n_sites`` sites and total mass ``k <= K``."""

    spec: JumpRateSpec
    n_sites: int
    K: int
    logZ: np.ndarray

    @property
    def logw(self) -> np.ndarray:
        return -self.spec.log_gfact[: self.K + 1]

    def Z(self, n: int, k: int) -> float:
        return math.exp(self.logZ[n, k])

    def marginal(self, n: Optional[int] = None, K: Optional[int] = None) -> np.ndarray:
        """Law of ``eta(0)`` under the canonical measure on ``n`` sites with ``K`` particles."""
        n = self.n_sites if n is None else n
        K = self.K if K is None else K
        if n == 1:
            out = np.zeros(K + 1)
            out[K] = 1.0
            return out
        j = np.arange(K + 1)
        return np.exp(self.logw[j] + self.logZ[n - 1, K - j] - self.logZ[n, K])


def build_canonical_table(spec: JumpRateSpec, n_sites: int, K: int) -> CanonicalTable:
    if n_sites < 1 or K < 0:
        raise ValueError("need n_sites >= 1 and K >= 0")
    if K > spec.k_max:
        raise CapacityError(f"K={K} exceeds the rate table (k_max={spec.k_max})")
    if K > K_DP_MAX:
        raise ValueError(f"canonical DP is limited to K <= {K_DP_MAX}")
    logw = np.ascontiguousarray(-spec.log_gfact[: K + 1])
    logZ = _kernels.canonical_dp(logw, int(n_sites), int(K))
    logZ.setflags(write=False)
    return CanonicalTable(spec, int(n_sites), int(K), logZ)


def canonical_expectation_g(table: CanonicalTable, n_sites: Optional[int] = None,
                            K: Optional[int] = None) -> float:
    """``E[g(eta(0))] = Z(n, K-1) / Z(n, K)``."""
    n = table.n_sites if n_sites is None else n_sites
    K = table.K if K is None else K
    if K < 1:
        raise ValueError("K must be >= 1")
    return math.exp(table.logZ[n, K - 1] - table.logZ[n, K])


def sample_canonical(table: CanonicalTable, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Exact draws from the canonical measure; shape ``(n_sites,)`` or ``(size, n_sites)``."""
    m = 1 if size is None else int(size)
    n, K = table.n_sites, table.K
    u = rng.random((m, n))
    out = np.zeros((m, n), dtype=np.int64)
    _kernels.canonical_sample(table.logZ, np.ascontiguousarray(table.logw), n, K, u, out)
    return out[0] if size is None else out


# -- initial conditions ------------------------------------------------------

Profile = Union[float, Callable[..., np.ndarray], np.ndarray]


@dataclass
class InitialCondition:
    """Recipe for the starting configuration.

    kind is one of ``product_profile``, ``product_with_condensate``,
    ``canonical``, ``grand_canonical`` or ``deterministic``.
    """

    kind: str
    rho0: Profile = 0.0
    u: tuple = (0.5,)
    alpha: float = 0.0
    K: int = 0
    eta: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def product(cls, rho0: Profile) -> "InitialCondition":
        return cls("product_profile", rho0=rho0)

    @classmethod
    def with_condensate(cls, rho0: Profile, u, alpha: float) -> "InitialCondition":
        return cls("product_with_condensate", rho0=rho0, u=tuple(np.atleast_1d(u)), alpha=alpha)

    @classmethod
    def canonical(cls, K: int) -> "InitialCondition":
        return cls("canonical", K=int(K))

    @classmethod
    def grand_canonical(cls, rho: float) -> "InitialCondition":
        return cls("grand_canonical", rho0=float(rho))

    @classmethod
    def deterministic(cls, eta) -> "InitialCondition":
        return cls("deterministic", eta=np.asarray(eta, dtype=np.int64))

    def profile_values(self, lattice: Lattice) -> np.ndarray:
        r = self.rho0
        if callable(r):
            return lattice.field(r)
        r = np.asarray(r, dtype=np.float64)
        if r.ndim == 0:
            return np.full(lattice.n_sites, float(r))
        if r.size != lattice.n_sites:
            raise ValueError("profile grid must have one value per site")
        return r.ravel().copy()

    def condensate_site(self, lattice: Lattice) -> int:
        u = np.broadcast_to(np.asarray(self.u, dtype=np.float64), (lattice.d,))
        c = np.floor(lattice.N * u + 1e-12).astype(np.int64) % lattice.N
        return int(lattice.index(c[None, :])[0]) if lattice.d > 1 else int(c[0])

    def condensate_mass(self, lattice: Lattice) -> int:
        return int(math.floor(self.alpha * lattice.n_sites + 1e-9))


class ProductSampler:
    """Independent per-site draws from the one-site laws of ``Phi(rho0(x/N))``.

    Cumulative distribution tables are built once per distinct density and
    reused across replicas.
    """

    def __init__(self, profile: ThermoProfile, rho: np.ndarray, tail: float = 1e-17):
        rho = np.asarray(rho, dtype=np.float64)
        if np.any(rho < 0):
            raise ValueError("density profile must be nonnegative")
        if np.any(rho > profile.rho_c):
            raise SupercriticalProfile(f"profile exceeds rho_c={profile.rho_c}")
        self.uniq, self.inv = np.unique(rho, return_inverse=True)
        phis = np.atleast_1d(profile.Phi(self.uniq))
        self.cdfs = []
        for phi in phis:
            p = profile.pmf(float(phi))
            c = np.cumsum(p)
            c /= c[-1]
            cut = int(np.searchsorted(c, 1.0 - tail)) + 1
            self.cdfs.append(c[: min(cut + 1, c.size)])

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(self.inv.size)
        out = np.empty(self.inv.size, dtype=np.int64)
        for j, c in enumerate(self.cdfs):
            sel = self.inv == j
            out[sel] = np.minimum(np.searchsorted(c, u[sel], side="right"), c.size - 1)
        return out


def sample_initial(ic: InitialCondition, lattice: Lattice, profile: ThermoProfile,
                   rng: np.random.Generator) -> np.ndarray:
    n = lattice.n_sites
    kind = ic.kind
    if kind == "deterministic":
        eta = np.asarray(ic.eta, dtype=np.int64).ravel()
        if eta.size != n or np.any(eta < 0):
            raise ValueError("deterministic configuration has the wrong shape or negative entries")
        return eta.copy()
    if kind == "canonical":
        key = ("canonical", n, ic.K)
        table = ic._cache.get(key)
        if table is None:
            table = build_canonical_table(profile.spec, n, ic.K)
            ic._cache[key] = table
        return sample_canonical(table, rng)
    if kind in ("product_profile", "grand_canonical", "product_with_condensate"):
        key = ("product", lattice.N, lattice.d)
        sampler = ic._cache.get(key)
        if sampler is None:
            sampler = ProductSampler(profile, ic.profile_values(lattice))
            ic._cache[key] = sampler
        eta = sampler.sample(rng)
        if kind == "product_with_condensate":
            site = ic.condensate_site(lattice)
            eta[site] = ic.condensate_mass(lattice)
        return eta
    raise ValueError(f"unknown initial condition kind {kind!r}")
