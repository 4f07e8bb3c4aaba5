"""Empirical fields, block averages and generalized Young measures.

A generalized Young measure is stored on the lattice cells ``x/N`` times a
uniform grid of value bins on ``[0, M]``. For each cell we keep the counted
mass and its first moment so pairings with functions linear in the value are
exact, plus a per-cell singular mass for the part truncated above ``M``.
Values are kept in block-sum units (value times the block volume), which
keeps everything integer valued for snapshot data and makes re-truncation
exact when ``M`` times the block volume is an integer.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .lattice import Lattice
from .thermo import JumpRateSpec

DLAM = 0.05


class MissingRecession(ValueError):
    pass


# -- fields --------------------------------------------------------------------


@dataclass
class EmpiricalFields:
    """Atomic weights at the sites: ``density`` (pi), ``jump_rate`` (sigma), ``current`` (W, shape (d, n))."""

    lattice: Lattice
    occ: np.ndarray
    density: np.ndarray
    jump_rate: np.ndarray
    current: np.ndarray
    t: float = 0.0

    def total_mass(self) -> float:
        return int(self.occ.sum()) / self.lattice.n_sites

    def total_current(self) -> np.ndarray:
        """Sum of each current component; zero by construction, computed exactly."""
        d = self.lattice.d
        g = self.jump_rate * self.lattice.n_sites
        out = np.zeros(d)
        for j in range(d):
            gs = g[self.lattice.shift(j, 1)]
            out[j] = math.fsum(np.concatenate([g, -gs])) / self.lattice.N ** (d - 1)
        return out

    def pair_density(self, f) -> float:
        return exact_dot(_values(f, self.lattice), self.occ) / self.lattice.n_sites

    def pair_jump_rate(self, f) -> float:
        return math.fsum(_values(f, self.lattice) * self.jump_rate)

    def pair_current(self, fs: Sequence) -> float:
        return math.fsum(math.fsum(_values(f, self.lattice) * self.current[j]) for j, f in enumerate(fs))


def _values(f, lattice: Lattice) -> np.ndarray:
    if callable(f):
        return lattice.field(f)
    return np.broadcast_to(np.asarray(f, dtype=np.float64), (lattice.n_sites,))


def exact_dot(weights: np.ndarray, counts: np.ndarray) -> float:
    """Correctly rounded ``sum(weights * counts)`` for nonnegative integer ``counts``."""
    counts = np.asarray(counts, dtype=np.int64)
    return math.fsum(np.repeat(np.asarray(weights, dtype=np.float64), counts))


def extract_fields(occ, lattice: Lattice, spec: JumpRateSpec, t: float = 0.0) -> EmpiricalFields:
    occ = np.asarray(occ, dtype=np.int64)
    nd = lattice.n_sites
    g = spec.rate(occ)
    cur = np.empty((lattice.d, nd))
    for j in range(lattice.d):
        cur[j] = (g - g[lattice.shift(j, 1)]) / lattice.N ** (lattice.d - 1)
    return EmpiricalFields(lattice, occ.copy(), occ / nd, g / nd, cur, t)


# -- block averages --------------------------------------------------------------


def _axis_window_sum(a: np.ndarray, ell: int, axis: int) -> np.ndarray:
    if ell == 0:
        return a.copy()
    n = a.shape[axis]
    idx = np.arange(-ell, n + ell) % n
    padded = np.take(a, idx, axis=axis)
    c = np.cumsum(padded, axis=axis)
    zero = np.zeros_like(np.take(c, [0], axis=axis))
    c = np.concatenate([zero, c], axis=axis)
    hi = np.take(c, np.arange(2 * ell + 1, n + 2 * ell + 1), axis=axis)
    lo = np.take(c, np.arange(0, n), axis=axis)
    return hi - lo


def block_sums(values: np.ndarray, lattice: Lattice, ell: int) -> np.ndarray:
    """Sum of ``values`` over the sup-norm cube of radius ``ell`` around every site."""
    if not 0 <= 2 * ell < lattice.N:
        raise ValueError("block radius must satisfy 0 <= ell < N/2")
    shape = (lattice.N,) * lattice.d
    # site x = i + N*j, so axis 0 of the C-ordered reshape is j
    a = np.asarray(values).reshape(shape[::-1] if lattice.d > 1 else shape)
    for ax in range(lattice.d):
        a = _axis_window_sum(a, ell, ax)
    return a.reshape(-1)


def block_average(values, lattice: Lattice, ell: int) -> np.ndarray:
    return block_sums(np.asarray(values), lattice, ell) / (2 * ell + 1) ** lattice.d


def double_block(values, lattice: Lattice, ell: int, L: int) -> np.ndarray:
    """Average over the ``L``-cube of the ``ell``-block averages."""
    s = block_sums(block_sums(np.asarray(values), lattice, ell), lattice, L)
    return s / ((2 * ell + 1) * (2 * L + 1)) ** lattice.d


def consecutive_average_bound(values, lattice: Lattice, ell: int, L: int) -> np.ndarray:
    """``L_*^-d`` times the mass in the shell ``L - ell < |z| <= L + ell``."""
    outer = block_sums(values, lattice, L + ell)
    inner = block_sums(values, lattice, L - ell) if L >= ell else np.zeros_like(outer)
    return (outer - inner) / (2 * L + 1) ** lattice.d


# -- test functions ---------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """``F(u, lam)`` together with its analytic recession function ``RF(u)``.

    ``u`` is a vector of positions (shape ``(n,)`` in 1D, ``(n, 2)`` in 2D).
    """

    F: Callable[[np.ndarray, np.ndarray], np.ndarray]
    RF: Optional[Callable[[np.ndarray], np.ndarray]] = None
    growth: str = "sublinear"

    __test__ = False

    def recession(self, u: np.ndarray) -> np.ndarray:
        if self.growth == "sublinear":
            return np.zeros(len(u))
        if self.RF is None:
            raise MissingRecession("asymptotically linear test function without recession function")
        return np.asarray(self.RF(u), dtype=np.float64) * np.ones(len(u))

    def recession_gaps(self, u: np.ndarray, lams=(1e2, 1e3, 1e4)) -> np.ndarray:
        """``max_u |F(u, lam)/(1 + lam) - RF(u)|`` at increasing ``lam``."""
        r = self.recession(u)
        return np.array([np.max(np.abs(np.asarray(self.F(u, np.full(len(u), lam))) / (1 + lam) - r))
                         for lam in lams])

    @classmethod
    def product(cls, f: Callable, h: Callable, slope: float = 0.0) -> "TestFunction":
        """``f(u) h(lam)`` with ``h(lam)/lam -> slope``."""
        return cls(lambda u, lam: f(u) * h(lam), (lambda u: slope * f(u)) if slope else None,
                   "asymptotically_linear" if slope else "sublinear")


# -- generalized Young measures -----------------------------------------------------


@dataclass
class GeneralizedYoungMeasure:
    N: int
    d: int
    ell: int
    M: float
    dlam: float
    count: np.ndarray      # (n_sites, B) weighted site counts
    moment: np.ndarray     # (n_sites, B) sum of truncated values, block-sum units
    excess: np.ndarray     # (n_sites,) sum of excess above M, block-sum units
    weight: float = 1.0    # total weight per cell (time horizon for integrated measures)
    meta: dict = field(default_factory=dict)

    @property
    def n_sites(self) -> int:
        return self.N ** self.d

    @property
    def block_volume(self) -> int:
        return (2 * self.ell + 1) ** self.d

    @property
    def n_bins(self) -> int:
        return self.count.shape[1]

    @property
    def regular(self) -> np.ndarray:
        return self.count / self.n_sites

    @property
    def singular(self) -> np.ndarray:
        return self.excess / (self.block_volume * self.n_sites)

    @property
    def lambda_mean(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            m = self.moment / (self.count * self.block_volume)
        return np.where(self.count > 0, m, self.midpoints[None, :])

    @property
    def midpoints(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def edges(self) -> np.ndarray:
        e = np.arange(self.n_bins + 1) * self.dlam
        e[-1] = self.M
        return e

    def positions(self) -> np.ndarray:
        lat = Lattice(self.N, self.d)
        return lat.positions[:, 0] if self.d == 1 else lat.positions

    def total_regular(self) -> float:
        return math.fsum(self.count.ravel()) / self.n_sites

    def barycenter_mass(self) -> float:
        """``<Lambda, regular> + singular total``."""
        return (math.fsum(self.moment.ravel()) + math.fsum(self.excess)) / (self.block_volume * self.n_sites)

    def _lam(self, at: str) -> np.ndarray:
        if at == "mean":
            return self.lambda_mean
        if at == "midpoint":
            return np.broadcast_to(self.midpoints, self.count.shape)
        raise ValueError("at must be 'mean' or 'midpoint'")

    def pair(self, F: TestFunction, at: str = "mean") -> float:
        u = self.positions()
        ii, jj = np.nonzero(self.count)
        lam = self._lam(at)[ii, jj]
        reg = np.asarray(F.F(u[ii], lam), dtype=np.float64) * self.regular[ii, jj]
        total = math.fsum(reg)
        if np.any(self.excess != 0):
            total += math.fsum(F.recession(u) * self.singular)
        return total

    def project(self, psi: Callable[[np.ndarray], np.ndarray], slope: float = 0.0, at: str = "mean") -> np.ndarray:
        """Per-cell ``sum_j psi(lam_j) mass_ij + slope * singular_i``."""
        lam = self._lam(at)
        vals = np.where(self.count > 0, psi(lam) * self.regular, 0.0)
        return vals.sum(axis=1) + slope * self.singular

    def retruncate(self, M1: float) -> "GeneralizedYoungMeasure":
        """The same data truncated at a lower level ``M1`` (a bin edge)."""
        k = int(round(M1 / self.dlam))
        if M1 > self.M or abs(k * self.dlam - M1) > 1e-9 * max(1.0, M1):
            raise ValueError("M1 must be a bin edge not above M")
        w = self.block_volume
        MS = M1 * w
        count = self.count[:, :k].copy()
        moment = self.moment[:, :k].copy()
        hi_c = self.count[:, k:].sum(axis=1)
        hi_m = self.moment[:, k:].sum(axis=1)
        count[:, k - 1] += hi_c
        moment[:, k - 1] += MS * hi_c
        excess = self.excess + (hi_m - MS * hi_c)
        return GeneralizedYoungMeasure(self.N, self.d, self.ell, float(M1), self.dlam, count, moment,
                                       excess, self.weight, dict(self.meta))

    def __add__(self, other: "GeneralizedYoungMeasure") -> "GeneralizedYoungMeasure":
        self._check_compatible(other)
        return GeneralizedYoungMeasure(self.N, self.d, self.ell, self.M, self.dlam, self.count + other.count,
                                       self.moment + other.moment, self.excess + other.excess,
                                       self.weight + other.weight, dict(self.meta))

    def scaled(self, c: float) -> "GeneralizedYoungMeasure":
        return GeneralizedYoungMeasure(self.N, self.d, self.ell, self.M, self.dlam, c * self.count,
                                       c * self.moment, c * self.excess, c * self.weight, dict(self.meta))

    def _check_compatible(self, other):
        if (self.N, self.d, self.ell, self.M, self.dlam) != (other.N, other.d, other.ell, other.M, other.dlam):
            raise ValueError("Young measures built with different parameters")

    def tv_norm(self) -> float:
        """``int (1 + lam) d|rho| + |rho_perp|``."""
        return self.total_regular() + self.barycenter_mass()

    # -- persistence ------------------------------------------------------------------

    def to_csv(self, path) -> None:
        from .schema import YOUNG_COLUMNS
        lam = self.lambda_mean
        with open(path, "w", newline="") as fh:
            fh.write(f"# young N={self.N} d={self.d} ell={self.ell} M={self.M!r} dlam={self.dlam!r} "
                     f"weight={self.weight!r}\n")
            w = csv.writer(fh)
            w.writerow(YOUNG_COLUMNS)
            ii, jj = np.nonzero(self.count)
            reg = self.regular
            for i, j in zip(ii, jj):
                w.writerow(["regular", int(i), int(j), repr(float(reg[i, j])), repr(float(lam[i, j]))])
            sing = self.singular
            for i in np.flatnonzero(self.excess):
                w.writerow(["singular", int(i), "", repr(float(sing[i])), ""])

    @classmethod
    def from_csv(cls, path) -> "GeneralizedYoungMeasure":
        with open(path) as fh:
            head = fh.readline()
            meta = dict(kv.split("=", 1) for kv in head.lstrip("#").split()[1:])
            rows = list(csv.DictReader(fh))
        N, d, ell = int(meta["N"]), int(meta["d"]), int(meta["ell"])
        M, dlam = float(meta["M"]), float(meta["dlam"])
        n = N ** d
        w = (2 * ell + 1) ** d
        B = _n_bins(M, dlam)
        count = np.zeros((n, B))
        moment = np.zeros((n, B))
        excess = np.zeros(n)
        for r in rows:
            i = int(r["u_index"])
            if r["section"] == "regular":
                j = int(r["lambda_bin_index"])
                c = float(r["mass"]) * n
                count[i, j] = c
                moment[i, j] = float(r["lambda_mean"]) * c * w
            else:
                excess[i] = float(r["mass"]) * w * n
        return cls(N, d, ell, M, dlam, count, moment, excess, float(meta.get("weight", 1.0)))


def _n_bins(M: float, dlam: float) -> int:
    if M <= 0 or dlam <= 0:
        raise ValueError("need M > 0 and dlam > 0")
    return max(1, int(math.ceil(M / dlam - 1e-9)))


def young_from_block_sums(S: np.ndarray, lattice: Lattice, ell: int, M: float, dlam: float = DLAM,
                          weight: float = 1.0, excess_S: Optional[np.ndarray] = None) -> GeneralizedYoungMeasure:
    """Young measure from per-site values given in block-sum units.

    Without ``excess_S`` the regular value is ``min(S, M w)`` and the excess
    is ``(S - M w)^+``; with it, ``S`` is taken as already truncated.
    """
    S = np.asarray(S, dtype=np.float64)
    w = (2 * ell + 1) ** lattice.d
    B = _n_bins(M, dlam)
    MS = M * w
    if excess_S is None:
        reg = np.minimum(S, MS)
        exc = np.maximum(S - MS, 0.0)
    else:
        reg = S
        exc = np.asarray(excess_S, dtype=np.float64)
    b = np.minimum(np.floor(reg / (w * dlam) + 1e-9).astype(np.int64), B - 1)
    n = lattice.n_sites
    count = np.zeros((n, B))
    moment = np.zeros((n, B))
    rows = np.arange(n)
    count[rows, b] = weight
    moment[rows, b] = weight * reg
    return GeneralizedYoungMeasure(lattice.N, lattice.d, ell, float(M), float(dlam), count, moment,
                                   weight * exc, weight)


def build_young(occ, lattice: Lattice, ell: int, M: float, dlam: float = DLAM) -> GeneralizedYoungMeasure:
    """M-modified micro-empirical density of a configuration."""
    S = block_sums(np.asarray(occ, dtype=np.int64), lattice, ell)
    return young_from_block_sums(S, lattice, ell, M, dlam)


def macro_radius(N: int, eps: float) -> int:
    k = int(math.floor(N * eps + 1e-9))
    if k < 1:
        raise ValueError(f"[N eps] = {k}; the macro block needs [N eps] >= 1")
    return k


def build_young_macro(occ, lattice: Lattice, eps: float, M: float, dlam: float = DLAM) -> GeneralizedYoungMeasure:
    return build_young(occ, lattice, macro_radius(lattice.N, eps), M, dlam)


def build_young_double_block(occ, lattice: Lattice, ell: int, eps: float, M: float, dlam: float = DLAM,
                             truncate_first: bool = True) -> GeneralizedYoungMeasure:
    """Double-block variants: truncate the ``ell``-blocks then average over ``[N eps]``
    (``truncate_first``), or truncate the double-block average itself.

    The result carries the radius ``ell`` for its value units.
    """
    L = macro_radius(lattice.N, eps)
    w = (2 * ell + 1) ** lattice.d
    WL = (2 * L + 1) ** lattice.d
    S = block_sums(np.asarray(occ, dtype=np.int64), lattice, ell).astype(np.float64)
    MS = M * w
    if truncate_first:
        reg = block_sums(np.minimum(S, MS), lattice, L) / WL
        exc = block_sums(np.maximum(S - MS, 0.0), lattice, L) / WL
        return young_from_block_sums(reg, lattice, ell, M, dlam, excess_S=exc)
    return young_from_block_sums(block_sums(S, lattice, L) / WL, lattice, ell, M, dlam)


# -- time integration ---------------------------------------------------------------


@dataclass(frozen=True)
class YoungObservable:
    """``F(u, lam) = f(u) h(lam)`` paired with the M-modified micro-empirical density."""

    ell: int
    M: float
    h: Callable[[np.ndarray], np.ndarray]
    slope: float = 0.0


def time_integrate(traj, observable, f=None, a: Optional[Callable] = None,
                   t_end: Optional[float] = None) -> float:
    """``int_0^T a(t) <f, observable_t> dt`` by exact event-wise accumulation.

    ``observable`` is ``"density"``, ``"jump_rate"`` or a :class:`YoungObservable`.
    ``a`` is evaluated at the midpoint of each holding interval.
    """
    lat = traj.lattice
    T = traj.t_end if t_end is None else t_end
    tot = traj.total
    fx = np.ones(lat.n_sites) if f is None else _values(f, lat)
    if observable == "density":
        I = traj.integrate([T], psi=np.arange(tot + 2, dtype=np.float64), a=a)[0]
    elif observable == "jump_rate":
        I = traj.integrate([T], psi=traj.spec.table[: tot + 2], a=a)[0]
    elif isinstance(observable, YoungObservable):
        w = (2 * observable.ell + 1) ** lat.d
        s = np.arange(tot + 1, dtype=np.float64)
        lam = s / w
        Ftab = np.asarray(observable.h(np.minimum(lam, observable.M)), dtype=np.float64) \
            + observable.slope * np.maximum(lam - observable.M, 0.0)
        I = traj.integrate([T], psi=np.zeros(tot + 2), ell=observable.ell, F=Ftab, a=a)[0]
    else:
        raise ValueError(f"unknown observable {observable!r}")
    return math.fsum(fx * I) / lat.n_sites
