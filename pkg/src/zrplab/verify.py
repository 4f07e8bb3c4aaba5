"""Replica statistics for the limit theorems.

Each diagnostic has a per-trajectory function (``*_value``) and a replica
driver that runs independent trajectories, one random stream per replica,
and reduces them in replica order so results are reproducible.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import stats as sstats

from . import rng as rngmod
from .empirical import block_average, block_sums, exact_dot, macro_radius
from .ensembles import (InitialCondition, build_canonical_table, canonical_expectation_g,
                        sample_initial)
from .lattice import Lattice
from .sim import Trajectory, ZeroRangeProcess
from .thermo import CylinderObservable, JumpRateSpec, ThermoProfile, extended_homologue

SIGMAS = 3.0


@dataclass
class ReplicaStats:
    values: np.ndarray
    seeds: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def R(self) -> int:
        return int(self.values.shape[0])

    @property
    def mean(self):
        return self.values.mean(axis=0)

    @property
    def se(self):
        if self.R < 2:
            return np.zeros_like(self.mean) if np.ndim(self.mean) else 0.0
        return self.values.std(axis=0, ddof=1) / math.sqrt(self.R)

    def __repr__(self):
        return f"ReplicaStats(R={self.R}, mean={self.mean}, se={self.se})"


def separated_decreasing(stats: Sequence[ReplicaStats], k: float = SIGMAS) -> bool:
    """``mean_i - mean_{i+1} > k sqrt(se_i^2 + se_{i+1}^2)`` for consecutive entries."""
    for a, b in zip(stats[:-1], stats[1:]):
        if not a.mean - b.mean > k * math.hypot(a.se, b.se):
            return False
    return True


# -- experiments and replicas --------------------------------------------------------


@dataclass
class Experiment:
    spec: JumpRateSpec
    lattice: Lattice
    ic: InitialCondition
    T: float
    seed: int = 0
    event_budget: int = 10 ** 9

    @property
    def profile(self) -> ThermoProfile:
        p = getattr(self, "_profile", None)
        if p is None:
            p = ThermoProfile(self.spec)
            self._profile = p
        return p

    def initial(self, replica: int) -> np.ndarray:
        return sample_initial(self.ic, self.lattice, self.profile, rngmod.stream(self.seed, replica, rngmod.INITIAL))

    def run(self, replica: int, audit: bool = False) -> Trajectory:
        occ = self.initial(replica)
        proc = ZeroRangeProcess(self.spec, self.lattice, occ, seed=self.seed, replica=replica, record=True,
                                audit=audit, event_budget=self.event_budget)
        proc.run_until(self.T)
        return proc.trajectory()


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def _task(exp: Experiment, fn: Callable, replica: int):
    return fn(exp.run(replica))


def replicate(exp: Experiment, R: int, fn: Callable[[Trajectory], object], workers: Optional[int] = None,
              first: int = 0) -> list:
    """``[fn(trajectory of replica r) for r in range(first, first + R)]``, optionally in parallel."""
    workers = default_workers() if workers is None else workers
    idx = range(first, first + R)
    if workers <= 1 or R <= 1:
        return [fn(exp.run(r)) for r in idx]
    with ProcessPoolExecutor(max_workers=min(workers, R)) as pool:
        return list(pool.map(partial(_task, exp, fn), idx))


# -- test fields -------------------------------------------------------------------------


@dataclass
class SeparableTerm:
    """``a(t) f(u)`` with analytic ``grad f`` (list over directions) and ``lap f``; ``a=None`` means 1."""

    f: Callable
    grad: Sequence[Callable]
    lap: Callable
    a: Optional[Callable] = None
    da: Optional[Callable] = None


class DiscreteTestField:
    """``G(t, u) = sum_k a_k(t) f_k(u)`` with continuous and lattice derivatives."""

    def __init__(self, terms: Sequence[SeparableTerm], d: int = 1, grad_sup: Optional[float] = None):
        self.terms = list(terms)
        self.d = d
        self._grad_sup = grad_sup

    @classmethod
    def constant(cls, c: float, d: int = 1) -> "DiscreteTestField":
        z = lambda *u: 0.0 * u[0]
        return cls([SeparableTerm(lambda *u: c + 0.0 * u[0], [z] * d, z)], d, grad_sup=0.0)

    @classmethod
    def fourier(cls, kind: str, k: int, d: int = 1, a=None, da=None, axis: int = 0) -> "DiscreteTestField":
        """``cos`` or ``sin`` of ``2 pi k u_axis``."""
        w = 2 * math.pi * k
        if kind == "cos":
            f = lambda *u: np.cos(w * u[axis])
            df = lambda *u: -w * np.sin(w * u[axis])
        elif kind == "sin":
            f = lambda *u: np.sin(w * u[axis])
            df = lambda *u: w * np.cos(w * u[axis])
        else:
            raise ValueError(kind)
        z = lambda *u: 0.0 * u[0]
        grad = [df if j == axis else z for j in range(d)]
        lap = lambda *u: -w * w * f(*u)
        return cls([SeparableTerm(f, grad, lap, a, da)], d, grad_sup=w if a is None else None)

    def _a(self, term, t):
        return 1.0 if term.a is None else term.a(t)

    def values(self, lattice: Lattice, t: float = 0.0) -> np.ndarray:
        return sum(self._a(tm, t) * lattice.field(tm.f) for tm in self.terms)

    def laplacian(self, lattice: Lattice, t: float = 0.0) -> np.ndarray:
        return sum(self._a(tm, t) * lattice.field(tm.lap) for tm in self.terms)

    def gradient(self, lattice: Lattice, j: int, t: float = 0.0) -> np.ndarray:
        return sum(self._a(tm, t) * lattice.field(tm.grad[j]) for tm in self.terms)

    def discrete_laplacian(self, lattice: Lattice, t: float = 0.0) -> np.ndarray:
        return sum(self._a(tm, t) * discrete_laplacian(lattice.field(tm.f), lattice) for tm in self.terms)

    def discrete_gradient(self, lattice: Lattice, j: int, t: float = 0.0) -> np.ndarray:
        return sum(self._a(tm, t) * discrete_gradient(lattice.field(tm.f), lattice, j) for tm in self.terms)

    def taylor_gap(self, lattice: Lattice, t: float = 0.0) -> float:
        return float(np.max(np.abs(self.discrete_laplacian(lattice, t) - self.laplacian(lattice, t))))

    def grad_sup(self, T: float = 0.0, n: int = 4096) -> float:
        """``sup |grad G|`` over ``[0, T] x T^d``, on a fine grid unless known analytically."""
        if self._grad_sup is not None:
            return self._grad_sup
        lat = Lattice(n if self.d == 1 else 256, self.d)
        ts = np.linspace(0.0, T, 9) if T > 0 else [0.0]
        best = 0.0
        for t in ts:
            sq = sum(self.gradient(lat, j, t) ** 2 for j in range(self.d))
            best = max(best, float(np.sqrt(np.max(sq))))
        return best


def discrete_laplacian(values: np.ndarray, lattice: Lattice) -> np.ndarray:
    out = np.zeros_like(values, dtype=np.float64)
    for j in range(lattice.d):
        out += values[lattice.shift(j, 1)] + values[lattice.shift(j, -1)] - 2 * values
    return lattice.N ** 2 * out


def discrete_gradient(values: np.ndarray, lattice: Lattice, j: int) -> np.ndarray:
    return lattice.N * (values[lattice.shift(j, 1)] - values)


# -- one-block --------------------------------------------------------------------------------


def one_block_tables(obs: CylinderObservable, profile: ThermoProfile, ell: int, d: int, total: int):
    """Site table ``psi`` and block table ``F[S] = -Psibar(S/|block|)``."""
    if obs.site_fn is None or obs.support_radius != 0:
        raise NotImplementedError("one-block statistic is implemented for single-site cylinders")
    w = (2 * ell + 1) ** d
    k = np.arange(total + 2)
    psi = np.asarray(obs.site_fn(k), dtype=np.float64) * np.ones(k.size)
    s = np.arange(total + 1)
    if obs.kind == "identity":
        F = -(s / w)
    elif obs.kind == "jump_rate":
        F = -np.atleast_1d(profile.Phi(s / w))
    else:
        F = -np.array([extended_homologue(obs, profile, v) for v in s / w])
    return psi, F


def one_block_value(traj: Trajectory, obs: CylinderObservable, ell: int, profile: ThermoProfile,
                    H: Optional[DiscreteTestField] = None) -> float:
    """``|int_0^T N^-d sum_x H_t(x/N) [tau_x Psi^ell - Psibar(eta^ell(x))] dt|``."""
    lat = traj.lattice
    psi, F = one_block_tables(obs, profile, ell, lat.d, traj.total)
    terms = H.terms if H is not None else [None]
    total = 0.0
    for tm in terms:
        a = None if tm is None else tm.a
        I = traj.integrate([traj.t_end], psi=psi, ell=ell, F=F, a=a)[0]
        h = np.ones(lat.n_sites) if tm is None else lat.field(tm.f)
        total += math.fsum(h * I)
    return abs(total) / lat.n_sites


def one_block_stat(exp: Experiment, R: int, obs: CylinderObservable, ell: int,
                   H: Optional[DiscreteTestField] = None, workers: Optional[int] = None) -> ReplicaStats:
    fn = partial(one_block_value, obs=obs, ell=ell, profile=exp.profile, H=H)
    return ReplicaStats(replicate(exp, R, fn, workers), [(exp.seed, r) for r in range(R)])


# -- continuity equation and martingale ---------------------------------------------------------------


def continuity_values(traj: Trajectory, G: DiscreteTestField, sample_times: Sequence[float]) -> dict:
    """``V1``, ``V2`` and the martingale ``A`` at each sample time (exact event-wise integrals)."""
    lat = traj.lattice
    nd = lat.n_sites
    st = np.asarray(sample_times, dtype=np.float64)
    snaps = traj.snapshots(np.concatenate([[traj.t0], st]))
    pair_pi = np.array([exact_dot(G.values(lat, t), snaps[i + 1]) for i, t in enumerate(st)]) / nd
    pi0 = exact_dot(G.values(lat, traj.t0), snaps[0]) / nd
    g_tab = traj.spec.table[: traj.total + 2]
    id_tab = np.arange(traj.total + 2, dtype=np.float64)
    dt_term = np.zeros(st.size)
    lap_term = np.zeros(st.size)
    dlap_term = np.zeros(st.size)
    cur_term = np.zeros(st.size)
    for tm in G.terms:
        if tm.da is not None:
            Ip = traj.integrate(st, psi=id_tab, a=tm.da)
            dt_term += (Ip @ lat.field(tm.f)) / nd
        Ig = traj.integrate(st, psi=g_tab, a=tm.a)
        lap = lat.field(tm.lap)
        if np.any(lap != 0):
            lap_term += (Ig @ lap) / nd
        fv = lat.field(tm.f)
        dl = discrete_laplacian(fv, lat)
        if np.any(dl != 0):
            dlap_term += (Ig @ dl) / nd
        for j in range(lat.d):
            gj = lat.field(tm.grad[j])
            if np.any(gj != 0):
                Wint = Ig - Ig[:, lat.shift(j, 1)]
                cur_term += (Wint @ gj) / lat.N ** (lat.d - 1)
    base = pair_pi - pi0 - dt_term
    return {"t": st, "V1": base - lap_term, "V2": base - cur_term, "A": base - dlap_term}


def continuity_residuals(exp: Experiment, R: int, G: DiscreteTestField, sample_times: Sequence[float],
                         workers: Optional[int] = None):
    """Per-replica ``sup_t |V1|`` and ``sup_t |V2|``."""
    vals = replicate(exp, R, partial(_continuity_sup, G=G, sample_times=tuple(sample_times)), workers)
    arr = np.asarray(vals)
    return ReplicaStats(arr[:, 0]), ReplicaStats(arr[:, 1])


def _continuity_sup(traj, G, sample_times):
    v = continuity_values(traj, G, sample_times)
    return [float(np.max(np.abs(v["V1"]))), float(np.max(np.abs(v["V2"])))]


def _qv_value(traj, G):
    v = continuity_values(traj, G, [traj.t_end])
    return [float(v["A"][-1]), traj.total / traj.lattice.n_sites]


def qv_bound(G: DiscreteTestField, spec: JumpRateSpec, d: int, T: float, mass0: float, N: int) -> float:
    """``2d |grad G|^2 |g'| T <1, pi_0> / N^d``."""
    return 2 * d * G.grad_sup(T) ** 2 * spec.grad_sup * T * mass0 / N ** d


def martingale_qv_check(exp: Experiment, R: int, G: DiscreteTestField, confidence: float = 0.95,
                        workers: Optional[int] = None) -> dict:
    """Cross-replica variance of ``A_T`` against the quadratic-variation bound.

    Passes when the one-sided upper confidence limit of the variance is
    below the bound averaged over replicas.
    """
    vals = np.asarray(replicate(exp, R, partial(_qv_value, G=G), workers))
    A, mass = vals[:, 0], vals[:, 1]
    var = float(np.var(A, ddof=1))
    upper = var * (R - 1) / sstats.chi2.ppf(1 - confidence, R - 1)
    bound = float(np.mean([qv_bound(G, exp.spec, exp.lattice.d, exp.T, m, exp.lattice.N) for m in mass]))
    return {"A": ReplicaStats(A), "var": var, "var_upper": upper, "bound": bound,
            "ratio": bound / var if var > 0 else math.inf, "pass": bool(upper <= bound)}


# -- equivalence of ensembles --------------------------------------------------------------------------


def eoe_table(spec: JumpRateSpec, rho: float, sizes: Sequence[int], profile: Optional[ThermoProfile] = None) -> list:
    """Rows ``(n, K, E_canonical[g], Phibar(rho), |difference|)`` from the exact DP."""
    profile = ThermoProfile(spec) if profile is None else profile
    target = profile.Phi(rho)
    rows = []
    for n in sizes:
        K = int(math.floor(rho * n + 1e-9))
        if K == 0:
            val = 0.0
        elif n == 1:
            val = float(spec.table[K])
        else:
            val = canonical_expectation_g(build_canonical_table(spec, n, K))
        rows.append((int(n), K, val, float(target), abs(val - target)))
    return rows


# -- jump-rate bound ------------------------------------------------------------------------------


def jump_rate_block_value(traj: Trajectory, eps: float, sample_times: Optional[Sequence[float]] = None):
    """Time-averaged ``[N eps]``-block jump rate per site, and the block maxima at sample times."""
    lat = traj.lattice
    L = macro_radius(lat.N, eps)
    g_tab = traj.spec.table[: traj.total + 2]
    T = traj.t_end - traj.t0
    I = traj.integrate([traj.t_end], psi=g_tab, ell=L)[0]
    avg = I / T if T > 0 else block_average(g_tab[traj.occ0], lat, L)
    maxima = []
    if sample_times is not None:
        for occ in traj.snapshots(sample_times):
            maxima.append(float(block_average(g_tab[occ], lat, L).max()))
    return avg, np.asarray(maxima)


def jump_rate_bound(exp: Experiment, R: int, eps: float, sample_times=None, workers=None) -> dict:
    out = replicate(exp, R, partial(jump_rate_block_value, eps=eps, sample_times=sample_times), workers)
    per_site = ReplicaStats(np.stack([o[0] for o in out]))
    maxima = ReplicaStats(np.stack([o[1] for o in out])) if sample_times is not None else None
    phi_c = exp.profile.phi_c
    upper = per_site.mean - SIGMAS * per_site.se
    ok = bool(np.all(per_site.mean <= phi_c + SIGMAS * per_site.se))
    return {"per_site": per_site, "snapshot_maxima": maxima, "phi_c": phi_c, "pass": ok,
            "max_mean": float(per_site.mean.max()), "lower_band_max": float(upper.max())}


# -- double block ---------------------------------------------------------------------------------


def double_block_values(occ: np.ndarray, lattice: Lattice, ell: int, eps: float, M: float, A: float):
    """The truncated double-block integrand and the cut-off statistic for one configuration."""
    L = macro_radius(lattice.N, eps)
    w = (2 * ell + 1) ** lattice.d
    WL = (2 * L + 1) ** lattice.d
    eta_l = block_sums(occ, lattice, ell) / w
    excess = block_sums(np.maximum(eta_l - M, 0.0), lattice, L) / WL
    dbl = block_sums(eta_l, lattice, L) / WL
    stat = float(np.sum(excess * ((dbl >= 0) & (dbl <= M)))) / lattice.n_sites
    cut = float(np.sum(np.minimum(eta_l, M) * (eta_l > A))) / lattice.n_sites
    return stat, cut


def _double_block_traj(traj: Trajectory, ell, eps, M, A, sample_times):
    st = np.asarray(sample_times)
    vals = np.array([double_block_values(o, traj.lattice, ell, eps, M, A) for o in traj.snapshots(st)])
    w = _riemann_weights(st, traj.t0)
    return list(w @ vals)


def _riemann_weights(st: np.ndarray, t0: float) -> np.ndarray:
    """Left-point weights on the partition given by the sample times (first point at ``t0``)."""
    edges = np.concatenate([st, [st[-1]]])
    return np.diff(edges) if st[0] == t0 else np.diff(np.concatenate([[t0], st]))


def double_block_stat(exp: Experiment, R: int, ell: int, eps: float, M: float, A: float,
                      sample_times: Sequence[float], workers=None):
    """Snapshot-based time integrals of both statistics (diagnostic, no verdict)."""
    out = np.asarray(replicate(exp, R, partial(_double_block_traj, ell=ell, eps=eps, M=M, A=A,
                                                sample_times=tuple(sample_times)), workers))
    return ReplicaStats(out[:, 0]), ReplicaStats(out[:, 1])


# -- energy -----------------------------------------------------------------------------------------


def energy_dictionary(d: int = 1) -> List[tuple]:
    """20 fields ``(H, dH/du_1)`` of the first coordinate: zero, ``a sin/cos(2 pi k u)`` and one product."""
    out = [(lambda *u: 0.0 * u[0], lambda *u: 0.0 * u[0])]
    for a in (0.25, 0.5, 1.0):
        for k in (1, 2, 3):
            w = 2 * math.pi * k
            out.append((lambda *u, a=a, w=w: a * np.sin(w * u[0]), lambda *u, a=a, w=w: a * w * np.cos(w * u[0])))
            out.append((lambda *u, a=a, w=w: a * np.cos(w * u[0]), lambda *u, a=a, w=w: -a * w * np.sin(w * u[0])))
    p = 2 * math.pi
    out.append((lambda *u: np.sin(p * u[0]) * np.cos(2 * p * u[0]),
                lambda *u: p * np.cos(p * u[0]) * np.cos(2 * p * u[0]) - 2 * p * np.sin(p * u[0]) * np.sin(2 * p * u[0])))
    return out


def energy_value(traj: Trajectory, eps: float, sample_times: Sequence[float]) -> dict:
    """Dictionary lower bound for K0 and the ``|grad sigma|^2 / sigma`` statistic.

    The K0 integrand is linear in sigma, so its time integral uses exact
    event-wise integrals of the smoothed jump rate. The gradient statistic is
    a left-point sum over snapshots.
    """
    lat = traj.lattice
    L = macro_radius(lat.N, eps)
    g_tab = traj.spec.table[: traj.total + 2]
    I = traj.integrate([traj.t_end], psi=g_tab, ell=L)[0]
    values = []
    for H, dH in energy_dictionary(lat.d):
        integrand = lat.field(dH) - 2 * lat.field(H) ** 2
        values.append(math.fsum(integrand * I) / lat.n_sites)
    st = np.asarray(sample_times, dtype=np.float64)
    grad_stat = []
    for occ in traj.snapshots(st):
        sig = block_average(g_tab[occ], lat, L)
        sq = sum(discrete_gradient(sig, lat, j) ** 2 for j in range(lat.d))
        keep = sig >= 1e-12
        grad_stat.append(float(np.sum(sq[keep] / sig[keep])) / lat.n_sites)
    gs = float(_riemann_weights(st, traj.t0) @ np.asarray(grad_stat))
    return {"K0_lower": max(values), "K0_values": values, "grad_stat": gs}


def energy_stat(exp: Experiment, R: int, eps: float, sample_times: Sequence[float], workers=None):
    out = replicate(exp, R, partial(energy_value, eps=eps, sample_times=tuple(sample_times)), workers)
    return ReplicaStats([o["K0_lower"] for o in out]), ReplicaStats([o["grad_stat"] for o in out])


# -- hydrodynamic limit -----------------------------------------------------------------------------


HYDRO_DICTIONARY = {
    "1": lambda u: np.ones_like(u),
    "cos2pi": lambda u: np.cos(2 * np.pi * u),
    "sin2pi": lambda u: np.sin(2 * np.pi * u),
    "cos4pi": lambda u: np.cos(4 * np.pi * u),
    "sin4pi": lambda u: np.sin(4 * np.pi * u),
}


def _pairings(traj: Trajectory, tests) -> list:
    lat = traj.lattice
    occ = traj.snapshots([traj.t_end])[0]
    u = lat.positions[:, 0] if lat.d == 1 else lat.positions
    return [exact_dot(np.asarray(f(u), dtype=np.float64) * np.ones(lat.n_sites), occ) / lat.n_sites
            for f in tests]


def hydro_weak_error(exp: Experiment, R: int, rho0: Callable, G: int = 512, tests=None,
                     workers=None, pde_solution=None) -> dict:
    """Replica-averaged ``<f, pi_T>`` against the grid solution for each test function.

    The error is ``max_f |mean_r <f, pi_T^r> - sum_i f(u_i) rho_i / G|``.
    Only one-dimensional runs are supported.
    """
    from .pde import initial_grid, solve
    if exp.lattice.d != 1:
        raise NotImplementedError("hydro comparison is one-dimensional")
    tests = HYDRO_DICTIONARY if tests is None else tests
    names = list(tests)
    fns = [tests[k] for k in names]
    sol = pde_solution if pde_solution is not None else solve(initial_grid(rho0, G), exp.profile, exp.T, G)
    grid_u = np.arange(sol.G) / sol.G
    pde_vals = np.array([math.fsum(np.asarray(f(grid_u)) * sol.rho) / sol.G for f in fns])
    per = ReplicaStats(np.asarray(replicate(exp, R, partial(_pairings, tests=fns), workers)))
    errs = np.abs(per.mean - pde_vals)
    return {"tests": names, "particle": per, "pde": pde_vals, "errors": errs,
            "weak_error": float(errs.max()), "solution": sol}


# -- reporting --------------------------------------------------------------------------------


def csv_block(statistic: str, setting: str, stats: ReplicaStats) -> List[str]:
    """Rows of the ``statistic`` CSV schema: one per replica, then ``mean`` and ``se``."""
    rows = []
    vals = np.ravel(stats.values) if np.ndim(stats.values) == 1 else None
    if vals is None:
        raise ValueError("csv_block expects scalar per-replica values")
    for r, v in enumerate(vals):
        rows.append(f"{statistic},{setting},{r},{float(v)!r}")
    rows.append(f"{statistic},{setting},mean,{float(stats.mean)!r}")
    rows.append(f"{statistic},{setting},se,{float(stats.se)!r}")
    return rows


def write_statistic_csv(path, blocks: Sequence[List[str]]) -> None:
    with open(path, "w") as fh:
        fh.write("statistic,setting,replica,value\n")
        for b in blocks:
            for row in b:
                fh.write(row + "\n")


def verdict(name: str, status: str, **details) -> dict:
    """JSON-ready verdict; ``status`` is ``pass``, ``fail`` or ``diagnostic``."""
    if status not in ("pass", "fail", "diagnostic"):
        raise ValueError(status)
    clean = {}
    for k, v in details.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, (np.floating, np.integer, np.bool_)):
            v = v.item()
        clean[k] = v
    return {"statistic": name, "verdict": status, **clean}
