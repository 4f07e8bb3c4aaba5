"""Event-driven simulation of the symmetric nearest-neighbor zero-range process.

Time is macroscopic: the diffusive factor ``N**2`` sits inside the rates, so a
configuration with jump-rate sum ``S`` waits an exponential time of rate
``N**2 * 2d * S``. Sites are picked through a binary sum tree over
``g(eta(x))`` and directions uniformly among the ``2d`` neighbors.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as K
from . import rng as rngmod
from .lattice import Lattice
from .thermo import CapacityError, JumpRateSpec

CHUNK_EVENTS = 1 << 16
REBUILD_EVERY = 1_000_000
DEFAULT_EVENT_BUDGET = 10 ** 9
CHECKPOINT_VERSION = 1


class EventBudgetExceeded(RuntimeError):
    pass


class ConservationError(AssertionError):
    pass


@dataclass
class JumpEvent:
    x: int
    y: int
    direction: int
    dt: float


@dataclass
class Trajectory:
    """Recorded path: initial state plus the ordered list of jumps."""

    lattice: Lattice
    spec: JumpRateSpec
    occ0: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    times: np.ndarray
    t0: float
    t_end: float

    @property
    def n_events(self) -> int:
        return int(self.src.size)

    @property
    def total(self) -> int:
        return int(self.occ0.sum())

    def _timeline(self, sample_times, a: Optional[Callable] = None):
        st = np.asarray(sample_times, dtype=np.float64)
        if np.any(st < self.t0) or np.any(st > self.t_end):
            raise ValueError("sample times must lie within the recorded horizon")
        ts = np.concatenate([st, self.times])
        kind = np.concatenate([-(np.arange(st.size) + 1), np.arange(self.times.size)])
        # samples sort before events at equal times: they see the pre-event state
        order = np.lexsort((np.concatenate([np.zeros(st.size), np.ones(self.times.size)]), ts))
        ts = ts[order]
        kind = kind[order].astype(np.int64)
        prev = np.concatenate([[self.t0], ts[:-1]])
        da = ts - prev
        if a is not None:
            da = da * np.asarray(a(0.5 * (ts + prev)), dtype=np.float64)
        return kind, np.ascontiguousarray(da)

    def snapshots(self, sample_times: Sequence[float]) -> np.ndarray:
        """Configurations at the given times, shape ``(len(sample_times), n_sites)``."""
        kind, da = self._timeline(sample_times)
        n = self.lattice.n_sites
        snaps = np.zeros((len(sample_times), n), dtype=np.int64)
        dummy = np.zeros((1, 1))
        K.replay(self.occ0, self.src, self.dst, kind, da, np.zeros((n, 1), dtype=np.int64),
                 np.zeros(1), np.zeros(0), 1.0, True, False, 1 << 14, snaps, dummy)
        return snaps

    def integrate(self, sample_times: Sequence[float], psi: Optional[np.ndarray] = None, ell: int = 0,
                  F: Optional[np.ndarray] = None, a: Optional[Callable] = None,
                  snapshots: bool = False):
        """Per-site time integrals of ``a(t) * (psi-block average + F[block sum])``.

        ``psi`` is a table indexed by occupancy and ``F`` a table indexed by
        block sums. Integrals are cumulative from ``t0`` and reported at each
        sample time; ``a`` is evaluated at the midpoint of every holding
        interval. Returns ``I`` (and snapshots when requested).
        """
        lat = self.lattice
        n = lat.n_sites
        tot = self.total
        if psi is None:
            psi = np.zeros(tot + 2)
        psi = np.ascontiguousarray(psi[: tot + 2], dtype=np.float64)
        if psi.size < tot + 1:
            raise CapacityError("psi table shorter than the total mass")
        if psi.size < tot + 2:
            psi = np.append(psi, psi[-1])
        F = np.zeros(0) if F is None else np.ascontiguousarray(F, dtype=np.float64)
        if F.size and F.size < tot + 1:
            raise CapacityError("F table shorter than the total mass")
        win = lat.window(ell)
        kind, da = self._timeline(sample_times, a)
        ns = len(sample_times)
        snaps = np.zeros((ns if snapshots else 1, n if snapshots else 1), dtype=np.int64)
        out = np.zeros((ns, n))
        K.replay(self.occ0, self.src, self.dst, kind, da, win, psi, F, float(win.shape[1]),
                 bool(snapshots), True, 1 << 14, snaps, out)
        return (out, snaps) if snapshots else out


class ZeroRangeProcess:
    """One trajectory of the process; owns its configuration and random stream."""

    def __init__(self, spec: JumpRateSpec, lattice: Lattice, occ, seed: int = 0, replica: int = 0,
                 t: float = 0.0, record: bool = False, audit: bool = False,
                 event_budget: int = DEFAULT_EVENT_BUDGET, rng: Optional[np.random.Generator] = None):
        self.spec = spec
        self.lattice = lattice
        occ = np.ascontiguousarray(occ, dtype=np.int64).ravel().copy()
        if occ.size != lattice.n_sites or np.any(occ < 0):
            raise ValueError("configuration has the wrong shape or negative entries")
        if occ.max(initial=0) > spec.k_max:
            raise CapacityError("initial occupancy beyond the rate table")
        self.occ = occ
        self.total = int(occ.sum())
        self.g = np.ascontiguousarray(spec.table)
        self.nbr = lattice.neighbors
        self.P = 1 << max(0, (lattice.n_sites - 1).bit_length())
        self.tree = np.zeros(2 * self.P)
        K.tree_build(self.tree, self.P, self.g[occ])
        self.scale = float(lattice.N ** 2 * 2 * lattice.d)
        self.clock = np.array([float(t), np.nan])
        self.event_count = 0
        self._since_rebuild = 0
        self.rng = rng if rng is not None else rngmod.stream(seed, replica, rngmod.DYNAMICS)
        self.audit = audit
        self.event_budget = int(event_budget)
        self.record = record
        self._t_start = float(t)
        self._occ_start = occ.copy()
        self._rec_src = np.zeros(1024 if record else 0, dtype=np.int64)
        self._rec_dst = np.zeros_like(self._rec_src)
        self._rec_t = np.zeros(self._rec_src.size)
        self._rec_pos = np.zeros(1, dtype=np.int64)

    # -- state -------------------------------------------------------------

    @property
    def t(self) -> float:
        return float(self.clock[0])

    @property
    def rate_sum(self) -> float:
        return float(self.tree[1])

    @property
    def total_rate(self) -> float:
        return self.scale * self.rate_sum

    def check_rates(self, rtol: float = 1e-9) -> float:
        """Rebuild the tree from scratch; return the largest relative change."""
        fresh = np.zeros_like(self.tree)
        K.tree_build(fresh, self.P, self.g[self.occ])
        denom = np.maximum(np.abs(fresh), 1e-300)
        err = float(np.max(np.abs(fresh - self.tree) / denom * (fresh != 0)))
        self.tree[:] = fresh
        if err > rtol:
            raise ConservationError(f"rate tree drifted by {err:.3e}")
        return err

    # -- dynamics ------------------------------------------------------------

    def _advance(self, t_end: float, max_events: int):
        done = 0
        while True:
            remaining = max(0, min(max_events - done, self.event_budget - self.event_count))
            n_u = 2 * min(remaining, CHUNK_EVENTS) + 1
            saved = self.rng.bit_generator.state
            unif = self.rng.random(n_u)
            status, used, ev = K.run_chunk(
                self.occ, self.tree, self.P, self.g, self.nbr, self.scale, self.clock, float(t_end),
                unif, self._rec_src, self._rec_dst, self._rec_t, self._rec_pos, self.record,
                self.total if self.audit else -1, remaining)
            if used < n_u:
                self.rng.bit_generator.state = saved
                self.rng.random(used)
            done += ev
            self.event_count += ev
            self._since_rebuild += ev
            if self._since_rebuild >= REBUILD_EVERY:
                self.check_rates()
                self._since_rebuild = 0
            if status == K.DONE:
                break
            if status == K.RECORD_FULL:
                self._grow()
            elif status == K.CAPACITY:
                raise CapacityError("an occupancy would exceed the rate table")
            elif status == K.BROKEN:
                raise ConservationError("particle number changed or an empty site fired")
            elif status == K.MAX_EVENTS:
                if done >= max_events:
                    break
                if self.event_count >= self.event_budget:
                    raise EventBudgetExceeded(f"event budget {self.event_budget} exhausted at t={self.t}")
        if int(self.occ.sum()) != self.total:
            raise ConservationError("particle number changed")
        return done

    def _grow(self):
        m = max(1024, 2 * self._rec_src.size)
        for name in ("_rec_src", "_rec_dst", "_rec_t"):
            old = getattr(self, name)
            new = np.zeros(m, dtype=old.dtype)
            new[: old.size] = old
            setattr(self, name, new)

    def run_until(self, t_end: float) -> int:
        """Advance to time ``t_end``; returns the number of events performed."""
        if t_end < self.t:
            raise ValueError("t_end lies in the past")
        return self._advance(t_end, 1 << 62)

    def step(self) -> JumpEvent:
        """Perform a single jump. An empty lattice returns ``dt = inf``."""
        if self.rate_sum <= 0:
            return JumpEvent(-1, -1, -1, math.inf)
        t0 = self.t
        before = self.occ.copy()
        self._advance(math.inf, 1)
        diff = self.occ - before
        x = int(np.flatnonzero(diff == -1)[0])
        y = int(np.flatnonzero(diff == 1)[0])
        direction = int(np.flatnonzero(self.nbr[x] == y)[0])
        return JumpEvent(x, y, direction, self.t - t0)

    def trajectory(self) -> Trajectory:
        if not self.record:
            raise RuntimeError("trajectory recording was not enabled")
        n = int(self._rec_pos[0])
        return Trajectory(self.lattice, self.spec, self._occ_start.copy(), self._rec_src[:n].copy(),
                          self._rec_dst[:n].copy(), self._rec_t[:n].copy(), self._t_start, self.t)

    # -- persistence -------------------------------------------------------------

    def checkpoint(self) -> dict:
        tn = self.clock[1]
        return {
            "version": CHECKPOINT_VERSION,
            "N": self.lattice.N,
            "d": self.lattice.d,
            "occ": self.occ.tolist(),
            "t": float(self.clock[0]),
            "t_next": None if math.isnan(tn) else float(tn),
            "event_count": int(self.event_count),
            "rng": rngmod.state_to_json(self.rng),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.checkpoint(), fh)

    @classmethod
    def from_checkpoint(cls, state: dict, spec: JumpRateSpec, **kw) -> "ZeroRangeProcess":
        if state.get("version") != CHECKPOINT_VERSION:
            raise ValueError("unsupported checkpoint version")
        lat = Lattice(state["N"], state["d"])
        proc = cls(spec, lat, np.asarray(state["occ"], dtype=np.int64), t=state["t"],
                   rng=rngmod.state_from_json(state["rng"]), **kw)
        tn = state["t_next"]
        proc.clock[1] = np.nan if tn is None else (math.inf if tn == math.inf else tn)
        proc.event_count = int(state["event_count"])
        return proc

    @classmethod
    def load(cls, path, spec: JumpRateSpec, **kw) -> "ZeroRangeProcess":
        with open(path) as fh:
            return cls.from_checkpoint(json.load(fh), spec, **kw)


def block_average(occ, lattice: Lattice, ell: int, x: Optional[int] = None):
    """``(2ell+1)^-d`` times the occupancy sum over the cube of radius ``ell``."""
    from .empirical import block_sums
    s = block_sums(np.asarray(occ), lattice, ell)
    avg = s / (2 * ell + 1) ** lattice.d
    return avg if x is None else float(avg[x])


def double_block_average(occ, lattice: Lattice, ell: int, L: int, x: Optional[int] = None):
    from .empirical import double_block
    out = double_block(np.asarray(occ), lattice, ell, L)
    return out if x is None else float(out[x])
