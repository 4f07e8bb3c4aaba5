"""Discrete torus of side N in dimension 1 or 2."""
from __future__ import annotations

from functools import cached_property

import numpy as np


class Lattice:
    """Periodic lattice ``T_N^d``. Site ``x = i + N*j`` has coordinates ``(i, j)``.

    Neighbors are ordered ``+e1, -e1, +e2, -e2``.
    """

    def __init__(self, N: int, d: int = 1):
        if d not in (1, 2):
            raise ValueError("only d = 1 or 2 is supported")
        if N < 2:
            raise ValueError("N must be at least 2")
        self.N = int(N)
        self.d = int(d)
        self.n_sites = self.N ** self.d

    def __repr__(self):
        return f"Lattice(N={self.N}, d={self.d})"

    @cached_property
    def coords(self) -> np.ndarray:
        idx = np.arange(self.n_sites)
        return np.stack([(idx // self.N ** j) % self.N for j in range(self.d)], axis=1)

    @cached_property
    def positions(self) -> np.ndarray:
        """Macroscopic positions ``x/N`` with shape ``(n_sites, d)``."""
        return self.coords / self.N

    def index(self, coords: np.ndarray) -> np.ndarray:
        c = np.asarray(coords) % self.N
        if c.ndim == 1 and self.d == 1:
            return c.astype(np.int64)
        out = np.zeros(c.shape[:-1], dtype=np.int64)
        for j in range(self.d):
            out += c[..., j] * self.N ** j
        return out

    def shift(self, j: int, step: int = 1) -> np.ndarray:
        """Index of ``x + step*e_j`` for every site ``x``."""
        c = self.coords.copy()
        c[:, j] += step
        return self.index(c)

    @cached_property
    def neighbors(self) -> np.ndarray:
        cols = []
        for j in range(self.d):
            cols.append(self.shift(j, 1))
            cols.append(self.shift(j, -1))
        return np.ascontiguousarray(np.stack(cols, axis=1), dtype=np.int64)

    def window(self, ell: int) -> np.ndarray:
        """Sites of the sup-norm cube of radius ``ell`` around each site, shape ``(n, (2ell+1)^d)``."""
        if not 0 <= 2 * ell < self.N:
            raise ValueError("block radius must satisfy 0 <= ell < N/2")
        r = np.arange(-ell, ell + 1)
        offs = np.stack(np.meshgrid(*([r] * self.d), indexing="ij"), axis=-1).reshape(-1, self.d)
        c = self.coords[:, None, :] + offs[None, :, :]
        return np.ascontiguousarray(self.index(c), dtype=np.int64)

    def field(self, f) -> np.ndarray:
        """Evaluate ``f(u)`` (``f(u1, u2)`` in 2D) at the positions ``x/N``."""
        p = self.positions
        return np.asarray(f(*[p[:, j] for j in range(self.d)]), dtype=np.float64) * np.ones(self.n_sites)
