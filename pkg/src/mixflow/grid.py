"""Uniform 1-D grid on [0, 1] and the finite-difference operators used throughout.

Nodes are y_i = i h, i = 0..N+1 with h = 1/(N+1); the N interior nodes
carry the velocity unknowns, every node carries the scalar unknowns.
Operators act along a chosen axis (default: the last one).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


def _front(f, axis):
    return np.moveaxis(np.asarray(f, dtype=float), axis, 0)


def _back(f, axis):
    return np.moveaxis(f, 0, axis)


@dataclass(frozen=True)
class Grid:
    N: int

    def __post_init__(self):
        if self.N < 3:
            raise ValueError("the grid needs at least three interior nodes")

    @property
    def M(self) -> int:
        return self.N + 2

    @property
    def h(self) -> float:
        return 1.0 / (self.N + 1)

    @cached_property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.M)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights, which are also the dual-cell lengths."""
        w = np.full(self.M, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    @property
    def normals(self):
        return np.array([-1.0, 1.0])

    def integrate(self, f, axis=-1):
        f = _front(f, axis)
        return np.tensordot(self.weights, f, axes=(0, 0))

    def lq_norm(self, f, q=2.0, axis=-1):
        return self.integrate(np.abs(f) ** q, axis=axis) ** (1.0 / q)

    def d1(self, f, axis=-1):
        """Second-order first derivative at every node (one-sided at the ends)."""
        return np.gradient(np.asarray(f, dtype=float), self.h, axis=axis, edge_order=2)

    def d2(self, f, axis=-1):
        """Second-order second derivative at every node (one-sided at the ends)."""
        g = _front(f, axis)
        out = np.empty_like(g)
        h2 = self.h ** 2
        out[1:-1] = (g[2:] - 2 * g[1:-1] + g[:-2]) / h2
        out[0] = (2 * g[0] - 5 * g[1] + 4 * g[2] - g[3]) / h2
        out[-1] = (2 * g[-1] - 5 * g[-2] + 4 * g[-3] - g[-4]) / h2
        return _back(out, axis)

    def div(self, v, axis=-1):
        """Divergence at every node; the negative adjoint of :meth:`grad`.

        Central in the interior and one-sided at the two boundary nodes, so
        that sum(w * s * div(v)) = -sum(h * v * grad(s)) when v vanishes on
        the boundary.
        """
        g = _front(v, axis)
        out = np.empty_like(g)
        out[1:-1] = (g[2:] - g[:-2]) / (2 * self.h)
        out[0] = (g[1] - g[0]) / self.h
        out[-1] = (g[-1] - g[-2]) / self.h
        return _back(out, axis)

    def grad(self, s, axis=-1):
        """Central gradient at interior nodes; zero at the boundary nodes."""
        g = _front(s, axis)
        out = np.zeros_like(g)
        out[1:-1] = (g[2:] - g[:-2]) / (2 * self.h)
        return _back(out, axis)

    def fv_div(self, flux_faces, boundary_flux, axis=-1):
        """Finite-volume divergence from face fluxes and the two boundary fluxes.

        ``flux_faces`` holds the M-1 fluxes at the cell faces between nodes;
        ``boundary_flux`` holds the flux at y=0 and y=1 (first axis of size 2).
        Dual cells have length ``weights``.
        """
        F = _front(flux_faces, axis)
        Fb = np.asarray(boundary_flux, dtype=float)
        M = F.shape[0] + 1
        out = np.empty((M,) + F.shape[1:])
        out[1:-1] = F[1:] - F[:-1]
        out[0] = F[0] - Fb[0]
        out[-1] = Fb[1] - F[-1]
        out /= self.weights.reshape((M,) + (1,) * (out.ndim - 1))
        return _back(out, axis)

    def face_average(self, f, axis=-1):
        g = _front(f, axis)
        return _back(0.5 * (g[1:] + g[:-1]), axis)

    def face_diff(self, f, axis=-1):
        g = _front(f, axis)
        return _back((g[1:] - g[:-1]) / self.h, axis)

    def boundary_slope(self, f, order=2, axis=-1):
        """One-sided outward-normal derivative at y=0 and y=1 (first axis of size 2)."""
        g = _front(f, axis)
        h = self.h
        if order == 2:
            c = np.array([-3.0, 4.0, -1.0]) / (2 * h)
        elif order == 4:
            c = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12 * h)
        else:
            raise ValueError("order must be 2 or 4")
        k = c.size
        left = np.tensordot(c, g[:k], axes=(0, 0))
        right = np.tensordot(c, g[::-1][:k], axes=(0, 0))
        # outward normal is -1 at y=0; the reversed stencil already points outward at y=1
        return np.stack([-left, -right])
