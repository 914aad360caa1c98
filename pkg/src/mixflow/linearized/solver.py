"""Implicit theta-scheme for the linear system with frozen coefficients.

Unknowns are interleaved per node as (sigma, v, theta_1..theta_{n-1}), which
keeps the matrix banded with half-bandwidth below 2(n+1).  Every row is
scaled by its dual-cell length, so the species diffusion block is symmetric.
The matrix does not change between steps and is factored once.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack

from ..errors import SingularSystem
from ..grid import Grid
from ..mixture import SpeciesParams
from .coefficients import FrozenCoefficients

BC_FORMS = ("weighted", "reduced")


@dataclass
class Trajectory:
    """Discrete trajectory on the time levels t_0..t_Nt."""

    t: np.ndarray
    sigma: np.ndarray   # (L, M)
    v: np.ndarray       # (L, M)
    theta: np.ndarray   # (L, M, n-1)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    @property
    def steps(self) -> int:
        return self.t.size - 1

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        return Trajectory(self.t, self.sigma - other.sigma, self.v - other.v, self.theta - other.theta)

    def copy(self) -> "Trajectory":
        return Trajectory(self.t.copy(), self.sigma.copy(), self.v.copy(), self.theta.copy())

    @classmethod
    def constant(cls, t, sigma, v, theta) -> "Trajectory":
        L = len(t)
        return cls(
            np.asarray(t, dtype=float),
            np.repeat(np.asarray(sigma, dtype=float)[None], L, axis=0),
            np.repeat(np.asarray(v, dtype=float)[None], L, axis=0),
            np.repeat(np.asarray(theta, dtype=float)[None], L, axis=0),
        )


@dataclass
class RHSBundle:
    """Per-step right-hand sides; step j advances level j to level j+1.

    ``f4`` holds boundary data at y=0 and y=1 with shape (Nt, 2, n-1).  In
    the ``reduced`` form it is the outward normal derivative of the
    log-ratio variables, in the ``weighted`` form the outward normal flux
    B0 d_y theta . n.
    """

    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    f4: np.ndarray
    f4_form: str = "reduced"
    terms: dict = field(default_factory=dict, repr=False)

    @property
    def steps(self) -> int:
        return self.f1.shape[0]

    @classmethod
    def zeros(cls, steps: int, M: int, n: int, f4_form: str = "reduced") -> "RHSBundle":
        return cls(
            np.zeros((steps, M)),
            np.zeros((steps, M)),
            np.zeros((steps, M, n - 1)),
            np.zeros((steps, 2, n - 1)),
            f4_form,
        )

    @classmethod
    def from_levels(cls, f1, f2, f3, f4, theta: float = 1.0, f4_form: str = "reduced") -> "RHSBundle":
        """Build per-step data from values at the time levels by theta-averaging."""
        def avg(a):
            a = np.asarray(a, dtype=float)
            return theta * a[1:] + (1.0 - theta) * a[:-1]
        return cls(avg(f1), avg(f2), avg(f3), avg(f4), f4_form)

    def boundary_flux(self, frozen: FrozenCoefficients) -> np.ndarray:
        if self.f4_form == "weighted":
            return self.f4
        if self.f4_form == "reduced":
            Bb = frozen.B0[[0, -1]]
            return np.einsum("bkl,sbl->sbk", Bb, self.f4)
        raise ValueError(f"unknown boundary form {self.f4_form!r}")


class LinearSolver:
    def __init__(self, frozen: FrozenCoefficients, grid: Grid, params: SpeciesParams,
                 dt: float, theta: float = 1.0, species_only: bool = False):
        if not 0.5 <= theta <= 1.0:
            raise ValueError("theta must lie in [0.5, 1]")
        self.frozen = frozen
        self.grid = grid
        self.params = params
        self.dt = float(dt)
        self.theta = float(theta)
        self.species_only = species_only
        self.n = params.n
        self.b = params.n + 1
        self.size = grid.M * self.b
        self.mass, self.K, self.fixed = self._assemble()
        self.A_new = (self.mass / self.dt + self.theta * self.K).tolil()
        self.A_old = (self.mass / self.dt - (1.0 - self.theta) * self.K).tolil()
        for r in self.fixed:
            self.A_new.rows[r] = [r]
            self.A_new.data[r] = [1.0]
            self.A_old.rows[r] = []
            self.A_old.data[r] = []
        self.A_new = self.A_new.tocsr()
        self.A_old = self.A_old.tocsr()
        self._factor()

    def idx(self, j, c):
        return j * self.b + c

    def _assemble(self):
        g, fr, h = self.grid, self.frozen, self.grid.h
        M, b, n = g.M, self.b, self.n
        w = g.weights
        mu_tot = self.params.total_viscosity
        rows, cols, vals = [], [], []
        mrows, mcols, mvals = [], [], []

        def add(r, c, val):
            rows.append(r)
            cols.append(c)
            vals.append(val)

        def madd(r, c, val):
            mrows.append(r)
            mcols.append(c)
            mvals.append(val)

        def div_stencil(j):
            if j == 0:
                return [(0, -1.0 / h), (1, 1.0 / h)]
            if j == M - 1:
                return [(M - 2, -1.0 / h), (M - 1, 1.0 / h)]
            return [(j - 1, -0.5 / h), (j + 1, 0.5 / h)]

        B_face = g.face_average(fr.B0, axis=0)
        fixed = []
        for j in range(M):
            rs = self.idx(j, 0)
            madd(rs, rs, w[j])
            for jj, c in div_stencil(j):
                add(rs, self.idx(jj, 1), w[j] * fr.rho0[j] * c)

            rv = self.idx(j, 1)
            if self.species_only or j in (0, M - 1):
                fixed.append(rv)
            else:
                madd(rv, rv, h * fr.rho0[j])
                add(rv, self.idx(j - 1, 1), -h * mu_tot / h**2)
                add(rv, self.idx(j, 1), 2 * h * mu_tot / h**2)
                add(rv, self.idx(j + 1, 1), -h * mu_tot / h**2)
                for jj, c in ((j - 1, -0.5), (j + 1, 0.5)):
                    add(rv, self.idx(jj, 0), fr.gamma1[j] * c)
                    for l in range(n - 1):
                        add(rv, self.idx(jj, 2 + l), fr.gamma2[j, l] * c)

            for k in range(n - 1):
                rk = self.idx(j, 2 + k)
                for l in range(n - 1):
                    madd(rk, self.idx(j, 2 + l), w[j] * fr.R0[j, k, l])
                for jj, c in div_stencil(j):
                    add(rk, self.idx(jj, 1), w[j] * fr.gamma2[j, k] * c)
                # minus the net outward flux through the dual cell
                for face, sign in ((j, 1.0), (j - 1, -1.0)):
                    if face < 0 or face > M - 2:
                        continue
                    for l in range(n - 1):
                        coef = sign * B_face[face, k, l] / h
                        add(rk, self.idx(face + 1, 2 + l), -coef)
                        add(rk, self.idx(face, 2 + l), coef)
        shape = (self.size, self.size)
        K = sp.csr_matrix((vals, (rows, cols)), shape=shape)
        mass = sp.csr_matrix((mvals, (mrows, mcols)), shape=shape)
        return mass, K, fixed

    def _factor(self):
        A = self.A_new.tocoo()
        kl = int(np.max(A.row - A.col))
        ku = int(np.max(A.col - A.row))
        ab = np.zeros((2 * kl + ku + 1, self.size))
        ab[kl + ku + A.row - A.col, A.col] = A.data
        lu, piv, info = lapack.dgbtrf(ab, kl, ku)
        if info != 0:
            raise SingularSystem(f"banded LU failed (info={info})")
        self._lu, self._piv, self._kl, self._ku = lu, piv, kl, ku

    def solve(self, rhs_vec):
        x, info = lapack.dgbtrs(self._lu, self._kl, self._ku, rhs_vec, self._piv)
        if info != 0:
            raise SingularSystem(f"banded solve failed (info={info})")
        return x

    def species_block(self) -> np.ndarray:
        """Dense species part of the step matrix (mass / dt + theta * diffusion)."""
        sel = np.array([self.idx(j, 2 + k) for j in range(self.grid.M) for k in range(self.n - 1)])
        return self.A_new[sel][:, sel].toarray()

    def check_species_spd(self) -> bool:
        try:
            np.linalg.cholesky(self.species_block())
        except np.linalg.LinAlgError:
            return False
        return True

    def pack(self, sigma, v, theta):
        U = np.empty((self.grid.M, self.b))
        U[:, 0] = sigma
        U[:, 1] = v
        U[:, 2:] = theta
        return U.reshape(-1)

    def unpack(self, U):
        U = U.reshape(self.grid.M, self.b)
        return U[:, 0], U[:, 1], U[:, 2:]

    def step_vector(self, rhs: RHSBundle, s: int, flux=None):
        """Weighted right-hand side vector of step ``s``."""
        g = self.grid
        w = g.weights
        F = np.zeros((g.M, self.b))
        F[:, 0] = w * rhs.f1[s]
        F[1:-1, 1] = g.h * rhs.f2[s, 1:-1]
        F[:, 2:] = w[:, None] * rhs.f3[s]
        if flux is None:
            flux = rhs.boundary_flux(self.frozen)
        F[0, 2:] += flux[s, 0]
        F[-1, 2:] += flux[s, 1]
        if self.species_only:
            F[:, 1] = 0.0
        else:
            F[[0, -1], 1] = 0.0
        return F.reshape(-1)

    def run(self, rhs: RHSBundle, sigma0, v0, theta0) -> Trajectory:
        steps = rhs.steps
        flux = rhs.boundary_flux(self.frozen)
        L = steps + 1
        M, n = self.grid.M, self.n
        sig = np.empty((L, M))
        vel = np.empty((L, M))
        th = np.empty((L, M, n - 1))
        v0 = np.array(v0, dtype=float)
        if self.species_only:
            v0[:] = 0.0
        U = self.pack(sigma0, v0, theta0)
        sig[0], vel[0], th[0] = self.unpack(U)
        for s in range(steps):
            U = self.solve(self.A_old @ U + self.step_vector(rhs, s, flux))
            sig[s + 1], vel[s + 1], th[s + 1] = self.unpack(U)
        return Trajectory(self.dt * np.arange(L), sig, vel, th)

    def residual(self, traj: Trajectory, rhs: RHSBundle) -> float:
        """Largest one-step correction A_new^-1 (A_new U^{s+1} - A_old U^s - F_s) over all steps."""
        flux = rhs.boundary_flux(self.frozen)
        worst = 0.0
        prev = self.pack(traj.sigma[0], traj.v[0], traj.theta[0])
        for s in range(rhs.steps):
            cur = self.pack(traj.sigma[s + 1], traj.v[s + 1], traj.theta[s + 1])
            r = self.A_new @ cur - self.A_old @ prev - self.step_vector(rhs, s, flux)
            worst = max(worst, float(np.max(np.abs(self.solve(r)))))
            prev = cur
        return worst


def solve_linear_step(frozen: FrozenCoefficients, rhs: RHSBundle, grid: Grid, params: SpeciesParams,
                      dt: float, theta: float = 1.0, initial=None, species_only: bool = False) -> Trajectory:
    """Solve the linear system over rhs.steps steps of size dt.

    ``initial`` defaults to (0, u0, h0) from the frozen coefficients.
    """
    if initial is None:
        initial = (np.zeros(grid.M), frozen.u0, frozen.h0)
    solver = LinearSolver(frozen, grid, params, dt, theta, species_only)
    return solver.run(rhs, *initial)


def discrete_energy(traj: Trajectory, frozen: FrozenCoefficients, grid: Grid) -> np.ndarray:
    """Quadratic energy per time level: weighted sigma^2, rho0 v^2 and theta.R0.theta."""
    w = grid.weights
    e_sigma = 0.5 * np.sum(w * (frozen.gamma1 / frozen.rho0) * traj.sigma**2, axis=-1)
    e_v = 0.5 * np.sum(grid.h * frozen.rho0[1:-1] * traj.v[:, 1:-1] ** 2, axis=-1)
    e_theta = 0.5 * np.einsum("j,tjk,jkl,tjl->t", w, traj.theta, frozen.R0, traj.theta)
    return e_sigma + e_v + e_theta


def boundary_flux_residual(traj: Trajectory, frozen: FrozenCoefficients, rhs: RHSBundle, grid: Grid) -> np.ndarray:
    """Per step, max |B0 d_y theta . n - prescribed flux| at the two boundaries."""
    slope = grid.boundary_slope(traj.theta[1:], axis=1)       # (2, steps, n-1)
    Bb = frozen.B0[[0, -1]]
    flux = np.einsum("bkl,bsl->sbk", Bb, slope)
    return np.max(np.abs(flux - rhs.boundary_flux(frozen)), axis=(1, 2))
