"""Picard iteration for the nonlinear Lagrangian system.

Each application of the map assembles the nonlinear right-hand sides at the
current iterate and solves the linear system with coefficients frozen at
the initial state.  The driver monitors contraction in the discrete
space-time norm and shrinks the time horizon when the iteration fails.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ..algebra import ExemplaryFlux, FluxModel, grad_D_ratio
from ..errors import BallEscape, CompatibilityError, DeltaBudgetExceeded, NoContraction
from ..grid import Grid
from ..lagrangian import DEFAULT_DELTA, FlowMapState, accumulate_flowmap
from ..linearized import (
    FrozenCoefficients,
    LevelEvaluator,
    LinearSolver,
    RHSBundle,
    Trajectory,
    assemble_rhs,
    freeze_coefficients,
)
from ..mixture import NormalState, PrimitiveState, SpeciesParams, psi_inverse
from .norms import discrete_norms, sobolev_norm

log = logging.getLogger(__name__)

BALL_FACTOR = 10.0
DIVERGENCE_PATIENCE = 3


@dataclass
class Problem:
    """Everything needed to run the fixed-point iteration."""

    params: SpeciesParams
    grid: Grid
    initial: PrimitiveState
    T: float
    dt: float
    theta: float = 1.0
    delta: float = DEFAULT_DELTA
    p: float = 2.0
    q: float = 2.0
    flux_model: FluxModel = field(default_factory=ExemplaryFlux)
    bc_form: str = "weighted"
    a1: float | None = None
    a2: float | None = None
    abs_tol: float = 1e-9
    res_tol: float = 1e-8
    max_iter: int = 50
    T_min: float = 1e-4
    compat_tol: float = 1e-8

    @property
    def steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))

    @property
    def step_size(self) -> float:
        return self.T / self.steps


@dataclass
class ContractionReport:
    T: float
    differences: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    converged: bool = False
    residual: float = float("nan")
    radius: float = float("inf")
    attempts: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.differences)

    @property
    def ratios(self) -> list:
        d = self.differences
        return [d[j + 1] / d[j] if d[j] > 0 else float("nan") for j in range(len(d) - 1)]

    def rate(self, floor: float = 0.0) -> float:
        """Geometric mean of the ratios whose numerator lies above ``floor``."""
        d = self.differences
        q = [d[j + 1] / d[j] for j in range(len(d) - 1) if d[j] > 0 and d[j + 1] > floor]
        if not q:
            return 0.0
        return float(np.exp(np.mean(np.log(q))))

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "iterations": self.iterations,
            "converged": self.converged,
            "residual": self.residual,
            "radius": self.radius,
            "differences": list(self.differences),
            "ratios": self.ratios,
            "norms": list(self.norms),
            "attempts": list(self.attempts),
            "diagnostics": list(self.diagnostics),
        }


@dataclass
class Solution:
    problem: Problem
    trajectory: Trajectory
    report: ContractionReport
    frozen: FrozenCoefficients
    flowmap: FlowMapState
    rho_k: np.ndarray
    level_diagnostics: dict

    @property
    def eta(self) -> np.ndarray:
        return self.frozen.rho0 + self.trajectory.sigma

    def mass(self) -> np.ndarray:
        """Total mass per level, integrating eta times the flow-map Jacobian."""
        return self.problem.grid.integrate(self.eta * self.flowmap.jacobian)

    def mass_error(self) -> float:
        m = self.mass()
        return float(np.max(np.abs(m - m[0])) / abs(m[0]))

    def positions(self) -> np.ndarray:
        return self.problem.grid.y + self.flowmap.displacement

    def bounds_ok(self) -> bool:
        a1, a2 = self.problem.a1, self.problem.a2
        if a1 is None or a2 is None:
            return True
        n = self.problem.params.n
        eta = self.eta
        return bool(np.all(eta >= a1) and np.all(eta <= n * a2 + a1))

    def eulerian(self):
        """Fields interpolated from the moving nodes onto the fixed grid, per level."""
        g = self.problem.grid
        x = self.positions()
        tr = self.trajectory
        L, M = tr.sigma.shape
        n = self.problem.params.n
        rho_k = np.empty((L, M, n))
        u = np.empty((L, M))
        h = np.empty((L, M, n - 1))
        for j in range(L):
            for k in range(n):
                rho_k[j, :, k] = np.interp(g.y, x[j], self.rho_k[j, :, k])
            u[j] = np.interp(g.y, x[j], tr.v[j])
            for k in range(n - 1):
                h[j, :, k] = np.interp(g.y, x[j], tr.theta[j, :, k])
        p = (rho_k / self.problem.params.m).sum(axis=-1)
        return {"t": tr.t, "x": g.y, "rho_k": rho_k, "u": u, "h": h, "p": p}


def check_compatibility(problem: Problem):
    from ..mixture import psi_forward

    u0 = problem.initial.u
    tol = problem.compat_tol
    if u0 is not None and max(abs(u0[0]), abs(u0[-1])) > tol:
        raise CompatibilityError(f"initial velocity does not vanish on the boundary (tol {tol})")
    h0 = psi_forward(problem.initial, problem.params).h
    slope = problem.grid.boundary_slope(h0, order=4, axis=0)
    if np.max(np.abs(slope)) > tol:
        raise CompatibilityError(
            f"initial log-ratio variables have nonzero normal derivative {np.max(np.abs(slope)):.3e} (tol {tol})")


class PicardMap:
    """The map from an iterate to the solution of the linear system with its right-hand sides."""

    def __init__(self, problem: Problem, frozen: FrozenCoefficients | None = None):
        self.problem = problem
        pr = problem
        self.frozen = frozen or freeze_coefficients(pr.initial, pr.params, pr.flux_model, pr.a1, pr.a2)
        self.solver = LinearSolver(self.frozen, pr.grid, pr.params, pr.step_size, pr.theta)
        if not self.solver.check_species_spd():
            log.warning("species diffusion block failed the Cholesky check")
        self.evaluator = LevelEvaluator(self.frozen, pr.params, pr.grid, pr.flux_model)
        self.t = pr.step_size * np.arange(pr.steps + 1)

    def initial_iterate(self) -> Trajectory:
        fr = self.frozen
        return Trajectory.constant(self.t, np.zeros(fr.M), fr.u0, fr.h0)

    def flowmap(self, U: Trajectory) -> FlowMapState:
        pr = self.problem
        return accumulate_flowmap(U.v, pr.step_size, pr.grid, theta=pr.theta, delta=pr.delta,
                                  derivative=pr.grid.div)

    def rhs(self, U: Trajectory, fm: FlowMapState | None = None) -> RHSBundle:
        pr = self.problem
        fm = fm or self.flowmap(U)
        rhs = assemble_rhs(U, fm, self.frozen, pr.params, pr.grid, pr.theta, evaluator=self.evaluator)
        if pr.bc_form == "weighted":
            Bb = self.frozen.B0[[0, -1]]
            rhs.f4 = np.einsum("bkl,sbl->sbk", Bb, rhs.f4)
            rhs.f4_form = "weighted"
        return rhs

    def __call__(self, U: Trajectory):
        fm = self.flowmap(U)
        rhs = self.rhs(U, fm)
        fr = self.frozen
        out = self.solver.run(rhs, np.zeros(fr.M), fr.u0, fr.h0)
        return out, self.diagnostics(U, fm)

    def diagnostics(self, U: Trajectory, fm: FlowMapState) -> dict:
        g = self.problem.grid
        return {
            "V0_sup": float(np.max(np.abs(fm.V0))),
            "delta_budget": float(fm.delta_budget[-1]),
            "sigma_H1_sup": float(np.max(sobolev_norm(U.sigma, g, 1, self.problem.q))),
        }

    def residual(self, U: Trajectory) -> float:
        return self.solver.residual(U, self.rhs(U))


def picard_map(current: Trajectory, problem: Problem, frozen: FrozenCoefficients | None = None):
    """One application of the fixed-point map; returns (new iterate, diagnostics)."""
    return PicardMap(problem, frozen)(current)


def _iterate(problem: Problem) -> Solution:
    pm = PicardMap(problem)
    report = ContractionReport(T=problem.T)
    U = pm.initial_iterate()
    rising = 0
    for j in range(problem.max_iter):
        new, diag = pm(U)
        norm = discrete_norms(new, problem.grid, problem.p, problem.q).total
        if j == 0:
            report.radius = BALL_FACTOR * norm if norm > 0 else float("inf")
        report.norms.append(norm)
        report.diagnostics.append(diag)
        if not np.isfinite(norm) or norm > report.radius:
            raise BallEscape(report.radius, norm)
        d = discrete_norms(new - U, problem.grid, problem.p, problem.q).total
        report.differences.append(d)
        log.debug("iteration %d: difference %.3e", j, d)
        U = new
        if len(report.differences) > 1 and d > report.differences[-2]:
            rising += 1
            if rising >= DIVERGENCE_PATIENCE:
                raise NoContraction(report, "difference norms kept growing")
        else:
            rising = 0
        if d < problem.abs_tol:
            report.residual = pm.residual(U)
            if report.residual < problem.res_tol:
                report.converged = True
                break
    if not report.converged:
        raise NoContraction(report, f"no convergence within {problem.max_iter} iterations")
    return _finish(problem, pm, U, report)


def _finish(problem: Problem, pm: PicardMap, U: Trajectory, report: ContractionReport) -> Solution:
    fm = pm.flowmap(U)
    eta = pm.frozen.rho0 + U.sigma
    rho_k = psi_inverse(NormalState(eta, U.theta), problem.params).rho_k
    g = problem.grid
    ratios = [grad_D_ratio(rho_k[j], g, problem.params, problem.flux_model, problem.q) for j in range(rho_k.shape[0])]
    level_diag = {
        "grad_D_ratio": ratios,
        "rho_deviation_sup": np.max(np.abs(rho_k - pm.frozen.rho0_k), axis=(1, 2)).tolist(),
        "min_species": np.min(rho_k, axis=(1, 2)).tolist(),
        "delta_budget": fm.delta_budget.tolist(),
    }
    return Solution(problem, U, report, pm.frozen, fm, rho_k, level_diag)


def run_fixed_point(problem: Problem, max_iter: int | None = None, abs_tol: float | None = None,
                    res_tol: float | None = None) -> Solution:
    """Iterate to a fixed point, halving T on failure down to ``T_min``."""
    overrides = {k: v for k, v in (("max_iter", max_iter), ("abs_tol", abs_tol), ("res_tol", res_tol)) if v is not None}
    problem = replace(problem, **overrides)
    check_compatibility(problem)
    attempts = []
    last_report = None
    while True:
        try:
            sol = _iterate(problem)
            sol.report.attempts = attempts
            return sol
        except (BallEscape, NoContraction, DeltaBudgetExceeded) as exc:
            attempts.append({"T": problem.T, "reason": type(exc).__name__, "detail": str(exc)})
            last_report = getattr(exc, "report", last_report)
            log.info("T=%.6g failed (%s); halving", problem.T, type(exc).__name__)
            T_new = problem.T / 2
            if T_new < problem.T_min:
                report = last_report or ContractionReport(T=problem.T)
                report.attempts = attempts
                raise NoContraction(report, f"no contraction down to T_min={problem.T_min}") from exc
            problem = replace(problem, T=T_new, dt=min(problem.dt, T_new / 4))
