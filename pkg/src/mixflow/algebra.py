"""Pointwise diffusion matrices, flux formulas and coercivity checks.

All functions broadcast over leading axes; matrices have shape ``(..., n, n)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidFluxMatrix, InvalidFractions, NotExemplary
from .mixture import SpeciesParams, check_admissible, thermo_eval, PrimitiveState

FRACTION_TOL = 1e-8
USER_MATRIX_TOL = 1e-8


@dataclass
class FluxMatrixC:
    entries: np.ndarray
    kind: str = "exemplary"


@dataclass
class ValidationReport:
    symmetry: float
    kernel: float
    range: float
    kernel_dim: int
    tol: float

    @property
    def max_violation(self) -> float:
        return max(self.symmetry, self.kernel, self.range)

    @property
    def ok(self) -> bool:
        return self.max_violation <= self.tol and self.kernel_dim == 1

    def to_dict(self):
        return {
            "symmetry": self.symmetry,
            "kernel": self.kernel,
            "range": self.range,
            "kernel_dim": self.kernel_dim,
            "tol": self.tol,
            "ok": self.ok,
        }


@dataclass
class MatrixBundle:
    C: np.ndarray
    D: np.ndarray
    R: np.ndarray
    B: np.ndarray
    eig_D: np.ndarray
    eigmin_R: np.ndarray
    eigmin_B: np.ndarray
    detB: np.ndarray


def build_C_exemplary(Y) -> FluxMatrixC:
    """Exemplary flux matrix: row k has diagonal sum_{i != k} Y_i and off-diagonal -Y_k."""
    Y = np.asarray(Y, dtype=float)
    total = Y.sum(axis=-1)
    if np.any(np.abs(total - 1.0) > FRACTION_TOL):
        raise InvalidFractions(f"mass fractions sum to {total} instead of 1")
    n = Y.shape[-1]
    C = -np.repeat(Y[..., :, None], n, axis=-1)
    idx = np.arange(n)
    C[..., idx, idx] = total[..., None] - Y
    return FluxMatrixC(entries=C, kind="exemplary")


def validate_C(C, Y, tol: float = USER_MATRIX_TOL) -> ValidationReport:
    """Report the worst violation of each structural identity of a flux matrix.

    ``kernel_dim`` counts singular values below ``tol`` relative to the
    largest one (absolute when the matrix is zero); a valid matrix has a
    one-dimensional kernel spanned by Y.
    """
    entries = C.entries if isinstance(C, FluxMatrixC) else np.asarray(C, dtype=float)
    Y = np.asarray(Y, dtype=float)
    CY = entries * Y[..., None, :]
    sym = np.max(np.abs(CY - np.swapaxes(CY, -1, -2)), initial=0.0)
    kern = np.max(np.abs(np.einsum("...kl,...l->...k", entries, Y)), initial=0.0)
    rng = np.max(np.abs(entries.sum(axis=-2)), initial=0.0)
    sv = np.linalg.svd(entries, compute_uv=False)
    scale = np.maximum(sv[..., :1], 1.0)
    dims = np.sum(sv <= tol * scale, axis=-1)
    kdim = int(np.max(dims)) if np.ndim(dims) else int(dims)
    return ValidationReport(float(sym), float(kern), float(rng), kdim, tol)


class FluxModel:
    """Flux matrix as a function of mass fractions.

    A user-supplied ``func`` is checked against the structural identities on
    every evaluation and rejected if it fails.
    """

    kind = "user-supplied-table"

    def __init__(self, func, tol: float = USER_MATRIX_TOL):
        self.func = func
        self.tol = tol

    def __call__(self, Y) -> FluxMatrixC:
        Y = np.asarray(Y, dtype=float)
        entries = np.asarray(self.func(Y), dtype=float)
        report = validate_C(entries, Y, self.tol)
        if not report.ok:
            raise InvalidFluxMatrix(report)
        return FluxMatrixC(entries=entries, kind=self.kind)


class ExemplaryFlux(FluxModel):
    kind = "exemplary"

    def __init__(self):
        super().__init__(func=None)

    def __call__(self, Y) -> FluxMatrixC:
        return build_C_exemplary(Y)


def projected_flux(S, tol: float = USER_MATRIX_TOL) -> FluxModel:
    """Flux model C(Y) = diag(Y) Q S Q with Q the orthogonal projector onto Y-perp.

    For any symmetric positive definite ``S`` this satisfies every structural
    identity, so it serves as a general tabulated alternative to the
    exemplary matrix.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidFluxMatrix("table matrix must be square")
    if not np.allclose(S, S.T, rtol=0, atol=tol):
        raise InvalidFluxMatrix("table matrix must be symmetric")
    np.linalg.cholesky(S)

    def func(Y):
        n = Y.shape[-1]
        Q = np.eye(n) - Y[..., :, None] * Y[..., None, :] / np.sum(Y * Y, axis=-1)[..., None, None]
        return Y[..., :, None] * (Q @ S @ Q)

    return FluxModel(func, tol)


def reduced_matrix(C: np.ndarray, rho_k) -> np.ndarray:
    """D_kl = C_kl / (rho Y_k) = C_kl / rho_k."""
    rho_k = np.asarray(rho_k, dtype=float)
    return C / rho_k[..., :, None]


def relaxation_matrix(rho_k, params: SpeciesParams) -> np.ndarray:
    """Time-derivative weight of the log-ratio variables, (n-1) x (n-1)."""
    rho_k = np.asarray(rho_k, dtype=float)
    mr = params.m * rho_k
    sigma = mr.sum(axis=-1)
    R = -mr[..., 1:, None] * mr[..., None, 1:] / sigma[..., None, None]
    idx = np.arange(params.n - 1)
    R[..., idx, idx] += mr[..., 1:]
    return R


def diffusion_matrix(D: np.ndarray, rho_k, params: SpeciesParams) -> np.ndarray:
    """Diffusion matrix of the log-ratio variables, rho_{k+1} rho_{l+1} D_{k+1,l+1} / p."""
    rho_k = np.asarray(rho_k, dtype=float)
    p = (rho_k / params.m).sum(axis=-1)
    r = rho_k[..., 1:]
    return r[..., :, None] * r[..., None, :] * D[..., 1:, 1:] / p[..., None, None]


def build_bundle(rho_k, params: SpeciesParams, flux_model: FluxModel | None = None) -> MatrixBundle:
    rho_k = np.asarray(rho_k, dtype=float)
    check_admissible(rho_k)
    flux_model = flux_model or ExemplaryFlux()
    rho = rho_k.sum(axis=-1)
    C = flux_model(rho_k / rho[..., None]).entries
    D = reduced_matrix(C, rho_k)
    R = relaxation_matrix(rho_k, params)
    B = diffusion_matrix(D, rho_k, params)
    D_sym = 0.5 * (D + np.swapaxes(D, -1, -2))
    return MatrixBundle(
        C=C,
        D=D,
        R=R,
        B=B,
        eig_D=np.linalg.eigvalsh(D_sym),
        eigmin_R=np.linalg.eigvalsh(R)[..., 0],
        eigmin_B=np.linalg.eigvalsh(0.5 * (B + np.swapaxes(B, -1, -2)))[..., 0],
        detB=np.linalg.det(B),
    )


def det_B_closed_form(rho_k, params: SpeciesParams, flux_model: FluxModel | None = None):
    """Determinant of the diffusion matrix for the exemplary flux matrix."""
    if flux_model is not None and not isinstance(flux_model, ExemplaryFlux):
        raise NotExemplary("closed-form determinant only holds for the exemplary matrix")
    tp = thermo_eval(PrimitiveState(rho_k), params)
    n = params.n
    rho = np.asarray(rho_k, dtype=float).sum(axis=-1)
    Ysum = tp.Y.sum(axis=-1)
    return (rho / tp.p) ** (n - 1) * np.prod(tp.Y, axis=-1) * Ysum ** (n - 1)


def relaxation_bound(rho_k, params: SpeciesParams):
    """Analytic lower bound (m_1 rho_1 / Sigma) min_{k>1} m_k rho_k on the relaxation spectrum."""
    mr = params.m * np.asarray(rho_k, dtype=float)
    return mr[..., 0] / mr.sum(axis=-1) * mr[..., 1:].min(axis=-1)


def coercivity_constants(bundle: MatrixBundle, rho_k, params: SpeciesParams):
    return relaxation_bound(rho_k, params), bundle.eigmin_R, bundle.eigmin_B


def flux_from_partial_pressures(grad_pk, C, p):
    """F_k = -(1/p) sum_l C_kl grad p_l."""
    return -np.einsum("...kl,...l->...k", C, grad_pk) / np.asarray(p)[..., None]


def flux_reduced(grad_pk, Y, p):
    """Exemplary-matrix flux -(1/p)(grad p_k - Y_k grad p)."""
    grad_p = grad_pk.sum(axis=-1)
    return -(grad_pk - Y * grad_p[..., None]) / np.asarray(p)[..., None]


def flux_entropic(grad_h, rho_k, D, p):
    """Flux written through the log-ratio gradients, valid for every species."""
    rho_k = np.asarray(rho_k, dtype=float)
    rho = rho_k.sum(axis=-1)
    m_bar = rho / p
    w = rho_k[..., None, 1:] * D[..., :, 1:] * rho_k[..., :, None]
    return -(m_bar / rho)[..., None] * np.einsum("...kl,...l->...k", w, grad_h)


def flux(grad_rho_k, rho_k, params: SpeciesParams, flux_model: FluxModel | None = None):
    """Diffusion fluxes from species-density gradients."""
    rho_k = np.asarray(rho_k, dtype=float)
    check_admissible(rho_k)
    flux_model = flux_model or ExemplaryFlux()
    tp = thermo_eval(PrimitiveState(rho_k), params)
    C = flux_model(tp.Y).entries
    return flux_from_partial_pressures(np.asarray(grad_rho_k) / params.m, C, tp.p)


def grid_coercivity(rho_k_field, params: SpeciesParams, flux_model: FluxModel | None = None) -> float:
    """Smallest eigenvalue of the diffusion matrix over all grid points."""
    return float(np.min(build_bundle(rho_k_field, params, flux_model).eigmin_B))


def grad_D_ratio(rho_k_field, grid, params: SpeciesParams, flux_model: FluxModel | None = None, q: float = 2.0):
    """max_kl ||d_y D_kl||_q / sum_j ||d_y rho_j||_q over a grid field of shape (M, n)."""
    bundle = build_bundle(rho_k_field, params, flux_model)
    dD = grid.d1(bundle.D, axis=0)
    drho = grid.d1(np.asarray(rho_k_field, dtype=float), axis=0)
    num = max(grid.lq_norm(dD[:, k, l], q) for k in range(params.n) for l in range(params.n))
    den = sum(grid.lq_norm(drho[:, j], q) for j in range(params.n))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den
