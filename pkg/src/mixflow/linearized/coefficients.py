from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..algebra import ExemplaryFlux, FluxModel, build_bundle, relaxation_bound
from ..errors import BoundsViolated
from ..mixture import PrimitiveState, SpeciesParams, check_admissible, pressure_coefficients, psi_forward

log = logging.getLogger(__name__)


@dataclass
class FrozenCoefficients:
    """Coefficients of the linear system, evaluated once at the initial state."""

    rho0_k: np.ndarray      # (M, n)
    rho0: np.ndarray        # (M,)
    sigma0: np.ndarray      # (M,) molar-weighted density
    p0: np.ndarray          # (M,)
    gamma1: np.ndarray      # (M,)
    gamma2: np.ndarray      # (M, n-1)
    R0: np.ndarray          # (M, n-1, n-1)
    B0: np.ndarray          # (M, n-1, n-1)
    D0: np.ndarray          # (M, n, n)
    h0: np.ndarray          # (M, n-1)
    u0: np.ndarray          # (M,)
    c1: float
    c2: float

    @property
    def n(self) -> int:
        return self.rho0_k.shape[-1]

    @property
    def M(self) -> int:
        return self.rho0.shape[0]


def freeze_coefficients(initial: PrimitiveState, params: SpeciesParams,
                        flux_model: FluxModel | None = None,
                        a1: float | None = None, a2: float | None = None) -> FrozenCoefficients:
    rho_k = np.asarray(initial.rho_k, dtype=float)
    check_admissible(rho_k)
    lo, hi = float(rho_k.min()), float(rho_k.max())
    if (a1 is not None and lo < a1) or (a2 is not None and hi > a2):
        raise BoundsViolated(a1, a2, lo, hi)
    flux_model = flux_model or ExemplaryFlux()
    normal = psi_forward(initial, params)
    bundle = build_bundle(rho_k, params, flux_model)
    gamma1, gamma2 = pressure_coefficients(rho_k, params)
    c1 = float(np.min(bundle.eigmin_R))
    c2 = float(np.min(bundle.eigmin_B))
    log.info("frozen coefficients: min eig R0 = %.4g (bound %.4g), min eig B0 = %.4g",
             c1, float(np.min(relaxation_bound(rho_k, params))), c2)
    u0 = np.zeros(rho_k.shape[0]) if initial.u is None else np.asarray(initial.u, dtype=float)
    return FrozenCoefficients(
        rho0_k=rho_k,
        rho0=normal.rho,
        sigma0=(params.m * rho_k).sum(axis=-1),
        p0=(rho_k / params.m).sum(axis=-1),
        gamma1=gamma1,
        gamma2=gamma2,
        R0=bundle.R,
        B0=bundle.B,
        D0=bundle.D,
        h0=normal.h,
        u0=u0,
        c1=c1,
        c2=c2,
    )
