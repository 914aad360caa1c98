"""Species-state algebra for an isothermal gas mixture.

Arrays carry the species index on the last axis, so a single state is a
vector of length ``n`` and a grid field has shape ``(..., M, n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameters, NoConvergence, NonPositiveDensity

DENSITY_FLOOR = 1e-12
ROOT_RTOL = 1e-13
ROOT_MAXITER = 100


@dataclass(frozen=True)
class SpeciesParams:
    """Molar masses and viscosities of the mixture."""

    m: np.ndarray
    mu: float = 1.0
    nu: float = 0.0

    def __post_init__(self):
        m = np.array(self.m, dtype=float).reshape(-1)
        m.setflags(write=False)
        object.__setattr__(self, "m", m)
        if m.size < 2:
            raise InvalidParameters("at least two species are required")
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise InvalidParameters("molar masses must be positive")
        if not self.mu > 0:
            raise InvalidParameters("shear viscosity mu must be positive")
        if not 2 * self.mu + self.nu > 0:
            raise InvalidParameters("2*mu + nu must be positive")

    @property
    def n(self) -> int:
        return self.m.size

    @property
    def total_viscosity(self) -> float:
        """Coefficient of the velocity diffusion in one dimension."""
        return 2 * self.mu + self.nu

    def __eq__(self, other):
        if not isinstance(other, SpeciesParams):
            return NotImplemented
        return np.array_equal(self.m, other.m) and self.mu == other.mu and self.nu == other.nu

    def __hash__(self):
        return hash((tuple(self.m), self.mu, self.nu))


@dataclass
class PrimitiveState:
    rho_k: np.ndarray
    u: np.ndarray | None = None

    def __post_init__(self):
        self.rho_k = np.asarray(self.rho_k, dtype=float)
        if self.u is not None:
            self.u = np.asarray(self.u, dtype=float)

    @property
    def rho(self) -> np.ndarray:
        return self.rho_k.sum(axis=-1)


@dataclass
class NormalState:
    rho: np.ndarray
    h: np.ndarray
    u: np.ndarray | None = None

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        if self.u is not None:
            self.u = np.asarray(self.u, dtype=float)


@dataclass
class ThermoPoint:
    p: np.ndarray
    p_k: np.ndarray
    Y: np.ndarray
    Sigma_rho: np.ndarray
    m_bar: np.ndarray


@dataclass
class BoundReport:
    floor: float
    species_floors: np.ndarray
    violations: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return not bool(np.any(self.violations))


def check_admissible(rho_k, floor=DENSITY_FLOOR):
    """Raise NonPositiveDensity for the first species density below ``floor``."""
    rho_k = np.asarray(rho_k, dtype=float)
    bad = ~(rho_k >= floor)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise NonPositiveDensity(int(idx[-1]) + 1, tuple(int(i) for i in idx[:-1]), float(rho_k[tuple(idx)]))


def psi_forward(state: PrimitiveState, params: SpeciesParams) -> NormalState:
    """Map species densities to total density and log-ratio variables."""
    rho_k = state.rho_k
    check_admissible(rho_k)
    m = params.m
    logs = np.log(rho_k)
    h = logs[..., 1:] / m[1:] - logs[..., :1] / m[0]
    return NormalState(rho=rho_k.sum(axis=-1), h=h, u=None if state.u is None else state.u.copy())


def _species_from_log_rho1(s, h, m):
    """Densities for given log(rho_1) and log-ratio variables."""
    rest = np.exp(m[1:] * h + (m[1:] / m[0]) * s[..., None])
    return np.concatenate([np.exp(s)[..., None], rest], axis=-1)


def psi_inverse(normal: NormalState, params: SpeciesParams) -> PrimitiveState:
    """Recover species densities from (rho, h) by a monotone scalar root solve.

    The unknown is s = log(rho_1).  Every density is exp(a_k + b_k s) with
    b_k > 0, so the total is convex and increasing in s and Newton started
    from an upper bracket converges monotonically.  A bisection step is used
    whenever Newton would leave the bracket.
    """
    rho = np.asarray(normal.rho, dtype=float)
    h = np.asarray(normal.h, dtype=float)
    m = params.m
    n = params.n
    if h.shape[-1] != n - 1:
        raise InvalidParameters(f"expected {n - 1} log-ratio variables, got {h.shape[-1]}")
    if np.any(~(rho > 0)):
        idx = np.argwhere(~(rho > 0))[0]
        raise NonPositiveDensity(0, tuple(int(i) for i in idx), float(rho[tuple(idx)]))
    rho_b, h_b = np.broadcast_arrays(rho[..., None], h)
    rho_b = rho_b[..., 0]

    a = np.concatenate([np.zeros(rho_b.shape + (1,)), m[1:] * h_b], axis=-1)
    b = np.concatenate([[1.0], m[1:] / m[0]])
    log_rho = np.log(rho_b)[..., None]
    s_hi = np.min((log_rho - a) / b, axis=-1)
    s_lo = np.min((log_rho - np.log(n) - a) / b, axis=-1)
    s = s_hi.copy()
    for _ in range(ROOT_MAXITER):
        terms = np.exp(a + b * s[..., None])
        g = terms.sum(axis=-1) - rho_b
        done = np.abs(g) <= ROOT_RTOL * rho_b
        if np.all(done):
            break
        dg = (b * terms).sum(axis=-1)
        over = g > 0
        s_hi = np.where(over, s, s_hi)
        s_lo = np.where(over, s_lo, s)
        step = s - g / dg
        inside = (step > s_lo) & (step < s_hi)
        s = np.where(done, s, np.where(inside, step, 0.5 * (s_lo + s_hi)))
    else:
        terms = np.exp(a + b * s[..., None])
        g = terms.sum(axis=-1) - rho_b
        bad = np.abs(g) > ROOT_RTOL * rho_b
        if np.any(bad):
            idx = np.argwhere(bad)[0]
            raise NoConvergence(tuple(int(i) for i in idx), float(np.abs(g[tuple(idx)])))
    rho_k = _species_from_log_rho1(s, h_b, m)
    u = None if normal.u is None else np.array(normal.u, dtype=float)
    return PrimitiveState(rho_k=rho_k, u=u)


def thermo_eval(state: PrimitiveState, params: SpeciesParams) -> ThermoPoint:
    rho_k = state.rho_k
    check_admissible(rho_k)
    m = params.m
    p_k = rho_k / m
    p = p_k.sum(axis=-1)
    rho = rho_k.sum(axis=-1)
    return ThermoPoint(
        p=p,
        p_k=p_k,
        Y=rho_k / rho[..., None],
        Sigma_rho=(m * rho_k).sum(axis=-1),
        m_bar=rho / p,
    )


def pressure_coefficients(rho_k, params: SpeciesParams):
    """Coefficients of grad p in terms of grad rho and grad h.

    Returns ``(rho / Sigma, A)`` where ``A[..., k] = rho_{k+1} - m_{k+1} rho_{k+1} rho / Sigma``
    multiplies the gradient of ``h_k``.
    """
    rho_k = np.asarray(rho_k, dtype=float)
    m = params.m
    rho = rho_k.sum(axis=-1)
    sigma = (m * rho_k).sum(axis=-1)
    A = rho_k[..., 1:] - m[1:] * rho_k[..., 1:] * (rho / sigma)[..., None]
    return rho / sigma, A


def change_of_variables_jacobian(rho_k, params: SpeciesParams) -> np.ndarray:
    """Jacobian of (rho, h) with respect to (rho_1, ..., rho_n)."""
    rho_k = np.asarray(rho_k, dtype=float)
    m = params.m
    n = params.n
    J = np.zeros(rho_k.shape + (n,))
    J[..., 0, :] = 1.0
    J[..., 1:, 0] = (-1.0 / (m[0] * rho_k[..., 0]))[..., None]
    idx = np.arange(1, n)
    J[..., idx, idx] = 1.0 / (m[1:] * rho_k[..., 1:])
    return J


def change_of_variables_jacobian_inv(rho_k, params: SpeciesParams) -> np.ndarray:
    """Closed-form inverse of :func:`change_of_variables_jacobian`."""
    rho_k = np.asarray(rho_k, dtype=float)
    m = params.m
    n = params.n
    mr = m * rho_k
    sigma = mr.sum(axis=-1)[..., None]
    Jinv = np.empty(rho_k.shape + (n,))
    Jinv[..., :, 0] = mr / sigma
    Jinv[..., 0, 1:] = -mr[..., :1] * mr[..., 1:] / sigma
    Jinv[..., 1:, 1:] = -mr[..., 1:, None] * mr[..., None, 1:] / sigma[..., None]
    idx = np.arange(1, n)
    Jinv[..., idx, idx] += mr[..., 1:]
    return Jinv


def check_lower_bound(normal: NormalState, h_bound: float, rho_floor: float,
                      params: SpeciesParams) -> BoundReport:
    """Certified species floor for states with |h_k| <= h_bound and rho >= rho_floor.

    Species j is smallest when the total sits at ``rho_floor``, its own
    log-ratio is pushed to the bound that shrinks it and every other
    log-ratio is pushed the other way; the floor is read off that extremal
    state.
    """
    n = params.n
    floors = np.empty(n)
    for j in range(n):
        h = np.full(n - 1, float(h_bound))
        if j > 0:
            h[j - 1] = -float(h_bound)
        extremal = psi_inverse(NormalState(rho=np.array(float(rho_floor)), h=h), params)
        floors[j] = extremal.rho_k[j]
    rho = np.asarray(normal.rho, dtype=float)
    h = np.asarray(normal.h, dtype=float)
    violations = (rho < rho_floor) | np.any(~(np.abs(h) <= h_bound), axis=-1)
    return BoundReport(floor=float(floors.min()), species_floors=floors, violations=violations)
