"""Independent reference implementations used as test oracles."""
from __future__ import annotations

import numpy as np
from scipy.optimize import root


def single_fluid_lagrangian(eta0, v0, mass, viscosity, T, dt, N, theta=1.0):
    """Single-species isothermal compressible flow in Lagrangian coordinates.

    Solves the discrete equations directly in physical form with Newton's
    method per step: eta (1 + k) is constant in time and

        eta^th dv/dt - visc [(1+V)^2 v'' + (1+V) V' K2 v']^th + (1/mass) [(1+V) eta']^th = 0

    with V = -k/(1+k), V' = -1/(1+k)^2, k and K2 the time integrals of v'
    and v''.  Shares no code with the package.
    """
    h = 1.0 / (N + 1)
    M = N + 2
    steps = int(round(T / dt))

    def div(v):
        out = np.empty(M)
        out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
        out[0] = (v[1] - v[0]) / h
        out[-1] = (v[-1] - v[-2]) / h
        return out

    def d1(f):
        return np.gradient(f, h, edge_order=2)

    def d2(f):
        out = np.empty(M)
        out[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h**2
        out[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / h**2
        out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / h**2
        return out

    def forces(eta, v, k, K2):
        V = -k / (1 + k)
        dV = -1 / (1 + k) ** 2
        visc = viscosity * ((1 + V) ** 2 * d2(v) + (1 + V) * dV * K2 * d1(v))
        press = (1 + V) * d1(eta) / mass
        return visc, press

    eta = np.array(eta0, dtype=float)
    v = np.array(v0, dtype=float)
    k = np.zeros(M)
    K2 = np.zeros(M)
    etas, vs = [eta.copy()], [v.copy()]
    for _ in range(steps):
        visc_old, press_old = forces(eta, v, k, K2)

        def unpack(x):
            vn = np.zeros(M)
            vn[1:-1] = x
            kn = k + dt * (theta * div(vn) + (1 - theta) * div(v))
            K2n = K2 + dt * (theta * d2(vn) + (1 - theta) * d2(v))
            etan = eta * (1 + k) / (1 + kn)
            return vn, kn, K2n, etan

        def residual(x):
            vn, kn, K2n, etan = unpack(x)
            visc_new, press_new = forces(etan, vn, kn, K2n)
            eta_th = theta * etan + (1 - theta) * eta
            r = (eta_th * (vn - v) / dt
                 - (theta * visc_new + (1 - theta) * visc_old)
                 + (theta * press_new + (1 - theta) * press_old))
            return r[1:-1]

        sol = root(residual, v[1:-1], method="hybr", tol=1e-14)
        if not sol.success and np.max(np.abs(residual(sol.x))) > 1e-10:
            raise RuntimeError(sol.message)
        v, k, K2, eta = unpack(sol.x)
        etas.append(eta.copy())
        vs.append(v.copy())
    return np.array(etas), np.array(vs)
