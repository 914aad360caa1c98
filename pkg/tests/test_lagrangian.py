import numpy as np
import pytest

from mixflow.errors import DeltaBudgetExceeded
from mixflow.grid import Grid
from mixflow.lagrangian import (
    FlowLevel,
    accumulate_flowmap,
    assemble_remainders,
    correction_derivative,
    correction_matrix,
    divgrad_remainder,
    laplacian_remainder,
    transformed_divgrad,
    transformed_laplacian,
)
from mixflow.mixture import PrimitiveState, SpeciesParams, psi_forward


def _state(g, n=3):
    params = SpeciesParams([1.0, 2.0, 3.0][:n], mu=0.8, nu=0.2)
    rho_k = np.stack([1 + 0.1 * k + 0.05 * np.cos(np.pi * (k + 1) * g.y) for k in range(n)], axis=-1)
    normal = psi_forward(PrimitiveState(rho_k), params)
    return params, normal.rho, normal.h


def test_zero_velocity_history():
    g = Grid(32)
    fm = accumulate_flowmap(np.zeros((6, g.M)), 0.01, g)
    assert np.all(fm.kv == 0) and np.all(fm.V0 == 0) and np.all(fm.k2 == 0)
    np.testing.assert_array_equal(fm.jacobian, 1.0)


def test_constant_gradient_history():
    g = Grid(32)
    grad, dt, L = 0.7, 0.01, 11
    v = np.tile(grad * g.y, (L, 1))
    fm = accumulate_flowmap(v, dt, g)
    t = fm.t[:, None]
    np.testing.assert_allclose(fm.kv, t * grad * np.ones(g.M), rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(fm.V0, -t * grad / (1 + t * grad) * np.ones(g.M), rtol=1e-13, atol=1e-15)
    assert np.max(np.abs((1 + fm.kv) * (1 + fm.V0) - 1)) < 1e-14


@pytest.mark.parametrize("d", [1, 2, 3])
def test_correction_matrix_is_inverse(d):
    rng = np.random.default_rng(d)
    k = rng.uniform(-0.1 / d, 0.1 / d, (50, d, d))
    V = correction_matrix(k)
    eye = np.eye(d)
    assert np.max(np.abs(np.einsum("sij,sjk->sik", eye + k, eye + V) - eye)) < 1e-12
    np.testing.assert_array_equal(correction_matrix(np.zeros((d, d))), 0.0)


def test_correction_derivative_finite_difference():
    rng = np.random.default_rng(0)
    k = rng.uniform(-0.05, 0.05, (3, 3))
    dV = correction_derivative(k)
    eps = 1e-6
    for a in range(3):
        for b in range(3):
            e = np.zeros((3, 3))
            e[a, b] = eps
            fd = (correction_matrix(k + e) - correction_matrix(k - e)) / (2 * eps)
            np.testing.assert_allclose(dV[:, :, a, b], fd, atol=1e-9)


def _warped(g, s):
    """Flow map x = y + s*(1 - cos(pi y))/pi**2 at frozen time; returns level and x(y)."""
    x = g.y + s * (1 - np.cos(np.pi * g.y)) / np.pi**2
    kv = s * np.sin(np.pi * g.y) / np.pi
    k2 = s * np.cos(np.pi * g.y)
    return FlowLevel(kv, k2), x


def test_dilation_oracle_order():
    s = 0.08
    errs_lap, errs_dg = [], []
    for N in (32, 64, 128, 256):
        g = Grid(N)
        level = FlowLevel(np.full(g.M, s), np.zeros(g.M))
        f = np.sin(2.3 * g.y) + g.y**4
        exact = (-2.3**2 * np.sin(2.3 * g.y) + 12 * g.y**2) / (1 + s) ** 2
        errs_lap.append(np.max(np.abs(transformed_laplacian(f, level, g) - exact)))
        errs_dg.append(np.max(np.abs(transformed_divgrad(f, level, g) - exact)))
    for errs in (errs_lap, errs_dg):
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders >= 1.9), orders


def test_warped_map_chain_rule_oracle():
    """Non-affine map: compare against f(x) differentiated twice in x, evaluated at x(y)."""
    s = 0.5
    errs = []
    for N in (32, 64, 128, 256):
        g = Grid(N)
        level, x = _warped(g, s)
        f = np.exp(0.7 * x) * np.cos(1.3 * x)
        fxx = np.exp(0.7 * x) * ((0.49 - 1.69) * np.cos(1.3 * x) - 2 * 0.7 * 1.3 * np.sin(1.3 * x))
        errs.append(np.max(np.abs(transformed_laplacian(f, level, g) - fxx)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9), orders


def test_randomized_trig_fields_order():
    rng = np.random.default_rng(42)
    for _ in range(20):
        a = rng.normal(size=4)
        s = rng.uniform(-0.1, 0.1)

        def f_of(x):
            return sum(a[j] * np.cos((j + 1) * np.pi * x) for j in range(4))

        def fxx_of(x):
            return sum(-a[j] * ((j + 1) * np.pi) ** 2 * np.cos((j + 1) * np.pi * x) for j in range(4))

        errs = []
        for N in (128, 256, 512):
            g = Grid(N)
            x = (1 + s) * g.y
            level = FlowLevel(np.full(g.M, s), np.zeros(g.M))
            errs.append(np.max(np.abs(transformed_laplacian(f_of(x), level, g) - fxx_of(x))))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders >= 1.9), orders


def test_quadratic_exact_under_affine_map():
    g = Grid(20)
    s, c = 0.07, 0.3
    x = (1 + s) * g.y + c
    f = 2.0 - 3.0 * x + 1.5 * x**2
    level = FlowLevel(np.full(g.M, s), np.zeros(g.M))
    np.testing.assert_allclose(transformed_laplacian(f, level, g), 3.0, rtol=0, atol=1e-9)
    np.testing.assert_allclose(transformed_divgrad(f, level, g), 3.0, rtol=0, atol=1e-9)


def test_remainders_vanish_termwise_without_motion():
    g = Grid(24)
    level = FlowLevel(np.zeros(g.M), np.zeros(g.M))
    f = np.cos(3 * g.y)
    for parts in (laplacian_remainder(f, level, g), divgrad_remainder(f, level, g)):
        for part in parts:
            assert np.all(part == 0)
    np.testing.assert_array_equal(transformed_laplacian(f, level, g), g.d2(f))


def test_assemble_remainders_zero_velocity():
    g = Grid(32)
    params, eta, theta = _state(g)
    fm = accumulate_flowmap(np.zeros((4, g.M)), 0.01, g)
    v = np.zeros(g.M)
    for j in range(4):
        rem = assemble_remainders(eta, v, theta, fm.level(j), params, g)
        total = sum(np.abs(r).sum() for r in (rem.R1, rem.R2, rem.R3, rem.R4))
        assert total == 0.0


def test_R1_constant_gradient():
    g = Grid(32)
    params, eta, theta = _state(g)
    grad, dt, L = 0.5, 0.02, 6
    v = grad * g.y
    fm = accumulate_flowmap(np.tile(v, (L, 1)), dt, g)
    for j in range(L):
        t = fm.t[j]
        rem = assemble_remainders(eta, v, theta, fm.level(j), params, g)
        np.testing.assert_allclose(rem.R1, eta * t * grad**2 / (1 + t * grad), rtol=1e-12, atol=1e-15)


def test_budget_monotone_and_first_crossing():
    g = Grid(32)
    dt, L = 0.01, 40
    v = np.tile(0.5 * np.sin(np.pi * g.y), (L, 1))
    fm = accumulate_flowmap(v, dt, g, delta=10.0)
    assert np.all(np.diff(fm.delta_budget) >= 0)
    crossing = int(np.nonzero(fm.delta_budget > 0.1)[0][0])
    with pytest.raises(DeltaBudgetExceeded) as err:
        accumulate_flowmap(v, dt, g, delta=0.1)
    assert err.value.t == pytest.approx(fm.t[crossing])
    assert err.value.budget > 0.1 >= fm.delta_budget[crossing - 1]


def test_material_derivative_identity():
    """d/dt f(X(t,y), t) equals f_t + v f_x along the accumulated trajectories."""

    def f(x, t):
        return np.sin(2 * x + t)

    def ft(x, t):
        return np.cos(2 * x + t)

    def fx(x, t):
        return 2 * np.cos(2 * x + t)

    g = Grid(32)
    errs = []
    for L in (41, 81, 161):
        dt = 0.2 / (L - 1)
        t = dt * np.arange(L)
        v = 0.1 * np.sin(np.pi * g.y)[None, :] * np.cos(3 * t)[:, None]
        fm = accumulate_flowmap(v, dt, g, delta=1.0)
        X = g.y + fm.displacement
        lagr = f(X, t[:, None])
        mid = slice(1, -1)
        lhs = (lagr[2:] - lagr[:-2]) / (2 * dt)
        rhs = ft(X[mid], t[mid, None]) + v[mid] * fx(X[mid], t[mid, None])
        errs.append(np.max(np.abs(lhs - rhs)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8), orders
