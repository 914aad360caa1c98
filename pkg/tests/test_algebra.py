import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixflow.algebra import (
    ExemplaryFlux,
    FluxModel,
    build_C_exemplary,
    build_bundle,
    coercivity_constants,
    det_B_closed_form,
    flux,
    flux_entropic,
    flux_from_partial_pressures,
    flux_reduced,
    grad_D_ratio,
    grid_coercivity,
    projected_flux,
    relaxation_bound,
    validate_C,
)
from mixflow.errors import InvalidFluxMatrix, InvalidFractions, NonPositiveDensity, NotExemplary
from mixflow.grid import Grid
from mixflow.mixture import PrimitiveState, SpeciesParams, change_of_variables_jacobian, thermo_eval


def test_exemplary_examples():
    C = build_C_exemplary([0.5, 0.5]).entries
    np.testing.assert_array_equal(C, [[0.5, -0.5], [-0.5, 0.5]])
    np.testing.assert_array_equal(C @ [0.5, 0.5], [0.0, 0.0])

    third = 1 / 3
    C = build_C_exemplary([third] * 3).entries
    np.testing.assert_allclose(np.diag(C), 2 * third, rtol=1e-15)
    off = C[~np.eye(3, dtype=bool)]
    np.testing.assert_allclose(off, -third, rtol=1e-15)
    np.testing.assert_allclose(C.sum(axis=1), 0.0, atol=1e-15)


def test_exemplary_rejects_bad_fractions():
    with pytest.raises(InvalidFractions):
        build_C_exemplary([0.5, 0.6])


@settings(max_examples=100, deadline=None)
@given(n=st.integers(2, 6), seed=st.integers(0, 2**32 - 1))
def test_exemplary_identities_property(n, seed):
    Y = np.random.default_rng(seed).dirichlet(np.ones(n))
    rep = validate_C(build_C_exemplary(Y), Y, tol=1e-14)
    assert rep.ok, rep


def test_validate_detects_perturbation():
    Y = np.array([0.2, 0.3, 0.5])
    C = build_C_exemplary(Y).entries.copy()
    C[0, 1] += 1e-3
    rep = validate_C(C, Y)
    assert rep.max_violation == pytest.approx(1e-3, rel=1e-6)
    assert not rep.ok


def test_validate_zero_matrix_kernel_too_large():
    Y = np.array([0.2, 0.3, 0.5])
    rep = validate_C(np.zeros((3, 3)), Y)
    assert rep.kernel == 0.0
    assert rep.kernel_dim == 3
    assert not rep.ok


def test_user_flux_validation():
    good = projected_flux(np.diag([1.0, 2.0, 3.0]))
    Y = np.array([0.2, 0.3, 0.5])
    assert validate_C(good(Y), Y, tol=1e-12).ok

    def bad(Y):
        C = build_C_exemplary(Y).entries.copy()
        C[..., 0, 0] += 1e-3
        return C

    with pytest.raises(InvalidFluxMatrix):
        FluxModel(bad)(Y)


def test_projected_flux_rejects_non_spd():
    with pytest.raises(np.linalg.LinAlgError):
        projected_flux(np.diag([1.0, -1.0]))


def test_bundle_two_species_example():
    params = SpeciesParams([1, 1])
    b = build_bundle(np.array([1.0, 1.0]), params)
    np.testing.assert_allclose(b.R, [[0.5]], rtol=1e-15)
    np.testing.assert_allclose(b.B, [[0.25]], rtol=1e-15)
    c1a, c1n, c2n = coercivity_constants(b, np.array([1.0, 1.0]), params)
    assert c1a == pytest.approx(0.5) and c1n == pytest.approx(0.5) and c2n == pytest.approx(0.25)
    assert det_B_closed_form(np.array([1.0, 1.0]), params) == pytest.approx(0.25, rel=1e-15)
    assert b.detB == pytest.approx(0.25, rel=1e-14)


def test_det_closed_form_three_species():
    params = SpeciesParams([1, 1, 1])
    rho = np.ones(3)
    assert det_B_closed_form(rho, params) == pytest.approx(1 / 27, rel=1e-14)
    assert build_bundle(rho, params).detB == pytest.approx(1 / 27, rel=1e-12)


def test_det_degenerates_as_species_vanishes():
    params = SpeciesParams([1, 2])
    y1 = np.linspace(0.001, 0.5, 60)
    rho = np.column_stack([y1, 1 - y1])
    det = det_B_closed_form(rho, params)
    assert np.all(det > 0)
    assert np.all(np.diff(det[:10]) > 0)
    assert det[0] < 0.01 * det.max()


def test_det_closed_form_requires_exemplary():
    with pytest.raises(NotExemplary):
        det_B_closed_form(np.ones(3), SpeciesParams([1, 1, 1]), projected_flux(np.eye(3)))


def test_bundle_rejects_nonpositive():
    with pytest.raises(NonPositiveDensity):
        build_bundle(np.array([1.0, 0.0]), SpeciesParams([1, 1]))


@settings(max_examples=100, deadline=None)
@given(n=st.sampled_from([2, 3, 5]), seed=st.integers(0, 2**32 - 1))
def test_bundle_properties(n, seed):
    rng = np.random.default_rng(seed)
    params = SpeciesParams(rng.uniform(0.5, 5, n))
    rho_k = rng.uniform(0.1, 10, (20, n))
    Y = rho_k / rho_k.sum(-1, keepdims=True)
    b = build_bundle(rho_k, params)
    D = b.D
    assert np.max(np.abs(D - np.swapaxes(D, -1, -2))) < 1e-12
    assert np.max(np.abs(np.einsum("skl,sl->sk", D, Y))) < 1e-12
    assert np.all(b.eig_D[:, 0] > -1e-10)
    assert np.all(b.eig_D[:, 1] > 0)
    np.testing.assert_allclose(b.R, np.swapaxes(b.R, -1, -2), rtol=0, atol=1e-12)
    assert np.all(b.eigmin_R >= relaxation_bound(rho_k, params) - 1e-10)
    assert np.all(b.eigmin_B > 0)
    np.testing.assert_allclose(b.detB, det_B_closed_form(rho_k, params), rtol=1e-10)


def test_diffusion_matrix_alternative_form():
    """B_kl = (rho/p) Y_{l+1} C_{k+1,l+1} equals the defining form."""
    rng = np.random.default_rng(2)
    params = SpeciesParams([1.0, 3.0, 2.0, 0.7])
    rho_k = rng.uniform(0.1, 10, (50, 4))
    b = build_bundle(rho_k, params)
    tp = thermo_eval(PrimitiveState(rho_k), params)
    rho = rho_k.sum(-1)
    alt = (rho / tp.p)[:, None, None] * tp.Y[:, None, 1:] * b.C[:, 1:, 1:]
    np.testing.assert_allclose(b.B, alt, rtol=1e-12, atol=1e-14)


def test_general_flux_matrix_is_coercive_on_grid():
    params = SpeciesParams([1.0, 2.0, 3.0])
    g = Grid(40)
    rho_k = np.stack([1 + 0.3 * np.cos(np.pi * g.y), 0.8 + 0 * g.y, 0.6 + 0.2 * np.sin(np.pi * g.y)], axis=-1)
    model = projected_flux(np.array([[2.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 1.5]]))
    assert grid_coercivity(rho_k, params, model) > 0


def _manufactured(x, n, phase):
    rho = np.stack([1.2 + 0.3 * k + 0.25 * np.sin(2 * np.pi * x + phase + k) for k in range(n)], axis=-1)
    drho = np.stack([0.25 * 2 * np.pi * np.cos(2 * np.pi * x + phase + k) for k in range(n)], axis=-1)
    return rho, drho


@pytest.mark.parametrize("n", [2, 3, 5])
def test_flux_triple_formula(n):
    rng = np.random.default_rng(n)
    params = SpeciesParams(rng.uniform(0.5, 5, n))
    x = np.linspace(0, 1, 101)
    for phase in np.linspace(0, 1, 7):
        rho_k, drho = _manufactured(x, n, phase)
        tp = thermo_eval(PrimitiveState(rho_k), params)
        C = ExemplaryFlux()(tp.Y).entries
        grad_pk = drho / params.m
        grad_nh = np.einsum("jab,jb->ja", change_of_variables_jacobian(rho_k, params), drho)
        b = build_bundle(rho_k, params)
        f1 = flux_from_partial_pressures(grad_pk, C, tp.p)
        f2 = flux_reduced(grad_pk, tp.Y, tp.p)
        f3 = flux_entropic(grad_nh[:, 1:], rho_k, b.D, tp.p)
        assert np.max(np.abs(f1 - f2)) < 1e-10
        assert np.max(np.abs(f1 - f3)) < 1e-10
        assert np.max(np.abs(f1.sum(-1))) < 1e-10


def test_flux_constant_state_and_exchange_symmetry():
    params = SpeciesParams([1, 1])
    rho_k = np.full((10, 2), 0.7)
    np.testing.assert_array_equal(flux(np.zeros((10, 2)), rho_k, params), 0.0)
    x = np.linspace(0, 1, 50)
    rho_k = np.column_stack([1 + 0.1 * np.sin(2 * np.pi * x), np.ones_like(x)])
    drho = np.column_stack([0.2 * np.pi * np.cos(2 * np.pi * x), np.zeros_like(x)])
    F = flux(drho, rho_k, params)
    np.testing.assert_allclose(F[:, 0], -F[:, 1], rtol=0, atol=1e-15)


def test_grad_D_ratio_finite():
    params = SpeciesParams([1.0, 2.0])
    g = Grid(64)
    rho_k = np.column_stack([1 + 0.1 * np.cos(np.pi * g.y), 0.5 + 0 * g.y])
    r = grad_D_ratio(rho_k, g, params)
    assert 0 < r < np.inf
    assert grad_D_ratio(np.ones((g.M, 2)), g, params) == 0.0
