"""Reparametrisation maps, orders, meshes, and grid containers."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracstab.errors import ContractError, DomainError
from fracstab.psi_space import (
    FracOrder,
    GridFunction,
    PsiMap,
    build_mesh,
    psi_eval,
    weighted_norm,
)


def test_psi_identity():
    psi = PsiMap("identity")
    assert psi.value(2.5) == 2.5
    assert psi.deriv(2.5) == 1.0
    assert psi.inverse(2.5) == 2.5
    arr = np.array([0.0, 1.0, 4.0])
    np.testing.assert_allclose(psi.value(arr), arr)
    np.testing.assert_allclose(psi.deriv(arr), np.ones(3))


def test_psi_logarithm():
    psi = PsiMap("logarithm")
    assert psi.value(math.e) == pytest.approx(1.0, rel=1e-15)
    assert psi.deriv(2.0) == pytest.approx(0.5)
    assert psi.inverse(1.0) == pytest.approx(math.e, rel=1e-15)
    with pytest.raises(DomainError):
        psi.value(0.0)
    with pytest.raises(DomainError):
        psi.deriv(-1.0)


def test_psi_power():
    psi = PsiMap("power", rho=2.0)
    assert psi.value(3.0) == pytest.approx(9.0)
    assert psi.deriv(3.0) == pytest.approx(6.0)
    assert psi.inverse(9.0) == pytest.approx(3.0)
    with pytest.raises(DomainError):
        psi.value(-0.5)


def test_psi_validation():
    with pytest.raises(DomainError):
        PsiMap("hyperbolic")
    with pytest.raises(DomainError):
        PsiMap("power", rho=0.0)
    with pytest.raises(DomainError):
        PsiMap("power", rho=math.inf)


@given(
    st.sampled_from(["identity", "logarithm", "power"]),
    st.floats(min_value=0.25, max_value=4.0),
    st.floats(min_value=0.1, max_value=10.0),
)
@settings(max_examples=150, deadline=None)
def test_psi_inverse_round_trip(kind, rho, t):
    psi = PsiMap(kind, rho)
    assert psi.inverse(psi.value(t)) == pytest.approx(t, rel=1e-12)


def test_psi_eval_pairs():
    v, d = psi_eval(PsiMap("power", rho=0.5), 4.0)
    assert v == pytest.approx(2.0)
    assert d == pytest.approx(0.25)


def test_frac_order_gamma_table():
    # gamma = alpha + beta * (1 - alpha), weight = 1 - gamma
    cases = {
        (0.5, 0.0): 0.5,
        (0.5, 1.0): 1.0,
        (0.5, 0.5): 0.75,
        (0.3, 1.0): 1.0,
        (1.0, 0.0): 1.0,
    }
    for (alpha, beta), gamma in cases.items():
        order = FracOrder(alpha, beta)
        assert order.gamma == pytest.approx(gamma, abs=1e-15)
        assert order.weight == pytest.approx(1.0 - gamma, abs=1e-15)


@given(
    st.floats(min_value=0.01, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
)
@settings(max_examples=150, deadline=None)
def test_frac_order_gamma_range(alpha, beta):
    order = FracOrder(alpha, beta)
    assert alpha - 1e-15 <= order.gamma <= 1.0 + 1e-15
    assert 0.0 - 1e-15 <= order.weight < 1.0


def test_frac_order_validation():
    for alpha, beta in ((0.0, 0.5), (1.5, 0.5), (0.5, -0.1), (0.5, 1.1)):
        with pytest.raises(DomainError):
            FracOrder(alpha, beta)


def test_build_mesh_uniform():
    mesh = build_mesh(PsiMap("identity"), 0.0, 1.0, 4)
    np.testing.assert_allclose(mesh.nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert mesh.nodes[0] == 0.0 and mesh.nodes[-1] == 1.0


def test_build_mesh_graded_clusters_at_left():
    flat = build_mesh(PsiMap("identity"), 0.0, 1.0, 8, grading=1.0)
    hot = build_mesh(PsiMap("identity"), 0.0, 1.0, 8, grading=4.0)
    assert hot.psi_nodes[1] < flat.psi_nodes[1]
    assert hot.psi_nodes[1] == pytest.approx((1.0 / 8.0) ** 4)
    assert np.all(np.diff(hot.psi_nodes) > 0.0)


def test_build_mesh_log_and_power():
    mlog = build_mesh(PsiMap("logarithm"), 1.0, math.e, 16, grading=2.0)
    assert mlog.psi_nodes[0] == 0.0
    assert mlog.psi_nodes[-1] == pytest.approx(1.0, rel=1e-15)
    np.testing.assert_allclose(np.log(mlog.nodes[1:]), mlog.psi_nodes[1:], rtol=1e-13)

    mpow = build_mesh(PsiMap("power", rho=2.0), 0.0, 3.0, 16)
    np.testing.assert_allclose(mpow.nodes ** 2, mpow.psi_nodes, rtol=1e-13, atol=1e-15)
    assert mpow.nodes[-1] == 3.0


def test_build_mesh_validation():
    with pytest.raises(DomainError):
        build_mesh(PsiMap("logarithm"), 0.0, 1.0, 8)
    with pytest.raises(DomainError):
        build_mesh(PsiMap("identity"), 1.0, 1.0, 8)
    with pytest.raises(DomainError):
        build_mesh(PsiMap("identity"), 0.0, 1.0, 0)
    with pytest.raises(DomainError):
        build_mesh(PsiMap("identity"), 0.0, 1.0, 8, grading=0.5)


def test_mesh_same_as():
    m1 = build_mesh(PsiMap("identity"), 0.0, 1.0, 8, grading=2.0)
    m2 = build_mesh(PsiMap("identity"), 0.0, 1.0, 8, grading=2.0)
    m3 = build_mesh(PsiMap("identity"), 0.0, 1.0, 16, grading=2.0)
    assert m1.same_as(m2)
    assert not m1.same_as(m3)


def test_grid_function_validation():
    mesh = build_mesh(PsiMap("identity"), 0.0, 1.0, 4)
    with pytest.raises(ContractError):
        GridFunction(mesh, np.zeros(4), 0.0)
    with pytest.raises(ContractError):
        GridFunction(mesh, np.full(5, np.nan), 0.0)
    with pytest.raises(ContractError):
        GridFunction(mesh, np.zeros(5), 1.0)
    with pytest.raises(ContractError):
        GridFunction(mesh, np.zeros(5), -0.25)


def test_grid_function_values_frozen():
    mesh = build_mesh(PsiMap("identity"), 0.0, 1.0, 4)
    u = GridFunction(mesh, np.ones(5), 0.0)
    with pytest.raises(ValueError):
        u.values[2] = 7.0
    v = u.with_values(2.0 * u.values)
    assert v.weight_exp == u.weight_exp
    np.testing.assert_allclose(v.values, 2.0)


def test_weighted_norm_plain_vs_stored():
    mesh = build_mesh(PsiMap("identity"), 0.0, 1.0, 8)
    order = FracOrder(0.5, 0.0)  # weight 0.5
    vals = np.linspace(1.0, 2.0, 9)
    plain = GridFunction(mesh, vals, 0.0)
    dx = mesh.psi_nodes - mesh.psi_nodes[0]
    expected = float(np.max(dx[1:] ** 0.5 * vals[1:]))  # node 0 excluded
    assert weighted_norm(plain, order) == pytest.approx(expected, rel=1e-14)

    stored = GridFunction(mesh, np.sqrt(dx) * vals, 0.5)
    assert weighted_norm(stored, order) == pytest.approx(expected, rel=1e-14)


def test_weighted_norm_plain_when_gamma_one():
    mesh = build_mesh(PsiMap("identity"), 0.0, 1.0, 8)
    u = GridFunction(mesh, np.linspace(-3.0, 1.0, 9), 0.0)
    assert weighted_norm(u, FracOrder(0.5, 1.0)) == pytest.approx(3.0)


def test_weighted_norm_weight_mismatch():
    mesh = build_mesh(PsiMap("identity"), 0.0, 1.0, 8)
    u = GridFunction(mesh, np.ones(9), 0.25)
    with pytest.raises(ContractError):
        weighted_norm(u, FracOrder(0.5, 0.0))
