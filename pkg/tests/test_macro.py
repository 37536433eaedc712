import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from porohomog.macro import (MacroError, MacroGrid, darcy_convergence, lame_convergence,
                             lame_tensors, observed_orders, solve_darcy_steady,
                             solve_darcy_transient, solve_lame_static, synthetic_effective_set,
                             write_field_csv)

K2 = np.diag([2.0, 1.0])


def swirl(X):
    # a forcing with non-zero curl, so it drives a flow
    x, y = X[..., 0], X[..., 1]
    return np.stack([np.sin(np.pi * y), np.zeros_like(x)], axis=-1)


def test_grid_validation():
    with pytest.raises(MacroError):
        MacroGrid(1)
    with pytest.raises(MacroError):
        MacroGrid(4, dim=1)


def test_steady_zero():
    st_ = solve_darcy_steady(np.eye(3), n=4)
    assert not st_.q.any() and not st_.v.any()


@pytest.mark.parametrize("K", [np.eye(2), K2, np.array([[2.0, 0.5], [0.5, 1.0]])])
def test_gradient_forcing_is_absorbed(K):
    grid = MacroGrid(12, 2)
    X = grid.centres()
    phi = np.sin(2 * X[..., 0]) * np.cos(3 * X[..., 1])
    st_ = solve_darcy_steady(K, potential=phi, n=12, dim=2, rho_f=1.5)
    expected = 1.5 * (phi - phi.mean())
    assert np.abs(st_.q - expected).max() <= 1e-10
    assert max(np.abs(f).max() for f in st_.fluxes) <= 1e-10


def test_manufactured_second_order():
    ns, errors, orders = darcy_convergence(ns=(8, 16, 32))
    assert min(orders) > 1.8


def test_no_flux_and_mass_balance():
    grid = MacroGrid(10, 2)
    X = grid.centres()
    src = np.cos(np.pi * X[..., 0]) * X[..., 1]
    src -= src.mean()
    st_ = solve_darcy_steady(K2, F=swirl, source=src, n=10, dim=2)
    assert st_.boundary_flux <= 1e-12
    assert np.abs(st_.divergence() - src).max() <= 1e-9
    assert abs(st_.q.mean()) <= 1e-12


def test_bad_inputs():
    with pytest.raises(MacroError, match="integral"):
        solve_darcy_steady(np.eye(2), source=np.ones((4, 4)), n=4, dim=2)
    with pytest.raises(MacroError):
        solve_darcy_steady(np.diag([1.0, -1.0]), n=4, dim=2)
    with pytest.raises(MacroError):
        solve_darcy_steady(np.eye(4), n=4, dim=2)
    with pytest.raises(MacroError, match="p\\*"):
        solve_darcy_transient(np.eye(2), p_star=math.inf, n=4, dim=2)
    with pytest.raises(MacroError, match="schedule"):
        solve_darcy_transient(np.eye(2), schedule=[0.2, 0.1], n=4, dim=2)


def test_transient_zero():
    series = solve_darcy_transient(np.eye(2), n=6, dim=2, schedule=[0.1, 0.2])
    assert all(not p.any() for p in series.p) and all(not q.any() for q in series.q)


def test_transient_reaches_steady_state():
    steady = solve_darcy_steady(K2, F=swirl, n=8, dim=2)
    schedule = np.cumsum(np.geomspace(1e-3, 5.0, 60))
    series = solve_darcy_transient(K2, F=swirl, p_star=1.0, nu0=0.3, n=8, dim=2,
                                   schedule=schedule)
    assert np.abs(series.q[-1] - steady.q).max() <= 1e-6
    for state in series.states:
        assert state.boundary_flux <= 1e-12


def test_inviscid_state_law_gives_q_equal_p():
    series = solve_darcy_transient(K2, F=swirl, nu0=0.0, n=6, dim=2, schedule=[0.1, 0.3, 0.6])
    for p, q in zip(series.p, series.q):
        assert np.array_equal(p, q)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 2.0))
def test_free_decay_dissipates_and_conserves(seed, nu0):
    p0 = np.random.default_rng(seed).standard_normal((6, 6))
    series = solve_darcy_transient(K2, p_star=2.0, nu0=nu0, n=6, dim=2, p0=p0,
                                   schedule=np.linspace(0.05, 0.5, 10))
    assert np.all(np.diff(series.energy) <= 1e-14 * series.energy[0])
    assert np.allclose(series.mass, series.mass[0], atol=1e-12)


def test_lame_zero():
    sol = solve_lame_static(synthetic_effective_set(), n=4, dim=2)
    assert not sol.u.any() and not sol.pi.any()


@pytest.mark.parametrize("eta2", [1.0, math.inf])
def test_lame_manufactured_second_order(eta2):
    _, _, orders = lame_convergence(eta2=eta2, ns=(8, 16, 32))
    assert min(orders) > 1.8


def test_lame_rotation_equivariance():
    eff = synthetic_effective_set()
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    c = np.array([0.5, 0.5])

    def F(X):
        x, y = X[..., 0], X[..., 1]
        return np.stack([x * (1 - y) ** 2, np.sin(np.pi * x) * y], axis=-1)

    def F_rot(X):
        back = (X - c) @ R + c  # R^T (X - c) + c for row vectors
        return F(back) @ R.T

    q = lambda X: X[..., 0] ** 2
    q_rot = lambda X: q((X - c) @ R + c)
    a = solve_lame_static(eff, q=q, F=F, n=8, dim=2)
    b = solve_lame_static(eff, q=q_rot, F=F_rot, n=8, dim=2)
    # node (i, j) maps to (n - j, i)
    mapped = np.einsum("ab,bij->aij", R, a.u)
    mapped = np.rot90(mapped, k=1, axes=(1, 2))
    assert np.abs(mapped - b.u).max() <= 1e-10 * np.abs(a.u).max()


@given(st.integers(0, 2**32 - 1))
def test_lame_operator_is_coercive(seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((6, 6))
    eff = synthetic_effective_set(A0s=G @ G.T + 0.5 * np.eye(6), a0s=0.7)
    sol = solve_lame_static(eff, n=3, dim=3, eta2=2.0)
    A = sol.matrix.toarray()
    assert np.abs(A - A.T).max() <= 1e-12 * np.abs(A).max()
    x = rng.standard_normal(A.shape[0])
    assert x @ A @ x > 0


def test_lame_rejects_indefinite_stiffness():
    eff = synthetic_effective_set(A0s=np.diag([1, 1, 1, 1, 1, -1.0]))
    with pytest.raises(MacroError):
        solve_lame_static(eff, n=2, dim=2)
    with pytest.raises(MacroError):
        lame_tensors(synthetic_effective_set(), -1.0)


def test_pressure_law_recovered():
    eff = synthetic_effective_set(a0s=0.8, a1s=0.3)
    sol = solve_lame_static(eff, q=lambda X: np.ones(X.shape[:-1]), n=4, dim=2, eta2=2.0,
                            F=lambda X: np.stack([X[..., 1], X[..., 0]], axis=-1))
    # pi = -eta2 (a0 div u + a1 q) at element centres
    u = sol.u
    h = sol.grid.h
    ux = 0.5 * (u[0, 1:, 1:] + u[0, 1:, :-1] - u[0, :-1, 1:] - u[0, :-1, :-1]) / h
    uy = 0.5 * (u[1, 1:, 1:] + u[1, :-1, 1:] - u[1, 1:, :-1] - u[1, :-1, :-1]) / h
    assert np.allclose(sol.pi, -2.0 * (0.8 * (ux + uy) + 0.3), atol=1e-12)


def test_observed_orders():
    assert observed_orders([8, 16], [4.0, 1.0]) == [2.0]


def test_field_csv(tmp_path):
    grid = MacroGrid(2, 2)
    write_field_csv(tmp_path / "f.csv", "q", grid.centres(), np.arange(4.0))
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "# field=q dims=2x2" and lines[1] == "x,y,z,value"
    assert lines[2] == "0.25,0.25,0.0,0.0" and len(lines) == 6
