"""Closed-form Gaussian transport: square roots, barycenters and Monge maps."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from notbary.distributions import GaussianDist, random_gaussian_instance
from notbary.errors import ContractError, ConvergenceError
from notbary.gaussian_oracle import (
    AffineMap,
    affine_transport_cost,
    barycenter_maps,
    bures_wasserstein_sq,
    fixed_point_barycenter,
    fixed_point_iteration,
    gaussian_monge_map,
    inv_sqrtm_psd,
    solve_instance,
    sqrtm_psd,
    to_half_convention,
    total_variance,
)
from notbary.utils import make_rng


def _random_spd(rng: np.random.Generator, d: int) -> np.ndarray:
    z = rng.standard_normal((d, d))
    return z @ z.T + 0.1 * np.eye(d)


def test_sqrtm_residual_over_random_spd_matrices() -> None:
    rng = make_rng(0, "test-sqrtm")
    for i in range(100):
        a = _random_spd(rng, 1 + i % 8)
        r = sqrtm_psd(a)
        np.testing.assert_allclose(r, r.T, atol=1e-12)
        assert np.linalg.norm(r @ r - a) <= 1e-10 * np.linalg.norm(a)


def test_inverse_square_root() -> None:
    a = _random_spd(make_rng(1, "test-isqrt"), 4)
    np.testing.assert_allclose(inv_sqrtm_psd(a) @ sqrtm_psd(a), np.eye(4), atol=1e-9)


def test_sqrtm_rejects_asymmetric_input() -> None:
    with pytest.raises(ContractError):
        sqrtm_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ContractError):
        sqrtm_psd(np.ones((2, 3)))


def test_sqrtm_clamps_tiny_negative_eigenvalues() -> None:
    a = np.diag([1.0, -1e-14])
    r = sqrtm_psd(a)
    assert np.all(np.isfinite(r))
    assert r[0, 0] == pytest.approx(1.0)


def test_bures_wasserstein_one_dimensional() -> None:
    g1 = GaussianDist(np.array([1.0]), np.array([[4.0]]))
    g2 = GaussianDist(np.array([-1.0]), np.array([[1.0]]))
    assert bures_wasserstein_sq(g1, g2) == pytest.approx(4.0 + 1.0)
    assert bures_wasserstein_sq(g1, g1) == pytest.approx(0.0, abs=1e-12)
    assert to_half_convention(5.0) == 2.5


def test_bures_wasserstein_is_symmetric() -> None:
    gs = random_gaussian_instance(3, 2, seed=5)
    assert bures_wasserstein_sq(gs[0], gs[1]) == pytest.approx(bures_wasserstein_sq(gs[1], gs[0]), rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), dim=st.integers(1, 4))
def test_bures_wasserstein_root_satisfies_triangle_inequality(seed: int, dim: int) -> None:
    rng = make_rng(seed, "test-bw-triangle")
    a, b, c = (GaussianDist(rng.standard_normal(dim) * 2.0, _random_spd(rng, dim)) for _ in range(3))
    ab = np.sqrt(bures_wasserstein_sq(a, b))
    bc = np.sqrt(bures_wasserstein_sq(b, c))
    ac = np.sqrt(bures_wasserstein_sq(a, c))
    assert ac <= ab + bc + 1e-8


@settings(max_examples=30, deadline=None)
@given(
    sigmas=st.lists(st.floats(0.1, 5.0), min_size=2, max_size=5),
    seed=st.integers(0, 1000),
)
def test_fixed_point_one_dimensional_closed_form(sigmas, seed) -> None:
    rng = make_rng(seed, "test-fp-1d")
    lam = rng.dirichlet(np.ones(len(sigmas)))
    lam = lam / lam.sum()
    gs = [GaussianDist(np.array([rng.standard_normal()]), np.array([[s * s]])) for s in sigmas]
    bary = fixed_point_barycenter(gs, lam)
    assert abs(np.sqrt(bary.cov[0, 0]) - float(np.dot(lam, sigmas))) <= 1e-8
    assert bary.mean[0] == pytest.approx(sum(w * g.mean[0] for w, g in zip(lam, gs)))


def test_fixed_point_commuting_diagonal_case() -> None:
    lam = np.array([0.2, 0.3, 0.5])
    diags = np.array([[1.0, 4.0], [9.0, 0.25], [2.0, 2.0]])
    gs = [GaussianDist(np.zeros(2), np.diag(d)) for d in diags]
    bary = fixed_point_barycenter(gs, lam)
    expected = (lam @ np.sqrt(diags)) ** 2
    np.testing.assert_allclose(np.diag(bary.cov), expected, atol=1e-8)
    assert abs(bary.cov[0, 1]) <= 1e-10


@pytest.mark.parametrize("dim", [2, 4, 8])
def test_barycenter_self_consistency(dim: int) -> None:
    gs = random_gaussian_instance(dim, 3, seed=dim)
    lam = [0.25, 0.25, 0.5]
    result = fixed_point_iteration(gs, lam)
    to_bary, from_bary = barycenter_maps(gs, result.barycenter)
    mixed = sum(w * t.A for w, t in zip(lam, from_bary))
    np.testing.assert_allclose(mixed, np.eye(dim), atol=1e-6)
    assert result.iterations >= 1
    assert len(to_bary) == 3


def test_fixed_point_reports_non_convergence() -> None:
    gs = random_gaussian_instance(3, 3, seed=0)
    with pytest.raises(ConvergenceError) as info:
        fixed_point_iteration(gs, [0.2, 0.3, 0.5], tol=0.0, max_iter=2)
    assert info.value.details["iterations"] == 2


def test_fixed_point_rejects_bad_inputs() -> None:
    g2 = GaussianDist(np.zeros(2), np.eye(2))
    g3 = GaussianDist(np.zeros(3), np.eye(3))
    with pytest.raises(ContractError):
        fixed_point_barycenter([], [])
    with pytest.raises(ContractError):
        fixed_point_barycenter([g2, g3], [0.5, 0.5])
    with pytest.raises(ContractError):
        fixed_point_barycenter([g2, g2], [0.7, 0.7])


def test_monge_map_pushes_source_onto_target() -> None:
    p, q = random_gaussian_instance(3, 2, seed=9)
    t = gaussian_monge_map(p, q)
    pushed = t.pushforward(p)
    np.testing.assert_allclose(pushed.mean, q.mean, atol=1e-9)
    np.testing.assert_allclose(pushed.cov, q.cov, atol=1e-8)
    np.testing.assert_allclose(t.A, t.A.T, atol=1e-12)
    assert np.linalg.eigvalsh(t.A)[0] > 0


def test_monge_map_cost_is_half_bures_wasserstein() -> None:
    p, q = random_gaussian_instance(4, 2, seed=10)
    cost = affine_transport_cost(p, gaussian_monge_map(p, q))
    assert cost == pytest.approx(to_half_convention(bures_wasserstein_sq(p, q)), rel=1e-8)


def test_identity_map_costs_nothing() -> None:
    p = GaussianDist(np.array([1.0, 2.0]), np.eye(2))
    assert affine_transport_cost(p, AffineMap.identity(2)) == 0.0


def test_affine_map_validation() -> None:
    with pytest.raises(ContractError):
        AffineMap(np.eye(2), np.zeros(3))
    with pytest.raises(ContractError):
        AffineMap(np.array([[np.inf]]), np.zeros(1))


def test_total_variance_is_trace() -> None:
    g = GaussianDist(np.zeros(3), np.diag([1.0, 2.0, 3.0]))
    assert total_variance(g) == 6.0


def test_solve_instance_payload() -> None:
    payload = {
        "gaussians": [
            {"mean": [0.0], "cov": [[1.0]]},
            {"mean": [2.0], "cov": [[9.0]]},
        ],
    }
    out = solve_instance(payload)
    assert out["barycenter"]["mean"] == pytest.approx([1.0])
    assert out["barycenter"]["cov"][0][0] == pytest.approx(4.0)
    assert out["total_variance"] == pytest.approx(4.0)
    assert out["maps"][0]["A"][0][0] == pytest.approx(2.0)
    assert out["maps"][1]["A"][0][0] == pytest.approx(2.0 / 3.0)
    assert out["iterations"] >= 1


def test_solve_instance_rejects_empty_input() -> None:
    with pytest.raises(ContractError):
        solve_instance({"gaussians": []})
    with pytest.raises(ContractError):
        solve_instance({})
