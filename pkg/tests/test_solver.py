from __future__ import annotations

import math

import numpy as np
import pytest

from minkowski_caps.errors import ClosureError, ConvergenceError, DomainError
from minkowski_caps.polytope import SupportVector, facet_areas, realize, volume
from minkowski_caps.solver import (MinkowskiProblem, SolveOptions, area_residual, initializations,
                                   probe_directions,
                                   solve, uniqueness_probe, verify_solution, volume_hessian)
from minkowski_caps.spherical import build_grid, tangent_frame

from oracles import regular_tetrahedron

CUBE_U = np.vstack([np.eye(3), -np.eye(3)])


def sphere_problem(level):
    return MinkowskiProblem.from_grid(build_grid(level), 1.0)


def distinct(verts, tol=1e-9):
    v = np.unique(np.round(verts / tol) * tol, axis=0)
    return v[np.lexsort(v.T[::-1])]


def test_exact_cube():
    h, rep = solve(MinkowskiProblem(CUBE_U, np.ones(6)))
    assert rep.final_residual <= 1e-10
    assert np.allclose(h.values, 0.5, atol=1e-10)
    P = realize(h)
    assert np.allclose(np.abs(P.vertices), 0.5, atol=1e-6)


def test_regular_tetrahedron_against_oracle():
    verts, normals, hs = regular_tetrahedron(1.0)
    face = math.sqrt(3) / 4
    h, rep = solve(MinkowskiProblem(normals, np.full(4, face)))
    assert rep.final_residual <= 1e-9
    assert np.allclose(h.values, hs, rtol=1e-8)
    P = realize(h)
    assert np.allclose(distinct(P.vertices), distinct(verts), atol=1e-7)
    assert volume(P) == pytest.approx(1 / (6 * math.sqrt(2)), rel=1e-8)


@pytest.mark.parametrize("level", [3, 4])
def test_round_sphere_control(level):
    h, rep = solve(sphere_problem(level))
    assert rep.final_residual <= 1e-6
    assert rep.iterations <= 2000
    assert np.max(np.abs(h.values - 1.0)) <= 0.01


def test_round_sphere_improves_with_level():
    errs = [np.max(np.abs(solve(sphere_problem(L))[0].values - 1.0)) for L in (3, 4)]
    assert errs[1] < errs[0]


def test_closure_rejected_before_iterating():
    F = np.ones(6)
    F[0] = 1.5
    with pytest.raises(ClosureError, match="closure"):
        solve(MinkowskiProblem(CUBE_U, F))


def test_hemisphere_condition_rejected():
    # closing targets on a great circle: no area strictly on either side of it
    a1, a2 = tangent_frame(probe_directions()[0])
    U = np.array([a1, a2, -a1, -a2])
    with pytest.raises(ClosureError, match="hemisphere"):
        solve(MinkowskiProblem(U, np.ones(4)))


def test_problem_domain_errors():
    with pytest.raises(DomainError):
        MinkowskiProblem(CUBE_U, np.zeros(6))
    with pytest.raises(DomainError):
        MinkowskiProblem(CUBE_U, np.ones(5))
    with pytest.raises(DomainError):
        SolveOptions(tol_rel=0)


def test_convergence_error_carries_report():
    with pytest.raises(ConvergenceError) as info:
        solve(sphere_problem(3), SolveOptions(tol_rel=1e-15, max_iters=1))
    rep = info.value.report
    assert rep is not None and rep.iterations == 1
    assert len(rep.residual_history) == 2


def test_scaling_covariance():
    prob = sphere_problem(3)
    h1, _ = solve(prob)
    h4, _ = solve(MinkowskiProblem(prob.normals, 4 * prob.targets))
    assert np.allclose(h4.values, 2 * h1.values, rtol=1e-6)


def test_translation_equivariance():
    prob = sphere_problem(3)
    h1, _ = solve(prob)
    start = SupportVector(prob.normals, 1.0 + prob.normals @ np.array([0.5, -0.2, 0.3]))
    h2, _ = solve(prob, SolveOptions(initial=start))
    assert np.allclose(h2.values, h1.values, atol=1e-6)


def test_merit_non_increasing():
    _, rep = solve(sphere_problem(3))
    m = np.array(rep.merit_history)
    assert np.all(np.diff(m) <= 1e-12 * np.abs(m[:-1]))


def test_verify_solution_localizes_perturbation():
    prob = sphere_problem(2)
    h, _ = solve(prob)
    assert verify_solution(h, prob)["max_residual"] <= 1e-6
    i = 17
    vals = h.values.copy()
    vals[i] += 0.01
    out = verify_solution(SupportVector(h.normals, vals), prob)
    P = realize(h)
    near = set(P.edges[(P.edges == i).any(axis=1)].ravel())
    assert int(np.argmax(out["residuals"])) in near
    far = np.array([k not in near for k in range(len(prob.targets))])
    assert np.max(out["residuals"][far]) <= 1e-6


def test_area_residual_floor():
    r = area_residual([1.0, 1e-20], [1.0, 0.0])
    assert r[0] == 0.0 and np.isfinite(r[1])


def test_volume_hessian_matches_finite_differences():
    g = build_grid(2)
    h = 1.0 + 0.05 * np.random.default_rng(3).random(len(g))
    P = realize(SupportVector.from_grid(g, h))
    M = volume_hessian(P).toarray()
    assert np.allclose(M, M.T, atol=1e-14)
    assert np.allclose(M @ P.offsets, 2 * P.areas, atol=1e-10)
    eps = 1e-6
    for j in (0, 11, 99, 250):
        up, dn = h.copy(), h.copy()
        up[j] += eps
        dn[j] -= eps
        fd = (realize(SupportVector.from_grid(g, up)).areas
              - realize(SupportVector.from_grid(g, dn)).areas) / (2 * eps)
        assert np.allclose(M[:, j], fd, atol=1e-6)


def test_uniqueness_on_cube():
    prob = MinkowskiProblem(CUBE_U, np.ones(6))
    assert uniqueness_probe(prob, SolveOptions(tol_rel=1e-13)) <= 1e-10


def test_uniqueness_on_sphere_level3():
    prob = sphere_problem(3)
    starts = initializations(prob, 3)
    assert not np.allclose(starts[1].values, starts[2].values)
    h = realize(solve(prob)[0])
    assert uniqueness_probe(prob) <= 1e-3 * h.diameter


def test_initializations_deterministic():
    prob = sphere_problem(1)
    a = initializations(prob, 3)
    b = initializations(prob, 3)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))


def test_solution_areas_via_independent_formula():
    prob = sphere_problem(3)
    h, _ = solve(prob)
    P = realize(h)
    assert np.max(area_residual(facet_areas(P), prob.targets)) <= 1e-6
