from __future__ import annotations

import math

import numpy as np
import pytest

from minkowski_caps.errors import DomainError, NonSmoothDirectionError
from minkowski_caps.pipeline import (ConstructionConfig, construct, disc_metrics,
                                     equilibrium_defect_rel, gauss_coverage, hessian_probe,
                                     hessian_residual, label_normals, parallel_H_check,
                                     parallel_mean_curvature, probe_stats, recover_points)
from minkowski_caps.polytope import SupportVector, realize, support_eval
from minkowski_caps.profile import PunctureSet
from minkowski_caps.spherical import E1, E2, E3, SphericalCap, build_grid, unit

CUBE_U = np.vstack([np.eye(3), -np.eye(3)])


def ball(R, c=(0.0, 0.0, 0.0)):
    c = np.asarray(c, float)
    return lambda u: R + np.asarray(u) @ c


# -- labelling and decomposition ---------------------------------------------

def test_labels_partition_the_normals():
    g = build_grid(5)
    ps = PunctureSet([E3, -E3], [4.0, 4.0])
    n = 8
    lab = label_normals(g.nodes, ps, n)
    c = g.nodes @ E3
    s = np.sqrt(np.clip(1 - c * c, 0, None))
    claimed = np.zeros(len(g), bool)
    for sign, j in ((1, 0), (-1, 1)):
        cc = sign * c
        disc = (cc > 0) & (s < 1 / n)
        ann = (cc > 0) & (s < 2 / n) & (s > 1 / n)
        assert np.array_equal(lab == -(j + 1), disc)
        assert np.array_equal(lab == j + 1, ann)
        claimed |= disc | ann
    assert np.array_equal(lab == 0, ~claimed)


@pytest.mark.slow
def test_decomposition_area_sums(flagship_sweep):
    for n, d in flagship_sweep.bodies.items():
        parts = d.k_region_area() + sum(d.disc_area(j) + d.annulus_area(j) for j in range(d.m))
        assert parts == pytest.approx(d.body.total_area, rel=1e-12)
        assert d.label(int(np.flatnonzero(d.disc_mask(0))[0])) == "disc(0)"
        assert d.label(int(np.flatnonzero(d.annulus_mask(1))[0])) == "annulus(1)"


def test_control_without_punctures():
    _, d = construct(None, 8, 3)
    assert d.m == 0
    assert np.all(d.region_of_facet == 0)
    assert d.k_region_area() == pytest.approx(d.body.total_area)
    assert equilibrium_defect_rel(d) == 0.0
    assert gauss_coverage(d) == 1.0
    with pytest.raises(DomainError):
        disc_metrics(d, 0)


def test_config_validation():
    ps = PunctureSet([E3, -E3], [4.0, 4.0])
    with pytest.raises(DomainError):
        ConstructionConfig(ps, [])
    with pytest.raises(DomainError):
        ConstructionConfig(ps, [8, 4])
    with pytest.raises(DomainError, match="minimum"):
        ConstructionConfig(ps, [3, 8])
    with pytest.raises(DomainError, match="unknown"):
        ConstructionConfig(ps, [8], tolerances={"bogus": 1.0})
    cfg = ConstructionConfig(ps, [8], tolerances={"disc_area_rel": 0.06})
    assert cfg.tolerances["disc_area_rel"] == 0.06 and cfg.tolerances["plane_angle"] == 0.02


# -- support-function probes ------------------------------------------------

@pytest.mark.parametrize("R", [0.5, 1.0, 3.0])
def test_hessian_exact_ball(R):
    u = unit([0.2, -0.4, 0.9])
    pr = hessian_probe(ball(R), u, 0.05)
    assert np.allclose(pr.matrix, R * np.eye(2), atol=1e-12)
    assert pr.det == pytest.approx(R * R, rel=1e-12)
    assert hessian_residual(None, ball(1.0), u, 0.05) == pytest.approx(0.0, abs=1e-12)


def test_hessian_linear_term_invariance():
    u = unit([0.7, 0.1, -0.3])
    step = 0.05
    a = hessian_probe(ball(1.0), u, step).matrix
    b = hessian_probe(ball(1.0, [0.4, -0.8, 0.3]), u, step).matrix
    # the second difference of cos(s) is -1 + s^2/12 + O(s^4)
    assert np.allclose(a, b, atol=step ** 2 / 12 * 1.0 + 1e-10)


def test_hessian_probe_on_unit_ball_polytope_is_close():
    g = build_grid(5)
    P = realize(SupportVector.from_grid(g, np.ones(len(g))))
    step = 3 * g.spacing
    dets = [hessian_probe(P, u, step).det for u in unit(np.random.default_rng(0).normal(size=(20, 3)))]
    assert abs(np.median(dets) - 1.0) <= 0.1


def test_hessian_probe_preconditions():
    s = 0.02
    with pytest.raises(DomainError):
        hessian_probe(ball(1.0), E1, 0.5 * s, spacing=s)
    with pytest.raises(DomainError):
        hessian_probe(ball(1.0), E1, 6 * s, spacing=s)
    with pytest.raises(DomainError, match="excluded"):
        hessian_probe(ball(1.0), unit([0.1, 0, 1]), s, spacing=s, avoid=(SphericalCap(E3, 0.1),))
    with pytest.raises(DomainError):
        hessian_probe(ball(1.0), E1, 0.0)
    pr = hessian_probe(ball(1.0), E1, 2 * s, spacing=s)
    assert pr.facet_ratio == pytest.approx(2.0)


def test_parallel_curvature_identity_exact():
    assert parallel_mean_curvature(2.0, 0.5) == 0.5
    assert parallel_mean_curvature(1.0, 1.0) == 0.5
    assert parallel_mean_curvature(4.0, 0.25) == 0.5


def test_parallel_H_check_on_balls():
    u = unit([1, 2, 3])
    assert parallel_H_check(None, ball(1.0), u, 0.05) == pytest.approx(0.0, abs=1e-12)
    # radius 3: 1/(1+3) = 0.25
    assert parallel_H_check(None, ball(3.0), u, 0.05) == pytest.approx(-0.25, abs=1e-12)
    saddle = lambda p: 1.0 + 5.0 * (np.asarray(p)[..., 0] ** 2 - np.asarray(p)[..., 1] ** 2)
    assert math.isnan(parallel_H_check(None, saddle, unit([0, 0, 1]), 0.05))


def test_recover_points_ball_and_translation():
    u = unit([0.3, -0.5, 0.8])
    assert np.allclose(recover_points(None, ball(2.0), u, 0.05), 2.0 * u, atol=1e-14)
    c = np.array([0.3, 0.1, -0.7])
    assert np.allclose(recover_points(None, ball(2.0, c), u, 0.05), c + 2.0 * u, atol=1e-13)


def test_recover_points_cube_face_center():
    P = realize(SupportVector(CUBE_U, np.full(6, 0.5)))
    assert np.allclose(recover_points(None, P, E1, 0.1), [0.5, 0.0, 0.0], atol=1e-14)


def test_recover_points_rejects_empty_facet_direction():
    U = np.vstack([CUBE_U, unit([1, 1, 1])])
    P = realize(SupportVector(U, np.append(np.full(6, 0.5), 2.0)))
    assert not P.nonempty[6]
    with pytest.raises(NonSmoothDirectionError):
        recover_points(None, P, unit([1, 1, 1]), 0.05)


def test_probe_stats_exact_for_ball_support():
    _, d = construct(None, 8, 3)
    st = probe_stats(d, count=10, seed=1)
    assert st["probes"] == 10
    assert st["step"] == pytest.approx(3 * d.grid.spacing)


# -- construction behaviour -------------------------------------------------

@pytest.mark.slow
def test_construction_is_deterministic():
    ps = PunctureSet([E3, -E3], [4.0, 4.0])
    h1, _ = construct(ps, 8, 4)
    h2, _ = construct(ps, 8, 4)
    assert np.array_equal(h1.values, h2.values)


@pytest.mark.slow
def test_symmetry_transport():
    # the cyclic axis permutation maps the grid onto itself, so it carries
    # the solution for (e3, -e3) onto the solution for (e1, -e1)
    M = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], float)
    assert np.allclose(M @ E3, E2) and np.allclose(M.T @ E3, E1)
    g = build_grid(4)
    ha, _ = construct(PunctureSet([E3, -E3], [4.0, 4.0]), 8, 4)
    hb, _ = construct(PunctureSet([E1, -E1], [4.0, 4.0]), 8, 4)
    Pb = realize(hb)
    # h_b(u) = h_a(M u) when the body b is the image of a under M^T
    lhs = support_eval(Pb, g.nodes)
    rhs = support_eval(realize(ha), g.nodes @ M.T)
    assert np.max(np.abs(lhs - rhs)) <= 1e-5


@pytest.mark.slow
def test_disc_area_converges_to_target(flagship_sweep):
    errs = [abs(r["disc_areas"][0] - 4.0) for r in flagship_sweep.records]
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.slow
def test_boundary_convexity_improves(flagship_sweep):
    # the disc boundary is a staircase of facet edges; its defect shrinks with n
    defects = [max(d["boundary_convexity_defect"] for d in r["discs"]) for r in flagship_sweep.records]
    assert defects[2] < defects[1] < defects[0]
    assert defects[2] <= 0.02


@pytest.mark.slow
def test_opposite_discs_parallel(flagship_sweep):
    d = flagship_sweep.bodies[16]
    n0, n1 = d.disc_planes[0].normal, d.disc_planes[1].normal
    assert n0 @ n1 < -0.999


@pytest.mark.slow
def test_sweep_records_and_assertions(flagship_sweep):
    rep = flagship_sweep
    assert [r["n"] for r in rep.records] == [4, 8, 16]
    assert rep.hausdorff[0] is None and rep.hausdorff[1] > 0
    names = [a.name for a in rep.assertions]
    assert "area_bound[n=4]" in names and "inradius[n=16]" in names
    assert rep.passed and not rep.gaps
    out = rep.to_dict()
    assert set(out) == {"records", "hausdorff_prev", "assertions", "gaps", "passed"}
