"""Discrete Minkowski problem: find support numbers whose facet areas are given.

Given unit normals ``u_i`` and target areas ``F_i`` with ``sum F_i u_i = 0``
the polytope is the unique (up to translation) minimizer of

    E(h) = sum_i F_i h_i - c * log V(h),

a convex function of ``h`` because ``V**(1/3)`` is concave (Brunn-Minkowski).
Its gradient is ``F - c A(h) / V(h)`` since ``dV/dh_i = A_i``, so a critical
point has areas proportional to ``F``; a final rescale fixes the size.
Iterations are damped Newton steps using the sparse Hessian of the volume
(``d A_i / d h_j = l_ij / sin(theta_ij)`` for adjacent facets), with an
Armijo backtracking line search on ``E``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import (ClosureError, ConditioningError, ConvergenceError, DegenerateHullError,
                     DomainError, EmptyBodyError, UnboundedIntersectionError)
from .polytope import (ConvexPolytope, SupportVector, centroid, facet_areas, realize,
                       recenter, hausdorff_distance)
from .spherical import QuadratureGrid, build_grid, unit

log = logging.getLogger(__name__)

CLOSURE_TOL = 1e-8
RESIDUAL_FLOOR = 1e-12
STEP_CAP = 0.1
STAGE_TOL = 1e-3
STAGE_STEPS = 12
MIN_ALPHA = 0.1


def probe_directions() -> np.ndarray:
    """The 62 icosahedral directions: 12 vertices, 20 faces, 30 edges."""
    g = build_grid(0)
    v, f = g.vertices, g.faces
    edges = np.unique(np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1), axis=0)
    mids = unit(v[edges[:, 0]] + v[edges[:, 1]])
    return np.vstack([v, g.nodes, mids])


@dataclass(frozen=True, eq=False)
class MinkowskiProblem:
    normals: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        normals = unit(np.atleast_2d(self.normals))
        targets = np.asarray(self.targets, float).reshape(-1)
        if normals.shape != (len(targets), 3):
            raise DomainError(f"{len(targets)} targets for {len(normals)} normals")
        if np.any(~np.isfinite(targets)) or np.any(targets <= 0):
            raise DomainError("target areas must be finite and positive")
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "targets", targets)

    @classmethod
    def from_grid(cls, grid: QuadratureGrid, density) -> "MinkowskiProblem":
        """Targets F_i = f(u_i) w_i for a density f = 1/kappa."""
        density = np.broadcast_to(np.asarray(density, float), (len(grid),))
        return cls(grid.nodes, density * grid.weights)

    @property
    def total(self) -> float:
        return float(self.targets.sum())

    def closure_defect(self) -> np.ndarray:
        return self.targets @ self.normals

    def validate(self) -> None:
        defect = float(np.linalg.norm(self.closure_defect()))
        if defect > CLOSURE_TOL * self.total:
            raise ClosureError(
                f"closure violated: |sum F u| = {defect:.3e} > {CLOSURE_TOL:g} * sum F")
        for w in probe_directions():
            if self.targets[self.normals @ w > 1e-12].sum() <= CLOSURE_TOL * self.total:
                raise ClosureError(f"hemisphere condition fails for direction {w.tolist()}")


@dataclass
class SolveOptions:
    tol_rel: float = 1e-6
    max_iters: int = 2000
    line_search_shrink: float = 0.5
    initial: SupportVector | None = None

    def __post_init__(self):
        if not self.tol_rel > 0:
            raise DomainError("tol_rel must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be at least 1")
        if not 0 < self.line_search_shrink < 1:
            raise DomainError("line_search_shrink must lie in (0, 1)")


@dataclass
class SolveReport:
    iterations: int = 0
    final_residual: float = float("inf")
    residual_history: list[float] = field(default_factory=list)
    merit_history: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    normalization: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "residual_history": list(self.residual_history),
            "merit_history": list(self.merit_history),
            "wall_time": self.wall_time,
            "normalization": [float(x) for x in self.normalization],
            "scale": self.scale,
        }


def area_residual(areas, targets) -> np.ndarray:
    """|A_i - F_i| / max(F_i, floor * sum F)."""
    targets = np.asarray(targets, float)
    floor = RESIDUAL_FLOOR * targets.sum()
    return np.abs(np.asarray(areas) - targets) / np.maximum(targets, floor)


def volume_hessian(P: ConvexPolytope) -> sp.csr_matrix:
    """Sparse d A_i / d h_j of a realized polytope (symmetric, M h = 2A)."""
    i, j = P.edges[:, 0], P.edges[:, 1]
    cos = np.clip(np.einsum("ij,ij->i", P.normals[i], P.normals[j]), -1.0, 1.0)
    sin = np.sqrt(1.0 - cos * cos)
    ok = sin > 1e-14
    off = np.zeros_like(cos)
    off[ok] = P.edge_lengths[ok] / sin[ok]
    n = len(P)
    diag = np.zeros(n)
    np.add.at(diag, i, -off * cos)
    np.add.at(diag, j, -off * cos)
    rows = np.concatenate([i, j, np.arange(n)])
    cols = np.concatenate([j, i, np.arange(n)])
    data = np.concatenate([off, off, diag])
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def _volume(P: ConvexPolytope) -> float:
    h = P.offsets - P.normals @ P.interior_point
    return float(h @ P.areas) / 3.0


def _newton_direction(P, F, c, g, damping=0.0):
    """Solve (c/V)(-M + A A^T / V) d = -g up to a translation.

    The kernel of the system is the translations ``d = U v``.  Pinning
    three coordinates whose normals span R^3 removes it, leaving a sparse
    factorization of the volume Hessian block plus a Sherman-Morrison
    update for the rank-one term.
    """
    n = len(P)
    A = P.areas
    V = _volume(P)
    top = -(c / V) * volume_hessian(P)
    empty = A <= 1e-10 * A.mean()
    scale = float(np.median(np.abs(top.diagonal()[~empty])))
    reg = np.zeros(n)
    reg[empty] = scale
    reg += damping * scale
    # the three dropped equations are implied by the others (U^T K = 0)
    free = np.ones(n, bool)
    free[_spanning_pins(P.normals)] = False
    T = (top + sp.diags(reg)).tocsr()[free][:, free].tocsc()
    lu = splu(T, permc_spec="COLAMD")
    a = A[free]
    beta = c / V ** 2
    x = lu.solve(-g[free])
    y = lu.solve(a)
    d = np.zeros(n)
    d[free] = x - y * (beta * (a @ x) / (1.0 + beta * (a @ y)))
    return d


def _spanning_pins(U) -> np.ndarray:
    """Three indices whose normals are close to an orthonormal triple."""
    i = int(np.argmax(U[:, 2]))
    e1 = unit(np.cross(U[i], [1.0, 0.0, 0.0]) if abs(U[i, 0]) < 0.9 else np.cross(U[i], [0.0, 1.0, 0.0]))
    j = int(np.argmax(U @ e1))
    k = int(np.argmax(U @ unit(np.cross(U[i], U[j]))))
    return np.array([i, j, k])


class _State:
    """A support vector together with its realization and merit."""

    def __init__(self, normals, values, F, c):
        P = realize(SupportVector(normals, values))
        # keep the origin at the centroid so the dual map stays well scaled
        self.P = P.translate(-centroid(P))
        self.h = self.P.offsets
        self.V = _volume(self.P)
        if not self.V > 0:
            raise EmptyBodyError("realized body has no volume")
        self.c = c
        self.E = self.merit(F)

    def merit(self, F) -> float:
        return float(F @ self.h) - self.c * np.log(self.V)

    def rescaled(self, F) -> "_State":
        """Minimum of E along the ray t*h (t = 3c / F.h); no re-realization."""
        t = 3 * self.c / float(F @ self.h)
        out = object.__new__(_State)
        out.P = _scaled_polytope(self.P, t)
        out.h = out.P.offsets
        out.V = self.V * t ** 3
        out.c = self.c
        out.E = out.merit(F)
        return out

    def residual(self, F) -> float:
        A = self.P.areas
        return float(area_residual(A * (F.sum() / A.sum()), F).max())


def _scaled_polytope(P: ConvexPolytope, t: float) -> ConvexPolytope:
    return replace(P, offsets=t * P.offsets, vertices=t * P.vertices, areas=t * t * P.areas,
                   interior_point=t * P.interior_point, translation=t * P.translation)


class _StageFailure(Exception):
    pass


def _newton_stage(state, F, U, options, tol, max_inner, report, final_F):
    """Damped Newton on E for targets F, warm-started at ``state``.

    Raises _StageFailure when the stage needs more than ``max_inner`` steps
    or the line search keeps cutting the step below 1e-3.
    """
    c = state.c
    state = state.rescaled(F)
    start = state.residual(F)
    for _ in range(max_inner):
        res = state.residual(F)
        if res <= tol:
            return state
        if res > 2.0 * start and res > 10 * tol:
            raise _StageFailure(f"residual grew from {start:.3e} to {res:.3e}")
        if report.iterations >= options.max_iters:
            raise ConvergenceError(
                f"no convergence in {options.max_iters} iterations (residual {res:.3e})", report)
        g = F - c * state.P.areas / state.V
        d = _newton_direction(state.P, F, c, g)
        slope = float(g @ d)
        if not np.isfinite(slope) or slope >= 0:
            d = -g / np.maximum(F, RESIDUAL_FLOOR * F.sum()) * (0.1 * float(np.mean(state.h)))
            slope = float(g @ d)
        cap = STEP_CAP * state.P.diameter
        big = float(np.max(np.abs(d)))
        if big > cap:
            d *= cap / big
            slope *= cap / big
        alpha = 1.0
        while True:
            try:
                trial = _State(U, state.h + alpha * d, F, c)
                if trial.E <= state.E + 1e-4 * alpha * slope:
                    break
            except (EmptyBodyError, DegenerateHullError, UnboundedIntersectionError):
                pass
            alpha *= options.line_search_shrink
            if alpha < MIN_ALPHA:
                raise _StageFailure(f"line search cut the step below {MIN_ALPHA:g}")
        trial = trial.rescaled(F)
        if trial.E > state.E + 1e-12 * abs(state.E):
            raise AssertionError("merit increased across an accepted iteration")
        state = trial
        report.iterations += 1
        report.residual_history.append(state.residual(final_F))
        report.merit_history.append(float(final_F @ state.h) * (c / state.V) ** (1 / 3))
        log.debug("iter %d residual %.3e alpha %.3g", report.iterations,
                  report.residual_history[-1], alpha)
    if state.residual(F) <= tol:
        return state
    raise _StageFailure(f"no convergence in {max_inner} steps")


MIN_STAGE = 1e-4


def solve(problem: MinkowskiProblem, options: SolveOptions | None = None
          ) -> tuple[SupportVector, SolveReport]:
    """Find h whose polytope has facet areas ``problem.targets``.

    Continuation: the targets move linearly from the facet areas of the
    initial polytope (which close exactly) to ``problem.targets``.  Each
    stage is a warm-started damped Newton solve; the stage length halves on
    failure and doubles on success.  The returned support vector is
    translated so the body's volume centroid is the origin, and
    ``report.final_residual`` is recomputed from a fresh realization.
    """
    options = options or SolveOptions()
    problem.validate()
    t0 = time.perf_counter()
    U, F = problem.normals, problem.targets
    total = problem.total
    # with this c the minimizer has total area sum F exactly
    c = (total / (4 * np.pi)) ** 1.5 * (4 * np.pi / 3)
    report = SolveReport()

    if options.initial is not None:
        if len(options.initial) != len(F):
            raise DomainError("initial support vector has the wrong length")
        h0 = options.initial.values
    else:
        h0 = np.full(len(F), np.sqrt(total / (4 * np.pi)))
    state = _State(U, h0, F, c)
    base = state.P.areas * (total / state.P.areas.sum())
    report.residual_history.append(state.residual(F))
    report.merit_history.append(float(F @ state.h) * (c / state.V) ** (1 / 3))

    def finish():
        report.final_residual = report.residual_history[-1]
        report.wall_time = time.perf_counter() - t0

    t, dt = 0.0, 1.0
    while True:
        t_next = min(1.0, t + dt)
        final = t_next >= 1.0
        Ft = F if final else (1.0 - t_next) * base + t_next * F
        try:
            state = _newton_stage(state, Ft, U, options,
                                  tol=options.tol_rel if final else STAGE_TOL,
                                  max_inner=options.max_iters if final and t > 0 else STAGE_STEPS,
                                  report=report, final_F=F)
        except ConvergenceError:
            finish()
            raise
        except _StageFailure as exc:
            log.debug("stage t=%.4g dt=%.3g failed: %s", t, dt, exc)
            if dt < MIN_STAGE:
                finish()
                raise ConditioningError(f"continuation stalled at t={t:.4g}: {exc}", report) from None
            dt *= 0.5
            continue
        log.debug("stage t=%.4g done (%d iterations so far)", t_next, report.iterations)
        if final:
            break
        t = t_next
        dt = min(2.0 * dt, 1.0 - t)

    # the minimizer has areas proportional to F; fix the scale exactly
    s_ = np.sqrt(state.P.areas.sum() / total)
    P = realize(SupportVector(U, state.h / s_))
    P, shift = recenter(P)
    report.final_residual = float(area_residual(facet_areas(P), F).max())
    report.normalization = shift
    report.scale = 1.0 / s_
    report.wall_time = time.perf_counter() - t0
    return P.support, report


def verify_solution(h: SupportVector, problem: MinkowskiProblem) -> dict:
    """Independent re-check of a candidate solution."""
    P = realize(h)
    A = facet_areas(P)
    r = area_residual(A, problem.targets)
    return {
        "max_residual": float(r.max()),
        "mean_residual": float(r.mean()),
        "residuals": r,
        "closure_defect": A @ P.normals,
        "total_area": float(A.sum()),
    }


def initializations(problem: MinkowskiProblem, trials: int) -> list[SupportVector]:
    """Deterministic, distinct starting points for uniqueness probes.

    Trial k is the area-matched sphere scaled by 0.5, 1 or 2, plus (for
    k >= 1) a seeded linear tilt and a quadratic shape perturbation.  Scale
    and tilt alone would be undone by the solver's rescaling and
    recentering, so the quadratic term is what makes the starts differ.
    """
    base = np.sqrt(problem.total / (4 * np.pi))
    U = problem.normals
    rng = np.random.default_rng(12345)
    out = []
    for k in range(trials):
        s = (1.0, 0.5, 2.0)[k % 3]
        vals = np.full(len(U), s * base)
        if k >= 1:
            tilt = unit(rng.normal(size=3))
            A = rng.normal(size=(3, 3))
            A = A + A.T
            A -= np.trace(A) / 3 * np.eye(3)
            A /= np.linalg.norm(A, 2)
            quad = np.einsum("ij,jk,ik->i", U, A, U)
            vals = vals * (1.0 + 0.2 * quad) + U @ (0.3 * s * base * tilt)
        out.append(SupportVector(U, vals))
    return out


def uniqueness_probe(problem: MinkowskiProblem, options: SolveOptions | None = None,
                     trials: int = 3, sample: QuadratureGrid | None = None) -> float:
    """Max pairwise Hausdorff distance between recentered solutions."""
    if trials < 2:
        raise DomainError("uniqueness_probe needs at least 2 trials")
    options = options or SolveOptions()
    sample = sample or build_grid(4)
    bodies = []
    for init in initializations(problem, trials):
        opts = SolveOptions(options.tol_rel, options.max_iters, options.line_search_shrink, init)
        h, _ = solve(problem, opts)
        bodies.append(realize(h))
    worst = 0.0
    for a in range(len(bodies)):
        for b in range(a + 1, len(bodies)):
            worst = max(worst, hausdorff_distance(bodies[a], bodies[b], sample))
    return worst
