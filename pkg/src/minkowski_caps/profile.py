"""Equilibrium data and the singular curvature densities f_n = 1/kappa_n.

For punctures p_j with weights a_j (sum a_j p_j = 0) and an index n, the
density is 1 away from the caps B(p_j, 2/n), a large constant on each inner
cap B(p_j, 1/n), and a radial transition on each annulus A(p_j, 1/n) whose
flux balances the cap, so that the total sum w f u vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, linprog

from .errors import (DomainError, FluxUnreachableError, InfeasibleEquilibriumError,
                     ResolutionError)
from .spherical import QuadratureGrid, spherical_angle, unit

EQUILIBRIUM_TOL = 1e-10
CLOSURE_TOL = 1e-9
MIN_CAP_NODES = 12
MIN_ANNULUS_NODES = 8
DISJOINT_MARGIN = 1.1


@dataclass(frozen=True, eq=False)
class PunctureSet:
    """Directions p_j and positive weights a_j in equilibrium."""

    points: np.ndarray
    weights: np.ndarray
    tol_eq: float = EQUILIBRIUM_TOL

    def __post_init__(self):
        points = unit(np.atleast_2d(np.asarray(self.points, float)))
        weights = np.asarray(self.weights, float).reshape(-1)
        if len(points) != len(weights):
            raise DomainError(f"{len(weights)} weights for {len(points)} points")
        if len(points) == 1:
            raise DomainError("a single puncture admits no solution (m = 1)")
        if len(points) < 2:
            raise DomainError("at least two punctures are required")
        if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
            raise DomainError("weights must be strictly positive")
        ang = spherical_angle(points[:, None, :], points[None, :, :])
        iu = np.triu_indices(len(points), 1)
        if np.any(ang[iu] <= 1e-6):
            raise DomainError("puncture points must be pairwise distinct")
        defect = float(np.linalg.norm(weights @ points))
        if defect > self.tol_eq * max(1.0, float(weights.sum())):
            raise DomainError(f"points and weights are not in equilibrium (|sum a p| = {defect:.3e})")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.weights)

    @classmethod
    def from_points(cls, points) -> "PunctureSet":
        pts = unit(np.atleast_2d(np.asarray(points, float)))
        return cls(pts, find_equilibrium_weights(pts))


def _separating_direction(points) -> np.ndarray | None:
    """w maximizing min_j <w, p_j> over the unit box, if that min is >= 0."""
    m = len(points)
    res = linprog(c=[0, 0, 0, -1.0],
                  A_ub=np.hstack([-points, np.ones((m, 1))]), b_ub=np.zeros(m),
                  bounds=[(-1, 1)] * 3 + [(None, 1)], method="highs")
    if res.status == 0 and -res.fun >= -1e-12:
        w = res.x[:3]
        if np.linalg.norm(w) > 1e-12:
            return unit(w)
    return None


def find_equilibrium_weights(points) -> np.ndarray:
    """Minimum-norm weights a >= 1 with sum a_j p_j = 0, rescaled so min a = 1.

    Dykstra's alternating projections between the affine set {P^T a = 0}
    and the box {a >= 1} locate the active set; an exact KKT solve on that
    active set finishes.
    """
    pts = unit(np.atleast_2d(np.asarray(points, float)))
    m = len(pts)
    if m < 2:
        raise DomainError("at least two points are required")
    ang = spherical_angle(pts[:, None, :], pts[None, :, :])
    if np.any(ang[np.triu_indices(m, 1)] <= 1e-6):
        raise DomainError("points must be pairwise distinct")

    feas = linprog(c=np.ones(m), A_eq=pts.T, b_eq=np.zeros(3),
                   bounds=[(1, None)] * m, method="highs")
    if feas.status != 0:
        w = _separating_direction(pts)
        raise InfeasibleEquilibriumError(
            "no equilibrium weights exist: the origin is not interior to the "
            "positive hull of the points", direction=w)

    proj = np.eye(m) - pts @ np.linalg.pinv(pts.T @ pts) @ pts.T
    x = np.zeros(m)
    p_inc = np.zeros(m)
    q_inc = np.zeros(m)
    for _ in range(200_000):
        y = proj @ (x + p_inc)
        p_inc = x + p_inc - y
        x_new = np.maximum(y + q_inc, 1.0)
        q_inc = y + q_inc - x_new
        scale = max(1.0, float(np.max(x_new)))
        done = (np.max(np.abs(y - x_new)) < 1e-12 * scale
                and np.max(np.abs(x_new - x)) < 1e-15 * scale)
        x = x_new
        if done:
            break

    a = _kkt_polish(pts, x)
    if a is None:
        a = proj @ x
    if np.min(a) <= 0:
        raise InfeasibleEquilibriumError("no equilibrium weights exist", _separating_direction(pts))
    a = a / a.min()
    if np.linalg.norm(a @ pts) > EQUILIBRIUM_TOL:
        # re-project once more after normalization
        a = a - pts @ np.linalg.lstsq(pts.T, pts.T @ a, rcond=None)[0]
        a = a / a.min()
    # weights on the lower bound are exactly 1, not 1 + roundoff
    a[np.abs(a - 1.0) <= 1e-12] = 1.0
    return a


def _kkt_polish(pts, x):
    """Exact min-norm solution given the active set suggested by ``x``."""
    m = len(pts)
    active = x <= 1.0 + 1e-9 * max(1.0, float(x.max()))
    for _ in range(m + 1):
        k = int(active.sum())
        # unknowns: a (m), nu (3) for P^T a = 0, eta (k) for a_active = 1
        E = np.zeros((k, m))
        E[np.arange(k), np.flatnonzero(active)] = 1.0
        top = np.hstack([np.eye(m), pts, -E.T])
        mid = np.hstack([pts.T, np.zeros((3, 3 + k))])
        bot = np.hstack([E, np.zeros((k, 3 + k))])
        K = np.vstack([top, mid, bot])
        rhs = np.concatenate([np.zeros(m + 3), np.ones(k)])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        a, eta = sol[:m], sol[m + 3:]
        if np.max(np.abs(K @ sol - rhs)) > 1e-9:
            return None
        if np.any(a[~active] < 1.0 - 1e-12):
            active |= a < 1.0 - 1e-12
            continue
        if np.any(eta < -1e-10):
            idx = np.flatnonzero(active)[np.argmin(eta)]
            active[idx] = False
            continue
        return a
    return None


def _pairwise_disjoint(points, n) -> bool:
    if 2.0 / n >= 1.0:
        return len(points) <= 1
    need = DISJOINT_MARGIN * 2.0 * math.asin(2.0 / n)
    ang = spherical_angle(points[:, None, :], points[None, :, :])
    return bool(np.all(ang[np.triu_indices(len(points), 1)] > need))


def minimum_n(punctures: PunctureSet) -> int:
    """Smallest n with 1/n^2 < 3 a_j / (4 pi) and disjoint closed caps B(p_j, 2/n)."""
    amin = float(punctures.weights.min())
    n = 1
    while True:
        if 1.0 / n ** 2 < 3.0 * amin / (4.0 * math.pi) and _pairwise_disjoint(punctures.points, n):
            return n
        n += 1


def smoothstep(x):
    """Quintic smoothstep 6x^5 - 15x^4 + 10x^3 on [0, 1] (C^2 at both ends)."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


@dataclass(frozen=True)
class TransitionProfile:
    """f(s) = 1 + (lam - 1) * S((2r - s)/r)**shape_param on s = sin(angle)."""

    r: float
    lam: float
    mu: float
    shape_param: float
    epsilon: float

    def __call__(self, s):
        return profile_value(s, self.r, self.lam, self.shape_param)


def profile_value(s, r, lam, theta):
    s = np.asarray(s, float)
    x = (2.0 * r - s) / r
    core = smoothstep(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(core > 0, core ** theta, 0.0)
    out = 1.0 + (lam - 1.0) * val
    out = np.where(s <= r, lam, out)
    return np.where(s >= 2.0 * r, 1.0, out)


def _polar(grid: QuadratureGrid, q):
    c = grid.nodes @ q
    s = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
    return c, s


def _annulus_flux(w, c, s, r, lam, theta) -> float:
    return float(np.sum(w * profile_value(s, r, lam, theta) * c))


def solve_transition(r: float, lam: float, mu: float, grid: QuadratureGrid, q) -> TransitionProfile:
    """Shape parameter giving discrete annulus flux ``mu`` along ``q``."""
    if not 0.0 < r <= 0.25:
        raise DomainError(f"r must lie in (0, 1/4], got {r}")
    if not lam > 1.0:
        raise DomainError(f"lambda must exceed 1, got {lam}")
    q = unit(q)
    c, s = _polar(grid, q)
    ann = (c > 0) & (s > r) & (s < 2 * r)
    if ann.sum() < MIN_ANNULUS_NODES:
        raise ResolutionError(
            f"annulus A(q, {r:.4g}) holds {int(ann.sum())} nodes, need {MIN_ANNULUS_NODES}")
    w, c, s = grid.weights[ann], c[ann], s[ann]
    lo_flux = float(np.sum(w * c))
    hi_flux = lam * lo_flux
    if not lo_flux < mu < hi_flux:
        raise FluxUnreachableError(
            f"flux target unreachable on this grid: mu={mu:.6g} not in "
            f"({lo_flux:.6g}, {hi_flux:.6g})")

    def gap(log_theta):
        return _annulus_flux(w, c, s, r, lam, math.exp(log_theta)) - mu

    a, b = -3.0, 3.0
    while gap(a) <= 0:
        a -= 3.0
        if a < -60:
            raise FluxUnreachableError("flux target unreachable on this grid (near upper end)")
    while gap(b) >= 0:
        b += 3.0
        if b > 60:
            raise FluxUnreachableError("flux target unreachable on this grid (near lower end)")
    if not gap(a) > gap(b):
        raise AssertionError("annulus flux is not decreasing in the shape parameter")
    root = brentq(gap, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    theta = math.exp(root)
    if abs(gap(root)) > 1e-8 * mu:
        raise FluxUnreachableError(f"flux solve residual {abs(gap(root)):.3e} too large")
    return TransitionProfile(r=r, lam=lam, mu=mu, shape_param=theta, epsilon=r / 4.0)


@dataclass(frozen=True, eq=False)
class DensityField:
    """Per-node values of f_n on a grid, plus the pieces that built it.

    ``region`` labels each node: 0 for Sigma_n, j+1 for annulus j and
    -(j+1) for cap j.  ``correction`` is the vector e of the closure fix
    f = 1 + max(0, <u, e>) applied on Sigma_n (zero when not needed).
    """

    grid: QuadratureGrid
    values: np.ndarray
    n: int
    punctures: PunctureSet | None
    profiles: tuple = ()
    cap_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    region: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    correction: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mode: str = "discrete"

    @property
    def kappa(self) -> np.ndarray:
        return 1.0 / self.values

    @property
    def mass(self) -> float:
        return float(self.grid.weights @ self.values)


def closure_defect(field: DensityField) -> np.ndarray:
    """sum_i w_i f(u_i) u_i."""
    return (field.grid.weights * field.values) @ field.grid.nodes


def _closure_correction(nodes, weights, residual, scale) -> np.ndarray:
    """e with sum w max(0, <u, e>) u = -residual over the given nodes."""
    e = -residual * 3.0 / (2.0 * math.pi)
    for _ in range(100):
        d = nodes @ e
        pos = d > 0
        r = (weights[pos] * d[pos]) @ nodes[pos] + residual
        if np.linalg.norm(r) <= 1e-15 * scale:
            break
        J = (nodes[pos].T * weights[pos]) @ nodes[pos]
        e = e - np.linalg.solve(J, r)
    return e


def build_density(grid: QuadratureGrid, punctures: PunctureSet | None, n: int,
                  mode: str = "discrete") -> DensityField:
    """Assemble f_n on ``grid``.

    ``mode="nominal"`` uses cap value a_j n^2/pi and annulus flux 4 pi/n^2
    as printed.  ``mode="discrete"`` imposes the same two identities on the
    quadrature instead: the cap value makes sum_cap w f <u, p_j> = a_j and
    the annulus flux equals the grid's sum over B(p_j, 2/n) of w <u, p_j>.
    Either way a final closure fix on Sigma_n makes sum w f u vanish.
    """
    if mode not in ("discrete", "nominal"):
        raise DomainError(f"unknown density mode {mode!r}")
    values = np.ones(len(grid))
    region = np.zeros(len(grid), dtype=int)
    if punctures is None or len(punctures) == 0:
        return DensityField(grid, values, int(n), None, region=region, mode=mode)
    n0 = minimum_n(punctures)
    if n < max(n0, 4):
        raise DomainError(f"n={n} is below the admissible minimum {max(n0, 4)}")
    r = 1.0 / n
    profiles, caps = [], []
    for j, (p, a) in enumerate(zip(punctures.points, punctures.weights)):
        c, s = _polar(grid, p)
        cap = (c > 0) & (s < r)
        big = (c > 0) & (s < 2 * r)
        ann = big & (s > r)
        if cap.sum() < MIN_CAP_NODES:
            raise ResolutionError(
                f"cap B(p_{j}, 1/{n}) holds {int(cap.sum())} nodes, need {MIN_CAP_NODES}")
        if mode == "nominal":
            lam = a * n * n / math.pi
            mu = 4.0 * math.pi / n ** 2
        else:
            lam = a / float(grid.weights[cap] @ c[cap])
            mu = float(grid.weights[big] @ c[big])
        prof = solve_transition(r, lam, mu, grid, p)
        values[cap] = lam
        values[ann] = prof(s[ann])
        region[ann] = j + 1
        region[cap] = -(j + 1)
        profiles.append(prof)
        caps.append(lam)

    field_ = DensityField(grid, values, int(n), punctures)
    residual = closure_defect(field_)
    sigma = region == 0
    mass = float(grid.weights @ values)
    e = np.zeros(3)
    # a defect already at roundoff level is left alone so Sigma_n keeps f = 1 exactly
    if np.linalg.norm(residual) > 1e-12 * mass:
        e = _closure_correction(grid.nodes[sigma], grid.weights[sigma], residual, scale=mass)
        values[sigma] = 1.0 + np.maximum(0.0, grid.nodes[sigma] @ e)
    out = DensityField(grid, values, int(n), punctures, tuple(profiles),
                       np.array(caps), region, e, mode)
    defect = float(np.linalg.norm(closure_defect(out)))
    if defect > CLOSURE_TOL * out.mass:
        raise AssertionError(f"closure correction failed: defect {defect:.3e}")
    return out
