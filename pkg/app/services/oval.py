# app/services/oval.py
"""Complete Cartesian ovals with foci F (origin) and x."""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from app.config import get_settings
from app.errors import DomainError, EmptyBranchError, ZeroGradientError
from app.models.geometry import (
    DEFAULT_BRANCHES,
    Branch,
    OvalSpec,
    Vec2,
    norm,
    vec2,
)

logger = logging.getLogger(__name__)


# ========= QUADRATICS =========

def solve_quadratic(A: float, B: float, C: float, grazing_tol: float) -> List[Tuple[float, bool]]:
    """Real roots of A z^2 + B z + C = 0 as (root, grazing) pairs.

    The large-magnitude root is formed first and the other one through the
    product of roots. A discriminant within grazing_tol * (B^2 + |4AC|) of
    zero yields a single double root flagged as grazing.
    """
    if A == 0.0:
        raise DomainError("quadratic leading coefficient vanishes")
    disc = B * B - 4.0 * A * C
    band = grazing_tol * (B * B + abs(4.0 * A * C))
    if disc < -band:
        return []
    if disc <= band:
        return [(-B / (2.0 * A), True)]
    q = -0.5 * (B + math.copysign(math.sqrt(disc), B))
    roots = [q / A]
    if q != 0.0:
        roots.append(C / q)
    return [(z, False) for z in sorted(roots)]


# ========= RESIDUALS & MEMBERSHIP =========

def _distances(y: Vec2, spec: OvalSpec) -> Tuple[float, float]:
    return norm(y), norm(y - spec.x)


def bipolar_residual(y: Vec2, spec: OvalSpec, branch: Branch) -> float:
    r, s = _distances(y, spec)
    n1, n2 = spec.media.n1, spec.media.n2
    if branch is Branch.INTERIOR:
        value = n1 * r + n2 * s
    elif branch is Branch.EXTERIOR:
        value = -n1 * r + n2 * s
    else:
        value = n1 * r - n2 * s
    return value - 2.0 * spec.a


def membership_scale(a: float) -> float:
    return 1.0 + 2.0 * a


def contains(
    y: Vec2,
    spec: OvalSpec,
    tol: Optional[float] = None,
    branches: Sequence[Branch] = DEFAULT_BRANCHES,
) -> Optional[Branch]:
    """First branch (interior, exterior, reversed order) the point lies on."""
    if tol is None:
        tol = get_settings().membership_tol
    if not tol > 0:
        raise DomainError(f"membership tolerance must be positive, got {tol}")
    bound = tol * membership_scale(spec.a)
    for branch in Branch:
        if branch in branches and abs(bipolar_residual(y, spec, branch)) <= bound:
            return branch
    return None


def residual_gradient(y: Vec2, spec: OvalSpec, branch: Branch) -> Vec2:
    r, s = _distances(y, spec)
    if r == 0.0 or s == 0.0:
        raise ZeroGradientError(f"residual is not differentiable at a focus (y={y.tolist()})")
    n1, n2 = spec.media.n1, spec.media.n2
    towards_y = y / r
    away_from_x = (y - spec.x) / s
    if branch is Branch.INTERIOR:
        grad = n1 * towards_y + n2 * away_from_x
    elif branch is Branch.EXTERIOR:
        grad = -n1 * towards_y + n2 * away_from_x
    else:
        grad = n1 * towards_y - n2 * away_from_x
    if norm(grad) < 1e-14 * (n1 + n2):
        raise ZeroGradientError(f"residual gradient vanishes at y={y.tolist()}")
    return grad


# ========= POLAR FORM =========

def _require_axis(spec: OvalSpec) -> float:
    spec.media.require_distinct()
    d = norm(spec.x)
    if d == 0.0:
        raise DomainError("foci coincide (|x| = 0); the polar axis F->x is undefined")
    return d


def polar_radii(
    spec: OvalSpec,
    phi: float,
    tol: Optional[float] = None,
    branches: Sequence[Branch] = DEFAULT_BRANCHES,
) -> List[Tuple[float, Branch]]:
    """Positive radii along the ray from F at angle phi from the F->x axis.

    Both squared quadratics (n2|y-x| = +-(2a -+ n1 r)) are solved, so every
    sign pattern of the complete oval is visited; roots are kept only when a
    branch equation is satisfied.
    """
    d = _require_axis(spec)
    settings = get_settings()
    if tol is None:
        tol = settings.membership_tol
    n1, n2, a = spec.media.n1, spec.media.n2, spec.a
    theta = math.atan2(spec.x[1], spec.x[0])
    direction = vec2(math.cos(phi + theta), math.sin(phi + theta))
    p = d * math.cos(phi)
    A = n2 * n2 - n1 * n1
    C = n2 * n2 * d * d - 4.0 * a * a
    found: List[Tuple[float, Branch]] = []
    for B in (4.0 * a * n1 - 2.0 * n2 * n2 * p, -4.0 * a * n1 - 2.0 * n2 * n2 * p):
        for r, _ in solve_quadratic(A, B, C, settings.grazing_tol):
            if r <= 0.0:
                continue
            branch = contains(r * direction, spec, tol, branches)
            if branch is None:
                continue
            if any(b is branch and abs(r - q) <= 1e-12 * (1.0 + r) for q, b in found):
                continue
            found.append((r, branch))
    return sorted(found, key=lambda item: item[0])


# ========= POLYLINES =========

# +1 when the branch residual increases along rays from the pole.
_MONOTONE_SENSE = {
    True: {Branch.INTERIOR: 1, Branch.EXTERIOR: 1, Branch.REVERSED: -1},  # n2 > n1, pole x
    False: {Branch.INTERIOR: 1, Branch.EXTERIOR: -1, Branch.REVERSED: 1},  # n1 > n2, pole F
}


def oval_pole(spec: OvalSpec) -> Vec2:
    """Focus from which every loop is star-shaped."""
    return spec.x.copy() if spec.media.n2 > spec.media.n1 else np.zeros(2)


def oval_polyline(
    spec: OvalSpec,
    branch: Branch,
    m: Optional[int] = None,
    tol: Optional[float] = None,
) -> np.ndarray:
    """m vertices of the closed loop, ordered by angle around the pole."""
    settings = get_settings()
    if m is None:
        m = settings.oval_resolution
    if tol is None:
        tol = settings.membership_tol
    if m < 16:
        raise DomainError(f"oval polyline needs at least 16 vertices, got {m}")
    _require_axis(spec)

    n1, n2 = spec.media.n1, spec.media.n2
    pole = oval_pole(spec)
    sense = _MONOTONE_SENSE[n2 > n1][branch]
    start = bipolar_residual(pole, spec, branch)
    if sense * start >= 0.0:
        raise EmptyBranchError(
            f"{branch.value} loop of the oval with x={spec.x.tolist()}, a={spec.a} has no real points"
        )

    reach = abs(start) / abs(n2 - n1)
    hi = reach * (1.0 + 1e-9) + 1e-12
    theta = math.atan2(spec.x[1], spec.x[0])
    bound = tol * membership_scale(spec.a)
    vertices = []
    for k in range(m):
        angle = theta + 2.0 * math.pi * k / m
        direction = vec2(math.cos(angle), math.sin(angle))

        def along(rho: float) -> float:
            return bipolar_residual(pole + rho * direction, spec, branch)

        rho = brentq(along, 0.0, hi, xtol=1e-15 * (1.0 + hi), rtol=4 * np.finfo(float).eps, maxiter=200)
        y = pole + rho * direction
        if abs(bipolar_residual(y, spec, branch)) > bound:
            logger.warning(f"oval vertex {k} misses the {branch.value} loop beyond tolerance")
            continue
        vertices.append(y)
    return np.array(vertices)
