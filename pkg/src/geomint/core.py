"""Discretization maps: the two-point generalization of retraction maps.

A discretization map sends a point-and-velocity pair (q, v) to two nearby
points (R1(q, v), R2(q, v)) such that v = 0 collapses to the diagonal and the
difference of the fiber derivatives at v = 0 is the identity.  Those two
properties make the map locally invertible around the zero section, which is
what the integrators in this package exploit.

Conventions: Jacobians are laid out as row blocks [R1; R2] over column
blocks [q; v], i.e. a (2n, 2n) matrix with J[:n, :n] = dR1/dq and so on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import NewtonError


class GeomintError(Exception):
    """Base class for errors raised by this package."""


class DomainError(GeomintError):
    """Input rejected: outside a map's declared validity region."""


class InversionError(GeomintError):
    """Map inversion failed; carries the final Newton residual norm."""

    def __init__(self, message, residual_norm=float("inf")):
        super().__init__(message)
        self.residual_norm = residual_norm


def _as_vec(x, dim=None, what="vector"):
    arr = np.atleast_1d(np.asarray(x))
    if arr.ndim != 1:
        raise DomainError(f"{what} must be one-dimensional, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise DomainError(f"{what} has length {arr.size}, expected {dim}")
    if arr.dtype != object and not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class Point:
    """A point of the configuration space in chart coordinates."""

    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_vec(self.coords, what="point"))

    @property
    def dim(self):
        return self.coords.size


@dataclass(frozen=True)
class TangentPoint:
    """A point with an attached velocity, (q, v)."""

    base: np.ndarray
    vel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base", _as_vec(self.base, what="base point"))
        object.__setattr__(self, "vel", _as_vec(self.vel, self.base.size, "velocity"))

    @property
    def dim(self):
        return self.base.size


@dataclass(frozen=True)
class RetractionDef:
    """Classical retraction r(x, v) with r(x, 0) = x and D_v r(x, 0) = Id."""

    dim: int
    r: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "retraction"


@dataclass(frozen=True)
class DiscretizationMapDef:
    """Two-point discretization map with optional analytic extras.

    ``inverse`` maps a nearby pair (x0, x1) back to a TangentPoint and
    ``jacobian`` returns the (2n, 2n) derivative in the documented block
    layout.  Both fall back to Newton / forward-mode AD when absent.
    ``domain_guard(q, v) -> bool`` restricts the usable neighborhood.
    """

    dim: int
    r1: Callable[[np.ndarray, np.ndarray], np.ndarray]
    r2: Callable[[np.ndarray, np.ndarray], np.ndarray]
    inverse: Optional[Callable] = None
    jacobian: Optional[Callable] = None
    domain_guard: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError(f"map dimension must be positive, got {self.dim}")


@dataclass(frozen=True)
class ValidityReport:
    """Result of checking the two defining properties on sampled points."""

    identity_defect: float
    rigidity_defect: float
    n_samples: int
    tol: float

    @property
    def passed(self):
        return self.identity_defect < self.tol and self.rigidity_defect < self.tol

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}: |R(q,0)-(q,q)| <= {self.identity_defect:.3e}, "
                f"|(dR2/dv - dR1/dv)(q,0) - I| <= {self.rigidity_defect:.3e} "
                f"on {self.n_samples} samples (tol {self.tol:.1e})")


# evaluation -----------------------------------------------------------------

def _check_guard(m, q, v):
    if m.domain_guard is not None:
        if not m.domain_guard(ad.value_array(q), ad.value_array(v)):
            raise DomainError(f"input outside the validity region of map '{m.name}'")


def eval_pair(m, z):
    """Evaluate the map at a TangentPoint, returning the two image Points."""
    z = z if isinstance(z, TangentPoint) else TangentPoint(*z)
    if z.dim != m.dim:
        raise DomainError(f"point dimension {z.dim} != map dimension {m.dim}")
    _check_guard(m, z.base, z.vel)
    return Point(np.asarray(m.r1(z.base, z.vel))), Point(np.asarray(m.r2(z.base, z.vel)))


def eval_stacked(m, q, v):
    """Both components as one 2n vector; no domain guard (solver internal)."""
    return ad.concat(m.r1(q, v), m.r2(q, v))


def invert(m, x0, x1, tol=1e-12, max_iter=50):
    """Recover the TangentPoint mapping to (x0, x1).

    Uses the analytic inverse when supplied, otherwise Newton on the stacked
    residual with initial guess q = x0, v = x1 - x0.  Dual-transparent.
    """
    n = m.dim
    x0 = np.atleast_1d(np.asarray(x0))
    x1 = np.atleast_1d(np.asarray(x1))
    if m.inverse is not None:
        out = m.inverse(x0, x1)
        return out if isinstance(out, TangentPoint) else TangentPoint(*out)
    target = ad.concat(x0, x1)

    def residual(u):
        return eval_stacked(m, u[:n], u[n:]) - target

    guess = ad.concat(x0, x1 - x0)
    try:
        root, _ = ad.newton_root(residual, guess, tol=tol, max_iter=max_iter)
    except NewtonError as exc:
        raise InversionError(
            f"could not invert map '{m.name}' near the given pair "
            f"(residual {exc.residual_norm:.3e})",
            residual_norm=exc.residual_norm) from exc
    return TangentPoint(root[:n], root[n:])


def jacobian(m, z):
    """The (2n, 2n) derivative at a TangentPoint (analytic or forward AD)."""
    z = z if isinstance(z, TangentPoint) else TangentPoint(*z)
    n = m.dim
    if m.jacobian is not None:
        return np.asarray(m.jacobian(z.base, z.vel))
    return ad.jacobian_fwd(lambda u: eval_stacked(m, u[:n], u[n:]),
                           ad.concat(z.base, z.vel))


def jacobian_at(m, q, v):
    """Jacobian from raw coordinate arrays (dual-transparent)."""
    if m.jacobian is not None:
        return np.asarray(m.jacobian(q, v))
    n = m.dim
    return ad.jacobian_fwd(lambda u: eval_stacked(m, u[:n], u[n:]), ad.concat(q, v))


# constructors ----------------------------------------------------------------

def from_retraction(r, theta):
    """Discretization map (r(x, -theta v), r(x, (1-theta) v)) from a retraction."""
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"theta must lie in [0, 1], got {theta}")
    return DiscretizationMapDef(
        dim=r.dim,
        r1=lambda q, v, _t=theta: r.r(q, -_t * v),
        r2=lambda q, v, _t=theta: r.r(q, (1.0 - _t) * v),
        name=f"{r.name}-split({theta:g})",
    )


def adjoint(m):
    """Swap the two outputs and negate the velocity argument."""
    n = m.dim

    def inv(x0, x1, _m=m):
        tp = invert(_m, x1, x0)
        return TangentPoint(tp.base, -tp.vel)

    def jac(q, v, _m=m):
        J = jacobian_at(_m, q, -v)
        out = np.empty_like(np.asarray(J))
        out[:n, :n] = J[n:, :n]
        out[:n, n:] = -J[n:, n:]
        out[n:, :n] = J[:n, :n]
        out[n:, n:] = -J[:n, n:]
        return out

    guard = None
    if m.domain_guard is not None:
        guard = lambda q, v, _g=m.domain_guard: _g(q, -v)
    return DiscretizationMapDef(
        dim=n,
        r1=lambda q, v, _m=m: _m.r2(q, -v),
        r2=lambda q, v, _m=m: _m.r1(q, -v),
        inverse=inv if m.inverse is not None else None,
        jacobian=jac if m.jacobian is not None else None,
        domain_guard=guard,
        name=f"adjoint({m.name})",
    )


# built-in flat-space maps -----------------------------------------------------

def explicit_euler_map(dim=1):
    """(x, x + v): the one-sided map behind the explicit Euler method."""
    return DiscretizationMapDef(
        dim=dim,
        r1=lambda q, v: q + 0.0 * v,
        r2=lambda q, v: q + v,
        inverse=lambda x0, x1: TangentPoint(x0, x1 - x0),
        jacobian=lambda q, v, _n=dim: _theta_jacobian(0.0, _n),
        name="explicit-euler",
    )


def midpoint_map(dim=1):
    """(x - v/2, x + v/2): the symmetric map behind the implicit midpoint rule."""
    return DiscretizationMapDef(
        dim=dim,
        r1=lambda q, v: q - 0.5 * v,
        r2=lambda q, v: q + 0.5 * v,
        inverse=lambda x0, x1: TangentPoint(0.5 * (x0 + x1), x1 - x0),
        jacobian=lambda q, v, _n=dim: _theta_jacobian(0.5, _n),
        name="midpoint",
    )


def symplectic_euler_map(dim=1):
    """(x - v, x): adjoint of the explicit Euler map; gives symplectic Euler."""
    return DiscretizationMapDef(
        dim=dim,
        r1=lambda q, v: q - v,
        r2=lambda q, v: q + 0.0 * v,
        inverse=lambda x0, x1: TangentPoint(x1, x1 - x0),
        jacobian=lambda q, v, _n=dim: _theta_jacobian(1.0, _n),
        name="symplectic-euler",
    )


def theta_map(theta, dim=1):
    """(x - theta v, x + (1 - theta) v) for theta in [0, 1]."""
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"theta must lie in [0, 1], got {theta}")
    return DiscretizationMapDef(
        dim=dim,
        r1=lambda q, v, _t=theta: q - _t * v,
        r2=lambda q, v, _t=theta: q + (1.0 - _t) * v,
        inverse=lambda x0, x1, _t=theta: TangentPoint(x0 + _t * (x1 - x0), x1 - x0),
        jacobian=lambda q, v, _t=theta, _n=dim: _theta_jacobian(_t, _n),
        name=f"theta({theta:g})",
    )


def _theta_jacobian(theta, n):
    eye = np.eye(n)
    top = np.hstack([eye, -theta * eye])
    bot = np.hstack([eye, (1.0 - theta) * eye])
    return np.vstack([top, bot])


# checks ----------------------------------------------------------------------

def sample_tangent_points(dim, n_samples, rng, radius=0.5):
    """Random TangentPoints with base in [-1, 1]^n and |v| <= radius."""
    out = []
    for _ in range(n_samples):
        q = rng.uniform(-1.0, 1.0, size=dim)
        v = rng.uniform(-radius, radius, size=dim)
        out.append(TangentPoint(q, v))
    return out


def is_symmetric(m, samples, tol=1e-10):
    """Whether the map equals its adjoint on the samples; returns (bool, sup)."""
    m_adj = adjoint(m)
    worst = 0.0
    for z in samples:
        a = eval_stacked(m, z.base, z.vel)
        b = eval_stacked(m_adj, z.base, z.vel)
        worst = max(worst, float(np.max(np.abs(ad.value_array(a) - ad.value_array(b)))))
    return worst < tol, worst


def validate(m, sample_points=None, n_samples=100, seed=0, tol=1e-9):
    """Check the two defining properties at sampled base points.

    Property 1 compares R(q, 0) against the diagonal; property 2 compares
    the difference of the fiber derivative blocks at v = 0 with the identity
    (forward AD unless an analytic Jacobian is supplied).
    """
    n = m.dim
    if sample_points is None:
        rng = np.random.default_rng(seed)
        sample_points = [rng.uniform(-1.0, 1.0, size=n) for _ in range(n_samples)]
    eye = np.eye(n)
    zero = np.zeros(n)
    identity_defect = 0.0
    rigidity_defect = 0.0
    for q in sample_points:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        pair = eval_stacked(m, q, zero)
        identity_defect = max(identity_defect, float(np.max(np.abs(
            ad.value_array(pair) - np.concatenate([q, q])))))
        J = ad.value_array(jacobian_at(m, q, zero))
        rigidity_defect = max(rigidity_defect, float(np.max(np.abs(
            J[n:, n:] - J[:n, n:] - eye))))
    return ValidityReport(identity_defect, rigidity_defect, len(sample_points), tol)


def probe_invert_radius(m, q=None, start=0.05, factor=1.25, max_radius=16.0,
                        round_trip_tol=1e-8, seed=0):
    """Empirical largest |v| at which invert(eval_pair) still round-trips.

    The defining properties only promise invertibility near the zero section;
    this reports where a concrete map actually stops working.
    """
    rng = np.random.default_rng(seed)
    if q is None:
        q = rng.uniform(-1.0, 1.0, size=m.dim)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    direction = rng.normal(size=m.dim)
    direction /= np.linalg.norm(direction)
    radius = start
    good = 0.0
    while radius <= max_radius:
        v = radius * direction
        try:
            if m.domain_guard is not None and not m.domain_guard(q, v):
                break
            x0, x1 = m.r1(q, v), m.r2(q, v)
            tp = invert(m, x0, x1)
            err = max(np.max(np.abs(ad.value_array(tp.base) - q)),
                      np.max(np.abs(ad.value_array(tp.vel) - v)))
            if err > round_trip_tol:
                break
        except (GeomintError, NewtonError):
            break
        good = radius
        radius *= factor
    return good
