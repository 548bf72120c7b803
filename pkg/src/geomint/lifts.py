"""Lifting discretization maps to velocity and phase space.

The tangent lift pushes a map on Q to one on TQ by differentiating it and
reshuffling slots with the canonical flip of TTQ.  The cotangent lift pushes
it to T*Q through the standard chain of symplectomorphisms (the Tulczyjew
isomorphism on one side, the product-of-phase-spaces identification on the
other), which is what makes the resulting one-step methods symplectic.

Slot and sign conventions (pinned by unit tests):

* a lifted map on TQ has state (q, qdot) and fiber (v, vdot);
* a lifted map on T*Q has state (q, p) and fiber (qdot, pdot);
* momenta are row vectors acting by right multiplication on Jacobian
  blocks, so "divide by the Jacobian" means solving the transposed system;
* the closed-form inverse of the cotangent lift reads
  (q0, p0; q1, p1) -> (q, s_v, v, s_q) with (q, v) the base inverse and
  (s_q, s_v) = (-p0, p1) . DR(q, v).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .core import (DiscretizationMapDef, DomainError, InversionError,
                   TangentPoint, eval_stacked, invert, jacobian_at)


@dataclass(frozen=True)
class CotangentPoint:
    """A point with an attached momentum covector, (q, p)."""

    base: np.ndarray
    mom: np.ndarray

    def __post_init__(self):
        base = np.atleast_1d(np.asarray(self.base))
        mom = np.atleast_1d(np.asarray(self.mom))
        if base.size != mom.size:
            raise DomainError("base and momentum must have equal length")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "mom", mom)

    @property
    def dim(self):
        return self.base.size


@dataclass(frozen=True)
class PhaseTangent:
    """Tangent vector to phase space: (q, p) with velocity (qdot, pdot)."""

    q: np.ndarray
    p: np.ndarray
    qdot: np.ndarray
    pdot: np.ndarray

    def __post_init__(self):
        arrs = {}
        n = None
        for name in ("q", "p", "qdot", "pdot"):
            a = np.atleast_1d(np.asarray(getattr(self, name)))
            if n is None:
                n = a.size
            elif a.size != n:
                raise DomainError("phase tangent slots must have equal length")
            arrs[name] = a
        for name, a in arrs.items():
            object.__setattr__(self, name, a)

    @property
    def dim(self):
        return self.q.size


# canonical reshuffles ---------------------------------------------------------

def canonical_flip(q, v, qdot, vdot):
    """Involution of TTQ swapping the two bundle structures: middle slots swap."""
    q, v, qdot, vdot = (np.atleast_1d(np.asarray(a)) for a in (q, v, qdot, vdot))
    if not q.size == v.size == qdot.size == vdot.size:
        raise DomainError("all four slots must have equal length")
    return q, qdot, v, vdot


def tulczyjew_alpha(pt):
    """TT*Q -> T*TQ slot permutation: (q, p, qdot, pdot) -> (q, qdot, pdot, p)."""
    pt = pt if isinstance(pt, PhaseTangent) else PhaseTangent(*pt)
    return pt.q, pt.qdot, pt.pdot, pt.p


def tulczyjew_alpha_inv(q, v, p_q, p_v):
    """Inverse permutation: (q, v, p_q, p_v) -> PhaseTangent(q, p_v, v, p_q)."""
    q, v, p_q, p_v = (np.atleast_1d(np.asarray(a)) for a in (q, v, p_q, p_v))
    return PhaseTangent(q, p_v, v, p_q)


def cotangent_product(a0, a1):
    """Pack two phase points into a covector on Q x Q: (q0, q1, -p0, p1)."""
    a0 = a0 if isinstance(a0, CotangentPoint) else CotangentPoint(*a0)
    a1 = a1 if isinstance(a1, CotangentPoint) else CotangentPoint(*a1)
    if a0.dim != a1.dim:
        raise DomainError("both phase points must have equal dimension")
    return a0.base, a1.base, -a0.mom, a1.mom


def cotangent_product_inv(q0, q1, m0, p1):
    """Inverse packing: (q0, q1, -p0, p1) -> pair of CotangentPoints."""
    q0, q1, m0, p1 = (np.atleast_1d(np.asarray(a)) for a in (q0, q1, m0, p1))
    return CotangentPoint(q0, -m0), CotangentPoint(q1, p1)


# lifts -------------------------------------------------------------------------

def tangent_lift(m):
    """Lift a map on Q to one on TQ (dimension doubles).

    Forward: state (q, qdot), fiber (v, vdot) map to the base images paired
    with the pushforward DR(q, v) . (qdot, vdot).  The inverse solves the
    base inversion for (q, v), then one linear solve recovers the fiber.
    """
    n = m.dim

    def component(which, z, w):
        q, qd, v, vd = z[:n], z[n:], w[:n], w[n:]
        J = jacobian_at(m, q, v)
        rows = J[:n] if which == 1 else J[n:]
        point = m.r1(q, v) if which == 1 else m.r2(q, v)
        fiber = ad.mat_vec(rows[:, :n], qd) + ad.mat_vec(rows[:, n:], vd)
        return ad.concat(point, fiber)

    def inverse(z0, z1):
        x0, u0, x1, u1 = z0[:n], z0[n:], z1[:n], z1[n:]
        tp = invert(m, x0, x1)
        fib = ad.solve_linear(jacobian_at(m, tp.base, tp.vel), ad.concat(u0, u1))
        return TangentPoint(ad.concat(tp.base, fib[:n]),
                            ad.concat(tp.vel, fib[n:]))

    guard = None
    if m.domain_guard is not None:
        guard = lambda z, w, _g=m.domain_guard, _n=n: _g(z[:_n], w[:_n])
    return DiscretizationMapDef(
        dim=2 * n,
        r1=lambda z, w: component(1, z, w),
        r2=lambda z, w: component(2, z, w),
        inverse=inverse,
        domain_guard=guard,
        name=f"tangent-lift({m.name})",
    )


def cotangent_lift(m):
    """Lift a map on Q to phase space T*Q (dimension doubles).

    Forward: with J = DR(q, qdot), the covector row (pdot, p) is divided by
    J and distributed over the two outputs, the first with a sign flip.
    Inverse: closed form via the base inverse and one row-times-Jacobian
    product, avoiding any nested solve.

    Lifting an already-lifted map is mechanically possible but has no test
    coverage here; treat that combination as experimental.
    """
    n = m.dim

    def component(which, z, w):
        q, p, qd, pd = z[:n], z[n:], w[:n], w[n:]
        J = jacobian_at(m, q, qd)
        s = ad.solve_linear(np.asarray(J).T, ad.concat(pd, p))
        if which == 1:
            return ad.concat(m.r1(q, qd), -s[:n])
        return ad.concat(m.r2(q, qd), s[n:])

    def inverse(z0, z1):
        pt = cotangent_lift_inverse(m, z0[:n], z0[n:], z1[:n], z1[n:])
        return TangentPoint(ad.concat(pt.q, pt.p), ad.concat(pt.qdot, pt.pdot))

    guard = None
    if m.domain_guard is not None:
        guard = lambda z, w, _g=m.domain_guard, _n=n: _g(z[:_n], w[:_n])
    return DiscretizationMapDef(
        dim=2 * n,
        r1=lambda z, w: component(1, z, w),
        r2=lambda z, w: component(2, z, w),
        inverse=inverse,
        domain_guard=guard,
        name=f"cotangent-lift({m.name})",
    )


def cotangent_lift_inverse(m, q0, p0, q1, p1):
    """Closed-form inverse of the cotangent lift, as a PhaseTangent.

    Computes the base inverse (q, v), multiplies the row (-p0, p1) by the
    base Jacobian there, and unshuffles slots:  result (q, s_v, v, s_q).
    """
    tp = invert(m, q0, q1)
    J = jacobian_at(m, tp.base, tp.vel)
    s = ad.vec_mat(ad.concat(-np.atleast_1d(np.asarray(p0)),
                             np.atleast_1d(np.asarray(p1))), J)
    n = m.dim
    return tulczyjew_alpha_inv(tp.base, tp.vel, s[:n], s[n:])


# pairing ------------------------------------------------------------------------

def tangent_pairing(v, w, base_tol=1e-8):
    """Pair a phase-space tangent with an element of TTQ.

    ``w`` is given in natural TTQ slots (x, u, xdot, udot): a velocity
    (xdot, udot) attached to the point (x, u) of TQ.  Compatibility requires
    (x, u) to match the projected tangent (q, qdot) of ``v``; the value is
    then pdot . xdot + p . udot.
    """
    v = v if isinstance(v, PhaseTangent) else PhaseTangent(*v)
    x, u, xdot, udot = (np.atleast_1d(np.asarray(a)) for a in w)
    if x.size != v.dim:
        raise DomainError("dimension mismatch between the two arguments")
    base_gap = max(np.max(np.abs(ad.value_array(x) - ad.value_array(v.q))),
                   np.max(np.abs(ad.value_array(u) - ad.value_array(v.qdot))))
    if base_gap > base_tol:
        raise DomainError(f"base points do not match (gap {base_gap:.3e})")
    return np.dot(v.pdot, xdot) + np.dot(v.p, udot)


# structural checks ---------------------------------------------------------------

def symplectic_product_form(a, b):
    """Difference-of-area form on (T*Q)^2 applied to two 4n tangents."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = a.size // 4
    aq0, ap0, aq1, ap1 = a[:n], a[n:2 * n], a[2 * n:3 * n], a[3 * n:]
    bq0, bp0, bq1, bp1 = b[:n], b[n:2 * n], b[2 * n:3 * n], b[3 * n:]
    omega1 = np.dot(aq1, bp1) - np.dot(ap1, bq1)
    omega0 = np.dot(aq0, bp0) - np.dot(ap0, bq0)
    return omega1 - omega0


def tangent_omega_form(d1, d2):
    """Complete lift of the canonical form on TT*Q: dq^dpdot + dqdot^dp."""
    d1 = np.asarray(d1)
    d2 = np.asarray(d2)
    n = d1.size // 4
    q1, p1, qd1, pd1 = d1[:n], d1[n:2 * n], d1[2 * n:3 * n], d1[3 * n:]
    q2, p2, qd2, pd2 = d2[:n], d2[n:2 * n], d2[2 * n:3 * n], d2[3 * n:]
    return (np.dot(q1, pd2) - np.dot(pd1, q2)
            + np.dot(qd1, p2) - np.dot(p1, qd2))


def cotangent_lift_pullback_defect(m, z, w, d1, d2):
    """How far the lifted map is from preserving the two symplectic forms.

    Evaluates Omega12(DL d1, DL d2) - dT omega(d1, d2) at the 4n point
    (state z, fiber w); zero for every valid base map.
    """
    n2 = 2 * m.dim
    lift = cotangent_lift(m)
    full = ad.concat(z, w)
    J = ad.value_array(ad.jacobian_fwd(
        lambda u: ad.concat(lift.r1(u[:n2], u[n2:]), lift.r2(u[:n2], u[n2:])), full))
    img1 = J @ np.asarray(d1, dtype=float)
    img2 = J @ np.asarray(d2, dtype=float)
    return float(symplectic_product_form(img1, img2) - tangent_omega_form(d1, d2))
