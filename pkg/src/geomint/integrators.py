"""One-step integrators generated by discretization maps.

Every scheme here is an implicit fixed-point condition solved by damped
Newton with forward-AD Jacobians.  The map decides the method: the midpoint
map yields the implicit midpoint rule, the one-sided maps yield the two
symplectic Euler variants, a two-parameter explicit family on velocity space
yields the classical structural-dynamics update, and so on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import NewtonError
from .core import (DiscretizationMapDef, DomainError, GeomintError,
                   TangentPoint, invert, jacobian_at)
from .lifts import cotangent_lift, cotangent_lift_inverse


# system definitions ------------------------------------------------------------

@dataclass(frozen=True)
class VectorFieldDef:
    """First-order field x' = X(x) on an n-dimensional chart."""

    dim: int
    x_of: Callable[[np.ndarray], np.ndarray]
    name: str = ""


@dataclass(frozen=True)
class SodeDef:
    """Second-order field q'' = gamma(q, q')."""

    dim: int
    gamma: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = ""


@dataclass(frozen=True)
class HamiltonianDef:
    """Scalar energy function H(q, p) on phase space."""

    dim: int
    h_of: Callable[[np.ndarray, np.ndarray], float]
    name: str = ""

    def grad(self, q, p):
        """(dH/dq, dH/dp) as a single 2n vector."""
        n = self.dim
        return ad.gradient(lambda u: self.h_of(u[:n], u[n:]), ad.concat(q, p))


@dataclass(frozen=True)
class LagrangianDef:
    """Scalar Lagrangian L(q, v); optionally with its momentum map.

    ``legendre(q, v) -> p`` and ``legendre_inv(q, p) -> v`` may be supplied
    for speed; otherwise the fiber derivative is taken by AD and inverted by
    Newton, which requires dL/dv to be a local diffeomorphism in v.
    """

    dim: int
    l_of: Callable[[np.ndarray, np.ndarray], float]
    legendre: Optional[Callable] = None
    legendre_inv: Optional[Callable] = None
    name: str = ""


@dataclass
class NewtonStats:
    """Mutable accumulator for solver effort; attach one per trajectory."""

    solves: int = 0
    iterations: int = 0

    def record(self, iters):
        self.solves += 1
        self.iterations += iters

    @property
    def mean_iterations(self):
        return self.iterations / self.solves if self.solves else 0.0


@dataclass
class NewtonConfig:
    """Solver knobs shared by all implicit steps."""

    tol: float = 1e-12
    max_iter: int = 50
    jacobian_mode: str = "ad"        # "ad" | "fd"
    fd_step: float = 1e-7
    jac_refresh: str = "every"       # "every" | "once"
    stats: Optional[NewtonStats] = None

    def __post_init__(self):
        if self.tol <= 0:
            raise DomainError("Newton tolerance must be positive")
        if self.jacobian_mode not in ("ad", "fd"):
            raise DomainError(f"unknown jacobian_mode {self.jacobian_mode!r}")


_DEFAULT_CFG = NewtonConfig()


def _state(x):
    """Coerce to a 1-d array, keeping dual entries when present."""
    x = np.atleast_1d(np.asarray(x))
    return x if x.dtype == object else x.astype(float)


def _out(x):
    """Strip dual bookkeeping only when none of the entries carry duals."""
    x = np.atleast_1d(np.asarray(x))
    return x if ad.has_dual(x) else ad.value_array(x)


@dataclass
class Trajectory:
    """A computed discrete orbit plus per-step solver diagnostics."""

    states: np.ndarray
    h: float
    newton_iters: list = field(default_factory=list)
    energies: Optional[np.ndarray] = None

    @property
    def n_steps(self):
        return len(self.states) - 1


def _fd_jacobian(f, x, step):
    x = np.asarray(x, dtype=float)
    n = x.size
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        cols.append((np.asarray(f(x + e), dtype=float)
                     - np.asarray(f(x - e), dtype=float)) / (2.0 * step))
    return np.column_stack(cols)


def newton_solve(residual, guess, cfg=None):
    """Solve residual(x) = 0; returns the root to cfg.tol in the max norm."""
    cfg = cfg or _DEFAULT_CFG
    jac = None
    if cfg.jacobian_mode == "fd":
        jac = lambda x: _fd_jacobian(residual, ad.value_array(x), cfg.fd_step)
    root, iters = ad.newton_root(residual, guess, tol=cfg.tol,
                                 max_iter=cfg.max_iter, jac=jac,
                                 jac_refresh=cfg.jac_refresh)
    if cfg.stats is not None:
        cfg.stats.record(iters)
    return root


# first-order equations ----------------------------------------------------------

def ode_step(m, X, xk, h, cfg=None):
    """One step of the first-order scheme induced by a map on Q.

    Solves R1(z, h X(z)) = x_k for the base point z and advances to
    R2(z, h X(z)); the midpoint map reproduces the implicit midpoint rule.
    """
    xk = _state(xk)

    def residual(z):
        return np.asarray(m.r1(z, h * np.atleast_1d(np.asarray(X.x_of(z))))) - xk

    z = newton_solve(residual, ad.value_array(xk), cfg)
    return _out(m.r2(z, h * np.atleast_1d(np.asarray(X.x_of(z)))))


# second-order equations ----------------------------------------------------------

def _sode_field(gamma, q, v):
    return ad.concat(v, np.atleast_1d(np.asarray(gamma.gamma(q, v))))


def sode_step_endpoint(m_tq, gamma, qk, vk, h, cfg=None):
    """Endpoint discretization of a second-order equation on TQ.

    Matches the second output of the map at the known endpoint against the
    first output at the unknown one, with the field entering through the
    scaled fiber (h v, h gamma(q, v)).
    """
    n = m_tq.dim // 2
    qk = _state(qk)
    vk = _state(vk)
    zk = ad.concat(qk, vk)
    lhs = np.asarray(m_tq.r2(zk, h * _sode_field(gamma, qk, vk)))

    def residual(y):
        return np.asarray(m_tq.r1(y, h * _sode_field(gamma, y[:n], y[n:]))) - lhs

    acc = ad.value_array(np.atleast_1d(np.asarray(gamma.gamma(qk, vk))))
    guess = np.concatenate([ad.value_array(qk) + h * ad.value_array(vk),
                            ad.value_array(vk) + h * acc])
    y = _out(newton_solve(residual, guess, cfg))
    return y[:n], y[n:]


def sode_step_midbase(m_tq, gamma, qk, vk, h, cfg=None):
    """Base-point discretization of a second-order equation on TQ.

    Requires the inverted pair to equal the scaled field evaluated at the
    recovered base point of the inversion.
    """
    n = m_tq.dim // 2
    qk = _state(qk)
    vk = _state(vk)
    zk = ad.concat(qk, vk)

    def residual(y):
        tp = invert(m_tq, zk, y)
        return tp.vel - h * _sode_field(gamma, tp.base[:n], tp.base[n:])

    acc = ad.value_array(np.atleast_1d(np.asarray(gamma.gamma(qk, vk))))
    guess = np.concatenate([ad.value_array(qk) + h * ad.value_array(vk),
                            ad.value_array(vk) + h * acc])
    y = _out(newton_solve(residual, guess, cfg))
    return y[:n], y[n:]


def sode_commutativity_residual(m, gamma, samples):
    """Whether evolving then projecting matches projecting then evolving.

    Evaluates R2(T R1 . field) - R1(T R2 . field) over TangentPoint samples;
    affine maps in v give zero, which is what makes their tangent lift define
    a two-point position recursion.
    """
    n = m.dim
    worst = 0.0
    for z in samples:
        q, v = z.base, z.vel
        field = _sode_field(gamma, q, v)
        J = jacobian_at(m, q, v)
        a = m.r2(np.asarray(m.r1(q, v)), ad.mat_vec(J[:n], field))
        b = m.r1(np.asarray(m.r2(q, v)), ad.mat_vec(J[n:], field))
        worst = max(worst, float(np.max(np.abs(ad.value_array(a) - ad.value_array(b)))))
    return worst


def newmark_map(gamma, beta, h, dim=1):
    """Two-parameter explicit map on TQ generating the classical
    structural-dynamics update when used with the endpoint scheme.

    gamma = 1/2, beta = 1/4 coincides with the tangent lift of the midpoint
    map (checked in the tests).
    """
    c = 0.5 * h * (gamma - 2.0 * beta)
    n = dim

    def r1(z, w):
        q, v, qd, vd = z[:n], z[n:], w[:n], w[n:]
        return ad.concat(q - 0.5 * qd + c * vd, v - gamma * vd)

    def r2(z, w):
        q, v, qd, vd = z[:n], z[n:], w[:n], w[n:]
        return ad.concat(q + 0.5 * qd + c * vd, v + (1.0 - gamma) * vd)

    def inverse(z0, z1):
        q0, v0, q1, v1 = z0[:n], z0[n:], z1[:n], z1[n:]
        qd = q1 - q0
        vd = v1 - v0
        v = (1.0 - gamma) * v0 + gamma * v1
        q = 0.5 * (q0 + q1) - c * vd
        return TangentPoint(ad.concat(q, v), ad.concat(qd, vd))

    eye = np.eye(n)
    zero = np.zeros((n, n))
    jac = np.block([
        [eye, zero, -0.5 * eye, c * eye],
        [zero, eye, zero, -gamma * eye],
        [eye, zero, 0.5 * eye, c * eye],
        [zero, eye, zero, (1.0 - gamma) * eye],
    ])
    return DiscretizationMapDef(
        dim=2 * n,
        r1=r1,
        r2=r2,
        inverse=inverse,
        jacobian=lambda z, w, _j=jac: _j,
        name=f"newmark({gamma:g},{beta:g})",
    )


# Hamiltonian steps -----------------------------------------------------------------

def hamiltonian_step(m, H, qk, pk, h, cfg=None):
    """Symplectic one-step method on T*Q induced by a base map on Q.

    The inverted cotangent lift of the map at the unknown pair must equal h
    times the Hamiltonian field at the recovered phase point.  Symplecticity
    is automatic because the lift preserves the relevant two-forms.
    """
    n = m.dim
    qk = _state(qk)
    pk = _state(pk)

    def residual(y):
        pt = cotangent_lift_inverse(m, qk, pk, y[:n], y[n:])
        g = H.grad(pt.q, pt.p)
        return ad.concat(pt.qdot - h * g[n:], pt.pdot + h * g[:n])

    g0 = ad.value_array(H.grad(ad.value_array(qk), ad.value_array(pk)))
    guess = np.concatenate([ad.value_array(qk) + h * g0[n:],
                            ad.value_array(pk) - h * g0[:n]])
    y = _out(newton_solve(residual, guess, cfg))
    return y[:n], y[n:]


def hamiltonian_step_endpoint(m, H, qk, pk, h, cfg=None):
    """Endpoint scheme on phase space; a negative control, not symplectic.

    Matches the second lifted output at the known point against the first at
    the unknown one, with fiber h X_H.  Symmetric and second order for the
    midpoint map, but it does not preserve the symplectic form.
    """
    n = m.dim
    lift = cotangent_lift(m)
    qk = _state(qk)
    pk = _state(pk)
    zk = ad.concat(qk, pk)

    def x_h(z):
        g = H.grad(z[:n], z[n:])
        return ad.concat(g[n:], -g[:n])

    lhs = np.asarray(lift.r2(zk, h * x_h(zk)))

    def residual(y):
        return np.asarray(lift.r1(y, h * x_h(y))) - lhs

    g0 = ad.value_array(H.grad(ad.value_array(qk), ad.value_array(pk)))
    guess = np.concatenate([ad.value_array(qk) + h * g0[n:],
                            ad.value_array(pk) - h * g0[:n]])
    y = _out(newton_solve(residual, guess, cfg))
    return y[:n], y[n:]


# Lagrangian side ----------------------------------------------------------------------

def legendre_transform(L, q, v):
    """Fiber derivative p = dL/dv(q, v)."""
    if L.legendre is not None:
        return np.atleast_1d(np.asarray(L.legendre(q, v)))
    return ad.gradient(lambda vv: L.l_of(q, vv), np.atleast_1d(np.asarray(v)))


def legendre_inverse(L, q, p, cfg=None):
    """Velocity with momentum p at q; Newton on the fiber derivative if needed."""
    if L.legendre_inv is not None:
        return np.atleast_1d(np.asarray(L.legendre_inv(q, p)))
    p = np.atleast_1d(np.asarray(p))

    def residual(v):
        return legendre_transform(L, q, v) - p

    cfg = cfg or _DEFAULT_CFG
    root, iters = ad.newton_root(residual, ad.value_array(p), tol=cfg.tol,
                                 max_iter=cfg.max_iter)
    if cfg.stats is not None:
        cfg.stats.record(iters)
    return root


def hamiltonian_from_lagrangian(L, cfg=None):
    """Energy H(q, p) = <p, v(q, p)> - L(q, v(q, p)) of a regular Lagrangian."""

    def h_of(q, p):
        v = legendre_inverse(L, q, p, cfg)
        return np.dot(p, v) - L.l_of(q, v)

    return HamiltonianDef(dim=L.dim, h_of=h_of, name=f"legendre({L.name})")


def lagrangian_step(m, L, qk, vk, h, cfg=None):
    """Advance a regular Lagrangian system symplectically via phase space.

    Converts to momenta with the fiber derivative, takes a Hamiltonian step
    for the associated energy, and converts back.
    """
    qk = _state(qk)
    p = _out(legendre_transform(L, qk, _state(vk)))
    H = hamiltonian_from_lagrangian(L, cfg)
    q1, p1 = hamiltonian_step(m, H, qk, p, h, cfg)
    v1 = _out(legendre_inverse(L, q1, p1, cfg))
    return q1, v1


def lagrangian_lift(m, L, cfg=None):
    """The velocity-space map carrying a base map through the momentum charts.

    Conjugates the cotangent lift by the fiber derivative of L: push the
    velocity state to phase space (differentiating the fiber map for the
    lifted slots), apply the lifted map, pull each output back.  For the
    midpoint map and a constant-mass mechanical Lagrangian this equals the
    tangent lift (checked in the tests).
    """
    n = L.dim

    def to_phase(z, w):
        q, v, qd, vd = z[:n], z[n:], w[:n], w[n:]

        def fl(u):
            return ad.concat(u[:n], legendre_transform(L, u[:n], u[n:]))

        zp, wp = ad.jvp(fl, ad.concat(q, v), ad.concat(qd, vd))
        return zp, wp

    def component(which, z, w):
        zp, wp = to_phase(z, w)
        lift = cotangent_lift(m)
        out = lift.r1(zp, wp) if which == 1 else lift.r2(zp, wp)
        vel = legendre_inverse(L, out[:n], out[n:], cfg)
        return ad.concat(out[:n], vel)

    return DiscretizationMapDef(
        dim=2 * n,
        r1=lambda z, w: component(1, z, w),
        r2=lambda z, w: component(2, z, w),
        name=f"lagrangian-lift({m.name},{L.name})",
    )


# discrete variational calculus ----------------------------------------------------------

def discrete_lagrangian(m, L, h):
    """Two-point action generator: h L(q, v/h) at the inverted pair.

    The 1/h rescaling acts on the velocity slot only (fiberwise scaling over
    the base point of the inversion).
    """

    def l_d(q0, q1):
        tp = invert(m, np.atleast_1d(np.asarray(q0)), np.atleast_1d(np.asarray(q1)))
        return h * L.l_of(tp.base, tp.vel / h)

    return l_d


def _d1(l_d, q0, q1):
    return ad.gradient(lambda u: l_d(u, q1), np.atleast_1d(np.asarray(q0)))


def _d2(l_d, q0, q1):
    return ad.gradient(lambda u: l_d(q0, u), np.atleast_1d(np.asarray(q1)))


def variational_step(m, L, q_prev, q_k, h, cfg=None):
    """Advance the two-point recursion of the discrete action.

    Solves D1 Ld(q_k, q_next) + D2 Ld(q_prev, q_k) = 0 for q_next.
    """
    l_d = discrete_lagrangian(m, L, h)
    q_prev = _state(q_prev)
    q_k = _state(q_k)
    const = _d2(l_d, q_prev, q_k)

    def residual(qn):
        return _d1(l_d, q_k, qn) + const

    guess = 2.0 * ad.value_array(q_k) - ad.value_array(q_prev)
    return _out(newton_solve(residual, guess, cfg))


def momentum_match(m, L, qk, pk, h, cfg=None):
    """One step of the position-momentum form of the discrete action flow.

    Solves p_k = -D1 Ld(q_k, q_next) for q_next, then reads off
    p_next = D2 Ld(q_k, q_next).
    """
    l_d = discrete_lagrangian(m, L, h)
    qk = _state(qk)
    pk = _state(pk)

    def residual(qn):
        return _d1(l_d, qk, qn) + pk

    guess = ad.value_array(qk) + h * ad.value_array(
        legendre_inverse(L, ad.value_array(qk), ad.value_array(pk), cfg))
    q_next = _out(newton_solve(residual, guess, cfg))
    p_next = _out(_d2(l_d, qk, q_next))
    return q_next, p_next


# trajectory driver ------------------------------------------------------------------------

def integrate(step, x0, h, n_steps, energy=None, stats=None):
    """Iterate a one-step map, recording states and optional energies."""
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    states = [x.copy()]
    iters = []
    for _ in range(n_steps):
        before = (stats.solves, stats.iterations) if stats is not None else None
        x = np.atleast_1d(np.asarray(step(x, h), dtype=float))
        states.append(x.copy())
        if before is not None:
            ds = stats.solves - before[0]
            iters.append((stats.iterations - before[1]) / ds if ds else 0.0)
    traj = Trajectory(states=np.array(states), h=h, newton_iters=iters)
    if energy is not None:
        traj.energies = np.array([energy(s) for s in traj.states])
    return traj
