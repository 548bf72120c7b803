"""Building new one-step methods out of old ones.

A stepper is just a map (state, h) -> state with a little metadata.  Methods
compose by running substeps with scaled step sizes; the adjoint of a method
is its inverse at negated step; palindromic compositions of a symmetric
second-order method raise the order two at a time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .core import DomainError
from .integrators import (HamiltonianDef, NewtonConfig, hamiltonian_step,
                          hamiltonian_step_endpoint, newton_solve)
from .core import adjoint as map_adjoint
from .core import explicit_euler_map


@dataclass(frozen=True)
class StepperDef:
    """One-step method with declared order and symmetry metadata."""

    step: Callable[[np.ndarray, float], np.ndarray]
    declared_order: int = 1
    symmetric: bool = False
    label: str = ""


def hamiltonian_stepper(m, H, cfg=None, declared_order=None, symmetric=None):
    """Wrap the phase-space scheme of a base map as a stepper.

    Order and symmetry default to what the pointwise symmetry of the map
    implies: symmetric maps give second order, others first.
    """
    if symmetric is None:
        rng = np.random.default_rng(7)
        samples = [(rng.uniform(-1, 1, m.dim), rng.uniform(-0.3, 0.3, m.dim))
                   for _ in range(8)]
        symmetric = pointwise_symmetry_condition(m, samples) < 1e-10
    if declared_order is None:
        declared_order = 2 if symmetric else 1
    n = m.dim

    def step(x, h):
        q, p = hamiltonian_step(m, H, x[:n], x[n:], h, cfg)
        return ad.concat(q, p)

    return StepperDef(step=step, declared_order=declared_order,
                      symmetric=symmetric, label=f"hamiltonian({m.name})")


def endpoint_stepper(m, H, cfg=None):
    """Phase-space endpoint scheme; kept as the non-symplectic control."""
    n = m.dim

    def step(x, h):
        q, p = hamiltonian_step_endpoint(m, H, x[:n], x[n:], h, cfg)
        return ad.concat(q, p)

    return StepperDef(step=step, declared_order=2, symmetric=True,
                      label=f"endpoint({m.name})")


def adjoint_method(s, cfg=None):
    """The inverse method at negated step: s*(x, h) = s^{-1}(x, -h)."""
    cfg = cfg or NewtonConfig()

    def step(x, h):
        x = np.atleast_1d(np.asarray(x))

        def residual(y):
            return np.asarray(s.step(y, -h)) - x

        xv = ad.value_array(x)
        try:
            guess = ad.value_array(np.asarray(s.step(xv, h)))
        except Exception:
            guess = xv
        out = newton_solve(residual, guess, cfg)
        return out if ad.has_dual(out) else ad.value_array(out)

    return StepperDef(step=step, declared_order=s.declared_order,
                      symmetric=s.symmetric, label=f"adjoint({s.label})")


def compose(steppers, gammas, symmetric=None, declared_order=None):
    """Sequential composition with substeps gamma_i * h, gamma_1 first."""
    if len(steppers) != len(gammas):
        raise DomainError("steppers and substep fractions differ in length")
    gammas = [float(g) for g in gammas]

    def step(x, h):
        for s, g in zip(steppers, gammas):
            x = s.step(x, g * h)
        return x

    if symmetric is None:
        palindromic = (gammas == gammas[::-1]
                       and [s.label for s in steppers] == [s.label for s in steppers][::-1])
        symmetric = palindromic and all(s.symmetric for s in steppers)
    if declared_order is None:
        declared_order = min(s.declared_order for s in steppers)
    label = "+".join(f"{g:g}*{s.label}" for s, g in zip(steppers, gammas))
    return StepperDef(step=step, declared_order=declared_order,
                      symmetric=symmetric, label=f"compose({label})")


def stormer_verlet(H, cfg=None):
    """Half step of one one-sided map followed by a half step of its adjoint.

    For separable Hamiltonians this is the classical leapfrog: a momentum
    half-kick, a full drift, and another momentum half-kick.
    """
    euler = explicit_euler_map(H.dim)
    first = hamiltonian_stepper(euler, H, cfg, declared_order=1, symmetric=False)
    second = hamiltonian_stepper(map_adjoint(euler), H, cfg,
                                 declared_order=1, symmetric=False)
    composed = compose([first, second], [0.5, 0.5],
                       symmetric=True, declared_order=2)
    return StepperDef(step=composed.step, declared_order=2, symmetric=True,
                      label="stormer-verlet")


def check_order_conditions(gammas, tol=1e-12):
    """Sum and cube-sum of the substep fractions, and whether both hold."""
    g = np.asarray(gammas, dtype=float)
    total = float(np.sum(g))
    cubes = float(np.sum(g ** 3))
    return total, cubes, abs(total - 1.0) < tol and abs(cubes) < tol


def triple_jump_coefficients(order):
    """Palindromic substep fractions raising an even order by two."""
    if order < 2 or order % 2:
        raise DomainError("triple jump needs a symmetric method of even order")
    root = 2.0 ** (1.0 / (order + 1))
    g1 = 1.0 / (2.0 - root)
    g2 = -root / (2.0 - root)
    return g1, g2, g1


def triple_jump(s):
    """Three substeps turning a symmetric order-2k method into order 2k+2.

    The exponent in the coefficients depends on the incoming order, so the
    construction can be applied repeatedly for order 6, 8, ...
    """
    if not s.symmetric:
        raise DomainError("triple jump requires a symmetric method")
    g1, g2, g3 = triple_jump_coefficients(s.declared_order)
    out = compose([s, s, s], [g1, g2, g3], symmetric=True,
                  declared_order=s.declared_order + 2)
    return StepperDef(step=out.step, declared_order=s.declared_order + 2,
                      symmetric=True, label=f"triple-jump({s.label})")


def pointwise_symmetry_condition(m, samples):
    """Sup over samples of |R(q, v) - swap(R(q, -v))|.

    Zero exactly when the map equals its adjoint, which is the condition
    under which the induced one-step method is symmetric.
    """
    worst = 0.0
    for q, v in samples:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        a = ad.concat(m.r1(q, v), m.r2(q, v))
        b = ad.concat(m.r2(q, -v), m.r1(q, -v))
        worst = max(worst, float(np.max(np.abs(ad.value_array(a) - ad.value_array(b)))))
    return worst


def step_jacobian(step, x, h, fd_step=1e-6):
    """Central-difference Jacobian of one step of a method at state x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = fd_step
        plus = np.asarray(step(x + e, h), dtype=float)
        minus = np.asarray(step(x - e, h), dtype=float)
        cols.append((plus - minus) / (2.0 * fd_step))
    return np.column_stack(cols)


def symplectic_defect(step, x, h, fd_step=1e-6):
    """Max-norm of M^T J M - J for the step Jacobian M (J canonical)."""
    M = step_jacobian(step, x, h, fd_step)
    n = M.shape[0] // 2
    Jc = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    return float(np.max(np.abs(M.T @ Jc @ M - Jc)))
