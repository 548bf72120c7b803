"""Forward-mode automatic differentiation on dual numbers.

Scalars are wrapped in :class:`Dual`, which carries a tuple of first
derivatives against a fixed seed basis.  Vectors are plain numpy arrays of
dtype ``object`` holding duals, so ordinary numpy expressions (``+``, ``*``,
``np.dot``, ``np.sin`` on elements) differentiate transparently.

Passes can be nested: every seeding operation draws a fresh tag from a global
counter and mixed-tag arithmetic treats the dual with the lower tag as a
constant of the higher pass.  That is what makes second derivatives (and
Newton solves whose inputs already carry duals) come out right.

Also provided: generic dense linear solves and a damped Newton iteration that
both work on duals, since numpy.linalg does not.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

_TAGS = itertools.count(1)


class NewtonError(Exception):
    """Newton iteration failed to converge; carries the final residual norm."""

    def __init__(self, message, residual_norm=float("inf"), iterations=0):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.iterations = iterations


def value(x):
    """Strip all dual structure from a scalar, returning a float."""
    while isinstance(x, Dual):
        x = x.val
    return float(x)


def value_array(x):
    """Float array of the value parts of ``x`` (any mix of floats/duals)."""
    arr = np.asarray(x)
    if arr.dtype != object:
        return np.asarray(arr, dtype=float)
    return np.array([value(e) for e in arr.ravel()], dtype=float).reshape(arr.shape)


def _has_dual(x):
    arr = np.asarray(x)
    if arr.dtype != object:
        return False
    return any(isinstance(e, Dual) for e in arr.ravel())


has_dual = _has_dual


class Dual:
    """Scalar with value and first derivatives against the seeds of one pass."""

    __slots__ = ("tag", "val", "eps")

    def __init__(self, tag, val, eps):
        self.tag = tag
        self.val = val
        self.eps = eps

    def __repr__(self):
        return f"Dual({self.val!r}, eps={self.eps!r})"

    # arithmetic ----------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            if other.tag == self.tag:
                return Dual(self.tag, self.val + other.val,
                            tuple(a + b for a, b in zip(self.eps, other.eps)))
            if other.tag > self.tag:
                return Dual(other.tag, self + other.val, other.eps)
        return Dual(self.tag, self.val + other, self.eps)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            if other.tag == self.tag:
                return Dual(self.tag, self.val - other.val,
                            tuple(a - b for a, b in zip(self.eps, other.eps)))
            if other.tag > self.tag:
                return Dual(other.tag, self - other.val, tuple(-b for b in other.eps))
        return Dual(self.tag, self.val - other, self.eps)

    def __rsub__(self, other):
        return Dual(self.tag, other - self.val, tuple(-a for a in self.eps))

    def __mul__(self, other):
        if isinstance(other, Dual):
            if other.tag == self.tag:
                return Dual(self.tag, self.val * other.val,
                            tuple(a * other.val + self.val * b
                                  for a, b in zip(self.eps, other.eps)))
            if other.tag > self.tag:
                return Dual(other.tag, self * other.val, tuple(self * b for b in other.eps))
        return Dual(self.tag, self.val * other, tuple(a * other for a in self.eps))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            if other.tag == self.tag:
                q = self.val / other.val
                return Dual(self.tag, q,
                            tuple((a - q * b) / other.val
                                  for a, b in zip(self.eps, other.eps)))
            if other.tag > self.tag:
                q = self / other.val
                return Dual(other.tag, q, tuple(-(q / other.val) * b for b in other.eps))
        return Dual(self.tag, self.val / other, tuple(a / other for a in self.eps))

    def __rtruediv__(self, other):
        q = other / self.val
        return Dual(self.tag, q, tuple(-(q / self.val) * a for a in self.eps))

    def __pow__(self, n):
        if isinstance(n, Dual):
            return _exp(n * _log(self))
        if n == 0:
            return Dual(self.tag, self.val ** 0, tuple(0.0 * a for a in self.eps))
        w = _pow(self.val, n - 1)
        return Dual(self.tag, w * self.val, tuple(n * w * a for a in self.eps))

    def __rpow__(self, base):
        return _exp(self * _log(base))

    def __neg__(self):
        return Dual(self.tag, -self.val, tuple(-a for a in self.eps))

    def __pos__(self):
        return self

    def __abs__(self):
        return self if value(self) >= 0.0 else -self

    # comparisons act on value parts (used for pivoting and branch guards)

    def __lt__(self, other):
        return value(self) < _cmp_val(other)

    def __le__(self, other):
        return value(self) <= _cmp_val(other)

    def __gt__(self, other):
        return value(self) > _cmp_val(other)

    def __ge__(self, other):
        return value(self) >= _cmp_val(other)

    # elementary functions (numpy ufuncs on object arrays call these methods)

    def sin(self):
        return Dual(self.tag, _sin(self.val), tuple(_cos(self.val) * a for a in self.eps))

    def cos(self):
        return Dual(self.tag, _cos(self.val), tuple(-_sin(self.val) * a for a in self.eps))

    def tan(self):
        t = _tan(self.val)
        w = 1.0 + t * t
        return Dual(self.tag, t, tuple(w * a for a in self.eps))

    def sqrt(self):
        s = _sqrt(self.val)
        return Dual(self.tag, s, tuple(a / (2.0 * s) for a in self.eps))

    def exp(self):
        e = _exp(self.val)
        return Dual(self.tag, e, tuple(e * a for a in self.eps))

    def log(self):
        return Dual(self.tag, _log(self.val), tuple(a / self.val for a in self.eps))

    def arctan(self):
        w = 1.0 / (1.0 + self.val * self.val)
        return Dual(self.tag, _arctan(self.val), tuple(w * a for a in self.eps))


def _cmp_val(x):
    return value(x) if isinstance(x, Dual) else x


# dispatchers usable on floats, duals and arrays of either ------------------

def _make_dispatch(name, scalar_fn):
    def dispatch(x):
        if isinstance(x, Dual):
            return getattr(x, name)()
        if isinstance(x, np.ndarray):
            if x.dtype != object:
                return getattr(np, name)(x)
            out = np.empty(x.shape, dtype=object)
            for idx, e in np.ndenumerate(x):
                out[idx] = dispatch(e)
            return out
        return scalar_fn(x)
    dispatch.__name__ = name
    return dispatch


_sin = _make_dispatch("sin", math.sin)
_cos = _make_dispatch("cos", math.cos)
_tan = _make_dispatch("tan", math.tan)
_sqrt = _make_dispatch("sqrt", math.sqrt)
_exp = _make_dispatch("exp", math.exp)
_log = _make_dispatch("log", math.log)
_arctan = _make_dispatch("arctan", math.atan)


def _pow(x, n):
    return x ** n if isinstance(x, Dual) else float(x) ** n


sin, cos, tan, sqrt, exp, log, arctan = _sin, _cos, _tan, _sqrt, _exp, _log, _arctan


def norm2(x):
    """Euclidean norm of a 1-d array, differentiable through duals."""
    return _sqrt(np.dot(x, x))


# array helpers -------------------------------------------------------------

def concat(*parts):
    """Concatenate 1-d arrays, staying dtype=object if any part needs it."""
    arrs = [np.atleast_1d(np.asarray(p)) for p in parts]
    if any(a.dtype == object for a in arrs):
        out = np.empty(sum(a.size for a in arrs), dtype=object)
        k = 0
        for a in arrs:
            for e in a:
                out[k] = e
                k += 1
        return out
    return np.concatenate(arrs)


def mat_vec(A, x):
    """A @ x for float or object operands."""
    A = np.asarray(A)
    x = np.asarray(x)
    if A.dtype != object and x.dtype != object:
        return A @ x
    m, n = A.shape
    out = np.empty(m, dtype=object)
    for i in range(m):
        acc = A[i, 0] * x[0]
        for j in range(1, n):
            acc = acc + A[i, j] * x[j]
        out[i] = acc
    return out


def vec_mat(x, A):
    """Row vector times matrix, x @ A, for float or object operands."""
    A = np.asarray(A)
    x = np.asarray(x)
    if A.dtype != object and x.dtype != object:
        return x @ A
    m, n = A.shape
    out = np.empty(n, dtype=object)
    for j in range(n):
        acc = x[0] * A[0, j]
        for i in range(1, m):
            acc = acc + x[i] * A[i, j]
        out[j] = acc
    return out


def mat_mat(A, B):
    """A @ B for float or object operands."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.dtype != object and B.dtype != object:
        return A @ B
    m, k = A.shape
    _, n = B.shape
    out = np.empty((m, n), dtype=object)
    for i in range(m):
        for j in range(n):
            acc = A[i, 0] * B[0, j]
            for t in range(1, k):
                acc = acc + A[i, t] * B[t, j]
            out[i, j] = acc
    return out


def solve_linear(A, b):
    """Solve A x = b with partial pivoting; works on dual-valued entries.

    ``b`` may be a vector or a matrix.  Raises NewtonError on a numerically
    singular pivot since callers treat that as a failed solve.
    """
    A = np.asarray(A)
    b = np.asarray(b)
    if A.dtype != object and b.dtype != object:
        try:
            return np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise NewtonError(f"singular linear system: {exc}") from exc
    n = A.shape[0]
    M = [[A[i, j] for j in range(n)] for i in range(n)]
    vec = b.ndim == 1
    B = [[b[i]] for i in range(n)] if vec else [[b[i, j] for j in range(b.shape[1])] for i in range(n)]
    ncol = len(B[0])
    for k in range(n):
        piv = max(range(k, n), key=lambda i: abs(value(M[i][k]) if isinstance(M[i][k], Dual) else M[i][k]))
        pval = M[piv][k]
        if abs(value(pval) if isinstance(pval, Dual) else pval) < 1e-300:
            raise NewtonError("singular linear system (zero pivot)")
        if piv != k:
            M[k], M[piv] = M[piv], M[k]
            B[k], B[piv] = B[piv], B[k]
        for i in range(k + 1, n):
            fac = M[i][k] / M[k][k]
            for j in range(k + 1, n):
                M[i][j] = M[i][j] - fac * M[k][j]
            for j in range(ncol):
                B[i][j] = B[i][j] - fac * B[k][j]
    X = [[None] * ncol for _ in range(n)]
    for j in range(ncol):
        for i in range(n - 1, -1, -1):
            acc = B[i][j]
            for t in range(i + 1, n):
                acc = acc - M[i][t] * X[t][j]
            X[i][j] = acc / M[i][i]
    if vec:
        out = np.empty(n, dtype=object)
        for i in range(n):
            out[i] = X[i][0]
        return out
    out = np.empty((n, ncol), dtype=object)
    for i in range(n):
        for j in range(ncol):
            out[i, j] = X[i][j]
    return out


# differentiation entry points ----------------------------------------------

def _seed_all(x, tag):
    x = np.atleast_1d(np.asarray(x))
    n = x.size
    seeded = np.empty(n, dtype=object)
    for j in range(n):
        eps = tuple(1.0 if k == j else 0.0 for k in range(n))
        seeded[j] = Dual(tag, x[j], eps)
    return seeded, n


def _extract_rows(out, tag, n):
    out = np.atleast_1d(np.asarray(out, dtype=object)).ravel()
    rows = []
    for y in out:
        if isinstance(y, Dual) and y.tag == tag:
            rows.append(list(y.eps))
        else:
            rows.append([0.0] * n)
    return rows


def jacobian_fwd(f, x):
    """Jacobian of vector function ``f`` at ``x``: J[i, j] = df_i/dx_j.

    Exact to roundoff.  If ``x`` already carries duals from an enclosing
    pass, the returned entries keep that outer structure.
    """
    tag = next(_TAGS)
    seeded, n = _seed_all(x, tag)
    rows = _extract_rows(f(seeded), tag, n)
    return np.array(rows) if not any(isinstance(e, Dual) for r in rows for e in r) \
        else np.array(rows, dtype=object)


def gradient(f, x):
    """Gradient of scalar function ``f`` at ``x``."""
    tag = next(_TAGS)
    seeded, n = _seed_all(x, tag)
    y = f(seeded)
    if isinstance(y, Dual) and y.tag == tag:
        eps = list(y.eps)
    else:
        eps = [0.0] * n
    if any(isinstance(e, Dual) for e in eps):
        out = np.empty(n, dtype=object)
        for i, e in enumerate(eps):
            out[i] = e
        return out
    return np.array(eps, dtype=float)


def jvp(f, x, dx):
    """Tangent push of ``f`` along ``dx``: returns (f(x), Df(x) dx)."""
    tag = next(_TAGS)
    x = np.atleast_1d(np.asarray(x))
    dx = np.atleast_1d(np.asarray(dx))
    seeded = np.empty(x.size, dtype=object)
    for j in range(x.size):
        seeded[j] = Dual(tag, x[j], (dx[j],))
    out = np.atleast_1d(np.asarray(f(seeded), dtype=object)).ravel()
    vals = np.empty(out.size, dtype=object)
    tans = np.empty(out.size, dtype=object)
    for i, y in enumerate(out):
        if isinstance(y, Dual) and y.tag == tag:
            vals[i], tans[i] = y.val, y.eps[0]
        else:
            vals[i], tans[i] = y, 0.0
    if not _has_dual(vals):
        vals = value_array(vals)
    if not _has_dual(tans):
        tans = value_array(tans)
    return vals, tans


def second_derivative(f, x, direction):
    """Hessian-vector product of scalar ``f``: d/dt grad f(x + t d) at t=0."""
    tag = next(_TAGS)
    x = np.atleast_1d(np.asarray(x))
    direction = np.atleast_1d(np.asarray(direction))
    seeded = np.empty(x.size, dtype=object)
    for j in range(x.size):
        seeded[j] = Dual(tag, x[j], (direction[j],))
    g = gradient(f, seeded)
    out = []
    for gi in np.atleast_1d(np.asarray(g, dtype=object)):
        if isinstance(gi, Dual) and gi.tag == tag:
            out.append(gi.eps[0])
        else:
            out.append(0.0)
    return np.array(out) if not any(isinstance(e, Dual) for e in out) \
        else np.array(out, dtype=object)


# Newton iteration -----------------------------------------------------------

def newton_root(f, x0, tol=1e-12, max_iter=50, jac=None, damped=True,
                jac_refresh="every"):
    """Solve f(x) = 0 by damped Newton with forward-mode Jacobians.

    Dual-transparent: if ``f`` closes over dual-valued constants, the dual
    parts of the returned root converge to the implicit-function derivative
    (two polish iterations run after value convergence to settle them).

    Returns ``(x, iterations)``; raises :class:`NewtonError` on failure.
    ``jac_refresh='once'`` freezes the Jacobian after the first iteration,
    which is enough for small steps and much cheaper on expensive residuals.
    """
    x = np.atleast_1d(np.asarray(x0))
    if x.dtype != object:
        x = x.astype(float)
    r = np.atleast_1d(np.asarray(f(x)))
    rnorm = float(np.max(np.abs(value_array(r))))
    J = None
    iters = 0
    polish_left = None
    while True:
        if polish_left is None and rnorm < tol:
            if _has_dual(r) or _has_dual(x):
                polish_left = 2
            else:
                return x, iters
        if polish_left == 0:
            return x, iters
        if iters >= max_iter + 2:
            raise NewtonError("Newton did not converge", residual_norm=rnorm,
                              iterations=iters)
        refresh = jac_refresh == "every" or polish_left is not None
        if J is None or refresh:
            J = jac(x) if jac is not None else jacobian_fwd(f, x)
        dx = solve_linear(J, r)
        step = 1.0
        accepted = False
        for _ in range(25):
            x_new = x - step * dx
            r_new = np.atleast_1d(np.asarray(f(x_new)))
            rnorm_new = float(np.max(np.abs(value_array(r_new))))
            ok = math.isfinite(rnorm_new) and (rnorm_new <= rnorm or rnorm_new < tol)
            if ok or not damped or polish_left is not None:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            raise NewtonError("Newton line search stalled",
                              residual_norm=rnorm, iterations=iters)
        x, r, rnorm = x_new, r_new, rnorm_new
        iters += 1
        if polish_left is not None:
            polish_left -= 1
