"""Forward-mode dual numbers.

A ``Dual`` carries a value and a list of partial derivatives.  Components may
themselves be Duals (nesting gives higher-order derivatives) or numpy arrays
(one dual computation evaluated over a whole batch of points at once).  Six
partials are all the pursuer-parameter work needs, so forward mode is cheap;
finite differences are kept in the test suite as an independent oracle only.
"""

from __future__ import annotations

import math

import numpy as np

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


class Dual:
    """Value plus partial derivatives, closed under arithmetic and nesting."""

    __slots__ = ("val", "eps")

    # Make numpy defer to the reflected operators instead of broadcasting
    # a Dual into an object array.
    __array_ufunc__ = None

    def __init__(self, val, eps):
        self.val = val
        self.eps = list(eps)

    def __repr__(self):
        return f"Dual({self.val!r}, {self.eps!r})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val,
                        [a + b for a, b in zip(self.eps, other.eps)])
        return Dual(self.val + other, self.eps)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val,
                        [a - b for a, b in zip(self.eps, other.eps)])
        return Dual(self.val - other, self.eps)

    def __rsub__(self, other):
        return Dual(other - self.val, [-a for a in self.eps])

    def __neg__(self):
        return Dual(-self.val, [-a for a in self.eps])

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val,
                        [self.val * b + other.val * a
                         for a, b in zip(self.eps, other.eps)])
        return Dual(self.val * other, [a * other for a in self.eps])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.val / other.val
            return Dual(q, [(a - q * b) / other.val
                            for a, b in zip(self.eps, other.eps)])
        return Dual(self.val / other, [a / other for a in self.eps])

    def __rtruediv__(self, other):
        q = other / self.val
        return Dual(q, [-q * a / self.val for a in self.eps])

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("dual exponents are not supported")
        d = p * self.val ** (p - 1)
        return Dual(self.val ** p, [d * a for a in self.eps])

    # Comparisons act on underlying values (branch decisions only).

    def __lt__(self, other):
        return value(self) < value(other)

    def __le__(self, other):
        return value(self) <= value(other)

    def __gt__(self, other):
        return value(self) > value(other)

    def __ge__(self, other):
        return value(self) >= value(other)


def value(x):
    """Strip all dual levels, returning the leaf value (float or ndarray)."""
    while isinstance(x, Dual):
        x = x.val
    return x


# -- elementary functions (dispatch on Dual vs leaf) ------------------------


def sqrt(x):
    if isinstance(x, Dual):
        r = sqrt(x.val)
        return Dual(r, [a / (2.0 * r) for a in x.eps])
    return np.sqrt(x)


def sin(x):
    if isinstance(x, Dual):
        c = cos(x.val)
        return Dual(sin(x.val), [c * a for a in x.eps])
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        s = sin(x.val)
        return Dual(cos(x.val), [-s * a for a in x.eps])
    return np.cos(x)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.val)
        return Dual(e, [e * a for a in x.eps])
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(log(x.val), [a / x.val for a in x.eps])
    return np.log(x)


def atan2(y, x):
    if isinstance(y, Dual) or isinstance(x, Dual):
        yv = y.val if isinstance(y, Dual) else y
        xv = x.val if isinstance(x, Dual) else x
        n = len(y.eps) if isinstance(y, Dual) else len(x.eps)
        ye = y.eps if isinstance(y, Dual) else [0.0] * n
        xe = x.eps if isinstance(x, Dual) else [0.0] * n
        d = xv * xv + yv * yv
        return Dual(atan2(yv, xv),
                    [(xv * a - yv * b) / d for a, b in zip(ye, xe)])
    return np.arctan2(y, x)


def erf(x):
    if isinstance(x, Dual):
        d = _TWO_OVER_SQRT_PI * exp(-(x.val * x.val))
        return Dual(erf(x.val), [d * a for a in x.eps])
    return erf_approx(x)


def hypot(x, y):
    return sqrt(x * x + y * y)


def where(cond, a, b):
    """Branch-free select; on Duals it selects value and partials elementwise.

    ``cond`` must be a plain bool or boolean array (compare values, not duals).
    """
    if isinstance(a, Dual) or isinstance(b, Dual):
        n = len(a.eps) if isinstance(a, Dual) else len(b.eps)
        av, ae = (a.val, a.eps) if isinstance(a, Dual) else (a, [0.0] * n)
        bv, be = (b.val, b.eps) if isinstance(b, Dual) else (b, [0.0] * n)
        return Dual(where(cond, av, bv),
                    [where(cond, x, y) for x, y in zip(ae, be)])
    if isinstance(cond, (bool, np.bool_)):
        return a if cond else b
    return np.where(cond, a, b)


# -- erf leaf approximation --------------------------------------------------

# Rational approximation (Abramowitz & Stegun 7.1.26), |error| <= 1.5e-7,
# which keeps the normal CDF within 1e-7 absolute.
_ERF_P = 0.3275911
_ERF_A = (0.254829592, -0.284496736, 1.421413741, -1.453152027, 1.061405429)


def erf_approx(x):
    x = np.asarray(x, dtype=float)
    s = np.sign(x)
    ax = np.abs(x)
    t = 1.0 / (1.0 + _ERF_P * ax)
    poly = t * (_ERF_A[0] + t * (_ERF_A[1] + t * (_ERF_A[2]
               + t * (_ERF_A[3] + t * _ERF_A[4]))))
    r = s * (1.0 - poly * np.exp(-ax * ax))
    return float(r) if r.ndim == 0 else r


# -- seeding and extraction --------------------------------------------------


def variables(x):
    """Wrap a 1-D sequence as first-order duals with unit seed directions."""
    x = list(x)
    n = len(x)
    return [Dual(x[i], [1.0 if j == i else 0.0 for j in range(n)])
            for i in range(n)]


def variables2(x):
    """Wrap a 1-D sequence as two-level duals (forward-over-forward)."""
    x = list(x)
    n = len(x)
    out = []
    for i in range(n):
        inner = Dual(x[i], [1.0 if j == i else 0.0 for j in range(n)])
        eps = [Dual(1.0 if j == i else 0.0, [0.0] * n) for j in range(n)]
        out.append(Dual(inner, eps))
    return out


def gradient(f, x):
    """Gradient of a scalar function of a sequence of reals."""
    r = f(variables(x))
    if not isinstance(r, Dual):
        return np.zeros(len(list(x)))
    return np.array([value(e) for e in r.eps])


def hessian(f, x):
    """Symmetrized Hessian of a scalar function via nested duals."""
    r = f(variables2(x))
    n = len(list(x))
    if not isinstance(r, Dual):
        return np.zeros((n, n))
    h = np.array([[value(r.eps[j].eps[i]) for i in range(n)]
                  for j in range(n)])
    return 0.5 * (h + h.T)


def value_grad_hess(f, x):
    """Value, gradient, and symmetrized Hessian in one nested-dual pass."""
    r = f(variables2(x))
    n = len(list(x))
    if not isinstance(r, Dual):
        v = np.asarray(r, dtype=float)
        return float(v), np.zeros(n), np.zeros((n, n))
    g = np.array([value(r.val.eps[i]) for i in range(n)])
    h = np.array([[value(r.eps[j].eps[i]) for i in range(n)]
                  for j in range(n)])
    return value(r), g, 0.5 * (h + h.T)
