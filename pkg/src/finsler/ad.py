"""Forward-mode automatic differentiation with nested dual numbers.

A :class:`Dual` carries a value and one derivative slot.  Both slots may hold
floats, numpy arrays (for batched evaluation), or further ``Dual`` instances;
nesting levels give higher and mixed derivatives.  The drivers at the bottom
of the module wrap every variable input at every nesting level, so the
arithmetic never has to disambiguate the level a ``Dual`` belongs to.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Dual", "sqrt", "sin", "cos", "exp", "log",
    "value_of", "derivatives_y2", "derivatives_y3", "derivatives_xy",
    "derivatives_x2", "gradient_x", "gradient_y",
]


class Dual:
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a = a  # value
        self.b = b  # derivative along the seeded direction

    def __repr__(self):
        return f"Dual({self.a!r}, {self.b!r})"

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.a + other.a, self.b + other.b)
        return Dual(self.a + other, self.b)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.a - other.a, self.b - other.b)
        return Dual(self.a - other, self.b)

    def __rsub__(self, other):
        return Dual(other - self.a, -self.b)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.a * other.a, self.a * other.b + self.b * other.a)
        return Dual(self.a * other, self.b * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.a
            val = self.a * inv
            return Dual(val, (self.b - val * other.b) * inv)
        return Dual(self.a / other, self.b / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.a
        val = other * inv
        return Dual(val, -val * self.b * inv)

    def __neg__(self):
        return Dual(-self.a, -self.b)

    def __pos__(self):
        return self

    def __pow__(self, p):
        if isinstance(p, Dual):
            return exp(p * log(self))
        if p == 2:
            return Dual(self.a * self.a, 2.0 * self.a * self.b)
        return Dual(self.a ** p, p * self.a ** (p - 1) * self.b)

    def __rpow__(self, base):
        return exp(self * np.log(base))


def sqrt(z):
    if isinstance(z, Dual):
        s = sqrt(z.a)
        return Dual(s, z.b / (2.0 * s))
    return np.sqrt(z)


def sin(z):
    if isinstance(z, Dual):
        return Dual(sin(z.a), z.b * cos(z.a))
    return np.sin(z)


def cos(z):
    if isinstance(z, Dual):
        return Dual(cos(z.a), -z.b * sin(z.a))
    return np.cos(z)


def exp(z):
    if isinstance(z, Dual):
        e = exp(z.a)
        return Dual(e, z.b * e)
    return np.exp(z)


def log(z):
    if isinstance(z, Dual):
        return Dual(log(z.a), z.b / z.a)
    return np.log(z)


def value_of(z):
    """Strip all dual layers and return the underlying value."""
    while isinstance(z, Dual):
        z = z.a
    return z


# -- derivative drivers --------------------------------------------------
#
# Each driver evaluates ``f(x1, x2, y1, y2)`` with every input wrapped at
# every nesting level (unseeded directions get a zero slot), which keeps all
# Dual instances inside one evaluation at a common depth.

def _wrap(vals, seeds):
    return tuple(Dual(v, s) for v, s in zip(vals, seeds))


def _seed(k, n=2):
    return tuple(1.0 if i == k else 0.0 for i in range(n))


def gradient_y(f, x1, x2, y1, y2):
    """(f, f_y1, f_y2) with a single dual level per direction."""
    outs = []
    for k in (0, 1):
        yy = _wrap((y1, y2), _seed(k))
        xx = _wrap((x1, x2), (0.0, 0.0))
        outs.append(f(xx[0], xx[1], yy[0], yy[1]))
    return outs[0].a, outs[0].b, outs[1].b


def gradient_x(f, x1, x2, y1, y2):
    """(f, f_x1, f_x2)."""
    outs = []
    for k in (0, 1):
        xx = _wrap((x1, x2), _seed(k))
        yy = _wrap((y1, y2), (0.0, 0.0))
        outs.append(f(xx[0], xx[1], yy[0], yy[1]))
    return outs[0].a, outs[0].b, outs[1].b


def derivatives_y2(f, x1, x2, y1, y2):
    """Value, y-gradient and y-Hessian of f at (x, y).

    Three nested evaluations: seeds (0,0), (1,1), (0,1).
    Returns (f, (f_y1, f_y2), ((f_11, f_12), (f_12, f_22))).
    """
    res = {}
    for (i, j) in ((0, 0), (1, 1), (0, 1)):
        inner_y = _wrap((y1, y2), _seed(i))
        inner_x = _wrap((x1, x2), (0.0, 0.0))
        outer_y = _wrap(inner_y, _seed(j))
        outer_x = _wrap(inner_x, (0.0, 0.0))
        z = f(outer_x[0], outer_x[1], outer_y[0], outer_y[1])
        res[(i, j)] = z
    z00, z11, z01 = res[(0, 0)], res[(1, 1)], res[(0, 1)]
    val = z00.a.a
    g = (z00.a.b, z11.a.b)
    h11 = z00.b.b
    h22 = z11.b.b
    h12 = z01.b.b
    return val, g, ((h11, h12), (h12, h22))


def derivatives_y3(f, x1, x2, y1, y2):
    """Adds the symmetric third y-derivative tensor to :func:`derivatives_y2`.

    Returns (f, grad, hess, third) where third[(a, b, c)] is defined for the
    four index combinations with a <= b <= c.
    """
    third = {}
    val = None
    grad = [None, None]
    hess = {}
    for (i, j, k) in ((0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1)):
        ly = _wrap((y1, y2), _seed(i))
        lx = _wrap((x1, x2), (0.0, 0.0))
        my = _wrap(ly, _seed(j))
        mx = _wrap(lx, (0.0, 0.0))
        oy = _wrap(my, _seed(k))
        ox = _wrap(mx, (0.0, 0.0))
        z = f(ox[0], ox[1], oy[0], oy[1])
        third[(i, j, k)] = z.b.b.b
        val = z.a.a.a
        grad[i] = z.a.a.b
        hess[(i, j)] = z.a.b.b
    g = (grad[0], grad[1])
    h = ((hess[(0, 0)], hess[(0, 1)]), (hess[(0, 1)], hess[(1, 1)]))
    return val, g, h, third


def derivatives_xy(f, x1, x2, y1, y2):
    """Value, x-gradient, y-gradient and the mixed block d2f/dy_i dx_j.

    x is seeded at the inner level, y at the outer level; four evaluations.
    Returns (f, fx, fy, fxy) with fxy[i][j] = d2 f / dy_i dx_j.
    """
    fx = [None, None]
    fy = [None, None]
    fxy = [[None, None], [None, None]]
    val = None
    for j in (0, 1):
        for i in (0, 1):
            inner_x = _wrap((x1, x2), _seed(j))
            inner_y = _wrap((y1, y2), (0.0, 0.0))
            outer_x = _wrap(inner_x, (0.0, 0.0))
            outer_y = _wrap(inner_y, _seed(i))
            z = f(outer_x[0], outer_x[1], outer_y[0], outer_y[1])
            val = z.a.a
            fx[j] = z.a.b
            fy[i] = z.b.a
            fxy[i][j] = z.b.b
    return val, tuple(fx), tuple(fy), tuple(tuple(r) for r in fxy)


def derivatives_x2(f, x1, x2, y1, y2):
    """Value, x-gradient and x-Hessian (second chart derivatives)."""
    res = {}
    for (i, j) in ((0, 0), (1, 1), (0, 1)):
        inner_x = _wrap((x1, x2), _seed(i))
        inner_y = _wrap((y1, y2), (0.0, 0.0))
        outer_x = _wrap(inner_x, _seed(j))
        outer_y = _wrap(inner_y, (0.0, 0.0))
        res[(i, j)] = f(outer_x[0], outer_x[1], outer_y[0], outer_y[1])
    z00, z11, z01 = res[(0, 0)], res[(1, 1)], res[(0, 1)]
    val = z00.a.a
    g = (z00.a.b, z11.a.b)
    h = ((z00.b.b, z01.b.b), (z01.b.b, z11.b.b))
    return val, g, h
