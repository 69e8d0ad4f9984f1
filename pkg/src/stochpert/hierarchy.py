"""Series terms as polynomials in the KL variables with space-time coefficients.

The order-``m`` term of the expansion is ``u^(m) = sum_{|I|=m} a_I(x, t) xi^I``.
Substituting the truncated field ``Y_k`` into ``u_t - (e^Y u_x)_x = g`` and
collecting powers gives one heat problem per order,

    u^(m)_t - u^(m)_xx = Y_x u^(m-1)_x
                         - sum_{j=1}^m (-1)^j / j! * Y^j u^(m-j)_t
                         + (-1)^m / m! * g Y^m,

with zero initial data for ``m >= 1``.  Every coefficient ``a_I`` solves its
own heat problem, so the per-index solves within one order are batched.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import multiindex as mi
from .heat import laplacian, solve_heat, solve_heat_batch, time_derivative
from .kl import spatial_gradient


class PolyField:
    """Sparse polynomial in ``xi_1..xi_k`` with array-valued coefficients.

    Coefficients broadcast against the grid shape ``(n_x, n_t + 1)``; a
    time-independent coefficient may be stored with shape ``(n_x, 1)``.
    Absent indices mean identically zero coefficients.
    """

    def __init__(self, k, grid, terms=None):
        self.k = k
        self.grid = grid
        self.terms = {}
        for idx, arr in (terms or {}).items():
            idx = tuple(int(i) for i in idx)
            if len(idx) != k or min(idx, default=0) < 0:
                raise ValueError(f"bad multi-index {idx} for k={k}")
            arr = np.asarray(arr, dtype=float)
            if np.any(arr):
                self.terms[idx] = arr

    @classmethod
    def constant(cls, k, grid, values):
        return cls(k, grid, {(0,) * k: values})

    def __len__(self):
        return len(self.terms)

    def __contains__(self, idx):
        return tuple(idx) in self.terms

    def __getitem__(self, idx):
        return self.terms[tuple(idx)]

    def indices(self):
        return sorted(self.terms, key=mi.grlex_key)

    def items(self):
        return [(i, self.terms[i]) for i in self.indices()]

    @property
    def degrees(self):
        return sorted({sum(i) for i in self.terms})

    @property
    def degree(self):
        """Common degree of a homogeneous polynomial, ``None`` if empty, ``'mixed'`` otherwise."""
        d = self.degrees
        if not d:
            return None
        return d[0] if len(d) == 1 else "mixed"

    def _check(self, other):
        if other.k != self.k:
            raise ValueError(f"variable count mismatch: {self.k} vs {other.k}")
        if not self.grid.same_as(other.grid):
            raise ValueError("polynomials live on different grids")

    def __add__(self, other):
        self._check(other)
        out = dict(self.terms)
        for idx, arr in other.terms.items():
            out[idx] = out[idx] + arr if idx in out else arr
        return PolyField(self.k, self.grid, out)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        return PolyField(self.k, self.grid, {i: c * a for i, a in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, PolyField):
            return poly_mul(self, other)
        # scalar or field: multiply every coefficient
        return PolyField(self.k, self.grid, {i: a * other for i, a in self.terms.items()})

    __rmul__ = __mul__

    def map(self, fn):
        """Apply a linear map to each coefficient."""
        return PolyField(self.k, self.grid, {i: fn(a) for i, a in self.terms.items()})

    def evaluate(self, xi):
        """Full coefficient sum at a fixed ``xi``; returns a grid-shaped field."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.k,):
            raise ValueError(f"xi must have length {self.k}")
        out = np.zeros(self.grid.shape)
        for idx, arr in self.items():
            out = out + float(np.prod(xi ** np.array(idx))) * arr
        return out

    def stacked(self):
        """``(indices, array)`` with coefficients stacked along a new leading axis."""
        idx = self.indices()
        if not idx:
            return idx, np.zeros((0,) + self.grid.shape)
        return idx, np.stack([np.broadcast_to(self.terms[i], self.grid.shape) for i in idx])

    def __repr__(self):
        return f"PolyField(k={self.k}, terms={len(self.terms)}, degrees={self.degrees})"


def poly_mul(p, q):
    """Polynomial product; coefficients multiply pointwise."""
    p._check(q)
    out = {}
    for ia in p.indices():
        a = p.terms[ia]
        for ib in q.indices():
            idx = mi.add(ia, ib)
            prod = a * q.terms[ib]
            out[idx] = out[idx] + prod if idx in out else prod
    return PolyField(p.k, p.grid, out)


def y_as_poly(basis, derivative=False):
    """``Y_k`` (or its spatial derivative) as a degree-1 time-constant polynomial."""
    coeffs, dcoeffs = basis.scaled_modes()
    src = dcoeffs if derivative else coeffs
    k = basis.k
    return PolyField(k, basis.grid, {mi.unit(k, i): src[i][:, None] for i in range(k)})


class YPowers:
    """Lazily cached powers ``Y^0, Y^1, ...`` of a polynomial."""

    def __init__(self, y):
        ones = np.ones((y.grid.n_x, 1))
        self._powers = [PolyField.constant(y.k, y.grid, ones), y]

    def __getitem__(self, j):
        while len(self._powers) <= j:
            self._powers.append(poly_mul(self._powers[-1], self._powers[1]))
        return self._powers[j]


def _gradient(poly):
    h = poly.grid.h
    return poly.map(lambda a: spatial_gradient(np.broadcast_to(a, poly.grid.shape), h, axis=0))


def assemble_rhs(m, y, u_hist, ut_hist, spec, dy=None, powers=None):
    """Right-hand side of the order-``m`` heat problem as a degree-``m`` polynomial.

    ``dy`` is the spatial derivative of ``y``; when omitted it is formed by
    differencing the coefficients of ``y``.  ``powers`` may carry a shared
    :class:`YPowers` cache.
    """
    if m < 1:
        raise ValueError("right-hand sides are defined for m >= 1")
    if len(u_hist) < m or len(ut_hist) < m:
        raise ValueError(f"order {m} needs u^(0..{m - 1}) and their time derivatives")
    for j in range(m):
        for name, hist in (("u", u_hist), ("u_t", ut_hist)):
            d = hist[j].degree
            if d is not None and d != j:
                raise ValueError(f"{name}^({j}) is not homogeneous of degree {j}")
    if dy is None:
        dy = _gradient(y)
    if powers is None:
        powers = YPowers(y)

    rhs = poly_mul(dy, _gradient(u_hist[m - 1]))
    for j in range(1, m + 1):
        c = (-1) ** j / math.factorial(j)
        rhs = rhs - poly_mul(powers[j], ut_hist[m - j]).scale(c)
    rhs = rhs + (powers[m] * spec.forcing).scale((-1) ** m / math.factorial(m))
    return rhs


def solve_order(m, rhs, spec):
    """Solve the order-``m`` problem for every index of ``rhs``.

    Returns ``(u, u_t)`` as polynomials of the same index set.  For ``m == 0``
    ``rhs`` is ignored: the deterministic problem with the data of ``spec`` is
    solved instead.
    """
    grid = spec.grid
    if m == 0:
        k = rhs.k if rhs is not None else 0
        u = solve_heat(spec)
        ut = time_derivative(u, spec, spec.forcing)
        return PolyField.constant(k, grid, u), PolyField.constant(k, grid, ut)
    deg = rhs.degree
    if deg is not None and deg != m:
        raise ValueError(f"right-hand side is not homogeneous of degree {m}")
    idx, g = rhs.stacked()
    u = solve_heat_batch(grid, g)
    ut = time_derivative(np.moveaxis(u, 0, -1), spec, np.moveaxis(g, 0, -1))
    ut = np.moveaxis(ut, -1, 0)
    return (
        PolyField(rhs.k, grid, dict(zip(idx, u))),
        PolyField(rhs.k, grid, dict(zip(idx, ut))),
    )


@dataclass(eq=False)
class SeriesSolution:
    """Terms ``u^(0..M)`` of the expansion together with their time derivatives."""

    basis: object
    spec: object
    u: list = field(default_factory=list)
    ut: list = field(default_factory=list)
    rhs: list = field(default_factory=list)

    @property
    def max_order(self):
        return len(self.u) - 1

    @property
    def k(self):
        return self.basis.k

    def evaluate(self, xi, orders=None):
        """Partial sum at fixed ``xi`` as a grid field."""
        orders = range(len(self.u)) if orders is None else orders
        out = np.zeros(self.spec.grid.shape)
        for m in orders:
            out = out + self.u[m].evaluate(xi)
        return out


def solve_hierarchy(basis, spec, max_order):
    """Solve the cascade of heat problems for orders ``0..max_order``."""
    k = basis.k
    y = y_as_poly(basis)
    dy = y_as_poly(basis, derivative=True)
    powers = YPowers(y)
    u0, ut0 = solve_order(0, PolyField(k, spec.grid), spec)
    sol = SeriesSolution(basis, spec, [u0], [ut0], [PolyField.constant(k, spec.grid, spec.forcing)])
    for m in range(1, max_order + 1):
        rhs = assemble_rhs(m, y, sol.u, sol.ut, spec, dy=dy, powers=powers)
        um, utm = solve_order(m, rhs, spec)
        sol.u.append(um)
        sol.ut.append(utm)
        sol.rhs.append(rhs)
    return sol


def _bilinear(field, grid, x, t):
    xs, ts = grid.x_nodes, grid.t_nodes
    if not (xs[0] <= x <= xs[-1] and ts[0] <= t <= ts[-1]):
        raise ValueError("point outside the space-time grid")
    i = min(int(np.searchsorted(xs, x, side="right")) - 1, grid.n_x - 2)
    n = min(int(np.searchsorted(ts, t, side="right")) - 1, grid.n_t - 1)
    a = (x - xs[i]) / (xs[i + 1] - xs[i])
    b = (t - ts[n]) / (ts[n + 1] - ts[n])
    f = field
    return (
        (1 - a) * (1 - b) * f[i, n]
        + a * (1 - b) * f[i + 1, n]
        + (1 - a) * b * f[i, n + 1]
        + a * b * f[i + 1, n + 1]
    )


def evaluate_series(terms, xi, x, t):
    """``sum_m u^(m)(x, t; xi)`` with bilinear interpolation off the nodes."""
    if not terms:
        raise ValueError("no terms to evaluate")
    xi = np.asarray(xi, dtype=float)
    grid = terms[0].grid
    total = 0.0
    for poly in terms:
        if xi.shape != (poly.k,):
            raise ValueError(f"xi must have length {poly.k}")
        total += float(_bilinear(poly.evaluate(xi), grid, float(x), float(t)))
    return total
