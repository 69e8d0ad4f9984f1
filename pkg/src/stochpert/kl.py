"""Truncated Karhunen-Loeve representation of a stationary Gaussian field.

Two routes to the eigenpairs of the covariance operator are provided:

* ``nystrom_eigenpairs`` discretizes ``f -> int_D C(x, y) f(y) dy`` with the
  trapezoid rule and solves the symmetrized matrix eigenproblem;
* ``analytic_modes`` evaluates the closed-form spectrum of the exponential
  kernel on the unit interval.

The two agree for the exponential kernel and serve as oracles for each other.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EigenSolveError, RootFindingError

FAMILIES = ("squared_exponential", "exponential")


@dataclass(frozen=True)
class CovarianceKernel:
    family: str
    sigma: float
    eta: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")

    def with_sigma(self, sigma):
        return CovarianceKernel(self.family, sigma, self.eta)


def _correlation(family, eta, x, y):
    d = np.abs(np.subtract(x, y))
    if family == "squared_exponential":
        return np.exp(-(d * d) / (2.0 * eta * eta))
    return np.exp(-d / eta)


def kernel_eval(kernel, x, y):
    """Covariance ``C(x, y)``; broadcasts over array arguments."""
    return kernel.sigma**2 * _correlation(kernel.family, kernel.eta, x, y)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform space-time grid on ``[a, b] x [0, T]``.

    Spatial quadrature is the composite trapezoid rule, so the weights sum
    to ``b - a``.  The first and last spatial nodes carry the Dirichlet data.
    """

    x_nodes: np.ndarray
    quad_weights: np.ndarray
    t_nodes: np.ndarray

    @classmethod
    def uniform(cls, n_x, final_time, dt, a=0.0, b=1.0):
        if n_x < 3:
            raise ValueError("need at least 3 spatial nodes")
        if not b > a:
            raise ValueError("empty spatial domain")
        if not dt > 0 or not final_time > 0:
            raise ValueError("dt and final_time must be positive")
        n_t = int(round(final_time / dt))
        if n_t < 1 or abs(n_t * dt - final_time) > 1e-9 * final_time:
            raise ValueError(f"final_time={final_time} is not a multiple of dt={dt}")
        x = np.linspace(a, b, n_x)
        h = (b - a) / (n_x - 1)
        w = np.full(n_x, h)
        w[0] = w[-1] = 0.5 * h
        t = np.linspace(0.0, final_time, n_t + 1)
        return cls(x, w, t)

    @property
    def n_x(self):
        return self.x_nodes.size

    @property
    def n_t(self):
        return self.t_nodes.size - 1

    @property
    def h(self):
        return (self.x_nodes[-1] - self.x_nodes[0]) / (self.n_x - 1)

    @property
    def dt(self):
        return (self.t_nodes[-1] - self.t_nodes[0]) / self.n_t

    @property
    def volume(self):
        return float(self.x_nodes[-1] - self.x_nodes[0])

    @property
    def shape(self):
        return (self.n_x, self.n_t + 1)

    def same_as(self, other):
        return self is other or (
            np.array_equal(self.x_nodes, other.x_nodes) and np.array_equal(self.t_nodes, other.t_nodes)
        )

    def integrate(self, values, axis=0):
        return np.tensordot(self.quad_weights, values, axes=([0], [axis]))


def spatial_gradient(values, h, axis=0):
    """Central differences inside, second-order one-sided at the two ends."""
    return np.gradient(values, h, axis=axis, edge_order=2)


@dataclass(eq=False)
class EigenPair:
    lam: float
    f: np.ndarray
    df: np.ndarray
    w: Optional[float] = None
    # multiplier applied to the closed-form mode (analytic pairs only)
    scale: float = 1.0


@dataclass(eq=False)
class KLBasis:
    kernel: CovarianceKernel
    grid: Grid
    pairs: list = field(default_factory=list)

    @property
    def k(self):
        return len(self.pairs)

    @property
    def eigenvalues(self):
        return np.array([p.lam for p in self.pairs])

    @property
    def modes(self):
        """Eigenfunction values, shape ``(k, n_x)``."""
        if not self.pairs:
            return np.zeros((0, self.grid.n_x))
        return np.stack([p.f for p in self.pairs])

    @property
    def mode_derivatives(self):
        if not self.pairs:
            return np.zeros((0, self.grid.n_x))
        return np.stack([p.df for p in self.pairs])

    @property
    def is_analytic(self):
        return bool(self.pairs) and all(p.w is not None for p in self.pairs)

    def truncate(self, k):
        if k > self.k:
            raise ValueError(f"basis holds only {self.k} modes")
        return KLBasis(self.kernel, self.grid, self.pairs[:k])

    def scaled_modes(self):
        """``sqrt(lambda_i) f_i`` and its derivative, each of shape ``(k, n_x)``."""
        s = np.sqrt(self.eigenvalues)[:, None]
        return s * self.modes, s * self.mode_derivatives

    def field_at(self, xi):
        """``Y_k`` on the grid nodes for one or many ``xi`` (last axis of length k)."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.k:
            raise ValueError(f"xi has length {xi.shape[-1]}, basis has k={self.k}")
        coeffs, _ = self.scaled_modes()
        return xi @ coeffs


def _fix_sign(f, df):
    # first interior node non-negative
    if f[1] < 0:
        return -f, -df
    return f, df


def _weighted_correlation(kernel, grid):
    x = grid.x_nodes
    corr = _correlation(kernel.family, kernel.eta, x[:, None], x[None, :])
    sw = np.sqrt(grid.quad_weights)
    return corr, sw, sw[:, None] * corr * sw[None, :]


def nystrom_spectrum(kernel, grid):
    """All ``n_x`` discrete eigenvalues, descending (tiny ones may be slightly negative)."""
    _, _, b = _weighted_correlation(kernel, grid)
    try:
        mu = np.linalg.eigvalsh(b)
    except np.linalg.LinAlgError as exc:
        raise EigenSolveError(f"symmetric eigensolve did not converge: {exc}") from exc
    return kernel.sigma**2 * mu[::-1]


def nystrom_eigenpairs(kernel, grid, k, rank_tol=1e-12):
    """Largest ``k`` eigenpairs of the trapezoid-Nystrom covariance operator.

    The weighted matrix ``W^1/2 C W^1/2`` is symmetric, so a dense symmetric
    eigensolver applies.  The eigendecomposition is done on the unit-variance
    correlation matrix and the eigenvalues are scaled by ``sigma**2`` after,
    which keeps the eigenvectors identical across ``sigma``.
    """
    n = grid.n_x
    if k < 0 or k > n:
        raise ValueError(f"k={k} outside [0, n_x={n}]")
    if k == 0:
        return KLBasis(kernel, grid, [])

    corr, sw, b = _weighted_correlation(kernel, grid)
    try:
        mu, vecs = np.linalg.eigh(b)
    except np.linalg.LinAlgError as exc:
        raise EigenSolveError(f"symmetric eigensolve did not converge: {exc}") from exc
    order = np.argsort(mu, kind="stable")[::-1][:k]
    mu = mu[order]
    vecs = vecs[:, order]
    if mu[0] <= 0 or mu[-1] < rank_tol * mu[0]:
        raise EigenSolveError(
            f"requested eigenvalue {mu[-1]:.3e} is below {rank_tol:g} x lambda_1 ({mu[0]:.3e}); "
            "truncation is rank-deficient"
        )

    var = kernel.sigma**2
    funcs = vecs / sw[:, None]
    resid = corr @ (grid.quad_weights[:, None] * funcs) - funcs * mu[None, :]
    worst = np.max(np.abs(resid), axis=0)
    if np.any(worst > 1e-6 * mu[0]):
        raise EigenSolveError(f"Nystrom residual {worst.max():.3e} exceeds 1e-6 lambda_1")

    pairs = []
    for i in range(k):
        f = funcs[:, i]
        f = f / math.sqrt(float(grid.quad_weights @ (f * f)))
        df = spatial_gradient(f, grid.h)
        f, df = _fix_sign(f, df)
        pairs.append(EigenPair(lam=float(var * mu[i]), f=f, df=df))
    return KLBasis(kernel, grid, pairs)


def root_function(w, eta):
    """Defining function ``(eta^2 w^2 - 1) sin w - 2 eta w cos w``."""
    return (eta * eta * w * w - 1.0) * np.sin(w) - 2.0 * eta * w * np.cos(w)


def _bisect(func, lo, hi, flo, maxiter=200):
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fmid = func(mid)
        if fmid == 0.0:
            return mid
        if (fmid < 0) == (flo < 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    # pick the endpoint with the smaller residual
    return lo if abs(func(lo)) <= abs(func(hi)) else hi


def find_roots(eta, n):
    """The ``n`` smallest positive roots of ``root_function``.

    Consecutive roots are at least ``pi / (1 + 2 eta)`` apart, so scanning with
    half that step isolates each root in its own subinterval before bisection.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")

    def func(w):
        return float(root_function(w, eta))

    step = math.pi / (2.0 * (1.0 + 2.0 * eta))
    # every root lies below n*pi; keep the nominal bound but never below that
    bound = max(10.0 * (n + 2) * math.pi / eta, (n + 2) * math.pi)
    roots = []
    lo = 1e-3 * step
    flo = func(lo)
    while len(roots) < n:
        hi = lo + step
        if hi > bound:
            raise RootFindingError(f"isolated only {len(roots)} of {n} roots below w={bound:.4g}")
        fhi = func(hi)
        if fhi == 0.0:
            roots.append(hi)
            lo, flo = hi + 1e-3 * step, func(hi + 1e-3 * step)
            continue
        if (flo < 0) != (fhi < 0):
            roots.append(_bisect(func, lo, hi, flo))
        lo, flo = hi, fhi
    return roots


def analytic_mode(w, eta, x):
    """Normalized exponential-kernel eigenfunction and its derivative at ``x``."""
    norm = math.sqrt((eta * eta * w * w + 1.0) / 2.0 + eta)
    f = (eta * w * np.cos(w * x) + np.sin(w * x)) / norm
    df = w * (-eta * w * np.sin(w * x) + np.cos(w * x)) / norm
    return f, df


def analytic_modes(eta, sigma, grid, k):
    """Closed-form exponential-kernel KL modes on the unit interval.

    Eigenvalues are ``2 eta sigma^2 / (eta^2 w_n^2 + 1)``.  The closed-form
    normalizer is exact in ``L2(0, 1)``; the nodal values are rescaled once more
    to unit trapezoid norm so that they satisfy the same invariant as Nystrom
    modes.
    """
    kernel = CovarianceKernel("exponential", sigma, eta)
    if grid.x_nodes[0] != 0.0 or grid.x_nodes[-1] != 1.0:
        raise ValueError("analytic modes are only available on [0, 1]")
    if k == 0:
        return KLBasis(kernel, grid, [])
    pairs = []
    for w in find_roots(eta, k):
        f, df = analytic_mode(w, eta, grid.x_nodes)
        scale = 1.0 / math.sqrt(float(grid.quad_weights @ (f * f)))
        if f[1] < 0:
            scale = -scale
        lam = 2.0 * eta * sigma**2 / (eta * eta * w * w + 1.0)
        pairs.append(EigenPair(lam=lam, f=scale * f, df=scale * df, w=w, scale=scale))
    return KLBasis(kernel, grid, pairs)


def _mode_values(basis, x):
    x = np.asarray(x, dtype=float)
    if basis.k == 0:
        return np.zeros((0,) + x.shape), np.zeros((0,) + x.shape)
    if basis.is_analytic:
        fs, dfs = [], []
        for p in basis.pairs:
            f, df = analytic_mode(p.w, basis.kernel.eta, x)
            fs.append(p.scale * f)
            dfs.append(p.scale * df)
        return np.stack(fs), np.stack(dfs)
    xg = basis.grid.x_nodes
    f = np.stack([np.interp(x, xg, p.f) for p in basis.pairs])
    df = np.stack([np.interp(x, xg, p.df) for p in basis.pairs])
    return f, df


def kl_partial_sum(basis, xi, x):
    """``(Y_k(x, xi), dY_k/dx(x, xi))`` at position(s) ``x``.

    Off-node values use linear interpolation of the nodal eigenfunctions and
    their derivatives; analytic modes are evaluated in closed form.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (basis.k,):
        raise ValueError(f"xi must have length k={basis.k}, got shape {xi.shape}")
    f, df = _mode_values(basis, x)
    s = np.sqrt(basis.eigenvalues) * xi
    return np.tensordot(s, f, axes=1), np.tensordot(s, df, axes=1)


@dataclass
class BasisReport:
    trace_residual: float
    c0_estimate: float
    c1_estimate: float
    per_mode_derivative_supnorm: np.ndarray


def basis_diagnostics(basis):
    """Trace deficit and the sup-norm constants bounding ``Y_k`` and its gradient."""
    vol = basis.grid.volume
    trace = basis.kernel.sigma**2 * vol - float(np.sum(basis.eigenvalues))
    if basis.k == 0:
        return BasisReport(trace, 0.0, 0.0, np.zeros(0))
    f = np.abs(basis.modes)
    df = np.abs(basis.mode_derivatives)
    c0 = float(np.max(f + df))
    return BasisReport(
        trace_residual=trace,
        c0_estimate=c0,
        c1_estimate=c0 * math.sqrt(vol),
        per_mode_derivative_supnorm=df.max(axis=1),
    )
