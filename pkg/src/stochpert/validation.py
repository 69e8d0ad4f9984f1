"""Numerical checks of the expansion against direct solves.

* ``mc_reference`` samples ``xi`` and solves the variable-coefficient problem
  with ``a = exp(Y_k(., xi))`` for each sample.
* ``series_moments`` gives mean and second moment of the truncated series
  from exact Gaussian moments.
* ``sigma_convergence`` measures, at a fixed ``xi``, how the truncation error
  and the per-order norms scale with ``sigma``.
* ``estimate_functional`` integrates the order-``m`` norms against the normal
  density times a weight polynomial.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import multiindex as mi
from .errors import NumericalError
from .heat import compute_norms, solve_heat, solve_variable, time_integrate, variable_batch_sums
from .hierarchy import solve_hierarchy
from .kl import analytic_modes, nystrom_eigenpairs
from .moments import monomial_moment
from .rng import block_normals

WORKERS_ENV = "STOCHPERT_WORKERS"
MC_CHUNK = 1024


@dataclass
class SweepConfig:
    sigma_list: tuple = (0.05, 0.1, 0.2)
    k: int = 2
    max_order: int = 2
    xi_probe: Optional[tuple] = None
    n_mc: int = 1000
    seed: int = 0
    # one ascending coefficient list per coordinate; missing coordinates weigh 1
    weight_poly: tuple = ()

    def __post_init__(self):
        self.sigma_list = tuple(float(s) for s in self.sigma_list)
        if any(not s > 0 for s in self.sigma_list):
            raise ValueError("sigma values must be positive")
        if len(set(self.sigma_list)) != len(self.sigma_list):
            raise ValueError("sigma values must be distinct")
        if self.k < 0 or self.max_order < 0:
            raise ValueError("k and max_order must be non-negative")
        if self.n_mc < 1:
            raise ValueError("n_mc must be at least 1")
        if self.xi_probe is not None:
            self.xi_probe = tuple(float(v) for v in self.xi_probe)
            if len(self.xi_probe) != self.k:
                raise ValueError(f"xi_probe has {len(self.xi_probe)} entries, expected k={self.k}")
        self.weight_poly = tuple(tuple(float(c) for c in p) for p in self.weight_poly)

    def probe(self):
        return np.ones(self.k) if self.xi_probe is None else np.array(self.xi_probe)

    def weight(self, xi):
        """``P(xi)`` for samples of shape ``(n, k)``."""
        out = np.ones(xi.shape[0])
        for r, coeffs in enumerate(self.weight_poly[: xi.shape[1]]):
            out = out * npoly.polyval(xi[:, r], coeffs)
        return out


def build_basis(kernel, grid, k, kind="nystrom"):
    if kind == "nystrom":
        return nystrom_eigenpairs(kernel, grid, k)
    if kind == "analytic":
        if kernel.family != "exponential":
            raise ValueError("analytic modes exist only for the exponential kernel")
        return analytic_modes(kernel.eta, kernel.sigma, grid, k)
    raise ValueError(f"unknown basis kind {kind!r}")


# -- Monte Carlo reference ---------------------------------------------------


@dataclass
class MCResult:
    mean: np.ndarray
    variance: np.ndarray
    n: int
    failures: int
    xi: np.ndarray = field(repr=False)
    # u(x_mid, T) per accepted sample
    probe_values: np.ndarray = field(repr=False)

    @property
    def stderr(self):
        return np.sqrt(self.variance / self.n) if self.n else np.full_like(self.mean, np.inf)


def _mc_chunk(args):
    spec, basis, seed, start, stop, face_mean, shift = args
    grid = spec.grid
    xi = block_normals(seed, start, stop, basis.k)
    with np.errstate(over="ignore", invalid="ignore"):
        a = np.exp(basis.field_at(xi)).T
    ok = np.all(np.isfinite(a) & (a > 0) & (a < 1e290), axis=0)
    s1, s2, mid = variable_batch_sums(spec, a[:, ok], shift, face_mean)
    if not (np.all(np.isfinite(s1)) and np.all(np.isfinite(s2))):
        # isolate the offending samples one by one
        s1 = np.zeros(grid.shape)
        s2 = np.zeros(grid.shape)
        mids = []
        for i in np.flatnonzero(ok):
            p1, p2, m = variable_batch_sums(spec, a[:, i : i + 1], shift, face_mean)
            if np.all(np.isfinite(p1)) and np.all(np.isfinite(p2)):
                s1 += p1
                s2 += p2
                mids.append(m[0])
            else:
                ok[i] = False
        mid = np.array(mids)
    count = int(ok.sum())
    return count, s1, s2, len(ok) - count, xi[ok], mid


def worker_count():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def mc_reference(spec, basis, n_mc, seed, workers=None, face_mean="arithmetic"):
    """Mean and variance of direct solves over ``xi ~ N(0, I_k)``.

    Statistics are accumulated as sums of deviations from the deterministic
    (``a = 1``) solution, which are ``O(sigma)`` and keep the variance free of
    cancellation.  Work is split in fixed chunks of sample indices whose sums
    are added in index order, so results do not depend on ``workers``.
    Samples whose coefficient or solution is not finite are counted as
    failures and excluded.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be at least 1")
    grid = spec.grid
    if basis.k == 0:
        u = solve_heat(spec)
        return MCResult(u, np.zeros(grid.shape), n_mc, 0, np.zeros((n_mc, 0)), np.full(n_mc, u[grid.n_x // 2, -1]))

    shift = solve_heat(spec)
    tasks = [
        (spec, basis, seed, s, min(s + MC_CHUNK, n_mc), face_mean, shift)
        for s in range(0, n_mc, MC_CHUNK)
    ]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_mc_chunk, tasks))
    else:
        parts = [_mc_chunk(t) for t in tasks]

    n, failures = 0, 0
    s1 = np.zeros(grid.shape)
    s2 = np.zeros(grid.shape)
    for count, p1, p2, fail, _, _ in parts:
        n += count
        failures += fail
        s1 += p1
        s2 += p2
    if n == 0:
        raise NumericalError("every Monte Carlo sample failed")
    mean = shift + s1 / n
    var = np.maximum(s2 - s1 * s1 / n, 0.0) / (n - 1) if n > 1 else np.zeros(grid.shape)
    xi = np.concatenate([p[4] for p in parts])
    probe = np.concatenate([p[5] for p in parts])
    return MCResult(mean, var, n, failures, xi, probe)


# -- exact moments of the series ---------------------------------------------


def _stack_terms(sol, max_order):
    idx, arrays = [], []
    for m in range(max_order + 1):
        i, a = sol.u[m].stacked()
        idx.extend(i)
        arrays.append(a)
    return idx, np.concatenate(arrays) if arrays else np.zeros((0,) + sol.spec.grid.shape)


def series_moments(sol, max_order=None):
    """Mean and second moment of ``sum_{m <= M} u^(m)`` under ``xi ~ N(0, I)``."""
    max_order = sol.max_order if max_order is None else max_order
    if max_order > sol.max_order:
        raise ValueError(f"series only holds orders up to {sol.max_order}")
    idx, a = _stack_terms(sol, max_order)
    first = np.array([monomial_moment(i) for i in idx])
    gram = np.array([[monomial_moment(mi.add(i, j)) for j in idx] for i in idx])
    mean = np.tensordot(first, a, axes=1)
    second = np.sum(a * np.tensordot(gram, a, axes=1), axis=0)
    return mean, second


# -- sigma sweeps --------------------------------------------------------------


@dataclass
class ConvergenceTable:
    sigmas: np.ndarray
    residuals: np.ndarray
    # norms[s, m] = max_t ||u^(m)(xi_probe)||_{H1} at sigma s
    norms: np.ndarray
    residual_slope: float
    residual_fit_rms: float
    norm_slopes: np.ndarray
    norm_fit_rms: np.ndarray


def _loglog_fit(x, y):
    good = np.isfinite(y) & (y > 0)
    if good.sum() < 2:
        raise NumericalError("fewer than two usable points for a log-log fit")
    lx, ly = np.log(x[good]), np.log(y[good])
    slope, icept = np.polyfit(lx, ly, 1)
    rms = float(np.sqrt(np.mean((ly - (slope * lx + icept)) ** 2)))
    return float(slope), rms


def sigma_convergence(config, spec, kernel, basis_kind="nystrom", face_mean="arithmetic"):
    """Fixed-``xi`` truncation error and per-order norms across ``config.sigma_list``."""
    if len(config.sigma_list) < 2:
        raise NumericalError("need at least two sigma values")
    xi = config.probe()
    sigmas = np.array(config.sigma_list)
    residuals = np.empty(len(sigmas))
    norms = np.empty((len(sigmas), config.max_order + 1))
    for s, sigma in enumerate(sigmas):
        basis = build_basis(kernel.with_sigma(sigma), spec.grid, config.k, basis_kind)
        sol = solve_hierarchy(basis, spec, config.max_order)
        direct = solve_variable(spec, np.exp(basis.field_at(xi)), face_mean)
        residuals[s] = np.max(np.abs(sol.evaluate(xi) - direct))
        for m in range(config.max_order + 1):
            norms[s, m] = compute_norms(sol.u[m].evaluate(xi), sol.ut[m].evaluate(xi), spec.grid).sup_H10
    r_slope, r_rms = _loglog_fit(sigmas, residuals)
    n_slopes = np.full(config.max_order + 1, np.nan)
    n_rms = np.full(config.max_order + 1, np.nan)
    for m in range(1, config.max_order + 1):
        n_slopes[m], n_rms[m] = _loglog_fit(sigmas, norms[:, m])
    n_slopes[0], n_rms[0] = 0.0, 0.0
    return ConvergenceTable(sigmas, residuals, norms, r_slope, r_rms, n_slopes, n_rms)


# -- the weighted norm functional --------------------------------------------


@dataclass
class FunctionalEstimate:
    value: float
    stderr: float
    # per-sample integrand, kept for paired comparisons across runs
    samples: np.ndarray = field(repr=False)


def estimate_functional(sol, m, config):
    """Monte Carlo estimate of ``E[(max_t ||u^(m)||_{H1} + ||u^(m)_t||_{L2L2}) P(xi)]``.

    ``xi`` samples come from ``config.seed``, so runs with different ``sigma``
    or ``k`` share random numbers.  The norms of ``u^(m)(xi)`` are quadratic
    forms in the monomials ``xi^I``; the Gram matrices of the coefficients are
    formed once and contracted with every sample.
    """
    if m > sol.max_order:
        raise ValueError(f"series only holds orders up to {sol.max_order}")
    n = config.n_mc
    grid = sol.spec.grid
    idx, a = sol.u[m].stacked()
    if not idx:
        return FunctionalEstimate(0.0, 0.0, np.zeros(n))
    b = np.stack([sol.ut[m][i] if i in sol.ut[m] else np.zeros(grid.shape) for i in idx])

    grad = np.gradient(a, grid.h, axis=1, edge_order=2)
    w = grid.quad_weights
    h1_gram = np.einsum("ixt,x,jxt->tij", a, w, a) + np.einsum("ixt,x,jxt->tij", grad, w, grad)
    ut_gram = time_integrate(np.einsum("ixt,x,jxt->tij", b, w, b), grid)

    xi = block_normals(config.seed, 0, n, sol.k)
    phi = mi.monomials(xi, idx)
    h1 = np.einsum("si,tij,sj->st", phi, h1_gram, phi, optimize=True)
    sup_h1 = np.sqrt(np.maximum(h1.max(axis=1), 0.0))
    l2 = np.sqrt(np.maximum(np.einsum("si,ij,sj->s", phi, ut_gram, phi), 0.0))
    vals = (sup_h1 + l2) * config.weight(xi)
    err = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return FunctionalEstimate(float(np.mean(vals)), err, vals)


def direct_norms(sol, m, xi):
    """Norms of ``u^(m)`` evaluated at one ``xi`` (reference for the functional)."""
    return compute_norms(sol.u[m].evaluate(xi), sol.ut[m].evaluate(xi), sol.spec.grid)
