"""Crank-Nicolson solvers for ``u_t - (a u_x)_x = g`` with zero Dirichlet data.

Fields are plain arrays of shape ``(n_x, n_t + 1)`` indexed ``[space, time]``;
batched solves append a trailing batch axis.
"""

from dataclasses import dataclass

import numba
import numpy as np
from scipy.linalg import solve_banded

from .kl import Grid, spatial_gradient


@dataclass(eq=False)
class ProblemSpec:
    """Heat problem data sampled on a grid.

    ``forcing`` has shape ``(n_x, n_t + 1)`` and ``initial`` shape ``(n_x,)``.
    """

    grid: Grid
    forcing: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        self.forcing = np.broadcast_to(np.asarray(self.forcing, dtype=float), self.grid.shape)
        self.initial = np.asarray(self.initial, dtype=float)
        if self.initial.shape != (self.grid.n_x,):
            raise ValueError("initial data must have one value per spatial node")
        scale = max(1.0, float(np.max(np.abs(self.initial))))
        if abs(self.initial[0]) > 1e-12 * scale or abs(self.initial[-1]) > 1e-12 * scale:
            raise ValueError("initial data must vanish on the boundary")

    @classmethod
    def from_functions(cls, grid, initial, forcing=None):
        """Sample ``initial(x)`` and ``forcing(x, t)`` (vectorized callables) on ``grid``."""
        x = grid.x_nodes
        u0 = np.array(np.broadcast_to(initial(x), x.shape), dtype=float)
        u0[0] = u0[-1] = 0.0
        if forcing is None:
            g = np.zeros(grid.shape)
        else:
            g = np.broadcast_to(forcing(x[:, None], grid.t_nodes[None, :]), grid.shape)
        return cls(grid, g, u0)

    def with_data(self, forcing=None, initial=None):
        return ProblemSpec(
            self.grid,
            self.forcing if forcing is None else forcing,
            self.initial if initial is None else initial,
        )


def laplacian(u, h):
    """Second difference along axis 0; zero on the boundary rows."""
    out = np.zeros_like(u)
    out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)
    return out


def face_coefficients(a, mean="arithmetic"):
    """Diffusivity at the ``n_x - 1`` cell faces from nodal values (axis 0)."""
    if mean == "arithmetic":
        return 0.5 * (a[1:] + a[:-1])
    if mean == "harmonic":
        return 2.0 * a[1:] * a[:-1] / (a[1:] + a[:-1])
    raise ValueError(f"unknown face average {mean!r}")


def _march(af, h, dt, u0, forcing):
    """Yield the interior solution at every time level.

    ``af``: face diffusivities, shape ``(n_x - 1,)``.  ``u0`` is interior data
    with an optional trailing batch axis; ``forcing`` has shape
    ``(n_int, n_t + 1, ...)``.
    """
    r = 0.5 * dt / (h * h)
    u = np.array(u0, dtype=float)
    # implicit matrix I - dt/2 L; the explicit one is 2I minus it
    lower = -r * af[:-1]
    upper = -r * af[1:]
    diag = 1.0 + r * (af[:-1] + af[1:])
    pad = (1,) * (u.ndim - 1)
    lower_b, upper_b = lower.reshape(lower.shape + pad), upper.reshape(upper.shape + pad)
    diag2 = (2.0 - diag).reshape(diag.shape + pad)
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]

    yield u
    n_t = forcing.shape[1] - 1
    for n in range(n_t):
        rhs = diag2 * u
        rhs[1:] -= lower_b[1:] * u[:-1]
        rhs[:-1] -= upper_b[:-1] * u[1:]
        rhs += (0.5 * dt) * (forcing[:, n] + forcing[:, n + 1])
        u = solve_banded((1, 1), ab, rhs, overwrite_b=True, check_finite=False)
        yield u


def _collect(af, grid, u0, forcing):
    n_x, n_t = grid.n_x, grid.n_t
    batch = np.broadcast_shapes(u0.shape[1:], forcing.shape[2:], af.shape[1:])
    out = np.zeros((n_x, n_t + 1) + batch)
    u0i = np.broadcast_to(u0[1:-1], (n_x - 2,) + batch)
    gi = forcing[1:-1]
    for n, u in enumerate(_march(af, grid.h, grid.dt, u0i, gi)):
        out[1:-1, n] = u
    return out


def solve_heat(spec):
    """Crank-Nicolson solution of ``u_t - u_xx = g`` with zero boundary values."""
    af = np.ones(spec.grid.n_x - 1)
    return _collect(af, spec.grid, spec.initial, spec.forcing)


def solve_heat_batch(grid, forcing, initial=None):
    """Solve many heat problems sharing one grid.

    ``forcing`` has shape ``(B, n_x, n_t + 1)``; ``initial`` defaults to zero.
    Returns an array of the same shape.
    """
    forcing = np.asarray(forcing, dtype=float)
    b = forcing.shape[0]
    if b == 0:
        return np.zeros_like(forcing)
    g = np.moveaxis(forcing, 0, -1)
    u0 = np.zeros((grid.n_x, b)) if initial is None else np.moveaxis(np.asarray(initial, dtype=float), 0, -1)
    af = np.ones(grid.n_x - 1)
    return np.ascontiguousarray(np.moveaxis(_collect(af, grid, u0, g), -1, 0))


def solve_variable(spec, coeff, mean="arithmetic"):
    """Crank-Nicolson solution of ``u_t - (a u_x)_x = g``.

    ``coeff`` holds nodal values of ``a(x) > 0``; the face values use the
    arithmetic (default) or harmonic mean of neighbouring nodes.
    """
    a = np.asarray(coeff, dtype=float)
    if a.shape != (spec.grid.n_x,):
        raise ValueError("coefficient must have one value per spatial node")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ValueError("diffusion coefficient must be finite and strictly positive")
    return _collect(face_coefficients(a, mean), spec.grid, spec.initial, spec.forcing)


@numba.njit(cache=True)
def _cn_batch_sums(af, r, u0, gh, shift, s1, s2, last_mid, mid):
    # One Crank-Nicolson march per column of ``af`` (face values, (n_int+1, B)).
    # Samples sit on the innermost loop so their Thomas recurrences interleave.
    # Accumulates sum(u - shift) and sum((u - shift)^2) per [time, node].
    nf, b = af.shape
    n = nf - 1
    n_t = gh.shape[0]
    lo = np.empty((n, b))
    up = np.empty((n, b))
    ex = np.empty((n, b))
    cp = np.empty((n, b))
    inv = np.empty((n, b))
    li = np.empty((n, b))
    u = np.empty((n, b))
    y = np.empty((n, b))
    for j in range(n):
        for s in range(b):
            lo[j, s] = -r * af[j, s]
            up[j, s] = -r * af[j + 1, s]
            ex[j, s] = 1.0 + r * (af[j, s] + af[j + 1, s])
    for s in range(b):
        inv[0, s] = 1.0 / ex[0, s]
        cp[0, s] = up[0, s] * inv[0, s]
        li[0, s] = 0.0
    for j in range(1, n):
        for s in range(b):
            inv[j, s] = 1.0 / (ex[j, s] - lo[j, s] * cp[j - 1, s])
            cp[j, s] = up[j, s] * inv[j, s]
            li[j, s] = lo[j, s] * inv[j, s]
    for j in range(n):
        for s in range(b):
            ex[j, s] = 2.0 - ex[j, s]
            u[j, s] = u0[j]
    for j in range(n):
        a1 = 0.0
        a2 = 0.0
        for s in range(b):
            d = u[j, s] - shift[0, j]
            a1 += d
            a2 += d * d
        s1[0, j] += a1
        s2[0, j] += a2
    for t in range(n_t):
        # explicit half step fused with the forward sweep
        for j in range(n):
            g = gh[t, j]
            for s in range(b):
                v = ex[j, s] * u[j, s] + g
                if j > 0:
                    v -= lo[j, s] * u[j - 1, s]
                if j < n - 1:
                    v -= up[j, s] * u[j + 1, s]
                if j > 0:
                    y[j, s] = v * inv[j, s] - li[j, s] * y[j - 1, s]
                else:
                    y[j, s] = v * inv[j, s]
        for j in range(n - 2, -1, -1):
            for s in range(b):
                y[j, s] -= cp[j, s] * y[j + 1, s]
        for j in range(n):
            sh = shift[t + 1, j]
            a1 = 0.0
            a2 = 0.0
            for s in range(b):
                u[j, s] = y[j, s]
                d = y[j, s] - sh
                a1 += d
                a2 += d * d
            s1[t + 1, j] += a1
            s2[t + 1, j] += a2
    for s in range(b):
        last_mid[s] = u[mid, s]


BATCH_BLOCK = 64


def variable_batch_sums(spec, coeffs, shift, mean="arithmetic"):
    """Shifted first and second sums of many variable-coefficient solves.

    ``coeffs`` has shape ``(n_x, B)``, one diffusivity per column; ``shift``
    is a grid field.  Returns ``(s1, s2, mid)`` where ``s1 = sum_b (u_b - shift)``
    and ``s2 = sum_b (u_b - shift)^2`` are grid fields (zero on the boundary)
    and ``mid`` holds ``u_b`` at the middle node and final time.  Samples are
    processed in fixed blocks of ``BATCH_BLOCK`` and summed in order.
    """
    grid = spec.grid
    af = face_coefficients(np.asarray(coeffs, dtype=float), mean)
    r = 0.5 * grid.dt / (grid.h * grid.h)
    u0 = np.ascontiguousarray(spec.initial[1:-1])
    f = spec.forcing[1:-1]
    gh = np.ascontiguousarray(((0.5 * grid.dt) * (f[:, :-1] + f[:, 1:])).T)
    sh = np.ascontiguousarray(np.asarray(shift, dtype=float)[1:-1].T)
    n_int = grid.n_x - 2
    s1 = np.zeros((grid.n_t + 1, n_int))
    s2 = np.zeros_like(s1)
    b = af.shape[1]
    mid = np.empty(b)
    for lo in range(0, b, BATCH_BLOCK):
        hi = min(lo + BATCH_BLOCK, b)
        p1 = np.zeros_like(s1)
        p2 = np.zeros_like(s1)
        _cn_batch_sums(np.ascontiguousarray(af[:, lo:hi]), r, u0, gh, sh, p1, p2, mid[lo:hi], grid.n_x // 2 - 1)
        s1 += p1
        s2 += p2
    out1 = np.zeros(grid.shape)
    out2 = np.zeros(grid.shape)
    out1[1:-1] = s1.T
    out2[1:-1] = s2.T
    return out1, out2, mid


def time_derivative(u, spec, rhs):
    """``u_t`` from the equation itself: ``u_xx + rhs`` at every time level.

    Boundary rows are zero since the Dirichlet data are constant.  ``rhs`` is
    the forcing the field was solved with.
    """
    u = np.asarray(u)
    rhs = np.asarray(rhs)
    if u.shape[:2] != spec.grid.shape or rhs.shape[:2] != spec.grid.shape:
        raise ValueError("field shape does not match the grid")
    ut = laplacian(u, spec.grid.h) + rhs
    ut[0] = 0.0
    ut[-1] = 0.0
    return ut


@dataclass
class Norms:
    sup_H10: float
    l2l2_ut: float


def h1_squared(u, grid):
    """``int u^2 + int u_x^2`` per time level (and batch member)."""
    ux = spatial_gradient(u, grid.h, axis=0)
    return grid.integrate(u * u + ux * ux)


def time_integrate(values, grid):
    """Trapezoid rule over the time axis (axis 0 of ``values``)."""
    dt = grid.dt
    return dt * (np.sum(values, axis=0) - 0.5 * (values[0] + values[-1]))


def compute_norms(u, u_t, grid):
    """``max_t ||u||_{H^1}`` and ``||u_t||_{L2(0,T; L2(D))}`` by quadrature."""
    sup_h1 = float(np.sqrt(np.max(h1_squared(u, grid))))
    l2l2 = float(np.sqrt(max(time_integrate(grid.integrate(u_t * u_t), grid), 0.0)))
    return Norms(sup_h1, l2l2)
