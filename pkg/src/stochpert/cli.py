"""Command-line interface.

    stochpert kl         KL eigenpairs and trace residual
    stochpert solve      series terms u^(0..M) as binary fields + manifest
    stochpert mc         Monte Carlo mean and variance of direct solves
    stochpert converge   sigma sweep of fixed-xi residuals and per-order norms
    stochpert uniqueness moment Gram matrix or probe for a coefficient set

Every command reads an optional INI file (``-c``), accepts
``--set section.key=value`` overrides, and writes deterministic output whose
header records the tool version and a hash of the effective configuration.
Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
Monte Carlo work is spread over ``STOCHPERT_WORKERS`` processes.
"""

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import io as out
from . import moments
from . import multiindex as mi
from .config import read_config
from .errors import ConfigError, NumericalError
from .hierarchy import solve_hierarchy
from .kl import basis_diagnostics
from .rng import block_normals
from .validation import build_basis, mc_reference, sigma_convergence

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _load(args, **overrides):
    sets = list(args.set or [])
    sets += [f"{key}={value}" for key, value in overrides.items() if value is not None]
    return read_config(args.config, sets)


def _basis(cfg, sigma=None):
    kernel = cfg.kernel(sigma)
    try:
        return build_basis(kernel, cfg.grid(), cfg.k, cfg.basis)
    except ValueError as exc:
        if isinstance(exc, NumericalError):
            raise
        raise ConfigError(str(exc)) from None


def _meta(cfg, **extra):
    meta = {"config": cfg.digest}
    meta.update(extra)
    return meta


def _emit(path, columns, rows, meta):
    text = out.write_csv(None if path in (None, "-") else path, columns, rows, meta)
    if path in (None, "-"):
        sys.stdout.write(text)


def cmd_kl(args):
    kind = "analytic" if args.analytic else "nystrom" if args.nystrom else None
    cfg = _load(args, **{"discretization.k": args.k, "kernel.family": args.kernel, "discretization.basis": kind})
    basis = _basis(cfg)
    rep = basis_diagnostics(basis)
    rows = []
    for i, pair in enumerate(basis.pairs):
        w = "" if pair.w is None else pair.w
        rows.append([i + 1, pair.lam, w, rep.per_mode_derivative_supnorm[i]])
    meta = _meta(cfg, basis=cfg.basis, family=cfg.family, trace_residual=rep.trace_residual)
    _emit(args.out, ["i", "lambda", "w", "df_sup"], rows, meta)


def cmd_solve(args):
    cfg = _load(args, **{"discretization.max_order": args.M})
    spec = cfg.problem()
    basis = _basis(cfg)
    sol = solve_hierarchy(basis, spec, cfg.max_order)
    root = Path(args.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    grid = spec.grid
    orders = []
    for m, poly in enumerate(sol.u):
        idx, arr = poly.stacked()
        if not idx:
            continue
        name = f"order_{m}"
        out.write_field(root / name, arr, {"order": m, "indices": [list(i) for i in idx], "axes": ["index", "x", "t"]})
        orders.append({"order": m, "file": name + ".bin", "indices": [list(i) for i in idx]})
    manifest = {
        "tool": out.TOOL,
        "config": cfg.digest,
        "grid": {
            "x_start": cfg.domain_start,
            "x_end": cfg.domain_end,
            "n_x": grid.n_x,
            "final_time": cfg.final_time,
            "dt": cfg.dt,
            "n_t": grid.n_t,
        },
        "basis": {
            "kind": cfg.basis,
            "family": cfg.family,
            "sigma": cfg.sigma,
            "eta": cfg.eta,
            "k": basis.k,
            "eigenvalues": [float(v) for v in basis.eigenvalues],
        },
        "max_order": cfg.max_order,
        "index_ordering": "graded-lex",
        "layout": "little-endian float64, row-major, shape (n_terms, n_x, n_t + 1)",
        "orders": orders,
    }
    out.write_json(root / "manifest.json", manifest)


def cmd_mc(args):
    cfg = _load(args, **{"sweep.seed": args.seed, "sweep.n_mc": args.samples})
    spec = cfg.problem()
    basis = _basis(cfg)
    res = mc_reference(spec, basis, cfg.n_mc, cfg.seed, face_mean=cfg.face_average)
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    info = {"config": cfg.digest, "seed": cfg.seed, "samples": res.n, "failures": res.failures, "axes": ["x", "t"]}
    out.write_field(root / "mean", res.mean, info)
    out.write_field(root / "variance", res.variance, info)
    mid = spec.grid.n_x // 2
    rows = [[res.n, res.failures, res.mean[mid, -1], res.variance[mid, -1]]]
    out.write_csv(root / "summary.csv", ["accepted", "failures", "mean_mid_T", "variance_mid_T"], rows, _meta(cfg, seed=cfg.seed))


def cmd_converge(args):
    cfg = _load(args, **{"sweep.sigmas": args.sigmas})
    spec = cfg.problem()
    sweep = cfg.sweep()
    table = sigma_convergence(sweep, spec, cfg.kernel(), cfg.basis, cfg.face_average)
    orders = range(sweep.max_order + 1)
    cols = ["sigma", "residual"] + [f"N_{m}" for m in orders]
    rows = [[s, r, *n] for s, r, n in zip(table.sigmas, table.residuals, table.norms)]
    rows.append(["slope", table.residual_slope, *table.norm_slopes])
    rows.append(["fit_rms", table.residual_fit_rms, *table.norm_fit_rms])
    _emit(args.out, cols, rows, _meta(cfg, xi_probe=" ".join(out.fmt(v) for v in sweep.probe())))


def read_coeffs(path, k):
    """Coefficient file: one term per line, ``i_1 ... i_k a`` (commas allowed)."""
    entries = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].replace(",", " ").split()
        if not line:
            continue
        if len(line) != k + 1:
            raise ConfigError(f"{path}:{n}: expected {k} exponents and a coefficient")
        try:
            idx = tuple(int(v) for v in line[:k])
            a = float(line[k])
        except ValueError:
            raise ConfigError(f"{path}:{n}: malformed term") from None
        if min(idx) < 0:
            raise ConfigError(f"{path}:{n}: negative exponent")
        entries[idx] = entries.get(idx, 0.0) + a
    return moments.MonomialCoeffs(k, entries)


def cmd_uniqueness(args):
    if args.k < 0 or args.n < 0:
        raise ConfigError("--k and --n must be non-negative")
    if args.samples and args.seed is None:
        raise ConfigError("--seed is required when --samples is given")
    meta = {"k": args.k}
    if args.coeffs is None:
        size = math.comb(args.n + args.k, args.k)
        try:
            g = moments.gram_matrix(args.k, args.n)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        lam_min = float(np.linalg.eigvalsh(g)[0]) if size else math.nan
        det = moments.gram_determinant(args.k, args.n) if size <= 200 else ""
        rows = [[args.k, args.n, size, lam_min, det]]
        cols = ["k", "n", "size", "min_eigenvalue", "determinant"]
        if args.samples:
            rows[0].append(_mc_gram_error(args.k, args.n, g, args.samples, args.seed))
            cols.append("mc_rel_error")
            meta["seed"] = args.seed
        _emit(args.out, cols, rows, meta)
        return
    s = read_coeffs(args.coeffs, args.k)
    if not s.entries:
        raise ConfigError("coefficient set is empty")
    j, m = moments.construct_probe(s)
    margin = moments.probe_log_margin(s, j, m)
    value = moments.probe_expectation(s, m)
    cols = ["J", "M", "log_margin", "probe_expectation"]
    row = [" ".join(map(str, j)), " ".join(map(str, m)), margin, float(value)]
    if args.samples:
        rep = moments.uniqueness_residual(s, args.samples, args.seed)
        cols += ["second_moment_exact", "second_moment_mc", "second_moment_stderr"]
        row += [rep.exact, rep.mc_estimate, rep.mc_stderr]
        meta["seed"] = args.seed
    _emit(args.out, cols, [row], meta)


def _mc_gram_error(k, n, g, samples, seed):
    basis = mi.up_to(k, n)
    acc = np.zeros_like(g)
    step = 1 << 16
    for lo in range(0, samples, step):
        phi = mi.monomials(block_normals(seed, lo, min(lo + step, samples), k), basis)
        acc += phi.T @ phi
    acc /= samples
    scale = np.sqrt(np.outer(np.diag(g), np.diag(g)))
    return float(np.max(np.abs(acc - g) / scale))


def build_parser():
    p = _Parser(prog="stochpert", description="Perturbation series for the heat equation with a lognormal coefficient.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("-c", "--config", help="INI configuration file (defaults if omitted)")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one configuration key")

    sp = sub.add_parser("kl", help="KL eigenpairs")
    common(sp)
    sp.add_argument("--k", type=int)
    sp.add_argument("--kernel", choices=["squared_exponential", "exponential"])
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--analytic", action="store_true")
    g.add_argument("--nystrom", action="store_true")
    sp.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    sp.set_defaults(func=cmd_kl)

    sp = sub.add_parser("solve", help="series terms up to order M")
    common(sp)
    sp.add_argument("--M", type=int)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("mc", help="Monte Carlo reference moments")
    common(sp)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_mc)

    sp = sub.add_parser("converge", help="sigma sweep at a fixed xi")
    common(sp)
    sp.add_argument("--sigmas", help="comma-separated sigma values")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("uniqueness", help="moment Gram matrix or probe construction")
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--n", type=int, default=2, help="maximal degree of the Gram basis")
    sp.add_argument("--coeffs", help="coefficient file; switches to the probe report")
    sp.add_argument("--samples", type=int, default=0, help="Monte Carlo samples for a sampled cross-check")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_uniqueness)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK
