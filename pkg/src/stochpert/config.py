"""Run configuration read from INI-style files.

Sections and keys (defaults in brackets)::

    [problem]
    domain_start = 0.0          left end of the interval
    domain_end   = 1.0          right end of the interval
    final_time   = 0.5          T
    initial      = sin(pi*x)    u_0(x), expression in x
    forcing      = 0            g(x, t), expression in x and t

    [kernel]
    family = squared_exponential   or exponential
    sigma  = 0.1
    eta    = 0.5                    correlation length

    [discretization]
    n_x          = 201
    dt           = 1e-3
    k            = 2              KL truncation
    max_order    = 2              highest series order M
    basis        = nystrom        or analytic (exponential kernel on [0, 1])
    face_average = arithmetic     or harmonic

    [sweep]
    sigmas      = 0.05, 0.1, 0.2
    xi_probe    =                 comma list of k values; empty means all ones
    n_mc        = 1000
    seed        = 0
    weight_poly =                 per-coordinate ascending coefficients,
                                  coordinates separated by ';'

Unknown sections or keys are rejected.  Expressions may use ``x``, ``t``,
``pi``, ``e``, arithmetic operators and the usual elementary functions.
"""

import ast
import configparser
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .heat import ProblemSpec
from .kl import CovarianceKernel, Grid
from .validation import SweepConfig

DEFAULTS = {
    "problem": {
        "domain_start": "0.0",
        "domain_end": "1.0",
        "final_time": "0.5",
        "initial": "sin(pi*x)",
        "forcing": "0",
    },
    "kernel": {
        "family": "squared_exponential",
        "sigma": "0.1",
        "eta": "0.5",
    },
    "discretization": {
        "n_x": "201",
        "dt": "1e-3",
        "k": "2",
        "max_order": "2",
        "basis": "nystrom",
        "face_average": "arithmetic",
    },
    "sweep": {
        "sigmas": "0.05, 0.1, 0.2",
        "xi_probe": "",
        "n_mc": "1000",
        "seed": "0",
        "weight_poly": "",
    },
}

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "abs": np.abs,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "where": np.where,
}
_CONSTS = {"pi": np.pi, "e": np.e}
_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
    ast.Compare, ast.Lt, ast.LtE, ast.Gt, ast.GtE,
)


def compile_expression(text, variables=("x", "t")):
    """Turn an arithmetic expression into a vectorized callable of ``variables``."""
    try:
        tree = ast.parse(text.strip() or "0", mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    allowed = set(variables) | set(_FUNCS) | set(_CONSTS)
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ConfigError(f"unsupported syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Name) and node.id not in allowed:
            raise ConfigError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ConfigError(f"only elementary functions may be called in {text!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError(f"non-numeric constant in {text!r}")
    code = compile(tree, "<config>", "eval")
    env = {"__builtins__": {}, **_FUNCS, **_CONSTS}

    def fn(*args):
        return eval(code, env, dict(zip(variables, args)))

    return fn


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


@dataclass
class RunConfig:
    domain_start: float
    domain_end: float
    final_time: float
    initial: str
    forcing: str
    family: str
    sigma: float
    eta: float
    n_x: int
    dt: float
    k: int
    max_order: int
    basis: str
    face_average: str
    sigmas: tuple
    xi_probe: tuple
    n_mc: int
    seed: int
    weight_poly: tuple
    text: str = ""

    @property
    def digest(self):
        """SHA-256 of the canonical (defaults filled in) configuration."""
        return hashlib.sha256(self.text.encode()).hexdigest()[:16]

    def grid(self):
        try:
            return Grid.uniform(self.n_x, self.final_time, self.dt, self.domain_start, self.domain_end)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def kernel(self, sigma=None):
        return CovarianceKernel(self.family, self.sigma if sigma is None else sigma, self.eta)

    def problem(self):
        grid = self.grid()
        u0 = compile_expression(self.initial, ("x",))
        g = compile_expression(self.forcing, ("x", "t"))
        x = grid.x_nodes
        try:
            spec = ProblemSpec.from_functions(grid, u0, g)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        ends = np.broadcast_to(u0(x), x.shape)[[0, -1]]
        if np.any(np.abs(ends) > 1e-8 * max(1.0, float(np.max(np.abs(spec.initial))))):
            raise ConfigError("initial data must vanish at both ends of the domain")
        return spec

    def sweep(self, **overrides):
        args = dict(
            sigma_list=self.sigmas,
            k=self.k,
            max_order=self.max_order,
            xi_probe=self.xi_probe or None,
            n_mc=self.n_mc,
            seed=self.seed,
            weight_poly=self.weight_poly,
        )
        args.update(overrides)
        try:
            return SweepConfig(**args)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def _parser():
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    return cp


def read_config(path=None, overrides=()):
    """Load ``path`` (or only defaults) and apply ``section.key=value`` overrides."""
    cp = _parser()
    cp.read_dict(DEFAULTS)
    if path is not None:
        user = _parser()
        try:
            with open(path) as fh:
                user.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"malformed configuration: {exc}") from None
        for section in user.sections():
            if section not in DEFAULTS:
                raise ConfigError(f"unknown section [{section}]")
            for key, value in user[section].items():
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"unknown key {section}.{key}")
                cp[section][key] = value
    for item in overrides:
        name, sep, value = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ConfigError(f"unknown key {name.strip()}")
        cp[section][key] = value.strip()
    return _build(cp)


def _build(cp):
    flat = {key: cp[s][key] for s in DEFAULTS for key in DEFAULTS[s]}
    try:
        cfg = RunConfig(
            domain_start=float(flat["domain_start"]),
            domain_end=float(flat["domain_end"]),
            final_time=float(flat["final_time"]),
            initial=flat["initial"],
            forcing=flat["forcing"],
            family=flat["family"].strip(),
            sigma=float(flat["sigma"]),
            eta=float(flat["eta"]),
            n_x=int(flat["n_x"]),
            dt=float(flat["dt"]),
            k=int(flat["k"]),
            max_order=int(flat["max_order"]),
            basis=flat["basis"].strip(),
            face_average=flat["face_average"].strip(),
            sigmas=_floats(flat["sigmas"]),
            xi_probe=_floats(flat["xi_probe"]),
            n_mc=int(flat["n_mc"]),
            seed=int(flat["seed"]),
            weight_poly=tuple(_floats(p) for p in flat["weight_poly"].split(";") if p.strip()),
        )
    except ValueError as exc:
        raise ConfigError(f"bad value: {exc}") from None
    _validate(cfg)
    cfg.text = "".join(f"{s}.{key}={cp[s][key]}\n" for s in DEFAULTS for key in DEFAULTS[s])
    return cfg


def _validate(cfg):
    checks = [
        (cfg.sigma > 0, "kernel.sigma must be positive"),
        (cfg.eta > 0, "kernel.eta must be positive"),
        (cfg.family in ("squared_exponential", "exponential"), f"unknown kernel family {cfg.family!r}"),
        (cfg.n_x >= 3, "discretization.n_x must be at least 3"),
        (cfg.dt > 0, "discretization.dt must be positive"),
        (cfg.k >= 0, "discretization.k must be non-negative"),
        (cfg.max_order >= 0, "discretization.max_order must be non-negative"),
        (cfg.basis in ("nystrom", "analytic"), f"unknown basis {cfg.basis!r}"),
        (cfg.face_average in ("arithmetic", "harmonic"), f"unknown face average {cfg.face_average!r}"),
        (cfg.final_time > 0, "problem.final_time must be positive"),
        (cfg.domain_end > cfg.domain_start, "problem.domain_end must exceed domain_start"),
        (cfg.n_mc >= 1, "sweep.n_mc must be at least 1"),
        (all(s > 0 for s in cfg.sigmas), "sweep.sigmas must be positive"),
        (len(set(cfg.sigmas)) == len(cfg.sigmas), "sweep.sigmas must be distinct"),
        (not cfg.xi_probe or len(cfg.xi_probe) == cfg.k, "sweep.xi_probe needs k entries"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    for text, names in ((cfg.initial, ("x",)), (cfg.forcing, ("x", "t"))):
        compile_expression(text, names)
    cfg.grid()
