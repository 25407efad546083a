"""Command-line interface: ``wsobolev <command> [flags]``.

Settings come from an optional JSON file (``--config``) and are then
overridden by any flag given explicitly. The output directory is taken from
``--out``, else from the ``WSOBOLEV_OUT`` environment variable, else from
the config file, else ``wsobolev_out``.

Exit codes: 0 success, 1 a verification record failed, 2 configuration or
runtime error.
"""
from __future__ import annotations

import argparse
import dataclasses
import inspect
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, WSobolevError
from .experiments import SUITES, ToleranceBook, _clean, run_suite

ENV_OUT = "WSOBOLEV_OUT"
DEFAULT_OUT = "wsobolev_out"
COMMANDS = ("density", "sobolev-norm", "kernel", "geodesic", "verify")
SUITE_CHOICES = ("flat-cusp", "thresholds", "slice-lemma", "morrey", "kernel-threshold", "retraction", "coarea",
                 "kernel", "geodesic", "all")
ALL_ORDER = ("coarea", "flat-cusp", "thresholds", "slice-lemma", "morrey", "kernel", "kernel-threshold",
             "retraction", "geodesic")
MAPS = {"identity": "Identity", "project-x": "ProjectX", "norm-squared": "NormSquared", "radial": "Radial"}
DOMAINS = {
    "square": "Square",
    "disk": "Disk",
    "sector": "Sector",
    "power-cusp": "PowerCusp",
    "flat-cusp": "FlatCusp",
    "annulus": "Annulus",
    "lshape": "LShape",
    "interval": "Interval",
}
FUNCTIONS = ("one", "x", "inverse-x", "power", "bump")
WEIGHTS = ("one", "fiber-length")


@dataclass
class RunConfig:
    command: str
    suite: str | None = None
    domain: str = "square"
    l: float = 2.0
    eps_cut: float = 0.0
    h: float = 1 / 64
    stencil: int = 8
    k: int = 1
    p: float = 2.0
    function: str = "x"
    gamma: float = 1.0
    weight: str = "one"
    underflow: str = "drop"
    map: str = "norm-squared"
    dim: int = 4
    density: str = "constant"
    a: float = 0.0
    bins: int = 64
    resolution: int = 64
    samples: int = 0
    nodes: int = 50
    a_point: list | None = None
    b_point: list | None = None
    refine: bool = True
    seed: int = 0
    tolerance: float | None = None
    tolerances: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    out_dir: str = DEFAULT_OUT
    emit_svg: bool = False

    def to_dict(self):
        return dataclasses.asdict(self)


FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def _check_choice(cfg, key, choices):
    if getattr(cfg, key) not in choices:
        raise ConfigError(f"{key} must be one of {list(choices)}, got {getattr(cfg, key)!r}", key)


def validate(cfg):
    """Reject values outside their documented range; the error names the key."""
    _check_choice(cfg, "command", COMMANDS)
    if cfg.command == "verify":
        if cfg.suite is None:
            raise ConfigError("verify needs a suite", "suite")
        _check_choice(cfg, "suite", SUITE_CHOICES)
        names = ALL_ORDER if cfg.suite == "all" else (cfg.suite,)
        for key, val in cfg.params.items():
            if cfg.suite == "all":
                if key not in SUITES:
                    raise ConfigError(f"unknown suite {key!r} in params", f"params.{key}")
                _check_suite_params(key, val, f"params.{key}")
            else:
                _check_suite_params(names[0], {key: val}, "params")
    _check_choice(cfg, "domain", DOMAINS)
    _check_choice(cfg, "map", MAPS)
    _check_choice(cfg, "function", FUNCTIONS)
    _check_choice(cfg, "weight", WEIGHTS)
    _check_choice(cfg, "underflow", ("raise", "drop"))
    _check_choice(cfg, "stencil", (4, 8, 16))
    for key in ("h", "p", "l"):
        if not getattr(cfg, key) > 0:
            raise ConfigError(f"{key} must be positive", key)
    for key in ("k", "bins", "resolution", "samples", "nodes", "seed"):
        if getattr(cfg, key) < 0:
            raise ConfigError(f"{key} must be nonnegative", key)
    for key in ("a_point", "b_point"):
        v = getattr(cfg, key)
        if v is not None and (not isinstance(v, list) or not all(isinstance(c, (int, float)) for c in v)):
            raise ConfigError(f"{key} must be a list of coordinates", key)
    if cfg.tolerance is not None and not cfg.tolerance >= 0:
        raise ConfigError("tolerance must be >= 0", "tolerance")
    return cfg


def _check_suite_params(suite, params, path):
    if not isinstance(params, dict):
        raise ConfigError("suite parameters must be an object", path)
    sig = inspect.signature(SUITES[suite])
    for key in params:
        if key not in sig.parameters or key == "tol":
            raise ConfigError(f"unknown parameter {key!r} for suite {suite}", f"{path}.{key}")


def load_config_file(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found", "config") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}", "config") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object", "config")
    for key in data:
        if key not in FIELDS:
            raise ConfigError(f"unknown config key {key!r}", key)
    return data


def _point(text):
    try:
        return [float(c) for c in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated coordinates, got {text!r}") from exc


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--config", metavar="PATH", help="JSON file with run settings (flags override it)")
    g.add_argument("--out", dest="out_dir", metavar="DIR", help=f"output directory (env {ENV_OUT}; default {DEFAULT_OUT})")
    g.add_argument("--svg", dest="emit_svg", action="store_const", const=True, help="also write SVG charts")
    g.add_argument("--seed", type=int, help="random seed (default 0)")

    dom = argparse.ArgumentParser(add_help=False)
    d = dom.add_argument_group("domain")
    d.add_argument("--domain", choices=list(DOMAINS), help="catalog domain (default square)")
    d.add_argument("--l", type=float, help="power-cusp exponent (default 2)")
    d.add_argument("--eps-cut", type=float, help="drop points with x < eps_cut (default 0)")
    d.add_argument("--h", type=float, help="grid spacing (default 1/64)")
    d.add_argument("--stencil", type=int, choices=[4, 8, 16], help="neighbour stencil (default 8)")

    parser = argparse.ArgumentParser(
        prog="wsobolev",
        description="Weighted Sobolev norms, push-forward densities, kernels and inner distances on grid domains.",
        formatter_class=_formatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("density", parents=[common], help="push-forward density of a catalog map")
    p.add_argument("--map", choices=list(MAPS), help="catalog map (default norm-squared)")
    p.add_argument("--dim", type=int, help="source dimension for norm-squared and radial (default 4)")
    p.add_argument("--l", type=float, help="band exponent for project-x (default 2)")
    p.add_argument("--density", choices=["constant", "monomial", "radial"], help="source density (default constant)")
    p.add_argument("--a", type=float, help="exponent of a monomial or radial source density (default 0)")
    p.add_argument("--bins", type=int, help="number of target bins (default 64)")
    p.add_argument("--resolution", type=int, help="fiber quadrature points (default 64)")
    p.add_argument("--samples", type=int, help="Monte Carlo samples; 0 skips the oracle (default 0)")

    p = sub.add_parser("sobolev-norm", parents=[common, dom], help="weighted W^{k,p} norm of a test function")
    p.add_argument("--k", type=int, help="derivative order (default 1)")
    p.add_argument("--p", type=float, help="integrability exponent (default 2)")
    p.add_argument("--function", choices=list(FUNCTIONS), help="test function (default x)")
    p.add_argument("--gamma", type=float, help="exponent of the power test function x^-gamma (default 1)")
    p.add_argument("--weight", choices=list(WEIGHTS), help="weight: one or 2 x^l (default one)")
    p.add_argument("--underflow", choices=["raise", "drop"], help="short lattice lines (default drop)")

    p = sub.add_parser("kernel", parents=[common, dom], help="Gram matrix of the Dirac representers")
    p.add_argument("--k", type=int, help="derivative order (default 1)")
    p.add_argument("--weight", choices=list(WEIGHTS), help="weight: one or 2 x^l (default one)")
    p.add_argument("--nodes", type=int, help="number of random support nodes (default 50)")

    p = sub.add_parser("geodesic", parents=[common, dom], help="inner distance between two points")
    p.add_argument("--a-point", type=_point, metavar="X,Y", help="first point (default first node)")
    p.add_argument("--b-point", type=_point, metavar="X,Y", help="second point (default last node)")
    p.add_argument("--no-refine", dest="refine", action="store_const", const=False,
                   help="report the plain graph distance")

    p = sub.add_parser("verify", parents=[common], help="run a verification suite")
    p.add_argument("suite", choices=list(SUITE_CHOICES), help="suite name")
    p.add_argument("--tolerance", type=float, help="replace every record tolerance by this value")
    parser.epilog = _flag_summary(sub)
    return parser


def _formatter(prog):
    return argparse.RawDescriptionHelpFormatter(prog, width=100)


def _flag_summary(sub):
    lines = ["commands and flags:"]
    for name, p in sub.choices.items():
        p.formatter_class = _formatter
        flags = []
        for action in p._actions:
            if action.option_strings:
                flags.append(action.option_strings[-1])
            elif action.dest != "help":
                flags.append(f"<{action.dest}>")
        lines.append(f"  {name}: " + " ".join(flags))
    lines.append("")
    lines.append("suites: " + " ".join(SUITE_CHOICES))
    lines.append(f"environment: {ENV_OUT} overrides the output directory")
    return "\n".join(lines)


def parse_config(argv=None, env=None):
    """Flags (and an optional JSON file) to a validated :class:`RunConfig`."""
    env = os.environ if env is None else env
    ns = build_parser().parse_args(argv)
    data = load_config_file(ns.config) if getattr(ns, "config", None) else {}
    if "command" in data and data["command"] != ns.command:
        raise ConfigError(f"config command {data['command']!r} disagrees with {ns.command!r}", "command")
    data["command"] = ns.command
    flags = {k: v for k, v in vars(ns).items() if k not in ("config", "command") and v is not None}
    out_flag = flags.pop("out_dir", None)
    data.update(flags)
    if out_flag is not None:
        data["out_dir"] = out_flag
    elif env.get(ENV_OUT):
        data["out_dir"] = env[ENV_OUT]
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return validate(cfg)


# -- output ------------------------------------------------------------------

def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _prepare_out(cfg):
    os.makedirs(cfg.out_dir, exist_ok=True)
    if not os.access(cfg.out_dir, os.W_OK | os.X_OK):
        raise PermissionError(f"output directory {cfg.out_dir} is not writable")
    return cfg.out_dir


def _dump(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _g(x):
    return f"{x:.12g}"


# -- commands ----------------------------------------------------------------

def _domain_spec(cfg):
    from .geometry import DomainSpec

    kind = DOMAINS[cfg.domain]
    params = {"l": cfg.l} if kind == "PowerCusp" else {}
    return DomainSpec(kind, params, eps_cut=cfg.eps_cut)


def _weight(cfg, grid):
    from .measure import WeightField

    if cfg.weight == "one":
        return WeightField.constant(grid)
    return WeightField.on_grid(grid, lambda pts, l=cfg.l: 2 * np.abs(pts[:, 0]) ** l, provenance="Coarea")


def _test_function(cfg):
    if cfg.function == "one":
        return lambda p: np.ones(len(p))
    if cfg.function == "x":
        return lambda p: p[:, 0].copy()
    if cfg.function == "inverse-x":
        return lambda p: 1.0 / p[:, 0]
    if cfg.function == "power":
        return lambda p, g=cfg.gamma: np.abs(p[:, 0]) ** (-g)
    return lambda p: np.clip(1 - np.linalg.norm(p, axis=1) / 0.5, 0, None)


def cmd_density(cfg, out):
    from .measure import PushforwardSpec, monte_carlo_density, pushforward_density

    kw = {"density": cfg.density, "a": cfg.a}
    if cfg.map == "identity":
        spec = PushforwardSpec.identity(**kw)
    elif cfg.map == "project-x":
        spec = PushforwardSpec.project_x(cfg.l, **kw)
    elif cfg.map == "norm-squared":
        spec = PushforwardSpec.norm_squared(cfg.dim, **kw)
    else:
        spec = PushforwardSpec.radial(d=cfg.dim, **kw)
    lo, hi = spec.image
    edges = np.linspace(lo, hi, cfg.bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    f = pushforward_density(spec.with_target(centers), cfg.resolution)
    rows = [["y", "coarea"]]
    mc = None
    if cfg.samples:
        mc = monte_carlo_density(spec, cfg.samples, cfg.bins, cfg.seed)
        rows[0].append("monte_carlo")
    for i, y in enumerate(centers):
        row = [_g(y), _g(f.values[i])]
        if mc is not None:
            row.append(_g(mc.values[i]))
        rows.append(row)
    atomic_write(os.path.join(out, "density.csv"), "".join(",".join(r) + "\n" for r in rows))
    atomic_write(os.path.join(out, "density.json"), _dump({"spec": spec.to_dict(), "bins": cfg.bins,
                                                          "resolution": cfg.resolution, "samples": cfg.samples}))
    print(f"map {spec.map}, image [{_g(lo)}, {_g(hi)}], {cfg.bins} bins written to {out}/density.csv")
    return 0


def cmd_sobolev_norm(cfg, out):
    from .geometry import build_grid_domain
    from .sobolev import sobolev_levels

    grid = build_grid_domain(_domain_spec(cfg), cfg.h, cfg.stencil)
    w = _weight(cfg, grid)
    levels = sobolev_levels(_test_function(cfg), grid, w, cfg.k, cfg.p, underflow=cfg.underflow)
    norm = float(sum(levels))
    result = {"domain": grid.spec.to_dict(h=cfg.h, stencil=cfg.stencil), "k": cfg.k, "p": cfg.p,
              "function": cfg.function, "weight": cfg.weight, "levels": [float(v) for v in levels], "norm": norm}
    atomic_write(os.path.join(out, "sobolev_norm.json"), _dump(result))
    print(f"norm {_g(norm)}")
    for i, v in enumerate(levels):
        print(f"  |D^{i} u| {_g(v)}")
    return 0


def cmd_kernel(cfg, out):
    from .geometry import build_grid_domain
    from .kernel import kernel_matrix
    from .sobolev import assemble_operator

    grid = build_grid_domain(_domain_spec(cfg), cfg.h, cfg.stencil)
    op = assemble_operator(grid, _weight(cfg, grid), cfg.k, underflow="drop")
    rng = np.random.default_rng(cfg.seed)
    n = min(cfg.nodes, len(op.support))
    nodes = np.sort(rng.choice(op.support, size=n, replace=False))
    km = kernel_matrix(op, nodes)
    ev = km.eigenvalues()
    km_path = os.path.join(out, "kernel.csv")
    atomic_write(km_path, km.to_csv())
    summary = {"n_grid": grid.n_nodes, "n_support": len(op.support), "n_nodes": n, "k": cfg.k,
               "min_eigenvalue": float(ev[0]), "max_eigenvalue": float(ev[-1]), "asymmetry": km.asymmetry,
               "max_backward_error": km.stats["max_backward_error"]}
    atomic_write(os.path.join(out, "kernel.json"), _dump(summary))
    print(f"{n} nodes, min eigenvalue {_g(ev[0])}, asymmetry {_g(km.asymmetry)}")
    return 0


def cmd_geodesic(cfg, out):
    from .geometry import build_grid_domain
    from .metric import InnerMetricGraph, inner_distance

    grid = build_grid_domain(_domain_spec(cfg), cfg.h, cfg.stencil)
    graph = InnerMetricGraph(grid)
    a = 0 if cfg.a_point is None else grid.nearest_node(cfg.a_point)
    b = grid.n_nodes - 1 if cfg.b_point is None else grid.nearest_node(cfg.b_point)
    d = inner_distance(graph, a, b, refine=cfg.refine)
    result = {"a": grid.points[a], "b": grid.points[b], "distance": d,
              "euclidean": float(np.linalg.norm(grid.points[a] - grid.points[b])), "refine": cfg.refine}
    atomic_write(os.path.join(out, "geodesic.json"), _dump(result))
    print(f"d_X = {_g(d) if math.isfinite(d) else 'inf'}")
    return 0


def cmd_verify(cfg, out):
    names = ALL_ORDER if cfg.suite == "all" else (cfg.suite,)
    book = ToleranceBook(cfg.tolerances, cfg.tolerance)
    ok = True
    summary = {}
    for name in names:
        params = cfg.params.get(name, {}) if cfg.suite == "all" else cfg.params
        rep = run_suite(name, params, book)
        atomic_write(os.path.join(out, f"{name}.json"), rep.to_json())
        atomic_write(os.path.join(out, f"{name}.csv"), rep.records_csv())
        if cfg.emit_svg:
            for fit_name, svg in rep.svg_charts().items():
                atomic_write(os.path.join(out, f"{name}-{fit_name}.svg"), svg)
        n_fail = sum(not r.passed for r in rep.records)
        print(f"{name}: {rep.verdict} ({len(rep.records) - n_fail}/{len(rep.records)} records)")
        for r in rep.records:
            if not r.passed:
                print(f"  FAIL {r.name}: measured {r.to_dict()['measured']!r}")
        summary[name] = rep.verdict
        ok = ok and rep.passed
    if cfg.suite == "all":
        atomic_write(os.path.join(out, "summary.json"), _dump(summary))
    return 0 if ok else 1


DISPATCH = {
    "density": cmd_density,
    "sobolev-norm": cmd_sobolev_norm,
    "kernel": cmd_kernel,
    "geodesic": cmd_geodesic,
    "verify": cmd_verify,
}


def dispatch(cfg):
    """Run a validated config; returns the process exit code."""
    try:
        out = _prepare_out(cfg)
        return DISPATCH[cfg.command](cfg, out)
    except (WSobolevError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None):
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        where = f" [{exc.key}]" if exc.key else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
