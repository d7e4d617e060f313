"""Command-line experiment runner.

Every subcommand writes <outdir>/<experiment>-<timestamp>.json and, where
the report has 2-D data, a CSV next to it.  ``--config FILE`` reads a flat
``key = value`` file; explicit flags override it.

Exit codes: 0 success, 1 invalid configuration or violated precondition,
2 numerical abort from the instability detector.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import analysis, io, spectral
from .conventions import COUPLING, parse_branch
from .grid import l2_norm, make_grid
from .operators import GeneratorTag
from .propagator import EvolveConfig, InstabilityError, evolve

log = logging.getLogger("kdvlab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class ConfigError(ValueError):
    pass


def floats(s):
    if isinstance(s, (list, tuple)):
        return [float(v) for v in s]
    return [float(v) for v in str(s).split(",") if v.strip()]


def boolean(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


def complex_value(s):
    return complex(str(s).replace(" ", "").replace("i", "j"))


def theta_value(s):
    return s if str(s) == "abs_p" else float(s)


def read_config(path) -> dict:
    """Flat key = value lines; '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{n}: expected key = value")
            out[key.strip().replace("-", "_")] = val.strip()
    return out


# --------------------------------------------------------------------------
# parser


def _add(p, *names, **kw):
    kw["default"] = argparse.SUPPRESS
    p.add_argument(*names, **kw)


def _common(p, L=30.0, N=1024):
    _add(p, "--config", help="flat key = value file; flags take precedence")
    _add(p, "--L", type=float, help=f"half-width of the periodic box (default {L})")
    _add(p, "--N", type=int, help=f"number of grid points (default {N})")
    _add(p, "--coupling", type=float, help="coefficient c in H = H0 + c p V (default 12)")
    _add(p, "--outdir", help="output directory (default runs)")
    _add(p, "--experiment", help="label used in the output file name")
    _add(p, "--rng-seed", dest="rng_seed", type=int, help="seed for the random battery members")
    p.set_defaults(_defaults={"L": L, "N": N, "coupling": COUPLING, "outdir": "runs", "rng_seed": 0})


def _state(p):
    _add(p, "--state", help="battery member name, or 'battery' for all (default gauss_x0=0)")


def build_parser():
    ap = argparse.ArgumentParser(prog="kdvlab", description="Linearized KdV numerical lab")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    specs = {}

    p = sub.add_parser("evolve", help="evolve one state and record its norm")
    _common(p)
    _state(p)
    _add(p, "--T", type=float)
    _add(p, "--dt", type=float)
    _add(p, "--generator", help="H, Hstar, Htilde0, H0, NegH, NegHstar")
    _add(p, "--scheme", choices=["lawson_rk4", "dense_oracle"])
    _add(p, "--record-every", dest="record_every", type=int)
    _add(p, "--dealias", type=boolean, help="project coupled runs onto |xi| <= 2/3 xi_max (on/off, default on)")
    specs["evolve"] = {
        "T": 1.0,
        "dt": None,
        "generator": "H",
        "scheme": "lawson_rk4",
        "record_every": 0,
        "state": "gauss_x0=0",
        "dealias": True,
    }

    p = sub.add_parser("stability", help="norm-ratio scan over the seed battery")
    _common(p)
    _add(p, "--T", type=float)
    _add(p, "--dt", type=float)
    _add(p, "--generator")
    _add(p, "--round-trip", dest="round_trip", type=boolean)
    specs["stability"] = {"T": 50.0, "dt": None, "generator": "H", "round_trip": True}

    p = sub.add_parser("smoothing", help="weighted smoothing integrals on a time ladder")
    _common(p)
    _state(p)
    _add(p, "--alpha", type=floats, help="comma-separated weights e^{-alpha|x|}")
    _add(p, "--branch", help="upper or lower")
    _add(p, "--generator")
    _add(p, "--T-ladder", dest="T_ladder", type=floats)
    _add(p, "--dt", type=float)
    specs["smoothing"] = {"alpha": [0.5, 1.0], "branch": "upper", "generator": "H", "T_ladder": [25.0, 50.0, 100.0], "dt": None, "state": "battery"}

    p = sub.add_parser("free-smoothing", help="free-flow smoothing integral with <x>^-1 weight")
    _common(p, L=400.0, N=8192)
    _state(p)
    _add(p, "--theta", type=theta_value, help="exponent in [0, 1] or abs_p")
    _add(p, "--T-ladder", dest="T_ladder", type=floats)
    _add(p, "--dt-sample", dest="dt_sample", type=float)
    specs["free-smoothing"] = {"theta": 1.0, "T_ladder": [25.0, 50.0, 100.0], "dt_sample": 0.01, "state": "gauss_x0=0"}

    p = sub.add_parser("decay", help="decay fit of the conjugated free flow")
    _common(p)
    _add(p, "--alpha", type=float)
    _add(p, "--n", type=int)
    _add(p, "--branch")
    _add(p, "--window", type=floats)
    _add(p, "--level", choices=["state", "symbol"])
    specs["decay"] = {"alpha": 1.0, "n": 0, "branch": "upper", "window": [1.0, 10.0], "level": "state"}

    p = sub.add_parser("wave-op", help="Cook wave-operator convergence")
    _common(p, L=2048.0, N=16384)
    _state(p)
    _add(p, "--direction", type=int, choices=[1, -1])
    _add(p, "--checkpoints", type=floats)
    _add(p, "--dt", type=float)
    specs["wave-op"] = {"direction": 1, "checkpoints": [5.0, 10.0, 20.0, 40.0], "dt": None, "state": "gauss_x0=0"}

    p = sub.add_parser("inverse-wave", help="inverse wave-operator convergence and scattering residual")
    _common(p, L=2048.0, N=16384)
    _state(p)
    _add(p, "--direction", type=int, choices=[1, -1])
    _add(p, "--checkpoints", type=floats)
    _add(p, "--limit-time", dest="limit_time", type=float)
    _add(p, "--dt", type=float)
    specs["inverse-wave"] = {"direction": 1, "checkpoints": [10.0, 20.0, 40.0, 80.0], "limit_time": None, "dt": None, "state": "gauss_x0=0"}

    p = sub.add_parser("eigen-scan", help="dense eigenvalues at N and 2N")
    _common(p, N=256)
    _add(p, "--tag")
    _add(p, "--tol-match", dest="tol_match", type=float)
    specs["eigen-scan"] = {"tag": "H", "tol_match": spectral.MATCH_TOL}

    p = sub.add_parser("pseudospec", help="smallest singular value of A - z over a box")
    _common(p, N=256)
    _add(p, "--box", help="re0,re1,im0,im1")
    _add(p, "--nx", type=int)
    _add(p, "--ny", type=int)
    _add(p, "--tag")
    specs["pseudospec"] = {"box": "-5,5,0.1,2", "nx": 40, "ny": 20, "tag": "H"}

    p = sub.add_parser("evans", help="Evans function sweep over a box")
    _common(p)
    _add(p, "--box", help="re0,re1,im0,im1")
    _add(p, "--nx", type=int)
    _add(p, "--ny", type=int)
    _add(p, "--L-ode", dest="L_ode", type=float)
    _add(p, "--tol", type=float)
    _add(p, "--adjoint", type=boolean)
    _add(p, "--lam", type=complex_value, help="evaluate a single lambda instead of a sweep")
    specs["evans"] = {"box": "-5,5,0.1,2", "nx": 40, "ny": 20, "L_ode": 15.0, "tol": 1e-10, "adjoint": False, "lam": None}

    p = sub.add_parser("selftest", help="run the fast sanity battery")
    _common(p)
    specs["selftest"] = {}

    p = sub.add_parser("plotdata", help="write CSV curves from a saved report")
    p.add_argument("report")
    p.add_argument("--outdir", default=None)
    return ap, specs, sub.choices


def resolve(ns, specs) -> dict:
    """Defaults < config file < explicit flags, with types taken from the parser."""
    cmd = ns.command
    cfg = dict(ns._defaults)
    cfg.update(specs[cmd])
    if getattr(ns, "config", None):
        try:
            raw = read_config(ns.config)
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
        for k, v in raw.items():
            if k not in cfg:
                raise ConfigError(f"config key {k!r} is not a parameter of {cmd}")
            cfg[k] = _convert(ns._types.get(k), v, k)
    for k, v in vars(ns).items():
        if not k.startswith("_") and k not in ("command", "config", "verbose"):
            cfg[k] = v
    cfg["experiment"] = cfg.get("experiment") or cmd
    return cfg


def _convert(typ, v, key):
    if typ is None:
        return None if v.lower() == "none" else v
    try:
        return typ(v)
    except (ValueError, argparse.ArgumentTypeError) as e:
        raise ConfigError(f"config key {key!r}: {e}") from e


def _types(sub):
    return {a.dest: a.type for a in sub._actions if a.type is not None}


# --------------------------------------------------------------------------
# commands


def _grid(cfg):
    return make_grid(cfg["L"], cfg["N"])


def _states(cfg, grid):
    battery = analysis.seed_battery(grid, cfg["rng_seed"])
    name = cfg.get("state", "gauss_x0=0")
    if name == "battery":
        return battery
    if name not in battery:
        raise ConfigError(f"unknown state {name!r}; choose one of {sorted(battery)} or 'battery'")
    return {name: battery[name]}


def _one_state(cfg, grid):
    states = _states(cfg, grid)
    if len(states) != 1:
        raise ConfigError("this experiment takes a single --state")
    return next(iter(states.items()))


def cmd_evolve(cfg):
    grid = _grid(cfg)
    name, f = _one_state(cfg, grid)
    ec = EvolveConfig(
        cfg["generator"], cfg["T"], cfg["dt"], cfg["scheme"], cfg["record_every"], cfg["coupling"], cfg["dealias"]
    )
    tr = evolve(f, ec)
    every = max(1, len(tr.norm_times) // 2000)
    rep = {
        "state": name,
        "config": tr.config.describe(),
        "norm_times": analysis._decimate(tr.norm_times, every),
        "norms": analysis._decimate(tr.norms[:, 0], every),
        "snapshot_times": tr.times,
        "final_norm": l2_norm(tr.final),
        "crude_bound_ratio": float(tr.crude_bound_ratio()[0]),
    }
    if grid.N <= 4096:
        rep["final_re"] = tr.final.values.real
        rep["final_im"] = tr.final.values.imag
    return rep, None


def cmd_stability(cfg):
    grid = _grid(cfg)
    seeds = analysis.seed_battery(grid, cfg["rng_seed"])
    rep = analysis.stability_scan(seeds, cfg["T"], cfg["dt"], cfg["generator"], cfg["coupling"], cfg["round_trip"])
    header = ["t"] + list(rep.ratios)
    rows = zip(rep.times, *rep.ratios.values())
    return rep, (header, rows)


def cmd_smoothing(cfg):
    grid = _grid(cfg)
    reps = analysis.smoothing_scan(
        _states(cfg, grid),
        cfg["alpha"],
        parse_branch(cfg["branch"]),
        cfg["generator"],
        cfg["T_ladder"],
        cfg["dt"],
        cfg["coupling"],
    )
    return reps, None


def cmd_free_smoothing(cfg):
    grid = _grid(cfg)
    name, f = _one_state(cfg, grid)
    return analysis.free_smoothing_integral(f, cfg["theta"], cfg["T_ladder"], cfg["dt_sample"], name), None


def cmd_decay(cfg):
    grid = _grid(cfg)
    w = cfg["window"]
    if len(w) != 2:
        raise ConfigError("window must be t0,t1")
    b = parse_branch(cfg["branch"])
    if cfg["level"] == "symbol":
        rep = analysis.symbol_decay_rate(grid, cfg["alpha"], branch=b, window=tuple(w))
    else:
        rep = analysis.decay_fit(cfg["alpha"], cfg["n"], analysis.gaussian(grid), branch=b, window=tuple(w))
    return rep, (["t", "log_norm", "fit"], zip(rep.times, rep.log_norm, rep.fit))


def cmd_wave_op(cfg):
    grid = _grid(cfg)
    _, f = _one_state(cfg, grid)
    return analysis.cook_wave_operator(f, cfg["direction"], cfg["checkpoints"], cfg["dt"], cfg["coupling"]), None


def cmd_inverse_wave(cfg):
    grid = _grid(cfg)
    _, f = _one_state(cfg, grid)
    rep = analysis.inverse_wave_check(f, cfg["direction"], cfg["checkpoints"], cfg["limit_time"], cfg["dt"], cfg["coupling"])
    return rep, None


def cmd_eigen_scan(cfg):
    N = cfg["N"]
    rep = spectral.eigen_scan(cfg["L"], (N, 2 * N), cfg["tag"], cfg["coupling"], cfg["tol_match"])
    return rep, None


def cmd_pseudospec(cfg):
    rep = spectral.pseudospectrum(cfg["box"], (cfg["nx"], cfg["ny"]), _grid(cfg), cfg["tag"], cfg["coupling"])
    return rep, (["re_z", "im_z", "sigma_min"], rep.rows())


def cmd_evans(cfg):
    kw = dict(L_ode=cfg["L_ode"], tol=cfg["tol"], coupling=cfg["coupling"], adjoint=cfg["adjoint"])
    if cfg.get("lam") is not None:
        return spectral.evans_function(cfg["lam"], **kw), None
    rep = spectral.evans_sweep(cfg["box"], cfg["nx"], cfg["ny"], **kw)
    return rep, (["re", "im", "abs_E"], rep.rows())


def cmd_selftest(cfg):
    from .selftest import run_selftest

    results = run_selftest(verbose=log.isEnabledFor(logging.DEBUG))
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}  ({r.seconds:.2f}s)  {r.message}")
    return {"results": results, "passed": all(r.ok for r in results)}, None


COMMANDS = {
    "evolve": cmd_evolve,
    "stability": cmd_stability,
    "smoothing": cmd_smoothing,
    "free-smoothing": cmd_free_smoothing,
    "decay": cmd_decay,
    "wave-op": cmd_wave_op,
    "inverse-wave": cmd_inverse_wave,
    "eigen-scan": cmd_eigen_scan,
    "pseudospec": cmd_pseudospec,
    "evans": cmd_evans,
    "selftest": cmd_selftest,
}


def _grid_info(cfg):
    try:
        return _grid(cfg).describe()
    except (KeyError, ValueError):
        return None


def _join_values(argv):
    # "--box -5,5,0.1,2" would otherwise look like an option to argparse
    out = []
    it = iter(argv)
    for tok in it:
        if tok in ("--box", "--lam", "--window", "--checkpoints", "--T-ladder", "--alpha"):
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None):
    parser, specs, subs = build_parser()
    ns = parser.parse_args(_join_values(sys.argv[1:] if argv is None else list(argv)))
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.INFO, format="%(message)s")
    if ns.command == "plotdata":
        try:
            for path in io.emit_plotdata(ns.report, ns.outdir):
                print(path)
        except (OSError, ValueError) as e:
            log.error("plotdata: %s", e)
            return EXIT_CONFIG
        return EXIT_OK
    ns._types = _types(subs[ns.command])
    try:
        cfg = resolve(ns, specs)
        report, table = COMMANDS[ns.command](cfg)
    except InstabilityError as e:
        log.error("numerical abort: %s", e)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as e:
        log.error("invalid configuration: %s", e)
        return EXIT_CONFIG
    params = {k: v for k, v in cfg.items() if k != "outdir"}
    path = io.write_report(
        cfg["outdir"], ns.command, report, params, _grid_info(cfg), cfg["rng_seed"], stem=cfg["experiment"]
    )
    print(path)
    if table is not None:
        header, rows = table
        print(io.write_csv(path.with_suffix(".csv"), header, rows))
    if ns.command == "selftest" and not report["passed"]:
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
