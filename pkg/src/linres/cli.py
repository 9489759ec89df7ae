"""``esn`` command line: gen, run, train and bench.

Exit codes: 0 on success, 1 on runtime or data errors, 2 on usage errors.
Option values come from, in decreasing priority: command-line flags, the
``--config`` TOML file, the ``ESN_SEED`` environment variable (seed only) and
built-in defaults.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .dpg import DEFAULT_SIGMA, DISTRIBUTIONS, build_dpg
from .esn import (ESNConfig, ESNError, TaskDataset, apply_leak, fit_readout, generate_dense,
                  predict, run_reservoir)
from .io import DataError, GammaReadout, Model, load_model, read_signals, save_model, write_signals

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("linres")

GEN_METHODS = ("normal", "diag") + tuple(f"dpg-{d}" for d in DISTRIBUTIONS)
TRAIN_METHODS = ("ridge", "ewt", "eet", "gamma")
ENGINES = ("sequential", "scan")


class UsageError(Exception):
    """Invalid flag combination; reported with exit code 2."""


# --- value parsing --------------------------------------------------------------

def parse_int_list(text: str, doubling: bool = False) -> List[int]:
    """``"1,3,5"``, ``"1..12"`` (step 1) or, with ``doubling``, ``"128..4096"`` (x2)."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = (int(x) for x in part.split("..", 1))
            if lo < 1 or hi < lo:
                raise argparse.ArgumentTypeError(f"bad range {part!r}")
            v = lo
            while v <= hi:
                out.append(v)
                v = v * 2 if doubling else v + 1
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def parse_float_range(text: str, points: int) -> List[float]:
    """``"a,b,c"`` or ``"lo..hi"`` expanded to ``points`` log-spaced values."""
    text = str(text)
    if ".." in text:
        lo, hi = (float(x) for x in text.split("..", 1))
        if not 0 < lo <= hi:
            raise argparse.ArgumentTypeError(f"bad range {text!r}; need 0 < lo <= hi")
        return [float(v) for v in np.geomspace(lo, hi, points)]
    return [float(x) for x in text.split(",") if x.strip()]


def parse_names(text: str) -> List[str]:
    return [m.strip() for m in str(text).split(",") if m.strip()]


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="esn", description="Linear echo state networks.")
    p.add_argument("--config", help="TOML file with option defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a reservoir model")
    g.add_argument("--method", choices=GEN_METHODS, default="normal")
    g.add_argument("--units", type=int, default=100)
    g.add_argument("--sr", type=float, default=0.9, help="spectral radius")
    g.add_argument("--leak", type=float, default=1.0)
    g.add_argument("--input-scaling", type=float, default=1.0)
    g.add_argument("--connectivity", type=float, default=1.0)
    g.add_argument("--d-in", type=int, default=1)
    g.add_argument("--d-out", type=int, default=1)
    g.add_argument("--feedback", action="store_true", help="add output feedback weights")
    g.add_argument("--no-bias", action="store_true", help="readouts without a bias column")
    g.add_argument("--sigma", type=float, default=None, help="noise for dpg-noisy-golden")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)

    r = sub.add_parser("run", help="collect states (and outputs) for an input CSV")
    r.add_argument("--model", required=True)
    r.add_argument("--input", required=True)
    r.add_argument("--engine", choices=ENGINES, default="sequential")
    r.add_argument("--path", choices=("auto", "dense", "spectral"), default="auto")
    r.add_argument("--feedback-mode", choices=("auto", "teacher", "closed"), default="auto",
                   help="teacher forcing uses the CSV's y columns")
    r.add_argument("--chunk", type=int, default=1024)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out", required=True)

    t = sub.add_parser("train", help="fit a readout")
    t.add_argument("--model", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--alpha", type=float, default=1e-8)
    t.add_argument("--method", choices=TRAIN_METHODS, default="ridge")
    t.add_argument("--washout", type=int, default=None)
    t.add_argument("--recover", action="store_true",
                   help="gamma: also recover the equivalent readout")
    t.add_argument("--out", required=True)

    b = sub.add_parser("bench", help="benchmark suites")
    bsub = b.add_subparsers(dest="suite", required=True)

    m = bsub.add_parser("mso", help="MSO grid search")
    m.add_argument("--tasks", default="1..12")
    m.add_argument("--methods", default="normal,diag,dpg-uniform,dpg-golden,dpg-noisy-golden,"
                   "dpg-sim")
    m.add_argument("--seeds", type=int, default=10, help="number of seeds")
    m.add_argument("--seed", type=int, default=None, help="first seed")
    m.add_argument("--grid", choices=("table1", "fast"), default="table1")
    m.add_argument("--share-states", action="store_true")
    m.add_argument("--sigma", type=float, default=None)
    m.add_argument("--jobs", type=int, default=1)
    m.add_argument("--out-dir", default=".")

    c = bsub.add_parser("mc", help="memory capacity curves")
    c.add_argument("--units", default="100")
    c.add_argument("--methods", default="normal,diag")
    c.add_argument("--k-max", type=int, default=None, help="default 2N")
    c.add_argument("--seeds", type=int, default=1)
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--alpha", type=float, default=1e-8)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--out-dir", default=".")

    tm = bsub.add_parser("timing", help="per-phase wall-times")
    tm.add_argument("--units", default="128..4096")
    tm.add_argument("--paths", default="normal,diag")
    tm.add_argument("--phases", default="generation,reservoir_step,readout_step")
    tm.add_argument("--repeats", type=int, default=5)
    tm.add_argument("--seed", type=int, default=None)
    tm.add_argument("--jobs", type=int, default=1)
    tm.add_argument("--out-dir", default=".")

    cn = bsub.add_parser("connectivity", help="memory capacity against connectivity")
    cn.add_argument("--units", type=int, default=100)
    cn.add_argument("--range", dest="conn_range", default="0.001..1")
    cn.add_argument("--points", type=int, default=10)
    cn.add_argument("--delay", type=int, default=None)
    cn.add_argument("--seeds", type=int, default=1)
    cn.add_argument("--seed", type=int, default=None)
    cn.add_argument("--alpha", type=float, default=1e-8)
    cn.add_argument("--jobs", type=int, default=1)
    cn.add_argument("--out-dir", default=".")
    return p


def _subparsers(parser: argparse.ArgumentParser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    """Install TOML values as defaults so explicit flags still win.

    Top-level keys apply to every command that knows them; ``[gen]``,
    ``[run]``, ``[train]`` and ``[bench.<suite>]`` tables apply to one command.
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as exc:
        parser.error(f"cannot read config: {exc}")
    except tomllib.TOMLDecodeError as exc:
        parser.error(f"invalid config {known.config}: {exc}")

    commands = _subparsers(parser)
    targets = {name: sp_ for name, sp_ in commands.items() if name != "bench"}
    for name, sp_ in _subparsers(commands["bench"]).items():
        targets[f"bench.{name}"] = sp_
    top = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
    sections = {k: v for k, v in cfg.items() if isinstance(v, dict)}
    if "bench" in sections:
        for name, sec in sections.pop("bench").items():
            sections[f"bench.{name}"] = sec
    unknown = set(sections) - set(targets)
    if unknown:
        parser.error(f"unknown config section(s): {', '.join(sorted(unknown))}")
    used = set()
    for name, sp_ in targets.items():
        dests = {a.dest for a in sp_._actions}
        values = {k.replace("-", "_"): v for k, v in top.items()}
        values = {k: v for k, v in values.items() if k in dests}
        used.update(values)
        sec = {k.replace("-", "_"): v for k, v in sections.get(name, {}).items()}
        bad = set(sec) - dests
        if bad:
            parser.error(f"unknown key(s) in [{name}]: {', '.join(sorted(bad))}")
        values.update(sec)
        sp_.set_defaults(**values)
        for action in sp_._actions:
            if action.dest in values:
                action.required = False
    stray = {k.replace("-", "_") for k in top} - used
    if stray:
        parser.error(f"unknown config key(s): {', '.join(sorted(stray))}")


def _resolve_seed(value: Optional[int]) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("ESN_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"ESN_SEED must be an integer, got {env!r}") from None
    return 0


# --- commands -------------------------------------------------------------------

def cmd_gen(args) -> int:
    from .spectral import diagonalize

    method = args.method
    if args.sigma is not None:
        if method == "dpg-golden" and args.sigma != 0:
            raise UsageError("dpg-golden is the noise-free spiral; --sigma must be 0 "
                             "(use dpg-noisy-golden for noise)")
        if method not in ("dpg-golden", "dpg-noisy-golden"):
            raise UsageError(f"--sigma is only valid with dpg-noisy-golden, not {method}")
        if args.sigma < 0:
            raise UsageError("--sigma must be >= 0")
    sigma = None
    if method == "dpg-noisy-golden":
        sigma = DEFAULT_SIGMA if args.sigma is None else args.sigma
    try:
        config = ESNConfig(units=args.units, d_in=args.d_in, d_out=args.d_out,
                           spectral_radius=args.sr, leak_rate=args.leak,
                           input_scaling=args.input_scaling, connectivity_r=args.connectivity,
                           use_bias=not args.no_bias, use_feedback=args.feedback,
                           seed=_resolve_seed(args.seed))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    dense = spectral = None
    if method in ("normal", "diag"):
        base = generate_dense(config)
        if method == "diag":
            spectral = diagonalize(base).with_leak(config.leak_rate)
        dense = apply_leak(base, config.leak_rate)
    else:
        spectral = build_dpg(config, method[len("dpg-"):],
                             sigma=sigma if sigma is not None else 0.0)
        spectral = spectral.with_leak(config.leak_rate)
    save_model(Model(method=method, config=config, dense=dense, spectral=spectral, sigma=sigma),
               args.out)
    return 0


def _pick_path(model: Model, requested: str) -> str:
    if requested == "auto":
        if model.readout is not None:
            return "dense" if model.readout.basis == "original" else "spectral"
        return "spectral" if model.spectral is not None else "dense"
    if requested == "dense" and model.dense is None:
        raise ESNError("model has no dense reservoir (generated by DPG)")
    if requested == "spectral" and model.spectral is None:
        raise ESNError("model has no spectral reservoir; generate with --method diag or dpg-*")
    return requested


def cmd_run(args) -> int:
    from .postponed import run_echo_matrix
    from .scan import scan_states
    from .spectral import run_diagonal

    model = load_model(args.model)
    u, y = read_signals(args.input)
    path = _pick_path(model, args.path)
    res = model.dense if path == "dense" else model.spectral
    readout = model.readout
    if readout is not None:
        expected = "original" if path == "dense" else "Q"
        if readout.basis != expected:
            raise ESNError(f"readout is in basis {readout.basis!r}, the {path} path needs "
                           f"{expected!r}")
    has_fb = (res.W_fb if path == "dense" else res.w_fb_Q) is not None
    mode = args.feedback_mode
    if mode == "auto":
        mode = "teacher" if y is not None else "closed"
    teacher = None
    if has_fb:
        if mode == "teacher":
            if y is None:
                raise DataError(f"{args.input}: teacher forcing needs y_ columns")
            teacher = y
        elif readout is None:
            raise ESNError("closed-loop feedback needs a trained readout")

    if args.engine == "scan":
        if path != "spectral":
            raise UsageError("--engine scan runs the spectral path only")
        if has_fb:
            raise ESNError("--engine scan cannot run a model with output feedback")
        states = scan_states(res, u, chunk=args.chunk, jobs=args.jobs)
        outputs = None if readout is None else predict(readout, states)
    elif path == "dense":
        states, outputs = run_reservoir(res, u, readout=readout, teacher=teacher)
    else:
        states, outputs = run_diagonal(res, u, readout=readout, teacher=teacher)
    if outputs is None and model.gamma is not None and path == "spectral":
        R = run_echo_matrix(res, u)
        outputs = R[:, 0, :] @ model.gamma.gamma
        if model.gamma.bias is not None:
            outputs = outputs + model.gamma.bias
    write_signals(args.out, {"r": states, "y": outputs})
    return 0


def cmd_train(args) -> int:
    from .postponed import run_echo_matrix, train_gamma
    from .spectral import ewt_transform, eet_train, run_diagonal

    model = load_model(args.model)
    u, y = read_signals(args.data)
    if y is None:
        raise DataError(f"{args.data}: training data needs y_ columns")
    washout = model.config.washout if args.washout is None else args.washout
    if not 0 <= washout < len(u):
        raise UsageError(f"--washout must lie in [0, {len(u)}), got {washout}")
    data = TaskDataset(u, y, washout=washout, name=Path(args.data).stem)
    use_bias = model.config.use_bias
    method = args.method
    if args.recover and method != "gamma":
        raise UsageError("--recover only applies to --method gamma")

    if method in ("ridge", "ewt"):
        if model.dense is None:
            raise ESNError(f"{method} needs a dense reservoir; this model was built by "
                           f"{model.method}")
        if method == "ewt" and model.spectral is None:
            raise ESNError("ewt needs a model holding both bases (--method diag)")
        fb = model.dense.W_fb is not None
        states = run_reservoir(model.dense, u, teacher=y if fb else None).states
        readout = fit_readout(states, data, args.alpha, use_bias=use_bias, use_feedback=fb)
        if method == "ewt":
            readout = ewt_transform(readout, model.spectral)
        model.readout, model.gamma = readout, None
    elif method == "eet":
        spec = model.spectral
        if spec is None or spec.basis_Q is None:
            raise ESNError("eet needs a spectral model (--method diag or dpg-*)")
        fb = spec.w_fb_Q is not None
        states = run_diagonal(spec, u, teacher=y if fb else None).states
        y_prev = data.previous_targets()[data.train] if fb else None
        model.readout = eet_train(states[data.train], y_prev, y[data.train], args.alpha, spec,
                                  use_bias=use_bias)
        model.gamma = None
    else:
        spec = model.spectral
        if spec is None:
            raise ESNError("gamma needs a spectral model (--method diag or dpg-*)")
        if spec.d_in != 1 or y.shape[1] != 1:
            raise ESNError("gamma training requires one input and one output")
        if spec.w_fb_Q is not None:
            raise ESNError("gamma training requires a model without output feedback")
        R = run_echo_matrix(spec, u)
        comp = train_gamma(R[data.train], y[data.train], args.alpha,
                           w_in_Q=spec.w_in_Q if args.recover else None,
                           n_r=spec.n_r, use_bias=use_bias)
        model.gamma = GammaReadout(comp.gamma, comp.bias)
        model.readout = comp.recovered
    save_model(model, args.out)
    return 0


def _seeds(args) -> List[int]:
    start = _resolve_seed(args.seed)
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    return list(range(start, start + args.seeds))


def cmd_bench(args) -> int:
    from .bench import grid, memory, report, timing
    from .bench.mso import gen_mso

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if getattr(args, "jobs", 1) < 1:
        raise UsageError("--jobs must be >= 1")

    if args.suite == "mso":
        try:
            tasks = parse_int_list(args.tasks)
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"--tasks: {exc}") from None
        methods = _methods(args.methods, grid.canonical_method)
        if any(not 1 <= k <= 12 for k in tasks):
            raise UsageError("MSO tasks must lie in 1..12")
        if args.sigma is not None and "dpg-noisy-golden" not in methods:
            raise UsageError("--sigma is only valid with dpg-noisy-golden")
        spec = grid.TABLE1 if args.grid == "table1" else grid.FAST
        sigma = DEFAULT_SIGMA if args.sigma is None else args.sigma
        seeds = _seeds(args)
        results = []
        for k in tasks:
            data = gen_mso(k)
            for m in methods:
                r = grid.grid_search(data, m, spec, seeds, share_states=args.share_states,
                                     sigma=sigma, jobs=args.jobs)
                log.info("%s %s rmse=%.3e", r.task, r.method, r.rmse_mean)
                results.append(r)
        report.write_grid_csv(results, out_dir / "mso.csv")
        report.write_grid_json(results, out_dir / "mso.json")
    elif args.suite == "mc":
        methods = _methods(args.methods, grid.canonical_method)
        units = _int_list(args.units, "--units")
        curves = [memory.memory_capacity(m, N, args.k_max or 2 * N, _seeds(args),
                                         alpha=args.alpha)
                  for N in units for m in methods]
        for cv in curves:
            for e in cv.errors:
                log.warning("N=%d %s: %s", cv.units, cv.method, e)
        report.write_mc_csv(curves, out_dir / "mc.csv")
    elif args.suite == "timing":
        methods = _methods(args.paths, grid.canonical_method)
        units = _int_list(args.units, "--units", doubling=True)
        phases = parse_names(args.phases)
        bad = [p for p in phases if p not in timing.TIMING_PHASES]
        if bad:
            raise UsageError(f"unknown phase(s) {bad}; expected {timing.TIMING_PHASES}")
        if args.repeats < 1:
            raise UsageError("--repeats must be >= 1")
        rows = timing.timing_suite(units, methods, phases, args.repeats,
                                   seed=_resolve_seed(args.seed))
        report.write_timing_csv(rows, out_dir / "timing.csv")
    else:
        try:
            conns = parse_float_range(args.conn_range, args.points)
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"--range: {exc}") from None
        if any(not 0 <= c <= 1 for c in conns):
            raise UsageError("connectivities must lie in [0, 1]")
        delay, rows = memory.connectivity_sweep(args.units, conns, _seeds(args),
                                                delay=args.delay, alpha=args.alpha)
        report.write_connectivity_csv(args.units, delay, rows, out_dir / "connectivity.csv")
    return 0


def _methods(text, canon) -> List[str]:
    try:
        return [canon(m) for m in parse_names(text)]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _int_list(text, flag, doubling=False) -> List[int]:
    try:
        return parse_int_list(text, doubling=doubling)
    except (argparse.ArgumentTypeError, ValueError) as exc:
        raise UsageError(f"{flag}: {exc}") from None


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "train": cmd_train, "bench": cmd_bench}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"esn: error: {exc}", file=sys.stderr)
        return 2
    except (ESNError, ValueError, OSError) as exc:
        print(f"esn: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
