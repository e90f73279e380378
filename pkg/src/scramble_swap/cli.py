"""Command-line entry point.

Every run writes ``<root>/<command>/<timestamp>-<seed>/data.csv`` plus a
sibling ``manifest.json``. ``root`` is ``$SCRAMBLE_SWAP_OUT`` or ``./out``.
Options may also come from a flat ``key = value`` file given with
``--config``; keys are flag names without dashes (``omegaz = 3.78``) and
command-line flags take precedence.

Exit codes: 0 success, 2 usage, 3 resource limit, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dicke import DickeParams, ReversalError, TailBudgetError
from .ensembles import FockWindow, Seed, poisson_tail
from .experiments import (ReversalProbe, ScanConfig, default_eps_axis, dimension_bound_check, find_transient,
                          haar_benchmark, phase_scan, reversal_scan, time_trace, tolerance_half_width,
                          transient_map)
from .measproj import (MeasConfig, amplitude_weight, cosine_spin_lower_bound, required_measurement_spins)

log = logging.getLogger("scramble_swap")

EXIT_OK, EXIT_USAGE, EXIT_LIMIT, EXIT_NUMERIC = 0, 2, 3, 4
LONG_RUN_SECONDS = 600.0
# Dense symmetric eigensolver cost on the reference machine, seconds per n^3.
EIGH_SECONDS_PER_N3 = 2.5e-10
MAX_BOUNDS_DIM = 4096
MAX_MEAS_NMAX = 100_000


class LimitError(RuntimeError):
    pass


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------- output

def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def csv_text(header: list[str], rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def out_root() -> Path:
    return Path(os.environ.get("SCRAMBLE_SWAP_OUT", "out"))


def emit(command: str, seed, header, rows, config: dict, started: float, warnings: list[str],
         extra: dict | None = None) -> Path:
    stamp = datetime.fromtimestamp(started, timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    d = out_root() / command / f"{stamp}-{seed}"
    d.mkdir(parents=True, exist_ok=True)
    data = d / "data.csv"
    _atomic_write(data, csv_text(header, rows))
    manifest = {
        "command": command, "config": config, "seed": seed, "code_version": __version__,
        "numpy_version": np.__version__, "start": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "end": datetime.now(timezone.utc).isoformat(), "outputs": [str(data)], "warnings": warnings,
    }
    if extra:
        manifest["summary"] = extra
    _atomic_write(d / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    print(f"wrote {data}")
    return d


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


# ---------------------------------------------------------------- parsing helpers

def int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def float_list(text: str) -> list[float]:
    """Comma list ``a,b,c`` or ``lo:hi:n`` (inclusive linspace) or ``geom:lo:hi:n``."""
    text = str(text).strip()
    try:
        if text.startswith("geom:"):
            lo, hi, n = text[5:].split(":")
            return list(np.geomspace(float(lo), float(hi), int(n)))
        if ":" in text:
            lo, hi, n = text.split(":")
            return list(np.linspace(float(lo), float(hi), int(n)))
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse number list {text!r}") from None


def read_config(path: str) -> dict[str, str]:
    out = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().lstrip("-").replace("-", "_")] = v.strip()
    return out


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _draws(text: str) -> int:
    v = int(text)
    if v < 100:
        raise argparse.ArgumentTypeError(f"at least 100 draws are needed, got {text}")
    return v


def _dims(text: str) -> list[int]:
    v = int_list(text)
    if not v or min(v) < 1:
        raise argparse.ArgumentTypeError(f"expected positive dimensions, got {text!r}")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _window_flags(p):
    g = p.add_argument_group("Fock window")
    g.add_argument("--fock-min", type=int, help="explicit lowest occupancy")
    g.add_argument("--fock-max", type=int, help="explicit highest occupancy")
    g.add_argument("--window-sigmas", type=float,
                   help="use a centered window of half-width ceil(k |alpha|) instead of the excursion window")
    g.add_argument("--window-cap", type=int, help="upper limit on the excursion window half-width")
    g.add_argument("--tail-budget", type=float, default=1e-6, help="largest allowed discarded coherent weight")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scramble-swap", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    h = sub.add_parser("haar-bench", help="Haar SWAP fidelity and success probability vs theory")
    h.add_argument("--config")
    h.add_argument("--da", type=_positive_int)
    h.add_argument("--db", type=_dims, help="comma-separated bath dimensions")
    h.add_argument("--draws", type=_draws)
    h.add_argument("--seed", type=int, default=1)

    d = sub.add_parser("dicke", help="Dicke-model experiments")
    dsub = d.add_subparsers(dest="mode", required=True, parser_class=_Parser)
    for name, text in (("scan", "phase diagram over (delta, omega_z)"), ("trace", "fidelity against time"),
                       ("transient", "earliest sustained threshold crossing"),
                       ("reversal", "fidelity under backward-leg parameter errors")):
        q = dsub.add_parser(name, help=text)
        q.add_argument("--config")
        q.add_argument("--n", type=_positive_int, help="spin count N (d_A = N + 1)")
        q.add_argument("--alpha", type=float, help="coherent displacement of the boson reference")
        q.add_argument("--g", type=float, default=1.0)
        q.add_argument("--states", type=_positive_int, default=30)
        q.add_argument("--seed", type=int, default=1)
        q.add_argument("--long", action="store_true", help="allow runs estimated above 10 minutes")
        q.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1)
        _window_flags(q)
        if name == "scan":
            q.add_argument("--delta-grid", type=float_list)
            q.add_argument("--omega-grid", type=float_list)
            q.add_argument("--tmin", type=float, default=700.0)
            q.add_argument("--tmax", type=float, default=850.0)
            q.add_argument("--nt", type=_positive_int, default=64)
        else:
            q.add_argument("--delta", type=float)
            q.add_argument("--omegaz", type=float)
        if name in ("trace", "transient"):
            q.add_argument("--tmax", type=float)
            q.add_argument("--dt", type=float, default=0.15)
        if name == "transient":
            q.add_argument("--threshold", type=float, default=0.9)
            q.add_argument("--sustain", type=_positive_int, default=3)
            q.add_argument("--delta-grid", type=float_list, help="optional grid for a transient map")
            q.add_argument("--omega-grid", type=float_list)
        if name == "reversal":
            q.add_argument("--t", type=float, help="duration of one leg")
            q.add_argument("--eps-delta", type=float_list, help="fractional errors eps_delta/delta")
            q.add_argument("--eps-z", type=float_list, help="fractional errors eps_z/omega_z")
            q.add_argument("--half-width", action="store_true",
                           help="locate the 90%%-of-baseline tolerance along both axes instead of a grid")
            q.add_argument("--level", type=float, default=0.9)

    b = sub.add_parser("bounds", help="general dimension bound check")
    b.add_argument("--config")
    b.add_argument("--d", type=_positive_int)
    b.add_argument("--m", type=_positive_int)
    b.add_argument("--pairs", type=_positive_int, default=50)
    b.add_argument("--states", type=_positive_int, default=2000)
    b.add_argument("--seed", type=int, default=1)

    m = sub.add_parser("measproj", help="measurement-spin projection weights and spin counts")
    m.add_argument("--config")
    m.add_argument("--variant", choices=["cosine", "sinc"])
    m.add_argument("--eps", type=float, default=None)
    m.add_argument("--nmax", type=_positive_int)
    return p


REQUIRED = {
    "haar-bench": ["da", "db", "draws"],
    "scan": ["n", "alpha", "delta_grid", "omega_grid"],
    "trace": ["n", "alpha", "delta", "omegaz", "tmax"],
    "transient": ["n", "alpha", "tmax"],
    "reversal": ["n", "alpha", "delta", "omegaz", "t"],
    "bounds": ["d", "m"],
    "measproj": ["variant", "nmax"],
}


def _find_subparser(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.ArgumentParser:
    cur = parser
    for tok in argv:
        acts = [a for a in cur._actions if isinstance(a, argparse._SubParsersAction)]
        if acts and tok in acts[0].choices:
            cur = acts[0].choices[tok]
    return cur


def parse(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    if "--config" in argv:
        i = argv.index("--config")
        if i + 1 >= len(argv):
            parser.error("--config needs a path")
        sp = _find_subparser(parser, argv)
        try:
            conf = read_config(argv[i + 1])
        except (OSError, ValueError) as e:
            parser.error(str(e))
        known = {a.dest: a for a in sp._actions}
        defaults = {}
        for k, v in conf.items():
            if k not in known:
                sp.error(f"unknown config key {k!r}")
            act = known[k]
            if act.const is True and act.nargs == 0:
                defaults[k] = v.lower() in ("1", "true", "yes")
            else:
                try:
                    defaults[k] = act.type(v) if act.type else v
                except (argparse.ArgumentTypeError, ValueError) as e:
                    sp.error(f"config key {k}: {e}")
        sp.set_defaults(**defaults)
    args = parser.parse_args(argv)
    key = args.mode if args.command == "dicke" else args.command
    if args.command == "dicke" and args.mode == "transient" and args.delta_grid is None:
        REQUIRED["transient"] = ["n", "alpha", "delta", "omegaz", "tmax"]
    missing = [k for k in REQUIRED[key] if getattr(args, k, None) is None]
    if missing:
        _find_subparser(parser, argv).error("missing required flag " + ", ".join("--" + k.replace("_", "-") for k in missing))
    return args


# ---------------------------------------------------------------- commands

def _config_echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("config_obj",)}


def cmd_haar_bench(args) -> int:
    t0 = time.time()
    rows = haar_benchmark(args.da, args.db, args.draws, Seed(args.seed))
    warn = [f"d_B={r['d_B']}: {r['n_failed']} failed postselections" for r in rows if r["n_failed"]]
    cols = ["d_B", "f_mc", "f_se", "f_theory", "p_mc", "p_se", "p_theory"]
    emit("haar-bench", args.seed, cols, [[r[c] for c in cols] for r in rows], _config_echo(args), t0, warn)
    return EXIT_OK


def _dicke_base(args, delta: float, omega: float) -> DickeParams:
    window = None
    if args.fock_min is not None or args.fock_max is not None:
        if args.fock_min is None or args.fock_max is None:
            raise argparse.ArgumentTypeError("--fock-min and --fock-max must be given together")
        window = FockWindow(args.fock_min, args.fock_max)
    elif args.window_sigmas is not None:
        window = FockWindow.sigmas(args.alpha, args.window_sigmas)
    return DickeParams(args.n, delta, omega, args.alpha, args.g, window, args.window_cap, args.tail_budget)


def estimate_seconds(params: DickeParams, n_decompositions: int) -> float:
    dim = params.d_A * params.resolved_window().dim
    return n_decompositions * 2 * EIGH_SECONDS_PER_N3 * (dim / 2) ** 3


def _gate(args, params_list: list[DickeParams], per_cell: int = 1) -> None:
    est = sum(estimate_seconds(p, per_cell) for p in params_list)
    log.info("estimated eigensolver time %.0f s", est)
    if est > LONG_RUN_SECONDS and not args.long:
        raise LimitError(f"estimated runtime {est / 60:.1f} min exceeds 10 min; rerun with --long")


def _window_warnings(params_list: list[DickeParams]) -> list[str]:
    out = []
    for p in params_list:
        w = p.resolved_window()
        tail = poisson_tail(p.alpha, w)
        out.append(f"delta={p.delta:g} omega_z={p.omega_z:g}: window [{w.n_min}, {w.n_max}] tail mass {tail:.3e}")
    return out


def cmd_dicke(args) -> int:
    t0 = time.time()
    seed = Seed(args.seed)
    mode = args.mode
    if mode == "scan" or (mode == "transient" and args.delta_grid is not None):
        grid_d = args.delta_grid or [args.delta]
        grid_w = args.omega_grid or [args.omegaz]
        cells = [_dicke_base(args, d, w) for d in grid_d for w in grid_w]
        _gate(args, cells)
        warns = _window_warnings(cells)
        if mode == "scan":
            cfg = ScanConfig(grid_d, grid_w, (args.tmin, args.tmax, args.nt), args.states, seed)
            res = phase_scan(cfg, cells[0], jobs=args.jobs)
            failed = sum(r.n_failed for r in res.rows)
            if failed == len(res.rows) * args.states * args.nt:
                raise NumericalFailure("postselection failed for every sample")
            cols = ["delta", "omega_z", "f_mean", "f_std", "s2_mean", "p_mean", "n_failed"]
            rows = [[getattr(r, c) for c in cols] for r in res.rows]
            emit("dicke-scan", args.seed, cols, rows, _config_echo(args), t0, warns,
                 {"spearman_f_s2": res.rank_correlation() if len(rows) > 2 else None})
            return EXIT_OK
        n = int(math.floor(args.tmax / args.dt + 1e-9)) + 1
        cfg = ScanConfig(grid_d, grid_w, (0.0, (n - 1) * args.dt, n), args.states, seed)
        rows = transient_map(cfg, cells[0], args.tmax, args.threshold, args.sustain)
        emit("dicke-transient", args.seed, ["delta", "omega_z", "t_star"], rows, _config_echo(args), t0, warns)
        return EXIT_OK

    base = _dicke_base(args, args.delta, args.omegaz)
    warns = _window_warnings([base])
    if mode in ("trace", "transient"):
        _gate(args, [base])
        cfg = ScanConfig.stepped(args.delta, args.omegaz, args.tmax, args.dt, n_states=args.states, seed=seed)
        tr = time_trace(base, cfg)
        if all(math.isnan(r[1]) for r in tr):
            raise NumericalFailure("postselection failed at every time")
        if mode == "trace":
            rows = [(t, f, s, max(f - s, 0.0), f + s, p) for t, f, s, p in tr]
            emit("dicke-trace", args.seed, ["t", "f_mean", "f_std", "band_lo", "band_hi", "p_mean"], rows,
                 _config_echo(args), t0, warns)
        else:
            res = find_transient(tr, args.threshold, args.sustain)
            emit("dicke-transient", args.seed, ["delta", "omega_z", "t_star"],
                 [(args.delta, args.omegaz, res.t_star)], _config_echo(args), t0, warns,
                 {"t_star": res.t_star, "threshold": res.threshold, "sustain": res.sustain_count})
            print(f"t_star = {res.t_star}")
        return EXIT_OK

    # reversal
    if args.half_width:
        _gate(args, [base], per_cell=17)
        probe = ReversalProbe(base, args.t, args.states, seed)
        rows = []
        for axis in ("delta", "z"):
            hw = tolerance_half_width(probe, axis, args.level)
            rows.append((axis, args.t, hw["f0"], hw["minus"], hw["plus"], hw["half_width"]))
        emit("dicke-reversal", args.seed, ["axis", "t", "f_baseline", "minus", "plus", "half_width"], rows,
             _config_echo(args), t0, warns, {"evaluations": probe.evaluations})
        return EXIT_OK
    ed = args.eps_delta if args.eps_delta is not None else [0.0] + list(default_eps_axis())
    ez = args.eps_z if args.eps_z is not None else [0.0]
    grid = [(0.0, 0.0)] + [(a, b) for a in ed for b in ez if (a, b) != (0.0, 0.0)]
    _gate(args, [base], per_cell=len(grid))
    rows = reversal_scan(base, args.t, grid, args.states, seed)
    emit("dicke-reversal", args.seed, ["eps_delta_frac", "eps_z_frac", "f_mean"], rows, _config_echo(args), t0, warns)
    return EXIT_OK


def cmd_bounds(args) -> int:
    if args.d * args.m > MAX_BOUNDS_DIM:
        raise LimitError(f"d*m = {args.d * args.m} exceeds the limit {MAX_BOUNDS_DIM}")
    t0 = time.time()
    res = dimension_bound_check(args.d, args.m, args.pairs, args.states, Seed(args.seed))
    if res["n_valid_pairs"] == 0:
        raise NumericalFailure("postselection failed for every sampled pair")
    cols = ["d", "m", "min_f", "bound", "ratio_mc_max", "ratio_exact_max", "ratio_bound", "ratio_check"]
    row = [res["d"], res["m"], res["min_f"], res["bound"], float(np.max(res["ratio_mc"])),
           float(np.max(res["ratio_exact"])), res["ratio_bound"], res["ratio_check"]]
    emit("bounds", args.seed, cols, [row], _config_echo(args), t0, [])
    return EXIT_OK


def cmd_measproj(args) -> int:
    if args.nmax > MAX_MEAS_NMAX:
        raise LimitError(f"--nmax above {MAX_MEAS_NMAX} is not supported")
    if args.variant == "cosine" and args.eps is None:
        raise argparse.ArgumentTypeError("--eps is required for the cosine variant")
    if args.eps is not None and not 0 < args.eps < 1:
        raise argparse.ArgumentTypeError("--eps must lie in (0, 1)")
    t0 = time.time()
    cfg = required_measurement_spins(args.eps, args.nmax, args.variant)
    n = np.arange(args.nmax + 1)
    w = amplitude_weight(cfg.variant, n, cfg.N_M, cfg.gt) ** 2
    worst = float(np.max(w[1:]))
    target = args.eps if args.variant == "cosine" else 1e-24
    if worst > max(target, 1e-24) * (1 + 1e-12) and not (args.variant == "sinc" and worst < 1e-24):
        raise NumericalFailure(f"self-check failed: max weight {worst:.3e} over 1..n_max exceeds target")
    summary = {"variant": cfg.variant, "N_M": cfg.N_M, "gt": cfg.gt, "n_max": cfg.n_max,
               "max_weight_n_ge_1": worst}
    if args.eps is not None:
        summary["cosine_lower_bound"] = cosine_spin_lower_bound(args.eps, args.nmax)
    print(f"variant={cfg.variant} N_M={cfg.N_M} gt={cfg.gt:.17g} max_weight(1..n_max)={worst:.3e}")
    rows = [(int(k), float(x), cfg.variant) for k, x in zip(n, w)]
    emit("measproj", "na", ["n", "weight", "variant"], rows, _config_echo(args), t0, [], summary)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parse(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handler = {"haar-bench": cmd_haar_bench, "dicke": cmd_dicke, "bounds": cmd_bounds,
               "measproj": cmd_measproj}[args.command]
    try:
        return handler(args)
    except argparse.ArgumentTypeError as e:
        print(f"scramble-swap: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except LimitError as e:
        print(f"scramble-swap: limit: {e}", file=sys.stderr)
        return EXIT_LIMIT
    except TailBudgetError as e:
        print(f"scramble-swap: limit: {e}", file=sys.stderr)
        return EXIT_LIMIT
    except (NumericalFailure, np.linalg.LinAlgError) as e:
        print(f"scramble-swap: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
