"""Command-line interface: ``regforge {check,design,simulate,verify,sweep}``.

Exit status is 0 on success, 1 on a domain failure (assumption, synthesis
or bound) and 2 on usage or parse errors. All outputs are JSON or CSV and
are byte-identical across reruns with the same inputs and seed.
"""

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import pipeline as dg
from . import experiments as ex
from . import hinf as hf
from .errors import DesignError, Diverged, ParseError, RegforgeError, SynthesisFailed
from .model import MODES, assumption_mode, check_assumptions, load_problem

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _dumps(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


# ---------------------------------------------------------------------------
# argument parsing

def _gamma(text):
    if text == "auto":
        return text
    try:
        g = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("gamma must be a positive number or 'auto'") from None
    if not (math.isfinite(g) and g > 0):
        raise argparse.ArgumentTypeError("gamma must be a positive number or 'auto'")
    return g


def _positive(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"{text!r} must be positive")
    return v


def _count(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _scenarios(text):
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in ex.SCENARIOS]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown scenario(s) {bad}; choose from {sorted(ex.SCENARIOS)}")
    return tuple(names)


def _grid(text):
    """``lo:hi:n`` (log-spaced) or a comma-separated list of gamma values."""
    text = text.strip()
    if not text:
        return ()
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
            if n < 1 or not 0 < lo <= hi:
                raise ValueError
            return tuple(float(v) for v in np.geomspace(lo, hi, n))
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad gamma grid {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", required=True, help="problem JSON file")
    common.add_argument("--out", help="output directory (created if missing)")
    common.add_argument("--mode", choices=MODES, help="override the design mode")
    common.add_argument("--gamma", type=_gamma, help="attenuation level or 'auto'")
    common.add_argument("--dt", type=_positive, default=1e-3, help="simulation step")
    common.add_argument("--horizon", type=_positive, default=20.0, help="simulated time")
    common.add_argument("--seeds", type=_count, default=1, help="noise seeds per scenario")
    common.add_argument("--scenario", type=_scenarios, help="comma-separated scenario names")

    p = argparse.ArgumentParser(prog="regforge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="evaluate the standing assumptions")
    sub.add_parser("design", parents=[common], help="run the design pipeline")
    sub.add_parser("simulate", parents=[common], help="simulate scenarios and write traces")
    sub.add_parser("verify", parents=[common], help="simulate and check the error bounds")
    sw = sub.add_parser("sweep", parents=[common], help="feasibility and attenuation over gamma")
    sw.add_argument("--grid", type=_grid, default=None,
                    help="gamma grid as lo:hi:n (log-spaced) or a comma list")
    return p


def _base_seed():
    raw = os.environ.get("REGFORGE_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"REGFORGE_SEED must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------------------
# commands

def _emit(args, name, text):
    sys.stdout.write(text)
    if args.out:
        (Path(args.out) / name).write_text(text)


def _problem(args):
    pr = load_problem(args.problem)
    if args.mode:
        pr = pr.with_mode(args.mode)
    if args.gamma is not None:
        pr = pr.with_gamma(args.gamma)
    return pr


def _check(pr):
    return check_assumptions(pr.plant, pr.reference, pr.disturbance,
                             assumption_mode(pr.design.mode))


def cmd_check(args):
    pr = _problem(args)
    rep = _check(pr)
    _emit(args, "assumptions.json", _dumps(rep.to_dict()))
    if not rep.ok:
        ids = ", ".join(e.id for e in rep.failures)
        print(f"regforge: assumptions failed: {ids}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def _design(args, pr):
    rep = _check(pr)
    if not rep.ok:
        ids = ", ".join(e.id for e in rep.failures)
        raise SynthesisFailed("check_assumptions", f"failed: {ids}")
    return dg.design(pr)


def cmd_design(args):
    pr = _problem(args)
    d = _design(args, pr)
    _emit(args, "design.json", _dumps(d.report()))
    return EXIT_OK


def _run(job):
    d, name, seed, dt, horizon = job
    try:
        return ex.run_scenario(d, name, dt, horizon, seed)
    except Diverged as exc:
        raise Diverged(f"scenario {name!r}: {exc}", exc.time) from exc


def _traces(args, d, names):
    """Run every (scenario, seed) pair; results come back in submission order."""
    seed0 = _base_seed()
    jobs = [(d, name, s, args.dt, args.horizon) for name in names
            for s in (range(seed0, seed0 + args.seeds) if ex.SCENARIOS[name].noise else [None])]
    with ThreadPoolExecutor(max_workers=min(len(jobs), os.cpu_count() or 1)) as pool:
        for (_, name, s, _, _), tr in zip(jobs, pool.map(_run, jobs)):
            yield name, s, tr


def _trace_name(name, seed):
    return f"trace_{name}.csv" if seed is None else f"trace_{name}_seed{seed}.csv"


def _summaries(args, d, write_traces):
    names = args.scenario or ex.DEFAULT_SCENARIOS
    out = {}
    for name, seed, tr in _traces(args, d, names):
        rep = ex.scenario_report(d, tr)
        if write_traces and args.out:
            (Path(args.out) / _trace_name(name, seed)).write_text(tr.to_csv())
        out.setdefault(name, []).append(rep)
    summary = {}
    for name, reps in out.items():
        e = [r["e_power"] for r in reps]
        summary[name] = {
            "runs": reps,
            "e_power_mean": float(np.mean(e)),
            "e_power_std": float(np.std(e, ddof=1)) if len(e) > 1 else 0.0,
        }
    return summary


def cmd_simulate(args):
    pr = _problem(args)
    d = _design(args, pr)
    summary = _summaries(args, d, write_traces=True)
    _emit(args, "simulation.json", _dumps({"gamma": d.gamma, "scenarios": summary}))
    return EXIT_OK


def _verdicts(d, summary):
    """Pass/fail per scenario against the regulation, attenuation and noise claims."""
    checks = {}
    for name, s in summary.items():
        sc = ex.SCENARIOS[name]
        runs = s["runs"]
        if not (sc.noise or sc.w1):
            worst = max(r["regulation_error"] for r in runs)
            checks[name] = {"check": "regulation", "value": worst, "limit": 1e-3,
                            "passed": worst < 1e-3}
        elif sc.w1 and not sc.noise and not sc.ablate and d.gamma is not None:
            worst = max(r["ratio"] for r in runs if r["ratio"] is not None)
            checks[name] = {"check": "attenuation", "value": worst, "limit": d.gamma,
                            "passed": worst < d.gamma}
        elif sc.noise and sc.w1 and d.budget is not None and not sc.ablate:
            worst = max(r["e_power"] / r["predicted"] for r in runs)
            checks[name] = {"check": "noise_bound", "value": worst, "limit": 1.15,
                            "passed": worst <= 1.15}
        elif sc.noise and d.budget is not None and not sc.ablate:
            pred = runs[0]["predicted"]
            rel = abs(s["e_power_mean"] - pred) / pred if pred else None
            checks[name] = {"check": "noise_budget", "value": s["e_power_mean"],
                            "predicted": pred, "relative_error": rel, "limit": 0.15,
                            "passed": rel is not None and rel <= 0.15}
        if not all(r["flags"]["z_dominates_e"] for r in runs):
            checks[name + ":z"] = {"check": "z_dominates_e", "passed": False}
    return checks


def cmd_verify(args):
    pr = _problem(args)
    d = _design(args, pr)
    summary = _summaries(args, d, write_traces=False)
    checks = _verdicts(d, summary)
    ok = all(c["passed"] for c in checks.values())
    _emit(args, "verify.json", _dumps({"gamma": d.gamma, "checks": checks, "ok": ok,
                                       "scenarios": summary}))
    if not ok:
        bad = ", ".join(k for k, c in checks.items() if not c["passed"])
        print(f"regforge: bound checks failed: {bad}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_sweep(args):
    pr = _problem(args)
    base = _design(args, pr.with_gamma(10.0 if args.gamma in (None, "auto") else args.gamma))
    if base.synthesis is None:
        raise SynthesisFailed("sweep", "the design has no compensator channel")
    naug = base.synthesis.plant
    floor = hf.gamma_floor(naug)
    grid = args.grid
    if grid is None:
        grid = tuple(float(v) for v in np.geomspace(floor * 1.01, 10.0, 25))
    if not grid:
        raise UsageError("empty gamma grid")
    rows = []
    for g in sorted(grid):
        feasible = g > floor and hf.gamma_feasibility(naug, g) is not None
        ratio = swept = None
        if feasible:
            d = dg.design(pr, gamma=g)
            swept = d.synthesis.certificates["swept_norm"]
            tr = ex.run_scenario(d, "w1", args.dt, args.horizon, channels=["z", "w1", "e"])
            ratio = tr.power("z") / tr.power("w1")
        rows.append((g, feasible, swept, ratio))
    flags = [r[1] for r in rows]
    first = flags.index(True) if True in flags else len(flags)
    monotone = all(flags[first:])
    lines = ["gamma,feasible,swept_norm,ratio"]
    for g, f, s, r in rows:
        lines.append(",".join([repr(g), "1" if f else "0",
                               "" if s is None else repr(s), "" if r is None else repr(r)]))
    _emit(args, "sweep.csv", "\n".join(lines) + "\n")
    if not monotone:
        print("regforge: feasibility is not monotone in gamma", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


COMMANDS = {"check": cmd_check, "design": cmd_design, "simulate": cmd_simulate,
            "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
        if args.horizon < args.dt:
            raise UsageError("--horizon must be at least --dt")
        _base_seed()
        return COMMANDS[args.command](args)
    except (UsageError, ParseError) as exc:
        print(f"regforge: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"regforge: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SynthesisFailed as exc:
        print(f"regforge: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (DesignError, RegforgeError) as exc:
        print(f"regforge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
