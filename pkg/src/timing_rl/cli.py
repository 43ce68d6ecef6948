"""Command-line entry point.

Exit status: 0 on success, 1 on a usage error, 2 on a runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _overrides(pairs) -> dict:
    from .scenario import ScenarioSpec, _parse_value

    proto = ScenarioSpec()
    out = {}
    for item in pairs or ():
        key, sep, raw = item.partition("=")
        if not sep or not hasattr(proto, key.strip()):
            raise UsageError(f"bad scenario override {item!r}; expected KEY=VALUE with a scenario field")
        key = key.strip()
        out[key] = _parse_value(getattr(proto, key), raw.strip(), key)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="timing-rl", description="Timing-aware RL for unsignalized intersections.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    t = sub.add_parser("train", help="phase-1 SAC, alternating timing training and SAC-Lattice")
    t.add_argument("config", help="training INI file ([train] and [scenario_overrides] sections)")
    t.add_argument("--resume", action="store_true", help="skip stages whose checkpoint already exists")
    t.add_argument("--run-dir", help="output directory (default: $TIMING_RL_RUNS/<config name>)")
    t.add_argument("--stage", choices=("all", "phase1", "alternating", "sac_lattice"), default="all")
    t.add_argument("--seed", type=int, help="override the config seed")

    e = sub.add_parser("eval", help="deterministic evaluation, mean ± std over rounds")
    e.add_argument("bundles", nargs="+", help="checkpoint files, or 'lattice_idm' for the planner baseline")
    e.add_argument("--scenario", default="intersection", help="preset name or scenario INI path")
    e.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE", help="scenario override")
    e.add_argument("--episodes", type=int, default=200)
    e.add_argument("--rounds", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--metrics", help="write per-round rows to this CSV")
    e.add_argument("--trace-dir", help="write one trace per model and round")
    e.add_argument("--no-vehicles", action="store_true", help="omit surrounding vehicles from traces")

    r = sub.add_parser("replay", help="trace -> per-step CSV table")
    r.add_argument("trace")
    r.add_argument("--output", "-o", help="CSV path (default: stdout)")

    b = sub.add_parser("analyze-beta", help="planner usage 1 - beta overall and before collisions")
    b.add_argument("traces", nargs="+")
    b.add_argument("--dt", type=float, default=0.1)
    b.add_argument("--json", action="store_true")

    d = sub.add_parser("plot-data", help="training episodes -> windowed curve CSV")
    d.add_argument("source", help="episodes_*.jsonl file or a run directory")
    d.add_argument("--window", type=int, default=5000)
    d.add_argument("--output", "-o", help="CSV path (default: stdout)")

    x = sub.add_parser("experiment", help="scaled comparison of all four models over several seeds")
    x.add_argument("out_dir", nargs="?", help="default: $TIMING_RL_RUNS/experiment")
    x.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    x.add_argument("--episodes", type=int, default=200)
    x.add_argument("--phase1-steps", type=int, default=50_000)
    x.add_argument("--alternating-steps", type=int, default=50_000)
    x.add_argument("--t-spawn", type=float, default=3.0)
    return p


def _cmd_train(a) -> int:
    from .trainer import load_bundle, load_train_config, run_root, train_all, train_alternating, \
        train_phase1, train_sac_lattice, write_manifest

    if not Path(a.config).is_file():
        raise FileNotFoundError(f"config file not found: {a.config}")
    cfg = load_train_config(a.config, **({"seed": a.seed} if a.seed is not None else {}))
    run_dir = Path(a.run_dir) if a.run_dir else run_root() / f"{Path(a.config).stem}-seed{cfg.seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    if a.stage == "all":
        paths = train_all(cfg, run_dir, resume=a.resume)
    else:
        (run_dir / "config.ini").write_text(cfg.to_ini())
        if a.stage == "phase1":
            paths = {"phase1": train_phase1(cfg, run_dir)}
        elif a.stage == "sac_lattice":
            paths = {"sac_lattice": train_sac_lattice(cfg, run_dir)}
        else:
            p1 = run_dir / "phase1.ckpt"
            if not p1.exists():
                raise FileNotFoundError(f"alternating training needs {p1}; run --stage phase1 first")
            load_bundle(p1)
            paths = {"timing_aware": train_alternating(cfg, run_dir, p1)[0]}
        write_manifest(run_dir, cfg)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def _cmd_eval(a) -> int:
    from .metrics import export_metrics, format_summary
    from .scenario import load_scenario
    from .trainer import evaluate, lattice_bundle, load_bundle

    if a.episodes < 1 or a.rounds < 1:
        raise UsageError("--episodes and --rounds must be positive")
    spec = load_scenario(a.scenario, **_overrides(a.overrides))
    name = Path(a.scenario).stem
    rows = []
    for src in a.bundles:
        bundle = lattice_bundle(spec) if src == "lattice_idm" else load_bundle(src)
        tag = bundle.mode if src == "lattice_idm" else f"{bundle.mode}"
        rows += evaluate(bundle, spec, a.episodes, a.rounds, a.seed, a.trace_dir, tag,
                         vehicles=not a.no_vehicles, scenario_name=name)
    if a.metrics:
        export_metrics(rows, a.metrics)
    print(format_summary(rows))
    return EXIT_OK


def _write_table(rows, columns, output):
    fh = open(output, "w", newline="") if output else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})
    finally:
        if output:
            fh.close()


def _cmd_replay(a) -> int:
    from .traces import STEP_FIELDS, read_trace, replay_rows

    trace = read_trace(a.trace)
    rows = replay_rows(trace)
    _write_table(rows, ("episode",) + STEP_FIELDS, a.output)
    print(f"{len(rows)} steps in {len(trace.episodes)} episodes", file=sys.stderr)
    return EXIT_OK


def _cmd_analyze_beta(a) -> int:
    from .traces import analyze_beta, read_trace

    st = analyze_beta([read_trace(p) for p in a.traces], a.dt)
    if a.json:
        print(json.dumps(asdict(st), sort_keys=True))
        return EXIT_OK

    def fmt(v):
        return "absent (no collisions)" if v is None else f"{v:.4f}"

    print(f"steps: {st.n_steps}  collision episodes: {st.n_collisions}")
    print(f"mean 1-beta, all steps:      {fmt(st.overall)}")
    print(f"mean 1-beta, 3 s before hit: {fmt(st.pre3)}")
    print(f"mean 1-beta, 1 s before hit: {fmt(st.pre1)}")
    return EXIT_OK


def _cmd_plot_data(a) -> int:
    from .metrics import CURVE_COLUMNS, training_curves, write_curves

    src = Path(a.source)
    files = sorted(src.glob("episodes_*.jsonl")) if src.is_dir() else [src]
    if not files or not all(f.is_file() for f in files):
        raise FileNotFoundError(f"no episode records found at {src}")
    episodes = [json.loads(line) for f in files for line in f.read_text().splitlines() if line.strip()]
    rows = training_curves(episodes, a.window)
    if a.output:
        write_curves(rows, a.output)
    else:
        _write_table(rows, CURVE_COLUMNS, None)
    return EXIT_OK


def _cmd_experiment(a) -> int:
    from .trainer import experiment_config, run_experiment, run_root

    base = experiment_config()
    base = type(base)(**{**asdict(base), "phase1_steps": a.phase1_steps,
                         "n_train": a.phase1_steps + a.alternating_steps,
                         "scenario_overrides": (("t_spawn", a.t_spawn),), "hidden": base.hidden})
    out = Path(a.out_dir) if a.out_dir else run_root() / "experiment"
    res = run_experiment(out, tuple(a.seeds), a.episodes, base,
                         progress=lambda msg: print(msg, file=sys.stderr, flush=True))
    print(json.dumps(res, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"train": _cmd_train, "eval": _cmd_eval, "replay": _cmd_replay, "analyze-beta": _cmd_analyze_beta,
            "plot-data": _cmd_plot_data, "experiment": _cmd_experiment}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if a.command is None:
            raise UsageError(parser.format_help())
        return COMMANDS[a.command](a)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any failure maps to the runtime exit code
        print(f"timing-rl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
