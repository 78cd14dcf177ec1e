"""Command-line entry point: ``rarecast <command> CONFIG [options]``.

Commands: simulate, train, predict, sweep, stability.  Every command writes
the resolved config (canonical JSON) next to its outputs.  Exit status is 0
on success, 2 for config or input errors and 3 for numerical divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import lyapunov, metrics, reservoir
from .config import ConfigError, ExperimentConfig, StabilityConfig, canonical_json, config_hash, load_config
from .dynsys import IntegrationBlowUp, OdeSystem, TrajectoryBuffer
from .experiment import Experiment, summarize
from .sweep import export_heatmap, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3

log = logging.getLogger("rarecast")


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_config(path: Path, cfg: ExperimentConfig) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(cfg) + "\n")


def _suffix(fmt: str) -> str:
    return ".csv" if fmt == "csv" else ".bin"


def _load_data(exp: Experiment, path) -> None:
    if path is not None:
        exp.use_data(TrajectoryBuffer.load(path, exp.dt))


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    exp = Experiment(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    exp.data().save(out, args.format)
    _write_config(out.with_name(out.stem + ".config.json"), cfg)
    if args.lyapunov:
        lam = exp.lambda_max()
        print(f"lambda_max {lam!r}")
        _write_json(out.with_name(out.stem + ".lyapunov.json"), {"lambda_max": lam})
    print(f"wrote {len(exp.data())} steps x {exp.n_channels} channels to {out}")
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig, args) -> int:
    exp = Experiment(cfg)
    _load_data(exp, args.data)
    model, report = exp.train()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    reservoir.save_model(model, out)
    _write_json(out.with_name(out.stem + ".report.json"), report.to_dict())
    _write_config(out.with_name(out.stem + ".config.json"), cfg)
    rms = ", ".join(f"{x:.3g}" for x in report.residual_rms[:6])
    print(f"trained; residual rms [{rms}{', ...' if len(report.residual_rms) > 6 else ''}]")
    return EXIT_OK


def cmd_predict(cfg: ExperimentConfig, args) -> int:
    exp = Experiment(cfg)
    _load_data(exp, args.truth)
    if args.model is not None:
        model = reservoir.load_model(args.model)
    else:
        model, _ = exp.train()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    schedule = exp.schedule()
    series = []
    for k, seg in enumerate(exp.segments()):
        pred = exp.predict(model, seg, schedule)
        es = exp.errors(pred, seg)
        series.append(es)
        pred.save(out / f"prediction_{k}{_suffix(args.format)}", args.format)
        metrics.write_error_series(out / f"errors_{k}.csv", es)
        if exp.is_pde:
            metrics.write_error_field(out / f"error_field_{k}.csv",
                                      metrics.error_field(pred, seg.truth, exp.channels_per_site))
    summary = summarize(series)
    summary["schedule"] = None if schedule is None else schedule.to_dict()
    _write_json(out / "summary.json", summary)
    _write_config(out / "config.json", cfg)
    for k, row in enumerate(summary["segments"]):
        h = row["horizon_lyapunov"]
        hs = "inf (tolerance never breached)" if h is None else f"{h:.3f} Lyapunov times"
        print(f"segment {k}: delta_e {row['delta_e']:.4g}, horizon {hs}")
    return EXIT_OK


def _run_dir(cfg: ExperimentConfig, out) -> Path:
    d = Path(out) / config_hash(cfg)[:16]
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    grid = run_sweep(cfg, workers=args.workers)
    d = _run_dir(cfg, args.out)
    export_heatmap(grid, d, "sweep")
    _write_config(d / "config.json", cfg)
    print(f"sweep {grid.y_name} x {grid.x_name} ({grid.cells.size} cells) written to {d}")
    return EXIT_OK


def cmd_stability(cfg: ExperimentConfig, args) -> int:
    exp = Experiment(cfg)
    if not isinstance(exp.system, OdeSystem):
        raise ConfigError("stability analysis needs an ODE system")
    st = cfg.stability or StabilityConfig()
    grid = lyapunov.stability_map(
        exp.system, st.c, st.active, st.period, st.n_steps, tuple(st.channels),
        st.renorm_interval, x0=None,
    )
    grid.metadata["config_sha256"] = config_hash(cfg)
    d = _run_dir(cfg, args.out)
    export_heatmap(grid, d, "stability")
    _write_config(d / "config.json", cfg)
    print(f"transverse exponents on {grid.cells.size} cells written to {d}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
    "stability": cmd_stability,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rarecast", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="experiment config (YAML)")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
    common.add_argument("--format", choices=("csv", "bin"), default="csv", help="trajectory file format")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="generate ground-truth data")
    s.add_argument("--out", required=True, help="trajectory file")
    s.add_argument("--lyapunov", action="store_true", help="also estimate lambda_max")

    s = sub.add_parser("train", parents=[common], help="train the reservoir readout")
    s.add_argument("--data", help="trajectory from 'simulate' (generated if omitted)")
    s.add_argument("--out", required=True, help="model snapshot file")

    s = sub.add_parser("predict", parents=[common], help="closed-loop prediction and errors")
    s.add_argument("--model", help="model snapshot (trained on the fly if omitted)")
    s.add_argument("--truth", help="trajectory from 'simulate' (generated if omitted)")
    s.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("sweep", parents=[common], help="delta_e over an update-schedule grid")
    s.add_argument("--out", required=True, help="results root; a subdirectory per config hash")

    s = sub.add_parser("stability", parents=[common], help="transverse Lyapunov map")
    s.add_argument("--out", required=True, help="results root; a subdirectory per config hash")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (reservoir.ReservoirDivergence, reservoir.TrainingError, IntegrationBlowUp) as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
