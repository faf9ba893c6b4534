"""Command-line pipeline driver.

Usage: srfilter <subcommand> --config <path> [--set key=value ...] --out <dir>

Each subcommand exposes one pipeline stage through files in the output
directory, and running the stages manually in order reproduces what the
`run` subcommand computes in memory (all floats are serialized with enough
digits to round-trip exactly). Exit codes: 0 success, 1 stage error,
2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .events import Truth, read_events, write_events
from .experiment import (SPLIT_LABELS, ConfigError, RunConfig, derive_seed,
                         _eta_label, fit_repr_stage, generate_datasets,
                         load_config, ratio_error_metrics, run_experiment,
                         split_datasets)
from .oracle import read_setting, toy1d_setting
from .ratio import (NoiseSpec, compute_ranges, eval_ratio, fit_ratio,
                    fit_smoothed_ratio, read_ratio_model, write_ratio_model)
from .region import (calibrate_threshold, enrichment_curve, in_sr, peak_score,
                     write_curve)
from .representation import (embed, read_repr_csv, write_repr_csv,
                             write_repr_model)

_TRUTH_NAMES = tuple(t.value for t in Truth)


def _require(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(
            f"{path}: missing stage input; run the '{produced_by}' stage first")
    return path


def _read_pair(cfg: RunConfig, out: Path):
    d3b = read_events(_require(out / "events_3b.csv", "generate"))
    d4b = read_events(_require(out / "events_4b.csv", "generate"))
    return d3b, d4b


def _read_repr(out: Path, tag: str, part: str) -> np.ndarray:
    _, Z = read_repr_csv(_require(out / f"repr_{tag}_{part}.csv", "represent"))
    return Z


def _cmd_generate(cfg: RunConfig, out: Path) -> int:
    d3b, d4b = generate_datasets(cfg, cfg.repeat)
    write_events(d3b, out / "events_3b.csv")
    write_events(d4b, out / "events_4b.csv")
    print(f"wrote {len(d3b)} 3b and {len(d4b)} 4b events under {out}")
    return 0


def _cmd_represent(cfg: RunConfig, out: Path) -> int:
    d3b, d4b = _read_pair(cfg, out)
    p3, p4 = split_datasets(cfg, cfg.repeat, d3b, d4b)
    model = fit_repr_stage(cfg, cfg.repeat, p3, p4)
    write_repr_model(out / "repr_model.txt", model)
    for tag, parts in (("3b", p3), ("4b", p4)):
        for label in SPLIT_LABELS:
            write_repr_csv(out / f"repr_{tag}_{label}.csv", embed(model, parts[label]))
    print(f"representation ({model.mode}, dim {model.repr_dim}) written to {out}")
    return 0


def _cmd_fit_ratio(cfg: RunConfig, out: Path) -> int:
    Z3 = _read_repr(out, "3b", "ratio")
    Z4 = _read_repr(out, "4b", "ratio")
    spec = cfg.mlp_spec("gamma", Z3.shape[1])
    model = fit_ratio(Z3, Z4, spec, cfg.train["gamma"],
                      derive_seed(cfg.seed, cfg.repeat, "gamma"))
    write_ratio_model(out / "gamma_model.txt", model)
    print(f"plain ratio model written (rho={model.prior_correction:g})")
    return 0


def _cmd_fit_smoothed(cfg: RunConfig, out: Path) -> int:
    ranges = compute_ranges(np.vstack([_read_repr(out, "3b", "ratio"),
                                       _read_repr(out, "4b", "ratio")]))
    Z3 = _read_repr(out, "3b", "smooth")
    Z4 = _read_repr(out, "4b", "smooth")
    spec = cfg.mlp_spec("gamma_tilde", Z3.shape[1])
    for i, eta in enumerate(cfg.eta_values):
        noise = NoiseSpec.from_ranges(eta, ranges)
        model = fit_smoothed_ratio(Z3, Z4, noise, spec, cfg.train["gamma_tilde"],
                                   derive_seed(cfg.seed, cfg.repeat, f"smooth{i}"),
                                   redraw_per_epoch=cfg.redraw_per_epoch)
        write_ratio_model(out / f"gamma_tilde_eta{_eta_label(eta)}_model.txt", model)
    print(f"smoothed ratio models written for eta in {list(cfg.eta_values)}")
    return 0


def _cmd_score(cfg: RunConfig, out: Path) -> int:
    gamma = read_ratio_model(_require(out / "gamma_model.txt", "fit-ratio"))
    Z4e = _read_repr(out, "4b", "eval")
    d3b, d4b = _read_pair(cfg, out)
    _, p4 = split_datasets(cfg, cfg.repeat, d3b, d4b)
    truths = p4["eval"].truths
    for eta in cfg.eta_values:
        label = _eta_label(eta)
        gt = read_ratio_model(
            _require(out / f"gamma_tilde_eta{label}_model.txt", "fit-smoothed"))
        scores = peak_score(gamma, gt, Z4e)
        with open(out / f"scores_eta{label}.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("event_id,score,truth\n")
            for i, (s, t) in enumerate(zip(scores, truths)):
                fh.write(f"{i},{format(float(s), '.17g')},{_TRUTH_NAMES[t]}\n")
    print(f"peak scores written for {len(cfg.eta_values)} noise scales")
    return 0


def _read_scores(out: Path, label: str):
    path = _require(out / f"scores_eta{label}.csv", "score")
    scores, truths = [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "event_id,score,truth":
            raise ValueError(f"{path}: expected header event_id,score,truth, got {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            _, s, t = line.split(",")
            scores.append(float(s))
            truths.append(t)
    return np.array(scores), np.array(truths)


def _cmd_select(cfg: RunConfig, out: Path) -> int:
    eta = cfg.select_eta if cfg.select_eta is not None else cfg.eta_values[0]
    label = _eta_label(eta)
    scores, _ = _read_scores(out, label)
    region = calibrate_threshold(scores, cfg.select_q)
    member = in_sr(region, scores)
    with open(out / f"sr_eta{label}.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# q={region.target_q!r} tau={region.tau_s!r} "
                 f"n={region.calibration_count} members={int(member.sum())}\n")
        fh.write("event_id,score,in_sr\n")
        for i, (s, m) in enumerate(zip(scores, member)):
            fh.write(f"{i},{format(float(s), '.17g')},{int(m)}\n")
    print(f"tau_s={region.tau_s:.6g}: {int(member.sum())} of {len(scores)} events selected")
    return 0


def _cmd_curve(cfg: RunConfig, out: Path) -> int:
    for eta in cfg.eta_values:
        label = _eta_label(eta)
        scores, truths = _read_scores(out, label)
        meta = {"source": cfg.source, "eta": repr(float(eta)),
                "epsilon": repr(float(cfg.epsilon)), "n": cfg.n, "m": cfg.m,
                "seed": cfg.seed, "repeat": cfg.repeat, "n_eval_4b": len(scores)}
        curve = enrichment_curve(scores, truths == "sig", cfg.q_grid(), metadata=meta)
        write_curve(out / f"curve_eta{label}_rep{cfg.repeat}.csv", curve)
    print(f"enrichment curves written for {len(cfg.eta_values)} noise scales")
    return 0


def _resolve(out: Path, path_str: str) -> Path:
    p = Path(path_str)
    if p.is_absolute() or p.exists():
        return p
    return out / path_str


def _cmd_oracle_check(cfg: RunConfig, out: Path) -> int:
    if cfg.oracle_setting:
        setting = read_setting(_resolve(out, cfg.oracle_setting))
    else:
        setting = toy1d_setting(cfg.epsilon)
    model = read_ratio_model(_require(_resolve(out, cfg.oracle_model), "fit-ratio"))
    if cfg.oracle_target == "score":
        tilde = read_ratio_model(
            _require(_resolve(out, cfg.oracle_model_tilde), "fit-smoothed"))

        def predict(z):
            return peak_score(model, tilde, z)
    else:

        def predict(z):
            return eval_ratio(model, z)

    lo, hi, step = cfg.oracle_grid
    grid = np.arange(lo, hi + 0.5 * step, step)
    metrics = ratio_error_metrics(predict, setting, grid, cfg.oracle_target)
    with open(out / "oracle_check.txt", "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(metrics):
            fh.write(f"{key} = {metrics[key]}\n")
    for key in sorted(metrics):
        print(f"{key} = {metrics[key]}")
    return 0


def _cmd_run(cfg: RunConfig, out: Path) -> int:
    report = run_experiment(cfg, out)
    for line in report.summary_lines():
        print(line)
    if not report.complete:
        for err in report.errors:
            print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


_COMMANDS = {
    "generate": (_cmd_generate, "sample events and write the 3b/4b CSVs"),
    "represent": (_cmd_represent, "split, fit the representation, embed all splits"),
    "fit-ratio": (_cmd_fit_ratio, "train the plain density-ratio classifier"),
    "fit-smoothed": (_cmd_fit_smoothed, "train smoothed ratios, one per noise scale"),
    "score": (_cmd_score, "evaluate peak scores on the held-out 4b split"),
    "select": (_cmd_select, "calibrate a threshold and write SR membership"),
    "curve": (_cmd_curve, "build enrichment curves from score files"),
    "oracle-check": (_cmd_oracle_check, "compare a fitted model to the exact setting"),
    "run": (_cmd_run, "full experiment: all repeats, curves, manifest"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srfilter",
        description="signal-region discovery via smoothed density-ratio filtering")
    sub = parser.add_subparsers(dest="command", required=True, metavar="<subcommand>")
    for name, (_, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    handler = _COMMANDS[args.command][0]
    try:
        return handler(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
