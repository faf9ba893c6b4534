"""End-to-end experiment driver.

Turns a flat key = value configuration into the full pipeline: generate (or
load) 3b/4b samples, split 75 / 6.25 / 18.75, fit the representation, fit
the plain ratio on the large split and the smoothed ratio on the smeared
middle split for each noise scale, score and calibrate on the held-out
split, and aggregate enrichment curves over seeded repeats. Every artifact
is persisted under an output directory together with a manifest that pins
each configuration value and derived seed, so reruns are byte-identical.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .events import (Dataset, PhysicsParams, SplitSpec, generate_physics_like,
                     generate_toy1d, generate_toy1d_null, read_events, split)
from .nnet import MLPSpec, TrainConfig
from .oracle import exact_gamma, exact_gamma_tilde, exact_score, _eval_fn
from .ratio import (NoiseSpec, compute_ranges, fit_ratio, fit_smoothed_ratio)
from .region import (AggregatedCurve, EnrichmentCurve, aggregate_curves,
                     curve_auc, default_q_grid, enrichment_curve, peak_score,
                     write_curve)
from .representation import (embed, embedding_input_dim, fit_passthrough,
                             fit_representation)

_MASK64 = (1 << 64) - 1

SPLIT_LABELS = ("ratio", "smooth", "eval")
STAGES = ("repr", "gamma", "gamma_tilde")
SOURCES = ("toy1d", "toy1d_null", "physics_like", "files")


class ConfigError(ValueError):
    """Raised for malformed or inconsistent run configurations."""


def _mix64(x: int) -> int:
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def derive_seed(master_seed: int, repeat: int, stage: str) -> int:
    """Independent 64-bit stream per (master seed, repeat, stage name).

    A splitmix-style finalizer absorbs the repeat index and the stage name
    bytes; unlike Python's hash() this is stable across processes.
    """
    state = _mix64(int(master_seed) ^ 0x5851F42D4C957F2D)
    state = _mix64(state ^ ((int(repeat) + 1) * 0x9E3779B97F4A7C15))
    for b in stage.encode("utf-8"):
        state = _mix64(state ^ b)
    return state


@dataclass
class RunConfig:
    """All knobs of one experiment; round-trips through flat key = value text."""

    source: str = "toy1d"
    n: int = 100000
    m: int = 100000
    epsilon: float = 0.05
    seed: int = 1
    repeat: int = 0
    repeats: int = 10
    split_fractions: tuple = (0.75, 0.0625, 0.1875)
    eta_values: tuple = (0.01, 0.1, 1.0)
    q_spec: str = "geom 0.005 1 50"
    repr_mode: str = "passthrough"
    hidden: dict = field(default_factory=lambda: {
        "repr": (64, 8), "gamma": (64, 64), "gamma_tilde": (64, 64)})
    train: dict = field(default_factory=lambda: {s: TrainConfig() for s in STAGES})
    physics: PhysicsParams = field(default_factory=PhysicsParams)
    files_3b: str = ""
    files_4b: str = ""
    redraw_per_epoch: bool = False
    select_q: float = 0.1
    select_eta: float | None = None
    oracle_setting: str = ""
    oracle_target: str = "gamma"
    oracle_model: str = "gamma_model.txt"
    oracle_model_tilde: str = "gamma_tilde_eta0.1_model.txt"
    oracle_grid: tuple = (-8.0, 8.0, 0.1)

    def validate(self) -> None:
        if self.source not in SOURCES:
            raise ConfigError(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.n <= 0 or self.m <= 0:
            raise ConfigError("n and m must be positive")
        if not (0 <= self.epsilon < 1):
            raise ConfigError("epsilon must lie in [0, 1)")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if len(self.split_fractions) != 3:
            raise ConfigError("exactly three split fractions are required")
        if abs(sum(self.split_fractions) - 1.0) > 1e-12:
            raise ConfigError("split fractions must sum to 1")
        if any(f <= 0 for f in self.split_fractions):
            raise ConfigError("split fractions must be positive")
        if len(self.eta_values) == 0 or any(e <= 0 for e in self.eta_values):
            raise ConfigError("eta values must be positive")
        if self.repr_mode not in ("passthrough", "learned"):
            raise ConfigError("repr.mode must be passthrough or learned")
        if self.source == "files" and (not self.files_3b or not self.files_4b):
            raise ConfigError("source files requires files.events_3b and files.events_4b")
        if self.oracle_target not in ("gamma", "gamma_tilde", "score"):
            raise ConfigError("oracle.target must be gamma, gamma_tilde, or score")
        self.q_grid()

    def q_grid(self) -> np.ndarray:
        tokens = self.q_spec.split()
        try:
            if tokens and tokens[0] == "geom":
                lo, hi, count = float(tokens[1]), float(tokens[2]), int(tokens[3])
                grid = np.geomspace(lo, hi, count)
            else:
                grid = np.array([float(t) for t in tokens])
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"bad q_grid spec {self.q_spec!r}: {exc}") from None
        if grid.size == 0 or np.any(grid <= 0) or np.any(grid > 1):
            raise ConfigError("q_grid values must lie in (0, 1]")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ConfigError("q_grid must be strictly increasing")
        return grid

    def mlp_spec(self, stage: str, input_dim: int) -> MLPSpec:
        return MLPSpec((input_dim, *self.hidden[stage], 1))


_TRAIN_KEYS = {
    "learning_rate": float,
    "batch_size": int,
    "max_epochs": int,
    "patience": int,
    "validation_fraction": float,
}


def _parse_bool(value: str) -> bool:
    low = value.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


def _parse_tuple(value: str, cast) -> tuple:
    return tuple(cast(t) for t in value.split())


def parse_config_text(text: str) -> dict:
    """Flat key = value lines; '#' starts a comment, blank lines ignored."""
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        mapping[key] = value.strip()
    return mapping


_PHYSICS_FIELDS = {f.name: f for f in dataclasses.fields(PhysicsParams)}


def config_from_mapping(mapping: dict) -> RunConfig:
    cfg = RunConfig()
    hidden = dict(cfg.hidden)
    train = {s: cfg.train[s] for s in STAGES}
    physics_updates = {}

    for key, value in mapping.items():
        try:
            if key == "source":
                cfg.source = value
            elif key == "n":
                cfg.n = int(value)
            elif key == "m":
                cfg.m = int(value)
            elif key == "epsilon":
                cfg.epsilon = float(value)
            elif key == "seed":
                cfg.seed = int(value)
            elif key == "repeat":
                cfg.repeat = int(value)
            elif key == "repeats":
                cfg.repeats = int(value)
            elif key == "split":
                cfg.split_fractions = _parse_tuple(value, float)
            elif key == "eta":
                cfg.eta_values = _parse_tuple(value, float)
            elif key == "q_grid":
                cfg.q_spec = value
            elif key == "repr.mode":
                cfg.repr_mode = value
            elif key == "files.events_3b":
                cfg.files_3b = value
            elif key == "files.events_4b":
                cfg.files_4b = value
            elif key == "smooth.redraw_per_epoch":
                cfg.redraw_per_epoch = _parse_bool(value)
            elif key == "select.q":
                cfg.select_q = float(value)
            elif key == "select.eta":
                cfg.select_eta = float(value)
            elif key == "oracle.setting":
                cfg.oracle_setting = value
            elif key == "oracle.target":
                cfg.oracle_target = value
            elif key == "oracle.model":
                cfg.oracle_model = value
            elif key == "oracle.model_tilde":
                cfg.oracle_model_tilde = value
            elif key == "oracle.grid":
                grid = _parse_tuple(value, float)
                if len(grid) != 3:
                    raise ConfigError("oracle.grid needs three values: lo hi step")
                cfg.oracle_grid = grid
            elif key.startswith("net.") and key.endswith(".hidden"):
                stage = key[len("net.") : -len(".hidden")]
                if stage not in STAGES:
                    raise ConfigError(f"unknown network stage {stage!r}")
                hidden[stage] = _parse_tuple(value, int)
            elif key.startswith("train."):
                _, stage, param = key.split(".", 2)
                if stage not in STAGES:
                    raise ConfigError(f"unknown train stage {stage!r}")
                if param not in _TRAIN_KEYS:
                    raise ConfigError(f"unknown train parameter {param!r}")
                train[stage] = replace(train[stage], **{param: _TRAIN_KEYS[param](value)})
            elif key.startswith("physics."):
                name = key[len("physics.") :]
                if name not in _PHYSICS_FIELDS:
                    raise ConfigError(f"unknown physics parameter {name!r}")
                default = getattr(PhysicsParams(), name)
                if isinstance(default, tuple):
                    physics_updates[name] = _parse_tuple(value, float)
                else:
                    physics_updates[name] = float(value)
            else:
                raise ConfigError(f"unknown configuration key {key!r}")
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None

    cfg.hidden = hidden
    cfg.train = train
    if physics_updates:
        cfg.physics = replace(cfg.physics, **physics_updates)
    cfg.validate()
    return cfg


def load_config(path, overrides=()) -> RunConfig:
    """Read a config file and apply --set style key=value overrides."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    mapping = parse_config_text(text)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, _, value = item.partition("=")
        mapping[key.strip()] = value.strip()
    return config_from_mapping(mapping)


def _flt(x: float) -> str:
    return repr(float(x))


def config_to_mapping(cfg: RunConfig) -> dict:
    """Canonical flat form including defaults; used for the run manifest."""
    out = {
        "source": cfg.source,
        "n": str(cfg.n),
        "m": str(cfg.m),
        "epsilon": _flt(cfg.epsilon),
        "seed": str(cfg.seed),
        "repeat": str(cfg.repeat),
        "repeats": str(cfg.repeats),
        "split": " ".join(_flt(f) for f in cfg.split_fractions),
        "eta": " ".join(_flt(e) for e in cfg.eta_values),
        "q_grid": cfg.q_spec,
        "repr.mode": cfg.repr_mode,
        "files.events_3b": cfg.files_3b,
        "files.events_4b": cfg.files_4b,
        "smooth.redraw_per_epoch": "true" if cfg.redraw_per_epoch else "false",
        "select.q": _flt(cfg.select_q),
        "oracle.setting": cfg.oracle_setting,
        "oracle.target": cfg.oracle_target,
        "oracle.model": cfg.oracle_model,
        "oracle.model_tilde": cfg.oracle_model_tilde,
        "oracle.grid": " ".join(_flt(v) for v in cfg.oracle_grid),
    }
    if cfg.select_eta is not None:
        out["select.eta"] = _flt(cfg.select_eta)
    for stage in STAGES:
        out[f"net.{stage}.hidden"] = " ".join(str(h) for h in cfg.hidden[stage])
        tc = cfg.train[stage]
        for param, cast in _TRAIN_KEYS.items():
            v = getattr(tc, param)
            out[f"train.{stage}.{param}"] = _flt(v) if cast is float else str(v)
    for name in _PHYSICS_FIELDS:
        v = getattr(cfg.physics, name)
        out[f"physics.{name}"] = " ".join(_flt(x) for x in v) if isinstance(v, tuple) else _flt(v)
    return out


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------


def generate_datasets(cfg: RunConfig, repeat: int) -> tuple[Dataset, Dataset]:
    seed = derive_seed(cfg.seed, repeat, "data")
    if cfg.source == "toy1d":
        return generate_toy1d(cfg.n, cfg.m, cfg.epsilon, seed)
    if cfg.source == "toy1d_null":
        # epsilon plays the role of the pseudo-signal label fraction
        return generate_toy1d_null(cfg.n, cfg.m, cfg.epsilon, seed)
    if cfg.source == "physics_like":
        return generate_physics_like(cfg.n, cfg.m, cfg.epsilon, cfg.physics, seed)
    return read_events(cfg.files_3b), read_events(cfg.files_4b)


def split_datasets(cfg: RunConfig, repeat: int, d3b: Dataset, d4b: Dataset):
    spec = SplitSpec(tuple(zip(SPLIT_LABELS, cfg.split_fractions)))
    parts3 = split(d3b, spec, derive_seed(cfg.seed, repeat, "split3b"))
    parts4 = split(d4b, spec, derive_seed(cfg.seed, repeat, "split4b"))
    return dict(zip(SPLIT_LABELS, parts3)), dict(zip(SPLIT_LABELS, parts4))


def fit_repr_stage(cfg: RunConfig, repeat: int, p3: dict, p4: dict):
    if cfg.repr_mode == "passthrough":
        return fit_passthrough(p3["ratio"], p4["ratio"])
    input_dim = embedding_input_dim(p3["ratio"].dims)
    spec = cfg.mlp_spec("repr", input_dim)
    return fit_representation(p3["ratio"], p4["ratio"], spec, cfg.train["repr"],
                              derive_seed(cfg.seed, repeat, "repr"))


def run_repeat(cfg: RunConfig, repeat: int):
    """One full repeat: returns (curves_by_eta, auc_by_eta, models_bundle)."""
    d3b, d4b = generate_datasets(cfg, repeat)
    p3, p4 = split_datasets(cfg, repeat, d3b, d4b)
    rmodel = fit_repr_stage(cfg, repeat, p3, p4)

    Z = {part: (embed(rmodel, p3[part]), embed(rmodel, p4[part])) for part in SPLIT_LABELS}
    ranges = compute_ranges(np.vstack([Z["ratio"][0], Z["ratio"][1]]))

    gspec = cfg.mlp_spec("gamma", rmodel.repr_dim)
    gamma = fit_ratio(Z["ratio"][0], Z["ratio"][1], gspec, cfg.train["gamma"],
                      derive_seed(cfg.seed, repeat, "gamma"))

    gtspec = cfg.mlp_spec("gamma_tilde", rmodel.repr_dim)
    curves, aucs, tilde_models = {}, {}, {}
    for i, eta in enumerate(cfg.eta_values):
        noise = NoiseSpec.from_ranges(eta, ranges)
        gt = fit_smoothed_ratio(Z["smooth"][0], Z["smooth"][1], noise, gtspec,
                                cfg.train["gamma_tilde"],
                                derive_seed(cfg.seed, repeat, f"smooth{i}"),
                                redraw_per_epoch=cfg.redraw_per_epoch)
        scores = peak_score(gamma, gt, Z["eval"][1])
        meta = {"source": cfg.source, "eta": _flt(eta), "epsilon": _flt(cfg.epsilon),
                "n": cfg.n, "m": cfg.m, "seed": cfg.seed, "repeat": repeat,
                "n_eval_4b": len(scores)}
        curve = enrichment_curve(scores, p4["eval"].is_signal, cfg.q_grid(), metadata=meta)
        curves[eta] = curve
        aucs[eta] = curve_auc(curve)
        tilde_models[eta] = gt
    bundle = {"repr": rmodel, "gamma": gamma, "gamma_tilde": tilde_models,
              "ranges": ranges, "splits": (p3, p4)}
    return curves, aucs, bundle


@dataclass
class ExperimentReport:
    config: RunConfig
    curves: dict
    aggregated: dict
    aucs: dict
    errors: list
    complete: bool
    out_dir: Path | None = None

    def summary_lines(self) -> list:
        lines = []
        for eta in self.config.eta_values:
            vals = np.asarray(self.aucs.get(eta, []), dtype=float)
            if vals.size == 0:
                lines.append(f"eta={_flt(eta)} auc=unavailable")
                continue
            if vals.size > 1:
                spread = f"{vals.std(ddof=1):.6f}"
            else:
                spread = "n/a"
            lines.append(f"eta={_flt(eta)} auc_mean={vals.mean():.6f} "
                         f"auc_std={spread} repeats={vals.size}")
        if not self.complete:
            lines.append(f"incomplete: {len(self.errors)} failed stages")
        return lines


def _eta_label(eta: float) -> str:
    return format(eta, "g")


def _package_version() -> str:
    try:
        from importlib.metadata import version

        return version("srfilter")
    except Exception:
        return "unknown"


def write_manifest(path, cfg: RunConfig, extra: dict | None = None) -> None:
    """Sorted key = value lines; deliberately carries no timestamps."""
    entries = {f"config.{k}": v for k, v in config_to_mapping(cfg).items()}
    entries["package.version"] = _package_version()
    for r in range(cfg.repeats):
        for stage in ("data", "split3b", "split4b", "repr", "gamma"):
            entries[f"seed.r{r}.{stage}"] = str(derive_seed(cfg.seed, r, stage))
        for i in range(len(cfg.eta_values)):
            entries[f"seed.r{r}.smooth{i}"] = str(derive_seed(cfg.seed, r, f"smooth{i}"))
    for k, v in (extra or {}).items():
        entries[str(k)] = str(v)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(entries):
            fh.write(f"{key} = {entries[key]}\n")


def run_experiment(cfg: RunConfig, out_dir) -> ExperimentReport:
    """All repeats, all noise scales; persists curves, aggregates, manifest.

    A failing stage aborts only its repeat; the failure is recorded and the
    report (and manifest) flag the aggregation as incomplete.
    """
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    curves = {eta: [] for eta in cfg.eta_values}
    aucs = {eta: [] for eta in cfg.eta_values}
    errors = []
    for r in range(cfg.repeats):
        try:
            rep_curves, rep_aucs, _ = run_repeat(cfg, r)
        except Exception as exc:
            errors.append(f"repeat {r}: {exc}")
            continue
        for eta in cfg.eta_values:
            curves[eta].append(rep_curves[eta])
            aucs[eta].append(rep_aucs[eta])
            write_curve(out / f"curve_eta{_eta_label(eta)}_rep{r}.csv", rep_curves[eta])

    aggregated = {}
    for eta in cfg.eta_values:
        if curves[eta]:
            agg = aggregate_curves(curves[eta])
            agg.metadata["n_curves"] = agg.n_curves
            agg.metadata.pop("repeat", None)
            aggregated[eta] = agg
            write_curve(out / f"curve_eta{_eta_label(eta)}_mean.csv", agg)

    complete = not errors
    report = ExperimentReport(config=cfg, curves=curves, aggregated=aggregated,
                              aucs={e: list(v) for e, v in aucs.items()},
                              errors=errors, complete=complete, out_dir=out)
    write_manifest(out / "manifest.txt", cfg,
                   extra={"errors": len(errors), "complete": str(complete).lower()})
    with open(out / "summary.txt", "w", encoding="utf-8", newline="\n") as fh:
        for line in report.summary_lines():
            fh.write(line + "\n")
        for err in errors:
            fh.write(f"error: {err}\n")
    return report


# ---------------------------------------------------------------------------
# Oracle comparison metrics
# ---------------------------------------------------------------------------

_ORACLE_FN = {"gamma": exact_gamma, "gamma_tilde": exact_gamma_tilde, "score": exact_score}


def ratio_error_metrics(predict, setting, grid, target: str = "gamma") -> dict:
    """Relative-error summary of a fitted score field against the exact one."""
    grid = np.asarray(grid, dtype=float)
    truth = _ORACLE_FN[target](setting, grid)
    est = _eval_fn(predict, grid)
    rel = np.abs(est - truth) / np.abs(truth)
    return {
        "target": target,
        "grid_points": int(grid.size),
        "median_rel_err": float(np.median(rel)),
        "p90_rel_err": float(np.percentile(rel, 90)),
        "max_rel_err": float(np.max(rel)),
    }
