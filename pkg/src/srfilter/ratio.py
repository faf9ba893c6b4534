"""Classifier-based density ratio estimation.

The ratio of 4b to 3b densities in a representation space is estimated by
training a binary classifier and converting its output probability s into
rho * s / (1 - s), where rho corrects for class imbalance in the training
sample. A smoothed variant trains on noise-smeared representations, which
estimates the ratio of kernel-convolved densities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nnet import (MLPParams, MLPSpec, TrainConfig, forward, read_mlp,
                   train, write_mlp)

DEFAULT_CLAMP = 1e-6

RANGE_PCT_LO = 0.5
RANGE_PCT_HI = 99.5


@dataclass(frozen=True)
class NoiseSpec:
    """Additive diagonal Gaussian noise, std = eta times each dimension's range."""

    eta: float
    per_dim_scale: np.ndarray

    def __post_init__(self):
        scale = np.atleast_1d(np.asarray(self.per_dim_scale, dtype=float))
        object.__setattr__(self, "per_dim_scale", scale)
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not np.all(scale > 0):
            raise ValueError("noise scales must all be positive")

    @classmethod
    def from_ranges(cls, eta: float, ranges) -> "NoiseSpec":
        return cls(eta=float(eta), per_dim_scale=float(eta) * np.asarray(ranges, dtype=float))

    @property
    def dim(self) -> int:
        return len(self.per_dim_scale)

    @property
    def kernel_variances(self) -> np.ndarray:
        return self.per_dim_scale**2


@dataclass
class RatioModel:
    spec: MLPSpec
    params: MLPParams
    prior_correction: float
    clamp_delta: float = DEFAULT_CLAMP
    kind: str = "plain"
    noise: NoiseSpec | None = None

    def __post_init__(self):
        if self.prior_correction <= 0:
            raise ValueError("prior correction must be positive")
        if not (0 < self.clamp_delta < 0.5):
            raise ValueError("clamp delta must lie in (0, 0.5)")
        if self.kind not in ("plain", "smoothed"):
            raise ValueError(f"unknown ratio kind {self.kind!r}")
        if self.kind == "smoothed" and self.noise is None:
            raise ValueError("smoothed ratio requires a NoiseSpec")


def compute_ranges(Z) -> np.ndarray:
    """Percentile-trimmed per-dimension ranges (0.5th to 99.5th).

    Computed over the pooled training representations; trimming keeps the
    noise scale robust to stray outliers.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise ValueError("need a matrix with at least two rows")
    lo, hi = np.percentile(Z, [RANGE_PCT_LO, RANGE_PCT_HI], axis=0)
    ranges = hi - lo
    if not np.all(ranges > 0):
        bad = np.flatnonzero(ranges <= 0)
        raise ValueError(f"degenerate (zero-range) representation dimensions: {bad.tolist()}")
    return ranges


def smear(Z, noise: NoiseSpec, seed) -> np.ndarray:
    """Add one independent Gaussian draw per entry, scaled per dimension."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape[1] != noise.dim:
        raise ValueError(f"representation dim {Z.shape[1]} mismatches noise dim {noise.dim}")
    rng = np.random.default_rng(seed)
    return Z + rng.standard_normal(Z.shape) * noise.per_dim_scale


def _stack_training(Z0, Z1):
    Z0 = np.asarray(Z0, dtype=float)
    Z1 = np.asarray(Z1, dtype=float)
    if len(Z0) == 0 or len(Z1) == 0:
        raise ValueError("both classes must be nonempty")
    X = np.vstack([Z0, Z1])
    y = np.concatenate([np.zeros(len(Z0)), np.ones(len(Z1))])
    return X, y


def fit_ratio(Z3b, Z4b, spec: MLPSpec, config: TrainConfig, seed) -> RatioModel:
    """Train a 3b-vs-4b classifier and wrap it as a plain ratio model.

    The seed is split the same way as in fit_smoothed_ratio (two noise
    streams plus a training stream), so the two fits agree in the
    zero-noise limit.
    """
    ss = np.random.SeedSequence(seed)
    _, _, s_train = ss.spawn(3)
    X, y = _stack_training(Z3b, Z4b)
    params, _ = train(spec, config, X, y, seed=s_train)
    rho = len(Z3b) / len(Z4b)
    return RatioModel(spec=spec, params=params, prior_correction=rho)


def fit_smoothed_ratio(Z3b, Z4b, noise: NoiseSpec, spec: MLPSpec, config: TrainConfig,
                       seed, redraw_per_epoch: bool = False) -> RatioModel:
    """Train the classifier on noise-smeared copies of both classes.

    Noise is drawn once per event before training, so the fit is a plain
    ratio fit on a fixed smeared dataset. With redraw_per_epoch the smearing
    is instead resampled at every epoch (a sensitivity-study mode; the
    default matches a single fixed smeared sample).
    """
    ss = np.random.SeedSequence(seed)
    s_noise3, s_noise4, s_train = ss.spawn(3)
    if redraw_per_epoch:
        X, y = _stack_training(Z3b, Z4b)
        scale = noise.per_dim_scale

        def redraw(rng, X_epoch):
            return X_epoch + rng.standard_normal(X_epoch.shape) * scale

        params, _ = train(spec, config, X, y, seed=s_train, epoch_transform=redraw)
    else:
        X, y = _stack_training(smear(Z3b, noise, s_noise3), smear(Z4b, noise, s_noise4))
        params, _ = train(spec, config, X, y, seed=s_train)
    rho = len(Z3b) / len(Z4b)
    return RatioModel(spec=spec, params=params, prior_correction=rho,
                      kind="smoothed", noise=noise)


def eval_ratio(model: RatioModel, z):
    """rho * s / (1 - s) with s clamped to [delta, 1 - delta]; always finite."""
    s = forward(model.params, z)
    d = model.clamp_delta
    s = np.clip(s, d, 1.0 - d)
    out = model.prior_correction * s / (1.0 - s)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Persistence: a small header block followed by the shared mlp format.
# ---------------------------------------------------------------------------


def write_ratio_model(fh_or_path, model: RatioModel) -> None:
    if hasattr(fh_or_path, "write"):
        _write_ratio(fh_or_path, model)
    else:
        with open(fh_or_path, "w", encoding="utf-8", newline="\n") as fh:
            _write_ratio(fh, model)


def _write_ratio(fh, model: RatioModel) -> None:
    fh.write("ratio v1\n")
    fh.write(f"kind = {model.kind}\n")
    fh.write(f"rho = {format(model.prior_correction, '.17g')}\n")
    fh.write(f"delta = {format(model.clamp_delta, '.17g')}\n")
    if model.kind == "smoothed":
        fh.write(f"eta = {format(model.noise.eta, '.17g')}\n")
        fh.write("scale = " + " ".join(format(v, ".17g") for v in model.noise.per_dim_scale) + "\n")
    write_mlp(fh, model.params)


def read_ratio_model(fh_or_path) -> RatioModel:
    if hasattr(fh_or_path, "readline"):
        return _read_ratio(fh_or_path)
    with open(fh_or_path, "r", encoding="utf-8") as fh:
        return _read_ratio(fh)


def _read_ratio(fh) -> RatioModel:
    magic = fh.readline().strip()
    if magic != "ratio v1":
        raise ValueError(f"not a ratio v1 model (got {magic!r})")
    fields = {}
    while True:
        line = fh.readline()
        if not line:
            raise ValueError("truncated ratio model file")
        line = line.strip()
        if line == "mlp v1":
            break
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    # the mlp reader expects its own magic line; rebuild a reader view
    spec, params = _read_mlp_after_magic(fh)
    kind = fields["kind"]
    noise = None
    if kind == "smoothed":
        noise = NoiseSpec(eta=float(fields["eta"]),
                          per_dim_scale=np.array([float(v) for v in fields["scale"].split()]))
    return RatioModel(spec=spec, params=params,
                      prior_correction=float(fields["rho"]),
                      clamp_delta=float(fields["delta"]),
                      kind=kind, noise=noise)


def _read_mlp_after_magic(fh):
    import io

    rest = fh.read()
    return read_mlp(io.StringIO("mlp v1\n" + rest))
