"""Event representations: symmetry canonicalization plus a learned embedding.

Known invariances (a global phi rotation and phi / eta reflections) are
removed by putting every event into a canonical frame before any learning.
The embedding itself is the penultimate layer of a 3b-vs-4b classifier; a
pass-through mode skips the classifier and uses the standardized canonical
features directly, which is how the 1-D studies avoid an embedding
confound.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .events import (N_FEATURES, N_JETS, Dataset, Event, wrap_angle)
from .nnet import (MLPParams, MLPSpec, TrainConfig, forward_activations,
                   read_mlp, train, write_mlp)

# The canonical frame pins the leading jet's phi to exactly 0, so that column
# is dropped from model inputs; 15 features stay active after
# canonicalization.
PINNED_PHI_COLUMN = 2
CANONICAL_COLUMNS = tuple(j for j in range(N_FEATURES) if j != PINNED_PHI_COLUMN)


def canonicalize_features(F) -> np.ndarray:
    """Vectorized canonical frame for (n, 16) jet feature rows.

    Jets are sorted by descending pt (stable), all phi are rotated so the
    leading jet sits at phi = 0, phi is reflected so the second jet has
    phi >= 0, and eta is reflected so the eta sum is nonnegative. Rows
    already canonical pass through bitwise unchanged.
    """
    F = np.asarray(F, dtype=float)
    squeeze = F.ndim == 1
    rows = np.atleast_2d(F)
    if rows.shape[1] != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} columns, got {rows.shape[1]}")
    jets = rows.reshape(len(rows), N_JETS, 4).copy()

    order = np.argsort(-jets[:, :, 0], axis=1, kind="stable")
    jets = np.take_along_axis(jets, order[:, :, None], axis=1)

    phi = jets[:, :, 2]
    phi = wrap_angle(phi - phi[:, 0:1])
    flip_phi = phi[:, 1] < 0
    phi[flip_phi] = wrap_angle(-phi[flip_phi])
    jets[:, :, 2] = phi

    eta = jets[:, :, 1]
    flip_eta = eta.sum(axis=1) < 0
    eta[flip_eta] = -eta[flip_eta]
    jets[:, :, 1] = eta

    out = jets.reshape(len(rows), N_FEATURES)
    return out[0] if squeeze else out


def canonicalize(e: Event) -> Event:
    return Event(canonicalize_features(e.features), e.tag, e.truth)


@dataclass
class ReprModel:
    """Fitted embedding: canonicalization rule, standardization, classifier.

    mode "classifier" embeds events as the classifier's penultimate-layer
    activations; mode "passthrough" embeds them as the standardized
    canonical features themselves.
    """

    mode: str
    canonicalization: str
    input_dim: int
    repr_dim: int
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    spec: MLPSpec | None = None
    params: MLPParams | None = None

    def __post_init__(self):
        if self.mode not in ("classifier", "passthrough"):
            raise ValueError(f"unknown representation mode {self.mode!r}")
        if self.canonicalization not in ("none", "full"):
            raise ValueError(f"unknown canonicalization {self.canonicalization!r}")
        self.feature_mean = np.asarray(self.feature_mean, dtype=float)
        self.feature_scale = np.asarray(self.feature_scale, dtype=float)
        if not np.all(self.feature_scale > 0):
            raise ValueError("standardization scales must be strictly positive")
        if self.mode == "classifier":
            if self.spec is None or self.params is None:
                raise ValueError("classifier mode requires a fitted network")
            if self.repr_dim != self.spec.repr_dim:
                raise ValueError("repr_dim must equal the last hidden layer width")
        elif self.repr_dim != self.input_dim:
            raise ValueError("pass-through repr_dim must equal the input dim")


def _raw_inputs(model_canon: str, data, input_dim: int) -> np.ndarray:
    if isinstance(data, Dataset):
        X = data.features if model_canon == "full" else data.active_features
    else:
        X = np.atleast_2d(np.asarray(data, dtype=float))
    if model_canon == "full":
        if X.shape[1] != N_FEATURES:
            raise ValueError(f"canonicalization needs all {N_FEATURES} features")
        X = canonicalize_features(X)[:, CANONICAL_COLUMNS]
    if X.shape[1] != input_dim:
        raise ValueError(f"input dim {X.shape[1]} mismatches fitted dim {input_dim}")
    return X


def _standardization(X: np.ndarray):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    if not np.all(scale > 0):
        bad = np.flatnonzero(scale == 0)
        raise ValueError(f"constant feature columns cannot be standardized: {bad.tolist()}")
    return mean, scale


def embedding_input_dim(dims: int) -> int:
    """Active feature count after the default canonicalization choice."""
    return len(CANONICAL_COLUMNS) if dims == N_FEATURES else dims


def _pooled_inputs(d3b: Dataset, d4b: Dataset, canonicalization):
    if len(d3b) == 0 or len(d4b) == 0:
        raise ValueError("both datasets must be nonempty")
    if d3b.dims != d4b.dims:
        raise ValueError("datasets disagree on active dimensions")
    if canonicalization is None:
        canonicalization = "full" if d3b.dims == N_FEATURES else "none"
    active = len(CANONICAL_COLUMNS) if canonicalization == "full" else d3b.dims
    X3 = _raw_inputs(canonicalization, d3b, active)
    X4 = _raw_inputs(canonicalization, d4b, active)
    return X3, X4, canonicalization


def fit_representation(d3b: Dataset, d4b: Dataset, spec: MLPSpec, config: TrainConfig,
                       seed, canonicalization: str | None = None) -> ReprModel:
    """Train the 3b-vs-4b embedding classifier on canonicalized features.

    canonicalization defaults to "full" for 16-feature data and "none"
    otherwise (the 1-D toys have no jet symmetries to remove).
    """
    X3, X4, canon = _pooled_inputs(d3b, d4b, canonicalization)
    X = np.vstack([X3, X4])
    mean, scale = _standardization(X)
    if spec.input_dim != X.shape[1]:
        raise ValueError(f"network input dim {spec.input_dim} mismatches data dim {X.shape[1]}")
    y = np.concatenate([np.zeros(len(X3)), np.ones(len(X4))])
    params, _ = train(spec, config, (X - mean) / scale, y, seed=seed)
    return ReprModel(mode="classifier", canonicalization=canon,
                     input_dim=X.shape[1], repr_dim=spec.repr_dim,
                     feature_mean=mean, feature_scale=scale,
                     spec=spec, params=params)


def fit_passthrough(d3b: Dataset, d4b: Dataset,
                    canonicalization: str | None = None) -> ReprModel:
    """Identity embedding up to canonicalization and standardization."""
    X3, X4, canon = _pooled_inputs(d3b, d4b, canonicalization)
    X = np.vstack([X3, X4])
    mean, scale = _standardization(X)
    return ReprModel(mode="passthrough", canonicalization=canon,
                     input_dim=X.shape[1], repr_dim=X.shape[1],
                     feature_mean=mean, feature_scale=scale)


def embed(model: ReprModel, data) -> np.ndarray:
    """Representation matrix, one row per event; deterministic given the model."""
    X = _raw_inputs(model.canonicalization, data, model.input_dim)
    Z = (X - model.feature_mean) / model.feature_scale
    if model.mode == "classifier":
        Z = forward_activations(model.params, Z)[-2]
    if len(Z) > 1 and np.all(np.ptp(Z, axis=0) == 0):
        warnings.warn("degenerate embedding: every event maps to the same point",
                      RuntimeWarning, stacklevel=2)
    return Z


# ---------------------------------------------------------------------------
# Persistence: header block (mode, canonicalization, standardization) and,
# for classifier models, the shared mlp format appended.
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_repr_model(fh_or_path, model: ReprModel) -> None:
    if hasattr(fh_or_path, "write"):
        _write_repr(fh_or_path, model)
    else:
        with open(fh_or_path, "w", encoding="utf-8", newline="\n") as fh:
            _write_repr(fh, model)


def _write_repr(fh, model: ReprModel) -> None:
    fh.write("repr v1\n")
    fh.write(f"mode = {model.mode}\n")
    fh.write(f"canonicalization = {model.canonicalization}\n")
    fh.write(f"input_dim = {model.input_dim}\n")
    fh.write(f"repr_dim = {model.repr_dim}\n")
    fh.write("mean = " + " ".join(_fmt(v) for v in model.feature_mean) + "\n")
    fh.write("scale = " + " ".join(_fmt(v) for v in model.feature_scale) + "\n")
    if model.mode == "classifier":
        write_mlp(fh, model.params)


def read_repr_model(fh_or_path) -> ReprModel:
    if hasattr(fh_or_path, "readline"):
        return _read_repr(fh_or_path)
    with open(fh_or_path, "r", encoding="utf-8") as fh:
        return _read_repr(fh)


def _read_repr(fh) -> ReprModel:
    magic = fh.readline().strip()
    if magic != "repr v1":
        raise ValueError(f"not a repr v1 model (got {magic!r})")
    fields = {}
    for _ in range(6):
        key, _, value = fh.readline().strip().partition("=")
        fields[key.strip()] = value.strip()
    mode = fields["mode"]
    spec = params = None
    if mode == "classifier":
        spec, params = read_mlp(fh)
    return ReprModel(mode=mode, canonicalization=fields["canonicalization"],
                     input_dim=int(fields["input_dim"]), repr_dim=int(fields["repr_dim"]),
                     feature_mean=np.array([float(v) for v in fields["mean"].split()]),
                     feature_scale=np.array([float(v) for v in fields["scale"].split()]),
                     spec=spec, params=params)


def write_repr_csv(fh_or_path, Z, event_ids=None) -> None:
    """CSV of representations: event_id,z1,...,zD."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if event_ids is None:
        event_ids = np.arange(len(Z))
    if hasattr(fh_or_path, "write"):
        _write_repr_csv(fh_or_path, Z, event_ids)
    else:
        with open(fh_or_path, "w", encoding="utf-8", newline="\n") as fh:
            _write_repr_csv(fh, Z, event_ids)


def _write_repr_csv(fh, Z, event_ids) -> None:
    dim = Z.shape[1]
    fh.write("event_id," + ",".join(f"z{j + 1}" for j in range(dim)) + "\n")
    for eid, row in zip(event_ids, Z):
        fh.write(str(int(eid)) + "," + ",".join(_fmt(v) for v in row) + "\n")


def read_repr_csv(fh_or_path) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(fh_or_path, "readline"):
        return _read_repr_csv(fh_or_path)
    with open(fh_or_path, "r", encoding="utf-8") as fh:
        return _read_repr_csv(fh)


def _read_repr_csv(fh) -> tuple[np.ndarray, np.ndarray]:
    header = fh.readline().strip().split(",")
    if not header or header[0] != "event_id":
        raise ValueError("representation CSV must start with an event_id column")
    ids, rows = [], []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        ids.append(int(parts[0]))
        rows.append([float(v) for v in parts[1:]])
    return np.array(ids, dtype=int), np.array(rows, dtype=float)
