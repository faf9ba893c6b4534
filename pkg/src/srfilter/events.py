"""Event data model, synthetic generators, splitting, and CSV persistence.

An event is a 4-jet collision record with 16 kinematic features, ordered
(pt, eta, phi, m) per jet. Events are tagged 3b or 4b; 4b events may carry
a signal/background truth label for evaluation on synthetic data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from math import log

import numpy as np

N_FEATURES = 16
N_JETS = 4
FEATURE_NAMES = tuple(
    f"{name}{jet + 1}" for jet in range(N_JETS) for name in ("pt", "eta", "phi", "m")
)

PT_COLUMNS = tuple(4 * j + 0 for j in range(N_JETS))
ETA_COLUMNS = tuple(4 * j + 1 for j in range(N_JETS))
PHI_COLUMNS = tuple(4 * j + 2 for j in range(N_JETS))
M_COLUMNS = tuple(4 * j + 3 for j in range(N_JETS))

TWO_PI = 2.0 * np.pi

# Built-in 1-D demo mixture: a shifted background pair with a narrow bump.
TOY_BG3B_MEAN = 1.0
TOY_BG3B_SIGMA = 4.0
TOY_BG4B_MEAN = -1.0
TOY_BG4B_SIGMA = 4.0
TOY_SIGNAL_MEAN = 7.0
TOY_SIGNAL_SIGMA = 0.5
TOY_KERNEL_SIGMA = 2.0


class Tag(Enum):
    THREE_B = "3b"
    FOUR_B = "4b"


class Truth(Enum):
    BACKGROUND = "bkg"
    SIGNAL = "sig"
    UNKNOWN = "na"


_TAGS = (Tag.THREE_B, Tag.FOUR_B)
_TRUTHS = (Truth.BACKGROUND, Truth.SIGNAL, Truth.UNKNOWN)


def wrap_angle(x):
    """Map angles into [-pi, pi). Values already in range pass through unchanged."""
    x = np.asarray(x, dtype=float)
    out_of_range = (x < -np.pi) | (x >= np.pi)
    if not np.any(out_of_range):
        return x
    wrapped = np.mod(x + np.pi, TWO_PI) - np.pi
    return np.where(out_of_range, wrapped, x)


def _wrap_single_turn(x):
    """Wrap values in (-2pi, 2pi) into [-pi, pi) without touching in-range entries."""
    out = np.where(x >= np.pi, x - TWO_PI, x)
    return np.where(out < -np.pi, out + TWO_PI, out)


@dataclass(frozen=True)
class Event:
    """One collision record: 16 features plus sample tag and truth label."""

    features: np.ndarray
    tag: Tag
    truth: Truth = Truth.UNKNOWN

    def validate(self, dims: int = N_FEATURES) -> None:
        """Raise ValueError naming the violated invariant, if any."""
        f = np.asarray(self.features, dtype=float)
        if f.shape != (N_FEATURES,):
            raise ValueError(f"features must have shape ({N_FEATURES},), got {f.shape}")
        if not np.all(np.isfinite(f[:dims])):
            raise ValueError("features must be finite")
        if self.truth is Truth.SIGNAL and self.tag is not Tag.FOUR_B:
            raise ValueError("truth=sig requires tag=4b")
        if dims == N_FEATURES:
            for j in range(N_JETS):
                pt, _, phi, m = f[4 * j : 4 * j + 4]
                if not pt > 0:
                    raise ValueError(f"pt{j + 1} must be > 0, got {pt}")
                if not m >= 0:
                    raise ValueError(f"m{j + 1} must be >= 0, got {m}")
                if not (-np.pi <= phi < np.pi):
                    raise ValueError(f"phi{j + 1} must lie in [-pi, pi), got {phi}")


@dataclass
class Dataset:
    """Array-backed ordered collection of events.

    `dims` records how many leading feature slots are active; the 1-D toy
    uses slot 0 only and downstream stages treat the data as 1-dimensional.
    """

    features: np.ndarray  # (N, 16) float64
    tags: np.ndarray  # (N,) uint8 indices into _TAGS
    truths: np.ndarray  # (N,) uint8 indices into _TRUTHS
    name: str = ""
    seed: int | None = None
    dims: int = N_FEATURES
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=float)
        self.tags = np.asarray(self.tags, dtype=np.uint8)
        self.truths = np.asarray(self.truths, dtype=np.uint8)
        n = self.features.shape[0]
        if self.features.ndim != 2 or self.features.shape[1] != N_FEATURES:
            raise ValueError(f"features must be (N, {N_FEATURES})")
        if self.tags.shape != (n,) or self.truths.shape != (n,):
            raise ValueError("tags/truths length must match features")

    def __len__(self) -> int:
        return self.features.shape[0]

    def event(self, i: int) -> Event:
        return Event(self.features[i].copy(), _TAGS[self.tags[i]], _TRUTHS[self.truths[i]])

    def __iter__(self):
        return (self.event(i) for i in range(len(self)))

    @property
    def events(self) -> list[Event]:
        return [self.event(i) for i in range(len(self))]

    @property
    def active_features(self) -> np.ndarray:
        return self.features[:, : self.dims]

    @property
    def n_3b(self) -> int:
        return int(np.sum(self.tags == 0))

    @property
    def n_4b(self) -> int:
        return int(np.sum(self.tags == 1))

    @property
    def n_signal(self) -> int:
        return int(np.sum(self.truths == 1))

    @property
    def is_signal(self) -> np.ndarray:
        return self.truths == 1

    def subset(self, indices: np.ndarray, name: str | None = None) -> "Dataset":
        return Dataset(
            self.features[indices],
            self.tags[indices],
            self.truths[indices],
            name=name if name is not None else self.name,
            seed=self.seed,
            dims=self.dims,
            metadata=dict(self.metadata),
        )

    @classmethod
    def from_events(cls, events, name: str = "", seed: int | None = None,
                    dims: int = N_FEATURES) -> "Dataset":
        feats = np.array([np.asarray(e.features, dtype=float) for e in events])
        if len(events) == 0:
            feats = np.zeros((0, N_FEATURES))
        tags = np.array([_TAGS.index(e.tag) for e in events], dtype=np.uint8)
        truths = np.array([_TRUTHS.index(e.truth) for e in events], dtype=np.uint8)
        return cls(feats, tags, truths, name=name, seed=seed, dims=dims)


@dataclass(frozen=True)
class MixtureSpec:
    """Weighted Gaussian mixture with diagonal covariance.

    weights: (k,); means: (k, d); variances: (k, d), all strictly positive.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @classmethod
    def from_components(cls, components) -> "MixtureSpec":
        """Build from [(weight, mean_vector, variance_vector), ...]; scalars allowed in 1-D."""
        ws, mus, vs = [], [], []
        for w, mu, var in components:
            ws.append(float(w))
            mus.append(np.atleast_1d(np.asarray(mu, dtype=float)))
            vs.append(np.atleast_1d(np.asarray(var, dtype=float)))
        spec = cls(np.asarray(ws), np.asarray(mus), np.asarray(vs))
        spec.validate()
        return spec

    def validate(self) -> None:
        if self.weights.ndim != 1 or len(self.weights) == 0:
            raise ValueError("mixture needs at least one component")
        if self.means.shape != self.variances.shape or self.means.shape[0] != len(self.weights):
            raise ValueError("component dimensions must all be equal")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 within 1e-12, got {np.sum(self.weights)!r}")
        if np.any(self.weights < 0) or np.any(self.weights > 1):
            raise ValueError("weights must lie in [0, 1]")
        if not np.all(self.variances > 0):
            raise ValueError("all variances must be strictly positive")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def variance(self) -> np.ndarray:
        """Per-dimension marginal variance of the mixture."""
        m = self.mean()
        second = self.weights @ (self.variances + self.means**2)
        return second - m**2


@dataclass(frozen=True)
class SplitSpec:
    """Named fractions for a deterministic partition; fractions sum to 1."""

    fractions: tuple  # of (label, fraction)

    def validate(self) -> None:
        if len(self.fractions) == 0:
            raise ValueError("split needs at least one part")
        total = sum(f for _, f in self.fractions)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"fractions must sum to 1 within 1e-12, got {total!r}")
        for label, f in self.fractions:
            if not (0 < f <= 1):
                raise ValueError(f"fraction for part {label!r} must lie in (0, 1], got {f}")


def sample_mixture(spec: MixtureSpec, count: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw `count` points; returns (points (count, d), component_index (count,)).

    Fully deterministic given the seed.
    """
    spec.validate()
    if count <= 0:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    comp = rng.choice(spec.n_components, size=count, p=spec.weights)
    z = rng.standard_normal((count, spec.dim))
    points = spec.means[comp] + np.sqrt(spec.variances[comp]) * z
    return points, comp


def toy1d_spec_3b() -> MixtureSpec:
    return MixtureSpec.from_components([(1.0, TOY_BG3B_MEAN, TOY_BG3B_SIGMA**2)])


def toy1d_spec_4b(epsilon: float) -> MixtureSpec:
    if not (0 <= epsilon < 1):
        raise ValueError("epsilon must lie in [0, 1)")
    if epsilon == 0:
        return MixtureSpec.from_components([(1.0, TOY_BG4B_MEAN, TOY_BG4B_SIGMA**2)])
    return MixtureSpec.from_components([
        (1.0 - epsilon, TOY_BG4B_MEAN, TOY_BG4B_SIGMA**2),
        (epsilon, TOY_SIGNAL_MEAN, TOY_SIGNAL_SIGMA**2),
    ])


def _scalar_dataset(values, tag: Tag, truths, name: str, seed) -> Dataset:
    n = len(values)
    feats = np.zeros((n, N_FEATURES))
    feats[:, 0] = values
    tags = np.full(n, _TAGS.index(tag), dtype=np.uint8)
    return Dataset(feats, tags, truths, name=name, seed=seed, dims=1)


def generate_toy1d(n: int, m: int, epsilon: float, seed) -> tuple[Dataset, Dataset]:
    """1-D synthetic pair: smooth shifted backgrounds plus a narrow 4b-only bump.

    The scalar lives in feature slot 0; the remaining 15 slots are zero and
    the datasets carry dims=1.
    """
    if n <= 0 or m <= 0:
        raise ValueError("n and m must be positive")
    s3, s4 = np.random.SeedSequence(seed).spawn(2)
    x3, _ = sample_mixture(toy1d_spec_3b(), n, s3)
    x4, comp4 = sample_mixture(toy1d_spec_4b(epsilon), m, s4)
    truths3 = np.zeros(n, dtype=np.uint8)
    truths4 = np.where(comp4 == 1, 1, 0).astype(np.uint8) if epsilon > 0 else np.zeros(m, dtype=np.uint8)
    d3b = _scalar_dataset(x3[:, 0], Tag.THREE_B, truths3, "toy1d-3b", seed)
    d4b = _scalar_dataset(x4[:, 0], Tag.FOUR_B, truths4, "toy1d-4b", seed)
    return d3b, d4b


def generate_toy1d_null(n: int, m: int, pseudo_signal_fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Null-calibration pair: both classes drawn from the same distribution.

    A random subset of 4b events is labeled signal so that enrichment curves
    remain measurable; the labels are independent of the features, so any
    selection should track the diagonal.
    """
    if not (0 <= pseudo_signal_fraction < 1):
        raise ValueError("pseudo_signal_fraction must lie in [0, 1)")
    s3, s4, sl = np.random.SeedSequence(seed).spawn(3)
    spec = toy1d_spec_3b()
    x3, _ = sample_mixture(spec, n, s3)
    x4, _ = sample_mixture(spec, m, s4)
    truths3 = np.zeros(n, dtype=np.uint8)
    labels = np.random.default_rng(sl).random(m) < pseudo_signal_fraction
    truths4 = labels.astype(np.uint8)
    d3b = _scalar_dataset(x3[:, 0], Tag.THREE_B, truths3, "null1d-3b", seed)
    d4b = _scalar_dataset(x4[:, 0], Tag.FOUR_B, truths4, "null1d-4b", seed)
    return d3b, d4b


@dataclass(frozen=True)
class PhysicsParams:
    """Closed-form 16-D generator: log-normal pt/m, Gaussian eta, uniform phi.

    The 3b and background-4b densities differ only through the smooth
    per-feature shifts below, so their exact ratio has no localized peak.
    Signal events add a Gaussian blob in (pt1, m1..m4); the blob widths are
    roughly half the corresponding background feature spreads, which puts
    the blob scale near 0.1 x the percentile range used for noise scaling.
    """

    pt_log_mean: tuple = (log(120.0), log(80.0), log(55.0), log(40.0))
    pt_log_sigma: float = 0.30
    pt_log_shift_4b: tuple = (0.0, 0.18, 0.12, 0.06)
    eta_sigma_3b: float = 1.10
    eta_sigma_4b: float = 1.25
    m_log_mean: tuple = (log(20.0), log(16.0), log(13.0), log(11.0))
    m_log_sigma: float = 0.35
    m_log_shift_4b: tuple = (0.0, 0.0, 0.0, 0.0)
    signal_pt_mean: float = 120.0
    signal_pt_sigma: float = 18.0
    signal_m_mean: tuple = (20.0, 16.0, 13.0, 11.0)
    signal_m_sigma: tuple = (3.6, 2.9, 2.4, 2.0)

    @property
    def blob_columns(self) -> tuple:
        """Feature columns carrying the signal blob: pt1 and the four masses."""
        return (0,) + M_COLUMNS

    @property
    def blob_center(self) -> np.ndarray:
        return np.array([self.signal_pt_mean, *self.signal_m_mean])

    @property
    def blob_width(self) -> np.ndarray:
        return np.array([self.signal_pt_sigma, *self.signal_m_sigma])

    def _log_density(self, x: np.ndarray, shifted: bool) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        eta_sigma = self.eta_sigma_4b if shifted else self.eta_sigma_3b
        for j in range(N_JETS):
            pt, eta, phi, m = (x[:, 4 * j + k] for k in range(4))
            mu_pt = self.pt_log_mean[j] + (self.pt_log_shift_4b[j] if shifted else 0.0)
            mu_m = self.m_log_mean[j] + (self.m_log_shift_4b[j] if shifted else 0.0)
            out += _lognormal_logpdf(pt, mu_pt, self.pt_log_sigma)
            out += _normal_logpdf(eta, 0.0, eta_sigma)
            out += np.where((phi >= -np.pi) & (phi < np.pi), -np.log(TWO_PI), -np.inf)
            out += _lognormal_logpdf(m, mu_m, self.m_log_sigma)
        return out

    def log_density_3b(self, x) -> np.ndarray:
        return self._log_density(x, shifted=False)

    def log_density_4b_background(self, x) -> np.ndarray:
        return self._log_density(x, shifted=True)

    def log_ratio_background(self, x) -> np.ndarray:
        """Exact log of the background 4b-to-3b density ratio."""
        return self.log_density_4b_background(x) - self.log_density_3b(x)


def _normal_logpdf(x, mu, sigma):
    return -0.5 * ((x - mu) / sigma) ** 2 - np.log(sigma) - 0.5 * np.log(TWO_PI)


def _lognormal_logpdf(x, log_mu, log_sigma):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lx = np.log(x)
        val = -0.5 * ((lx - log_mu) / log_sigma) ** 2 - lx - np.log(log_sigma) - 0.5 * np.log(TWO_PI)
    return np.where(x > 0, val, -np.inf)


def _truncated_normal(rng, count, mean, sigma, low, counter):
    """Resample draws below `low` until all pass; counter tracks total redraws."""
    x = rng.normal(mean, sigma, count)
    bad = x < low
    while np.any(bad):
        counter[0] += int(np.sum(bad))
        x[bad] = rng.normal(mean, sigma, int(np.sum(bad)))
        bad = x < low
    return x


def _sample_physics_background(rng, count, params: PhysicsParams, shifted: bool) -> np.ndarray:
    feats = np.empty((count, N_FEATURES))
    eta_sigma = params.eta_sigma_4b if shifted else params.eta_sigma_3b
    for j in range(N_JETS):
        mu_pt = params.pt_log_mean[j] + (params.pt_log_shift_4b[j] if shifted else 0.0)
        mu_m = params.m_log_mean[j] + (params.m_log_shift_4b[j] if shifted else 0.0)
        feats[:, 4 * j + 0] = np.exp(rng.normal(mu_pt, params.pt_log_sigma, count))
        feats[:, 4 * j + 1] = rng.normal(0.0, eta_sigma, count)
        feats[:, 4 * j + 2] = rng.uniform(-np.pi, np.pi, count)
        feats[:, 4 * j + 3] = np.exp(rng.normal(mu_m, params.m_log_sigma, count))
    return feats


def generate_physics_like(n: int, m: int, epsilon: float,
                          params: PhysicsParams | None = None, seed=0) -> tuple[Dataset, Dataset]:
    """16-D synthetic pair with smoothly differing backgrounds and a localized signal.

    Signal events replace pt1 and the four masses with truncated-Gaussian blob
    draws; all other features follow the background-4b distribution. A redraw
    rate above 1% is recorded as a warning in the 4b dataset metadata.
    """
    if params is None:
        params = PhysicsParams()
    if n <= 0 or m <= 0:
        raise ValueError("n and m must be positive")
    if not (0 <= epsilon < 1):
        raise ValueError("epsilon must lie in [0, 1)")
    s3, s4, ssig = np.random.SeedSequence(seed).spawn(3)

    f3 = _sample_physics_background(np.random.default_rng(s3), n, params, shifted=False)
    d3b = Dataset(f3, np.zeros(n, dtype=np.uint8), np.zeros(n, dtype=np.uint8),
                  name="physics-3b", seed=seed)

    rng4 = np.random.default_rng(s4)
    n_sig = int(np.sum(rng4.random(m) < epsilon)) if epsilon > 0 else 0
    n_bkg = m - n_sig
    f_bkg = _sample_physics_background(rng4, n_bkg, params, shifted=True)

    redraws = [0]
    n_blob_draws = 0
    if n_sig > 0:
        rng_s = np.random.default_rng(ssig)
        f_sig = _sample_physics_background(rng_s, n_sig, params, shifted=True)
        f_sig[:, 0] = _truncated_normal(rng_s, n_sig, params.signal_pt_mean,
                                        params.signal_pt_sigma, 0.0, redraws)
        for j in range(N_JETS):
            f_sig[:, M_COLUMNS[j]] = _truncated_normal(
                rng_s, n_sig, params.signal_m_mean[j], params.signal_m_sigma[j], 0.0, redraws)
        n_blob_draws = n_sig * (1 + N_JETS)
        f4 = np.vstack([f_bkg, f_sig])
        truths4 = np.concatenate([np.zeros(n_bkg, dtype=np.uint8), np.ones(n_sig, dtype=np.uint8)])
    else:
        f4 = f_bkg
        truths4 = np.zeros(m, dtype=np.uint8)

    d4b = Dataset(f4, np.ones(m, dtype=np.uint8), truths4, name="physics-4b", seed=seed)
    if n_blob_draws > 0:
        rate = redraws[0] / n_blob_draws
        d4b.metadata["truncation_redraw_rate"] = rate
        if rate > 0.01:
            d4b.metadata["warning"] = (
                f"truncation resampling rate {rate:.3f} exceeds 1%; "
                "blob parameters sit too close to a physical boundary")
    return d3b, d4b


def split(ds: Dataset, spec: SplitSpec, seed) -> list[Dataset]:
    """Deterministic disjoint partition; remainder rows go to the last part."""
    spec.validate()
    n = len(ds)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = [int(np.floor(f * n + 1e-9)) for _, f in spec.fractions]
    sizes[-1] += n - sum(sizes)
    parts = []
    start = 0
    for (label, _), size in zip(spec.fractions, sizes):
        idx = perm[start : start + size]
        parts.append(ds.subset(idx, name=f"{ds.name}/{label}" if ds.name else label))
        start += size
    return parts


# ---------------------------------------------------------------------------
# CSV persistence
#
# Header: event_id,pt1,eta1,phi1,m1,...,pt4,eta4,phi4,m4,tag,truth
# tag in {3b,4b}; truth in {bkg,sig,na}; floats carry 17 significant digits
# so that read(write(ds)) is bit-exact. Datasets with dims < 16 are marked
# with a leading "# dims=<k>" comment line; field invariants are enforced on
# full 16-D records only.
# ---------------------------------------------------------------------------

_HEADER = "event_id," + ",".join(FEATURE_NAMES) + ",tag,truth"
_TAG_BY_NAME = {t.value: i for i, t in enumerate(_TAGS)}
_TRUTH_BY_NAME = {t.value: i for i, t in enumerate(_TRUTHS)}


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_events(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if ds.dims != N_FEATURES:
            fh.write(f"# dims={ds.dims}\n")
        fh.write(_HEADER + "\n")
        for i in range(len(ds)):
            row = [str(i)]
            row.extend(_fmt(v) for v in ds.features[i])
            row.append(_TAGS[ds.tags[i]].value)
            row.append(_TRUTHS[ds.truths[i]].value)
            fh.write(",".join(row) + "\n")


def _parse_error(path, lineno, message):
    return ValueError(f"{path}:{lineno}: {message}")


def read_events(path, name: str | None = None) -> Dataset:
    feats, tags, truths = [], [], []
    dims = N_FEATURES
    with open(path, "r", encoding="utf-8") as fh:
        lineno = 0
        header_seen = False
        for line in fh:
            lineno += 1
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                stripped = line[1:].strip()
                if stripped.startswith("dims="):
                    dims = int(stripped[5:])
                continue
            if not header_seen:
                if line != _HEADER:
                    raise _parse_error(path, lineno, "unexpected header")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 1 + N_FEATURES + 2:
                raise _parse_error(path, lineno, f"expected {1 + N_FEATURES + 2} fields, got {len(parts)}")
            try:
                vals = np.array([float(v) for v in parts[1 : 1 + N_FEATURES]])
            except ValueError as exc:
                raise _parse_error(path, lineno, f"bad float: {exc}") from None
            tag_name, truth_name = parts[-2], parts[-1]
            if tag_name not in _TAG_BY_NAME:
                raise _parse_error(path, lineno, f"unknown tag {tag_name!r}")
            if truth_name not in _TRUTH_BY_NAME:
                raise _parse_error(path, lineno, f"unknown truth {truth_name!r}")
            ev = Event(vals, _TAGS[_TAG_BY_NAME[tag_name]], _TRUTHS[_TRUTH_BY_NAME[truth_name]])
            try:
                ev.validate(dims=dims)
            except ValueError as exc:
                raise _parse_error(path, lineno, str(exc)) from None
            feats.append(vals)
            tags.append(_TAG_BY_NAME[tag_name])
            truths.append(_TRUTH_BY_NAME[truth_name])
    if not header_seen:
        raise _parse_error(path, 1, "missing header")
    n = len(feats)
    features = np.array(feats) if n else np.zeros((0, N_FEATURES))
    return Dataset(features, np.array(tags, dtype=np.uint8), np.array(truths, dtype=np.uint8),
                   name=name if name is not None else str(path), dims=dims)
