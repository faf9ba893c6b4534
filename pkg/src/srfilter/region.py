"""Signal-region calibration and enrichment curves.

The signal region is the superlevel set of the peak score gamma/gamma_tilde
at a threshold tau_s calibrated so that a target fraction q of held-out 4b
events fall inside. Enrichment curves trace, over a grid of q values, the
realized 4b fraction against the fraction of true signal events captured.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ratio import RatioModel, eval_ratio

Q_GRID_MIN = 0.005
Q_GRID_POINTS = 50


@dataclass(frozen=True)
class SignalRegion:
    """Calibrated threshold on the peak score; membership is score >= tau_s."""

    tau_s: float
    target_q: float
    calibration_count: int

    def __post_init__(self):
        if not np.isfinite(self.tau_s):
            raise ValueError("tau_s must be finite")
        if not (0 < self.target_q <= 1):
            raise ValueError("target_q must lie in (0, 1]")


@dataclass
class EnrichmentCurve:
    """Per-q points (threshold, realized 4b fraction, captured signal fraction)."""

    q: np.ndarray
    tau: np.ndarray
    p4b_in_sr: np.ndarray
    s_in_sr: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        self.p4b_in_sr = np.asarray(self.p4b_in_sr, dtype=float)
        self.s_in_sr = np.asarray(self.s_in_sr, dtype=float)
        n = len(self.q)
        if not (len(self.tau) == len(self.p4b_in_sr) == len(self.s_in_sr) == n):
            raise ValueError("curve columns must have equal length")
        if n > 1 and np.any(np.diff(self.q) <= 0):
            raise ValueError("q grid must be strictly increasing")

    @property
    def n_points(self) -> int:
        return len(self.q)


@dataclass
class AggregatedCurve:
    """Pointwise mean and sample spread over repeated experiments."""

    q: np.ndarray
    tau: np.ndarray
    p4b_in_sr: np.ndarray
    s_in_sr: np.ndarray
    p4b_std: np.ndarray
    s_std: np.ndarray
    n_curves: int
    metadata: dict = field(default_factory=dict)


def default_q_grid() -> np.ndarray:
    """50 geometrically spaced target fractions in [0.005, 1]."""
    return np.geomspace(Q_GRID_MIN, 1.0, Q_GRID_POINTS)


def peak_score(gamma: RatioModel, gamma_tilde: RatioModel, z):
    """Ratio of the plain to the smoothed density-ratio estimate."""
    if gamma.spec.input_dim != gamma_tilde.spec.input_dim:
        raise ValueError("the two ratio models act on different representation spaces")
    return eval_ratio(gamma, z) / eval_ratio(gamma_tilde, z)


def calibrate_threshold(scores_4b_holdout, q: float) -> SignalRegion:
    """Threshold at the ceil(q*N)-th largest held-out score.

    With membership score >= tau_s this puts exactly ceil(q*N) of the N
    calibration events inside (more only under ties), so the realized 4b
    fraction is the smallest achievable value that is >= q.
    """
    scores = np.asarray(scores_4b_holdout, dtype=float)
    if scores.size == 0:
        raise ValueError("cannot calibrate on an empty score sample")
    if not (0 < q <= 1):
        raise ValueError("q must lie in (0, 1]")
    n = scores.size
    k = int(math.ceil(q * n - 1e-9))
    k = min(max(k, 1), n)
    tau = np.partition(scores, n - k)[n - k]
    return SignalRegion(tau_s=float(tau), target_q=float(q), calibration_count=n)


def in_sr(region: SignalRegion, score):
    """Membership decision; works elementwise on arrays."""
    return np.asarray(score, dtype=float) >= region.tau_s


def enrichment_curve(scores_4b, truth_is_signal, q_grid=None, metadata=None) -> EnrichmentCurve:
    """Calibrate at every q on the given 4b scores and measure both fractions.

    truth_is_signal is a boolean array aligned with scores_4b. When the
    sample contains no signal events the captured fraction is reported as
    nan rather than zero.
    """
    scores = np.asarray(scores_4b, dtype=float)
    sig = np.asarray(truth_is_signal, dtype=bool)
    if scores.shape != sig.shape:
        raise ValueError("scores and truth labels must align")
    if q_grid is None:
        q_grid = default_q_grid()
    q_grid = np.asarray(q_grid, dtype=float)
    n_sig = int(sig.sum())

    taus = np.empty(len(q_grid))
    p4b = np.empty(len(q_grid))
    s_in = np.empty(len(q_grid))
    for i, q in enumerate(q_grid):
        region = calibrate_threshold(scores, q)
        member = in_sr(region, scores)
        taus[i] = region.tau_s
        p4b[i] = member.mean()
        s_in[i] = member[sig].mean() if n_sig > 0 else np.nan
    return EnrichmentCurve(q=q_grid, tau=taus, p4b_in_sr=p4b, s_in_sr=s_in,
                           metadata=dict(metadata or {}))


def curve_auc(curve) -> float:
    """Trapezoidal area under s_in_sr versus p4b_in_sr, anchored at (0,0) and (1,1)."""
    x = np.concatenate([[0.0], np.asarray(curve.p4b_in_sr, dtype=float), [1.0]])
    y = np.concatenate([[0.0], np.asarray(curve.s_in_sr, dtype=float), [1.0]])
    order = np.argsort(x, kind="stable")
    return float(np.trapezoid(y[order], x[order]))


def aggregate_curves(curves) -> AggregatedCurve:
    """Pointwise mean and sample standard deviation across repeats."""
    if len(curves) == 0:
        raise ValueError("need at least one curve")
    q = curves[0].q
    for c in curves[1:]:
        if len(c.q) != len(q) or not np.array_equal(c.q, q):
            raise ValueError("curves were built on different q grids")
    p = np.stack([c.p4b_in_sr for c in curves])
    s = np.stack([c.s_in_sr for c in curves])
    t = np.stack([c.tau for c in curves])
    n = len(curves)
    if n > 1:
        p_std = p.std(axis=0, ddof=1)
        s_std = s.std(axis=0, ddof=1)
    else:
        p_std = np.full(len(q), np.nan)
        s_std = np.full(len(q), np.nan)
    return AggregatedCurve(q=q.copy(), tau=t.mean(axis=0),
                           p4b_in_sr=p.mean(axis=0), s_in_sr=s.mean(axis=0),
                           p4b_std=p_std, s_std=s_std, n_curves=n,
                           metadata=dict(curves[0].metadata))


# ---------------------------------------------------------------------------
# Curve files: one '#' metadata line, then a CSV with a fixed column set.
# ---------------------------------------------------------------------------

_PLAIN_COLS = "q,tau,p4b_in_sr,s_in_sr"
_AGG_COLS = _PLAIN_COLS + ",s_std,p_std"


def _meta_line(metadata: dict) -> str:
    parts = [f"{k}={metadata[k]}" for k in sorted(metadata)]
    return "# " + " ".join(parts) if parts else "#"


def _parse_meta(line: str) -> dict:
    meta = {}
    for part in line.lstrip("#").split():
        key, _, value = part.partition("=")
        if key:
            meta[key] = value
    return meta


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_curve(fh_or_path, curve) -> None:
    if hasattr(fh_or_path, "write"):
        _write_curve(fh_or_path, curve)
    else:
        with open(fh_or_path, "w", encoding="utf-8", newline="\n") as fh:
            _write_curve(fh, curve)


def _write_curve(fh, curve) -> None:
    aggregated = isinstance(curve, AggregatedCurve)
    fh.write(_meta_line(curve.metadata) + "\n")
    fh.write((_AGG_COLS if aggregated else _PLAIN_COLS) + "\n")
    for i in range(len(curve.q)):
        row = [curve.q[i], curve.tau[i], curve.p4b_in_sr[i], curve.s_in_sr[i]]
        if aggregated:
            row += [curve.s_std[i], curve.p4b_std[i]]
        fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_curve(fh_or_path):
    if hasattr(fh_or_path, "readline"):
        return _read_curve(fh_or_path)
    with open(fh_or_path, "r", encoding="utf-8") as fh:
        return _read_curve(fh)


def _read_curve(fh):
    first = fh.readline()
    if not first.startswith("#"):
        raise ValueError("curve file must start with a '#' metadata line")
    meta = _parse_meta(first.strip())
    header = fh.readline().strip()
    if header == _PLAIN_COLS:
        aggregated = False
    elif header == _AGG_COLS:
        aggregated = True
    else:
        raise ValueError(f"unrecognized curve header {header!r}")
    rows = []
    for line in fh:
        line = line.strip()
        if line:
            rows.append([float(v) for v in line.split(",")])
    data = np.array(rows, dtype=float)
    if data.size == 0:
        raise ValueError("curve file has no data rows")
    if aggregated:
        n_curves = int(meta.get("n_curves", "0")) or 0
        return AggregatedCurve(q=data[:, 0], tau=data[:, 1], p4b_in_sr=data[:, 2],
                               s_in_sr=data[:, 3], s_std=data[:, 4], p4b_std=data[:, 5],
                               n_curves=n_curves, metadata=meta)
    return EnrichmentCurve(q=data[:, 0], tau=data[:, 1], p4b_in_sr=data[:, 2],
                           s_in_sr=data[:, 3], metadata=meta)
