"""Match file and label I/O, scoring metrics, and synthetic ground truth.

File formats are plain CSV with one-line headers:

* match files: header "dim,n,units", then n rows of
  x1,..,xD,y1,..,yD with an optional trailing 0/1 ground-truth column;
* label files: header "index,inlier,posterior,residual".

Floats are written with repr, which round-trips float64 exactly, so saving
and loading is lossless and byte-deterministic.

The synthetic generator builds scenes with known labels: inlier targets
follow a smooth non-rigid field obtained by blending a few anchored rigid
motions, outlier targets are uniform over the bounds. It is the ground
truth oracle for the evaluation suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import BoolArray, LabelResult, MatchFieldError, MatchSet, make_rng
from .dualquat import dq8_apply, dq8_blend, dq8_from_rt, quat_to_matrix


class MatchFileError(MatchFieldError):
    """Base class for match/label file parse errors."""


class DimensionMismatchError(MatchFileError):
    """Row width or declared dimension does not match what was expected."""


class NonNumericRowError(MatchFileError):
    """A data field failed to parse as a number."""


class TruncatedFileError(MatchFileError):
    """The file ends before the declared number of rows (or has extras)."""


def _fmt(v: float) -> str:
    return repr(float(v))


def save_matches(path, m: MatchSet, gt: BoolArray | None = None, units: str = "units") -> None:
    """Write a match file, appending the ground-truth column when given."""
    if gt is not None:
        gt = np.asarray(gt, dtype=bool)
        if gt.shape != (m.n,):
            raise ValueError("gt must be one flag per match")
    lines = [f"{m.dim},{m.n},{units}"]
    for i in range(m.n):
        vals = [_fmt(v) for v in m.x[i]] + [_fmt(v) for v in m.y[i]]
        if gt is not None:
            vals.append("1" if gt[i] else "0")
        lines.append(",".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")


def load_matches(path) -> tuple[MatchSet, BoolArray | None]:
    """Read a match file back into a MatchSet and its optional labels.

    Raises DimensionMismatchError for a bad declared dimension or wrong row
    widths, NonNumericRowError for unparseable fields, TruncatedFileError
    when the row count disagrees with the header.
    """
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TruncatedFileError(f"{path}: empty file")
    head = lines[0].split(",")
    if len(head) != 3:
        raise MatchFileError(f"{path}: header must be dim,n,units, got {lines[0]!r}")
    try:
        dim = int(head[0])
        n = int(head[1])
    except ValueError as e:
        raise NonNumericRowError(f"{path}: non-numeric header counts {lines[0]!r}") from e
    if dim not in (2, 3):
        raise DimensionMismatchError(f"{path}: dim must be 2 or 3, got {dim}")
    if len(lines) - 1 != n:
        raise TruncatedFileError(f"{path}: header declares {n} rows, found {len(lines) - 1}")
    width = 2 * dim
    has_gt: bool | None = None
    x = np.empty((n, dim))
    y = np.empty((n, dim))
    gt = np.empty(n, dtype=bool)
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        if has_gt is None:
            if len(parts) == width + 1:
                has_gt = True
            elif len(parts) == width:
                has_gt = False
        if len(parts) != width + (1 if has_gt else 0):
            raise DimensionMismatchError(
                f"{path}: row {i + 1} has {len(parts)} fields, expected "
                f"{width + (1 if has_gt else 0)} for dim={dim}"
            )
        try:
            vals = [float(v) for v in parts[:width]]
        except ValueError as e:
            raise NonNumericRowError(f"{path}: row {i + 1}: {e}") from e
        if not all(math.isfinite(v) for v in vals):
            raise NonNumericRowError(f"{path}: row {i + 1}: non-finite coordinate")
        x[i] = vals[:dim]
        y[i] = vals[dim:]
        if has_gt:
            flag = parts[width].strip()
            if flag not in ("0", "1"):
                raise NonNumericRowError(f"{path}: row {i + 1}: gt flag must be 0 or 1")
            gt[i] = flag == "1"
    return MatchSet(dim=dim, x=x, y=y), (gt if has_gt else None)


def save_labels(path, labels: LabelResult) -> None:
    lines = ["index,inlier,posterior,residual"]
    for i in range(labels.n):
        lines.append(
            f"{i},{1 if labels.inlier[i] else 0},{_fmt(labels.posterior[i])},"
            f"{_fmt(labels.residual[i])}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_labels(path) -> LabelResult:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "index,inlier,posterior,residual":
        raise MatchFileError(f"{path}: missing label header")
    n = len(lines) - 1
    inlier = np.zeros(n, dtype=bool)
    post = np.zeros(n)
    resid = np.zeros(n)
    for row, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != 4:
            raise DimensionMismatchError(f"{path}: row {row + 1} has {len(parts)} fields")
        try:
            i = int(parts[0])
            inlier[row] = {"0": False, "1": True}[parts[1]]
            post[row] = float(parts[2])
            resid[row] = float(parts[3])
        except (ValueError, KeyError) as e:
            raise NonNumericRowError(f"{path}: row {row + 1}: {e}") from e
        if i != row:
            raise MatchFileError(f"{path}: rows out of order at {row + 1}")
    return LabelResult(inlier=inlier, posterior=post, residual=resid)


@dataclass(frozen=True)
class Metrics:
    """Label agreement scores against ground truth.

    n_errors is the Hamming distance between label vectors. recall_defined
    is false when the ground truth has no positives at all; recall is then
    reported as 0. fscore is the harmonic mean of recall and precision, 0
    when both vanish.
    """

    n_errors: int
    recall: float
    precision: float
    fscore: float
    recall_defined: bool = True


def compute_metrics(pred, gt) -> Metrics:
    """Score predicted inlier labels against ground-truth flags.

    pred may be a LabelResult or a boolean array. Invariant to permuting
    matches (counts only).
    """
    pred_arr = np.asarray(pred.inlier if isinstance(pred, LabelResult) else pred, dtype=bool)
    gt_arr = np.asarray(gt, dtype=bool)
    if pred_arr.shape != gt_arr.shape or pred_arr.ndim != 1:
        raise ValueError("prediction and ground truth must be equal-length 1-d")
    tp = int(np.sum(pred_arr & gt_arr))
    fp = int(np.sum(pred_arr & ~gt_arr))
    fn = int(np.sum(~pred_arr & gt_arr))
    n_errors = fp + fn
    recall_defined = bool(gt_arr.any())
    recall = tp / (tp + fn) if recall_defined else 0.0
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    fscore = 2.0 * recall * precision / (recall + precision) if (recall + precision) > 0 else 0.0
    return Metrics(
        n_errors=n_errors,
        recall=recall,
        precision=precision,
        fscore=fscore,
        recall_defined=recall_defined,
    )


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic scene.

    n matches of dimension dim inside bounds (mins, maxs). A fraction
    outlier_ratio gets uniform random targets; the rest follow a smooth
    field blended from n_anchors rigid motions, each a rotation of at most
    max_rotation radians about its anchor, a scale within
    1 +- max_scale_jitter, and a bounded translation, plus isotropic
    Gaussian noise of noise_sigma. Everything is a pure function of seed.
    """

    n: int = 1000
    dim: int = 2
    outlier_ratio: float = 0.5
    n_anchors: int = 3
    max_rotation: float = 0.4
    max_scale_jitter: float = 0.1
    noise_sigma: float = 2.0
    bounds: tuple = ((0.0, 0.0), (800.0, 600.0))
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not (0.0 <= self.outlier_ratio < 1.0):
            raise ValueError("outlier_ratio must lie in [0, 1)")
        if self.n_anchors < 1:
            raise ValueError("n_anchors must be >= 1")
        if not (0.0 <= self.max_scale_jitter < 1.0):
            raise ValueError("max_scale_jitter must lie in [0, 1)")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be non-negative")
        mins = np.asarray(self.bounds[0], dtype=np.float64)
        maxs = np.asarray(self.bounds[1], dtype=np.float64)
        if mins.shape != (self.dim,) or maxs.shape != (self.dim,):
            raise ValueError(f"bounds must be two {self.dim}-vectors")
        if not (maxs > mins).all():
            raise ValueError("bounds must have positive extent on every axis")


def _anchor_rotation(rng: np.random.Generator, dim: int, max_rotation: float):
    angle = rng.uniform(-max_rotation, max_rotation)
    if dim == 2:
        c, s = math.cos(angle), math.sin(angle)
        return np.array([[c, -s], [s, c]])
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    half = 0.5 * angle
    q = np.concatenate([[math.cos(half)], math.sin(half) * axis])
    return quat_to_matrix(q)


def synth_generate(spec: SynthSpec) -> tuple[MatchSet, BoolArray]:
    """Generate a scene with known labels.

    Anchored motions rotate and scale about their anchor point and add a
    translation of at most 0.25 * max_rotation of the extent per axis (a
    tenth of the extent at the 0.4 rad default), so a single knob scales
    the deformation strength. Inlier targets blend the anchor motions with
    Gaussian distance weights of radius half the largest extent, which
    keeps the ground-truth field smooth but genuinely non-rigid once two
    anchors disagree.
    """
    rng = make_rng(spec.seed)
    mins = np.asarray(spec.bounds[0], dtype=np.float64)
    maxs = np.asarray(spec.bounds[1], dtype=np.float64)
    extent = maxs - mins
    x = rng.uniform(mins, maxs, size=(spec.n, spec.dim))

    n_out = int(round(spec.outlier_ratio * spec.n))
    gt = np.zeros(spec.n, dtype=bool)
    gt[: spec.n - n_out] = True
    rng.shuffle(gt)

    centers = mins + extent * rng.uniform(0.15, 0.85, size=(spec.n_anchors, spec.dim))
    dqs = np.zeros((spec.n_anchors, 8))
    mus = np.zeros(spec.n_anchors)
    for a in range(spec.n_anchors):
        R = _anchor_rotation(rng, spec.dim, spec.max_rotation)
        mu = 1.0 + rng.uniform(-spec.max_scale_jitter, spec.max_scale_jitter)
        tau_frac = 0.25 * spec.max_rotation
        tau = rng.uniform(-tau_frac, tau_frac, size=spec.dim) * extent
        # rotate and scale about the anchor: y = mu R (x - c) + c + tau,
        # rewritten as mu (R x + t)
        t = (centers[a] + tau) / mu - R @ centers[a]
        dqs[a] = dq8_from_rt(R, t)
        mus[a] = mu

    y = np.empty_like(x)
    inl = np.nonzero(gt)[0]
    out = np.nonzero(~gt)[0]
    if inl.size:
        radius = 0.5 * float(extent.max())
        d2 = np.sum((x[inl, None, :] - centers[None, :, :]) ** 2, axis=-1)
        w = np.exp(-d2 / (2.0 * radius * radius))
        qbar = dq8_blend(w, np.broadcast_to(dqs, (inl.size, spec.n_anchors, 8)))
        mubar = (w * mus).sum(axis=1) / w.sum(axis=1)
        x3 = x[inl] if spec.dim == 3 else np.concatenate([x[inl], np.zeros((inl.size, 1))], axis=1)
        y[inl] = dq8_apply(qbar, mubar, x3)[:, : spec.dim]
        if spec.noise_sigma > 0.0:
            y[inl] += rng.normal(0.0, spec.noise_sigma, size=(inl.size, spec.dim))
    if out.size:
        y[out] = rng.uniform(mins, maxs, size=(out.size, spec.dim))
    return MatchSet(dim=spec.dim, x=x, y=y), gt
