"""Shared domain types, configuration, and validation.

Everything downstream (the RANSAC stage, the EM refinement, field queries)
consumes the value types defined here. All of them are immutable after
construction; the arrays they hold are marked read-only so accidental
mutation fails loudly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]
BoolArray = NDArray[np.bool_]
IntArray = NDArray[np.int64]


class MatchFieldError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(MatchFieldError, ValueError):
    """A configuration value is out of its legal range."""


class DegenerateGeometryError(MatchFieldError):
    """Point geometry is too degenerate to determine a transform."""


class DegenerateScaleError(MatchFieldError):
    """Point clouds have zero spatial spread, no scale can be estimated."""


def make_rng(seed: int) -> np.random.Generator:
    """All randomness flows from generators built here, one per entry point.

    Identical seeds therefore replay identical control-point choices,
    sparse subsets, and synthetic scenes.
    """
    return np.random.default_rng(seed)


def _frozen_array(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MatchSet:
    """Paired point clouds, x[i] in the source frame matched to y[i] in the target.

    dim is 2 or 3 and both arrays are (n, dim) float64. Coordinates must be
    finite; n >= 1.
    """

    dim: int
    x: FloatArray
    y: FloatArray

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"x must be (n, {self.dim}), got {x.shape}")
        if y.shape != x.shape:
            raise ValueError(f"x and y shapes differ: {x.shape} vs {y.shape}")
        if x.shape[0] < 1:
            raise ValueError("need at least one match")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ValueError("coordinates must be finite")
        object.__setattr__(self, "x", _frozen_array(x))
        object.__setattr__(self, "y", _frozen_array(y))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @classmethod
    def from_points(cls, x, y) -> "MatchSet":
        x = np.asarray(x, dtype=np.float64)
        return cls(dim=int(x.shape[1]), x=x, y=y)


ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class RigidTransform:
    """A rotation R, translation t, and isotropic scale mu, mapping x to mu*(R x + t)."""

    R: FloatArray
    t: FloatArray
    mu: float

    def __post_init__(self) -> None:
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64)
        d = R.shape[0]
        if R.shape != (d, d) or d not in (2, 3):
            raise ValueError(f"R must be 2x2 or 3x3, got {R.shape}")
        if t.shape != (d,):
            raise ValueError(f"t must be ({d},), got {t.shape}")
        if not (np.isfinite(R).all() and np.isfinite(t).all()):
            raise ValueError("transform entries must be finite")
        if np.abs(R.T @ R - np.eye(d)).max() > ORTHONORMAL_TOL:
            raise ValueError("R is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("R must be a proper rotation (det +1)")
        mu = float(self.mu)
        if not (math.isfinite(mu) and mu > 0.0):
            raise ValueError(f"mu must be finite and positive, got {mu}")
        object.__setattr__(self, "R", _frozen_array(R))
        object.__setattr__(self, "t", _frozen_array(t))
        object.__setattr__(self, "mu", mu)

    @property
    def dim(self) -> int:
        return self.R.shape[0]

    def apply(self, pts: FloatArray) -> FloatArray:
        """Map points (..., dim) through mu*(R p + t)."""
        pts = np.asarray(pts, dtype=np.float64)
        return self.mu * (pts @ self.R.T + self.t)


@dataclass(frozen=True)
class LabelResult:
    """Per-match output labels: inlier flag, inlier posterior, field residual."""

    inlier: BoolArray
    posterior: FloatArray
    residual: FloatArray

    def __post_init__(self) -> None:
        inl = np.asarray(self.inlier, dtype=bool)
        post = np.asarray(self.posterior, dtype=np.float64)
        res = np.asarray(self.residual, dtype=np.float64)
        n = inl.shape[0]
        if inl.ndim != 1 or post.shape != (n,) or res.shape != (n,):
            raise ValueError("labels must be parallel 1-d arrays")
        if ((post < 0.0) | (post > 1.0)).any():
            raise ValueError("posteriors must lie in [0, 1]")
        if (res < 0.0).any() or np.isnan(res).any():
            raise ValueError("residuals must be non-negative")
        object.__setattr__(self, "inlier", _frozen_array(inl, dtype=bool))
        object.__setattr__(self, "posterior", _frozen_array(post))
        object.__setattr__(self, "residual", _frozen_array(res))

    @property
    def n(self) -> int:
        return self.inlier.shape[0]


@dataclass(frozen=True)
class Config:
    """Algorithm parameters. Defaults are the tuned 2D pixel-scale values.

    H                inlier residual threshold
    T_min            minimum support for a RANSAC hypothesis
    ransac_p         target confidence of the RANSAC stopping rule
    n_reweight_iters fit/re-weight alternations per trial
    r                neighborhood radius of the distance weights
    a                uniform outlier density of the mixture model
    p_min            posterior threshold for the final inlier label
    theta            EM termination threshold on mean posterior change
    N_neighbor       neighbors used for blending and field queries
    N_sparse         sample count for the sparse RANSAC variant (None: min(n, 200))
    max_em_iters     EM iteration cap
    seed             seed for every random draw in a run
    """

    H: float = 20.0
    T_min: int = 5
    ransac_p: float = 0.95
    n_reweight_iters: int = 3
    r: float = 50.0
    a: float = 1e-5
    p_min: float = 0.5
    theta: float = 0.005
    N_neighbor: int = 16
    N_sparse: int | None = None
    max_em_iters: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("H", "r", "a", "theta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ConfigError(f"{name} must be positive, got {v}")
        for name in ("ransac_p", "p_min"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.T_min < 1:
            raise ConfigError(f"T_min must be >= 1, got {self.T_min}")
        if self.n_reweight_iters < 1:
            raise ConfigError("n_reweight_iters must be >= 1")
        if self.N_neighbor < 1:
            raise ConfigError("N_neighbor must be >= 1")
        if self.N_sparse is not None and self.N_sparse < 1:
            raise ConfigError("N_sparse must be >= 1 or None")
        if self.max_em_iters < 1:
            raise ConfigError("max_em_iters must be >= 1")

    def adapted_for_scale(self, s: float) -> "Config":
        """Rescale the pixel-tuned thresholds to a cloud of spatial scale s.

        Used for 3D inputs where there is no pixel grid: H becomes 0.1 s,
        r becomes 0.3 s, the outlier density a becomes 20 / s, and the
        neighborhood grows to 50. Applied once, at config build time.
        """
        if not (math.isfinite(s) and s > 0.0):
            raise ConfigError(f"scale must be positive, got {s}")
        return replace(self, H=0.1 * s, r=0.3 * s, a=20.0 / s, N_neighbor=50)

    @classmethod
    def for_matches(cls, m: MatchSet, **overrides) -> "Config":
        """Default config for a match set, scale-adapted when the input is 3D."""
        cfg = cls()
        if m.dim == 3:
            cfg = cfg.adapted_for_scale(scale_estimate(m))
        if overrides:
            cfg = replace(cfg, **overrides)
        return cfg

    @classmethod
    def from_file(cls, path) -> "Config":
        return replace(cls(), **config_overrides_from_file(path))


_CONFIG_TYPES = {f.name: f.type for f in fields(Config)}


def config_overrides_from_file(path) -> dict:
    """Parse a key=value config file into a dict of Config field overrides.

    Blank lines and lines starting with # are skipped. Keys must be Config
    field names. N_sparse accepts the literal "none".
    """
    text = Path(path).read_text()
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            if key in ("T_min", "n_reweight_iters", "N_neighbor", "max_em_iters", "seed"):
                out[key] = int(val)
            elif key == "N_sparse":
                out[key] = None if val.lower() == "none" else int(val)
            else:
                out[key] = float(val)
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {val!r}") from e
    return out


def scale_estimate(m: MatchSet) -> float:
    """Root mean squared distance of both clouds from their centroids.

    s = sqrt((sum ||x_i - mean(x)||^2 + sum ||y_i - mean(y)||^2) / (2 n)).
    Translation invariant and homogeneous of degree one under scaling of
    both clouds. Raises DegenerateScaleError when both clouds collapse to
    single points.
    """
    if m.n < 2:
        raise ValueError("scale estimate needs at least two matches")
    xc = m.x - m.x.mean(axis=0)
    yc = m.y - m.y.mean(axis=0)
    s = math.sqrt((np.sum(xc * xc) + np.sum(yc * yc)) / (2.0 * m.n))
    tol = 1e-12 * max(1.0, float(np.abs(m.x).max()), float(np.abs(m.y).max()))
    if s <= tol:
        raise DegenerateScaleError("all points coincide, scale is undefined")
    return s
