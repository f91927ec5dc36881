"""Re-weighted one-point RANSAC over locally rigid scaled motions.

Classic RANSAC needs a minimal sample per model (three pairs for a 2D
similarity), so its trial count explodes at high outlier ratios. Here a
single control match o seeds each trial: relative to o the model
y_i - y_o = mu R (x_i - x_o) is fit to all matches at once, and a few
fit/re-weight rounds with weights w_i = min(H / d_i, 1) let the nearby
consistent matches take the fit over. Each accepted hypothesis reserves its
inliers so later trials hunt for other locally rigid motions, which yields a
multi-hypothesis cover of a non-rigid scene.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Config,
    DegenerateGeometryError,
    FloatArray,
    IntArray,
    LabelResult,
    MatchSet,
    RigidTransform,
    make_rng,
)

# relative singular value below which the weighted cross matrix is treated
# as rank deficient (points collinear through the control, or collapsed)
RANK_TOL = 1e-9

# safety cap on trials regardless of the confidence bound
MAX_TRIALS_FACTOR = 10


@dataclass(frozen=True)
class TransformHypothesis:
    """One locally rigid motion found by a trial.

    control is the index of the match the trial grew from, inliers are all
    matches within H of the motion, support is their count (the T_o score).
    """

    control: int
    transform: RigidTransform
    inliers: IntArray
    support: int


@dataclass(frozen=True)
class RansacOutcome:
    """All accepted hypotheses plus the union of their inlier sets.

    gamma is |inlier_union| / n. gamma_history records gamma after each
    trial; it is non-decreasing because the union only grows.
    """

    hypotheses: tuple[TransformHypothesis, ...]
    inlier_union: IntArray
    gamma: float
    trials: int
    gamma_history: tuple[float, ...]


def trial_bound(n: int, gamma: float, t_min: int, p: float) -> float:
    """Trial count needed for confidence p that no findable motion remains.

    A remaining motion must have at least T_min of the n (1 - gamma)
    unreserved matches, so a uniformly drawn control hits one with
    probability at least T_min / (n - gamma n) per trial; the bound is
    log(1 - p) / log(1 - T_min / (n - gamma n)). Caller must ensure
    n (1 - gamma) > t_min.
    """
    remaining = n * (1.0 - gamma)
    return math.log(1.0 - p) / math.log(1.0 - t_min / remaining)


def _fit_rotation_scale(xr: FloatArray, yr: FloatArray, w: FloatArray):
    """Weighted rotation and scale between relative coordinate sets.

    Scales each relative pair by its weight, takes R = U V^T from the SVD of
    the weighted cross matrix (with the last column of V negated when the
    determinant comes out negative), and mu as the ratio of the stacked
    weighted norms.
    """
    Xw = xr * w[:, None]
    Yw = yr * w[:, None]
    M = Yw.T @ Xw
    if not np.isfinite(M).all():
        raise DegenerateGeometryError("non-finite weighted cross matrix")
    U, S, Vt = np.linalg.svd(M)
    if S[0] <= 0.0 or S[-1] <= RANK_TOL * S[0]:
        raise DegenerateGeometryError("weighted points are collinear through the control")
    if np.linalg.det(U) * np.linalg.det(Vt) < 0.0:
        U = U.copy()
        U[:, -1] = -U[:, -1]
    R = U @ Vt
    nx = float(np.linalg.norm(Xw))
    ny = float(np.linalg.norm(Yw))
    if nx == 0.0 or ny == 0.0:
        raise DegenerateGeometryError("weighted points collapse onto the control")
    return R, ny / nx


def weighted_rigid_fit(m: MatchSet, o: int, w: FloatArray):
    """Fit (R, mu) of y - y_o = mu R (x - x_o) under per-match weights.

    Returns the rotation matrix and scale. Weights must be non-negative
    with a positive sum. Raises DegenerateGeometryError when the weighted
    geometry cannot pin down a rotation.
    """
    if m.n < 2:
        raise ValueError("need at least two matches")
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (m.n,) or (w < 0.0).any() or not (w > 0.0).any():
        raise ValueError("weights must be non-negative with a positive sum")
    return _fit_rotation_scale(m.x - m.x[o], m.y - m.y[o], w)


def reweight_fit(m: MatchSet, o: int, cfg: Config, rows: IntArray | None = None):
    """Alternate rigid fits and residual re-weighting around control o.

    Starts from uniform weights; after each fit the weights become
    w_i = min(H / d_i, 1) with d_i the residual of match i (weight 1 at zero
    residual), so matches the current fit explains keep full influence and
    distant ones fade as 1 / d. When rows is given, fitting and re-weighting
    only see that subset while the returned residuals still cover every
    match.

    Returns (RigidTransform, d, w): the motion in y = mu (R x + t) form
    with t recovered as y_o / mu - R x_o, residuals d over all matches
    under the final fit, and the final subset weights.
    """
    xr_all = m.x - m.x[o]
    yr_all = m.y - m.y[o]
    if rows is None:
        xr, yr = xr_all, yr_all
    else:
        xr, yr = xr_all[rows], yr_all[rows]
    w = np.ones(xr.shape[0])
    for _ in range(cfg.n_reweight_iters):
        R, mu = _fit_rotation_scale(xr, yr, w)
        d = np.linalg.norm(yr - mu * (xr @ R.T), axis=1)
        with np.errstate(divide="ignore"):
            w = np.where(d > 0.0, np.minimum(cfg.H / d, 1.0), 1.0)
    t = m.y[o] / mu - R @ m.x[o]
    rt = RigidTransform(R=R, t=t, mu=mu)
    if rows is None:
        d_all = d
    else:
        d_all = np.linalg.norm(yr_all - mu * (xr_all @ R.T), axis=1)
    return rt, d_all, w


def _run(m: MatchSet, cfg: Config, rows: IntArray | None) -> RansacOutcome:
    n = m.n
    if n < cfg.T_min:
        raise DegenerateGeometryError(
            f"{n} matches cannot support a hypothesis with T_min={cfg.T_min}"
        )
    rng = make_rng(cfg.seed)
    inlier_mask = np.zeros(n, dtype=bool)
    tried = np.zeros(n, dtype=bool)
    hyps: list[TransformHypothesis] = []
    gamma_history: list[float] = []
    k = 0
    max_trials = MAX_TRIALS_FACTOR * n
    while k < max_trials:
        n_in = int(inlier_mask.sum())
        gamma = n_in / n
        # all three stopping rules use the current gamma
        if n - n_in <= cfg.T_min:
            break
        candidates = np.nonzero(~inlier_mask & ~tried)[0]
        if candidates.size == 0:
            break
        if k > trial_bound(n, gamma, cfg.T_min, cfg.ransac_p):
            break
        o = int(rng.choice(candidates))
        tried[o] = True
        k += 1
        try:
            rt, d, _ = reweight_fit(m, o, cfg, rows=rows)
        except DegenerateGeometryError:
            gamma_history.append(gamma)
            continue
        inl = np.nonzero(d < cfg.H)[0]
        if inl.size >= cfg.T_min:
            hyps.append(
                TransformHypothesis(
                    control=o, transform=rt, inliers=inl.astype(np.int64), support=int(inl.size)
                )
            )
            inlier_mask[inl] = True
        gamma_history.append(float(inlier_mask.sum()) / n)
    union = np.nonzero(inlier_mask)[0].astype(np.int64)
    return RansacOutcome(
        hypotheses=tuple(hyps),
        inlier_union=union,
        gamma=union.size / n,
        trials=k,
        gamma_history=tuple(gamma_history),
    )


def ransac_run(m: MatchSet, cfg: Config) -> RansacOutcome:
    """Extract locally rigid motions until the confidence bound is met.

    Controls are drawn uniformly from matches that no accepted hypothesis
    covers yet, and each control is tried at most once (a trial is
    deterministic in the control, so retrying one is pointless). A trial's
    motion is kept when at least T_min matches fall within H of it. The run
    stops when fewer than T_min + 1 matches remain unreserved, when no
    untried control is left, or when the trial count exceeds the confidence
    bound, re-evaluated with the current gamma before every trial.

    With nothing but outliers the outcome is empty: no hypotheses and
    gamma = 0.
    """
    return _run(m, cfg, rows=None)


def ransac_run_sparse(m: MatchSet, cfg: Config) -> RansacOutcome:
    """ransac_run with fitting restricted to a fixed random subset.

    The re-weighted fits see only N_sparse sampled matches (default
    min(n, 200)), while the inlier test d_i < H still covers every match,
    so hypothesis supports stay comparable to the dense run. With
    N_sparse >= n this is exactly ransac_run, same draws included.
    """
    n_sparse = cfg.N_sparse if cfg.N_sparse is not None else min(m.n, 200)
    if n_sparse >= m.n:
        return _run(m, cfg, rows=None)
    rng = make_rng(cfg.seed)
    rows = np.sort(rng.choice(m.n, size=n_sparse, replace=False)).astype(np.int64)
    # reuse the control rng stream after the subset draw; the run itself
    # re-seeds, keeping control choices deterministic per seed
    return _run(m, cfg, rows=rows)


def labels_from_outcome(m: MatchSet, outcome: RansacOutcome, cfg: Config) -> LabelResult:
    """Hard labels straight from the RANSAC cover, for baselines and reports.

    A match is an inlier iff some hypothesis covers it. Posterior is 1 or 0;
    residual is the distance to the prediction of the covering hypothesis
    with the largest support (infinity for uncovered matches with no
    hypotheses at all).
    """
    n = m.n
    inlier = np.zeros(n, dtype=bool)
    best = np.zeros(n, dtype=np.int64)
    residual = np.full(n, np.inf)
    min_d = np.full(n, np.inf)
    for h in outcome.hypotheses:
        d = np.linalg.norm(m.y - h.transform.apply(m.x), axis=1)
        min_d = np.minimum(min_d, d)
        take = np.zeros(n, dtype=bool)
        take[h.inliers] = True
        take &= h.support > best
        residual[take] = d[take]
        best[take] = h.support
        inlier[h.inliers] = True
    # uncovered matches report their best distance to any found motion
    residual = np.where(inlier, residual, min_d)
    posterior = inlier.astype(np.float64)
    return LabelResult(inlier=inlier, posterior=posterior, residual=residual)
