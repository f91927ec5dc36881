"""EM refinement of match labels over a blended deformation field.

The RANSAC stage leaves a set of locally rigid motions, each explaining a
patch of matches. This module melts them into one smooth field: every match
carries its own scaled motion g_i = (q_i, mu_i), the field at a match is the
distance-weighted blend of its neighbors' motions, and an EM loop alternates
between re-estimating the field (M-step) and re-scoring how likely each
match is to be an inlier under a Gaussian-plus-uniform mixture (E-step).
Outliers lose influence through their posterior, so the field they would
drag along snaps to the consensus of their surroundings instead.

State is kept in flat arrays: qs holds one unit dual quaternion per match
as a row of 8 (planar runs only touch 4 of the columns and use the compact
kernels), mus and p are per-match scale and posterior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import (
    BoolArray,
    Config,
    FloatArray,
    IntArray,
    LabelResult,
    MatchSet,
)
from .dualquat import (
    PLANAR_COLS,
    ScaledDq,
    UnitDualQuaternion,
    dq4_apply,
    dq4_blend,
    dq4_to8,
    dq4_translate_after,
    dq8_apply,
    dq8_blend,
    dq8_from_rt,
    dq8_identity,
    dq8_translate_after,
)
from .ransac import RansacOutcome

# running floor on sigma, as a fraction of H; keeps the Gaussian likelihood
# finite when the field explains every inlier almost exactly
SIGMA_FLOOR_FACTOR = 1e-3
# floor on the initial sigma estimated from the seeding residuals
SIGMA_INIT_FLOOR_FACTOR = 0.1
# the inlier fraction prior is clamped here and then held fixed
GAMMA_MIN = 0.05
GAMMA_MAX = 0.95


@dataclass(frozen=True)
class NeighborGraph:
    """Immutable k-nearest-neighbor structure over the source points.

    idx is (n, k) with column 0 the match itself; w_dist holds the pairwise
    distance weights max(exp(-|y_i - y_j|^2 / 2 r^2), exp(-|x_i - x_j|^2 / 2 r^2)),
    so a pair close on either side of the correspondence couples strongly.
    """

    idx: IntArray
    w_dist: FloatArray


@dataclass
class EmState:
    """Mutable EM iteration state.

    Steps read the previous arrays and assign fresh ones (double-buffered),
    so a state is never observed half-updated. p starts as the raw support
    counts of the seeding hypotheses and becomes a proper posterior
    in [0, 1] after the first e_step. field_at_x caches f(x_i).
    """

    dim: int
    qs: FloatArray
    mus: FloatArray
    p: FloatArray
    sigma: float
    gamma: float
    graph: NeighborGraph
    field_at_x: FloatArray
    isolated: BoolArray
    converged: bool = False
    n_iters: int = 0
    delta_history: list = field(default_factory=list)

    def scaled_dq(self, i: int) -> ScaledDq:
        return ScaledDq(UnitDualQuaternion.from_array(self.qs[i]), float(self.mus[i]))


def _embed3(pts: FloatArray) -> FloatArray:
    if pts.shape[-1] == 3:
        return pts
    return np.concatenate([pts, np.zeros(pts.shape[:-1] + (1,))], axis=-1)


def build_neighbors(m: MatchSet, cfg: Config) -> NeighborGraph:
    """k-nearest neighbors by source-side distance, self in column 0.

    Uses N_neighbor neighbors plus the match itself; with n <= N_neighbor
    every other match is a neighbor. The graph is built once and never
    changes during EM.
    """
    n = m.n
    k_other = min(cfg.N_neighbor, n - 1)
    if n == 1:
        idx = np.zeros((1, 1), dtype=np.int64)
    else:
        tree = cKDTree(m.x)
        _, idx = tree.query(m.x, k=k_other + 1)
        idx = idx.astype(np.int64)
        # the kd-tree breaks distance ties arbitrarily; force self into
        # column 0 so blending always sees the match's own motion
        self_col = np.arange(n, dtype=np.int64)
        wrong = np.nonzero(idx[:, 0] != self_col)[0]
        for i in wrong:
            row = idx[i]
            hits = np.nonzero(row == i)[0]
            if hits.size:
                row[hits[0]] = row[0]
            row[0] = i
    dx2 = np.sum((m.x[idx] - m.x[:, None, :]) ** 2, axis=-1)
    dy2 = np.sum((m.y[idx] - m.y[:, None, :]) ** 2, axis=-1)
    w_dist = np.exp(-np.minimum(dx2, dy2) / (2.0 * cfg.r * cfg.r))
    return NeighborGraph(idx=idx, w_dist=w_dist)


def init_from_hypotheses(
    m: MatchSet, outcome: RansacOutcome, cfg: Config, graph: NeighborGraph | None = None
) -> EmState:
    """Seed per-match motions from the RANSAC cover.

    Each covered match adopts the motion of its largest-support covering
    hypothesis and that support count as its (unnormalized) starting weight.
    Uncovered matches start at the identity with scale 1 and weight 0, so
    they pull no blend until the first E-step scores them. sigma starts at
    the RMS seeding residual of covered matches, floored at H / 10; the
    inlier prior gamma is the RANSAC cover fraction clamped to
    [0.05, 0.95] and stays fixed for the whole EM run.

    An empty outcome is legal and yields the all-identity, all-zero-weight,
    gamma = 0.05 state.
    """
    if graph is None:
        graph = build_neighbors(m, cfg)
    n = m.n
    qs = dq8_identity(n)
    mus = np.ones(n)
    p = np.zeros(n)
    best = np.zeros(n, dtype=np.int64)
    for h in outcome.hypotheses:
        take = h.inliers[h.support > best[h.inliers]]
        if take.size == 0:
            continue
        qs[take] = dq8_from_rt(h.transform.R, h.transform.t)
        mus[take] = h.transform.mu
        p[take] = float(h.support)
        best[take] = h.support
    covered = best > 0
    field_at_x = dq8_apply(qs, mus, _embed3(m.x))[:, : m.dim]
    resid = np.linalg.norm(m.y - field_at_x, axis=1)
    floor = SIGMA_INIT_FLOOR_FACTOR * cfg.H
    if covered.any():
        sigma = max(float(np.sqrt(np.mean(resid[covered] ** 2))), floor)
    else:
        sigma = floor
    gamma = float(np.clip(outcome.gamma, GAMMA_MIN, GAMMA_MAX))
    return EmState(
        dim=m.dim,
        qs=qs,
        mus=mus,
        p=p,
        sigma=sigma,
        gamma=gamma,
        graph=graph,
        field_at_x=field_at_x,
        isolated=~covered & (p <= 0.0),
    )


def m_step(
    state: EmState,
    m: MatchSet,
    cfg: Config,
    use_planar: bool | None = None,
    update_sigma: bool = True,
) -> FloatArray:
    """Re-estimate the field, the noise level, and the per-match motions.

    For every match the neighbor motions are blended with weights
    w_j = w_dist[i][j] * p_j, giving the smoothed motion (q_bar_i, mu_bar_i)
    and the field value f(x_i). sigma^2 becomes the posterior-weighted mean
    squared field residual (floored). Each blended motion is then nudged by
    the pure translation (y_i - f(x_i)) / mu_bar_i so the stored g_i maps
    x_i exactly onto y_i again; smoothness of the field lives in the blend,
    exactness of the per-match motions in this correction.

    update_sigma=False skips the noise re-estimate; the very first blend
    runs that way because its weights are still raw support counts, not
    posteriors, and the seed-residual sigma must survive until the first
    posterior pass has scored the matches.

    Matches whose neighbor weights vanish entirely keep their previous
    motion and are flagged isolated. Returns the new field values.
    """
    if use_planar is None:
        use_planar = state.dim == 2
    idx = state.graph.idx
    wt = state.graph.w_dist * state.p[idx]
    wsum = wt.sum(axis=1)
    active = wsum > 0.0
    wsum_safe = np.where(active, wsum, 1.0)

    mubar = np.where(active, (wt * state.mus[idx]).sum(axis=1) / wsum_safe, state.mus)

    # inactive rows produce 0/0 inside the blend; they are overwritten with
    # the previous motion right after, so silence the transient warnings
    with np.errstate(invalid="ignore", divide="ignore"):
        if use_planar:
            q4 = state.qs[:, PLANAR_COLS]
            qbar4 = dq4_blend(wt, q4[idx])
            qbar4 = np.where(active[:, None], qbar4, q4)
            f = dq4_apply(qbar4, mubar, m.x)
            delta = (m.y - f) / mubar[:, None]
            q_new4 = dq4_translate_after(qbar4, delta)
            q_new = dq4_to8(np.where(active[:, None], q_new4, q4))
        else:
            x3 = _embed3(m.x)
            qbar = dq8_blend(wt, state.qs[idx])
            qbar = np.where(active[:, None], qbar, state.qs)
            f = dq8_apply(qbar, mubar, x3)[:, : state.dim]
            delta = np.zeros((m.n, 3))
            delta[:, : state.dim] = (m.y - f) / mubar[:, None]
            q_new = dq8_translate_after(qbar, delta)
            q_new = np.where(active[:, None], q_new, state.qs)

    resid2 = np.sum((m.y - f) ** 2, axis=1)
    floor = SIGMA_FLOOR_FACTOR * cfg.H
    if update_sigma:
        psum = float(state.p.sum())
        if psum > 0.0:
            sigma = max(float(np.sqrt(np.dot(state.p, resid2) / psum)), floor)
        else:
            sigma = max(state.sigma, floor)
    else:
        sigma = max(state.sigma, floor)

    state.qs = q_new
    state.mus = np.where(active, mubar, state.mus)
    state.sigma = sigma
    state.field_at_x = f
    state.isolated = ~active
    return f


def e_step(state: EmState, m: MatchSet, cfg: Config) -> FloatArray:
    """Posterior inlier probabilities under the current field.

    Each match is scored by the Gaussian likelihood of its field residual,
    G_i = exp(-|y_i - f(x_i)|^2 / 2 sigma^2), against a uniform outlier
    density a, mixed by the fixed inlier prior gamma:
    p_i = G_i / (G_i + 2 pi sigma^2 a (1 - gamma) / gamma). Returns the
    posteriors, which always lie in [0, 1].
    """
    resid2 = np.sum((m.y - state.field_at_x) ** 2, axis=1)
    s2 = state.sigma * state.sigma
    G = np.exp(-resid2 / (2.0 * s2))
    c = 2.0 * np.pi * s2 * cfg.a * (1.0 - state.gamma) / state.gamma
    p = G / (G + c)
    state.p = p
    return p


def run_em(m: MatchSet, outcome: RansacOutcome, cfg: Config) -> tuple[LabelResult, EmState]:
    """Full EM loop from a RANSAC outcome to final labels.

    The M-step runs first so the seeded motions are blended into an actual
    field before any posterior is computed; that opening blend keeps the
    seed-residual sigma (support counts are not posteriors yet) so the first
    posterior pass can still tell field-consistent matches from strays.
    Iterations stop when the mean absolute posterior change drops below
    theta, or at max_em_iters with the converged flag left false. A match
    ends up an inlier when its final posterior exceeds p_min and its field
    residual stays below H.
    """
    graph = build_neighbors(m, cfg)
    state = init_from_hypotheses(m, outcome, cfg, graph=graph)
    p_prev: FloatArray | None = None
    for it in range(1, cfg.max_em_iters + 1):
        m_step(state, m, cfg, update_sigma=it > 1)
        p = e_step(state, m, cfg)
        state.n_iters = it
        if p_prev is not None:
            delta = float(np.mean(np.abs(p - p_prev)))
            state.delta_history.append(delta)
            if delta < cfg.theta:
                state.converged = True
                break
        p_prev = p
    residual = np.linalg.norm(m.y - state.field_at_x, axis=1)
    inlier = (state.p > cfg.p_min) & (residual < cfg.H)
    labels = LabelResult(inlier=inlier, posterior=state.p, residual=residual)
    return labels, state


def filter_and_refine(
    m: MatchSet, cfg: Config, sparse: bool = False
) -> tuple[LabelResult, EmState, RansacOutcome]:
    """Convenience pipeline: RANSAC cover, then EM refinement."""
    from .ransac import ransac_run, ransac_run_sparse

    outcome = ransac_run_sparse(m, cfg) if sparse else ransac_run(m, cfg)
    labels, state = run_em(m, outcome, cfg)
    return labels, state, outcome
