import numpy as np
import pytest

from matchfield.core import Config, LabelResult, MatchSet, make_rng
from matchfield.em_refine import filter_and_refine, run_em
from matchfield.field import grid_axes, grid_field, query_field, render_scene_svg, write_field_csv
from matchfield.io_eval import SynthSpec, synth_generate
from matchfield.ransac import RansacOutcome


def rigid_pipeline(seed=1, n=120):
    rng = make_rng(seed)
    ang = 0.4
    R = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    t = np.array([12.0, -7.0])
    mu = 1.1
    x = rng.uniform(0.0, 500.0, size=(n, 2))
    y = mu * (x @ R.T + t)
    m = MatchSet.from_points(x, y)
    cfg = Config(seed=seed)
    labels, state, out = filter_and_refine(m, cfg)
    return m, cfg, labels, state, R, t, mu


def test_query_at_match_points_reproduces_targets():
    m, cfg, labels, state, R, t, mu = rigid_pipeline()
    samples = query_field(state, labels, m, m.x, cfg)
    assert all(s.valid for s in samples)
    got = np.stack([s.displaced for s in samples])
    assert np.abs(got - m.y).max() < 1e-6


def test_grid_matches_matrix_oracle_on_rigid_scene():
    m, cfg, labels, state, R, t, mu = rigid_pipeline()
    grid = grid_field(state, labels, m, (np.array([50.0, 50.0]), np.array([450.0, 450.0])), 100.0, cfg)
    for s in grid.samples:
        assert s.valid
        want = mu * (R @ s.query + t)
        assert np.abs(s.displaced - want).max() < 1e-6


def test_grid_axes_lattice_sizes():
    axes = grid_axes((np.zeros(2), np.array([800.0, 600.0])), 50.0, 2)
    assert len(axes[0]) == 17
    assert len(axes[1]) == 13
    assert axes[0][0] == 0.0 and axes[0][-1] == 800.0
    # a step beyond the extent leaves one sample at the minimum
    axes = grid_axes((np.zeros(2), np.array([10.0, 10.0])), 100.0, 2)
    assert len(axes[0]) == 1 and axes[0][0] == 0.0


def test_grid_axes_rejects_bad_bounds():
    with pytest.raises(ValueError):
        grid_axes((np.array([10.0, 0.0]), np.array([0.0, 10.0])), 5.0, 2)
    with pytest.raises(ValueError):
        grid_axes((np.zeros(2), np.ones(2)), 0.0, 2)
    with pytest.raises(ValueError):
        grid_axes((np.zeros(3), np.ones(3)), 1.0, 2)


def test_far_query_is_invalid_and_unmoved():
    m, cfg, labels, state, R, t, mu = rigid_pipeline()
    far = np.array([[1e6, 1e6]])
    s = query_field(state, labels, m, far, cfg)[0]
    assert not s.valid
    assert s.support < 0.01
    assert np.allclose(s.displaced, far[0])


def test_valid_tracks_support_threshold():
    m, cfg, labels, state, R, t, mu = rigid_pipeline()
    rng = make_rng(9)
    pts = np.vstack(
        [rng.uniform(0.0, 500.0, size=(20, 2)), rng.uniform(5e3, 6e3, size=(20, 2))]
    )
    for s in query_field(state, labels, m, pts, cfg):
        assert s.valid == (s.support >= 0.01)


def test_no_inliers_means_no_field():
    rng = make_rng(10)
    x = rng.uniform(0.0, 100.0, size=(25, 2))
    m = MatchSet.from_points(x, x + 500.0)
    empty = RansacOutcome(
        hypotheses=(),
        inlier_union=np.array([], dtype=np.int64),
        gamma=0.0,
        trials=0,
        gamma_history=(),
    )
    cfg = Config()
    labels, state = run_em(m, empty, cfg)
    samples = query_field(state, labels, m, x[:5], cfg)
    assert all(not s.valid for s in samples)
    assert np.allclose(np.stack([s.displaced for s in samples]), x[:5])


def test_field_is_continuous():
    m, gt = synth_generate(SynthSpec(n=500, outlier_ratio=0.3, seed=6))
    cfg = Config(seed=6)
    labels, state, out = filter_and_refine(m, cfg)
    rng = make_rng(7)
    for _ in range(50):
        p = rng.uniform([50.0, 50.0], [750.0, 550.0])
        q = p + 0.5 * rng.normal(size=2)
        sp, sq = query_field(state, labels, m, np.stack([p, q]), cfg)
        if sp.valid and sq.valid:
            gap = np.linalg.norm(sp.displaced - sq.displaced)
            assert gap <= 10.0 * np.linalg.norm(p - q) + 1e-9


def test_query_rejects_wrong_width():
    m, cfg, labels, state, R, t, mu = rigid_pipeline()
    with pytest.raises(ValueError):
        query_field(state, labels, m, np.zeros((3, 3)), cfg)


def test_field_csv_round_trip(tmp_path):
    m, cfg, labels, state, R, t, mu = rigid_pipeline()
    grid = grid_field(state, labels, m, (np.zeros(2), np.array([200.0, 200.0])), 100.0, cfg)
    path = tmp_path / "field.csv"
    write_field_csv(grid, path, dim=2)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "qx,qy,dx,dy,support,valid"
    assert len(lines) == 1 + len(grid.samples)
    first = lines[1].split(",")
    s0 = grid.samples[0]
    assert np.allclose([float(v) for v in first[:4]], np.concatenate([s0.query, s0.displaced]))
    assert first[5] in ("0", "1")


def test_svg_rendering(tmp_path):
    m, cfg, labels, state, R, t, mu = rigid_pipeline(n=40)
    grid = grid_field(state, labels, m, (np.zeros(2), np.array([200.0, 200.0])), 100.0, cfg)
    path = tmp_path / "scene.svg"
    render_scene_svg(m, labels, grid, path)
    text = path.read_text()
    assert text.startswith("<svg")
    assert text.count("<line") >= m.n
    render_scene_svg(m, labels, None, tmp_path / "bare.svg")
    x3 = np.zeros((6, 3))
    x3[:, 0] = np.arange(6)
    m3 = MatchSet.from_points(x3, x3 + 1.0)
    labels3 = LabelResult(
        inlier=np.ones(6, dtype=bool), posterior=np.ones(6), residual=np.zeros(6)
    )
    with pytest.raises(ValueError):
        render_scene_svg(m3, labels3, None, tmp_path / "bad.svg")
