
import numpy as np
import pytest
from scipy.optimize import linprog

from growthpaths.contour import (
    DEFAULT_TAU_GRID,
    build_chart,
    check_loss,
    quantile_regression,
    rank_point,
    screen_dataset,
    screen_subject,
    trig_basis,
    write_contours_csv,
)
from growthpaths.dataset import SparseDataset, Subject
from growthpaths.errors import DataError, InsufficientDataError
from growthpaths.rpca import project_dataset
from growthpaths.simharness import fit_reference, generate, setting_spec

COV = np.array([[4.0, 1.2], [1.2, 1.0]])
TAUS = np.asarray(DEFAULT_TAU_GRID)


def normal_scores(n, seed, cov=COV):
    return np.random.default_rng(seed).multivariate_normal([1.0, -2.0], cov, size=n)


@pytest.fixture(scope="module")
def chart500():
    return build_chart(normal_scores(500, 1))


def test_circle_gives_unit_curves():
    theta = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    pts = np.column_stack([2 + np.cos(theta), 3 + np.sin(theta)])
    chart = build_chart(pts)
    np.testing.assert_allclose(chart.center, [2, 3], atol=1e-12)
    grid = np.linspace(0, 2 * np.pi, 360, endpoint=False)
    np.testing.assert_allclose(chart.radii(grid), 1.0, atol=1e-6)


def test_standard_normal_median_radius():
    rng = np.random.default_rng(2)
    chart = build_chart(rng.standard_normal((2000, 2)), harmonics=0)
    grid = np.linspace(0, 2 * np.pi, 360, endpoint=False)
    q50 = chart.radii(grid)[list(TAUS).index(0.5)]
    assert np.max(np.abs(q50 - np.sqrt(2 * np.log(2)))) < 0.05


def test_subgradient_balance(chart500):
    pts = normal_scores(500, 1)
    r, theta = chart500.polar(pts)
    below = np.mean(r[None, :] <= chart500.radii(theta) * (1 + 1e-10), axis=1)
    assert np.all(np.abs(below - TAUS) <= 2 / np.sqrt(500))


def test_heldout_coverage():
    levels = [0.5, 0.75, 0.95]
    cover = np.zeros(3)
    for rep in range(20):
        chart = build_chart(normal_scores(2000, 100 + rep))
        rank, _ = chart.ranks(normal_scores(2000, 200 + rep))
        cover += [np.mean(rank <= t) for t in levels]
    cover /= 20
    assert np.all(np.abs(cover - levels) <= 0.04), cover


def test_nested_and_positive(chart500):
    _, rad, _ = chart500.polylines(360)
    assert np.all(np.diff(rad, axis=0) >= 0)
    assert np.all(rad > 0)


def test_rank_examples(chart500):
    assert rank_point(chart500, chart500.center) == (TAUS[0], False)
    i95 = list(TAUS).index(0.95)
    r95 = chart500.radii([0.0])[i95, 0]
    assert rank_point(chart500, chart500.center + [r95, 0.0]) == (0.95, False)
    assert rank_point(chart500, chart500.center + [r95 * 1.0001, 0.0])[0] > 0.95
    assert rank_point(chart500, chart500.center + [1e3, 0.0]) == (1.0, True)


def test_self_ranking_calibration():
    above = [np.mean(build_chart(s).ranks(s)[0] > 0.95) for s in (normal_scores(500, 300 + r) for r in range(20))]
    assert np.mean(above) <= 0.07


def test_rotation_moves_rank_at_most_one_step():
    ref = normal_scores(1000, 5)
    query = normal_scores(300, 6)
    chart = build_chart(ref)
    beta = 0.7
    rot = np.array([[np.cos(beta), -np.sin(beta)], [np.sin(beta), np.cos(beta)]])
    c = chart.center
    moved = build_chart((ref - c) @ rot.T + c)
    a = np.searchsorted(TAUS, chart.ranks(query)[0])
    b = np.searchsorted(TAUS, moved.ranks((query - c) @ rot.T + c)[0])
    assert np.max(np.abs(a - b)) <= 1


def test_translation_invariance():
    ref = normal_scores(500, 7)
    query = normal_scores(200, 8)
    shift = np.array([3.7, -2.1])
    a = build_chart(ref).ranks(query)
    b = build_chart(ref + shift).ranks(query + shift)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def _primal(X, y, tau):
    n, p = X.shape
    c = np.concatenate([np.zeros(p), np.full(n, tau), np.full(n, 1 - tau)])
    A = np.hstack([X, np.eye(n), -np.eye(n)])
    bounds = [(None, None)] * p + [(0, None)] * (2 * n)
    res = linprog(c, A_eq=A, b_eq=y, bounds=bounds, method="highs")
    assert res.status == 0
    return res.x[:p]


@pytest.mark.parametrize("tau", [0.1, 0.5, 0.95])
def test_dual_matches_primal(tau):
    rng = np.random.default_rng(9)
    theta = rng.uniform(-np.pi, np.pi, 150)
    y = rng.exponential(1.0, 150) * (1.5 + np.cos(theta))
    X = trig_basis(theta, 2)
    dual, primal = quantile_regression(X, y, tau), _primal(X, y, tau)
    loss = lambda c: check_loss(y - X @ c, tau).sum()
    assert abs(loss(dual) - loss(primal)) <= 1e-9 * loss(primal)
    np.testing.assert_allclose(dual, primal, atol=1e-7)


def test_check_loss_values():
    np.testing.assert_allclose(check_loss([-2.0, 0.0, 3.0], 0.25), [1.5, 0.0, 0.75])


def test_preconditions():
    with pytest.raises(DataError):
        build_chart(normal_scores(49, 0))
    with pytest.warns(UserWarning):
        build_chart(normal_scores(100, 0))
    with pytest.raises(ValueError):
        build_chart(normal_scores(300, 0), tau_grid=[0.5, 0.4])
    with pytest.raises(ValueError):
        build_chart(normal_scores(300, 0), harmonics=-1)


def test_center_point_jittered():
    pts = normal_scores(301, 10)
    pts[0] = np.median(pts, axis=0)
    chart = build_chart(pts)
    assert np.all(np.isfinite(chart.coefs))


def test_contours_csv(tmp_path, chart500):
    path = tmp_path / "c.csv"
    write_contours_csv(chart500, path, n_angles=12)
    lines = path.read_text().splitlines()
    assert lines[0] == "tau,theta,radius,x,y" and len(lines) == 1 + 12 * len(TAUS)


# screening with a fitted model

def _synth_subject(truth, times, s1, s2, sid, rng, noise=1.0):
    values = truth.mean_fn(times) + s1 * truth.component_fns[0](times) + s2 * truth.component_fns[1](times)
    return Subject(sid, times, values + rng.normal(0, noise, times.size))


def _reference(seed):
    data, truth = generate(setting_spec("normal", seed=seed))
    model = fit_reference(data)
    scores, _ = project_dataset(data, model)
    return data, truth, model, build_chart(scores[:, :2])


def test_extreme_second_score_flagged():
    hits = 0
    for rep in range(20):
        data, truth, model, chart = _reference(700 + rep)
        rng = np.random.default_rng(rep)
        times = data.subjects[rep].times
        s1, s2 = np.median(truth.scores, axis=0)
        subj = _synth_subject(truth, times, s1, s2 + 6 * truth.scores[:, 1].std(), "x", rng)
        hits += screen_subject(subj, model, chart).flagged
    assert hits >= 19


def test_screen_center_and_errors():
    data, truth, model, chart = _reference(42)
    times = np.linspace(9.5, 15.5, 6)
    # a noiseless path at the chart center in model coordinates
    mean = model.mean(times)
    comps = model.components(times)
    center = Subject("c", times, mean + comps[:, :2] @ chart.center)
    res = screen_subject(center, model, chart, level=TAUS[0])
    assert res.rank == TAUS[0] and not res.flagged
    short = Subject("one", np.array([12.0]), np.array([150.0]))
    with pytest.raises(InsufficientDataError):
        screen_subject(short, model, chart)
    outside = Subject("far", np.array([5.0, 12.0, 14.0]), np.array([100.0, 150.0, 160.0]))
    results = screen_dataset(SparseDataset((center, short, outside), None), model, chart)
    assert [r.error is None for r in results] == [True, False, False]
    assert results[1].error_code == InsufficientDataError.code and results[1].rank is None
    for r in results:
        assert not r.flagged or r.rank > 0.95


def test_flagging_matches_rank():
    data, truth, model, chart = _reference(43)
    for level in (0.5, 0.9):
        for r in screen_dataset(data, model, chart, level):
            assert r.flagged == (r.beyond_top or r.rank > level)
