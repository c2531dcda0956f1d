"""Acceptance checks, one printed PASS/FAIL line per criterion.

Run under pytest or directly with ``python tests/test_acceptance.py``.
"""

import os
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import make_dataset, rank_one_data  # noqa: E402

from growthpaths.basis import basis_from_knots, build_basis  # noqa: E402
from growthpaths.cli import main as cli_main  # noqa: E402
from growthpaths.contour import build_chart  # noqa: E402
from growthpaths.covariate import MuSpec, bootstrap_test, fit_covariate  # noqa: E402
from growthpaths.dataset import SparseDataset, Subject, center, fit_mean  # noqa: E402
from growthpaths.rpca import (  # noqa: E402
    OBJECTIVE_FLOOR,
    FitConfig,
    fit,
    fit_component,
    residualize,
    standardize,
)
from growthpaths.serialization import dumps, load_model, save_model  # noqa: E402
from growthpaths.simharness import (  # noqa: E402
    derive_seed,
    fidelity_study,
    generate,
    rise,
    screening_power,
    setting_spec,
    summarize_fidelity,
)

THREADS = os.cpu_count() or 1
TIGHT = FitConfig(delta1=1e-9, delta2=1e-12, max_iter=5000)
NAMES = {
    1: "constraint suite",
    2: "oracle equivalence",
    3: "RISE fidelity",
    4: "RMSE fidelity",
    5: "contour calibration",
    6: "screening power shape",
    7: "covariate reduction and size",
    8: "determinism and round-trip",
}


def _line(n, ok, detail, seconds):
    return f"CRITERION {n} {'PASS' if ok else 'FAIL'} [{NAMES[n]}] {detail} ({seconds:.1f}s)"


def _nonincreasing(trace, y):
    trace = np.asarray(trace)
    floor = OBJECTIVE_FLOOR * float(y @ y) / y.size
    return bool(np.all(np.diff(trace) <= 1e-12 * trace[:-1] + floor))


def criterion_1():
    worst_norm = worst_orth = 0.0
    monotone = True
    same = True
    for r in range(20):
        data, _ = generate(setting_spec("empirical", seed=derive_seed(1, r)))
        cfg = FitConfig(seed=r, max_components=2, r2_target=1.0)
        basis = build_basis(data.domain, 2, 2, data.times)
        model = fit(data, basis, cfg)
        g = basis.gram
        for k, a in enumerate(model.alphas):
            worst_norm = max(worst_norm, abs(a @ g @ a - 1))
            for b in model.alphas[:k]:
                worst_orth = max(worst_orth, abs(a @ g @ b))
        # replay the component extractions to inspect every objective trace
        resid = center(data, fit_mean(data, basis))
        previous = []
        for k in range(model.K):
            comp = fit_component(resid, basis, previous, cfg, component=k)
            monotone &= _nonincreasing(comp.trace, resid.values)
            same &= bool(np.array_equal(comp.alpha, model.alphas[k]))
            previous.append(comp.alpha)
            resid = residualize(resid, basis, comp.alpha, comp.scores)
    ok = worst_norm <= 1e-8 and worst_orth <= 1e-6 and monotone and same
    return ok, (f"max |norm-1|={worst_norm:.2e} (<=1e-8), max |<a_k,a_l>|={worst_orth:.2e} (<=1e-6), "
                f"traces nonincreasing={monotone}, replay matches fit={same}")


def _dense_rank_two(n=200, m=50, seed=0):
    rng = np.random.default_rng(seed)
    basis = basis_from_knots((0, 1), 3, [0.25, 0.5, 0.75])
    a1 = standardize(basis, rng.normal(size=basis.dim))
    a2 = rng.normal(size=basis.dim)
    a2 = standardize(basis, a2 - (a2 @ basis.gram @ a1) * a1)
    r = rng.normal(size=(n, 2)) * [3.0, 1.0]
    r -= r.mean(axis=0)
    grid = np.linspace(0, 1, m)
    Y = 2 + np.sin(3 * grid) + r[:, :1] * basis.functions(a1, grid) + r[:, 1:] * basis.functions(a2, grid)
    return make_dataset(np.tile(grid, (n, 1)), Y, domain=(0, 1)), basis, grid, Y


def criterion_2():
    data, basis, grid, Y = _dense_rank_two()
    model = fit(data, basis, replace(TIGHT, max_components=2, r2_target=1.0))
    w = np.full(grid.size, grid[1] - grid[0])
    w[[0, -1]] /= 2
    Yc = Y - Y.mean(axis=0)
    sw = np.sqrt(w)
    _, evecs = np.linalg.eigh(sw[:, None] * (Yc.T @ Yc / len(Y)) * sw[None, :])
    dense = []
    for k in range(2):
        v = evecs[:, -1 - k] / sw
        dense.append(rise(lambda t, v=v: np.interp(t, grid, v), lambda t, k=k: model.components(t)[:, k],
                          100, (0, 1)))
    sparse, basis1, alpha, _ = rank_one_data(n=200, m=6, seed=3)
    comp = fit_component(sparse, basis1, config=TIGHT)
    one = rise(lambda t: basis1.functions(alpha, t), lambda t: basis1.functions(comp.alpha, t), 100, (9, 16))
    ok = max(dense) < 1e-3 and one < 1e-10
    return ok, f"dense RISE phi1={dense[0]:.2e} phi2={dense[1]:.2e} (<1e-3), sparse rank-1 RISE={one:.2e} (<1e-10)"


_FIDELITY = {}


def _fidelity(setting):
    if setting not in _FIDELITY:
        rows = fidelity_study(setting_spec(setting, seed=3), replicates=20, threads=THREADS)
        _FIDELITY[setting] = summarize_fidelity(rows)
    return _FIDELITY[setting]


def criterion_3():
    s = _fidelity("normal")
    e = _fidelity("empirical")
    ok = s["rise_phi1"][0] <= 0.005 and s["rise_phi2"][0] <= 0.02
    return ok, (f"normal: mean RISE phi1={s['rise_phi1'][0]:.4f} (<=0.005) phi2={s['rise_phi2'][0]:.4f} (<=0.02); "
                f"empirical (info): {e['rise_phi1'][0]:.4f} / {e['rise_phi2'][0]:.4f}")


def criterion_4():
    s = _fidelity("normal")
    e = _fidelity("empirical")
    ok = s["rmse_r1"][0] <= 0.05 and s["rmse_r2"][0] <= 0.25
    return ok, (f"normal: mean RMSE r1={s['rmse_r1'][0]:.3f} (<=0.05) r2={s['rmse_r2'][0]:.3f} (<=0.25); "
                f"empirical (info): {e['rmse_r1'][0]:.3f} / {e['rmse_r2'][0]:.3f}")


def criterion_5():
    cov = np.array([[4.0, 1.2], [1.2, 1.0]])
    levels = [0.5, 0.75, 0.95]
    cover = np.zeros(3)
    nested = True
    for r in range(20):
        rng = np.random.default_rng(derive_seed(5, r))
        chart = build_chart(rng.multivariate_normal([1.0, -2.0], cov, size=2000))
        rad = chart.polylines(360)[1]
        nested &= bool(np.all(np.diff(rad, axis=0) >= 0) and np.all(rad > 0))
        rank, _ = chart.ranks(rng.multivariate_normal([1.0, -2.0], cov, size=2000))
        cover += [np.mean(rank <= t) for t in levels]
    cover /= 20
    ok = bool(np.all(np.abs(cover - levels) <= 0.04)) and nested
    return ok, ("held-out coverage " + ", ".join(f"tau={t}: {c:.3f}" for t, c in zip(levels, cover))
                + f" (+-0.04), nested on 360 angles={nested}")


def criterion_6():
    report = screening_power(setting_spec("empirical", seed=6), replicates=20, threads=THREADS)
    type1 = report.cell(0, 0)["mean"]
    corners = {(a, b): report.cell(a, b)["mean"] for a in (-4, 4) for b in (-20, 20)}
    moderate = report.cell(-2, -4)["mean"]
    ok = 0.02 <= type1 <= 0.12 and min(corners.values()) >= 0.95 and moderate >= 0.5
    corner_text = ", ".join(f"({a:g},{b:g})={100 * v:.1f}%" for (a, b), v in corners.items())
    detail = (f"(0,0)={100 * type1:.1f}% in [2,12]; corners {corner_text} (each >=95); "
              f"(-2,-4)={100 * moderate:.1f}% (>=50)")
    return ok, detail, report.table()


def criterion_7():
    data, _ = generate(setting_spec("normal", seed=7))
    sub = data.subset(range(200))
    x = np.random.default_rng(7).normal(160, 6, len(sub))
    with_x = SparseDataset(tuple(Subject(s.id, s.times, s.values, float(v)) for s, v in zip(sub.subjects, x)),
                           sub.domain)
    basis = build_basis(sub.domain, 2, 2, sub.times)
    cfg = FitConfig(seed=5)
    plain = fit(sub, basis, cfg)
    cov = fit_covariate(with_x, basis, MuSpec("poly", 0), cfg)
    diff = max(float(np.max(np.abs(cov.mean_coeffs[:, 0] - plain.mean.coefficients))),
               max(float(np.max(np.abs(a[:, 0] - b))) for a, b in zip(cov.alphas, plain.alphas)),
               float(np.max(np.abs(cov.scores - plain.scores))))
    rejections = 0
    for r in range(100):
        spec = setting_spec("normal", seed=derive_seed(70, r), n_subjects=200, covariate_law=(160.0, 6.0))
        d, _ = generate(spec)
        b = build_basis(d.domain, 2, 2, d.times)
        res = bootstrap_test(d, b, MuSpec(), FitConfig(seed=r), "mean", replicates=100, seed=r)
        rejections += res.p_value <= 0.05
    rate = rejections / 100
    ok = diff <= 1e-10 and cov.K == plain.K and 0.01 <= rate <= 0.12
    return ok, f"reduction max diff={diff:.2e} (<=1e-10), null rejection rate at 0.05={rate:.2f} in [0.01, 0.12]"


def criterion_8():
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        run = lambda *a: cli_main([str(v) for v in a])
        codes = [run("generate", "--seed", 8, "--out", d / "ref.csv")]
        for name in ("a", "b"):
            codes.append(run("fit", d / "ref.csv", "--domain", 9, 16, "--degree", 2, "--knots", 2, "--seed", 8,
                             "--out", d / f"{name}.json"))
            for kind in ("components", "chart"):
                codes.append(run("plot", d / f"{name}.json", "--kind", kind, "--out", d / f"{name}-{kind}.svg"))
        same_model = (d / "a.json").read_bytes() == (d / "b.json").read_bytes()
        same_svg = all((d / f"a-{k}.svg").read_bytes() == (d / f"b-{k}.svg").read_bytes()
                       for k in ("components", "chart"))
        model, proj, chart = load_model(d / "a.json")
        save_model(d / "c.json", model, proj, chart)
        roundtrip = (d / "c.json").read_bytes() == (d / "a.json").read_bytes()
        data, _ = generate(setting_spec("normal", seed=8, n_subjects=150, covariate_law=(160.0, 6.0),
                                        covariate_mean_fn=lambda t: 0.3 + 0 * t))
        cm = fit_covariate(data, build_basis(data.domain, 2, 1, data.times), MuSpec(), FitConfig(seed=1, max_iter=5000))
        text = dumps(cm)
        save_model(d / "cov.json", cm)
        back = load_model(d / "cov.json")[0]
        cov_rt = dumps(back) == text and np.array_equal(back.mean_coeffs, cm.mean_coeffs) and all(
            np.array_equal(a, b) for a, b in zip(back.alphas, cm.alphas))
    ok = all(c == 0 for c in codes) and same_model and same_svg and roundtrip and cov_rt
    return ok, (f"exit codes={codes}, identical model files={same_model}, identical SVGs={same_svg}, "
                f"rpca round-trip exact={roundtrip}, covariate round-trip exact={cov_rt}")


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8}


def evaluate(n):
    start = time.perf_counter()
    out = CRITERIA[n]()
    ok, detail = out[0], out[1]
    extra = out[2] if len(out) > 2 else None
    return ok, _line(n, ok, detail, time.perf_counter() - start), extra


@pytest.mark.slow
@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, capsys):
    ok, line, extra = evaluate(n)
    with capsys.disabled():
        print("\n" + line)
        if extra:
            print(extra)
    assert ok, line


if __name__ == "__main__":
    results = []
    for n in sorted(CRITERIA):
        ok, line, extra = evaluate(n)
        print(line, flush=True)
        if extra:
            print(extra, flush=True)
        results.append(ok)
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
