"""Synthetic growth-path generator, contamination model and evaluation
metrics for Monte Carlo studies of the fit and of screening power.

The default generator imitates pubertal height growth of girls between
ages 9 and 16: an increasing mean, a slowly varying positive first
component (overall size) and a sigmoidal second component (timing of the
growth spurt). All three are quadratic splines with knots at the 1/3 and
2/3 points of the age range.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .basis import BasisSystem, basis_from_knots, build_basis, orthogonalize
from .contour import DEFAULT_TAU_GRID, build_chart, screen_dataset
from .dataset import SparseDataset, Subject
from .errors import DataError, GrowthPathsError
from .rpca import FitConfig, fit, project_dataset

log = logging.getLogger(__name__)

__all__ = [
    "GROWTH_DOMAIN",
    "A_GRID",
    "B_GRID",
    "GeneratorSpec",
    "ContaminationSpec",
    "Truth",
    "SimReport",
    "default_functions",
    "default_score_table",
    "setting_spec",
    "generate",
    "contaminate",
    "generate_contaminated",
    "rise",
    "rmse_scores",
    "fidelity_study",
    "summarize_fidelity",
    "fidelity_table",
    "write_fidelity_csv",
    "CI_GRID",
    "screening_power",
    "derive_seed",
]

GROWTH_DOMAIN = (9.0, 16.0)
A_GRID = (-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0)
B_GRID = (-20.0, -12.0, -4.0, 0.0, 4.0, 12.0, 20.0)
# 3x3 subgrid holding the null cell, an extreme corner and a moderate cell
CI_GRID = tuple((a, b) for a in (-4.0, -2.0, 0.0) for b in (-20.0, -4.0, 0.0))
SCORE_SD = (16.7, 7.5)


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit seed for the stream labelled by ``keys``."""
    state = np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 | int(state[1] >> 1)


@dataclass(frozen=True)
class SplineFunction:
    """A function stored as coefficients on a B-spline basis."""

    basis: BasisSystem
    coef: np.ndarray

    def __call__(self, t) -> np.ndarray:
        return self.basis.design(t) @ self.coef


def _project(basis, fn):
    grid = np.linspace(*basis.domain, 2001)
    design = basis.design(grid)
    return np.linalg.lstsq(design, fn(grid), rcond=None)[0]


def default_functions(domain=GROWTH_DOMAIN):
    """``(mean, phi1, phi2)`` of the default generator.

    ``phi1`` and ``phi2`` are orthonormal in L2 over ``domain``.
    """
    lo, hi = domain
    width = hi - lo
    basis = basis_from_knots(domain, 2, [lo + width / 3, lo + 2 * width / 3])

    def age(t):
        return 9.0 + 7.0 * (t - lo) / width

    mean = _project(basis, lambda t: 133.0 + 31.0 / (1.0 + np.exp(-(age(t) - 12.0) / 1.1)))
    a1 = _project(basis, lambda t: 1.0 + 0.08 * (age(t) - 9.0))
    a1 = a1 / basis.norm(a1)
    a2 = _project(basis, lambda t: 1.0 / (1.0 + np.exp(-(age(t) - 12.5) / 0.8)))
    a2 = orthogonalize(basis, a2, [a1])
    return SplineFunction(basis, mean), SplineFunction(basis, a1), SplineFunction(basis, a2)


def default_score_table(n: int = 553, seed: int = 20150101) -> np.ndarray:
    """A fixed, mildly non-normal score table standing in for estimated
    scores of a real reference sample.

    First column: right-skewed (standardized gamma); second: heavy-tailed
    (standardized Student t, 5 df). Columns are centered and scaled to the
    default score standard deviations.
    """
    rng = np.random.default_rng(seed)
    g = rng.gamma(4.0, size=n)
    t = rng.standard_t(5, size=n)
    table = np.column_stack([g, t])
    table = (table - table.mean(axis=0)) / table.std(axis=0, ddof=1)
    return table * np.asarray(SCORE_SD)


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of the synthetic sample ``Y = U + sum_k r_k phi_k + noise``.

    ``score_law`` is ``"normal"`` (bivariate normal with ``score_mean`` and
    ``score_cov``) or ``"empirical"`` (rows resampled from ``score_table``).
    When ``covariate_law=(mean, sd)`` is set, each subject gets a normal
    covariate ``X`` and ``(X - mean) * covariate_mean_fn(t)`` is added.
    """

    mean_fn: Callable
    component_fns: tuple
    score_law: str = "normal"
    score_mean: tuple = (0.0, 0.0)
    score_cov: tuple = ((SCORE_SD[0] ** 2, 0.0), (0.0, SCORE_SD[1] ** 2))
    score_table: np.ndarray | None = None
    noise_sd: float = 1.0
    n_subjects: int = 500
    obs_per_subject: int = 6
    domain: tuple = GROWTH_DOMAIN
    seed: int = 0
    covariate_law: tuple | None = None
    covariate_mean_fn: Callable | None = None

    def __post_init__(self):
        if self.obs_per_subject < 1 or self.n_subjects < 1:
            raise DataError("n_subjects and obs_per_subject must be at least 1")
        if self.noise_sd < 0:
            raise DataError("noise_sd must be nonnegative")
        if self.score_law == "normal":
            cov = np.asarray(self.score_cov, dtype=float)
            if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov)[0] < -1e-12:
                raise DataError("score covariance must be symmetric positive semidefinite")
        elif self.score_law == "empirical":
            if self.score_table is None or len(self.score_table) == 0:
                raise DataError("empirical score law needs a nonempty score table")
        else:
            raise DataError(f"unknown score law {self.score_law!r}")


def setting_spec(setting: str = "normal", seed: int = 0, **overrides) -> GeneratorSpec:
    """Default generator for the ``"empirical"`` or ``"normal"`` score setting."""
    mean, p1, p2 = default_functions()
    kw = dict(mean_fn=mean, component_fns=(p1, p2), seed=seed)
    if setting == "empirical":
        kw.update(score_law="empirical", score_table=default_score_table())
    elif setting != "normal":
        raise DataError(f"unknown setting {setting!r}")
    kw.update(overrides)
    return GeneratorSpec(**kw)


@dataclass(frozen=True)
class Truth:
    """Generating scores and functions of a synthetic sample."""

    scores: np.ndarray
    mean_fn: Callable
    component_fns: tuple
    covariates: np.ndarray | None = None


def generate(spec: GeneratorSpec, id_prefix: str = "s"):
    """Draw a sample; returns ``(dataset, truth)``. Deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    n, m = spec.n_subjects, spec.obs_per_subject
    K = len(spec.component_fns)
    if spec.score_law == "normal":
        scores = rng.multivariate_normal(np.asarray(spec.score_mean, float)[:K],
                                         np.asarray(spec.score_cov, float)[:K, :K], size=n, method="eigh")
    else:
        table = np.asarray(spec.score_table, dtype=float)
        scores = table[rng.integers(0, len(table), size=n)][:, :K]
    lo, hi = spec.domain
    times = np.sort(rng.uniform(lo, hi, size=(n, m)), axis=1)
    noise = rng.normal(0.0, 1.0, size=(n, m)) * spec.noise_sd
    covariates = None
    if spec.covariate_law is not None:
        covariates = rng.normal(spec.covariate_law[0], spec.covariate_law[1], size=n)
    flat = times.ravel()
    values = spec.mean_fn(flat).reshape(n, m) + noise
    for k, fn in enumerate(spec.component_fns):
        values = values + scores[:, k:k + 1] * fn(flat).reshape(n, m)
    if covariates is not None and spec.covariate_mean_fn is not None:
        values = values + (covariates - spec.covariate_law[0])[:, None] * spec.covariate_mean_fn(flat).reshape(n, m)
    width = len(str(n - 1))
    subjects = tuple(
        Subject(f"{id_prefix}{i:0{width}d}", times[i], values[i],
                None if covariates is None else float(covariates[i]))
        for i in range(n)
    )
    data = SparseDataset(subjects, spec.domain)
    return data, Truth(scores, spec.mean_fn, tuple(spec.component_fns), covariates)


@dataclass(frozen=True)
class ContaminationSpec:
    """Linear drift ``A (t - origin) + B`` added to outlying curves."""

    A: float = 0.0
    B: float = 0.0
    n_curves: int = 100
    origin: float = 9.0

    def __post_init__(self):
        if self.n_curves < 1:
            raise DataError("n_curves must be at least 1")


def contaminate(data: SparseDataset, spec: ContaminationSpec) -> SparseDataset:
    """Add the linear drift to every observation of every subject."""
    return data.with_values(data.values + spec.A * (data.times - spec.origin) + spec.B)


def generate_contaminated(gen: GeneratorSpec, spec: ContaminationSpec, seed: int):
    """``spec.n_curves`` fresh curves from ``gen`` with the drift added."""
    data, truth = generate(replace(gen, n_subjects=spec.n_curves, seed=seed), id_prefix="z")
    return contaminate(data, spec), truth


# ---------------------------------------------------------------------------
# metrics


def rise(true_fn, estimated_fn, grid_size: int = 100, domain=GROWTH_DOMAIN) -> float:
    """Relative integrated squared error ``||g - ghat||^2 / ||g||^2``.

    Integrals are left Riemann sums over ``grid_size`` equal intervals.
    The estimate is sign-flipped first when that at least halves the error.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    lo, hi = domain
    t = lo + (hi - lo) * np.arange(grid_size) / grid_size
    g = np.asarray(true_fn(t), dtype=float)
    gh = np.asarray(estimated_fn(t), dtype=float)
    denom = float(g @ g)
    if denom == 0:
        raise DataError("true function has zero norm")
    err = float((g - gh) @ (g - gh))
    err_flip = float((g + gh) @ (g + gh))
    if err_flip <= 0.5 * err:
        err = err_flip
    return err / denom


def rmse_scores(true_scores, estimated) -> float:
    """Mean squared score error relative to the sample variance of the
    true scores, after a global sign alignment."""
    r = np.asarray(true_scores, dtype=float)
    rh = np.asarray(estimated, dtype=float)
    if r.shape != rh.shape:
        raise DataError("score vectors differ in length")
    var = float(np.var(r, ddof=1)) if r.size > 1 else 0.0
    if not var > 0:
        raise DataError("true scores have zero variance")
    mse = min(float(np.mean((r - rh) ** 2)), float(np.mean((r + rh) ** 2)))
    return mse / var


# ---------------------------------------------------------------------------
# Monte Carlo studies


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def fit_reference(data: SparseDataset, degree: int = 2, num_interior: int = 2,
                  config: FitConfig | None = None):
    """Fit exactly two components on a quantile-knot basis (the chart setup)."""
    config = config or FitConfig()
    config = replace(config, max_components=2, r2_target=1.0)
    basis = build_basis(data.domain, degree, num_interior, data.times)
    return fit(data, basis, config)


def fidelity_study(spec: GeneratorSpec, replicates: int = 20, degree: int = 2, num_interior: int = 2,
                   config: FitConfig | None = None, threads: int = 1) -> list[dict]:
    """RISE of both component functions and RMSE of both score vectors per replicate.

    Scores are the jointly projected ones (the same estimator used for
    screening).
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")

    def one(r):
        s = replace(spec, seed=derive_seed(spec.seed, r))
        data, truth = generate(s)
        model = fit_reference(data, degree, num_interior, replace(config or FitConfig(), seed=derive_seed(spec.seed, r, 1)))
        scores, _ = project_dataset(data, model)
        row = {"replicate": r, "K": model.K}
        for k in range(2):
            est = (lambda k: lambda t: model.components(t)[:, k])(k)
            row[f"rise_phi{k + 1}"] = rise(truth.component_fns[k], est, 100, spec.domain)
            row[f"rmse_r{k + 1}"] = rmse_scores(truth.scores[:, k], scores[:, k])
            row[f"rmse_seq_r{k + 1}"] = rmse_scores(truth.scores[:, k], model.scores[:, k])
        return row

    return _map(one, range(replicates), threads)


FIDELITY_METRICS = (
    ("rise_phi1", "RISE of phi1"),
    ("rise_phi2", "RISE of phi2"),
    ("rmse_r1", "RMSE of r1"),
    ("rmse_r2", "RMSE of r2"),
)


def summarize_fidelity(rows: Sequence[dict]) -> dict:
    """``metric -> (mean, sd)`` over replicate rows (sd with ``ddof=1``)."""
    out = {}
    for key, _ in FIDELITY_METRICS:
        vals = np.array([r[key] for r in rows], dtype=float)
        out[key] = (float(vals.mean()), float(vals.std(ddof=1)) if vals.size > 1 else 0.0)
    return out


def fidelity_table(summaries: dict, replicates: int) -> str:
    """Means (sd) of RISE and RMSE, one block per setting."""
    lines = [f"Means (standard deviations) over {replicates} replicates"]
    label_w = max(len(lbl) for _, lbl in FIDELITY_METRICS)
    for setting, summary in summaries.items():
        lines.append(f"Setting: {setting} scores")
        for key, lbl in FIDELITY_METRICS:
            prec = 4 if key.startswith("rise") else 2
            m, sd = summary[key]
            lines.append(f"  {lbl.ljust(label_w)}  {m:.{prec}f} ({sd:.{prec}f})")
    return "\n".join(lines) + "\n"


def write_fidelity_csv(rows_by_setting: dict, path) -> None:
    """Per-replicate metrics for each setting in one long CSV."""
    cols = ["replicate", "K"] + [k for k, _ in FIDELITY_METRICS] + ["rmse_seq_r1", "rmse_seq_r2"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["setting"] + cols)
        for setting, rows in rows_by_setting.items():
            for r in rows:
                w.writerow([setting] + [r[c] if isinstance(r[c], int) else format(r[c], ".17g") for c in cols])


@dataclass
class SimReport:
    """Screening-power cells: flagged fractions over replicates per ``(A, B)``."""

    cells: list = field(default_factory=list)
    level: float = 0.95
    replicates: int = 0

    def cell(self, A: float, B: float) -> dict:
        for c in self.cells:
            if c["A"] == A and c["B"] == B:
                return c
        raise KeyError((A, B))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["A", "B", "mean", "sd", "n_effective", "level", "replicates"])
            for c in self.cells:
                w.writerow([format(c["A"], ".17g"), format(c["B"], ".17g"), format(c["mean"], ".17g"),
                            format(c["sd"], ".17g"), c["n_effective"], format(self.level, ".17g"),
                            self.replicates])

    @classmethod
    def from_csv(cls, path) -> "SimReport":
        cells = []
        level, reps = 0.95, None
        with Path(path).open(newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                cells.append({"A": float(row["A"]), "B": float(row["B"]), "mean": float(row["mean"]),
                              "sd": float(row["sd"]), "n_effective": int(row["n_effective"])})
                if row.get("level"):
                    level = float(row["level"])
                if row.get("replicates"):
                    reps = int(row["replicates"])
        if reps is None:
            reps = max((c["n_effective"] for c in cells), default=0)
        return cls(cells, level, reps)

    def table(self) -> str:
        """Percent flagged as ``mean (sd)`` with slopes as rows and shifts as columns."""
        As = sorted({c["A"] for c in self.cells})
        Bs = sorted({c["B"] for c in self.cells})
        head = ["", *[f"B={b:g}" for b in Bs]]
        rows = [head]
        for a in As:
            row = [f"A={a:g}"]
            for b in Bs:
                try:
                    c = self.cell(a, b)
                    row.append(f"{100 * c['mean']:.1f} ({100 * c['sd']:.1f})")
                except KeyError:
                    row.append("-")
            rows.append(row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
        lines = [f"Percent of contaminated curves flagged at level {self.level:g} "
                 f"(mean (sd) over {self.replicates} replicates)"]
        for r in rows:
            lines.append("  ".join(s.rjust(w) for s, w in zip(r, widths)))
        return "\n".join(lines) + "\n"


def screening_power(reference_spec: GeneratorSpec, grid: Sequence[tuple] | None = None, level: float = 0.95,
                    replicates: int = 20, n_curves: int = 100, tau_grid=DEFAULT_TAU_GRID, harmonics: int = 3,
                    config: FitConfig | None = None, threads: int = 1) -> SimReport:
    """Fraction of contaminated curves flagged by the reference chart, per ``(A, B)`` cell.

    Each replicate draws a reference sample, fits two components, builds
    the chart from the projected reference scores, then for every cell
    draws ``n_curves`` fresh curves, adds the drift and screens them.
    Replicates whose fit fails are dropped and logged.
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    grid = [(a, b) for a in A_GRID for b in B_GRID] if grid is None else [tuple(map(float, g)) for g in grid]

    def one(r):
        seed = derive_seed(reference_spec.seed, r)
        try:
            data, _ = generate(replace(reference_spec, seed=seed))
            model = fit_reference(data, config=replace(config or FitConfig(), seed=derive_seed(seed, 1)))
            scores, _ = project_dataset(data, model)
            chart = build_chart(scores[:, :2], tau_grid, harmonics)
        except GrowthPathsError as exc:
            log.warning("replicate %d dropped: %s", r, exc)
            return None
        fractions = []
        for ci, (a, b) in enumerate(grid):
            z, _ = generate_contaminated(reference_spec, ContaminationSpec(a, b, n_curves),
                                         derive_seed(seed, 2, ci))
            results = screen_dataset(z, model, chart, level)
            fractions.append(np.mean([res.flagged for res in results]))
        return fractions

    outcomes = [o for o in _map(one, range(replicates), threads) if o is not None]
    cells = []
    for ci, (a, b) in enumerate(grid):
        vals = np.array([o[ci] for o in outcomes])
        cells.append({
            "A": a, "B": b,
            "mean": float(vals.mean()) if vals.size else math.nan,
            "sd": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
            "n_effective": int(vals.size),
        })
    return SimReport(cells, level, len(outcomes))
