"""Regression-based principal components for sparse curves.

Components are extracted one at a time. For each, subject scores and the
B-spline coefficients of the component function are updated by
alternating least-squares regressions until both the parameters and the
working objective settle; the data are then residualized and the next
component is fitted against the residuals.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import null_space

from ._numerics import solve_normal
from .basis import BasisSystem, build_basis, orthonormalize_against
from .dataset import MeanModel, SparseDataset, Subject, center, fit_mean
from .errors import (
    ConvergenceError,
    DataError,
    DegeneracyError,
    GrowthPathsError,
    InsufficientDataError,
)

log = logging.getLogger(__name__)

__all__ = [
    "FitConfig",
    "ComponentFit",
    "ComponentModel",
    "alpha_step",
    "standardize",
    "score_step",
    "objective",
    "fit_component",
    "residualize",
    "r_squared",
    "fit",
    "project_scores",
    "project_dataset",
    "select_basis",
]

SCORE_ENERGY_FLOOR = 1e-12
OBJECTIVE_FLOOR = 1e-14


@dataclass(frozen=True)
class FitConfig:
    """Tolerances and limits for the alternating fit.

    ``delta1`` bounds the largest absolute change of any score or
    coefficient between iterations, ``delta2`` the relative change of the
    objective. ``r2_denominator`` selects whether R^2 divides by the
    centered (default) or raw sum of squares.
    """

    delta1: float = 1e-6
    delta2: float = 1e-9
    max_iter: int = 500
    max_components: int = 4
    r2_target: float = 0.90
    restarts: int = 3
    seed: int = 0
    r2_denominator: str = "centered"

    def __post_init__(self):
        if not (self.delta1 > 0 and self.delta2 > 0):
            raise ValueError("delta1 and delta2 must be positive")
        if self.max_iter < 1 or self.max_components < 1 or self.restarts < 1:
            raise ValueError("max_iter, max_components and restarts must be positive")
        if not (0 < self.r2_target <= 1):
            raise ValueError("r2_target must lie in (0, 1]")
        if self.r2_denominator not in ("centered", "raw"):
            raise ValueError("r2_denominator must be 'centered' or 'raw'")


@dataclass(frozen=True)
class Geometry:
    """Inner product on coefficient space plus the sign-convention functional."""

    gram: np.ndarray
    half: np.ndarray
    half_inv: np.ndarray
    sign_vector: np.ndarray

    @classmethod
    def from_basis(cls, basis: BasisSystem) -> "Geometry":
        return cls(basis.gram, basis.gram_half, basis.gram_half_inv, basis.integrals)

    def norm(self, coef) -> float:
        return math.sqrt(max(float(coef @ self.gram @ coef), 0.0))


# ---------------------------------------------------------------------------
# single regressions on flattened arrays


def _alpha_update(design, y, index, scores, geom=None, previous=()):
    r = scores[index]
    weighted = design * r[:, None]
    if previous:
        constraint = (geom.gram @ np.column_stack(previous)).T
        comp = null_space(constraint)
        weighted = weighted @ comp
    mat = weighted.T @ weighted
    rhs = weighted.T @ y
    z = solve_normal(mat, rhs)
    return comp @ z if previous else z


def _score_update(design, y, index, n, alpha):
    f = design @ alpha
    num = np.bincount(index, weights=y * f, minlength=n)
    den = np.bincount(index, weights=f * f, minlength=n)
    ok = den >= SCORE_ENERGY_FLOOR
    scores = np.zeros(n)
    scores[ok] = num[ok] / den[ok]
    return scores, np.flatnonzero(~ok)


def _objective(design, y, index, alpha, scores):
    resid = y - scores[index] * (design @ alpha)
    return float(resid @ resid) / y.size


def _standardize(geom, alpha):
    nrm = geom.norm(alpha)
    if not nrm > 1e-12:
        raise DegeneracyError(f"coefficient vector has near-zero norm ({nrm:.3g})")
    return alpha / nrm


def _sign_fix(geom, alpha, scores):
    s = float(geom.sign_vector @ alpha)
    scale = float(np.linalg.norm(geom.sign_vector) * np.linalg.norm(alpha))
    if abs(s) <= 1e-12 * scale:
        s = alpha[np.argmax(np.abs(alpha))]
    if s < 0:
        return -alpha, -scores
    return alpha, scores


@dataclass
class ComponentFit:
    """Result of extracting one component."""

    alpha: np.ndarray
    scores: np.ndarray
    iterations: int
    objective: float
    trace: list
    flagged: list = field(default_factory=list)
    restarts_failed: int = 0
    null: bool = False


def _one_run(design, y, index, n, geom, previous, config, rng):
    scores = rng.uniform(0.0, 1.0, size=n)
    alpha = None
    trace = []
    flagged = np.array([], dtype=int)
    # objective values below this are round-off (the solves carry a 1e-10 ridge)
    floor = OBJECTIVE_FLOOR * float(y @ y) / max(y.size, 1)
    for it in range(1, config.max_iter + 1):
        new_alpha = _alpha_update(design, y, index, scores, geom, previous)
        new_alpha = _standardize(geom, new_alpha)
        new_alpha = orthonormalize_against(geom.half, geom.half_inv, new_alpha, previous)
        new_scores, flagged = _score_update(design, y, index, n, new_alpha)
        value = _objective(design, y, index, new_alpha, new_scores)
        if trace and value > trace[-1] * (1 + 1e-9) + floor:
            raise RuntimeError(
                f"objective increased from {trace[-1]!r} to {value!r} at iteration {it}"
            )
        if alpha is not None:
            step = max(
                float(np.max(np.abs(new_alpha - alpha))),
                float(np.max(np.abs(new_scores - scores))),
            )
            change = abs(trace[-1] - value)
            done = step < config.delta1 and change <= config.delta2 * max(trace[-1], floor)
        else:
            done = False
        trace.append(value)
        alpha, scores = new_alpha, new_scores
        if done:
            return alpha, scores, it, trace, flagged, True
    return alpha, scores, config.max_iter, trace, flagged, False


def _null_component(geom, previous, n, y):
    # deterministic direction for data without variation left to explain
    candidates = [geom.sign_vector] + list(np.eye(len(geom.sign_vector)))
    for c in candidates:
        try:
            alpha = orthonormalize_against(geom.half, geom.half_inv, c, previous)
            break
        except DegeneracyError:
            continue
    alpha, _ = _sign_fix(geom, alpha, np.zeros(n))
    return ComponentFit(alpha, np.zeros(n), 0, float(y @ y) / max(y.size, 1), [],
                        flagged=list(range(n)), null=True)


def extract_component(design, y, index, n, geom, previous, config, key, null_tol=0.0):
    """Best of ``config.restarts`` alternating runs on flattened arrays.

    ``key`` is a tuple of integers seeding the per-restart RNG streams.
    """
    previous = [np.asarray(p, dtype=float) for p in previous]
    if y.size == 0 or math.sqrt(float(y @ y) / y.size) <= null_tol:
        return _null_component(geom, previous, n, y)
    best = None
    failures = []
    for restart in range(config.restarts):
        rng = np.random.default_rng([config.seed, *key, restart])
        try:
            alpha, scores, its, trace, flagged, converged = _one_run(
                design, y, index, n, geom, previous, config, rng
            )
        except DegeneracyError as exc:
            failures.append(("degenerate", str(exc), []))
            continue
        if not converged:
            failures.append(("nonconverged", f"max_iter={config.max_iter} reached", trace))
            continue
        if best is None or trace[-1] < best.objective:
            best = ComponentFit(alpha, scores, its, trace[-1], trace, [int(i) for i in flagged])
    if best is None:
        traces = [f[2] for f in failures if f[2]]
        best_trace = min(traces, key=lambda t: t[-1]) if traces else []
        raise ConvergenceError(
            f"component {len(previous) + 1}: no restart converged ({failures[0][0]}: {failures[0][1]})",
            best_trace,
        )
    best.restarts_failed = len(failures)
    best.alpha, best.scores = _sign_fix(geom, best.alpha, best.scores)
    return best


# ---------------------------------------------------------------------------
# public single-step operations


def alpha_step(data: SparseDataset, basis: BasisSystem, scores, previous=()) -> np.ndarray:
    """Least-squares coefficients given fixed scores (not standardized).

    With ``previous`` the solve is restricted to the Gram-orthogonal
    complement of those coefficient vectors.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (len(data),):
        raise DataError("scores must have one entry per subject")
    if not np.any(scores):
        raise DegeneracyError("scores are all zero")
    design = basis.design(data.times)
    if design.shape[0] < basis.dim:
        raise InsufficientDataError(
            f"{design.shape[0]} observations cannot determine {basis.dim} coefficients"
        )
    geom = Geometry.from_basis(basis) if previous else None
    return _alpha_update(design, data.values, data.subject_index, scores, geom,
                         [np.asarray(p, float) for p in previous])


def standardize(basis: BasisSystem, alpha) -> np.ndarray:
    """Scale coefficients to unit L2 norm of the represented function."""
    return _standardize(Geometry.from_basis(basis), np.asarray(alpha, dtype=float))


def score_step(data: SparseDataset, basis: BasisSystem, alpha) -> np.ndarray:
    """Per-subject scalar regressions of the values on ``pi(t)^T alpha``.

    Subjects whose regressor energy is below ``1e-12`` get score 0; use
    :func:`score_step_flagged` to see which.
    """
    return score_step_flagged(data, basis, alpha)[0]


def score_step_flagged(data: SparseDataset, basis: BasisSystem, alpha):
    design = basis.design(data.times)
    return _score_update(design, data.values, data.subject_index, len(data),
                         np.asarray(alpha, dtype=float))


def objective(data: SparseDataset, basis: BasisSystem, alpha, scores) -> float:
    """Mean squared residual of the rank-one fit ``scores_i * pi(t)^T alpha``."""
    design = basis.design(data.times)
    return _objective(design, data.values, data.subject_index,
                      np.asarray(alpha, float), np.asarray(scores, float))


def fit_component(data: SparseDataset, basis: BasisSystem, previous_alphas=(), config: FitConfig = FitConfig(),
                  component: int | None = None, null_tol: float = 0.0) -> ComponentFit:
    """Extract one component from centered (or residualized) data.

    ``component`` indexes the RNG stream; it defaults to the number of
    previous components.
    """
    design = basis.design(data.times)
    k = len(previous_alphas) if component is None else component
    return extract_component(design, data.values, data.subject_index, len(data),
                             Geometry.from_basis(basis), previous_alphas, config, (k,), null_tol)


def residualize(data: SparseDataset, basis: BasisSystem, alpha, scores) -> SparseDataset:
    """Remove the fitted contribution ``scores_i * pi(t)^T alpha``."""
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (len(data),):
        raise DataError("scores must have one entry per subject")
    f = basis.design(data.times) @ np.asarray(alpha, dtype=float)
    return data.with_values(data.values - scores[data.subject_index] * f)


# ---------------------------------------------------------------------------
# fitted model


@dataclass(frozen=True, eq=False)
class ComponentModel:
    """Fitted mean, component coefficient vectors and per-subject scores.

    ``scores`` are the sequentially estimated scores from the fit; use
    :func:`project_dataset` for jointly projected scores.
    """

    basis: BasisSystem
    mean: MeanModel
    alphas: tuple
    scores: np.ndarray
    ids: tuple
    r_squared: tuple
    convergence_log: tuple
    seed: int
    config: FitConfig

    kind = "rpca"

    @property
    def K(self) -> int:
        return len(self.alphas)

    @property
    def alpha_matrix(self) -> np.ndarray:
        return np.column_stack(self.alphas)

    def components(self, t) -> np.ndarray:
        """Component functions at ``t``, shape ``(len(t), K)``."""
        return self.basis.design(t) @ self.alpha_matrix

    def mean_values(self, data: SparseDataset) -> np.ndarray:
        return self.mean(data.times)

    def component_values(self, data: SparseDataset) -> np.ndarray:
        return self.components(data.times)

    def training_r_squared(self) -> float:
        return self.r_squared[-1]


def _r2_denominator(centered_values, raw_values, config):
    vals = raw_values if config.r2_denominator == "raw" else centered_values
    return float(vals @ vals)


def r_squared(original: SparseDataset, model, K: int) -> float:
    """Fraction of variability explained by the first ``K`` components.

    ``original`` is the centered dataset the model was fitted on; the raw
    denominator (when configured) is recovered by adding the fitted mean
    back.
    """
    if not 0 <= K <= model.K:
        raise ValueError(f"K={K} outside 0..{model.K}")
    y = original.values
    mean_vals = model.mean_values(original)
    denom = _r2_denominator(y, y + mean_vals, model.config)
    if denom == 0:
        raise DegeneracyError("total sum of squares is zero")
    fitted = np.zeros_like(y)
    if K:
        phi = model.component_values(original)[:, :K]
        fitted = np.sum(model.scores[original.subject_index, :K] * phi, axis=1)
    resid = y - fitted
    return 1.0 - float(resid @ resid) / denom


def sequential_fit(design, centered, raw, index, n, geom, config, key_prefix=(), null_scale=0.0):
    """Extract components until R^2 reaches the target or the cap is hit.

    Returns ``(alphas, scores, r2, log)``.
    """
    denom = _r2_denominator(centered, raw, config)
    null_tol = 1e-10 * null_scale
    alphas, score_cols, r2, entries = [], [], [], []
    resid = centered.copy()
    for k in range(config.max_components):
        comp = extract_component(design, resid, index, n, geom, alphas, config,
                                 (*key_prefix, k), null_tol)
        alphas.append(comp.alpha)
        score_cols.append(comp.scores)
        resid = resid - comp.scores[index] * (design @ comp.alpha)
        value = 1.0 - float(resid @ resid) / denom if denom > 0 else 1.0
        r2.append(value)
        entry = {
            "component": k + 1,
            "iterations": comp.iterations,
            "objective": comp.objective,
            "restarts_failed": comp.restarts_failed,
            "degenerate_subjects": len(comp.flagged),
        }
        if comp.null:
            entry["warning"] = "no variation left to explain; scores set to zero"
            log.warning("component %d: %s", k + 1, entry["warning"])
        elif comp.flagged:
            entry["warning"] = f"{len(comp.flagged)} subjects with near-zero regressor energy"
        entries.append(entry)
        if comp.null or value >= config.r2_target:
            break
    return alphas, np.column_stack(score_cols), r2, entries


def fit(data: SparseDataset, basis: BasisSystem, config: FitConfig = FitConfig(),
        mean_basis: BasisSystem | None = None) -> ComponentModel:
    """Center the data and extract components sequentially.

    The mean is fitted by B-spline least squares on ``mean_basis``
    (defaults to ``basis``).
    """
    if len(data) < 2:
        raise InsufficientDataError("at least two subjects are required")
    if data.n_obs < basis.dim:
        raise InsufficientDataError(
            f"{data.n_obs} observations cannot determine {basis.dim} coefficients"
        )
    mean = fit_mean(data, mean_basis or basis)
    centered = center(data, mean)
    design = basis.design(data.times)
    raw_rms = math.sqrt(float(data.values @ data.values) / data.n_obs)
    alphas, scores, r2, entries = sequential_fit(
        design, centered.values, data.values, data.subject_index, len(data),
        Geometry.from_basis(basis), config, null_scale=raw_rms,
    )
    for a in alphas:
        a.setflags(write=False)
    scores.setflags(write=False)
    return ComponentModel(basis, mean, tuple(alphas), scores, tuple(data.ids), tuple(r2),
                          tuple(entries), config.seed, config)


# ---------------------------------------------------------------------------
# projection of (new) subjects


def project_dataset(data: SparseDataset, model, n_components: int | None = None):
    """Jointly project every subject onto the fitted components.

    Returns ``(scores, errors)`` where ``scores`` is ``(N, K)`` with NaN
    rows for subjects that could not be projected and ``errors`` maps the
    subject position to the exception raised.
    """
    K = model.K if n_components is None else n_components
    phi = model.component_values(data)[:, :K]
    y = data.values - model.mean_values(data)
    idx = data.subject_index
    n = len(data)
    mats = np.zeros((n, K, K))
    np.add.at(mats, idx, phi[:, :, None] * phi[:, None, :])
    rhs = np.zeros((n, K))
    np.add.at(rhs, idx, phi * y[:, None])
    scores = np.full((n, K), np.nan)
    errors = {}
    short = data.counts < K
    for i in np.flatnonzero(short):
        errors[int(i)] = InsufficientDataError(
            f"subject {data.subjects[i].id!r} has {data.counts[i]} observations, needs at least {K}"
        )
    ok = ~short
    if np.any(ok):
        sym = 0.5 * (mats[ok] + np.swapaxes(mats[ok], 1, 2))
        evals = np.linalg.eigvalsh(sym)
        top = evals[:, -1]
        good = (top > 0) & (evals[:, 0] >= 1e-13 * top) & np.isfinite(top)
        pos = np.flatnonzero(ok)
        for i in pos[~good]:
            errors[int(i)] = DegeneracyError(
                f"subject {data.subjects[i].id!r}: component values at its times are collinear"
            )
        use = pos[good]
        if use.size:
            sub = sym[good]
            ridge = 1e-10 * np.trace(sub, axis1=1, axis2=2) / K
            sub = sub + ridge[:, None, None] * np.eye(K)
            scores[use] = np.linalg.solve(sub, rhs[use][:, :, None])[:, :, 0]
    return scores, errors


def project_scores(subject: Subject, model, n_components: int | None = None) -> np.ndarray:
    """Least-squares scores of one subject on the fitted components."""
    data = SparseDataset((subject,), None)
    scores, errors = project_dataset(data, model, n_components)
    if errors:
        raise errors[0]
    return scores[0]


# ---------------------------------------------------------------------------
# knot / degree selection


def _aic_type(values, fitted, counts, index, p):
    n = counts.size
    per_subject = np.bincount(index, weights=(values - fitted) ** 2, minlength=n) / counts
    return n * math.log(per_subject.sum() / n) + 2 * p


def select_basis(data: SparseDataset, degrees: Sequence[int], knot_counts: Sequence[int],
                 config: FitConfig = FitConfig(), folds: int = 5):
    """Choose ``(degree, num_interior)`` by subject-level cross-validation.

    Each candidate is fitted on all but one fold; held-out subjects are
    projected onto the fit and scored with
    ``N log{(1/N) sum_i (1/m_i) sum_j (Y_ij - Yhat_ij)^2} + 2p`` where
    ``p`` counts basis coefficients of the mean and the ``K`` components.
    Criteria are summed over folds. Candidates failing on any fold are
    dropped.
    """
    candidates = [(int(d), int(q)) for d in degrees for q in knot_counts]
    if not candidates:
        raise ValueError("candidate lists must be nonempty")
    if len(candidates) == 1:
        return candidates[0]
    rng = np.random.default_rng([config.seed, 5150])
    perm = rng.permutation(len(data))
    fold_of = np.empty(len(data), dtype=int)
    fold_of[perm] = np.arange(len(data)) % folds
    results = []
    for degree, q in candidates:
        total = 0.0
        try:
            for f in range(folds):
                train = data.subset(np.flatnonzero(fold_of != f))
                test = data.subset(np.flatnonzero(fold_of == f))
                if degree + 1 + q > train.n_obs:
                    raise InsufficientDataError("basis larger than the training sample")
                basis = build_basis(data.domain, degree, q, train.times)
                model = fit(train, basis, config)
                scores, errors = project_dataset(test, model)
                keep = np.array([i not in errors for i in range(len(test))])
                if not keep.any():
                    raise InsufficientDataError("no held-out subject could be projected")
                test = test.subset(np.flatnonzero(keep))
                scores = scores[keep]
                fitted = model.mean_values(test) + np.sum(
                    model.component_values(test) * scores[test.subject_index], axis=1
                )
                p = basis.dim * (model.K + 1)
                total += _aic_type(test.values, fitted, test.counts, test.subject_index, p)
        except (GrowthPathsError, RuntimeError) as exc:
            log.info("candidate degree=%d knots=%d excluded: %s", degree, q, exc)
            continue
        results.append((total, q, degree))
    if not results:
        raise DataError("every basis candidate failed to fit")
    _, q, degree = min(results)
    return degree, q
