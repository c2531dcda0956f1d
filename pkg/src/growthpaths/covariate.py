"""Covariate-adjusted components: mean and component functions that vary
with one subject-level scalar covariate through ``pi(t)^T A mu(x)``.

Coefficient matrices ``A`` have one row per time-basis function and one
column per covariate function. Norms and orthogonality are taken in the
empirical inner product averaged over the observed covariates,
``<A, B> = (1/N) sum_i mu(X_i)^T A^T W B mu(X_i)``, which equals the plain
time-basis inner product when ``mu`` is the constant 1.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .basis import BasisSystem, basis_from_knots, symmetric_sqrt
from .dataset import SparseDataset, least_squares
from .errors import ConvergenceError, DataError, DegeneracyError, GrowthPathsError, InsufficientDataError
from .rpca import FitConfig, Geometry, sequential_fit

log = logging.getLogger(__name__)

__all__ = [
    "MuSpec",
    "CovariateModel",
    "BootstrapTestResult",
    "fit_covariate",
    "bootstrap_test",
    "expected_path",
]


@dataclass(frozen=True)
class MuSpec:
    """Covariate functions ``mu(x)`` applied to the standardized covariate.

    ``kind="poly"`` gives ``(1, x, ..., x^degree)``; ``degree=0`` is the
    intercept-only model. ``kind="bspline"`` gives a clamped B-spline basis
    of the given degree with ``knots`` equally spaced interior knots over
    the standardized training range.
    """

    kind: str = "poly"
    degree: int = 1
    knots: int = 0

    def __post_init__(self):
        if self.kind not in ("poly", "bspline"):
            raise ValueError(f"unknown mu kind {self.kind!r}")
        if self.degree < 0 or self.knots < 0:
            raise ValueError("degree and knots must be nonnegative")

    @property
    def size(self) -> int:
        if self.kind == "poly":
            return self.degree + 1
        return self.degree + 1 + self.knots

    @property
    def uses_covariate(self) -> bool:
        return self.size > 1

    def to_dict(self) -> dict:
        return {"kind": self.kind, "degree": self.degree, "knots": self.knots}


def _mu_matrix(spec: MuSpec, z: np.ndarray, zrange) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if spec.kind == "poly":
        return np.vander(z, spec.degree + 1, increasing=True)
    lo, hi = zrange
    knots = lo + (hi - lo) * np.arange(1, spec.knots + 1) / (spec.knots + 1)
    xb = basis_from_knots((lo, hi), spec.degree, knots)
    return xb.design(np.clip(z, lo, hi))


@dataclass(frozen=True, eq=False)
class CovariateModel:
    """Fitted covariate-adjusted mean surface and components.

    ``mean_coeffs`` and each entry of ``alphas`` have shape
    ``(basis.dim, mu_spec.size)`` and act on the covariate after
    standardization by ``covariate_summary``.
    """

    basis: BasisSystem
    mu_spec: MuSpec
    mean_coeffs: np.ndarray
    alphas: tuple
    scores: np.ndarray
    ids: tuple
    covariate_summary: dict
    r_squared: tuple
    convergence_log: tuple
    seed: int
    config: FitConfig

    kind = "covariate"

    @property
    def K(self) -> int:
        return len(self.alphas)

    def mu(self, x) -> np.ndarray:
        s = self.covariate_summary
        z = (np.asarray(x, dtype=float) - s["mean"]) / s["scale"]
        return _mu_matrix(self.mu_spec, z, (s["zmin"], s["zmax"]))

    def _features(self, data: SparseDataset) -> np.ndarray:
        mu = self.mu(data.covariates)[data.subject_index]
        design = self.basis.design(data.times)
        return _kron_rows(mu, design)

    def mean_values(self, data: SparseDataset) -> np.ndarray:
        return self._features(data) @ _vec(self.mean_coeffs)

    def component_values(self, data: SparseDataset) -> np.ndarray:
        feats = self._features(data)
        return np.column_stack([feats @ _vec(a) for a in self.alphas])

    def component(self, k: int, t, x) -> np.ndarray:
        """Component ``k`` (0-based) at times ``t`` for covariate value ``x``."""
        return self.basis.design(t) @ self.alphas[k] @ self.mu(np.array([x]))[0]


def _kron_rows(mu: np.ndarray, design: np.ndarray) -> np.ndarray:
    n, p = design.shape
    return (mu[:, :, None] * design[:, None, :]).reshape(n, mu.shape[1] * p)


def _vec(mat: np.ndarray) -> np.ndarray:
    return np.asarray(mat, dtype=float).T.ravel()


def _unvec(v: np.ndarray, p: int) -> np.ndarray:
    return np.asarray(v).reshape(-1, p).T.copy()


def _summary(x: np.ndarray, spec: MuSpec) -> dict:
    mean = float(np.mean(x))
    scale = float(np.std(x))
    if spec.uses_covariate and not scale > 0:
        raise DataError("covariate is constant across subjects; its effect is not identifiable")
    if not scale > 0:
        scale = 1.0
    z = (x - mean) / scale
    return {"mean": mean, "scale": scale, "zmin": float(z.min()), "zmax": float(z.max()),
            "xmin": float(x.min()), "xmax": float(x.max())}


def _setup(data: SparseDataset, basis: BasisSystem, mu_spec: MuSpec, summary: dict | None):
    if not data.has_covariate:
        raise DataError("every subject needs a covariate value")
    x = data.covariates
    if summary is None:
        summary = _summary(x, mu_spec)
    z = (x - summary["mean"]) / summary["scale"]
    mu = _mu_matrix(mu_spec, z, (summary["zmin"], summary["zmax"]))
    design = basis.design(data.times)
    feats = _kron_rows(mu[data.subject_index], design)
    return summary, mu, feats


def _mean_surface(feats, y, p):
    return _unvec(least_squares(feats, y, what="mean-surface design"), p)


def empirical_geometry(basis: BasisSystem, mu: np.ndarray) -> Geometry:
    """Coefficient-space geometry of the covariate-averaged inner product."""
    n = mu.shape[0]
    second = mu.T @ mu / n
    evals = np.linalg.eigvalsh(second)
    if evals[0] <= 1e-12 * evals[-1]:
        raise DataError("covariate functions are linearly dependent over the observed covariates")
    gram = np.kron(second, basis.gram)
    half, half_inv = symmetric_sqrt(gram)
    sign_vector = np.kron(mu.mean(axis=0), basis.integrals)
    return Geometry(gram, half, half_inv, sign_vector)


def fit_covariate(data: SparseDataset, basis: BasisSystem, mu_spec: MuSpec = MuSpec(),
                  config: FitConfig = FitConfig(), covariate_summary: dict | None = None) -> CovariateModel:
    """Fit the covariate-adjusted mean surface and components.

    ``covariate_summary`` fixes the covariate standardization (used by the
    bootstrap so that replicate coefficients share one scale).
    """
    if len(data) < 2 * mu_spec.size:
        raise InsufficientDataError(
            f"{len(data)} subjects are too few for {mu_spec.size} covariate functions"
        )
    summary, mu, feats = _setup(data, basis, mu_spec, covariate_summary)
    p = basis.dim
    if data.n_obs < feats.shape[1]:
        raise InsufficientDataError(
            f"{data.n_obs} observations cannot determine {feats.shape[1]} coefficients"
        )
    mean_vec = least_squares(feats, data.values, what="mean-surface design")
    centered = data.values - feats @ mean_vec
    geom = empirical_geometry(basis, mu)
    raw_rms = math.sqrt(float(data.values @ data.values) / data.n_obs)
    alphas, scores, r2, entries = sequential_fit(
        feats, centered, data.values, data.subject_index, len(data), geom, config,
        null_scale=raw_rms,
    )
    mats = tuple(_unvec(a, p) for a in alphas)
    return CovariateModel(basis, mu_spec, _unvec(mean_vec, p), mats, scores, tuple(data.ids),
                          summary, tuple(r2), tuple(entries), config.seed, config)


def expected_path(model: CovariateModel, x: float, grid) -> np.ndarray:
    """Mean surface ``U(t, x)`` along ``grid`` for one covariate value."""
    s = model.covariate_summary
    width = s["xmax"] - s["xmin"]
    if x < s["xmin"] - 0.25 * width or x > s["xmax"] + 0.25 * width:
        warnings.warn(f"covariate {x} is far outside the training range "
                      f"[{s['xmin']}, {s['xmax']}]", stacklevel=2)
    return model.basis.design(grid) @ model.mean_coeffs @ model.mu(np.array([x]))[0]


@dataclass(frozen=True)
class BootstrapTestResult:
    """Outcome of a bootstrap test that covariate coefficients vanish."""

    target: str
    statistic: float
    p_value: float
    replicates: int


def _target_coefficients(model_or_mean, target, reference=None, geom=None):
    if target == "mean":
        return model_or_mean[:, 1:].ravel()
    k = int(target) - 1
    alpha = model_or_mean.alphas[k]
    if reference is not None and _vec(alpha) @ geom.gram @ _vec(reference) < 0:
        alpha = -alpha
    return alpha[:, 1:].ravel()


def bootstrap_test(data: SparseDataset, basis: BasisSystem, mu_spec: MuSpec = MuSpec(),
                   config: FitConfig = FitConfig(), target="mean", replicates: int = 200,
                   seed: int | None = None) -> BootstrapTestResult:
    """Case-resampling bootstrap test that the covariate-associated
    coefficients of ``target`` are all zero.

    ``target`` is ``"mean"`` for the covariate part of the mean surface or a
    1-based component number. The statistic is the largest studentized
    coefficient, ``max_j |c_j| / s_j``, with ``s_j`` the bootstrap standard
    deviation; the p-value is the share of replicates whose centered
    statistic ``max_j |c*_j - c_j| / s_j`` reaches it. Only polynomial
    ``mu`` with an intercept column is supported.
    """
    if replicates < 100:
        raise ValueError("replicates must be at least 100")
    if mu_spec.kind != "poly" or mu_spec.degree < 1:
        raise ValueError("bootstrap test needs a polynomial mu with at least one covariate term")
    seed = config.seed if seed is None else seed
    summary, mu, feats = _setup(data, basis, mu_spec, None)
    p = basis.dim
    if target == "mean":
        original = _mean_surface(feats, data.values, p)
        observed = _target_coefficients(original, "mean")

        def refit(sample):
            _, _, f = _setup(sample, basis, mu_spec, summary)
            return _target_coefficients(_mean_surface(f, sample.values, p), "mean")
    else:
        k = int(target)
        if k < 1:
            raise ValueError("component targets are 1-based")
        cfg = replace(config, max_components=k, r2_target=1.0)
        model = fit_covariate(data, basis, mu_spec, cfg, summary)
        if model.K < k:
            raise DegeneracyError(f"only {model.K} components could be extracted")
        geom = empirical_geometry(basis, mu)
        ref = model.alphas[k - 1]
        observed = _target_coefficients(model, k)

        def refit(sample):
            m = fit_covariate(sample, basis, mu_spec, cfg, summary)
            if m.K < k:
                raise DegeneracyError("too few components in replicate")
            return _target_coefficients(m, k, ref, geom)

    rng = np.random.default_rng([seed, 7027])
    draws, attempts = [], 0
    n = len(data)
    while len(draws) < replicates:
        attempts += 1
        if attempts > 2 * replicates:
            raise ConvergenceError(f"too many failed bootstrap replicates ({attempts - len(draws) - 1})")
        sample = data.subset(rng.integers(0, n, n), relabel=True)
        try:
            draws.append(refit(sample))
        except (GrowthPathsError, RuntimeError) as exc:
            log.info("bootstrap replicate redrawn: %s", exc)
    draws = np.array(draws)
    spread = draws.std(axis=0, ddof=1)
    spread = np.where(spread > 0, spread, np.finfo(float).tiny)
    stat = float(np.max(np.abs(observed) / spread))
    centered = np.max(np.abs(draws - observed) / spread, axis=1)
    p_value = float(np.mean(centered >= stat))
    return BootstrapTestResult(str(target), stat, p_value, replicates)
