"""Nested bivariate quantile contours of the first two component scores.

Scores are expressed in polar coordinates about the componentwise median.
For each quantile level the radius is regressed on a trigonometric basis
in the angle under the check loss; the fitted curves are then rearranged
so that, at every angle, radii increase with the level.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .basis import DOMAIN_TOL
from .dataset import SparseDataset, Subject
from .errors import ConvergenceError, DataError, DomainError
from .rpca import project_dataset

log = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_TAU_GRID",
    "ContourChart",
    "ScreeningResult",
    "build_chart",
    "check_loss",
    "rank_point",
    "screen_subject",
    "screen_dataset",
    "write_contours_csv",
]

DEFAULT_TAU_GRID = tuple(np.round(np.arange(1, 20) * 0.05, 10)) + (0.975, 0.99)
RADIUS_FLOOR = 1e-12
CENTER_JITTER = 1e-9


def trig_basis(theta, harmonics: int) -> np.ndarray:
    """Columns ``1, cos(theta), sin(theta), ..., cos(H theta), sin(H theta)``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    cols = [np.ones_like(theta)]
    for h in range(1, harmonics + 1):
        cols.append(np.cos(h * theta))
        cols.append(np.sin(h * theta))
    return np.column_stack(cols)


def check_loss(u, tau: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u * (tau - (u < 0))


def quantile_regression(X: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    """Check-loss regression coefficients, solved exactly as a linear program.

    HiGHS solves the bounded dual ``max y^T d`` subject to
    ``X^T d = (1 - tau) X^T 1`` and ``0 <= d <= 1``; the coefficients are
    the negated equality multipliers.
    """
    res = linprog(-y, A_eq=X.T, b_eq=(1.0 - tau) * X.sum(axis=0), bounds=(0.0, 1.0), method="highs")
    if res.status != 0:
        raise ConvergenceError(f"quantile regression at tau={tau} failed: {res.message}")
    return -res.eqlin.marginals


@dataclass(frozen=True, eq=False)
class ContourChart:
    """Angular quantile curves of the score radius about a center."""

    center: np.ndarray
    tau_grid: np.ndarray
    coefs: np.ndarray
    harmonics: int
    reference_n: int

    def raw_radii(self, theta) -> np.ndarray:
        """Unrearranged curve values, shape ``(len(tau_grid), len(theta))``."""
        return self.coefs @ trig_basis(theta, self.harmonics).T

    def radii(self, theta) -> np.ndarray:
        """Rearranged (nested) radii, shape ``(len(tau_grid), len(theta))``."""
        return np.maximum(np.sort(self.raw_radii(theta), axis=0), RADIUS_FLOOR)

    def polar(self, points) -> tuple[np.ndarray, np.ndarray]:
        d = np.atleast_2d(np.asarray(points, dtype=float)) - self.center
        return np.hypot(d[:, 0], d[:, 1]), np.arctan2(d[:, 1], d[:, 0])

    def polylines(self, n_angles: int = 360) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(theta, radius, xy)`` with ``xy`` of shape ``(levels, n_angles, 2)``."""
        theta = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
        rad = self.radii(theta)
        xy = np.stack([self.center[0] + rad * np.cos(theta),
                       self.center[1] + rad * np.sin(theta)], axis=-1)
        return theta, rad, xy

    def ranks(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Rank of each point and whether it lies beyond the top level."""
        r, theta = self.polar(points)
        rad = self.radii(theta)
        inside = r[None, :] <= rad * (1 + 1e-10)
        beyond = ~inside.any(axis=0)
        first = np.argmax(inside, axis=0)
        rank = np.where(beyond, 1.0, self.tau_grid[first])
        return rank, beyond


def build_chart(scores, tau_grid: Sequence[float] = DEFAULT_TAU_GRID, harmonics: int = 3) -> ContourChart:
    """Fit the nested angular quantile curves to an ``(N, 2)`` score sample."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise DataError("scores must be an (N, 2) array")
    scores = scores[:, :2]
    if not np.all(np.isfinite(scores)):
        raise DataError("scores contain non-finite values")
    n = scores.shape[0]
    if n < 50:
        raise DataError(f"at least 50 reference points are required, got {n}")
    if n < 200:
        warnings.warn(f"only {n} reference points; contours will be noisy", stacklevel=2)
    if harmonics < 0:
        raise ValueError("harmonics must be nonnegative")
    taus = np.asarray(tau_grid, dtype=float)
    if taus.ndim != 1 or taus.size == 0 or np.any((taus <= 0) | (taus >= 1)) or np.any(np.diff(taus) <= 0):
        raise ValueError("tau_grid must be increasing within (0, 1)")
    center = np.median(scores, axis=0)
    d = scores - center
    r = np.hypot(d[:, 0], d[:, 1])
    theta = np.arctan2(d[:, 1], d[:, 0])
    at_center = r < 1e-12
    if np.any(at_center):
        log.info("%d reference points at the center jittered to radius %g", at_center.sum(), CENTER_JITTER)
        r = np.where(at_center, CENTER_JITTER, r)
    X = trig_basis(theta, harmonics)
    coefs = np.array([quantile_regression(X, r, t) for t in taus])
    chart = ContourChart(center, taus, coefs, int(harmonics), n)
    if np.any(np.sort(chart.raw_radii(np.linspace(0, 2 * np.pi, 360, endpoint=False)), axis=0) <= 0):
        log.warning("some fitted radii were nonpositive and are floored at %g", RADIUS_FLOOR)
    return chart


def rank_point(chart: ContourChart, score2) -> tuple[float, bool]:
    """Smallest grid level whose contour contains the point.

    Returns ``(rank, beyond_top)``; points outside the top contour get rank
    1.0 with ``beyond_top`` set.
    """
    rank, beyond = chart.ranks(np.asarray(score2, dtype=float)[None, :2])
    return float(rank[0]), bool(beyond[0])


@dataclass(frozen=True)
class ScreeningResult:
    """Percentile rank of one subject's path on a chart."""

    subject_id: str
    scores: np.ndarray
    rank: float | None
    beyond_top: bool
    flagged: bool
    error: str | None = None
    error_code: str | None = None


def _subject_problem(s: Subject, model):
    lo, hi = model.basis.domain
    tol = DOMAIN_TOL * max(1.0, abs(lo), abs(hi))
    if s.times[0] < lo - tol or s.times[-1] > hi + tol:
        return DomainError(f"subject {s.id!r}: times [{s.times[0]}, {s.times[-1]}] outside the model domain "
                           f"[{lo}, {hi}]")
    if getattr(model, "kind", "rpca") == "covariate" and s.covariate is None:
        return DataError(f"subject {s.id!r} has no covariate value")
    return None


def _screen(data, model, chart, level):
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    n = len(data)
    errors = {}
    for i, s in enumerate(data.subjects):
        problem = _subject_problem(s, model)
        if problem is not None:
            errors[i] = problem
    scores = np.full((n, model.K), np.nan)
    usable = [i for i in range(n) if i not in errors]
    if usable:
        sub_scores, sub_errors = project_dataset(data.subset(usable), model)
        scores[usable] = sub_scores
        for j, exc in sub_errors.items():
            errors[usable[j]] = exc
    ok = np.array([i not in errors for i in range(n)])
    ranks = np.full(n, np.nan)
    beyond = np.zeros(n, dtype=bool)
    if ok.any():
        ranks[ok], beyond[ok] = chart.ranks(scores[ok, :2])
    results = []
    for i, s in enumerate(data.subjects):
        if i in errors:
            exc = errors[i]
            results.append(ScreeningResult(s.id, scores[i], None, False, False, str(exc),
                                           getattr(exc, "code", "error")))
        else:
            flagged = bool(beyond[i] or ranks[i] > level)
            results.append(ScreeningResult(s.id, scores[i], float(ranks[i]), bool(beyond[i]), flagged))
    return results, errors


def screen_dataset(data: SparseDataset, model, chart: ContourChart, level: float = 0.95) -> list[ScreeningResult]:
    """Project, rank and flag every subject; failures become error results."""
    return _screen(data, model, chart, level)[0]


def screen_subject(subject: Subject, model, chart: ContourChart, level: float = 0.95) -> ScreeningResult:
    """Screen one subject; projection errors propagate."""
    results, errors = _screen(SparseDataset((subject,), None), model, chart, level)
    if errors:
        raise errors[0]
    return results[0]


def write_contours_csv(chart: ContourChart, path, n_angles: int = 360) -> None:
    """Export contour polylines as ``tau,theta,radius,x,y`` rows."""
    theta, rad, xy = chart.polylines(n_angles)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "theta", "radius", "x", "y"])
        for li, tau in enumerate(chart.tau_grid):
            for a in range(len(theta)):
                w.writerow([format(tau, ".17g"), format(theta[a], ".17g"), format(rad[li, a], ".17g"),
                            format(xy[li, a, 0], ".17g"), format(xy[li, a, 1], ".17g")])
