"""Sparse longitudinal observations: records, CSV ingestion, mean fitting
and centering."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._numerics import solve_normal
from .basis import BasisSystem
from .errors import DataError, DegeneracyError, DomainError, InsufficientDataError

__all__ = [
    "Subject",
    "SparseDataset",
    "MeanModel",
    "read_csv",
    "write_csv",
    "fit_mean",
    "center",
]


@dataclass(frozen=True, eq=False)
class Subject:
    """One subject's observation times, values and optional scalar covariate."""

    id: str
    times: np.ndarray
    values: np.ndarray
    covariate: float | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        values = np.asarray(self.values, dtype=float).ravel()
        if times.shape != values.shape:
            raise DataError(f"subject {self.id!r}: times and values differ in length")
        if times.size == 0:
            raise DataError(f"subject {self.id!r} has no observations")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise DataError(f"subject {self.id!r}: non-finite time or value")
        if np.any(np.diff(times) < 0):
            order = np.argsort(times, kind="stable")
            times, values = times[order], values[order]
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.covariate is not None:
            object.__setattr__(self, "covariate", float(self.covariate))

    @property
    def m(self) -> int:
        return self.times.size


@dataclass(frozen=True, eq=False)
class SparseDataset:
    """A collection of subjects on a common closed time interval."""

    subjects: tuple[Subject, ...]
    domain: tuple[float, float] = field(default=None)

    def __post_init__(self):
        subjects = tuple(self.subjects)
        if not subjects:
            raise DataError("dataset has no subjects")
        ids = [s.id for s in subjects]
        if len(set(ids)) != len(ids):
            raise DataError("subject identifiers are not unique")
        object.__setattr__(self, "subjects", subjects)
        lo_obs = min(float(s.times[0]) for s in subjects)
        hi_obs = max(float(s.times[-1]) for s in subjects)
        if self.domain is None:
            domain = (lo_obs, hi_obs)
        else:
            domain = (float(self.domain[0]), float(self.domain[1]))
            if lo_obs < domain[0] or hi_obs > domain[1]:
                raise DomainError(
                    f"observation times [{lo_obs}, {hi_obs}] exceed domain {domain}"
                )
        object.__setattr__(self, "domain", domain)

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.subjects]

    @cached_property
    def counts(self) -> np.ndarray:
        return np.array([s.m for s in self.subjects], dtype=int)

    @cached_property
    def times(self) -> np.ndarray:
        """All observation times, concatenated in subject order."""
        return np.concatenate([s.times for s in self.subjects])

    @cached_property
    def values(self) -> np.ndarray:
        return np.concatenate([s.values for s in self.subjects])

    @cached_property
    def subject_index(self) -> np.ndarray:
        """Subject position of every flattened observation."""
        return np.repeat(np.arange(len(self.subjects)), self.counts)

    @property
    def n_obs(self) -> int:
        return int(self.counts.sum())

    @property
    def has_covariate(self) -> bool:
        return all(s.covariate is not None for s in self.subjects)

    @cached_property
    def covariates(self) -> np.ndarray:
        if not self.has_covariate:
            raise DataError("dataset has subjects without a covariate")
        return np.array([s.covariate for s in self.subjects], dtype=float)

    def with_values(self, values) -> "SparseDataset":
        """Copy with the flattened values replaced; everything else kept."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_obs,):
            raise DataError("replacement values have the wrong length")
        bounds = np.concatenate([[0], np.cumsum(self.counts)])
        subjects = tuple(
            replace(s, values=values[bounds[i]:bounds[i + 1]].copy())
            for i, s in enumerate(self.subjects)
        )
        return SparseDataset(subjects, self.domain)

    def subset(self, indices: Iterable[int], relabel: bool = False) -> "SparseDataset":
        """Subjects at ``indices`` (repeats allowed when ``relabel`` is true)."""
        subjects = [self.subjects[i] for i in indices]
        if relabel:
            subjects = [replace(s, id=f"{s.id}#{k}") for k, s in enumerate(subjects)]
        return SparseDataset(tuple(subjects), self.domain)


def read_csv(path, domain: Sequence[float] | None = None) -> SparseDataset:
    """Read long-format ``id,time,value[,covariate]`` rows into a dataset.

    Rows are grouped by ``id`` in order of first appearance and sorted by
    time within subject. The covariate, when the column exists, must be
    constant within each subject.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for name in ("id", "time", "value"):
            if name not in header:
                raise DataError(f"{path}: missing required column {name!r}")
        i_id, i_t, i_y = header.index("id"), header.index("time"), header.index("value")
        i_x = header.index("covariate") if "covariate" in header else None
        groups: dict[str, list] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            sid = row[i_id].strip()
            try:
                t = float(row[i_t])
                y = float(row[i_y])
                x = float(row[i_x]) if i_x is not None else None
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric field") from None
            if not (math.isfinite(t) and math.isfinite(y)) or (x is not None and not math.isfinite(x)):
                raise DataError(f"{path}:{lineno}: non-finite field")
            entry = groups.setdefault(sid, [[], [], x])
            if x is not None and entry[2] != x:
                raise DataError(f"{path}:{lineno}: covariate of subject {sid!r} is not constant")
            entry[0].append(t)
            entry[1].append(y)
    if not groups:
        raise DataError(f"{path}: no data rows")
    subjects = tuple(Subject(sid, np.array(t), np.array(y), x) for sid, (t, y, x) in groups.items())
    return SparseDataset(subjects, domain)


def write_csv(data: SparseDataset, path) -> None:
    """Write the dataset in the format :func:`read_csv` accepts (17 significant digits)."""
    with_x = data.has_covariate
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "time", "value"] + (["covariate"] if with_x else []))
        for s in data.subjects:
            for t, y in zip(s.times, s.values):
                row = [s.id, format(t, ".17g"), format(y, ".17g")]
                if with_x:
                    row.append(format(s.covariate, ".17g"))
                writer.writerow(row)


@dataclass(frozen=True, eq=False)
class MeanModel:
    """B-spline least-squares estimate of the mean function."""

    basis: BasisSystem
    coefficients: np.ndarray

    def __call__(self, t) -> np.ndarray:
        return self.basis.design(t) @ self.coefficients


def least_squares(design: np.ndarray, y: np.ndarray, what: str = "design") -> np.ndarray:
    """Solve the pooled least-squares problem through jittered normal equations."""
    n, p = design.shape
    if n < p:
        raise InsufficientDataError(
            f"{what}: {n} observations cannot determine {p} coefficients"
        )
    try:
        return solve_normal(design.T @ design, design.T @ y)
    except DegeneracyError:
        raise DegeneracyError(
            f"{what} is rank-deficient (basis dimension {p}, {n} observations)"
        ) from None


def fit_mean(data: SparseDataset, basis: BasisSystem) -> MeanModel:
    """Pooled B-spline least-squares fit of all observations."""
    design = basis.design(data.times)
    coef = least_squares(design, data.values, what="mean design")
    if not np.all(np.isfinite(coef)):
        raise DegeneracyError("mean coefficients are not finite")
    coef.setflags(write=False)
    return MeanModel(basis, coef)


def center(data: SparseDataset, mean: MeanModel) -> SparseDataset:
    """Subtract the fitted mean at every observation time."""
    return data.with_values(data.values - mean(data.times))
