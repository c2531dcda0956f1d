"""Versioned JSON model files.

A file holds one fitted model (plain or covariate-adjusted), optionally the
jointly projected training scores and an embedded contour chart. Floats are
written with Python's shortest round-trip representation, so reading a file
back reproduces every array bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .basis import basis_from_knots
from .contour import ContourChart
from .covariate import CovariateModel, MuSpec
from .dataset import MeanModel
from .errors import DataError
from .rpca import ComponentModel, FitConfig

__all__ = ["SCHEMA_RPCA", "SCHEMA_COVARIATE", "model_to_dict", "model_from_dict", "save_model",
           "load_model", "dumps"]

SCHEMA_RPCA = "growthpaths.rpca/1"
SCHEMA_COVARIATE = "growthpaths.covariate/1"


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def _chart_to_dict(chart: ContourChart) -> dict:
    return {
        "center": _floats(chart.center),
        "tau_grid": _floats(chart.tau_grid),
        "coefs": _floats(chart.coefs),
        "harmonics": chart.harmonics,
        "reference_n": chart.reference_n,
    }


def _chart_from_dict(d: dict) -> ContourChart:
    return ContourChart(np.array(d["center"], dtype=float), np.array(d["tau_grid"], dtype=float),
                        np.array(d["coefs"], dtype=float).reshape(len(d["tau_grid"]), -1),
                        int(d["harmonics"]), int(d["reference_n"]))


def model_to_dict(model, projected_scores=None, chart: ContourChart | None = None) -> dict:
    b = model.basis
    out = {
        "schema": SCHEMA_COVARIATE if isinstance(model, CovariateModel) else SCHEMA_RPCA,
        "domain": list(b.domain),
        "degree": b.degree,
        "interior_knots": _floats(b.interior_knots),
    }
    if isinstance(model, CovariateModel):
        out["mu_spec"] = model.mu_spec.to_dict()
        out["covariate_summary"] = {k: float(v) for k, v in model.covariate_summary.items()}
        out["mean_coefficients"] = _floats(model.mean_coeffs)
    else:
        out["mean_degree"] = model.mean.basis.degree
        out["mean_interior_knots"] = _floats(model.mean.basis.interior_knots)
        out["mean_coefficients"] = _floats(model.mean.coefficients)
    out["K"] = model.K
    out["alphas"] = [_floats(a) for a in model.alphas]
    out["scores"] = {sid: _floats(model.scores[i]) for i, sid in enumerate(model.ids)}
    if projected_scores is not None:
        out["projected_scores"] = {sid: _floats(projected_scores[i]) for i, sid in enumerate(model.ids)}
    out["r_squared"] = _floats(model.r_squared)
    out["convergence_log"] = [dict(e) for e in model.convergence_log]
    out["seed"] = int(model.seed)
    out["config"] = asdict(model.config)
    if chart is not None:
        out["chart"] = _chart_to_dict(chart)
    return out


def model_from_dict(d: dict):
    """Rebuild ``(model, projected_scores or None, chart or None)``."""
    schema = d.get("schema")
    if schema not in (SCHEMA_RPCA, SCHEMA_COVARIATE):
        raise DataError(f"unsupported model schema {schema!r}")
    try:
        basis = basis_from_knots(d["domain"], d["degree"], d["interior_knots"])
        config = FitConfig(**d["config"])
        ids = tuple(d["scores"].keys())
        K = int(d["K"])
        scores = np.array([d["scores"][i] for i in ids], dtype=float).reshape(len(ids), K)
        common = dict(ids=ids, r_squared=tuple(float(v) for v in d["r_squared"]),
                      convergence_log=tuple(d["convergence_log"]), seed=int(d["seed"]), config=config)
        if schema == SCHEMA_RPCA:
            alphas = tuple(np.array(a, dtype=float) for a in d["alphas"])
            mean_basis = basis
            if d["mean_degree"] != d["degree"] or d["mean_interior_knots"] != d["interior_knots"]:
                mean_basis = basis_from_knots(d["domain"], d["mean_degree"], d["mean_interior_knots"])
            mean = MeanModel(mean_basis, np.array(d["mean_coefficients"], dtype=float))
            model = ComponentModel(basis, mean, alphas, scores, **common)
        else:
            alphas = tuple(np.array(a, dtype=float).reshape(basis.dim, -1) for a in d["alphas"])
            model = CovariateModel(basis, MuSpec(**d["mu_spec"]),
                                   np.array(d["mean_coefficients"], dtype=float).reshape(basis.dim, -1),
                                   alphas, scores, covariate_summary=dict(d["covariate_summary"]), **common)
        projected = None
        if "projected_scores" in d:
            projected = np.array([d["projected_scores"][i] for i in ids], dtype=float).reshape(len(ids), K)
        chart = _chart_from_dict(d["chart"]) if "chart" in d else None
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model file: {exc}") from None
    return model, projected, chart


def dumps(model, projected_scores=None, chart=None) -> str:
    return json.dumps(model_to_dict(model, projected_scores, chart), indent=1) + "\n"


def save_model(path, model, projected_scores=None, chart: ContourChart | None = None) -> None:
    Path(path).write_text(dumps(model, projected_scores, chart), encoding="utf-8")


def load_model(path):
    """Read a model file; returns ``(model, projected_scores, chart)``."""
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not a JSON model file ({exc})") from None
    return model_from_dict(d)
