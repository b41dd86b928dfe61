"""JSON serialization for datasets and cluster models.

Floats are written with shortest round-trip formatting (json's default),
so save/load reproduces every value bit for bit. Loaders validate shape
and numeric sanity and raise ``SchemaError`` naming the offending field.
"""

from __future__ import annotations

import json

import numpy as np

from .clustering import ClusterModel
from .errors import InvalidArgumentError, SchemaError
from .trajectory import Dataset, MeanTrajectory, Trajectory

__all__ = ["save_dataset", "load_dataset", "save_model", "load_model", "model_payload"]


def _read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("<root>", f"not valid JSON: {exc}") from None


def _write_json(payload, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _require(obj: dict, field: str, prefix: str = ""):
    if field not in obj:
        raise SchemaError(f"{prefix}{field}", "missing")
    return obj[field]


def _as_float_matrix(value, field: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(field, "must be a rectangular array of numbers") from None
    if arr.ndim != 2:
        raise SchemaError(field, f"must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SchemaError(field, "contains non-finite values")
    return arr


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset as {"name", "dt", "demos": [{"states", "label"}]}."""
    labels = dataset.ground_truth_labels
    demos = []
    for i, demo in enumerate(dataset.demos):
        demos.append(
            {
                "states": demo.states.tolist(),
                "label": None if labels is None else labels[i],
            }
        )
    _write_json({"name": dataset.name, "dt": dataset.dt, "demos": demos}, path)


def load_dataset(path) -> Dataset:
    """Read a dataset written by ``save_dataset``.

    Raises:
        FileNotFoundError: missing file.
        SchemaError: malformed JSON, missing fields, ragged or non-finite
            states, inconsistent dimensions, or mixed null/non-null labels.
    """
    payload = _read_json(path)
    if not isinstance(payload, dict):
        raise SchemaError("<root>", "expected an object")
    name = _require(payload, "name")
    if not isinstance(name, str):
        raise SchemaError("name", "must be a string")
    dt = _require(payload, "dt")
    if not isinstance(dt, (int, float)) or isinstance(dt, bool) or not dt > 0:
        raise SchemaError("dt", f"must be a positive number, got {dt!r}")
    demos_raw = _require(payload, "demos")
    if not isinstance(demos_raw, list) or not demos_raw:
        raise SchemaError("demos", "must be a non-empty list")
    demos = []
    labels = []
    for i, item in enumerate(demos_raw):
        if not isinstance(item, dict):
            raise SchemaError(f"demos[{i}]", "expected an object")
        states = _as_float_matrix(_require(item, "states", f"demos[{i}]."), f"demos[{i}].states")
        try:
            demos.append(Trajectory(states, float(dt)))
        except InvalidArgumentError as exc:
            raise SchemaError(f"demos[{i}].states", str(exc)) from None
        label = item.get("label")
        if label is not None and (not isinstance(label, int) or isinstance(label, bool)):
            raise SchemaError(f"demos[{i}].label", "must be an integer or null")
        labels.append(label)
    for i, t in enumerate(demos):
        if t.dim != demos[0].dim:
            raise SchemaError(
                f"demos[{i}].states",
                f"dimension {t.dim} disagrees with demos[0] dimension {demos[0].dim}",
            )
    if any(v is not None for v in labels):
        if any(v is None for v in labels):
            raise SchemaError("demos", "labels must be all null or all set")
        gt = tuple(labels)
    else:
        gt = None
    try:
        return Dataset(tuple(demos), name=name, ground_truth_labels=gt)
    except InvalidArgumentError as exc:
        raise SchemaError("demos", str(exc)) from None


def model_payload(model: ClusterModel) -> dict:
    """JSON-ready dict for a model: {"clusters": [...], "meta": {...}}.

    Responsibilities and the objective trace ride along inside meta so
    the load reconstructs the full model.
    """
    clusters = [
        {
            "states": m.states.tolist(),
            "dt": m.dt,
            "speeds": m.speeds.tolist(),
            "emission_cov": m.emission_cov.tolist(),
        }
        for m in model.means
    ]
    meta = {
        "fit": model.meta,
        "responsibilities": None
        if model.responsibilities is None
        else model.responsibilities.tolist(),
        "objective_trace": list(model.objective_trace),
    }
    return {"clusters": clusters, "meta": meta}


def save_model(model: ClusterModel, path) -> None:
    """Write a model as JSON; see ``model_payload`` for the layout."""
    _write_json(model_payload(model), path)


def load_model(path) -> ClusterModel:
    """Read a model written by ``save_model``.

    Raises:
        FileNotFoundError: missing file.
        SchemaError: malformed JSON, missing fields, shape mismatches, or
            an emission covariance that is not symmetric positive definite.
    """
    payload = _read_json(path)
    if not isinstance(payload, dict):
        raise SchemaError("<root>", "expected an object")
    clusters_raw = _require(payload, "clusters")
    if not isinstance(clusters_raw, list) or not clusters_raw:
        raise SchemaError("clusters", "must be a non-empty list")
    means = []
    for i, item in enumerate(clusters_raw):
        prefix = f"clusters[{i}]."
        if not isinstance(item, dict):
            raise SchemaError(f"clusters[{i}]", "expected an object")
        states = _as_float_matrix(_require(item, "states", prefix), prefix + "states")
        cov = _as_float_matrix(_require(item, "emission_cov", prefix), prefix + "emission_cov")
        dt = _require(item, "dt", prefix)
        if not isinstance(dt, (int, float)) or isinstance(dt, bool) or not dt > 0:
            raise SchemaError(prefix + "dt", f"must be a positive number, got {dt!r}")
        speeds_raw = _require(item, "speeds", prefix)
        try:
            speeds = np.asarray(speeds_raw, dtype=float)
        except (TypeError, ValueError):
            raise SchemaError(prefix + "speeds", "must be a list of numbers") from None
        try:
            means.append(MeanTrajectory(states, float(dt), speeds, cov))
        except InvalidArgumentError as exc:
            raise SchemaError(f"clusters[{i}]", str(exc)) from None
    meta = payload.get("meta") or {}
    if not isinstance(meta, dict):
        raise SchemaError("meta", "expected an object")
    resp = meta.get("responsibilities")
    if resp is not None:
        resp = _as_float_matrix(resp, "meta.responsibilities")
    trace = meta.get("objective_trace") or []
    if not isinstance(trace, list):
        raise SchemaError("meta.objective_trace", "expected a list")
    fit_meta = meta.get("fit") or {}
    if not isinstance(fit_meta, dict):
        raise SchemaError("meta.fit", "expected an object")
    try:
        return ClusterModel(
            means=tuple(means),
            responsibilities=resp,
            objective_trace=tuple(float(v) for v in trace),
            meta=fit_meta,
        )
    except InvalidArgumentError as exc:
        raise SchemaError("clusters", str(exc)) from None
