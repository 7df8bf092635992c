"""Analytical tools registered next to the database tools in harness runs.

They stand in for domain tool servers: pure functions over JSON records whose
outputs stay small no matter how much data flows in.
"""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from bridgescope.errors import MalformedArgs
from bridgescope.server import ToolDescriptor, ToolServer

_ROWS = {"type": "array", "items": {"type": "object"}}
_NAMES = {"type": "array", "items": {"type": "string"}, "minItems": 1}


def _schema(props: dict, required) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


def _r(x: float) -> float:
    return float(f"{x:.6g}")


def _column(rows: list[dict], name: str) -> np.ndarray:
    try:
        return np.array([float(r[name]) for r in rows], dtype=float)
    except KeyError:
        raise MalformedArgs(f"column {name!r} missing from input rows") from None
    except (TypeError, ValueError):
        raise MalformedArgs(f"column {name!r} is not numeric") from None


def trend_analyze(args: dict) -> dict:
    """Daily net revenue (sales minus refunds) and its least-squares slope."""
    net: dict[str, float] = defaultdict(float)
    for r in args["sales"]:
        net[str(r["date"])] += float(r["amount"])
    for r in args["refunds"]:
        net[str(r["date"])] -= float(r["amount"])
    days = sorted(net)
    values = np.array([net[d] for d in days])
    slope = float(np.polyfit(np.arange(len(days)), values, 1)[0]) if len(days) > 1 else 0.0
    trend = "flat" if abs(slope) < 1e-9 else ("up" if slope > 0 else "down")
    return {"days": len(days), "net_total": _r(float(values.sum()) if len(days) else 0.0), "daily_slope": _r(slope), "trend": trend}


def zscore_normalize(args: dict) -> dict:
    rows, columns = args["rows"], args["columns"]
    means, stds = {}, {}
    out = [dict(r) for r in rows]
    for c in columns:
        col = _column(rows, c)
        mean = float(col.mean()) if len(col) else 0.0
        std = float(col.std()) if len(col) else 0.0
        means[c], stds[c] = mean, std
        scaled = (col - mean) / std if std > 0 else col - mean
        for r, v in zip(out, scaled.tolist()):
            r[c] = v
    return {"columns": columns, "means": means, "stds": stds, "rows": out}


def train_linear_regression(args: dict) -> dict:
    rows, features, target = args["rows"], args["features"], args["target"]
    if len(rows) <= len(features):
        raise MalformedArgs("not enough rows to fit the model")
    x = np.column_stack([_column(rows, f) for f in features] + [np.ones(len(rows))])
    y = _column(rows, target)
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    pred = x @ coef
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    return {
        "features": features,
        "target": target,
        "coefficients": {f: _r(float(c)) for f, c in zip(features, coef[:-1])},
        "intercept": _r(float(coef[-1])),
        "r2": _r(1.0 - ss_res / ss_tot) if ss_tot > 0 else 1.0,
        "n": len(rows),
    }


def predict(args: dict) -> dict:
    model, rows = args["model"], args["rows"]
    try:
        features, coefs = model["features"], model["coefficients"]
        x = np.column_stack([_column(rows, f) for f in features]) if rows else np.zeros((0, len(features)))
        pred = x @ np.array([coefs[f] for f in features]) + model["intercept"]
    except (KeyError, TypeError):
        raise MalformedArgs("model is not a trained regression model") from None
    result = {"n": len(rows), "mean_prediction": _r(float(pred.mean())) if len(rows) else 0.0}
    if rows and all(model["target"] in r for r in rows):
        y = _column(rows, model["target"])
        result["rmse"] = _r(math.sqrt(float(((y - pred) ** 2).mean())))
    return result


ANALYTICS = [
    (
        ToolDescriptor(
            "trend_analyze",
            "Net daily revenue trend from sales and refunds records (date, amount).",
            _schema({"sales": _ROWS, "refunds": _ROWS}, ["sales", "refunds"]),
            "read",
        ),
        trend_analyze,
    ),
    (
        ToolDescriptor(
            "zscore_normalize",
            "Z-score normalize the given numeric columns of rows.",
            _schema({"rows": _ROWS, "columns": _NAMES}, ["rows", "columns"]),
            "read",
        ),
        zscore_normalize,
    ),
    (
        ToolDescriptor(
            "train_linear_regression",
            "Fit target ~ features by least squares; returns the model.",
            _schema({"rows": _ROWS, "features": _NAMES, "target": {"type": "string"}}, ["rows", "features", "target"]),
            "read",
        ),
        train_linear_regression,
    ),
    (
        ToolDescriptor(
            "predict",
            "Apply a regression model to rows; returns prediction summary.",
            _schema({"model": {"type": "object"}, "rows": _ROWS}, ["model", "rows"]),
            "read",
        ),
        predict,
    ),
]


ANALYTICS_NAMES = tuple(d.name for d, _ in ANALYTICS)


def register_analytics(server: ToolServer, names=None) -> None:
    """Register the analytical tools (all of them, or only ``names``)."""
    wanted = set(ANALYTICS_NAMES if names is None else names)
    unknown = wanted - set(ANALYTICS_NAMES)
    if unknown:
        raise MalformedArgs(f"unknown analytical tools {sorted(unknown)}")
    for descriptor, handler in ANALYTICS:
        if descriptor.name in wanted:
            server.register_external_tool(descriptor, handler)
