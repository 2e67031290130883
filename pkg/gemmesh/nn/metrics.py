"""Vertex-wise error metrics aggregated over a test split."""
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from gemmesh.errors import ShapeMismatchError, ZeroLabelError

ERROR_COLUMNS = ("nmae", "eps", "delta_max", "delta_mean")
LABEL_COLUMNS = ("label_max", "label_median")


def vertex_errors(pred: np.ndarray, label: np.ndarray) -> tuple:
    """Per-vertex, per-time-step difference and label magnitudes.

    Args:
        pred, label (np.ndarray): (V, T, C) ambient fields.

    Returns:
        tuple: (delta (V, T), magnitude (V, T))
    """
    pred, label = np.asarray(pred, dtype=np.float64), np.asarray(label, dtype=np.float64)
    if pred.shape != label.shape:
        raise ShapeMismatchError(f"prediction shape {pred.shape} != label shape {label.shape}")
    if pred.ndim == 2:
        pred, label = pred[:, None], label[:, None]
    return np.linalg.norm(pred - label, axis=-1), np.linalg.norm(label, axis=-1)


def sample_metrics(pred: np.ndarray, label: np.ndarray, normalizer: float) -> dict:
    """Errors of one sample; NMAE is divided by `normalizer` (the split's max |label|).

    Raises:
        ZeroLabelError: The label field is zero everywhere.
    """
    delta, magnitude = vertex_errors(pred, label)
    label_norm = np.sqrt(np.sum(magnitude**2))
    if label_norm == 0 or normalizer <= 0:
        raise ZeroLabelError("label field has zero norm")
    pred_magnitude = np.linalg.norm(np.asarray(pred, dtype=np.float64), axis=-1)
    return {
        "nmae": float(delta.mean() / normalizer),
        "eps": float(np.sqrt(np.sum(delta**2)) / label_norm),
        "delta_max": float(delta.max()),
        "delta_mean": float(delta.mean()),
        "label_max": float(magnitude.max()),
        "label_median": float(np.median(magnitude)),
        "magnitude_bias": float(np.mean(pred_magnitude.reshape(magnitude.shape) - magnitude)),
    }


def split_normalizer(labels: Sequence[np.ndarray]) -> float:
    """Maximum label magnitude over every vertex and time step of a split."""
    return max(float(vertex_errors(lab, lab)[1].max()) for lab in labels)


def nmae_per_step(preds: Sequence[np.ndarray], labels: Sequence[np.ndarray]) -> np.ndarray:
    """(T,) NMAE per time step, averaged over samples, with the split-wide normalizer."""
    normalizer = split_normalizer(labels)
    if normalizer == 0:
        raise ZeroLabelError("every label in the split is zero")
    steps = [vertex_errors(p, lab)[0].mean(axis=0) / normalizer for p, lab in zip(preds, labels)]
    return np.mean(steps, axis=0)


def metrics(
    preds: Sequence[np.ndarray],
    labels: Sequence[np.ndarray],
    names: Optional[Sequence[str]] = None,
    flows: Optional[Sequence[float]] = None,
) -> tuple:
    """Per-sample metric table and its summary over a split.

    Args:
        preds, labels (list): (V, T, C) arrays, one per sample.
        names (list, optional): Sample names for the table.
        flows (list, optional): Inlet flows, carried into the table.

    Raises:
        ZeroLabelError: A sample's label field has zero norm.

    Returns:
        tuple: (pd.DataFrame with one row per sample, summary dict)
    """
    normalizer = split_normalizer(labels)
    rows = []
    for i, (pred, label) in enumerate(zip(preds, labels)):
        row = {"sample": names[i] if names else str(i)}
        if flows is not None:
            row["flow"] = flows[i]
        row.update(sample_metrics(pred, label, normalizer))
        rows.append(row)
    table = pd.DataFrame(rows)
    return table, summarize(table, preds, labels)


def summarize(table: pd.DataFrame, preds=None, labels=None) -> dict:
    """Mean, median and 75th percentile of every error column; mean label statistics."""
    summary = {"samples": int(len(table))}
    for column in ERROR_COLUMNS:
        values = table[column]
        summary[column] = {
            "mean": float(values.mean()),
            "median": float(values.median()),
            "p75": float(values.quantile(0.75)),
        }
    for column in (*LABEL_COLUMNS, "magnitude_bias"):
        summary[column] = float(table[column].mean())
    if preds is not None and labels is not None and np.asarray(labels[0]).ndim == 3:
        if np.asarray(labels[0]).shape[1] > 1:
            summary["nmae_per_step"] = nmae_per_step(preds, labels).tolist()
    return summary
