"""Error metrics between predicted and reference field solutions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .reference import GridSolution


@dataclass
class SpeciesErrors:
    mse: float
    rel_l2: float
    rel_linf: float
    abs_error: np.ndarray


@dataclass
class ErrorReport:
    """Per-species MSE, relative L2, relative Linf, and abs-error fields.

    Relative metrics are reported as nan when the reference norm vanishes.
    The Linf normalizer is the global max|ref| over the whole grid, not a
    pointwise one, to avoid division by near-zero concentrations.
    """

    a: SpeciesErrors
    s: SpeciesErrors

    def rows(self) -> list[tuple[str, str, float]]:
        out = []
        for species, err in (("A", self.a), ("S", self.s)):
            out += [(species, "mse", err.mse),
                    (species, "rel_l2", err.rel_l2),
                    (species, "rel_linf", err.rel_linf)]
        return out


def _species_errors(pred: np.ndarray, ref: np.ndarray) -> SpeciesErrors:
    diff = pred - ref
    mse = float(np.mean(diff**2))
    ref_l2 = float(np.linalg.norm(ref.ravel()))
    ref_max = float(np.max(np.abs(ref)))
    rel_l2 = float(np.linalg.norm(diff.ravel()) / ref_l2) if ref_l2 > 0 else np.nan
    rel_linf = float(np.max(np.abs(diff)) / ref_max) if ref_max > 0 else np.nan
    return SpeciesErrors(mse, rel_l2, rel_linf, np.abs(diff))


def compare_fields(pred_a, pred_s, ref_a, ref_s) -> ErrorReport:
    pred_a, ref_a = np.asarray(pred_a, float), np.asarray(ref_a, float)
    pred_s, ref_s = np.asarray(pred_s, float), np.asarray(ref_s, float)
    if pred_a.shape != ref_a.shape or pred_s.shape != ref_s.shape:
        raise ValueError(
            f"field shape mismatch: {pred_a.shape} vs {ref_a.shape}, "
            f"{pred_s.shape} vs {ref_s.shape}")
    return ErrorReport(_species_errors(pred_a, ref_a),
                       _species_errors(pred_s, ref_s))


def compare(predicted: GridSolution, reference: GridSolution) -> ErrorReport:
    """Compare two solutions on identical grids and snapshot times."""
    same_axes = (predicted.c_a.shape == reference.c_a.shape
                 and predicted.times.shape == reference.times.shape
                 and np.array_equal(predicted.x, reference.x))
    if predicted.y is not None or reference.y is not None:
        same_axes = same_axes and (
            predicted.y is not None and reference.y is not None
            and np.array_equal(predicted.y, reference.y))
    if not same_axes or not np.allclose(predicted.times, reference.times):
        raise ValueError(
            f"grid mismatch: pred {predicted.c_a.shape} at "
            f"{len(predicted.times)} times vs ref {reference.c_a.shape} at "
            f"{len(reference.times)} times")
    return compare_fields(predicted.c_a, predicted.c_s,
                          reference.c_a, reference.c_s)
