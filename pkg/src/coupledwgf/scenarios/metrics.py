"""Count-based classifier metrics for the strategic-classification scenarios."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from ..errors import InvalidArgumentError
from ..families import Coupling, LogisticGame
from ..measures import ParticleEnsemble


@dataclass(frozen=True)
class ClassifierMetrics:
    accuracy: float
    #: TP / (TP + FP) with positive = predicted label 1; None when nothing is predicted positive
    precision: Optional[float]
    #: None for empty subgroups
    subgroup_accuracies: Dict[str, Optional[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision,
                "subgroup_accuracies": dict(self.subgroup_accuracies)}


def predict_label0(coupling: Coupling, z: np.ndarray, x) -> np.ndarray:
    """Decision rule ``q(z, x) ≥ 1/2``: True means predicted label 0."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(coupling, LogisticGame):
        return coupling.q(z, x[None, :])[:, 0] >= 0.5
    raise InvalidArgumentError(f"no decision rule for coupling {coupling.name!r}")


def threshold_rule(normal, offset=0.0):
    """Linear-threshold rule ``n·(z − x) ≥ offset`` as a callable ``(z, x) -> bool array``."""
    n = np.atleast_1d(np.asarray(normal, dtype=float))

    def rule(z, x):
        return (np.asarray(z) - np.asarray(x)) @ n >= offset

    return rule


def classifier_metrics(rho_label0: ParticleEnsemble, pi_label1: ParticleEnsemble, x, rule,
                       subgroups: Optional[Mapping[str, Sequence[int]]] = None) -> ClassifierMetrics:
    """Accuracy, precision and label-0 subgroup accuracies from counts.

    ``rule(z, x)`` returns True where the classifier predicts label 0.
    ``subgroups`` index into ``rho_label0``.
    """
    if rho_label0.size == 0 or pi_label1.size == 0:
        raise InvalidArgumentError("classifier metrics need nonempty ensembles")
    pred0_r = np.asarray(rule(rho_label0.points, x), dtype=bool)
    pred0_p = np.asarray(rule(pi_label1.points, x), dtype=bool)
    correct = int(pred0_r.sum()) + int((~pred0_p).sum())
    total = rho_label0.size + pi_label1.size
    tp = int((~pred0_p).sum())
    fp = int((~pred0_r).sum())
    precision = tp / (tp + fp) if tp + fp > 0 else None
    subs = {}
    for name, idx in (subgroups or {}).items():
        idx = np.asarray(idx, dtype=int)
        subs[name] = float(pred0_r[idx].mean()) if idx.size else None
    return ClassifierMetrics(correct / total, precision, subs)
