from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..geometry import OrientedBox, iou_matrix
from .kalman import H, KalmanState


@dataclass
class Association:
    matches: list[tuple[int, int]] = field(default_factory=list)
    unmatched_tracks: list[int] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)


def associate_iou(iou: np.ndarray, gate_iou: float) -> Association:
    """Maximum-total-IoU one-to-one matching over pairs that pass the gate.

    Rows are tracks (callers order them by id), columns detections. Pairs below
    the gate carry zero weight and are never reported as matches.
    """
    n_t, n_d = iou.shape
    if n_t == 0 or n_d == 0:
        return Association([], list(range(n_t)), list(range(n_d)))
    weight = np.where(iou >= gate_iou, iou, 0.0)
    rows, cols = linear_sum_assignment(weight, maximize=True)
    matches = [(int(r), int(c)) for r, c in zip(rows, cols) if weight[r, c] > 0 and iou[r, c] >= gate_iou]
    mt = {r for r, _ in matches}
    md = {c for _, c in matches}
    return Association(
        sorted(matches),
        [i for i in range(n_t) if i not in mt],
        [j for j in range(n_d) if j not in md],
    )


def associate(track_boxes: list[OrientedBox], det_boxes: list[OrientedBox], gate_iou: float) -> Association:
    return associate_iou(iou_matrix(track_boxes, det_boxes), gate_iou)


def associate_mahalanobis(states: list[KalmanState], centers: list[tuple[float, float]], meas_sigma: float, gate_chi2: float) -> Association:
    """Minimum-total-distance matching of predicted states to measured centres.

    Distance is the squared Mahalanobis norm of the innovation; pairs above
    ``gate_chi2`` are never matched.
    """
    n_t, n_d = len(states), len(centers)
    if n_t == 0 or n_d == 0:
        return Association([], list(range(n_t)), list(range(n_d)))
    z = np.asarray(centers, dtype=float).reshape(n_d, 2)
    d2 = np.empty((n_t, n_d))
    r = np.eye(2) * meas_sigma**2
    for i, st in enumerate(states):
        nu = z - H @ st.mean
        s_inv = np.linalg.inv(H @ st.cov @ H.T + r)
        d2[i] = np.einsum("ij,jk,ik->i", nu, s_inv, nu)
    big = gate_chi2 * (n_t + n_d + 1) + 1.0
    cost = np.where(d2 <= gate_chi2, d2, big)
    rows, cols = linear_sum_assignment(cost)
    matches = [(int(a), int(b)) for a, b in zip(rows, cols) if d2[a, b] <= gate_chi2]
    mt = {a for a, _ in matches}
    md = {b for _, b in matches}
    return Association(sorted(matches), [i for i in range(n_t) if i not in mt], [j for j in range(n_d) if j not in md])
