"""Pose-graph uncertainty model.

Holds the least-squares measurement objective, the eigenvalue-based edge
D-optimality metric, and a parametric stand-in for how SLAM edge covariance
evolves between loop closures: covariance accumulates linearly with traveled
distance and a closure retains only a configured fraction of it.

Poses are 6-vectors (x, y, z, roll, pitch, yaw); ground agents keep z, roll
and pitch at zero, so relative poses compose through the yaw rotation only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world_model import wrap_angle

N_AXES = 6
COV_EPS = 1e-3
DEFAULT_D_CAP = 10.0
DEFAULT_RETAIN = 0.2
DEFAULT_L_LOST = 25.0

ORB_OK = "ok"
ORB_LOST = "lost"


def _wrap_vec(v: np.ndarray) -> np.ndarray:
    out = np.array(v, dtype=float)
    for k in range(3, 6):
        out[k] = wrap_angle(out[k])
    return out


def pose_compose(a: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Apply a relative pose expressed in a's frame (yaw-only rotation)."""
    yaw = a[5]
    c, s = math.cos(yaw), math.sin(yaw)
    out = np.array(a, dtype=float)
    out[0] += c * delta[0] - s * delta[1]
    out[1] += s * delta[0] + c * delta[1]
    out[2] += delta[2]
    out[3:6] = [wrap_angle(a[k] + delta[k]) for k in range(3, 6)]
    return out


def pose_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Relative pose of b expressed in a's frame (yaw-only rotation)."""
    yaw = a[5]
    c, s = math.cos(yaw), math.sin(yaw)
    dx, dy, dz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    rel = np.zeros(N_AXES)
    rel[0] = c * dx + s * dy
    rel[1] = -s * dx + c * dy
    rel[2] = dz
    rel[3:6] = [wrap_angle(b[k] - a[k]) for k in range(3, 6)]
    return rel


def pose_diff(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Componentwise difference with the angle components wrapped."""
    d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
    return _wrap_vec(d)


def _check_spd(omega: np.ndarray) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (N_AXES, N_AXES):
        raise ValueError(f"expected a {N_AXES}x{N_AXES} matrix, got {omega.shape}")
    if np.abs(omega - omega.T).max() > 1e-9:
        raise ValueError("matrix is not symmetric within 1e-9")
    eigs = np.linalg.eigvalsh(omega)
    if eigs.min() <= 0:
        raise ValueError(f"matrix is not positive definite (min eigenvalue {eigs.min()})")
    return eigs


def edge_d_optimality(omega: np.ndarray, form: str = "normalized") -> float:
    """Scalar uncertainty summary of an SPD information matrix.

    normalized: exp(mean(log(eigenvalues))) = det(omega)^(1/6), the geometric
    mean of the eigenvalues. literal: exp(log(det(omega))) / 6.
    """
    eigs = _check_spd(omega)
    log_eigs = np.log(eigs)
    if form == "normalized":
        return float(np.exp(log_eigs.mean()))
    if form == "literal":
        return float(np.exp(log_eigs.sum()) / N_AXES)
    raise ValueError(f"unknown d-optimality form {form!r}")


@dataclass
class GraphEdge:
    """Relative-pose constraint between two nodes, weighted by omega."""

    frm: int
    to: int
    measurement: np.ndarray
    omega: np.ndarray
    residual: np.ndarray = field(default_factory=lambda: np.zeros(N_AXES))

    def __post_init__(self):
        self.measurement = np.asarray(self.measurement, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        _check_spd(self.omega)


class PoseGraph:
    """Trajectory chain of poses with per-edge information matrices.

    Tracks the covariance accumulated since the last loop closure; the
    reported uncertainty value is the edge D-optimality of its inverse,
    clamped to d_cap from above (a fresh graph reports the cap).
    """

    def __init__(self, initial_pose=None):
        pose0 = np.zeros(N_AXES) if initial_pose is None else np.asarray(initial_pose, float)
        self.nodes: list[np.ndarray] = [pose0.copy()]
        self.edges: list[GraphEdge] = []
        self.accum_cov = np.zeros((N_AXES, N_AXES))
        self.dist_since_closure = 0.0
        self.closure_count = 0

    def propagate(self, delta, sigmas) -> GraphEdge:
        """Append a motion node/edge and grow the accumulated covariance.

        The new edge's information matrix is diag(1/(sigma_k*d + eps))^2 with
        d the translation length of delta, so per-edge covariance scales with
        the step length and the accumulated covariance grows linearly with
        traveled distance.
        """
        delta = _wrap_vec(np.asarray(delta, dtype=float))
        d = float(np.linalg.norm(delta[:3]))
        if d <= 0:
            raise ValueError("propagate requires a non-zero translation")
        sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (N_AXES,))
        scale = sigmas * d + COV_EPS
        omega = np.diag(1.0 / scale**2)
        new_pose = pose_compose(self.nodes[-1], delta)
        edge = GraphEdge(len(self.nodes) - 1, len(self.nodes), delta, omega)
        self.nodes.append(new_pose)
        self.edges.append(edge)
        self.accum_cov = self.accum_cov + np.diag(scale**2)
        self.dist_since_closure += d
        return edge

    def close_loop(self, at: int, retain: float = DEFAULT_RETAIN) -> None:
        """Shrink accumulated covariance by the retention factor.

        at names the revisited node; the traveled-distance counter resets.
        """
        if not 0 <= at < len(self.nodes):
            raise ValueError(f"node id {at} out of range")
        if not 0 <= retain < 1:
            raise ValueError("retain must be in [0, 1)")
        self.accum_cov = self.accum_cov * retain
        self.dist_since_closure = 0.0
        self.closure_count += 1

    def reported_d_opti(self, d_cap: float = DEFAULT_D_CAP, form: str = "normalized") -> float:
        """Uncertainty derived from the accumulated covariance inverse, capped."""
        eigs = np.linalg.eigvalsh(self.accum_cov)
        if eigs.min() <= 0:  # fresh graph or full reset: no accumulated error
            return d_cap
        value = edge_d_optimality(np.linalg.inv(self.accum_cov), form=form)
        return min(d_cap, value)

    def orb_status(self, l_lost: float = DEFAULT_L_LOST) -> str:
        """Simulated SLAM tracking state: lost beyond l_lost meters per closure."""
        return ORB_LOST if self.dist_since_closure > l_lost else ORB_OK


def objective(graph: PoseGraph, poses) -> float:
    """Sum of squared measurement residuals weighted by edge information.

    poses assigns a 6-vector to every node; each edge residual is the
    measured relative pose minus the predicted one (angles wrapped). The
    residual is stored on the edge as a side effect.
    """
    poses = [np.asarray(p, dtype=float) for p in poses]
    if len(poses) < len(graph.nodes):
        raise ValueError(f"objective needs a pose for all {len(graph.nodes)} nodes")
    total = 0.0
    for e in graph.edges:
        predicted = pose_between(poses[e.frm], poses[e.to])
        r = pose_diff(e.measurement, predicted)
        e.residual = r
        total += float(r @ e.omega @ r)
    return total
