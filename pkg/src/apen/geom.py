"""Euclidean and piecewise-Euclidean group elements, their actions on point
clouds, and partition data structures with refinement predicates.

Conventions: points are rows, so a motion (R, t) acts on positions as
``X @ R.T + t`` and on oriented normals as ``N @ R.T`` (no translation).
All arrays are float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

NORMAL_TOL = 1e-6
ORTHO_TOL = 1e-9
ROW_SUM_TOL = 1e-9


def _as_f64(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


@dataclass
class PointCloud:
    """n points with positions and oriented unit normals in d dimensions."""

    positions: np.ndarray  # (n, d)
    normals: np.ndarray    # (n, d), unit rows

    def __post_init__(self):
        self.positions = _as_f64(self.positions)
        self.normals = _as_f64(self.normals)
        if self.positions.ndim != 2:
            raise InvalidArgument("positions must be a 2-D array")
        if self.positions.shape != self.normals.shape:
            raise InvalidArgument(
                f"positions {self.positions.shape} and normals "
                f"{self.normals.shape} must have identical shape")
        if self.d not in (2, 3):
            raise InvalidArgument(f"ambient dimension must be 2 or 3, got {self.d}")
        if self.n > 0:
            norms = np.linalg.norm(self.normals, axis=1)
            if np.max(np.abs(norms - 1.0)) > NORMAL_TOL:
                raise InvalidArgument("normals must have unit Euclidean norm")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]


@dataclass
class RigidMotion:
    """An element (R, t) of E(d); reflections are permitted (det R = -1)."""

    rotation: np.ndarray     # (d, d) orthogonal
    translation: np.ndarray  # (d,)

    def __post_init__(self):
        self.rotation = _as_f64(self.rotation)
        self.translation = _as_f64(self.translation)
        d = self.rotation.shape[0]
        if self.rotation.shape != (d, d) or self.translation.shape != (d,):
            raise InvalidArgument("rotation must be (d, d) and translation (d,)")
        err = np.max(np.abs(self.rotation.T @ self.rotation - np.eye(d)))
        if err > ORTHO_TOL:
            raise InvalidArgument(f"rotation is not orthogonal (|R^T R - I| = {err:.3g})")

    @property
    def d(self) -> int:
        return self.rotation.shape[0]

    def inverse(self) -> "RigidMotion":
        return RigidMotion(self.rotation.T, -self.rotation.T @ self.translation)


def identity_motion(d: int) -> RigidMotion:
    return RigidMotion(np.eye(d), np.zeros(d))


def compose(g2: RigidMotion, g1: RigidMotion) -> RigidMotion:
    """The motion acting as g2 after g1."""
    if g2.d != g1.d:
        raise InvalidArgument("motions act on different dimensions")
    return RigidMotion(g2.rotation @ g1.rotation,
                       g2.rotation @ g1.translation + g2.translation)


@dataclass
class PiecewiseMotion:
    """A k-tuple of rigid motions, one per part."""

    motions: list

    def __post_init__(self):
        if len(self.motions) < 1:
            raise InvalidArgument("a piecewise motion needs at least one part")
        d = self.motions[0].d
        if any(g.d != d for g in self.motions):
            raise InvalidArgument("all motions must share the same dimension")

    @property
    def k(self) -> int:
        return len(self.motions)

    @property
    def d(self) -> int:
        return self.motions[0].d


@dataclass
class HardPartition:
    """One-hot n x k assignment matrix."""

    assignment: np.ndarray

    def __post_init__(self):
        self.assignment = _as_f64(self.assignment)
        a = self.assignment
        if a.ndim != 2:
            raise InvalidArgument("assignment must be a 2-D array")
        if not np.all((a == 0.0) | (a == 1.0)):
            raise InvalidArgument("assignment entries must be 0 or 1")
        if a.shape[0] > 0 and not np.all(a.sum(axis=1) == 1.0):
            raise InvalidArgument("every assignment row must be one-hot")

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    @property
    def k(self) -> int:
        return self.assignment.shape[1]

    def labels(self) -> np.ndarray:
        return np.argmax(self.assignment, axis=1)

    @staticmethod
    def from_labels(labels, k: int | None = None) -> "HardPartition":
        labels = np.asarray(labels, dtype=np.int64)
        if k is None:
            k = int(labels.max()) + 1 if labels.size else 1
        z = np.zeros((labels.shape[0], k))
        z[np.arange(labels.shape[0]), labels] = 1.0
        return HardPartition(z)


@dataclass
class SoftPartition:
    """Row-stochastic n x k matrix of part weights."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = _as_f64(self.weights)
        w = self.weights
        if w.ndim != 2:
            raise InvalidArgument("weights must be a 2-D array")
        if np.any(w < 0.0):
            raise InvalidArgument("weights must be non-negative")
        if w.shape[0] > 0 and np.max(np.abs(w.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise InvalidArgument("weight rows must sum to 1")

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def k(self) -> int:
        return self.weights.shape[1]


@dataclass
class VoteField:
    """Per-point offsets toward a part center."""

    offsets: np.ndarray  # (n, d)

    def __post_init__(self):
        self.offsets = _as_f64(self.offsets)
        if self.offsets.ndim != 2:
            raise InvalidArgument("offsets must be a 2-D array")


@dataclass
class LabeledCloud:
    """A cloud with its ground-truth partition and an optional class label."""

    cloud: PointCloud
    gt_parts: HardPartition
    class_label: int | None = None

    def __post_init__(self):
        if self.gt_parts.n != self.cloud.n:
            raise InvalidArgument("ground-truth partition rows must match the cloud")
        counts = self.gt_parts.assignment.sum(axis=0)
        if np.any(counts == 0):
            raise InvalidArgument("every ground-truth part must be nonempty")


def apply_rigid(g: RigidMotion, x: PointCloud) -> PointCloud:
    """Move positions by (R, t) and normals by R alone."""
    if g.d != x.d:
        raise InvalidArgument(f"motion dimension {g.d} does not match cloud {x.d}")
    return PointCloud(x.positions @ g.rotation.T + g.translation,
                      x.normals @ g.rotation.T)


def apply_piecewise(g: PiecewiseMotion, x: PointCloud, z: HardPartition) -> PointCloud:
    """Move each point by the motion of its assigned part.

    Equals the masked sum over parts of the per-part rigid action, i.e.
    sum_j (g_j . X) had-prod (Z e_j 1^T).
    """
    if z.n != x.n or z.k != g.k:
        raise InvalidArgument(
            f"partition shape ({z.n}, {z.k}) does not match cloud n={x.n}, k={g.k}")
    if g.d != x.d:
        raise InvalidArgument("motion dimension does not match cloud")
    labels = z.labels()
    rots = np.stack([m.rotation for m in g.motions])      # (k, d, d)
    trans = np.stack([m.translation for m in g.motions])  # (k, d)
    r = rots[labels]  # (n, d, d)
    pos = np.einsum("nd,ned->ne", x.positions, r) + trans[labels]
    nrm = np.einsum("nd,ned->ne", x.normals, r)
    return PointCloud(pos, nrm)


def hard_from_soft(q: SoftPartition) -> HardPartition:
    """One-hot row argmax; ties break toward the lowest column index."""
    labels = np.argmax(q.weights, axis=1)
    return HardPartition.from_labels(labels, q.k)


def refines(z: HardPartition, z_gt: HardPartition) -> bool:
    """True iff every pair of points co-assigned in z is co-assigned in z_gt.

    Equivalent to no entry of Z Z^T exceeding that of Zgt Zgt^T.
    """
    if z.n != z_gt.n:
        raise InvalidArgument("partitions must cover the same points")
    lz = z.labels()
    lgt = z_gt.labels()
    for j in range(z.k):
        members = lgt[lz == j]
        if members.size and np.any(members != members[0]):
            return False
    return True


def permute_parts(z: HardPartition, perm) -> HardPartition:
    """Reorder partition columns: column i of the result is column perm[i]."""
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(z.k)):
        raise InvalidArgument("perm must be a bijection on the part indices")
    return HardPartition(z.assignment[:, perm])


def random_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    """Uniform O(d) draw: QR orthogonalization with sign-fixed columns, then a
    fair coin decides the determinant (reflection flips the last column)."""
    a = rng.standard_normal((d, d))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    want_reflection = rng.random() < 0.5
    if (np.linalg.det(q) < 0) != want_reflection:
        q = q.copy()
        q[:, -1] = -q[:, -1]
    return q


def random_motion(seed: int, d: int, translation_scale: float = 1.0,
                  rng: np.random.Generator | None = None) -> RigidMotion:
    """Seeded E(d) draw: uniform O(d) rotation, translation uniform in
    [-scale, scale]^d. Deterministic for a fixed seed."""
    if d not in (2, 3):
        raise InvalidArgument("dimension must be 2 or 3")
    if rng is None:
        rng = np.random.default_rng(seed)
    rot = random_rotation(rng, d)
    t = rng.uniform(-translation_scale, translation_scale, size=d)
    return RigidMotion(rot, t)
