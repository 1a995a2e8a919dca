"""
Camera Geometry - Pinhole projection and cross-view transforms

Composes M = M1 [R | t], projects world joints to homogeneous image
coordinates, and solves the cross-view 3x3 transform Q with Q M_a ~ M_b.
The least-squares oracle here is the float64 ground truth that the learned
generator is checked against.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from .errors import ContractError, DegenerateCameraError, DegeneratePairError
from .skeleton import PoseSequence, normalize_homogeneous

logger = logging.getLogger(__name__)

RANK_TOL = 1e-8
ORTHO_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CameraIntrinsics:
    """3x3 intrinsics matrix M1"""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise DegenerateCameraError("intrinsics must be a finite 3x3 matrix")
        if abs(np.linalg.det(m)) <= 0.0:
            raise DegenerateCameraError("intrinsics matrix is singular")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_focal(cls, focal_px: float, principal_point=(512.0, 384.0)) -> "CameraIntrinsics":
        cx, cy = principal_point
        return cls(np.array([[focal_px, 0.0, cx], [0.0, focal_px, cy], [0.0, 0.0, 1.0]]))

    @property
    def focal_px(self) -> float:
        return float(self.matrix[0, 0])

    @property
    def principal_point(self):
        return float(self.matrix[0, 2]), float(self.matrix[1, 2])


@dataclass(frozen=True, eq=False)
class CameraExtrinsics:
    """World-to-camera rotation and translation, M2 = [R | t]"""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    def validate(self) -> None:
        r = self.rotation
        if r.shape != (3, 3) or not np.all(np.isfinite(r)):
            raise DegenerateCameraError("rotation must be a finite 3x3 matrix")
        if not np.allclose(r.T @ r, np.eye(3), atol=ORTHO_TOL, rtol=0.0):
            raise DegenerateCameraError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            raise DegenerateCameraError("rotation has det != +1 (reflection)")

    @classmethod
    def looking(cls, center, yaw_degrees: float) -> "CameraExtrinsics":
        """
        Camera at ``center`` looking horizontally along the yaw direction

        World frame is y-up. Yaw 0 looks along +z; the camera frame is
        x right, y down, z forward.
        """
        theta = np.deg2rad(yaw_degrees)
        forward = np.array([-np.sin(theta), 0.0, np.cos(theta)])
        down = np.array([0.0, -1.0, 0.0])
        right = np.cross(down, forward)
        rotation = np.stack([right, down, forward])
        center = np.asarray(center, dtype=np.float64)
        return cls(rotation, -rotation @ center)

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    @property
    def matrix(self) -> np.ndarray:
        return np.hstack([self.rotation, self.translation[:, None]])


@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    """Rank-3 3x4 camera matrix M = M1 M2"""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 4):
            raise ContractError(f"projection matrix must be 3x4, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    def check_rank(self, rank_tol: float = RANK_TOL) -> None:
        s = np.linalg.svd(self.matrix, compute_uv=False)
        if not s[-1] > rank_tol * s[0]:
            raise DegenerateCameraError(
                f"projection matrix is rank deficient (sigma_min/sigma_max={s[-1] / max(s[0], 1e-300):.2e})"
            )

    @property
    def center(self) -> np.ndarray:
        """Camera centre as the right null vector, dehomogenized"""
        _, _, vt = np.linalg.svd(self.matrix)
        c = vt[-1]
        return c[:3] / c[3]


@dataclass(frozen=True, eq=False)
class ViewTransform:
    """Full-rank 3x3 cross-view transform Q, optionally with LU factors"""

    q: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    residual: float = 0.0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if q.shape != (3, 3):
            raise ContractError(f"view transform must be 3x3, got {q.shape}")
        object.__setattr__(self, "q", q)
        if abs(np.linalg.det(q)) == 0.0:
            raise DegeneratePairError("view transform is singular")

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.q))

    def inverse(self) -> "ViewTransform":
        return ViewTransform(np.linalg.inv(self.q))

    def conjugate(self, frame: np.ndarray) -> "ViewTransform":
        """Express Q, given in the frame x' = frame^-1 x, in the original frame"""
        return ViewTransform(frame @ self.q @ np.linalg.inv(frame), residual=self.residual)


def compose_projection(intr: CameraIntrinsics, extr: CameraExtrinsics) -> ProjectionMatrix:
    """
    M = M1 [R | t]

    Raises:
        DegenerateCameraError: Invalid rotation or rank-deficient product
    """
    extr.validate()
    proj = ProjectionMatrix(intr.matrix @ extr.matrix)
    proj.check_rank()
    return proj


def project(world_points: np.ndarray, proj: ProjectionMatrix) -> np.ndarray:
    """
    Homogeneous image coordinates of world points, not normalized

    Args:
        world_points: (..., 3) world coordinates
        proj: Camera matrix

    Returns:
        (..., 3) array p = M [x, y, z, 1]^T
    """
    points = np.asarray(world_points, dtype=np.float64)
    if points.shape[-1] != 3:
        raise ContractError(f"world points must end in 3 coordinates, got {points.shape}")
    m = proj.matrix
    return points @ m[:, :3].T + m[:, 3]


def oracle_view_transform(m_a: ProjectionMatrix, m_b: ProjectionMatrix) -> ViewTransform:
    """
    Least-squares Q minimizing ||Q M_a - M_b||_F

    Exact (zero residual) when both cameras share a centre. Solved through the
    SVD of M_a^T rather than the normal equations to keep the conditioning of
    M_a instead of its square.

    Raises:
        DegeneratePairError: If M_a is rank deficient
    """
    a = m_a.matrix
    s = np.linalg.svd(a, compute_uv=False)
    if not s[-1] > RANK_TOL * s[0]:
        raise DegeneratePairError("source projection is rank deficient; normal equations are singular")
    q_t, _, _, _ = np.linalg.lstsq(a.T, m_b.matrix.T, rcond=None)
    q = q_t.T
    residual = float(np.linalg.norm(q @ a - m_b.matrix))
    return ViewTransform(q, residual=residual)


def apply_view_transform(q: ViewTransform, seq: PoseSequence) -> PoseSequence:
    """
    Left-multiply every joint by Q and renormalize

    Raises:
        DegenerateDepthError: If a transformed joint lands at w ~ 0
    """
    coords = seq.coords @ q.q.T
    return normalize_homogeneous(seq.with_coords(coords))


def lemma1_residual(rig, walk3d: np.ndarray) -> pd.DataFrame:
    """
    How closely a single 3x3 transform relates each ordered view pair

    For every ordered pair (a, b) of rig views: the oracle residual, and the
    mean / max 2D joint error between the transformed view-a render and the
    true view-b render.

    Args:
        rig: CameraRig
        walk3d: T x N x 3 world trajectories

    Returns:
        DataFrame with one row per ordered pair (empty for single-view rigs)
    """
    from .synth_gait import render_views

    columns = ["view_a", "view_b", "residual", "relative_residual", "mean_error_px", "max_error_px"]
    if len(rig.views) < 2:
        return pd.DataFrame(columns=columns)

    renders = render_views(walk3d, rig)
    projections = [view.projection() for view in rig.views]
    rows = []
    for a, view_a in enumerate(rig.views):
        for b, view_b in enumerate(rig.views):
            if a == b:
                continue
            q = oracle_view_transform(projections[a], projections[b])
            moved = apply_view_transform(q, renders[a])
            err = np.linalg.norm(moved.xy - renders[b].xy, axis=-1)
            rows.append({
                "view_a": view_a.yaw_degrees,
                "view_b": view_b.yaw_degrees,
                "residual": q.residual,
                "relative_residual": q.residual / np.linalg.norm(projections[b].matrix),
                "mean_error_px": float(err.mean()),
                "max_error_px": float(err.max()),
            })
    report = pd.DataFrame(rows, columns=columns)
    logger.debug("lemma-1 report over %d pairs, mean error %.4g px", len(report), report["mean_error_px"].mean())
    return report
