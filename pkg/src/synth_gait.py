"""
Synthetic Gait - Parametric 3D walkers rendered through camera rigs

Generates identity-labeled, frame-aligned multi-view pose datasets with the
camera geometry known exactly, which real pose datasets cannot provide.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .camera_geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    ProjectionMatrix,
    compose_projection,
    project,
)
from .dataio import DatasetManifest, save_dataset
from .errors import ConfigurationError, ContractError
from .skeleton import CONDITIONS, GaitSample, PoseSequence, normalize_homogeneous

logger = logging.getLogger(__name__)

FPS = 30.0
DEFAULT_FRAMES = 60

SEGMENTS = ("thigh", "shin", "upper_arm", "forearm", "torso", "hip_width", "shoulder_width", "head")

# Uniform sampling ranges per identity; recorded in every manifest.
PARAM_RANGES = {
    "thigh": (0.40, 0.50),
    "shin": (0.38, 0.48),
    "upper_arm": (0.26, 0.34),
    "forearm": (0.23, 0.30),
    "torso": (0.45, 0.60),
    "hip_width": (0.20, 0.30),
    "shoulder_width": (0.32, 0.44),
    "head": (0.18, 0.26),
    "stride_m": (1.20, 1.60),
    "cadence_hz": (0.85, 1.15),
    "arm_swing_rad": (0.25, 0.55),
    "leg_swing_rad": (0.30, 0.50),
    "torso_lean_rad": (0.00, 0.12),
    "noise_std_m": (0.003, 0.008),
}

# Carrying a bag damps the right arm; a coat damps all limbs and adds jitter.
BG_ARM_REDUCTION = 0.7
CL_AMPLITUDE_SCALE = 0.7
CL_EXTRA_NOISE_M = 0.01

ELBOW_FLEX_RAD = 0.2

CASIA_YAWS = tuple(float(v) for v in range(0, 181, 18))
OU_YAWS = (0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0, 180.0, 195.0, 210.0, 225.0, 240.0, 255.0, 270.0)
ACCEPTANCE_YAWS = (0.0, 18.0, 36.0, 54.0, 90.0, 126.0, 144.0, 180.0)


@dataclass(frozen=True)
class WalkerParams:
    """Identity-level gait parameters (meters, radians, hertz)"""

    limb_lengths: Dict[str, float]
    stride_m: float = 1.4
    cadence_hz: float = 1.0
    phase: float = 0.0
    arm_swing_rad: float = 0.4
    leg_swing_rad: float = 0.4
    torso_lean_rad: float = 0.05
    noise_std_m: float = 0.0
    arm_swing_asymmetry: float = 0.0

    def validate(self) -> None:
        missing = set(SEGMENTS) - set(self.limb_lengths)
        if missing:
            raise ConfigurationError(f"walker is missing segment lengths: {sorted(missing)}")
        if any(not length > 0 for length in self.limb_lengths.values()):
            raise ConfigurationError("segment lengths must be positive")
        for name in ("arm_swing_rad", "leg_swing_rad", "torso_lean_rad"):
            value = getattr(self, name)
            if not 0.0 <= value <= np.pi / 2:
                raise ConfigurationError(f"{name}={value} outside [0, pi/2]")
        if self.noise_std_m < 0 or self.stride_m < 0 or self.cadence_hz < 0:
            raise ConfigurationError("noise, stride and cadence must be non-negative")
        if not 0.0 <= self.arm_swing_asymmetry <= 1.0:
            raise ConfigurationError("arm_swing_asymmetry must be in [0, 1]")

    @classmethod
    def average(cls, **overrides) -> "WalkerParams":
        """Mid-range walker, handy for tests and rig checks"""
        lengths = {name: float(np.mean(PARAM_RANGES[name])) for name in SEGMENTS}
        return cls(limb_lengths=lengths, **overrides)

    def to_dict(self) -> Dict:
        return {
            "limb_lengths": dict(self.limb_lengths),
            "stride_m": self.stride_m,
            "cadence_hz": self.cadence_hz,
            "phase": self.phase,
            "arm_swing_rad": self.arm_swing_rad,
            "leg_swing_rad": self.leg_swing_rad,
            "torso_lean_rad": self.torso_lean_rad,
            "noise_std_m": self.noise_std_m,
            "arm_swing_asymmetry": self.arm_swing_asymmetry,
        }


def sample_walker_params(rng: np.random.Generator) -> WalkerParams:
    """
    Draw an identity from PARAM_RANGES

    Args:
        rng: Generator owned by the identity

    Returns:
        Validated WalkerParams
    """
    draw = {name: float(rng.uniform(*bounds)) for name, bounds in PARAM_RANGES.items()}
    params = WalkerParams(
        limb_lengths={name: draw[name] for name in SEGMENTS},
        stride_m=draw["stride_m"],
        cadence_hz=draw["cadence_hz"],
        phase=0.0,
        arm_swing_rad=draw["arm_swing_rad"],
        leg_swing_rad=draw["leg_swing_rad"],
        torso_lean_rad=draw["torso_lean_rad"],
        noise_std_m=draw["noise_std_m"],
    )
    params.validate()
    return params


def apply_condition(params: WalkerParams, condition: str) -> WalkerParams:
    """Perturb an identity's parameters for a walking condition"""
    if condition == "NM":
        return params
    if condition == "BG":
        return replace(params, arm_swing_asymmetry=BG_ARM_REDUCTION)
    if condition == "CL":
        return replace(
            params,
            arm_swing_rad=params.arm_swing_rad * CL_AMPLITUDE_SCALE,
            leg_swing_rad=params.leg_swing_rad * CL_AMPLITUDE_SCALE,
            noise_std_m=params.noise_std_m + CL_EXTRA_NOISE_M,
        )
    raise ConfigurationError(f"unknown condition {condition!r}")


# Walker faces -z with y up; its left is -x.
_BODY_BASIS = np.array([
    [0.0, 0.0, -1.0],   # forward
    [0.0, 1.0, 0.0],    # up
    [-1.0, 0.0, 0.0],   # left
])


def _trunk_points(lengths: Dict[str, float], lean: float) -> np.ndarray:
    """Rigid trunk and head joints in body coordinates (forward, up, left)"""
    points = np.zeros((17, 3))
    hw, sw, torso, head = lengths["hip_width"], lengths["shoulder_width"], lengths["torso"], lengths["head"]
    points[11] = (0.0, 0.0, hw / 2)
    points[12] = (0.0, 0.0, -hw / 2)
    points[5] = (0.0, torso, sw / 2)
    points[6] = (0.0, torso, -sw / 2)
    nose = np.array([0.45 * head, torso + 0.85 * head, 0.0])
    points[0] = nose
    points[1] = nose + (-0.12 * head, 0.15 * head, 0.15 * head)
    points[2] = nose + (-0.12 * head, 0.15 * head, -0.15 * head)
    points[3] = nose + (-0.45 * head, 0.05 * head, 0.35 * head)
    points[4] = nose + (-0.45 * head, 0.05 * head, -0.35 * head)

    c, s = np.cos(lean), np.sin(lean)
    fwd, up = points[:, 0].copy(), points[:, 1].copy()
    points[:, 0] = fwd * c + up * s
    points[:, 1] = -fwd * s + up * c
    return points


def _sagittal(angle: np.ndarray) -> np.ndarray:
    """Unit limb directions (forward, up, left) hanging down, swung by angle"""
    return np.stack([np.sin(angle), -np.cos(angle), np.zeros_like(angle)], axis=-1)


def synth_walk_3d(
    params: WalkerParams,
    frames: int = DEFAULT_FRAMES,
    seed: Optional[int] = None,
    fps: float = FPS,
    progress: bool = False,
) -> np.ndarray:
    """
    Generate a T x 17 x 3 world-coordinate walking trajectory

    The trunk is rigid; legs and arms swing sinusoidally in counter-phase
    at the cadence. The root stays at the origin (treadmill gait) unless
    ``progress`` is set, in which case it advances stride_m per cycle,
    centered on the origin.

    Args:
        params: Walker parameters
        frames: Number of frames T (>= 1)
        seed: Seed for the per-joint Gaussian jitter
        fps: Frame rate
        progress: Translate the root along the walking direction

    Returns:
        World trajectories in meters
    """
    if frames < 1:
        raise ContractError(f"frames must be >= 1, got {frames}")
    params.validate()
    lengths = params.limb_lengths
    t = np.arange(frames) / fps
    phi = 2.0 * np.pi * params.cadence_hz * t + params.phase

    trunk = _trunk_points(lengths, params.torso_lean_rad)
    local = np.repeat(trunk[None], frames, axis=0)

    legs = ((11, 13, 15, phi), (12, 14, 16, phi + np.pi))
    for hip, knee, ankle, phase in legs:
        thigh_angle = params.leg_swing_rad * np.sin(phase)
        knee_flex = 0.5 * params.leg_swing_rad * (1.0 - np.cos(phase))
        local[:, knee] = local[:, hip] + lengths["thigh"] * _sagittal(thigh_angle)
        local[:, ankle] = local[:, knee] + lengths["shin"] * _sagittal(thigh_angle - knee_flex)

    right_amplitude = params.arm_swing_rad * (1.0 - params.arm_swing_asymmetry)
    arms = ((5, 7, 9, phi + np.pi, params.arm_swing_rad), (6, 8, 10, phi, right_amplitude))
    for shoulder, elbow, wrist, phase, amplitude in arms:
        upper_angle = amplitude * np.sin(phase)
        local[:, elbow] = local[:, shoulder] + lengths["upper_arm"] * _sagittal(upper_angle)
        local[:, wrist] = local[:, elbow] + lengths["forearm"] * _sagittal(upper_angle + ELBOW_FLEX_RAD)

    root = np.zeros((frames, 3))
    root[:, 1] = lengths["thigh"] + lengths["shin"] + 0.03 * params.leg_swing_rad * np.cos(2.0 * phi)
    if progress:
        travelled = params.stride_m * params.cadence_hz * t
        root[:, 0] = travelled - params.stride_m * params.cadence_hz * (frames - 1) / fps / 2.0
    world = (local + root[:, None, :]) @ _BODY_BASIS

    if params.noise_std_m > 0:
        rng = np.random.default_rng(seed)
        world = world + rng.normal(0.0, params.noise_std_m, size=world.shape)
    return world


@dataclass(frozen=True, eq=False)
class RigView:
    """One camera of a rig"""

    view_id: str
    yaw_degrees: float
    center: np.ndarray
    intrinsics: CameraIntrinsics
    drift: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "yaw_degrees", float(self.yaw_degrees))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "drift", np.asarray(self.drift, dtype=np.float64).reshape(3))

    @property
    def is_static(self) -> bool:
        return not np.any(self.drift)

    def extrinsics(self, frame: int = 0) -> CameraExtrinsics:
        return CameraExtrinsics.looking(self.center + frame * self.drift, self.yaw_degrees)

    def projection(self, frame: int = 0) -> ProjectionMatrix:
        return compose_projection(self.intrinsics, self.extrinsics(frame))

    def to_dict(self) -> Dict:
        return {
            "name": self.view_id,
            "yaw_degrees": self.yaw_degrees,
            "center_xyz": self.center.tolist(),
            "focal_px": self.intrinsics.focal_px,
            "principal_point": list(self.intrinsics.principal_point),
            "drift_xyz": self.drift.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> "RigView":
        return cls(
            view_id=str(payload["name"]),
            yaw_degrees=float(payload["yaw_degrees"]),
            center=payload["center_xyz"],
            intrinsics=CameraIntrinsics.from_focal(payload["focal_px"], tuple(payload["principal_point"])),
            drift=payload.get("drift_xyz", [0.0, 0.0, 0.0]),
        )


@dataclass(frozen=True, eq=False)
class CameraRig:
    """Ordered set of cameras with unique yaw angles"""

    views: Tuple[RigView, ...]
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))
        yaws = [view.yaw_degrees for view in self.views]
        if len(set(yaws)) != len(yaws):
            raise ConfigurationError(f"rig view yaws must be unique, got {yaws}")

    @property
    def yaws(self) -> List[float]:
        return [view.yaw_degrees for view in self.views]

    def view_for(self, yaw_degrees: float) -> RigView:
        for view in self.views:
            if np.isclose(view.yaw_degrees, yaw_degrees):
                return view
        raise ConfigurationError(f"rig {self.name!r} has no view at {yaw_degrees} degrees")

    def subset(self, yaws: Sequence[float]) -> "CameraRig":
        return CameraRig(tuple(self.view_for(y) for y in yaws), name=f"{self.name}-subset")

    @property
    def image_frame(self) -> np.ndarray:
        """Intrinsics of the first view, used as the normalized image frame"""
        return self.views[0].intrinsics.matrix

    def to_dict(self) -> Dict:
        return {"name": self.name, "views": [view.to_dict() for view in self.views]}

    @classmethod
    def from_dict(cls, payload: Dict) -> "CameraRig":
        return cls(tuple(RigView.from_dict(v) for v in payload["views"]), name=payload.get("name", "custom"))

    @classmethod
    def circle(
        cls,
        yaws: Sequence[float],
        radius: float = 6.0,
        height: float = 1.0,
        focal_px: float = 1000.0,
        principal_point=(512.0, 384.0),
        name: str = "circle",
    ) -> "CameraRig":
        """Cameras on a horizontal circle, each looking at (0, height, 0)"""
        intrinsics = CameraIntrinsics.from_focal(focal_px, principal_point)
        views = []
        for yaw in yaws:
            theta = np.deg2rad(yaw)
            center = (radius * np.sin(theta), height, -radius * np.cos(theta))
            views.append(RigView(f"v{yaw:g}", yaw, center, intrinsics))
        return cls(tuple(views), name=name)

    @classmethod
    def cocentered(
        cls,
        k: int,
        center=(0.0, 1.0, -8.0),
        spread_degrees: float = 30.0,
        focal_px: float = 1000.0,
        principal_point=(512.0, 384.0),
    ) -> "CameraRig":
        """k cameras rotated about one fixed centre; cross-view Q is exact"""
        intrinsics = CameraIntrinsics.from_focal(focal_px, principal_point)
        yaws = np.linspace(-spread_degrees, spread_degrees, k) if k > 1 else np.zeros(1)
        views = tuple(RigView(f"c{i}", float(yaw), center, intrinsics) for i, yaw in enumerate(yaws))
        return cls(views, name=f"cocentered-{k}")

    @classmethod
    def preset(cls, name: str, **kwargs) -> "CameraRig":
        """
        Named rig presets

        casia-like (11 views, 0-180 step 18), ou-like (14 views),
        acceptance (8 casia views), cocentered-k.
        """
        if name == "casia-like":
            return cls.circle(CASIA_YAWS, name=name, **kwargs)
        if name == "ou-like":
            return cls.circle(OU_YAWS, name=name, **kwargs)
        if name == "acceptance":
            return cls.circle(ACCEPTANCE_YAWS, name=name, **kwargs)
        if name.startswith("cocentered"):
            suffix = name.partition("-")[2]
            k = int(suffix) if suffix.isdigit() else kwargs.pop("k", 4)
            return cls.cocentered(k, **kwargs)
        raise ConfigurationError(f"unknown rig preset {name!r}")


def render_views(walk3d: np.ndarray, rig: CameraRig) -> List[PoseSequence]:
    """
    Project one 3D walk through every rig camera

    Returns:
        Frame-aligned normalized sequences, one per view in rig order

    Raises:
        DegenerateDepthError: If a joint crosses a camera plane
    """
    walk3d = np.asarray(walk3d, dtype=np.float64)
    renders = []
    for view in rig.views:
        if view.is_static:
            homogeneous = project(walk3d, view.projection())
        else:
            homogeneous = np.stack([project(walk3d[t], view.projection(t)) for t in range(len(walk3d))])
        renders.append(normalize_homogeneous(PoseSequence(homogeneous)))
    return renders


def _identity_records(
    identity: str,
    seed_sequence: np.random.SeedSequence,
    conditions: Sequence[str],
    rig: CameraRig,
    frames: int,
    runs: int,
) -> List[GaitSample]:
    rng = np.random.default_rng(seed_sequence)
    base = sample_walker_params(rng)
    records = []
    for condition in conditions:
        params = apply_condition(base, condition)
        for run in range(runs):
            walk_params = replace(params, phase=float(rng.uniform(0.0, 2.0 * np.pi)))
            walk = synth_walk_3d(walk_params, frames, seed=int(rng.integers(2 ** 32)))
            group = f"{identity}-{condition}-{run:02d}"
            for view, sequence in zip(rig.views, render_views(walk, rig)):
                records.append(GaitSample(identity, view.yaw_degrees, condition, sequence, run, group))
    return records


def generate_gait_records(
    n_identities: int,
    conditions: Sequence[str],
    rig: CameraRig,
    frames: int = DEFAULT_FRAMES,
    seed: int = 0,
    runs: int = 1,
    workers: int = 1,
) -> List[GaitSample]:
    """
    Synthesize labeled records for every identity, condition, run and view

    Identities are generated independently (optionally in a thread pool) and
    the result is sorted, so the output never depends on scheduling.
    """
    if n_identities < 2:
        raise ConfigurationError(f"need at least 2 identities, got {n_identities}")
    unknown = [c for c in conditions if c not in CONDITIONS]
    if unknown or not conditions:
        raise ConfigurationError(f"conditions must be a non-empty subset of {CONDITIONS}, got {list(conditions)}")

    children = np.random.SeedSequence(seed).spawn(n_identities)
    jobs = [(f"id{i:03d}", child) for i, child in enumerate(children)]

    def run_job(job):
        identity, child = job
        return _identity_records(identity, child, conditions, rig, frames, runs)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(run_job, jobs))
    else:
        batches = [run_job(job) for job in jobs]

    records = [record for batch in batches for record in batch]
    records.sort(key=GaitSample.sort_key)
    return records


def make_dataset(
    n_identities: int,
    conditions: Sequence[str],
    rig: CameraRig,
    frames: int,
    seed: int,
    out_path: Union[str, Path],
    runs: int = 1,
    workers: int = 1,
) -> DatasetManifest:
    """
    Generate a synthetic dataset and write it with its manifest

    Args:
        n_identities: Number of walkers (>= 2)
        conditions: Subset of NM / BG / CL
        rig: Camera rig
        frames: Frames per sequence
        seed: Root seed
        out_path: JSON-Lines output path (manifest written alongside)
        runs: Sequences per identity and condition
        workers: Thread pool size

    Returns:
        DatasetManifest
    """
    records = generate_gait_records(n_identities, conditions, rig, frames, seed, runs, workers)
    logger.info("synthesized %d records (%d ids x %d conditions x %d runs x %d views)",
                len(records), n_identities, len(conditions), runs, len(rig.views))
    return save_dataset(
        records,
        out_path,
        rig=rig.to_dict(),
        seed=seed,
        extra={"param_ranges": {k: list(v) for k, v in PARAM_RANGES.items()}, "frames": frames, "runs": runs},
    )
