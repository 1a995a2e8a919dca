"""
Skeleton Core - Joint topology, hypergraph presets and pose-sequence data model

Defines the COCO 17-joint skeleton, the three hypergraph orders built on it
(joint / part / body level) and the immutable PoseSequence and GaitSample
records exchanged by every other module.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    ContractError,
    DegenerateDepthError,
    TopologyError,
    UnsupportedTopologyError,
)
from .utils import load_json, save_json

W_MIN = 1e-6
CONDITIONS = ("NM", "BG", "CL")

COCO_JOINT_NAMES = (
    "nose",
    "left_eye", "right_eye",
    "left_ear", "right_ear",
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
    "left_hip", "right_hip",
    "left_knee", "right_knee",
    "left_ankle", "right_ankle",
)

COCO_BONES = (
    (0, 1), (0, 2), (1, 2), (1, 3), (2, 4),
    (3, 5), (4, 6), (5, 6),
    (5, 7), (7, 9), (6, 8), (8, 10),
    (5, 11), (6, 12), (11, 12),
    (11, 13), (13, 15), (12, 14), (14, 16),
)

PART_HYPEREDGES = {
    "head": (0, 1, 2, 3, 4),
    "torso": (5, 6, 11, 12),
    "left_arm": (5, 7, 9),
    "right_arm": (6, 8, 10),
    "left_leg": (11, 13, 15),
    "right_leg": (12, 14, 16),
}

BODY_HYPEREDGES = {
    "upper": (0, 1, 2, 3, 4, 5, 6),
    "mid": (5, 6, 7, 8, 9, 10, 11, 12),
    "lower": (11, 12, 13, 14, 15, 16),
}


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class SkeletonTopology:
    """Joint names plus the undirected bone list"""

    joint_names: Tuple[str, ...]
    bones: Tuple[Tuple[int, int], ...]

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    @classmethod
    def coco(cls) -> "SkeletonTopology":
        return cls(COCO_JOINT_NAMES, COCO_BONES)

    def validate(self) -> None:
        """
        Check bone endpoints, duplicates and connectivity

        Raises:
            TopologyError: On any violated invariant
        """
        n = self.joint_count
        if n < 1:
            raise TopologyError("topology has no joints")
        seen = set()
        for a, b in self.bones:
            if a == b:
                raise TopologyError(f"bone ({a},{b}) is a self-loop")
            if not (0 <= a < n and 0 <= b < n):
                raise TopologyError(f"bone ({a},{b}) outside [0, {n})")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise TopologyError(f"duplicate bone ({a},{b})")
            seen.add(key)

        n_components, _ = connected_components(self._bone_csr(), directed=False)
        if n_components != 1:
            raise TopologyError(f"bone graph is disconnected ({n_components} components)")

    def _bone_csr(self):
        n = self.joint_count
        if not self.bones:
            return coo_matrix((n, n)).tocsr()
        rows = [a for a, _ in self.bones]
        cols = [b for _, b in self.bones]
        return coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()

    def adjacency(self) -> np.ndarray:
        """Symmetric 0/1 bone adjacency matrix A"""
        a = np.zeros((self.joint_count, self.joint_count))
        for i, j in self.bones:
            a[i, j] = a[j, i] = 1.0
        return a

    def to_dict(self) -> Dict:
        return {"joint_names": list(self.joint_names), "bones": [list(b) for b in self.bones]}

    @classmethod
    def from_dict(cls, payload: Dict) -> "SkeletonTopology":
        return cls(
            tuple(payload["joint_names"]),
            tuple((int(a), int(b)) for a, b in payload["bones"]),
        )


@dataclass(frozen=True, eq=False)
class HypergraphSpec:
    """Node-hyperedge incidence matrix of one correlation order"""

    order: int
    incidence: np.ndarray
    hyperedge_names: Tuple[str, ...]

    def __post_init__(self):
        h = np.asarray(self.incidence, dtype=np.float64)
        object.__setattr__(self, "incidence", _frozen(h))
        self.validate()

    @property
    def node_count(self) -> int:
        return self.incidence.shape[0]

    @property
    def edge_count(self) -> int:
        return self.incidence.shape[1]

    def validate(self) -> None:
        h = self.incidence
        if self.order not in (1, 2, 3):
            raise TopologyError(f"hypergraph order must be 1, 2 or 3, got {self.order}")
        if h.ndim != 2 or h.shape[1] != len(self.hyperedge_names):
            raise TopologyError("incidence columns do not match hyperedge names")
        if not np.all((h == 0) | (h == 1)):
            raise TopologyError("incidence entries must be exactly 0 or 1")
        col_sums = h.sum(axis=0)
        if np.any(col_sums < 2):
            raise TopologyError("every hyperedge must connect at least two nodes")
        if self.order == 1 and np.any(col_sums != 2):
            raise TopologyError("order-1 hyperedges must connect exactly two nodes")
        if np.any(h.sum(axis=1) < 1):
            raise TopologyError("every node must belong to at least one hyperedge")

    def members(self) -> Dict[str, List[int]]:
        return {
            name: np.flatnonzero(self.incidence[:, e]).tolist()
            for e, name in enumerate(self.hyperedge_names)
        }

    @classmethod
    def from_members(cls, order: int, node_count: int, members: Dict[str, Sequence[int]]) -> "HypergraphSpec":
        h = np.zeros((node_count, len(members)))
        for e, nodes in enumerate(members.values()):
            for v in nodes:
                if not 0 <= v < node_count:
                    raise TopologyError(f"hyperedge member {v} outside [0, {node_count})")
                h[v, e] = 1.0
        return cls(order, h, tuple(members))


def build_bone_graph(topology: SkeletonTopology) -> HypergraphSpec:
    """
    Order-1 hypergraph: one two-node hyperedge per bone

    Raises:
        TopologyError: If the topology is invalid or disconnected
    """
    topology.validate()
    members = {
        f"{topology.joint_names[a]}-{topology.joint_names[b]}": (a, b)
        for a, b in topology.bones
    }
    return HypergraphSpec.from_members(1, topology.joint_count, members)


def _require_coco(topology: SkeletonTopology) -> None:
    if topology.joint_count != 17:
        raise UnsupportedTopologyError(
            f"part/body hypergraphs need the 17-joint skeleton, got {topology.joint_count} joints"
        )


def build_part_hypergraph(topology: SkeletonTopology) -> HypergraphSpec:
    """Order-2 hypergraph with six limb/part hyperedges"""
    _require_coco(topology)
    return HypergraphSpec.from_members(2, 17, PART_HYPEREDGES)


def build_body_hypergraph(topology: SkeletonTopology) -> HypergraphSpec:
    """Order-3 hypergraph with upper / mid / lower body hyperedges"""
    _require_coco(topology)
    return HypergraphSpec.from_members(3, 17, BODY_HYPEREDGES)


def build_hypergraphs(topology: SkeletonTopology) -> Tuple[HypergraphSpec, HypergraphSpec, HypergraphSpec]:
    """All three orders for a canonical topology"""
    return (
        build_bone_graph(topology),
        build_part_hypergraph(topology),
        build_body_hypergraph(topology),
    )


def save_topology_preset(topology: SkeletonTopology, path: Union[str, Path]) -> Path:
    """
    Write joint names, bones and hyperedge member lists to a JSON file

    The file pins the presets exactly so downstream tools can compare them.
    """
    payload = topology.to_dict()
    payload["hypergraphs"] = {
        str(spec.order): spec.members() for spec in build_hypergraphs(topology)
    }
    return save_json(payload, path)


def load_topology_preset(path: Union[str, Path]) -> Tuple[SkeletonTopology, List[HypergraphSpec]]:
    payload = load_json(path)
    topology = SkeletonTopology.from_dict(payload)
    topology.validate()
    specs = [
        HypergraphSpec.from_members(int(order), topology.joint_count, members)
        for order, members in sorted(payload.get("hypergraphs", {}).items())
    ]
    return topology, specs


@dataclass(frozen=True, eq=False)
class PoseSequence:
    """
    T x N joint trajectory in homogeneous image coordinates

    coords[t, i] = (x, y, w); confidence[t, i] in [0, 1].
    """

    coords: np.ndarray
    confidence: Optional[np.ndarray] = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 3 or coords.shape[2] != 3 or coords.shape[0] < 1:
            raise ContractError(f"pose coords must be T x N x 3 with T >= 1, got {coords.shape}")
        confidence = self.confidence
        if confidence is None:
            confidence = np.ones(coords.shape[:2])
        confidence = np.asarray(confidence, dtype=np.float64)
        if confidence.shape != coords.shape[:2]:
            raise ContractError(
                f"confidence shape {confidence.shape} does not match coords {coords.shape[:2]}"
            )
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "confidence", _frozen(confidence))

    @property
    def frames(self) -> int:
        return self.coords.shape[0]

    @property
    def joint_count(self) -> int:
        return self.coords.shape[1]

    @property
    def xy(self) -> np.ndarray:
        return self.coords[..., :2]

    @classmethod
    def from_xy(cls, xy: np.ndarray, confidence: Optional[np.ndarray] = None) -> "PoseSequence":
        xy = np.asarray(xy, dtype=np.float64)
        coords = np.concatenate([xy, np.ones(xy.shape[:2] + (1,))], axis=2)
        return cls(coords, confidence)

    def with_coords(self, coords: np.ndarray) -> "PoseSequence":
        return PoseSequence(coords, self.confidence)

    def take_frames(self, indices: np.ndarray) -> "PoseSequence":
        return PoseSequence(self.coords[indices], self.confidence[indices])

    def check_topology(self, topology: SkeletonTopology) -> None:
        if self.joint_count != topology.joint_count:
            raise ContractError(
                f"sequence has {self.joint_count} joints, topology has {topology.joint_count}"
            )


def normalize_homogeneous(seq: PoseSequence, w_min: float = W_MIN) -> PoseSequence:
    """
    Divide every joint by its third coordinate

    Args:
        seq: Pose sequence with arbitrary w
        w_min: Smallest admissible |w|

    Returns:
        Sequence with coords[..., 2] == 1 exactly

    Raises:
        DegenerateDepthError: Naming the first offending (frame, joint)
    """
    w = seq.coords[..., 2]
    bad = np.argwhere(~(np.abs(w) > w_min))
    if len(bad):
        t, i = (int(v) for v in bad[0])
        raise DegenerateDepthError(t, i, float(w[t, i]))
    coords = seq.coords / w[..., None]
    coords[..., 2] = 1.0
    return seq.with_coords(coords)


@dataclass(frozen=True, eq=False)
class GaitSample:
    """One labeled pose sequence of the dataset"""

    identity: str
    view_degrees: float
    condition: str
    sequence: PoseSequence
    run: int = 0
    aligned_group: Optional[str] = None
    provenance: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ContractError(f"unknown condition {self.condition!r}; expected one of {CONDITIONS}")
        object.__setattr__(self, "view_degrees", float(self.view_degrees))
        object.__setattr__(self, "run", int(self.run))

    @property
    def generated(self) -> bool:
        return bool(self.provenance.get("generated", False))

    def sort_key(self) -> Tuple:
        return (self.identity, CONDITIONS.index(self.condition), self.run, self.view_degrees)
