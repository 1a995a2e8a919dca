"""
LUGAN - Cross-view pose generation through LU-composed view transforms

The generator reads a source pose sequence and a target view angle and
emits lower / upper triangular factors whose product is a guaranteed
full-rank 3x3 transform Q. The pose is moved to the target view by
left-multiplying its homogeneous joints with Q. A conditional
discriminator scores (pose | source pose, view) triples.

Q is learned in a normalized image frame x~ = K_n^-1 x so that its entries
stay O(1); ``to_pixel_transform`` maps it back.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn

from .camera_geometry import CameraIntrinsics, ViewTransform, apply_view_transform
from .errors import ConfigurationError, ContractError, DegenerateDepthError
from .hypergraph_conv import graph_adjacency
from .recognizer import BlockSpec, GaitBlock
from .skeleton import W_MIN, PoseSequence, SkeletonTopology

logger = logging.getLogger(__name__)

CYCLE_NORMS = ("fro", "spectral")


@dataclass
class GeneratorConfig:
    """LUGAN architecture and training hyperparameters"""

    gcn_channels: Tuple[int, ...] = (32, 32, 64, 64, 64, 128, 128)
    fc_dims: Tuple[int, ...] = (64, 128)
    cnn_channels: Tuple[int, ...] = (64, 128, 256, 512, 1)
    diag_floor: float = 1e-3
    init_scale: float = 0.1
    qgan_mode: bool = False
    temporal_kernel: int = 9
    cycle_norm: str = "fro"
    focal_px: float = 1000.0
    principal_point: Tuple[float, float] = (512.0, 384.0)
    sequence_length: int = 60

    def __post_init__(self):
        self.gcn_channels = tuple(int(c) for c in self.gcn_channels)
        self.fc_dims = tuple(int(c) for c in self.fc_dims)
        self.cnn_channels = tuple(int(c) for c in self.cnn_channels)
        self.principal_point = tuple(float(c) for c in self.principal_point)

    def validate(self) -> None:
        if self.diag_floor <= 0:
            raise ConfigurationError(f"diag_floor must be positive, got {self.diag_floor}")
        if self.init_scale < 0:
            raise ConfigurationError(f"init_scale must be non-negative, got {self.init_scale}")
        if not self.gcn_channels or len(self.fc_dims) < 1:
            raise ConfigurationError("generator needs GCN and FC layers")
        if self.fc_dims[-1] != self.gcn_channels[-1]:
            raise ConfigurationError(
                f"view feature width {self.fc_dims[-1]} must match pose feature width {self.gcn_channels[-1]}"
            )
        if len(self.cnn_channels) < 2 or self.cnn_channels[-1] != 1:
            raise ConfigurationError("cnn_channels must end with a single output channel")
        if self.cycle_norm not in CYCLE_NORMS:
            raise ConfigurationError(f"cycle_norm must be one of {CYCLE_NORMS}, got {self.cycle_norm!r}")

    @classmethod
    def miniature(cls, **overrides) -> "GeneratorConfig":
        """Reduced widths for fast runs and gradient checks"""
        base = dict(
            gcn_channels=(8, 8, 16, 16, 16, 32, 32),
            fc_dims=(16, 32),
            cnn_channels=(16, 32, 64, 128, 1),
        )
        base.update(overrides)
        return cls(**base)

    @property
    def frame(self) -> np.ndarray:
        """Normalizing intrinsics K_n"""
        return CameraIntrinsics.from_focal(self.focal_px, self.principal_point).matrix

    def to_dict(self) -> Dict:
        payload = asdict(self)
        for key in ("gcn_channels", "fc_dims", "cnn_channels", "principal_point"):
            payload[key] = list(payload[key])
        return payload

    @classmethod
    def from_dict(cls, payload: Dict) -> "GeneratorConfig":
        return cls(**{k: v for k, v in payload.items() if k in cls.__dataclass_fields__})


@dataclass
class TriangularFactors:
    """Batched (B, 3, 3) lower and upper factors"""

    lower: torch.Tensor
    upper: torch.Tensor


@dataclass(frozen=True)
class DiscriminatorScore:
    logit: float

    def __post_init__(self):
        if not np.isfinite(self.logit):
            raise ContractError("discriminator score is not finite")


class PoseEncoder(nn.Module):
    """Graph-conv block stack over (B, C, T, N), averaged over frames -> (B, N, C_out)"""

    def __init__(self, channels: Sequence[int], topology: SkeletonTopology, in_channels: int = 3, temporal_kernel: int = 9):
        super().__init__()
        adjacency = [graph_adjacency(topology)]
        blocks = []
        previous = in_channels
        for index, width in enumerate(channels):
            kind = "basic" if index == 0 else "residual"
            blocks.append(GaitBlock(BlockSpec(kind, previous, width, 1, temporal_kernel), adjacency))
            previous = width
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        return x.mean(dim=2).transpose(1, 2)


class ViewEncoder(nn.Module):
    """(sin, cos) of the view angle through the FC layers"""

    def __init__(self, dims: Sequence[int]):
        super().__init__()
        layers = []
        previous = 2
        for index, width in enumerate(dims):
            layers.append(nn.Linear(previous, width))
            if index < len(dims) - 1:
                layers.append(nn.ReLU())
            previous = width
        self.net = nn.Sequential(*layers)

    def forward(self, degrees: torch.Tensor) -> torch.Tensor:
        radians = torch.deg2rad(degrees)
        return self.net(torch.stack([torch.sin(radians), torch.cos(radians)], dim=-1))


class InteractionMap(nn.Module):
    """
    Pairwise node map over F = [pose features ; broadcast view feature]

    entry (i, j) = W1 F_i + W2 F_j + b, giving (B, C, 2N, 2N).
    """

    def __init__(self, feature_dim: int, channels: int):
        super().__init__()
        self.row = nn.Linear(feature_dim, channels, bias=False)
        self.col = nn.Linear(feature_dim, channels, bias=False)
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, pose_feat: torch.Tensor, view_feat: torch.Tensor) -> torch.Tensor:
        stacked = torch.cat([pose_feat, view_feat[:, None, :].expand_as(pose_feat)], dim=1)
        rows = self.row(stacked).transpose(1, 2)
        cols = self.col(stacked).transpose(1, 2)
        return rows[:, :, :, None] + cols[:, :, None, :] + self.bias[None, :, None, None]


def interaction_map(pose_feat: torch.Tensor, view_feat: torch.Tensor, module: InteractionMap) -> torch.Tensor:
    """Functional wrapper accepting unbatched (N, C) / (C,) inputs too"""
    if pose_feat.dim() == 2:
        return module(pose_feat[None], view_feat[None])[0]
    return module(pose_feat, view_feat)


def _cnn_stack(channels: Sequence[int]) -> nn.Sequential:
    """Stride-2 3x3 convolutions, adaptive reduction to 3x3, 1x1 conv to one channel"""
    layers = []
    for c_in, c_out in zip(channels[:-2], channels[1:-1]):
        layers += [nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1), nn.ReLU()]
    layers += [nn.AdaptiveAvgPool2d(3), nn.Conv2d(channels[-2], channels[-1], kernel_size=1)]
    return nn.Sequential(*layers)


def _zero_last(stack: nn.Sequential) -> None:
    nn.init.zeros_(stack[-1].weight)
    nn.init.zeros_(stack[-1].bias)


def lu_heads(
    feature_map: torch.Tensor,
    lower_head: nn.Module,
    upper_head: nn.Module,
    init_scale: float = 0.1,
    diag_floor: float = 1e-3,
) -> TriangularFactors:
    """
    Triangular factors from the interaction map

    lower = tril(I + s * raw_L), upper = triu(I + s * raw_U), then every
    diagonal entry d becomes sign(d) * max(|d|, floor) with sign(0) = +1.
    """
    eye = torch.eye(3, dtype=feature_map.dtype, device=feature_map.device)
    raw_lower = lower_head(feature_map)[:, 0]
    raw_upper = upper_head(feature_map)[:, 0]
    lower = _floor_diagonal(torch.tril(eye + init_scale * raw_lower), diag_floor)
    upper = _floor_diagonal(torch.triu(eye + init_scale * raw_upper), diag_floor)
    return TriangularFactors(lower, upper)


def _floor_diagonal(m: torch.Tensor, floor: float) -> torch.Tensor:
    d = torch.diagonal(m, dim1=-2, dim2=-1)
    sign = torch.where(d >= 0, torch.ones_like(d), -torch.ones_like(d))
    floored = sign * torch.clamp(d.abs(), min=floor)
    return m - torch.diag_embed(d) + torch.diag_embed(floored)


def compose_full_rank(factors: TriangularFactors) -> torch.Tensor:
    """Q = lower @ upper; det(Q) is the product of the six diagonal entries"""
    return factors.lower @ factors.upper


class Generator(nn.Module):
    """Pose + view -> full-rank 3x3 transform (normalized frame)"""

    def __init__(self, config: GeneratorConfig, topology: SkeletonTopology = None):
        super().__init__()
        config.validate()
        self.config = config
        topology = topology or SkeletonTopology.coco()
        self.pose_encoder = PoseEncoder(config.gcn_channels, topology, temporal_kernel=config.temporal_kernel)
        self.view_encoder = ViewEncoder(config.fc_dims)
        self.interaction = InteractionMap(config.gcn_channels[-1], config.cnn_channels[0])
        if config.qgan_mode:
            self.q_head = _cnn_stack(config.cnn_channels)
            _zero_last(self.q_head)
        else:
            self.lower_head = _cnn_stack(config.cnn_channels)
            self.upper_head = _cnn_stack(config.cnn_channels)
            _zero_last(self.lower_head)
            _zero_last(self.upper_head)

    def forward(self, x: torch.Tensor, beta: torch.Tensor) -> Tuple[torch.Tensor, Optional[TriangularFactors]]:
        """
        Args:
            x: (B, 3, T, N) normalized-frame x, y plus confidence
            beta: (B,) target view degrees

        Returns:
            (Q, factors); factors is None in qgan mode
        """
        feature_map = self.interaction(self.pose_encoder(x), self.view_encoder(beta))
        if self.config.qgan_mode:
            eye = torch.eye(3, dtype=feature_map.dtype, device=feature_map.device)
            return eye + self.config.init_scale * self.q_head(feature_map)[:, 0], None
        factors = lu_heads(feature_map, self.lower_head, self.upper_head, self.config.init_scale, self.config.diag_floor)
        return compose_full_rank(factors), factors


class Discriminator(nn.Module):
    """Scores a pose sequence conditioned on the source pose and the target view"""

    def __init__(self, config: GeneratorConfig, topology: SkeletonTopology = None):
        super().__init__()
        topology = topology or SkeletonTopology.coco()
        width = config.gcn_channels[-1]
        self.input_encoder = PoseEncoder(config.gcn_channels, topology, temporal_kernel=config.temporal_kernel)
        self.condition_encoder = PoseEncoder(config.gcn_channels, topology, temporal_kernel=config.temporal_kernel)
        self.view_encoder = ViewEncoder(config.fc_dims)
        self.fuse = nn.Linear(2 * width, width)
        self.interaction = InteractionMap(width, config.cnn_channels[0])
        layers = []
        channels = config.cnn_channels
        for c_in, c_out in zip(channels[:-2], channels[1:-1]):
            layers += [nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1), nn.ReLU()]
        layers += [nn.Conv2d(channels[-2], channels[-1], kernel_size=1), nn.AdaptiveAvgPool2d(1)]
        self.cnn = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor, condition: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
        """(B,) scores in [0, 1]"""
        nodes = torch.cat([self.input_encoder(x), self.condition_encoder(condition)], dim=-1)
        feature_map = self.interaction(self.fuse(nodes), self.view_encoder(beta))
        return torch.sigmoid(self.cnn(feature_map).flatten(1)[:, 0])


class LUGAN(nn.Module):
    """Generator / discriminator pair plus the rig views it was trained on"""

    def __init__(self, config: GeneratorConfig, topology: SkeletonTopology = None, view_list: Sequence[float] = ()):
        super().__init__()
        self.config = config
        self.generator = Generator(config, topology)
        self.discriminator = Discriminator(config, topology)
        self.view_list = tuple(float(v) for v in view_list)


def to_normalized_frame(coords: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """Homogeneous pixel joints (..., 3) -> normalized frame, w = 1"""
    moved = coords @ np.linalg.inv(frame).T
    return moved / moved[..., 2:3]


def pose_tensor(seq: PoseSequence, frame: np.ndarray) -> torch.Tensor:
    """(3, T, N) generator input: normalized-frame x, y plus confidence"""
    coords = to_normalized_frame(seq.coords, frame)
    values = np.concatenate([coords[..., :2], seq.confidence[..., None]], axis=-1)
    return torch.tensor(values, dtype=torch.float32).permute(2, 0, 1)


def transform_batch(q: torch.Tensor, x: torch.Tensor, w_min: float = W_MIN) -> torch.Tensor:
    """
    Apply per-sample Q to (B, 3, T, N) generator inputs, keeping confidence

    Raises:
        DegenerateDepthError: If a transformed joint lands at |w| <= w_min
    """
    homogeneous = torch.cat([x[:, :2], torch.ones_like(x[:, :1])], dim=1)
    moved = torch.einsum("bij,bjtn->bitn", q, homogeneous)
    w = moved[:, 2:3]
    bad = (w.detach().abs() <= w_min).nonzero()
    if len(bad):
        _, _, t, n = (int(v) for v in bad[0])
        raise DegenerateDepthError(t, n, float(w[bad[0][0], 0, t, n]))
    return torch.cat([moved[:, :2] / w, x[:, 2:3]], dim=1)


def to_pixel_transform(q: np.ndarray, frame: np.ndarray, residual: float = 0.0) -> ViewTransform:
    """Normalized-frame Q -> pixel-frame ViewTransform K_n Q K_n^-1"""
    return ViewTransform(q, residual=residual).conjugate(frame)


def generate_pose(g_alpha: PoseSequence, beta: float, generator: Generator) -> Tuple[PoseSequence, ViewTransform]:
    """
    Move a pose sequence to view ``beta``

    Returns:
        (generated sequence, pixel-frame transform)

    Raises:
        DegenerateDepthError: If the transform sends a joint to infinity
    """
    frame = generator.config.frame
    was_training = generator.training
    generator.eval()
    with torch.no_grad():
        parameter = next(generator.parameters())
        x = pose_tensor(g_alpha, frame).unsqueeze(0).to(parameter.dtype)
        q, _ = generator(x, torch.tensor([float(beta)], dtype=parameter.dtype))
    generator.train(was_training)
    transform = to_pixel_transform(q[0].double().numpy(), frame)
    return apply_view_transform(transform, g_alpha), transform


def discriminator_score(
    x: PoseSequence,
    cond_pose: PoseSequence,
    cond_beta: float,
    discriminator: Discriminator,
    frame: np.ndarray,
) -> DiscriminatorScore:
    """Score of one (pose | condition pose, view) triple"""
    with torch.no_grad():
        parameter = next(discriminator.parameters())
        score = discriminator(
            pose_tensor(x, frame).unsqueeze(0).to(parameter.dtype),
            pose_tensor(cond_pose, frame).unsqueeze(0).to(parameter.dtype),
            torch.tensor([float(cond_beta)], dtype=parameter.dtype),
        )
    return DiscriminatorScore(float(score[0]))


def cycle_residual(q_ab: torch.Tensor, q_ba: torch.Tensor, norm: str = "fro") -> torch.Tensor:
    """Per-sample ||I - Q_ab Q_ba|| (Frobenius or spectral)"""
    q_ab = torch.as_tensor(q_ab)
    q_ba = torch.as_tensor(q_ba, dtype=q_ab.dtype)
    eye = torch.eye(3, dtype=q_ab.dtype, device=q_ab.device)
    ord_ = "fro" if norm == "fro" else 2
    return torch.linalg.matrix_norm(eye - q_ab @ q_ba, ord=ord_)


def generator_loss(q_ab, q_ba, d_score_fake, cycle_norm: str = "fro") -> torch.Tensor:
    """||I - Q_ab Q_ba|| + (1 - d_fake)^2, averaged over the batch"""
    residual = cycle_residual(q_ab, q_ba, cycle_norm)
    d_fake = torch.as_tensor(d_score_fake, dtype=residual.dtype)
    return (residual + (1.0 - d_fake) ** 2).mean()


def discriminator_loss(d_real, d_fake) -> torch.Tensor:
    """(1 - d_real)^2 + d_fake^2, averaged over the batch"""
    d_real = torch.as_tensor(d_real)
    d_fake = torch.as_tensor(d_fake, dtype=d_real.dtype)
    return ((1.0 - d_real) ** 2 + d_fake ** 2).mean()
