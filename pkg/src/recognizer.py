"""
Gait Recognizer - Two-branch hypergraph network with contrastive training

The source branch embeds the observed single-view sequence; the generative
branch embeds the completed views through per-view heads that share their
last blocks. Both 256-dim features are concatenated into the gait embedding.
"""

import logging
from dataclasses import asdict, dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .dataio import standardize
from .errors import BatchCompositionError, ConfigurationError, ContractError, NormalizationError
from .hypergraph_conv import HypergraphConv, NormalizedAdjacency, select_adjacencies
from .skeleton import GaitSample, PoseSequence, SkeletonTopology

logger = logging.getLogger(__name__)

VIEW_MODES = ("lugan", "oracle", "aligned", "none")
FINAL_DIMS = ("concat", "project256")


@dataclass(frozen=True)
class BlockSpec:
    """One spatial-temporal block: HGC, then a temporal convolution"""

    kind: str
    in_channels: int
    out_channels: int
    temporal_stride: int = 1
    temporal_kernel: int = 9

    def validate(self) -> None:
        if self.kind not in ("basic", "residual"):
            raise ConfigurationError(f"block kind must be basic or residual, got {self.kind!r}")
        if self.temporal_stride not in (1, 2):
            raise ConfigurationError(f"temporal stride must be 1 or 2, got {self.temporal_stride}")
        if self.temporal_kernel < 1 or self.temporal_kernel % 2 == 0:
            raise ConfigurationError(f"temporal kernel must be odd, got {self.temporal_kernel}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError("block channels must be positive")

    @property
    def needs_projection(self) -> bool:
        return self.in_channels != self.out_channels or self.temporal_stride != 1


# (kind, out_channels, stride) per block; T halves at blocks 4 and 6
BLOCK_LAYOUT = (
    ("basic", 64, 1),
    ("residual", 64, 1),
    ("residual", 32, 1),
    ("residual", 128, 2),
    ("residual", 128, 1),
    ("residual", 256, 2),
    ("residual", 256, 1),
)


def block_schedule(input_channels: int = 3, width_scale: float = 1.0, temporal_kernel: int = 9) -> Tuple[BlockSpec, ...]:
    """
    The seven-block recognizer schedule

    Args:
        input_channels: Channels of the first block's input
        width_scale: Multiplier on every block width (miniature models keep the ratios)
        temporal_kernel: Temporal convolution length
    """
    specs = []
    channels = input_channels
    for kind, width, stride in BLOCK_LAYOUT:
        out = max(1, int(round(width * width_scale)))
        specs.append(BlockSpec(kind, channels, out, stride, temporal_kernel))
        channels = out
    return tuple(specs)


@dataclass
class RecognizerConfig:
    """Recognizer architecture and training hyperparameters"""

    view_list: Tuple[float, ...] = ()
    shared_blocks: int = 4
    sequence_length: int = 60
    tau: float = 0.07
    input_channels: int = 3
    width_scale: float = 1.0
    temporal_kernel: int = 9
    spatial: str = "hgc"
    hgc_orders: Tuple[int, ...] = (1, 2, 3)
    hgc_aggregate: str = "sum"
    final_dim: str = "concat"
    view_mode: str = "lugan"

    def __post_init__(self):
        self.view_list = tuple(float(v) for v in self.view_list)
        self.hgc_orders = tuple(int(o) for o in self.hgc_orders)

    def validate(self) -> None:
        if not 0 <= self.shared_blocks <= len(BLOCK_LAYOUT):
            raise ConfigurationError(f"shared_blocks must be in 0..{len(BLOCK_LAYOUT)}, got {self.shared_blocks}")
        if self.view_mode not in VIEW_MODES:
            raise ConfigurationError(f"view_mode must be one of {VIEW_MODES}, got {self.view_mode!r}")
        if self.final_dim not in FINAL_DIMS:
            raise ConfigurationError(f"final_dim must be one of {FINAL_DIMS}, got {self.final_dim!r}")
        if self.view_mode != "none" and not self.view_list:
            raise ConfigurationError("generative branch needs a non-empty view_list")
        if len(set(self.view_list)) != len(self.view_list):
            raise ConfigurationError(f"duplicate views in {self.view_list}")
        if self.sequence_length < 4 or self.sequence_length % 4:
            raise ConfigurationError(f"sequence_length must be a positive multiple of 4, got {self.sequence_length}")
        if self.tau <= 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")

    @property
    def blocks(self) -> Tuple[BlockSpec, ...]:
        return block_schedule(self.input_channels, self.width_scale, self.temporal_kernel)

    @property
    def embedding_dim_per_branch(self) -> int:
        return self.blocks[-1].out_channels

    @property
    def embedding_dim(self) -> int:
        branches = 1 if self.view_mode == "none" else 2
        if self.final_dim == "project256" and branches == 2:
            return self.embedding_dim_per_branch
        return branches * self.embedding_dim_per_branch

    def to_dict(self) -> Dict:
        payload = asdict(self)
        payload["view_list"] = list(self.view_list)
        payload["hgc_orders"] = list(self.hgc_orders)
        return payload

    @classmethod
    def from_dict(cls, payload: Dict) -> "RecognizerConfig":
        known = {k: v for k, v in payload.items() if k in cls.__dataclass_fields__}
        return cls(**known)


class GaitBlock(nn.Module):
    """HGC -> temporal conv -> ReLU, plus the shortcut on residual blocks"""

    def __init__(self, spec: BlockSpec, adjacencies: Sequence[NormalizedAdjacency], aggregate: str = "sum"):
        super().__init__()
        spec.validate()
        self.spec = spec
        self.hgc = HypergraphConv(adjacencies, spec.in_channels, spec.out_channels, aggregate)
        self.tcn = nn.Conv2d(
            spec.out_channels,
            spec.out_channels,
            kernel_size=(spec.temporal_kernel, 1),
            stride=(spec.temporal_stride, 1),
            padding=((spec.temporal_kernel - 1) // 2, 0),
        )
        if spec.kind == "basic":
            self.shortcut = None
        elif spec.needs_projection:
            self.shortcut = nn.Conv2d(spec.in_channels, spec.out_channels, kernel_size=1, stride=(spec.temporal_stride, 1))
        else:
            self.shortcut = nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = torch.relu(self.tcn(self.hgc(x)))
        if self.shortcut is not None:
            y = y + self.shortcut(x)
        return y


def block_forward(x: torch.Tensor, block: GaitBlock) -> torch.Tensor:
    """
    Apply a block to channels-last (..., T, N, C) input

    Raises:
        ContractError: On a channel mismatch
    """
    if x.shape[-1] != block.spec.in_channels:
        raise ContractError(f"block expects {block.spec.in_channels} channels, got {x.shape[-1]}")
    lead = x.shape[:-3]
    h = x.reshape((-1,) + tuple(x.shape[-3:])).permute(0, 3, 1, 2)
    out = block(h).permute(0, 2, 3, 1)
    return out.reshape(tuple(lead) + tuple(out.shape[1:]))


def _build_blocks(specs: Sequence[BlockSpec], adjacencies, aggregate: str) -> nn.ModuleList:
    return nn.ModuleList(GaitBlock(spec, adjacencies, aggregate) for spec in specs)


def _pool(x: torch.Tensor) -> torch.Tensor:
    return x.mean(dim=(2, 3))


class SourceBranch(nn.Module):
    """Seven blocks then global average pooling over frames and joints"""

    def __init__(self, config: RecognizerConfig, adjacencies):
        super().__init__()
        self.blocks = _build_blocks(config.blocks, adjacencies, config.hgc_aggregate)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        return _pool(x)


class GenerativeBranch(nn.Module):
    """
    Multi-head branch over the completed views

    Each view owns its first (7 - shared_blocks) blocks; the remaining blocks
    are shared. Per-view pooled features are averaged.
    """

    def __init__(self, config: RecognizerConfig, adjacencies):
        super().__init__()
        specs = config.blocks
        split = len(specs) - config.shared_blocks
        self.view_list = config.view_list
        self.heads = nn.ModuleList(
            _build_blocks(specs[:split], adjacencies, config.hgc_aggregate) for _ in self.view_list
        )
        self.shared = _build_blocks(specs[split:], adjacencies, config.hgc_aggregate)

    def forward(self, views: torch.Tensor) -> torch.Tensor:
        """
        Args:
            views: (V, B, C, T, N), one slice per configured view in order

        Returns:
            (B, C_out) averaged feature
        """
        if views.shape[0] != len(self.view_list):
            raise ContractError(f"expected {len(self.view_list)} views, got {views.shape[0]}")
        features = []
        for head, x in zip(self.heads, views):
            for block in head:
                x = block(x)
            for block in self.shared:
                x = block(x)
            features.append(_pool(x))
        return torch.stack(features).mean(dim=0)


class GaitRecognizer(nn.Module):
    """Source branch plus (unless view_mode is none) the generative branch"""

    def __init__(self, config: RecognizerConfig, topology: SkeletonTopology = None):
        super().__init__()
        config.validate()
        self.config = config
        self.topology = topology or SkeletonTopology.coco()
        adjacencies = select_adjacencies(self.topology, config.spatial, config.hgc_orders)
        self.source_branch = SourceBranch(config, adjacencies)
        self.generative_branch = GenerativeBranch(config, adjacencies) if config.view_mode != "none" else None
        width = config.embedding_dim_per_branch
        self.project = nn.Linear(2 * width, width) if self.generative_branch is not None and config.final_dim == "project256" else None

    def forward(self, source: torch.Tensor, views: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        """
        Args:
            source: (B, C, T, N) standardized source sequences
            views: (V, B, C, T, N) completed views, required with a generative branch

        Returns:
            (f_alpha, f_beta); f_beta is None without a generative branch
        """
        if source.shape[2] % 4:
            raise ContractError(f"sequence length {source.shape[2]} is not divisible by 4")
        f_alpha = self.source_branch(source)
        if self.generative_branch is None:
            return f_alpha, None
        if views is None:
            raise ContractError("generative branch needs the completed views")
        return f_alpha, self.generative_branch(views)

    def embedding(self, f_alpha: torch.Tensor, f_beta: Optional[torch.Tensor]) -> torch.Tensor:
        """L2-normalized final representation"""
        if f_beta is None:
            vector = f_alpha
        else:
            vector = torch.cat([f_alpha, f_beta], dim=-1)
            if self.project is not None:
                vector = self.project(vector)
        norms = vector.norm(dim=-1, keepdim=True)
        if torch.any(norms <= 0):
            raise NormalizationError("cannot normalize a zero embedding")
        return vector / norms


def sequence_tensor(seq: PoseSequence, noise_std: float = 0.0, rng: Optional[np.random.Generator] = None) -> torch.Tensor:
    """(C, T, N) float32 model input: standardized x, y plus confidence"""
    values = standardize(seq)
    if noise_std > 0:
        rng = rng or np.random.default_rng()
        values[..., :2] += rng.normal(0.0, noise_std, size=values[..., :2].shape)
    return torch.tensor(values, dtype=torch.float32).permute(2, 0, 1)


@dataclass
class EmbeddingRecord:
    """Final gait representation of one sample"""

    identity: str
    view_degrees: float
    condition: str
    vector: np.ndarray
    run: int = 0
    normalized: bool = True
    generated: bool = False

    def to_dict(self) -> Dict:
        return {
            "id": self.identity,
            "view_deg": self.view_degrees,
            "cond": self.condition,
            "run": self.run,
            "normalized": self.normalized,
            "generated": self.generated,
            "vector": np.asarray(self.vector).tolist(),
        }


def embed(sample: GaitSample, model: GaitRecognizer, completer=None) -> EmbeddingRecord:
    """
    Embed one sample

    Args:
        sample: Source sample
        model: Recognizer
        completer: Object with ``complete(sample) -> [PoseSequence per view]``;
            unused when the model has no generative branch

    Returns:
        Unit-norm EmbeddingRecord
    """
    length = model.config.sequence_length
    indices = np.arange(length)
    source = sample.sequence.take_frames(indices % sample.sequence.frames)
    views = None
    if model.generative_branch is not None:
        if completer is None:
            raise ContractError("a view completer is required for the generative branch")
        completed = completer.complete(sample)
        views = torch.stack([
            sequence_tensor(seq.take_frames(indices % seq.frames)) for seq in completed
        ]).unsqueeze(1)

    was_training = model.training
    model.eval()
    with torch.no_grad():
        f_alpha, f_beta = model(sequence_tensor(source).unsqueeze(0), views)
        vector = model.embedding(f_alpha, f_beta)[0].double().numpy()
    model.train(was_training)
    return EmbeddingRecord(
        identity=sample.identity,
        view_degrees=sample.view_degrees,
        condition=sample.condition,
        vector=vector,
        run=sample.run,
        generated=sample.generated,
    )


def check_batch_composition(labels: Sequence) -> None:
    """
    Raises:
        BatchCompositionError: Unless >= 2 classes are present, each at least twice
    """
    values, counts = np.unique(np.asarray(labels), return_counts=True)
    if len(values) < 2:
        raise BatchCompositionError("contrastive batch needs at least two identities")
    if np.any(counts < 2):
        raise BatchCompositionError(f"identities with a single sample: {values[counts < 2].tolist()}")


def supcon_loss(features: torch.Tensor, labels: Sequence, tau: float = 0.07) -> torch.Tensor:
    """
    Supervised contrastive loss with a negatives-only denominator

    For anchor i with positives P(i) (same label, j != i) and negatives
    N(i) (different label):

        l_i = -1/|P(i)| sum_{j in P(i)} log( exp(f_i.f_j / tau) / sum_{k in N(i)} exp(f_i.f_k / tau) )

    and the loss is the mean over anchors. Features are L2-normalized first.
    The value can be negative.

    Raises:
        BatchCompositionError: For single-class batches or singleton classes
    """
    label_array = np.asarray(labels)
    check_batch_composition(label_array)
    _, codes = np.unique(label_array, return_inverse=True)
    codes = torch.as_tensor(codes, device=features.device)

    f = F.normalize(features, dim=-1)
    logits = f @ f.T / tau
    same = codes[:, None] == codes[None, :]
    eye = torch.eye(len(codes), dtype=torch.bool, device=features.device)
    positives = same & ~eye
    negatives = ~same

    log_denominator = torch.logsumexp(logits.masked_fill(~negatives, float("-inf")), dim=1)
    log_prob = logits - log_denominator[:, None]
    per_anchor = -(log_prob * positives).sum(dim=1) / positives.sum(dim=1)
    return per_anchor.mean()


def total_loss(
    f_alpha: torch.Tensor,
    f_beta: Optional[torch.Tensor],
    labels: Sequence,
    tau: float = 0.07,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Sum of the two branch losses

    Returns:
        (total, loss_alpha, loss_beta); loss_beta is 0 for the single-branch baseline
    """
    loss_alpha = supcon_loss(f_alpha, labels, tau)
    if f_beta is None:
        loss_beta = torch.zeros((), dtype=loss_alpha.dtype)
    else:
        loss_beta = supcon_loss(f_beta, labels, tau)
    return loss_alpha + loss_beta, loss_alpha, loss_beta


def count_parameters(module: nn.Module) -> int:
    """Number of trainable parameters"""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def sharing_parameter_table(config: RecognizerConfig, topology: SkeletonTopology = None) -> List[Dict]:
    """Generative-branch parameter count for every shared_blocks setting"""
    rows = []
    for shared in range(len(BLOCK_LAYOUT) + 1):
        model = GaitRecognizer(replace(config, shared_blocks=shared, view_mode="lugan"), topology)
        rows.append({
            "shared_blocks": shared,
            "generative_parameters": count_parameters(model.generative_branch),
            "total_parameters": count_parameters(model),
        })
    return rows
