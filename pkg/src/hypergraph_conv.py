"""
Hypergraph Convolution - Normalized adjacencies and the multi-order HGC layer

Builds the constant propagation operators D^-1/2 H B^-1 H^T D^-1/2 for each
correlation order and applies them per frame:

    X_j = ReLU(A_j X W_j),  output = sum_j X_j  (or the mean, if configured)
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
import torch.nn as nn

from .errors import ConfigurationError, ContractError, IsolatedElementError
from .skeleton import HypergraphSpec, SkeletonTopology, build_hypergraphs

logger = logging.getLogger(__name__)

AGGREGATES = ("sum", "mean")
GRAPH_ORDER = 0


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """Symmetric N x N propagation operator of one order (0 = plain graph)"""

    matrix: np.ndarray
    source_order: int

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64, copy=True)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def node_count(self) -> int:
        return self.matrix.shape[0]

    def tensor(self, dtype=torch.float32) -> torch.Tensor:
        return torch.tensor(self.matrix, dtype=dtype)


def _incidence(h: Union[HypergraphSpec, np.ndarray]) -> np.ndarray:
    if isinstance(h, HypergraphSpec):
        return h.incidence
    return np.asarray(h, dtype=np.float64)


def degree_matrices(h: Union[HypergraphSpec, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Node degree D (row sums of H) and hyperedge degree B (column sums)

    Raises:
        IsolatedElementError: If a node or hyperedge has degree zero
    """
    incidence = _incidence(h)
    node_degree = incidence.sum(axis=1)
    edge_degree = incidence.sum(axis=0)
    if np.any(node_degree <= 0):
        raise IsolatedElementError(f"isolated nodes {np.flatnonzero(node_degree <= 0).tolist()}")
    if np.any(edge_degree <= 0):
        raise IsolatedElementError(f"empty hyperedges {np.flatnonzero(edge_degree <= 0).tolist()}")
    return np.diag(node_degree), np.diag(edge_degree)


def normalized_adjacency(h: Union[HypergraphSpec, np.ndarray], order: int = None) -> NormalizedAdjacency:
    """
    D^-1/2 H B^-1 H^T D^-1/2 for one incidence matrix

    Args:
        h: Hypergraph (or a raw incidence array)
        order: Order tag; taken from the HypergraphSpec when not given

    Returns:
        NormalizedAdjacency, symmetric with spectrum in [0, 1]
    """
    incidence = _incidence(h)
    d, b = degree_matrices(incidence)
    d_inv_sqrt = np.diag(1.0 / np.sqrt(np.diag(d)))
    b_inv = np.diag(1.0 / np.diag(b))
    matrix = d_inv_sqrt @ incidence @ b_inv @ incidence.T @ d_inv_sqrt
    matrix = 0.5 * (matrix + matrix.T)
    if order is None:
        order = h.order if isinstance(h, HypergraphSpec) else 1
    return NormalizedAdjacency(matrix, order)


def graph_adjacency(topology: SkeletonTopology) -> NormalizedAdjacency:
    """Plain graph-convolution operator D~^-1/2 (A + I) D~^-1/2"""
    a = topology.adjacency() + np.eye(topology.joint_count)
    d_inv_sqrt = np.diag(1.0 / np.sqrt(a.sum(axis=1)))
    return NormalizedAdjacency(d_inv_sqrt @ a @ d_inv_sqrt, GRAPH_ORDER)


@lru_cache(maxsize=16)
def canonical_adjacencies(topology: SkeletonTopology) -> Tuple[NormalizedAdjacency, ...]:
    """Order-1/2/3 operators of a topology, computed once per topology"""
    adjacencies = tuple(normalized_adjacency(spec) for spec in build_hypergraphs(topology))
    logger.debug("built normalized adjacencies for %d-joint topology", topology.joint_count)
    return adjacencies


def select_adjacencies(
    topology: SkeletonTopology,
    spatial: str = "hgc",
    orders: Sequence[int] = (1, 2, 3),
) -> List[NormalizedAdjacency]:
    """
    Adjacencies for a spatial layer

    Args:
        topology: Skeleton
        spatial: "hgc" for the multi-order hypergraph layer, "gc" for one plain graph head
        orders: Hypergraph orders kept in "hgc" mode

    Raises:
        ConfigurationError: On an unknown mode or an empty / invalid order set
    """
    if spatial == "gc":
        return [graph_adjacency(topology)]
    if spatial != "hgc":
        raise ConfigurationError(f"spatial layer must be 'hgc' or 'gc', got {spatial!r}")
    orders = sorted(set(int(o) for o in orders))
    if not orders or any(o not in (1, 2, 3) for o in orders):
        raise ConfigurationError(f"hypergraph orders must be a non-empty subset of 1,2,3, got {orders}")
    by_order = {adj.source_order: adj for adj in canonical_adjacencies(topology)}
    return [by_order[o] for o in orders]


@dataclass
class HgcLayerParams:
    """Per-head weights W_j paired with their adjacencies"""

    weights: List[torch.Tensor]
    adjacencies: List[NormalizedAdjacency]

    def validate(self) -> None:
        if not self.weights or len(self.weights) != len(self.adjacencies):
            raise ContractError(
                f"{len(self.weights)} weight matrices for {len(self.adjacencies)} adjacencies"
            )
        shape = tuple(self.weights[0].shape)
        if any(tuple(w.shape) != shape for w in self.weights):
            raise ContractError("all head weights must share one shape")
        orders = [adj.source_order for adj in self.adjacencies]
        if len(set(orders)) != len(orders):
            raise ContractError(f"duplicate adjacency orders {orders}")

    @property
    def in_channels(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_channels(self) -> int:
        return self.weights[0].shape[1]


def hgc_forward(x: torch.Tensor, params: HgcLayerParams, aggregate: str = "sum") -> torch.Tensor:
    """
    Multi-order hypergraph convolution over (..., T, N, C_in) input

    Args:
        x: Node features, frames and batch dimensions untouched
        params: Head weights and adjacencies
        aggregate: "sum" or "mean" over heads

    Returns:
        (..., T, N, C_out) features

    Raises:
        ContractError: On shape mismatches
    """
    params.validate()
    if aggregate not in AGGREGATES:
        raise ConfigurationError(f"aggregate must be one of {AGGREGATES}, got {aggregate!r}")
    if x.dim() < 2 or x.shape[-1] != params.in_channels:
        raise ContractError(f"input has {x.shape[-1] if x.dim() else 0} channels, weights expect {params.in_channels}")
    if x.shape[-2] != params.adjacencies[0].node_count:
        raise ContractError(f"input has {x.shape[-2]} nodes, adjacency has {params.adjacencies[0].node_count}")

    out = 0
    for w, adj in zip(params.weights, params.adjacencies):
        a = adj.tensor(dtype=x.dtype).to(x.device)
        out = out + torch.relu(torch.einsum("nm,...mc,cd->...nd", a, x, w))
    if aggregate == "mean":
        out = out / len(params.weights)
    return out


def hgc_backward(
    x: torch.Tensor,
    params: HgcLayerParams,
    upstream: torch.Tensor,
    aggregate: str = "sum",
) -> Tuple[torch.Tensor, List[torch.Tensor]]:
    """
    Gradients of <upstream, hgc_forward(x)> with respect to x and every W_j

    Returns:
        (grad_x, [grad_W_1, ...])
    """
    x = x.detach().requires_grad_(True)
    weights = [w.detach().requires_grad_(True) for w in params.weights]
    out = hgc_forward(x, HgcLayerParams(weights, params.adjacencies), aggregate)
    grads = torch.autograd.grad(out, [x] + weights, grad_outputs=upstream, allow_unused=True)
    grads = [torch.zeros_like(t) if g is None else g for g, t in zip(grads, [x] + weights)]
    return grads[0], list(grads[1:])


class HypergraphConv(nn.Module):
    """
    HGC layer over channels-first (B, C, T, N) feature maps

    The adjacencies are registered as a constant buffer; only the per-head
    weights are trainable.
    """

    def __init__(
        self,
        adjacencies: Sequence[NormalizedAdjacency],
        in_channels: int,
        out_channels: int,
        aggregate: str = "sum",
    ):
        super().__init__()
        if aggregate not in AGGREGATES:
            raise ConfigurationError(f"aggregate must be one of {AGGREGATES}, got {aggregate!r}")
        self.adjacencies = list(adjacencies)
        self.aggregate = aggregate
        self.register_buffer(
            "adjacency",
            torch.stack([adj.tensor() for adj in self.adjacencies]),
            persistent=False,
        )
        self.weight = nn.Parameter(torch.empty(len(self.adjacencies), in_channels, out_channels))
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for head in self.weight.data:
            nn.init.xavier_uniform_(head)

    @property
    def params(self) -> HgcLayerParams:
        return HgcLayerParams(list(self.weight.unbind(0)), self.adjacencies)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # (B, C, T, N) -> (B, T, N, C)
        h = x.permute(0, 2, 3, 1)
        out = torch.relu(torch.einsum("hnm,btmc,hcd->hbtnd", self.adjacency.to(h.dtype), h, self.weight))
        out = out.sum(dim=0) if self.aggregate == "sum" else out.mean(dim=0)
        return out.permute(0, 3, 1, 2)


def dump_adjacency_csv(
    adjacency: NormalizedAdjacency,
    path: Union[str, Path],
    joint_names: Sequence[str] = None,
) -> Path:
    """Write one adjacency as a labeled CSV matrix (heatmap input)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = list(joint_names) if joint_names is not None else list(range(adjacency.node_count))
    pd.DataFrame(adjacency.matrix, index=labels, columns=labels).to_csv(path, float_format="%.12g")
    return path
