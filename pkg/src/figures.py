"""
Figures - Static image artifacts for training curves, adjacencies and poses

Produces:
- Validation rank-1 curves from a recognizer training log (one image per condition)
- Normalized adjacency heatmaps (one per hypergraph order)
- Skeleton strips of a pose sequence
- Parameter count versus shared blocks
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from .errors import ConfigurationError
from .hypergraph_conv import canonical_adjacencies
from .skeleton import COCO_BONES, GaitSample, SkeletonTopology

sns.set_style("whitegrid")
plt.rcParams['figure.facecolor'] = 'white'
plt.rcParams['axes.facecolor'] = 'white'

PLOT_KINDS = ("curves", "adjacency", "poses", "sharing")


class GaitFigures:
    """Writes the figure artifacts of one run into ``output_dir``"""

    def __init__(self, output_dir: str = "runs/figures", dpi: int = 150):
        """
        Args:
            output_dir: Directory to save images into
            dpi: Raster resolution
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.dpi = dpi

    def _save(self, name: str) -> str:
        output_path = self.output_dir / name
        plt.tight_layout()
        plt.savefig(output_path, dpi=self.dpi, bbox_inches='tight')
        plt.close()
        return str(output_path)

    def accuracy_curves(self, log: pd.DataFrame) -> Dict[str, str]:
        """
        One validation rank-1 curve per probe condition

        Args:
            log: Recognizer training log with ``epoch`` and ``val_rank1_<COND>`` columns

        Returns:
            Condition -> image path
        """
        columns = [c for c in log.columns if c.startswith("val_rank1_")]
        paths = {}
        for column in columns:
            condition = column[len("val_rank1_"):]
            plt.figure(figsize=(8, 5))
            sns.lineplot(data=log, x="epoch", y=column, marker="o")
            plt.ylim(0, 1)
            plt.ylabel("rank-1 accuracy")
            plt.title(f'Validation rank-1 ({condition})', fontsize=14, fontweight='bold')
            paths[condition] = self._save(f"curve_{condition}.png")
        return paths

    def adjacency_heatmaps(self, topology: SkeletonTopology = None) -> List[str]:
        """One heatmap per hypergraph order"""
        topology = topology or SkeletonTopology.coco()
        paths = []
        for adjacency in canonical_adjacencies(topology):
            plt.figure(figsize=(9, 8))
            sns.heatmap(
                adjacency.matrix,
                cmap='viridis',
                square=True,
                vmin=0.0,
                xticklabels=topology.joint_names,
                yticklabels=topology.joint_names,
                cbar_kws={"shrink": 0.8},
            )
            plt.title(f'Normalized adjacency, order {adjacency.source_order}', fontsize=14, fontweight='bold')
            paths.append(self._save(f"adjacency_order{adjacency.source_order}.png"))
        return paths

    def pose_strip(self, sample: GaitSample, frames: int = 8, bones: Sequence = COCO_BONES) -> str:
        """Evenly spaced skeleton renders of one sample, image y axis pointing down"""
        seq = sample.sequence
        picks = np.linspace(0, seq.frames - 1, min(frames, seq.frames)).round().astype(int)
        xy = seq.xy
        lo, hi = xy.reshape(-1, 2).min(axis=0), xy.reshape(-1, 2).max(axis=0)

        fig, axes = plt.subplots(1, len(picks), figsize=(2 * len(picks), 4), squeeze=False)
        for ax, t in zip(axes[0], picks):
            for a, b in bones:
                ax.plot(xy[t, [a, b], 0], xy[t, [a, b], 1], color='steelblue', linewidth=2)
            ax.scatter(xy[t, :, 0], xy[t, :, 1], s=10, color='black')
            ax.set_xlim(lo[0], hi[0])
            ax.set_ylim(hi[1], lo[1])
            ax.set_aspect('equal')
            ax.set_title(f"t={t}", fontsize=9)
            ax.axis('off')
        label = sample_label(sample)
        fig.suptitle(label, fontsize=12, fontweight='bold')
        return self._save(f"poses_{label}.png")

    def sharing_curve(self, table: pd.DataFrame) -> str:
        """Generative-branch parameter count against shared blocks"""
        plt.figure(figsize=(8, 5))
        sns.barplot(data=table, x="shared_blocks", y="generative_parameters", color='steelblue')
        plt.ylabel("generative branch parameters")
        plt.title('Parameters versus shared blocks', fontsize=14, fontweight='bold')
        return self._save("sharing_parameters.png")


def sample_label(sample: GaitSample) -> str:
    return f"{sample.identity}_v{sample.view_degrees:g}_{sample.condition}_r{sample.run}"


def plot(kind: str, output_dir: str, log: Optional[pd.DataFrame] = None, samples: Sequence[GaitSample] = (),
         table: Optional[pd.DataFrame] = None) -> List[str]:
    """
    Convenience function dispatching one plot kind

    Raises:
        ConfigurationError: On an unknown kind or missing input
    """
    figures = GaitFigures(output_dir)
    if kind == "curves":
        if log is None:
            raise ConfigurationError("curves need a training log")
        return list(figures.accuracy_curves(log).values())
    if kind == "adjacency":
        return figures.adjacency_heatmaps()
    if kind == "poses":
        if not samples:
            raise ConfigurationError("poses need at least one sample")
        return [figures.pose_strip(sample) for sample in samples]
    if kind == "sharing":
        if table is None:
            raise ConfigurationError("sharing needs a parameter table")
        return [figures.sharing_curve(table)]
    raise ConfigurationError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
