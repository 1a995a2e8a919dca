"""
Evaluation Kit - Gallery / probe rank-1 accuracy and generation quality

rank1_matrix produces one accuracy per (probe condition, probe view,
same-view policy) plus a mean row per condition; report writes the
long-form CSV and a condition x view text table.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tabulate import tabulate

from .errors import ConfigurationError, ContractError, ProtocolError
from .skeleton import CONDITIONS, PoseSequence

logger = logging.getLogger(__name__)

POLICIES = ("include", "exclude")
RESULT_COLUMNS = ["probe_condition", "probe_view", "policy", "accuracy"]


@dataclass
class EvalProtocol:
    """
    Gallery / probe split

    The gallery is ``gallery_condition`` restricted to ``gallery_runs``
    (default: the first half of that condition's runs, rounded up). Probes
    are every other record of ``probe_conditions``.
    """

    gallery_condition: str = "NM"
    gallery_runs: Optional[Tuple[int, ...]] = None
    probe_conditions: Tuple[str, ...] = CONDITIONS
    view_list: Optional[Tuple[float, ...]] = None
    same_view_policy: str = "both"

    def validate(self) -> None:
        if self.same_view_policy not in POLICIES + ("both",):
            raise ConfigurationError(f"same_view_policy must be include, exclude or both, got {self.same_view_policy!r}")
        unknown = [c for c in (self.gallery_condition,) + tuple(self.probe_conditions) if c not in CONDITIONS]
        if unknown:
            raise ConfigurationError(f"unknown conditions {unknown}")

    @property
    def policies(self) -> Tuple[str, ...]:
        return POLICIES if self.same_view_policy == "both" else (self.same_view_policy,)

    def split(self, records: Sequence) -> Tuple[List[int], List[int]]:
        """Gallery and probe indices (disjoint) of records with condition/run/view fields"""
        self.validate()
        views = None if self.view_list is None else {float(v) for v in self.view_list}
        runs = self.gallery_runs
        if runs is None:
            present = sorted({r.run for r in records if r.condition == self.gallery_condition})
            runs = tuple(present[: (len(present) + 1) // 2])
        gallery, probes = [], []
        for index, record in enumerate(records):
            if views is not None and record.view_degrees not in views:
                continue
            if record.condition == self.gallery_condition and record.run in runs:
                gallery.append(index)
            elif record.condition in self.probe_conditions:
                probes.append(index)
        return gallery, probes


def _unit(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    return vectors / np.where(norms > 0, norms, 1.0)


def rank1_matrix(embeddings: Sequence, protocol: EvalProtocol) -> pd.DataFrame:
    """
    Cross-view rank-1 accuracy

    For every probe view p and gallery view g (g != p under "exclude") the
    probes at p are matched by cosine similarity against the gallery at g;
    the accuracy for p is the mean over g.

    Args:
        embeddings: EmbeddingRecords (identity, view_degrees, condition, run, vector)
        protocol: Gallery / probe split

    Returns:
        DataFrame with probe_condition, probe_view, policy, accuracy; the
        per-condition mean row has probe_view "mean"

    Raises:
        ProtocolError: If a probe identity has no gallery record
    """
    gallery_idx, probe_idx = protocol.split(embeddings)
    if not gallery_idx:
        raise ProtocolError("protocol selects an empty gallery")
    gallery_ids = {embeddings[i].identity for i in gallery_idx}
    missing = sorted({embeddings[i].identity for i in probe_idx} - gallery_ids)
    if missing:
        raise ProtocolError(f"probe identities absent from gallery: {missing[:5]}")

    vectors = _unit(np.stack([np.asarray(e.vector, dtype=np.float64) for e in embeddings]))
    identities = np.array([e.identity for e in embeddings])
    views = np.array([e.view_degrees for e in embeddings])
    conditions = np.array([e.condition for e in embeddings])
    gallery_idx = np.array(gallery_idx)
    probe_idx = np.array(probe_idx, dtype=int)
    gallery_views = sorted(set(views[gallery_idx]))

    rows = []
    for policy in protocol.policies:
        for condition in protocol.probe_conditions:
            cond_probes = probe_idx[conditions[probe_idx] == condition] if len(probe_idx) else probe_idx
            per_view = []
            for probe_view in sorted(set(views[cond_probes])):
                probes = cond_probes[views[cond_probes] == probe_view]
                scores = []
                for gallery_view in gallery_views:
                    if policy == "exclude" and gallery_view == probe_view:
                        continue
                    gallery = gallery_idx[views[gallery_idx] == gallery_view]
                    similarity = vectors[probes] @ vectors[gallery].T
                    nearest = gallery[np.argmax(similarity, axis=1)]
                    scores.append(float(np.mean(identities[nearest] == identities[probes])))
                if not scores:
                    continue
                accuracy = float(np.mean(scores))
                per_view.append(accuracy)
                rows.append({"probe_condition": condition, "probe_view": _view_label(probe_view), "policy": policy, "accuracy": accuracy})
            if per_view:
                rows.append({"probe_condition": condition, "probe_view": "mean", "policy": policy, "accuracy": float(np.mean(per_view))})
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def _view_label(view: float) -> str:
    return f"{view:g}"


def mpjpe(generated: PoseSequence, reference: PoseSequence) -> float:
    """
    Mean per-joint (x, y) distance over joints and frames

    Raises:
        ContractError: On a frame or joint count mismatch
    """
    if generated.coords.shape != reference.coords.shape:
        raise ContractError(f"shape mismatch {generated.coords.shape} vs {reference.coords.shape}")
    return float(np.mean(np.linalg.norm(generated.xy - reference.xy, axis=-1)))


def summary_table(results: pd.DataFrame) -> pd.DataFrame:
    """Condition x probe-view accuracy (percent) with views in numeric order and mean last"""
    if results.empty:
        return pd.DataFrame()
    table = results.pivot_table(
        index=["policy", "probe_condition"], columns="probe_view", values="accuracy", aggfunc="first"
    ) * 100.0
    views = sorted((c for c in table.columns if c != "mean"), key=float)
    columns = views + (["mean"] if "mean" in table.columns else [])
    return table[columns]


def report(results: pd.DataFrame, path: Union[str, Path]) -> Dict[str, Path]:
    """
    Write ``<path>.csv`` (long form) and ``<path>.txt`` (text table)

    Returns:
        {"csv": path, "table": path}
    """
    base = Path(path)
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path = base.with_suffix(".csv")
    txt_path = base.with_suffix(".txt")

    results = results.reindex(columns=RESULT_COLUMNS)
    results.to_csv(csv_path, index=False, float_format="%.17g")

    table = summary_table(results)
    if table.empty:
        text = tabulate([], headers=["policy", "probe_condition"], tablefmt="github")
    else:
        flat = table.reset_index()
        text = tabulate(flat.values.tolist(), headers=list(flat.columns), tablefmt="github", floatfmt=".1f")
    txt_path.write_text(text + "\n")
    logger.info("wrote evaluation report %s", csv_path)
    return {"csv": csv_path, "table": txt_path}


def load_results(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"probe_view": str})
