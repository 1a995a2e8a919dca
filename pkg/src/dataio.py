"""
Data I/O - Dataset persistence, keypoint import, augmentation and sampling

Datasets are JSON-Lines files of GaitSample records with a sidecar JSON
manifest. Coordinates are stored in raw pixel units; standardization
happens inside the model path.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import ConfigurationError, ContractError, FormatError, ParseError
from .skeleton import CONDITIONS, GaitSample, PoseSequence, SkeletonTopology
from .utils import file_digest, load_json, save_json

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
JOINTS = 17
TARGET_FPS = 30.0
RECORD_KEYS = ("id", "view_deg", "cond", "frames")


@dataclass
class DatasetManifest:
    """Counts and provenance of a dataset file"""

    record_count: int
    identity_count: int
    view_list: List[float]
    condition_list: List[str]
    rig: Optional[Dict] = None
    seed: Optional[int] = None
    data_digest: Optional[str] = None
    format_version: int = FORMAT_VERSION
    extra: Dict = field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Sequence[GaitSample], **kwargs) -> "DatasetManifest":
        return cls(
            record_count=len(records),
            identity_count=len({r.identity for r in records}),
            view_list=sorted({r.view_degrees for r in records}),
            condition_list=[c for c in CONDITIONS if any(r.condition == c for r in records)],
            **kwargs,
        )

    def check(self, records: Sequence[GaitSample]) -> None:
        observed = DatasetManifest.from_records(records)
        if (observed.record_count, observed.identity_count) != (self.record_count, self.identity_count):
            raise ParseError(
                f"manifest counts ({self.record_count} records, {self.identity_count} ids) do not match "
                f"file ({observed.record_count}, {observed.identity_count})"
            )


def manifest_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def sample_to_record(sample: GaitSample) -> Dict:
    """GaitSample -> JSON-ready dict with a fixed key order"""
    frames = np.concatenate([sample.sequence.xy, sample.sequence.confidence[..., None]], axis=-1)
    record = {
        "id": sample.identity,
        "view_deg": sample.view_degrees,
        "cond": sample.condition,
        "run": sample.run,
        "aligned_group": sample.aligned_group,
    }
    for key in ("generated", "source_view", "target_view"):
        if key in sample.provenance:
            record[key] = sample.provenance[key]
    record["frames"] = frames.tolist()
    return record


def record_to_sample(record: Dict, line: Optional[int] = None) -> GaitSample:
    """
    Validate and convert one parsed record

    Raises:
        ParseError: On schema violations, citing the line
    """
    if not isinstance(record, dict):
        raise ParseError("record is not a JSON object", line)
    missing = [key for key in RECORD_KEYS if key not in record]
    if missing:
        raise ParseError(f"record missing keys {missing}", line)
    try:
        frames = np.asarray(record["frames"], dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise ParseError(f"frames are not a numeric array: {e}", line) from e
    if frames.ndim != 3 or frames.shape[2] != 3 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise ParseError(f"frames must be T x N x 3, got {frames.shape}", line)
    if record["cond"] not in CONDITIONS:
        raise ParseError(f"unknown condition {record['cond']!r}", line)
    provenance = {key: record[key] for key in ("generated", "source_view", "target_view") if key in record}
    return GaitSample(
        identity=str(record["id"]),
        view_degrees=float(record["view_deg"]),
        condition=record["cond"],
        sequence=PoseSequence.from_xy(frames[..., :2], frames[..., 2]),
        run=int(record.get("run", 0)),
        aligned_group=record.get("aligned_group"),
        provenance=provenance,
    )


def save_dataset(
    records: Sequence[GaitSample],
    path: Union[str, Path],
    rig: Optional[Dict] = None,
    seed: Optional[int] = None,
    extra: Optional[Dict] = None,
) -> DatasetManifest:
    """
    Write records as JSON Lines plus the sidecar manifest

    Args:
        records: Samples in the order to write
        path: Output JSON-Lines path
        rig: Rig description for the manifest
        seed: Root seed for the manifest
        extra: Additional manifest fields

    Returns:
        The written manifest
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for sample in records:
            f.write(json.dumps(sample_to_record(sample), separators=(",", ":")))
            f.write("\n")

    manifest = DatasetManifest.from_records(
        records, rig=rig, seed=seed, data_digest=file_digest(path), extra=dict(extra or {}),
    )
    save_json(asdict(manifest), manifest_path(path))
    logger.debug("wrote %d records to %s", len(records), path)
    return manifest


def load_dataset(path: Union[str, Path], topology: SkeletonTopology = None) -> List[GaitSample]:
    """
    Read a JSON-Lines dataset

    Args:
        path: Dataset file
        topology: Skeleton every sequence must match (COCO-17 by default)

    Raises:
        FileNotFoundError: If the file does not exist
        ParseError: On malformed lines, with the 1-based line number, or when
            the file no longer matches the digest recorded in its manifest
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    topology = topology or SkeletonTopology.coco()

    records = []
    with open(path) as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON ({e.msg})", number) from e
            sample = record_to_sample(payload, number)
            try:
                sample.sequence.check_topology(topology)
            except ContractError as e:
                raise ParseError(str(e), number) from e
            records.append(sample)

    sidecar = manifest_path(path)
    if sidecar.exists():
        expected = load_json(sidecar).get("data_digest")
        if expected is not None and file_digest(path) != expected:
            raise ParseError(f"{path} does not match the digest recorded in {sidecar.name}")
    return records


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    """Manifest of a dataset file (an empty manifest if none was written)"""
    sidecar = manifest_path(path)
    if not sidecar.exists():
        return DatasetManifest.from_records(load_dataset(path))
    payload = load_json(sidecar)
    return DatasetManifest(**payload)


def import_keypoints(
    path: Union[str, Path],
    fps: float = TARGET_FPS,
    id_map: Optional[Dict[str, str]] = None,
) -> List[GaitSample]:
    """
    Convert a detector keypoint CSV into GaitSample records

    Expected header: ``id,view_deg,cond,frame,j0x,j0y,j0c,...,j16c``; the
    confidence columns are optional (default 1.0) and an optional ``seq``
    column separates several sequences of the same id/view/condition.
    Sequences recorded at another frame rate are resampled to 30 fps.

    Args:
        path: CSV path
        fps: Frame rate of the dump
        id_map: Optional raw-id -> identity label mapping

    Returns:
        Records sorted by identity, condition, run and view

    Raises:
        FormatError: On a wrong keypoint count or malformed rows (CSV line cited)
    """
    try:
        df = pd.read_csv(path, dtype={"id": str})
    except pd.errors.ParserError as e:
        raise FormatError(f"unreadable keypoint CSV: {e}") from e

    for column in ("id", "view_deg", "cond", "frame"):
        if column not in df.columns:
            raise FormatError(f"missing column {column!r}", 1)
    x_cols = [c for c in df.columns if c.startswith("j") and c.endswith("x")]
    if len(x_cols) != JOINTS:
        raise FormatError(f"expected {JOINTS} keypoints per row, header has {len(x_cols)}", 1)
    xy_cols = [col for j in range(JOINTS) for col in (f"j{j}x", f"j{j}y")]
    missing = [c for c in xy_cols if c not in df.columns]
    if missing:
        raise FormatError(f"missing keypoint columns {missing}", 1)
    c_cols = [f"j{j}c" for j in range(JOINTS)]
    has_confidence = all(c in df.columns for c in c_cols)

    value_cols = xy_cols + (c_cols if has_confidence else [])
    values = df[value_cols].apply(pd.to_numeric, errors="coerce")
    bad_rows = values.isna().any(axis=1) | df[["id", "view_deg", "cond", "frame"]].isna().any(axis=1)
    if bad_rows.any():
        first = int(np.flatnonzero(bad_rows.to_numpy())[0])
        raise FormatError(f"row has {int(values.iloc[first].notna().sum())} of {len(value_cols)} keypoint values", first + 2)
    bad_cond = ~df["cond"].isin(CONDITIONS)
    if bad_cond.any():
        first = int(np.flatnonzero(bad_cond.to_numpy())[0])
        raise FormatError(f"unknown condition {df['cond'].iloc[first]!r}", first + 2)

    df = df.assign(**{c: values[c] for c in value_cols})
    group_cols = ["id", "view_deg", "cond"] + (["seq"] if "seq" in df.columns else [])
    id_map = id_map or {}
    records = []
    for key, group in df.groupby(group_cols, sort=True):
        group = group.sort_values("frame")
        xy = group[xy_cols].to_numpy(dtype=np.float64).reshape(-1, JOINTS, 2)
        if has_confidence:
            confidence = group[c_cols].to_numpy(dtype=np.float64)
        else:
            confidence = np.ones(xy.shape[:2])
        if fps != TARGET_FPS:
            xy, confidence = _resample(xy, confidence, fps, TARGET_FPS)
        raw_id, view, condition = key[0], key[1], key[2]
        run = int(key[3]) if len(key) > 3 else 0
        records.append(GaitSample(
            identity=id_map.get(raw_id, raw_id),
            view_degrees=float(view),
            condition=condition,
            sequence=PoseSequence.from_xy(xy, confidence),
            run=run,
        ))
    records.sort(key=GaitSample.sort_key)
    logger.info("imported %d sequences from %s", len(records), path)
    return records


def _resample(xy: np.ndarray, confidence: np.ndarray, fps: float, target_fps: float):
    """Linear resampling of a trajectory onto the target frame clock"""
    source_t = np.arange(len(xy)) / fps
    count = max(1, int(round(source_t[-1] * target_fps)) + 1)
    target_t = np.arange(count) / target_fps
    flat = xy.reshape(len(xy), -1)
    resampled = np.stack([np.interp(target_t, source_t, flat[:, k]) for k in range(flat.shape[1])], axis=1)
    conf = np.stack([np.interp(target_t, source_t, confidence[:, k]) for k in range(confidence.shape[1])], axis=1)
    return resampled.reshape(count, -1, 2), conf


def augment(
    seq: PoseSequence,
    target_T: int,
    noise_std: float = 0.0,
    seed: Optional[int] = None,
    indices: Optional[np.ndarray] = None,
) -> PoseSequence:
    """
    Random contiguous crop (or loop-pad) to target_T plus coordinate noise

    The noise standard deviation is in standardized units: it is scaled by
    the sequence's own coordinate scale, so after the model standardizes
    the sequence the jitter has std ``noise_std``.

    Args:
        seq: Normalized pose sequence
        target_T: Output frame count
        noise_std: Jitter in standardized units
        seed: Seed for crop offset and noise
        indices: Fixed frame indices (overrides the random crop, taken modulo T)

    Returns:
        Augmented sequence
    """
    rng = np.random.default_rng(seed)
    if indices is None:
        indices = crop_indices(seq.frames, target_T, rng)
    else:
        indices = np.asarray(indices) % seq.frames
    out = seq.take_frames(indices)
    if noise_std > 0:
        scale = coordinate_scale(out.xy)
        coords = np.array(out.coords)
        coords[..., :2] += rng.normal(0.0, noise_std * scale, size=coords[..., :2].shape)
        out = out.with_coords(coords)
    return out


def crop_indices(frames: int, target_T: int, rng: np.random.Generator) -> np.ndarray:
    """Frame indices of a random contiguous crop; loops short sequences"""
    if frames < target_T:
        return np.arange(target_T) % frames
    start = int(rng.integers(0, frames - target_T + 1))
    return np.arange(start, start + target_T)


def coordinate_scale(xy: np.ndarray) -> float:
    """RMS distance of the joints from their mean (1.0 for a degenerate pose)"""
    centered = xy - xy.reshape(-1, 2).mean(axis=0)
    scale = float(np.sqrt(np.mean(np.sum(centered ** 2, axis=-1))))
    return scale if scale > 0 else 1.0


def standardize(seq: PoseSequence) -> np.ndarray:
    """
    T x N x 3 model input (x, y, confidence)

    Coordinates are zero-mean over joints and frames and divided by their
    RMS radius.
    """
    xy = seq.xy
    centered = xy - xy.reshape(-1, 2).mean(axis=0)
    scaled = centered / coordinate_scale(xy)
    return np.concatenate([scaled, seq.confidence[..., None]], axis=-1)


def pk_sampler(records: Sequence[GaitSample], P: int, K: int, seed: int) -> Iterator[List[int]]:
    """
    Yield one epoch of P x K batches as record indices

    Every batch holds exactly P identities with K records each, so it always
    has contrastive positives and negatives. Identities with fewer than K
    records are left out.

    Raises:
        ConfigurationError: If fewer than P identities have K records
    """
    if P < 2 or K < 2:
        raise ConfigurationError(f"P x K sampling needs P >= 2 and K >= 2, got P={P}, K={K}")
    by_identity: Dict[str, List[int]] = {}
    for index, record in enumerate(records):
        by_identity.setdefault(record.identity, []).append(index)

    eligible = sorted(identity for identity, idx in by_identity.items() if len(idx) >= K)
    dropped = sorted(set(by_identity) - set(eligible))
    if dropped:
        logger.warning("P x K sampler drops %d identities with fewer than %d records", len(dropped), K)
    if len(eligible) < P:
        raise ConfigurationError(
            f"P x K infeasible: {len(eligible)} identities have >= {K} records, need {P}"
        )

    rng = np.random.default_rng(seed)
    chunks: Dict[str, List[List[int]]] = {}
    for identity in eligible:
        order = rng.permutation(by_identity[identity])
        chunks[identity] = [order[i:i + K].tolist() for i in range(0, len(order) - K + 1, K)]

    while True:
        available = [identity for identity in eligible if chunks[identity]]
        if len(available) < P:
            return
        # Weighted by chunks left.
        weights = np.array([len(chunks[identity]) for identity in available], dtype=np.float64)
        picked = rng.choice(len(available), size=P, replace=False, p=weights / weights.sum())
        batch = []
        for position in sorted(picked):
            batch.extend(chunks[available[position]].pop())
        yield batch
