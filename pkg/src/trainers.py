"""
Trainers - View completion, LUGAN and recognizer training loops, checkpoints

Both loops are single-process and fully seeded: identical data, config and
seed give identical checkpoint digests.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch

from .camera_geometry import ViewTransform, apply_view_transform, oracle_view_transform
from .dataio import augment, crop_indices, pk_sampler
from .errors import ArtifactError, ConfigurationError, ContractError, DegenerateDepthError
from .evalkit import EvalProtocol, rank1_matrix
from .lugan import (
    LUGAN,
    GeneratorConfig,
    cycle_residual,
    discriminator_loss,
    generate_pose,
    generator_loss,
    pose_tensor,
    transform_batch,
)
from .recognizer import (
    GaitRecognizer,
    RecognizerConfig,
    embed,
    sequence_tensor,
    total_loss,
)
from .skeleton import GaitSample, PoseSequence, SkeletonTopology
from .utils import array_digest, derive_seed

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class ViewCompleter:
    """
    Produces one sequence per configured view for a source sample

    Modes:
        lugan: generated by a trained generator
        oracle: least-squares geometry transform between rig views
        aligned: the frame-aligned ground-truth renders (synthetic data only)
        none: no completion
    The source view itself is returned unchanged.
    """

    def __init__(
        self,
        mode: str,
        view_list: Sequence[float],
        rig=None,
        lugan: Optional[LUGAN] = None,
        records: Optional[Sequence[GaitSample]] = None,
    ):
        self.mode = mode
        self.view_list = tuple(float(v) for v in view_list)
        self.rig = rig
        self.lugan = lugan
        self._transforms: Dict[Tuple[float, float], ViewTransform] = {}
        self._aligned: Dict[Tuple[str, float], PoseSequence] = {}
        self.fallbacks = 0

        if mode == "lugan" and lugan is None:
            raise ConfigurationError("lugan view completion needs a LUGAN checkpoint")
        if mode == "oracle" and rig is None:
            raise ConfigurationError("oracle view completion needs the camera rig")
        if mode == "aligned":
            if records is None:
                raise ConfigurationError("aligned view completion needs the dataset records")
            for record in records:
                if record.aligned_group is not None:
                    self._aligned[(record.aligned_group, record.view_degrees)] = record.sequence
        if mode not in ("lugan", "oracle", "aligned", "none"):
            raise ConfigurationError(f"unknown view completion mode {mode!r}")

    def complete(self, sample: GaitSample) -> List[PoseSequence]:
        if self.mode == "none":
            return []
        return [self.complete_view(sample, view) for view in self.view_list]

    def complete_view(self, sample: GaitSample, view: float) -> PoseSequence:
        if view == sample.view_degrees:
            return sample.sequence
        if self.mode == "aligned":
            key = (sample.aligned_group, view)
            if key not in self._aligned:
                raise ContractError(f"no aligned render of {sample.aligned_group} at {view} deg")
            return self._aligned[key]
        try:
            if self.mode == "oracle":
                return apply_view_transform(self._oracle(sample.view_degrees, view), sample.sequence)
            generated, _ = generate_pose(sample.sequence, view, self.lugan.generator)
            return generated
        except DegenerateDepthError as e:
            self.fallbacks += 1
            logger.warning("view %.0f of %s unreachable (%s); using the source sequence", view, sample.identity, e)
            return sample.sequence

    def _oracle(self, source: float, target: float) -> ViewTransform:
        key = (source, target)
        if key not in self._transforms:
            m_a = self.rig.view_for(source).projection()
            m_b = self.rig.view_for(target).projection()
            self._transforms[key] = oracle_view_transform(m_a, m_b)
        return self._transforms[key]


def _state_arrays(module: torch.nn.Module) -> Dict[str, np.ndarray]:
    return {name: tensor.detach().cpu().numpy() for name, tensor in module.state_dict().items()}


def checkpoint_digest(module: torch.nn.Module) -> str:
    """SHA-256 over the module's named parameter arrays"""
    return array_digest(_state_arrays(module))


def save_checkpoint(
    module: torch.nn.Module,
    path: Union[str, Path],
    kind: str,
    config: Dict,
    seed: int,
    extra: Optional[Dict] = None,
) -> str:
    """
    Write a versioned checkpoint container

    Returns:
        Parameter digest
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    digest = checkpoint_digest(module)
    torch.save({
        "format_version": CHECKPOINT_VERSION,
        "kind": kind,
        "state_dict": module.state_dict(),
        "config": config,
        "seed": seed,
        "digest": digest,
        "extra": dict(extra or {}),
    }, path)
    logger.info("saved %s checkpoint %s (digest %s)", kind, path, digest[:12])
    return digest


def read_checkpoint(path: Union[str, Path], kind: str) -> Dict:
    """
    Read and check a checkpoint container

    Raises:
        FileNotFoundError: Missing file
        ArtifactError: Wrong kind or format version
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ArtifactError(f"{path} has checkpoint version {payload.get('format_version')}, expected {CHECKPOINT_VERSION}")
    if payload.get("kind") != kind:
        raise ArtifactError(f"{path} is a {payload.get('kind')!r} checkpoint, expected {kind!r}")
    return payload


def load_lugan(path: Union[str, Path], topology: SkeletonTopology = None) -> Tuple[LUGAN, Dict]:
    payload = read_checkpoint(path, "lugan")
    config = GeneratorConfig.from_dict(payload["config"])
    model = LUGAN(config, topology, payload["extra"].get("view_list", ()))
    model.load_state_dict(payload["state_dict"])
    if checkpoint_digest(model) != payload["digest"]:
        raise ArtifactError(f"{path}: parameter digest mismatch")
    return model, payload


def load_recognizer(path: Union[str, Path], topology: SkeletonTopology = None) -> Tuple[GaitRecognizer, Dict]:
    payload = read_checkpoint(path, "recognizer")
    model = GaitRecognizer(RecognizerConfig.from_dict(payload["config"]), topology)
    model.load_state_dict(payload["state_dict"])
    if checkpoint_digest(model) != payload["digest"]:
        raise ArtifactError(f"{path}: parameter digest mismatch")
    return model, payload


@dataclass
class LuganTrainingConfig:
    epochs: int = 20
    batch_size: int = 32
    g_steps_per_d: int = 50
    lr: float = 1e-4
    aligned_reals: bool = False


@dataclass
class RecognizerTrainingConfig:
    epochs: int = 500
    P: int = 8
    K: int = 4
    lr: float = 1e-3
    noise_std: float = 0.01
    train_fraction: float = 0.6
    validate_every: int = 1


def _lugan_pairs(records: Sequence[GaitSample], rng: np.random.Generator, aligned_reals: bool) -> List[Tuple[int, int]]:
    """(source index, real index) pairs with different views of one identity"""
    by_identity: Dict[str, List[int]] = {}
    for index, record in enumerate(records):
        by_identity.setdefault(record.identity, []).append(index)
    aligned = {(r.aligned_group, r.view_degrees): i for i, r in enumerate(records) if r.aligned_group}

    pairs = []
    for identity in sorted(by_identity):
        indices = by_identity[identity]
        views = sorted({records[i].view_degrees for i in indices})
        if len(views) < 2:
            continue
        for source in indices:
            alpha = records[source].view_degrees
            targets = [v for v in views if v != alpha]
            beta = targets[int(rng.integers(len(targets)))]
            real = aligned.get((records[source].aligned_group, beta)) if aligned_reals else None
            if real is None:
                candidates = [i for i in indices if records[i].view_degrees == beta]
                real = candidates[int(rng.integers(len(candidates)))]
            pairs.append((source, real))
    order = rng.permutation(len(pairs))
    return [pairs[i] for i in order]


def _crop(seq: PoseSequence, length: int, rng: np.random.Generator) -> PoseSequence:
    return augment(seq, length, 0.0, indices=crop_indices(seq.frames, length, rng))


def train_lugan(
    records: Sequence[GaitSample],
    view_list: Sequence[float],
    config: GeneratorConfig,
    seed: int,
    training: LuganTrainingConfig = None,
    topology: SkeletonTopology = None,
) -> Tuple[LUGAN, pd.DataFrame]:
    """
    Adversarial training with the cycle-identity term

    The generator steps on every batch; the discriminator steps once every
    ``g_steps_per_d`` generator steps, counted across epochs.

    Returns:
        (model, log with epoch, g_loss, d_loss, cycle_residual, d_steps)

    Raises:
        ConfigurationError: If a listed view has no samples or no identity has two views
    """
    training = training or LuganTrainingConfig()
    present = {float(r.view_degrees) for r in records}
    missing = [float(v) for v in view_list if float(v) not in present]
    if missing:
        raise ConfigurationError(f"dataset has no samples for views {missing}; present: {sorted(present)}")
    torch.manual_seed(derive_seed(seed, "lugan-init"))
    model = LUGAN(config, topology, view_list)
    frame = config.frame
    length = config.sequence_length

    g_opt = torch.optim.Adam(model.generator.parameters(), lr=training.lr)
    d_opt = torch.optim.Adam(model.discriminator.parameters(), lr=training.lr)

    step = 0
    rows = []
    for epoch in range(training.epochs):
        rng = np.random.default_rng(derive_seed(seed, f"lugan-epoch-{epoch}"))
        pairs = _lugan_pairs(records, rng, training.aligned_reals)
        if not pairs:
            raise ConfigurationError("LUGAN training needs identities recorded from at least two views")

        totals = {"g_loss": 0.0, "d_loss": 0.0, "cycle_residual": 0.0}
        batches = d_steps = 0
        for start in range(0, len(pairs), training.batch_size):
            chunk = pairs[start:start + training.batch_size]
            source = torch.stack([pose_tensor(_crop(records[s].sequence, length, rng), frame) for s, _ in chunk])
            real = torch.stack([pose_tensor(_crop(records[r].sequence, length, rng), frame) for _, r in chunk])
            alpha = torch.tensor([records[s].view_degrees for s, _ in chunk], dtype=torch.float32)
            beta = torch.tensor([records[r].view_degrees for _, r in chunk], dtype=torch.float32)

            q_ab, _ = model.generator(source, beta)
            fake = transform_batch(q_ab, source)
            q_ba, _ = model.generator(fake, alpha)
            d_fake = model.discriminator(fake, source, beta)
            g_loss = generator_loss(q_ab, q_ba, d_fake, config.cycle_norm)
            g_opt.zero_grad()
            g_loss.backward()
            g_opt.step()

            d_loss_value = float("nan")
            if step % training.g_steps_per_d == 0:
                d_real = model.discriminator(real, source, beta)
                d_fake = model.discriminator(fake.detach(), source, beta)
                d_loss = discriminator_loss(d_real, d_fake)
                d_opt.zero_grad()
                d_loss.backward()
                d_opt.step()
                d_loss_value = float(d_loss)
                d_steps += 1
            step += 1

            batches += 1
            totals["g_loss"] += float(g_loss)
            totals["cycle_residual"] += float(cycle_residual(q_ab.detach(), q_ba.detach()).mean())
            if not np.isnan(d_loss_value):
                totals["d_loss"] += d_loss_value

        row = {
            "epoch": epoch + 1,
            "g_loss": totals["g_loss"] / batches,
            "d_loss": totals["d_loss"] / d_steps if d_steps else float("nan"),
            "cycle_residual": totals["cycle_residual"] / batches,
            "d_steps": d_steps,
        }
        rows.append(row)
        logger.info(
            "lugan epoch %d: g_loss=%.4f d_loss=%.4f cycle=%.4g",
            row["epoch"], row["g_loss"], row["d_loss"], row["cycle_residual"],
        )
    return model, pd.DataFrame(rows, columns=["epoch", "g_loss", "d_loss", "cycle_residual", "d_steps"])


def split_identities(records: Sequence[GaitSample], train_fraction: float, seed: int) -> Tuple[List[int], List[int]]:
    """Record indices of a seeded identity-disjoint train / held-out split"""
    identities = sorted({r.identity for r in records})
    order = np.random.default_rng(derive_seed(seed, "split")).permutation(len(identities))
    count = max(2, int(round(train_fraction * len(identities))))
    train_ids = {identities[i] for i in order[:count]}
    train = [i for i, r in enumerate(records) if r.identity in train_ids]
    held_out = [i for i, r in enumerate(records) if r.identity not in train_ids]
    return train, held_out


def _validation_rank1(
    model: GaitRecognizer,
    records: Sequence[GaitSample],
    completer: ViewCompleter,
    protocol: EvalProtocol,
) -> Dict[str, float]:
    embeddings = [embed(r, model, completer) for r in records]
    table = rank1_matrix(embeddings, protocol)
    means = table[(table["probe_view"] == "mean") & (table["policy"] == table["policy"].iloc[0])]
    scores = {f"val_rank1_{row.probe_condition}": row.accuracy for row in means.itertuples()}
    scores["val_rank1"] = float(means["accuracy"].mean()) if len(means) else float("nan")
    return scores


def train_recognizer(
    records: Sequence[GaitSample],
    config: RecognizerConfig,
    completer: ViewCompleter,
    seed: int,
    training: RecognizerTrainingConfig = None,
    protocol: Optional[EvalProtocol] = None,
    topology: SkeletonTopology = None,
) -> Tuple[GaitRecognizer, pd.DataFrame]:
    """
    Supervised contrastive training on P x K batches

    Each sample is cropped to the configured length; the completed views
    share the source crop. Coordinates are standardized per sequence after
    completion and jittered with ``noise_std`` standardized units.

    Returns:
        (model, log with epoch, loss, loss_alpha, loss_beta, val_rank1[_COND])

    Raises:
        ConfigurationError: If P x K batches cannot be formed
    """
    training = training or RecognizerTrainingConfig()
    torch.manual_seed(derive_seed(seed, "recognizer-init"))
    model = GaitRecognizer(config, topology)
    optimizer = torch.optim.Adam(model.parameters(), lr=training.lr)
    length = config.sequence_length

    train_idx, held_idx = split_identities(records, training.train_fraction, seed)
    train_records = [records[i] for i in train_idx]
    held_records = [records[i] for i in held_idx]
    protocol = protocol or EvalProtocol(same_view_policy="exclude")
    completions: Dict[int, List[PoseSequence]] = {}

    rows = []
    for epoch in range(training.epochs):
        rng = np.random.default_rng(derive_seed(seed, f"recognizer-epoch-{epoch}"))
        sums = {"loss": 0.0, "loss_alpha": 0.0, "loss_beta": 0.0}
        batches = 0
        for batch in pk_sampler(train_records, training.P, training.K, derive_seed(seed, f"pk-{epoch}")):
            sources, views = [], []
            for index in batch:
                sample = train_records[index]
                crop = crop_indices(sample.sequence.frames, length, rng)
                sources.append(sequence_tensor(augment(sample.sequence, length, indices=crop), training.noise_std, rng))
                if model.generative_branch is not None:
                    if index not in completions:
                        completions[index] = completer.complete(sample)
                    views.append(torch.stack([
                        sequence_tensor(augment(seq, length, indices=crop), training.noise_std, rng)
                        for seq in completions[index]
                    ]))
            labels = [train_records[i].identity for i in batch]
            view_tensor = torch.stack(views, dim=1) if views else None
            f_alpha, f_beta = model(torch.stack(sources), view_tensor)
            loss, loss_alpha, loss_beta = total_loss(f_alpha, f_beta, labels, config.tau)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            batches += 1
            sums["loss"] += float(loss)
            sums["loss_alpha"] += float(loss_alpha)
            sums["loss_beta"] += float(loss_beta)

        if batches == 0:
            raise ConfigurationError("P x K sampler produced no batches")
        row = {"epoch": epoch + 1, **{k: v / batches for k, v in sums.items()}}
        if held_records and (epoch + 1) % training.validate_every == 0:
            try:
                row.update(_validation_rank1(model, held_records, completer, protocol))
            except ConfigurationError as e:
                logger.warning("validation skipped: %s", e)
        rows.append(row)
        logger.info("recognizer epoch %d: loss=%.4f val_rank1=%s", row["epoch"], row["loss"], row.get("val_rank1"))
    return model, pd.DataFrame(rows)


def dump_embeddings(
    records: Sequence[GaitSample],
    model: GaitRecognizer,
    completer: Optional[ViewCompleter],
    path: Union[str, Path],
) -> Path:
    """Write one JSON line per embedded record"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for record in records:
            f.write(json.dumps(embed(record, model, completer).to_dict(), separators=(",", ":")))
            f.write("\n")
    return path
