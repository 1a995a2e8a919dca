"""Seeded end-to-end directional checks on the acceptance rig (run with -m acceptance)"""

import numpy as np
import pytest

from src.evalkit import EvalProtocol, mpjpe, rank1_matrix
from src.lugan import GeneratorConfig, generate_pose
from src.recognizer import RecognizerConfig, embed
from src.synth_gait import CameraRig, generate_gait_records
from src.trainers import (
    LuganTrainingConfig,
    RecognizerTrainingConfig,
    ViewCompleter,
    split_identities,
    train_lugan,
    train_recognizer,
)

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def rig():
    return CameraRig.preset("acceptance")


@pytest.fixture(scope="module")
def records(rig):
    return generate_gait_records(20, ["NM", "BG", "CL"], rig, frames=60, seed=0, runs=2)


def test_dataset_size(records):
    assert len(records) == 960


def test_lugan_beats_identity_transform(records, rig):
    model, log = train_lugan(
        records, rig.yaws, GeneratorConfig.miniature(), seed=0,
        training=LuganTrainingConfig(epochs=20, batch_size=32),
    )
    assert len(log) == 20

    truth = {(r.aligned_group, r.view_degrees): r.sequence for r in records}
    rng = np.random.default_rng(0)
    generated_error, identity_error = [], []
    for index in rng.choice(len(records), size=100, replace=False):
        source = records[index]
        beta = float(rng.choice([v for v in rig.yaws if v != source.view_degrees]))
        target = truth[(source.aligned_group, beta)]
        moved, _ = generate_pose(source.sequence, beta, model.generator)
        generated_error.append(mpjpe(moved, target))
        identity_error.append(mpjpe(source.sequence, target))
    assert np.mean(generated_error) <= 0.5 * np.mean(identity_error)


def _held_out_rank1(records, model, completer, seed):
    _, held = split_identities(records, 0.6, seed)
    embeddings = [embed(records[i], model, completer) for i in held]
    table = rank1_matrix(embeddings, EvalProtocol(same_view_policy="exclude"))
    return float(table.loc[table["probe_view"] == "mean", "accuracy"].mean())


def test_complete_view_training_beats_single_view(records, rig):
    training = RecognizerTrainingConfig(epochs=20, P=8, K=4)
    wins = 0
    for seed in range(3):
        completed_cfg = RecognizerConfig(view_list=tuple(rig.yaws), width_scale=0.25, sequence_length=32, view_mode="oracle")
        completer = ViewCompleter("oracle", rig.yaws, rig=rig)
        completed, _ = train_recognizer(records, completed_cfg, completer, seed, training)

        baseline_cfg = RecognizerConfig(width_scale=0.25, sequence_length=32, view_mode="none")
        baseline, _ = train_recognizer(records, baseline_cfg, ViewCompleter("none", ()), seed, training)

        gain = _held_out_rank1(records, completed, completer, seed) - _held_out_rank1(records, baseline, None, seed)
        wins += gain >= 0.02
    assert wins >= 2


def test_recognizer_loss_decreases(records, rig):
    config = RecognizerConfig(view_list=tuple(rig.yaws), width_scale=0.25, sequence_length=32, view_mode="oracle")
    _, log = train_recognizer(
        records, config, ViewCompleter("oracle", rig.yaws, rig=rig), seed=0,
        training=RecognizerTrainingConfig(epochs=5, P=8, K=4, validate_every=5),
    )
    assert log["loss"].iloc[-1] < log["loss"].iloc[0]
