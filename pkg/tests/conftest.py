"""Shared fixtures: canonical topology, rigs, walks and tiny datasets"""

import numpy as np
import pytest
import torch

from src.skeleton import SkeletonTopology
from src.synth_gait import CameraRig, WalkerParams, generate_gait_records, synth_walk_3d


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


@pytest.fixture
def topology():
    return SkeletonTopology.coco()


@pytest.fixture
def toy_topology():
    """Five-joint chain with one branch"""
    return SkeletonTopology(("a", "b", "c", "d", "e"), ((0, 1), (1, 2), (2, 3), (1, 4)))


@pytest.fixture
def acceptance_rig():
    return CameraRig.preset("acceptance")


@pytest.fixture
def cocentered_rig():
    return CameraRig.preset("cocentered-4")


@pytest.fixture
def walk():
    """100 noiseless frames of an average walker"""
    return synth_walk_3d(WalkerParams.average(), frames=100, seed=0)


@pytest.fixture
def tiny_records():
    """6 ids x NM/BG x 2 runs x 3 views, 16 frames"""
    rig = CameraRig.preset("acceptance").subset([0.0, 90.0, 180.0])
    return generate_gait_records(6, ["NM", "BG"], rig, frames=16, seed=0, runs=2)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
