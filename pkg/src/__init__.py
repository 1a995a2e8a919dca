"""
gaitlu - Complete-view pose gait recognition toolkit

Synthetic multi-view walkers, exact camera geometry, hypergraph gait
recognizer and LU-factored cross-view pose generation.

Version: 1.0.0
"""

__version__ = "1.0.0"
__license__ = "MIT"

from .camera_geometry import oracle_view_transform, apply_view_transform, lemma1_residual
from .dataio import load_dataset, save_dataset, import_keypoints, augment, pk_sampler
from .errors import GaitError, exit_code_for
from .evalkit import EvalProtocol, rank1_matrix, mpjpe, report
from .hypergraph_conv import normalized_adjacency, hgc_forward, HypergraphConv
from .lugan import LUGAN, GeneratorConfig, generate_pose
from .recognizer import GaitRecognizer, RecognizerConfig, embed, supcon_loss
from .skeleton import SkeletonTopology, PoseSequence, GaitSample, build_hypergraphs
from .synth_gait import CameraRig, make_dataset, synth_walk_3d
from .trainers import ViewCompleter, train_lugan, train_recognizer
from .utils import format_percentage, setup_logging

__all__ = [
    'oracle_view_transform',
    'apply_view_transform',
    'lemma1_residual',
    'load_dataset',
    'save_dataset',
    'import_keypoints',
    'augment',
    'pk_sampler',
    'GaitError',
    'exit_code_for',
    'EvalProtocol',
    'rank1_matrix',
    'mpjpe',
    'report',
    'normalized_adjacency',
    'hgc_forward',
    'HypergraphConv',
    'LUGAN',
    'GeneratorConfig',
    'generate_pose',
    'GaitRecognizer',
    'RecognizerConfig',
    'embed',
    'supcon_loss',
    'SkeletonTopology',
    'PoseSequence',
    'GaitSample',
    'build_hypergraphs',
    'CameraRig',
    'make_dataset',
    'synth_walk_3d',
    'ViewCompleter',
    'train_lugan',
    'train_recognizer',
    'format_percentage',
    'setup_logging',
]
