import numpy as np
import pytest

from src.errors import ContractError, DegenerateDepthError, TopologyError, UnsupportedTopologyError
from src.skeleton import (
    GaitSample,
    HypergraphSpec,
    PoseSequence,
    SkeletonTopology,
    build_bone_graph,
    build_hypergraphs,
    build_part_hypergraph,
    load_topology_preset,
    normalize_homogeneous,
    save_topology_preset,
)


def test_canonical_hypergraph_sizes(topology):
    bones, parts, body = build_hypergraphs(topology)
    assert (bones.node_count, bones.edge_count) == (17, 19)
    assert (parts.node_count, parts.edge_count) == (17, 6)
    assert (body.node_count, body.edge_count) == (17, 3)
    assert [spec.order for spec in (bones, parts, body)] == [1, 2, 3]


def test_body_hyperedge_membership(topology):
    body = build_hypergraphs(topology)[2]
    members = body.members()
    assert members["upper"] == [0, 1, 2, 3, 4, 5, 6]
    assert len(members["upper"]) == 7
    assert members["lower"] == [11, 12, 13, 14, 15, 16]


def test_part_node_degrees(topology):
    parts = build_part_hypergraph(topology)
    degrees = parts.incidence.sum(axis=1)
    assert set(degrees.tolist()) == {1.0, 2.0}
    assert np.flatnonzero(degrees == 2).tolist() == [5, 6, 11, 12]


def test_bone_graph_columns_connect_two_joints(topology):
    bones = build_bone_graph(topology)
    assert np.all(bones.incidence.sum(axis=0) == 2)
    assert np.all(bones.incidence.sum(axis=1) >= 1)


def test_adjacency_is_symmetric_zero_one(topology):
    a = topology.adjacency()
    assert np.array_equal(a, a.T)
    assert a.sum() == 2 * len(topology.bones)
    assert np.all(np.diag(a) == 0)


@pytest.mark.parametrize("bones", [
    ((0, 0), (0, 1)),
    ((0, 1), (1, 0)),
    ((0, 1), (2, 3)),
    ((0, 9),),
])
def test_invalid_topologies_rejected(bones):
    topology = SkeletonTopology(("a", "b", "c", "d"), bones)
    with pytest.raises(TopologyError):
        topology.validate()


def test_part_hypergraph_needs_seventeen_joints(toy_topology):
    build_bone_graph(toy_topology)
    with pytest.raises(UnsupportedTopologyError):
        build_part_hypergraph(toy_topology)


def test_hypergraph_spec_rejects_fractional_and_singleton_edges():
    with pytest.raises(TopologyError):
        HypergraphSpec(2, np.array([[0.5], [1.0]]), ("e",))
    with pytest.raises(TopologyError):
        HypergraphSpec(2, np.array([[1.0], [0.0], [1.0]]), ("e",))


def test_topology_preset_round_trip(tmp_path, topology):
    path = save_topology_preset(topology, tmp_path / "coco.json")
    loaded, specs = load_topology_preset(path)
    assert loaded == topology
    assert [s.order for s in specs] == [1, 2, 3]
    for spec, expected in zip(specs, build_hypergraphs(topology)):
        assert np.array_equal(spec.incidence, expected.incidence)


def test_pose_sequence_shape_contract():
    with pytest.raises(ContractError):
        PoseSequence(np.zeros((4, 17, 2)))
    with pytest.raises(ContractError):
        PoseSequence(np.zeros((0, 17, 3)))
    with pytest.raises(ContractError):
        PoseSequence(np.ones((4, 17, 3)), confidence=np.ones((4, 16)))


def test_pose_sequence_defaults_full_confidence():
    seq = PoseSequence.from_xy(np.zeros((3, 17, 2)))
    assert np.all(seq.confidence == 1.0)
    assert np.all(seq.coords[..., 2] == 1.0)
    with pytest.raises(ValueError):
        seq.coords[0, 0, 0] = 5.0


def test_normalize_homogeneous_sets_unit_w():
    coords = np.array([[[2.0, 4.0, 2.0], [3.0, -3.0, -1.5]]])
    seq = normalize_homogeneous(PoseSequence(coords))
    assert np.array_equal(seq.coords[..., 2], np.ones((1, 2)))
    assert np.allclose(seq.xy, [[[1.0, 2.0], [-2.0, 2.0]]])


def test_normalize_homogeneous_names_offending_joint():
    coords = np.ones((3, 4, 3))
    coords[2, 1, 2] = 1e-9
    with pytest.raises(DegenerateDepthError) as info:
        normalize_homogeneous(PoseSequence(coords))
    assert (info.value.frame, info.value.joint) == (2, 1)


def test_gait_sample_conditions_and_order():
    seq = PoseSequence.from_xy(np.zeros((2, 17, 2)))
    with pytest.raises(ContractError):
        GaitSample("id000", 0, "XX", seq)
    samples = [
        GaitSample("id001", 0, "NM", seq),
        GaitSample("id000", 90, "CL", seq),
        GaitSample("id000", 18, "NM", seq, run=1),
        GaitSample("id000", 0, "NM", seq, run=1),
    ]
    ordered = sorted(samples, key=GaitSample.sort_key)
    assert [(s.identity, s.condition, s.view_degrees) for s in ordered] == [
        ("id000", "NM", 0.0), ("id000", "NM", 18.0), ("id000", "CL", 90.0), ("id001", "NM", 0.0),
    ]
    assert not ordered[0].generated
