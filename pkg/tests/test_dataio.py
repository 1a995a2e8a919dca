from collections import Counter

import numpy as np
import pytest

from src.dataio import (
    augment,
    coordinate_scale,
    import_keypoints,
    load_dataset,
    load_manifest,
    pk_sampler,
    save_dataset,
    standardize,
)
from src.errors import ConfigurationError, FormatError, ParseError
from src.skeleton import GaitSample, PoseSequence, SkeletonTopology
from src.utils import file_digest


def keypoint_header(confidence=True, joints=17):
    cols = ["id", "view_deg", "cond", "frame"]
    for j in range(joints):
        cols += [f"j{j}x", f"j{j}y"] + ([f"j{j}c"] if confidence else [])
    return ",".join(cols)


def keypoint_row(identity, view, cond, frame, value, confidence=True, joints=17):
    values = []
    for _ in range(joints):
        values += [value, value + 1.0] + ([0.5] if confidence else [])
    return ",".join([identity, str(view), cond, str(frame)] + [f"{v:g}" for v in values])


def write_csv(path, rows, **kwargs):
    path.write_text("\n".join([keypoint_header(**kwargs)] + rows) + "\n")
    return path


def toy_records(counts):
    seq = PoseSequence.from_xy(np.zeros((4, 17, 2)))
    return [
        GaitSample(identity, 0.0, "NM", seq, run=run)
        for identity, count in counts.items()
        for run in range(count)
    ]


def test_dataset_round_trip_is_exact(tmp_path, tiny_records):
    path = tmp_path / "data.jsonl"
    save_dataset(tiny_records, path, seed=0)
    loaded = load_dataset(path)
    assert len(loaded) == len(tiny_records)
    for a, b in zip(loaded, tiny_records):
        assert a.sort_key() == b.sort_key()
        assert a.aligned_group == b.aligned_group
        assert np.array_equal(a.sequence.coords, b.sequence.coords)

    again = tmp_path / "again.jsonl"
    save_dataset(loaded, again, seed=0)
    assert again.read_bytes() == path.read_bytes()


def test_manifest_counts(tmp_path, tiny_records):
    path = tmp_path / "data.jsonl"
    save_dataset(tiny_records, path, seed=3, extra={"frames": 16})
    manifest = load_manifest(path)
    assert manifest.record_count == len(tiny_records)
    assert manifest.identity_count == 6
    assert manifest.view_list == [0.0, 90.0, 180.0]
    assert manifest.condition_list == ["NM", "BG"]
    assert manifest.seed == 3
    assert manifest.extra == {"frames": 16}
    manifest.check(load_dataset(path))


def test_truncated_line_reports_line_number(tmp_path, tiny_records):
    path = tmp_path / "data.jsonl"
    save_dataset(tiny_records[:8], path)
    lines = path.read_text().splitlines()
    lines[6] = lines[6][: len(lines[6]) // 2]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as info:
        load_dataset(path)
    assert info.value.line == 7


def test_wrong_joint_count_is_parse_error(tmp_path):
    frames = np.zeros((2, 16, 3)).tolist()
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id":"a","view_deg":0,"cond":"NM","frames":%s}\n' % frames)
    with pytest.raises(ParseError) as info:
        load_dataset(path)
    assert info.value.line == 1


def test_topology_mismatch_cites_line(tmp_path, tiny_records):
    path = tmp_path / "data.jsonl"
    save_dataset(tiny_records[:3], path)
    with pytest.raises(ParseError, match="topology has 5 joints") as info:
        load_dataset(path, topology=SkeletonTopology(tuple("abcde"), ((0, 1), (1, 2), (2, 3), (3, 4))))
    assert info.value.line == 1


def test_manifest_records_data_digest(tmp_path, tiny_records):
    path = tmp_path / "data.jsonl"
    manifest = save_dataset(tiny_records, path)
    assert manifest.data_digest == file_digest(path)
    assert load_manifest(path).data_digest == manifest.data_digest


def test_edited_dataset_fails_digest_check(tmp_path, tiny_records):
    path = tmp_path / "data.jsonl"
    save_dataset(tiny_records, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ParseError, match="digest"):
        load_dataset(path)


def test_empty_dataset(tmp_path):
    path = tmp_path / "empty.jsonl"
    manifest = save_dataset([], path)
    assert path.read_text() == ""
    assert load_dataset(path) == []
    assert (manifest.record_count, manifest.identity_count) == (0, 0)


def test_missing_dataset_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "missing.jsonl")


def test_import_keypoints_groups_sequences(tmp_path):
    rows = [keypoint_row("7", 90, "NM", t, float(t)) for t in range(5)]
    rows += [keypoint_row("8", 0, "BG", t, 1.0) for t in range(3)]
    records = import_keypoints(write_csv(tmp_path / "kp.csv", rows), id_map={"7": "walker7"})
    assert [(r.identity, r.condition, r.sequence.frames) for r in records] == [
        ("8", "BG", 3), ("walker7", "NM", 5),
    ]
    seq = records[1].sequence
    assert np.allclose(seq.xy[:, 0, 0], np.arange(5))
    assert np.allclose(seq.confidence, 0.5)


def test_import_without_confidence_defaults_to_one(tmp_path):
    rows = [keypoint_row("1", 0, "NM", t, 0.0, confidence=False) for t in range(2)]
    records = import_keypoints(write_csv(tmp_path / "kp.csv", rows, confidence=False))
    assert np.all(records[0].sequence.confidence == 1.0)


def test_import_short_row_cites_csv_line(tmp_path):
    rows = [keypoint_row("1", 0, "NM", t, 0.0) for t in range(4)]
    rows[2] = rows[2].rsplit(",", 3)[0]
    with pytest.raises(FormatError) as info:
        import_keypoints(write_csv(tmp_path / "kp.csv", rows))
    assert info.value.line == 4


def test_import_rejects_sixteen_keypoints(tmp_path):
    rows = [keypoint_row("1", 0, "NM", 0, 0.0, joints=16)]
    with pytest.raises(FormatError) as info:
        import_keypoints(write_csv(tmp_path / "kp.csv", rows, joints=16))
    assert info.value.line == 1


def test_import_resamples_to_thirty_fps(tmp_path):
    rows = [keypoint_row("1", 0, "NM", t, float(t)) for t in range(61)]
    records = import_keypoints(write_csv(tmp_path / "kp.csv", rows), fps=60.0)
    seq = records[0].sequence
    assert seq.frames == 31
    assert np.allclose(seq.xy[:, 3, 0], np.arange(0, 61, 2))


def test_augment_identity_crop_without_noise(walk, acceptance_rig):
    from src.synth_gait import render_views

    seq = render_views(walk[:30], acceptance_rig)[0]
    same = augment(seq, 30, seed=1)
    assert np.array_equal(same.coords, seq.coords)
    looped = augment(seq, 60, seed=1)
    assert np.array_equal(looped.coords[30:], seq.coords)


def test_augment_deterministic_noise(walk, acceptance_rig):
    from src.synth_gait import render_views

    seq = render_views(walk, acceptance_rig)[4]
    a = augment(seq, 40, noise_std=0.05, seed=9)
    b = augment(seq, 40, noise_std=0.05, seed=9)
    assert np.array_equal(a.coords, b.coords)
    clean = augment(seq, 40, seed=9)
    jitter = (a.xy - clean.xy) / coordinate_scale(clean.xy)
    assert jitter.std() == pytest.approx(0.05, rel=0.1)


def test_augment_fixed_indices_wrap():
    seq = PoseSequence.from_xy(np.arange(3, dtype=float)[:, None, None] * np.ones((3, 17, 2)))
    out = augment(seq, 5, indices=np.arange(5))
    assert out.xy[:, 0, 0].tolist() == [0.0, 1.0, 2.0, 0.0, 1.0]


def test_standardize_is_zero_mean_unit_radius(walk, acceptance_rig):
    from src.synth_gait import render_views

    x = standardize(render_views(walk, acceptance_rig)[2])
    assert x.shape == (100, 17, 3)
    assert np.allclose(x[..., :2].reshape(-1, 2).mean(axis=0), 0.0, atol=1e-12)
    assert np.sqrt(np.mean(np.sum(x[..., :2] ** 2, axis=-1))) == pytest.approx(1.0)


def test_pk_sampler_minimal_batch():
    batches = list(pk_sampler(toy_records({"a": 2, "b": 2}), P=2, K=2, seed=0))
    assert len(batches) == 1
    assert sorted(batches[0]) == [0, 1, 2, 3]


def test_pk_sampler_infeasible():
    with pytest.raises(ConfigurationError):
        list(pk_sampler(toy_records({"a": 2, "b": 1}), P=2, K=2, seed=0))
    with pytest.raises(ConfigurationError):
        list(pk_sampler(toy_records({"a": 2, "b": 2}), P=1, K=2, seed=0))


@pytest.mark.parametrize("seed", range(10))
def test_pk_batches_always_have_p_identities_of_k(seed):
    rng = np.random.default_rng(seed)
    counts = {f"id{i}": int(rng.integers(1, 12)) for i in range(int(rng.integers(4, 10)))}
    counts["id0"] = counts["id1"] = counts["id2"] = 6
    records = toy_records(counts)
    seen = []
    for batch in pk_sampler(records, P=3, K=2, seed=seed):
        assert len(batch) == 6
        per_id = Counter(records[i].identity for i in batch)
        assert len(per_id) == 3 and set(per_id.values()) == {2}
        seen.extend(batch)
    assert len(seen) == len(set(seen))
