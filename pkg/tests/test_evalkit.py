import numpy as np
import pandas as pd
import pytest
from scipy.stats import ortho_group

from src.errors import ConfigurationError, ContractError, ProtocolError
from src.evalkit import RESULT_COLUMNS, EvalProtocol, load_results, mpjpe, rank1_matrix, report, summary_table
from src.recognizer import EmbeddingRecord
from src.skeleton import PoseSequence
from src.synth_gait import CASIA_YAWS


def make_embeddings(vector_for, ids=5, views=(0.0, 90.0, 180.0), conditions=("NM", "BG"), runs=2):
    records = []
    for i in range(ids):
        for condition in conditions:
            for run in range(runs):
                for view in views:
                    records.append(EmbeddingRecord(f"id{i:02d}", view, condition, vector_for(i, condition, run, view), run=run))
    return records


def one_hot(size):
    def vector_for(i, *_):
        v = np.zeros(size)
        v[i] = 1.0
        return v
    return vector_for


def test_protocol_split_uses_first_half_of_runs():
    records = make_embeddings(one_hot(3), ids=3, views=(0.0,), conditions=("NM", "CL"), runs=3)
    gallery, probes = EvalProtocol().split(records)
    assert {(records[i].condition, records[i].run) for i in gallery} == {("NM", 0), ("NM", 1)}
    assert {(records[i].condition, records[i].run) for i in probes} == {("NM", 2), ("CL", 0), ("CL", 1), ("CL", 2)}
    assert not set(gallery) & set(probes)


def test_protocol_validation():
    with pytest.raises(ConfigurationError):
        EvalProtocol(same_view_policy="sometimes").validate()
    with pytest.raises(ConfigurationError):
        EvalProtocol(probe_conditions=("XX",)).validate()
    assert EvalProtocol().policies == ("include", "exclude")


def test_identical_embeddings_score_perfectly():
    table = rank1_matrix(make_embeddings(one_hot(5)), EvalProtocol(probe_conditions=("NM", "BG")))
    assert list(table.columns) == RESULT_COLUMNS
    assert (table["accuracy"] == 1.0).all()
    means = table[table["probe_view"] == "mean"]
    assert len(means) == 2 * 2
    assert set(table["probe_view"]) == {"0", "90", "180", "mean"}


def test_random_embeddings_score_at_chance():
    scores = []
    for seed in range(30):
        rng = np.random.default_rng(seed)
        records = make_embeddings(lambda *_: rng.normal(size=32), ids=20, views=(0.0, 36.0, 90.0, 144.0), conditions=("NM",))
        table = rank1_matrix(records, EvalProtocol(probe_conditions=("NM",), same_view_policy="exclude"))
        scores.append(float(table.loc[table["probe_view"] == "mean", "accuracy"].iloc[0]))
    assert np.mean(scores) == pytest.approx(1 / 20, abs=0.015)


def test_exclude_policy_skips_same_view():
    # view-specific codes: only same-view matches are correct
    def vector_for(i, condition, run, view):
        v = np.zeros(20)
        v[i + (10 if view == 90.0 else 0)] = 1.0
        return v

    records = make_embeddings(vector_for, ids=4, views=(0.0, 90.0), conditions=("NM",))
    table = rank1_matrix(records, EvalProtocol(probe_conditions=("NM",)))
    include = table[(table["policy"] == "include") & (table["probe_view"] != "mean")]
    exclude = table[(table["policy"] == "exclude") & (table["probe_view"] != "mean")]
    # cross-view similarities are all zero, so argmax picks the first gallery id
    assert include["accuracy"].tolist() == [0.625, 0.625]
    assert exclude["accuracy"].tolist() == [0.25, 0.25]


def test_rotation_does_not_change_accuracy():
    rng = np.random.default_rng(4)
    records = make_embeddings(lambda *_: rng.normal(size=8), ids=6)
    rotation = ortho_group.rvs(8, random_state=0)
    rotated = [EmbeddingRecord(r.identity, r.view_degrees, r.condition, r.vector @ rotation, run=r.run) for r in records]
    protocol = EvalProtocol(probe_conditions=("NM", "BG"))
    pd.testing.assert_frame_equal(rank1_matrix(records, protocol), rank1_matrix(rotated, protocol))


def test_missing_gallery_identity():
    records = make_embeddings(one_hot(4), ids=3)
    records.append(EmbeddingRecord("stranger", 0.0, "BG", np.ones(4), run=0))
    with pytest.raises(ProtocolError):
        rank1_matrix(records, EvalProtocol())


def test_empty_gallery():
    records = make_embeddings(one_hot(3), ids=3, conditions=("BG",))
    with pytest.raises(ProtocolError):
        rank1_matrix(records, EvalProtocol())


def test_mpjpe_reference_values():
    base = PoseSequence.from_xy(np.zeros((4, 17, 2)))
    shifted = PoseSequence.from_xy(np.tile([3.0, 4.0], (4, 17, 1)))
    assert mpjpe(base, base) == 0.0
    assert mpjpe(base, shifted) == pytest.approx(5.0)
    with pytest.raises(ContractError):
        mpjpe(base, PoseSequence.from_xy(np.zeros((3, 17, 2))))


def test_mpjpe_matches_loop(rng):
    a = PoseSequence.from_xy(rng.normal(size=(5, 17, 2)))
    b = PoseSequence.from_xy(rng.normal(size=(5, 17, 2)))
    expected = np.mean([np.hypot(*(a.xy[t, j] - b.xy[t, j])) for t in range(5) for j in range(17)])
    assert mpjpe(a, b) == pytest.approx(expected)


def test_summary_orders_casia_views():
    records = make_embeddings(one_hot(3), ids=3, views=CASIA_YAWS, conditions=("NM",))
    table = summary_table(rank1_matrix(records, EvalProtocol(probe_conditions=("NM",))))
    assert list(table.columns) == [f"{v:g}" for v in CASIA_YAWS] + ["mean"]
    assert (table.to_numpy() == 100.0).all()


def test_report_files(tmp_path):
    results = rank1_matrix(make_embeddings(one_hot(5)), EvalProtocol(probe_conditions=("NM", "BG")))
    paths = report(results, tmp_path / "eval" / "results")
    loaded = load_results(paths["csv"])
    pd.testing.assert_frame_equal(loaded, results)
    text = paths["table"].read_text()
    assert "| policy" in text and "mean" in text and "100.0" in text


def test_report_empty_results(tmp_path):
    paths = report(pd.DataFrame(columns=RESULT_COLUMNS), tmp_path / "results")
    assert paths["csv"].read_text().strip() == ",".join(RESULT_COLUMNS)
    assert load_results(paths["csv"]).empty
