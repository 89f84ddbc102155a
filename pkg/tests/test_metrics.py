import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from trajkit.errors import LengthMismatchError, ValidationError
from trajkit.metrics import (
    DEFAULT_CLASSES,
    evaluate,
    entity_distribution,
    histogram_csv,
    noun_candidates,
    read_report,
    report_rows,
    rot_err,
    trans_err,
    write_report,
)
from trajkit.pose import PoseSequence, rot_z


def _seq(T, R=None):
    T = np.asarray(T, dtype=float)
    R = np.repeat(np.eye(3)[None], len(T), axis=0) if R is None else np.asarray(R)
    return PoseSequence(R, T)


def _random_seq(rng, F):
    return PoseSequence(Rotation.random(F, random_state=rng).as_matrix().reshape(F, 3, 3), rng.uniform(-3, 3, (F, 3)))


def brute_force(est, gt):
    """Per-frame errors from 4x4 homogeneous matrices, written independently."""
    F = gt.num_frames
    Me = [np.block([[est.rotations[f], est.translations[f][:, None]], [np.zeros((1, 3)), np.ones((1, 1))]]) for f in range(F)]
    Mg = [np.block([[gt.rotations[f], gt.translations[f][:, None]], [np.zeros((1, 3)), np.ones((1, 1))]]) for f in range(F)]
    shift = np.eye(4)
    shift[:3, 3] = Mg[0][:3, 3] - Me[0][:3, 3]
    t, r = [], []
    for f in range(F):
        a = shift @ Me[f]
        t.append(np.sqrt(np.sum((a[:3, 3] - Mg[f][:3, 3]) ** 2)))
        rel = Me[f][:3, :3].T @ Mg[f][:3, :3]
        c = np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0)
        r.append(np.degrees(np.arccos(c)))
    return float(np.mean(t)), float(np.mean(r))


# -- oracles ------------------------------------------------------------------


def test_drift_case():
    F = 11
    gt = _seq(np.zeros((F, 3)))
    est = _seq(np.column_stack([0.1 * np.arange(F), np.zeros(F), np.zeros(F)]))
    assert trans_err(est, gt) == pytest.approx(0.5, abs=1e-9)


def test_half_quarter_turn_case():
    F = 10
    R = np.stack([np.eye(3)] * 5 + [rot_z(90)] * 5)
    gt = _seq(np.zeros((F, 3)))
    assert rot_err(_seq(np.zeros((F, 3)), R), gt) == pytest.approx(45.0, abs=1e-9)


def test_constant_yaw_offset():
    gt = _random_seq(np.random.default_rng(0), 6)
    est = PoseSequence(gt.rotations @ rot_z(10), gt.translations)
    assert rot_err(est, gt) == pytest.approx(10.0, abs=1e-9)


def test_identical_sequences():
    gt = _random_seq(np.random.default_rng(1), 7)
    e = evaluate(gt, gt)
    assert e.trans_err == 0.0 and e.rot_err == 0.0


def test_constant_offset_removed():
    gt = _random_seq(np.random.default_rng(2), 7)
    assert trans_err(gt.translated([5, 5, 0]), gt) == pytest.approx(0.0, abs=1e-12)


def test_length_mismatch():
    with pytest.raises(LengthMismatchError):
        trans_err(_seq(np.zeros((3, 3))), _seq(np.zeros((4, 3))))
    with pytest.raises(LengthMismatchError):
        rot_err(_seq(np.zeros((3, 3))), _seq(np.zeros((4, 3))))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_matches_brute_force(seed, F):
    rng = np.random.default_rng(seed)
    est, gt = _random_seq(rng, F), _random_seq(rng, F)
    t, r = brute_force(est, gt)
    assert trans_err(est, gt) == pytest.approx(t, abs=1e-9)
    assert rot_err(est, gt) == pytest.approx(r, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_metric_invariants(seed, F):
    rng = np.random.default_rng(seed)
    est, gt = _random_seq(rng, F), _random_seq(rng, F)
    shift = rng.uniform(-10, 10, 3)
    assert trans_err(est.translated(shift), gt.translated(shift)) == pytest.approx(trans_err(est, gt), abs=1e-9)
    assert rot_err(est.translated(shift), gt.translated(shift)) == rot_err(est, gt)
    assert trans_err(est.translated(shift), gt) == pytest.approx(trans_err(est, gt), abs=1e-9)
    assert rot_err(est, gt) == pytest.approx(rot_err(gt, est), abs=1e-12)
    e = evaluate(est, gt)
    assert e.trans_err >= 0 and e.rot_err >= 0
    assert np.mean(e.per_frame_trans) == pytest.approx(e.trans_err, abs=1e-12)
    assert np.mean(e.per_frame_rot) == pytest.approx(e.rot_err, abs=1e-12)


# -- report -------------------------------------------------------------------


def test_report_round_trip():
    rng = np.random.default_rng(3)
    a, b = _random_seq(rng, 4), _random_seq(rng, 4)
    rows = report_rows([("clip0", "e0", a, b), ("clip0", "e1", b, b)])
    text = write_report(rows)
    back = read_report(text)
    assert back == rows
    assert back[1]["trans_err_m"] == 0 and back[1]["rot_err_deg"] == 0


@pytest.mark.parametrize("text", ['{"rows": 3}\n', '{"rows": [{"clip_id": "x"}]}\n', "[]\n"])
def test_report_rejects_bad_rows(text):
    with pytest.raises(ValidationError):
        read_report(text)


# -- entity distribution ------------------------------------------------------


def test_distribution_examples():
    classes = {"human": ["man"], "dog": ["dog"]}
    assert entity_distribution([], classes) == {"human": 0, "dog": 0}
    assert entity_distribution(["a man walks", "a man and a dog"], classes) == {"human": 2, "dog": 1}
    assert entity_distribution(["the manager smiles"], classes)["human"] == 0


def test_one_count_per_caption_and_class():
    assert entity_distribution(["a man and a man and a woman"])["human"] == 1


def test_plurals_and_case():
    classes = {"dog": ["dog"], "puppy": ["puppy"], "fox": ["fox"]}
    hist = entity_distribution(["Two DOGS run", "three puppies", "foxes everywhere"], classes)
    assert hist == {"dog": 1, "puppy": 1, "fox": 1}


def test_multi_word_keyword():
    hist = entity_distribution(["a polar bear on ice", "a brown bear"])
    assert hist["polar bear"] == 1 and hist["bear"] == 2


def test_default_classes_size():
    assert len(DEFAULT_CLASSES) >= 60


def test_empty_keyword_map_rejected():
    with pytest.raises(ValidationError):
        entity_distribution(["a man"], {})
    with pytest.raises(ValidationError):
        entity_distribution(["a man"], {"x": ["the man"]})


def test_noun_candidates_drop_stopwords():
    assert noun_candidates("A man walks with the Dog") == ["man", "dog"]


def test_histogram_csv():
    text = histogram_csv({"dog": 2, "cat": 0})
    assert text == "class,count\ncat,0\ndog,2\n"
