import numpy as np
import pytest

import adenet


def test_param_counts():
    assert adenet.param_counts("adenet") == (102082, 448)
    assert adenet.param_counts("adenet-nobn") == (101634, 0)
    with pytest.raises(ValueError):
        adenet.param_counts("vgg19")


def test_metrics_from_confusion():
    r = adenet.metrics_from_confusion(tp=1026, fn=424, fp=213, tn=3962)
    assert r["accuracy"] == pytest.approx(4988 / 5625)
    assert r["fn_rate"] == pytest.approx(424 / 5625)
    assert r["roc_auc"] is None


def test_roc_auc_matches_pairwise_count():
    rng = np.random.default_rng(0)
    scores = rng.integers(0, 4, 40) / 3.0
    labels = rng.integers(0, 2, 40)
    labels[:2] = [0, 1]
    pos, neg = scores[labels == 1], scores[labels == 0]
    pairs = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    assert adenet.roc_auc(scores.tolist(), labels.tolist()) == pytest.approx(pairs / (len(pos) * len(neg)))


def test_features():
    crop = np.full((12, 20, 3), 90, dtype=np.uint8)
    f = adenet.extract_features(crop)
    assert len(f) == len(adenet.feature_names()) == 68
    assert sum(f[:8]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        adenet.extract_features(np.zeros((4, 4), dtype=np.uint8))


def test_synth_and_cli(tmp_path):
    manifest, sidecar, damaged, undamaged = adenet.synth(tmp_path / "d", n=9, image_size=48, seed=1)
    assert (damaged, undamaged) == (3, 6)
    assert manifest.exists() and sidecar.exists()
    code, out, err = adenet.run_cli(["params", "--arch", "adenet"])
    assert code == 0
    assert out.strip() == "trainable=102082 non_trainable=448"
    code, _, err = adenet.run_cli(["nope"])
    assert code == 1 and err
