"""ROC AUC scoring and the patch observer's learning behavior."""

import numpy as np
import pytest

from iilr.data import load_split
from iilr.errors import ConfigError, DatasetError
from iilr.observer import (ObserverTrainConfig, build_patch_set,
                           extract_patches, observer_auc, roc_auc,
                           train_observer)
from iilr_toydata import make_dataset

LABEL_TUMOR = 4
PATCH = 16


def test_roc_auc_hand_values():
    assert roc_auc([2.0, 3.0], [0.0, 1.0]) == 1.0
    assert roc_auc([0.0, 1.0], [2.0, 3.0]) == 0.0
    # 3 wins out of 4 comparisons
    assert roc_auc([1.0, 3.0], [0.0, 2.0]) == pytest.approx(0.75)
    # all tied
    assert roc_auc([1.0, 1.0], [1.0]) == pytest.approx(0.5)
    with pytest.raises(ConfigError):
        roc_auc([], [1.0])


def _one_image(seed):
    rng = np.random.default_rng(seed)
    img = rng.normal(0, 0.01, size=(32, 32)).astype(np.float32)
    labels = np.zeros((32, 32), dtype=np.int32)
    j, l = rng.integers(6, 22, size=2)
    labels[l:l + 5, j:j + 5] = LABEL_TUMOR
    img[l:l + 5, j:j + 5] += 0.06
    return img, labels


def test_extract_patches_contract():
    img, labels = _one_image(0)
    rng = np.random.default_rng(0)
    present, absent = extract_patches(img, labels, PATCH, rng,
                                      n_absent=3)
    assert len(present) == 1
    assert len(absent) == 3
    for p in present + absent:
        assert p.shape == (PATCH, PATCH)
    # the present patch contains the full tumor footprint
    assert present[0].max() > 0.05
    with pytest.raises(ConfigError):
        extract_patches(img, labels, 64, rng)


def test_build_patch_set_requires_both_classes():
    imgs = [np.zeros((32, 32), dtype=np.float32)]
    labels = [np.zeros((32, 32), dtype=np.int32)]
    with pytest.raises(DatasetError):
        build_patch_set(imgs, labels, PATCH)


def test_build_patch_set_counts():
    pairs = [_one_image(s) for s in range(6)]
    x, y = build_patch_set([p[0] for p in pairs],
                           [p[1] for p in pairs], PATCH, seed=0)
    assert x.shape[1:] == (1, PATCH, PATCH)
    assert int(y.sum()) == 6          # one tumor per image
    assert len(y) == 6 * (1 + 4)      # default four absent patches each


def test_observer_learns_oracle_signal():
    pairs = [_one_image(s) for s in range(12)]
    x, y = build_patch_set([p[0] for p in pairs],
                           [p[1] for p in pairs], PATCH, seed=0)
    cfg = ObserverTrainConfig(epochs=40, seed=0)
    from iilr.model import ObserverSpec
    model = train_observer(x, y, spec=ObserverSpec(patch_size=PATCH),
                           cfg=cfg)
    assert observer_auc(model, x, y) >= 0.99


def test_observer_shuffled_labels_at_chance():
    pairs = [_one_image(100 + s) for s in range(25)]
    x, y = build_patch_set([p[0] for p in pairs],
                           [p[1] for p in pairs], PATCH, seed=1)
    rng = np.random.default_rng(5)
    y_shuffled = y[rng.permutation(len(y))]
    cfg = ObserverTrainConfig(epochs=40, seed=0)
    from iilr.model import ObserverSpec
    model = train_observer(x, y_shuffled,
                           spec=ObserverSpec(patch_size=PATCH), cfg=cfg)
    auc = observer_auc(model, x, y)
    assert 0.3 < auc < 0.7, f"AUC {auc:.3f} not at chance level"


def test_patch_set_from_toy_dataset(tmp_path):
    root = make_dataset(tmp_path / "toy", 4, 1, size=32, seed=31)
    items = load_split(root, "train")
    x, y = build_patch_set([it.target for it in items],
                           [np.asarray(it.labels) for it in items],
                           PATCH, seed=0)
    assert y.sum() >= 1
    assert (y == 0).sum() >= 1
