import numpy as np
import pytest

from spxtrack.classifiers import (ForestConfig, forest_posteriors, knn_posteriors, load_forest,
                                  save_forest, train_forest)
from spxtrack.features import frame_features, generate_bank
from spxtrack.imaging import Frame
from spxtrack.matching import pixel_argmax
from spxtrack.slic import Segmentation, SlicConfig, segment
from spxtrack.synthetic import textured_frame

from conftest import random_frame
from oracles import knn_oracle

BANK = generate_bank(1, count=30, radius=8)


def halves(h=20, w=24):
    data = np.zeros((h, w, 3), np.uint8)
    data[:, w // 2:] = 255
    labels = np.zeros((h, w), np.int32)
    labels[:, w // 2:] = 1
    return Frame(data), Segmentation(labels)


def check_forest(forest):
    for tree in forest.trees:
        internal = tree.leaf_id < 0
        assert (tree.left[internal] >= 0).all() and (tree.right[internal] >= 0).all()
        assert (tree.leaf_classes < forest.n_classes).all()
        sums = np.asarray(tree.leaf_matrix(forest.n_classes).sum(axis=1)).ravel()
        assert np.allclose(sums, 1.0, atol=1e-9)


def test_black_white_halves():
    f, seg = halves()
    forest = train_forest(f, seg, BANK, ForestConfig(trees=10, seed=3))
    check_forest(forest)
    post = forest_posteriors(forest, f, BANK)
    acc = (pixel_argmax(post) == seg.labels).mean()
    assert acc >= 0.99
    assert np.allclose(post.row_sums(), 1.0, atol=1e-6)


def test_max_depth_zero_gives_prior():
    f = textured_frame(20, 20, seed=2)
    seg = segment(f, SlicConfig(target_count=6))
    forest = train_forest(f, seg, BANK, ForestConfig(trees=1, max_depth=0, bootstrap=False))
    assert forest.trees[0].n_leaves == 1
    post = forest_posteriors(forest, textured_frame(20, 20, seed=9), BANK)
    prior = seg.sizes / seg.sizes.sum()
    assert np.allclose(post.probs.toarray(), prior[None, :], atol=1e-12)


def test_single_class_input():
    f = textured_frame(10, 10, seed=1)
    seg = Segmentation(np.zeros((10, 10), np.int32))
    forest = train_forest(f, seg, BANK, ForestConfig(trees=3))
    assert all(t.n_leaves == 1 for t in forest.trees)
    post = forest_posteriors(forest, f, BANK)
    assert post.pixel(3, 4) == {0: 1.0}


def test_too_few_samples():
    f = textured_frame(2, 2, seed=1)
    seg = Segmentation(np.array([[0, 0], [1, 1]]))
    with pytest.raises(ValueError):
        train_forest(f, seg, BANK, ForestConfig(min_leaf=5))


def test_bank_mismatch():
    f, seg = halves()
    forest = train_forest(f, seg, BANK, ForestConfig(trees=2))
    with pytest.raises(ValueError):
        forest_posteriors(forest, f, generate_bank(1, count=31, radius=8))


def test_config_validation():
    with pytest.raises(ValueError):
        ForestConfig(trees=0)
    with pytest.raises(ValueError):
        ForestConfig(min_leaf=0)


def test_determinism_jobs_and_round_trip(tmp_path):
    f = textured_frame(24, 24, seed=4)
    seg = segment(f, SlicConfig(target_count=12))
    cfg = ForestConfig(trees=6, seed=11)
    a = train_forest(f, seg, BANK, cfg)
    b = train_forest(f, seg, BANK, cfg, jobs=3)
    assert a == b
    assert a != train_forest(f, seg, BANK, ForestConfig(trees=6, seed=12))
    save_forest(a, tmp_path / "f.npz")
    c = load_forest(tmp_path / "f.npz")
    assert c == a
    g = textured_frame(24, 24, seed=5)
    assert (forest_posteriors(a, g, BANK).probs != forest_posteriors(c, g, BANK).probs).nnz == 0


def test_self_consistency_textured():
    f = textured_frame(48, 64, seed=21)
    seg = segment(f, SlicConfig(target_count=40))
    bank = generate_bank(3)
    X = frame_features(f, bank)
    forest = train_forest(f, seg, bank, ForestConfig(trees=20, seed=1), features=X)
    post = forest_posteriors(forest, f, bank, features=X)
    check_forest(forest)
    assert np.allclose(post.row_sums(), 1.0, atol=1e-6)
    assert (pixel_argmax(post) == seg.labels).mean() >= 0.95


def test_train_fraction_subsamples():
    f = textured_frame(24, 24, seed=4)
    seg = segment(f, SlicConfig(target_count=8))
    forest = train_forest(f, seg, BANK, ForestConfig(trees=2, train_fraction=0.25, bootstrap=False,
                                                     max_depth=0))
    assert forest.trees[0].leaf_counts.sum() == round(0.25 * 24 * 24)


def test_knn_exact_match_and_full_k():
    f = textured_frame(8, 8, seed=2)
    seg = segment(f, SlicConfig(target_count=4))
    post = knn_posteriors(f, seg, f, BANK, k=1)
    # with k=1, each pixel's nearest neighbor (distance 0) is itself unless an exact
    # duplicate with a lower index exists, which shares the feature vector
    X = frame_features(f, BANK)
    nn_label = pixel_argmax(post).ravel()
    for p in range(64):
        same = np.flatnonzero((X == X[p]).all(axis=1))
        assert nn_label[p] == seg.labels.ravel()[same[0]]
    full = knn_posteriors(f, seg, textured_frame(8, 8, seed=3), BANK, k=64)
    assert np.allclose(full.probs.toarray(), (seg.sizes / 64)[None, :])
    with pytest.raises(ValueError):
        knn_posteriors(f, seg, f, BANK, k=65)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_knn_oracle_random(k):
    rng = np.random.default_rng(k)
    for _ in range(3):
        t, s = random_frame(rng, 8, 8), random_frame(rng, 8, 8)
        seg = segment(t, SlicConfig(target_count=5))
        post = knn_posteriors(t, seg, s, BANK, k=k)
        oracle = knn_oracle(frame_features(t, BANK), frame_features(s, BANK), seg.labels.ravel(),
                            k, seg.count)
        assert np.array_equal(post.probs.toarray(), oracle)
