import numpy as np
import pytest

from helpers import write_idx
from synamap import (DataConsistencyError, Dataset, IdxFormatError, cap_stream,
                     load_idx, make_permuted_tasks, make_rotated_tasks,
                     make_split_tasks, make_synthetic_digits, rotate_image)
from synamap.data_tasks import subsample


def test_idx_round_trip(tmp_path, rng):
    images = rng.integers(0, 256, size=(12, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, size=12, dtype=np.uint8)
    img_path, lbl_path = write_idx(tmp_path, images, labels)
    d = load_idx(img_path, lbl_path)
    assert d.images.shape == (12, 784)
    assert d.images.dtype == np.float32
    assert np.array_equal(d.images, images.reshape(12, 784).astype(np.float32) / 255.0)
    assert np.array_equal(d.labels, labels.astype(np.int64))


def test_idx_bad_image_magic(tmp_path, rng):
    images = rng.integers(0, 256, size=(3, 28, 28), dtype=np.uint8)
    labels = np.zeros(3, dtype=np.uint8)
    img_path, lbl_path = write_idx(tmp_path, images, labels)
    raw = bytearray(img_path.read_bytes())
    raw[3] = 0x01
    img_path.write_bytes(bytes(raw))
    with pytest.raises(IdxFormatError):
        load_idx(img_path, lbl_path)


def test_idx_bad_label_magic(tmp_path, rng):
    images = rng.integers(0, 256, size=(3, 28, 28), dtype=np.uint8)
    labels = np.zeros(3, dtype=np.uint8)
    img_path, lbl_path = write_idx(tmp_path, images, labels)
    raw = bytearray(lbl_path.read_bytes())
    raw[3] = 0x03
    lbl_path.write_bytes(bytes(raw))
    with pytest.raises(IdxFormatError):
        load_idx(img_path, lbl_path)


def test_idx_count_mismatch(tmp_path, rng):
    images = rng.integers(0, 256, size=(4, 28, 28), dtype=np.uint8)
    img_path, _ = write_idx(tmp_path, images, np.zeros(4, dtype=np.uint8))
    other = tmp_path / "other"
    other.mkdir()
    _, lbl_path = write_idx(other, images[:3], np.zeros(3, dtype=np.uint8))
    with pytest.raises(DataConsistencyError):
        load_idx(img_path, lbl_path)


def test_idx_truncated_payload(tmp_path, rng):
    images = rng.integers(0, 256, size=(4, 28, 28), dtype=np.uint8)
    img_path, lbl_path = write_idx(tmp_path, images, np.zeros(4, dtype=np.uint8))
    img_path.write_bytes(img_path.read_bytes()[:-10])
    with pytest.raises(IdxFormatError):
        load_idx(img_path, lbl_path)


def test_dataset_validation(rng):
    with pytest.raises(DataConsistencyError):
        Dataset(images=np.zeros((3, 100), dtype=np.float32), labels=np.zeros(3, dtype=np.int64))
    with pytest.raises(DataConsistencyError):
        Dataset(images=np.zeros((3, 784), dtype=np.float32), labels=np.zeros(2, dtype=np.int64))
    with pytest.raises(DataConsistencyError):
        Dataset(images=np.full((2, 784), 1.5, dtype=np.float32), labels=np.zeros(2, dtype=np.int64))
    with pytest.raises(DataConsistencyError):
        Dataset(images=np.zeros((2, 784), dtype=np.float32), labels=np.array([0, 11]))


def test_rotate_180_is_point_reflection(rng):
    img = rng.uniform(0.0, 1.0, size=16)
    out = rotate_image(img, 180.0).reshape(4, 4)
    assert np.allclose(out, img.reshape(4, 4)[::-1, ::-1], atol=1e-12)


def test_rotate_90_permutes_pixels(rng):
    img = rng.uniform(0.0, 1.0, size=16)
    out = rotate_image(img, 90.0)
    # a quarter turn maps the grid onto itself, so values are only shuffled
    assert np.allclose(np.sort(out), np.sort(img), atol=1e-12)
    assert not np.allclose(out, img)


def test_rotate_zero_is_identity_copy(rng):
    img = rng.uniform(0.0, 1.0, size=784).astype(np.float32)
    out = rotate_image(img, 0.0)
    assert np.array_equal(out, img)
    out[0] = 0.5
    assert img[0] != 0.5 or out[0] == img[0]  # no aliasing


def test_rotate_bounds_and_range(rng):
    img = rng.uniform(0.0, 1.0, size=784)
    out = rotate_image(img, 37.5)
    assert out.min() >= 0.0 and out.max() <= 1.0
    for bad in (-5.0, 180.1):
        with pytest.raises(ValueError):
            rotate_image(img, bad)


def test_split_stream_structure(tiny_digits):
    train, test = tiny_digits
    stream = make_split_tasks(train, test)
    assert stream.name == "split"
    assert len(stream) == 5
    seen = []
    for t, expect in zip(stream.tasks, ((0, 1), (2, 3), (4, 5), (6, 7), (8, 9))):
        assert t.spec.class_set == expect
        assert set(np.unique(t.train.labels)) == set(expect)
        assert set(np.unique(t.test.labels)) == set(expect)
        seen.extend(expect)
    assert sorted(seen) == list(range(10))


def test_split_missing_class_rejected(tiny_digits):
    train, test = tiny_digits
    keep = train.labels != 9
    partial = Dataset(images=train.images[keep], labels=train.labels[keep])
    with pytest.raises(DataConsistencyError):
        make_split_tasks(partial, test)


def test_permuted_stream(tiny_digits):
    train, test = tiny_digits
    stream = make_permuted_tasks(train, test, 3, seed=11)
    assert len(stream) == 3
    assert stream.tasks[0].spec.transform.kind == "identity"
    assert np.array_equal(stream.tasks[0].train.images, train.images)
    for t in stream.tasks[1:]:
        perm = t.spec.transform.perm
        assert sorted(perm.tolist()) == list(range(784))
        assert np.array_equal(t.train.images, train.images[:, perm])
        assert np.array_equal(t.train.labels, train.labels)
    again = make_permuted_tasks(train, test, 3, seed=11)
    assert np.array_equal(again.tasks[2].spec.transform.perm,
                          stream.tasks[2].spec.transform.perm)
    other = make_permuted_tasks(train, test, 3, seed=12)
    assert not np.array_equal(other.tasks[2].spec.transform.perm,
                              stream.tasks[2].spec.transform.perm)


def test_rotated_stream(tiny_digits):
    train, test = tiny_digits
    stream = make_rotated_tasks(train, test, 3)
    angles = [t.spec.transform.angle if t.spec.transform.kind == "rotation" else 0.0
              for t in stream.tasks]
    assert angles == [0.0, 90.0, 180.0]
    assert np.array_equal(stream.tasks[0].train.images, train.images)
    with pytest.raises(ValueError):
        make_rotated_tasks(train, test, 1)


def test_subsample_stratified(tiny_digits):
    train, _ = tiny_digits
    sub = subsample(train, 100, seed=3)
    assert len(sub) == 100
    counts = np.bincount(sub.labels, minlength=10)
    assert counts.min() >= 8 and counts.max() <= 12
    again = subsample(train, 100, seed=3)
    assert np.array_equal(sub.images, again.images)
    assert len(subsample(train, 10_000, seed=3)) == len(train)


def test_cap_stream(tiny_digits):
    train, test = tiny_digits
    stream = make_permuted_tasks(train, test, 2, seed=0)
    capped = cap_stream(stream, 150, 60, seed=5)
    for t in capped.tasks:
        assert len(t.train) == 150
        assert len(t.test) == 60
    assert cap_stream(stream, None, None, seed=5) is stream


def test_synthetic_digits_properties():
    train, test = make_synthetic_digits(200, 50, seed=0)
    assert train.images.shape == (200, 784)
    assert test.images.shape == (50, 784)
    assert train.images.min() >= 0.0 and train.images.max() <= 1.0
    assert np.array_equal(np.bincount(train.labels, minlength=10), np.full(10, 20))
    same_train, _ = make_synthetic_digits(200, 50, seed=0)
    assert np.array_equal(train.images, same_train.images)
    other_train, _ = make_synthetic_digits(200, 50, seed=1)
    assert not np.array_equal(train.images, other_train.images)
