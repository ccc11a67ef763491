import gzip
import struct

import numpy as np
import pytest

from vaemhn.data import (
    IMAGE_MAGIC,
    LABEL_MAGIC,
    SPLIT_MNIST,
    IDXError,
    ImageBatch,
    Occlusion,
    first_n_per_class,
    iter_batches,
    load_mnist,
    occlude,
    read_idx,
    split_by_context,
    write_idx,
)
from vaemhn.numerics import make_rng


@pytest.fixture
def tiny_idx(tmp_path):
    """Two 28x28 images written byte by byte, independent of write_idx."""
    pixels = np.zeros((2, 28, 28), dtype=np.uint8)
    pixels[0, 0, 0] = 255
    pixels[0, 27, 27] = 1
    pixels[1, 14, :] = np.arange(28, dtype=np.uint8) * 9
    img = tmp_path / "img.idx"
    img.write_bytes(struct.pack(">IIII", IMAGE_MAGIC, 2, 28, 28) + pixels.tobytes())
    lab = tmp_path / "lab.idx"
    lab.write_bytes(struct.pack(">II", LABEL_MAGIC, 2) + bytes([7, 3]))
    return img, lab, pixels


def test_fixture_decodes_to_bytes_over_255(tiny_idx):
    img, lab, pixels = tiny_idx
    train, test = load_mnist(img, lab, img, lab)
    assert train.images.shape == (2, 784)
    assert np.array_equal(train.images, pixels.reshape(2, -1) / 255.0)
    assert train.images[0, 0] == 1.0 and train.images[1, 0] == 0.0
    assert train.labels.tolist() == [7, 3]
    assert np.array_equal(test.images, train.images)


def test_write_idx_round_trip(tmp_path):
    arr = make_rng(0).integers(0, 256, size=(5, 28, 28)).astype(np.uint8)
    for name in ("a.idx", "a.idx.gz"):
        write_idx(tmp_path / name, arr)
        assert np.array_equal(read_idx(tmp_path / name, IMAGE_MAGIC), arr)
    with gzip.open(tmp_path / "a.idx.gz", "rb") as fh:
        assert struct.unpack(">I", fh.read(4))[0] == IMAGE_MAGIC


def test_bad_magic_names_file(tiny_idx):
    img, lab, _ = tiny_idx
    with pytest.raises(IDXError, match="lab.idx.*magic"):
        read_idx(lab, IMAGE_MAGIC)


def test_truncated_payload(tiny_idx, tmp_path):
    img, _, _ = tiny_idx
    cut = tmp_path / "cut.idx"
    cut.write_bytes(img.read_bytes()[:-10])
    with pytest.raises(IDXError, match="truncated.*offset"):
        read_idx(cut, IMAGE_MAGIC)


def test_count_mismatch(tiny_idx, tmp_path):
    img, _, _ = tiny_idx
    lab = tmp_path / "three.idx"
    lab.write_bytes(struct.pack(">II", LABEL_MAGIC, 3) + bytes([1, 2, 3]))
    with pytest.raises(IDXError, match="3 labels"):
        load_mnist(img, lab, img, lab)


def test_desk_split_counts(desk_data):
    train, test = desk_data
    assert len(train) == 8000 and len(test) == 2000
    assert train.images.min() >= 0 and train.images.max() <= 1


def test_context_zero_matches_label_scan(desk_data):
    train, _ = desk_data
    ctx = split_by_context(train, 0)
    assert len(ctx) == int(np.sum((train.labels == 0) | (train.labels == 1)))
    assert set(ctx.labels.tolist()) <= {0, 1}


def test_pair_45_labels():
    batch = ImageBatch(np.zeros((10, 784)), np.arange(10))
    assert set(split_by_context(batch, 2).labels.tolist()) == {4, 5}


def test_contexts_partition(desk_data):
    train, _ = desk_data
    seen = np.zeros(len(train), dtype=int)
    for c in range(len(SPLIT_MNIST)):
        mask = np.isin(train.labels, SPLIT_MNIST[c])
        assert np.array_equal(split_by_context(train, c).images, train.images[mask])
        seen += mask
    assert np.all(seen == 1)
    flat = [d for pair in SPLIT_MNIST for d in pair]
    assert sorted(flat) == list(range(10))


def test_batch_sizes_and_permutation():
    batch = ImageBatch(np.arange(100.0)[:, None], np.zeros(100))
    parts = list(iter_batches(batch, 32, make_rng(0)))
    assert [len(p) for p in parts] == [32, 32, 32, 4]
    order = np.concatenate([p.images[:, 0] for p in parts])
    assert sorted(order.tolist()) == list(range(100))


def test_batch_order_determinism():
    batch = ImageBatch(np.arange(50.0)[:, None], np.zeros(50))

    def order(seed):
        rng = make_rng(seed)
        return [np.concatenate([b.images[:, 0] for b in iter_batches(batch, 8, rng)]) for _ in range(2)]

    a, b = order(1), order(1)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[0], a[1])
    assert not np.array_equal(a[0], order(2)[0])


def test_batch_size_validation():
    with pytest.raises(ValueError):
        list(iter_batches(ImageBatch(np.zeros((3, 1)), np.zeros(3)), 0, make_rng(0)))


class TestOcclusion:
    def test_centre_block(self):
        assert (Occlusion().top, Occlusion().left) == (9, 9)

    def test_ones_get_exactly_100_zeros(self):
        out = occlude(ImageBatch(np.ones((2, 784)), [3, 4]))
        assert (out.images == 0).sum(axis=1).tolist() == [100, 100]
        sq = out.images.reshape(2, 28, 28)
        assert not sq[:, 9:19, 9:19].any()
        assert out.labels.tolist() == [3, 4]

    def test_zeros_unchanged(self):
        assert not occlude(ImageBatch(np.zeros((1, 784)), [0])).images.any()

    def test_idempotent_and_outside_untouched(self, desk_data):
        _, test = desk_data
        once = occlude(test.subset(slice(0, 20)))
        twice = occlude(once)
        assert np.array_equal(once.images, twice.images)
        keep = np.ones((28, 28), bool)
        keep[9:19, 9:19] = False
        orig = test.images[:20].reshape(20, 28, 28)
        assert np.array_equal(once.images.reshape(20, 28, 28)[:, keep], orig[:, keep])


def test_first_n_per_class(desk_data):
    _, test = desk_data
    picks = first_n_per_class(test, 128)
    for c, idx in picks.items():
        assert len(idx) == 128 and np.all(test.labels[idx] == c)
        assert np.array_equal(idx, np.flatnonzero(test.labels == c)[:128])
    with pytest.raises(ValueError):
        first_n_per_class(test, 201)
