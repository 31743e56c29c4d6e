# tests/test_data_io.py
import gzip
import os
import struct

import numpy as np
import pytest

from src.data_management import (
    Checkpoint,
    CheckpointError,
    DataLoader,
    Dataset,
    FormatError,
    RunConfig,
    augment_with_flips,
    build_grid,
    export_grid,
    load_checkpoint,
    load_cifar_batch,
    load_idx,
    load_idx_labels,
    load_matrix,
    read_grid,
    save_checkpoint,
    save_idx,
    save_matrix,
    synth_dataset,
)
from src.latent_analysis import GaussianMixture


# --- IDX ---

def _quantized(rng, shape):
    return np.rint(rng.random(shape) * 255.0) / 255.0


@pytest.mark.parametrize("filename", ["images.idx", "images.idx.gz"])
def test_idx_roundtrip(tmp_path, rng, filename):
    images = _quantized(rng, (5, 6, 7))
    path = str(tmp_path / filename)
    save_idx(images, path)
    dataset = load_idx(path)
    assert dataset.images.shape == (5, 6, 7, 1)
    np.testing.assert_allclose(dataset.images[..., 0], images, atol=1e-12)


def test_idx_header_layout(tmp_path):
    path = str(tmp_path / "one.idx")
    save_idx(np.ones((1, 2, 3)), path)
    with open(path, "rb") as f:
        raw = f.read()
    assert struct.unpack(">IIII", raw[:16]) == (0x00000803, 1, 2, 3)
    assert raw[16:] == bytes([255] * 6)


def test_idx_bad_magic_is_rejected(tmp_path):
    path = tmp_path / "bad.idx"
    path.write_bytes(struct.pack(">IIII", 0x00000801, 1, 2, 2) + bytes(4))
    with pytest.raises(FormatError, match="magic"):
        load_idx(str(path))


def test_idx_truncated_payload_is_rejected(tmp_path):
    path = tmp_path / "short.idx"
    path.write_bytes(struct.pack(">IIII", 0x00000803, 2, 4, 4) + bytes(20))
    with pytest.raises(FormatError, match="truncated"):
        load_idx(str(path))


def test_idx_labels(tmp_path):
    path = tmp_path / "labels.idx.gz"
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, 4) + bytes([3, 1, 4, 1]))
    np.testing.assert_array_equal(load_idx_labels(str(path)), [3, 1, 4, 1])


# --- CIFAR-10 ---

def test_cifar_record_is_channel_planar(tmp_path):
    planes = np.arange(3 * 32 * 32, dtype=np.int64) % 256
    record = bytes([7]) + planes.astype(np.uint8).tobytes()
    path = tmp_path / "data_batch_1.bin"
    path.write_bytes(record * 2)
    dataset = load_cifar_batch(str(tmp_path))
    assert dataset.images.shape == (2, 32, 32, 3)
    np.testing.assert_array_equal(dataset.labels, [7, 7])
    red, green = planes[:1024].reshape(32, 32), planes[1024:2048].reshape(32, 32)
    np.testing.assert_allclose(dataset.images[0, ..., 0], red / 255.0)
    np.testing.assert_allclose(dataset.images[1, ..., 1], green / 255.0)


def test_cifar_partial_record_is_rejected(tmp_path):
    path = tmp_path / "broken.bin"
    path.write_bytes(bytes(3073 + 10))
    with pytest.raises(FormatError):
        load_cifar_batch(str(path))


# --- datasets ---

def test_dataset_rejects_out_of_range_pixels():
    with pytest.raises(ValueError):
        Dataset(images=np.full((2, 4, 4, 1), 1.5))


def test_dataset_subset_by_label(rng):
    dataset = Dataset(images=rng.random((6, 2, 2, 1)), labels=np.array([0, 1, 0, 1, 1, 0]))
    assert len(dataset.subset(1)) == 3


def test_flip_augmentation_doubles_dataset(rng):
    dataset = Dataset(images=rng.random((3, 4, 5, 1)), labels=np.arange(3))
    augmented = augment_with_flips(dataset)
    assert len(augmented) == 6
    np.testing.assert_array_equal(augmented.images[3], dataset.images[0][:, ::-1])


@pytest.mark.parametrize("kind", ["shapes", "two-gaussians"])
def test_synthetic_data_is_deterministic(kind):
    a = synth_dataset(kind, 20, 12, seed=5)
    b = synth_dataset(kind, 20, 12, seed=5)
    np.testing.assert_array_equal(a.images, b.images)
    assert a.images.shape == (20, 12, 12, 1)
    assert not np.array_equal(a.images, synth_dataset(kind, 20, 12, seed=6).images)


def test_synthetic_images_need_extent_of_eight():
    with pytest.raises(ValueError):
        synth_dataset("shapes", 4, 7, seed=0)


def test_data_loader_resolves_synthetic_kind():
    run = RunConfig(dataset_kind="synthetic-two-gaussians", synthetic_count=10, synthetic_size=8, seed=1)
    dataset = DataLoader(run).load()
    assert dataset.images.shape == (10, 8, 8, 1)
    assert dataset.labels is not None


def test_data_loader_reads_idx(tmp_path, rng):
    path = str(tmp_path / "train.idx")
    save_idx(_quantized(rng, (4, 8, 8)), path)
    run = RunConfig(dataset_kind="idx", dataset_path=path)
    assert DataLoader(run).load().images.shape == (4, 8, 8, 1)


def test_data_loader_synthetic_test_split_is_a_distinct_draw():
    run = RunConfig(dataset_kind="synthetic-shapes", synthetic_count=12, synthetic_size=8, seed=4)
    train, test = DataLoader(run).load("train"), DataLoader(run).load("test")
    assert (train.split, test.split) == ("train", "test")
    assert test.images.shape == train.images.shape
    assert not np.array_equal(train.images, test.images)
    np.testing.assert_array_equal(test.images, DataLoader(run).load("test").images)
    np.testing.assert_array_equal(train.images, synth_dataset("shapes", 12, 8, seed=4).images)
    with pytest.raises(ValueError, match="split"):
        synth_dataset("shapes", 4, 8, seed=0, split="validation")


def test_two_gaussians_are_byte_valued_around_two_levels():
    dataset = synth_dataset("two-gaussians", 200, 8, seed=2)
    pixels = np.rint(dataset.images * 255.0)
    np.testing.assert_allclose(pixels / 255.0, dataset.images, atol=1e-12)
    dark = pixels[dataset.labels == 0].mean()
    bright = pixels[dataset.labels == 1].mean()
    assert abs(dark - 64) < 3
    assert abs(bright - 191) < 3
    assert 15 < pixels[dataset.labels == 0].std() < 23


# --- checkpoints ---

def _checkpoint(rng, with_mixture=False):
    mixture = None
    if with_mixture:
        mixture = GaussianMixture(weights=[0.25, 0.75], means=rng.standard_normal((2, 3)),
                                  covariances=np.stack([np.eye(3), 2 * np.eye(3)]))
    return Checkpoint(
        config={"kind": "split", "latent_dim": 3},
        params={"encoder.stem.kernel": rng.standard_normal((3, 3, 1, 4)), "decoder.dense_in.bias": np.zeros(8)},
        buffers={"encoder.bn.running_var": rng.random(4).astype(np.float32)},
        optimizer={"lr": 0.001, "step_count": 12},
        optimizer_arrays={"m/encoder.stem.kernel": rng.standard_normal((3, 3, 1, 4))},
        training={"epoch": 3, "schedule": {"beta0": 8.0, "reference": 0.1}},
        mixture=mixture,
    )


@pytest.mark.parametrize("with_mixture", [False, True])
def test_checkpoint_roundtrip_is_bitwise(tmp_path, rng, with_mixture):
    original = _checkpoint(rng, with_mixture)
    path = save_checkpoint(original, str(tmp_path / "ckpt" / "model.ckpt"))
    loaded = load_checkpoint(path)
    assert loaded.config == original.config
    assert loaded.optimizer == original.optimizer
    assert loaded.training == original.training
    for name, array in original.params.items():
        assert loaded.params[name].dtype == array.dtype
        assert loaded.params[name].tobytes() == array.tobytes()
    assert loaded.buffers["encoder.bn.running_var"].dtype == np.float32
    if with_mixture:
        np.testing.assert_array_equal(loaded.mixture.covariances, original.mixture.covariances)
    else:
        assert loaded.mixture is None
    assert not os.path.exists(f"{path}.tmp")


def test_checkpoint_checksum_failure(tmp_path, rng):
    path = save_checkpoint(_checkpoint(rng), str(tmp_path / "model.ckpt"))
    raw = bytearray(open(path, "rb").read())
    raw[-3] ^= 0xFF
    with open(path, "wb") as f:
        f.write(raw)
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path)


def test_checkpoint_truncation_and_version(tmp_path, rng):
    path = save_checkpoint(_checkpoint(rng), str(tmp_path / "model.ckpt"))
    raw = open(path, "rb").read()
    truncated = tmp_path / "truncated.ckpt"
    truncated.write_bytes(raw[:-10])
    with pytest.raises(CheckpointError):
        load_checkpoint(str(truncated))
    future = tmp_path / "future.ckpt"
    future.write_bytes(raw[:8] + struct.pack("<I", 99) + raw[12:])
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(str(future))
    with pytest.raises(CheckpointError):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"NOTACKPT" + raw[8:])
        load_checkpoint(str(bad))


# --- matrices ---

@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_matrix_roundtrip(tmp_path, rng, dtype):
    matrix = rng.standard_normal((7, 4)).astype(dtype)
    loaded = load_matrix(save_matrix(matrix, str(tmp_path / "m.svmx")))
    assert loaded.dtype == dtype
    np.testing.assert_array_equal(loaded, matrix)


def test_matrix_length_mismatch_is_rejected(tmp_path, rng):
    path = save_matrix(rng.standard_normal((3, 2)), str(tmp_path / "m.svmx"))
    with open(path, "ab") as f:
        f.write(b"\x00")
    with pytest.raises(FormatError, match="payload length"):
        load_matrix(path)


def test_matrix_header_is_checked(tmp_path):
    path = tmp_path / "not_a_matrix.bin"
    path.write_bytes(b"XXXX" + bytes(24))
    with pytest.raises(FormatError):
        load_matrix(str(path))


# --- grids ---

def test_grid_size_formula(rng):
    rows = [rng.random((5, 6, 7, 1)) for _ in range(3)]
    grid = build_grid(rows, margin=2)
    assert grid.shape == (3 * 6 + 4 * 2, 5 * 7 + 6 * 2, 1)
    assert grid[0, 0, 0] == 0.5
    np.testing.assert_array_equal(grid[2:8, 2:9, 0], rows[0][0, ..., 0])


def test_grid_promotes_gray_rows_to_rgb(rng):
    grid = build_grid([rng.random((2, 4, 4, 1)), rng.random((2, 4, 4, 3))], margin=1)
    assert grid.shape == (2 * 4 + 3, 2 * 4 + 3, 3)


def test_grid_rejects_ragged_rows(rng):
    with pytest.raises(ValueError):
        build_grid([rng.random((2, 4, 4, 1)), rng.random((3, 4, 4, 1))])


@pytest.mark.parametrize("ext", [".png", ".pgm"])
def test_grid_export_quantizes_to_bytes(tmp_path, rng, ext):
    rows = [rng.random((3, 4, 4, 1)), rng.random((3, 4, 4, 1))]
    path = export_grid(rows, str(tmp_path / f"grid{ext}"))
    expected = np.rint(build_grid(rows) * 255.0) / 255.0
    loaded = read_grid(path)
    assert loaded.shape[:2] == expected.shape[:2]
    np.testing.assert_allclose(loaded[..., :1], expected, atol=1e-6)


def test_grid_export_rejects_rgb_pgm(tmp_path, rng):
    with pytest.raises(ValueError):
        export_grid([rng.random((1, 4, 4, 3))], str(tmp_path / "grid.pgm"))
    with pytest.raises(ValueError):
        export_grid([rng.random((1, 4, 4, 1))], str(tmp_path / "grid.bmp"))
