import struct

import numpy as np
import pytest

from selcontrast.data import (
    DatasetSpec,
    LabeledData,
    build_dataset,
    fingerprint,
    gaussian_mixture,
    load_csv,
    load_idx,
    nearest_mean_accuracy,
    save_csv,
    split_data,
)
from selcontrast.errors import ConfigError, FormatError


class TestGaussianMixture:
    def test_deterministic(self):
        spec = DatasetSpec(n_classes=3, dim=5, per_class=40, radius=3.0,
                           std=1.0, seed=4)
        a = gaussian_mixture(spec)
        b = gaussian_mixture(spec)
        assert np.array_equal(a.train.x, b.train.x)
        assert np.array_equal(a.train.y, b.train.y)
        assert np.array_equal(a.test.x, b.test.x)

    def test_split_sizes_per_class(self):
        spec = DatasetSpec(n_classes=4, dim=3, per_class=10, radius=2.0,
                           std=0.5, seed=0)
        split = gaussian_mixture(spec)
        for c in range(4):
            assert (split.train.y == c).sum() == 8
            assert (split.test.y == c).sum() == 2

    def test_tiny_noise_sticks_to_class_means(self):
        spec = DatasetSpec(n_classes=4, dim=6, per_class=20, radius=5.0,
                           std=1e-9, seed=2)
        split = gaussian_mixture(spec)
        assert nearest_mean_accuracy(split, spec) == 1.0

    def test_nearest_mean_oracle_on_reference_mixture(self):
        spec = DatasetSpec(n_classes=8, dim=32, per_class=500, radius=5.0,
                           std=1.0, seed=0)
        split = gaussian_mixture(spec)
        assert nearest_mean_accuracy(split, spec) >= 0.99

    def test_invalid_spec(self):
        with pytest.raises(ConfigError):
            DatasetSpec(n_classes=1)
        with pytest.raises(ConfigError):
            DatasetSpec(std=0.0)
        with pytest.raises(ConfigError):
            DatasetSpec(source="parquet")


def idx_fixture_bytes():
    # two 2x2 images and two labels
    images = struct.pack(">IIII", 0x803, 2, 2, 2) + bytes(
        [0, 51, 102, 153, 204, 255, 0, 255])
    labels = struct.pack(">II", 0x801, 2) + bytes([7, 1])
    return images, labels


class TestIdx:
    def write(self, tmp_path, images, labels):
        ip = tmp_path / "images.idx"
        lp = tmp_path / "labels.idx"
        ip.write_bytes(images)
        lp.write_bytes(labels)
        return str(ip), str(lp)

    def test_round_trip_exact(self, tmp_path):
        images, labels = idx_fixture_bytes()
        ip, lp = self.write(tmp_path, images, labels)
        data = load_idx(ip, lp)
        expected = np.array([[0, 51, 102, 153], [204, 255, 0, 255]]) / 255.0
        assert np.array_equal(data.x, expected)
        assert np.array_equal(data.y, [7, 1])

    def test_count_mismatch(self, tmp_path):
        images, _ = idx_fixture_bytes()
        labels = struct.pack(">II", 0x801, 3) + bytes([7, 1, 0])
        ip, lp = self.write(tmp_path, images, labels)
        with pytest.raises(FormatError, match="mismatch"):
            load_idx(ip, lp)

    def test_bad_magic_names_offset_zero(self, tmp_path):
        images, labels = idx_fixture_bytes()
        bad = struct.pack(">IIII", 0x9999, 2, 2, 2) + images[16:]
        ip, lp = self.write(tmp_path, bad, labels)
        with pytest.raises(FormatError, match="offset 0"):
            load_idx(ip, lp)

    def test_truncated_pixels_name_offset(self, tmp_path):
        images, labels = idx_fixture_bytes()
        ip, lp = self.write(tmp_path, images[:-3], labels)
        with pytest.raises(FormatError, match="byte offset"):
            load_idx(ip, lp)


class TestCsv:
    def test_round_trip_full_precision(self, tmp_path, rng):
        data = LabeledData(x=rng.standard_normal((7, 3)),
                           y=rng.integers(0, 4, size=7))
        path = str(tmp_path / "data.csv")
        save_csv(path, data)
        loaded = load_csv(path)
        assert np.array_equal(loaded.x, data.x)
        assert np.array_equal(loaded.y, data.y)

    def test_missing_label_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1.0,2.0\n")
        with pytest.raises(FormatError, match="label"):
            load_csv(str(path))

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,label\n1.0,2,3\n")
        with pytest.raises(FormatError):
            load_csv(str(path))


class TestSplitAndFingerprint:
    def test_split_deterministic_and_disjoint(self, rng):
        data = LabeledData(x=rng.standard_normal((50, 2)),
                           y=rng.integers(0, 2, size=50))
        a = split_data(data, 0.8, seed=3)
        b = split_data(data, 0.8, seed=3)
        assert np.array_equal(a.train.x, b.train.x)
        assert len(a.train) == 40 and len(a.test) == 10

    def test_fingerprint_changes_iff_data_changes(self, rng):
        spec = DatasetSpec(n_classes=2, dim=3, per_class=10, radius=2.0,
                           std=0.4, seed=1)
        split = build_dataset(spec)
        base = fingerprint(split)
        assert fingerprint(split) == base
        split.train.x[0, 0] += 1e-12
        assert fingerprint(split) != base
        split.train.x[0, 0] -= 1e-12
        assert fingerprint(split) == base
        split.test.y[0] = 1 - split.test.y[0]
        assert fingerprint(split) != base
