import numpy as np
import pytest
import torch

from foprokd.data import (
    DatasetManifest,
    LongTailSpec,
    ManifestDataset,
    ManifestRow,
    augment_batch,
    build_longtail_split,
    class_balanced_sampler,
    isic_longtail_spec,
    parse_synthetic_key,
    reweighting_weights,
    shot_grouping,
    synthetic_dataset_generate,
    synthetic_image,
    synthetic_key,
)
from foprokd.exceptions import (
    DatasetShortfallError,
    InvalidArgumentError,
    InvalidManifestError,
)

TABLE_TARGETS = {
    "1:100": (12725, 4372, 3173, 1788, 717, 478, 103, 89),
    "1:200": (12725, 4372, 2833, 1329, 623, 292, 103, 64),
    "1:500": (12725, 4372, 2180, 897, 369, 152, 62, 25),
    "1:1000": (12725, 4372, 1788, 666, 248, 92, 34, 12),
    "1:2000": (12725, 4346, 1467, 495, 167, 56, 19, 6),
}


class TestCuratedSpec:
    def test_published_rows(self):
        for ratio, expected in TABLE_TARGETS.items():
            spec = isic_longtail_spec(ratio)
            assert spec.train_targets == expected, ratio
            assert spec.val_per_class == 50
            assert spec.test_per_class == 100

    def test_full_counts_and_names(self):
        spec = isic_longtail_spec("1:100")
        assert spec.full_counts == (12875, 4522, 3323, 2624, 867, 628, 253, 239)
        assert spec.class_names == ("NV", "MEL", "BCC", "BKL", "AK", "SCC", "VASC", "DF")

    def test_head_classes_keep_everything_but_the_holdout(self):
        spec = isic_longtail_spec("1:100")
        for full, target in zip(spec.full_counts[:3], spec.train_targets[:3]):
            assert target == full - 150

    def test_unknown_ratio_rejected(self):
        with pytest.raises(InvalidArgumentError):
            isic_longtail_spec("1:42")


class TestLongTailSpec:
    def test_shortfall_names_the_class(self):
        with pytest.raises(DatasetShortfallError, match="scarce"):
            LongTailSpec(
                class_names=("plenty", "scarce"),
                full_counts=(100, 20),
                train_targets=(50, 15),
                val_per_class=4,
                test_per_class=4,
            )

    def test_rejects_degenerate_holdouts(self):
        with pytest.raises(InvalidArgumentError):
            LongTailSpec(("a", "b"), (10, 10), (2, 2), val_per_class=0, test_per_class=2)
        with pytest.raises(InvalidArgumentError):
            LongTailSpec(("a",), (10,), (2,))


def pool_manifest(counts, prefix="img"):
    rows = []
    for label, count in enumerate(counts):
        for i in range(count):
            rows.append(ManifestRow(f"{prefix}_{label}_{i}.png", label, "train"))
    return DatasetManifest(rows)


class TestBuildSplit:
    def spec(self, seed=0):
        return LongTailSpec(
            class_names=("a", "b", "c"),
            full_counts=(40, 25, 12),
            train_targets=(30, 10, 4),
            val_per_class=3,
            test_per_class=5,
            seed=seed,
        )

    def test_counts_and_disjointness(self):
        manifest = build_longtail_split(pool_manifest((40, 25, 12)), self.spec())
        assert manifest.train_counts() == [30, 10, 4]
        assert manifest.split_counts("val") == [3, 3, 3]
        assert manifest.split_counts("test") == [5, 5, 5]
        paths = [r.path for r in manifest.rows]
        assert len(paths) == len(set(paths))

    def test_deterministic_per_seed(self):
        a = build_longtail_split(pool_manifest((40, 25, 12)), self.spec(seed=1))
        b = build_longtail_split(pool_manifest((40, 25, 12)), self.spec(seed=1))
        c = build_longtail_split(pool_manifest((40, 25, 12)), self.spec(seed=2))
        assert [r.path for r in a.rows] == [r.path for r in b.rows]
        assert [r.path for r in a.rows] != [r.path for r in c.rows]

    def test_insufficient_pool_rejected(self):
        with pytest.raises(DatasetShortfallError, match="'b'"):
            build_longtail_split(pool_manifest((40, 17, 12)), self.spec())


class TestManifestCsv:
    def test_write_read_roundtrip(self, tmp_path):
        manifest = build_longtail_split(pool_manifest((40, 25, 12)),
                                        TestBuildSplit().spec())
        path = tmp_path / "manifest.csv"
        manifest.write_csv(path)
        again = DatasetManifest.read_csv(path)
        assert [(r.path, r.label, r.split) for r in again.rows] == \
               [(r.path, r.label, r.split) for r in manifest.rows]
        manifest.write_csv(tmp_path / "second.csv")
        assert path.read_bytes() == (tmp_path / "second.csv").read_bytes()

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("file,cls,part\nx.png,0,train\n")
        with pytest.raises(InvalidManifestError):
            DatasetManifest.read_csv(path)

    def test_bad_row_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("path,label,split\nx.png,0,train\ny.png,zero,train\n")
        with pytest.raises(InvalidManifestError, match=":3"):
            DatasetManifest.read_csv(path)

    def test_unknown_split_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("path,label,split\nx.png,0,holdout\n")
        with pytest.raises(InvalidManifestError):
            DatasetManifest.read_csv(path)


class TestShotGrouping:
    def test_boundaries_are_exclusive(self):
        grouping = shot_grouping([701, 700, 70, 69])
        assert grouping.groups == ("head", "medium", "medium", "tail")

    def test_indices(self):
        grouping = shot_grouping([1000, 500, 30])
        assert grouping.indices("head") == [0]
        assert grouping.indices("medium") == [1]
        assert grouping.indices("tail") == [2]
        with pytest.raises(InvalidArgumentError):
            grouping.indices("torso")


class TestBalancedSampler:
    def test_rare_class_reaches_half_frequency(self):
        labels = [0] * 100 + [1]
        gen = torch.Generator().manual_seed(0)
        draws = class_balanced_sampler(labels, 10_000, gen)
        freq = (torch.tensor(labels)[draws] == 1).float().mean().item()
        assert freq == pytest.approx(0.5, abs=0.02)

    def test_class_frequencies_are_uniform(self):
        # chi-square on 4 classes at p = 0.01, df = 3
        labels = [0] * 50 + [1] * 20 + [2] * 5 + [3] * 2
        gen = torch.Generator().manual_seed(1)
        draws = class_balanced_sampler(labels, 8_000, gen)
        drawn_labels = torch.tensor(labels)[draws]
        observed = torch.bincount(drawn_labels, minlength=4).double()
        expected = 8_000 / 4
        chi2 = ((observed - expected) ** 2 / expected).sum().item()
        assert chi2 < 11.345

    def test_deterministic_and_validated(self):
        labels = [0, 0, 1]
        a = class_balanced_sampler(labels, 50, torch.Generator().manual_seed(2))
        b = class_balanced_sampler(labels, 50, torch.Generator().manual_seed(2))
        assert torch.equal(a, b)
        with pytest.raises(InvalidManifestError):
            class_balanced_sampler([0, 0, 2], 10, torch.Generator())
        with pytest.raises(InvalidManifestError):
            class_balanced_sampler([], 10, torch.Generator())


class TestReweighting:
    def test_published_arithmetic(self):
        weights = reweighting_weights([9, 3, 1])
        assert np.allclose(weights.numpy(), [0.2308, 0.6923, 2.0769], atol=1e-4)

    def test_sums_to_class_count(self):
        for counts in ([5, 5, 5], [100, 10, 1, 7]):
            assert reweighting_weights(counts).sum().item() == pytest.approx(len(counts), rel=1e-6)

    def test_uniform_counts_give_unit_weights(self):
        assert torch.allclose(reweighting_weights([7, 7, 7]), torch.ones(3))

    def test_rejects_empty_classes(self):
        with pytest.raises(InvalidArgumentError):
            reweighting_weights([3, 0])


class TestSyntheticImages:
    def test_regeneration_is_byte_identical(self):
        a = synthetic_image(3, 2, 11, 8, 32)
        b = synthetic_image(3, 2, 11, 8, 32)
        assert a.tobytes() == b.tobytes()

    def test_distinct_keys_differ(self):
        base = synthetic_image(0, 0, 0, 8, 16)
        assert not np.array_equal(base, synthetic_image(0, 0, 1, 8, 16))
        assert not np.array_equal(base, synthetic_image(0, 1, 0, 8, 16))
        assert not np.array_equal(base, synthetic_image(1, 0, 0, 8, 16))

    def test_shape_dtype_range(self):
        img = synthetic_image(0, 5, 0, 8, 24)
        assert img.shape == (3, 24, 24)
        assert img.dtype == np.float32
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_classes_separate_in_the_spectrum(self):
        def mean_amplitude(label):
            spectra = [
                np.abs(np.fft.fft2(synthetic_image(0, label, i, 8, 32)[0]))
                for i in range(10)
            ]
            amp = np.mean(spectra, axis=0)
            amp[0, 0] = 0.0
            return amp

        a, b = mean_amplitude(0), mean_amplitude(1)
        gap = np.abs(a - b).max() / max(a.max(), b.max())
        assert gap > 0.5

    def test_key_roundtrip(self):
        assert parse_synthetic_key(synthetic_key(4, 2, 17)) == (4, 2, 17)
        with pytest.raises(InvalidManifestError):
            parse_synthetic_key("synthetic://4/2")


class TestManifestDataset:
    def spec(self):
        return LongTailSpec(
            class_names=("a", "b"),
            full_counts=(12, 8),
            train_targets=(8, 4),
            val_per_class=2,
            test_per_class=2,
            seed=0,
        )

    def test_lengths_and_items(self):
        manifest = synthetic_dataset_generate(self.spec())
        train = ManifestDataset(manifest, "train", resolution=16)
        assert len(train) == 12
        image, label = train[0]
        assert image.shape == (3, 16, 16)
        assert label in (0, 1)
        assert torch.equal(train[0][0], train[0][0])

    def test_batch_collation(self):
        manifest = synthetic_dataset_generate(self.spec())
        train = ManifestDataset(manifest, "train", resolution=16)
        images, labels = train.batch([0, 3, 5])
        assert images.shape == (3, 3, 16, 16)
        assert torch.equal(labels, train.labels[torch.tensor([0, 3, 5])])

    def test_empty_split_rejected(self):
        manifest = DatasetManifest([ManifestRow(synthetic_key(0, 0, 0), 0, "train")])
        with pytest.raises(InvalidManifestError):
            ManifestDataset(manifest, "val", resolution=16)


class TestAugmentation:
    def test_shape_preserved_and_deterministic(self):
        images = torch.rand(4, 3, 16, 16)
        a = augment_batch(images, torch.Generator().manual_seed(0), pad=2)
        b = augment_batch(images, torch.Generator().manual_seed(0), pad=2)
        assert a.shape == images.shape
        assert torch.equal(a, b)

    def test_zero_padding_reduces_to_flips(self):
        images = torch.rand(8, 3, 8, 8)
        out = augment_batch(images, torch.Generator().manual_seed(1), pad=0)
        for i in range(8):
            same = torch.equal(out[i], images[i])
            flipped = torch.equal(out[i], torch.flip(images[i], dims=(-1,)))
            assert same or flipped
