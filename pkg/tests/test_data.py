import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import codeflow as cf
from codeflow.errors import FormatError, InvalidArgumentError


def small_spec(**overrides):
    base = dict(
        num_classes=3, dim=16, num_layers=2, samples_per_class=5,
        mean_scale=1.0, within_std=0.1, seed=4,
    )
    base.update(overrides)
    return cf.SyntheticSpec(**base)


class TestGenerateSynthetic:
    def test_zero_std_collapses_to_means(self):
        means = np.arange(3 * 16, dtype=np.float64).reshape(3, 16)
        ds = cf.generate_synthetic(
            small_spec(within_std=0.0, condition_noise=0.0, class_means=means)
        )
        for i in range(ds.num_records):
            rec = ds.record(i)
            np.testing.assert_array_equal(
                rec.terminal_vector, means[rec.label_index].astype(np.float32)
            )

    def test_per_class_counts_exact(self):
        ds = cf.generate_synthetic(small_spec(samples_per_class=7))
        np.testing.assert_array_equal(ds.class_counts(), [7, 7, 7])

    def test_monte_carlo_class_means(self):
        # empirical class mean over many samples vs the configured mean
        means = np.zeros((2, 8))
        means[1] = 2.0
        spec = cf.SyntheticSpec(
            num_classes=2, dim=8, num_layers=1, samples_per_class=10_000,
            mean_scale=1.0, within_std=0.5, class_means=means, seed=9,
        )
        ds = cf.generate_synthetic(spec)
        se = 0.5 / np.sqrt(10_000)
        for c in range(2):
            emp = ds.terminal[ds.label_indices == c].mean(axis=0)
            assert np.max(np.abs(emp - means[c])) <= 3 * se + 1e-3

    def test_reproducible_under_seed(self):
        a = cf.generate_synthetic(small_spec())
        b = cf.generate_synthetic(small_spec())
        np.testing.assert_array_equal(a.terminal, b.terminal)
        np.testing.assert_array_equal(a.condition, b.condition)

    def test_condition_layers_correlate_with_terminal(self):
        ds = cf.generate_synthetic(small_spec(within_std=1.0, condition_noise=0.05))
        # layers are noisy copies, so they sit near the terminal vector
        gap = np.abs(ds.condition - ds.terminal[:, None, :]).max()
        assert gap < 0.05 * 6

    def test_invalid_specs(self):
        with pytest.raises(InvalidArgumentError):
            small_spec(num_classes=1)
        with pytest.raises(InvalidArgumentError):
            small_spec(num_classes=8)  # violates B < dim/2
        with pytest.raises(InvalidArgumentError):
            small_spec(mean_scale=0.0)
        with pytest.raises(InvalidArgumentError):
            small_spec(within_std=-0.1)


class TestFormatRoundTrip:
    def test_bit_exact(self, tmp_path, rng):
        ds = cf.generate_synthetic(small_spec())
        # include an unlabeled record
        ds.label_indices.setflags(write=True)
        ds.label_indices[2] = -1
        path = tmp_path / "ds.gsf"
        cf.write_dataset(ds, path)
        back = cf.read_dataset(path)
        assert back.labels == ds.labels
        np.testing.assert_array_equal(back.condition, ds.condition)
        np.testing.assert_array_equal(back.terminal, ds.terminal)
        np.testing.assert_array_equal(back.label_indices, ds.label_indices)

    def test_truncation_reports_offset(self, tmp_path):
        ds = cf.generate_synthetic(small_spec())
        path = tmp_path / "ds.gsf"
        cf.write_dataset(ds, path)
        raw = path.read_bytes()
        clipped = tmp_path / "clipped.gsf"
        clipped.write_bytes(raw[: len(raw) - 10])
        with pytest.raises(FormatError, match="at byte"):
            cf.read_dataset(clipped)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.gsf"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(FormatError, match="magic"):
            cf.read_dataset(path)

    def test_bad_version(self, tmp_path):
        ds = cf.generate_synthetic(small_spec())
        path = tmp_path / "ds.gsf"
        cf.write_dataset(ds, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            cf.read_dataset(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        ds = cf.generate_synthetic(small_spec())
        path = tmp_path / "ds.gsf"
        cf.write_dataset(ds, path)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(FormatError, match="trailing"):
            cf.read_dataset(path)

    def test_out_of_range_label_rejected(self, tmp_path):
        ds = cf.generate_synthetic(small_spec())
        path = tmp_path / "ds.gsf"
        cf.write_dataset(ds, path)
        raw = bytearray(path.read_bytes())
        # first record's label field sits right after header + 3 labels
        offset = 4 + 20 + sum(4 + len(l) for l in ds.labels)
        raw[offset : offset + 4] = (7).to_bytes(4, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="label index"):
            cf.read_dataset(path)


@settings(max_examples=25, deadline=None)
@given(
    b=st.integers(min_value=2, max_value=4),
    layers=st.integers(min_value=1, max_value=3),
    per_class=st.integers(min_value=1, max_value=4),
    seed=st.integers(min_value=0, max_value=10_000),
)
def test_round_trip_property(tmp_path_factory, b, layers, per_class, seed):
    spec = cf.SyntheticSpec(
        num_classes=b, dim=12, num_layers=layers, samples_per_class=per_class,
        mean_scale=2.0, within_std=0.7, seed=seed,
    )
    ds = cf.generate_synthetic(spec)
    path = tmp_path_factory.mktemp("rt") / "ds.gsf"
    cf.write_dataset(ds, path)
    back = cf.read_dataset(path)
    np.testing.assert_array_equal(back.condition, ds.condition)
    np.testing.assert_array_equal(back.terminal, ds.terminal)
    np.testing.assert_array_equal(back.label_indices, ds.label_indices)
    assert back.labels == ds.labels


class TestSplit:
    def test_everything_in_train(self):
        ds = cf.generate_synthetic(small_spec())
        train, val, test = cf.split(ds, (1.0, 0.0, 0.0), seed=0)
        assert train.num_records == ds.num_records
        assert val.num_records == 0
        assert test.num_records == 0

    def test_stratification_within_one(self):
        ds = cf.generate_synthetic(small_spec(samples_per_class=10))
        train, val, test = cf.split(ds, (0.6, 0.2, 0.2), seed=3)
        for part, frac in ((train, 0.6), (val, 0.2), (test, 0.2)):
            for count in part.class_counts():
                assert abs(count - 10 * frac) <= 1

    def test_disjoint_and_exhaustive(self):
        ds = cf.generate_synthetic(small_spec(samples_per_class=9))
        parts = cf.split(ds, (0.5, 0.25, 0.25), seed=1)
        total = sum(p.num_records for p in parts)
        assert total == ds.num_records
        seen = np.concatenate([p.terminal for p in parts])
        assert seen.shape[0] == ds.num_records

    def test_deterministic(self):
        ds = cf.generate_synthetic(small_spec())
        a = cf.split(ds, (0.8, 0.1, 0.1), seed=42)
        b = cf.split(ds, (0.8, 0.1, 0.1), seed=42)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.terminal, y.terminal)

    def test_fraction_validation(self):
        ds = cf.generate_synthetic(small_spec())
        with pytest.raises(InvalidArgumentError):
            cf.split(ds, (0.5, 0.2, 0.2), seed=0)
        with pytest.raises(InvalidArgumentError):
            cf.split(ds, (-0.1, 0.6, 0.5), seed=0)


class TestDatasetType:
    def test_summary_lists_counts(self):
        ds = cf.generate_synthetic(small_spec())
        text = ds.summary()
        assert "records: 15" in text
        assert "class_0: 5" in text

    def test_label_range_validated(self):
        with pytest.raises(InvalidArgumentError):
            cf.FeatureDataset(
                labels=("a", "b"),
                condition=np.zeros((1, 1, 4), dtype=np.float32),
                terminal=np.zeros((1, 4), dtype=np.float32),
                label_indices=np.array([5]),
            )

    def test_nonfinite_rejected(self):
        with pytest.raises(InvalidArgumentError):
            cf.FeatureDataset(
                labels=("a", "b"),
                condition=np.full((1, 1, 4), np.nan, dtype=np.float32),
                terminal=np.zeros((1, 4), dtype=np.float32),
                label_indices=np.array([0]),
            )
