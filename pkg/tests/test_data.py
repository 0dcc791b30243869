import numpy as np
import pytest

from desamba.data import io as dio
from desamba.data.preprocess import (augment, crop_centered, flip_lr, preprocess, roi_centroid,
                                     sample_augment, shift_edge, zscore)
from desamba.data.synth import (ClassSignature, SynthSpec, band_limited_noise, radial_frequency,
                                synth_generate)
from desamba.errors import IngestionError, ValidationError


def test_synth_is_bit_reproducible(tiny_spec):
    a, b = synth_generate(tiny_spec, 3), synth_generate(tiny_spec, 3)
    for cohort in a:
        for x, y in zip(a[cohort], b[cohort]):
            assert x.case_id == y.case_id and x.label == y.label and x.record == y.record
            assert np.array_equal(x.mask, y.mask)
            assert all(np.array_equal(x.volumes[k], y.volumes[k]) for k in x.volumes)
    c = synth_generate(tiny_spec, 4)
    assert not np.array_equal(a["train"][0].volumes["T1"], c["train"][0].volumes["T1"])


def test_synth_cohort_sizes_and_balance(tiny_spec):
    data = synth_generate(tiny_spec, 0)
    assert {k: len(v) for k, v in data.items()} == {"train": 6, "internal_test": 4, "external_test": 2}
    assert [c.label for c in data["train"]] == [0, 1, 0, 1, 0, 1]
    case = data["train"][0]
    assert set(case.volumes) == {"T1", "T2", "T2FS"}
    assert case.mask.any() and case.volumes["T1"].dtype == np.float32


@pytest.mark.parametrize("band", [(0.05, 0.1), (0.2, 0.3)])
def test_texture_power_is_confined_to_band(band):
    shape = (16, 24, 20)
    tex = band_limited_noise(np.random.default_rng(0), shape, band)
    power = np.abs(np.fft.fftn(tex)) ** 2
    k = np.sqrt(sum(np.square(g) for g in np.meshgrid(
        *[np.arange(n) / n - (np.arange(n) >= (n + 1) // 2) for n in shape], indexing="ij")))
    # bins sitting exactly on a band edge may fall either way in floating point
    inside = (k >= band[0] - 1e-9) & (k < band[1] + 1e-9)
    assert np.allclose(k, radial_frequency(shape))
    assert power[inside].sum() / power.sum() > 1 - 1e-12
    assert abs(tex.std() - 1.0) < 1e-9


def test_lesion_region_carries_class_band():
    spec = SynthSpec(classes=(ClassSignature((0.05, 0.08)), ClassSignature((0.35, 0.45))),
                     noise=0.0, shared_strength=0.0, unique_strength=0.0,
                     cases_per_class={"train": 1})
    low, high = synth_generate(spec, 0)["train"]
    k = radial_frequency(spec.volume_shape)

    def mean_freq(case):
        p = np.abs(np.fft.fftn(case.volumes["T1"] * case.mask)) ** 2
        p[0, 0, 0] = 0
        return (p * k).sum() / p.sum()

    assert mean_freq(high) > 2 * mean_freq(low)


def test_spec_validation():
    with pytest.raises(ValidationError, match="apart"):
        SynthSpec(classes=(ClassSignature((0.1, 0.2)), ClassSignature((0.1, 0.2))))
    with pytest.raises(ValidationError):
        SynthSpec(classes=(ClassSignature((0.3, 0.2)), ClassSignature((0.1, 0.2))))
    with pytest.raises(ValidationError):
        SynthSpec(volume_shape=(8, 80, 80))
    with pytest.raises(ValidationError):
        SynthSpec(cases_per_class={"validation": 3})
    spec = SynthSpec()
    assert SynthSpec.from_dict(spec.to_dict()) == spec


def test_dataset_round_trip(tmp_path, tiny_spec):
    data = synth_generate(tiny_spec, 1)
    root = dio.write_dataset(data, tiny_spec.dataset_info(), tmp_path / "ds")
    info = dio.load_dataset_info(root)
    assert info.sequences == ("T1", "T2", "T2FS") and info.num_classes == 2
    assert dio.available_cohorts(root) == ["train", "internal_test", "external_test"]
    loaded = dio.load_cohort(root, "internal_test", info)
    for a, b in zip(loaded, data["internal_test"]):
        assert a.case_id == b.case_id and a.label == b.label and a.record == b.record
        assert a.tabular == b.tabular
        assert np.array_equal(a.mask, b.mask)
        assert all(np.array_equal(a.volumes[s], b.volumes[s]) for s in info.sequences)
    fp = dio.dataset_fingerprint(root)
    assert fp == dio.dataset_fingerprint(root)
    meta = root / "train" / data["train"][0].case_id / "meta.json"
    meta.write_text(meta.read_text().replace('"label": 0', '"label": 1'))
    assert dio.dataset_fingerprint(root) != fp


def test_ingestion_errors(tmp_path, tiny_spec):
    data = synth_generate(tiny_spec, 2)
    root = dio.write_dataset({"train": data["train"][:1]}, tiny_spec.dataset_info(), tmp_path / "ds")
    case_dir = root / "train" / data["train"][0].case_id
    info = dio.load_dataset_info(root)
    (case_dir / "T2.npy").unlink()
    with pytest.raises(IngestionError, match="T2"):
        dio.load_case(case_dir, info.schema, info.sequences)
    np.save(case_dir / "T2.npy", np.zeros((3, 3, 3), np.float32))
    with pytest.raises(IngestionError, match="grid mismatch"):
        dio.load_case(case_dir, info.schema, info.sequences)
    np.save(case_dir / "T2.npy", np.zeros(tiny_spec.volume_shape, np.float32))
    np.save(case_dir / "mask.npy", np.zeros(tiny_spec.volume_shape, np.uint8))
    with pytest.raises(IngestionError, match="no foreground"):
        dio.load_case(case_dir, info.schema, info.sequences)
    with pytest.raises(IngestionError, match="absent"):
        dio.load_cohort(root, "external_test", info)
    with pytest.raises(IngestionError):
        dio.load_dataset_info(tmp_path)


def test_nifti_volumes_are_read(tmp_path):
    nib = pytest.importorskip("nibabel")
    vol = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    nib.save(nib.Nifti1Image(vol, np.eye(4)), str(tmp_path / "T1.nii.gz"))
    assert np.array_equal(dio.load_volume(tmp_path / "T1.nii.gz"), vol)


def test_crop_is_centered_on_roi_and_zero_padded():
    vol = np.arange(10 * 12 * 14, dtype=np.float32).reshape(10, 12, 14)
    mask = np.zeros_like(vol, dtype=bool)
    mask[1:4, 5:8, 10:13] = True
    center = roi_centroid(mask)
    assert center == (2, 6, 11)
    crop = crop_centered(vol, center, (4, 4, 6))
    assert crop[2, 2, 3] == vol[2, 6, 11]
    assert np.array_equal(crop[:, :, :6], vol[0:4, 4:8, 8:14])
    assert (crop[:, :, 6:] == 0).all() if crop.shape[2] > 6 else True
    edge = crop_centered(vol, (0, 0, 0), (4, 4, 4))
    assert (edge[:2] == 0).all() and edge[2, 2, 2] == vol[0, 0, 0]


def test_preprocess_zscores_each_sequence(tiny_spec, tiny_config):
    case = synth_generate(tiny_spec, 0)["train"][0]
    item = preprocess(case, tiny_config)
    assert item.image.shape == (3, 8, 16, 16) and item.image.dtype == np.float32
    assert np.allclose(item.image.mean(axis=(1, 2, 3)), 0, atol=1e-5)
    assert np.allclose(item.image.std(axis=(1, 2, 3)), 1, atol=1e-4)
    assert item.mask[4, 8, 8]
    assert (zscore(np.full((2, 2, 2), 7.0)) == 0).all()


def test_augmentation_bounds_and_geometry():
    img = np.random.default_rng(0).standard_normal((3, 6, 8, 8)).astype(np.float32)
    mask = np.zeros((6, 8, 8), bool)
    mask[3, 4, 5] = True
    for seed in range(50):
        p = sample_augment(seed)
        assert 0.9 <= p.scale <= 1.1 and all(abs(s) <= 2 for s in p.shift)
        out, m = augment(img, seed, mask)
        assert out.shape == img.shape and m.shape == mask.shape
        expected = np.array([3, 4, 7 - 5 if p.flip else 5]) + np.array(p.shift)
        expected = np.clip(expected, 0, np.array(mask.shape) - 1)
        assert m[tuple(expected)]
        assert augment(img, seed).tobytes() == out.tobytes()


def test_flip_and_shift_helpers():
    a = np.arange(2 * 3 * 4).reshape(2, 3, 4)
    assert np.array_equal(flip_lr(flip_lr(a)), a)
    assert np.array_equal(flip_lr(a)[..., 0], a[..., -1])
    s = shift_edge(a, (0, 1, -1))
    assert np.array_equal(s[:, 1:, :3], a[:, :2, 1:])
    assert np.array_equal(s[:, 0, :3], a[:, 0, 1:]) and np.array_equal(s[..., 3], s[..., 2])
    assert np.array_equal(shift_edge(a, (0, 0, 0)), a)
