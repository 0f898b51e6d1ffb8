import math

import numpy as np
import pytest

from dafl import data
from dafl.errors import ContractError, ParseError


def small_synth(**overrides):
    cfg = dict(
        num_classes=3, clips_per_class=8, clip_seconds=0.1, rate=2000,
        base_freq=100.0, freq_step=0.2, harmonics=2, snr_db=10.0, seed=5,
    )
    cfg.update(overrides)
    return data.SynthConfig(**cfg)


class TestSynthetic:
    def test_deterministic_bytes(self):
        a = data.generate_synthetic(small_synth())
        b = data.generate_synthetic(small_synth())
        assert all(
            x.samples.tobytes() == y.samples.tobytes() for x, y in zip(a.clips, b.clips)
        )

    def test_uniform_class_histogram(self):
        ds = data.generate_synthetic(small_synth(num_classes=10, clips_per_class=20))
        labels = [c.label for c in ds.clips]
        assert len(ds) == 200
        assert all(labels.count(c) == 20 for c in range(10))

    def test_noise_off_single_harmonic_peaks_at_one(self):
        ds = data.generate_synthetic(small_synth(harmonics=1, snr_db=math.inf))
        for clip in ds.clips[:5]:
            assert np.abs(clip.samples).max() == pytest.approx(1.0)

    def test_nyquist_violation_rejected(self):
        with pytest.raises(ContractError, match="Nyquist"):
            small_synth(base_freq=600.0, harmonics=3)

    def test_fundamental_matches_class(self):
        # dominant DFT bin of a noise-free one-harmonic clip sits at the fundamental
        cfg = small_synth(harmonics=1, snr_db=math.inf, clip_seconds=1.0, clips_per_class=1)
        ds = data.generate_synthetic(cfg)
        for c in range(cfg.num_classes):
            clip = ds.clips[c]
            spectrum = np.abs(np.fft.rfft(clip.samples))
            expected = cfg.base_freq * (1 + c * cfg.freq_step)
            assert abs(spectrum.argmax() - expected) <= 1.0


class TestSplitPools:
    def dataset(self, per_class=40, classes=4):
        clips = [
            data.AudioClip(np.ones(8) * 0.5, 100, c, f"c{c}-{i}")
            for c in range(classes)
            for i in range(per_class)
        ]
        return data.Dataset(clips)

    def test_esc50_shaped_counts(self):
        ds = self.dataset(per_class=40)
        pools = data.split_pools(ds, data.SplitConfig(0.5, (0.4, 0.2, 0.4), seed=1))
        assert len(pools.labeled) == 4 * 8
        assert len(pools.validation) == 4 * 4
        assert len(pools.test) == 4 * 8
        assert len(pools.pool) == 4 * 20

    def test_reserve_all_gives_empty_pool(self):
        pools = data.split_pools(self.dataset(), data.SplitConfig(1.0, (0.4, 0.2, 0.4)))
        assert len(pools.pool) == 0

    def test_reserve_none_gives_all_pool(self):
        pools = data.split_pools(self.dataset(), data.SplitConfig(0.0, (0.4, 0.2, 0.4)))
        assert len(pools.labeled) == 0 and len(pools.pool) == 160

    def test_fraction_sum_enforced(self):
        with pytest.raises(ContractError, match="sum"):
            data.SplitConfig(0.5, (0.5, 0.2, 0.4))

    def test_partition_exhaustive_class_sizes(self):
        # closed-form floor arithmetic for every class size 4..100
        cfg = data.SplitConfig(0.5, (0.4, 0.2, 0.4), seed=3)
        for size in range(4, 101):
            ds = self.dataset(per_class=size, classes=1)
            pools = data.split_pools(ds, cfg)
            pools.validate()
            r = math.floor(0.5 * size)
            tr = math.floor(r * 0.4)
            va = math.floor(r * 0.2)
            assert len(pools.labeled) == tr
            assert len(pools.validation) == va
            assert len(pools.test) == r - tr - va
            assert len(pools.pool) == size - r
            union = np.concatenate([pools.labeled, pools.validation, pools.test, pools.pool])
            assert len(np.unique(union)) == size

    def test_thin_class_rejected(self):
        ds = self.dataset(per_class=3, classes=2)
        with pytest.raises(ContractError, match="fewer than 4"):
            data.split_pools(ds, data.SplitConfig())

    def test_deterministic(self):
        ds = self.dataset()
        a = data.split_pools(ds, data.SplitConfig(seed=9))
        b = data.split_pools(ds, data.SplitConfig(seed=9))
        assert np.array_equal(a.labeled, b.labeled) and np.array_equal(a.pool, b.pool)


class TestAugment:
    def clip(self, seed=0, n=400):
        rng = np.random.default_rng(seed)
        s = rng.uniform(-0.9, 0.9, n)
        return data.AudioClip(s, 1000, 1, "t0")

    def test_time_shift_zero_is_identity(self):
        c = self.clip()
        out = data.augment(c, "time_shift", 0.0, seed=1)
        np.testing.assert_array_equal(out.samples, c.samples)

    def test_time_stretch_unit_is_identity(self):
        c = self.clip()
        out = data.augment(c, "time_stretch", 1.0, seed=1)
        np.testing.assert_allclose(out.samples, c.samples, atol=1e-12)

    def test_pitch_shift_unit_is_identity(self):
        c = self.clip()
        out = data.augment(c, "pitch_shift", 1.0, seed=1)
        np.testing.assert_allclose(out.samples, c.samples, atol=1e-12)

    def test_noise_snr_calibrated(self):
        c = self.clip(n=4000)
        ratios = []
        for seed in range(100):
            out = data.augment(c, "noise", 20.0, seed=seed)
            noise = out.samples - c.samples
            ratios.append(10 * np.log10((c.samples**2).mean() / (noise**2).mean()))
        assert abs(np.mean(ratios) - 20.0) <= 1.0

    @pytest.mark.parametrize("kind,mag", [
        ("noise", 6.0), ("time_shift", 0.3), ("time_shift", -0.4),
        ("time_stretch", 0.7), ("time_stretch", 1.6),
        ("pitch_shift", 0.6), ("pitch_shift", 1.8),
    ])
    def test_length_and_range_preserved(self, kind, mag):
        c = self.clip()
        for seed in range(5):
            out = data.augment(c, kind, mag, seed=seed)
            assert out.samples.size == c.samples.size
            assert np.abs(out.samples).max() <= 1.0 + 1e-12

    def test_magnitude_range_enforced(self):
        c = self.clip()
        with pytest.raises(ContractError):
            data.augment(c, "time_shift", 1.5)
        with pytest.raises(ContractError):
            data.augment(c, "time_stretch", 9.0)

    def test_deterministic_per_seed(self):
        c = self.clip()
        a = data.augment(c, "noise", 10.0, seed=4)
        b = data.augment(c, "noise", 10.0, seed=4)
        assert a.samples.tobytes() == b.samples.tobytes()

    def test_time_shift_sample_count(self):
        c = self.clip(n=10)
        out = data.augment(c, "time_shift", 0.25, seed=0)
        assert np.all(out.samples[:2] == 0)
        np.testing.assert_array_equal(out.samples[2:], c.samples[:8] / max(1.0, np.abs(c.samples).max()))


class TestResample:
    def test_identity(self):
        c = data.AudioClip(np.linspace(-1, 1, 50), 4000, 0, "r")
        out = data.resample(c, 4000)
        np.testing.assert_array_equal(out.samples, c.samples)

    def test_upsample_length(self):
        c = data.AudioClip(np.zeros(4000), 4000, 0, "r")
        assert data.resample(c, 20000).samples.size == 20000

    def test_tone_survives_resampling(self):
        t = np.arange(4000) / 4000
        c = data.AudioClip(np.sin(2 * np.pi * 100 * t), 4000, 0, "tone")
        out = data.resample(c, 8000)
        spectrum = np.abs(np.fft.rfft(out.samples))
        assert spectrum.argmax() == 100  # 1 s of audio: bin == Hz


class TestDiskRoundTrip:
    def test_round_trip_bit_exact(self, tmp_path):
        ds = data.generate_synthetic(small_synth())
        data.save_dataset(ds, tmp_path / "d")
        back = data.load_dataset(tmp_path / "d")
        assert len(back) == len(ds)
        for a, b in zip(ds.clips, back.clips):
            assert a.id == b.id and a.rate == b.rate and a.label == b.label
            assert a.samples.tobytes() == b.samples.tobytes()

    def test_missing_sample_file_names_id(self, tmp_path):
        ds = data.generate_synthetic(small_synth(clips_per_class=2))
        data.save_dataset(ds, tmp_path / "d")
        (tmp_path / "d" / f"{ds.clips[3].id}.f64").unlink()
        with pytest.raises(ParseError, match=ds.clips[3].id):
            data.load_dataset(tmp_path / "d")

    def test_duplicate_id_rejected(self, tmp_path):
        ds = data.Dataset([
            data.AudioClip(np.zeros(4), 100, 0, "dup"),
            data.AudioClip(np.zeros(4), 100, 1, "unique"),
        ])
        data.save_dataset(ds, tmp_path / "d")
        manifest = (tmp_path / "d" / "manifest.json").read_text()
        (tmp_path / "d" / "manifest.json").write_text(manifest.replace("unique", "dup"))
        with pytest.raises(ParseError, match="duplicate id"):
            data.load_dataset(tmp_path / "d")

    def test_malformed_manifest_reports_line(self, tmp_path):
        d = tmp_path / "d"
        d.mkdir()
        (d / "manifest.json").write_text('{"clips": [\n  {"id": }\n]}')
        with pytest.raises(ParseError, match="line 2"):
            data.load_dataset(d)

    def test_missing_field_reports_field(self, tmp_path):
        d = tmp_path / "d"
        d.mkdir()
        (d / "manifest.json").write_text('{"clips": [{"id": "a", "rate": 100}]}')
        with pytest.raises(ParseError, match="'file'"):
            data.load_dataset(d)
