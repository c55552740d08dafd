"""Array geometry, propagation, noise mixing, and corpus synthesis tests.

Geometry expectations are recomputed here from raw coordinates and the
distance/speed-of-sound relationship rather than taken from the module under test.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slc.audio_io import AudioClip, read_wav
from slc.dataset import read_manifest
from slc.errors import DegenerateInputError, GeometryError, ValidationError
from slc.features import MIC_PAIRS, gcc_phat
from slc.simulate import (
    DEFAULT_SQUARE_SIDE_M,
    PEAK_CEILING,
    SPEED_OF_SOUND_MPS,
    ArrayGeometry,
    SimConfig,
    SourcePlacement,
    mic_distances,
    mix_noise,
    pair_tdoa_samples,
    propagate,
    synth_event,
    synthesize_dataset,
)
from conftest import tiny_sim_config


def reference_positions(side: float) -> np.ndarray:
    h = side / 2.0
    return np.array([[h, h], [-h, h], [-h, -h], [h, -h]])


class TestGeometry:
    def test_square_corner_coordinates(self):
        geom = ArrayGeometry.square()
        np.testing.assert_allclose(geom.mic_positions, reference_positions(DEFAULT_SQUARE_SIDE_M))
        assert geom.speed_of_sound_mps == SPEED_OF_SOUND_MPS

    def test_aperture_is_diagonal(self):
        geom = ArrayGeometry.square(side_m=0.064)
        assert abs(geom.aperture_m - 0.064 * np.sqrt(2.0)) < 1e-12

    def test_wrong_mic_count_rejected(self):
        with pytest.raises(ValidationError):
            ArrayGeometry(mic_positions=np.zeros((3, 2)))

    def test_lag_budget_enforced(self):
        # 0.5 m diagonal is ~0.707 m -> ~99 samples of worst-case TDOA at 48 kHz
        big = ArrayGeometry.square(side_m=0.5)
        with pytest.raises(GeometryError):
            big.check_lag_budget(48000, 25)
        ArrayGeometry.square().check_lag_budget(48000, 25)  # default fits

    def test_placement_validation(self):
        for azimuth in (0, 361, 12.5):
            with pytest.raises(ValidationError):
                SourcePlacement(azimuth_deg=azimuth)
        with pytest.raises(ValidationError):
            SourcePlacement(azimuth_deg=10, distance_m=0.0)

    @given(st.integers(1, 360))
    @settings(max_examples=60, deadline=None)
    def test_mic_distances_from_first_principles(self, azimuth):
        geom = ArrayGeometry.square()
        placement = SourcePlacement(azimuth_deg=azimuth, distance_m=1.5)
        theta = np.deg2rad(azimuth)
        src = np.array([1.5 * np.cos(theta), 1.5 * np.sin(theta)])
        expected = np.linalg.norm(reference_positions(DEFAULT_SQUARE_SIDE_M) - src, axis=1)
        np.testing.assert_allclose(mic_distances(placement, geom), expected, atol=1e-12)

    def test_pair_tdoa_sign_convention(self):
        # a source at 90 deg is closer to the top mics (0, 1) than the bottom ones
        geom = ArrayGeometry.square()
        placement = SourcePlacement(azimuth_deg=90)
        tdoa_02 = pair_tdoa_samples(placement, geom, 48000, (0, 2))
        d = mic_distances(placement, geom)
        assert tdoa_02 > 0  # mic 2 is farther: positive delay of b relative to a
        assert abs(tdoa_02 - (d[2] - d[0]) * 48000 / SPEED_OF_SOUND_MPS) < 1e-12
        assert abs(pair_tdoa_samples(placement, geom, 48000, (0, 1))) < 1e-9  # symmetric pair


class TestPropagate:
    def _source(self, n=8160, seed=0):
        rng = np.random.default_rng(seed)
        burst = 0.1 * rng.standard_normal(n)
        ramp = np.minimum(1.0, np.arange(n) / 200.0)
        return burst * ramp * ramp[::-1]  # tapered so window truncation is negligible

    def test_output_shape_and_rate(self):
        clip = propagate(self._source(), SourcePlacement(azimuth_deg=45), ArrayGeometry.square(), 48000)
        assert clip.num_channels == 4
        assert clip.num_samples == 8160
        assert clip.sample_rate_hz == 48000

    def test_linearity(self):
        placement = SourcePlacement(azimuth_deg=123)
        geom = ArrayGeometry.square()
        a, b = self._source(seed=1), self._source(seed=2)
        lhs = propagate(2.0 * a + 3.0 * b, placement, geom, 48000).samples
        rhs = 2.0 * propagate(a, placement, geom, 48000).samples + 3.0 * propagate(b, placement, geom, 48000).samples
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_bisector_symmetry(self):
        # a source on the y axis is equidistant from mics 0/1 and from mics 2/3
        clip = propagate(self._source(seed=3), SourcePlacement(azimuth_deg=90), ArrayGeometry.square(), 48000)
        np.testing.assert_allclose(clip.samples[0], clip.samples[1], atol=1e-12)
        np.testing.assert_allclose(clip.samples[2], clip.samples[3], atol=1e-12)

    def test_amplitude_follows_inverse_distance(self):
        # 500 trailing zeros exceed the ~285-sample absolute delay at 2 m, so the
        # capture window drops only the tiny sinc leakage of the fractional delay
        src = np.concatenate([self._source(n=7660, seed=4), np.zeros(500)])
        placement = SourcePlacement(azimuth_deg=90, distance_m=2.0)
        geom = ArrayGeometry.square()
        clip = propagate(src, placement, geom, 48000)
        d = mic_distances(placement, geom)
        energies = (clip.samples**2).sum(axis=1)
        np.testing.assert_allclose(energies / energies[0], (d[0] / d) ** 2, rtol=1e-4)

    def test_gcc_peaks_match_geometry_at_90_deg(self):
        src = self._source(seed=5)
        placement = SourcePlacement(azimuth_deg=90)
        geom = ArrayGeometry.square()
        clip = propagate(src, placement, geom, 48000)
        for pair in MIC_PAIRS:
            expected = int(round(pair_tdoa_samples(placement, geom, 48000, pair)))
            corr = gcc_phat(clip.samples[pair[0]], clip.samples[pair[1]])
            assert int(np.argmax(corr)) - 25 == expected

    def test_zero_source_propagates_to_silence(self):
        clip = propagate(np.zeros(1024), SourcePlacement(azimuth_deg=10), ArrayGeometry.square(), 48000)
        np.testing.assert_array_equal(clip.samples, 0.0)

    def test_oversized_array_rejected(self):
        with pytest.raises(GeometryError):
            propagate(self._source(), SourcePlacement(azimuth_deg=10), ArrayGeometry.square(side_m=0.5), 48000)

    def test_empty_source_rejected(self):
        with pytest.raises(ValidationError):
            propagate(np.zeros(0), SourcePlacement(azimuth_deg=10), ArrayGeometry.square(), 48000)


class TestMixNoise:
    def _clip(self, seed, scale=0.1, n=4096):
        rng = np.random.default_rng(seed)
        return AudioClip(samples=scale * rng.standard_normal((4, n)), sample_rate_hz=48000)

    def test_zero_db_equalizes_energy(self):
        clean, noise = self._clip(0), self._clip(1)
        mixed = mix_noise(clean, noise, 0.0)
        added = mixed.samples - clean.samples
        ratio = (clean.samples**2).sum() / (added**2).sum()
        assert abs(10.0 * np.log10(ratio)) < 0.01

    def test_20_db_noise_energy(self):
        # unit-energy clean at 20 dB SNR needs noise energy 10^-2
        clean_samples = np.zeros((1, 100))
        clean_samples[0, 0] = 1.0
        clean = AudioClip(samples=clean_samples, sample_rate_hz=48000)
        noise = self._clip(2, n=100)
        noise = AudioClip(samples=noise.samples[:1], sample_rate_hz=48000)
        mixed = mix_noise(clean, noise, 20.0)
        added = mixed.samples - clean.samples
        assert abs((added**2).sum() - 0.01) < 1e-9

    @given(st.floats(-10.0, 30.0))
    @settings(max_examples=40, deadline=None)
    def test_remeasured_snr_within_hundredth_db(self, snr_db):
        clean, noise = self._clip(3), self._clip(4)
        mixed = mix_noise(clean, noise, snr_db)
        added = mixed.samples - clean.samples
        measured = 10.0 * np.log10((clean.samples**2).sum() / (added**2).sum())
        assert abs(measured - snr_db) < 0.01

    def test_zero_energy_clean_rejected(self):
        silent = AudioClip(samples=np.zeros((4, 64)), sample_rate_hz=48000)
        with pytest.raises(DegenerateInputError):
            mix_noise(silent, self._clip(5, n=64), 10.0)

    def test_zero_energy_noise_rejected(self):
        silent = AudioClip(samples=np.zeros((4, 64)), sample_rate_hz=48000)
        with pytest.raises(DegenerateInputError):
            mix_noise(self._clip(6, n=64), silent, 10.0)

    def test_mismatched_channels_rejected(self):
        mono = AudioClip(samples=np.ones((1, 64)), sample_rate_hz=48000)
        with pytest.raises(ValidationError):
            mix_noise(self._clip(7, n=64), mono, 10.0)


class TestSynthEvent:
    def test_deterministic_per_seed(self):
        a = synth_event("bells", np.random.default_rng(42), 8160, 48000)
        b = synth_event("bells", np.random.default_rng(42), 8160, 48000)
        np.testing.assert_array_equal(a, b)

    def test_classes_are_distinct(self):
        a = synth_event("bells", np.random.default_rng(0), 8160, 48000)
        b = synth_event("whistle", np.random.default_rng(0), 8160, 48000)
        assert np.max(np.abs(a - b)) > 1e-3

    def test_unknown_class_rejected(self):
        with pytest.raises(ValidationError):
            synth_event("accordion", np.random.default_rng(0), 8160, 48000)

    def test_all_ten_classes_produce_audio(self):
        from slc.dataset import CLASS_NAMES

        assert len(CLASS_NAMES) == 10
        for name in CLASS_NAMES:
            wave = synth_event(name, np.random.default_rng(1), 8160, 48000)
            assert wave.shape == (8160,)
            assert (wave**2).sum() > 0.0


class TestSynthesizeDataset:
    def test_corpus_layout_and_counts(self, tmp_path):
        config = tiny_sim_config(samples_per_class=2, doa_count=3, doa_step=120)
        manifest = synthesize_dataset(config, tmp_path / "d")
        assert len(manifest.rows) == 3 * 2 * 3  # classes x samples x DoAs
        for row in manifest.rows:
            clip = read_wav(manifest.wav_path(row))
            assert clip.num_channels == 4
            assert clip.num_samples == 8160
            assert np.max(np.abs(clip.samples)) <= PEAK_CEILING + 1.0 / 32768
        doas = sorted({row.doa_deg for row in manifest.rows})
        assert doas == [1, 121, 241]

    def test_same_seed_byte_identical(self, tmp_path):
        config = tiny_sim_config(samples_per_class=1, doa_count=2, doa_step=180)
        synthesize_dataset(config, tmp_path / "a")
        synthesize_dataset(config, tmp_path / "b")
        assert (tmp_path / "a" / "manifest.csv").read_bytes() == (tmp_path / "b" / "manifest.csv").read_bytes()
        for wav in sorted((tmp_path / "a").rglob("*.wav")):
            twin = tmp_path / "b" / wav.relative_to(tmp_path / "a")
            assert wav.read_bytes() == twin.read_bytes()

    def test_different_seeds_differ(self, tmp_path):
        base = dict(samples_per_class=1, doa_count=1)
        synthesize_dataset(tiny_sim_config(seed=0, **base), tmp_path / "a")
        synthesize_dataset(tiny_sim_config(seed=1, **base), tmp_path / "b")
        wav_a = sorted((tmp_path / "a").rglob("*.wav"))[0]
        wav_b = tmp_path / "b" / wav_a.relative_to(tmp_path / "a")
        assert wav_a.read_bytes() != wav_b.read_bytes()

    def test_manifest_readable_and_paths_exist(self, tmp_path):
        config = tiny_sim_config(samples_per_class=1, doa_count=2, doa_step=90)
        synthesize_dataset(config, tmp_path / "d")
        manifest = read_manifest(tmp_path / "d" / "manifest.csv", check_paths=True)
        assert len(manifest.rows) == 6

    def test_snr_field_recorded(self, tmp_path):
        config = tiny_sim_config(samples_per_class=1, doa_count=1, snr_db=15.0)
        manifest = synthesize_dataset(config, tmp_path / "d")
        assert all(row.snr_db == 15.0 for row in manifest.rows)
        assert all(row.noise_class for row in manifest.rows)

    def test_empty_class_list_rejected(self):
        with pytest.raises(ValidationError):
            SimConfig(class_names=())

    def test_unknown_class_rejected(self):
        with pytest.raises(ValidationError):
            SimConfig(class_names=("bells", "theremin"))
