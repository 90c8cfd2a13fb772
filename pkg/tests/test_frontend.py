import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convstate.errors import ValidationError
from convstate.frontend import (
    AudioBuffer,
    FrameFeatures,
    extract_features,
    frame,
    load_wav,
    log_energy,
    mfcc,
    save_wav,
    segment,
    train_vad,
    vad_classify,
    zcr,
)


def reference_mfcc(samples, rate, n_filters=40, n_coeffs=13):
    """Re-derivation of the cepstral chain with explicit sums.

    Direct DFT instead of an FFT, per-bin triangle evaluation, and an
    explicit cosine-sum DCT, so it shares no code path with the module.
    """
    n = len(samples)
    emphasized = [samples[0]] + [
        samples[t] - 0.97 * samples[t - 1] for t in range(1, n)
    ]
    hann = [0.5 - 0.5 * math.cos(2.0 * math.pi * t / (n - 1)) for t in range(n)]
    windowed = np.array([a * b for a, b in zip(emphasized, hann)])
    n_fft = 1
    while n_fft < n:
        n_fft *= 2
    bins = n_fft // 2 + 1
    t_idx = np.arange(n)
    magnitudes = np.empty(bins)
    for k in range(bins):
        angle = 2.0 * math.pi * k * t_idx / n_fft
        real = float(np.sum(windowed * np.cos(angle)))
        imag = float(-np.sum(windowed * np.sin(angle)))
        magnitudes[k] = math.hypot(real, imag)

    def to_mel(f):
        return 2595.0 * math.log10(1.0 + f / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    top = to_mel(rate / 2.0)
    edges = [from_mel(top * i / (n_filters + 1)) for i in range(n_filters + 2)]
    log_banks = []
    for m in range(n_filters):
        low, mid, high = edges[m], edges[m + 1], edges[m + 2]
        acc = 0.0
        for k in range(bins):
            freq = k * rate / n_fft
            weight = max(0.0, min((freq - low) / (mid - low), (high - freq) / (high - mid)))
            acc += weight * magnitudes[k]
        log_banks.append(math.log(max(acc, 1e-10)))
    coeffs = []
    for i in range(n_coeffs):
        scale = math.sqrt(1.0 / n_filters) if i == 0 else math.sqrt(2.0 / n_filters)
        coeffs.append(
            scale
            * sum(
                log_banks[j] * math.cos(math.pi * i * (2 * j + 1) / (2 * n_filters))
                for j in range(n_filters)
            )
        )
    return np.array(coeffs)


def tone(freq_hz, duration_s=0.025, rate=16000, amplitude=0.5):
    t = np.arange(int(duration_s * rate))
    return amplitude * np.cos(2.0 * np.pi * freq_hz * t / rate)


class TestFrame:
    def test_one_second_frame_count(self):
        audio = AudioBuffer(np.zeros(16000), 16000)
        assert frame(audio).shape == (98, 400)

    def test_shorter_than_window_is_empty(self):
        audio = AudioBuffer(np.zeros(100), 16000)
        assert frame(audio).shape[0] == 0

    def test_hop_equals_window(self):
        audio = AudioBuffer(np.arange(2000) / 2000.0, 16000)
        frames = frame(audio, window_s=0.025, hop_s=0.025)
        assert frames.shape == (5, 400)
        assert np.array_equal(frames[1], audio.samples[400:800])

    def test_frames_cover_hop_offsets(self):
        audio = AudioBuffer(np.arange(1000) / 1000.0, 16000)
        frames = frame(audio)
        assert np.array_equal(frames[2], audio.samples[320:720])

    def test_window_too_small(self):
        audio = AudioBuffer(np.zeros(100), 16000)
        with pytest.raises(ValidationError):
            frame(audio, window_s=0.00001)


class TestLogEnergy:
    def test_zero_frame_hits_floor(self):
        assert log_energy(np.zeros(400)) == pytest.approx(math.log(1e-10))

    def test_unit_sample(self):
        assert log_energy(np.array([1.0])) == 0.0

    def test_half_half(self):
        assert log_energy(np.array([0.5, 0.5])) == pytest.approx(math.log(0.5))


class TestZcr:
    def test_constant_frame(self):
        assert zcr(np.full(50, 0.3)) == 0.0

    def test_alternating_frame(self):
        assert zcr(np.array([1.0, -1.0, 1.0, -1.0])) == 1.0

    def test_sinusoid_fixture(self):
        wave_100hz = tone(100)
        nonneg = wave_100hz >= 0
        brute = int(np.count_nonzero(nonneg[1:] != nonneg[:-1]))
        assert brute == 5
        assert zcr(wave_100hz) == pytest.approx(5 / 399)

    def test_too_short(self):
        with pytest.raises(ValidationError):
            zcr(np.array([1.0]))

    def test_rate_monotone_in_frequency(self):
        rates = [zcr(tone(f)) for f in (100, 300, 500, 900, 1500, 2500, 3900)]
        assert rates == sorted(rates)


class TestMfcc:
    def test_zero_frame_energy_in_first_coefficient(self):
        coeffs = mfcc(np.zeros(400), 16000)
        assert coeffs[0] == pytest.approx(math.log(1e-10) * math.sqrt(40))
        assert np.abs(coeffs[1:]).max() < 1e-12

    def test_output_length(self):
        assert mfcc(tone(440), 16000).shape == (13,)

    def test_matches_reference_on_fixture_frames(self):
        rng = np.random.default_rng(123)
        frames = [rng.uniform(-1, 1, 400) for _ in range(17)]
        frames += [tone(250), tone(1000), np.zeros(400)]
        assert len(frames) == 20
        for samples in frames:
            ours = mfcc(samples, 16000)
            theirs = reference_mfcc(samples, 16000)
            assert np.abs(ours - theirs).max() <= 1e-6

    def test_reference_agreement_at_44100(self):
        rng = np.random.default_rng(5)
        samples = rng.uniform(-1, 1, 1102)
        assert np.abs(mfcc(samples, 44100) - reference_mfcc(samples, 44100)).max() <= 1e-6

    def test_too_short_frame(self):
        with pytest.raises(ValidationError):
            mfcc(np.array([0.5]), 16000)


class TestVadClassify:
    def test_zero_weights_tie_is_non_speech(self):
        features = np.zeros(15)
        speech, probability = vad_classify(features, np.zeros(16))
        assert probability == 0.5
        assert not speech

    def test_energy_weight_drives_decision(self):
        loud = FrameFeatures(0, 0.0, log_energy=3.0, zcr=0.1, mfcc=np.zeros(13))
        weights = np.zeros(16)
        weights[0] = 2.0
        speech, probability = vad_classify(loud, weights)
        assert speech and probability > 0.9

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError, match="16"):
            vad_classify(np.zeros(15), np.zeros(4))


def synthetic_vad_corpus(seed=2):
    rate = 16000
    rng = np.random.default_rng(seed)
    loud = AudioBuffer(0.3 * np.cos(2 * np.pi * 440 * np.arange(rate) / rate), rate)
    quiet = AudioBuffer(np.clip(rng.normal(0, 1e-5, rate), -1, 1), rate)
    speech = extract_features(loud)
    silence = extract_features(quiet)
    x = np.array([f.to_vector() for f in speech + silence])
    y = np.array([1] * len(speech) + [0] * len(silence))
    return x, y


class TestTrainVad:
    def test_separable_corpus_is_learned(self):
        x, y = synthetic_vad_corpus()
        weights, loss = train_vad(x, y, epochs=400, learning_rate=0.5, seed=0)
        predictions = np.array([vad_classify(row, weights)[0] for row in x])
        assert (predictions == y).mean() >= 0.99
        assert loss < 0.1

    def test_zero_epochs_returns_initial(self):
        x, y = synthetic_vad_corpus()
        first, _ = train_vad(x, y, epochs=0, seed=7)
        again, _ = train_vad(x, y, epochs=0, seed=7)
        trained, _ = train_vad(x, y, epochs=50, seed=7)
        assert np.array_equal(first, again)
        assert not np.array_equal(first, trained)
        assert np.abs(first).max() < 0.1

    def test_single_class_names_missing(self):
        x, _ = synthetic_vad_corpus()
        with pytest.raises(ValidationError, match="non-speech"):
            train_vad(x, np.ones(len(x)), epochs=5)
        with pytest.raises(ValidationError, match="speech"):
            train_vad(x, np.zeros(len(x)), epochs=5)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_loss_non_increasing_at_small_rate(self, seed):
        x, y = synthetic_vad_corpus(seed=seed)
        losses = [
            train_vad(x, y, epochs=n, learning_rate=0.01, seed=seed)[1]
            for n in (0, 5, 15, 40, 80)
        ]
        assert all(a >= b - 1e-12 for a, b in zip(losses, losses[1:]))

    def test_deterministic_per_seed(self):
        x, y = synthetic_vad_corpus()
        a, _ = train_vad(x, y, epochs=30, seed=4)
        b, _ = train_vad(x, y, epochs=30, seed=4)
        assert np.array_equal(a, b)


class TestSegment:
    def test_exact_division(self):
        mask = np.array([True] * 120)
        spans = segment(mask, hop_s=0.010, seg_len_s=0.4)
        assert [(round(s.start_s, 3), round(s.end_s, 3)) for s in spans] == [
            (0.0, 0.4),
            (0.4, 0.8),
            (0.8, 1.2),
        ]

    def test_half_segment_trailing_merges(self):
        mask = np.array([True] * 100)
        spans = segment(mask, hop_s=0.010, seg_len_s=0.4)
        durations = [round(s.duration_s, 3) for s in spans]
        assert durations == [0.4, 0.6]

    def test_long_trailing_kept(self):
        mask = np.array([True] * 70)
        spans = segment(mask, hop_s=0.010, seg_len_s=0.4)
        assert [round(s.duration_s, 3) for s in spans] == [0.4, 0.3]

    def test_all_silence(self):
        assert segment(np.zeros(50, dtype=bool), 0.010) == []

    def test_short_lone_run_dropped(self):
        mask = np.zeros(50, dtype=bool)
        mask[10:15] = True
        assert segment(mask, hop_s=0.010, seg_len_s=0.4) == []

    def test_two_runs_stay_separate(self):
        mask = np.zeros(200, dtype=bool)
        mask[0:45] = True
        mask[100:145] = True
        spans = segment(mask, hop_s=0.010, seg_len_s=0.4)
        assert len(spans) == 2
        assert spans[0].end_s <= spans[1].start_s

    @given(st.lists(st.booleans(), min_size=1, max_size=300))
    @settings(max_examples=200)
    def test_segment_invariants(self, mask):
        spans = segment(np.array(mask, dtype=bool), hop_s=0.010, seg_len_s=0.4)
        previous_end = -1.0
        for span in spans:
            assert span.start_s >= previous_end - 1e-9
            previous_end = span.end_s
            assert span.duration_s >= 0.2 - 1e-9
            assert span.duration_s < 0.8


class TestWavIo:
    def test_round_trip(self, tmp_path):
        path = str(tmp_path / "clip.wav")
        original = AudioBuffer(np.linspace(-0.5, 0.5, 1600), 16000)
        save_wav(path, original)
        loaded = load_wav(path)
        assert loaded.sample_rate == 16000
        assert np.abs(loaded.samples - original.samples).max() < 1e-4

    def test_multichannel_downmix(self, tmp_path):
        import wave as wave_module

        path = str(tmp_path / "stereo.wav")
        left = (np.ones(100) * 16384).astype("<i2")
        right = np.zeros(100, dtype="<i2")
        interleaved = np.empty(200, dtype="<i2")
        interleaved[0::2] = left
        interleaved[1::2] = right
        with wave_module.open(path, "wb") as handle:
            handle.setnchannels(2)
            handle.setsampwidth(2)
            handle.setframerate(16000)
            handle.writeframes(interleaved.tobytes())
        loaded = load_wav(path)
        assert loaded.samples == pytest.approx(np.full(100, 0.25), abs=1e-4)

    def test_rejects_unsupported_rate(self):
        with pytest.raises(ValidationError, match="8000"):
            AudioBuffer(np.zeros(10), 8000)

    def test_rejects_samples_out_of_range(self):
        with pytest.raises(ValidationError):
            AudioBuffer(np.array([0.0, 1.5]), 16000)


class TestWavValidation:
    def test_rejects_eight_bit(self, tmp_path):
        import wave as wave_module

        path = str(tmp_path / "eight.wav")
        with wave_module.open(path, "wb") as handle:
            handle.setnchannels(1)
            handle.setsampwidth(1)
            handle.setframerate(16000)
            handle.writeframes(bytes(100))
        with pytest.raises(ValidationError, match="16-bit"):
            load_wav(path)
