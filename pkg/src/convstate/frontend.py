"""Frame-level speech features and voice activity detection.

Frames audio into 25 ms windows hopped by 10 ms, computes log-energy,
zero-crossing rate, and 13 MFCCs per frame, classifies frames
speech/non-speech with a single logistic unit, and cuts speech runs into
fixed-length non-overlapping segments.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dct
from scipy.special import expit

from .errors import ValidationError

ACCEPTED_RATES = (16000, 44100)
ENERGY_FLOOR = 1e-10
PREEMPHASIS = 0.97


@dataclass(frozen=True)
class AudioBuffer:
    """Mono audio samples in [-1, 1] at a known sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValidationError("samples must be a non-empty 1-D array")
        if not np.isfinite(samples).all():
            raise ValidationError("samples contain NaN or Inf")
        if np.abs(samples).max() > 1.0 + 1e-9:
            raise ValidationError("samples must lie in [-1, 1]")
        if self.sample_rate not in ACCEPTED_RATES:
            raise ValidationError(
                f"sample rate {self.sample_rate} not supported; expected one of "
                f"{ACCEPTED_RATES}"
            )
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class FrameFeatures:
    """Per-frame feature bundle; the classifier consumes to_vector()."""

    frame_index: int
    time_s: float
    log_energy: float
    zcr: float
    mfcc: np.ndarray

    def __post_init__(self):
        coeffs = np.ascontiguousarray(self.mfcc, dtype=np.float64)
        if coeffs.ndim != 1:
            raise ValidationError("mfcc must be 1-D")
        if not 0.0 <= self.zcr <= 1.0:
            raise ValidationError(f"zcr {self.zcr} outside [0, 1]")
        coeffs.setflags(write=False)
        object.__setattr__(self, "mfcc", coeffs)

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.log_energy, self.zcr], self.mfcc))


@dataclass(frozen=True)
class SpeakerSegment:
    """Half-open time span [start_s, end_s) with an optional state label."""

    start_s: float
    end_s: float
    label: int | None = None

    def __post_init__(self):
        if self.end_s <= self.start_s:
            raise ValidationError(
                f"segment end {self.end_s} must exceed start {self.start_s}"
            )

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


def load_wav(path: str) -> AudioBuffer:
    """Read a 16-bit PCM RIFF file; multichannel audio is mean-downmixed."""
    with wave.open(str(path), "rb") as handle:
        if handle.getsampwidth() != 2:
            raise ValidationError(
                f"only 16-bit PCM is supported, got sample width "
                f"{handle.getsampwidth()} bytes"
            )
        if handle.getcomptype() != "NONE":
            raise ValidationError(f"compressed WAV ({handle.getcomptype()}) not supported")
        rate = handle.getframerate()
        channels = handle.getnchannels()
        raw = handle.readframes(handle.getnframes())
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        data = data.reshape(-1, channels).mean(axis=1)
    return AudioBuffer(samples=data, sample_rate=rate)


def save_wav(path: str, audio: AudioBuffer) -> None:
    """Write mono 16-bit PCM; the inverse of load_wav for fixtures."""
    scaled = np.clip(audio.samples * 32767.0, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(audio.sample_rate)
        handle.writeframes(scaled.tobytes())


def frame(
    audio: AudioBuffer, window_s: float = 0.025, hop_s: float = 0.010
) -> np.ndarray:
    """Slice audio into overlapping frames; a trailing partial window is dropped.

    Frame t covers samples [t * hop, t * hop + window). Audio shorter than
    one window yields an empty (0, window) array.
    """
    window = int(round(window_s * audio.sample_rate))
    hop = int(round(hop_s * audio.sample_rate))
    if window < 2:
        raise ValidationError(f"window of {window} samples is too short (need >= 2)")
    if hop < 1:
        raise ValidationError(f"hop of {hop} samples is too short (need >= 1)")
    samples = audio.samples
    if samples.size < window:
        return np.empty((0, window))
    count = (samples.size - window) // hop + 1
    view = np.lib.stride_tricks.sliding_window_view(samples, window)[::hop]
    return np.ascontiguousarray(view[:count])


def log_energy(frame_samples: np.ndarray) -> float:
    """Natural log of the frame's energy, floored at 1e-10."""
    x = np.asarray(frame_samples, dtype=np.float64)
    if x.size == 0:
        raise ValidationError("frame is empty")
    return float(np.log(max(float(np.sum(x * x)), ENERGY_FLOOR)))


def zcr(frame_samples: np.ndarray) -> float:
    """Fraction of adjacent sample pairs that change sign; sign(0) counts positive."""
    x = np.asarray(frame_samples, dtype=np.float64)
    if x.size < 2:
        raise ValidationError(f"zcr needs at least 2 samples, got {x.size}")
    nonneg = x >= 0.0
    crossings = int(np.count_nonzero(nonneg[1:] != nonneg[:-1]))
    return crossings / (x.size - 1)


@lru_cache(maxsize=8)
def _mel_filterbank(n_filters: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters evenly spaced on the mel scale over 0..rate/2."""

    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    mel_edges = np.linspace(to_mel(0.0), to_mel(sample_rate / 2.0), n_filters + 2)
    hz_edges = from_mel(mel_edges)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    bank = np.zeros((n_filters, bin_freqs.size))
    for m in range(n_filters):
        lower, center, upper = hz_edges[m], hz_edges[m + 1], hz_edges[m + 2]
        rising = (bin_freqs - lower) / (center - lower)
        falling = (upper - bin_freqs) / (upper - center)
        bank[m] = np.maximum(0.0, np.minimum(rising, falling))
    return bank


def mfcc(
    frame_samples: np.ndarray,
    sample_rate: int,
    n_filters: int = 40,
    n_coeffs: int = 13,
) -> np.ndarray:
    """Mel-frequency cepstral coefficients for one frame.

    Chain: pre-emphasis 0.97, Hann window, magnitude FFT at the next power
    of two, triangular mel filterbank over 0..rate/2, log energies floored
    at 1e-10, orthonormal DCT-II, first `n_coeffs` coefficients.
    """
    x = np.asarray(frame_samples, dtype=np.float64)
    if x.size < 2:
        raise ValidationError(f"mfcc needs at least 2 samples, got {x.size}")
    emphasized = np.empty_like(x)
    emphasized[0] = x[0]
    emphasized[1:] = x[1:] - PREEMPHASIS * x[:-1]
    windowed = emphasized * np.hanning(x.size)
    n_fft = 1 << (x.size - 1).bit_length()
    magnitude = np.abs(np.fft.rfft(windowed, n_fft))
    energies = _mel_filterbank(n_filters, n_fft, sample_rate) @ magnitude
    log_energies = np.log(np.maximum(energies, ENERGY_FLOOR))
    return dct(log_energies, type=2, norm="ortho")[:n_coeffs]


def extract_features(
    audio: AudioBuffer,
    window_s: float = 0.025,
    hop_s: float = 0.010,
    n_filters: int = 40,
    n_coeffs: int = 13,
) -> list[FrameFeatures]:
    """Frame the audio and compute the full per-frame feature set."""
    frames = frame(audio, window_s, hop_s)
    features = []
    for t, row in enumerate(frames):
        features.append(
            FrameFeatures(
                frame_index=t,
                time_s=t * hop_s,
                log_energy=log_energy(row),
                zcr=zcr(row),
                mfcc=mfcc(row, audio.sample_rate, n_filters, n_coeffs),
            )
        )
    return features


def vad_classify(
    features: FrameFeatures | np.ndarray, weights: np.ndarray
) -> tuple[bool, float]:
    """Single logistic unit over [log_energy, zcr] ++ mfcc; last weight is bias.

    A probability of exactly 0.5 classifies as non-speech.
    """
    vector = (
        features.to_vector() if isinstance(features, FrameFeatures) else np.asarray(features)
    )
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size != vector.size + 1:
        raise ValidationError(
            f"weights must have dimension {vector.size + 1} (features + bias), "
            f"got {w.size}"
        )
    probability = float(expit(np.dot(w[:-1], vector) + w[-1]))
    return probability > 0.5, probability


def _binary_cross_entropy(probabilities: np.ndarray, targets: np.ndarray) -> float:
    p = np.clip(probabilities, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p)))


def train_vad(
    features: np.ndarray,
    labels: np.ndarray,
    epochs: int = 400,
    learning_rate: float = 0.5,
    seed: int = 0,
) -> tuple[np.ndarray, float]:
    """Fit logistic-regression VAD weights by full-batch gradient descent.

    Features are standardized internally for conditioning and the learned
    weights are mapped back to the raw feature space, so the returned
    vector plugs straight into vad_classify. Deterministic per seed.
    Returns (weights, final training loss).
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.size:
        raise ValidationError("features must be (n, d) with one label per row")
    for cls, name in ((1, "speech"), (0, "non-speech")):
        if not (y == cls).any():
            raise ValidationError(f"training data has no {name} frames")
    rng = np.random.default_rng(seed)
    raw = rng.normal(0.0, 0.01, x.shape[1] + 1)

    def loss_for(weights: np.ndarray) -> float:
        return _binary_cross_entropy(expit(x @ weights[:-1] + weights[-1]), y)

    if epochs == 0:
        return raw, loss_for(raw)

    mu = x.mean(axis=0)
    sigma = np.maximum(x.std(axis=0), 1e-8)
    z = (x - mu) / sigma
    # Exact reparameterization: w.x + b == (w*sigma).z + (b + w.mu).
    w = raw[:-1] * sigma
    b = raw[-1] + float(raw[:-1] @ mu)
    for _ in range(epochs):
        residual = expit(z @ w + b) - y
        w -= learning_rate * (z.T @ residual) / y.size
        b -= learning_rate * float(residual.mean())
    final = np.concatenate((w / sigma, [b - float((w / sigma) @ mu)]))
    return final, loss_for(final)


def segment(
    speech_mask: np.ndarray, hop_s: float = 0.010, seg_len_s: float = 0.4
) -> list[SpeakerSegment]:
    """Cut maximal speech runs into consecutive chunks of seg_len_s.

    A trailing remainder of at most half a segment merges into its
    predecessor; a lone run shorter than half a segment is dropped.
    """
    if seg_len_s <= 0 or hop_s <= 0:
        raise ValidationError("hop_s and seg_len_s must be positive")
    mask = np.asarray(speech_mask, dtype=bool)
    segments: list[SpeakerSegment] = []
    eps = 1e-9
    edges = np.flatnonzero(np.diff(np.concatenate(([False], mask, [False]))))
    for start, stop in zip(edges[::2], edges[1::2]):
        begin = float(start * hop_s)
        duration = float((stop - start) * hop_s)
        n_full = int(duration / seg_len_s + eps)
        trailing = duration - n_full * seg_len_s
        if n_full == 0:
            if duration >= seg_len_s / 2.0 - eps:
                segments.append(SpeakerSegment(begin, begin + duration))
            continue
        lengths = [seg_len_s] * n_full
        if trailing > seg_len_s / 2.0 + eps:
            lengths.append(trailing)
        elif trailing > eps:
            lengths[-1] += trailing
        cursor = begin
        for length in lengths:
            segments.append(SpeakerSegment(cursor, cursor + length))
            cursor += length
    return segments
