"""Acoustic feature pipeline: log mel-filterbank extraction, energy VAD,
sliding mean normalization, crop/extend batching helpers, and a synthetic
corpus generator for desk-scale experiments.

Also owns the on-disk formats: UEFB feature files (little-endian float32
matrices with a small header) and the corpus manifest CSV, so the rest of
the pipeline never needs an audio codec.
"""

import csv
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

UEFB_MAGIC = b"UEFB"
UEFB_VERSION = 1


class EmptyInputError(ValueError):
    """Input shorter than the minimum the operation can process."""


@dataclass
class AudioClip:
    """Mono audio samples plus their sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate not in (8000, 16000):
            raise ValueError(f"unsupported sample rate {self.sample_rate}")
        if not np.isfinite(self.samples).all():
            raise ValueError("audio samples contain non-finite values")


@dataclass
class FrameSequence:
    """D x L feature matrix with utterance metadata.

    Rows are feature coefficients, columns are frames.
    """

    features: np.ndarray
    utterance_id: str = ""
    label: int | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got {self.features.shape}")
        if self.features.shape[1] < 1:
            raise EmptyInputError("sequence has no frames")
        if not np.isfinite(self.features).all():
            raise ValueError(f"non-finite features in {self.utterance_id!r}")

    @property
    def dim(self):
        return self.features.shape[0]

    @property
    def length(self):
        return self.features.shape[1]


# ---------------------------------------------------------------------------
# filterbank extraction


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels, n_fft, sample_rate, f_min=20.0, f_max=None):
    """Triangular mel filters, shape (n_mels, n_fft//2 + 1)."""
    if f_max is None:
        f_max = sample_rate / 2.0
    mel_pts = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    weights = np.zeros((n_mels, len(bin_freqs)))
    for j in range(n_mels):
        lo, center, hi = hz_pts[j], hz_pts[j + 1], hz_pts[j + 2]
        up = (bin_freqs - lo) / (center - lo)
        down = (hi - bin_freqs) / (hi - center)
        weights[j] = np.maximum(0.0, np.minimum(up, down))
    return weights


def filter_center_freqs(n_mels, sample_rate, f_min=20.0, f_max=None):
    """Peak frequency of each triangular filter, in Hz."""
    if f_max is None:
        f_max = sample_rate / 2.0
    mel_pts = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    return mel_to_hz(mel_pts)[1:-1]


def power_spectrum(frames, n_fft):
    """Per-frame power spectrum |DFT|^2 over the first n_fft//2+1 bins.

    ``frames`` is (n_frames, frame_samples), already windowed.
    """
    return np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2


def fbank(
    clip,
    n_mels=64,
    frame_len_ms=25.0,
    frame_shift_ms=10.0,
    preemphasis=0.97,
    log_floor=1e-10,
    f_min=20.0,
):
    """Log mel-filterbank features for a mono clip, shape (n_mels, L).

    Per frame: pre-emphasis, Hamming window, power spectrum, triangular
    mel integration, natural log of (energy + floor).
    """
    sr = clip.sample_rate
    frame_samples = int(round(sr * frame_len_ms / 1000.0))
    shift_samples = int(round(sr * frame_shift_ms / 1000.0))
    x = clip.samples
    if len(x) < frame_samples:
        raise EmptyInputError(
            f"clip of {len(x)} samples is shorter than one {frame_samples}-sample frame"
        )
    y = x.copy()
    y[1:] -= preemphasis * x[:-1]

    n_frames = 1 + (len(y) - frame_samples) // shift_samples
    idx = np.arange(frame_samples)[None, :] + shift_samples * np.arange(n_frames)[:, None]
    frames = y[idx] * np.hamming(frame_samples)

    n_fft = 1
    while n_fft < frame_samples:
        n_fft *= 2
    spec = power_spectrum(frames, n_fft)
    mel = mel_filterbank(n_mels, n_fft, sr, f_min=f_min)
    feats = np.log(spec @ mel.T + log_floor)
    return FrameSequence(feats.T)


# ---------------------------------------------------------------------------
# frame selection and normalization


def energy_vad(seq, offset_db=40.0):
    """Boolean speech mask: keep frames within offset_db of the loudest frame.

    Frame energy is recovered from the log-domain features by summing
    exp(features) over coefficients; the comparison runs on a decibel
    scale. The loudest frame is always kept.
    """
    f = seq.features
    m = f.max(axis=0)
    log_energy = m + np.log(np.exp(f - m).sum(axis=0))  # natural log, stable
    energy_db = log_energy * (10.0 / np.log(10.0))
    mask = energy_db > energy_db.max() - offset_db
    mask[int(np.argmax(energy_db))] = True
    return mask


def sliding_cmn(seq, window=300):
    """Subtract the per-coefficient mean of a centered window (edge-truncated).

    ``window`` is in frames; 300 frames covers 3 s at a 10 ms shift. A
    window of at least 2L-1 reduces to global mean subtraction.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    f = seq.features
    d, length = f.shape
    half_left = (window - 1) // 2
    half_right = window // 2
    csum = np.concatenate(
        [np.zeros((d, 1)), np.cumsum(f, axis=1)], axis=1
    )
    t = np.arange(length)
    lo = np.maximum(0, t - half_left)
    hi = np.minimum(length, t + half_right + 1)
    means = (csum[:, hi] - csum[:, lo]) / (hi - lo)
    return FrameSequence(f - means, seq.utterance_id, seq.label)


def crop_or_extend(seq, target_len, rng):
    """Fix the sequence length: random contiguous crop when too long,
    cyclic tiling (then truncation) when too short, identity when equal."""
    if target_len < 1:
        raise ValueError("target_len must be >= 1")
    f = seq.features
    length = f.shape[1]
    if length > target_len:
        start = int(rng.integers(0, length - target_len + 1))
        out = f[:, start : start + target_len]
    elif length < target_len:
        reps = -(-target_len // length)  # ceil
        out = np.tile(f, (1, reps))[:, :target_len]
    else:
        out = f
    return FrameSequence(out.copy(), seq.utterance_id, seq.label)


# ---------------------------------------------------------------------------
# synthetic corpus


def synth_corpus(
    n_classes,
    utts_per_class,
    seed,
    n_mels=64,
    len_range=(200, 400),
    mean_scale=1.0,
    noise=1.0,
    ar_range=(0.3, 0.9),
):
    """Desk-scale stand-in corpus: one Gaussian process per class.

    Every class draws a mean vector and an AR(1) temporal correlation
    coefficient; utterances share a noise level. Deterministic per seed.
    """
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, mean_scale, size=(n_classes, n_mels))
    rhos = rng.uniform(ar_range[0], ar_range[1], size=n_classes)
    corpus = []
    for k in range(n_classes):
        for i in range(utts_per_class):
            length = int(rng.integers(len_range[0], len_range[1] + 1))
            eps = rng.standard_normal((n_mels, length))
            z = np.empty((n_mels, length))
            z[:, 0] = noise * eps[:, 0]
            scale = noise * np.sqrt(1.0 - rhos[k] ** 2)
            for t in range(1, length):
                z[:, t] = rhos[k] * z[:, t - 1] + scale * eps[:, t]
            corpus.append(
                FrameSequence(
                    means[k][:, None] + z,
                    utterance_id=f"c{k:03d}_u{i:03d}",
                    label=k,
                )
            )
    return corpus


# ---------------------------------------------------------------------------
# file formats


def read_wav(path):
    """16-bit PCM mono WAV -> AudioClip with samples in [-1, 1)."""
    with wave.open(str(path), "rb") as wav:
        if wav.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio")
        if wav.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM")
        sr = wav.getframerate()
        raw = wav.readframes(wav.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples, sr)


def write_uefb(path, features):
    """Write a D x L float matrix in the UEFB container (row-major float32)."""
    features = np.asarray(features)
    d, length = features.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", UEFB_MAGIC, UEFB_VERSION, d, length))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


def read_uefb(path):
    """Read a UEFB feature file back into a D x L float64 matrix."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise ValueError(f"{path}: truncated UEFB header")
        magic, version, d, length = struct.unpack("<4sIII", header)
        if magic != UEFB_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != UEFB_VERSION:
            raise ValueError(f"{path}: unsupported UEFB version {version}")
        payload = fh.read(4 * d * length)
    if len(payload) != 4 * d * length:
        raise ValueError(f"{path}: truncated UEFB payload")
    return np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(d, length)


def write_corpus(directory, corpus):
    """Write feature files + manifest.csv; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = directory / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["utterance_id", "class", "length"])
        for seq in corpus:
            write_uefb(directory / f"{seq.utterance_id}.uefb", seq.features)
            writer.writerow([seq.utterance_id, seq.label, seq.length])
    return manifest


def load_corpus(directory):
    """Load a corpus written by :func:`write_corpus`."""
    directory = Path(directory)
    manifest = directory / "manifest.csv"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest.csv in {directory}")
    corpus = []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            feats = read_uefb(directory / f"{row['utterance_id']}.uefb")
            label = None if row["class"] in ("", "None") else int(row["class"])
            corpus.append(FrameSequence(feats, row["utterance_id"], label))
    return corpus
