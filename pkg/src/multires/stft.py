"""Short-time Fourier front-end: framed, Hann-windowed DFT, log-magnitude maps.

Conventions
-----------
* one resolution = (window length, hop length) in samples
* FFT size is the next power of two >= the window length, so the bin count
  is ``n_fft/2 + 1`` (one-sided spectrum)
* frames are "centered": the signal is reflect-padded by ``n_fft/2`` on both
  sides, frame ``t`` covers ``window_len`` padded samples starting at
  ``t * hop_len``, and the frame count is ``len(signal) // hop_len + 1``
* log magnitude uses ``ln(max(|z|, 1e-10))`` so silence stays finite

Nothing here is trainable; extraction is a pure forward computation and the
resulting maps can be cached to disk (see :mod:`multires.cache`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_io import Waveform

LOG_FLOOR = 1e-10


def next_pow2(n: int) -> int:
    """Smallest power of two >= n (n >= 1)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return 1 << (n - 1).bit_length()


@dataclass(frozen=True)
class ResolutionSpec:
    """One time-frequency resolution: analysis window length and frame hop."""

    window_len: int
    hop_len: int

    def __post_init__(self) -> None:
        if not (isinstance(self.window_len, (int, np.integer)) and isinstance(self.hop_len, (int, np.integer))):
            raise ValueError("window_len and hop_len must be integers")
        if not 0 < self.hop_len <= self.window_len:
            raise ValueError(f"need 0 < hop_len <= window_len, got {self.window_len}/{self.hop_len}")

    @property
    def n_fft(self) -> int:
        return next_pow2(self.window_len)

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @classmethod
    def parse(cls, text: str) -> "ResolutionSpec":
        """Parse the ``window/hop`` notation, e.g. ``2048/64``."""
        parts = text.strip().split("/")
        try:
            window, hop = (int(p) for p in parts)
        except ValueError:
            raise ValueError(f"bad resolution {text!r} (expected 'window/hop')") from None
        return cls(window, hop)

    def __str__(self) -> str:
        return f"{self.window_len}/{self.hop_len}"


@dataclass
class FeatureMap:
    """Log-magnitude spectrogram for one resolution: time frames x frequency bins."""

    data: np.ndarray
    resolution: ResolutionSpec

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise ValueError("feature map must be 2-D (frames x bins)")
        if self.data.shape[1] != self.resolution.n_bins:
            raise ValueError(
                f"bin count {self.data.shape[1]} does not match resolution "
                f"{self.resolution} (expected {self.resolution.n_bins})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature map contains non-finite entries")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window: w[n] = 0.5 - 0.5 cos(2 pi n / length)."""
    if length < 1:
        raise ValueError(f"window length must be >= 1, got {length}")
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def frame_count(n_samples: int, hop_len: int) -> int:
    return n_samples // hop_len + 1


def stft(waveform: Waveform, resolution: ResolutionSpec) -> np.ndarray:
    """One-sided STFT, complex matrix of shape (frames, n_fft/2 + 1).

    Frames are Hann-windowed ``window_len``-sample slices of the
    reflect-padded signal, zero-padded up to ``n_fft`` before the DFT.
    """
    x = waveform.samples
    n_fft = resolution.n_fft
    pad = n_fft // 2
    if x.size < pad + 1:
        raise ValueError(
            f"signal of {x.size} samples is too short for window {resolution.window_len} "
            f"(reflect padding needs at least {pad + 1} samples)"
        )
    padded = np.pad(x, pad, mode="reflect")

    n_frames = frame_count(x.size, resolution.hop_len)
    starts = np.arange(n_frames) * resolution.hop_len
    idx = starts[:, None] + np.arange(resolution.window_len)[None, :]
    frames = padded[idx] * hann_window(resolution.window_len)[None, :]
    return np.fft.rfft(frames, n=n_fft, axis=1)


def log_magnitude(spectrum: np.ndarray, resolution: ResolutionSpec) -> FeatureMap:
    """ln(max(|z|, 1e-10)) applied entrywise; the floor keeps silence finite."""
    return FeatureMap(np.log(np.maximum(np.abs(spectrum), LOG_FLOOR)), resolution)


def extract_all(waveform: Waveform, resolutions: list[ResolutionSpec]) -> list[FeatureMap]:
    """One log-magnitude map per resolution, in input order."""
    if not resolutions:
        raise ValueError("resolutions must be non-empty")
    return [log_magnitude(stft(waveform, r), r) for r in resolutions]
