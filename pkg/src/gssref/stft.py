"""Short-time Fourier transform with reflect padding and weighted overlap-add.

Spectrograms are complex arrays shaped (mics, freqs, frames). Each signal is
reflect-padded by ``frame_len // 2`` samples at both ends, so frame ``l`` is
centred on sample ``l * frame_shift`` of the unpadded signal and the frame
count is ``floor((n_samples + frame_len - frame_len) / frame_shift) + 1``.
Synthesis uses the same periodic Hann window and divides by the accumulated
squared window, which makes ``synthesize(analyze(x))`` exact up to rounding.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._validation import InvalidInputError, check_signal, check_spectrogram


@dataclass(frozen=True)
class StftConfig:
    sample_rate: int = 16000
    frame_len: int = 1024
    frame_shift: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.window != "hann":
            raise InvalidInputError(f"unsupported window {self.window!r}; only 'hann' is available")
        if self.frame_len <= 0 or self.frame_len & (self.frame_len - 1):
            raise InvalidInputError("frame_len must be a positive power of two")
        if self.frame_shift <= 0 or self.frame_len % self.frame_shift:
            raise InvalidInputError("frame_shift must divide frame_len")
        if self.frame_len // self.frame_shift < 2:
            raise InvalidInputError("Hann windows need at least 50% overlap")

    @property
    def n_freqs(self):
        return self.frame_len // 2 + 1

    @property
    def pad(self):
        return self.frame_len // 2

    def n_frames(self, n_samples):
        return (n_samples + 2 * self.pad - self.frame_len) // self.frame_shift + 1


def hann(frame_len):
    """Periodic Hann window, constant overlap-add for any shift dividing ``frame_len / 2``."""
    n = np.arange(frame_len)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / frame_len)


def analyze(signal, cfg=StftConfig()):
    """Forward STFT of a (channels, samples) or mono signal."""
    signal = check_signal(signal, min_length=cfg.frame_len)
    padded = np.pad(signal, ((0, 0), (cfg.pad, cfg.pad)), mode="reflect")
    frames = sliding_window_view(padded, cfg.frame_len, axis=-1)[:, :: cfg.frame_shift]
    # (M, L, N) -> (M, F, L)
    spec = np.fft.rfft(frames * hann(cfg.frame_len), axis=-1)
    return np.ascontiguousarray(spec.transpose(0, 2, 1))


def synthesize(spec, cfg=StftConfig(), length=None):
    """Inverse STFT by weighted overlap-add.

    ``length`` trims the output to the original number of samples; without it
    the output covers ``(L - 1) * frame_shift`` samples, the span of frame
    centres.
    """
    spec = np.asarray(spec)
    squeeze = spec.ndim == 2
    if squeeze:
        spec = spec[None]
    spec = check_spectrogram(spec, n_freqs=cfg.n_freqs)
    n_mics, _, n_frames = spec.shape
    window = hann(cfg.frame_len)
    frames = np.fft.irfft(spec.transpose(0, 2, 1), n=cfg.frame_len, axis=-1) * window

    total = (n_frames - 1) * cfg.frame_shift + cfg.frame_len
    out = np.zeros((n_mics, total))
    norm = np.zeros(total)
    for l in range(n_frames):
        start = l * cfg.frame_shift
        out[:, start : start + cfg.frame_len] += frames[:, l]
        norm[start : start + cfg.frame_len] += window**2
    out /= np.where(norm > 1e-10, norm, 1.0)

    if length is None:
        length = (n_frames - 1) * cfg.frame_shift
    out = out[:, cfg.pad : cfg.pad + length]
    if out.shape[1] < length:
        out = np.pad(out, ((0, 0), (0, length - out.shape[1])))
    return out[0] if squeeze else out


def spectrogram_energy(spec, cfg=StftConfig()):
    """Time-domain energy implied by a spectrogram under the interior overlap factor.

    Valid for signals that vanish within ``frame_len`` samples of either end,
    where every sample is covered by a full set of overlapping windows.
    """
    spec = np.asarray(spec)
    power = np.abs(spec) ** 2
    # one-sided -> two-sided: every bin except DC and Nyquist appears twice
    two_sided = 2.0 * power.sum() - power[..., 0, :].sum() - power[..., -1, :].sum()
    overlap = np.sum(hann(cfg.frame_len) ** 2) / cfg.frame_shift
    return two_sided / cfg.frame_len / overlap
