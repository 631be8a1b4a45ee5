"""Input validation helpers shared by the estimators."""

import numpy as np


class InvalidInputError(ValueError):
    """Raised when an input array or parameter violates a documented contract."""


class NoActivityError(InvalidInputError):
    """Raised when the target talker has no active frames."""


def check_signal(signal, min_length=1):
    """Return ``signal`` as a float64 array of shape (channels, samples)."""
    signal = np.asarray(signal)
    if signal.ndim == 1:
        signal = signal[None, :]
    if signal.ndim != 2 or signal.size == 0:
        raise InvalidInputError(f"expected a (channels, samples) signal, got shape {signal.shape}")
    if np.iscomplexobj(signal):
        raise InvalidInputError("time-domain signal must be real")
    if signal.shape[1] < min_length:
        raise InvalidInputError(
            f"signal has {signal.shape[1]} samples, at least {min_length} required"
        )
    signal = signal.astype(np.float64, copy=False)
    if not np.all(np.isfinite(signal)):
        raise InvalidInputError("signal contains non-finite values")
    return signal


def check_spectrogram(spec, n_freqs=None):
    """Return ``spec`` as a complex128 array of shape (mics, freqs, frames)."""
    spec = np.asarray(spec)
    if spec.ndim != 3:
        raise InvalidInputError(f"expected a (mics, freqs, frames) spectrogram, got shape {spec.shape}")
    if n_freqs is not None and spec.shape[1] != n_freqs:
        raise InvalidInputError(f"spectrogram has {spec.shape[1]} bins, expected {n_freqs}")
    spec = spec.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(spec)):
        raise InvalidInputError("spectrogram contains non-finite values")
    return spec


def check_mask(mask, shape):
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != tuple(shape):
        raise InvalidInputError(f"mask shape {mask.shape} does not match {tuple(shape)}")
    return mask


def check_unit_interval(value, name):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise InvalidInputError(f"{name} must lie in [0, 1], got {value}")
    return value


def hermitian(x):
    """Conjugate transpose over the last two axes."""
    return np.swapaxes(x, -1, -2).conj()
