"""Mask-based Souden MVDR beamforming with blind analytic postfilter.

Shapes follow the spectrogram convention: observations (M, F, L), masks
(F, L), covariance matrices (F, M, M). Column ``m`` of the filter matrix
``W[f]`` is the MVDR filter that uses microphone ``m`` as reference, so
``W^H Y`` yields one candidate output per microphone.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import InvalidInputError, check_mask, check_spectrogram, hermitian


def estimate_covariances(Y, mu_x, mu_n):
    """Mask-weighted covariances ``(R_x, R_n)``, each (F, M, M), normalized by L."""
    Y = check_spectrogram(Y)
    mu_x = check_mask(mu_x, Y.shape[1:])
    mu_n = check_mask(mu_n, Y.shape[1:])
    X = Y.transpose(1, 0, 2)  # (F, M, L)
    n_frames = X.shape[-1]
    Xh = hermitian(X)
    R_x = (X * mu_x[:, None, :]) @ Xh / n_frames
    R_n = (X * mu_n[:, None, :]) @ Xh / n_frames
    return R_x, R_n


def souden_mvdr(R_x, R_n, max_cond=1e10, loading=1e-6):
    """Souden MVDR filters ``W = R_n^-1 R_x / tr(R_n^-1 R_x)`` per frequency.

    ``R_n`` is loaded with ``loading * tr(R_n) / M`` on the diagonal when its
    condition number exceeds ``max_cond``. Frequencies whose trace is at most
    1e-12 fall back to the identity (each output passes its own microphone
    through). Returns ``(W, fallback)`` with ``fallback`` a (F,) boolean flag.
    """
    R_x = np.asarray(R_x, dtype=complex)
    R_n = np.asarray(R_n, dtype=complex)
    n_mics = R_n.shape[-1]
    eye = np.eye(n_mics)
    eig = np.linalg.eigvalsh(R_n)
    cond_bad = eig[..., 0] * max_cond < eig[..., -1]
    scale = np.trace(R_n, axis1=-2, axis2=-1).real / n_mics
    load = np.where(cond_bad, loading * scale, 0.0)
    # an all-zero R_n has no scale to load relative to
    load = np.where(cond_bad & (scale <= 0), loading, load)
    R_n = R_n + load[..., None, None] * eye

    numerator = np.linalg.solve(R_n, R_x)
    trace = np.trace(numerator, axis1=-2, axis2=-1).real
    fallback = ~(trace > 1e-12)
    W = numerator / np.where(fallback, 1.0, trace)[..., None, None]
    W = np.where(fallback[..., None, None], eye, W)
    return W, fallback


def apply_beamformer(W, Y):
    """``Y_BF[m, f, l] = (W[f]^H y(f, l))_m``."""
    Y = check_spectrogram(Y)
    W = np.asarray(W)
    if W.shape != (Y.shape[1], Y.shape[0], Y.shape[0]):
        raise InvalidInputError(f"filters {W.shape} do not fit spectrogram {Y.shape}")
    return (hermitian(W) @ Y.transpose(1, 0, 2)).transpose(1, 0, 2)


def ban_gain(w, R_n, floor=1e-12):
    """Blind analytic normalization gain ``|w^H R_n^2 w|^(1/2) / (w^H R_n w)``.

    ``w`` is (F, M) and ``R_n`` is (F, M, M); returns a real (F,) gain, 1 where
    the denominator is below ``floor``.
    """
    w = np.asarray(w, dtype=complex)
    Rw = np.einsum("fmn,fn->fm", R_n, w)
    num = np.sqrt(np.abs(np.sum(Rw.conj() * Rw, axis=-1)))  # R_n Hermitian: w^H R_n^2 w = |R_n w|^2
    den = np.einsum("fm,fm->f", w.conj(), Rw).real
    hit = den < floor
    return np.where(hit, 1.0, num / np.where(hit, 1.0, den))


def ban_postfilter(w, R_n, y_bf):
    """Scale a (F, L) beamformer output by its per-frequency BAN gain."""
    return ban_gain(w, R_n)[:, None] * np.asarray(y_bf)


def post_mask(y, mu_x, floor=0.1):
    """Apply ``max(mu_x, floor)`` elementwise."""
    y = np.asarray(y)
    mu_x = check_mask(mu_x, y.shape)
    return np.maximum(mu_x, floor) * y


class SoudenMVDR(TransformerMixin, BaseEstimator):
    """Mask-based MIMO MVDR.

    ``fit(Y, target_mask)`` estimates covariances with ``mu_x = target_mask``
    and ``mu_n = 1 - target_mask``; ``transform(Y)`` returns all M
    reference-specific outputs as a (M, F, L) spectrogram.
    """

    def __init__(self, max_cond=1e10, loading=1e-6):
        self.max_cond = max_cond
        self.loading = loading

    def fit(self, Y, target_mask):
        mu_x = np.asarray(target_mask, dtype=float)
        self.R_x_, self.R_n_ = estimate_covariances(Y, mu_x, 1.0 - mu_x)
        self.filters_, self.fallback_ = souden_mvdr(self.R_x_, self.R_n_, self.max_cond,
                                                    self.loading)
        return self

    def transform(self, Y):
        check_is_fitted(self, "filters_")
        return apply_beamformer(self.filters_, Y)

    def fit_transform(self, Y, target_mask):
        return self.fit(Y, target_mask).transform(Y)
