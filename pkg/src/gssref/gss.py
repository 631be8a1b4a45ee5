"""Guided source separation: activity-gated cACGMM mask estimation.

Observations are unit-norm microphone vectors per time-frequency bin. Each
class (K talkers plus a background class that is always active) is a complex
angular central Gaussian with concentration matrix ``B_k`` and a
frequency-dependent prior. Diarization activity zeroes the posterior of
inactive classes, which also fixes the class permutation, so every class
starts from ``B_k = I`` and uniform priors without random restarts.
"""

import math

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import InvalidInputError, check_spectrogram, hermitian


def normalize_observations(Y, axis=0):
    """Divide every microphone vector by its l2 norm.

    Returns ``(unit, valid)`` where ``valid`` flags the vectors that were
    nonzero; zero vectors stay zero and should be left out of statistics.
    """
    Y = np.asarray(Y, dtype=complex)
    norm = np.sqrt(np.sum(Y.real**2 + Y.imag**2, axis=axis, keepdims=True))
    valid = norm > 0
    unit = Y / np.where(valid, norm, 1.0)
    return unit, np.squeeze(valid, axis=axis)


def activity_grid(source_activity):
    """Append the always-active background row to a (K, L) activity matrix."""
    a = np.atleast_2d(np.asarray(source_activity, dtype=bool))
    return np.vstack([a, np.ones((1, a.shape[1]), dtype=bool)])


def check_activity(activity, n_frames):
    activity = np.asarray(activity, dtype=bool)
    if activity.ndim != 2 or activity.shape[1] != n_frames:
        raise InvalidInputError(f"activity must be (classes, {n_frames}), got {activity.shape}")
    if activity.shape[0] < 2:
        raise InvalidInputError("at least one talker plus the background class is required")
    if not activity[-1].all():
        raise InvalidInputError("the last (background) class must be active in every frame")
    return activity


def _log_norm_const(n_mics):
    # log of pi^-M (M-1)! / 2
    return math.lgamma(n_mics) - n_mics * math.log(math.pi) - math.log(2.0)


def _inverse_and_logdet(B, max_cond=1e10, loading=1e-6):
    w, V = np.linalg.eigh(B)
    near_singular = w[..., :1] < w[..., -1:] / max_cond
    w = np.where(near_singular, w + loading, w)
    w = np.maximum(w, np.finfo(float).tiny)
    inv = (V / w[..., None, :]) @ hermitian(V)
    return inv, np.sum(np.log(w), axis=-1)


def _e_step(Z, valid, log_gate, log_prior, B):
    """Posteriors (F, C, L) and per-bin log-likelihood (F, L)."""
    n_mics = Z.shape[-1]
    B_inv, logdet = _inverse_and_logdet(B)
    # quad[f, c, l] = z^H B_c^-1 z
    Zc = Z.conj()
    quad = np.stack(
        [np.sum((Zc @ B_inv[:, c]) * Z, axis=-1).real for c in range(B.shape[1])], axis=1
    )
    quad = np.maximum(quad, np.finfo(float).tiny)
    log_acg = _log_norm_const(n_mics) - logdet[..., None] - n_mics * np.log(quad)
    log_pi = log_prior[:, :, None] + log_gate[None]  # (F, C, L)
    log_norm = logsumexp(log_pi, axis=1)  # (F, L)
    joint = log_pi + log_acg
    log_evidence = logsumexp(joint, axis=1)
    post = np.exp(joint - log_evidence[:, None])
    # excluded bins carry no data: fall back to the gated prior
    prior_post = np.exp(log_pi - log_norm[:, None])
    post = np.where(valid[:, None, :], post, prior_post)
    return post, log_evidence - log_norm, quad, log_norm


def _m_step(Z, valid, gamma, quad, log_norm, gate, prior, B):
    n_mics = Z.shape[-1]
    g = gamma * valid[:, None, :]
    mass = g.sum(axis=-1)  # (F, C)
    # prior: minorize-maximize step for the gated prior; equals the
    # frame average over active frames when every class is always active
    inv_norm = np.exp(-log_norm) * valid
    denom = np.einsum("cl,fl->fc", gate, inv_norm)
    update = (mass > 1e-12) & (denom > 0)
    new_prior = np.where(update, mass / np.where(denom > 0, denom, 1.0), prior)
    new_prior = np.maximum(new_prior, 1e-12)
    new_prior /= new_prior.sum(axis=1, keepdims=True)

    w = g / quad  # (F, C, L)
    Zt = np.swapaxes(Z, -1, -2)  # (F, M, L)
    Zc = Z.conj()
    cov = np.stack([(Zt * w[:, c, None, :]) @ Zc for c in range(w.shape[1])], axis=1)
    cov = n_mics * cov / np.maximum(mass, 1e-300)[..., None, None]
    cov = 0.5 * (cov + hermitian(cov))
    trace = np.trace(cov, axis1=-2, axis2=-1).real
    ok = update & (trace > 0)
    cov = cov * (n_mics / np.where(ok, trace, 1.0))[..., None, None]
    new_B = np.where(ok[..., None, None], cov, B)
    return new_prior, new_B


def cacgmm_em(Z, valid, activity, iterations=5):
    """Guided EM on unit vectors ``Z`` of shape (F, L, M).

    Runs exactly ``iterations`` E/M rounds followed by a final E-step and
    returns ``(posteriors, priors, B, log_likelihood)``. ``posteriors`` is
    (C, F, L); ``log_likelihood`` holds the average log-likelihood over valid
    bins at each of the ``iterations + 1`` E-steps.
    """
    n_freqs, n_frames, n_mics = Z.shape
    if n_mics < 2:
        raise InvalidInputError("cACGMM needs at least two microphones")
    activity = check_activity(activity, n_frames)
    n_classes = activity.shape[0]
    gate = activity.astype(float)
    with np.errstate(divide="ignore"):
        log_gate = np.log(gate)

    prior = np.full((n_freqs, n_classes), 1.0 / n_classes)
    B = np.broadcast_to(np.eye(n_mics, dtype=complex), (n_freqs, n_classes, n_mics, n_mics)).copy()
    n_valid = max(int(valid.sum()), 1)
    history = []
    for i in range(iterations + 1):
        gamma, log_lik, quad, log_norm = _e_step(Z, valid, log_gate, np.log(prior), B)
        history.append(float(np.sum(log_lik * valid) / n_valid))
        if i == iterations:
            break
        prior, B = _m_step(Z, valid, gamma, quad, log_norm, gate, prior, B)
    return gamma.transpose(1, 0, 2), prior, B, np.array(history)


def target_noise_masks(masks, target_class=0):
    """Target mask and its complement, which gathers every other class."""
    masks = np.asarray(masks)
    if not 0 <= target_class < masks.shape[0] - 1:
        raise InvalidInputError(f"target_class {target_class} is not a talker class")
    mu_x = masks[target_class]
    return mu_x, 1.0 - mu_x


class GuidedCACGMM(BaseEstimator):
    """Activity-guided cACGMM over a (M, F, L) spectrogram.

    ``fit(Y, activity)`` takes a (K + 1, L) boolean activity grid whose last
    row is the background class and must be all ones.

    Attributes
    ----------
    posteriors_ : ndarray (K + 1, F, L)
        Class posteriors after the final E-step; these are the masks.
    priors_ : ndarray (F, K + 1)
    concentrations_ : ndarray (F, K + 1, M, M)
        Hermitian, trace-normalized to M.
    log_likelihood_ : ndarray (iterations + 1,)
    """

    def __init__(self, iterations=5):
        self.iterations = iterations

    def fit(self, Y, activity):
        Y = check_spectrogram(Y)
        if self.iterations < 1:
            raise InvalidInputError("iterations must be >= 1")
        unit, valid = normalize_observations(Y, axis=0)
        Z = unit.transpose(1, 2, 0)  # (F, L, M)
        post, prior, B, ll = cacgmm_em(Z, valid, activity, self.iterations)
        self.posteriors_ = post
        self.priors_ = prior
        self.concentrations_ = B
        self.log_likelihood_ = ll
        self.n_excluded_ = int(valid.size - valid.sum())
        return self

    def fit_predict_proba(self, Y, activity):
        return self.fit(Y, activity).posteriors_

    def predict_proba(self, Y, activity):
        """Posteriors of new data under the fitted model."""
        check_is_fitted(self, "concentrations_")
        Y = check_spectrogram(Y)
        unit, valid = normalize_observations(Y, axis=0)
        activity = check_activity(activity, Y.shape[-1])
        with np.errstate(divide="ignore"):
            log_gate = np.log(activity.astype(float))
        post, *_ = _e_step(unit.transpose(1, 2, 0), valid, log_gate, np.log(self.priors_),
                           self.concentrations_)
        return post.transpose(1, 0, 2)


def activity_from_segments(segments, source_ids, n_frames, frame_len, frame_shift, sample_rate):
    """Rasterize (source, start_s, end_s) segments to a frame activity grid.

    Frame ``l`` spans ``[l * shift - frame_len / 2, l * shift + frame_len / 2)``
    samples (centred frames) and is active for a source when at least half of
    it is covered by that source's segments. The background row is appended.
    """
    source_ids = [str(s) for s in source_ids]
    total = (n_frames - 1) * frame_shift + frame_len
    coverage = np.zeros((len(source_ids), total), dtype=bool)
    half = frame_len // 2
    for sid, start, end in segments:
        if str(sid) not in source_ids:
            continue
        k = source_ids.index(str(sid))
        a = max(int(round(start * sample_rate)) + half, 0)
        b = min(int(round(end * sample_rate)) + half, total)
        coverage[k, a:b] = True
    counts = np.cumsum(np.pad(coverage, ((0, 0), (1, 0))), axis=1)
    starts = np.arange(n_frames) * frame_shift
    covered = counts[:, starts + frame_len] - counts[:, starts]
    return activity_grid(covered * 2 >= frame_len)
