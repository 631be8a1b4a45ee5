"""Reference microphone selection over the outputs of a MIMO beamformer.

Three criteria pick one of the M reference-specific outputs:

* ``snr``: highest estimated broadband output SNR.
* ``lp``: lowest normalized lp-norm, i.e. the sparsest output. Per frequency
  the frame sequence is divided by its l2 norm and its lp norm is taken with
  ``p_eff = max(p, eps)``; the terms are summed over frequency.
* ``comb``: argmin of ``alpha * lp~ + (1 - alpha) * nsr~``, where ``~`` is
  min-max scaling across microphones and ``nsr = 1 / snr``.

With ``p_eff = 1e-4`` every per-frequency term is of order ``L ** 1e4`` and
overflows a double. Scores are therefore carried as natural logs of the exact
sum; min-max scaling of the linear values is done from log differences, which
keeps the selections identical to the linear-domain formula.
"""

from dataclasses import dataclass, field, asdict
import math
import warnings

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from ._validation import InvalidInputError, check_unit_interval, hermitian

METHODS = ("snr", "lp", "comb")
LINEAR_CAP = 1e300


@dataclass(frozen=True)
class LpConfig:
    p: float = 0.0
    eps: float = 1e-4

    def __post_init__(self):
        if self.eps <= 0:
            raise InvalidInputError("eps must be positive")

    @property
    def p_eff(self):
        return max(self.p, self.eps)


def _check_psd(R, name, tol=1e-8):
    R = np.asarray(R, dtype=complex)
    scale = np.maximum(np.abs(np.trace(R, axis1=-2, axis2=-1)), 1e-300)
    if np.max(np.abs(R - hermitian(R)) / scale[..., None, None]) > tol:
        raise InvalidInputError(f"{name} is not Hermitian")
    if np.any(np.linalg.eigvalsh(R)[..., 0] < -tol * scale):
        raise InvalidInputError(f"{name} is not positive semidefinite")
    return R


def quadratic_forms(W, R):
    """``w_m(f)^H R(f) w_m(f)`` for every f and m, as a (F, M) array."""
    W = np.asarray(W)
    q = np.sum(W.conj() * (R @ W), axis=-2)
    scale = np.maximum(np.abs(q), 1e-300)
    if np.any(np.abs(q.imag) > 1e-8 * scale + 1e-300):
        raise InvalidInputError("quadratic form has a non-negligible imaginary part")
    return q.real


def estimated_snr(W, R_x, R_n, m=None):
    """Broadband output SNR of each reference-specific filter.

    Ratio of frequency-summed quadratic forms. A non-positive denominator
    gives ``inf`` and a warning. Returns the value for microphone ``m`` if
    given, else an (M,) array.
    """
    R_x = _check_psd(R_x, "R_x")
    R_n = _check_psd(R_n, "R_n")
    signal = quadratic_forms(W, R_x).sum(axis=0)
    noise = quadratic_forms(W, R_n).sum(axis=0)
    bad = noise <= 0
    if np.any(bad):
        warnings.warn("non-positive output noise power; SNR set to inf", RuntimeWarning)
    snr = np.where(bad, np.inf, signal / np.where(bad, 1.0, noise))
    return snr if m is None else float(snr[m])


def select_by_snr(snr):
    """Index of the highest SNR; ties go to the lowest index."""
    return int(np.argmax(np.asarray(snr, dtype=float)))


def lp_terms(y, cfg=LpConfig()):
    """Per-frequency ``log rho(f)`` of a (F, L) output, plus the count of silent rows.

    Silent rows are returned as ``-inf`` (they contribute nothing to the sum).
    """
    y = np.atleast_2d(np.asarray(y))
    p = cfg.p_eff
    mag = np.abs(y)
    norm = np.sqrt(np.sum(mag**2, axis=-1, keepdims=True))
    silent = norm[..., 0] == 0
    with np.errstate(divide="ignore"):
        log_mag = np.log(mag) - np.log(np.where(silent[..., None], 1.0, norm))
    # zero entries have |y|^p = 0 for p > 0, i.e. log-term -inf
    log_rho = logsumexp(p * log_mag, axis=-1) / p
    log_rho = np.where(silent, -np.inf, log_rho)
    return log_rho, int(silent.sum())


def log_normalized_lp(y, cfg=LpConfig()):
    """Natural log of the normalized lp-norm of a (F, L) output; exact, never overflows."""
    log_rho, _ = lp_terms(y, cfg)
    if np.all(np.isneginf(log_rho)):
        return -np.inf
    return float(logsumexp(log_rho))


def normalized_lp(y, cfg=LpConfig()):
    """Normalized lp-norm in the linear domain.

    Each per-frequency term is capped at 1e300, so for tiny ``p_eff`` this
    value saturates; use :func:`log_normalized_lp` to compare microphones.
    """
    log_rho, _ = lp_terms(y, cfg)
    rho = np.exp(np.minimum(log_rho, math.log(LINEAR_CAP)))
    return float(np.sum(rho))


def log_domain_lp_diagnostic(y, cfg=LpConfig()):
    """Sum over non-silent frequencies of ``log rho(f)``."""
    log_rho, _ = lp_terms(y, cfg)
    return float(np.sum(log_rho[np.isfinite(log_rho)]))


def select_by_lp(lp):
    """Index of the lowest normalized lp-norm (linear or log); ties go to the lowest index."""
    return int(np.argmin(np.asarray(lp, dtype=float)))


def minmax_normalize(values):
    """Scale to [0, 1] across microphones; all-equal input maps to zeros."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise InvalidInputError("min-max normalization needs at least two values")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def minmax_normalize_log(log_values):
    """Min-max scaling of ``exp(log_values)`` computed without leaving the log domain."""
    lv = np.asarray(log_values, dtype=float)
    if lv.ndim != 1 or lv.size < 2:
        raise InvalidInputError("min-max normalization needs at least two values")
    lo, hi = lv.min(), lv.max()
    if hi == lo:
        return np.zeros_like(lv)
    if np.isneginf(lo):
        # a silent output has linear value 0
        return np.exp(lv - hi)
    # (e^v - e^lo) / (e^hi - e^lo) = e^(lo-hi) * expm1(v - lo) / -expm1(lo - hi)
    return np.exp(lo - hi) * np.expm1(lv - lo) / -np.expm1(lo - hi)


@dataclass
class SelectionScores:
    snr: np.ndarray
    nsr: np.ndarray
    log_lp: np.ndarray
    scaled_nsr: np.ndarray
    scaled_lp: np.ndarray
    alpha: float
    combined: np.ndarray
    chosen: int
    method: str = "comb"
    silent_rows: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = [float(x) for x in v]
        return d


def select_combined(nsr, log_lp, alpha=0.5):
    """Combined selection from per-mic NSR and log normalized lp-norm.

    ``log_lp`` holds natural logs of the normalized lp-norms; the min-max
    scaling is applied to the linear values.
    """
    alpha = check_unit_interval(alpha, "alpha")
    nsr = np.asarray(nsr, dtype=float)
    log_lp = np.asarray(log_lp, dtype=float)
    if nsr.size == 1:
        zero = np.zeros(1)
        return SelectionScores(1 / nsr, nsr, log_lp, zero, zero, alpha, zero, 0)
    s_nsr = minmax_normalize(nsr)
    s_lp = minmax_normalize_log(log_lp)
    combined = alpha * s_lp + (1.0 - alpha) * s_nsr
    with np.errstate(divide="ignore"):
        snr = 1.0 / nsr
    return SelectionScores(snr, nsr, log_lp, s_nsr, s_lp, alpha, combined,
                           int(np.argmin(combined)))


def score_outputs(Y_bf, W, R_x, R_n, cfg=LpConfig(), alpha=0.5):
    """Evaluate every criterion on (M, F, L) beamformer outputs."""
    Y_bf = np.asarray(Y_bf)
    snr = estimated_snr(W, R_x, R_n)
    with np.errstate(divide="ignore"):
        nsr = 1.0 / snr
    terms = [lp_terms(Y_bf[m], cfg) for m in range(Y_bf.shape[0])]
    log_lp = np.array([float(logsumexp(t)) if np.isfinite(t).any() else -np.inf for t, _ in terms])
    scores = select_combined(nsr, log_lp, alpha)
    scores.snr = snr
    scores.silent_rows = [n for _, n in terms]
    return scores


def choose(scores, method, alpha=None):
    """Reference index for ``method`` given precomputed scores."""
    if method == "snr":
        return select_by_snr(scores.snr)
    if method == "lp":
        return select_by_lp(scores.log_lp)
    if method == "comb":
        if alpha is None or alpha == scores.alpha:
            return int(np.argmin(scores.combined))
        return select_combined(scores.nsr, scores.log_lp, alpha).chosen
    raise InvalidInputError(f"unknown selection method {method!r}; expected one of {METHODS}")


class ReferenceSelector(BaseEstimator):
    """Pick the reference output of a MIMO beamformer.

    ``fit(Y_bf, W, R_x, R_n)`` scores all outputs and stores the chosen
    index in ``reference_`` and the full :class:`SelectionScores` in
    ``scores_``. A single-output beamformer always selects output 0.
    """

    def __init__(self, method="comb", alpha=0.5, p=0.0, eps=1e-4):
        self.method = method
        self.alpha = alpha
        self.p = p
        self.eps = eps

    def fit(self, Y_bf, W, R_x, R_n):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown selection method {self.method!r}")
        check_unit_interval(self.alpha, "alpha")
        self.scores_ = score_outputs(Y_bf, W, R_x, R_n, LpConfig(self.p, self.eps), self.alpha)
        self.scores_.method = self.method
        if np.asarray(Y_bf).shape[0] == 1:
            self.reference_ = 0
        else:
            self.reference_ = choose(self.scores_, self.method, self.alpha)
        self.scores_.chosen = self.reference_
        return self
