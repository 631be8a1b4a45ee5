"""MIMO weighted prediction error dereverberation.

Each frequency bin is processed independently. The late reverberation at
frame ``l`` is predicted from the frames ``l - delay, ..., l - delay - taps + 1``
of all microphones and subtracted; the prediction filter minimizes the mixed
norm sum_l ||y_out(l)||_2^p by iteratively reweighted least squares.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import InvalidInputError, check_spectrogram, hermitian


def build_delayed_stack(Y, taps, delay):
    """Multichannel convolution matrix of delayed observations.

    ``Y`` has shape (..., M, L). Row ``m * taps + k`` of the result holds
    ``Y[..., m, l - delay - k]`` (microphone-major, lag-minor), zero where the
    index falls before the first frame.
    """
    Y = np.asarray(Y)
    *lead, n_mics, n_frames = Y.shape
    if n_frames <= delay + taps:
        raise InvalidInputError(
            f"{n_frames} frames are too few for delay={delay}, taps={taps}"
        )
    stack = np.zeros((*lead, n_mics, taps, n_frames), dtype=Y.dtype)
    for k in range(taps):
        d = delay + k
        stack[..., :, k, d:] = Y[..., :, : n_frames - d]
    return stack.reshape(*lead, n_mics * taps, n_frames)


def mixed_norm_cost(Y_out, p=0.0, eps=1e-4):
    """Mixed l2/lp cost of a (M, F, L) spectrogram with an identity group matrix.

    Returns ``(per_freq, total)``. The exponent uses ``max(p, eps)`` so that
    ``p = 0`` does not collapse the cost to a frame count.
    """
    Y_out = np.asarray(Y_out)
    p_eff = max(float(p), eps)
    power = np.sum(np.abs(Y_out) ** 2, axis=0)  # (F, L)
    per_freq = np.sum(power ** (p_eff / 2.0), axis=-1)
    return per_freq, float(per_freq.sum())


def _irls_weights(power, p, eps_weight):
    return np.maximum(power, eps_weight) ** ((p - 2.0) / 2.0)


def _solve_normal_equations(R, P):
    """Solve R G = P per frequency, loading singular systems on the diagonal.

    Returns the solution and the number of frequencies that needed loading.
    """
    try:
        np.linalg.cholesky(R)
        return np.linalg.solve(R, P), 0
    except np.linalg.LinAlgError:
        pass
    n = R.shape[-1]
    R = R.copy()
    loaded = 0
    for f in range(R.shape[0]):
        try:
            np.linalg.cholesky(R[f])
        except np.linalg.LinAlgError:
            load = 1e-10 * np.trace(R[f]).real / n
            R[f] += (load if load > 0 else 1.0) * np.eye(n)
            loaded += 1
    return np.linalg.solve(R, P), loaded


def wpe_filter(Y, taps=5, delay=2, iterations=3, p=0.0, eps_weight=1e-10, cost_eps=1e-4):
    """Run IRLS and return ``(Y_out, G, cost_history, n_loaded)``.

    ``Y`` and ``Y_out`` are (M, F, L); ``G`` is (F, M * taps, M) and
    ``cost_history`` is (iterations + 1, F), starting with the input's cost.
    """
    Y = check_spectrogram(Y)
    X = Y.transpose(1, 0, 2)  # (F, M, L)
    stack = build_delayed_stack(X, taps, delay)
    stack_h = hermitian(stack)
    out = X
    history = [mixed_norm_cost(Y, p, cost_eps)[0]]
    n_loaded = 0
    G = np.zeros((X.shape[0], stack.shape[1], X.shape[1]), dtype=complex)
    for _ in range(iterations):
        power = np.sum(out.real**2 + out.imag**2, axis=1)  # (F, L)
        weighted = stack * _irls_weights(power, p, eps_weight)[:, None, :]
        R = weighted @ stack_h
        P = weighted @ hermitian(X)
        G, loaded = _solve_normal_equations(R, P)
        n_loaded += loaded
        out = X - hermitian(G) @ stack
        history.append(mixed_norm_cost(out.transpose(1, 0, 2), p, cost_eps)[0])
    return np.ascontiguousarray(out.transpose(1, 0, 2)), G, np.array(history), n_loaded


class WPE(TransformerMixin, BaseEstimator):
    """Weighted prediction error dereverberation as a transformer.

    ``fit`` estimates one prediction filter per frequency from a (M, F, L)
    spectrogram; ``transform`` subtracts the predicted late reverberation
    using those filters.

    Parameters
    ----------
    taps : int
        Filter length in frames.
    delay : int
        Prediction delay in frames.
    iterations : int
        Number of IRLS iterations; no early stopping.
    p : float
        Sparsity parameter of the mixed-norm cost, in [0, 2].
    eps_weight : float
        Floor on frame powers before they are turned into weights.
    """

    def __init__(self, taps=5, delay=2, iterations=3, p=0.0, eps_weight=1e-10):
        self.taps = taps
        self.delay = delay
        self.iterations = iterations
        self.p = p
        self.eps_weight = eps_weight

    def _check_params(self):
        if self.taps < 1 or self.delay < 1 or self.iterations < 1:
            raise InvalidInputError("taps, delay and iterations must all be >= 1")
        if not 0.0 <= self.p <= 2.0:
            raise InvalidInputError(f"p must lie in [0, 2], got {self.p}")

    def fit(self, Y, y=None):
        self.fit_transform(Y)
        return self

    def fit_transform(self, Y, y=None):
        self._check_params()
        out, G, history, n_loaded = wpe_filter(
            Y, self.taps, self.delay, self.iterations, self.p, self.eps_weight
        )
        self.filters_ = G
        self.cost_history_ = history
        self.n_loaded_ = n_loaded
        self.n_mics_ = out.shape[0]
        return out

    def transform(self, Y):
        check_is_fitted(self, "filters_")
        Y = check_spectrogram(Y, n_freqs=self.filters_.shape[0])
        if Y.shape[0] != self.n_mics_:
            raise InvalidInputError(f"fitted on {self.n_mics_} microphones, got {Y.shape[0]}")
        return Y - self.prediction(Y)

    def prediction(self, Y):
        """Predicted late reverberation ``G^H Y_tilde`` as a (M, F, L) array."""
        check_is_fitted(self, "filters_")
        X = np.asarray(Y).transpose(1, 0, 2)
        stack = build_delayed_stack(X, self.taps, self.delay)
        return (hermitian(self.filters_) @ stack).transpose(1, 0, 2)
