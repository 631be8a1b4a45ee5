"""End-to-end GSS enhancement: WPE -> guided masks -> MVDR -> selection -> postfilter.

The expensive stages do not depend on the selection criterion, so
:func:`process_mixture` runs them once and returns every intermediate; the
selection and the final single-channel output are derived from that result.
"""

from dataclasses import asdict, dataclass, field, fields, is_dataclass
import warnings

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import InvalidInputError, NoActivityError, check_signal, check_unit_interval
from .beamformer import SoudenMVDR, ban_postfilter, post_mask
from .gss import GuidedCACGMM, activity_from_segments, check_activity, target_noise_masks
from .refmic import METHODS, LpConfig, choose, score_outputs
from .stft import StftConfig, analyze, synthesize
from .wpe import WPE


@dataclass(frozen=True)
class WpeConfig:
    taps: int = 5
    delay: int = 2
    iterations: int = 3
    p: float = 0.0
    eps_weight: float = 1e-10


@dataclass(frozen=True)
class GssConfig:
    iterations: int = 5


@dataclass(frozen=True)
class BeamformerConfig:
    post_mask_floor: float = 0.1
    max_cond: float = 1e10
    loading: float = 1e-6


@dataclass(frozen=True)
class RefmicConfig:
    p: float = 0.0
    eps: float = 1e-4


@dataclass(frozen=True)
class SimulationConfig:
    scenes: int = 100
    snr_db: float = 10.0
    seed: int = 1
    duration: float = 10.0
    write_components: bool = False


@dataclass(frozen=True)
class EvalConfig:
    methods: tuple = ("snr", "lp", "comb")
    alphas: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class PipelineConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    wpe: WpeConfig = field(default_factory=WpeConfig)
    gss: GssConfig = field(default_factory=GssConfig)
    beamformer: BeamformerConfig = field(default_factory=BeamformerConfig)
    refmic: RefmicConfig = field(default_factory=RefmicConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    method: str = "comb"
    alpha: float = 0.5

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"method must be one of {METHODS}, got {self.method!r}")
        check_unit_interval(self.alpha, "alpha")
        for a in self.eval.alphas:
            check_unit_interval(a, "alpha")
        for m in self.eval.methods:
            if m not in METHODS:
                raise InvalidInputError(f"unknown method {m!r} in eval.methods")

    def to_dict(self):
        return _jsonable(asdict(self))

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d or {})

    def replace(self, **changes):
        d = self.to_dict()
        for key, value in changes.items():
            section, _, name = key.rpartition(".")
            (d[section] if section else d)[name] = value
        return PipelineConfig.from_dict(d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _from_dict(cls, d):
    if not isinstance(d, dict):
        raise InvalidInputError(f"{cls.__name__} section must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(d) - set(known)
    if unknown:
        raise InvalidInputError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in d.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        if is_dataclass(default):
            kwargs[name] = _from_dict(type(default), value)
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidInputError(str(exc)) from exc


@dataclass
class PipelineResult:
    """Everything the selection criteria and the final output need."""

    Y: np.ndarray
    Y_wpe: np.ndarray
    masks: np.ndarray
    mu_x: np.ndarray
    R_x: np.ndarray
    R_n: np.ndarray
    W: np.ndarray
    Y_bf: np.ndarray
    scores: object
    n_samples: int
    diagnostics: dict


def _fallback_masks(activity):
    # with one microphone the angular model carries no information and the
    # posterior reduces to the gated uniform prior
    gate = activity.astype(float)
    return gate / gate.sum(axis=0, keepdims=True)


def process_mixture(signal, activity, cfg=PipelineConfig(), target_class=0):
    """Run the criterion-independent stages on a (M, N) time signal.

    ``activity`` is a (K + 1, L) frame grid whose last row is the background
    class; ``target_class`` indexes the talker to enhance.
    """
    signal = check_signal(signal, min_length=cfg.stft.frame_len)
    Y = analyze(signal, cfg.stft)
    activity = check_activity(activity, Y.shape[-1])
    if not activity[target_class].any():
        raise NoActivityError("target talker is never active")
    w = cfg.wpe
    wpe = WPE(w.taps, w.delay, w.iterations, w.p, w.eps_weight)
    Y_wpe = wpe.fit_transform(Y)

    n_mics = Y.shape[0]
    if n_mics >= 2:
        gss = GuidedCACGMM(cfg.gss.iterations).fit(Y_wpe, activity)
        masks = gss.posteriors_
        ll = gss.log_likelihood_.tolist()
    else:
        masks = np.broadcast_to(_fallback_masks(activity)[:, None, :],
                                (activity.shape[0], *Y.shape[1:])).copy()
        ll = []
    mu_x, _ = target_noise_masks(masks, target_class)

    bf = SoudenMVDR(cfg.beamformer.max_cond, cfg.beamformer.loading)
    Y_bf = bf.fit_transform(Y_wpe, mu_x)
    scores = score_outputs(Y_bf, bf.filters_, bf.R_x_, bf.R_n_,
                           LpConfig(cfg.refmic.p, cfg.refmic.eps), cfg.alpha)
    diagnostics = {
        "wpe_loaded_bins": wpe.n_loaded_,
        "gss_log_likelihood": ll,
        "mvdr_fallback_bins": int(bf.fallback_.sum()),
        "lp_silent_rows": scores.silent_rows,
    }
    return PipelineResult(Y, Y_wpe, masks, mu_x, bf.R_x_, bf.R_n_, bf.filters_, Y_bf, scores,
                          signal.shape[1], diagnostics)


def select_reference(result, method="comb", alpha=0.5):
    if result.Y.shape[0] == 1:
        return 0
    return choose(result.scores, method, alpha)


def render_output(result, reference, cfg=PipelineConfig()):
    """Postfilter and post-mask the chosen output, then return it in the time domain."""
    y = ban_postfilter(result.W[:, :, reference], result.R_n, result.Y_bf[reference])
    y = post_mask(y, result.mu_x, cfg.beamformer.post_mask_floor)
    return synthesize(y, cfg.stft, length=result.n_samples)


class GSSEnhancer(BaseEstimator):
    """Single-talker GSS enhancement of a multichannel recording.

    ``fit(X, activity)`` runs the whole pipeline on a (M, N) signal and keeps
    the chosen reference in ``reference_`` and the per-microphone scores in
    ``scores_``; ``fit_transform`` also returns the enhanced mono signal.
    """

    def __init__(self, method="comb", alpha=0.5, target_class=0, config=None):
        self.method = method
        self.alpha = alpha
        self.target_class = target_class
        self.config = config

    def _config(self):
        base = self.config or PipelineConfig()
        return base.replace(method=self.method, alpha=self.alpha)

    def fit(self, X, activity):
        cfg = self._config()
        self.result_ = process_mixture(X, activity, cfg, self.target_class)
        if self.result_.Y.shape[0] == 1:
            warnings.warn("single-channel input: reference selection skipped", UserWarning)
        self.reference_ = select_reference(self.result_, cfg.method, cfg.alpha)
        self.scores_ = self.result_.scores
        return self

    def transform(self, X=None):
        """Enhanced output of the fitted recording."""
        check_is_fitted(self, "result_")
        return render_output(self.result_, self.reference_, self._config())

    def fit_transform(self, X, activity):
        return self.fit(X, activity).transform()

    def fit_segments(self, X, segments, target="0", sources=None, sample_rate=None):
        """Fit from diarization segments instead of a frame grid."""
        cfg = self._config()
        X = check_signal(X)
        sources = list(sources) if sources is not None else sorted({str(s) for s, *_ in segments})
        if str(target) not in sources:
            raise NoActivityError(f"target {target!r} has no segments")
        activity = activity_from_segments(
            segments, sources, cfg.stft.n_frames(X.shape[1]), cfg.stft.frame_len,
            cfg.stft.frame_shift, sample_rate or cfg.stft.sample_rate,
        )
        self.target_class = sources.index(str(target))
        return self.fit(X, activity)
