"""Batch comparison of reference selection criteria on simulated scenes.

For each scene the pipeline runs once; every selection method is then a pure
function of the shared scores. Reports carry the per-scene records, so the
means in a report can always be recomputed from the same document.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import jsonschema
import numpy as np
from joblib import Parallel, delayed

from ._validation import InvalidInputError, check_unit_interval
from .gss import activity_from_segments
from .io import dump_json
from .pipeline import PipelineConfig, process_mixture
from .refmic import METHODS, choose
from .scene import ielr_db

SCHEMA_VERSION = "1.0"
FORMATS = ("json", "csv", "sweep-csv")

_NUM = {"type": ["number", "null"]}
_PER_METHOD_NUM = {"type": "object", "additionalProperties": _NUM}
REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "methods", "alpha", "n_scenes", "means", "agreement",
                 "alpha_sweep", "scenes", "failures", "config"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "methods": {"type": "array", "minItems": 1, "items": {"enum": list(METHODS)}},
        "alpha": {"type": "number", "minimum": 0, "maximum": 1},
        "n_scenes": {"type": "integer", "minimum": 0},
        "means": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["osnr_db", "ielr_db"],
                "properties": {"osnr_db": _NUM, "ielr_db": _NUM},
            },
        },
        "agreement": {
            "type": "object",
            "required": ["methods", "matrix"],
            "properties": {
                "methods": {"type": "array", "items": {"type": "string"}},
                "matrix": {"type": "array", "items": {"type": "array", "items": _NUM}},
            },
        },
        "alpha_sweep": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["alpha", "osnr_db", "ielr_db"],
                "properties": {"alpha": {"type": "number"}, "osnr_db": _NUM, "ielr_db": _NUM},
            },
        },
        "scenes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["scene_id", "chosen", "osnr_db", "ielr_db", "snr_db_per_mic",
                             "log_lp_per_mic", "true_ielr_db_per_mic"],
                "properties": {
                    "scene_id": {"type": "string"},
                    "chosen": {"type": "object", "additionalProperties": {"type": "integer"}},
                    "osnr_db": _PER_METHOD_NUM,
                    "ielr_db": _PER_METHOD_NUM,
                    "snr_db_per_mic": {"type": "array", "items": _NUM},
                    "log_lp_per_mic": {"type": "array", "items": _NUM},
                    "true_ielr_db_per_mic": {"type": "array", "items": _NUM},
                },
            },
        },
        "failures": {
            "type": "array",
            "items": {"type": "object", "required": ["scene_id", "error"]},
        },
        "config": {"type": "object"},
    },
}


def compute_ielr(truth, mic):
    """Input early-to-late ratio in dB at microphone ``mic`` of a :class:`SceneTruth`."""
    if not 0 <= mic < truth.n_mics:
        raise InvalidInputError(f"mic {mic} out of range for {truth.n_mics} microphones")
    return ielr_db(truth.x_early[mic], truth.x_late[mic])


def _db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass
class SceneResult:
    scene_id: str
    chosen: dict
    osnr_db: dict
    ielr_db: dict
    snr_db_per_mic: list
    log_lp_per_mic: list
    true_ielr_db_per_mic: list
    # comb choice and statistics per alpha of the sweep
    sweep: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "scene_id": self.scene_id,
            "chosen": dict(self.chosen),
            "osnr_db": _clean(self.osnr_db),
            "ielr_db": _clean(self.ielr_db),
            "snr_db_per_mic": _clean(self.snr_db_per_mic),
            "log_lp_per_mic": _clean(self.log_lp_per_mic),
            "true_ielr_db_per_mic": _clean(self.true_ielr_db_per_mic),
        }


def _clean(obj):
    """JSON-safe copy: numpy scalars to float, non-finite values to null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    v = float(obj)
    return v if math.isfinite(v) else None


def _mean(values):
    values = [v for v in values if math.isfinite(v)]
    return float(np.mean(values)) if values else float("nan")


@dataclass
class BatchReport:
    methods: list
    alpha: float
    scenes: list
    alphas: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def n_scenes(self):
        return len(self.scenes)

    def mean(self, method, stat):
        if stat not in ("osnr_db", "ielr_db"):
            raise InvalidInputError(f"unknown statistic {stat!r}")
        return _mean([getattr(s, stat)[method] for s in self.scenes])

    @property
    def means(self):
        return {m: {"osnr_db": self.mean(m, "osnr_db"), "ielr_db": self.mean(m, "ielr_db")}
                for m in self.methods}

    @property
    def agreement(self):
        """Fraction of scenes in which two methods pick the same microphone."""
        k = len(self.methods)
        mat = np.eye(k)
        for i in range(k):
            for j in range(i + 1, k):
                same = [s.chosen[self.methods[i]] == s.chosen[self.methods[j]] for s in self.scenes]
                mat[i, j] = mat[j, i] = float(np.mean(same)) if same else float("nan")
        return mat

    @property
    def sweep_table(self):
        rows = []
        for a in self.alphas:
            key = _alpha_key(a)
            rows.append({
                "alpha": float(a),
                "osnr_db": _mean([s.sweep[key]["osnr_db"] for s in self.scenes]),
                "ielr_db": _mean([s.sweep[key]["ielr_db"] for s in self.scenes]),
            })
        return rows

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "methods": list(self.methods),
            "alpha": float(self.alpha),
            "n_scenes": self.n_scenes,
            "means": _clean(self.means),
            "agreement": {"methods": list(self.methods), "matrix": _clean(self.agreement)},
            "alpha_sweep": [_clean(r) for r in self.sweep_table],
            "scenes": [s.to_dict() for s in self.scenes],
            "failures": [dict(f) for f in self.failures],
            "config": self.config,
        }


def _alpha_key(alpha):
    return repr(float(alpha))


def scene_activity(scene, cfg, target="0"):
    """Oracle activity grid and target row index from a scene's segment list."""
    n_frames = cfg.stft.n_frames(scene.mixture.shape[1])
    sources = sorted({str(s) for s, *_ in scene.segments} | {str(target)})
    grid = activity_from_segments(scene.segments, sources, n_frames, cfg.stft.frame_len,
                                  cfg.stft.frame_shift, scene.sample_rate)
    return grid, sources.index(str(target))


def evaluate_scene(scene, methods, cfg, alphas=()):
    """Run the pipeline once on a scene and score every method and sweep alpha."""
    activity, target = scene_activity(scene, cfg)
    result = process_mixture(scene.mixture, activity, cfg, target)
    scores = result.scores
    true_ielr = np.asarray(scene.true_ielr_db, dtype=float)
    osnr = _db(scores.snr)

    def stats(idx):
        return {"osnr_db": float(osnr[idx]), "ielr_db": float(true_ielr[idx])}

    single = scene.mixture.shape[0] == 1
    chosen = {m: 0 if single else choose(scores, m, cfg.alpha) for m in methods}
    sweep = {}
    for a in alphas:
        idx = 0 if single else choose(scores, "comb", a)
        sweep[_alpha_key(a)] = {"chosen": idx, **stats(idx)}
    return SceneResult(
        scene_id=str(scene.scene_id),
        chosen=chosen,
        osnr_db={m: stats(i)["osnr_db"] for m, i in chosen.items()},
        ielr_db={m: stats(i)["ielr_db"] for m, i in chosen.items()},
        snr_db_per_mic=osnr.tolist(),
        log_lp_per_mic=np.asarray(scores.log_lp, dtype=float).tolist(),
        true_ielr_db_per_mic=true_ielr.tolist(),
        sweep=sweep,
    )


def _safe_evaluate(scene, methods, cfg, alphas):
    try:
        return evaluate_scene(scene, methods, cfg, alphas)
    except (InvalidInputError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return {"scene_id": str(scene.scene_id), "error": f"{type(exc).__name__}: {exc}"}


def _check_methods(methods):
    methods = list(methods)
    if not methods:
        raise InvalidInputError("at least one selection method is required")
    for m in methods:
        if m not in METHODS:
            raise InvalidInputError(f"unknown method {m!r}; expected one of {METHODS}")
    if len(set(methods)) != len(methods):
        raise InvalidInputError("duplicate methods")
    return methods


def run_comparison(scenes, methods=("snr", "lp", "comb"), config=None, alphas=(), n_jobs=1):
    """Compare selection methods over a batch of scenes.

    ``scenes`` is any iterable of objects with ``mixture``, ``segments``,
    ``true_ielr_db``, ``sample_rate`` and ``scene_id`` (a :class:`SceneTruth`
    or a scene loaded from disk). Scenes on which the pipeline fails are left
    out of the aggregates and listed in ``failures``. Results are ordered by
    scene id regardless of ``n_jobs``.
    """
    cfg = config or PipelineConfig()
    methods = _check_methods(methods)
    alphas = [check_unit_interval(a, "alpha") for a in alphas]
    if n_jobs == 1:
        outcomes = [_safe_evaluate(s, methods, cfg, alphas) for s in scenes]
    else:
        outcomes = Parallel(n_jobs=n_jobs)(
            delayed(_safe_evaluate)(s, methods, cfg, alphas) for s in scenes
        )
    if not outcomes:
        raise InvalidInputError("no scenes to evaluate")
    results = sorted((o for o in outcomes if isinstance(o, SceneResult)), key=lambda r: r.scene_id)
    failures = sorted((o for o in outcomes if isinstance(o, dict)), key=lambda f: f["scene_id"])
    return BatchReport(methods, cfg.alpha, results, list(alphas), failures, cfg.to_dict())


def _fmt(v):
    return "" if v is None or not math.isfinite(v) else f"{v:.4f}"


def emit_report(report, format="json"):
    """Render a report as deterministic text.

    ``json`` is the full versioned document; ``csv`` has one row per method
    with mean oSNR and iELR; ``sweep-csv`` has one row per alpha.
    """
    if format not in FORMATS:
        raise InvalidInputError(f"unsupported report format {format!r}; expected one of {FORMATS}")
    if not report.methods:
        raise InvalidInputError("report has no methods")
    if format == "json":
        return dump_json(report.to_dict())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if format == "csv":
        writer.writerow(["method", "alpha", "oSNR_db", "iELR_db", "n_scenes"])
        for m in report.methods:
            alpha = f"{report.alpha:g}" if m == "comb" else ""
            writer.writerow([m, alpha, _fmt(report.mean(m, "osnr_db")),
                             _fmt(report.mean(m, "ielr_db")), report.n_scenes])
    else:
        writer.writerow(["alpha", "oSNR_db", "iELR_db", "n_scenes"])
        for row in report.sweep_table:
            writer.writerow([f"{row['alpha']:g}", _fmt(row["osnr_db"]), _fmt(row["ielr_db"]),
                             report.n_scenes])
    return buf.getvalue()


def load_report(text):
    """Parse a JSON report and validate it against :data:`REPORT_SCHEMA`."""
    try:
        doc = json.loads(text)
        jsonschema.validate(doc, REPORT_SCHEMA)
    except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
        raise InvalidInputError(f"invalid report: {exc}") from exc
    return doc
