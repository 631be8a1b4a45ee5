"""Command-line interface: ``gssref {simulate,enhance,evaluate,sweep-alpha,print-config}``.

Exit codes: 0 success, 2 input or configuration error, 3 target never active.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
import warnings

import numpy as np
from joblib import Parallel, delayed

from ._validation import InvalidInputError, NoActivityError, check_unit_interval
from .evaluation import emit_report, run_comparison
from .io import (dump_json, export_scene, load_scene, read_segments, read_wav, scene_directories,
                 write_text, write_wav)
from .pipeline import GSSEnhancer, PipelineConfig
from .refmic import METHODS
from .scene import generate_scene, scene_seeds

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_ACTIVITY = 3

log = logging.getLogger("gssref")


def load_config(path=None):
    if path is None:
        return PipelineConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
    return PipelineConfig.from_dict(data)


def _apply_overrides(cfg, args):
    changes = {}
    for flag, key in (("seed", "simulation.seed"), ("snr_db", "simulation.snr_db"),
                      ("scenes", "simulation.scenes"), ("method", "method"), ("alpha", "alpha")):
        value = getattr(args, flag, None)
        if value is not None:
            changes[key] = value
    return cfg.replace(**changes) if changes else cfg


def _simulate_one(index, seed, sim, sample_rate, out):
    truth = generate_scene(seed, sim.snr_db, sim.duration, sample_rate,
                           scene_id=f"scene_{index:03d}")
    export_scene(truth, out / truth.scene_id, components=sim.write_components)
    return truth.scene_id


def cmd_simulate(args, cfg):
    sim = cfg.simulation
    if sim.scenes < 1:
        raise InvalidInputError("scenes must be at least 1")
    out = Path(args.out)
    seeds = scene_seeds(sim.scenes, sim.seed)
    ids = Parallel(n_jobs=args.jobs)(
        delayed(_simulate_one)(i, s, sim, cfg.stft.sample_rate, out) for i, s in enumerate(seeds)
    )
    manifest = {"config": cfg.to_dict(), "scenes": ids, "scene_seeds": seeds}
    write_text(out / "manifest.json", dump_json(manifest))
    log.info("wrote %d scenes to %s", len(ids), out)
    return EXIT_OK


def _read_session(paths, sample_rate):
    channels, rates = [], set()
    for p in paths:
        sig, rate = read_wav(p)
        channels.append(sig)
        rates.add(rate)
    if rates != {sample_rate}:
        raise InvalidInputError(f"audio must be sampled at {sample_rate} Hz, got {sorted(rates)}")
    lengths = {c.shape[1] for c in channels}
    if len(lengths) != 1:
        raise InvalidInputError("all channels must have the same length")
    return np.concatenate(channels, axis=0)


def cmd_enhance(args, cfg):
    signal = _read_session(args.audio, cfg.stft.sample_rate)
    segments = read_segments(args.segments)
    duration = signal.shape[1] / cfg.stft.sample_rate
    tolerance = cfg.stft.frame_shift / cfg.stft.sample_rate
    if any(end > duration + tolerance for _, _, end in segments):
        raise InvalidInputError("segments extend beyond the end of the audio")
    if not any(str(s) == args.target for s, *_ in segments):
        raise NoActivityError(f"no segments for target {args.target!r}")

    enhancer = GSSEnhancer(method=cfg.method, alpha=cfg.alpha, config=cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        enhancer.fit_segments(signal, segments, target=args.target)
        output = enhancer.transform()
    for w in caught:
        if issubclass(w.category, UserWarning):
            log.warning("%s", w.message)

    out = Path(args.out)
    write_wav(out, output, cfg.stft.sample_rate)
    record = {
        "input": [Path(p).name for p in args.audio],
        "target": args.target,
        "method": cfg.method,
        "alpha": cfg.alpha,
        "reference": int(enhancer.reference_),
        "n_mics": int(signal.shape[0]),
        "scores": _json_scores(enhancer.scores_.to_dict()),
        "diagnostics": enhancer.result_.diagnostics,
    }
    write_text(out.with_suffix(".json"), dump_json(record))
    log.info("reference mic %d, wrote %s", enhancer.reference_, out)
    return EXIT_OK


def _json_scores(d):
    def clean(v):
        if isinstance(v, list):
            return [clean(x) for x in v]
        if isinstance(v, float) and not np.isfinite(v):
            return None
        return v

    return {k: clean(v) for k, v in d.items()}


def _load_scenes(root):
    for d in scene_directories(root):
        yield load_scene(d)


def _write_report(report, out, stem, tables):
    out = Path(out)
    write_text(out / f"{stem}.json", emit_report(report, "json"))
    for suffix, fmt in tables:
        write_text(out / f"{stem}{suffix}.csv", emit_report(report, fmt))
    for f in report.failures:
        log.warning("scene %s failed: %s", f["scene_id"], f["error"])


def cmd_evaluate(args, cfg):
    methods = [args.method] if args.method else list(cfg.eval.methods)
    report = run_comparison(_load_scenes(args.scenes_dir), methods, cfg, cfg.eval.alphas,
                            n_jobs=args.jobs)
    tables = [("", "csv")] + ([("_sweep", "sweep-csv")] if report.alphas else [])
    _write_report(report, args.out, "report", tables)
    sys.stdout.write(emit_report(report, "csv"))
    return EXIT_OK


def dedupe_alphas(alphas):
    unique = []
    for a in alphas:
        a = check_unit_interval(a, "alpha")
        if a in unique:
            log.warning("duplicate alpha %g ignored", a)
            continue
        unique.append(a)
    return unique


def cmd_sweep_alpha(args, cfg):
    alphas = dedupe_alphas(args.alphas if args.alphas is not None else cfg.eval.alphas)
    if len(alphas) < 2:
        raise InvalidInputError("an alpha sweep needs at least two distinct values")
    report = run_comparison(_load_scenes(args.scenes_dir), list(cfg.eval.methods), cfg, alphas,
                            n_jobs=args.jobs)
    _write_report(report, args.out, "sweep", [("", "sweep-csv")])
    sys.stdout.write(emit_report(report, "sweep-csv"))
    return EXIT_OK


def cmd_print_config(args, cfg):
    sys.stdout.write(dump_json(cfg.to_dict()))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="gssref", description=__doc__.splitlines()[0])
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("-v", "--verbose", action="store_true", help="log progress")
    shared.add_argument("--config", help="JSON config; missing keys take the defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help):
        return sub.add_parser(name, help=help, parents=[shared])

    def common(p, out_help):
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--jobs", type=int, default=1, help="parallel scene workers")

    p = add("simulate", "generate a batch of scenes")
    common(p, "output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--scenes", type=int)
    p.set_defaults(func=cmd_simulate)

    p = add("enhance", "enhance one session")
    common(p, "output WAV; the selection record goes next to it as .json")
    p.add_argument("audio", nargs="+", help="multichannel WAV file(s); channels are stacked")
    p.add_argument("--segments", required=True, help="segment file: 'source start end' per line")
    p.add_argument("--target", default="0", help="target source id")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_enhance)

    p = add("evaluate", "compare selection methods on simulated scenes")
    common(p, "report directory")
    p.add_argument("scenes_dir")
    p.add_argument("--method", choices=METHODS, help="evaluate a single method")
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_evaluate)

    p = add("sweep-alpha", "mean oSNR and iELR versus alpha")
    common(p, "report directory")
    p.add_argument("scenes_dir")
    p.add_argument("--alphas", type=float, nargs="+", help="defaults to eval.alphas")
    p.set_defaults(func=cmd_sweep_alpha)

    p = add("print-config", "print the effective config as JSON")
    p.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="gssref: %(levelname)s: %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        return args.func(args, cfg)
    except NoActivityError as exc:
        log.error("%s", exc)
        return EXIT_NO_ACTIVITY
    except (InvalidInputError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
