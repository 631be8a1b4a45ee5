"""WAV, segment-list and scene-directory I/O.

Writes go to a temporary file in the target directory and are moved into
place, so an interrupted run never leaves a truncated artifact behind.
"""

import json
import os
from pathlib import Path
import tempfile

import numpy as np
from scipy.io import wavfile

from ._validation import InvalidInputError
from .scene import RoomSpec, SceneTruth


def _atomic_write(path, write):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path, text):
    def write(tmp):
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

    _atomic_write(path, write)


def write_wav(path, signal, sample_rate):
    """Write a (C, N) float signal as 32-bit float WAV."""
    data = np.asarray(signal, dtype=np.float32)
    if data.ndim == 1:
        data = data[None]
    _atomic_write(path, lambda tmp: wavfile.write(tmp, int(sample_rate), data.T.copy()))


def read_wav(path):
    """Return ``(signal (C, N) float64, sample_rate)``; integer PCM is scaled to [-1, 1)."""
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read WAV {path}: {exc}") from exc
    if np.issubdtype(data.dtype, np.integer):
        info = np.iinfo(data.dtype)
        if info.min == 0:  # unsigned 8-bit
            data = (data.astype(np.float64) - 128.0) / 128.0
        else:
            data = data.astype(np.float64) / -float(info.min)
    data = np.asarray(data, dtype=np.float64)
    return (data[None] if data.ndim == 1 else data.T.copy()), int(rate)


def read_segments(path):
    """Parse ``source_id start end`` lines (seconds); blank lines and ``#`` comments are skipped."""
    segments = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise InvalidInputError(f"{path}:{lineno}: expected 'source start end'")
            try:
                start, end = float(parts[1]), float(parts[2])
            except ValueError as exc:
                raise InvalidInputError(f"{path}:{lineno}: bad time value") from exc
            if not 0 <= start < end:
                raise InvalidInputError(f"{path}:{lineno}: need 0 <= start < end")
            segments.append((parts[0], start, end))
    return segments


def format_segments(segments):
    return "".join(f"{s} {a:.6f} {b:.6f}\n" for s, a, b in segments)


def write_segments(path, segments):
    write_text(path, format_segments(segments))


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def export_scene(truth, directory, components=False):
    """Write ``mixture.wav``, ``segments.txt`` and ``meta.json`` (plus component WAVs)."""
    directory = Path(directory)
    write_wav(directory / "mixture.wav", truth.mixture, truth.sample_rate)
    if components:
        for name in ("x_early", "x_late", "noise"):
            write_wav(directory / f"{name}.wav", getattr(truth, name), truth.sample_rate)
    write_segments(directory / "segments.txt", truth.segments)
    meta = truth.metadata()
    meta["input_snr_db"] = float(meta["input_snr_db"])
    meta["components"] = bool(components)
    write_text(directory / "meta.json", dump_json(meta))
    return directory


class LoadedScene:
    """A scene read back from disk: the mixture plus its stored ground truth."""

    def __init__(self, directory):
        directory = Path(directory)
        meta_path = directory / "meta.json"
        if not meta_path.is_file():
            raise InvalidInputError(f"{directory} has no meta.json")
        with open(meta_path, encoding="utf-8") as fh:
            self.meta = json.load(fh)
        self.mixture, self.sample_rate = read_wav(directory / "mixture.wav")
        seg_path = directory / "segments.txt"
        self.segments = read_segments(seg_path) if seg_path.is_file() else []
        self.scene_id = self.meta.get("scene_id", directory.name)
        self.true_ielr_db = np.asarray(self.meta["true_ielr_db"], dtype=float)
        self.directory = directory

    @property
    def n_mics(self):
        return self.mixture.shape[0]

    def truth(self):
        """Full :class:`SceneTruth`; needs the component WAVs."""
        parts = {}
        for name in ("x_early", "x_late", "noise"):
            path = self.directory / f"{name}.wav"
            if not path.is_file():
                raise InvalidInputError(f"{path} missing; export with components=True")
            parts[name] = read_wav(path)[0]
        return SceneTruth(
            mixture=self.mixture,
            true_ielr_db=self.true_ielr_db,
            input_snr_db=self.meta["input_snr_db"],
            room=RoomSpec.from_dict(self.meta["room"]),
            sample_rate=self.sample_rate,
            segments=self.segments,
            scene_id=self.scene_id,
            **parts,
        )


def load_scene(directory):
    return LoadedScene(directory)


def scene_directories(root):
    """Scene sub-directories of ``root`` (those holding a meta.json), sorted by name."""
    root = Path(root)
    if (root / "meta.json").is_file():
        return [root]
    dirs = sorted(p for p in root.iterdir() if (p / "meta.json").is_file()) if root.is_dir() else []
    if not dirs:
        raise InvalidInputError(f"no scenes found under {root}")
    return dirs
