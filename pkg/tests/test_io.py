import numpy as np
import pytest
from scipy.io import wavfile

from gssref._validation import InvalidInputError
from gssref.io import (
    export_scene,
    load_scene,
    read_segments,
    read_wav,
    scene_directories,
    write_segments,
    write_wav,
)
from gssref.scene import generate_scene


def test_float_wav_round_trip(tmp_path, rng):
    sig = rng.uniform(-0.9, 0.9, (3, 800))
    write_wav(tmp_path / "a.wav", sig, 16000)
    back, rate = read_wav(tmp_path / "a.wav")
    assert rate == 16000
    np.testing.assert_allclose(back, sig.astype(np.float32))


@pytest.mark.parametrize("dtype, scale", [(np.int16, 32768.0), (np.int32, 2.0**31)])
def test_integer_pcm_is_scaled(tmp_path, dtype, scale):
    data = np.array([[0, 1000], [-2000, 3000]], dtype=dtype)
    wavfile.write(tmp_path / "p.wav", 16000, data)
    back, _ = read_wav(tmp_path / "p.wav")
    np.testing.assert_allclose(back, data.T / scale)


def test_corrupt_wav_raises(tmp_path):
    (tmp_path / "bad.wav").write_bytes(b"not a wav file")
    with pytest.raises(InvalidInputError):
        read_wav(tmp_path / "bad.wav")


def test_writes_leave_no_temp_files(tmp_path):
    write_wav(tmp_path / "x.wav", np.zeros(10), 16000)
    write_segments(tmp_path / "s.txt", [("0", 0.0, 1.0)])
    assert sorted(p.name for p in tmp_path.iterdir()) == ["s.txt", "x.wav"]


def test_segment_round_trip(tmp_path):
    segs = [("0", 0.25, 1.5), ("spk2", 1.0, 2.0)]
    write_segments(tmp_path / "s.txt", segs)
    assert read_segments(tmp_path / "s.txt") == segs


def test_segment_parser_skips_comments(tmp_path):
    (tmp_path / "s.txt").write_text("# id start end\n\n0 0.5 1.0  # first\n1\t2 3\n")
    assert read_segments(tmp_path / "s.txt") == [("0", 0.5, 1.0), ("1", 2.0, 3.0)]


@pytest.mark.parametrize("line", ["0 1.0", "0 a b", "0 2.0 1.0", "0 -1 2"])
def test_malformed_segments_raise(tmp_path, line):
    (tmp_path / "s.txt").write_text(line + "\n")
    with pytest.raises(InvalidInputError):
        read_segments(tmp_path / "s.txt")


def test_scene_export_and_load(tmp_path):
    truth = generate_scene(3, duration=2.0, scene_id="scene_x")
    export_scene(truth, tmp_path / "scene_x", components=True)
    loaded = load_scene(tmp_path / "scene_x")
    assert loaded.scene_id == "scene_x"
    np.testing.assert_allclose(loaded.mixture, truth.mixture.astype(np.float32))
    np.testing.assert_allclose(loaded.true_ielr_db, truth.true_ielr_db)
    assert [(s, pytest.approx(a), pytest.approx(b)) for s, a, b in loaded.segments] == \
        [(s, a, b) for s, a, b in truth.segments]
    full = loaded.truth()
    assert full.room == truth.room
    np.testing.assert_allclose(full.x_late, truth.x_late.astype(np.float32))
    assert scene_directories(tmp_path) == [tmp_path / "scene_x"]


def test_components_are_optional(tmp_path):
    truth = generate_scene(3, duration=2.0)
    export_scene(truth, tmp_path / "s")
    assert not (tmp_path / "s" / "x_early.wav").exists()
    with pytest.raises(InvalidInputError):
        load_scene(tmp_path / "s").truth()


def test_missing_metadata_raises(tmp_path):
    with pytest.raises(InvalidInputError):
        load_scene(tmp_path)
    with pytest.raises(InvalidInputError):
        scene_directories(tmp_path)
