import numpy as np
import pytest

from gssref.scene import RoomSpec, render_scene, speech_like_source, pink_noise
from gssref.stft import StftConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cfg():
    return StftConfig()


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_psd(rng, m, rank=None):
    a = crandn(rng, m, rank or m)
    return a @ a.conj().T


@pytest.fixture(scope="session")
def short_scene():
    """A 4 s, 12-mic scene shared by the slower pipeline tests."""
    room = RoomSpec.random(seed=7)
    fs = 16000
    src = speech_like_source(4.0, fs, seed=7)
    noise = pink_noise(room.n_mics, 4 * fs, seed=8)
    return render_scene(room, src, noise, snr_db=10.0)


@pytest.fixture(scope="session")
def seg_scene():
    """A 4 s generated scene that carries oracle diarization segments."""
    from gssref.scene import generate_scene

    return generate_scene(21, snr_db=10.0, duration=4.0, scene_id="seg_scene")


@pytest.fixture(scope="session")
def seg_result(seg_scene):
    from gssref.evaluation import scene_activity
    from gssref.pipeline import PipelineConfig, process_mixture

    cfg = PipelineConfig()
    activity, target = scene_activity(seg_scene, cfg)
    return process_mixture(seg_scene.mixture, activity, cfg, target)
