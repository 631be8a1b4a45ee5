"""Synthetic distributed-microphone scenes with an exact early/late/noise split.

Room impulse responses follow a parametric model instead of an image-source
simulation: a direct-path tap, a handful of discrete early reflections that
arrive within 30 ms of the direct sound, and a Gaussian diffuse tail whose
envelope decays by 60 dB per T60. The tail energy is set from Sabine's
critical distance, so microphones far from the talker see a lower
early-to-late ratio, which is the effect reference selection exploits.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.signal import fftconvolve

from ._validation import InvalidInputError, check_signal

SPEED_OF_SOUND = 343.0
EARLY_CUTOFF_S = 0.030
IELR_CAP_DB = 99.0


@dataclass(frozen=True)
class RoomSpec:
    """Room geometry and acoustics for one scene.

    Microphones are grouped in ``len(array_centers)`` compact circular arrays
    of ``mics_per_array`` elements with radius ``mic_radius``; each array gets
    a seeded horizontal orientation.
    """

    t60: float
    source_pos: tuple
    array_centers: tuple
    dimensions: tuple = (7.0, 7.0, 2.5)
    mics_per_array: int = 4
    mic_radius: float = 0.05
    seed: int = 0
    interferer_pos: tuple = ()

    def __post_init__(self):
        if self.t60 < 0:
            raise InvalidInputError(f"t60 must be non-negative, got {self.t60}")
        room = np.asarray(self.dimensions, dtype=float)
        points = [self.source_pos, *self.interferer_pos]
        if not all(_inside(p, room) for p in points):
            raise InvalidInputError("source positions must lie strictly inside the room")
        if not all(_inside(p, room) for p in self.mic_positions):
            raise InvalidInputError("microphone positions must lie strictly inside the room")

    @classmethod
    def random(cls, seed, t60_range=(0.2, 0.5), n_arrays=3, n_interferers=0, **kwargs):
        """Draw T60, the talker position and the array centres from ``seed``."""
        rng = np.random.default_rng([seed, 0])
        dims = np.asarray(kwargs.get("dimensions", (7.0, 7.0, 2.5)))
        margin = 0.5
        t60 = float(rng.uniform(*t60_range))

        def draw(z_lo, z_hi):
            xy = rng.uniform(margin, dims[:2] - margin)
            return (float(xy[0]), float(xy[1]), float(rng.uniform(z_lo, z_hi)))

        source = draw(1.2, 1.8)
        centers = []
        while len(centers) < n_arrays:
            c = draw(0.7, 1.5)
            # keep arrays out of the talker's immediate near field
            if np.linalg.norm(np.subtract(c, source)) >= 0.5:
                centers.append(c)
        interferers = tuple(draw(1.2, 1.8) for _ in range(n_interferers))
        return cls(
            t60=t60,
            source_pos=source,
            array_centers=tuple(centers),
            seed=int(seed),
            interferer_pos=interferers,
            **kwargs,
        )

    @property
    def n_mics(self):
        return len(self.array_centers) * self.mics_per_array

    @property
    def volume(self):
        return float(np.prod(self.dimensions))

    @property
    def mic_positions(self):
        rng = np.random.default_rng([self.seed, 1])
        positions = []
        for center in self.array_centers:
            theta = rng.uniform(0, 2 * np.pi)
            for j in range(self.mics_per_array):
                phi = theta + 2 * np.pi * j / self.mics_per_array
                offset = self.mic_radius * np.array([np.cos(phi), np.sin(phi), 0.0])
                positions.append(np.asarray(center, dtype=float) + offset)
        return np.array(positions)

    def to_dict(self):
        return {
            "t60": self.t60,
            "source_pos": list(self.source_pos),
            "array_centers": [list(c) for c in self.array_centers],
            "dimensions": list(self.dimensions),
            "mics_per_array": self.mics_per_array,
            "mic_radius": self.mic_radius,
            "seed": self.seed,
            "interferer_pos": [list(p) for p in self.interferer_pos],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            t60=d["t60"],
            source_pos=tuple(d["source_pos"]),
            array_centers=tuple(tuple(c) for c in d["array_centers"]),
            dimensions=tuple(d["dimensions"]),
            mics_per_array=d["mics_per_array"],
            mic_radius=d["mic_radius"],
            seed=d["seed"],
            interferer_pos=tuple(tuple(p) for p in d.get("interferer_pos", [])),
        )


def _inside(point, room):
    p = np.asarray(point, dtype=float)
    return bool(np.all(p > 0) and np.all(p < room))


@dataclass
class Rir:
    taps: np.ndarray
    direct_delay: int
    early_cutoff: int

    @property
    def early(self):
        return self.taps[: self.early_cutoff + 1]

    @property
    def late(self):
        late = self.taps.copy()
        late[: self.early_cutoff + 1] = 0.0
        return late


def make_rir(room, mic_index, sample_rate=16000, source_pos=None, source_index=0):
    """Impulse response from a source to microphone ``mic_index``.

    ``source_pos`` defaults to the target talker; interfering talkers pass
    their own position and a distinct ``source_index`` so their random
    components differ from the target's.
    """
    if room.t60 < 0:
        raise InvalidInputError("t60 must be non-negative")
    fs = sample_rate
    src = np.asarray(room.source_pos if source_pos is None else source_pos, dtype=float)
    mic = room.mic_positions[mic_index]
    dist = float(np.linalg.norm(mic - src))
    direct = int(round(dist / SPEED_OF_SOUND * fs))
    cutoff = direct + int(round(EARLY_CUTOFF_S * fs))

    if room.t60 == 0:
        taps = np.zeros(direct + 1)
        taps[direct] = 1.0 / dist
        return Rir(taps, direct, cutoff)

    # Reflections are shared by the microphones of one array: the elements
    # are a few centimetres apart, so their reflection paths nearly coincide.
    array_index = mic_index // room.mics_per_array
    refl_rng = np.random.default_rng([room.seed, 2, source_index, array_index])
    n_refl = int(refl_rng.integers(4, 9))
    extra = refl_rng.uniform(0.002, EARLY_CUTOFF_S, n_refl)
    gains = refl_rng.uniform(0.4, 0.8, n_refl) * refl_rng.choice([-1.0, 1.0], n_refl)

    # Envelope exp(-decay * n) counted from emission gives 60 dB per T60 in energy.
    decay = math.log(1e6) / (2.0 * room.t60 * fs)
    length = max(int(math.ceil(1.2 * room.t60 * fs)), cutoff + 1) + 1
    taps = np.zeros(length)
    taps[direct] = 1.0 / dist
    for e, g in zip(extra, gains):
        n = direct + int(round(e * fs))
        taps[n] += g / (dist + e * SPEED_OF_SOUND)

    # Diffuse energy equals the direct energy at the critical distance.
    critical = 0.057 * math.sqrt(room.volume / room.t60)
    diffuse_energy = 1.0 / critical**2
    tail_rng = np.random.default_rng([room.seed, 3, source_index, mic_index])
    noise = tail_rng.standard_normal(length)
    envelope = np.exp(-decay * np.arange(length))
    full = np.sum(noise**2 * envelope**2)
    tail = noise * envelope * math.sqrt(diffuse_energy / full)
    onset = direct + int(round(0.001 * fs))
    tail[:onset] = 0.0
    taps += tail
    return Rir(taps, direct, cutoff)


def ielr_db(early, late):
    """Early-to-late energy ratio in dB, capped at +99 dB when the late part vanishes."""
    e_early = float(np.sum(np.square(early)))
    e_late = float(np.sum(np.square(late)))
    if e_early <= 0:
        raise InvalidInputError("early component is silent; ELR undefined")
    if e_late < 1e-12 * e_early:
        return IELR_CAP_DB
    return min(10.0 * math.log10(e_early / e_late), IELR_CAP_DB)


@dataclass
class SceneTruth:
    mixture: np.ndarray
    x_early: np.ndarray
    x_late: np.ndarray
    noise: np.ndarray
    true_ielr_db: np.ndarray
    input_snr_db: float
    room: RoomSpec
    sample_rate: int = 16000
    segments: list = field(default_factory=list)
    scene_id: str = "scene"

    @property
    def n_mics(self):
        return self.mixture.shape[0]

    def metadata(self):
        return {
            "scene_id": self.scene_id,
            "sample_rate": self.sample_rate,
            "n_mics": self.n_mics,
            "n_samples": int(self.mixture.shape[1]),
            "input_snr_db": self.input_snr_db,
            "true_ielr_db": [float(v) for v in self.true_ielr_db],
            "room": self.room.to_dict(),
            "segments": [[str(s), float(a), float(b)] for s, a, b in self.segments],
        }


def render_scene(room, source, noise_source, snr_db, sample_rate=16000, interferers=(),
                 segments=None, scene_id="scene"):
    """Convolve ``source`` with every microphone's RIR and add scaled noise.

    ``noise_source`` is either one channel (reused for all microphones) or one
    channel per microphone. Its gain is chosen so that the reverberant target
    power averaged over microphones sits ``snr_db`` above the noise power.
    Interfering talkers, if given, are added to the noise component after
    scaling and do not enter the SNR calibration.
    """
    source = check_signal(source)[0]
    n = source.size
    if not np.any(source):
        raise InvalidInputError("source is silent; SNR undefined")
    noise_source = check_signal(noise_source, min_length=n)[:, :n]
    if noise_source.shape[0] not in (1, room.n_mics):
        raise InvalidInputError("noise_source needs 1 or n_mics channels")
    noise_source = np.broadcast_to(noise_source, (room.n_mics, n))
    if not np.any(noise_source):
        raise InvalidInputError("noise source is silent")

    m = room.n_mics
    x_early = np.empty((m, n))
    x_late = np.empty((m, n))
    ielr = np.empty(m)
    for i in range(m):
        rir = make_rir(room, i, sample_rate)
        x_early[i] = fftconvolve(source, rir.early)[:n]
        x_late[i] = fftconvolve(source, rir.late)[:n]
        ielr[i] = ielr_db(x_early[i], x_late[i])

    target = x_early + x_late
    p_target = np.mean(target**2)
    p_noise = np.mean(noise_source**2)
    gain = math.sqrt(p_target / (p_noise * 10.0 ** (snr_db / 10.0)))
    noise = gain * noise_source

    for k, (sig, pos) in enumerate(zip(interferers, room.interferer_pos), start=1):
        sig = check_signal(sig)[0][:n]
        for i in range(m):
            rir = make_rir(room, i, sample_rate, source_pos=pos, source_index=k)
            noise[i, : sig.size] += fftconvolve(sig, rir.taps)[: sig.size]

    mixture = x_early + x_late + noise
    return SceneTruth(
        mixture=mixture,
        x_early=x_early,
        x_late=x_late,
        noise=noise,
        true_ielr_db=ielr,
        input_snr_db=float(snr_db),
        room=room,
        sample_rate=sample_rate,
        segments=list(segments or []),
        scene_id=scene_id,
    )


def speech_like_source(duration, sample_rate=16000, seed=0, return_segments=False):
    """Seeded stand-in for clean speech.

    Utterances of voiced, harmonic "syllables" with gliding pitch and random
    formant envelopes, separated by pauses. The harmonic structure and the
    on/off pattern give the time-frequency sparsity of real speech. With
    ``return_segments`` the utterance spans (start, end) in seconds are
    returned as well, for use as oracle diarization.
    """
    fs = sample_rate
    rng = np.random.default_rng([seed, 10])
    n = int(round(duration * fs))
    out = np.zeros(n)
    spans = []
    # margins shrink for short signals so at least one utterance fits
    t = min(rng.uniform(0.2, 0.6), 0.1 * duration)
    while t < duration - min(0.8, 0.3 * duration):
        utt_end = min(t + rng.uniform(1.5, 3.5), duration - min(0.3, 0.1 * duration))
        start = t
        f0_base = rng.uniform(90, 220)
        while t < utt_end:
            syl = rng.uniform(0.08, 0.25)
            s0 = int(t * fs)
            s1 = min(int((t + syl) * fs), n)
            if rng.random() < 0.15:
                out[s0:s1] += _fricative(s1 - s0, fs, rng)
            else:
                out[s0:s1] += _voiced(s1 - s0, fs, f0_base, rng)
            t += syl + rng.uniform(0.02, 0.1)
        spans.append((start, min(t, duration)))
        t += rng.uniform(0.4, 1.2)
    active = np.abs(out) > 0
    if not active.any():
        raise InvalidInputError(f"duration {duration} s is too short for a source signal")
    out /= np.sqrt(np.mean(out[active] ** 2))
    if return_segments:
        return out, spans
    return out


def _envelope(n):
    ramp = min(n // 4, 160)
    env = np.ones(n)
    if ramp:
        r = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[:ramp] = r
        env[-ramp:] = r[::-1]
    return env


def _voiced(n, fs, f0_base, rng):
    t = np.arange(n) / fs
    f0 = f0_base * rng.uniform(0.85, 1.15) * (1 + rng.uniform(-0.15, 0.15) * t / max(t[-1], 1e-3))
    phase = 2 * np.pi * np.cumsum(f0) / fs
    formants = np.sort(rng.uniform([300, 900, 2000], [900, 2200, 3500]))
    widths = np.array([120.0, 180.0, 300.0])
    sig = np.zeros(n)
    mean_f0 = float(np.mean(f0))
    for h in range(1, int(4000 / mean_f0) + 1):
        fh = h * mean_f0
        gain = np.sum(np.exp(-0.5 * ((fh - formants) / widths) ** 2)) + 0.05
        sig += gain / np.sqrt(h) * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    return sig * _envelope(n) * rng.uniform(0.5, 1.0)


def _fricative(n, fs, rng):
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, 1 / fs)
    spec *= np.exp(-0.5 * ((f - rng.uniform(3000, 6000)) / 1200.0) ** 2)
    sig = np.fft.irfft(spec, n)
    return sig / (np.std(sig) + 1e-12) * _envelope(n) * rng.uniform(0.2, 0.5)


def pink_noise(n_channels, n_samples, seed=0):
    """Independent unit-power 1/f noise per channel."""
    rng = np.random.default_rng([seed, 20])
    white = rng.standard_normal((n_channels, n_samples))
    spec = np.fft.rfft(white, axis=-1)
    f = np.arange(spec.shape[-1], dtype=float)
    f[0] = 1.0
    spec /= np.sqrt(f)
    noise = np.fft.irfft(spec, n_samples, axis=-1)
    return noise / np.sqrt(np.mean(noise**2, axis=-1, keepdims=True))


def scene_seeds(count, master_seed):
    """Per-scene integer seeds derived reproducibly from ``master_seed``."""
    if count < 1:
        raise InvalidInputError("count must be at least 1")
    children = np.random.SeedSequence(master_seed).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]


def generate_scene(seed, snr_db=10.0, duration=10.0, sample_rate=16000, n_interferers=0,
                   scene_id=None, **room_kwargs):
    """One randomized scene: random room, speech-like talker, pink noise."""
    room = RoomSpec.random(seed, n_interferers=n_interferers, **room_kwargs)
    source, spans = speech_like_source(duration, sample_rate, seed=seed, return_segments=True)
    noise = pink_noise(room.n_mics, source.size, seed=seed)
    segments = [("0", a, b) for a, b in spans]
    interferers = []
    for k in range(n_interferers):
        sig, sp = speech_like_source(duration, sample_rate, seed=seed + 7919 * (k + 1),
                                     return_segments=True)
        interferers.append(sig)
        segments += [(str(k + 1), a, b) for a, b in sp]
    return render_scene(room, source, noise, snr_db, sample_rate, interferers=interferers,
                        segments=segments, scene_id=scene_id or f"scene_{seed}")


def iter_scenes(count=100, snr_db=10.0, master_seed=0, duration=10.0, sample_rate=16000, **kwargs):
    for i, seed in enumerate(scene_seeds(count, master_seed)):
        yield generate_scene(seed, snr_db, duration, sample_rate, scene_id=f"scene_{i:03d}", **kwargs)


def batch_scenes(count=100, snr_db=10.0, master_seed=0, duration=10.0, sample_rate=16000, **kwargs):
    """Materialize ``count`` scenes. Prefer :func:`iter_scenes` for large batches."""
    return list(iter_scenes(count, snr_db, master_seed, duration, sample_rate, **kwargs))
