"""Synthetic spatial scenes: moving point sources rendered to ambisonics.

Each scene yields the ground-truth ambisonic mix, its omnidirectional channel
as the mono input, and hint features marking where the sources are active.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import chirp

from .audio import AmbisonicSignal, Trajectory, Waveform, encode_sources, mixdown_mono
from .hints import GRID_COLS, GRID_ROWS, HINT_RATE, HintFeatures, num_hint_frames, splat
from .sphmath import unit_vectors, vectors_to_angles
from .wavio import read_wav, write_wav

SOURCE_KINDS = ("sine", "chirp", "band-noise-burst", "file")
TRAJECTORY_KINDS = ("static", "great-circle", "random-walk")
MAX_SOURCES = 4
TRAJECTORY_RATE = 10.0


@dataclass
class SourceSpec:
    kind: str = "sine"
    frequency: float = 440.0
    end_frequency: float = 1760.0
    band: tuple[float, float] = (200.0, 800.0)
    burst_rate: float = 0.0  # bursts per second, 0 = continuous
    duty: float = 0.5
    gain: float = 0.5
    path: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if not 0 < self.gain <= 1:
            raise ValueError("gain must lie in (0, 1]")
        self.band = tuple(self.band)


@dataclass
class TrajectorySpec:
    kind: str = "static"
    azimuth: float = 0.0  # start direction, radians
    elevation: float = 0.0
    velocity: float = 0.0  # rad/s along the great circle
    heading: float = 0.0  # great-circle heading, 0 = increasing azimuth
    step_sigma: float = 0.05  # random-walk step spread, radians per frame
    max_velocity: float = np.pi / 2  # rad/s
    seed: int = 0

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")


@dataclass
class SceneSpec:
    sources: list[tuple[SourceSpec, TrajectorySpec]]
    duration: float = 10.0
    sample_rate: int = 16000

    def __post_init__(self):
        if not 1 <= len(self.sources) <= MAX_SOURCES:
            raise ValueError(f"scenes need between 1 and {MAX_SOURCES} sources")
        if self.duration <= 0 or self.sample_rate <= 0:
            raise ValueError("duration and sample_rate must be positive")

    def to_dict(self) -> dict:
        return {"duration": self.duration, "sample_rate": self.sample_rate,
                "sources": [{"source": asdict(s), "trajectory": asdict(t)} for s, t in self.sources]}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        sources = [(SourceSpec(**s["source"]), TrajectorySpec(**s["trajectory"])) for s in d["sources"]]
        return cls(sources, d["duration"], d["sample_rate"])


def _burst_envelope(n: int, fs: int, rate: float, duty: float, rng: np.random.Generator) -> np.ndarray:
    if rate <= 0:
        return np.ones(n)
    t = np.arange(n) / fs
    phase = np.mod(t * rate + rng.uniform(), 1.0)
    on = (phase < duty).astype(float)
    # 10 ms raised-cosine edges
    ramp = max(1, int(0.01 * fs))
    kernel = np.hanning(2 * ramp + 1)
    return np.convolve(on, kernel / kernel.sum(), mode="same")


def synth_source(spec: SourceSpec, duration: float, fs: int) -> Waveform:
    """Render a source waveform whose peak equals ``spec.gain``."""
    if duration <= 0 or fs <= 0:
        raise ValueError("duration and sample rate must be positive")
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "sine":
        x = np.sin(2 * np.pi * spec.frequency * t + rng.uniform(0, 2 * np.pi))
    elif spec.kind == "chirp":
        x = chirp(t, spec.frequency, max(duration, 1e-9), spec.end_frequency, method="logarithmic")
    elif spec.kind == "band-noise-burst":
        lo, hi = spec.band
        X = np.fft.rfft(rng.standard_normal(n))
        f = np.fft.rfftfreq(n, 1 / fs)
        X[(f < lo) | (f > hi)] = 0
        x = np.fft.irfft(X, n)
    else:
        if spec.path is None:
            raise ValueError("file sources need a path")
        data = read_wav(spec.path)
        if not isinstance(data, Waveform) or data.sample_rate != fs:
            raise ValueError(f"{spec.path}: file sources must be mono at {fs} Hz")
        x = np.resize(data.samples, n)
    x = x * _burst_envelope(n, fs, spec.burst_rate, spec.duty, rng)
    peak = np.max(np.abs(x)) if n else 0.0
    return Waveform(x * (spec.gain / peak) if peak > 0 else x, fs)


def sample_trajectory(spec: TrajectorySpec, duration: float, frame_rate: float = TRAJECTORY_RATE) -> Trajectory:
    if duration <= 0 or frame_rate <= 0:
        raise ValueError("duration and frame rate must be positive")
    frames = int(np.ceil(duration * frame_rate)) + 1
    t = np.arange(frames) / frame_rate
    start = unit_vectors(spec.azimuth, spec.elevation)
    if spec.kind == "static":
        return Trajectory([spec.azimuth], [spec.elevation], frame_rate)
    if spec.kind == "great-circle":
        az, el = spec.azimuth, spec.elevation
        east = np.array([-np.sin(az), np.cos(az), 0.0])
        north = np.array([-np.sin(el) * np.cos(az), -np.sin(el) * np.sin(az), np.cos(el)])
        heading = np.cos(spec.heading) * east + np.sin(spec.heading) * north
        angle = spec.velocity * t
        vecs = np.cos(angle)[:, None] * start + np.sin(angle)[:, None] * heading
        return Trajectory(*vectors_to_angles(vecs), frame_rate)
    rng = np.random.default_rng(spec.seed)
    max_step = spec.max_velocity / frame_rate
    vecs = [start]
    for _ in range(frames - 1):
        u = vecs[-1]
        d = rng.standard_normal(3)
        d -= (d @ u) * u
        d /= np.linalg.norm(d)
        step = min(abs(rng.normal(0.0, spec.step_sigma)), max_step)
        nxt = np.cos(step) * u + np.sin(step) * d
        vecs.append(nxt / np.linalg.norm(nxt))
    return Trajectory(*vectors_to_angles(np.array(vecs)), frame_rate)


def _frame_rms(x: np.ndarray, fs: int, frames: int, rate: float) -> np.ndarray:
    out = np.zeros(frames)
    for f in range(frames):
        seg = x[int(round(f / rate * fs)): int(round((f + 1) / rate * fs))]
        out[f] = np.sqrt(np.mean(seg ** 2)) if len(seg) else 0.0
    return out


def render_hints(waves: list[Waveform], trajectories: list[Trajectory], duration: float,
                 rows: int = GRID_ROWS, cols: int = GRID_COLS, rate: float = HINT_RATE) -> HintFeatures:
    frames = num_hint_frames(duration, rate)
    times = (np.arange(frames) + 0.5) / rate
    grids = np.zeros((frames, rows, cols))
    rms = [_frame_rms(w.samples, w.sample_rate, frames, rate) for w in waves]
    vecs = [tr.vectors_at(times) for tr in trajectories]
    for f in range(frames):
        grids[f] = splat(np.array([v[f] for v in vecs]), np.array([r[f] for r in rms]), rows, cols)
    return HintFeatures(grids, rate)


def render_scene(spec: SceneSpec, order: int = 1, normalization: str = "SN3D"
                 ) -> tuple[Waveform, HintFeatures, AmbisonicSignal]:
    """Return ``(mono, hints, ground_truth)`` for a scene."""
    waves = [synth_source(s, spec.duration, spec.sample_rate) for s, _ in spec.sources]
    trajs = [sample_trajectory(t, spec.duration) for _, t in spec.sources]
    gt = encode_sources(zip(waves, trajs), order, normalization)
    return mixdown_mono(gt), render_hints(waves, trajs, spec.duration), gt


def random_scene(rng: np.random.Generator, duration: float = 10.0, sample_rate: int = 16000,
                 min_sources: int = 1, max_sources: int = 3) -> SceneSpec:
    """Random sources at random directions; elevations stay within +-60 degrees."""
    count = int(rng.integers(min_sources, max_sources + 1))
    nyquist = sample_rate / 2
    sources = []
    for _ in range(count):
        kind = str(rng.choice(["sine", "chirp", "band-noise-burst"]))
        lo = float(rng.uniform(100, 0.4 * nyquist))
        src = SourceSpec(
            kind=kind,
            frequency=float(rng.uniform(150, 0.3 * nyquist)),
            end_frequency=float(rng.uniform(0.3 * nyquist, 0.8 * nyquist)),
            band=(lo, float(min(lo * rng.uniform(1.5, 4.0), 0.95 * nyquist))),
            burst_rate=float(rng.choice([0.0, rng.uniform(0.3, 2.0)])),
            duty=float(rng.uniform(0.3, 0.8)),
            gain=float(rng.uniform(0.2, 0.9)),
            seed=int(rng.integers(2**31)),
        )
        traj = TrajectorySpec(
            kind=str(rng.choice(TRAJECTORY_KINDS)),
            azimuth=float(rng.uniform(0, 2 * np.pi)),
            elevation=float(np.arcsin(rng.uniform(-np.sqrt(3) / 2, np.sqrt(3) / 2))),
            velocity=float(rng.uniform(-0.5, 0.5)),
            heading=float(rng.uniform(0, 2 * np.pi)),
            step_sigma=float(rng.uniform(0.01, 0.08)),
            seed=int(rng.integers(2**31)),
        )
        sources.append((src, traj))
    return SceneSpec(sources, duration, sample_rate)


@dataclass
class SceneEntry:
    gt: str
    mono: str
    hints: str
    split: str


@dataclass
class DatasetManifest:
    scenes: list[SceneEntry]
    order: int
    seed: int
    root: Path = field(default=Path("."), compare=False)

    def to_json(self) -> str:
        body = {"scenes": [asdict(s) for s in self.scenes], "order": self.order, "seed": self.seed}
        return json.dumps(body, indent=2) + "\n"

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            body = json.loads(path.read_text())
            scenes = [SceneEntry(**s) for s in body["scenes"]]
            manifest = cls(scenes, int(body["order"]), int(body.get("seed", 0)), path.parent)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}: malformed manifest ({exc})") from exc
        for s in scenes:
            if s.split not in ("train", "test"):
                raise ValueError(f"{path}: unknown split {s.split!r}")
        if {s.gt for s in manifest.split("train")} & {s.gt for s in manifest.split("test")}:
            raise ValueError(f"{path}: train and test splits overlap")
        return manifest

    def split(self, name: str) -> list[SceneEntry]:
        return [s for s in self.scenes if s.split == name]

    def resolve(self, relative: str) -> Path:
        return self.root / relative

    def load_scene(self, entry: SceneEntry) -> tuple[Waveform, HintFeatures, AmbisonicSignal]:
        gt = read_wav(self.resolve(entry.gt))
        mono = read_wav(self.resolve(entry.mono))
        hints = HintFeatures.load(self.resolve(entry.hints))
        if not isinstance(gt, AmbisonicSignal) or not isinstance(mono, Waveform):
            raise ValueError(f"scene {entry.gt}: expected ambisonic ground truth and mono input")
        return mono, hints, gt


def split_counts(count: int) -> tuple[int, int]:
    """75/25 train/test split, keeping at least one scene on each side."""
    train = min(max(int(round(0.75 * count)), 1), count - 1)
    return train, count - train


def gen_dataset(count: int, seed: int, order: int, out_dir, duration: float = 10.0, sample_rate: int = 16000,
                min_sources: int = 1, max_sources: int = 3) -> DatasetManifest:
    """Render ``count`` random scenes to ``out_dir`` with a 75/25 train/test split."""
    if count < 2:
        raise ValueError("a dataset needs at least 2 scenes (one per split)")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = np.random.default_rng(seed)
    n_train, _ = split_counts(count)
    is_train = np.zeros(count, dtype=bool)
    is_train[root.permutation(count)[:n_train]] = True
    scene_seeds = root.integers(2**31, size=count)
    entries = []
    for i in range(count):
        rng = np.random.default_rng(int(scene_seeds[i]))
        spec = random_scene(rng, duration, sample_rate, min_sources, max_sources)
        mono, hints, gt = render_scene(spec, order)
        stem = f"scene_{i:03d}"
        write_wav(out / f"{stem}_gt.wav", gt)
        write_wav(out / f"{stem}_mono.wav", mono)
        hints.save(out / f"{stem}_hints.json")
        (out / f"{stem}_scene.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
        entries.append(SceneEntry(f"{stem}_gt.wav", f"{stem}_mono.wav", f"{stem}_hints.json",
                                  "train" if is_train[i] else "test"))
    manifest = DatasetManifest(entries, order, seed, out)
    (out / "manifest.json").write_text(manifest.to_json())
    return manifest
