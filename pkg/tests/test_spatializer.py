import numpy as np
import pytest

from ambiup import autodiff as ad
from ambiup.audio import AmbisonicSignal, Waveform, encode_sources, rotate_z
from ambiup.hints import HintFeatures
from ambiup.metrics import default_sampling, energy_map
from ambiup.scenes import SceneSpec, SourceSpec, TrajectorySpec, gen_dataset, render_scene
from ambiup.sphmath import Direction, FRONT, sh_matrix
from ambiup.spatializer import (PriorCoefficients, SpatializerConfig, TrainConfig, ablate, extract_features, loss,
                                forward, front_end, init_params, load_model, prior_apply, prior_fit, train)
from ambiup.spatializer.model import as_tensors, channel_weights, forward_batch, stft_loss
from ambiup.spatializer.prior import project
from ambiup.spatializer.training import sample_batch, scene_from_signal

FS = 16000


def static_scene(rng, seconds=1.0, order=1, fs=FS):
    d = Direction(rng.uniform(0, 2 * np.pi), np.arcsin(rng.uniform(-0.9, 0.9)))
    mono = Waveform(rng.standard_normal(int(seconds * fs)), fs)
    return mono, d, encode_sources([(mono, d)], order)


def flat_hints(seconds, grid=(8, 16)):
    return HintFeatures(np.ones((int(round(seconds * 10)),) + grid))


def rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def test_oracle_reduces_to_encoding(rng):
    cfg = SpatializerConfig(k=1)
    params = init_params(cfg)
    for _ in range(5):
        mono, d, gt = static_scene(rng)
        masks, _, _ = forward(params, cfg, mono, flat_hints(1.0))
        w = sh_matrix(1, d.azimuth, d.elevation)[1:]
        weights = np.broadcast_to(w[None, :, None], (1, 3, masks.shape[1]))
        _, _, out = forward(params, cfg, mono, flat_hints(1.0), masks=np.ones_like(masks), weights=weights)
        assert rms(out.channels - gt.channels) < 1e-5


def test_zero_masks_silence_output(rng):
    cfg = SpatializerConfig(k=3)
    params = init_params(cfg, 1)
    mono, _, _ = static_scene(rng, 0.6)
    masks, weights, _ = forward(params, cfg, mono, flat_hints(0.6))
    _, _, out = forward(params, cfg, mono, flat_hints(0.6), masks=np.zeros_like(masks))
    assert np.all(out.channels[1:] == 0)
    np.testing.assert_array_equal(out.channels[0], mono.samples)


def test_shapes(rng):
    cfg = SpatializerConfig()
    mono = Waveform(rng.standard_normal(int(0.6 * FS)), FS)
    masks, weights, out = forward(init_params(cfg, 2), cfg, mono, flat_hints(0.6))
    assert out.num_channels == 4 and len(out) == len(mono)
    assert masks.shape[0] == 8 and masks.shape[2] == cfg.stft.bins
    assert weights.shape[:2] == (8, 3)
    assert np.all((masks >= 0) & (masks <= 1))
    assert np.all(np.abs(weights) <= 2)


def test_input_validation(rng):
    cfg = SpatializerConfig()
    params = init_params(cfg)
    mono = Waveform(np.zeros(FS), FS)
    with pytest.raises(ValueError):
        forward(params, cfg, Waveform(np.zeros(8000), 8000), flat_hints(1.0))
    with pytest.raises(ValueError):
        forward(params, cfg, encode_sources([(mono, FRONT)], 1), flat_hints(1.0))
    with pytest.raises(ValueError):
        forward(params, cfg, mono, flat_hints(2.0))
    with pytest.raises(ValueError):
        ablate(cfg, "novideo")
    with pytest.raises(ValueError):
        SpatializerConfig(order_in=1, order_out=1)
    assert ablate(cfg) == cfg


def test_nosep_is_encoding(rng):
    cfg = ablate(SpatializerConfig(k=1), "nosep")
    params = init_params(cfg)
    assert not any(name.startswith("sep") for name in params)
    mono, d, gt = static_scene(rng)
    masks, weights, _ = forward(params, cfg, mono, flat_hints(1.0))
    assert masks is None
    w = np.broadcast_to(sh_matrix(1, d.azimuth, d.elevation)[1:, None], weights.shape[1:])[None]
    _, _, out = forward(params, cfg, mono, flat_hints(1.0), weights=w)
    np.testing.assert_allclose(out.channels, gt.channels, atol=1e-12)


def test_feature_widths(rng):
    x = rng.standard_normal((1, 1, 4000))
    full = SpatializerConfig()
    fe = front_end(full, x, [flat_hints(0.25)])
    assert extract_features(as_tensors(init_params(full)), fe).shape[-1] == 64 + 128
    nohints = ablate(full, "nohints")
    fe = front_end(nohints, x)
    assert extract_features(as_tensors(init_params(nohints)), fe).shape[-1] == 64


def test_features_deterministic_and_hint_shift(rng):
    cfg = SpatializerConfig()
    params = as_tensors(init_params(cfg, 3))
    x = np.zeros((1, 1, FS))
    frames = rng.uniform(size=(10, 8, 16))
    a = extract_features(params, front_end(cfg, x, [HintFeatures(frames)])).value[0]
    b = extract_features(params, front_end(cfg, x, [HintFeatures(frames)])).value[0]
    np.testing.assert_array_equal(a, b)
    # silent audio: the audio part is the same bias-only vector in every frame
    np.testing.assert_allclose(a[:, :64], np.broadcast_to(a[:1, :64], a[:, :64].shape))
    shifted = extract_features(params, front_end(cfg, x, [HintFeatures(np.roll(frames, 1, axis=0))])).value[0]
    fe = front_end(cfg, x, [HintFeatures(frames)])
    times = (np.arange(fe.frames) * cfg.stft.hop + cfg.stft.window_len / 2 - fe.pad_left) / FS
    idx = np.clip(np.floor(times * 10).astype(int), 0, 9)
    for f in range(fe.frames):
        src = frames[(idx[f] - 1) % 10].ravel()
        np.testing.assert_allclose(shifted[f, 64:], src / src.max())


def test_foa_to_soa_passthrough(rng):
    cfg = SpatializerConfig(order_in=1, order_out=2)
    assert cfg.out_channels == 5
    _, _, foa = static_scene(rng, 0.6)
    masks, weights, out = forward(init_params(cfg), cfg, foa, flat_hints(0.6))
    assert out.order == 2 and out.num_channels == 9
    np.testing.assert_array_equal(out.channels[:4], foa.channels)
    assert weights.shape[1] == 5


TINY = SpatializerConfig(k=2, bands=8, hidden=6, sample_rate=1000, grid=(2, 4))


def tiny_problem(rng):
    x = rng.standard_normal((1, 1, 100))
    hints = [HintFeatures(rng.uniform(size=(1, 2, 4)))]
    target = rng.standard_normal((1, 3, 100))
    fe = front_end(TINY, x, hints)
    return fe, target


def test_end_to_end_gradient(rng):
    fe, target = tiny_problem(rng)
    params = init_params(TINY, 4)
    params["sep.1.b"] = rng.normal(0, 0.5, params["sep.1.b"].shape)  # keep sigmoids off saturation
    region = slice(0, 100)
    mask = channel_weights(TINY, np.array([True]))

    def loss_of(p):
        return stft_loss(forward_batch(p, fe).generated, target, TINY, region, mask)

    tensors = as_tensors(params, requires_grad=True)
    names = sorted(params)
    grads = dict(zip(names, ad.grad(loss_of(tensors), [tensors[n] for n in names])))
    for name in names:
        def f(v, name=name):
            return float(loss_of(as_tensors({**params, name: v})).value)
        num = ad.numerical_grad(f, params[name])
        err = np.linalg.norm(grads[name] - num) / max(np.linalg.norm(num), 1e-12)
        assert err < 1e-3, (name, err)


def test_gradient_wrt_weights_and_z_mask(rng):
    fe, target = tiny_problem(rng)
    params = as_tensors(init_params(TINY, 5))
    w0 = forward_batch(params, fe).weights.value

    def loss_of(w, z):
        res = forward_batch(params, fe, weights=w)
        return stft_loss(res.generated, target, TINY, slice(20, 80), channel_weights(TINY, np.array([z])))

    leaf = ad.leaf(w0)
    (g,) = ad.grad(loss_of(leaf, True), [leaf])
    num = ad.numerical_grad(lambda w: float(loss_of(w, True).value), w0)
    assert np.linalg.norm(g - num) / np.linalg.norm(num) < 1e-3
    (gz,) = ad.grad(loss_of(leaf, False), [leaf])
    assert np.all(gz[:, :, 1] == 0)  # generated channel 1 is Z
    assert np.any(gz[:, :, 0] != 0)


def test_loss_zero_on_identity(rng):
    _, _, gt = static_scene(rng)
    assert loss(gt, gt, SpatializerConfig()) == 0


# -- prior -----------------------------------------------------------------------

def test_prior_front_sources(rng):
    sigs = [encode_sources([(Waveform(rng.standard_normal(FS), FS), FRONT)], 1) for _ in range(3)]
    c = prior_fit(sigs)
    sampling = default_sampling()
    field = c.field(sampling.azimuth, sampling.elevation)
    assert sampling.nearest(FRONT) == int(np.argmax(field))
    out = prior_apply(Waveform(rng.standard_normal(FS), FS), c)
    assert energy_map(out, 0.5).peak == sampling.nearest(FRONT)


def test_prior_isotropic(rng):
    sigs = []
    for _ in range(400):
        d = Direction(rng.uniform(0, 2 * np.pi), np.arcsin(rng.uniform(-1, 1)))
        sigs.append(encode_sources([(Waveform(rng.standard_normal(FS), FS), d)], 1))
    g = prior_fit(sigs).gains()
    assert np.all(np.abs(g[1:]) < 0.05)


def test_prior_single_signal_is_its_own_map(rng):
    _, _, sig = static_scene(rng, 2.0)
    sampling = default_sampling()
    maps = [energy_map(sig, t, 0.1, sampling).weights for t in (0.5, 1.5)]
    assert prior_fit([sig]) == project(np.mean(maps, axis=0), sampling)


def test_prior_projection_of_point_map():
    sampling = default_sampling()
    w = np.zeros(len(sampling))
    w[17] = 1.0
    c = project(w, sampling)
    np.testing.assert_allclose(c.acn(), sh_matrix(1, sampling.azimuth[17], sampling.elevation[17]), atol=1e-12)


def test_prior_apply_contract(rng, tmp_path):
    mono = Waveform(rng.standard_normal(800), FS)
    out = prior_apply(mono, PriorCoefficients(1, 0, 0, 0))
    np.testing.assert_array_equal(out.channels[0], mono.samples)
    assert np.all(out.channels[1:] == 0)
    c = PriorCoefficients(0.8, 0.3, -0.2, 0.1)
    scaled = PriorCoefficients(2.4, 0.9, -0.6, 0.3)
    np.testing.assert_allclose(prior_apply(mono, c).channels, prior_apply(mono, scaled).channels, atol=1e-15)
    with pytest.raises(ValueError):
        prior_apply(mono, PriorCoefficients(0, 1, 0, 0))
    with pytest.raises(ValueError):
        prior_fit([])
    c.save(tmp_path / "p.json")
    assert PriorCoefficients.load(tmp_path / "p.json") == c


# -- training --------------------------------------------------------------------

def small_scenes(fs=8000):
    spec = SceneSpec([(SourceSpec("sine", frequency=440, seed=1), TrajectorySpec("static", azimuth=1.0, elevation=0.2)),
                      (SourceSpec("band-noise-burst", band=(1000, 3000), seed=2), TrajectorySpec("static", azimuth=-2.0))],
                     1.0, fs)
    return render_scene(spec)


def test_training_is_deterministic():
    _, hints, gt = small_scenes()
    cfg = TrainConfig(iterations=5, batch=2)
    scenes = [scene_from_signal(gt, hints, cfg)]
    a, b = train(scenes, cfg, sample_rate=8000), train(scenes, cfg, sample_rate=8000)
    assert a.history == b.history
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])


def test_single_scene_overfit():
    _, hints, gt = small_scenes()
    cfg = TrainConfig(iterations=500, batch=4, augment=False)
    result = train([scene_from_signal(gt, hints, cfg)], cfg, sample_rate=8000)
    h = np.array(result.history)
    assert np.mean(h[-10:]) < 0.1 * h[0]


def test_augmentation_is_pure_and_rotates_consistently():
    _, hints, gt = small_scenes()
    frames_before, channels_before = hints.frames.copy(), gt.channels.copy()
    model = SpatializerConfig(sample_rate=8000)
    on, off = TrainConfig(batch=16, seed=3), TrainConfig(batch=16, seed=3, augment=False)
    scene = scene_from_signal(gt, hints, on)
    b_on = sample_batch([scene], on, model, np.random.default_rng(0))
    b_off = sample_batch([scene], off, model, np.random.default_rng(0))
    assert not np.allclose(b_on.targets, b_off.targets)
    np.testing.assert_array_equal(hints.frames, frames_before)
    np.testing.assert_array_equal(gt.channels, channels_before)
    # each rotated target equals the source re-encoded at the rotated direction
    for b in range(16):
        shift = next(s for s in range(16) if np.array_equal(b_on.hints[b].frames, np.roll(hints.frames, s, axis=2)))
        start = int(round(b_on.offsets[b] * 8000))
        seg = AmbisonicSignal(gt.channels[:, start: start + b_on.targets.shape[2]], 8000, 1)
        expected = rotate_z(seg, 2 * np.pi * shift / 16).channels
        np.testing.assert_allclose(b_on.targets[b], expected[1:], atol=1e-9)
        np.testing.assert_allclose(b_on.inputs[b, 0], seg.channels[0], atol=1e-12)


def test_train_rejects_empty_and_writes_files(tmp_path):
    with pytest.raises(ValueError):
        train([], TrainConfig(iterations=1))
    manifest = gen_dataset(2, 0, 1, tmp_path / "d", duration=1.0, sample_rate=8000)
    cfg = TrainConfig(iterations=4, batch=2, checkpoint_every=2)
    result = train(manifest, cfg, out_dir=tmp_path / "m")
    assert [p.name for p in result.checkpoints] == ["checkpoint_000002.afg", "checkpoint_000004.afg"]
    params, model = load_model(tmp_path / "m/model.afg")
    assert model == result.model
    lines = (tmp_path / "m/loss.csv").read_text().splitlines()
    assert lines[0] == "iteration,loss" and len(lines) == 5
