import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambiup.audio import (AmbisonicSignal, Trajectory, Waveform, encode_sources, evaluate_soundfield,
                          mixdown_mono, rotate_z, rotation_matrix_z)
from ambiup.sphmath import FRONT, LEFT, Direction, rotate_direction_z, sh_matrix

FS = 1000


def impulse(n=16):
    x = np.zeros(n)
    x[0] = 1.0
    return Waveform(x, FS)


def random_sources(rng, count, n=400, moving=True):
    out = []
    for _ in range(count):
        wave = Waveform(rng.standard_normal(n), FS)
        if moving:
            k = int(rng.integers(2, 6))
            traj = Trajectory(rng.uniform(0, 2 * np.pi, k), np.arcsin(rng.uniform(-1, 1, k)), 10.0)
        else:
            traj = Trajectory.static(Direction(rng.uniform(0, 2 * np.pi), np.arcsin(rng.uniform(-1, 1))))
        out.append((wave, traj))
    return out


def test_waveform_validation():
    with pytest.raises(ValueError):
        Waveform([0.0, np.nan], FS)
    with pytest.raises(ValueError):
        Waveform([0.0], 0)


def test_ambisonic_validation():
    with pytest.raises(ValueError):
        AmbisonicSignal(np.zeros((3, 10)), FS, 1)
    with pytest.raises(ValueError):
        AmbisonicSignal(np.zeros((4, 10)), FS, 1, "FuMa")


def test_front_impulse():
    sig = encode_sources([(impulse(), FRONT)], 1)
    np.testing.assert_array_equal(sig.channels[:, 0], [1, 0, 0, 1])
    assert np.all(sig.channels[:, 1:] == 0)


def test_linearity(rng):
    srcs = random_sources(rng, 2)
    both = encode_sources(srcs, 2)
    parts = sum(encode_sources([s], 2).channels for s in srcs)
    np.testing.assert_allclose(both.channels, parts, atol=1e-12)


def test_sweep_front_to_left_x_channel():
    n = FS
    traj = Trajectory([0.0, np.pi / 2], [0.0, 0.0], 1.0)
    sig = encode_sources([(Waveform(np.ones(n), FS), traj)], 1)
    t = np.arange(n) / FS
    # oracle: normalized linear interpolation between the two unit vectors
    v = np.stack([1 - t, t, 0 * t], axis=1)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    np.testing.assert_allclose(sig.channels[3], v[:, 0], atol=1e-12)
    np.testing.assert_allclose(sig.channels[1], v[:, 1], atol=1e-12)


def test_mismatched_sources_rejected():
    with pytest.raises(ValueError):
        encode_sources([(Waveform(np.ones(5), FS), FRONT), (Waveform(np.ones(6), FS), FRONT)], 1)
    with pytest.raises(ValueError):
        encode_sources([], 1)


def test_rotate_front_to_left():
    front = encode_sources([(impulse(), FRONT)], 2)
    left = encode_sources([(impulse(), LEFT)], 2)
    np.testing.assert_allclose(rotate_z(front, np.pi / 2).channels, left.channels, atol=1e-15)


def test_rotation_identity_and_inverse(rng):
    sig = encode_sources(random_sources(rng, 2), 2)
    np.testing.assert_array_equal(rotate_z(sig, 0.0).channels, sig.channels)
    back = rotate_z(rotate_z(sig, 1.3), -1.3)
    np.testing.assert_allclose(back.channels, sig.channels, atol=1e-12)
    with pytest.raises(ValueError):
        rotation_matrix_z(3, 0.1)


def test_rotation_keeps_w_and_z(rng):
    sig = encode_sources(random_sources(rng, 1), 1)
    rot = rotate_z(sig, 0.7)
    np.testing.assert_array_equal(rot.channels[[0, 2]], sig.channels[[0, 2]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-7, 7))
def test_rotation_equivariance(seed, psi):
    rng = np.random.default_rng(seed)
    srcs = random_sources(rng, int(rng.integers(1, 4)), n=200)
    lhs = rotate_z(encode_sources(srcs, 2), psi)
    rhs = encode_sources([(w, t.rotated_z(psi)) for w, t in srcs], 2)
    assert np.sqrt(np.mean((lhs.channels - rhs.channels) ** 2)) < 1e-9


def test_rotation_matrix_same_for_both_normalizations(rng):
    srcs = random_sources(rng, 1, moving=False)
    for norm in ("N3D", "SN3D"):
        sig = encode_sources(srcs, 2, norm)
        d = srcs[0][1].directions()[0]
        y = sh_matrix(2, rotate_direction_z(d, 0.4).azimuth, d.elevation, norm)
        np.testing.assert_allclose(rotate_z(sig, 0.4).channels, np.outer(y, srcs[0][0].samples), atol=1e-12)


def test_soundfield_evaluation():
    s = Waveform(np.linspace(-1, 1, 20), FS)
    w_only = AmbisonicSignal(np.vstack([s.samples, np.zeros((3, 20))]), FS, 1)
    np.testing.assert_array_equal(evaluate_soundfield(w_only, Direction(1.0, 0.4)).samples, s.samples)
    sig = encode_sources([(s, FRONT)], 1, "N3D")
    np.testing.assert_allclose(evaluate_soundfield(sig, FRONT).samples, 4 * s.samples, atol=1e-12)
    zero = AmbisonicSignal(np.zeros((4, 20)), FS, 1)
    assert np.all(evaluate_soundfield(zero, LEFT).samples == 0)


def test_soundfield_degree0_projection_monte_carlo(rng):
    s = Waveform(rng.standard_normal(8), FS)
    sig = encode_sources([(s, Direction(0.3, 0.5))], 2, "N3D")
    v = rng.standard_normal((200_000, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    Y = sh_matrix(2, np.arctan2(v[:, 1], v[:, 0]), np.arcsin(v[:, 2]), "N3D")
    field = Y @ sig.channels
    projection = field.mean(axis=0)  # Y_0^0 = 1 in N3D
    np.testing.assert_allclose(projection, s.samples, rtol=0.02)


def test_mixdown(rng):
    srcs = random_sources(rng, 2)
    sig = encode_sources(srcs, 1)
    np.testing.assert_array_equal(mixdown_mono(sig).samples, sig.channels[0])
    single = encode_sources([srcs[0]], 2)
    np.testing.assert_array_equal(mixdown_mono(single).samples, srcs[0][0].samples)


def test_trajectory_holds_after_end():
    tr = Trajectory([0.0, 1.0], [0.0, 0.0], 10.0)
    np.testing.assert_allclose(tr.vectors_at([5.0])[0], tr.keyframes[-1])
    az, el = tr.angles_at([0.05])
    assert az[0] == pytest.approx(0.5, abs=1e-12)
