import numpy as np
import pytest

from ambiup.optim import AdamHyper, AdamState, adam_step, load_checkpoint, save_checkpoint


def test_published_defaults():
    h = AdamHyper()
    assert (h.beta1, h.beta2, h.eps, h.lr, h.weight_decay) == (0.9, 0.999, 1e-8, 1e-4, 0.0005)


def test_zero_gradient_only_decays(rng):
    p = {"w": rng.standard_normal((3, 2))}
    new, state = adam_step(p, {"w": np.zeros((3, 2))}, AdamState())
    np.testing.assert_allclose(new["w"], p["w"] * (1 - 1e-4 * 5e-4), rtol=1e-15)
    assert state.step == 1


def test_first_step_closed_form(rng):
    g = rng.standard_normal(5)
    p = {"w": rng.standard_normal(5)}
    h = AdamHyper(lr=1e-2, weight_decay=0.0)
    new, _ = adam_step(p, {"w": g}, AdamState(), h)
    # bias correction cancels on the first step: m_hat = g, v_hat = g^2
    np.testing.assert_allclose(new["w"], p["w"] - h.lr * g / (np.abs(g) + h.eps), rtol=1e-12)


def test_trajectory_is_deterministic_and_pure(rng):
    p0 = {"a": rng.standard_normal(4), "b": rng.standard_normal((2, 2))}
    grads = [{k: rng.standard_normal(v.shape) for k, v in p0.items()} for _ in range(5)]

    def run():
        p, s = {k: v.copy() for k, v in p0.items()}, AdamState()
        for g in grads:
            p, s = adam_step(p, g, s)
        return p

    a, b = run(), run()
    for k in p0:
        np.testing.assert_array_equal(a[k], b[k])


def test_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step({"w": np.zeros(3)}, {"w": np.zeros(4)}, AdamState())


def test_checkpoint_round_trip(tmp_path, rng):
    params = {"layer.W": rng.standard_normal((3, 4)), "layer.b": rng.standard_normal(4), "s": np.array(2.5)}
    path = tmp_path / "m.afg"
    save_checkpoint(path, params, {"note": "x"})
    assert path.read_bytes()[:4] == b"AFG1"
    loaded, meta = load_checkpoint(path)
    assert meta["note"] == "x" and meta["format"] == "AFG1"
    for k in params:
        np.testing.assert_array_equal(loaded[k], params[k])


def test_checkpoint_rejects_damage(tmp_path, rng):
    path = tmp_path / "m.afg"
    save_checkpoint(path, {"w": rng.standard_normal(10)})
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(path)
    path.write_bytes(b"NOPE" + data[4:])
    with pytest.raises(ValueError):
        load_checkpoint(path)
