import csv
import json

import numpy as np
import pytest

from ambiup.audio import Waveform, encode_sources
from ambiup.cli import main
from ambiup.export import energy_image, image_grid, pixel_of, read_pgm, write_pgm
from ambiup.sphmath import Direction
from ambiup.wavio import read_wav, write_wav

FS = 16000


@pytest.fixture
def mono_file(tmp_path, rng):
    path = tmp_path / "s.wav"
    write_wav(path, Waveform(0.3 * rng.standard_normal(2 * FS), FS))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--json")
    assert code == 0, err
    return json.loads(out)


def test_eval_identical_is_zero(tmp_path, mono_file, capsys):
    run(capsys, "encode", "--mono", mono_file, "--az", 30, "--el", 10, "--out", tmp_path / "a.wav")
    rep = run_json(capsys, "eval", "--pred", tmp_path / "a.wav", "--ref", tmp_path / "a.wav")
    assert rep["stft"] == 0 and rep["env"] == 0 and rep["emd"] == 0
    assert len(rep["chunks"]) == 2


def test_encode_rotate_eval(tmp_path, mono_file, capsys):
    run(capsys, "encode", "--mono", mono_file, "--az", 90, "--el", 0, "--out", tmp_path / "left.wav")
    run(capsys, "rotate", "--in", tmp_path / "left.wav", "--deg", -90, "--out", tmp_path / "rot.wav")
    run(capsys, "encode", "--mono", mono_file, "--az", 0, "--out", tmp_path / "front.wav")
    rep = run_json(capsys, "eval", "--pred", tmp_path / "rot.wav", "--ref", tmp_path / "front.wav",
                   "--csv", tmp_path / "c.csv", "--plot", tmp_path / "c.png")
    assert max(rep["stft"], rep["env"], rep["emd"]) < 1e-6
    rows = list(csv.DictReader(open(tmp_path / "c.csv")))
    assert [r["index"] for r in rows] == ["0", "1"] and set(rows[0]) == {"file", "index", "time", "stft", "env", "emd"}
    assert (tmp_path / "c.png").read_bytes()[:4] == b"\x89PNG"


def test_gen_scenes_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        code, _, err = run(capsys, "gen-scenes", "--count", 2, "--seed", 7, "--duration", 1, "--out", tmp_path / name)
        assert code == 0, err
    assert (tmp_path / "a/manifest.json").read_bytes() == (tmp_path / "b/manifest.json").read_bytes()
    assert (tmp_path / "a/scene_000_gt.wav").read_bytes() == (tmp_path / "b/scene_000_gt.wav").read_bytes()


@pytest.mark.parametrize("az,el", [(0, 0), (135, 30), (250, -45), (10, 80)])
def test_energymap_pgm_peak(tmp_path, mono_file, capsys, az, el):
    run(capsys, "encode", "--mono", mono_file, "--az", az, "--el", el, "--out", tmp_path / "e.wav")
    info = run_json(capsys, "energymap", "--in", tmp_path / "e.wav", "--time", 1.0, "--pgm", tmp_path / "m.pgm",
                    "--csv", tmp_path / "m.csv", "--png", tmp_path / "m.png")
    img = read_pgm(tmp_path / "m.pgm")
    assert img.shape == (37, 72) and img.max() == 255
    source_pixel = pixel_of(np.radians(az), np.radians(el), 37, 72)
    assert img[source_pixel] == 255  # neighbours may also round to 255
    exact = energy_image(read_wav(tmp_path / "e.wav"), 1.0)
    assert np.unravel_index(np.argmax(exact), exact.shape) == source_pixel
    # lattice peak is the Fibonacci point nearest the source
    got = Direction.from_degrees(info["peak_azimuth_deg"], info["peak_elevation_deg"]).unit_vector
    assert got @ Direction.from_degrees(az, el).unit_vector > np.cos(np.radians(20))
    rows = list(csv.DictReader(open(tmp_path / "m.csv")))
    assert len(rows) == 128 and abs(sum(float(r["weight"]) for r in rows) - 1) < 1e-9


def test_pgm_round_trip(tmp_path, rng):
    img = rng.uniform(size=(5, 7))
    img.flat[3] = 10 / 255  # byte value that reads as whitespace
    write_pgm(img, tmp_path / "x.pgm")
    np.testing.assert_array_equal(read_pgm(tmp_path / "x.pgm"), np.round(img * 255).astype(np.uint8))
    az, el = image_grid(37, 72)
    assert np.degrees(el[0, 0]) == 90 and np.degrees(el[-1, 0]) == -90 and np.degrees(az[0, 1]) == 5


def test_exit_codes(tmp_path, mono_file, capsys):
    code, _, err = run(capsys, "encode", "--az", 10)
    assert code == 1 and "required" in err
    code, _, _ = run(capsys, "encode", "--mono", mono_file, "--az", 0, "--el", 120, "--out", tmp_path / "x.wav")
    assert code == 1 and not (tmp_path / "x.wav").exists()
    code, _, err = run(capsys, "eval", "--pred", tmp_path / "nope.wav", "--ref", mono_file)
    assert code == 2 and len(err.strip().splitlines()) == 1
    (tmp_path / "bad.wav").write_bytes(b"RIFF0000WAVEjunk")
    code, _, err = run(capsys, "rotate", "--in", tmp_path / "bad.wav", "--deg", 10, "--out", tmp_path / "y.wav")
    assert code == 2
    run(capsys, "encode", "--mono", mono_file, "--az", 0, "--out", tmp_path / "foa.wav")
    run(capsys, "encode", "--mono", mono_file, "--az", 0, "--order", 2, "--out", tmp_path / "soa.wav")
    code, _, _ = run(capsys, "eval", "--pred", tmp_path / "foa.wav", "--ref", tmp_path / "soa.wav")
    assert code == 2
    code, _, _ = run(capsys, "bogus")
    assert code == 1


def test_config_file_precedence(tmp_path, mono_file, capsys):
    run(capsys, "encode", "--mono", mono_file, "--az", 0, "--out", tmp_path / "e.wav")
    (tmp_path / "cfg.json").write_text(json.dumps({"time": 0.5, "rows": 19}))
    info = run_json(capsys, "energymap", "--in", tmp_path / "e.wav", "--config", tmp_path / "cfg.json",
                    "--rows", 10, "--pgm", tmp_path / "m.pgm")
    assert info["time"] == 0.5 and read_pgm(tmp_path / "m.pgm").shape == (10, 72)
    (tmp_path / "bad.json").write_text(json.dumps({"colour": 1}))
    code, _, _ = run(capsys, "energymap", "--in", tmp_path / "e.wav", "--config", tmp_path / "bad.json")
    assert code == 1


def test_train_spatialize_prior_pipeline(tmp_path, capsys):
    assert run(capsys, "gen-scenes", "--count", 4, "--duration", 1, "--sample-rate", 8000,
               "--out", tmp_path / "d")[0] == 0
    (tmp_path / "t.json").write_text(json.dumps({"k": 2, "iterations": 50, "batch": 2}))
    info = run_json(capsys, "train", "--manifest", tmp_path / "d/manifest.json", "--out", tmp_path / "m",
                    "--config", tmp_path / "t.json", "--iterations", 3)
    assert json.loads((tmp_path / "m/train_config.json").read_text())["iterations"] == 3
    assert (tmp_path / "m/loss.png").exists() and info["model"].endswith("model.afg")
    out = tmp_path / "pred.wav"
    code, _, err = run(capsys, "spatialize", "--model", tmp_path / "m/model.afg", "--input",
                       tmp_path / "d/scene_000_mono.wav", "--hints", tmp_path / "d/scene_000_hints.json",
                       "--out", out)
    assert code == 0, err
    assert read_wav(out).num_channels == 4
    prior = run_json(capsys, "prior", "fit", "--manifest", tmp_path / "d/manifest.json", "--out", tmp_path / "p.json")
    assert prior["w"] == pytest.approx(1.0)
    assert run(capsys, "prior", "apply", "--mono", tmp_path / "d/scene_000_mono.wav", "--prior",
               tmp_path / "p.json", "--out", tmp_path / "pa.wav")[0] == 0
    rep = run_json(capsys, "eval", "--pred", tmp_path / "d", "--ref", tmp_path / "d")
    assert rep["emd"] == 0 and len(rep["files"]) == 4


def test_encode_matches_library(tmp_path, mono_file, capsys):
    run(capsys, "encode", "--mono", mono_file, "--az", 45, "--el", -20, "--order", 2, "--out", tmp_path / "e.wav")
    expected = encode_sources([(read_wav(mono_file), Direction.from_degrees(45, -20))], 2)
    np.testing.assert_allclose(read_wav(tmp_path / "e.wav").channels, expected.channels, atol=1e-7)
