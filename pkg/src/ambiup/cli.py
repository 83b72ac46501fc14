"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error (missing or malformed
input, incompatible orders). Angles are given in degrees.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__

USAGE_ERROR, DATA_ERROR = 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="random seed")
    p.add_argument("--quiet", action="store_true", help="suppress progress and text output")
    p.add_argument("--json", action="store_true", help="print a machine-readable JSON result")
    p.add_argument("--config", type=Path, default=None, help="JSON file of flag values (flags win)")
    return p


def build_parser(explicit_only: bool = False) -> argparse.ArgumentParser:
    """With ``explicit_only`` all defaults are suppressed, leaving just the flags actually typed."""
    common = _common()
    parser = _Parser(prog="ambiup", description="Ambisonic upmixing toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-scenes", parents=[common], help="render a synthetic dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--order", type=int, choices=(1, 2), default=1)
    p.add_argument("--out", type=Path, default=Path("scenes"))
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--min-sources", type=int, default=1)
    p.add_argument("--max-sources", type=int, default=3)

    p = sub.add_parser("encode", parents=[common], help="encode a mono file at a fixed direction")
    p.add_argument("--mono", type=Path, required=True)
    p.add_argument("--az", type=float, required=True, help="azimuth, degrees counterclockwise from front")
    p.add_argument("--el", type=float, default=0.0, help="elevation, degrees")
    p.add_argument("--order", type=int, choices=(1, 2), default=1)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("rotate", parents=[common], help="rotate a sound field about the vertical axis")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--deg", type=float, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("spatialize", parents=[common], help="run a trained model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True, help="mono (or FOA for FOA->SOA models) WAV")
    p.add_argument("--hints", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", parents=[common], help="train a model on a scene manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--iterations", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--variant", choices=("full", "nosep", "nohints"))
    p.add_argument("--order-in", type=int, choices=(0, 1))
    p.add_argument("--order-out", type=int, choices=(1, 2))
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--checkpoint-every", type=int)

    p = sub.add_parser("eval", parents=[common], help="score predictions against references")
    p.add_argument("--pred", type=Path, required=True, help="WAV file or directory")
    p.add_argument("--ref", type=Path, required=True, help="WAV file or directory")
    p.add_argument("--lattice", type=int, default=128)
    p.add_argument("--csv", type=Path, default=None, help="per-chunk metrics CSV")
    p.add_argument("--plot", type=Path, default=None, help="per-chunk metrics PNG")

    p = sub.add_parser("prior", help="spatial-prior baseline")
    psub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = psub.add_parser("fit", parents=[common])
    q.add_argument("--manifest", type=Path, required=True)
    q.add_argument("--out", type=Path, required=True)
    q = psub.add_parser("apply", parents=[common])
    q.add_argument("--mono", type=Path, required=True)
    q.add_argument("--prior", type=Path, required=True)
    q.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("energymap", parents=[common], help="export a directional energy map")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--time", type=float, default=None, help="window center in seconds (default: middle)")
    p.add_argument("--window", type=float, default=0.1)
    p.add_argument("--lattice", type=int, default=128)
    p.add_argument("--rows", type=int, default=37)
    p.add_argument("--cols", type=int, default=72)
    p.add_argument("--csv", type=Path, default=None)
    p.add_argument("--pgm", type=Path, default=None)
    p.add_argument("--png", type=Path, default=None)
    if explicit_only:
        _suppress_defaults(parser)
    return parser


def _suppress_defaults(parser: argparse.ArgumentParser) -> None:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for child in action.choices.values():
                _suppress_defaults(child)
        elif action.dest not in ("help", "version"):
            action.default = argparse.SUPPRESS


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Config-file values replace defaults; flags typed on the command line still win."""
    args = parser.parse_args(argv)
    if args.config is None or args.command == "train":
        return args
    try:
        values = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{args.config}: cannot read config ({exc})") from exc
    if not isinstance(values, dict):
        raise DataError(f"{args.config}: config must be a JSON object")
    values = {k.replace("-", "_"): v for k, v in values.items()}
    merged = vars(args)
    unknown = sorted(set(values) - set(merged) - {"command", "action", "config"})
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    for key, value in values.items():
        merged[key] = Path(value) if isinstance(merged.get(key), Path) else value
    merged.update(vars(build_parser(explicit_only=True).parse_args(argv)))
    return argparse.Namespace(**merged)


# -- helpers -------------------------------------------------------------------

def _read(path):
    from .wavio import read_wav

    if not Path(path).exists():
        raise DataError(f"{path}: no such file")
    return read_wav(path)


def _read_ambisonic(path):
    from .audio import AmbisonicSignal

    sig = _read(path)
    if not isinstance(sig, AmbisonicSignal):
        raise DataError(f"{path}: expected an ambisonic (3, 4 or 9 channel) file")
    return sig


def _read_mono(path):
    from .audio import Waveform

    sig = _read(path)
    if not isinstance(sig, Waveform):
        raise DataError(f"{path}: expected a mono file")
    return sig


def _check_parent(path: Path):
    if not path.parent.exists():
        raise DataError(f"{path.parent}: directory does not exist")


class _Out:
    def __init__(self, args):
        self.json, self.quiet = args.json, args.quiet

    def text(self, msg: str):
        if not self.quiet and not self.json:
            print(msg)

    def result(self, obj: dict, text: str | None = None):
        if self.json:
            print(json.dumps(obj, sort_keys=True))
        elif text is not None:
            self.text(text)


# -- subcommands -----------------------------------------------------------------

def cmd_gen_scenes(args, out: _Out):
    from .scenes import gen_dataset

    if args.count < 2:
        raise UsageError("--count must be at least 2")
    if not 1 <= args.min_sources <= args.max_sources <= 4:
        raise UsageError("need 1 <= --min-sources <= --max-sources <= 4")
    if args.duration <= 0 or args.sample_rate <= 0:
        raise UsageError("--duration and --sample-rate must be positive")
    manifest = gen_dataset(args.count, 0 if args.seed is None else args.seed, args.order, args.out,
                           args.duration, args.sample_rate, args.min_sources, args.max_sources)
    path = args.out / "manifest.json"
    out.result({"manifest": str(path), "train": len(manifest.split("train")), "test": len(manifest.split("test"))},
               f"wrote {len(manifest.scenes)} scenes to {args.out} ({path})")


def cmd_encode(args, out: _Out):
    from .audio import encode_sources
    from .sphmath import Direction
    from .wavio import write_wav

    if not -90 <= args.el <= 90:
        raise UsageError("--el must lie in [-90, 90]")
    mono = _read_mono(args.mono)
    _check_parent(args.out)
    sig = encode_sources([(mono, Direction.from_degrees(args.az, args.el))], args.order)
    write_wav(args.out, sig)
    out.result({"out": str(args.out), "order": args.order}, f"wrote {args.out}")


def cmd_rotate(args, out: _Out):
    from .audio import rotate_z
    from .wavio import write_wav

    sig = _read_ambisonic(args.input)
    _check_parent(args.out)
    write_wav(args.out, rotate_z(sig, np.radians(args.deg)))
    out.result({"out": str(args.out), "degrees": args.deg}, f"wrote {args.out}")


def cmd_spatialize(args, out: _Out):
    from .hints import HintFeatures
    from .spatializer import forward, load_model
    from .wavio import write_wav

    if not args.model.exists():
        raise DataError(f"{args.model}: no such file")
    params, model = load_model(args.model)
    signal = _read(args.input)
    hints = None
    if model.uses_hints:
        if args.hints is None:
            raise UsageError("this model needs --hints")
        hints = HintFeatures.load(args.hints)
    _check_parent(args.out)
    _, _, pred = forward(params, model, signal, hints)
    write_wav(args.out, pred)
    out.result({"out": str(args.out), "order": pred.order}, f"wrote {args.out}")


def cmd_train(args, out: _Out):
    from . import plotting
    from .scenes import DatasetManifest
    from .spatializer.training import TrainConfig, train

    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    overrides = {"iterations": args.iterations, "lr": args.lr, "batch": args.batch, "k": args.k,
                 "variant": args.variant, "order_in": args.order_in, "order_out": args.order_out,
                 "checkpoint_every": args.checkpoint_every, "seed": args.seed}
    d = cfg.to_dict()
    d.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_augment:
        d["augment"] = False
    cfg = TrainConfig.from_dict(d)
    if cfg.iterations < 1 or cfg.batch < 1 or cfg.lr <= 0:
        raise UsageError("iterations and batch must be positive, lr > 0")
    if cfg.order_out <= cfg.order_in:
        raise UsageError("--order-out must exceed --order-in")
    manifest = DatasetManifest.load(args.manifest)
    args.out.mkdir(parents=True, exist_ok=True)
    every = max(1, cfg.iterations // 20)

    def progress(it, loss):
        if it % every == 0 or it == cfg.iterations:
            out.text(f"iteration {it:6d}  loss {loss:.6g}")

    result = train(manifest, cfg, out_dir=args.out, progress=progress)
    (args.out / "train_config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    plotting.loss_curve(result.history, args.out / "loss.png")
    out.result({"model": str(args.out / "model.afg"), "loss_csv": str(args.out / "loss.csv"),
                "loss_png": str(args.out / "loss.png"), "final_loss": result.history[-1],
                "seconds": result.seconds},
               f"wrote {args.out / 'model.afg'}, {args.out / 'loss.csv'} and {args.out / 'loss.png'}")


def _pairs(pred: Path, ref: Path) -> list[tuple[str, Path, Path]]:
    if pred.is_dir() != ref.is_dir():
        raise UsageError("--pred and --ref must both be files or both be directories")
    if not pred.is_dir():
        return [(ref.name, pred, ref)]
    names = sorted(p.name for p in ref.glob("*.wav"))
    if not names:
        raise DataError(f"{ref}: no WAV files")
    return [(n, pred / n, ref / n) for n in names]


def cmd_eval(args, out: _Out):
    from .metrics import EvalConfig, MetricReport, evaluate_pair

    if args.lattice < 1 or args.lattice > 256:
        raise UsageError("--lattice must lie in [1, 256]")
    cfg = EvalConfig(lattice=args.lattice)
    from .audio import AmbisonicSignal

    files = []
    directory = args.ref.is_dir()
    for name, p, r in _pairs(args.pred, args.ref):
        ref = _read(r)
        if directory and not isinstance(ref, AmbisonicSignal):
            continue  # mono inputs sitting next to the references
        if not isinstance(ref, AmbisonicSignal):
            raise DataError(f"{r}: expected an ambisonic (3, 4 or 9 channel) file")
        files.append((name, evaluate_pair(_read_ambisonic(p), ref, cfg)))
    if not files:
        raise DataError(f"{args.ref}: no ambisonic references")
    rows = [dict(file=name, **c) for name, rep in files for c in rep.chunks]
    if args.csv:
        _check_parent(args.csv)
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["file", "index", "time", "stft", "env", "emd"])
            w.writeheader()
            w.writerows(rows)
    if args.plot:
        from . import plotting

        _check_parent(args.plot)
        plotting.chunk_metrics(files[0][1].chunks, args.plot, title=files[0][0])
    if len(files) == 1:
        body = files[0][1].to_dict()
    else:
        mean = MetricReport.mean([rep for _, rep in files])
        body = {"stft": mean.stft_mse, "env": mean.env, "emd": mean.emd, "lattice": args.lattice,
                "chunks": [], "files": [dict(file=n, **rep.to_dict()) for n, rep in files]}
    out.result(body, f"stft={body['stft']:.6g} env={body['env']:.6g} emd={body['emd']:.6g} "
                     f"({sum(len(rep.chunks) for _, rep in files)} chunks, {len(files)} file(s))")


def cmd_prior(args, out: _Out):
    from .scenes import DatasetManifest
    from .spatializer.prior import PriorCoefficients, prior_apply, prior_fit
    from .wavio import write_wav

    if args.action == "fit":
        _check_parent(args.out)
        coeffs = prior_fit(DatasetManifest.load(args.manifest))
        coeffs.save(args.out)
        out.result({"w": coeffs.w, "x": coeffs.x, "y": coeffs.y, "z": coeffs.z},
                   f"c = (w {coeffs.w:.4f}, x {coeffs.x:.4f}, y {coeffs.y:.4f}, z {coeffs.z:.4f}) -> {args.out}")
    else:
        coeffs = PriorCoefficients.load(args.prior)
        mono = _read_mono(args.mono)
        _check_parent(args.out)
        write_wav(args.out, prior_apply(mono, coeffs))
        out.result({"out": str(args.out)}, f"wrote {args.out}")


def cmd_energymap(args, out: _Out):
    from .export import energy_image, write_energy_csv, write_pgm
    from .metrics import default_sampling, energy_map

    if args.window <= 0 or args.lattice < 1 or args.rows < 2 or args.cols < 1:
        raise UsageError("--window, --lattice, --rows and --cols must be positive (rows >= 2)")
    sig = _read_ambisonic(args.input)
    t = sig.duration / 2 if args.time is None else args.time
    for path in (args.csv, args.pgm, args.png):
        if path is not None:
            _check_parent(path)
    emap = energy_map(sig, t, args.window, default_sampling(args.lattice))
    img = energy_image(sig, t, args.window, args.rows, args.cols)
    if args.csv:
        write_energy_csv(emap, args.csv)
    if args.pgm:
        write_pgm(img, args.pgm)
    peak = emap.sampling.points[emap.peak]
    az, el = peak.degrees()
    if args.png:
        from . import plotting

        plotting.energy_image(img, args.png, marker=(az, el), title=f"{args.input.name} @ {t:.2f} s")
    out.result({"time": t, "peak_azimuth_deg": az, "peak_elevation_deg": el, "zero_energy": emap.zero_energy},
               f"peak at azimuth {az:.1f} deg, elevation {el:.1f} deg")


COMMANDS = {"gen-scenes": cmd_gen_scenes, "encode": cmd_encode, "rotate": cmd_rotate,
            "spatialize": cmd_spatialize, "train": cmd_train, "eval": cmd_eval, "prior": cmd_prior,
            "energymap": cmd_energymap}


def main(argv=None) -> int:
    from .wavio import WavError

    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        try:
            args = _apply_config(parser, argv)
        except SystemExit as exc:  # argparse usage errors and --help
            return int(exc.code or 0)
        return COMMANDS[args.command](args, _Out(args)) or 0
    except UsageError as exc:
        print(f"ambiup: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (DataError, WavError, ValueError, OSError, KeyError) as exc:
        print(f"ambiup: {exc}".splitlines()[0], file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
