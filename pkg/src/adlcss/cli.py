"""``adlcss`` command line: simulate, train, separate, eval, inspect.

Exit codes: 0 success, 1 usage error, 2 runtime error.  Log verbosity comes
from the ``ADLB_LOG`` environment variable (debug, info, warning, error).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff.checkpoint import CheckpointError, file_hash
from .config import ConfigError, RunConfig

log = logging.getLogger("adlcss")

TOGGLES = (("norm_v", "--no-norm-v", "disable steering-vector normalization"),
           ("psd", "--no-psd", "disable the positive semi-definite inverse parameterization"),
           ("vad", "--no-vad", "disable the frame-level VAD gate"),
           ("residual", "--no-residual", "disable the residual connection to the masked reference"))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=88, max_help_position=32)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="key = value config file")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--threads", type=int, default=None, metavar="N",
                   help="cap numeric library threads")


def _model_flags(p: argparse.ArgumentParser, with_mode=True) -> None:
    if with_mode:
        p.add_argument("--mode", choices=("mask-only", "classical-mvdr", "adl-mvdr"),
                       default="adl-mvdr", help="separation path (default: adl-mvdr)")
    p.add_argument("--ckpt", metavar="FILE", help="model checkpoint (.adlb)")
    for _, flag, text in TOGGLES:
        p.add_argument(flag, action="store_true", help=text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adlcss", formatter_class=_formatter,
                     description="Multi-channel continuous speech separation with ADL-MVDR beamforming.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("simulate", help="write simulated mixtures and a manifest",
                       formatter_class=_formatter)
    _common(p)
    p.add_argument("--count", type=int, required=True, help="number of mixtures")
    p.add_argument("--channels", type=int, default=7, help="microphones per array (default: 7)")
    p.add_argument("--sources", type=int, choices=(1, 2), default=None,
                   help="force the speaker count (default: random)")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")

    p = sub.add_parser("train", help="train the separation model", formatter_class=_formatter)
    _common(p)
    _model_flags(p, with_mode=False)
    p.add_argument("--manifest", required=True, metavar="FILE", help="training manifest.jsonl")
    p.add_argument("--channels", type=int, default=None, help="use the first N channels")
    p.add_argument("--out", required=True, metavar="DIR", help="checkpoint directory")

    p = sub.add_parser("separate", help="separate a recording into two streams",
                       formatter_class=_formatter)
    _common(p)
    _model_flags(p)
    p.add_argument("input", metavar="WAV", help="multi-channel input recording")
    p.add_argument("--out", default=".", metavar="DIR", help="output directory (default: .)")

    p = sub.add_parser("eval", help="score separation on a manifest", formatter_class=_formatter)
    _common(p)
    _model_flags(p)
    p.add_argument("--manifest", required=True, metavar="FILE", help="evaluation manifest.jsonl")
    p.add_argument("--out", default="eval.csv", metavar="FILE", help="CSV path (default: eval.csv)")

    p = sub.add_parser("inspect", help="dump beamforming weights and VAD gains",
                       formatter_class=_formatter)
    _common(p)
    _model_flags(p)
    p.add_argument("input", metavar="WAV", help="multi-channel input recording")
    p.add_argument("--out", default="inspect.bin", metavar="FILE",
                   help="dump path (default: inspect.bin)")
    return parser


# helpers ----------------------------------------------------------------------

def _configure_logging() -> None:
    level = os.environ.get("ADLB_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _limit_threads(n):
    if not n:
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("--threads ignored: threadpoolctl not available")
        return
    threadpool_limits(n)


def _layer(rc: RunConfig, args) -> RunConfig:
    """File, then --set, then flags, on top of whatever ``rc`` already holds."""
    if args.config:
        rc.load_file(args.config)
    rc.apply(args.set)
    for key, flag, _ in TOGGLES:
        if getattr(args, flag[2:].replace("-", "_"), False):
            rc.set(f"model.{key}", False)
    return rc


def _toggles(rc: RunConfig) -> dict:
    return {k: rc[f"model.{k}"] for k, _, _ in TOGGLES}


def _load(args, channels: int):
    """Model from ``--ckpt`` (config layered on the stored one) or freshly seeded."""
    from .css.model import SeparationModel
    from .css.train import load_model
    if args.ckpt:
        model, rc, _ = load_model(args.ckpt, adjust=lambda rc: _layer(rc, args))
        digest = file_hash(args.ckpt)
    else:
        log.warning("no --ckpt given; using randomly initialized weights (seed %d)", args.seed)
        rc = _layer(RunConfig(), args)
        rc.set("model.channels", channels)
        model = SeparationModel(rc, np.random.default_rng(args.seed))
        digest = None
    return model, rc, digest


def _read_input(path):
    from .signal.wav import read_wav
    wf = read_wav(path)
    if wf.channels < 1:
        raise ValueError(f"{path}: recording has no channels")
    return wf


def _check_rate(rc: RunConfig, sample_rate: int):
    if rc["sim.sample_rate"] != sample_rate:
        log.info("input rate %d differs from configured %d", sample_rate, rc["sim.sample_rate"])


# subcommands ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .sim.mixture import simulate_dataset
    rc = _layer(RunConfig(), args)
    if args.count < 0:
        raise UsageError("--count must be non-negative")
    manifest = simulate_dataset(args.out, args.count, args.channels, args.seed, rc.sim(),
                                num_sources=args.sources)
    (Path(args.out) / "config.txt").write_text(rc.dumps())
    print(manifest)
    return 0


def cmd_train(args) -> int:
    from .css.data import load_examples
    from .css.model import SeparationModel
    from .css.train import load_model, train
    from .sim.mixture import read_manifest
    records = read_manifest(args.manifest)
    if not records:
        raise ValueError(f"{args.manifest}: manifest is empty")
    channels = args.channels or records[0]["channels"]
    if args.ckpt:
        model, rc, _ = load_model(args.ckpt, adjust=lambda rc: _layer(rc, args))
    else:
        rc = RunConfig()
        rc.set("model.channels", channels)
        rc.set("sim.sample_rate", records[0]["sample_rate"])
        _layer(rc, args)
        model = SeparationModel(rc, np.random.default_rng(args.seed))
    examples = load_examples(args.manifest, rc.stft(), rc["model.channels"],
                             components=rc["train.dynamic_mix"])
    result = train(model, examples, rc, args.out, seed=args.seed)
    print(result.final)
    return 0


def cmd_separate(args) -> int:
    from .css.separate import separate
    from .signal.wav import MultichannelWaveform, write_wav
    wf = _read_input(args.input)
    model, rc, digest = _load(args, wf.channels)
    _check_rate(rc, wf.sample_rate)
    res = separate(model, wf, args.mode, rc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = Path(args.input).stem
    paths = []
    for k in range(2):
        p = out / f"{name}.stream{k}.wav"
        write_wav(MultichannelWaveform(res.streams[k][None], wf.sample_rate), p)
        paths.append(str(p))
    sidecar = {
        "input": str(args.input),
        "mode": args.mode,
        "toggles": _toggles(rc),
        "checkpoint": args.ckpt,
        "checkpoint_sha256": digest,
        "seed": args.seed,
        "chunks": len(res.schedule),
        "permutations": [list(p) for p in res.permutations],
        "decisions": [list(p) for p in res.decisions],
        "streams": paths,
        "config": rc.to_dict(),
    }
    (out / f"{name}.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    for p in paths:
        print(p)
    return 0


def cmd_eval(args) -> int:
    from .css.data import load_examples
    from .css.separate import evaluate
    from .sim.mixture import read_manifest
    records = read_manifest(args.manifest)
    if not records:
        raise ValueError(f"{args.manifest}: manifest is empty")
    model, rc, digest = _load(args, records[0]["channels"])
    examples = load_examples(args.manifest, rc.stft(), rc["model.channels"])
    rows = evaluate(model, examples, args.mode, rc)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["id"])
        writer.writeheader()
        writer.writerows(rows)
    Path(str(args.out) + ".json").write_text(json.dumps(
        {"mode": args.mode, "toggles": _toggles(rc), "checkpoint": args.ckpt,
         "checkpoint_sha256": digest, "config": rc.to_dict()}, indent=2, sort_keys=True) + "\n")
    if rows:
        print(f"mixtures {len(rows)}  mean SI-SDR {np.mean([r['si_sdr'] for r in rows]):.2f} dB  "
              f"improvement {np.mean([r['si_sdr_improvement'] for r in rows]):.2f} dB")
    return 0


def inspect_dtype(channels: int) -> np.dtype:
    return np.dtype([("stream", "<i4"), ("t", "<i4"), ("f", "<i4"),
                     ("h_re", "<f8", (channels,)), ("h_im", "<f8", (channels,)), ("w", "<f8")])


def write_inspect(path, weights: np.ndarray, vad: np.ndarray, meta: dict) -> None:
    """One JSON header line, then fixed-size little-endian records ordered by (stream, t, f)."""
    k, t, f, c = weights.shape
    dt = inspect_dtype(c)
    rec = np.zeros(k * t * f, dtype=dt)
    idx = np.indices((k, t, f)).reshape(3, -1)
    rec["stream"], rec["t"], rec["f"] = idx
    rec["h_re"] = weights.real.reshape(-1, c)
    rec["h_im"] = weights.imag.reshape(-1, c)
    rec["w"] = np.repeat(vad.reshape(k, t, 1), f, axis=2).reshape(-1)
    header = dict(meta, streams=k, frames=t, bins=f, channels=c, records=int(rec.size),
                  record_bytes=dt.itemsize,
                  fields=["stream:i4", "t:i4", "f:i4", f"h_re:f8[{c}]", f"h_im:f8[{c}]", "w:f8"])
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(rec.tobytes())


def read_inspect(path):
    """Return ``(header dict, structured record array)``."""
    blob = Path(path).read_bytes()
    nl = blob.index(b"\n")
    header = json.loads(blob[:nl].decode("utf-8"))
    return header, np.frombuffer(blob[nl + 1:], dtype=inspect_dtype(header["channels"]))


def cmd_inspect(args) -> int:
    from .css.separate import separate
    wf = _read_input(args.input)
    model, rc, digest = _load(args, wf.channels)
    if args.mode == "mask-only":
        raise UsageError("inspect needs a beamforming mode")
    res = separate(model, wf, args.mode, rc, record=True)
    write_inspect(args.out, res.weights, res.vad,
                  {"mode": args.mode, "toggles": _toggles(rc), "checkpoint_sha256": digest})
    print(args.out)
    return 0


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "separate": cmd_separate,
            "eval": cmd_eval, "inspect": cmd_inspect}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        print("adlcss: error: a command is required", file=sys.stderr)
        return 1
    _configure_logging()
    _limit_threads(args.threads)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"adlcss {args.command}: error: {e}", file=sys.stderr)
        return 1
    except (ConfigError, CheckpointError, OSError, ValueError, KeyError, RuntimeError) as e:
        print(f"adlcss {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
