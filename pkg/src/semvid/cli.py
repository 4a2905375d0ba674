"""Command-line entry point: ``semvid <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .codec import Bitstream, decode_stream, encode_stream, feature_hook
from .config import RunConfig
from .cve import LAMBDAS
from .errors import ConfigError, DecodeError, DimensionError, SemvidError
from .metrics import mse, ms_ssim, psnr
from .moe import SegmenterConfig, estimate_alpha
from .simulate import simulate, transmit, write_csv, write_json

log = logging.getLogger("semvid")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _masks_for(args, frames):
    if not getattr(args, "masks", None):
        return None
    return io.read_masks(args.masks, len(frames))[:len(frames)]


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config)
    cfg.update(dict(args.set or []))
    if getattr(args, "lambda_id", None) is not None:
        cfg.lambda_id = args.lambda_id
    if getattr(args, "seed", None) is not None:
        cfg.channel_seed = args.seed
    return cfg.validate()


# ---------------------------------------------------------------------------
# subcommands

def cmd_segment(args, cfg: RunConfig) -> None:
    frames = io.read_sequence(args.input)
    masks = _masks_for(args, frames)
    seg = cfg.segmenter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t, v in enumerate(frames):
        a = estimate_alpha(v, seg, oracle_mask=None if masks is None else masks[t])
        io.write_pnm(out / io.frame_name(t, ".pgm"), a)
    log.info("wrote %d masks to %s", len(frames), out)


def cmd_encode(args, cfg: RunConfig) -> None:
    frames = io.read_sequence(args.input)
    res = encode_stream(frames, cfg.codec(), masks=_masks_for(args, frames))
    res.bitstream.save(args.output)
    h, w, c = frames[0].shape
    print(json.dumps({"frames": len(frames), "bits": res.bits,
                      "cbr": sum(k / (h * w * c) for k in res.bits) / len(res.bits)}))


def cmd_decode(args, cfg: RunConfig) -> None:
    dec = transmit(Bitstream.load(args.input), cfg.channel())
    io.write_sequence(args.out, dec.frames)
    concealed = [t for t, c in enumerate(dec.concealed) if c]
    print(json.dumps({"frames": len(dec.frames), "concealed": concealed}))


def cmd_simulate(args, cfg: RunConfig) -> None:
    frames = io.read_sequence(args.input)
    reports = simulate(frames, masks=_masks_for(args, frames), lambdas=cfg.sim_lambdas,
                       snrs=cfg.sim_snrs, modes=cfg.sim_modes, schemes=cfg.sim_schemes,
                       base=cfg.codec(), params_for=cfg.params, h=cfg.channel_h,
                       seed=cfg.seed, unit=cfg.sim_unit)
    if args.csv:
        write_csv(args.csv, reports)
    if args.json:
        write_json(args.json, reports)
    if not args.csv and not args.json:
        write_csv(sys.stdout, reports)


def cmd_tune(args, cfg: RunConfig) -> None:
    from .optim import training_stats, tune, tune_segmenter
    from .synthetic import training_suite
    references = None
    if args.input:
        if args.masks and len(args.masks) != len(args.input):
            raise UsageError("give one --masks directory per --input directory")
        seqs = [io.read_sequence(d) for d in args.input]
        masks = None
        if args.masks:
            masks = [io.read_masks(m, len(s))[:len(s)] for m, s in zip(args.masks, seqs)]
    else:
        suite = training_suite()
        seqs, masks = [c.frames for c in suite], [c.masks for c in suite]
        references = [c.background for c in suite]
    summary = {}
    # Segmenter stage: pick the threshold first, then tune the coder.
    if masks is not None and cfg.segmenter_method == "background_diff" and (
            references is not None or cfg.segmenter_reference):
        base = cfg.segmenter() if cfg.segmenter_reference else SegmenterConfig(
            "background_diff", references[0], cfg.segmenter_threshold, cfg.segmenter_morph_radius)
        seg, _ = tune_segmenter(seqs, masks, base, references=references)
        summary["segmenter.threshold"] = seg.threshold
    stats = training_stats(seqs, masks, cfg.motion())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lambdas = [args.lambda_id] if args.lambda_id else list(LAMBDAS)
    for lam in lambdas:
        res = tune(stats, lam, iterations=cfg.tune_iterations,
                   learning_rate=cfg.tune_learning_rate)
        res.params.save(out / f"lambda_{lam}.txt")
        summary[f"lambda_{lam}"] = {"q_step": res.params.q_step, "scale_a": res.params.scale_a,
                        "scale_c": res.params.scale_c, "objective": res.objective,
                        "initial_objective": res.initial_objective}
    print(json.dumps(summary, indent=2, sort_keys=True))


def cmd_send(args, cfg: RunConfig) -> None:
    from .link import parse_address, send_udp
    frames = io.read_sequence(args.input)
    res = encode_stream(frames, cfg.codec(), masks=_masks_for(args, frames))
    n = send_udp(res.bitstream, parse_address(args.dest), mtu=cfg.link_mtu,
                 stream_id=args.stream_id, loss=cfg.link_loss, seed=cfg.seed)
    print(json.dumps({"frames": len(frames), "datagrams": n}))


def cmd_recv(args, cfg: RunConfig) -> None:
    from .link import parse_address, recv_udp
    stream, lost = recv_udp(parse_address(args.listen), timeout=cfg.link_timeout)
    dec = decode_stream(stream, feature_hook(cfg.channel(), stream.header.params.q_step))
    io.write_sequence(args.out, dec.frames)
    print(json.dumps({"frames": len(dec.frames), "lost": lost,
                      "concealed": [t for t, c in enumerate(dec.concealed) if c]}))


def cmd_metrics(args, cfg: RunConfig) -> None:
    ref, test = io.read_sequence(args.ref), io.read_sequence(args.test)
    if len(ref) != len(test):
        raise SemvidError(f"frame counts differ: {len(ref)} vs {len(test)}")
    rows = []
    for t, (a, b) in enumerate(zip(ref, test)):
        row = {"frame": t, "mse": mse(a, b), "psnr_db": psnr(a, b)}
        if min(a.shape[:2]) >= 176:
            row["ms_ssim"] = ms_ssim(a, b)
        rows.append(row)
    out = {"frames": rows, "mean_psnr_db": float(np.mean([r["psnr_db"] for r in rows]))}
    if all("ms_ssim" in r for r in rows):
        out["mean_ms_ssim"] = float(np.mean([r["ms_ssim"] for r in rows]))
    print(json.dumps(out, indent=2))


def cmd_synth(args, cfg: RunConfig) -> None:
    from .synthetic import moving_object_clip
    clip = moving_object_clip(args.frames, args.size, args.size, seed=args.seed or 0,
                              background_sigma=args.background_sigma)
    out = Path(args.out)
    io.write_sequence(out / "frames", clip.frames)
    io.write_sequence(out / "masks", clip.masks, ".pgm")
    io.write_pnm(out / "background.ppm", clip.background)
    print(json.dumps({"frames": args.frames, "out": str(out)}))


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'name = value' config file")
    common.add_argument("--set", nargs=2, action="append", metavar=("KEY", "VALUE"),
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="channel seed (default: config, then $SEMVID_SEED)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="semvid", description="Foreground-aware contextual video coding over noisy channels.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("segment", parents=[common], help="estimate alpha masks")
    s.add_argument("--input", required=True, help="directory of numbered PPM frames")
    s.add_argument("--masks", help="oracle masks (PGM) for segmenter.method = oracle")
    s.add_argument("--out", required=True, help="output directory for PGM masks")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("encode", parents=[common], help="encode frames into a .svb stream")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--masks")
    s.add_argument("--lambda", dest="lambda_id", type=int, choices=LAMBDAS)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("decode", parents=[common], help="decode a .svb stream (through the configured channel)")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("simulate", parents=[common], help="lambda x SNR x mode sweep")
    s.add_argument("--input", required=True)
    s.add_argument("--masks")
    s.add_argument("--csv", help="per-frame CSV report")
    s.add_argument("--json", help="aggregate JSON report")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("tune", parents=[common], help="tune coder parameters per lambda")
    s.add_argument("--input", nargs="*", help="training frame directories (default: built-in synthetic set)")
    s.add_argument("--masks", nargs="*", help="mask directory per input directory")
    s.add_argument("--out", required=True, help="directory for lambda_<n>.txt files")
    s.add_argument("--lambda", dest="lambda_id", type=int, choices=LAMBDAS)
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("send", parents=[common], help="encode and send over UDP")
    s.add_argument("--input", required=True)
    s.add_argument("--masks")
    s.add_argument("--dest", required=True, help="host:port")
    s.add_argument("--stream-id", type=int, default=0)
    s.set_defaults(func=cmd_send)

    s = sub.add_parser("recv", parents=[common], help="receive a UDP stream and decode it")
    s.add_argument("--listen", required=True, help="host:port")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_recv)

    s = sub.add_parser("metrics", parents=[common], help="MSE / PSNR / MS-SSIM between two frame directories")
    s.add_argument("--ref", required=True)
    s.add_argument("--test", required=True)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic demo clip")
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int, default=10)
    s.add_argument("--size", type=int, default=176)
    s.add_argument("--background-sigma", type=float, default=2.0)
    s.set_defaults(func=cmd_synth)
    return p


def _kind(e: Exception) -> str:
    for cls, name in ((DimensionError, "dimension error"), (ConfigError, "configuration error"),
                      (DecodeError, "decode error"), (OSError, "i/o error")):
        if isinstance(e, cls):
            return name
    return "error"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return 0 if e.code in (0, None) else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        args.func(args, cfg)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except (SemvidError, ValueError, OSError) as e:
        print(f"semvid {args.command}: {_kind(e)}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
