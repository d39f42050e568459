"""Command line front end.

Subcommands: encode, decode, metrics, inspect. Reports are flat
key=value lines on stdout (or into --report FILE).

Exit codes: 0 success, 1 usage error, 2 file I/O error, 3 codec
failure, 4 corrupt or truncated stream.
"""

from __future__ import annotations

import argparse
import os
import platform
import statistics
import struct
import sys
import time
from dataclasses import fields

import numpy as np

from hivc import bitstream, codec, runtime, video_io
from hivc.frame import FrameError, psnr
from hivc.homogeneous import ConvergenceError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_CODEC = 3
EXIT_CORRUPT = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common_lines(args):
    inputs = [getattr(args, k) for k in ("input", "reference") if getattr(args, k, None)]
    return [
        ("input", inputs[0] if inputs else ""),
        ("threads", runtime.get_num_threads()),
        ("machine", platform.platform()),
    ]


def _report(lines, path):
    text = "".join(f"{k}={v}\n" for k, v in lines)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


_CONFIG_TYPES = {f.name: f.type for f in fields(codec.EncoderConfig)}
_BOOL_KEYS = {"self_check"}
_INT_KEYS = {
    "gop_size",
    "residual_points",
    "flow_points",
    "intra_levels",
    "flow_levels",
    "residual_levels",
    "fps_num",
    "fps_den",
}


def _parse_config_file(path):
    """Flat key=value encoder settings; unknown keys are rejected."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in _CONFIG_TYPES:
                raise UsageError(f"{path}:{lineno}: unknown option {key!r}")
            if key in _BOOL_KEYS:
                out[key] = value.lower() in ("1", "true", "yes", "on")
            elif key in _INT_KEYS:
                out[key] = int(value)
            elif key == "flow_method":
                out[key] = value
            else:
                out[key] = float(value)
    return out


def _build_parser():
    p = _Parser(prog="hivc", description="Inpainting-based video codec")
    p.add_argument("--threads", type=int, default=None, help="worker threads (or HIVC_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="compress a y4m/pnm input")
    enc.add_argument("input")
    enc.add_argument("output")
    enc.add_argument("--config", help="key=value settings file")
    enc.add_argument("--gop-size", type=int, dest="gop_size")
    enc.add_argument("--mask-fraction", type=float, dest="intra_mask_fraction")
    enc.add_argument("--residual-points", type=int, dest="residual_points")
    enc.add_argument("--flow-points", type=int, dest="flow_points")
    enc.add_argument("--intra-levels", type=int, dest="intra_levels")
    enc.add_argument("--flow-levels", type=int, dest="flow_levels")
    enc.add_argument("--residual-levels", type=int, dest="residual_levels")
    enc.add_argument("--flow-method", choices=("brox", "horn-schunck"), dest="flow_method")
    enc.add_argument("--target-ratio", type=float, help="search budgets for this ratio")
    enc.add_argument("--self-check", action="store_true", help="decode and verify while encoding")
    enc.add_argument("--report", help="write the run report to a file")

    dec = sub.add_parser("decode", help="decompress a stream")
    dec.add_argument("input")
    dec.add_argument("output", help=".y4m sequence or .pgm/.ppm single frame")
    dec.add_argument("--bench", type=int, nargs="?", const=5, default=0,
                     help="time repeated decodes (at least 5 runs)")
    dec.add_argument("--report", help="write the run report to a file")

    met = sub.add_parser("metrics", help="frame-wise quality of a decoded sequence")
    met.add_argument("reference")
    met.add_argument("distorted")
    met.add_argument("--report", help="write the run report to a file")

    ins = sub.add_parser("inspect", help="stream structure and byte shares")
    ins.add_argument("input")
    ins.add_argument("--report", help="write the run report to a file")
    return p


def _encoder_config(args) -> codec.EncoderConfig:
    kv = _parse_config_file(args.config) if args.config else {}
    for key in _CONFIG_TYPES:
        if key != "self_check" and getattr(args, key, None) is not None:
            kv[key] = getattr(args, key)
    if args.self_check:
        kv["self_check"] = True
    try:
        return codec.EncoderConfig(**kv)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _cmd_encode(args):
    frames, fps = video_io.read_frames(args.input)
    cfg = _encoder_config(args)
    if "fps_num" not in (_parse_config_file(args.config) if args.config else {}):
        cfg = codec.EncoderConfig(**{**_cfg_dict(cfg), "fps_num": fps[0], "fps_den": fps[1]})
    t0 = time.perf_counter()
    if args.target_ratio:
        stream, ratio, cfg = codec.encode_target_ratio(frames, cfg, args.target_ratio)
    else:
        stream = codec.encode(frames, cfg)
        ratio = _raw_size(frames) / len(stream)
    elapsed = time.perf_counter() - t0
    with open(args.output, "wb") as fh:
        fh.write(stream)
    lines = _common_lines(args) + [
        ("frames", len(frames)),
        ("width", frames[0].width),
        ("height", frames[0].height),
        ("stream_bytes", len(stream)),
        ("compression_ratio", f"{ratio:.3f}"),
        ("encode_seconds", f"{elapsed:.3f}"),
        ("self_check", "ok" if cfg.self_check else "skipped"),
    ]
    lines += [(f"config_{k}", v) for k, v in sorted(_cfg_dict(cfg).items())]
    _report(lines, args.report)
    return EXIT_OK


def _cfg_dict(cfg):
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def _raw_size(frames):
    return len(frames) * frames[0].width * frames[0].height * frames[0].channels


def _cmd_decode(args):
    with open(args.input, "rb") as fh:
        data = fh.read()
    timings = {}
    frames = codec.decode(data, timings)
    header = bitstream.unpack_header(data)
    if args.output.endswith(".y4m"):
        video_io.write_y4m(args.output, frames, (header.fps_num, header.fps_den))
    else:
        if len(frames) != 1:
            raise UsageError("multi-frame stream needs a .y4m output")
        video_io.write_pnm(args.output, frames[0])
    lines = _common_lines(args) + [
        ("frames", len(frames)),
        ("width", header.width),
        ("height", header.height),
        ("decode_seconds", f"{timings['total']:.4f}"),
        ("decode_fps", f"{len(frames) / timings['total']:.2f}"),
    ]
    for k in sorted(timings):
        if k != "total":
            lines.append((f"stage_{k}_seconds", f"{timings[k]:.4f}"))
    if args.bench:
        runs = max(5, args.bench)
        samples = []
        stage_acc = {}
        for _ in range(runs):
            t = {}
            codec.decode(data, t)
            samples.append(len(frames) / t["total"])
            for k, v in t.items():
                stage_acc[k] = stage_acc.get(k, 0.0) + v
        lines.append(("bench_runs", runs))
        lines.append(("bench_median_fps", f"{statistics.median(samples):.2f}"))
        for k in sorted(stage_acc):
            if k != "total":
                lines.append((f"bench_stage_{k}_share", f"{stage_acc[k] / stage_acc['total']:.3f}"))
    _report(lines, args.report)
    return EXIT_OK


def _cmd_metrics(args):
    ref, _ = video_io.read_frames(args.reference)
    dist, _ = video_io.read_frames(args.distorted)
    if len(ref) != len(dist):
        raise UsageError(f"frame count mismatch: {len(ref)} vs {len(dist)}")
    values = [psnr(a, b) for a, b in zip(ref, dist)]
    lines = _common_lines(args) + [("frames", len(ref))]
    for i, v in enumerate(values):
        lines.append((f"psnr_frame_{i}", f"{v:.4f}"))
    finite = [v for v in values if np.isfinite(v)]
    lines.append(("psnr_mean", f"{np.mean(finite):.4f}" if finite else "inf"))
    _report(lines, args.report)
    return EXIT_OK


def _cmd_inspect(args):
    with open(args.input, "rb") as fh:
        data = fh.read()
    header, payloads = bitstream.read_stream(data)
    lines = _common_lines(args) + [
        ("width", header.width),
        ("height", header.height),
        ("frame_count", header.frame_count),
        ("fps", f"{header.fps_num}/{header.fps_den}"),
        ("gop_size", header.gop_size),
        ("channels", header.channels),
        ("intra_levels", header.intra_levels),
        ("flow_levels", header.flow_levels),
        ("residual_levels", header.residual_levels),
        ("stream_bytes", len(data)),
        ("groups", len(payloads)),
    ]
    shares = {"intra": 0, "flow": 0, "residual": 0, "framing": bitstream.HEADER_SIZE}
    for gi, payload in enumerate(payloads):
        lines.append((f"group_{gi}_bytes", len(payload)))
        shares["framing"] += 4
        pos, nframes = 2, struct.unpack_from("<H", payload, 0)[0]
        shares["framing"] += 2
        for _ in range(nframes):
            ftype, pred_len = struct.unpack_from("<BI", payload, pos)
            pos += 5
            shares["intra" if ftype == 0 else "flow"] += pred_len
            pos += pred_len
            (res_len,) = struct.unpack_from("<I", payload, pos)
            pos += 4 + res_len
            shares["residual"] += res_len
            shares["framing"] += 9
    for k, v in shares.items():
        lines.append((f"bytes_{k}", v))
        lines.append((f"share_{k}", f"{v / len(data):.4f}"))
    _report(lines, args.report)
    return EXIT_OK


_COMMANDS = {
    "encode": _cmd_encode,
    "decode": _cmd_decode,
    "metrics": _cmd_metrics,
    "inspect": _cmd_inspect,
}


def _resolve_threads(args) -> int:
    if args.threads:
        return args.threads
    env = runtime.default_threads()
    if env > 1:
        return env
    # benchmarking defaults to the machine's cores, everything else to 1
    if args.command == "decode" and args.bench:
        return os.cpu_count() or 1
    return 1


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        runtime.set_num_threads(_resolve_threads(args))
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (bitstream.BitstreamError, struct.error) as e:
        print(f"corrupt stream: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    except (FrameError, ConvergenceError, ValueError) as e:
        print(f"codec error: {e}", file=sys.stderr)
        return EXIT_CODEC
    except (OSError, video_io.VideoIOError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
