"""Command line: adsgate {generate,sanitize,decode,sweep,frontier}.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import json
import os
import sys
from dataclasses import replace

from . import determinism as det
from . import harness
from . import metrics
from .stego import SIGN, STREAM, CapacityError, EccConfig, decode, make_codec

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

METHOD_FLAGS = {
    "identity": (), "blur": ("sigma",), "resize": ("factor",), "dctq": ("quality",),
    "diff1": (), "ads-fgsm": ("eps_adv",), "ads-qdir": ("eps_adv",),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_experiment_flags(p):
    p.add_argument("--config", help="TOML experiment file; flags override its values")
    p.add_argument("--n-images", type=int)
    p.add_argument("--size", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--payload-bits", type=int)
    p.add_argument("--ecc", type=int, dest="ecc_factor", help="repetition factor (1 = none)")
    p.add_argument("--codec", choices=("sign", "stream"))
    p.add_argument("--key", help="stego key: UTF-8 text or hex:<digits>")
    p.add_argument("--out", dest="output_dir")


def _experiment(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    over = {}
    for name in ("n_images", "payload_bits", "ecc_factor", "output_dir"):
        if getattr(args, name, None) is not None:
            over[name] = getattr(args, name)
    if args.size:
        over["carrier_size"] = tuple(args.size)
    if args.codec:
        over["codec_kind"] = SIGN if args.codec == "sign" else STREAM
    if args.key:
        over["key"] = det.key_from_text(args.key)
    for name in ("jobs", "tau"):
        if getattr(args, name, None) is not None:
            over[name] = getattr(args, name)
    return replace(cfg, **over)


def build_parser():
    p = _Parser(prog="adsgate", description="Gateway sanitisation experiments for diffusion steganography.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write carriers as 16-bit PNG plus a manifest")
    _add_experiment_flags(g)

    s = sub.add_parser("sanitize", help="apply one gateway transform to a PNG")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--method", required=True, choices=harness.METHODS)
    s.add_argument("--eps-adv", type=float, default=0.01)
    s.add_argument("--delta", type=float, default=1e-8)
    s.add_argument("--t", type=int, default=1)
    s.add_argument("--sigma", type=float, default=0.5)
    s.add_argument("--quality", type=int, default=90)
    s.add_argument("--factor", default="7/8")
    s.add_argument("--key", default="gateway-sanitizer", help="sanitiser noise key")
    s.add_argument("--stream-id", type=int, default=0)
    s.add_argument("--bits", type=int, choices=(8, 16), default=16)

    d = sub.add_parser("decode", help="extract a payload from a carrier PNG")
    d.add_argument("input")
    d.add_argument("--key", required=True)
    d.add_argument("--stream-id", type=int, default=0)
    d.add_argument("--payload-bits", type=int, required=True)
    d.add_argument("--ecc", type=int, default=1)
    d.add_argument("--codec", choices=("sign", "stream"), default="sign")
    d.add_argument("--expect", help="hex payload to compare against (prints BER)")

    w = sub.add_parser("sweep", help="sanitise, decode and score every method")
    _add_experiment_flags(w)
    w.add_argument("--jobs", type=int)
    w.add_argument("--tau", type=float, help="distortion budget on 1 - SSIM")

    f = sub.add_parser("frontier", help="plot failure vs distortion and list Pareto points")
    f.add_argument("sweep_csv")
    f.add_argument("--out", dest="output_dir")
    return p


def cmd_generate(args):
    cfg = _experiment(args)
    out = os.path.join(cfg.output_dir, "carriers")
    manifest = harness.run_generate(cfg, out)
    print(f"wrote {len(manifest['images'])} carriers to {out}")


def cmd_sanitize(args):
    x = harness.read_png(args.input)
    params = {"sigma": args.sigma, "factor": args.factor, "quality": args.quality,
              "eps_adv": args.eps_adv}
    m = harness.method(args.method, **{k: params[k] for k in METHOD_FLAGS[args.method]})
    cfg = harness.ExperimentConfig(n_images=1, methods=(m,), t=args.t, delta=args.delta,
                                   sanitizer_key=det.key_from_text(args.key))
    y = harness.sanitizer_for(m, cfg, args.stream_id)(x)
    harness.write_png(args.output, y, args.bits)
    print(f"psnr_db={metrics.psnr(x, y):.4f} ssim={metrics.ssim(x, y):.6f}")


def cmd_decode(args):
    x = harness.read_png(args.input)
    ecc = EccConfig("none" if args.ecc == 1 else "repetition", args.ecc)
    codec = make_codec(SIGN if args.codec == "sign" else STREAM,
                       det.StreamKey(det.key_from_text(args.key), args.stream_id),
                       x.shape[:2], ecc)
    bits, info = decode(x, codec, args.payload_bits)
    out = {"payload_hex": harness.bits_to_hex(bits), "inversion_residual": info.inversion_residual}
    if args.expect:
        b = metrics.ber(harness.hex_to_bits(args.expect, args.payload_bits), bits)
        out["ber"] = b
        out["success"] = metrics.decode_success(b)
    print(json.dumps(out))


def cmd_sweep(args):
    cfg = _experiment(args)
    records = harness.run_sweep(cfg)
    for r in records:
        print(f"{r.method:9s} {r.params:16s} fail={r.failure_rate_percent:7.3f}% "
              f"ber={r.mean_ber:.4f} psnr={r.mean_psnr_db:6.2f} ssim={r.mean_ssim:.4f}")
    print(f"wrote {os.path.join(cfg.output_dir, 'sweep.csv')}")


def cmd_frontier(args):
    front = harness.run_frontier(args.sweep_csv, args.output_dir)
    for r in front:
        print(f"pareto: {r['method']} {r['params']} fail={r['failure_rate_percent']} "
              f"1-ssim={r['mean_one_minus_ssim']}")


COMMANDS = {
    "generate": cmd_generate, "sanitize": cmd_sanitize, "decode": cmd_decode,
    "sweep": cmd_sweep, "frontier": cmd_frontier,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (harness.DataError, CapacityError, OSError) as e:
        print(f"adsgate: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, TypeError) as e:
        print(f"adsgate: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
