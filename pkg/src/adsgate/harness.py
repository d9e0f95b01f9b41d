"""Experiment driver: generate carriers, sanitise, decode, score, and build the
security-utility frontier.

Sanitised tensors go straight to the decoder. The PNG files written by
`run_generate` are for inspection only and never feed the security numbers.
"""

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import determinism as det
from . import metrics
from .diffusion import check_image
from .sanitize import (
    BLUR,
    DCT_QUANTIZE,
    DIFFUSION_1STEP,
    FGSM,
    IDENTITY,
    QDIR,
    RESIZE,
    BaselineConfig,
    ads_sanitize,
    baseline_apply,
    default_proxy,
    make_ads,
)
from .stego import SIGN, EccConfig, decode, encode, make_codec, random_payload

METHODS = ("identity", "blur", "resize", "dctq", "diff1", "ads-fgsm", "ads-qdir")
TIMING_COLUMNS = ("wall_ms", "wall_ms_per_image")

SUMMARY_COLUMNS = (
    "method", "params", "failure_rate_percent", "mean_ber", "mean_psnr_db",
    "mean_ssim", "mean_one_minus_ssim", "budget_violation", "n_images",
    "wall_ms_per_image",
)
IMAGE_COLUMNS = (
    "method", "params", "image", "stream_id", "ber", "success", "psnr_db",
    "ssim", "inversion_residual", "wall_ms",
)


class DataError(Exception):
    """Bad input data: missing files, malformed CSV, manifest mismatch."""


@dataclass(frozen=True)
class MethodSpec:
    name: str
    params: tuple = ()  # sorted (key, value) pairs

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"unknown method {self.name!r}")
        object.__setattr__(self, "params", tuple(sorted(dict(self.params).items())))

    @property
    def label(self) -> str:
        return ";".join(f"{k}={v}" for k, v in self.params)

    def get(self, key, default=None):
        return dict(self.params).get(key, default)


def method(name: str, **params) -> MethodSpec:
    return MethodSpec(name, tuple(params.items()))


EPS_SWEEP = (0.0, 0.005, 0.01, 0.02)


def default_methods():
    out = [
        method("identity"),
        method("blur", sigma=0.5),
        method("blur", sigma=1.0),
        method("resize", factor="7/8"),
        method("dctq", quality=90),
        method("dctq", quality=70),
        method("diff1"),
    ]
    for update in ("ads-fgsm", "ads-qdir"):
        out += [method(update, eps_adv=e) for e in EPS_SWEEP]
    return tuple(out)


@dataclass(frozen=True)
class ExperimentConfig:
    n_images: int = 64
    carrier_size: tuple = (64, 64)
    # full sign-codec capacity, no repetition: see README for why not 64 bits
    payload_bits: int = 12288
    codec_kind: str = SIGN
    ecc_factor: int = 1
    key: bytes = b"gateway-demo-key"
    sanitizer_key: bytes = b"gateway-sanitizer"
    methods: tuple = field(default_factory=default_methods)
    tau: float = None
    t: int = 1
    delta: float = 1e-8
    proxy_sigma: float = 0.3
    threshold: float = metrics.DEFAULT_THRESHOLD
    output_dir: str = "runs/default"
    jobs: int = 1

    def __post_init__(self):
        if self.n_images < 1:
            raise ValueError("n_images must be at least 1")
        if self.payload_bits < 1:
            raise ValueError("payload_bits must be at least 1")
        for m in self.methods:
            _check_method(m)

    def codec(self):
        ecc = EccConfig("none" if self.ecc_factor == 1 else "repetition", self.ecc_factor)
        return make_codec(self.codec_kind, self.key, self.carrier_size, ecc)


def _check_method(m: MethodSpec):
    if m.name == "blur" and not float(m.get("sigma", 0.5)) > 0:
        raise ValueError("blur sigma must be positive")
    if m.name == "resize" and not 0 < Fraction(str(m.get("factor", "7/8"))) <= 1:
        raise ValueError("resize factor must lie in (0, 1]")
    if m.name == "dctq" and not 1 <= int(m.get("quality", 90)) <= 100:
        raise ValueError("quality must lie in 1..100")
    if m.name.startswith("ads") and not float(m.get("eps_adv", 0.01)) >= 0:
        raise ValueError("eps_adv must be non-negative")


def sanitizer_for(m: MethodSpec, cfg: ExperimentConfig, image_index: int):
    """Function image -> sanitised image for method m on image `image_index`.

    Every stochastic method draws its noise from the sanitiser key at the
    image's stream id, so methods are compared on identical noise.
    """
    proxy_cfg = make_ads(key=cfg.sanitizer_key, stream_id=image_index, t=cfg.t,
                         delta=cfg.delta, proxy=default_proxy(sigma=cfg.proxy_sigma))
    if m.name == "identity":
        bc = BaselineConfig(IDENTITY)
    elif m.name == "blur":
        bc = BaselineConfig(BLUR, blur_sigma=float(m.get("sigma", 0.5)))
    elif m.name == "resize":
        bc = BaselineConfig(RESIZE, resize_factor=Fraction(str(m.get("factor", "7/8"))))
    elif m.name == "dctq":
        bc = BaselineConfig(DCT_QUANTIZE, quality=int(m.get("quality", 90)))
    elif m.name == "diff1":
        bc = BaselineConfig(DIFFUSION_1STEP, ads=proxy_cfg)
    else:
        update = FGSM if m.name == "ads-fgsm" else QDIR
        ads = replace(proxy_cfg, update=update, eps_adv=float(m.get("eps_adv", 0.01)))
        return lambda x: ads_sanitize(x, ads)
    return lambda x: baseline_apply(x, bc)


# ------------------------------------------------------------------ carriers

def image_codec(cfg: ExperimentConfig, i: int):
    codec = cfg.codec()
    return codec.with_key(det.StreamKey(codec.key.key_bytes, i))


def make_carrier(cfg: ExperimentConfig, i: int):
    codec = image_codec(cfg, i)
    payload = random_payload(codec.key, cfg.payload_bits)
    return payload, encode(payload, codec)


# ---------------------------------------------------------------------- PNG

def write_png(path, x, bits: int = 16):
    """Write a signed image as RGB PNG; [-1, 1] maps onto the full integer range."""
    import cv2

    x = check_image(x)
    if bits not in (8, 16):
        raise ValueError("bit depth must be 8 or 16")
    top = 65535 if bits == 16 else 255
    dtype = np.uint16 if bits == 16 else np.uint8
    v = np.rint((np.clip(x, -1.0, 1.0) + 1.0) / 2.0 * top).astype(dtype)
    if not cv2.imwrite(str(path), np.ascontiguousarray(v[:, :, ::-1])):
        raise OSError(f"could not write {path}")


def read_png(path) -> np.ndarray:
    import cv2

    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    v = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if v is None:
        raise DataError(f"not a readable image: {path}")
    if v.ndim != 3 or v.shape[2] != 3:
        raise DataError(f"{path}: only 3-channel RGB is supported")
    if v.dtype == np.uint16:
        top = 65535.0
    elif v.dtype == np.uint8:
        top = 255.0
    else:
        raise DataError(f"{path}: unsupported bit depth {v.dtype}")
    return v[:, :, ::-1].astype(np.float64) / top * 2.0 - 1.0


def bits_to_hex(bits) -> str:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes().hex()


def hex_to_bits(text: str, n_bits: int) -> np.ndarray:
    try:
        raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
    except ValueError as e:
        raise DataError(f"bad hex payload: {e}") from None
    bits = np.unpackbits(raw)
    if bits.size < n_bits:
        raise DataError(f"payload has {bits.size} bits, expected {n_bits}")
    return bits[:n_bits]


def run_generate(cfg: ExperimentConfig, out_dir=None):
    """Write carriers as 16-bit PNGs plus manifest.json. Returns the manifest dict."""
    out_dir = out_dir or os.path.join(cfg.output_dir, "carriers")
    os.makedirs(out_dir, exist_ok=True)
    codec = cfg.codec()
    entries = []
    for i in range(cfg.n_images):
        payload, carrier = make_carrier(cfg, i)
        name = f"carrier_{i:04d}.png"
        write_png(os.path.join(out_dir, name), carrier, 16)
        entries.append({"file": name, "stream_id": i, "payload_hex": bits_to_hex(payload)})
    manifest = {
        "codec": codec.kind,
        "key_hex": codec.key.key_bytes.hex(),
        "carrier_size": list(cfg.carrier_size),
        "payload_bits": cfg.payload_bits,
        "ecc_factor": cfg.ecc_factor,
        "images": entries,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


# -------------------------------------------------------------------- sweep

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _image_rows(args):
    cfg, i = args
    payload, carrier = make_carrier(cfg, i)
    codec = image_codec(cfg, i)
    rows = []
    for m in cfg.methods:
        t0 = time.perf_counter()
        x = sanitizer_for(m, cfg, i)(carrier)
        got, info = decode(x, codec, cfg.payload_bits)
        wall = 1000.0 * (time.perf_counter() - t0)
        b = metrics.ber(payload, got)
        rows.append({
            "method": m.name, "params": m.label, "image": i, "stream_id": i,
            "ber": b, "success": metrics.decode_success(b, cfg.threshold),
            "psnr_db": metrics.psnr(carrier, x), "ssim": metrics.ssim(carrier, x),
            "inversion_residual": info.inversion_residual, "wall_ms": wall,
        })
    return rows


@dataclass
class EvalRecord:
    method: str
    params: str
    failure_rate_percent: float
    mean_ber: float
    mean_psnr_db: float
    mean_ssim: float
    mean_one_minus_ssim: float
    budget_violation: bool
    n_images: int
    wall_ms_per_image: float


def aggregate(rows, methods, tau=None):
    out = []
    for m in methods:
        sel = [r for r in rows if r["method"] == m.name and r["params"] == m.label]
        ssim_mean = float(np.mean([r["ssim"] for r in sel]))
        one_minus = float(np.mean([1.0 - r["ssim"] for r in sel]))
        out.append(EvalRecord(
            m.name, m.label,
            metrics.failure_rate([r["success"] for r in sel]),
            float(np.mean([r["ber"] for r in sel])),
            float(np.mean([r["psnr_db"] for r in sel])),
            ssim_mean, one_minus,
            bool(tau is not None and one_minus > tau),
            len(sel),
            float(np.mean([r["wall_ms"] for r in sel])),
        ))
    return out


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def run_sweep(cfg: ExperimentConfig, out_dir=None):
    """Sanitise, decode and score every carrier under every method.

    Writes sweep.csv (one row per method point) and sweep_images.csv (one
    row per image and method). Returns the list of EvalRecords.
    """
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    work = [(cfg, i) for i in range(cfg.n_images)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            per_image = list(ex.map(_image_rows, work))
    else:
        per_image = [_image_rows(w) for w in work]
    # regroup image-major results method-major; order never depends on jobs
    rows = [img[k] for k in range(len(cfg.methods)) for img in per_image]
    records = aggregate(rows, cfg.methods, cfg.tau)
    _write_csv(os.path.join(out_dir, "sweep_images.csv"), IMAGE_COLUMNS, rows)
    _write_csv(os.path.join(out_dir, "sweep.csv"), SUMMARY_COLUMNS, [asdict(r) for r in records])
    return records


def read_csv_rows(path, required=SUMMARY_COLUMNS):
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in required if c not in (reader.fieldnames or ())]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        return list(reader)


def strip_timing(path) -> str:
    """CSV text with the wall-clock columns removed (for determinism checks)."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    keep = [k for k, name in enumerate(rows[0]) if name not in TIMING_COLUMNS]
    return "\n".join(",".join(r[k] for k in keep) for r in rows) + "\n"


# ----------------------------------------------------------------- frontier

def pareto_front(points):
    """Indices of points not dominated in (failure up, distortion down).

    `points` is a sequence of (failure_percent, distortion). A point is
    dominated when another is at least as good on both axes and strictly
    better on one.
    """
    keep = []
    for i, (f_i, d_i) in enumerate(points):
        dominated = any(
            f_j >= f_i and d_j <= d_i and (f_j > f_i or d_j < d_i)
            for j, (f_j, d_j) in enumerate(points) if j != i
        )
        if not dominated:
            keep.append(i)
    return keep


def dominates(p, q) -> bool:
    """p strictly better than q on both axes (failure higher, distortion lower)."""
    return p[0] > q[0] and p[1] < q[1]


def run_frontier(sweep_csv, out_dir=None):
    """SVG scatter of failure rate against 1 - SSIM plus frontier.csv of Pareto points."""
    rows = read_csv_rows(sweep_csv)
    if not rows:
        raise DataError(f"{sweep_csv}: no data rows")
    out_dir = out_dir or os.path.dirname(os.path.abspath(sweep_csv))
    os.makedirs(out_dir, exist_ok=True)
    try:
        pts = [(float(r["failure_rate_percent"]), float(r["mean_one_minus_ssim"])) for r in rows]
    except ValueError as e:
        raise DataError(f"{sweep_csv}: {e}") from None
    front = pareto_front(pts)
    with open(os.path.join(out_dir, "frontier.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("method", "params", "failure_rate_percent", "mean_one_minus_ssim"))
        for k in front:
            w.writerow((rows[k]["method"], rows[k]["params"], rows[k]["failure_rate_percent"],
                        rows[k]["mean_one_minus_ssim"]))
    _plot_frontier(rows, pts, front, os.path.join(out_dir, "frontier.svg"))
    return [rows[k] for k in front]


def _plot_frontier(rows, pts, front, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "frontier"
    fig, ax = plt.subplots(figsize=(6, 4))
    names = sorted({r["method"] for r in rows}, key=METHODS.index)
    for name in names:
        xs = [p[1] for r, p in zip(rows, pts) if r["method"] == name]
        ys = [p[0] for r, p in zip(rows, pts) if r["method"] == name]
        ax.scatter(xs, ys, label=name, s=24)
    fx = [pts[k][1] for k in sorted(front, key=lambda k: pts[k][1])]
    fy = [pts[k][0] for k in sorted(front, key=lambda k: pts[k][1])]
    ax.plot(fx, fy, color="0.5", lw=0.8, ls="--", zorder=0)
    positive = [d for _, d in pts if d > 0]
    # symmetric log keeps the identity point (distortion 0) on the axis
    ax.set_xscale("symlog", linthresh=min(positive) / 2 if positive else 1e-4)
    ax.set_xlabel("1 - SSIM (distortion, log scale)")
    ax.set_ylabel("decoder failure rate (%)")
    ax.set_ylim(-5, 105)
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ------------------------------------------------------------------- config

CONFIG_KEYS = {
    "n_images": int, "carrier_size": tuple, "payload_bits": int, "codec_kind": str,
    "ecc_factor": int, "key": str, "sanitizer_key": str, "tau": float, "t": int,
    "delta": float, "proxy_sigma": float, "threshold": float, "output_dir": str,
    "jobs": int,
}


def load_config(path) -> ExperimentConfig:
    """Read a TOML experiment file. Top-level keys mirror ExperimentConfig;
    an optional [[methods]] array lists {name = "...", <param> = value}."""
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, "rb") as f:
        try:
            raw = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise DataError(f"{path}: {e}") from None
    return config_from_dict(raw)


def config_from_dict(raw: dict, base: ExperimentConfig = None) -> ExperimentConfig:
    kw = {}
    for k, v in raw.items():
        if k == "methods":
            kw["methods"] = tuple(method(**dict(m)) for m in v)
        elif k in CONFIG_KEYS:
            if k in ("key", "sanitizer_key"):
                v = det.key_from_text(v)
            elif k == "carrier_size":
                v = tuple(int(s) for s in v)
            elif v is not None:
                v = CONFIG_KEYS[k](v)
            kw[k] = v
        else:
            raise ValueError(f"unknown config key {k!r}")
    return replace(base or ExperimentConfig(), **kw)
