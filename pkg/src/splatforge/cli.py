"""Command-line surface: render, compress, decompress, analyze,
sortbench, psnr, gen.

Exit codes: 0 success, 2 usage error, 3 data/I-O error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .compress import DEFAULT_SCHEDULE, compress, decompress
from .container import read_compressed, write_compressed
from .errors import SplatforgeError
from .images import psnr, read_image, write_png, write_ppm
from .perf import model_frame, rate_report
from .ply import load_ply, save_ply
from .raster import RenderOptions, render_frame
from .scene import CameraView, cameras_from_json, cameras_to_json
from .sorting import DEFAULT_SORTER, sort_tile, sorter_cycles
from .synthetic import KINDS, camera_for_cloud, gen_synthetic


def _load_scene(path: str):
    if str(path).lower().endswith(".splc"):
        return decompress(read_compressed(path))
    return load_ply(path)


def _load_views(args, cloud) -> list[CameraView]:
    if getattr(args, "camera", None):
        with open(args.camera, "r", encoding="ascii") as fh:
            return cameras_from_json(fh.read())
    return [camera_for_cloud(cloud)]


def _resize(cam: CameraView, width: int | None, height: int | None) -> CameraView:
    if not width and not height:
        return cam
    width = width or cam.width
    height = height or cam.height
    sx, sy = width / cam.width, height / cam.height
    return CameraView(
        world_to_camera=cam.world_to_camera,
        fx=cam.fx * sx,
        fy=cam.fy * sy,
        cx=cam.cx * sx,
        cy=cam.cy * sy,
        width=width,
        height=height,
        z_near=cam.z_near,
    )


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("SPLATFORGE_THREADS")
    return int(env) if env else 1


def _render_options(args) -> RenderOptions:
    bg = tuple(float(v) for v in args.background.split(","))
    if len(bg) != 3:
        raise SplatforgeError("background must be R,G,B")
    return RenderOptions(
        tau=args.tau,
        alpha_min=args.alpha_min,
        background=bg,
        path=args.path,
        tile_size=args.tile_size,
        threads=_threads(args),
        sorter=args.sorter,
    )


def _frame_report(result, clock_hz: float) -> dict:
    perf = model_frame(result.stats, clock_hz)
    rates = rate_report(result.stats)
    return {"perf": perf.to_dict(), "rates": rates.to_dict()}


def cmd_render(args) -> int:
    cloud = _load_scene(args.input)
    views = [_resize(v, args.width, args.height) for v in _load_views(args, cloud)]
    opts = _render_options(args)
    out = args.out or os.path.splitext(args.input)[0]
    multi = len(views) > 1
    for i, cam in enumerate(views):
        result = render_frame(cloud, cam, opts)
        stem = f"{out}_{i:03d}" if multi else out
        write_ppm(stem + ".ppm", result.image)
        write_png(stem + ".png", result.image)
        with open(stem + ".json", "w", encoding="ascii") as fh:
            json.dump(_frame_report(result, args.clock_hz), fh, indent=2, sort_keys=True)
        print(f"wrote {stem}.ppm {stem}.png {stem}.json")
    return 0


def cmd_compress(args) -> int:
    cloud = load_ply(args.input)
    views = _load_views(args, cloud)
    schedule = (
        [float(r) for r in args.schedule.split(",")] if args.schedule else DEFAULT_SCHEDULE
    )
    model, report = compress(
        cloud,
        views,
        schedule=schedule,
        target_degree=args.degree,
        k_dc=args.k_dc,
        k_sh=args.k_sh,
        seed=args.seed,
    )
    write_compressed(model, args.out)
    report_path = args.report or args.out + ".json"
    with open(report_path, "w", encoding="ascii") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    print(
        f"wrote {args.out} ({report.container_bytes} bytes, "
        f"{report.ratio:.1f}x smaller than raw) and {report_path}"
    )
    return 0


def cmd_decompress(args) -> int:
    model = read_compressed(args.input)
    save_ply(decompress(model), args.out)
    print(f"wrote {args.out} ({model.count} Gaussians, SH degree {model.sh_degree})")
    return 0


def cmd_analyze(args) -> int:
    cloud = _load_scene(args.input)
    views = _load_views(args, cloud)
    opts = _render_options(args)
    out = args.out or os.path.splitext(args.input)[0]

    per_view = []
    agg_counts = None
    for cam in views:
        result = render_frame(cloud, cam, opts)
        per_view.append(rate_report(result.stats).to_dict())
        counts = result.stats.tile_counts
        agg_counts = counts if agg_counts is None else agg_counts + counts

    from .perf import tile_histogram

    histogram = tile_histogram(agg_counts)
    rates = {
        "views": per_view,
        "aggregate": {
            "culling_rate": sum(v["cull"]["culled"] for v in per_view)
            / max(1, sum(v["cull"]["total"] for v in per_view)),
            "termination_rate": sum(v["pairs"]["early_terminated"] for v in per_view)
            / max(1, sum(v["pairs"]["total"] for v in per_view)),
        },
    }
    with open(out + ".rates.json", "w", encoding="ascii") as fh:
        json.dump(rates, fh, indent=2, sort_keys=True)
    with open(out + ".tiles.csv", "w", encoding="ascii") as fh:
        fh.write("bin_start,tiles\n")
        for lo, n in histogram:
            fh.write(f"{lo},{n}\n")
    print(f"wrote {out}.rates.json {out}.tiles.csv")
    return 0


def cmd_sortbench(args) -> int:
    rng = np.random.default_rng(args.seed)
    failures = 0
    total_cycles = 0
    for _ in range(args.trials):
        codes = rng.integers(0, 1 << 15, size=args.n, dtype=np.uint16)
        values = np.arange(args.n)
        got, _ = sort_tile(codes, values, DEFAULT_SORTER)
        ref = values[np.argsort(codes, kind="stable")]
        if not np.array_equal(got, ref):
            failures += 1
        total_cycles += sorter_cycles(args.n, DEFAULT_SORTER)
    verdict = "PASS" if failures == 0 else f"FAIL ({failures}/{args.trials})"
    print(f"sortbench n={args.n} trials={args.trials}: {verdict}, modeled cycles/run={total_cycles // max(1, args.trials)}")
    if failures:
        raise SplatforgeError("sorter output diverged from the reference sort")
    return 0


def cmd_psnr(args) -> int:
    value = psnr(read_image(args.image_a), read_image(args.image_b))
    print("inf" if value == float("inf") else f"{value:.4f}")
    return 0


def cmd_gen(args) -> int:
    cloud = gen_synthetic(args.kind, args.n, seed=args.seed, sh_degree=args.sh_degree)
    save_ply(cloud, args.out)
    print(f"wrote {args.out} ({len(cloud)} Gaussians)")
    if args.camera_out:
        cam = camera_for_cloud(cloud)
        with open(args.camera_out, "w", encoding="ascii") as fh:
            fh.write(cameras_to_json([cam]))
        print(f"wrote {args.camera_out}")
    return 0


def _add_render_like(p: argparse.ArgumentParser) -> None:
    p.add_argument("--camera", help="camera JSON file (single camera or trajectory)")
    p.add_argument("--width", type=int, help="override camera width (rescales intrinsics)")
    p.add_argument("--height", type=int, help="override camera height")
    p.add_argument("--tile-size", type=int, default=16)
    p.add_argument("--tau", type=float, default=1e-4, help="early-termination threshold")
    p.add_argument("--alpha-min", type=float, default=1.0 / 255.0)
    p.add_argument("--background", default="0,0,0", help="R,G,B floats in [0,1]")
    p.add_argument("--path", choices=("full", "zeroskip"), default="zeroskip")
    p.add_argument("--sorter", choices=("evt", "fast"), default="evt")
    p.add_argument("--threads", type=int, default=None,
                   help="tile workers (default: SPLATFORGE_THREADS or 1)")
    p.add_argument("--clock-hz", type=float, default=800e6)
    p.add_argument("--seed", type=int, default=0, help="reserved; outputs do not depend on it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splatforge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a scene to PPM/PNG plus a JSON report")
    p.add_argument("input", help=".ply scene or .splc compressed model")
    p.add_argument("--out", help="output path prefix (default: input stem)")
    _add_render_like(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("compress", help="prune, truncate SH, quantize, and pack a scene")
    p.add_argument("input", help=".ply scene")
    p.add_argument("--out", required=True, help="output .splc path")
    p.add_argument("--camera", help="camera JSON used for significance scoring")
    p.add_argument("--schedule", help="comma-separated prune rates (default 0.4,0.4,0.4,0.2)")
    p.add_argument("--degree", type=int, default=1, choices=(0, 1, 2, 3))
    p.add_argument("--k-dc", type=int, default=256)
    p.add_argument("--k-sh", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="JSON report path (default: <out>.json)")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="expand a .splc container back to .ply")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("analyze", help="culling/termination rates and tile density")
    p.add_argument("input")
    p.add_argument("--out", help="output path prefix (default: input stem)")
    _add_render_like(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sortbench", help="check the sorter against a reference sort")
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sortbench)

    p = sub.add_parser("psnr", help="peak signal-to-noise ratio between two images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.set_defaults(func=cmd_psnr)

    p = sub.add_parser("gen", help="generate a synthetic scene")
    p.add_argument("--kind", choices=KINDS, default="sphere")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sh-degree", type=int, default=3, choices=(0, 1, 2, 3))
    p.add_argument("--out", required=True, help="output .ply path")
    p.add_argument("--camera-out", help="also write a framing camera JSON")
    p.set_defaults(func=cmd_gen)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SplatforgeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
