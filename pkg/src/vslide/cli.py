"""Operator command line.

Subcommands: scan-sim, info, render, serve, bench, mip.
Machine-readable JSON goes to stdout; diagnostics to stderr.
Exit codes: 0 ok, 1 usage error, 2 data error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading

from . import spatial
from .bench import bench_layouts
from .compositor import ViewportRect, params_from_query, render_viewport
from .container import open_slide, rewrite_with_mip_levels
from .errors import DomainError, FormatError, ProtocolError, RemoteError, VslideError
from .imageio import png_bytes
from .ingest import ScanPlan, SlideCatalogFile, chain_from_name, manager_serve, run_session
from .model import ChunkShape, LayoutKind, fov_bounds

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3


def _emit(obj, pretty: bool):
    if pretty:
        json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    else:
        json.dump(obj, sys.stdout, sort_keys=True, separators=(",", ":"))
    sys.stdout.write("\n")


def _load_config(path):
    if not path:
        return {}
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _merged(args: argparse.Namespace, config: dict, key: str, default=None):
    # explicit flags win over the config file
    value = getattr(args, key.replace("-", "_"), None)
    if value is not None:
        return value
    return config.get(key, default)


def _plan_from_args(args, config) -> ScanPlan:
    return ScanPlan(
        rows=int(_merged(args, config, "rows", 10)),
        cols=int(_merged(args, config, "cols", 10)),
        tile_height=int(_merged(args, config, "tile-height", 256)),
        tile_width=int(_merged(args, config, "tile-width", 208)),
        colours=int(_merged(args, config, "colours", 1)),
        overlap=float(_merged(args, config, "overlap", 0.1)),
        shear_px=float(_merged(args, config, "shear", 0.0)),
        seed=int(_merged(args, config, "seed", 0)),
        rate=float(_merged(args, config, "rate", 0.0)),
        dynamic=int(_merged(args, config, "dynamic", 4096)),
    )


def cmd_scan_sim(args) -> int:
    config = _load_config(args.config)
    plan = _plan_from_args(args, config)
    layout = LayoutKind(args.layout)
    codec = chain_from_name(args.codec)
    chunk = None
    if args.chunk:
        h, w = (int(v) for v in args.chunk.split(","))
        chunk = ChunkShape(h, w)
    catalog = SlideCatalogFile(args.catalog) if args.catalog else None
    mip_levels = [1] + [int(v) for v in args.mip_levels.split(",")] if args.mip_levels else [1]
    entry, stats = run_session(
        plan, args.out, proxy_capacity=args.proxy_capacity, slide_id=args.slide_id,
        layout=layout, codec_chain=codec, chunk=chunk,
        mip_levels=sorted(set(mip_levels)), catalog=catalog)
    _emit({"entry": entry.to_json_dict(),
           "tiles_written": stats.tiles_written, "error": stats.error}, args.pretty)
    return EXIT_OK if entry.status == "complete" else EXIT_DATA


def cmd_info(args) -> int:
    with open_slide(args.path) as reader:
        plan = reader.plan
        _emit({
            "header": reader.header.to_json_dict(),
            "chunk_count": plan.total,
            "chunks_per_level": {str(lvl): len(reader.header.fovs) * plan.per_fov[lvl]
                                 for lvl in reader.header.mip_levels},
            "file_bytes": __import__("os").path.getsize(args.path),
        }, args.pretty)
    return EXIT_OK


def _open_any(source):
    """Local path or VSP1 URL (vsp://host:port/slide-id)."""
    if str(source).startswith("vsp://"):
        from .remote import RemoteSlideReader, VspClient

        rest = str(source)[len("vsp://"):]
        hostport, slide_id = rest.split("/", 1)
        host, port = hostport.rsplit(":", 1)
        return RemoteSlideReader(VspClient((host, int(port))), slide_id)
    return open_slide(source)


def cmd_render(args) -> int:
    reader = _open_any(args.source)
    try:
        header = reader.header
        query = {}
        for key in ("contrast", "status", "mixer", "gamma", "level", "pipeline"):
            value = getattr(args, key)
            if value is not None:
                query[key] = str(value)
        params = params_from_query(query, header.tile.colours)
        viewport = ViewportRect(args.x0, args.x1, args.y0, args.y1)
        tree = spatial.build([(fov_bounds(f, header.tile), f.linear_index)
                              for f in header.fovs])
        image = render_viewport(reader, tree, viewport, (args.width, args.height), params)
        data = png_bytes(image)
        with open(args.png, "wb") as f:
            f.write(data)
        _emit({"png": args.png, "bytes": len(data),
               "size": [args.width, args.height]}, args.pretty)
        return EXIT_OK
    finally:
        reader.close()


def cmd_serve(args) -> int:
    from .remote import http_gateway

    catalog_file = SlideCatalogFile(args.catalog)
    host, port = args.listen.rsplit(":", 1)
    server = manager_serve((host, int(port)), catalog_file, args.output_dir)
    server.max_frame = args.max_frame
    gateway = None
    if args.http:
        ghost, gport = args.http.rsplit(":", 1)
        gateway = http_gateway(server.server_address, (ghost, int(gport)))
    print(json.dumps({"listen": list(server.server_address),
                      "http": list(gateway.server_address) if gateway else None}),
          file=sys.stderr, flush=True)
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    stop.wait()
    if gateway:
        gateway.shutdown()
    server.shutdown()
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _load_config(args.config)
    plan = _plan_from_args(args, config)
    report = bench_layouts(args.out_prefix, plan, chain_from_name(args.codec),
                           random_reads=args.random_reads, seed=plan.seed)
    _emit(report, args.pretty)
    return EXIT_OK if report["identical_across_layouts"] else EXIT_DATA


def cmd_mip(args) -> int:
    levels = sorted({int(v) for v in args.levels.split(",")})
    header = rewrite_with_mip_levels(args.path, levels)
    _emit({"path": args.path, "mip_levels": list(header.mip_levels)}, args.pretty)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vslide")
    parser.add_argument("--pretty", action="store_true", help="indent JSON output")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_plan_flags(p):
        p.add_argument("--rows", type=int)
        p.add_argument("--cols", type=int)
        p.add_argument("--tile-height", type=int)
        p.add_argument("--tile-width", type=int)
        p.add_argument("--colours", type=int)
        p.add_argument("--overlap", type=float)
        p.add_argument("--shear", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--rate", type=float)
        p.add_argument("--dynamic", type=int)
        p.add_argument("--config", help="JSON config file; flags override it")

    p = sub.add_parser("scan-sim", help="simulate a scan and write a slide")
    add_plan_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--slide-id", default="scan")
    p.add_argument("--layout", default="LINEAR",
                   choices=[k.value for k in LayoutKind])
    p.add_argument("--codec", default="bitshuffle-deflate",
                   choices=["raw", "deflate", "bitshuffle-deflate"])
    p.add_argument("--chunk", help="h,w for PACKED2D")
    p.add_argument("--mip-levels", help="comma-separated levels > 1, e.g. 8,16")
    p.add_argument("--proxy-capacity", type=int, default=8)
    p.add_argument("--catalog")
    p.set_defaults(fn=cmd_scan_sim)

    p = sub.add_parser("info", help="print header and layout stats")
    p.add_argument("path")
    p.set_defaults(fn=cmd_info)

    p = sub.add_parser("render", help="render a viewport to PNG")
    p.add_argument("source", help="slide path or vsp://host:port/slide-id")
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--y0", type=float, required=True)
    p.add_argument("--x1", type=float, required=True)
    p.add_argument("--y1", type=float, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--level", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--status")
    p.add_argument("--contrast")
    p.add_argument("--mixer")
    p.add_argument("--pipeline")
    p.add_argument("--png", required=True)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("serve", help="run the tile dealer / manager (+ HTTP gateway)")
    p.add_argument("--listen", default="127.0.0.1:9555")
    p.add_argument("--http", help="host:port for the HTTP gateway")
    p.add_argument("--catalog", required=True)
    p.add_argument("--output-dir", default=".")
    p.add_argument("--max-frame", type=int, default=256 * 1024 * 1024)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("bench", help="benchmark the dataset layouts")
    add_plan_flags(p)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--codec", default="bitshuffle-deflate",
                   choices=["raw", "deflate", "bitshuffle-deflate"])
    p.add_argument("--random-reads", type=int, default=32)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("mip", help="add mip levels to an existing slide")
    p.add_argument("path")
    p.add_argument("--levels", required=True, help="e.g. 8,16")
    p.set_defaults(fn=cmd_mip)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ProtocolError, RemoteError, VslideError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
