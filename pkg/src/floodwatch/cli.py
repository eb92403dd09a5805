"""Command-line front end: a thin client for the HTTP service.

Without --server the service app is mounted in-process, so no daemon is
needed; with --server URL the same requests go over the network. Exit
codes are a stable contract: monitor exits 10 when the trigger fired,
0 when it did not, 1 on error; other subcommands exit 0 on success.
"""

from __future__ import annotations

import argparse
import asyncio
import logging
import sys

import httpx

from . import __version__
from .service import create_app

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_TRIGGERED = 10

_TIMEOUT = 600.0


def _post(server: str | None, path: str, payload: dict) -> tuple[int, dict]:
    """POST to a remote server, or to the in-process app when none is given."""
    if server:
        with httpx.Client(base_url=server, timeout=_TIMEOUT) as client:
            response = client.post(path, json=payload)
            return response.status_code, response.json()

    async def call() -> tuple[int, dict]:
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, timeout=_TIMEOUT,
                                     base_url="http://floodwatch.local") as client:
            response = await client.post(path, json=payload)
            return response.status_code, response.json()

    return asyncio.run(call())


def _fail(body: dict, status: int) -> int:
    print(f"error ({status}): {body.get('detail', body)}", file=sys.stderr)
    return EXIT_ERROR


def cmd_monitor(args: argparse.Namespace) -> int:
    status, body = _post(args.server, "/v1/monitor", {
        "config_path": args.config,
        "window_start": args.window_start,
        "window_end": args.window_end,
        "out_dir": args.out_dir,
    })
    if status != 200:
        return _fail(body, status)
    if body["fired"]:
        print(f"trigger fired at bucket {body['bucket_index']}: "
              f"count {body['observed']}, baseline mean {body['baseline_mean']:.1f}, "
              f"ratio {body['ratio']:.2f}")
        print(f"counts: {body['counts_path']}")
        print(f"decision: {body['trigger_path']}")
        return EXIT_TRIGGERED
    print(f"no trigger: max ratio {body['ratio']:.2f}, "
          f"max count {body['observed']}")
    print(f"counts: {body['counts_path']}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    status, body = _post(args.server, "/v1/run", {
        "config_path": args.config,
        "window_start": args.window_start,
        "window_end": args.window_end,
        "force": args.force,
        "skip_expansion": args.skip_expansion,
        "threads": args.threads,
        "out_dir": args.out_dir,
    })
    if status != 200:
        return _fail(body, status)
    for row in body["funnel"]:
        print(f"{row['label']:<24} {row['count']:>12,}")
    expansion = body.get("expansion")
    if expansion:
        keywords = ", ".join(expansion["new_keywords"])
        print(f"expansion: +{len(expansion['new_keywords'])} keywords "
              f"[{keywords}], {expansion['promising']} promising, "
              f"{expansion['base_resolutions']} -> "
              f"{expansion['extended_resolutions']} resolutions")
    print(f"artifacts: {body['out_dir']}")
    return EXIT_OK


def cmd_expand(args: argparse.Namespace) -> int:
    status, body = _post(args.server, "/v1/expand", {
        "config_path": args.config,
        "threads": args.threads,
        "out_dir": args.out_dir,
    })
    if status != 200:
        return _fail(body, status)
    print(f"new keywords: [{', '.join(body['new_keywords'])}]")
    print(f"scored {body['scored']} text-only posts, "
          f"{body['promising']} promising")
    print(f"resolutions: {body['base_resolutions']} -> "
          f"{body['extended_resolutions']}")
    print(f"artifacts: {body['out_dir']}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    status, body = _post(args.server, "/v1/report", {
        "config_path": args.config,
        "out_dir": args.out_dir,
        "demo": args.demo,
    })
    if status != 200:
        return _fail(body, status)
    print(body["funnel"])
    print(body["admin_histogram"])
    print(body["timeline"], end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floodwatch",
        description="Flood alerting over archived social-media corpora.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-C", help="pipeline config file (YAML)")
    common.add_argument("--server", help="service URL; default runs in-process")
    common.add_argument("--out-dir", help="override the config's output directory")
    common.add_argument("--verbose", "-v", action="store_true",
                        help="log at INFO level")

    window = argparse.ArgumentParser(add_help=False)
    window.add_argument("--window-start", required=True,
                        help="window start, RFC 3339 (inclusive)")
    window.add_argument("--window-end", required=True,
                        help="window end, RFC 3339 (exclusive)")

    threads = argparse.ArgumentParser(add_help=False)
    threads.add_argument("--threads", type=int, default=1,
                         help="worker threads for image and geoloc stages")

    sub = parser.add_subparsers(dest="command", required=True)

    p_monitor = sub.add_parser("monitor", parents=[common, window],
                               help="count matches and test the trigger")
    p_monitor.set_defaults(handler=cmd_monitor, needs_config=True)

    p_run = sub.add_parser("run", parents=[common, window, threads],
                           help="execute the full pipeline over a window")
    p_run.add_argument("--force", action="store_true",
                       help="run even if the trigger did not fire")
    p_run.add_argument("--skip-expansion", action="store_true",
                       help="stop after the base geolocation stage")
    p_run.set_defaults(handler=cmd_run, needs_config=True)

    p_expand = sub.add_parser("expand", parents=[common, threads],
                              help="expand coverage from a prior run's artifacts")
    p_expand.set_defaults(handler=cmd_expand, needs_config=True)

    p_report = sub.add_parser("report", parents=[common],
                              help="render reports from run artifacts")
    p_report.add_argument("--demo", action="store_true",
                          help="render the bundled demonstration dataset")
    p_report.set_defaults(handler=cmd_report, needs_config=False)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    if args.needs_config and not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.handler(args)
    except httpx.HTTPError as exc:
        print(f"error: cannot reach service: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
