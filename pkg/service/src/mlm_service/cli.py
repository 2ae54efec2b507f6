"""Command line launcher for the inference service."""

from __future__ import annotations

import argparse

from .app import ServiceConfig, serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlm-service", description=__doc__)
    parser.add_argument("--model", default="roberta-base",
                        help="model identifier or local path (default: roberta-base)")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8400)
    parser.add_argument("--max-concurrent", type=int, default=8,
                        help="requests in flight before returning 429")
    parser.add_argument("--max-length", type=int, default=512,
                        help="truncate inputs to this many tokens")
    parser.add_argument("--no-gzip", action="store_true",
                        help="disable gzip response compression")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    serve(
        ServiceConfig(
            model=args.model,
            host=args.host,
            port=args.port,
            max_concurrent=args.max_concurrent,
            max_length=args.max_length,
            gzip=not args.no_gzip,
        )
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
