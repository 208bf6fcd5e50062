"""Serve the adapter: stub mode by default, model mode via --model."""

from __future__ import annotations

import argparse

import uvicorn

from .service import create_app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="cotseg-adapter",
                                     description="Segmenter sidecar speaking the shared wire protocol")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8712)
    parser.add_argument("--fixtures", help="directory of per-label 1-bit mask PNGs for stub mode")
    parser.add_argument("--model", help="model wrapper as package.module:factory (replaces the stub)")
    args = parser.parse_args(argv)

    app = create_app(fixtures=args.fixtures, model=args.model)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
