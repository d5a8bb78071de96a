"""CLI: serve one model per process.

Multi-model benchmarking launches one server per checkpoint on distinct
ports, which keeps memory isolated and the processes trivially parallel.
"""

from __future__ import annotations

import argparse
import logging
import sys

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fillmask-server")
    sub = parser.add_subparsers(dest="command", required=True)
    serve = sub.add_parser("serve", help="serve a masked-LM behind the wire protocol")
    serve.add_argument("--model", required=True, help="hub name or local checkpoint path")
    serve.add_argument("--name", default=None, help="served name reported by /info")
    serve.add_argument("--port", type=int, default=8301)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--device", default="cpu")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "serve":
        import uvicorn

        from .app import create_app
        from .model import ServedModel

        try:
            served = ServedModel.load(args.model, name=args.name, device=args.device)
        except Exception as exc:  # noqa: BLE001 - startup boundary
            print(f"failed to load model {args.model!r}: {exc}", file=sys.stderr)
            return 1
        uvicorn.run(create_app(served), host=args.host, port=args.port, log_level="info")
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
