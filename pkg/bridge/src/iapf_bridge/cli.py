"""Bridge command line.

    iapf-bridge [--config FILE]                      # serve on stdio
    iapf-bridge record --images DIR --prompts FILE --out DIR [--config FILE]

Without --config every capability uses the deterministic mock adapters.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .adapters import resolve_adapters
from .config import BridgeConfig
from .record import record_fixtures
from .server import serve


def _load_config(path) -> BridgeConfig:
    return BridgeConfig.from_file(path) if path else BridgeConfig()


def _resolve_or_die(cfg: BridgeConfig):
    # every model must resolve before the first frame is served
    try:
        return resolve_adapters(cfg)
    except Exception as exc:
        print(f"iapf-bridge: cannot resolve models: {exc}", file=sys.stderr)
        raise SystemExit(1)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="iapf-bridge")
    parser.add_argument("--config", default=None, help="JSON file mirroring BridgeConfig")
    sub = parser.add_subparsers(dest="command")
    rec = sub.add_parser("record", help="record a fixture tree")
    rec.add_argument("--images", required=True)
    rec.add_argument("--prompts", required=True, help="file with one prompt per line")
    rec.add_argument("--out", required=True)
    rec.add_argument("--config", default=None, dest="record_config")
    args = parser.parse_args(argv)

    if args.command == "record":
        cfg = _load_config(args.record_config or args.config)
        adapters = _resolve_or_die(cfg)
        prompts = [
            line.strip()
            for line in Path(args.prompts).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        if not prompts:
            print("iapf-bridge: prompts file is empty", file=sys.stderr)
            return 2
        summary = record_fixtures(adapters, args.images, prompts, args.out)
        print(f"recorded {len(summary.ok)} image(s), {len(summary.failed)} failed")
        return 0 if not summary.failed else 1

    cfg = _load_config(args.config)
    adapters = _resolve_or_die(cfg)
    serve(adapters)
    return 0


if __name__ == "__main__":
    sys.exit(main())
