"""Command-line surface.

    iapf run --images DIR --backend fixture:DIR|subprocess:"CMD"|synthetic \
        [--prompt P] [--prompts FILE] [--repeats N] [--config FILE] [--jobs N] --out DIR
    iapf eval cos --pred DIR --gt DIR [--out results.tsv]
    iapf eval cis --pred DIR --gt DIR [--out results.tsv]
    iapf eval boxes --pred DIR --gt DIR [--iou 0.75]
    iapf fixture validate DIR
    iapf demo synth --n 10 --seed 0 --out DIR

The IAPF_SEED environment variable overrides the configured seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .backends.fixture import fixture_backend
from .backends.wire import subprocess_backend
from .errors import IapfError
from .fixtures import validate_fixture_tree
from .metrics.dataset import (
    evaluate_boxes,
    evaluate_cis,
    evaluate_cos,
    write_report_tsv,
)
from .pipeline import (
    PipelineConfig,
    make_synthetic_dataset,
    run_dataset,
    scene_backend_factory,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iapf")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the prompting pipeline over an image dir")
    run.add_argument("--images", required=True)
    run.add_argument("--backend", required=True,
                     help='fixture:DIR | subprocess:"CMD" | synthetic')
    run.add_argument("--prompt", default=None, help="single task-generic prompt")
    run.add_argument("--prompts", default=None, help="file with one prompt per line")
    run.add_argument("--repeats", type=int, default=None)
    run.add_argument("--config", default=None, help="JSON file mirroring PipelineConfig")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--timeout", type=float, default=300.0,
                     help="per-call timeout for subprocess backends (seconds)")
    run.add_argument("--out", required=True)

    evaluate = sub.add_parser("eval", help="score predictions against ground truth")
    eval_sub = evaluate.add_subparsers(dest="eval_mode", required=True)
    for mode in ("cos", "cis"):
        p = eval_sub.add_parser(mode)
        p.add_argument("--pred", required=True)
        p.add_argument("--gt", required=True)
        p.add_argument("--out", default=None)
    boxes = eval_sub.add_parser("boxes")
    boxes.add_argument("--pred", required=True)
    boxes.add_argument("--gt", required=True)
    boxes.add_argument("--iou", type=float, default=0.75)

    fixture = sub.add_parser("fixture", help="fixture tree tooling")
    fixture_sub = fixture.add_subparsers(dest="fixture_mode", required=True)
    validate = fixture_sub.add_parser("validate")
    validate.add_argument("dir")

    demo = sub.add_parser("demo", help="demo/benchmark data")
    demo_sub = demo.add_subparsers(dest="demo_mode", required=True)
    synth = demo_sub.add_parser("synth")
    synth.add_argument("--n", type=int, default=10)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)

    return parser


def _load_config(args) -> PipelineConfig:
    if args.config:
        obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
        cfg = PipelineConfig.from_json_obj(obj)
    else:
        cfg = PipelineConfig()
    prompts = cfg.prompts
    if args.prompts:
        lines = Path(args.prompts).read_text(encoding="utf-8").splitlines()
        prompts = tuple(line.strip() for line in lines if line.strip())
    elif args.prompt:
        prompts = (args.prompt,)
    repeats = args.repeats if args.repeats is not None else cfg.repeats
    seed = cfg.seed
    if "IAPF_SEED" in os.environ:
        seed = int(os.environ["IAPF_SEED"])
    return PipelineConfig(
        prompts=prompts, repeats=repeats, generator=cfg.generator, seed=seed
    )


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    spec = args.backend
    close = None
    if spec == "synthetic":
        backend = scene_backend_factory(cfg)
    elif spec.startswith("fixture:"):
        backend = fixture_backend(spec.split(":", 1)[1])
    elif spec.startswith("subprocess:"):
        backend = subprocess_backend(spec.split(":", 1)[1], timeout=args.timeout)
        close = backend.close
    else:
        print(f"unknown backend spec {spec!r}", file=sys.stderr)
        return 2
    try:
        summary = run_dataset(args.images, cfg, backend, args.out, jobs=args.jobs)
    finally:
        if close:
            close()
    for image_id, err in summary.failed:
        print(f"FAILED {image_id}: {err}", file=sys.stderr)
    print(summary.one_line())
    return 0 if not summary.failed else 1


def _cmd_eval(args) -> int:
    if args.eval_mode == "boxes":
        value = evaluate_boxes(args.pred, args.gt, iou_threshold=args.iou)
        print(f"map@{args.iou:g}\t{value:.6f}")
        return 0
    report = evaluate_cos(args.pred, args.gt) if args.eval_mode == "cos" else evaluate_cis(
        args.pred, args.gt
    )
    if args.out:
        write_report_tsv(args.out, report)
    summary = "\t".join(
        f"{name}={value:.6f}" for name, value in zip(report.columns(), report.mean)
    )
    print(f"MEAN\t{summary}")
    return 0


def _cmd_fixture(args) -> int:
    problems = validate_fixture_tree(args.dir)
    for problem in problems:
        print(problem, file=sys.stderr)
    if problems:
        print(f"{len(problems)} violation(s)")
        return 1
    print("ok")
    return 0


def _cmd_demo(args) -> int:
    ids = make_synthetic_dataset(args.n, args.seed, args.out)
    print(f"wrote {len(ids)} synthetic images under {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "fixture":
            return _cmd_fixture(args)
        if args.command == "demo":
            return _cmd_demo(args)
    except IapfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
