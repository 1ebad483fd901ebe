"""Command line interface: ``msprompt {import,render,prompt,eval,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from msprompt import kernels
from msprompt.backend import FatalBackendError
from msprompt.ingest import BundleError, import_dataset
from msprompt.metrics import AVERAGING
from msprompt.raster import BIGEARTHNET, EUROSAT
from msprompt.runner import determinism_digest, resolve_config, run_eval, render_manifest, write_prompts, write_report

log = logging.getLogger("msprompt")


def _add_run_options(p: argparse.ArgumentParser, *, backend: bool) -> None:
    p.add_argument("--config", help="JSON config file (flags override it; it overrides MSPROMPT_* env vars)")
    p.add_argument("--manifest")
    p.add_argument("--task", choices=["BigEarthNet43", "BigEarthNet19", "EuroSat10"])
    p.add_argument("--modality", choices=["RgbOnly", "MultiSpectral"])
    p.add_argument("--products", help="comma-separated products, e.g. TrueColor,NDVI (default: all six)")
    p.add_argument("--normalization", help="minmax (default), percentile, or percentile:LO,HI")
    p.add_argument("--subset-n", type=int, dest="subset_n", help="evaluate a seeded random subset of N patches")
    p.add_argument("--seed", type=int, dest="subset_seed")
    if backend:
        p.add_argument("--backend", choices=["http", "mock-truth", "mock-empty", "mock-fixture"])
        p.add_argument("--endpoint-url", dest="endpoint_url")
        p.add_argument("--model-name", dest="model_name")
        p.add_argument("--fixture", help="JSON {patch_id: answer} for --backend mock-fixture")
        p.add_argument("--unknown-patch", dest="unknown_patch", choices=["error", "empty"])
        p.add_argument("--max-in-flight", type=int, dest="max_in_flight")
        p.add_argument("--retries", type=int)
        p.add_argument("--backoff-base-ms", type=float, dest="backoff_base_ms")
        p.add_argument("--cache-dir", dest="cache_dir")
        p.add_argument("--temperature", type=float)
        p.add_argument("--max-output-tokens", type=int, dest="max_output_tokens")
        p.add_argument("--label", help="run label used in reports (default: output directory name)")


_RUN_KEYS = (
    "manifest", "task", "modality", "products", "normalization", "subset_n", "subset_seed", "backend",
    "endpoint_url", "model_name", "fixture", "unknown_patch", "max_in_flight", "retries", "backoff_base_ms",
    "cache_dir", "temperature", "max_output_tokens", "label", "output_dir",
)


def _config(args):
    flags = {k: getattr(args, k, None) for k in _RUN_KEYS}
    return resolve_config(flags, args.config)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msprompt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="convert a source dataset into patch bundles + manifest.json")
    p.add_argument("src")
    p.add_argument("dst")
    p.add_argument("--kind", required=True, choices=[BIGEARTHNET, EUROSAT])
    p.add_argument("--skip-bad", action="store_true", help="skip unreadable patches instead of failing")
    p.add_argument("--split", default="test",
                   help="BigEarthNet: keep folders listed in <src>/<split>.csv when it exists; 'all' keeps every folder")
    p.add_argument("--keep-contaminated", action="store_true",
                   help="BigEarthNet: ignore the cloud/shadow and seasonal-snow exclusion lists")

    p = sub.add_parser("render", help="write <out>/<patch_id>/<product_id>.png")
    _add_run_options(p, backend=False)
    p.add_argument("--out", required=True, dest="output_dir")

    p = sub.add_parser("prompt", help="dry run: write prompt text and attached images without a backend")
    _add_run_options(p, backend=False)
    p.add_argument("--out", required=True, dest="output_dir")

    p = sub.add_parser("eval", help="query the backend and score every patch")
    _add_run_options(p, backend=True)
    p.add_argument("--out", dest="output_dir")

    p = sub.add_parser("report", help="compare metrics.json files as Markdown + CSV")
    p.add_argument("metrics", nargs="+")
    p.add_argument("--out", required=True, help="output path prefix; writes .md and .csv")
    p.add_argument("--baseline", help="label of the run deltas are computed against (default: first)")
    p.add_argument("--averaging", default=",".join(AVERAGING), help="comma-separated subset of sample,micro,macro")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args)
    except FatalBackendError as exc:
        print(f"error: backend failure: {exc}", file=sys.stderr)
        return 3
    except (BundleError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "import":
        result = import_dataset(
            args.src, args.dst, args.kind,
            skip_bad=args.skip_bad, split=args.split, exclude_contaminated=not args.keep_contaminated,
        )
        print(f"imported {len(result.manifest)} patches -> {result.manifest_path}")
        if result.failures:
            print(f"warning: skipped {len(result.failures)} bad patch(es)", file=sys.stderr)
        return 0

    if args.command == "render":
        paths = render_manifest(_config(args), args.output_dir)
        print(f"wrote {len(paths)} PNG files to {args.output_dir} (kernels: {kernels.BACKEND})")
        return 0

    if args.command == "prompt":
        paths = write_prompts(_config(args), args.output_dir)
        print(f"wrote {len(paths)} prompts to {args.output_dir}")
        return 0

    if args.command == "eval":
        config = _config(args)
        result = run_eval(config)
        report = result.report
        summary = {
            "records": report.n_records,
            "parse_failures": report.n_parse_failures,
            "errors": len(result.errors),
            "cache_hits": report.extra["n_cache_hits"],
            "backend_calls": report.extra["n_backend_calls"],
            "sample_f1": round(report.sample.f1, 4),
            "micro_f1": round(report.micro.f1, 4),
            "macro_f1": round(report.macro.f1, 4),
        }
        if report.accuracy is not None:
            summary["accuracy"] = round(report.accuracy, 4)
        print(json.dumps(summary))
        print(f"records: {result.records_path}  digest: {determinism_digest(result.records_path)[:16]}")
        return 0

    if args.command == "report":
        averaging = [a.strip() for a in args.averaging.split(",") if a.strip()]
        table = write_report(args.metrics, args.out, args.baseline, averaging)
        print(table.markdown(), end="")
        return 0
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
