"""Run configuration and the render / prompt / eval / report pipelines behind the CLI."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

from msprompt.backend import (
    Backend,
    BackendError,
    FatalBackendError,
    GenerationParams,
    HttpBackend,
    MockBackend,
    ModelClient,
    ModelRequest,
    ResponseCache,
    empty_backend,
    mock_from_truth,
)
from msprompt.ingest import BUNDLE_META, DATASET_TASK, DatasetManifest, ManifestEntry, sample_subset
from msprompt.metrics import AVERAGING, MetricsReport, PredictionRecord, aggregate, map_43_to_19
from msprompt.parsing import ParseFailure, parse_answer
from msprompt.products import DEFAULT_SELECTION, ProductId, parse_selection, render_products
from msprompt.prompts import Modality, Task, build_prompt, task_spec
from msprompt.raster import BIGEARTHNET, EUROSAT, Normalization

log = logging.getLogger(__name__)

ENV_PREFIX = "MSPROMPT_"
BACKEND_KINDS = ("http", "mock-truth", "mock-empty", "mock-fixture")


@dataclass(frozen=True)
class RunConfig:
    manifest: str = ""
    task: str | None = None  # defaults from the manifest's dataset
    modality: str = Modality.MULTISPECTRAL.value
    products: tuple[str, ...] = tuple(p.value for p in DEFAULT_SELECTION)
    normalization: str = "minmax"
    backend: str = "http"
    endpoint_url: str = ""
    model_name: str = ""
    max_in_flight: int = 4
    retries: int = 3
    backoff_base_ms: float = 500.0
    cache_dir: str | None = None  # defaults to <output_dir>/cache
    fixture: str | None = None  # JSON {patch_id: answer} for the mock-fixture backend
    unknown_patch: str = "error"
    temperature: float = 0.0
    max_output_tokens: int = 256
    subset_n: int | None = None
    subset_seed: int = 0
    output_dir: str = "runs/latest"
    label: str | None = None

    def __post_init__(self):
        modality = Modality(self.modality)
        products = parse_selection(self.products)
        if modality is Modality.RGB_ONLY:
            products = (ProductId.TRUE_COLOR,)
        elif ProductId.TRUE_COLOR not in products:
            raise ValueError("MultiSpectral runs must include TrueColor in the product selection")
        object.__setattr__(self, "modality", modality.value)
        object.__setattr__(self, "products", tuple(p.value for p in products))
        if self.task is not None:
            object.__setattr__(self, "task", Task(self.task).value)
        Normalization.parse(self.normalization)
        if self.backend not in BACKEND_KINDS:
            raise ValueError(f"unknown backend {self.backend!r}; expected one of {BACKEND_KINDS}")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    @property
    def run_label(self) -> str:
        return self.label or Path(self.output_dir).name

    @property
    def resolved_cache_dir(self) -> Path:
        return Path(self.cache_dir) if self.cache_dir else Path(self.output_dir) / "cache"

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


def _coerce(name: str, value: Any) -> Any:
    """Convert env/config values to the field's type (strings from the environment)."""
    if value is None:
        return None
    default = RunConfig.__dataclass_fields__[name].default
    if name == "products":
        return tuple(value.split(",")) if isinstance(value, str) else tuple(value)
    if isinstance(value, str) and (isinstance(default, (int, float)) or name == "subset_n"):
        return float(value) if isinstance(default, float) else int(value)
    return value


def resolve_config(
    flags: Mapping[str, Any] | None = None,
    config_file: str | os.PathLike | None = None,
    environ: Mapping[str, str] | None = None,
) -> RunConfig:
    """Merge settings with precedence flags > config file > environment > defaults."""
    names = {f.name for f in fields(RunConfig)}
    merged: dict[str, Any] = {}
    environ = os.environ if environ is None else environ
    for name in names:
        key = ENV_PREFIX + name.upper()
        if key in environ:
            merged[name] = _coerce(name, environ[key])
    if config_file:
        data = json.loads(Path(config_file).read_text(encoding="utf-8"))
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update({k: _coerce(k, v) for k, v in data.items()})
    for k, v in (flags or {}).items():
        if v is not None:
            if k not in names:
                raise ValueError(f"unknown setting {k!r}")
            merged[k] = _coerce(k, v)
    return RunConfig(**merged)


# ---- shared helpers ----

def load_manifest(config: RunConfig) -> DatasetManifest:
    manifest = DatasetManifest.load(config.manifest)
    if config.subset_n is not None:
        manifest = sample_subset(manifest, config.subset_n, config.subset_seed)
    return manifest


def resolve_task(config: RunConfig, manifest: DatasetManifest) -> Task:
    if config.task is None:
        if manifest.dataset not in DATASET_TASK:
            raise ValueError(f"cannot infer a task for dataset {manifest.dataset!r}; set task explicitly")
        return DATASET_TASK[manifest.dataset]
    task = Task(config.task)
    allowed = {Task.BIGEARTHNET43: BIGEARTHNET, Task.BIGEARTHNET19: BIGEARTHNET, Task.EUROSAT10: EUROSAT}
    if manifest.dataset in (BIGEARTHNET, EUROSAT) and allowed[task] != manifest.dataset:
        raise ValueError(f"task {task} does not apply to a {manifest.dataset} manifest")
    return task


def read_labels(manifest: DatasetManifest, entry: ManifestEntry) -> frozenset[int]:
    meta = json.loads((manifest.bundle_path(entry) / BUNDLE_META).read_text(encoding="utf-8"))
    return frozenset(meta["labels"])


def task_truth(task: Task, labels: frozenset[int]) -> frozenset[int]:
    return map_43_to_19(labels) if task is Task.BIGEARTHNET19 else labels


def make_backend(config: RunConfig, manifest: DatasetManifest, task: Task) -> Backend:
    if config.backend == "http":
        return HttpBackend(config.endpoint_url, config.model_name)
    if config.backend == "mock-empty":
        return empty_backend()
    if config.backend == "mock-truth":
        truth = {e.patch_id: task_truth(task, read_labels(manifest, e)) for e in manifest}
        return mock_from_truth(truth, unknown=config.unknown_patch)
    if not config.fixture:
        raise ValueError("the mock-fixture backend needs a fixture file")
    answers = json.loads(Path(config.fixture).read_text(encoding="utf-8"))
    return MockBackend(answers, unknown=config.unknown_patch, backend_id="mock-fixture")


def _write_lines(path: Path, rows: Sequence[dict]) -> None:
    text = "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows)
    path.write_text(text, encoding="utf-8")


# ---- render / prompt ----

def render_manifest(config: RunConfig, out_dir: str | os.PathLike) -> list[Path]:
    """Write ``<out_dir>/<patch_id>/<product_id>.png`` for every patch."""
    manifest = load_manifest(config)
    method = Normalization.parse(config.normalization)
    out_dir = Path(out_dir)
    written = []
    for entry in manifest:
        patch = manifest.load_patch(entry)
        target = out_dir / entry.patch_id
        target.mkdir(parents=True, exist_ok=True)
        for img in render_products(patch, config.products, method):
            path = target / f"{img.product_id}.png"
            path.write_bytes(img.to_png())
            written.append(path)
    return written


def write_prompts(config: RunConfig, out_dir: str | os.PathLike) -> list[Path]:
    """Dry run: per patch, write ``prompt.txt``, the attached PNGs, and ``images.json``."""
    manifest = load_manifest(config)
    task = resolve_task(config, manifest)
    method = Normalization.parse(config.normalization)
    out_dir = Path(out_dir)
    written = []
    for entry in manifest:
        patch = manifest.load_patch(entry)
        prompt = build_prompt(task, config.modality, render_products(patch, config.products, method))
        target = out_dir / entry.patch_id
        target.mkdir(parents=True, exist_ok=True)
        listing = []
        for i, img in enumerate(prompt.attachments, start=1):
            png = img.to_png()
            name = f"{i}_{img.product_id}.png"
            (target / name).write_bytes(png)
            listing.append({
                "position": i,
                "product_id": str(img.product_id),
                "file": name,
                "width": img.width,
                "height": img.height,
                "sha256": hashlib.sha256(png).hexdigest(),
            })
        (target / "prompt.txt").write_text(prompt.text, encoding="utf-8", newline="\n")
        (target / "images.json").write_text(json.dumps(listing, indent=2) + "\n", encoding="utf-8")
        written.append(target / "prompt.txt")
    return written


# ---- eval ----

@dataclass
class EvalResult:
    records: list[PredictionRecord]
    report: MetricsReport
    records_path: Path
    metrics_path: Path
    errors: list[dict] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)


def _evaluate_patch(manifest, entry, task, config, method, client) -> PredictionRecord | None:
    spec = task_spec(task)
    patch = manifest.load_patch(entry)
    truth = task_truth(task, patch.labels)
    if not truth:
        return None
    prompt = build_prompt(task, config.modality, render_products(patch, config.products, method))
    request = ModelRequest(
        prompt.text,
        tuple(img.to_png() for img in prompt.attachments),
        GenerationParams(config.temperature, config.max_output_tokens),
        patch_id=entry.patch_id,
    )
    response = client.query(request)
    try:
        parsed = parse_answer(response.text, spec.n_classes, spec.multi_label)
        predicted, mode, warnings = parsed.index_set, parsed.parse_mode, parsed.warnings
    except ParseFailure as exc:
        predicted, mode, warnings = frozenset(), None, tuple(exc.warnings)
    return PredictionRecord(
        patch_id=entry.patch_id,
        predicted=predicted,
        truth=truth,
        raw_text=response.text,
        parse_mode=mode,
        backend_id=response.backend_id,
        latency_ms=round(response.latency_ms, 3),
        warnings=warnings,
    )


def _load_records(path: Path) -> dict[str, PredictionRecord]:
    if not path.exists():
        return {}
    done = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            rec = PredictionRecord.from_json(json.loads(line))
            done[rec.patch_id] = rec
    return done


def run_eval(config: RunConfig, backend: Backend | None = None) -> EvalResult:
    """Evaluate every patch in the manifest, resuming from an existing ``records.jsonl``.

    Backend fatal errors abort the run. Other per-patch failures (transient
    errors after retries, protocol errors) go to ``errors.jsonl`` and are
    retried on the next run; they are not scored.
    """
    manifest = load_manifest(config)
    task = resolve_task(config, manifest)
    spec = task_spec(task)
    method = Normalization.parse(config.normalization)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / "records.jsonl"
    metrics_path = out / "metrics.json"

    wanted = set(manifest.patch_ids)
    done = {pid: r for pid, r in _load_records(records_path).items() if pid in wanted}
    todo = [e for e in manifest if e.patch_id not in done]

    if backend is None:
        backend = make_backend(config, manifest, task)
    client = ModelClient(
        backend,
        ResponseCache(config.resolved_cache_dir),
        max_in_flight=config.max_in_flight,
        retries=config.retries,
        backoff_base_ms=config.backoff_base_ms,
    )

    errors: list[dict] = []
    skipped: list[str] = []
    with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
        futures = {pool.submit(_evaluate_patch, manifest, e, task, config, method, client): e for e in todo}
        for fut in as_completed(futures):
            entry = futures[fut]
            exc = fut.exception()
            if isinstance(exc, FatalBackendError):
                for f in futures:
                    f.cancel()
                raise exc
            if exc is not None:
                if not isinstance(exc, (BackendError, ValueError, OSError)):
                    raise exc
                log.warning("patch %s failed: %s", entry.patch_id, exc)
                errors.append({"patch_id": entry.patch_id, "error": f"{type(exc).__name__}: {exc}"})
                continue
            rec = fut.result()
            if rec is None:
                skipped.append(entry.patch_id)
            else:
                done[entry.patch_id] = rec

    records = [done[pid] for pid in sorted(done)]
    _write_lines(records_path, [r.to_json() for r in records])
    errors.sort(key=lambda e: e["patch_id"])
    _write_lines(out / "errors.jsonl", errors)
    if not records:
        raise RuntimeError("no patch could be scored")

    report = aggregate(records, n_classes=spec.n_classes, single_label=not spec.multi_label)
    report.extra = {
        "label": config.run_label,
        "task": task.value,
        "modality": config.modality,
        "products": list(config.products),
        "n_cache_hits": client.cache_hits,
        "n_backend_calls": client.backend_calls,
        "n_errors": len(errors),
        "n_skipped_no_labels": len(skipped),
        "n_lenient": sum(r.parse_mode == "lenient" for r in records),
        "config": config.to_json(),
    }
    metrics_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EvalResult(records, report, records_path, metrics_path, errors, sorted(skipped))


def determinism_digest(records_path: str | os.PathLike) -> str:
    """Hash of a records file with latency fields removed."""
    h = hashlib.sha256()
    for line in Path(records_path).read_text(encoding="utf-8").splitlines():
        obj = json.loads(line)
        obj.pop("latency_ms", None)
        h.update(json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8") + b"\n")
    return h.hexdigest()


# ---- report ----

@dataclass
class ComparisonTable:
    header: list[str]
    rows: list[list[str]]
    raw_rows: list[list[Any]]

    def markdown(self) -> str:
        lines = ["| " + " | ".join(self.header) + " |", "|" + "|".join("---" for _ in self.header) + "|"]
        lines += ["| " + " | ".join(r) + " |" for r in self.rows]
        return "\n".join(lines) + "\n"

    def csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header)
        writer.writerows(self.raw_rows)
        return buf.getvalue()


def compare_runs(
    metrics: Sequence[dict],
    baseline: str | None = None,
    averaging: Sequence[str] = AVERAGING,
) -> ComparisonTable:
    """Build a Table-1 style comparison (F1 / precision / recall) or a Table-4 style accuracy table.

    The delta column compares the first listed averaging's F1 (or the
    accuracy) against ``baseline`` (default: the first run); it is omitted for
    a single run.
    """
    if not metrics:
        raise ValueError("no runs to report")
    tasks = {m.get("task") for m in metrics}
    if len(tasks) != 1:
        raise ValueError(f"runs are for different tasks: {sorted(str(t) for t in tasks)}")
    for mode in averaging:
        if mode not in AVERAGING:
            raise ValueError(f"unknown averaging {mode!r}")
    labels = [m.get("label") or f"run{i + 1}" for i, m in enumerate(metrics)]
    base_idx = 0
    if baseline is not None:
        if baseline not in labels:
            raise ValueError(f"baseline {baseline!r} is not among runs {labels}")
        base_idx = labels.index(baseline)
    single = metrics[0].get("accuracy") is not None
    with_delta = len(metrics) > 1

    if single:
        header = ["Model", "Classification Accuracy, Top 1 (%)"]
        values = [[100.0 * m["accuracy"]] for m in metrics]
        fmt = "{:.1f}"
        delta_fmt = "{:+.1f}"
    else:
        header = ["Model"]
        for mode in averaging:
            header += [f"F1 ({mode})", f"Precision ({mode})", f"Recall ({mode})"]
        values = [[m[mode][k] for mode in averaging for k in ("f1", "precision", "recall")] for m in metrics]
        fmt = "{:.3f}"
        delta_fmt = "{:+.3f}"
    if with_delta:
        header.append(f"Delta vs {labels[base_idx]}")

    rows, raw = [], []
    for label, vals in zip(labels, values):
        row = [label] + [fmt.format(v) for v in vals]
        raw_row: list[Any] = [label] + list(vals)
        if with_delta:
            # round both sides to the displayed precision so the delta matches the table
            digits = 1 if single else 3
            d = round(vals[0], digits) - round(values[base_idx][0], digits)
            row.append(delta_fmt.format(d))
            raw_row.append(vals[0] - values[base_idx][0])
        rows.append(row)
        raw.append(raw_row)
    return ComparisonTable(header, rows, raw)


def write_report(metrics_paths: Sequence[str | os.PathLike], out_prefix: str | os.PathLike, baseline=None,
                 averaging: Sequence[str] = AVERAGING) -> ComparisonTable:
    metrics = [json.loads(Path(p).read_text(encoding="utf-8")) for p in metrics_paths]
    table = compare_runs(metrics, baseline, averaging)
    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    out_prefix.with_suffix(".md").write_text(table.markdown(), encoding="utf-8")
    out_prefix.with_suffix(".csv").write_text(table.csv(), encoding="utf-8")
    return table
