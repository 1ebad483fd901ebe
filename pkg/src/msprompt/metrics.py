"""Multi-label precision/recall/F1, top-1 accuracy, and the 43-to-19 class mapping."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

SAMPLE = "sample"
MICRO = "micro"
MACRO = "macro"
AVERAGING = (SAMPLE, MICRO, MACRO)

MAPPING_FILE = "data/bigearthnet_43_to_19.csv"
MAPPING_SHA256 = "06d9e14020cba5414fac1934689913cade89750d108f63ea03373fb45c5eecff"


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass(frozen=True)
class PredictionRecord:
    patch_id: str
    predicted: frozenset[int]
    truth: frozenset[int]
    raw_text: str = ""
    parse_mode: str | None = None  # "strict", "lenient", or None when parsing failed
    backend_id: str = ""
    latency_ms: float = 0.0
    warnings: tuple[str, ...] = ()

    @property
    def parse_failed(self) -> bool:
        return self.parse_mode is None

    def to_json(self) -> dict:
        return {
            "patch_id": self.patch_id,
            "predicted": sorted(self.predicted),
            "truth": sorted(self.truth),
            "raw_text": self.raw_text,
            "parse_mode": self.parse_mode,
            "warnings": list(self.warnings),
            "backend_id": self.backend_id,
            "latency_ms": self.latency_ms,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PredictionRecord":
        return cls(
            patch_id=obj["patch_id"],
            predicted=frozenset(obj["predicted"]),
            truth=frozenset(obj["truth"]),
            raw_text=obj.get("raw_text", ""),
            parse_mode=obj.get("parse_mode"),
            backend_id=obj.get("backend_id", ""),
            latency_ms=obj.get("latency_ms", 0.0),
            warnings=tuple(obj.get("warnings", ())),
        )


@dataclass
class MetricsReport:
    sample: PRF
    micro: PRF
    macro: PRF
    per_class: dict[int, ClassCounts]
    n_records: int
    n_parse_failures: int
    accuracy: float | None = None
    headline: str = SAMPLE
    extra: dict = field(default_factory=dict)

    def averaged(self, mode: str) -> PRF:
        return {SAMPLE: self.sample, MICRO: self.micro, MACRO: self.macro}[mode]

    def to_dict(self) -> dict:
        return {
            "headline": self.headline,
            "sample": asdict(self.sample),
            "micro": asdict(self.micro),
            "macro": asdict(self.macro),
            "accuracy": self.accuracy,
            "n_records": self.n_records,
            "n_parse_failures": self.n_parse_failures,
            "per_class": {str(k): asdict(v) for k, v in sorted(self.per_class.items())},
            **self.extra,
        }


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def sample_prf(predicted: Iterable[int], truth: Iterable[int]) -> PRF:
    predicted, truth = set(predicted), set(truth)
    if not truth:
        raise ValueError("truth set must be non-empty")
    hit = len(predicted & truth)
    p = _ratio(hit, len(predicted))
    r = hit / len(truth)
    return PRF(p, r, _f1(p, r))


def aggregate(
    records: Sequence[PredictionRecord],
    n_classes: int | None = None,
    single_label: bool = False,
    headline: str = SAMPLE,
) -> MetricsReport:
    """Score ``records`` under sample, micro and macro averaging.

    Records are reduced in patch-id order so the floating-point result does not
    depend on arrival order. Macro averages over classes with at least one
    true occurrence.
    """
    if not records:
        raise ValueError("cannot aggregate an empty record list")
    if headline not in AVERAGING:
        raise ValueError(f"unknown averaging {headline!r}")
    records = sorted(records, key=lambda r: r.patch_id)

    per_class: dict[int, ClassCounts] = {}
    if n_classes is not None:
        per_class = {k: ClassCounts() for k in range(1, n_classes + 1)}
    sums = [0.0, 0.0, 0.0]
    for rec in records:
        s = sample_prf(rec.predicted, rec.truth)
        sums[0] += s.precision
        sums[1] += s.recall
        sums[2] += s.f1
        for k in rec.predicted | rec.truth:
            c = per_class.setdefault(k, ClassCounts())
            if k in rec.predicted and k in rec.truth:
                c.tp += 1
            elif k in rec.predicted:
                c.fp += 1
            else:
                c.fn += 1

    n = len(records)
    sample = PRF(sums[0] / n, sums[1] / n, sums[2] / n)

    tp = sum(c.tp for c in per_class.values())
    fp = sum(c.fp for c in per_class.values())
    fn = sum(c.fn for c in per_class.values())
    mp, mr = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
    micro = PRF(mp, mr, _f1(mp, mr))

    supported = [c for _, c in sorted(per_class.items()) if c.tp + c.fn > 0]
    ps = [_ratio(c.tp, c.tp + c.fp) for c in supported]
    rs = [_ratio(c.tp, c.tp + c.fn) for c in supported]
    fs = [_f1(p, r) for p, r in zip(ps, rs)]
    m = len(supported)
    macro = PRF(sum(ps) / m, sum(rs) / m, sum(fs) / m)

    return MetricsReport(
        sample=sample,
        micro=micro,
        macro=macro,
        per_class=per_class,
        n_records=n,
        n_parse_failures=sum(r.parse_failed for r in records),
        accuracy=top1_accuracy(records) if single_label else None,
        headline=headline,
    )


def top1_accuracy(records: Sequence[PredictionRecord]) -> float:
    if not records:
        raise ValueError("cannot score an empty record list")
    correct = 0
    for rec in records:
        if len(rec.truth) != 1:
            raise ValueError(f"record {rec.patch_id} is multi-label ({len(rec.truth)} true classes)")
        if len(rec.predicted) > 1:
            raise ValueError(f"record {rec.patch_id} has {len(rec.predicted)} predictions; expected at most 1")
        correct += rec.predicted == rec.truth
    return correct / len(records)


@dataclass(frozen=True)
class ClassMapping:
    table: dict[int, int | None]
    source_names: dict[int, str]
    target_names: dict[int, str]


@lru_cache(maxsize=None)
def load_mapping() -> ClassMapping:
    """Load the shipped 43-to-19 table, refusing it if the checksum does not match."""
    raw = resources.files("msprompt").joinpath(MAPPING_FILE).read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != MAPPING_SHA256:
        raise RuntimeError(f"{MAPPING_FILE} checksum mismatch: {digest} != {MAPPING_SHA256}")
    table, src, dst = {}, {}, {}
    for row in csv.DictReader(io.StringIO(raw.decode("utf-8"))):
        k = int(row["from_index"])
        src[k] = row["from_name"]
        if row["to_index"]:
            table[k] = int(row["to_index"])
            dst[table[k]] = row["to_name"]
        else:
            table[k] = None
    return ClassMapping(table, src, dst)


def map_43_to_19(indices: Iterable[int]) -> frozenset[int]:
    """Translate BigEarthNet-43 indices to the 19-class nomenclature; dropped classes vanish."""
    table = load_mapping().table
    out = set()
    for k in indices:
        if k not in table:
            raise ValueError(f"class index {k} is outside 1..43")
        if table[k] is not None:
            out.add(table[k])
    return frozenset(out)
