"""Desk-scale quantitative studies: chunking sweeps, token-limit ratio
tables, embedding cluster statistics, expert-score aggregation and
embedding export for external projection tools.

Cluster statistics stand in for 2-D projections of the embedding space:
per-label point counts, intra-cluster spread around the centroid and the
inter-centroid distance matrix capture the trends a projection would show
(clusters shrinking as chunks grow, separating as overlap grows) in a
directly testable form.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import EngineConfig
from .embedding import TokenizerConfig, token_count
from .errors import EmptyStore, IoFailure, MissingLabel, ScoreOutOfRange
from .ingest import SplitParams
from .kb import KnowledgeBase, build_knowledge_base
from .store import Metric, VectorStore, similarity

logger = logging.getLogger(__name__)

# Sweep ranges of the chunking studies: sizes 800..2000 step 300 at a fixed
# overlap of 500, overlaps 0..700 step 175 at a fixed size of 1000.
SIZE_SWEEP_VALUES = (800, 1100, 1400, 1700, 2000)
SIZE_SWEEP_FIXED_OVERLAP = 500
OVERLAP_SWEEP_VALUES = (0, 175, 350, 525, 700)
OVERLAP_SWEEP_FIXED_SIZE = 1000

SWEEP_AXES = ("chunk_size", "chunk_overlap")


@dataclass(frozen=True)
class SweepSpec:
    """One chunking-parameter sweep: vary one axis, hold the other fixed."""

    axis: str
    values: tuple[int, ...]
    fixed: int
    corpus_dir: str

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"axis must be one of {SWEEP_AXES}")
        values = tuple(self.values)
        object.__setattr__(self, "values", values)
        if not values:
            raise ValueError("values must be non-empty")
        if any(v < 0 for v in values):
            raise ValueError("values must be non-negative")
        if list(values) != sorted(set(values)):
            raise ValueError("values must be strictly increasing")
        if self.axis == "chunk_overlap" and any(v >= self.fixed for v in values):
            raise ValueError("overlap values must stay below the fixed chunk_size")
        if self.axis == "chunk_size" and any(self.fixed >= v for v in values):
            raise ValueError("fixed overlap must stay below every chunk_size value")

    def split_params(self, value: int, base: SplitParams) -> SplitParams:
        if self.axis == "chunk_size":
            return replace(base, chunk_size=value, chunk_overlap=self.fixed)
        return replace(base, chunk_size=self.fixed, chunk_overlap=value)


@dataclass
class SweepRow:
    value: int
    chunk_count: int
    mean_chunk_length: float
    store_path: str
    error: str | None = None


@dataclass
class SweepReport:
    axis: str
    fixed: int
    rows: list[SweepRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"axis": self.axis, "fixed": self.fixed, "rows": [vars(r) for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow([self.axis, "chunk_count", "mean_chunk_length", "store_path", "error"])
        for row in self.rows:
            writer.writerow(
                [row.value, row.chunk_count, f"{row.mean_chunk_length:.2f}", row.store_path, row.error or ""]
            )
        return buf.getvalue()


def sweep_chunking(
    spec: SweepSpec,
    config: EngineConfig,
    workdir: str | Path,
    build_aux: bool = False,
) -> SweepReport:
    """Build one knowledge base per axis value and report chunk statistics.

    Failed rows are recorded and the sweep continues.
    """
    workdir = Path(workdir)
    report = SweepReport(axis=spec.axis, fixed=spec.fixed)
    for value in spec.values:
        store_path = workdir / f"{spec.axis}_{value}"
        try:
            params = spec.split_params(value, config.split)
            row_config = replace(config, split=params)
            build_report = build_knowledge_base(
                spec.corpus_dir, row_config, store_root=store_path, build_aux=build_aux
            )
            store = VectorStore.open(store_path)
            lengths = [len(r.text) for r in store.records()]
            report.rows.append(
                SweepRow(
                    value=value,
                    chunk_count=build_report.chunk_count,
                    mean_chunk_length=float(np.mean(lengths)) if lengths else 0.0,
                    store_path=str(store_path),
                )
            )
        except Exception as exc:  # noqa: BLE001 - row isolation is the contract
            logger.warning("sweep row %s=%d failed: %s", spec.axis, value, exc)
            report.rows.append(
                SweepRow(
                    value=value,
                    chunk_count=0,
                    mean_chunk_length=0.0,
                    store_path=str(store_path),
                    error=str(exc),
                )
            )
    return report


# --- token ratio table ------------------------------------------------------


@dataclass(frozen=True)
class RatioRow:
    """Token accounting of one (chunk_size, overlap) configuration.

    Percentages are exact: pct_of_llm_limit == 100 * tokens_per_chunk /
    llm_limit, and analogously for the embedding-model limit. The
    chars-vs-embedding-limit column reports the alternative reading of the
    chunk-size guidance (character length against model dimension).
    """

    chunk_size_chars: int
    chunk_overlap_chars: int
    tokens_per_chunk: int
    pct_of_llm_limit: float
    pct_of_em_limit: float
    pct_chars_of_em_limit: float

    def to_dict(self) -> dict:
        return dict(vars(self))


RATIO_CSV_HEADER = (
    "chunk_size_chars,chunk_overlap_chars,tokens_per_chunk,"
    "pct_of_llm_limit,pct_of_em_limit,pct_chars_of_em_limit"
)

DEFAULT_RATIO_ROWS: tuple[tuple[int, int], ...] = (
    tuple((size, SIZE_SWEEP_FIXED_OVERLAP) for size in SIZE_SWEEP_VALUES)
    + tuple((OVERLAP_SWEEP_FIXED_SIZE, ov) for ov in OVERLAP_SWEEP_VALUES)
    + ((700, 200),)
)


def representative_chunk(size: int) -> str:
    """A synthetic chunk of exactly ``size`` characters."""
    filler = "lorem ipsum dolor sit amet consectetur adipiscing elit sed do "
    reps = size // len(filler) + 1
    return (filler * reps)[:size]


def token_ratio_table(
    rows: list[tuple[int, int]],
    tok: TokenizerConfig,
    llm_limit: int,
    em_limit: int,
) -> list[RatioRow]:
    """Token counts and limit percentages for each configuration row."""
    if llm_limit <= 0 or em_limit <= 0:
        raise ValueError("token limits must be positive")
    out = []
    for size, overlap in rows:
        tokens = token_count(representative_chunk(size), tok) if size > 0 else 0
        out.append(
            RatioRow(
                chunk_size_chars=size,
                chunk_overlap_chars=overlap,
                tokens_per_chunk=tokens,
                pct_of_llm_limit=100.0 * tokens / llm_limit,
                pct_of_em_limit=100.0 * tokens / em_limit,
                pct_chars_of_em_limit=100.0 * size / em_limit,
            )
        )
    return out


def ratio_table_csv(rows: list[RatioRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(RATIO_CSV_HEADER.split(","))
    for r in rows:
        writer.writerow(
            [
                r.chunk_size_chars,
                r.chunk_overlap_chars,
                r.tokens_per_chunk,
                repr(r.pct_of_llm_limit),
                repr(r.pct_of_em_limit),
                repr(r.pct_chars_of_em_limit),
            ]
        )
    return buf.getvalue()


# --- cluster statistics ----------------------------------------------------------


@dataclass
class LabelStats:
    count: int
    centroid: tuple[float, ...]
    mean_intra_distance: float


@dataclass
class ClusterStats:
    metric: Metric
    labels: list[str]
    per_label: dict[str, LabelStats]
    inter_centroid_distances: list[list[float]]

    @property
    def mean_inter_centroid_distance(self) -> float:
        n = len(self.labels)
        if n < 2:
            return 0.0
        total = sum(
            self.inter_centroid_distances[i][j]
            for i in range(n)
            for j in range(i + 1, n)
        )
        return total / (n * (n - 1) / 2)

    def to_dict(self, include_centroids: bool = True) -> dict:
        per_label = {}
        for label, stats in self.per_label.items():
            entry = {
                "count": stats.count,
                "mean_intra_distance": stats.mean_intra_distance,
            }
            if include_centroids:
                entry["centroid"] = list(stats.centroid)
            per_label[label] = entry
        return {
            "metric": self.metric.spec(),
            "labels": self.labels,
            "per_label": per_label,
            "inter_centroid_distances": self.inter_centroid_distances,
            "mean_inter_centroid_distance": self.mean_inter_centroid_distance,
        }


def _cluster_distance(x, y, m: Metric) -> float:
    if m.is_distance:
        return similarity(x, y, m)
    if m.kind == "cosine":
        return 1.0 - similarity(x, y, m)
    raise ValueError("cluster statistics need a distance metric or cosine")


def cluster_stats(store: VectorStore, label_by: str, m: Metric) -> ClusterStats:
    """Per-label centroids, intra-cluster spread, inter-centroid distances.

    Records are grouped by the metadata key ``label_by``. Distance metrics
    are used directly; cosine is mapped to the cosine distance (1 - cos).
    """
    records = store.records()
    if not records:
        raise EmptyStore("cannot compute cluster statistics of an empty store")

    groups: dict[str, list[np.ndarray]] = {}
    for rec in records:
        label = rec.metadata.get(label_by)
        if label is None:
            raise MissingLabel(
                f"record {rec.chunk_id!r} has no metadata key {label_by!r}"
            )
        groups.setdefault(str(label), []).append(
            np.asarray(rec.embedding.values, dtype=np.float64)
        )

    labels = sorted(groups)
    per_label: dict[str, LabelStats] = {}
    centroids = {}
    for label in labels:
        vectors = np.array(groups[label])
        centroid = vectors.mean(axis=0)
        centroids[label] = centroid
        intra = [_cluster_distance(v, centroid, m) for v in vectors]
        per_label[label] = LabelStats(
            count=len(vectors),
            centroid=tuple(float(v) for v in centroid),
            mean_intra_distance=float(np.mean(intra)),
        )

    n = len(labels)
    matrix = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            d = _cluster_distance(centroids[labels[i]], centroids[labels[j]], m)
            matrix[i][j] = matrix[j][i] = float(d)

    return ClusterStats(
        metric=m, labels=labels, per_label=per_label, inter_centroid_distances=matrix
    )


# --- embedding export ---------------------------------------------------------


def export_embeddings(store: VectorStore, out_path: str | Path) -> None:
    """Write chunk_id, doc_id and embedding columns as CSV.

    Values are written with full float32 round-trip precision so external
    projection tools see exactly the stored matrix.
    """
    records = store.records()
    if not records:
        raise EmptyStore("cannot export an empty store")
    out_path = Path(out_path)
    try:
        with out_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["chunk_id", "doc_id"] + [f"e{i}" for i in range(store.dim)])
            for rec in records:
                writer.writerow(
                    [rec.chunk_id, rec.doc_id] + [repr(v) for v in rec.embedding.values]
                )
    except OSError as exc:
        raise IoFailure(f"cannot write embeddings to {out_path}: {exc}") from exc


# --- expert score recording ---------------------------------------------------


@dataclass(frozen=True)
class ScoreRecord:
    """One rater's 1-5 score for a (question, database) pair."""

    question_id: str
    database_id: str
    rater_id: str
    score: int

    def __post_init__(self):
        if not (1 <= self.score <= 5):
            raise ScoreOutOfRange(f"score must be in 1..5, got {self.score}")


@dataclass(frozen=True)
class ScoreCell:
    question_id: str
    database_id: str
    mean_score: float
    rater_count: int


def record_scores(records: list[ScoreRecord]) -> list[ScoreCell]:
    """Aggregate rater scores into per-(question, database) means.

    Rater identities are dropped from the output (only counts remain).
    """
    groups: dict[tuple[str, str], list[int]] = {}
    for rec in records:
        groups.setdefault((rec.question_id, rec.database_id), []).append(rec.score)
    return [
        ScoreCell(
            question_id=q,
            database_id=d,
            mean_score=sum(scores) / len(scores),
            rater_count=len(scores),
        )
        for (q, d), scores in sorted(groups.items())
    ]


def read_scores_csv(path: str | Path) -> list[ScoreRecord]:
    """Parse a score CSV with columns question_id,database_id,rater_id,score."""
    records = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                ScoreRecord(
                    question_id=row["question_id"],
                    database_id=row["database_id"],
                    rater_id=row["rater_id"],
                    score=int(row["score"]),
                )
            )
    return records


def knowledge_base_for_row(row: SweepRow) -> KnowledgeBase:
    """Open the knowledge base a sweep row built."""
    return KnowledgeBase.open(row.store_path)
