import csv
import math
from dataclasses import replace

import numpy as np
import pytest

from litrag.config import default_config
from litrag.embedding import EmbeddingVector, TokenizerConfig
from litrag.errors import EmptyStore, MissingLabel, ScoreOutOfRange
from litrag.harness import (
    DEFAULT_RATIO_ROWS,
    OVERLAP_SWEEP_VALUES,
    SIZE_SWEEP_VALUES,
    ScoreRecord,
    SweepSpec,
    cluster_stats,
    export_embeddings,
    ratio_table_csv,
    read_scores_csv,
    record_scores,
    representative_chunk,
    sweep_chunking,
    token_ratio_table,
)
from litrag.store import ChunkRecord, Metric, VectorStore
from litrag.testing import StubEmbeddingService, make_corpus
from reference_impls import brute_force_cluster_stats

DIM = 32


# --- SweepSpec validation ---------------------------------------------------


def test_sweep_spec_validation(tmp_path):
    with pytest.raises(ValueError):
        SweepSpec(axis="bogus", values=(1,), fixed=0, corpus_dir=str(tmp_path))
    with pytest.raises(ValueError):
        SweepSpec(axis="chunk_size", values=(), fixed=0, corpus_dir=str(tmp_path))
    with pytest.raises(ValueError):
        SweepSpec(axis="chunk_size", values=(800, 700), fixed=100, corpus_dir=str(tmp_path))
    with pytest.raises(ValueError):
        SweepSpec(axis="chunk_overlap", values=(0, 1000), fixed=1000, corpus_dir=str(tmp_path))
    with pytest.raises(ValueError):
        SweepSpec(axis="chunk_size", values=(400, 800), fixed=500, corpus_dir=str(tmp_path))


# --- sweeps -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def sweep_corpus(tmp_path_factory):
    corpus_dir = tmp_path_factory.mktemp("sweep_corpus")
    make_corpus(corpus_dir, n_docs=5, seed=909, paragraphs_per_doc=18)
    return corpus_dir


def _config(svc, tmp_path):
    cfg = default_config(svc.url, "http://unused.invalid/")
    return replace(
        cfg,
        embedding=replace(cfg.embedding, expected_dim=DIM, batch_size=128),
        store_path=str(tmp_path / "kb"),
    )


def test_size_sweep_counts_non_increasing(sweep_corpus, tmp_path):
    with StubEmbeddingService(dim=DIM) as svc:
        cfg = _config(svc, tmp_path)
        spec = SweepSpec(
            axis="chunk_size",
            values=SIZE_SWEEP_VALUES,
            fixed=500,
            corpus_dir=str(sweep_corpus),
        )
        report = sweep_chunking(spec, cfg, tmp_path / "sweep")
    counts = [row.chunk_count for row in report.rows]
    assert len(counts) == 5
    assert all(c > 0 for c in counts)
    assert counts == sorted(counts, reverse=True)
    assert all(row.error is None for row in report.rows)


def test_overlap_sweep_counts_non_decreasing(sweep_corpus, tmp_path):
    with StubEmbeddingService(dim=DIM) as svc:
        cfg = _config(svc, tmp_path)
        spec = SweepSpec(
            axis="chunk_overlap",
            values=OVERLAP_SWEEP_VALUES,
            fixed=1000,
            corpus_dir=str(sweep_corpus),
        )
        report = sweep_chunking(spec, cfg, tmp_path / "sweep")
    counts = [row.chunk_count for row in report.rows]
    assert counts == sorted(counts)
    csv_text = report.to_csv()
    parsed = list(csv.reader(csv_text.splitlines()))
    assert parsed[0][0] == "chunk_overlap"
    assert len(parsed) == 6


def test_failed_sweep_row_recorded_not_fatal(tmp_path):
    with StubEmbeddingService(dim=DIM) as svc:
        cfg = _config(svc, tmp_path)
        spec = SweepSpec(
            axis="chunk_size",
            values=(300, 600),
            fixed=100,
            corpus_dir=str(tmp_path / "missing-dir"),
        )
        report = sweep_chunking(spec, cfg, tmp_path / "sweep")
    assert len(report.rows) == 2
    assert all(row.error for row in report.rows)


def test_single_value_sweep(sweep_corpus, tmp_path):
    with StubEmbeddingService(dim=DIM) as svc:
        cfg = _config(svc, tmp_path)
        spec = SweepSpec(
            axis="chunk_size", values=(700,), fixed=200, corpus_dir=str(sweep_corpus)
        )
        report = sweep_chunking(spec, cfg, tmp_path / "sweep")
    assert len(report.rows) == 1
    assert report.rows[0].mean_chunk_length <= 700


# --- token ratio table ---------------------------------------------------------------


def test_ratio_row_1600_chars_at_one_char_per_token():
    rows = token_ratio_table([(1600, 500)], TokenizerConfig(chars_per_token=1.0), 4096, 768)
    row = rows[0]
    assert row.tokens_per_chunk == 1600
    assert row.pct_of_llm_limit == pytest.approx(39.0625, abs=1e-9)
    assert row.pct_of_em_limit == pytest.approx(100 * 1600 / 768, abs=1e-9)


def test_ratio_row_defaults_and_exactness():
    tok = TokenizerConfig(chars_per_token=4.0)
    rows = token_ratio_table(list(DEFAULT_RATIO_ROWS), tok, 4096, 768)
    by_config = {(r.chunk_size_chars, r.chunk_overlap_chars): r for r in rows}
    study = by_config[(700, 200)]
    assert study.tokens_per_chunk == 175
    assert study.pct_of_llm_limit == pytest.approx(100 * 175 / 4096, abs=1e-12)
    assert study.pct_of_em_limit == pytest.approx(100 * 175 / 768, abs=1e-12)
    for row in rows:
        assert row.pct_of_llm_limit == 100.0 * row.tokens_per_chunk / 4096
        assert row.pct_of_em_limit == 100.0 * row.tokens_per_chunk / 768
        assert row.pct_chars_of_em_limit == 100.0 * row.chunk_size_chars / 768


def test_ratio_zero_size_row():
    rows = token_ratio_table([(0, 0)], TokenizerConfig(), 4096, 768)
    assert rows[0].tokens_per_chunk == 0
    assert rows[0].pct_of_llm_limit == 0.0


def test_ratio_csv_is_parseable():
    rows = token_ratio_table([(700, 200), (1000, 350)], TokenizerConfig(), 4096, 768)
    parsed = list(csv.reader(ratio_table_csv(rows).splitlines()))
    assert parsed[0][0] == "chunk_size_chars"
    assert len(parsed) == 3
    assert float(parsed[1][3]) == rows[0].pct_of_llm_limit


def test_representative_chunk_is_exact_length():
    for size in (1, 63, 700, 1600):
        assert len(representative_chunk(size)) == size


def test_ratio_limits_validated():
    with pytest.raises(ValueError):
        token_ratio_table([(700, 200)], TokenizerConfig(), 0, 768)


# --- cluster stats ---------------------------------------------------------------------


def _store_with(labeled_vectors):
    dim = len(next(iter(labeled_vectors.values()))[0])
    store = VectorStore(dim)
    records = []
    i = 0
    for label, vectors in labeled_vectors.items():
        for vec in vectors:
            records.append(
                ChunkRecord(
                    chunk_id=f"c{i:03d}",
                    doc_id=label,
                    text="t",
                    start_offset=0,
                    end_offset=1,
                    embedding=EmbeddingVector(tuple(vec)),
                    metadata={"source": f"{label}.txt", "doc_id": label},
                )
            )
            i += 1
    store.upsert(records)
    return store


def test_cluster_stats_degenerate_identical_vectors():
    store = _store_with({"a": [[1.0, 0.0]] * 3, "b": [[0.0, 1.0]] * 4})
    stats = cluster_stats(store, "doc_id", Metric.euclidean())
    assert stats.per_label["a"].count == 3
    assert stats.per_label["a"].mean_intra_distance == pytest.approx(0.0)
    assert stats.per_label["b"].mean_intra_distance == pytest.approx(0.0)
    assert stats.inter_centroid_distances[0][1] == pytest.approx(math.sqrt(2))
    assert stats.inter_centroid_distances[0][0] == 0.0


def test_cluster_stats_single_label():
    store = _store_with({"only": [[1.0, 2.0], [3.0, 4.0]]})
    stats = cluster_stats(store, "doc_id", Metric.euclidean())
    assert stats.inter_centroid_distances == [[0.0]]
    assert stats.mean_inter_centroid_distance == 0.0


def test_cluster_stats_matches_brute_force():
    import random

    rng = random.Random(64)
    labeled = {
        f"doc{j}": [[rng.uniform(-1, 1) for _ in range(6)] for _ in range(rng.randint(3, 100))]
        for j in range(5)
    }
    store = _store_with(labeled)
    # the store quantizes to float32; feed the oracle the quantized values
    quantized = {}
    for rec in store.records():
        quantized.setdefault(rec.doc_id, []).append(list(rec.embedding.values))
    stats = cluster_stats(store, "doc_id", Metric.euclidean())
    expected_stats, expected_matrix = brute_force_cluster_stats(quantized, "euclidean")

    for label, exp in expected_stats.items():
        got = stats.per_label[label]
        assert got.count == exp["count"]
        assert got.mean_intra_distance == pytest.approx(exp["mean_intra_distance"], rel=1e-9)
        assert list(got.centroid) == pytest.approx(exp["centroid"], rel=1e-9)
    for (a, b), expected in expected_matrix.items():
        i, j = stats.labels.index(a), stats.labels.index(b)
        assert stats.inter_centroid_distances[i][j] == pytest.approx(expected, rel=1e-9)
        assert stats.inter_centroid_distances[j][i] == stats.inter_centroid_distances[i][j]


def test_cluster_stats_cosine_maps_to_distance():
    store = _store_with({"a": [[1.0, 0.0], [1.0, 0.1]], "b": [[0.0, 1.0]]})
    stats = cluster_stats(store, "doc_id", Metric.cosine())
    assert stats.per_label["a"].mean_intra_distance >= 0
    with pytest.raises(ValueError):
        cluster_stats(store, "doc_id", Metric.inner_product())


def test_cluster_stats_missing_label():
    store = _store_with({"a": [[1.0, 0.0]]})
    with pytest.raises(MissingLabel):
        cluster_stats(store, "no_such_key", Metric.euclidean())


def test_cluster_stats_empty_store():
    with pytest.raises(EmptyStore):
        cluster_stats(VectorStore(4), "doc_id", Metric.euclidean())


# --- export ------------------------------------------------------------------------


def test_export_structure_and_round_trip(tmp_path):
    store = _store_with({"a": [[0.1, 0.2, 0.3, 0.4]], "b": [[1.5, -2.5, 3.25, 0.0], [9, 8, 7, 6]]})
    out = tmp_path / "emb.csv"
    export_embeddings(store, out)

    with out.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["chunk_id", "doc_id", "e0", "e1", "e2", "e3"]
    assert len(rows) == 4

    by_id = {r.chunk_id: r for r in store.records()}
    for row in rows[1:]:
        stored = by_id[row[0]]
        parsed = np.array([float(v) for v in row[2:]], dtype=np.float32)
        assert parsed.tolist() == pytest.approx(list(stored.embedding.values))


def test_export_empty_store(tmp_path):
    with pytest.raises(EmptyStore):
        export_embeddings(VectorStore(4), tmp_path / "x.csv")


# --- score recording ----------------------------------------------------------------


def test_score_mean_over_raters():
    records = [
        ScoreRecord("Q-2", "cS-2", f"rater{i}", s) for i, s in enumerate((3, 4, 4, 5))
    ]
    cells = record_scores(records)
    assert len(cells) == 1
    assert cells[0].mean_score == pytest.approx(4.0)
    assert cells[0].rater_count == 4


def test_single_score_is_identity():
    cells = record_scores([ScoreRecord("Q-1", "cO-1", "r", 5)])
    assert cells[0].mean_score == 5.0


def test_score_out_of_range():
    with pytest.raises(ScoreOutOfRange):
        ScoreRecord("Q-1", "cS-1", "r", 6)
    with pytest.raises(ScoreOutOfRange):
        ScoreRecord("Q-1", "cS-1", "r", 0)


def test_scores_csv_round_trip(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text(
        "question_id,database_id,rater_id,score\n"
        "Q-1,cS-1,a,4\nQ-1,cS-1,b,5\nQ-2,cO-3,a,2\n"
    )
    records = read_scores_csv(path)
    cells = record_scores(records)
    table = {(c.question_id, c.database_id): c.mean_score for c in cells}
    assert table == {("Q-1", "cS-1"): 4.5, ("Q-2", "cO-3"): 2.0}
    # rater ids do not appear in aggregated output
    assert all(not hasattr(c, "rater_id") for c in cells)
