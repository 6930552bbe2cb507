from dataclasses import replace
from pathlib import Path

import pytest

from litrag.config import default_config
from litrag.errors import IoFailure
from litrag.kb import KnowledgeBase, build_knowledge_base
from litrag.testing import StubEmbeddingService, make_corpus

DIM = 32


@pytest.fixture()
def small_corpus(tmp_path):
    corpus_dir = tmp_path / "corpus"
    truths = make_corpus(corpus_dir, n_docs=4, seed=77, paragraphs_per_doc=10)
    return corpus_dir, truths


def _config(svc, tmp_path):
    cfg = default_config(svc.url, "http://127.0.0.1:1/chat")
    return replace(
        cfg,
        embedding=replace(cfg.embedding, expected_dim=DIM, batch_size=64),
        store_path=str(tmp_path / "kb"),
    )


def test_build_and_open_knowledge_base(small_corpus, tmp_path):
    corpus_dir, truths = small_corpus
    with StubEmbeddingService(dim=DIM) as svc:
        cfg = _config(svc, tmp_path)
        report = build_knowledge_base(corpus_dir, cfg)

    assert report.document_count == len(truths)
    assert report.failures == []
    assert report.chunk_count > 0

    kb = KnowledgeBase.open(cfg.store_path)
    assert len(kb.store) == report.chunk_count
    assert set(kb.doc_ids()) == set(truths)

    doc = kb.document("paper-00")
    assert doc.reference_section is not None
    assert doc.body

    aux = kb.aux_index("paper-00")
    assert aux.expanded_chunks
    assert len(aux.embeddings) == len(aux.expanded_chunks)
    for chunk in aux.expanded_chunks:
        assert chunk.text == doc.body[chunk.start_offset : chunk.end_offset]

    record = kb.store.records()[0]
    assert record.metadata["source"].endswith(".txt")
    assert record.metadata["doc_id"] == record.doc_id


def test_layout_on_disk(small_corpus, tmp_path):
    corpus_dir, truths = small_corpus
    with StubEmbeddingService(dim=DIM) as svc:
        cfg = _config(svc, tmp_path)
        build_knowledge_base(corpus_dir, cfg)

    root = Path(cfg.store_path)
    assert (root / "header.json").is_file()
    assert (root / "records.jsonl").is_file()
    assert (root / "matrix.bin").is_file()
    for doc_id in truths:
        assert (root / "aux" / doc_id / "matrix.bin").is_file()
        assert (root / "docs" / f"{doc_id}.json").is_file()


def test_build_records_per_document_failures(small_corpus, tmp_path):
    corpus_dir, truths = small_corpus
    (corpus_dir / "broken.txt").write_bytes(b"\xff\xfe bad")
    with StubEmbeddingService(dim=DIM) as svc:
        cfg = _config(svc, tmp_path)
        report = build_knowledge_base(corpus_dir, cfg)
    assert report.document_count == len(truths)
    assert len(report.failures) == 1


def test_missing_document_snapshot(small_corpus, tmp_path):
    corpus_dir, _ = small_corpus
    with StubEmbeddingService(dim=DIM) as svc:
        cfg = _config(svc, tmp_path)
        build_knowledge_base(corpus_dir, cfg)
    kb = KnowledgeBase.open(cfg.store_path)
    with pytest.raises(IoFailure):
        kb.document("no-such-doc")


def test_build_without_aux(small_corpus, tmp_path):
    corpus_dir, _ = small_corpus
    with StubEmbeddingService(dim=DIM) as svc:
        cfg = _config(svc, tmp_path)
        build_knowledge_base(corpus_dir, cfg, build_aux=False)
    assert not (Path(cfg.store_path) / "aux").exists()
