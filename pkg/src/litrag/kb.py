"""Knowledge base assembly and access.

A knowledge base is a directory:

    <root>/header.json, records.jsonl, matrix.bin   main chunk store
    <root>/aux/<doc_id>/...                         expanded-chunk store per document
    <root>/docs/<doc_id>.json                       document snapshot (body, title,
                                                    reference-section span)

Document snapshots keep the citation guard exact at query time: reference
sections are re-parsed from the same text the chunks were cut from.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from .citations import AuxIndex, build_auxiliary_index
from .config import EngineConfig
from .embedding import embed_texts
from .errors import IoFailure, LitragError
from .ingest import Chunk, Document, IngestFailure, IngestReport, DocumentResult, ingest_corpus
from .store import ChunkRecord, VectorStore

logger = logging.getLogger(__name__)


class KnowledgeBase:
    """Read access to a persisted knowledge base."""

    def __init__(self, root: str | Path, store: VectorStore):
        self.root = Path(root)
        self.store = store
        self._docs: dict[str, Document] = {}
        self._aux: dict[str, AuxIndex] = {}

    @classmethod
    def open(cls, root: str | Path) -> "KnowledgeBase":
        root = Path(root)
        store = VectorStore.open(root)
        return cls(root, store)

    def doc_ids(self) -> list[str]:
        docs_dir = self.root / "docs"
        if not docs_dir.is_dir():
            return []
        return sorted(p.stem for p in docs_dir.glob("*.json"))

    def document(self, doc_id: str) -> Document:
        if doc_id not in self._docs:
            path = self.root / "docs" / f"{doc_id}.json"
            try:
                self._docs[doc_id] = Document.from_dict(json.loads(path.read_text(encoding="utf-8")))
            except OSError as exc:
                raise IoFailure(f"no document snapshot for {doc_id!r} at {path}") from exc
        return self._docs[doc_id]

    def aux_index(self, doc_id: str) -> AuxIndex:
        if doc_id not in self._aux:
            aux_store = VectorStore.open(self.root / "aux" / doc_id)
            records = sorted(aux_store.records(), key=lambda r: r.chunk_id)
            self._aux[doc_id] = AuxIndex(
                doc_id=doc_id,
                expanded_chunks=tuple(
                    Chunk(
                        chunk_id=r.chunk_id,
                        doc_id=r.doc_id,
                        text=r.text,
                        start_offset=r.start_offset,
                        end_offset=r.end_offset,
                    )
                    for r in records
                ),
                embeddings=tuple(r.embedding for r in records),
            )
        return self._aux[doc_id]


def _aux_to_store(aux: AuxIndex, dim: int, source: str) -> VectorStore:
    store = VectorStore(dim)
    store.upsert(
        [
            ChunkRecord(
                chunk_id=chunk.chunk_id,
                doc_id=chunk.doc_id,
                text=chunk.text,
                start_offset=chunk.start_offset,
                end_offset=chunk.end_offset,
                embedding=aux.embeddings[i],
                metadata={"source": source, "doc_id": chunk.doc_id, "expanded": "true"},
            )
            for i, chunk in enumerate(aux.expanded_chunks)
        ]
    )
    return store


def build_knowledge_base(
    corpus_dir: str | Path,
    config: EngineConfig,
    *,
    store_root: str | Path | None = None,
    extractor: str | None = None,
    build_aux: bool = True,
    max_workers: int = 4,
) -> IngestReport:
    """Ingest, embed and persist a corpus into a knowledge base directory.

    Per-document failures (unreadable files, embedding errors) are recorded
    in the returned report and do not abort the batch.
    """
    root = Path(store_root if store_root is not None else config.store_path)
    loaded: list[tuple[Document, list[Chunk]]] = []
    ingest_report = ingest_corpus(
        corpus_dir,
        config.split,
        extractor=extractor,
        on_document=lambda doc, chunks: loaded.append((doc, chunks)),
        max_workers=max_workers,
    )

    store = VectorStore(config.embedding.expected_dim)
    report = IngestReport(failures=list(ingest_report.failures))
    (root / "docs").mkdir(parents=True, exist_ok=True)

    for doc, chunks in loaded:
        try:
            source = Path(doc.source_path).name
            if chunks:
                vectors = embed_texts(
                    [c.text for c in chunks], config.embedding, tokenizer=config.tokenizer
                )
                store.upsert(
                    [
                        ChunkRecord(
                            chunk_id=chunk.chunk_id,
                            doc_id=chunk.doc_id,
                            text=chunk.text,
                            start_offset=chunk.start_offset,
                            end_offset=chunk.end_offset,
                            embedding=vectors[i],
                            metadata={
                                "source": source,
                                "doc_id": doc.doc_id,
                                "title": doc.title,
                            },
                        )
                        for i, chunk in enumerate(chunks)
                    ]
                )
            if build_aux:
                aux = build_auxiliary_index(doc, config.embedding)
                _aux_to_store(aux, config.embedding.expected_dim, source).persist(
                    root / "aux" / doc.doc_id
                )
            (root / "docs" / f"{doc.doc_id}.json").write_text(
                json.dumps(doc.to_dict(), ensure_ascii=False), encoding="utf-8"
            )
        except LitragError as exc:
            logger.warning("failed to index %s: %s", doc.doc_id, exc)
            report.failures.append(IngestFailure(path=doc.source_path, error=str(exc)))
            continue
        report.documents.append(
            DocumentResult(doc_id=doc.doc_id, path=doc.source_path, chunk_count=len(chunks))
        )

    store.persist(root)
    return report
