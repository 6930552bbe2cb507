"""Grounded answering: prompt stencils, token budgeting, context assembly
and the retrieval-to-verification pipeline.

A query runs through one sequential chain: embed the question, retrieve
chunks (best-first or MMR), recover each chunk's expanded context and
citation list from its source document, assemble the prompt per the
configured mode, enforce the token budget, call the chat service, and
verify every citation in the answer against the resolved citation list.

Modes:
  mode1  original chunk text with its citation list appended inline
  mode2  expanded chunk text as context, citation list in its own prompt
         slot (tighter control over list quality and input size)
  plain  retrieved chunk text only, no citation machinery
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

import requests

from .citations import (
    CitationEntry,
    CitationMarker,
    VerificationReport,
    extract_citation_markers,
    extract_reference_section,
    locate_expanded_chunk,
    resolve_citations,
    verify_answer_citations,
)
from .config import EngineConfig
from .embedding import TokenizerConfig, embed_texts, token_count
from .errors import (
    BudgetExceeded,
    ChatServiceFailed,
    EmptyStore,
    MissingSlot,
    NoReferenceSection,
    RetrievalEmpty,
    UnknownSlot,
)
from .ingest import Chunk
from .kb import KnowledgeBase
from .store import ChunkRecord, ScoredRecord

logger = logging.getLogger(__name__)

_REQUEST_TIMEOUT_S = 120.0

KNOWN_SLOTS = ("context", "question", "citation-list")
_SLOT_RE = re.compile(r"\{([a-z][a-z0-9-]*)\}")

CITATION_BLOCK_HEADER = "--- Citation List ---"


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt stencil with named slots.

    ``body`` may reference {context}, {question} and {citation-list}.
    ``supplement`` is extra instruction text appended to the user question
    before rendering.
    """

    name: str
    body: str
    supplement: str | None = None

    def slots(self) -> list[str]:
        return [m.group(1) for m in _SLOT_RE.finditer(self.body)]


_QA_CONTEXT_BODY = """\
Use the following pieces of context to answer the question at the end. \
Provide the source document name of the context you use to formulate your answer. \
You are a subject matter expert in Oblique Detonation Waves and their numerical analysis.

If you do not know the answer, just say that you do not know, do not try to make up an answer. \
Reply with minimum 500 words and provide give a detailed list of research papers. \
Do not try to make up research article names.
Always say "thanks for asking!" at the end of the answer.

Context: {context}

Question: {question}

Answer: """

_QA_CONTEXT_SPLIT_BODY = """\
Use the following pieces of context to answer the question at the end. \
You are a subject matter expert in Oblique Detonation waves and their numerical analysis. \
Always say "thanks for asking!" at the end of the answer.

Context: {context}

Question: {question}

Answer: """

_QA_CONTEXT_SPLIT_SUPPLEMENT = (
    "Reply with minimum 500 words and provide give a detailed list of research papers "
    "for this topic. If you do not know the answer, just say that you do not know, "
    "do not try to make up an answer. If you do not know the full research paper name, "
    "do not try to make up a research article name."
)

_CUSTOM_CITATION_BODY = """\
Use the following pieces of context to answer the question at the end. \
You are a subject matter expert in Oblique Detonation waves and their numerical analysis.
Also, use the following citation list to find the correct research article as seen in \
the pieces of context. Do not create an article name that is not in the citation list.
Always say "thanks for asking!" at the end of the answer.

Context: {context}

Citation List: {citation-list}

Question: {question}

Answer: """

_CUSTOM_CITATION_SUPPLEMENT = (
    "Reply with minimum 500 words and provide give a detailed list of research papers "
    "for this topic. Use the provided citation list for quoting research articles."
)

_INTROSPECTIVE_BODY = """\
Use the following pieces of context to answer the question at the end. \
Present a clear rationale for the generated response, state the assumptions it rests on, \
and point out any information gaps in the response, uncovering any information gaps \
left by the provided material.

Context: {context}

Question: {question}

Answer: """

_SENSIBLE_VALIDATION_BODY = """\
Use the following pieces of context to answer the question at the end. \
Divide the question into discrete sub-queries, generating no more than {limit} sub-queries. \
Answer each sub-query from the context, then formulate the final response by combining \
the answers to these sub-queries.

Context: {context}

Question: {question}

Answer: """


def sensible_validation_template(max_subqueries: int = 3) -> PromptTemplate:
    """The sub-query stencil with its question cap baked in."""
    return PromptTemplate(
        name="sensible_validation",
        body=_SENSIBLE_VALIDATION_BODY.replace("{limit}", str(max_subqueries)),
    )


BUILTIN_TEMPLATES: dict[str, PromptTemplate] = {
    "qa_context": PromptTemplate(name="qa_context", body=_QA_CONTEXT_BODY),
    "qa_context_split": PromptTemplate(
        name="qa_context_split",
        body=_QA_CONTEXT_SPLIT_BODY,
        supplement=_QA_CONTEXT_SPLIT_SUPPLEMENT,
    ),
    "custom_citation": PromptTemplate(
        name="custom_citation",
        body=_CUSTOM_CITATION_BODY,
        supplement=_CUSTOM_CITATION_SUPPLEMENT,
    ),
    "introspective": PromptTemplate(name="introspective", body=_INTROSPECTIVE_BODY),
    "sensible_validation": sensible_validation_template(),
}


def get_template(name: str) -> PromptTemplate:
    try:
        return BUILTIN_TEMPLATES[name]
    except KeyError:
        raise UnknownSlot(
            f"unknown template {name!r}; available: {sorted(BUILTIN_TEMPLATES)}"
        ) from None


def render_prompt(
    tpl: PromptTemplate,
    context: str,
    question: str,
    citation_list: str | None = None,
) -> str:
    """Fill the template slots. Pure substitution, no other rewriting.

    Raises UnknownSlot for slot names outside the known set and MissingSlot
    when the body references {citation-list} but none was provided.
    """
    provided = {"context": context, "question": question}
    if citation_list is not None:
        provided["citation-list"] = citation_list

    for name in tpl.slots():
        if name not in KNOWN_SLOTS:
            raise UnknownSlot(f"template {tpl.name!r} references unknown slot {{{name}}}")
        if name not in provided:
            raise MissingSlot(f"template {tpl.name!r} requires slot {{{name}}}")

    return _SLOT_RE.sub(lambda m: provided[m.group(1)], tpl.body)


@dataclass(frozen=True)
class TokenBudget:
    prompt_tokens: int
    llm_token_limit: int
    reserved_for_answer: int

    @property
    def fits(self) -> bool:
        return self.prompt_tokens + self.reserved_for_answer <= self.llm_token_limit

    def to_dict(self) -> dict:
        return {
            "prompt_tokens": self.prompt_tokens,
            "llm_token_limit": self.llm_token_limit,
            "reserved_for_answer": self.reserved_for_answer,
            "fits": self.fits,
        }


def budget_check(
    prompt: str, tok: TokenizerConfig, limit: int, reserve: int
) -> TokenBudget:
    """Token accounting for an assembled prompt. Callers must not dispatch
    a chat request while ``fits`` is false."""
    if not (limit > reserve >= 0):
        raise ValueError("require limit > reserve >= 0")
    return TokenBudget(
        prompt_tokens=token_count(prompt, tok),
        llm_token_limit=limit,
        reserved_for_answer=reserve,
    )


def format_citation_block(citation_list: list[CitationEntry]) -> str:
    """The numbered citation lines handed to the model (entries verbatim)."""
    return "\n".join(entry.full_text for entry in citation_list)


def assemble_mode1(original: ChunkRecord, citation_list: list[CitationEntry]) -> str:
    """Original chunk text with a delimited citation block appended."""
    out = f"{original.text}\n\n{CITATION_BLOCK_HEADER}"
    block = format_citation_block(citation_list)
    if block:
        out += "\n" + block
    return out


def assemble_mode2(
    original: ChunkRecord, expanded: Chunk, citation_list: list[CitationEntry]
) -> tuple[str, str]:
    """Expanded chunk as context; citation block kept separate for its own
    prompt slot."""
    return expanded.text, format_citation_block(citation_list)


@dataclass
class AnswerBundle:
    """Everything produced for one question, with provenance."""

    question: str
    rendered_prompt: str
    answer_text: str
    retrieved: list[ScoredRecord]
    citation_list: list[CitationEntry]
    verification: VerificationReport | None
    mode: str
    temperature: float
    budget: TokenBudget | None = None
    unresolved_markers: list[CitationMarker] = field(default_factory=list)

    def to_dict(self, include_prompt: bool = True) -> dict:
        d = {
            "question": self.question,
            "answer_text": self.answer_text,
            "mode": self.mode,
            "temperature": self.temperature,
            "retrieved": [
                {
                    "chunk_id": sr.record.chunk_id,
                    "doc_id": sr.record.doc_id,
                    "score": sr.score,
                    "source": sr.record.metadata.get("source"),
                    "start_offset": sr.record.start_offset,
                    "end_offset": sr.record.end_offset,
                }
                for sr in self.retrieved
            ],
            "citation_list": [e.to_dict() for e in self.citation_list],
            "verification": self.verification.to_dict() if self.verification else None,
            "budget": self.budget.to_dict() if self.budget else None,
            "unresolved_markers": [m.to_dict() for m in self.unresolved_markers],
        }
        if include_prompt:
            d["rendered_prompt"] = self.rendered_prompt
        return d


def chat_completion(config: EngineConfig, prompt: str, temperature: float) -> str:
    """One chat-completion call over the wire."""
    payload = {
        "model": config.chat.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": temperature,
    }
    try:
        resp = requests.post(
            config.chat.endpoint_url, json=payload, timeout=_REQUEST_TIMEOUT_S
        )
    except requests.RequestException as exc:
        raise ChatServiceFailed(f"chat service unreachable: {exc}") from exc
    if resp.status_code >= 400:
        raise ChatServiceFailed(
            f"chat service returned status {resp.status_code}: {resp.text[:200]}"
        )
    try:
        return resp.json()["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ChatServiceFailed(f"malformed chat response: {exc}") from exc


@dataclass
class _DocContext:
    """Citation material shared by all retrieved chunks of one document."""

    entries: list[CitationEntry]
    unresolved: list[CitationMarker]
    expanded_by_chunk: dict[str, Chunk]


class QueryChain:
    """The grounded answering pipeline over one knowledge base."""

    def __init__(self, kb: KnowledgeBase, config: EngineConfig):
        self.kb = kb
        self.config = config

    # -- retrieval ---------------------------------------------------------

    def _retrieve(self, question: str, k: int, use_mmr: bool) -> list[ScoredRecord]:
        qvec = embed_texts([question], self.config.embedding, tokenizer=self.config.tokenizer)[0]
        try:
            if use_mmr:
                return self.kb.store.mmr_select(qvec, self.config.retrieval.mmr_params(k))
            return self.kb.store.top_k(qvec, k, self.config.retrieval.sim1)
        except EmptyStore as exc:
            raise RetrievalEmpty(str(exc)) from exc

    # -- citation material ------------------------------------------------------

    def _doc_context(self, doc_id: str, chunks: list[ChunkRecord]) -> _DocContext:
        doc = self.kb.document(doc_id)
        aux = self.kb.aux_index(doc_id)
        expanded_by_chunk: dict[str, Chunk] = {}
        markers: list[CitationMarker] = []
        seen = set()
        for rec in chunks:
            expanded = locate_expanded_chunk(aux, rec)
            expanded_by_chunk[rec.chunk_id] = expanded
            for marker in extract_citation_markers(expanded.text):
                if marker.key() not in seen:
                    seen.add(marker.key())
                    markers.append(marker)
        try:
            entries = extract_reference_section(doc)
        except NoReferenceSection:
            logger.warning(
                "document %s has no reference section; citation list will be empty", doc_id
            )
            entries = []
        resolved, unresolved = resolve_citations(markers, entries)
        return _DocContext(
            entries=resolved, unresolved=unresolved, expanded_by_chunk=expanded_by_chunk
        )

    def _assemble(
        self, retrieved: list[ScoredRecord], mode: str
    ) -> tuple[str, str | None, list[CitationEntry], list[CitationMarker]]:
        """Build (context, citation_block, citation_list, unresolved) for a mode."""
        if mode == "plain":
            context = "\n\n".join(sr.record.text for sr in retrieved)
            return context, None, [], []

        by_doc: dict[str, list[ChunkRecord]] = {}
        for sr in retrieved:
            by_doc.setdefault(sr.record.doc_id, []).append(sr.record)
        doc_contexts = {
            doc_id: self._doc_context(doc_id, chunks) for doc_id, chunks in by_doc.items()
        }

        citation_list: list[CitationEntry] = []
        seen_entries = set()
        unresolved: list[CitationMarker] = []
        for doc_id in by_doc:
            for entry in doc_contexts[doc_id].entries:
                key = (entry.doc_id, entry.label, entry.full_text)
                if key not in seen_entries:
                    seen_entries.add(key)
                    citation_list.append(entry)
            unresolved.extend(doc_contexts[doc_id].unresolved)

        if mode == "mode1":
            # Each document's citation list rides with its first retrieved chunk
            # so merged lists are not repeated.
            emitted_docs = set()
            parts = []
            for sr in retrieved:
                doc_id = sr.record.doc_id
                entries = [] if doc_id in emitted_docs else doc_contexts[doc_id].entries
                emitted_docs.add(doc_id)
                parts.append(assemble_mode1(sr.record, entries))
            return "\n\n".join(parts), None, citation_list, unresolved

        # mode2: expanded chunks replace the originals (each contains its
        # original); the citation block stays out of the context slot.
        expanded_seen = set()
        parts = []
        for sr in retrieved:
            expanded = doc_contexts[sr.record.doc_id].expanded_by_chunk[sr.record.chunk_id]
            if expanded.chunk_id not in expanded_seen:
                expanded_seen.add(expanded.chunk_id)
                parts.append(expanded.text)
        block = format_citation_block(citation_list)
        return "\n\n".join(parts), block, citation_list, unresolved

    # -- the pipeline ---------------------------------------------------------

    def answer(
        self,
        question: str,
        *,
        k: int | None = None,
        use_mmr: bool | None = None,
        template: PromptTemplate | str | None = None,
        mode: str | None = None,
        temperature: float | None = None,
    ) -> AnswerBundle:
        """Run the full chain for ``question`` and return the answer bundle.

        Over-budget prompts shed the lowest-scored retrieved chunk and
        re-assemble until the budget fits; BudgetExceeded is raised only when
        no retrieved chunk survives. No chat request is dispatched unless the
        budget fits.
        """
        cfg = self.config
        mode = mode if mode is not None else cfg.mode
        k = k if k is not None else cfg.retrieval.k
        use_mmr = use_mmr if use_mmr is not None else cfg.retrieval.use_mmr
        temperature = temperature if temperature is not None else cfg.chat.temperature
        if isinstance(template, str):
            tpl = get_template(template)
        elif template is not None:
            tpl = template
        else:
            # Pair the configured template with the mode: mode2 needs the
            # {citation-list} slot, the other modes must not reference it.
            tpl = get_template(cfg.template_name)
            if mode == "mode2" and "citation-list" not in tpl.slots():
                tpl = get_template("custom_citation")
            elif mode != "mode2" and "citation-list" in tpl.slots():
                tpl = get_template("qa_context")

        retrieved = self._retrieve(question, k, use_mmr)
        if not retrieved:
            raise RetrievalEmpty("retrieval returned no chunks")

        question_full = question
        if tpl.supplement:
            question_full = f"{question} {tpl.supplement}"

        while True:
            context, block, citation_list, unresolved = self._assemble(retrieved, mode)
            prompt = render_prompt(tpl, context, question_full, citation_list=block)
            budget = budget_check(
                prompt, cfg.tokenizer, cfg.chat.llm_token_limit, cfg.chat.reserved_for_answer
            )
            if budget.fits:
                break
            if len(retrieved) == 1:
                raise BudgetExceeded(
                    f"prompt needs {budget.prompt_tokens} tokens plus "
                    f"{budget.reserved_for_answer} reserved, over the "
                    f"{budget.llm_token_limit} limit even with a single chunk"
                )
            dropped = retrieved[-1]
            logger.info(
                "over budget (%d tokens); dropping lowest-scored chunk %s",
                budget.prompt_tokens,
                dropped.record.chunk_id,
            )
            retrieved = retrieved[:-1]

        answer_text = chat_completion(cfg, prompt, temperature)
        verification = (
            verify_answer_citations(answer_text, citation_list) if mode != "plain" else None
        )

        return AnswerBundle(
            question=question,
            rendered_prompt=prompt,
            answer_text=answer_text,
            retrieved=retrieved,
            citation_list=citation_list,
            verification=verification,
            mode=mode,
            temperature=temperature,
            budget=budget,
            unresolved_markers=unresolved,
        )
