"""Cloze rendering, tokenizer handles, and the answer-length filters.

Templates carry exactly one "<subject>" and one "<object>" placeholder.
Rendering substitutes the subject label verbatim and replaces the object
placeholder with consecutive, space-separated mask placeholders; no other
template character is touched, so terminal punctuation survives.

Answers are tokenized in-context with a preceding space (subword tokenizers
distinguish word-initial pieces, and the mask in a rendered template always
follows a space, except sentence-initially).
"""

from __future__ import annotations

import hashlib
import string
from dataclasses import dataclass, replace
from typing import Callable, Iterable, NamedTuple, Sequence

from .bridge import BridgeClient, FixtureTokenizer
from .errors import ConfigError, ContractError, RenderError
from .ingest import OBJECT_SLOT, SUBJECT_SLOT
from .snapshots import QueryKey, SnapshotQuery

DEFAULT_MASK_TOKEN = "<mask>"

VIEW_SINGLE = "single_token"
VIEW_MULTI = "multi_token"
VIEW_SCORE = "mlm_score"
ALL_VIEWS = (VIEW_SINGLE, VIEW_MULTI, VIEW_SCORE)


@dataclass(frozen=True)
class Template:
    """Cloze template of one relation."""

    property_id: str
    template_text: str

    def __post_init__(self):
        for slot in (SUBJECT_SLOT, OBJECT_SLOT):
            if self.template_text.count(slot) != 1:
                raise ConfigError(
                    f"template for {self.property_id} must contain exactly one {slot!r}"
                )

    def split_at_object(self, subject_label: str) -> tuple[str, str]:
        """(prefix, suffix) around the object slot, subject already substituted."""
        prefix, suffix = self.template_text.split(OBJECT_SLOT)
        return prefix.replace(SUBJECT_SLOT, subject_label), suffix.replace(
            SUBJECT_SLOT, subject_label
        )


class AnswerTokens(NamedTuple):
    qid: str
    label: str
    token_ids: tuple[int, ...]


@dataclass(frozen=True)
class ClozeQuery:
    """One rendered cloze query with its tokenized gold answers."""

    query_id: str
    text: str
    mask_count: int
    answers: tuple[AnswerTokens, ...]
    split: str
    bucket_id: str
    key: QueryKey
    subject_label: str
    template_text: str
    mask_token: str = DEFAULT_MASK_TOKEN

    def __post_init__(self):
        if self.mask_count < 1:
            raise ValueError(f"mask_count must be >= 1, got {self.mask_count}")
        placeholder_run = " ".join([self.mask_token] * self.mask_count)
        if self.text.count(self.mask_token) != self.mask_count or placeholder_run not in self.text:
            raise ValueError(
                f"text must contain exactly {self.mask_count} consecutive mask "
                f"placeholders: {self.text!r}"
            )


def query_id_for(key: QueryKey, bucket_id: str, view: str) -> str:
    raw = f"{key.subject_qid}|{key.property_id}|{bucket_id}|{view}"
    return hashlib.sha1(raw.encode("utf-8")).hexdigest()[:16]


def render_query(
    template: Template,
    query: SnapshotQuery,
    mask_count: int,
    view: str = VIEW_MULTI,
    split: str = "",
    mask_token: str = DEFAULT_MASK_TOKEN,
    answers: Sequence[AnswerTokens] | None = None,
) -> ClozeQuery:
    """Render a snapshot query against its relation template.

    ``answers`` carries pre-tokenized golds; by default the query's answers
    are attached untokenized (empty token sequences) for later attachment.
    """
    if template.property_id != query.key.property_id:
        raise RenderError(
            f"template {template.property_id} does not match query relation "
            f"{query.key.property_id}"
        )
    if not query.subject_label:
        raise RenderError(f"empty subject label for {query.key} in {query.bucket_id}")
    masks = " ".join([mask_token] * mask_count)
    text = template.template_text.replace(SUBJECT_SLOT, query.subject_label).replace(
        OBJECT_SLOT, masks
    )
    if answers is None:
        answers = tuple(AnswerTokens(a.qid, a.label, ()) for a in query.answers)
    return ClozeQuery(
        query_id=query_id_for(query.key, query.bucket_id, view),
        text=text,
        mask_count=mask_count,
        answers=tuple(answers),
        split=split,
        bucket_id=query.bucket_id,
        key=query.key,
        subject_label=query.subject_label,
        template_text=template.template_text,
        mask_token=mask_token,
    )


# --------------------------------------------------------------------------
# Tokenizer handles
# --------------------------------------------------------------------------


class TokenizerHandle:
    """Uniform encode/decode over a remote backend or a local fixture vocabulary.

    Encodings are cached by (provider, prefix-space flag, string); repeated
    calls with the same provider return identical ids.
    """

    def __init__(
        self,
        provider_id: str,
        encode_fn: Callable[[str, bool], list[int]],
        decode_fn: Callable[[Sequence[int]], str],
        vocab_size: int,
        mask_token: str,
        mask_token_id: int,
    ):
        self.provider_id = provider_id
        self._encode = encode_fn
        self._decode = decode_fn
        self.vocab_size = vocab_size
        self.mask_token = mask_token
        self.mask_token_id = mask_token_id
        self._cache: dict[tuple[bool, str], tuple[int, ...]] = {}

    @classmethod
    def from_bridge(cls, client: BridgeClient) -> "TokenizerHandle":
        d = client.descriptor
        return cls(
            provider_id=f"bridge:{d.name}",
            encode_fn=client.tokenize,
            decode_fn=client.detokenize,
            vocab_size=d.vocab_size,
            mask_token=d.mask_token,
            mask_token_id=d.mask_token_id,
        )

    @classmethod
    def from_vocab(cls, vocab: Sequence[str], mask_token: str = DEFAULT_MASK_TOKEN) -> "TokenizerHandle":
        tokenizer = FixtureTokenizer(vocab)
        if mask_token not in tokenizer.token_to_id:
            raise ConfigError(f"mask token {mask_token!r} missing from fixture vocabulary")
        return cls(
            provider_id="fixture",
            encode_fn=tokenizer.encode,
            decode_fn=tokenizer.decode,
            vocab_size=tokenizer.vocab_size,
            mask_token=mask_token,
            mask_token_id=tokenizer.token_to_id[mask_token],
        )

    def encode(self, text: str, add_prefix_space: bool = False) -> tuple[int, ...]:
        cache_key = (add_prefix_space, text)
        if cache_key not in self._cache:
            self._cache[cache_key] = tuple(self._encode(text, add_prefix_space))
        return self._cache[cache_key]

    def decode(self, token_ids: Sequence[int]) -> str:
        return self._decode(token_ids)


def tokenize_answers(
    query: SnapshotQuery, tok: TokenizerHandle
) -> list[tuple[str, tuple[int, ...]]]:
    """Tokenize each answer label in-context (leading space)."""
    return [(a.label, tok.encode(a.label, add_prefix_space=True)) for a in query.answers]


def attach_answer_tokens(query: ClozeQuery, tok: TokenizerHandle) -> ClozeQuery:
    """Return the query with every answer's token sequence filled in."""
    tokenized = tuple(
        AnswerTokens(a.qid, a.label, tok.encode(a.label, add_prefix_space=True))
        for a in query.answers
    )
    return replace(query, answers=tokenized)


# --------------------------------------------------------------------------
# Answer-length filters
# --------------------------------------------------------------------------


@dataclass
class FilterOutcome:
    """Kept queries plus how much of the input was discarded."""

    kept: list[ClozeQuery]
    total: int

    @property
    def dropped(self) -> int:
        return self.total - len(self.kept)

    @property
    def discarded_fraction(self) -> float:
        return self.dropped / self.total if self.total else 0.0


def _require_tokenized(query: ClozeQuery) -> None:
    empty = [a.label for a in query.answers if not a.token_ids]
    if empty:
        raise ContractError(
            f"query {query.query_id} has untokenized answers {empty}; tokenize first"
        )


def filter_single_token(queries: Iterable[ClozeQuery]) -> FilterOutcome:
    """Keep queries with at least one single-token answer; restrict golds to them."""
    queries = list(queries)
    kept = []
    for query in queries:
        _require_tokenized(query)
        singles = tuple(a for a in query.answers if len(a.token_ids) == 1)
        if singles:
            kept.append(replace(query, answers=singles))
    return FilterOutcome(kept=kept, total=len(queries))


def filter_max_tokens(queries: Iterable[ClozeQuery], max_tokens: int) -> FilterOutcome:
    """Drop answers longer than ``max_tokens``; drop queries left with none."""
    if max_tokens < 1:
        raise ConfigError(f"max_tokens must be >= 1, got {max_tokens}")
    queries = list(queries)
    kept = []
    for query in queries:
        _require_tokenized(query)
        within = tuple(a for a in query.answers if len(a.token_ids) <= max_tokens)
        if within:
            kept.append(replace(query, answers=within))
    return FilterOutcome(kept=kept, total=len(queries))


# --------------------------------------------------------------------------
# Answer normalization for exact match
# --------------------------------------------------------------------------

_STRIP_CHARS = string.punctuation + string.whitespace


def normalize_answer(text: str) -> str:
    """Lowercase, collapse internal whitespace, strip edge punctuation."""
    collapsed = " ".join(text.lower().split())
    return collapsed.strip(_STRIP_CHARS)


def match_tokens(text: str) -> list[str]:
    """Token sequence used by the surface-overlap metrics."""
    return normalize_answer(text).split()
