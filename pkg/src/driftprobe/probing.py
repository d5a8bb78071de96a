"""The three evaluation views: single-token probing, sequential multi-token
generation, and pseudo-log-likelihood scoring.

Single-token probing reads the mask distribution of a one-mask prompt and
ranks the gold token ids against it. Ranks are exact whenever the backend
returns the full vocabulary; below-cutoff golds count as absent.

Multi-token generation enumerates candidate lengths m = 1..M. A candidate of
length m takes exactly m fill-mask passes: each pass scores the current text,
a token is chosen for the leftmost remaining mask (greedy argmax by default,
seeded temperature sampling optionally), and the chosen token is spliced into
the text before the next pass. A full query therefore costs M(M+1)/2 calls.

MLM scoring masks tokens one at a time: the sentence is rendered with the
answer in place, and each scored position is masked alone (all other tokens
visible) to fetch the true token's log-probability. pll is the sum over the
scored span; pppl = exp(-pll / token count), lower is better.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .bridge import BridgeClient, FillMaskRequest, MaskDistribution
from .errors import ConfigError, ContractError, TransportError
from .ingest import OBJECT_SLOT, SUBJECT_SLOT
from .metrics import precision_at_k, reciprocal_rank, rouge_l, rouge_n, token_f1
from .templates import (
    ClozeQuery,
    Template,
    VIEW_MULTI,
    VIEW_SCORE,
    VIEW_SINGLE,
    match_tokens,
    normalize_answer,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_MASKS = 5
DEFAULT_TOP_K = 100
DEFAULT_PRECISION_KS = (1, 5, 10, 100)

SCOPE_ANSWER_SPAN = "answer_span"
SCOPE_FULL_SENTENCE = "full_sentence"


@dataclass(frozen=True)
class DecodePolicy:
    """How a token is chosen from a mask distribution during generation."""

    mode: str = "greedy"
    temperature: float = 1.0
    seed: int = 0
    top_n: int = 50

    def __post_init__(self):
        if self.mode not in ("greedy", "sample"):
            raise ConfigError(f"unknown decode mode {self.mode!r}")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.top_n < 1:
            raise ConfigError("top_n must be >= 1")


@dataclass(frozen=True)
class GenerationCandidate:
    """One decoded answer of a fixed mask count."""

    mask_count: int
    token_ids: tuple[int, ...]
    surface: str
    step_logprobs: tuple[float, ...]
    failed: bool = False

    def __post_init__(self):
        if not self.failed and not (
            len(self.token_ids) == self.mask_count == len(self.step_logprobs)
        ):
            raise ValueError(
                f"candidate arity mismatch: {self.mask_count} masks, "
                f"{len(self.token_ids)} tokens, {len(self.step_logprobs)} logprobs"
            )


@dataclass(frozen=True)
class PLLResult:
    """Per-token log-probabilities of one answer; lower pppl = preferred."""

    answer_label: str
    token_logprobs: tuple[float, ...]
    error: str | None = None

    @property
    def pll(self) -> float:
        return sum(self.token_logprobs)

    @property
    def pppl(self) -> float:
        if not self.token_logprobs:
            raise ValueError(f"no scored tokens for {self.answer_label!r}")
        return math.exp(-self.pll / len(self.token_logprobs))


@dataclass
class EvaluationRecord:
    """Per-query outcome under one view for one backend."""

    query_id: str
    backend: str
    view: str
    bucket_id: str
    split: str
    metrics: dict[str, float] = field(default_factory=dict)
    payload: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "backend": self.backend,
            "view": self.view,
            "bucket": self.bucket_id,
            "split": self.split,
            "metrics": self.metrics,
            "payload": self.payload,
        }

    @classmethod
    def from_json(cls, payload: Mapping) -> "EvaluationRecord":
        return cls(
            query_id=payload["query_id"],
            backend=payload["backend"],
            view=payload["view"],
            bucket_id=payload["bucket"],
            split=payload["split"],
            metrics=dict(payload["metrics"]),
            payload=dict(payload["payload"]),
        )


# --------------------------------------------------------------------------
# Single-token probing
# --------------------------------------------------------------------------


def _gold_rank(dist: MaskDistribution, token_id: int, vocab_size: int) -> int | None:
    for index, (tid, _) in enumerate(dist.top):
        if tid == token_id:
            return index + 1
    if len(dist.top) >= vocab_size:
        # Full-vocabulary response: derive from the queried log-prob. Only
        # reachable if the backend omitted the id from top, which validation
        # should have caught; kept as a defensive exact path.
        gold_logp = dist.queried[token_id]
        return 1 + sum(1 for _, lp in dist.top if lp > gold_logp)
    return None


def probe_single_token(
    query: ClozeQuery,
    client: BridgeClient,
    k_max: int = DEFAULT_TOP_K,
    ks: Sequence[int] = DEFAULT_PRECISION_KS,
) -> EvaluationRecord:
    """Rank the single-token golds of a one-mask query against the backend."""
    if query.mask_count != 1:
        raise ContractError(f"query {query.query_id} has {query.mask_count} masks, expected 1")
    golds = [a for a in query.answers if len(a.token_ids) == 1]
    if not golds:
        raise ContractError(
            f"query {query.query_id} reached the single-token probe without a "
            "single-token gold; filter upstream"
        )
    gold_ids = tuple(sorted({a.token_ids[0] for a in golds}))
    dist = client.fill_mask(
        FillMaskRequest(text=query.text, top_n=k_max, query_token_ids=gold_ids)
    )[0]
    ranks = {tid: _gold_rank(dist, tid, client.descriptor.vocab_size) for tid in gold_ids}
    present = [r for r in ranks.values() if r is not None]
    best_rank = min(present) if present else None

    usable_ks = [k for k in ks if k <= k_max]
    if len(usable_ks) != len(list(ks)):
        logger.warning("dropping precision ks above k_max=%d: %s", k_max, list(ks))
    metrics = {"accuracy": float(precision_at_k(best_rank, 1))}
    for k in usable_ks:
        metrics[f"p_at_{k}"] = float(precision_at_k(best_rank, k))
    metrics["mrr"] = reciprocal_rank(best_rank)

    payload = {
        "best_rank": best_rank,
        "golds": [
            {
                "qid": a.qid,
                "label": a.label,
                "token_id": a.token_ids[0],
                "logp": dist.queried[a.token_ids[0]],
                "rank": ranks[a.token_ids[0]],
            }
            for a in golds
        ],
        "top": [[tid, lp] for tid, lp in dist.top],
    }
    return EvaluationRecord(
        query_id=query.query_id,
        backend=client.descriptor.name,
        view=VIEW_SINGLE,
        bucket_id=query.bucket_id,
        split=query.split,
        metrics=metrics,
        payload=payload,
    )


# --------------------------------------------------------------------------
# Multi-token sequential generation
# --------------------------------------------------------------------------


def _choose_token(
    dist: MaskDistribution, policy: DecodePolicy, rng: random.Random
) -> tuple[int, float]:
    if policy.mode == "greedy" or len(dist.top) == 1:
        return dist.top[0]
    weights = [math.exp(lp / policy.temperature) for _, lp in dist.top]
    if not any(w > 0 for w in weights):
        return dist.top[0]
    index = rng.choices(range(len(dist.top)), weights=weights, k=1)[0]
    return dist.top[index]


def _splice_leftmost_mask(text: str, mask_token: str, token_surface: str) -> str:
    return text.replace(mask_token, token_surface.strip(), 1)


def generate_multi_token(
    query: ClozeQuery,
    client: BridgeClient,
    max_masks: int = DEFAULT_MAX_MASKS,
    policy: DecodePolicy = DecodePolicy(),
) -> list[GenerationCandidate]:
    """Decode one candidate per mask count m = 1..max_masks.

    Candidate m costs exactly m fill-mask calls; a backend failure mid-loop
    marks that candidate failed and leaves the others untouched.
    """
    if max_masks < 1:
        raise ConfigError(f"max_masks must be >= 1, got {max_masks}")
    mask_token = query.mask_token
    template = Template(query.key.property_id, query.template_text)
    candidates = []
    for m in range(1, max_masks + 1):
        masks = " ".join([mask_token] * m)
        text = template.template_text.replace(SUBJECT_SLOT, query.subject_label).replace(
            OBJECT_SLOT, masks
        )
        rng = random.Random(f"{policy.seed}|{query.query_id}|{m}")
        chosen: list[int] = []
        logprobs: list[float] = []
        failed = False
        for _ in range(m):
            try:
                dist = client.fill_mask(FillMaskRequest(text=text, top_n=policy.top_n))[0]
            except TransportError as exc:
                logger.warning("candidate m=%d failed for %s: %s", m, query.query_id, exc)
                failed = True
                break
            token_id, logp = _choose_token(dist, policy, rng)
            chosen.append(token_id)
            logprobs.append(logp)
            text = _splice_leftmost_mask(text, mask_token, client.detokenize([token_id]))
        candidates.append(
            GenerationCandidate(
                mask_count=m,
                token_ids=tuple(chosen),
                surface=client.detokenize(chosen).strip() if not failed else "",
                step_logprobs=tuple(logprobs),
                failed=failed,
            )
        )
    return candidates


def match_candidates(
    candidates: Iterable[GenerationCandidate], answers: Sequence[str]
) -> tuple[bool, dict[str, float]]:
    """Score decoded candidates against the acceptable answers.

    Correct iff any candidate's normalized surface exactly equals any
    normalized answer; continuous metrics take the maximum over all
    candidate x answer pairs.
    """
    if not answers:
        raise ContractError("match_candidates needs a non-empty answer list")
    usable = [c for c in candidates if not c.failed]
    normalized_answers = [normalize_answer(a) for a in answers]
    answer_tokens = [match_tokens(a) for a in answers]
    correct = False
    best = {"token_f1": 0.0, "rouge1": 0.0, "rougeL": 0.0}
    for candidate in usable:
        surface_norm = normalize_answer(candidate.surface)
        candidate_tokens = match_tokens(candidate.surface)
        for answer_norm, tokens in zip(normalized_answers, answer_tokens):
            if surface_norm and surface_norm == answer_norm:
                correct = True
            best["token_f1"] = max(best["token_f1"], token_f1(candidate_tokens, tokens))
            best["rouge1"] = max(best["rouge1"], rouge_n(candidate_tokens, tokens, 1))
            best["rougeL"] = max(best["rougeL"], rouge_l(candidate_tokens, tokens))
    return correct, best


def evaluate_multi_token(
    query: ClozeQuery,
    client: BridgeClient,
    max_masks: int = DEFAULT_MAX_MASKS,
    policy: DecodePolicy = DecodePolicy(),
) -> EvaluationRecord:
    candidates = generate_multi_token(query, client, max_masks, policy)
    answers = [a.label for a in query.answers]
    correct, scores = match_candidates(candidates, answers)
    metrics = {"accuracy": float(correct), **scores}
    payload = {
        "candidates": [
            {
                "mask_count": c.mask_count,
                "token_ids": list(c.token_ids),
                "surface": c.surface,
                "step_logprobs": list(c.step_logprobs),
                "failed": c.failed,
            }
            for c in candidates
        ],
        "answers": answers,
    }
    return EvaluationRecord(
        query_id=query.query_id,
        backend=client.descriptor.name,
        view=VIEW_MULTI,
        bucket_id=query.bucket_id,
        split=query.split,
        metrics=metrics,
        payload=payload,
    )


# --------------------------------------------------------------------------
# MLM scoring (pseudo-log-likelihood)
# --------------------------------------------------------------------------


def score_pll(
    query: ClozeQuery,
    client: BridgeClient,
    scope: str = SCOPE_ANSWER_SPAN,
) -> list[PLLResult]:
    """Score each answer by masking the rendered sentence one token at a time.

    scope="answer_span" scores only the answer's tokens (default);
    "full_sentence" scores every token of the rendered sentence. An answer
    whose scoring fails mid-way yields a PLLResult carrying the error.
    """
    if scope not in (SCOPE_ANSWER_SPAN, SCOPE_FULL_SENTENCE):
        raise ConfigError(f"unknown pll scope {scope!r}")
    template = Template(query.key.property_id, query.template_text)
    prefix, suffix = template.split_at_object(query.subject_label)
    prefix_text = prefix.rstrip()
    suffix_text = suffix.lstrip()
    mask_id = client.descriptor.mask_token_id
    results = []
    for answer in query.answers:
        try:
            prefix_ids = list(client.tokenize(prefix_text)) if prefix_text else []
            suffix_ids = (
                list(client.tokenize(suffix_text, add_prefix_space=True)) if suffix_text else []
            )
            answer_ids = list(client.tokenize(answer.label, add_prefix_space=bool(prefix_text)))
            sentence = prefix_ids + answer_ids + suffix_ids
            if scope == SCOPE_ANSWER_SPAN:
                span = range(len(prefix_ids), len(prefix_ids) + len(answer_ids))
            else:
                span = range(len(sentence))
            logprobs = []
            for position in span:
                masked = sentence[:position] + [mask_id] + sentence[position + 1 :]
                masked_text = client.detokenize(masked)
                dist = client.fill_mask(
                    FillMaskRequest(
                        text=masked_text, top_n=1, query_token_ids=(sentence[position],)
                    )
                )[0]
                logprobs.append(dist.queried[sentence[position]])
            results.append(PLLResult(answer_label=answer.label, token_logprobs=tuple(logprobs)))
        except TransportError as exc:
            logger.warning("pll scoring failed for %r: %s", answer.label, exc)
            results.append(PLLResult(answer_label=answer.label, token_logprobs=(), error=str(exc)))
    return results


def evaluate_mlm_score(
    query: ClozeQuery,
    client: BridgeClient,
    scope: str = SCOPE_ANSWER_SPAN,
) -> EvaluationRecord:
    results = score_pll(query, client, scope)
    scored = [r for r in results if r.error is None and r.token_logprobs]
    metrics: dict[str, float] = {}
    preferred: str | None = None
    if scored:
        best = min(scored, key=lambda r: (r.pppl, r.answer_label))
        preferred = best.answer_label
        metrics = {"pll": best.pll, "pppl": best.pppl}
    payload = {
        "scope": scope,
        "preferred": preferred,
        "answers": [
            {
                "label": r.answer_label,
                "token_logprobs": list(r.token_logprobs),
                "pll": r.pll if r.error is None and r.token_logprobs else None,
                "pppl": r.pppl if r.error is None and r.token_logprobs else None,
                "error": r.error,
            }
            for r in results
        ],
    }
    return EvaluationRecord(
        query_id=query.query_id,
        backend=client.descriptor.name,
        view=VIEW_SCORE,
        bucket_id=query.bucket_id,
        split=query.split,
        metrics=metrics,
        payload=payload,
    )
