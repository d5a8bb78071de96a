"""Model wrapper: tokenization and mask scoring for one served checkpoint.

Log-probabilities are log-softmax over the full vocabulary at each mask
position, computed in inference mode with dropout disabled, so responses are
deterministic for fixed weights. Internal batching must stay semantically
identical to sequential calls (the wire never batches).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import torch
from transformers import AutoModelForMaskedLM, AutoTokenizer

logger = logging.getLogger(__name__)


class RequestError(ValueError):
    """Invalid request content; carries the offending field name."""

    def __init__(self, field_name: str, message: str):
        super().__init__(message)
        self.field_name = field_name


@dataclass
class FillMaskQuery:
    text: str
    top_n: int
    query_token_ids: tuple[int, ...] = ()


@dataclass
class MaskScores:
    position: int
    top: list[tuple[int, float]]
    queried: dict[int, float]


class ServedModel:
    """One masked-LM checkpoint plus its tokenizer, pinned to a device."""

    def __init__(self, model, tokenizer, name: str, device: str = "cpu"):
        self.model = model.to(device)
        self.model.eval()
        self.tokenizer = tokenizer
        self.name = name
        self.device = device
        if tokenizer.mask_token_id is None:
            raise ValueError(f"tokenizer for {name!r} has no mask token")
        vocab_size = int(self.model.get_input_embeddings().num_embeddings)
        if vocab_size < len(tokenizer):
            raise ValueError(
                f"model vocabulary ({vocab_size}) smaller than tokenizer ({len(tokenizer)})"
            )
        self.vocab_size = vocab_size

    @classmethod
    def load(cls, model_id: str, name: str | None = None, device: str = "cpu") -> "ServedModel":
        logger.info("loading model %s", model_id)
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModelForMaskedLM.from_pretrained(model_id)
        return cls(model, tokenizer, name=name or model_id, device=device)

    def info(self) -> dict:
        return {
            "name": self.name,
            "vocab_size": self.vocab_size,
            "mask_token_id": int(self.tokenizer.mask_token_id),
            "mask_token": self.tokenizer.mask_token,
        }

    def tokenize(self, text: str, add_prefix_space: bool = False) -> list[int]:
        # Byte-level BPE folds a leading space into the first piece, which is
        # exactly the in-context (post-space) form the evaluation engine wants.
        if add_prefix_space and text and not text.startswith(" "):
            text = " " + text
        return self.tokenizer.encode(text, add_special_tokens=False)

    def detokenize(self, token_ids: Sequence[int]) -> str:
        for token_id in token_ids:
            self._check_token_id(token_id, "token_ids")
        return self.tokenizer.decode(list(token_ids), skip_special_tokens=False)

    def _check_token_id(self, token_id: int, field_name: str) -> None:
        if not 0 <= token_id < self.vocab_size:
            raise RequestError(field_name, f"token id {token_id} outside vocabulary")

    def _encode_with_specials(self, text: str) -> list[int]:
        return self.tokenizer.encode(text, add_special_tokens=True)

    def fill_mask(self, query: FillMaskQuery) -> list[MaskScores]:
        return self._fill([query])[0]

    def _fill(self, queries: Sequence[FillMaskQuery]) -> list[list[MaskScores]]:
        if not queries:
            return []
        for query in queries:
            if query.top_n < 1:
                raise RequestError("top_n", f"top_n must be >= 1, got {query.top_n}")
            for token_id in query.query_token_ids:
                self._check_token_id(token_id, "query_token_ids")
        encoded = [self._encode_with_specials(q.text) for q in queries]
        mask_id = int(self.tokenizer.mask_token_id)
        mask_positions = [[i for i, t in enumerate(ids) if t == mask_id] for ids in encoded]
        for query, positions in zip(queries, mask_positions):
            if not positions:
                raise RequestError("text", f"no {self.tokenizer.mask_token!r} in text")
        pad_id = int(self.tokenizer.pad_token_id or 0)
        width = max(len(ids) for ids in encoded)
        input_ids = torch.full((len(encoded), width), pad_id, dtype=torch.long)
        attention = torch.zeros((len(encoded), width), dtype=torch.long)
        for row, ids in enumerate(encoded):
            input_ids[row, : len(ids)] = torch.tensor(ids, dtype=torch.long)
            attention[row, : len(ids)] = 1
        with torch.inference_mode():
            logits = self.model(
                input_ids=input_ids.to(self.device),
                attention_mask=attention.to(self.device),
            ).logits
        results = []
        for row, (query, positions) in enumerate(zip(queries, mask_positions)):
            masks = []
            for order, position in enumerate(positions):
                logprobs = torch.log_softmax(logits[row, position].float(), dim=-1)
                top = torch.topk(logprobs, k=min(query.top_n, self.vocab_size))
                masks.append(
                    MaskScores(
                        position=order,
                        top=[
                            (int(i), float(lp))
                            for i, lp in zip(top.indices.tolist(), top.values.tolist())
                        ],
                        queried={
                            int(t): float(logprobs[t]) for t in query.query_token_ids
                        },
                    )
                )
            results.append(masks)
        return results


def batch_fill(served: ServedModel, queries: Sequence[FillMaskQuery]) -> list[list[MaskScores]]:
    """Score many requests in one padded forward pass.

    Semantically identical to sequential fill_mask; padding may shift
    log-probs by float noise only (bounded well under 1e-5).
    """
    return served._fill(queries)
