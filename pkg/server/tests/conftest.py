from __future__ import annotations

from pathlib import Path

import pytest
import torch
from tokenizers import AddedToken, Tokenizer, decoders, models, pre_tokenizers, processors
from transformers import PreTrainedTokenizerFast, RobertaConfig, RobertaForMaskedLM

from fillmask_server.model import ServedModel

REPO_ROOT = Path(__file__).resolve().parents[2]
SCHEMA_DIR = REPO_ROOT / "schema"


def build_tiny_checkpoint(target: Path) -> Path:
    """Write a small byte-level RoBERTa checkpoint that loads fully offline.

    The tokenizer has no merges, so every byte is one token; the model weights
    are random but seeded, which is all the protocol tests need.
    """
    target.mkdir(parents=True, exist_ok=True)
    byte_symbols = sorted(pre_tokenizers.ByteLevel.alphabet())
    vocab = {"<s>": 0, "<pad>": 1, "</s>": 2, "<unk>": 3}
    for i, symbol in enumerate(byte_symbols):
        vocab[symbol] = 4 + i
    vocab["<mask>"] = len(vocab)
    backend = Tokenizer(models.BPE(vocab=vocab, merges=[], unk_token="<unk>"))
    backend.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    backend.decoder = decoders.ByteLevel()
    backend.post_processor = processors.RobertaProcessing(sep=("</s>", 2), cls=("<s>", 0))
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=backend,
        bos_token="<s>",
        eos_token="</s>",
        cls_token="<s>",
        sep_token="</s>",
        unk_token="<unk>",
        pad_token="<pad>",
        mask_token=AddedToken("<mask>", lstrip=True),
    )
    tokenizer.save_pretrained(target)

    torch.manual_seed(1234)
    config = RobertaConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=256,
        type_vocab_size=1,
        pad_token_id=1,
        bos_token_id=0,
        eos_token_id=2,
    )
    model = RobertaForMaskedLM(config)
    model.save_pretrained(target)
    return target


@pytest.fixture(scope="session")
def checkpoint_dir(tmp_path_factory) -> Path:
    return build_tiny_checkpoint(tmp_path_factory.mktemp("tiny-roberta"))


@pytest.fixture(scope="session")
def served(checkpoint_dir) -> ServedModel:
    return ServedModel.load(str(checkpoint_dir), name="2099-Q1")


@pytest.fixture(scope="session")
def client(served):
    from fastapi.testclient import TestClient

    from fillmask_server.app import create_app

    return TestClient(create_app(served))


@pytest.fixture(scope="session")
def schema_dir() -> Path:
    return SCHEMA_DIR
