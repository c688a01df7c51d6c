"""Session fixtures: tiny local checkpoints and a 3-sample corpus.

Real checkpoints are not fetchable in the test environment, so the suite
builds miniature random-weight models with the documented embedding widths
(512 for the smallest speech encoder, 768 for base text models) and drives
the full inference path through them.
"""

import os
import struct

import numpy as np
import pytest
import torch

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_VERBOSITY", "error")
os.environ.setdefault("HF_HUB_DISABLE_PROGRESS_BARS", "1")

from transformers import (  # noqa: E402  (env vars must land first)
    BertConfig,
    BertModel,
    BertTokenizer,
    WhisperConfig,
    WhisperFeatureExtractor,
    WhisperForConditionalGeneration,
)

AUDIO_DIM = 512
TEXT_DIM = 768


@pytest.fixture(scope="session")
def whisper_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny-whisper")
    cfg = WhisperConfig(
        d_model=AUDIO_DIM,
        encoder_layers=2,
        decoder_layers=2,
        encoder_attention_heads=4,
        decoder_attention_heads=4,
        encoder_ffn_dim=1024,
        decoder_ffn_dim=1024,
        num_mel_bins=80,
        max_source_positions=1500,
        max_target_positions=448,
        vocab_size=64,
        pad_token_id=0,
        bos_token_id=1,
        eos_token_id=2,
        decoder_start_token_id=3,
    )
    torch.manual_seed(1234)
    model = WhisperForConditionalGeneration(cfg).eval()
    # real multilingual checkpoints ship a hand-authored generation config;
    # without clearing this flag the loader drops model-specific keys
    model.generation_config._from_model_config = False
    model.generation_config.lang_to_id = {"<|en|>": 10, "<|es|>": 11}
    model.generation_config.decoder_start_token_id = 3
    model.save_pretrained(out)
    WhisperFeatureExtractor().save_pretrained(out)
    return out


@pytest.fixture(scope="session")
def bert_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny-bert")
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", ",", ".", "the", "boy",
             "is", "on", "a", "stool", "water", "runs", "over", "sink"]
    (out / "vocab.txt").write_text("\n".join(vocab) + "\n", encoding="utf-8")
    tokenizer = BertTokenizer(str(out / "vocab.txt"))
    cfg = BertConfig(
        hidden_size=TEXT_DIM,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=512,
        vocab_size=len(vocab),
        max_position_embeddings=512,
    )
    torch.manual_seed(4321)
    BertModel(cfg).eval().save_pretrained(out)
    tokenizer.save_pretrained(out)
    return out


def write_wav(path, samples, rate):
    pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    body = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, rate, rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(body))
    path.write_bytes(header + body)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Three samples with both audio files and annotated transcripts."""
    root = tmp_path_factory.mktemp("fixture-corpus")
    rate = 48000
    rows = ["uid,audio_path,asr_path,age,sex,language,task,label"]
    texts = [
        "the boy is on a stool",
        "water runs over the , sink",
        "the boy . is on a stool ... water runs",
    ]
    for i, (freq, label) in enumerate(((220.0, "HC"), (440.0, "MCI"), (880.0, "AD"))):
        uid = f"fix{i}"
        t = np.arange(int(1.5 * rate)) / rate
        write_wav(root / f"{uid}.wav", 0.6 * np.sin(2 * np.pi * freq * t), rate)
        (root / f"{uid}.txt").write_text(texts[i] + "\n", encoding="utf-8")
        rows.append(f"{uid},{uid}.wav,{uid}.txt,7{i},female,en,cookie,{label}")
    (root / "manifest.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return root
