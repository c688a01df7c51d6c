"""Pretrained-encoder wrappers with mean pooling.

Audio: Whisper checkpoints go through the log-mel front end into the
encoder; wav2vec2-family models (wav2vec2, HuBERT, WavLM, UniSpeech,
data2vec) take raw waveforms. Text: any BERT-like masked LM via its own
tokenizer, mean-pooled over non-padding tokens. Inference only, eval mode,
fully deterministic for fixed weights.
"""

from __future__ import annotations

import numpy as np
import torch
from transformers import (
    AutoConfig,
    AutoFeatureExtractor,
    AutoModel,
    AutoTokenizer,
    WhisperForConditionalGeneration,
)

from .io import pad_or_truncate

CLIP_SECONDS = 30.0
RATE = 16000
MAX_TEXT_TOKENS = 512


class AudioEncoder:
    def __init__(self, model_id: str, device: str = "cpu"):
        self.model_id = model_id
        self.device = torch.device(device)
        self.config = AutoConfig.from_pretrained(model_id)
        self.extractor = AutoFeatureExtractor.from_pretrained(model_id)
        self.model = AutoModel.from_pretrained(model_id).to(self.device).eval()

    @property
    def dim(self) -> int:
        return int(getattr(self.config, "d_model", None) or self.config.hidden_size)

    @torch.no_grad()
    def embed(self, samples: np.ndarray) -> np.ndarray:
        samples = pad_or_truncate(samples, CLIP_SECONDS, RATE)
        if self.config.model_type == "whisper":
            feats = self.extractor(samples, sampling_rate=RATE, return_tensors="pt")
            frames = self.model.encoder(feats.input_features.to(self.device)).last_hidden_state
        else:
            feats = self.extractor(samples, sampling_rate=RATE, return_tensors="pt")
            frames = self.model(feats.input_values.to(self.device)).last_hidden_state
        return frames.mean(dim=1)[0].cpu().numpy().astype(np.float32)


class TextEncoder:
    def __init__(self, model_id: str, device: str = "cpu"):
        self.model_id = model_id
        self.device = torch.device(device)
        self.config = AutoConfig.from_pretrained(model_id)
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModel.from_pretrained(model_id).to(self.device).eval()

    @property
    def dim(self) -> int:
        return int(self.config.hidden_size)

    @torch.no_grad()
    def embed_batch(self, texts: list[str]) -> np.ndarray:
        enc = self.tokenizer(
            texts,
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=MAX_TEXT_TOKENS,
        ).to(self.device)
        hidden = self.model(**enc).last_hidden_state
        mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
        pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
        return pooled.cpu().numpy().astype(np.float32)


class LanguageDetector:
    """Whisper language identification (one decoder step over language tokens).

    Needs a checkpoint whose generation config carries lang_to_id, i.e. a
    real multilingual Whisper; raises otherwise.
    """

    def __init__(self, model_id: str, device: str = "cpu"):
        self.device = torch.device(device)
        self.model = WhisperForConditionalGeneration.from_pretrained(model_id).to(self.device).eval()
        gen = self.model.generation_config
        lang_to_id = getattr(gen, "lang_to_id", None)
        if not lang_to_id:
            raise ValueError(
                f"{model_id}: no lang_to_id in generation config; language "
                "detection needs a multilingual Whisper checkpoint"
            )
        self.lang_to_id = dict(lang_to_id)
        self.start_id = gen.decoder_start_token_id
        self.extractor = AutoFeatureExtractor.from_pretrained(model_id)

    @torch.no_grad()
    def detect(self, samples: np.ndarray) -> str:
        samples = pad_or_truncate(samples, CLIP_SECONDS, RATE)
        feats = self.extractor(samples, sampling_rate=RATE, return_tensors="pt")
        decoder_input = torch.tensor([[self.start_id]], device=self.device)
        logits = self.model(
            input_features=feats.input_features.to(self.device),
            decoder_input_ids=decoder_input,
        ).logits[0, 0]
        tokens = list(self.lang_to_id)
        ids = torch.tensor([self.lang_to_id[t] for t in tokens], device=self.device)
        best = tokens[int(torch.argmax(logits[ids]))]
        return best.strip("<|>")
