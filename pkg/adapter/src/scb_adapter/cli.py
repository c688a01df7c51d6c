"""Process entry point conforming to the scb adapter contract.

    scb-example-adapter MANIFEST OUT --modality {audio,text} --model ID

Reads every manifest row, embeds its audio clip (audio_path column) or its
pause-annotated transcript (asr_path column), and writes a complete EMB1
file to OUT. Any failure exits nonzero without writing OUT.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .encoders import AudioEncoder, LanguageDetector, TextEncoder
from .io import load_audio, read_manifest, write_emb1

TEXT_BATCH = 16


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scb-example-adapter",
        description="Embed manifest samples with a pretrained encoder (EMB1 out).",
    )
    parser.add_argument("manifest", help="scb manifest CSV")
    parser.add_argument("out", help="EMB1 output path")
    parser.add_argument("--modality", choices=["audio", "text"], default="audio")
    parser.add_argument("--model", required=True,
                        help="HuggingFace model id or local checkpoint directory")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--languages-out", default=None, metavar="CSV",
                        help="also run Whisper language identification per clip "
                             "(audio modality, multilingual checkpoints only)")
    return parser


def run(args) -> int:
    samples, root = read_manifest(args.manifest)
    if not samples:
        print("adapter: empty manifest", file=sys.stderr)
        return 1

    vectors: dict[str, np.ndarray] = {}
    if args.modality == "audio":
        encoder = AudioEncoder(args.model, device=args.device)
        detector = LanguageDetector(args.model, device=args.device) if args.languages_out else None
        languages = {}
        for sample in samples:
            wav = load_audio(root / sample.audio_path)
            vectors[sample.uid] = encoder.embed(wav)
            if detector is not None:
                languages[sample.uid] = detector.detect(wav)
        dim = encoder.dim
        if detector is not None:
            lines = ["uid,language"] + [f"{u},{languages[u]}" for u in sorted(languages)]
            Path(args.languages_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        encoder = TextEncoder(args.model, device=args.device)
        missing = [s.uid for s in samples if s.asr_path is None]
        if missing:
            print(f"adapter: no transcript path for {missing[:5]}", file=sys.stderr)
            return 1
        for start in range(0, len(samples), TEXT_BATCH):
            batch = samples[start : start + TEXT_BATCH]
            texts = [(root / s.asr_path).read_text(encoding="utf-8").strip() for s in batch]
            pooled = encoder.embed_batch(texts)
            for s, vec in zip(batch, pooled):
                vectors[s.uid] = vec
        dim = encoder.dim

    provider = f"example-adapter:{Path(args.model).name}:{args.modality}:mean"
    for uid, vec in vectors.items():
        if vec.shape != (dim,) or not np.all(np.isfinite(vec)):
            print(f"adapter: bad vector for {uid}", file=sys.stderr)
            return 1
    write_emb1(args.out, vectors, provider)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except Exception as e:
        print(f"adapter: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
