#!/usr/bin/env python3
"""Capture reference logits from transformers' GPT-2 for the engine-fidelity check.

Usage:  python3 tools/scripts/make_gpt2_reference.py GPT2_SMALL_DIR [OUT_JSON]

GPT2_SMALL_DIR is a local Hugging Face checkpoint (config.json, model.safetensors,
vocab.json, merges.txt). OUT_JSON defaults to tests/fixtures/gpt2_small_reference.json.
"""
import json
import os
import sys

import torch
from transformers import GPT2LMHeadModel, GPT2Tokenizer

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
PROMPTS = ["think outside the", "there's no such thing as a free", "The native language of Jean Marais is"]


def main():
    if len(sys.argv) not in (2, 3):
        sys.exit(__doc__)
    model_dir = sys.argv[1]
    out = sys.argv[2] if len(sys.argv) == 3 else os.path.join(ROOT, "tests", "fixtures", "gpt2_small_reference.json")
    tok = GPT2Tokenizer.from_pretrained(model_dir)
    model = GPT2LMHeadModel.from_pretrained(model_dir).eval()
    cases = []
    with torch.no_grad():
        for text in PROMPTS:
            ids = tok.encode(text)
            logits = model(torch.tensor([ids])).logits[0, -1]
            cases.append({"text": text, "ids": ids, "top5": torch.topk(logits, 5).indices.tolist(),
                          "logits": logits.tolist()})
    with open(out, "w") as f:
        json.dump({"cases": cases}, f)
    print("wrote", out)


if __name__ == "__main__":
    main()
