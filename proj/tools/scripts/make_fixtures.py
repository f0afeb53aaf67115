#!/usr/bin/env python3
"""Generate the checked-in test fixtures under tests/fixtures/.

Everything here is produced by the reference PyTorch/transformers GPT-2
implementation, independently of the C++ engine:

  tiny/        L=2, d=8, |V|=32 model + toy tokenizer (saved with save_pretrained)
  mini/        L=4, d=16, byte-level vocab + 64 merges (hub-style tensor names),
               fitted to a few idioms so that it completes them
  *_reference.json  logits, per-layer residual traces, FFN coefficients and
                    intervened logits for fixed inputs
  gpt2_tokenizer_reference.json  GPT-2 BPE ids for a set of strings

Run from the repository root:  python3 tools/scripts/make_fixtures.py
"""
import json
import os
import random
from collections import Counter

import torch
from safetensors.torch import save_file
from transformers import GPT2Config, GPT2LMHeadModel, GPT2Tokenizer

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
FIX = os.path.join(ROOT, "tests", "fixtures")


def bytes_to_unicode():
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + \
        list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, [chr(c) for c in cs]))


def write_tokenizer(dirname, vocab, merges):
    with open(os.path.join(dirname, "vocab.json"), "w", encoding="utf-8") as f:
        json.dump(vocab, f, ensure_ascii=False)
    with open(os.path.join(dirname, "merges.txt"), "w", encoding="utf-8") as f:
        f.write("#version: 0.2\n")
        for a, b in merges:
            f.write(f"{a} {b}\n")


def write_config(dirname, cfg):
    with open(os.path.join(dirname, "config.json"), "w") as f:
        json.dump({
            "n_layers": cfg.n_layer,
            "d_model": cfg.n_embd,
            "d_ff": 4 * cfg.n_embd,
            "n_heads": cfg.n_head,
            "vocab_size": cfg.vocab_size,
            "max_positions": cfg.n_positions,
            "activation": "gelu_new",
            "layer_norm_epsilon": cfg.layer_norm_epsilon,
        }, f, indent=2)


def randomize(model, seed, scale):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("ln_1.weight") or name.endswith("ln_2.weight") or name.endswith("ln_f.weight"):
                p.copy_(1.0 + 0.2 * torch.randn(p.shape, generator=g))
            else:
                p.copy_(scale * torch.randn(p.shape, generator=g))


class Recorder:
    """Forward hooks capturing residual stream and FFN coefficients."""

    def __init__(self, model, zero_spec=None):
        self.model = model
        self.blocks = []
        self.coeffs = []
        self.handles = []
        self.zero_spec = zero_spec
        tr = model.transformer
        for li, block in enumerate(tr.h):
            self.handles.append(block.register_forward_hook(self._block_hook))
            self.handles.append(block.mlp.act.register_forward_hook(self._make_act_hook(li + 1)))

    def _block_hook(self, module, inp, out):
        h = out[0] if isinstance(out, tuple) else out
        self.blocks.append(h[0].detach().clone())

    def _make_act_hook(self, layer):
        def hook(module, inp, out):
            m = out.clone()
            spec = self.zero_spec
            if spec and spec["start"] <= layer <= spec["end"]:
                v_norms = self.model.transformer.h[layer - 1].mlp.c_proj.weight.norm(dim=1)
                positions = [m.shape[1] - 1] if spec["scope"] == "last" else range(m.shape[1])
                for pos in positions:
                    scores = (m[0, pos].abs() * v_norms).tolist()
                    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
                    top = set(order[: spec["k"]])
                    for j in range(len(scores)):
                        if (j in top) == (spec["mode"] == "dominant"):
                            m[0, pos, j] = 0.0
            self.coeffs.append(m[0].detach().clone())
            return m
        return hook

    def close(self):
        for h in self.handles:
            h.remove()


def run_reference(model, ids, zero_spec=None):
    rec = Recorder(model, zero_spec)
    x = torch.tensor([ids])
    with torch.no_grad():
        out = model(x, output_hidden_states=True)
    rec.close()
    emb = out.hidden_states[0][0]
    hidden = [emb[-1].tolist()] + [b[-1].tolist() for b in rec.blocks]
    return {
        "ids": ids,
        "logits": out.logits[0, -1].tolist(),
        "hidden_last": hidden,
        "ffn_coeffs_last": [c[-1].tolist() for c in rec.coeffs],
    }


def make_tiny():
    d = os.path.join(FIX, "tiny")
    os.makedirs(d, exist_ok=True)
    b2u = bytes_to_unicode()
    letters = [b2u[ord(c)] for c in "abcdefghijklmnopqrstuvwxyz"]
    sp = b2u[ord(" ")]
    merges = [("t", "h"), ("th", "e"), (sp, "the"), ("e", "r"), ("o", "u")]
    tokens = letters + [sp] + ["".join(m) for m in merges]
    vocab = {t: i for i, t in enumerate(tokens)}
    assert len(vocab) == 32
    write_tokenizer(d, vocab, merges)

    cfg = GPT2Config(vocab_size=32, n_positions=16, n_embd=8, n_layer=2, n_head=2,
                     activation_function="gelu_new", resid_pdrop=0, embd_pdrop=0, attn_pdrop=0)
    torch.manual_seed(0)
    model = GPT2LMHeadModel(cfg).eval()
    randomize(model, 1, 0.5)
    model.save_pretrained(d, safe_serialization=True)
    # save_pretrained writes its own config.json; replace with ours.
    write_config(d, cfg)
    for extra in ("generation_config.json",):
        p = os.path.join(d, extra)
        if os.path.exists(p):
            os.remove(p)

    tok = GPT2Tokenizer(os.path.join(d, "vocab.json"), os.path.join(d, "merges.txt"))
    texts = ["the other", "there ou", "abc", "the the there", "hour", "zebra the"]
    cases = []
    for t in texts:
        ids = tok.encode(t)
        r = run_reference(model, ids)
        r["text"] = t
        cases.append(r)
    with open(os.path.join(FIX, "tiny_reference.json"), "w") as f:
        json.dump({"cases": cases}, f)


SAMPLE_TEXT = (
    "think outside the box. make a mountain out of a molehill. there is no such "
    "thing as a free lunch. go back to the drawing board. boys will be boys. "
    "take it or leave it. the quick brown fox jumps over the lazy dog. "
    "in one ear and out the other. crying over spilt milk. it is raining cats and dogs. "
)


def learn_merges(text, n):
    b2u = bytes_to_unicode()
    words = Counter()
    for w in text.split(" "):
        if w:
            words[tuple(b2u[b] for b in (" " + w).encode("utf-8"))] += 1
    merges = []
    for _ in range(n):
        pairs = Counter()
        for w, c in words.items():
            for a, b in zip(w, w[1:]):
                pairs[(a, b)] += c
        if not pairs:
            break
        best = max(sorted(pairs), key=lambda p: pairs[p])
        merges.append(best)
        new_words = Counter()
        for w, c in words.items():
            out = []
            i = 0
            while i < len(w):
                if i + 1 < len(w) and (w[i], w[i + 1]) == best:
                    out.append(w[i] + w[i + 1])
                    i += 2
                else:
                    out.append(w[i])
                    i += 1
            new_words[tuple(out)] += c
        words = new_words
    return merges


def memorize(model, tok, steps=800):
    """Fits each sample sentence so that idiom prompts get their real completion as top-1."""
    seqs = [torch.tensor([tok.encode(t.strip())]) for t in SAMPLE_TEXT.split(".") if t.strip()]
    opt = torch.optim.Adam(model.parameters(), lr=1e-2)
    model.train()
    for _ in range(steps):
        opt.zero_grad()
        sum(model(x, labels=x).loss for x in seqs).backward()
        opt.step()
    model.eval()


def make_mini():
    d = os.path.join(FIX, "mini")
    os.makedirs(d, exist_ok=True)
    b2u = bytes_to_unicode()
    tokens = [b2u[b] for b in range(256)]
    merges = learn_merges(SAMPLE_TEXT, 64)
    for a, b in merges:
        tokens.append(a + b)
    vocab = {t: i for i, t in enumerate(tokens)}
    assert len(vocab) == 256 + len(merges)
    write_tokenizer(d, vocab, merges)

    cfg = GPT2Config(vocab_size=len(vocab), n_positions=64, n_embd=16, n_layer=4, n_head=4,
                     activation_function="gelu_new", resid_pdrop=0, embd_pdrop=0, attn_pdrop=0)
    torch.manual_seed(0)
    model = GPT2LMHeadModel(cfg).eval()
    randomize(model, 2, 0.3)
    memorize(model, GPT2Tokenizer(os.path.join(d, "vocab.json"), os.path.join(d, "merges.txt")))
    # Hub-style names (no "transformer." prefix, no lm_head).
    sd = {k[len("transformer."):]: v.contiguous() for k, v in model.state_dict().items()
          if k.startswith("transformer.") and not k.endswith(".attn.bias") and not k.endswith("masked_bias")}
    save_file(sd, os.path.join(d, "model.safetensors"), metadata={"format": "pt"})
    write_config(d, cfg)

    tok = GPT2Tokenizer(os.path.join(d, "vocab.json"), os.path.join(d, "merges.txt"))
    texts = ["think outside the", "make a mountain out of a", "boys will be",
             "Hello, world! It's 2024.", "in one ear and out the"]
    cases = []
    for t in texts:
        ids = tok.encode(t)
        r = run_reference(model, ids)
        r["text"] = t
        interventions = []
        for spec in ({"start": 1, "end": 1, "mode": "dominant", "k": 3, "scope": "last"},
                     {"start": 2, "end": 3, "mode": "non_dominant", "k": 5, "scope": "last"},
                     {"start": 1, "end": 4, "mode": "dominant", "k": 10, "scope": "all"},
                     {"start": 4, "end": 4, "mode": "non_dominant", "k": 0, "scope": "all"}):
            ri = run_reference(model, ids, spec)
            interventions.append({"spec": spec, "logits": ri["logits"]})
        r["interventions"] = interventions
        cases.append(r)
    with open(os.path.join(FIX, "mini_reference.json"), "w") as f:
        json.dump({"cases": cases}, f)


def make_gpt2_tokenizer_fixture():
    tdir = os.path.join(ROOT, "data", "gpt2-tokenizer")
    tok = GPT2Tokenizer(os.path.join(tdir, "vocab.json"), os.path.join(tdir, "merges.txt"))
    texts = [
        "think outside the", " box", " molehill", " lunch", " board",
        "there's no such thing as a free", "Hello, world! It's 2024.",
        "I'll they've we'd you're she's", "  multiple   spaces\n\nand\tnewlines  ",
        "naïve café résumé", "数字 123,456.78", "emoji 😀 test", "The native language of Jean Marais is",
        "don't stop-believing...", "", "a", "\n",
    ]
    random.seed(7)
    for _ in range(20):
        n = random.randint(1, 40)
        texts.append("".join(random.choice("abc XYZ.,'\n01é") for _ in range(n)))
    cases = [{"text": t, "ids": tok.encode(t)} for t in texts]
    with open(os.path.join(FIX, "gpt2_tokenizer_reference.json"), "w", encoding="utf-8") as f:
        json.dump({"cases": cases}, f, ensure_ascii=False, indent=0)


if __name__ == "__main__":
    os.makedirs(FIX, exist_ok=True)
    make_tiny()
    make_mini()
    make_gpt2_tokenizer_fixture()
    print("fixtures written to", FIX)


def make_dtype_fixture():
    vals = torch.tensor([[0.0, 1.0, -2.5], [0.099975586, 65504.0, -0.000061035156]])
    save_file({"f32": vals.float(), "f16": vals.half(), "bf16": vals.bfloat16()},
              os.path.join(FIX, "dtypes.safetensors"), metadata={"note": "widening"})
    with open(os.path.join(FIX, "dtypes_reference.json"), "w") as f:
        json.dump({"f16": vals.half().float().flatten().tolist(),
                   "bf16": vals.bfloat16().float().flatten().tolist()}, f)


make_dtype_fixture()
