#!/usr/bin/env python3
"""Convert a Hugging Face BERT checkpoint into the kcfplm text tensor format.

Writes <out>/encoder.tensors and <out>/vocab.txt. Linear weights are stored
transposed (in x out) to match the library's row-vector convention. The pooler
is dropped; the encoder reads the top-layer [CLS] state directly.

usage: export_bert_weights.py MODEL_DIR_OR_NAME OUT_DIR
"""
import argparse
import json
import os
import sys


def convert(state):
    out = {}

    def put(name, tensor, transpose=False):
        t = tensor.detach().double()
        if t.dim() == 1:
            t = t.unsqueeze(0)
        if transpose:
            t = t.t()
        out[name] = t.contiguous().numpy()

    p = "embeddings."
    put("word_embeddings", state[p + "word_embeddings.weight"])
    put("position_embeddings", state[p + "position_embeddings.weight"])
    put("token_type_embeddings", state[p + "token_type_embeddings.weight"])
    put("embed_norm.gamma", state[p + "LayerNorm.weight"])
    put("embed_norm.beta", state[p + "LayerNorm.bias"])
    layer = 0
    while f"encoder.layer.{layer}.attention.self.query.weight" in state:
        src = f"encoder.layer.{layer}."
        dst = f"stack.layer{layer}."
        for ours, theirs in (("attn.query", "attention.self.query"), ("attn.key", "attention.self.key"),
                             ("attn.value", "attention.self.value"), ("attn.out", "attention.output.dense"),
                             ("ff.in", "intermediate.dense"), ("ff.out", "output.dense")):
            put(dst + ours + ".weight", state[src + theirs + ".weight"], transpose=True)
            put(dst + ours + ".bias", state[src + theirs + ".bias"])
        put(dst + "attn_norm.gamma", state[src + "attention.output.LayerNorm.weight"])
        put(dst + "attn_norm.beta", state[src + "attention.output.LayerNorm.bias"])
        put(dst + "ff_norm.gamma", state[src + "output.LayerNorm.weight"])
        put(dst + "ff_norm.beta", state[src + "output.LayerNorm.bias"])
        layer += 1
    return out


def write_tensors(path, tensors, meta):
    with open(path, "w") as f:
        f.write("kcfplm-tensors 1\n")
        for k, v in sorted(meta.items()):
            f.write(f"meta {k} {v}\n")
        for name in sorted(tensors):
            m = tensors[name]
            f.write(f"tensor {name} {m.shape[0]} {m.shape[1]}\n")
            for row in m:
                f.write(" ".join(repr(float(x)) for x in row) + "\n")
        f.write("end\n")


def export(model, tokenizer, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    cfg = model.config
    state = {k.removeprefix("bert."): v for k, v in model.state_dict().items()}
    meta = {
        "vocab_size": cfg.vocab_size,
        "width": cfg.hidden_size,
        "layers": cfg.num_hidden_layers,
        "heads": cfg.num_attention_heads,
        "ff_width": cfg.intermediate_size,
        "max_positions": cfg.max_position_embeddings,
        "type_vocab": cfg.type_vocab_size,
        "ln_eps": repr(cfg.layer_norm_eps),
    }
    write_tensors(os.path.join(out_dir, "encoder.tensors"), convert(state), meta)
    vocab = sorted(tokenizer.get_vocab().items(), key=lambda kv: kv[1])
    with open(os.path.join(out_dir, "vocab.txt"), "w") as f:
        for token, _ in vocab:
            f.write(token + "\n")


def main(argv):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("model")
    ap.add_argument("out_dir")
    args = ap.parse_args(argv)
    from transformers import BertModel, BertTokenizer

    export(BertModel.from_pretrained(args.model), BertTokenizer.from_pretrained(args.model), args.out_dir)


if __name__ == "__main__":
    main(sys.argv[1:])
