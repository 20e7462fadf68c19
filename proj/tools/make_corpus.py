#!/usr/bin/env python3
"""Build a small multi-domain byte corpus for desk-scale MoE experiments.

Layout: <out>/<domain>/<NNNN>.txt for the domains math, code, book, arxiv
and wiki. Code, book and wiki text come from files already on the machine
(Python standard library, Perl pod manuals and licenses, Markdown READMEs);
math and arxiv are generated from seeded templates. Domains that run short
of local text are topped up with generated filler so every domain reaches
its byte quota. Output is deterministic for a given machine and seed.
"""

import argparse
import glob
import os
import random
import sys

DOC_BYTES = 16_000


def read_files(patterns, limit):
    paths = sorted({p for pat in patterns for p in glob.glob(pat, recursive=True)})
    out, total = [], 0
    for path in paths:
        if total >= limit:
            break
        try:
            with open(path, "rb") as f:
                data = f.read()
        except OSError:
            continue
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            continue
        if len(text) < 512:
            continue
        out.append(text)
        total += len(data)
    return out


def math_doc(rng):
    lines = []
    while sum(len(s) for s in lines) < DOC_BYTES:
        kind = rng.randrange(5)
        a, b, c = rng.randint(2, 999), rng.randint(2, 999), rng.randint(2, 30)
        if kind == 0:
            lines.append(f"Problem: compute {a} + {b} * {c}.\nSolution: {b} * {c} = {b * c}, so the answer is {a + b * c}.\n")
        elif kind == 1:
            x = rng.randint(-40, 40)
            rhs = c * x + a
            lines.append(f"Problem: solve {c}x + {a} = {rhs} for x.\nSolution: {c}x = {rhs - a}, hence x = {x}.\n")
        elif kind == 2:
            lines.append(f"Problem: what is {a} mod {c}?\nSolution: {a} = {c} * {a // c} + {a % c}, so the remainder is {a % c}.\n")
        elif kind == 3:
            p, q = rng.randint(1, 12), rng.randint(1, 12)
            lines.append(f"Problem: expand (x + {p})(x + {q}).\nSolution: x^2 + {p + q}x + {p * q}.\n")
        else:
            n = rng.randint(3, 40)
            lines.append(f"Problem: sum the integers from 1 to {n}.\nSolution: n(n+1)/2 = {n}*{n + 1}/2 = {n * (n + 1) // 2}.\n")
    return "\n".join(lines)


ARXIV_TOPICS = ["sparse attention", "mixture of experts", "graph neural networks", "optimal transport",
                "variational inference", "contrastive learning", "diffusion models", "reinforcement learning",
                "kernel methods", "language modeling", "federated optimization", "causal discovery"]
ARXIV_WORDS = ["we propose", "we show that", "in contrast to prior work", "empirically", "theoretically",
               "our method", "the proposed estimator", "the baseline", "a novel objective", "the loss landscape",
               "under mild assumptions", "with high probability", "converges at a rate of", "outperforms",
               "ablation studies", "the representation", "the gradient", "the posterior", "the encoder"]
ARXIV_EQS = [r"\mathcal{L}(\theta) = \mathbb{E}_{x \sim p}[\log q_\theta(x)]",
             r"\| \nabla f(x_t) \|^2 \le \frac{2(f(x_0) - f^*)}{\eta T}",
             r"h_i^{(l+1)} = \sigma\left(\sum_{j \in \mathcal{N}(i)} W^{(l)} h_j^{(l)}\right)",
             r"\mathrm{softmax}(QK^\top / \sqrt{d}) V",
             r"D_{\mathrm{KL}}(q \,\|\, p) = \int q(z) \log \frac{q(z)}{p(z)} \, dz",
             r"y = \sum_{i \in \mathcal{T}} g_i(x) E_i(x)"]


def arxiv_doc(rng):
    topic = rng.choice(ARXIV_TOPICS)
    parts = [f"\\title{{On {topic} with {rng.choice(ARXIV_TOPICS)}}}\n\\begin{{abstract}}\n"]
    sections = ["Introduction", "Related Work", "Method", "Analysis", "Experiments", "Conclusion"]
    for sec in sections:
        parts.append(f"\\section{{{sec}}}\n")
        for _ in range(rng.randint(3, 6)):
            sent = " ".join(rng.choice(ARXIV_WORDS) for _ in range(rng.randint(6, 12)))
            parts.append(sent.capitalize() + f" \\cite{{ref{rng.randint(1, 80)}}}. ")
            if rng.random() < 0.35:
                parts.append("\n\\begin{equation}\n" + rng.choice(ARXIV_EQS) + f"\n\\label{{eq:{rng.randint(1, 99)}}}\n\\end{{equation}}\n")
        parts.append("\n\n")
        if sum(len(p) for p in parts) > DOC_BYTES:
            break
    return "".join(parts)


FILLER = {
    "book": ["The old house stood at the end of the lane", "she did not answer at once", "and the rain kept falling",
             "he remembered the summer they had spent by the sea", "nobody in the village spoke of it again"],
    "wiki": ["is a municipality in the northern region", "was founded in the nineteenth century",
             "the population was estimated at", "is known for its annual festival", "see also: list of rivers"],
    "code": ["def helper(value):\n    return value * 2\n", "for item in items:\n    total += item\n",
             "if not path.exists():\n    raise FileNotFoundError(path)\n", "class Node:\n    pass\n"],
}


def filler_doc(domain, rng):
    words = FILLER[domain]
    out = []
    while sum(len(s) for s in out) < DOC_BYTES:
        out.append(rng.choice(words) + (". " if domain != "code" else "\n"))
    return "".join(out)


def chunk(texts, quota):
    docs, total = [], 0
    for text in texts:
        for start in range(0, len(text), DOC_BYTES):
            piece = text[start:start + DOC_BYTES]
            docs.append(piece)
            total += len(piece.encode("utf-8"))
            if total >= quota:
                return docs, total
    return docs, total


def build_domain(name, quota, rng):
    sources = {
        "code": ["/usr/lib/python3*/*.py", "/usr/lib/python3*/*/*.py"],
        "book": ["/usr/share/perl/*/pod/*.pod", "/usr/share/common-licenses/*"],
        "wiki": ["/usr/lib/node_modules/**/README.md", "/usr/local/lib/python3*/dist-packages/**/*.md"],
    }
    if name == "math":
        texts = [math_doc(rng) for _ in range(quota // DOC_BYTES + 1)]
    elif name == "arxiv":
        texts = []
        while sum(len(t) for t in texts) < quota:
            texts.append(arxiv_doc(rng))
    else:
        texts = read_files(sources[name], quota)
    docs, total = chunk(texts, quota)
    while total < quota:
        doc = filler_doc(name, rng)
        docs.append(doc)
        total += len(doc.encode("utf-8"))
    return docs, total


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--bytes-per-domain", type=int, default=1_100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for i, name in enumerate(["arxiv", "book", "code", "math", "wiki"]):
        rng = random.Random(args.seed * 1000 + i)
        docs, total = build_domain(name, args.bytes_per_domain, rng)
        path = os.path.join(args.out, name)
        os.makedirs(path, exist_ok=True)
        for j, doc in enumerate(docs):
            with open(os.path.join(path, f"{j:04d}.txt"), "w", encoding="utf-8") as f:
                f.write(doc)
        print(f"{name}: {len(docs)} files, {total} bytes", file=sys.stderr)


if __name__ == "__main__":
    main()
