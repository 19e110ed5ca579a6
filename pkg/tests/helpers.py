"""Hand-rolled oracles and corpus builders shared across the test modules.

Everything here recomputes results from primitives (plain Python sets,
loops, a separate parser) so the implementation and the oracle can only
agree by computing the same mathematical object, not by sharing code.
"""

from __future__ import annotations

import re
import unicodedata

import numpy as np

from attackmapper.corpus import TrainingTriple
from attackmapper.similarity import DEFAULT_STOPWORDS
from attackmapper.stemmer import stem_word


def separable_corpus(
    n_techniques: int = 20, incidents_per: int = 10, seed: int = 7
) -> list[TrainingTriple]:
    """Synthetic triples whose incident and description vocabularies are
    disjoint: an untrained hash encoder scores near zero on them, while a
    trained one can align the two vocabularies."""
    rng = np.random.default_rng(seed)
    descriptions = {
        i: " ".join(f"d{i:02d}w{j}" for j in range(4)) for i in range(n_techniques)
    }
    noise = [f"noise{k}" for k in range(5)]
    triples = []
    for i in range(n_techniques):
        vocab = [f"i{i:02d}w{j}" for j in range(6)]
        for _ in range(incidents_per):
            words = list(rng.choice(vocab, size=4, replace=False))
            words.append(noise[rng.integers(len(noise))])
            triples.append(
                TrainingTriple(
                    anchor=" ".join(words),
                    positive=descriptions[i],
                    hard_negative=descriptions[(i + 1) % n_techniques],
                    hn_score=0.5,
                )
            )
    return triples


# --- lexical similarity, recomputed from characters up -------------------

def _jac(a: set, b: set) -> float:
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


def _grams(s: str, n: int) -> set:
    return {s[i : i + n] for i in range(len(s) - n + 1)} if len(s) >= n else set()


def oracle_tokens(text: str, stopwords=DEFAULT_STOPWORDS) -> list[str]:
    out = []
    for raw in text.lower().split():
        cleaned = "".join(
            ch for ch in raw if not unicodedata.category(ch).startswith("P")
        )
        if cleaned and cleaned not in stopwords:
            out.append(cleaned)
    return out


def oracle_similarity(
    a: str, b: str, gram_size: int = 4, jaccard_weight: float = 0.5
) -> float:
    ta, tb = oracle_tokens(a), oracle_tokens(b)
    word = _jac({stem_word(t) for t in ta}, {stem_word(t) for t in tb})
    gram = _jac(_grams(" ".join(ta), gram_size), _grams(" ".join(tb), gram_size))
    return jaccard_weight * word + (1.0 - jaccard_weight) * gram


def brute_force_mine(techniques, gram_size: int = 4, jaccard_weight: float = 0.5):
    """O(n^2) rescan with an explicit per-technique argmax; ties resolve to
    the lowest candidate id via the sort key."""
    results = {}
    for t in techniques:
        best = None
        for u in techniques:
            if u.id == t.id:
                continue
            score = oracle_similarity(
                t.description, u.description, gram_size, jaccard_weight
            )
            key = (-score, u.id)
            if best is None or key < best[0]:
                best = (key, u.id, score)
        results[t.id] = (best[1], best[2])
    return results


# --- greedy-max token matching oracle -------------------------------------

def oracle_bertscore(ref_vecs, cand_vecs):
    p_terms = [max(float(np.dot(c, r)) for r in ref_vecs) for c in cand_vecs]
    r_terms = [max(float(np.dot(r, c)) for c in cand_vecs) for r in ref_vecs]
    p = sum(p_terms) / len(p_terms)
    r = sum(r_terms) / len(r_terms)
    f1 = 2.0 * p * r / (p + r) if (p + r) > 0.0 else 0.0
    return p, r, f1


def fidelity_fixture(n_ref: int = 269, n_cand: int = 252, align: float = 0.807):
    """Crafted token table where candidate token j matches reference token j
    at cosine `align` and nothing else: precision lands exactly on `align`,
    recall on align * n_cand / n_ref.

    Returns (table, original_text, augmented_text, expected_p, expected_r).
    """
    import math

    dim = n_ref + n_cand
    table = {}
    for j in range(n_ref):
        e = np.zeros(dim)
        e[j] = 1.0
        table[f"r{j:03d}"] = e
    residual = math.sqrt(1.0 - align * align)
    for j in range(n_cand):
        c = np.zeros(dim)
        c[j] = align
        c[n_ref + j] = residual
        table[f"c{j:03d}"] = c
    original = " ".join(f"r{j:03d}" for j in range(n_ref))
    augmented = " ".join(f"c{j:03d}" for j in range(n_cand))
    return table, original, augmented, align, align * n_cand / n_ref


# --- formula grammar: random generator plus a second evaluator ------------

def random_formula(rng: np.random.Generator, identifiers) -> str:
    """Random well-formed arithmetic over the expression grammar, including
    unparenthesised chains that exercise precedence and associativity."""

    def factor(depth: int) -> str:
        roll = rng.random()
        if roll < 0.35 and depth < 4:
            return "(" + expr(depth + 1) + ")"
        if roll < 0.70:
            return str(identifiers[int(rng.integers(len(identifiers)))])
        if rng.random() < 0.5:
            return str(int(rng.integers(1, 50)))
        return f"{float(rng.integers(1, 500)) / 10:.1f}"

    def term(depth: int) -> str:
        parts = [factor(depth)]
        for _ in range(int(rng.integers(0, 3))):
            parts.append("*" if rng.random() < 0.5 else "/")
            parts.append(factor(depth))
        return " ".join(parts)

    def expr(depth: int) -> str:
        parts = [term(depth)]
        for _ in range(int(rng.integers(0, 3))):
            parts.append("+" if rng.random() < 0.5 else "-")
            parts.append(term(depth))
        return " ".join(parts)

    return expr(0)


_FORMULA_TOKEN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|\d+(?:\.\d+)?|[-+*/()]")


def descent_eval(text: str, env: dict) -> float:
    """Recursive-descent evaluator, written against the grammar directly."""
    tokens = _FORMULA_TOKEN.findall(text)
    pos = [0]

    def peek():
        return tokens[pos[0]] if pos[0] < len(tokens) else None

    def eat():
        tok = tokens[pos[0]]
        pos[0] += 1
        return tok

    def factor() -> float:
        tok = eat()
        if tok == "(":
            value = expr()
            closing = eat()
            assert closing == ")"
            return value
        if tok[0].isdigit():
            return float(tok)
        return float(env[tok])

    def term() -> float:
        value = factor()
        while peek() in ("*", "/"):
            op = eat()
            rhs = factor()
            value = value * rhs if op == "*" else value / rhs
        return value

    def expr() -> float:
        value = term()
        while peek() in ("+", "-"):
            op = eat()
            rhs = term()
            value = value + rhs if op == "+" else value - rhs
        return value

    result = expr()
    assert pos[0] == len(tokens)
    return result


# --- training gradient oracle ---------------------------------------------

def finite_difference_grad(encoder, batch, scale: float, coords, h: float = 1e-5):
    """Central finite differences of the batch loss on chosen row entries."""
    from attackmapper.training import batch_loss_and_gradient

    grads = {}
    for bucket, j in coords:
        original = encoder.rows[bucket, j]
        encoder.rows[bucket, j] = original + h
        loss_plus, _ = batch_loss_and_gradient(encoder, batch, scale)
        encoder.rows[bucket, j] = original - h
        loss_minus, _ = batch_loss_and_gradient(encoder, batch, scale)
        encoder.rows[bucket, j] = original
        grads[(bucket, j)] = (loss_plus - loss_minus) / (2.0 * h)
    return grads


def relative_error(a: float, b: float) -> float:
    # The floor absorbs central-difference noise (~1e-9 absolute at
    # h=1e-5) on near-zero entries, where a pure ratio measures the
    # probe instead of the gradient.
    return abs(a - b) / max(1e-4, abs(a), abs(b))
