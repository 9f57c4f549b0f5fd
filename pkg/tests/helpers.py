"""Shared builders and independent oracles for the test suite."""
from __future__ import annotations

import math

import numpy as np

from dwe.corpus import Vocab
from dwe.glyph_cnn import cnn_init
from dwe.model import DweModel, init_tables
from dwe.morphology import build_ngram_dict

CJK_BASE = 0x4E00


def make_micro_model(seed=0, d=6, n_words=4, use_ngrams=True, use_glyphs=True,
                     dtype=np.float64, n_min=2, n_max=3, stroke_len=3):
    """Tiny model over a handful of CJK characters, context rows randomized
    so scores are non-degenerate."""
    rng = np.random.default_rng(seed)
    n_chars = n_words + 1
    chars = [chr(CJK_BASE + i) for i in range(n_chars)]
    words = [chars[i] + chars[(i + 1) % n_chars] if i % 2 == 0 else chars[i]
             for i in range(n_words)]
    counts = np.arange(n_words, 0, -1) * 2
    vocab = Vocab(words, counts, int(counts.sum()))
    strokes = {c: list(rng.integers(1, 33, size=stroke_len)) for c in chars}
    glyphs = {c: rng.integers(0, 2, size=(28, 28)).astype(np.uint8) for c in chars}
    ngram_dict = build_ngram_dict(strokes, set(chars), n_min, n_max)
    tables = init_tables(n_words, len(ngram_dict), d, seed + 1, dtype)
    tables.context_vecs[:] = rng.normal(0, 0.3, tables.context_vecs.shape).astype(dtype)
    cnn = cnn_init(seed + 2, d, dtype)
    model = DweModel(vocab, ngram_dict, glyphs, tables, cnn,
                     use_ngrams=use_ngrams, use_glyphs=use_glyphs)
    return model


def central_difference(arr, index, loss_fn, h=1e-5):
    old = arr[index]
    arr[index] = old + h
    lp = loss_fn()
    arr[index] = old - h
    lm = loss_fn()
    arr[index] = old
    return (lp - lm) / (2.0 * h)


def rel_err(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_grad_tensor(arr, analytic, loss_fn, rng, max_coords=25, h=1e-5):
    """Sampled coordinate-wise finite-difference check; returns worst rel err."""
    n = min(max_coords, arr.size)
    flat = rng.choice(arr.size, size=n, replace=False)
    worst = 0.0
    for f in flat:
        ix = np.unravel_index(f, arr.shape)
        fd = central_difference(arr, ix, loss_fn, h)
        worst = max(worst, rel_err(float(analytic[ix]), fd))
    return worst


# -- independent SGNS reference (plain loops, no shared code paths) --------

def sgns_reference_batch(word_vecs, ctx_vecs, centers, contexts, negatives):
    """Loss and dense gradients of the plain skip-gram objective, written
    with scalar loops as an independent oracle."""
    gw = np.zeros_like(word_vecs)
    gc = np.zeros_like(ctx_vecs)
    loss = 0.0
    for b in range(len(centers)):
        w = word_vecs[centers[b]]
        e = ctx_vecs[contexts[b]]
        s = float(np.dot(w, e))
        loss += math.log(1.0 / (1.0 + math.exp(-s)))
        gpos = 1.0 - 1.0 / (1.0 + math.exp(-s))
        gw[centers[b]] += gpos * e
        gc[contexts[b]] += gpos * w
        for nid in negatives[b]:
            en = ctx_vecs[nid]
            sn = float(np.dot(w, en))
            loss += math.log(1.0 / (1.0 + math.exp(sn)))
            gneg = -1.0 / (1.0 + math.exp(-sn))
            gw[centers[b]] += gneg * en
            gc[nid] += gneg * w
    return loss, gw, gc


def sgns_reference_adagrad(param, grad, acc, lr, eps):
    acc += grad ** 2
    param += lr * grad / (np.sqrt(acc) + eps)


# -- brute-force analogy oracles -------------------------------------------

def _cos(u, v):
    return float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))


def brute_3cosadd(words, matrix, a, b, h):
    ids = {w: i for i, w in enumerate(words)}
    va = matrix[ids[a]] / np.linalg.norm(matrix[ids[a]])
    vb = matrix[ids[b]] / np.linalg.norm(matrix[ids[b]])
    vh = matrix[ids[h]] / np.linalg.norm(matrix[ids[h]])
    target = vb - va + vh
    best, best_score = None, -np.inf
    for i, w in enumerate(words):
        if w in (a, b, h) or np.linalg.norm(matrix[i]) == 0:
            continue
        s = _cos(matrix[i], target)
        if s > best_score:
            best, best_score = w, s
    return best


def brute_3cosmul(words, matrix, a, b, h, eps=0.001):
    ids = {w: i for i, w in enumerate(words)}
    best, best_score = None, -np.inf
    for i, w in enumerate(words):
        if w in (a, b, h) or np.linalg.norm(matrix[i]) == 0:
            continue
        ca = (1.0 + _cos(matrix[i], matrix[ids[a]])) / 2.0
        cb = (1.0 + _cos(matrix[i], matrix[ids[b]])) / 2.0
        ch = (1.0 + _cos(matrix[i], matrix[ids[h]])) / 2.0
        s = cb * ch / (ca + eps)
        if s > best_score:
            best, best_score = w, s
    return best
