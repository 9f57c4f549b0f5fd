"""Dual-channel word composition, SGNS objective, exact gradients.

A word vector is the word-ID row plus the per-character average of
(sum of the character's stroke n-gram vectors) item-wise multiplied by
the CNN feature of the character's glyph. The training objective per
(center, context) pair with negatives e' is

    log sigma(w . e) + sum_{e'} log sigma(-(w . e'))

which the optimizer ascends. Either channel can be disabled: with only
the stroke channel the character feature is the plain n-gram sum; with
both channels off the model is plain skip-gram on the word-ID table.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Vocab
from .glyph_cnn import CnnParams, cnn_backward_batch, cnn_forward_batch
from .morphology import GLYPH_SIDE, StrokeNgramDict, is_cjk


def sigmoid(x):
    """Numerically stable sigmoid (branch on sign, no overflow)."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def log_sigmoid(x):
    """log sigma(x) = -softplus(-x), branch on sign to avoid overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))


@dataclass
class EmbeddingTables:
    word_id_vecs: np.ndarray  # (V, d)
    context_vecs: np.ndarray  # (V, d)
    ngram_vecs: np.ndarray    # (|G|, d)

    @property
    def dim(self) -> int:
        return self.word_id_vecs.shape[1]

    def astype(self, dtype) -> "EmbeddingTables":
        return EmbeddingTables(self.word_id_vecs.astype(dtype),
                               self.context_vecs.astype(dtype),
                               self.ngram_vecs.astype(dtype))


def init_tables(vocab_size: int, n_ngrams: int, d: int, seed: int, dtype=np.float32) -> EmbeddingTables:
    """word-ID and n-gram rows uniform in +-0.5/d, context rows zero."""
    rng = np.random.default_rng(seed)
    bound = 0.5 / d
    return EmbeddingTables(
        word_id_vecs=rng.uniform(-bound, bound, size=(vocab_size, d)).astype(dtype),
        context_vecs=np.zeros((vocab_size, d), dtype=dtype),
        ngram_vecs=rng.uniform(-bound, bound, size=(max(n_ngrams, 1), d)).astype(dtype)
        if n_ngrams else np.zeros((0, d), dtype=dtype),
    )


def score(w_vec: np.ndarray, e_vec: np.ndarray) -> float:
    if w_vec.shape != e_vec.shape:
        raise ValueError(f"dimension mismatch: {w_vec.shape} vs {e_vec.shape}")
    return float(np.dot(w_vec, e_vec))


@dataclass
class CharPart:
    char: str
    ngram_ids: np.ndarray
    feature: np.ndarray


@dataclass
class WordComposition:
    token: str
    word_id: int
    chars: list[CharPart]
    vector: np.ndarray


@dataclass
class Grads:
    """Sparse gradient rows per table plus dense CNN gradients."""
    word_id_ids: np.ndarray
    word_id_rows: np.ndarray
    context_ids: np.ndarray
    context_rows: np.ndarray
    ngram_ids: np.ndarray
    ngram_rows: np.ndarray
    cnn: CnnParams | None


class DweModel:
    """Bundles vocabulary, character data, and all trainable parameters."""

    def __init__(self, vocab: Vocab, ngram_dict: StrokeNgramDict,
                 glyphs: dict[str, np.ndarray], tables: EmbeddingTables,
                 cnn: CnnParams, use_ngrams: bool = True, use_glyphs: bool = True):
        self.vocab = vocab
        self.ngram_dict = ngram_dict
        self.tables = tables
        self.cnn = cnn
        self.use_ngrams = use_ngrams
        self.use_glyphs = use_glyphs
        self.dtype = tables.word_id_vecs.dtype

        # Character registry over all CJK characters of vocabulary words.
        chars = sorted({c for w in vocab.words for c in w if is_cjk(c)})
        self.char_index = {c: i for i, c in enumerate(chars)}
        self.chars = chars
        self.char_ngram_ids = [np.asarray(ngram_dict.per_char.get(c, []), dtype=np.int64)
                               for c in chars]
        self.char_bitmaps = np.zeros((len(chars), GLYPH_SIDE, GLYPH_SIDE), dtype=self.dtype)
        for i, c in enumerate(chars):
            bm = glyphs.get(c)
            if bm is not None:
                self.char_bitmaps[i] = np.asarray(bm, dtype=self.dtype)
        self.word_char_ids = [np.array([self.char_index[c] for c in w if is_cjk(c)],
                                       dtype=np.int64)
                              for w in vocab.words]

    # -- composition ----------------------------------------------------

    def _ngram_sums(self, char_ids: np.ndarray) -> np.ndarray:
        """(len(char_ids), d) rows of sum_{g in G(c)} g."""
        out = np.zeros((len(char_ids), self.tables.dim), dtype=self.tables.ngram_vecs.dtype)
        for k, ci in enumerate(char_ids):
            ids = self.char_ngram_ids[ci]
            if len(ids):
                out[k] = self.tables.ngram_vecs[ids].sum(axis=0)
        return out

    def _char_features(self, char_ids: np.ndarray):
        """Features for registry characters; returns (features, cnn_feats, tape).

        Uses the factoring (sum g) * CNN(I_c) == sum (g * CNN(I_c)).
        """
        ngram_sums = self._ngram_sums(char_ids) if self.use_ngrams else None
        cnn_feats, tape = (None, None)
        if self.use_glyphs:
            cnn_feats, tape = cnn_forward_batch(self.cnn, self.char_bitmaps[char_ids])
        if self.use_ngrams and self.use_glyphs:
            feats = ngram_sums * cnn_feats
        elif self.use_ngrams:
            feats = ngram_sums
        elif self.use_glyphs:
            feats = cnn_feats.copy()
        else:
            feats = np.zeros((len(char_ids), self.tables.dim), dtype=self.dtype)
        return feats, ngram_sums, cnn_feats, tape

    def char_feature(self, char: str) -> np.ndarray:
        """Character feature vector; zero for characters with no n-gram data."""
        ci = self.char_index.get(char)
        if ci is None:
            raise KeyError(f"character {char!r} not in model registry")
        feats, _, _, _ = self._char_features(np.array([ci], dtype=np.int64))
        return feats[0]

    def compose_word(self, token: str) -> WordComposition:
        wid = self.vocab.id_of.get(token)
        if wid is None:
            raise KeyError(f"token {token!r} not in vocabulary")
        char_ids = self.word_char_ids[wid]
        vec = self.tables.word_id_vecs[wid].copy()
        parts = []
        if (self.use_ngrams or self.use_glyphs) and len(char_ids):
            feats, _, _, _ = self._char_features(char_ids)
            vec += feats.sum(axis=0) / len(char_ids)
            parts = [CharPart(self.chars[ci], self.char_ngram_ids[ci], feats[k])
                     for k, ci in enumerate(char_ids)]
        return WordComposition(token, wid, parts, vec)

    # -- loss and gradients ----------------------------------------------

    def batch_loss_and_grads(self, centers: np.ndarray, contexts: np.ndarray,
                             negatives: np.ndarray) -> tuple[float, Grads]:
        """Summed objective and its exact gradient over a batch of pairs.

        centers, contexts: (B,) ids; negatives: (B, lambda) ids.
        """
        centers = np.asarray(centers, dtype=np.int64)
        contexts = np.asarray(contexts, dtype=np.int64)
        negatives = np.asarray(negatives, dtype=np.int64)
        if negatives.ndim != 2 or len(negatives) != len(centers) or len(contexts) != len(centers):
            raise ValueError("batch arrays have inconsistent shapes")
        tbl = self.tables
        d = tbl.dim

        uc, inv = np.unique(centers, return_inverse=True)
        use_chars = self.use_ngrams or self.use_glyphs
        if use_chars:
            all_char_ids = np.unique(np.concatenate(
                [self.word_char_ids[w] for w in uc] or [np.zeros(0, dtype=np.int64)]))
        else:
            all_char_ids = np.zeros(0, dtype=np.int64)
        char_pos = {int(ci): k for k, ci in enumerate(all_char_ids)}
        if len(all_char_ids):
            feats, ngram_sums, cnn_feats, tape = self._char_features(all_char_ids)
        else:
            feats = ngram_sums = cnn_feats = tape = None

        # compose unique centers
        W = tbl.word_id_vecs[uc].copy()
        for u, wid in enumerate(uc):
            cids = self.word_char_ids[wid]
            if use_chars and len(cids):
                rows = [char_pos[int(ci)] for ci in cids]
                W[u] += feats[rows].sum(axis=0) / len(cids)

        Wp = W[inv]                                   # (B, d)
        ctx = tbl.context_vecs[contexts]              # (B, d)
        neg = tbl.context_vecs[negatives]             # (B, L, d)
        s_pos = np.einsum("bd,bd->b", Wp, ctx)
        s_neg = np.einsum("bd,bld->bl", Wp, neg)
        loss = float(log_sigmoid(s_pos).sum() + log_sigmoid(-s_neg).sum())

        g_pos = (1.0 - sigmoid(s_pos)).astype(Wp.dtype)       # dL/ds_pos
        g_neg = (-sigmoid(s_neg)).astype(Wp.dtype)            # dL/ds_neg

        # context-table rows (positives and negatives live in one table)
        ctx_all = np.concatenate([contexts, negatives.reshape(-1)])
        ctx_grad_all = np.concatenate([
            g_pos[:, None] * Wp,
            (g_neg[..., None] * Wp[:, None, :]).reshape(-1, d),
        ])
        u_ctx, ctx_inv = np.unique(ctx_all, return_inverse=True)
        ctx_rows = np.zeros((len(u_ctx), d), dtype=Wp.dtype)
        np.add.at(ctx_rows, ctx_inv, ctx_grad_all)

        # gradient w.r.t. each composed center vector
        dW_pair = g_pos[:, None] * ctx + np.einsum("bl,bld->bd", g_neg, neg)
        dW = np.zeros_like(W)
        np.add.at(dW, inv, dW_pair)

        # word-ID rows get dW directly
        word_rows = dW.copy()

        # distribute into n-gram rows and CNN parameters
        ngram_acc: dict[int, np.ndarray] = {}
        cnn_grad_out = (np.zeros((len(all_char_ids), d), dtype=Wp.dtype)
                        if self.use_glyphs and len(all_char_ids) else None)
        if use_chars:
            for u, wid in enumerate(uc):
                cids = self.word_char_ids[wid]
                if not len(cids):
                    continue
                coeff = dW[u] / len(cids)
                for ci in cids:
                    k = char_pos[int(ci)]
                    if self.use_ngrams:
                        if self.use_glyphs:
                            g_row = coeff * cnn_feats[k]
                        else:
                            g_row = coeff
                        for gid in self.char_ngram_ids[ci]:
                            gid = int(gid)
                            if gid in ngram_acc:
                                ngram_acc[gid] = ngram_acc[gid] + g_row
                            else:
                                ngram_acc[gid] = g_row.copy()
                    if self.use_glyphs:
                        if self.use_ngrams:
                            cnn_grad_out[k] += coeff * ngram_sums[k]
                        else:
                            cnn_grad_out[k] += coeff

        if self.use_ngrams and ngram_acc:
            ng_ids = np.array(sorted(ngram_acc), dtype=np.int64)
            ng_rows = np.stack([ngram_acc[int(i)] for i in ng_ids])
        else:
            ng_ids = np.zeros(0, dtype=np.int64)
            ng_rows = np.zeros((0, d), dtype=Wp.dtype)

        cnn_grads = None
        if self.use_glyphs and len(all_char_ids):
            cnn_grads = cnn_backward_batch(self.cnn, tape, cnn_grad_out)

        grads = Grads(uc, word_rows, u_ctx, ctx_rows, ng_ids, ng_rows, cnn_grads)
        return loss, grads

    def pair_loss_and_grads(self, center: int | str, context_id: int,
                            negative_ids: np.ndarray) -> tuple[float, Grads]:
        """Single-pair objective and gradients (batch of one)."""
        if isinstance(center, str):
            center = self.vocab.id_of[center]
        negative_ids = np.asarray(negative_ids, dtype=np.int64)
        return self.batch_loss_and_grads(
            np.array([center], dtype=np.int64),
            np.array([context_id], dtype=np.int64),
            negative_ids[None],
        )


# -- adagrad -------------------------------------------------------------

def adagrad_step(param: np.ndarray, grad: np.ndarray, accumulator: np.ndarray,
                 lr: float, eps: float = 1e-8) -> None:
    """In-place ascent step: acc += grad^2; param += lr*grad/(sqrt(acc)+eps)."""
    if param.shape != grad.shape or param.shape != accumulator.shape:
        raise ValueError("shape mismatch in adagrad_step")
    if lr <= 0:
        raise ValueError(f"lr must be positive, got {lr}")
    accumulator += grad * grad
    param += lr * grad / (np.sqrt(accumulator) + eps)


def adagrad_step_rows(param: np.ndarray, accumulator: np.ndarray, ids: np.ndarray,
                      grad_rows: np.ndarray, lr: float, eps: float = 1e-8) -> None:
    """Sparse row-wise variant; ids must be unique."""
    if len(ids) == 0:
        return
    accumulator[ids] += grad_rows * grad_rows
    param[ids] += lr * grad_rows / (np.sqrt(accumulator[ids]) + eps)
