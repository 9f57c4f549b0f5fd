"""Intrinsic evaluation: word similarity, analogies, nearest neighbors.

All queries run against a frozen checkpoint; CNN features per character
are computed once and cached. Out-of-vocabulary tokens are represented
by the average of their known CJK character features; tokens with no
usable characters (and zero vectors) are unrepresentable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .morphology import is_cjk
from .trainer import Checkpoint

EPS_3COSMUL = 0.001


class UnrepresentableTokenError(ValueError):
    pass


@dataclass
class SimilarityRecord:
    word_a: str
    word_b: str
    human_score: float


def load_similarity_dataset(path) -> list[SimilarityRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected word_a<TAB>word_b<TAB>score")
            records.append(SimilarityRecord(parts[0], parts[1], float(parts[2])))
    if len(records) < 2:
        raise ValueError(f"{path}: need >= 2 records for rank correlation")
    return records


def load_analogy_dataset(path) -> dict[str, list[tuple[str, str, str, str]]]:
    groups: dict[str, list[tuple[str, str, str, str]]] = {}
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith(":"):
                current = line[1:].strip()
                if not current or current in groups:
                    raise ValueError(f"{path}:{lineno}: bad or duplicate group name")
                groups[current] = []
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 words")
            if current is None:
                raise ValueError(f"{path}:{lineno}: quadruple before any group header")
            groups[current].append(tuple(parts))
    if not groups or not any(groups.values()):
        raise ValueError(f"{path}: empty analogy dataset")
    return groups


def _fractional_ranks(x: np.ndarray) -> np.ndarray:
    """Average ranks (1-based), ties get the mean of their rank range."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_rho(xs, ys) -> float:
    """Pearson correlation of fractional ranks."""
    xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("spearman_rho needs two equal-length 1-D sequences")
    if len(xs) < 2:
        raise ValueError("need at least 2 observations")
    rx, ry = _fractional_ranks(xs), _fractional_ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0:
        raise ValueError("rank variance is zero; rho undefined")
    return float((rx * ry).sum() / denom)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise UnrepresentableTokenError("cosine with a zero vector is undefined")
    if np.array_equal(u, v):
        return 1.0  # exact for identical vectors; avoids sqrt round-off
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


class Evaluator:
    """Read-only query interface over a frozen checkpoint."""

    def __init__(self, ckpt: Checkpoint, which: str = "composed"):
        if which not in ("composed", "word_id"):
            raise ValueError(f"which must be 'composed' or 'word_id', got {which!r}")
        self.which = which
        self.vocab = ckpt.vocab
        self.model = ckpt.model()
        m = self.model
        if len(m.chars):
            feats, _, _, _ = m._char_features(np.arange(len(m.chars), dtype=np.int64))
            self._char_feats = feats.astype(np.float64)
        else:
            self._char_feats = np.zeros((0, ckpt.config.dim))
        if which == "composed":
            rows = []
            for wid, w in enumerate(self.vocab.words):
                vec = m.tables.word_id_vecs[wid].astype(np.float64)
                cids = m.word_char_ids[wid]
                if (m.use_ngrams or m.use_glyphs) and len(cids):
                    vec = vec + self._char_feats[cids].sum(axis=0) / len(cids)
                rows.append(vec)
            self.matrix = np.stack(rows)
        else:
            self.matrix = m.tables.word_id_vecs.astype(np.float64)
        norms = np.linalg.norm(self.matrix, axis=1)
        self._usable = norms > 0
        self._unit = np.zeros_like(self.matrix)
        self._unit[self._usable] = self.matrix[self._usable] / norms[self._usable, None]

    def vector(self, token: str) -> np.ndarray:
        """Composed vector; OOV tokens fall back to averaged char features."""
        if not token:
            raise UnrepresentableTokenError("empty token")
        wid = self.vocab.id_of.get(token)
        if wid is not None:
            return self.matrix[wid]
        m = self.model
        cids = [m.char_index[c] for c in token if is_cjk(c) and c in m.char_index]
        if not cids:
            raise UnrepresentableTokenError(f"no known CJK characters in {token!r}")
        return self._char_feats[cids].mean(axis=0)

    def _unit_vector(self, token: str) -> np.ndarray:
        v = self.vector(token)
        n = np.linalg.norm(v)
        if n == 0:
            raise UnrepresentableTokenError(f"zero vector for {token!r}")
        return v / n

    # -- similarity -----------------------------------------------------

    def similarity(self, a: str, b: str) -> float:
        return cosine(self.vector(a), self.vector(b))

    def eval_similarity(self, records: list[SimilarityRecord]) -> tuple[float, float]:
        """(rho, coverage); pairs with unrepresentable sides are skipped."""
        model_scores, human_scores = [], []
        for rec in records:
            try:
                model_scores.append(self.similarity(rec.word_a, rec.word_b))
            except UnrepresentableTokenError:
                continue
            human_scores.append(rec.human_score)
        if len(model_scores) < 2:
            raise UnrepresentableTokenError("fewer than 2 scorable pairs")
        rho = spearman_rho(model_scores, human_scores)
        return rho, len(model_scores) / len(records)

    # -- analogy ---------------------------------------------------------

    def _analogy_mask(self, a: str, b: str, h: str) -> np.ndarray:
        mask = self._usable.copy()
        for tok in (a, b, h):
            wid = self.vocab.id_of.get(tok)
            if wid is not None:
                mask[wid] = False
        return mask

    def analogy_3cosadd(self, a: str, b: str, h: str) -> str:
        """argmax_t cos(t, b - a + h) over the vocabulary, excluding a, b, h."""
        target = self._unit_vector(b) - self._unit_vector(a) + self._unit_vector(h)
        scores = self._unit @ target
        scores[~self._analogy_mask(a, b, h)] = -np.inf
        return self.vocab.words[int(np.argmax(scores))]

    def analogy_3cosmul(self, a: str, b: str, h: str) -> str:
        """argmax_t cos01(t,b) * cos01(t,h) / (cos01(t,a) + eps), cosines
        shifted to [0, 1] via (1 + cos) / 2."""
        ca = (1.0 + self._unit @ self._unit_vector(a)) / 2.0
        cb = (1.0 + self._unit @ self._unit_vector(b)) / 2.0
        ch = (1.0 + self._unit @ self._unit_vector(h)) / 2.0
        scores = cb * ch / (ca + EPS_3COSMUL)
        scores[~self._analogy_mask(a, b, h)] = -np.inf
        return self.vocab.words[int(np.argmax(scores))]

    def eval_analogy(self, groups: dict[str, list[tuple[str, str, str, str]]],
                     method: str = "3cosadd") -> tuple[dict[str, float], float]:
        """Per-group exact-match accuracy plus the overall accuracy.
        Unanswerable queries count as wrong."""
        solve = {"3cosadd": self.analogy_3cosadd,
                 "3cosmul": self.analogy_3cosmul}.get(method)
        if solve is None:
            raise ValueError(f"unknown analogy method {method!r}")
        per_group: dict[str, float] = {}
        correct_all = total_all = 0
        for name, quads in groups.items():
            if not quads:
                continue
            correct = 0
            for a, b, h, t in quads:
                try:
                    if solve(a, b, h) == t:
                        correct += 1
                except UnrepresentableTokenError:
                    pass
            per_group[name] = correct / len(quads)
            correct_all += correct
            total_all += len(quads)
        if total_all == 0:
            raise ValueError("empty analogy dataset")
        return per_group, correct_all / total_all

    # -- neighbors ---------------------------------------------------------

    def nearest_neighbors(self, token: str, k: int = 10) -> list[tuple[str, float]]:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        u = self._unit_vector(token)
        scores = self._unit @ u
        mask = self._usable.copy()
        wid = self.vocab.id_of.get(token)
        if wid is not None:
            mask[wid] = False
        ids = np.nonzero(mask)[0]
        # descending cosine, ties broken by ascending id
        order = ids[np.lexsort((ids, -scores[ids]))][:k]
        return [(self.vocab.words[i], float(scores[i])) for i in order]
