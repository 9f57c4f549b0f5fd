"""Training orchestration: epochs, batching, adagrad state, checkpoints.

A batch is `batch_size` (center, context) pairs; gradients are
accumulated over the batch and applied once (mini-batch adagrad).
Negatives for a pair are keyed to the pair's corpus position and the
run seed, so epochs differ only in sentence order and per-epoch mean
losses are comparable. Deterministic mode runs single-threaded with a
fixed seed and is bit-reproducible; hogwild mode shards batches across
threads with unsynchronized embedding-row updates while CNN gradients
are applied by a single reducer.
"""
from __future__ import annotations

import queue
import struct
import sys
import threading
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .corpus import NegativeSampler, Vocab, build_vocab, context_pairs, read_sentences
from .glyph_cnn import CnnParams, cnn_init
from .model import (DweModel, EmbeddingTables, adagrad_step, adagrad_step_rows,
                    init_tables)
from .morphology import (GLYPH_BYTES, StrokeNgramDict, build_ngram_dict, is_cjk,
                         load_glyph_pack, load_stroke_table, pack_bitmap,
                         unpack_bitmap)

CHECKPOINT_MAGIC = b"DWE1"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class ConfigMismatchError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainingConfig:
    dim: int = 300
    lr: float = 0.05
    batch_size: int = 4096
    n_min: int = 3
    n_max: int = 6
    window: int = 5
    negatives: int = 5
    alpha: float = 1.0
    epochs: int = 5
    min_count: int = 5
    seed: int = 1
    mode: str = "deterministic"  # or "hogwild"
    threads: int = 1
    eps: float = 1e-8
    use_ngrams: bool = True
    use_glyphs: bool = True
    subsample: float = 0.0  # 0 disables frequent-word subsampling
    dtype: str = "float32"

    def validate(self) -> None:
        if self.dim < 1 or self.lr <= 0 or self.batch_size < 1 or self.window < 1:
            raise ValueError("dim, lr, batch_size, window must be positive")
        if not (1 <= self.n_min <= self.n_max):
            raise ValueError(f"need 1 <= n_min <= n_max, got {self.n_min}..{self.n_max}")
        if self.negatives < 1 or self.epochs < 0 or self.min_count < 1:
            raise ValueError("negatives, min_count must be >= 1 and epochs >= 0")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.mode not in ("deterministic", "hogwild"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "hogwild" and self.threads < 1:
            raise ValueError("hogwild mode needs threads >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_lines(self) -> str:
        out = []
        for f in sorted(fields(self), key=lambda f: f.name):
            out.append(f"{f.name}={getattr(self, f.name)}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_lines(cls, text: str) -> "TrainingConfig":
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        defaults = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, val = line.partition("=")
            if key not in types:
                raise CheckpointError(f"unknown config key {key!r}")
            cur = getattr(defaults, key)
            if isinstance(cur, bool):
                kwargs[key] = val == "True"
            elif isinstance(cur, int):
                kwargs[key] = int(val)
            elif isinstance(cur, float):
                kwargs[key] = float(val)
            else:
                kwargs[key] = val
        return cls(**kwargs)


@dataclass
class Accumulators:
    word_id: np.ndarray
    context: np.ndarray
    ngram: np.ndarray
    cnn: CnnParams

    @classmethod
    def zeros(cls, tables: EmbeddingTables, cnn: CnnParams) -> "Accumulators":
        return cls(np.zeros_like(tables.word_id_vecs),
                   np.zeros_like(tables.context_vecs),
                   np.zeros_like(tables.ngram_vecs),
                   cnn.zeros_like())


@dataclass
class Checkpoint:
    config: TrainingConfig
    vocab: Vocab
    ngram_dict: StrokeNgramDict
    glyphs: dict[str, np.ndarray]
    tables: EmbeddingTables
    cnn: CnnParams
    accum: Accumulators
    epoch: int = 0
    step: int = 0
    # per-epoch mean objective from the most recent training run; in-memory
    # only, not serialized
    epoch_mean_losses: list[float] = field(default_factory=list)

    def model(self) -> DweModel:
        return DweModel(self.vocab, self.ngram_dict, self.glyphs, self.tables,
                        self.cnn, self.config.use_ngrams, self.config.use_glyphs)


def _check_resumable(old: TrainingConfig, new: TrainingConfig) -> None:
    for key in ("dim", "n_min", "n_max", "dtype"):
        if getattr(old, key) != getattr(new, key):
            raise ConfigMismatchError(
                f"checkpoint has {key}={getattr(old, key)}, requested {getattr(new, key)}")


def init_checkpoint(vocab: Vocab, ngram_dict: StrokeNgramDict,
                    glyphs: dict[str, np.ndarray], config: TrainingConfig) -> Checkpoint:
    config.validate()
    dtype = config.np_dtype
    tables = init_tables(len(vocab), len(ngram_dict), config.dim, config.seed, dtype)
    cnn = cnn_init(config.seed + 1, config.dim, dtype)
    return Checkpoint(config, vocab, ngram_dict, glyphs, tables, cnn,
                      Accumulators.zeros(tables, cnn))


def apply_grads(ckpt: Checkpoint, grads, lr: float, eps: float,
                update_embeddings: bool = True, update_cnn: bool = True) -> None:
    t, a = ckpt.tables, ckpt.accum
    if update_embeddings:
        adagrad_step_rows(t.word_id_vecs, a.word_id, grads.word_id_ids,
                          grads.word_id_rows, lr, eps)
        adagrad_step_rows(t.context_vecs, a.context, grads.context_ids,
                          grads.context_rows, lr, eps)
        adagrad_step_rows(t.ngram_vecs, a.ngram, grads.ngram_ids,
                          grads.ngram_rows, lr, eps)
    if update_cnn and grads.cnn is not None:
        for (_, p), (_, g), (_, acc) in zip(ckpt.cnn.tensors(), grads.cnn.tensors(),
                                            a.cnn.tensors()):
            adagrad_step(p, g, acc, lr, eps)


def _epoch_batches(sentences: list[np.ndarray], config: TrainingConfig,
                   rng: np.random.Generator, vocab: Vocab,
                   sampler: NegativeSampler):
    """Yield (centers, contexts, negatives) batch arrays for one epoch.

    Negative draws are keyed to (run seed, sentence index), not to the
    epoch, so every epoch scores the same multiset of (pair, negatives)
    triples and per-epoch mean losses are directly comparable.
    """
    order = rng.permutation(len(sentences))
    keep_prob = None
    if config.subsample > 0:
        freq = vocab.counts / vocab.counts.sum()
        keep_prob = np.minimum(1.0, np.sqrt(config.subsample / freq))
    buf_c: list[np.ndarray] = []
    buf_x: list[np.ndarray] = []
    buf_n: list[np.ndarray] = []
    buffered = 0
    for si in order:
        sent = sentences[si]
        if keep_prob is not None:
            sent = sent[rng.random(len(sent)) < keep_prob[sent]]
        pairs = list(context_pairs(list(sent), config.window))
        if not pairs:
            continue
        centers = np.array([c for c, _ in pairs], dtype=np.int64)
        contexts = np.array([x for _, x in pairs], dtype=np.int64)
        sampler.reseed((config.seed, int(si)))
        negatives = sampler.draw_batch(config.negatives, centers)
        buf_c.append(centers)
        buf_x.append(contexts)
        buf_n.append(negatives)
        buffered += len(centers)
        while buffered >= config.batch_size:
            centers = np.concatenate(buf_c)
            contexts = np.concatenate(buf_x)
            negatives = np.concatenate(buf_n)
            yield (centers[:config.batch_size], contexts[:config.batch_size],
                   negatives[:config.batch_size])
            buf_c = [centers[config.batch_size:]]
            buf_x = [contexts[config.batch_size:]]
            buf_n = [negatives[config.batch_size:]]
            buffered -= config.batch_size
    if buffered:
        yield np.concatenate(buf_c), np.concatenate(buf_x), np.concatenate(buf_n)


def _train_epoch_deterministic(ckpt: Checkpoint, model: DweModel,
                               sentences: list[np.ndarray], sampler: NegativeSampler,
                               rng: np.random.Generator) -> tuple[float, int]:
    cfg = ckpt.config
    total_loss, total_pairs = 0.0, 0
    for centers, contexts, negatives in _epoch_batches(sentences, cfg, rng,
                                                       ckpt.vocab, sampler):
        loss, grads = model.batch_loss_and_grads(centers, contexts, negatives)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss at epoch={ckpt.epoch} step={ckpt.step}")
        apply_grads(ckpt, grads, cfg.lr, cfg.eps)
        total_loss += loss
        total_pairs += len(centers)
        ckpt.step += 1
    return total_loss, total_pairs


def _train_epoch_hogwild(ckpt: Checkpoint, model: DweModel,
                         sentences: list[np.ndarray], sampler: NegativeSampler,
                         rng: np.random.Generator) -> tuple[float, int]:
    cfg = ckpt.config
    batches = list(_epoch_batches(sentences, cfg, rng, ckpt.vocab, sampler))
    shards = [batches[i::cfg.threads] for i in range(cfg.threads)]
    cnn_queue: queue.Queue = queue.Queue()
    stats_lock = threading.Lock()
    totals = {"loss": 0.0, "pairs": 0}
    errors: list[BaseException] = []

    def reducer():
        while True:
            item = cnn_queue.get()
            if item is None:
                return
            apply_grads(ckpt, item, cfg.lr, cfg.eps,
                        update_embeddings=False, update_cnn=True)

    def worker(wid: int):
        try:
            for centers, contexts, negatives in shards[wid]:
                loss, grads = model.batch_loss_and_grads(centers, contexts, negatives)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(f"non-finite loss in worker {wid}")
                # unsynchronized sparse embedding updates (hogwild contract)
                apply_grads(ckpt, grads, cfg.lr, cfg.eps, update_cnn=False)
                if grads.cnn is not None:
                    cnn_queue.put(grads)
                with stats_lock:
                    totals["loss"] += loss
                    totals["pairs"] += len(centers)
                    ckpt.step += 1
        except BaseException as exc:  # propagate to the main thread
            errors.append(exc)

    red = threading.Thread(target=reducer)
    red.start()
    threads = [threading.Thread(target=worker, args=(i,)) for i in range(cfg.threads)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    cnn_queue.put(None)
    red.join()
    if errors:
        raise errors[0]
    return totals["loss"], totals["pairs"]


def train(corpus_path, stroke_table_path, glyph_pack_path,
          config: TrainingConfig, resume: Checkpoint | None = None,
          log=sys.stderr) -> Checkpoint:
    config.validate()
    tokens = (tok for sent in read_sentences(corpus_path) for tok in sent)
    vocab = build_vocab(tokens, config.min_count)
    stroke_table = load_stroke_table(stroke_table_path)
    glyph_table = load_glyph_pack(glyph_pack_path)
    observed = {c for w in vocab.words for c in w if is_cjk(c)}
    ngram_dict = build_ngram_dict(stroke_table, observed, config.n_min, config.n_max)
    if ngram_dict.skipped and log is not None:
        print(f"warning: {len(ngram_dict.skipped)} characters lack stroke data",
              file=log)
    glyphs = {c: glyph_table[c] for c in observed if c in glyph_table}
    missing_glyphs = observed - set(glyphs)
    if missing_glyphs and log is not None:
        print(f"warning: {len(missing_glyphs)} characters lack glyphs (zero bitmap)",
              file=log)

    if resume is not None:
        _check_resumable(resume.config, config)
        ckpt = replace(resume, config=config)
    else:
        ckpt = init_checkpoint(vocab, ngram_dict, glyphs, config)
    return train_checkpoint(ckpt, corpus_path, log=log)


def train_checkpoint(ckpt: Checkpoint, corpus_path, log=sys.stderr) -> Checkpoint:
    """Run ckpt.config.epochs over the corpus, mutating ckpt in place."""
    cfg = ckpt.config
    id_of = ckpt.vocab.id_of
    sentences = []
    for toks in read_sentences(corpus_path):
        ids = np.array([id_of[t] for t in toks if t in id_of], dtype=np.int64)
        if len(ids) >= 2:
            sentences.append(ids)
    model = ckpt.model()
    sampler = NegativeSampler(ckpt.vocab.counts, cfg.alpha, seed=cfg.seed)
    start = time.monotonic()
    for _ in range(cfg.epochs):
        # Reseeded per epoch: every epoch shuffles with the same permutation
        # and scores the same (pair, negatives) schedule, so per-epoch mean
        # losses differ only through parameter improvement.
        rng = np.random.default_rng(cfg.seed)
        if cfg.mode == "hogwild" and cfg.threads > 1:
            loss, pairs = _train_epoch_hogwild(ckpt, model, sentences, sampler, rng)
        else:
            loss, pairs = _train_epoch_deterministic(ckpt, model, sentences, sampler, rng)
        ckpt.epoch += 1
        mean = loss / pairs if pairs else float("nan")
        ckpt.epoch_mean_losses.append(mean)
        if log is not None:
            print(f"epoch={ckpt.epoch} loss={mean:.6f} pairs={pairs} "
                  f"elapsed={time.monotonic() - start:.1f}", file=log)
    return ckpt


# -- serialization ---------------------------------------------------------

def _section(payload: bytes) -> bytes:
    return struct.pack("<Q", len(payload)) + payload


def dump_checkpoint(ckpt: Checkpoint) -> bytes:
    cfg = ckpt.config
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<H", CHECKPOINT_VERSION)

    out += _section(cfg.to_lines().encode("utf-8"))

    vocab_lines = [f"total_tokens={ckpt.vocab.total_tokens}"]
    vocab_lines += [f"{w}\t{int(c)}" for w, c in zip(ckpt.vocab.words, ckpt.vocab.counts)]
    out += _section(("\n".join(vocab_lines) + "\n").encode("utf-8"))

    nd = ckpt.ngram_dict
    dict_lines = [f"n_min={nd.n_min} n_max={nd.n_max}", f"ngrams={len(nd)}"]
    dict_lines += [",".join(map(str, ng)) for ng in nd.ngrams]
    dict_lines.append(f"chars={len(nd.per_char)}")
    dict_lines += [f"{c}\t{','.join(map(str, nd.per_char[c]))}" for c in sorted(nd.per_char)]
    dict_lines.append(f"skipped={len(nd.skipped)}")
    dict_lines += sorted(nd.skipped)
    out += _section(("\n".join(dict_lines) + "\n").encode("utf-8"))

    gl = bytearray()
    gl += struct.pack("<I", len(ckpt.glyphs))
    for ch in sorted(ckpt.glyphs):
        gl += struct.pack("<I", ord(ch))
        gl += pack_bitmap(ckpt.glyphs[ch])
    out += _section(bytes(gl))

    t = ckpt.tables
    tbl = b"".join(x.astype("<f4").tobytes() for x in
                   (t.word_id_vecs, t.context_vecs, t.ngram_vecs))
    out += _section(tbl)
    out += _section(b"".join(x.astype("<f4").tobytes() for _, x in ckpt.cnn.tensors()))
    acc = ckpt.accum
    acc_blob = b"".join(x.astype("<f4").tobytes() for x in (acc.word_id, acc.context, acc.ngram))
    acc_blob += b"".join(x.astype("<f4").tobytes() for _, x in acc.cnn.tensors())
    out += _section(acc_blob)

    out += _section(f"epoch={ckpt.epoch}\nstep={ckpt.step}\n".encode("utf-8"))
    return bytes(out)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_checkpoint(ckpt))


def _read_sections(data: bytes, n: int, name: str) -> list[bytes]:
    off = len(CHECKPOINT_MAGIC) + 2
    sections = []
    for _ in range(n):
        if off + 8 > len(data):
            raise CheckpointError(f"{name}: truncated section table")
        (size,) = struct.unpack_from("<Q", data, off)
        off += 8
        if off + size > len(data):
            raise CheckpointError(f"{name}: truncated section payload")
        sections.append(data[off:off + size])
        off += size
    if off != len(data):
        raise CheckpointError(f"{name}: trailing bytes")
    return sections


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    name = str(path)
    if len(data) < 6 or data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{name}: bad magic")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{name}: unsupported version {version}")
    (cfg_b, vocab_b, dict_b, glyph_b, tbl_b, cnn_b, acc_b, counters_b) = \
        _read_sections(data, 8, name)

    config = TrainingConfig.from_lines(cfg_b.decode("utf-8"))
    dtype = config.np_dtype

    vlines = vocab_b.decode("utf-8").splitlines()
    total_tokens = int(vlines[0].partition("=")[2])
    words, counts = [], []
    for line in vlines[1:]:
        w, _, c = line.partition("\t")
        words.append(w)
        counts.append(int(c))
    vocab = Vocab(words, np.array(counts, dtype=np.int64), total_tokens)

    dlines = dict_b.decode("utf-8").splitlines()
    head = dict(part.split("=") for part in dlines[0].split())
    n_ngrams = int(dlines[1].partition("=")[2])
    pos = 2
    ngram_ids = {}
    for i in range(n_ngrams):
        ng = tuple(int(s) for s in dlines[pos + i].split(","))
        ngram_ids[ng] = i
    pos += n_ngrams
    n_chars = int(dlines[pos].partition("=")[2])
    pos += 1
    per_char = {}
    for i in range(n_chars):
        ch, _, ids = dlines[pos + i].partition("\t")
        per_char[ch] = [int(s) for s in ids.split(",")] if ids else []
    pos += n_chars
    n_skip = int(dlines[pos].partition("=")[2])
    skipped = dlines[pos + 1:pos + 1 + n_skip]
    ngram_dict = StrokeNgramDict(ngram_ids, per_char, int(head["n_min"]),
                                 int(head["n_max"]), skipped)

    (g_count,) = struct.unpack_from("<I", glyph_b, 0)
    glyphs = {}
    off = 4
    for _ in range(g_count):
        (cp,) = struct.unpack_from("<I", glyph_b, off)
        glyphs[chr(cp)] = unpack_bitmap(glyph_b[off + 4:off + 4 + GLYPH_BYTES])
        off += 4 + GLYPH_BYTES

    V, d, G = len(vocab), config.dim, n_ngrams

    def take(blob, off, shape):
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(shape)
        return arr.astype(dtype), off + n * 4

    off = 0
    w_id, off = take(tbl_b, off, (V, d))
    ctx, off = take(tbl_b, off, (V, d))
    ngr, off = take(tbl_b, off, (G, d))
    if G == 0:
        ngr = np.zeros((0, d), dtype=dtype)
    tables = EmbeddingTables(w_id, ctx, ngr)

    template = cnn_init(0, d, dtype)
    off = 0
    cnn_tensors = []
    for _, ref in template.tensors():
        t, off = take(cnn_b, off, ref.shape)
        cnn_tensors.append(t)
    cnn = CnnParams(*cnn_tensors)

    off = 0
    a_wid, off = take(acc_b, off, (V, d))
    a_ctx, off = take(acc_b, off, (V, d))
    a_ngr, off = take(acc_b, off, (G, d))
    if G == 0:
        a_ngr = np.zeros((0, d), dtype=dtype)
    acc_tensors = []
    for _, ref in template.tensors():
        t, off = take(acc_b, off, ref.shape)
        acc_tensors.append(t)
    accum = Accumulators(a_wid, a_ctx, a_ngr, CnnParams(*acc_tensors))

    counters = dict(line.split("=") for line in counters_b.decode("utf-8").splitlines())
    return Checkpoint(config, vocab, ngram_dict, glyphs, tables, cnn, accum,
                      epoch=int(counters["epoch"]), step=int(counters["step"]))


def export_vectors(ckpt: Checkpoint, path, which: str = "composed") -> None:
    """word2vec text format: header 'V d', then token + 6-decimal components."""
    if which not in ("composed", "word_id"):
        raise ValueError(f"which must be 'composed' or 'word_id', got {which!r}")
    if which == "composed":
        model = ckpt.model()
        rows = [model.compose_word(w).vector for w in ckpt.vocab.words]
    else:
        rows = list(ckpt.tables.word_id_vecs)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(ckpt.vocab)} {ckpt.config.dim}\n")
        for token, vec in zip(ckpt.vocab.words, rows):
            fh.write(token + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")


def load_vectors(path) -> tuple[list[str], np.ndarray]:
    """Read the word2vec text format back; returns (tokens, matrix)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad vector-file header")
        v, d = int(header[0]), int(header[1])
        tokens, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != d + 1:
                raise ValueError(f"{path}: row has {len(parts) - 1} values, expected {d}")
            tokens.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(tokens) != v:
        raise ValueError(f"{path}: header says {v} rows, found {len(tokens)}")
    return tokens, np.array(rows, dtype=np.float64)
