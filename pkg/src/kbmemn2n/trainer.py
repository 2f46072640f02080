"""Training loop (mean cross-entropy, Adam, early stopping) and text checkpoints."""
from __future__ import annotations

import io
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .corpus import CandidatePool, Dialog, Example, Utterance, SYSTEM, Vocabulary, build_vocab
from .entities import EntityLexicon, EntityType
from .memnet import EncodedExample, Hyperparams, MemoryNetwork, Parameters
from .numerics import AdamState, adam_step, make_rng

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "KBMEMN2N-CKPT"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 10
    eval_every: int = 1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hyper: Hyperparams = field(default_factory=Hyperparams)

    def __post_init__(self):
        if self.batch_size < 1 or self.patience < 1 or self.eval_every < 1:
            raise ValueError("batch_size, patience and eval_every must be >= 1")


@dataclass
class Checkpoint:
    hyper: Hyperparams
    vocab: Vocabulary
    lexicon: EntityLexicon
    pool: CandidatePool
    params: Parameters
    adam: dict[str, AdamState]
    history: list[dict]
    seed: int = 0
    config: TrainConfig | None = None

    def model(self) -> MemoryNetwork:
        return MemoryNetwork(self.hyper, self.vocab, self.lexicon, self.pool, self.params)


def build_model(dialogs, pool: CandidatePool, lexicon: EntityLexicon, hyper: Hyperparams,
                seed: int = 0) -> MemoryNetwork:
    vocab = build_vocab(dialogs, pool, lexicon, hyper.memory_cap, delexicalize=hyper.kb_mode)
    return MemoryNetwork(hyper, vocab, lexicon, pool, seed=seed)


def compute_gradients(model: MemoryNetwork, batch: list[Example | EncodedExample],
                      params: Parameters | None = None):
    """Mean cross-entropy over ``batch`` and its exact gradient. Returns ``(loss, grads)``."""
    if not batch:
        raise ValueError("empty batch")
    batch = [model.encode(e) if isinstance(e, Example) else e for e in batch]
    ps = model.run(batch, params)
    return ps.loss(), ps.backward()


def accuracy(model: MemoryNetwork, encoded: list[EncodedExample], golds: list[int]) -> float:
    preds = model.predict_encoded(encoded)
    return 100.0 * sum(p == g for p, g in zip(preds, golds)) / len(golds)


def train(model: MemoryNetwork, train_set: list[Example], validation_set: list[Example],
          config: TrainConfig, progress=None) -> tuple[Checkpoint, list[dict]]:
    """Adam on mean cross-entropy; keeps the parameters of the best validation check."""
    if not train_set or not validation_set:
        raise ValueError("training and validation sets must be non-empty")
    hyper = model.hyper
    enc_train = [model.encode(e) for e in train_set]
    enc_val = [model.encode(e) for e in validation_set]
    val_gold = [e.gold for e in validation_set]
    shuffle_rng = make_rng(config.seed, "shuffle")

    params = model.params
    adam = {name: AdamState.fresh(t) for name, t in params}
    best_acc, best_params, best_adam = -1.0, params.copy(), {k: v.copy() for k, v in adam.items()}
    history: list[dict] = []
    bad_checks = 0

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(enc_train))
        total, n_batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [enc_train[i] for i in order[start:start + config.batch_size]]
            with np.errstate(over="ignore", invalid="ignore"):   # a blow-up is reported just below
                loss, grads = compute_gradients(model, batch, params)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}, batch starting at {start}")
            for name, g in grads:
                new, adam[name] = adam_step(params[name], g, adam[name], hyper.lr,
                                            config.beta1, config.beta2, config.eps)
                new[0] = 0.0
                params[name] = new
            total += loss
            n_batches += 1
        if epoch % config.eval_every:
            continue
        model.params = params
        val_acc = accuracy(model, enc_val, val_gold)
        entry = {"epoch": epoch, "loss": total / n_batches, "validation_accuracy": val_acc}
        history.append(entry)
        if progress is not None:
            progress(entry)
        log.debug("epoch %d loss %.5f val %.2f", epoch, entry["loss"], val_acc)
        if val_acc > best_acc:
            best_acc, bad_checks = val_acc, 0
            best_params = params.copy()
            best_adam = {k: v.copy() for k, v in adam.items()}
        else:
            bad_checks += 1
            if bad_checks >= config.patience:
                break

    model.params = best_params
    ckpt = Checkpoint(hyper, model.vocab, model.lexicon, model.pool, best_params, best_adam,
                      history, config.seed, config)
    return ckpt, history


# --------------------------------------------------------------------------
# checkpoint text format


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_matrix(out: list[str], a: np.ndarray) -> None:
    for row in a:
        out.append(" ".join(_fmt(x) for x in row))


def _kv(obj) -> list[str]:
    return [f"{f.name}={getattr(obj, f.name)}" for f in fields(obj) if f.name != "hyper"]


def dumps_checkpoint(ckpt: Checkpoint) -> str:
    out = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}"]
    hp = _kv(ckpt.hyper)
    out += [f"[hyperparams] {len(hp)}", *hp]
    tc = _kv(ckpt.config) if ckpt.config is not None else []
    out += [f"[train] {len(tc)}", *tc]
    out += ["[seed] 1", str(ckpt.seed)]
    out += [f"[words] {len(ckpt.vocab.words)}", *ckpt.vocab.words]
    out += [f"[entities] {len(ckpt.vocab.entities)}", *ckpt.vocab.entities]
    lex = ckpt.lexicon.items()
    out += [f"[lexicon] {len(lex)}", *(f"{s} {t.name}" for s, t in lex)]
    out += [f"[candidates] {len(ckpt.pool)}", *(c.text for c in ckpt.pool.candidates)]
    out += [f"[history] {len(ckpt.history)}"]
    out += [" ".join(f"{k}={_fmt(v) if isinstance(v, float) else v}" for k, v in h.items())
            for h in ckpt.history]
    for name, t in ckpt.params:
        out.append(f"[tensor {name}] {t.shape[0]} {t.shape[1]}")
        _write_matrix(out, t)
    for name, st in ckpt.adam.items():
        out.append(f"[adam {name}] {st.t} {st.m.shape[0]} {st.m.shape[1]}")
        _write_matrix(out, st.m)
        _write_matrix(out, st.v)
    out.append("[end]")
    return "\n".join(out) + "\n"


def save_checkpoint(ckpt: Checkpoint, sink) -> None:
    text = dumps_checkpoint(ckpt)
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text, encoding="utf-8")
    else:
        sink.write(text)


def _coerce(value: str, like):
    if isinstance(like, bool):
        if value not in ("True", "False"):
            raise CheckpointError(f"bad boolean {value!r}")
        return value == "True"
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def _from_kv(cls, lines: list[str], **extra):
    defaults = cls(**extra) if extra else cls()
    kwargs = dict(extra)
    for line in lines:
        k, _, v = line.partition("=")
        if not hasattr(defaults, k):
            raise CheckpointError(f"unknown field {k!r} for {cls.__name__}")
        kwargs[k] = _coerce(v, getattr(defaults, k))
    return cls(**kwargs)


class _Reader:
    def __init__(self, lines: list[str]):
        self.lines, self.i = lines, 0

    def next(self) -> str:
        if self.i >= len(self.lines):
            raise CheckpointTruncatedError("checkpoint ends unexpectedly")
        line = self.lines[self.i]
        self.i += 1
        return line

    def take(self, n: int) -> list[str]:
        return [self.next() for _ in range(n)]

    def header(self, tag: str) -> list[str]:
        line = self.next()
        if not line.startswith("[" + tag):
            raise CheckpointError(f"expected section [{tag}...], found {line[:40]!r}")
        return line.partition("]")[2].split()

    def matrix(self, rows: int, cols: int, name: str) -> np.ndarray:
        out = np.empty((rows, cols))
        for r in range(rows):
            vals = self.next().split()
            if len(vals) != cols:
                raise CheckpointShapeError(f"{name}: row {r} has {len(vals)} values, expected {cols}")
            out[r] = [float(v) for v in vals]
        return out


def loads_checkpoint(text: str) -> Checkpoint:
    try:
        return _loads(text)
    except CheckpointError:
        raise
    except (ValueError, KeyError) as err:
        raise CheckpointError(f"malformed checkpoint: {err}") from None


def _loads(text: str) -> Checkpoint:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    rd = _Reader(lines)
    try:
        head = rd.next().split()
    except CheckpointTruncatedError:
        raise CheckpointVersionError("empty checkpoint") from None
    if len(head) != 2 or head[0] != CHECKPOINT_MAGIC:
        raise CheckpointVersionError("not a checkpoint: bad header")
    if head[1] != str(CHECKPOINT_VERSION):
        raise CheckpointVersionError(f"unsupported checkpoint version {head[1]}")

    (n,) = rd.header("hyperparams")
    hyper = _from_kv(Hyperparams, rd.take(int(n)))
    (n,) = rd.header("train")
    train_lines = rd.take(int(n))
    config = _from_kv(TrainConfig, train_lines, hyper=hyper) if train_lines else None
    rd.header("seed")
    seed = int(rd.next())
    (n,) = rd.header("words")
    words = tuple(rd.take(int(n)))
    (n,) = rd.header("entities")
    entities = tuple(rd.take(int(n)))
    (n,) = rd.header("lexicon")
    lex = {}
    for line in rd.take(int(n)):
        s, t = line.split(" ")
        lex[s] = EntityType[t]
    (n,) = rd.header("candidates")
    pool = CandidatePool(tuple(Utterance.from_text(SYSTEM, t) for t in rd.take(int(n))))
    (n,) = rd.header("history")
    history = []
    for line in rd.take(int(n)):
        entry = {}
        for kv in line.split():
            k, _, v = kv.partition("=")
            entry[k] = int(v) if k == "epoch" else float(v)
        history.append(entry)

    vocab = Vocabulary(words, entities)
    word_names, ent_names = hyper.table_names()
    expected_rows = {**{n: len(words) for n in word_names}, **{n: len(entities) for n in ent_names}}
    tables, adam = {}, {}
    while True:
        line = rd.next()
        if line == "[end]":
            break
        rd.i -= 1
        if line.startswith("[tensor "):
            name = line[len("[tensor "):line.index("]")]
            rows, cols = map(int, rd.header("tensor"))
            if name not in expected_rows:
                raise CheckpointShapeError(f"unexpected tensor {name}")
            if rows != expected_rows[name] or cols != hyper.dim:
                raise CheckpointShapeError(
                    f"tensor {name} is {rows}x{cols}, expected {expected_rows[name]}x{hyper.dim}")
            tables[name] = rd.matrix(rows, cols, name)
        elif line.startswith("[adam "):
            name = line[len("[adam "):line.index("]")]
            t, rows, cols = map(int, rd.header("adam"))
            if name not in tables or tables[name].shape != (rows, cols):
                raise CheckpointShapeError(f"adam state {name} does not match its tensor")
            adam[name] = AdamState(rd.matrix(rows, cols, name), rd.matrix(rows, cols, name), t)
        else:
            raise CheckpointError(f"unexpected line {line[:40]!r}")
    missing = set(expected_rows) - set(tables)
    if missing:
        raise CheckpointShapeError(f"missing tensors: {', '.join(sorted(missing))}")
    return Checkpoint(hyper, vocab, EntityLexicon(lex), pool, Parameters(tables), adam,
                      history, seed, config)


def load_checkpoint(source) -> Checkpoint:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        text = source.read()
    else:
        raise TypeError("source must be a path or a readable text stream")
    return loads_checkpoint(text)
