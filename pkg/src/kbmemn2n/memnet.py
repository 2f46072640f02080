"""Memory network forward/backward, with optional separate entity memories.

With ``kb_mode`` off this is the plain bag-of-words memory network: every
context line is a memory, the query attends over them for ``hops`` rounds and
candidates are scored against the final state.  With ``kb_mode`` on, entity
surfaces are swapped for type tokens in every line, each mention becomes its
own entity memory with a parallel attention, and candidates get a second score
from their entity tokens.

The batched pass keeps every intermediate so that ``backward`` can produce the
exact gradient of the mean cross-entropy.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .corpus import (SPEAKER_MARKERS, SYSTEM, USER, CandidatePool, Example, KBFact,
                     Utterance, Vocabulary, time_token)
from .entities import (PRIORITY_ORDER, EntityLexicon, EntityMention, delexicalize,
                       delexicalize_fact)
from .numerics import LOG_CLAMP, make_rng, masked_softmax, softmax

N_TYPES = len(PRIORITY_ORDER)


@dataclass
class Hyperparams:
    dim: int = 30
    hops: int = 3
    lr: float = 0.001
    memory_cap: int = 50
    tying: str = "shared"
    use_match_type: bool = False
    use_time_tokens: bool = True
    use_speaker_markers: bool = True
    kb_mode: bool = True
    init_std: float = 0.1

    def __post_init__(self):
        if self.dim < 1 or self.hops < 1 or self.memory_cap < 1:
            raise ValueError("dim, hops and memory_cap must all be >= 1")
        if self.tying not in ("shared", "adjacent"):
            raise ValueError(f"unknown tying scheme {self.tying!r}")

    # table layout -------------------------------------------------------
    def query_table(self) -> str:
        return "A" if self.tying == "shared" else "A0"

    def hop_tables(self, k: int) -> tuple[str, str]:
        return ("A", "C") if self.tying == "shared" else (f"A{k}", f"A{k + 1}")

    def hop_entity_tables(self, k: int) -> tuple[str, str]:
        return ("E_in", "E_out") if self.tying == "shared" else (f"E{k}", f"E{k + 1}")

    def table_names(self) -> tuple[list[str], list[str]]:
        """(word-vocabulary tables, entity-vocabulary tables)."""
        if self.tying == "shared":
            words, ents = ["A", "C"], ["E_in", "E_out"]
        else:
            words = [f"A{k}" for k in range(self.hops + 1)]
            ents = [f"E{k}" for k in range(self.hops + 1)]
        return words + ["W"], ents + ["W_entity"]


class Parameters:
    """Named embedding tables. Row 0 of every table is the pinned PAD row."""

    def __init__(self, tables: dict[str, np.ndarray]):
        self.tables = tables

    @classmethod
    def init(cls, vocab: Vocabulary, hyper: Hyperparams, seed: int = 0) -> "Parameters":
        rng = make_rng(seed, "init")
        word_names, ent_names = hyper.table_names()
        tables = {}
        for name in word_names + ent_names:
            rows = len(vocab.words) if name in word_names else len(vocab.entities)
            t = rng.normal(0.0, hyper.init_std, size=(rows, hyper.dim))
            t[0] = 0.0
            tables[name] = t
        return cls(tables)

    @classmethod
    def zeros_like(cls, other: "Parameters") -> "Parameters":
        return cls({k: np.zeros_like(v) for k, v in other.tables.items()})

    def copy(self) -> "Parameters":
        return Parameters({k: v.copy() for k, v in self.tables.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tables[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self.tables[name] = value

    def names(self) -> list[str]:
        return list(self.tables)

    def __iter__(self):
        return iter(self.tables.items())


# --------------------------------------------------------------------------
# memories


@dataclass(frozen=True)
class StorySlot:
    tokens: tuple[str, ...]
    index: int
    speaker: str


@dataclass
class MemoryBank:
    story: list[StorySlot] = field(default_factory=list)
    entities: list[EntityMention] = field(default_factory=list)


def build_memories(context, lexicon: EntityLexicon, hyper: Hyperparams) -> MemoryBank:
    """Story slots for the most recent ``memory_cap`` lines plus their entity mentions.

    Entity mentions are collected in both modes (match-type features need them);
    story tokens are delexicalized only in kb mode.
    """
    lines = list(context)[-hyper.memory_cap:]
    n = len(lines)
    bank = MemoryBank()
    for j, line in enumerate(lines):
        if isinstance(line, KBFact):
            speaker = "fact"
            toks, mentions = delexicalize_fact(line, j)
            if not hyper.kb_mode:
                toks = line.tokens
        else:
            speaker = line.speaker
            template, mentions = delexicalize(line, lexicon, j)
            toks = template.tokens if hyper.kb_mode else line.tokens
        toks = tuple(toks)
        if hyper.use_speaker_markers:
            toks += (SPEAKER_MARKERS[speaker],)
        if hyper.use_time_tokens:
            toks += (time_token(n - j),)
        bank.story.append(StorySlot(toks, j, speaker))
        bank.entities.extend(mentions)
    return bank


def encode_bow(token_ids, table: np.ndarray) -> np.ndarray:
    """Sum of embedding rows; an empty list gives the zero vector."""
    out = np.zeros(table.shape[1])
    for i in token_ids:
        out += table[i]
    return out


def attend(u, in_encodings, out_encodings):
    """Dot-product attention. Returns ``(probs, output)``."""
    u = np.asarray(u, dtype=np.float64)
    if len(in_encodings) != len(out_encodings):
        raise ValueError("input and output memories differ in length")
    if len(in_encodings) == 0:
        return np.zeros(0), np.zeros_like(u)
    m = np.asarray(in_encodings, dtype=np.float64)
    c = np.asarray(out_encodings, dtype=np.float64)
    p = softmax(m @ u)
    return p, p @ c


# --------------------------------------------------------------------------
# encoding examples to integer arrays


@dataclass
class EncodedExample:
    story: list[np.ndarray]           # word ids per story slot
    entities: np.ndarray              # entity ids, one per mention
    query: np.ndarray                 # word ids
    candidates: np.ndarray | None     # pool ids, None = whole pool in order
    match: list[tuple[int, int]]      # (candidate position, type index) pairs
    gold: int                         # position of the gold answer among candidates


@dataclass
class PoolEncoding:
    words: sp.csr_matrix        # candidates x word vocab (W channel)
    entities: sp.csr_matrix     # candidates x entity vocab (W_entity channel)
    containing: dict            # entity surface -> pool ids whose tokens contain it
    type_ids: np.ndarray        # word ids of the type tokens, priority order

    @property
    def size(self) -> int:
        return self.words.shape[0]


def _incidence(rows: list[list[int]], width: int) -> sp.csr_matrix:
    r = [i for i, ids in enumerate(rows) for _ in ids]
    c = [j for ids in rows for j in ids]
    data = np.ones(len(c))
    return sp.csr_matrix((data, (r, c)), shape=(len(rows), width))


def encode_pool(pool: CandidatePool, vocab: Vocabulary, lexicon: EntityLexicon,
                hyper: Hyperparams) -> PoolEncoding:
    word_rows, ent_rows = [], []
    containing: dict[str, list[int]] = {}
    for n, cand in enumerate(pool.candidates):
        template, mentions = delexicalize(cand, lexicon)
        toks = template.tokens if hyper.kb_mode else cand.tokens
        word_rows.append([vocab.word_id(t) for t in toks])
        ent_rows.append([vocab.entity_id(m.surface, m.type) for m in mentions] if hyper.kb_mode else [])
        for m in mentions:
            ids = containing.setdefault(m.surface, [])
            if not ids or ids[-1] != n:
                ids.append(n)
    type_ids = np.array([vocab.word_id(t.name) for t in PRIORITY_ORDER])
    return PoolEncoding(_incidence(word_rows, len(vocab.words)),
                        _incidence(ent_rows, len(vocab.entities)),
                        {k: np.array(v) for k, v in containing.items()}, type_ids)


_TYPE_INDEX = {t: i for i, t in enumerate(PRIORITY_ORDER)}


def encode_example(example: Example, vocab: Vocabulary, lexicon: EntityLexicon,
                   hyper: Hyperparams, pool_enc: PoolEncoding) -> EncodedExample:
    bank = build_memories(example.context, lexicon, hyper)
    story = [np.array([vocab.word_id(t) for t in slot.tokens], dtype=np.int64) for slot in bank.story]
    if hyper.kb_mode:
        entities = np.array([vocab.entity_id(m.surface, m.type) for m in bank.entities], dtype=np.int64)
        qtemplate, qmentions = delexicalize(example.query, lexicon)
        qtoks = qtemplate.tokens
    else:
        entities = np.zeros(0, dtype=np.int64)
        qmentions = delexicalize(example.query, lexicon)[1]
        qtoks = example.query.tokens
    query = np.array([vocab.word_id(t) for t in qtoks], dtype=np.int64)

    n_pool = pool_enc.size
    ids = example.candidate_ids
    if len(ids) == n_pool and ids[0] == 0 and ids[-1] == n_pool - 1 and ids == tuple(range(n_pool)):
        candidates, position = None, None
    else:
        candidates = np.array(ids, dtype=np.int64)
        position = {c: i for i, c in enumerate(ids)}

    match: set[tuple[int, int]] = set()
    if hyper.use_match_type:
        for m in bank.entities + qmentions:
            for n in pool_enc.containing.get(m.surface, ()):
                pos = n if position is None else position.get(int(n))
                if pos is not None:
                    match.add((int(pos), _TYPE_INDEX[m.type]))
    return EncodedExample(story, entities, query, candidates, sorted(match), example.gold_position)


# --------------------------------------------------------------------------
# batched pass


@dataclass
class Batch:
    size: int
    slots: int
    story: sp.csr_matrix        # (size*slots) x V
    story_mask: np.ndarray      # size x slots
    ent_ids: np.ndarray         # size x E
    ent_mask: np.ndarray
    query: sp.csr_matrix        # size x V
    candidates: np.ndarray | None   # size x N pool ids, None = whole pool
    match: np.ndarray | None        # size x N x types
    gold: np.ndarray


def make_batch(encoded: list[EncodedExample], vocab_size: int, pool_size: int,
               use_match_type: bool = False) -> Batch:
    B = len(encoded)
    M = max((len(e.story) for e in encoded), default=0)
    E = max((len(e.entities) for e in encoded), default=0)
    rows, cols = [], []
    smask = np.zeros((B, M), dtype=bool)
    ent_ids = np.zeros((B, E), dtype=np.int64)
    emask = np.zeros((B, E), dtype=bool)
    qrows, qcols = [], []
    for b, e in enumerate(encoded):
        for j, ids in enumerate(e.story):
            rows.append(np.full(len(ids), b * M + j))
            cols.append(ids)
            smask[b, j] = True
        ent_ids[b, :len(e.entities)] = e.entities
        emask[b, :len(e.entities)] = True
        qrows.append(np.full(len(e.query), b))
        qcols.append(e.query)

    def inc(r, c, shape):
        r = np.concatenate(r) if r else np.zeros(0, dtype=np.int64)
        c = np.concatenate(c) if c else np.zeros(0, dtype=np.int64)
        return sp.csr_matrix((np.ones(len(c)), (r, c)), shape=shape)

    story = inc(rows, cols, (B * M, vocab_size))
    query = inc(qrows, qcols, (B, vocab_size))

    global_flags = {e.candidates is None for e in encoded}
    if len(global_flags) > 1:
        raise ValueError("cannot mix whole-pool and per-example candidate sets in one batch")
    if encoded and encoded[0].candidates is None:
        candidates, N = None, pool_size
    else:
        sizes = {len(e.candidates) for e in encoded}
        if len(sizes) > 1:
            raise ValueError("per-example candidate sets must have equal size within a batch")
        candidates = np.stack([e.candidates for e in encoded]) if encoded else np.zeros((0, 0), int)
        N = candidates.shape[1]
    if N == 0:
        raise ValueError("candidate set is empty")
    match = None
    if use_match_type:
        match = np.zeros((B, N, N_TYPES))
        for b, e in enumerate(encoded):
            for pos, t in e.match:
                match[b, pos, t] = 1.0
    gold = np.array([e.gold for e in encoded], dtype=np.int64)
    return Batch(B, M, story, smask, ent_ids, emask, query, candidates, match, gold)


class Pass:
    """One forward pass over a batch; call ``backward`` for gradients."""

    def __init__(self, params: Parameters, hyper: Hyperparams, pool: PoolEncoding, batch: Batch):
        self.params, self.hyper, self.pool, self.batch = params, hyper, pool, batch
        T = params.tables
        B, M = batch.size, batch.slots
        p = hyper.dim
        self._story_enc: dict[str, np.ndarray] = {}
        self._ent_enc: dict[str, np.ndarray] = {}

        u = batch.query @ T[hyper.query_table()]
        self.u1 = u
        self.hops = []
        for k in range(hyper.hops):
            ain, cout = hyper.hop_tables(k)
            m, c = self.story_encoding(ain), self.story_encoding(cout)
            probs = masked_softmax(np.einsum("bmp,bp->bm", m, u), batch.story_mask)
            o_story = np.einsum("bm,bmp->bp", probs, c)
            hop = {"u": u, "p": probs, "o_story": o_story}
            if hyper.kb_mode:
                ein, eout = hyper.hop_entity_tables(k)
                e, f = self.entity_encoding(ein), self.entity_encoding(eout)
                pe = masked_softmax(np.einsum("bep,bp->be", e, u), batch.ent_mask)
                o_ent = np.einsum("be,bep->bp", pe, f)
                o = o_story + o_ent
                hop.update(p_entity=pe, o_entities=o_ent)
            else:
                o = o_story
            hop["o"] = o
            self.hops.append(hop)
            u = u + o
        self.h = u

        self.Zw = pool.words @ T["W"]
        self.Ze = pool.entities @ T["W_entity"] if hyper.kb_mode else None
        if batch.candidates is None:
            s_story = u @ self.Zw.T
            s_ent = u @ self.Ze.T if hyper.kb_mode else None
        else:
            s_story = np.einsum("bnp,bp->bn", self.Zw[batch.candidates], u)
            s_ent = np.einsum("bnp,bp->bn", self.Ze[batch.candidates], u) if hyper.kb_mode else None
        if batch.match is not None:
            self.WT = T["W"][pool.type_ids]
            s_story = s_story + np.einsum("bnt,bt->bn", batch.match, u @ self.WT.T)
        self.s_story, self.s_entities = s_story, s_ent
        self.s = s_story + s_ent if hyper.kb_mode else s_story
        z = np.exp(self.s - self.s.max(axis=1, keepdims=True))
        self.probs = z / z.sum(axis=1, keepdims=True)

    def story_encoding(self, name: str) -> np.ndarray:
        if name not in self._story_enc:
            B, M = self.batch.size, self.batch.slots
            self._story_enc[name] = np.asarray(self.batch.story @ self.params[name]).reshape(
                B, M, self.hyper.dim)
        return self._story_enc[name]

    def entity_encoding(self, name: str) -> np.ndarray:
        if name not in self._ent_enc:
            self._ent_enc[name] = self.params[name][self.batch.ent_ids]
        return self._ent_enc[name]

    def loss(self) -> float:
        picked = self.probs[np.arange(self.batch.size), self.batch.gold]
        return float(np.mean(-np.log(np.maximum(picked, LOG_CLAMP))))

    def predictions(self) -> np.ndarray:
        """Winning positions within each example's candidate set (first max on ties)."""
        return np.argmax(self.s, axis=1)

    def backward(self) -> Parameters:
        hyper, batch, T = self.hyper, self.batch, self.params.tables
        B = batch.size
        grads = Parameters.zeros_like(self.params)
        G = grads.tables

        ds = self.probs.copy()
        ds[np.arange(B), batch.gold] -= 1.0
        ds /= B
        h = self.h

        if batch.candidates is None:
            dh = ds @ self.Zw
            dZ = ds.T @ h
            if hyper.kb_mode:
                dh += ds @ self.Ze
        else:
            Z = self.Zw[batch.candidates]
            if hyper.kb_mode:
                Z = Z + self.Ze[batch.candidates]
            dh = np.einsum("bn,bnp->bp", ds, Z)
            dZ = np.zeros_like(self.Zw)
            np.add.at(dZ, batch.candidates.ravel(),
                      (ds[:, :, None] * h[:, None, :]).reshape(-1, h.shape[1]))
        G["W"] += self.pool.words.T @ dZ
        if hyper.kb_mode:
            G["W_entity"] += self.pool.entities.T @ dZ
        if batch.match is not None:
            dhT = np.einsum("bnt,bn->bt", batch.match, ds)
            dh += dhT @ self.WT
            G["W"][self.pool.type_ids] += dhT.T @ h

        d_story = {name: np.zeros_like(v) for name, v in self._story_enc.items()}
        d_ent = {name: np.zeros_like(v) for name, v in self._ent_enc.items()}
        du = dh
        for k in reversed(range(hyper.hops)):
            hop = self.hops[k]
            u = hop["u"]
            ain, cout = hyper.hop_tables(k)
            du_prev = du.copy()
            probs = hop["p"]
            c, m = self._story_enc[cout], self._story_enc[ain]
            d_story[cout] += probs[:, :, None] * du[:, None, :]
            dp = np.einsum("bmp,bp->bm", c, du)
            dlogit = probs * (dp - np.sum(probs * dp, axis=1, keepdims=True))
            du_prev += np.einsum("bm,bmp->bp", dlogit, m)
            d_story[ain] += dlogit[:, :, None] * u[:, None, :]
            if hyper.kb_mode:
                ein, eout = hyper.hop_entity_tables(k)
                pe = hop["p_entity"]
                e, f = self._ent_enc[ein], self._ent_enc[eout]
                d_ent[eout] += pe[:, :, None] * du[:, None, :]
                dpe = np.einsum("bep,bp->be", f, du)
                dlogit_e = pe * (dpe - np.sum(pe * dpe, axis=1, keepdims=True))
                du_prev += np.einsum("be,bep->bp", dlogit_e, e)
                d_ent[ein] += dlogit_e[:, :, None] * u[:, None, :]
            du = du_prev

        G[hyper.query_table()] += batch.query.T @ du
        for name, d in d_story.items():
            G[name] += batch.story.T @ d.reshape(-1, d.shape[-1])
        for name, d in d_ent.items():
            np.add.at(G[name], batch.ent_ids.ravel(), d.reshape(-1, d.shape[-1]))
        for g in G.values():
            g[0] = 0.0
        return grads


# --------------------------------------------------------------------------
# per-example API


@dataclass
class HopTrace:
    u: np.ndarray
    p: np.ndarray
    p_entity: np.ndarray | None
    o_story: np.ndarray
    o_entities: np.ndarray | None
    o: np.ndarray


@dataclass
class ForwardTrace:
    hops: list[HopTrace]
    s_story: np.ndarray
    s_entities: np.ndarray | None
    s: np.ndarray
    probs: np.ndarray
    candidate_ids: tuple[int, ...]


def trace_from_pass(ps: Pass, b: int, encoded: EncodedExample) -> ForwardTrace:
    n_story = len(encoded.story)
    n_ent = len(encoded.entities)
    hops = []
    for hop in ps.hops:
        hops.append(HopTrace(
            u=hop["u"][b].copy(), p=hop["p"][b, :n_story].copy(),
            p_entity=hop["p_entity"][b, :n_ent].copy() if "p_entity" in hop else None,
            o_story=hop["o_story"][b].copy(),
            o_entities=hop["o_entities"][b].copy() if "o_entities" in hop else None,
            o=hop["o"][b].copy()))
    if encoded.candidates is None:
        ids = tuple(range(ps.pool.size))
    else:
        ids = tuple(int(i) for i in encoded.candidates)
    return ForwardTrace(hops, ps.s_story[b].copy(),
                        None if ps.s_entities is None else ps.s_entities[b].copy(),
                        ps.s[b].copy(), ps.probs[b].copy(), ids)


def predict(trace: ForwardTrace) -> int:
    """Pool id of the best-scoring candidate (lowest position wins ties)."""
    return trace.candidate_ids[int(np.argmax(trace.s))]


class MemoryNetwork:
    """Bundles hyperparameters, vocabularies, lexicon, candidate pool and parameters."""

    def __init__(self, hyper: Hyperparams, vocab: Vocabulary, lexicon: EntityLexicon,
                 pool: CandidatePool, params: Parameters | None = None, seed: int = 0):
        self.hyper, self.vocab, self.lexicon, self.pool = hyper, vocab, lexicon, pool
        self.params = params if params is not None else Parameters.init(vocab, hyper, seed)
        self.pool_enc = encode_pool(pool, vocab, lexicon, hyper)

    def encode(self, example: Example) -> EncodedExample:
        return encode_example(example, self.vocab, self.lexicon, self.hyper, self.pool_enc)

    def batch(self, encoded: list[EncodedExample]) -> Batch:
        return make_batch(encoded, len(self.vocab.words), self.pool_enc.size, self.hyper.use_match_type)

    def run(self, encoded: list[EncodedExample], params: Parameters | None = None) -> Pass:
        return Pass(params or self.params, self.hyper, self.pool_enc, self.batch(encoded))

    def forward(self, example: Example) -> ForwardTrace:
        enc = self.encode(example)
        return trace_from_pass(self.run([enc]), 0, enc)

    def predict(self, example: Example) -> int:
        return predict(self.forward(example))

    def predict_encoded(self, encoded: list[EncodedExample], batch_size: int = 64) -> list[int]:
        # batches need one candidate layout, so group by (whole pool | set size)
        groups: dict = {}
        for i, e in enumerate(encoded):
            groups.setdefault(None if e.candidates is None else len(e.candidates), []).append(i)
        out = [0] * len(encoded)
        for idx in groups.values():
            for start in range(0, len(idx), batch_size):
                chunk = idx[start:start + batch_size]
                ps = self.run([encoded[i] for i in chunk])
                for i, pos in zip(chunk, ps.predictions()):
                    cands = encoded[i].candidates
                    out[i] = int(pos) if cands is None else int(cands[pos])
        return out


def forward(example: Example, model: MemoryNetwork) -> ForwardTrace:
    return model.forward(example)
