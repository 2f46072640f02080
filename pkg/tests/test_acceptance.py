"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (visible under
``pytest -v``) before asserting, so a run log doubles as the scorecard.
"""
import time

import numpy as np
import pytest

from kbmemn2n.cli import run
from kbmemn2n.corpus import parse_dialogs, serialize_dialogs
from kbmemn2n.dialoggen import GenConfig, generate_corpus, user_template_inventory
from kbmemn2n.evalkit import per_response_accuracy, unique_user_utterances
from kbmemn2n.memnet import Hyperparams
from kbmemn2n.numerics import finite_diff_grad
from kbmemn2n.trainer import (TrainConfig, accuracy, build_model, dumps_checkpoint,
                              load_checkpoint, save_checkpoint, train)
from oracle import max_trace_error, oracle_forward, random_instance
from tiny import table_loss, tiny_examples, tiny_model

SEEDS = (0, 1, 2)


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def fit(corpus, task, kb_mode, match_type, seed, max_epochs=200, patience=10):
    """Train on the train split with early stopping on validation; return test accuracy."""
    hyper = Hyperparams(dim=30, hops=3, lr=0.001, kb_mode=kb_mode, use_match_type=match_type)
    model = build_model(corpus.dialogs(), corpus.pool, corpus.lexicon, hyper, seed=seed)
    tr, va, te = (corpus.examples(s, task) for s in ("train", "validation", "test"))
    train(model, tr, va, TrainConfig(max_epochs=max_epochs, patience=patience, seed=seed, hyper=hyper))
    return accuracy(model, [model.encode(e) for e in te], [e.gold for e in te])


def mean(xs):
    return sum(xs) / len(xs)


# --------------------------------------------------------------------------


def test_criterion_1_gradients(verdict):
    start = time.perf_counter()
    worst = 0.0
    for kb_mode in (False, True):
        for match_type in (False, True):
            model = tiny_model(kb_mode=kb_mode, match_type=match_type)
            assert (len(model.vocab.words), len(model.vocab.entities)) == (12, 6)
            encoded = [model.encode(e) for e in tiny_examples()]
            grads = model.run(encoded).backward()
            for name, table in model.params:
                numeric = finite_diff_grad(table_loss(model, encoded, name), table)
                numeric[0] = 0.0
                excess = np.abs(grads[name] - numeric) - (1e-6 + 1e-4 * np.abs(numeric))
                worst = max(worst, float(excess.max()))
    elapsed = time.perf_counter() - start
    ok = worst <= 0 and elapsed < 30
    verdict(1, ok, f"max excess over tolerance {worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_2_oracle(verdict):
    start = time.perf_counter()
    worst = 0.0
    for i in range(100):
        ex, model = random_instance(np.random.default_rng(1000 + i))
        worst = max(worst, max_trace_error(model.forward(ex), oracle_forward(ex, model)))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-9 and elapsed < 10
    verdict(2, ok, f"max |model - oracle| {worst:.2e} over 100 instances, {elapsed:.2f}s")
    assert ok


def test_criterion_3_reduction(verdict, small_corpus):
    hyper_plain = Hyperparams(dim=16, kb_mode=False)
    hyper_kb = Hyperparams(dim=16, kb_mode=True)
    # an empty lexicon and fact-free tasks (1, 2) leave the entity memory empty
    from kbmemn2n.entities import EntityLexicon
    plain = build_model(small_corpus.dialogs(), small_corpus.pool, EntityLexicon(), hyper_plain, seed=4)
    kb = build_model(small_corpus.dialogs(), small_corpus.pool, EntityLexicon(), hyper_kb, seed=4)
    kb.params["W_entity"][:] = 0.0
    for name in ("A", "C", "W"):
        kb.params[name] = plain.params[name].copy()
    examples = small_corpus.examples("test", 1) + small_corpus.examples("test", 2)
    equal = 0
    for ex in examples:
        enc = kb.encode(ex)
        assert len(enc.entities) == 0
        a, b = plain.forward(ex), kb.forward(ex)
        equal += np.array_equal(a.s, b.s) and np.array_equal(a.probs, b.probs)
    ok = equal == len(examples)
    verdict(3, ok, f"{equal}/{len(examples)} examples bit-identical")
    assert ok


def test_criterion_4_normalization(verdict):
    corpus = generate_corpus(GenConfig(seed=8, train=40, validation=5, test=5))
    examples = [e for t in corpus.config.tasks for e in corpus.examples("train", t)][:1000]
    assert len(examples) == 1000
    worst = 0.0
    for kb_mode, mt in ((False, False), (True, False), (True, True)):
        model = build_model(corpus.dialogs(), corpus.pool, corpus.lexicon,
                            Hyperparams(kb_mode=kb_mode, use_match_type=mt, init_std=0.3), seed=1)
        for ex in examples:
            tr = model.forward(ex)
            sums = [tr.probs.sum()] + [h.p.sum() for h in tr.hops if h.p.size]
            sums += [h.p_entity.sum() for h in tr.hops if h.p_entity is not None and h.p_entity.size]
            worst = max(worst, max(abs(x - 1) for x in sums))
    ok = worst < 1e-6
    verdict(4, ok, f"max |sum - 1| {worst:.2e} over 1000 examples x 3 configurations")
    assert ok


def test_criterion_5_overfit(verdict):
    corpus = generate_corpus(GenConfig(seed=0, tasks=(1,), train=50, validation=0, test=0))
    examples = corpus.examples("train", 1)
    results = {}
    start = time.process_time()
    for kb_mode in (False, True):
        hyper = Hyperparams(dim=30, hops=3, lr=0.001, kb_mode=kb_mode)
        model = build_model(corpus.dialogs(), corpus.pool, corpus.lexicon, hyper, seed=0)
        # train == eval: early stopping disabled so the run may use all 200 epochs
        train(model, examples, examples, TrainConfig(max_epochs=200, patience=200, hyper=hyper))
        results["KB-memN2N" if kb_mode else "memN2N"] = accuracy(
            model, [model.encode(e) for e in examples], [e.gold for e in examples])
    cpu = time.process_time() - start
    ok = all(v >= 99.0 for v in results.values()) and cpu < 120
    verdict(5, ok, ", ".join(f"{k} {v:.2f}%" for k, v in results.items()) + f", {cpu:.0f}s CPU")
    assert ok


def test_criterion_6_trends(verdict):
    start = time.process_time()
    acc = {}
    for seed in SEEDS:
        base = dict(seed=seed, train=500, validation=100, test=100)
        t1 = generate_corpus(GenConfig(tasks=(1,), **base))
        acc.setdefault("a memN2N", []).append(fit(t1, 1, False, False, seed))
        acc.setdefault("a KB", []).append(fit(t1, 1, True, False, seed))
        oov = generate_corpus(GenConfig(tasks=(4,), heldout_fraction=0.25, **base))
        acc.setdefault("b memN2N", []).append(fit(oov, 4, False, False, seed))
        acc.setdefault("b memN2N+match", []).append(fit(oov, 4, False, True, seed))
        iv = generate_corpus(GenConfig(tasks=(4,), **base))
        acc.setdefault("c memN2N", []).append(fit(iv, 4, False, False, seed))
        acc.setdefault("c KB", []).append(fit(iv, 4, True, False, seed))
    cpu = time.process_time() - start
    m = {k: mean(v) for k, v in acc.items()}
    tol = 5.0   # the stated tolerance band of (b)
    a = m["a memN2N"] >= 95 and m["a KB"] >= 95
    b = m["b memN2N+match"] >= 95 - tol and m["b memN2N"] <= 75 + tol
    c = m["c KB"] >= m["c memN2N"]
    ok = a and b and c and cpu < 15 * 60
    detail = "; ".join(f"{k} {v:.1f} ({'/'.join(f'{x:.1f}' for x in acc[k])})" for k, v in m.items())
    verdict(6, ok, f"(a) {'ok' if a else 'no'} (b) {'ok' if b else 'no'} (c) {'ok' if c else 'no'}; "
                   f"{detail}; {cpu:.0f}s CPU")
    assert ok


def test_criterion_7_dual_channel(verdict):
    gaps, rows = [], []
    for seed in SEEDS:
        corpus = generate_corpus(GenConfig(seed=seed, tasks=(5,), mode="dstc", templates=8, fillers=8,
                                           train=100, validation=50, test=100))
        plain = fit(corpus, 5, False, False, seed)
        kb = fit(corpus, 5, True, False, seed)
        gaps.append(kb - plain)
        rows.append(f"seed {seed}: memN2N {plain:.1f} KB {kb:.1f}")
    gap = mean(gaps)
    ok = gap >= 5.0
    verdict(7, ok, f"mean KB - memN2N gap {gap:+.2f} points (need >= +5); " + "; ".join(rows))
    assert ok


def test_criterion_8_determinism(verdict, tmp_path):
    outputs = []
    for rep in ("a", "b"):
        d = tmp_path / rep
        assert run(["gen-data", "--out", str(d / "data"), "--seed", "21", "--train", "20",
                    "--validation", "5", "--test", "5", "--tasks", "1,5", "--mode", "dstc"]) == 0
        assert run(["train", "--data", str(d / "data"), "--out", str(d / "m.ckpt"), "--dim", "12",
                    "--epochs", "5", "--seed", "3"]) == 0
        assert run(["eval", "--ckpt", str(d / "m.ckpt"), "--data", str(d / "data"),
                    "--format", "kv", "--report", str(d / "report.txt")]) == 0
        files = sorted(p for p in d.rglob("*") if p.is_file())
        outputs.append({p.relative_to(d): p.read_bytes() for p in files})
    same = outputs[0] == outputs[1]
    verdict(8, same, f"{len(outputs[0])} files (corpus, checkpoint, history, report) byte-identical"
            if same else "outputs differ between runs")
    assert same


def test_criterion_9_round_trips(verdict, tmp_path):
    corpus = generate_corpus(GenConfig(seed=13, train=160, validation=20, test=20))
    dialogs = corpus.dialogs()
    assert len(dialogs) == 1000
    text = serialize_dialogs(dialogs)
    again = parse_dialogs(text, corpus.pool)
    dialogs_ok = ([d.items for d in again] == [d.items for d in dialogs]
                  and serialize_dialogs(again) == text)

    model = tiny_model(match_type=True)
    ex = tiny_examples()
    ckpt, _ = train(model, ex, ex, TrainConfig(max_epochs=3, batch_size=1))
    path = tmp_path / "fixture.ckpt"
    save_checkpoint(ckpt, path)
    loaded = load_checkpoint(path)
    a, b = ckpt.model().forward(ex[0]), loaded.model().forward(ex[0])
    ckpt_ok = (np.array_equal(a.s, b.s) and np.array_equal(a.probs, b.probs)
               and dumps_checkpoint(loaded) == path.read_text())
    ok = dialogs_ok and ckpt_ok
    verdict(9, ok, f"1000 dialogs round-trip {'ok' if dialogs_ok else 'no'}; "
                   f"checkpoint forward bit-equal {'ok' if ckpt_ok else 'no'}")
    assert ok


def test_criterion_10_metric_oracle(verdict):
    acc = per_response_accuracy(["a", "b", "c", "d"], ["a", "b", "c", "x"])
    cfg = GenConfig(seed=0, tasks=(1,), train=400, validation=0, test=0)
    corpus = generate_corpus(cfg)
    unique = unique_user_utterances(corpus.dialogs(), corpus.lexicon)
    grammar = len(user_template_inventory(1, cfg))
    ok = acc == 75.0 and unique == grammar
    verdict(10, ok, f"fixture accuracy {acc!r}; unique user utterances {unique} vs grammar {grammar}")
    assert ok
