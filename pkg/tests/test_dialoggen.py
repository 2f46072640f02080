from collections import Counter

import numpy as np
import pytest

from kbmemn2n.corpus import FactBlock, KBFact, Turn, serialize_dialogs
from kbmemn2n.dialoggen import (CUISINES, GenConfig, GenerationError, dialog_cell, generate_corpus,
                                generate_task, heldout_cells, make_candidate_pool,
                                restaurant_name, restaurants_from_facts, sample_kb,
                                sample_restaurants, split_corpus, user_template_inventory)
from kbmemn2n.entities import build_lexicon, delexicalize
from kbmemn2n.evalkit import unique_user_utterances
from kbmemn2n.numerics import make_rng


def test_config_validation():
    for bad in ({"cuisines": 0}, {"templates": 9}, {"mode": "x"}, {"tasks": (6,)},
                {"heldout_fraction": 1.0}, {"fillers": 9}, {"train": -1}, {"restaurants": 9}):
        with pytest.raises(GenerationError):
            GenConfig(**bad)


def test_config_from_dict_and_file(tmp_path):
    cfg = GenConfig.from_dict({"seed": "4", "tasks": "1,3", "mode": "dstc"})
    assert cfg.seed == 4 and cfg.tasks == (1, 3) and cfg.mode == "dstc"
    with pytest.raises(GenerationError, match="unknown config keys"):
        GenConfig.from_dict({"colour": 1})
    p = tmp_path / "gen.cfg"
    p.write_text("# comment\ncuisines = 2\nlocations=3\n")
    assert GenConfig.from_file(p).cuisines == 2
    p.write_text(cfg.to_json())
    assert GenConfig.from_file(p) == cfg


def test_restaurant_names():
    assert [restaurant_name(i) for i in (0, 1, 25, 26)] == ["RES_A", "RES_B", "RES_Z", "RES_AA"]


def test_seven_facts_per_restaurant():
    kb = sample_kb(GenConfig(seed=1))
    per = Counter(f.subject for f in kb)
    assert set(per.values()) == {7}
    attrs = {f.attribute for f in kb if f.subject == "RES_A"}
    assert attrs == {"R_phone", "R_cuisine", "R_address", "R_location", "R_number", "R_price", "R_rating"}


def test_kb_covers_inventory():
    cfg = GenConfig(seed=2)
    rs = sample_restaurants(cfg)
    assert len(rs) == cfg.cuisines * cfg.locations * cfg.restaurants
    for slot, values in cfg.inventory.items():
        assert {getattr(r, slot) for r in rs} == set(values)
    cells = Counter(r.cell for r in rs)
    assert set(cells.values()) == {cfg.restaurants}
    for cell in cells:
        ratings = [r.rating for r in rs if r.cell == cell]
        assert len(set(ratings)) == len(ratings)
    assert restaurants_from_facts(sample_kb(cfg)) == rs


def test_task1_api_call():
    cfg = GenConfig(seed=0)
    for d in generate_task(1, cfg, 20):
        last = d.turns[-1]
        assert last.user.text == "<silence>"
        toks = last.system.tokens
        assert toks[0] == "api_call" and len(toks) == 5
        inv = cfg.inventory
        assert toks[1] in inv["cuisine"] and toks[2] in inv["location"]
        assert toks[3] in inv["number"] and toks[4] in inv["price"]


def test_task1_mentions_match_api_call():
    cfg = GenConfig(seed=5)
    for d in generate_task(1, cfg, 30):
        said = {tok for t in d.turns for tok in t.user.tokens}
        assert set(d.turns[-1].system.tokens[1:]) <= said


def test_task3_proposals_follow_rating():
    cfg = GenConfig(seed=1)
    rs = {r.name: r for r in sample_restaurants(cfg)}
    for d in generate_task(3, cfg, 30):
        proposed = [t.system.tokens[-1] for t in d.turns if t.system.text.startswith("what do you think")]
        ratings = [rs[n].rating for n in proposed]
        assert ratings == sorted(ratings, reverse=True)
        block = next(it for it in d.items if isinstance(it, FactBlock))
        best = max((rs[f.subject] for f in block.facts), key=lambda r: r.rating)
        assert proposed[0] == best.name


def test_task4_answers_from_facts():
    cfg = GenConfig(seed=1)
    for d in generate_task(4, cfg, 20):
        facts = {f.value for f in d.facts}
        for t in d.turns:
            if t.system.text.startswith("here it is"):
                assert t.system.tokens[-1] in facts


def test_task5_structure():
    cfg = GenConfig(seed=1)
    for d in generate_task(5, cfg, 20):
        calls = [t.system for t in d.turns if t.system.tokens[0] == "api_call"]
        assert len(calls) == 2 and calls[0] != calls[1]
        assert d.turns[-1].system.text == "you're welcome"


def test_pool_closure(small_corpus):
    pool = small_corpus.pool
    for d in small_corpus.dialogs():
        for t in d.turns:
            pool.index(t.system)   # raises if missing
    assert len(set(c.tokens for c in pool.candidates)) == len(pool)


def test_pool_deterministic_order():
    cfg = GenConfig(seed=7, train=5, validation=2, test=2)
    a, b = generate_corpus(cfg), generate_corpus(cfg)
    assert a.pool == b.pool
    assert make_candidate_pool(a.dialogs()) == a.pool


def test_corpus_determinism():
    cfg = GenConfig(seed=11, train=8, validation=2, test=2, mode="dstc")
    a, b = generate_corpus(cfg), generate_corpus(cfg)
    assert serialize_dialogs(a.dialogs()) == serialize_dialogs(b.dialogs())
    assert a.sidecars == b.sidecars and a.kb == b.kb
    c = generate_corpus(GenConfig(seed=12, train=8, validation=2, test=2, mode="dstc"))
    assert serialize_dialogs(c.dialogs()) != serialize_dialogs(a.dialogs())


def test_dialogs_independent_of_count():
    cfg = GenConfig(seed=3)
    assert generate_task(2, cfg, 5) == generate_task(2, cfg, 12)[:5]


def test_dstc_same_template_bias():
    cfg = GenConfig(seed=0, train=150, validation=0, test=0, tasks=(1, 3), mode="dstc")
    corpus = generate_corpus(cfg)
    lex = corpus.lexicon
    tmpl = [delexicalize(c, lex)[0].tokens for c in corpus.pool.candidates]
    size = Counter(tmpl)
    same = total = 0
    for task in cfg.tasks:
        for rec in corpus.sidecars["train"][task]:
            gold = rec.candidates[rec.gold_position]
            if size[tmpl[gold]] - 1 < 9:     # bias only holds while same-template candidates remain
                continue
            for c in rec.candidates:
                if c != gold:
                    total += 1
                    same += tmpl[c] == tmpl[gold]
    assert total > 1000
    assert abs(same / total - 0.5) <= 0.05


def test_dstc_sets_have_ten_distinct():
    corpus = generate_corpus(GenConfig(seed=2, train=10, validation=2, test=2, mode="dstc"))
    for split in ("train", "validation", "test"):
        for task, recs in corpus.sidecars[split].items():
            assert len(recs) == sum(len(d.turns) for d in corpus.splits[split][task])
            for r in recs:
                assert len(set(r.candidates)) == 10


def test_split_ratios():
    cfg = GenConfig(seed=1)
    dialogs = generate_task(1, cfg, 100)
    parts = split_corpus(dialogs, cfg, make_rng(0, "split"))
    assert [len(parts[s]) for s in ("train", "validation", "test")] == [80, 10, 10]
    ids = sorted(d.id for p in parts.values() for d in p)
    assert ids == list(range(100))
    with pytest.raises(GenerationError):
        split_corpus(dialogs[:2], cfg, make_rng(0, "split"))


def test_heldout_split():
    cfg = GenConfig(seed=1, heldout_fraction=0.25)
    reserved = heldout_cells(cfg)
    assert len(reserved) == 4
    parts = split_corpus(generate_task(1, cfg, 200), cfg, make_rng(0, "split"))
    assert all(dialog_cell(d) in reserved for d in parts["test"])
    assert not any(dialog_cell(d) in reserved for s in ("train", "validation") for d in parts[s])


def test_heldout_corpus():
    cfg = GenConfig(seed=2, train=30, validation=5, test=10, tasks=(1, 3, 4, 5), heldout_fraction=0.25)
    corpus = generate_corpus(cfg)
    reserved = heldout_cells(cfg)
    for task in cfg.tasks:
        assert all(dialog_cell(d) in reserved for d in corpus.splits["test"][task])
        for split in ("train", "validation"):
            assert not any(dialog_cell(d) in reserved for d in corpus.splits[split][task])
    test_calls = {t.system for d in corpus.dialogs("test", 1) for t in d.turns
                  if t.system.tokens[0] == "api_call"}
    train_calls = {t.system for d in corpus.dialogs("train", 1) for t in d.turns
                   if t.system.tokens[0] == "api_call"}
    assert test_calls and not test_calls & train_calls


def test_heldout_everything_rejected():
    with pytest.raises(GenerationError):
        heldout_cells(GenConfig(cuisines=2, locations=2, prices=2, party_sizes=2, heldout_fraction=0.9))


@pytest.mark.parametrize("task", [1, 2, 3, 4, 5])
def test_user_lines_within_grammar(task):
    cfg = GenConfig(seed=4, templates=3, fillers=2)
    inv = user_template_inventory(task, cfg)
    lex = build_lexicon(sample_kb(cfg))
    for d in generate_task(task, cfg, 40):
        for t in d.turns:
            assert delexicalize(t.user, lex)[0].tokens in inv


@pytest.mark.parametrize("templates", [1, 2])
def test_unique_utterances_reach_grammar(templates):
    cfg = GenConfig(seed=0, templates=templates, train=400, validation=0, test=0, tasks=(1,))
    corpus = generate_corpus(cfg)
    assert unique_user_utterances(corpus.dialogs(), corpus.lexicon) == len(user_template_inventory(1, cfg))


def test_fillers_widen_variety():
    base = GenConfig(seed=0, train=200, validation=0, test=0, tasks=(1,))
    plain = generate_corpus(base)
    padded = generate_corpus(GenConfig(**{**base.__dict__, "fillers": 4}))
    assert (unique_user_utterances(padded.dialogs(), padded.lexicon)
            > unique_user_utterances(plain.dialogs(), plain.lexicon))


def test_generation_errors():
    tiny = GenConfig(cuisines=1, locations=1, prices=1, party_sizes=1, restaurants=1)
    with pytest.raises(GenerationError, match="two restaurants"):
        generate_task(3, tiny, 1)
    with pytest.raises(GenerationError, match="at least 10"):
        generate_corpus(GenConfig(**{**tiny.__dict__, "mode": "dstc", "tasks": (1,), "train": 1,
                                     "validation": 1, "test": 1}))
