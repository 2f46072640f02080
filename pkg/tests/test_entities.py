import pytest
from hypothesis import given
from hypothesis import strategies as st

from kbmemn2n.corpus import SYSTEM, USER, KBFact, Utterance
from kbmemn2n.entities import (PRIORITY_ORDER, EntityLexicon, EntityMention, EntityType,
                               build_lexicon, delexicalize, delexicalize_fact, match_type_augment,
                               merge_lexicons, relexicalize)

LEX = build_lexicon([
    KBFact("RES_A", "R_cuisine", "spanish"), KBFact("RES_A", "R_location", "rome"),
    KBFact("RES_A", "R_location", "london"), KBFact("RES_A", "R_phone", "RES_A_phone"),
    KBFact("RES_A", "R_address", "RES_A_address"), KBFact("RES_A", "R_number", "six"),
    KBFact("RES_A", "R_price", "cheap"), KBFact("RES_A", "R_rating", "7"),
    KBFact("RES_B", "R_cuisine", "french"), KBFact("RES_B", "R_location", "bombay"),
])


def test_priority_order():
    assert [t.name for t in PRIORITY_ORDER] == ["PHONE", "ADDRESS", "NAME", "CUISINE", "LOCATION",
                                                "PRICE", "NUMBER", "RATING"]


def test_attribute_mapping():
    assert EntityType.from_attribute("subject") is EntityType.NAME
    assert EntityType.from_attribute("R_number") is EntityType.NUMBER
    assert EntityType.from_attribute("R_phone") is EntityType.PHONE


def test_build_cuisine():
    lex = build_lexicon([KBFact("RES_A", "R_cuisine", "spanish")])
    assert dict(lex.items()) == {"spanish": EntityType.CUISINE, "RES_A": EntityType.NAME}


def test_build_phone():
    lex = build_lexicon([KBFact("RES_A", "R_phone", "RES_A_phone")])
    assert dict(lex.items()) == {"RES_A_phone": EntityType.PHONE, "RES_A": EntityType.NAME}


def test_build_empty():
    assert len(build_lexicon([])) == 0


def test_conflict_resolved_by_priority():
    # "two" as a party size and, unusually, as a cuisine value: CUISINE outranks NUMBER
    lex = build_lexicon([KBFact("R", "R_number", "two"), KBFact("R", "R_cuisine", "two")])
    assert lex.lookup("two") is EntityType.CUISINE
    lex2 = build_lexicon([KBFact("R", "R_cuisine", "two"), KBFact("R", "R_number", "two")])
    assert lex2.lookup("two") is EntityType.CUISINE


def test_merge():
    a = build_lexicon([KBFact("R", "R_number", "two")])
    b = build_lexicon([KBFact("S", "R_cuisine", "two")])
    assert merge_lexicons(a, b).lookup("two") is EntityType.CUISINE


def test_type_token_collision_rejected():
    with pytest.raises(ValueError):
        EntityLexicon({"CUISINE": EntityType.CUISINE})


def test_delexicalize_london():
    utt = Utterance.from_text(USER, "i'd like to book a table in london")
    template, mentions = delexicalize(utt, LEX)
    assert template.text == "i'd like to book a table in LOCATION"
    assert mentions == [EntityMention("london", EntityType.LOCATION, 0, 7)]


def test_delexicalize_two_entities():
    utt = Utterance.from_text(USER, "may i have a table with spanish cuisine in rome")
    template, mentions = delexicalize(utt, LEX)
    assert template.text == "may i have a table with CUISINE cuisine in LOCATION"
    assert [(m.surface, m.type) for m in mentions] == [("spanish", EntityType.CUISINE),
                                                       ("rome", EntityType.LOCATION)]


def test_delexicalize_plain():
    utt = Utterance.from_text(USER, "hello")
    assert delexicalize(utt, LEX) == (utt, [])


def test_numerals_in_utterances_are_numbers():
    template, mentions = delexicalize(Utterance.from_text(USER, "we are 7"), LEX)
    assert template.tokens[-1] == "NUMBER"


def test_rating_in_fact_line():
    tokens, mentions = delexicalize_fact(KBFact("RES_A", "R_rating", "7"), line=3)
    assert tokens == ("NAME", "R_rating", "RATING")
    assert mentions[1] == EntityMention("7", EntityType.RATING, 3, 2)


utterances = st.lists(st.sampled_from(["i", "want", "spanish", "food", "in", "rome", "RES_A",
                                       "RES_A_phone", "six", "please", "7"]), min_size=1, max_size=8)


@given(utterances)
def test_relexicalize_round_trip(tokens):
    utt = Utterance(USER, tuple(tokens))
    template, mentions = delexicalize(utt, LEX)
    assert relexicalize(template, mentions) == utt
    assert len(mentions) == sum(LEX.lookup(t) is not None for t in tokens)
    assert [m.position for m in mentions] == sorted(m.position for m in mentions)


@given(utterances)
def test_delexicalize_idempotent(tokens):
    template, _ = delexicalize(Utterance(USER, tuple(tokens)), LEX)
    again, mentions = delexicalize(template, LEX)
    assert again == template and mentions == []


def test_match_type_address():
    lex = build_lexicon([KBFact("RES_ABC", "R_address", "RES_ABC_address")])
    cand = Utterance.from_text(SYSTEM, "here it is RES_ABC_address")
    story = delexicalize_fact(KBFact("RES_ABC", "R_address", "RES_ABC_address"))[1]
    assert match_type_augment(cand, story).text == "here it is RES_ABC_address ADDRESS"
    assert lex.lookup("RES_ABC_address") is EntityType.ADDRESS


def test_match_type_no_overlap():
    cand = Utterance.from_text(SYSTEM, "api_call french bombay six cheap")
    ctx = [EntityMention("rome", EntityType.LOCATION)]
    assert match_type_augment(cand, ctx) == cand


def test_match_type_api_call_priority_order():
    cand = Utterance.from_text(SYSTEM, "api_call french bombay six cheap")
    ctx = [EntityMention("cheap", EntityType.PRICE), EntityMention("six", EntityType.NUMBER),
           EntityMention("bombay", EntityType.LOCATION), EntityMention("french", EntityType.CUISINE)]
    out = match_type_augment(cand, ctx)
    assert out.tokens[-4:] == ("CUISINE", "LOCATION", "PRICE", "NUMBER")


def test_match_type_once_per_type():
    cand = Utterance.from_text(SYSTEM, "rome or bombay")
    ctx = [EntityMention("rome", EntityType.LOCATION), EntityMention("bombay", EntityType.LOCATION)]
    assert match_type_augment(cand, ctx).text == "rome or bombay LOCATION"


@given(st.lists(st.sampled_from(["api_call", "spanish", "rome", "six", "cheap", "RES_A"]),
                min_size=1, max_size=6))
def test_match_type_idempotent(tokens):
    ctx = delexicalize(Utterance(USER, ("spanish", "rome", "RES_A")), LEX)[1]
    once = match_type_augment(Utterance(SYSTEM, tuple(tokens)), ctx)
    assert match_type_augment(once, ctx) == once
