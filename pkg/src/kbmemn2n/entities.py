"""KB entity lexicon, delexicalization and match-type features."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping

from .corpus import KBFact, Utterance


class EntityType(enum.Enum):
    # declaration order is the conflict-resolution priority
    PHONE = "R_phone"
    ADDRESS = "R_address"
    NAME = "subject"
    CUISINE = "R_cuisine"
    LOCATION = "R_location"
    PRICE = "R_price"
    NUMBER = "R_number"
    RATING = "R_rating"

    @property
    def priority(self) -> int:
        return _PRIORITY[self]

    @classmethod
    def from_attribute(cls, attribute: str) -> "EntityType":
        return cls(attribute)


PRIORITY_ORDER = tuple(EntityType)
_PRIORITY = {t: i for i, t in enumerate(PRIORITY_ORDER)}
TYPE_TOKENS = frozenset(t.name for t in EntityType)


@dataclass(frozen=True)
class EntityMention:
    surface: str
    type: EntityType
    line: int = 0
    position: int = 0


class EntityLexicon:
    """Surface -> entity type map built from KB facts."""

    def __init__(self, types: Mapping[str, EntityType] | None = None):
        self._types = dict(types or {})
        for surface in self._types:
            if surface in TYPE_TOKENS:
                raise ValueError(f"entity surface {surface!r} collides with a type token")

    def lookup(self, surface: str) -> EntityType | None:
        return self._types.get(surface)

    def surfaces(self) -> list[str]:
        return list(self._types)

    def items(self):
        return sorted(self._types.items(), key=lambda kv: kv[0])

    def __len__(self) -> int:
        return len(self._types)

    def __contains__(self, surface: str) -> bool:
        return surface in self._types

    def __eq__(self, other) -> bool:
        return isinstance(other, EntityLexicon) and self._types == other._types

    def __repr__(self) -> str:
        return f"EntityLexicon({len(self)} entities)"


def _claim(types: dict, surface: str, etype: EntityType) -> None:
    old = types.get(surface)
    if old is None or etype.priority < old.priority:
        types[surface] = etype


def build_lexicon(facts: Iterable[KBFact]) -> EntityLexicon:
    types: dict[str, EntityType] = {}
    for f in facts:
        _claim(types, f.subject, EntityType.NAME)
        _claim(types, f.value, EntityType.from_attribute(f.attribute))
    return EntityLexicon(types)


def merge_lexicons(*lexicons: EntityLexicon) -> EntityLexicon:
    types: dict[str, EntityType] = {}
    for lex in lexicons:
        for surface, etype in lex.items():
            _claim(types, surface, etype)
    return EntityLexicon(types)


def utterance_type(token: str, lexicon: EntityLexicon) -> EntityType | None:
    etype = lexicon.lookup(token)
    if etype is not None and token.isdigit():
        # bare numerals inside utterances are quantities; ratings only come via fact lines
        return EntityType.NUMBER
    return etype


def delexicalize(utt: Utterance, lexicon: EntityLexicon, line: int = 0):
    """Replace entity surfaces by their type tokens.

    Returns ``(template, mentions)``; mentions are in left-to-right order.
    """
    tokens = list(utt.tokens)
    mentions = []
    for pos, tok in enumerate(tokens):
        etype = utterance_type(tok, lexicon)
        if etype is not None:
            tokens[pos] = etype.name
            mentions.append(EntityMention(tok, etype, line, pos))
    return Utterance(utt.speaker, tuple(tokens)), mentions


def delexicalize_fact(fact: KBFact, line: int = 0):
    """Fact line tokens with subject and value typed by their columns."""
    vtype = EntityType.from_attribute(fact.attribute)
    tokens = (EntityType.NAME.name, fact.attribute, vtype.name)
    mentions = [EntityMention(fact.subject, EntityType.NAME, line, 0),
                EntityMention(fact.value, vtype, line, 2)]
    return tokens, mentions


def relexicalize(template: Utterance, mentions: Iterable[EntityMention]) -> Utterance:
    tokens = list(template.tokens)
    for m in mentions:
        if tokens[m.position] != m.type.name:
            raise ValueError(f"position {m.position} holds {tokens[m.position]!r}, not {m.type.name}")
        tokens[m.position] = m.surface
    return Utterance(template.speaker, tuple(tokens))


def match_type_augment(candidate: Utterance, context_entities: Iterable[EntityMention]) -> Utterance:
    """Append one type token per entity type shared by the candidate and the context."""
    by_surface: dict[str, set[EntityType]] = {}
    for m in context_entities:
        by_surface.setdefault(m.surface, set()).add(m.type)
    hits = set()
    for tok in candidate.tokens:
        hits |= by_surface.get(tok, set())
    extra = tuple(t.name for t in PRIORITY_ORDER if t in hits and t.name not in candidate.tokens)
    if not extra:
        return candidate
    return Utterance(candidate.speaker, candidate.tokens + extra)
