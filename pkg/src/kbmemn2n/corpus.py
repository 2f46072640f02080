"""Dialog corpora: data model, file reader/writer, candidate pools, examples, vocabularies.

Dialog file layout (bAbI-dialog compatible)::

    1 hello\thello what can i help you with today
    2 RES_A R_cuisine spanish
    3 may i have a table at RES_A\tgreat let me do the reservation

Line numbers restart at 1 for every dialog, turn lines carry one tab between
the user and system text, fact lines carry no tab, and a blank line separates
dialogs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

USER = "user"
SYSTEM = "system"

KB_ATTRIBUTES = ("R_phone", "R_cuisine", "R_address", "R_location", "R_number", "R_price", "R_rating")

PAD = "<pad>"
UNK = "<unk>"
SPEAKER_MARKERS = {USER: "<user>", SYSTEM: "<system>", "fact": "<kb>"}


class FormatError(ValueError):
    """Malformed corpus, candidate or sidecar text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def time_token(age: int) -> str:
    return f"<t{age}>"


def tokenize(text: str) -> tuple[str, ...]:
    return tuple(text.split())


@dataclass(frozen=True)
class Utterance:
    speaker: str
    tokens: tuple[str, ...]

    def __post_init__(self):
        if self.speaker not in (USER, SYSTEM):
            raise ValueError(f"unknown speaker {self.speaker!r}")
        if not self.tokens:
            raise ValueError("utterance needs at least one token")
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"bad token {tok!r}")

    @classmethod
    def from_text(cls, speaker: str, text: str) -> "Utterance":
        return cls(speaker, tokenize(text))

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class KBFact:
    subject: str
    attribute: str
    value: str

    def __post_init__(self):
        if self.attribute not in KB_ATTRIBUTES:
            raise ValueError(f"unknown KB attribute {self.attribute!r}")

    @property
    def tokens(self) -> tuple[str, str, str]:
        return (self.subject, self.attribute, self.value)


@dataclass(frozen=True)
class Turn:
    user: Utterance
    system: Utterance


@dataclass(frozen=True)
class FactBlock:
    facts: tuple[KBFact, ...]


Item = Union[Turn, FactBlock]
ContextLine = Union[Utterance, KBFact]


@dataclass(frozen=True)
class Dialog:
    id: int
    items: tuple[Item, ...]
    # one 10-entry candidate id tuple per turn (DSTC mode only)
    candidate_sets: tuple[tuple[int, ...], ...] | None = None

    @property
    def turns(self) -> list[Turn]:
        return [it for it in self.items if isinstance(it, Turn)]

    @property
    def facts(self) -> list[KBFact]:
        return [f for it in self.items if isinstance(it, FactBlock) for f in it.facts]

    def lines(self) -> list[ContextLine]:
        out: list[ContextLine] = []
        for it in self.items:
            if isinstance(it, Turn):
                out.extend((it.user, it.system))
            else:
                out.extend(it.facts)
        return out


@dataclass(frozen=True)
class CandidatePool:
    candidates: tuple[Utterance, ...] = ()
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        index = {}
        for i, c in enumerate(self.candidates):
            if c.tokens in index:
                raise ValueError(f"duplicate candidate {c.text!r}")
            index[c.tokens] = i
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.candidates)

    def __getitem__(self, i: int) -> Utterance:
        return self.candidates[i]

    def __contains__(self, utt) -> bool:
        return _tokens_of(utt) in self._index

    def index(self, utt) -> int:
        try:
            return self._index[_tokens_of(utt)]
        except KeyError:
            raise KeyError(f"unknown candidate {' '.join(_tokens_of(utt))!r}") from None


def _tokens_of(utt) -> tuple[str, ...]:
    if isinstance(utt, Utterance):
        return utt.tokens
    if isinstance(utt, str):
        return tokenize(utt)
    return tuple(utt)


@dataclass(frozen=True)
class Example:
    context: tuple[ContextLine, ...]
    query: Utterance
    gold: int
    candidate_ids: tuple[int, ...]
    task: int = 0
    dialog_id: int = 0
    turn: int = 0

    def __post_init__(self):
        if self.gold not in self.candidate_ids:
            raise ValueError("gold candidate missing from candidate set")

    @property
    def gold_position(self) -> int:
        return self.candidate_ids.index(self.gold)


# --------------------------------------------------------------------------
# reading and writing


def _lines(text) -> list[str]:
    if isinstance(text, str):
        return text.splitlines()
    return [ln.rstrip("\n").rstrip("\r") for ln in text]


def parse_dialogs(text, pool: CandidatePool | None = None, first_id: int = 0) -> list[Dialog]:
    """Parse dialog-file text (a string or an iterable of lines).

    When ``pool`` is given every system utterance must be one of its entries.
    """
    dialogs: list[Dialog] = []
    items: list[Item] = []
    facts: list[KBFact] = []
    expected = 1

    def close():
        nonlocal items, facts, expected
        if facts:
            items.append(FactBlock(tuple(facts)))
            facts = []
        if items:
            if not any(isinstance(it, Turn) for it in items):
                raise FormatError(f"dialog {first_id + len(dialogs)} has no turns")
            dialogs.append(Dialog(first_id + len(dialogs), tuple(items)))
        items = []
        expected = 1

    for lineno, raw in enumerate(_lines(text), start=1):
        if not raw.strip():
            close()
            continue
        head, _, rest = raw.partition(" ")
        if not head.isdigit():
            raise FormatError(f"missing line number in {raw!r}", lineno)
        if int(head) != expected:
            raise FormatError(f"expected line number {expected}, found {head}", lineno)
        expected += 1
        if "\t" in rest:
            user_text, system_text = rest.split("\t", 1)
            if "\t" in system_text:
                raise FormatError("more than one tab in turn line", lineno)
            try:
                user = Utterance.from_text(USER, user_text)
                system = Utterance.from_text(SYSTEM, system_text)
            except ValueError as exc:
                raise FormatError(str(exc), lineno) from None
            if pool is not None and system not in pool:
                raise FormatError(f"unknown candidate {system.text!r}", lineno)
            if facts:
                items.append(FactBlock(tuple(facts)))
                facts = []
            items.append(Turn(user, system))
        else:
            parts = rest.split()
            if len(parts) != 3:
                raise FormatError(f"fact line needs 3 fields, got {len(parts)}", lineno)
            try:
                facts.append(KBFact(*parts))
            except ValueError as exc:
                raise FormatError(str(exc), lineno) from None
    close()
    return dialogs


def serialize_dialogs(dialogs: Iterable[Dialog]) -> str:
    out: list[str] = []
    for d in dialogs:
        n = 1
        for it in d.items:
            if isinstance(it, Turn):
                out.append(f"{n} {it.user.text}\t{it.system.text}")
                n += 1
            else:
                for f in it.facts:
                    out.append(f"{n} {f.subject} {f.attribute} {f.value}")
                    n += 1
        out.append("")
    return "".join(line + "\n" for line in out)


def parse_facts(text) -> list[KBFact]:
    """Read a bare KB file: numbered fact lines, blank lines ignored."""
    facts = []
    for lineno, raw in enumerate(_lines(text), start=1):
        if not raw.strip():
            continue
        parts = raw.split()
        if parts[0].isdigit():
            parts = parts[1:]
        if len(parts) != 3:
            raise FormatError(f"fact line needs 3 fields, got {len(parts)}", lineno)
        try:
            facts.append(KBFact(*parts))
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from None
    return facts


def serialize_facts(facts: Iterable[KBFact]) -> str:
    return "".join(f"1 {f.subject} {f.attribute} {f.value}\n" for f in facts)


def load_candidates(text) -> CandidatePool:
    seen: dict[tuple[str, ...], int] = {}
    cands = []
    for lineno, raw in enumerate(_lines(text), start=1):
        if not raw.strip():
            continue
        head, _, rest = raw.partition(" ")
        if not head.isdigit() or not rest.strip():
            raise FormatError(f"candidate line must look like '1 <text>': {raw!r}", lineno)
        utt = Utterance.from_text(SYSTEM, rest)
        if utt.tokens in seen:
            raise FormatError(f"duplicate candidate {utt.text!r} (first seen on line {seen[utt.tokens]})",
                              lineno)
        seen[utt.tokens] = lineno
        cands.append(utt)
    return CandidatePool(tuple(cands))


def serialize_candidates(pool: CandidatePool) -> str:
    return "".join(f"1 {c.text}\n" for c in pool.candidates)


# DSTC candidate sidecar: dialog_id \t turn_index \t c0,...,c9 \t gold_position

@dataclass(frozen=True)
class SidecarRecord:
    dialog_id: int
    turn: int
    candidates: tuple[int, ...]
    gold_position: int


def parse_sidecar(text) -> list[SidecarRecord]:
    records = []
    for lineno, raw in enumerate(_lines(text), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 4:
            raise FormatError("sidecar record needs 4 tab-separated fields", lineno)
        try:
            cands = tuple(int(c) for c in parts[2].split(","))
            rec = SidecarRecord(int(parts[0]), int(parts[1]), cands, int(parts[3]))
        except ValueError:
            raise FormatError(f"non-integer field in {raw!r}", lineno) from None
        if len(cands) != 10 or len(set(cands)) != 10:
            raise FormatError("sidecar record needs 10 distinct candidates", lineno)
        if not 0 <= rec.gold_position < 10:
            raise FormatError("gold position outside 0-9", lineno)
        records.append(rec)
    return records


def serialize_sidecar(records: Iterable[SidecarRecord]) -> str:
    return "".join(
        f"{r.dialog_id}\t{r.turn}\t{','.join(map(str, r.candidates))}\t{r.gold_position}\n"
        for r in records)


def attach_candidate_sets(dialogs: Sequence[Dialog], records: Iterable[SidecarRecord],
                          pool: CandidatePool) -> list[Dialog]:
    by_key = {(r.dialog_id, r.turn): r for r in records}
    out = []
    for d in dialogs:
        sets = []
        for t, turn in enumerate(d.turns):
            rec = by_key.get((d.id, t))
            if rec is None:
                raise FormatError(f"no candidate set for dialog {d.id} turn {t}")
            if rec.candidates[rec.gold_position] != pool.index(turn.system):
                raise FormatError(f"gold position of dialog {d.id} turn {t} does not point at the system line")
            sets.append(rec.candidates)
        out.append(Dialog(d.id, d.items, tuple(sets)))
    return out


# --------------------------------------------------------------------------
# examples and vocabularies


def make_examples(dialogs: Iterable[Dialog], pool: CandidatePool, mode: str = "babi",
                  task: int = 0) -> list[Example]:
    """One example per system turn; context holds every earlier line."""
    if mode not in ("babi", "dstc"):
        raise ValueError(f"unknown mode {mode!r}")
    everything = tuple(range(len(pool)))
    examples = []
    for d in dialogs:
        if mode == "dstc" and (d.candidate_sets is None or len(d.candidate_sets) != len(d.turns)):
            raise ValueError(f"dialog {d.id} lacks per-turn 10-candidate sets")
        context: list[ContextLine] = []
        t = 0
        for it in d.items:
            if isinstance(it, FactBlock):
                context.extend(it.facts)
                continue
            gold = pool.index(it.system)
            if mode == "dstc":
                cands = tuple(d.candidate_sets[t])
                if len(cands) != 10:
                    raise ValueError(f"dialog {d.id} turn {t}: expected 10 candidates, got {len(cands)}")
            else:
                cands = everything
            examples.append(Example(tuple(context), it.user, gold, cands, task, d.id, t))
            context.extend((it.user, it.system))
            t += 1
    return examples


@dataclass(frozen=True)
class Vocabulary:
    words: tuple[str, ...]
    entities: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_w", {w: i for i, w in enumerate(self.words)})
        object.__setattr__(self, "_e", {w: i for i, w in enumerate(self.entities)})

    def word_id(self, tok: str) -> int:
        return self._w.get(tok, self._w[UNK])

    def entity_id(self, surface: str, etype=None) -> int:
        i = self._e.get(surface)
        if i is None:
            i = self._e.get(f"UNK_{etype.name}" if etype is not None else UNK, 0)
        return i

    def has_word(self, tok: str) -> bool:
        return tok in self._w

    def has_entity(self, surface: str) -> bool:
        return surface in self._e


def reserved_tokens(memory_cap: int = 50) -> list[str]:
    return [PAD, UNK, *SPEAKER_MARKERS.values(), *(time_token(i) for i in range(1, memory_cap + 1))]


def build_vocab(dialogs: Iterable[Dialog], pool: CandidatePool, lexicon, memory_cap: int = 50,
                delexicalize: bool = True) -> Vocabulary:
    """Word and entity vocabularies.

    With ``delexicalize`` entity surfaces are left out of the word vocabulary
    (their type tokens stand in); without it they are ordinary words, which is
    what the plain memory network needs.
    """
    from .entities import EntityType

    type_tokens = [t.name for t in EntityType]
    seen: set[str] = set()
    for d in dialogs:
        for line in d.lines():
            seen.update(line.tokens)
    for c in pool.candidates:
        seen.update(c.tokens)
    if delexicalize:
        seen = {t for t in seen if lexicon.lookup(t) is None}
    head = reserved_tokens(memory_cap) + type_tokens
    words = head + sorted(seen - set(head))
    entities = [PAD] + [f"UNK_{t.name}" for t in EntityType] + sorted(lexicon.surfaces())
    return Vocabulary(tuple(words), tuple(entities))
