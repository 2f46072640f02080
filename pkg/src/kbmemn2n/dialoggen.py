"""Synthetic restaurant-reservation dialogs (tasks 1-5), KBs and candidate pools.

Everything is a pure function of the config: each dialog draws from its own
generator derived from ``(seed, task, split, index)``, so dialogs can be
produced in any order and still come out identical.
"""
from __future__ import annotations

import json
import string
from dataclasses import asdict, dataclass, field, fields
from itertools import product
from pathlib import Path

import numpy as np

from .corpus import (SYSTEM, USER, CandidatePool, Dialog, FactBlock, KBFact, SidecarRecord,
                     Turn, Utterance, make_examples, tokenize)
from .entities import EntityLexicon, build_lexicon, delexicalize
from .numerics import make_rng

CUISINES = ["british", "cantonese", "french", "indian", "italian", "japanese", "korean",
            "spanish", "thai", "vietnamese", "mexican", "greek"]
LOCATIONS = ["bombay", "london", "madrid", "paris", "rome", "tokyo", "bangkok", "beijing",
             "hanoi", "seoul", "berlin", "dublin"]
PRICES = ["cheap", "moderate", "expensive"]
PARTY_SIZES = ["two", "four", "six", "eight", "three", "five", "seven", "ten"]

SLOTS = ("cuisine", "location", "number", "price")
SPLITS = ("train", "validation", "test")
MAX_RATING = 8

SILENCE = "<silence>"

# system side: a closed set, so the candidate pool stays finite
S_GREET = "hello what can i help you with today"
S_ON_IT = "i'm on it"
S_ASK = {
    "cuisine": "any preference on a type of cuisine",
    "location": "where should it be",
    "number": "how many people would be in your party",
    "price": "which price range are looking for",
}
S_LOOKING = "ok let me look into some options for you"
S_UPDATE = "sure is there anything else to update"
S_WELCOME = "you're welcome"
S_ANOTHER = "sure let me find an other option for you"
S_BOOK = "great let me do the reservation"
S_ANYTHING = "is there anything i can help you with"


def s_api_call(prefs: dict) -> str:
    return f"api_call {prefs['cuisine']} {prefs['location']} {prefs['number']} {prefs['price']}"


def s_propose(name: str) -> str:
    return f"what do you think of this option: {name}"


def s_here(value: str) -> str:
    return f"here it is {value}"


# user side, one list per intent; a config uses the first `templates` of each.
# Slots are written as their type tokens.
U_GREET = ["hello", "hi", "good morning", "hey there", "hello there", "good evening",
           "hi there", "greetings"]
U_FRAMES = ["can you book a table", "may i have a table", "i'd like to book a table",
            "can you make a restaurant reservation", "i would like a table", "please book a table",
            "we want to reserve a table", "could you reserve a table"]
_SLOT_PHRASE = {"cuisine": "with CUISINE food", "location": "in LOCATION",
                "number": "for NUMBER people", "price": "in a PRICE price range"}
_FRAME_ORDERS = [("number", "cuisine", "location", "price"), ("price", "number", "cuisine", "location"),
                 ("cuisine", "location", "number", "price"), ("location", "price", "cuisine", "number")]
U_ANSWER = {
    "cuisine": ["with CUISINE food", "CUISINE food please", "i love CUISINE food", "CUISINE cuisine",
                "how about CUISINE food", "i'd like CUISINE food", "some CUISINE food", "make it CUISINE"],
    "location": ["in LOCATION", "LOCATION please", "somewhere in LOCATION", "it should be in LOCATION",
                 "how about LOCATION", "in LOCATION please", "LOCATION would be nice", "the city is LOCATION"],
    "number": ["for NUMBER people please", "we will be NUMBER", "NUMBER people", "a table for NUMBER",
               "for NUMBER", "there will be NUMBER of us", "NUMBER guests", "party of NUMBER"],
    "price": ["i am looking for a PRICE restaurant", "in a PRICE price range please", "PRICE please",
              "something PRICE", "a PRICE one", "PRICE price range", "let's go PRICE", "make it PRICE"],
}
U_UPDATE = {
    "cuisine": ["instead could it be with CUISINE food", "actually i would prefer CUISINE food",
                "can you change to CUISINE cuisine", "i changed my mind i want CUISINE food",
                "make that CUISINE food instead", "switch to CUISINE food", "rather CUISINE food",
                "could we do CUISINE food instead"],
    "location": ["instead could it be in LOCATION", "actually i would prefer in LOCATION",
                 "can you change to LOCATION", "i changed my mind i want LOCATION",
                 "make that LOCATION instead", "switch to LOCATION", "rather in LOCATION",
                 "could we do LOCATION instead"],
    "number": ["instead could it be for NUMBER people", "actually we will be NUMBER",
               "can you change to NUMBER people", "i changed my mind we are NUMBER",
               "make that NUMBER people instead", "switch to NUMBER people", "rather for NUMBER",
               "could we do NUMBER people instead"],
    "price": ["instead could it be in a PRICE price range", "actually i would prefer in a PRICE price range",
              "can you change to a PRICE place", "i changed my mind i want something PRICE",
              "make that PRICE instead", "switch to PRICE price range", "rather PRICE",
              "could we do PRICE instead"],
}
U_DENY = ["no", "no thanks", "nope", "no that's all", "nothing else", "no thank you",
          "no it's fine", "no that will do"]
U_THANKS = ["thank you", "thanks", "you rock", "thank you very much", "thanks a lot",
            "that's great thank you", "perfect thanks", "cheers"]
U_REJECT = ["no this does not work for me", "do you have something else", "no i don't like that",
            "i'd prefer another option", "not that one", "something else please",
            "no another one please", "i don't like it"]
U_ACCEPT = ["i love that", "let's do it", "that looks great", "it's perfect", "sounds good",
            "yes please", "i like that", "great choice"]
U_ASK = {
    "phone": ["may i have the phone number of the restaurant", "what is the phone number",
              "do you have its phone number", "can you give me the phone number",
              "could i get the phone number", "what is their phone number", "i need the phone number",
              "phone number please"],
    "address": ["do you have its address", "may i have the address of the restaurant",
                "what is the address", "can you give me the address", "could i get the address",
                "where is it located", "i need the address", "address please"],
}
# optional conversational padding around a user line (first `fillers` of each list)
FILLER_PREFIX = ["um", "well", "so", "hmm", "oh", "alright", "ok", "right"]
FILLER_SUFFIX = ["if possible", "i guess", "for me", "then", "i think", "by the way", "right away",
                 "if you can"]

U_RESERVE_AT = ["may i have a table at NAME", "can you book a table at NAME", "i'd like to book at NAME",
                "reserve a table at NAME please", "book NAME for me", "i want a table at NAME",
                "a table at NAME please", "let's eat at NAME"]


class GenerationError(ValueError):
    pass


@dataclass
class GenConfig:
    seed: int = 0
    cuisines: int = 4
    locations: int = 4
    prices: int = 3
    party_sizes: int = 4
    restaurants: int = 3          # restaurants per (cuisine, location) cell
    tasks: tuple[int, ...] = (1, 2, 3, 4, 5)
    train: int = 100              # dialogs per task and split
    validation: int = 20
    test: int = 20
    templates: int = 2            # user templates per intent
    fillers: int = 0              # optional prefix/suffix phrases wrapped around user lines
    mode: str = "babi"            # babi | dstc
    heldout_fraction: float = 0.0

    def __post_init__(self):
        self.tasks = tuple(int(t) for t in self.tasks)
        limits = {"cuisines": len(CUISINES), "locations": len(LOCATIONS), "prices": len(PRICES),
                  "party_sizes": len(PARTY_SIZES), "restaurants": MAX_RATING, "templates": 8}
        if not 0 <= self.fillers <= len(FILLER_PREFIX):
            raise GenerationError(f"fillers must be in 0..{len(FILLER_PREFIX)}, got {self.fillers}")
        for name, top in limits.items():
            val = getattr(self, name)
            if not 1 <= val <= top:
                raise GenerationError(f"{name} must be in 1..{top}, got {val}")
        for name in ("train", "validation", "test"):
            if getattr(self, name) < 0:
                raise GenerationError(f"{name} must be non-negative")
        if self.mode not in ("babi", "dstc"):
            raise GenerationError(f"mode must be babi or dstc, got {self.mode!r}")
        if not set(self.tasks) <= {1, 2, 3, 4, 5}:
            raise GenerationError(f"tasks must be drawn from 1..5, got {self.tasks}")
        if not 0.0 <= self.heldout_fraction < 1.0:
            raise GenerationError("heldout_fraction must be in [0, 1)")
        if self.cuisines * self.locations < max(self.prices, self.party_sizes):
            raise GenerationError("need at least max(prices, party_sizes) cuisine x location cells "
                                  "so that every value reaches the KB")

    @property
    def inventory(self) -> dict[str, list[str]]:
        return {"cuisine": CUISINES[:self.cuisines], "location": LOCATIONS[:self.locations],
                "number": PARTY_SIZES[:self.party_sizes], "price": PRICES[:self.prices]}

    def to_json(self) -> str:
        d = asdict(self)
        d["tasks"] = list(self.tasks)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise GenerationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        out = {}
        for k, v in d.items():
            default = known[k].default
            if k == "tasks":
                out[k] = tuple(int(x) for x in (v.split(",") if isinstance(v, str) else v))
            elif isinstance(default, bool):
                out[k] = v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                out[k] = int(v)
            elif isinstance(default, float):
                out[k] = float(v)
            else:
                out[k] = str(v)
        return cls(**out)

    @classmethod
    def from_file(cls, path) -> "GenConfig":
        """JSON object, or ``key=value`` lines (``#`` comments allowed)."""
        text = Path(path).read_text(encoding="utf-8")
        if text.lstrip().startswith("{"):
            return cls.from_dict(json.loads(text))
        d = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise GenerationError(f"expected key=value, got {raw!r}")
            k, v = line.split("=", 1)
            d[k.strip()] = v.strip()
        return cls.from_dict(d)


# --------------------------------------------------------------------------
# knowledge base


def restaurant_name(i: int) -> str:
    letters = ""
    i += 1
    while i:
        i, r = divmod(i - 1, 26)
        letters = string.ascii_uppercase[r] + letters
    return f"RES_{letters}"


@dataclass(frozen=True)
class Restaurant:
    name: str
    cuisine: str
    location: str
    number: str
    price: str
    rating: int

    @property
    def phone(self) -> str:
        return f"{self.name}_phone"

    @property
    def address(self) -> str:
        return f"{self.name}_address"

    @property
    def cell(self) -> tuple[str, str]:
        return (self.cuisine, self.location)

    @property
    def prefs(self) -> dict:
        return {"cuisine": self.cuisine, "location": self.location, "number": self.number, "price": self.price}

    def facts(self) -> list[KBFact]:
        return [KBFact(self.name, "R_phone", self.phone), KBFact(self.name, "R_cuisine", self.cuisine),
                KBFact(self.name, "R_address", self.address), KBFact(self.name, "R_location", self.location),
                KBFact(self.name, "R_number", self.number), KBFact(self.name, "R_price", self.price),
                KBFact(self.name, "R_rating", str(self.rating))]


def sample_restaurants(config: GenConfig, rng: np.random.Generator | None = None) -> list[Restaurant]:
    """Every (cuisine, location) cell gets ``config.restaurants`` restaurants sharing
    party size and price, with distinct ratings."""
    rng = rng if rng is not None else make_rng(config.seed, "kb")
    inv = config.inventory
    cells = list(product(inv["cuisine"], inv["location"]))
    order = rng.permutation(len(cells))
    numbers = [inv["number"][i] for i in rng.permutation(len(inv["number"]))]
    prices = [inv["price"][i] for i in rng.permutation(len(inv["price"]))]
    out = []
    for k, ci in enumerate(order):
        cuisine, location = cells[ci]
        number, price = numbers[k % len(numbers)], prices[k % len(prices)]
        ratings = rng.choice(np.arange(1, MAX_RATING + 1), size=config.restaurants, replace=False)
        for r in ratings:
            out.append(Restaurant(restaurant_name(len(out)), cuisine, location, number, price, int(r)))
    return out


def sample_kb(config: GenConfig, rng: np.random.Generator | None = None) -> list[KBFact]:
    return [f for r in sample_restaurants(config, rng) for f in r.facts()]


def restaurants_from_facts(facts) -> list[Restaurant]:
    rows: dict[str, dict] = {}
    for f in facts:
        rows.setdefault(f.subject, {})[f.attribute] = f.value
    return [Restaurant(name, a["R_cuisine"], a["R_location"], a["R_number"], a["R_price"],
                       int(a["R_rating"])) for name, a in rows.items()]


# --------------------------------------------------------------------------
# dialogs


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


class _Builder:
    def __init__(self, config: GenConfig, rng: np.random.Generator):
        self.T = config.templates
        self.F = config.fillers
        self.rng = rng
        self.items: list = []

    def fill(self, template: str, values: dict) -> str:
        out = []
        for tok in template.split():
            out.append(values.get(tok, tok))
        return " ".join(out)

    def say(self, user: str, system: str) -> None:
        self.items.append(Turn(Utterance.from_text(USER, user), Utterance.from_text(SYSTEM, system)))

    def pad(self, line: str) -> str:
        """Wrap a user line in optional filler phrases (no rng draws when fillers are off)."""
        if not self.F:
            return line
        if self.rng.random() < 0.5:
            line = _pick(self.rng, FILLER_PREFIX[:self.F]) + " " + line
        if self.rng.random() < 0.5:
            line = line + " " + _pick(self.rng, FILLER_SUFFIX[:self.F])
        return line

    def user(self, intent: list[str], values: dict | None = None) -> str:
        return self.pad(self.fill(_pick(self.rng, intent[:self.T]), values or {}))

    def facts(self, restaurants) -> None:
        self.items.append(FactBlock(tuple(f for r in restaurants for f in r.facts())))

    def slot_values(self, prefs: dict) -> dict:
        return {"CUISINE": prefs["cuisine"], "LOCATION": prefs["location"],
                "NUMBER": prefs["number"], "PRICE": prefs["price"]}

    def request(self, prefs: dict, given) -> str:
        i = int(self.rng.integers(self.T))
        parts = [U_FRAMES[i]] + [_SLOT_PHRASE[s] for s in _FRAME_ORDERS[i % 4] if s in given]
        return self.pad(self.fill(" ".join(parts), self.slot_values(prefs)))

    def collect(self, prefs: dict, all_given: bool = False) -> None:
        """Greeting, preference collection and the api_call line."""
        self.say(self.user(U_GREET), S_GREET)
        given = set(SLOTS) if all_given else {s for s in SLOTS if self.rng.random() < 0.5}
        self.say(self.request(prefs, given), S_ON_IT)
        user = SILENCE
        for s in SLOTS:
            if s not in given:
                self.say(user, S_ASK[s])
                user = self.user(U_ANSWER[s], self.slot_values(prefs))
        self.say(user, S_LOOKING)

    def update(self, prefs: dict, slot: str, value: str) -> dict:
        new = dict(prefs)
        new[slot] = value
        self.say(self.user(U_UPDATE[slot], self.slot_values(new)), S_UPDATE)
        self.say(self.user(U_DENY), S_LOOKING)
        self.say(SILENCE, s_api_call(new))
        return new

    def propose(self, options: list[Restaurant]) -> Restaurant:
        ranked = sorted(options, key=lambda r: -r.rating)
        n_reject = int(self.rng.integers(len(ranked)))
        self.say(SILENCE, s_propose(ranked[0].name))
        for i in range(n_reject):
            self.say(self.user(U_REJECT), S_ANOTHER)
            self.say(SILENCE, s_propose(ranked[i + 1].name))
        accepted = ranked[n_reject]
        self.say(self.user(U_ACCEPT), S_BOOK)
        return accepted


@dataclass
class Constraints:
    """Which (cuisine, location) cells a dialog may use; None means any."""
    cells: frozenset | None = None

    def allows(self, cell) -> bool:
        return self.cells is None or tuple(cell) in self.cells


def _sample_prefs(config, rng, constraints: Constraints) -> dict:
    inv = config.inventory
    cells = [c for c in product(inv["cuisine"], inv["location"]) if constraints.allows(c)]
    if not cells:
        raise GenerationError("no (cuisine, location) cell allowed")
    cuisine, location = _pick(rng, cells)
    return {"cuisine": cuisine, "location": location,
            "number": _pick(rng, inv["number"]), "price": _pick(rng, inv["price"])}


def _updates(config, prefs: dict, constraints: Constraints) -> list[tuple[str, str]]:
    out = []
    for slot in SLOTS:
        for v in config.inventory[slot]:
            if v == prefs[slot]:
                continue
            new = dict(prefs, **{slot: v})
            if constraints.allows((new["cuisine"], new["location"])):
                out.append((slot, v))
    return out


def _cells(restaurants, constraints: Constraints, min_size: int = 1) -> list[list[Restaurant]]:
    groups: dict = {}
    for r in restaurants:
        groups.setdefault(r.cell, []).append(r)
    return [g for c, g in groups.items() if constraints.allows(c) and len(g) >= min_size]


def generate_dialog(task: int, config: GenConfig, rng: np.random.Generator,
                    restaurants: list[Restaurant], constraints: Constraints | None = None,
                    dialog_id: int = 0) -> Dialog:
    constraints = constraints or Constraints()
    b = _Builder(config, rng)
    if task == 1:
        prefs = _sample_prefs(config, rng, constraints)
        b.collect(prefs)
        b.say(SILENCE, s_api_call(prefs))
    elif task == 2:
        prefs = _sample_prefs(config, rng, constraints)
        options = _updates(config, prefs, constraints)
        if not options:
            raise GenerationError("task 2 needs a slot with at least two values")
        b.collect(prefs)
        b.say(SILENCE, s_api_call(prefs))
        b.update(prefs, *_pick(rng, options))
        b.say(b.user(U_THANKS), S_WELCOME)
    elif task == 3:
        cells = _cells(restaurants, constraints, 2)
        if not cells:
            raise GenerationError("task 3 needs a cell with at least two restaurants")
        cell = _pick(rng, cells)
        order = rng.permutation(len(cell))
        b.facts([cell[i] for i in order])
        b.collect(cell[0].prefs, all_given=True)
        b.propose(cell)
    elif task == 4:
        pool = [r for g in _cells(restaurants, constraints) for r in g]
        if not pool:
            raise GenerationError("task 4 needs at least one restaurant")
        r = _pick(rng, pool)
        b.facts([r])
        b.say(b.user(U_GREET), S_GREET)
        b.say(b.user(U_RESERVE_AT, {"NAME": r.name}), S_BOOK)
        asks = [["phone"], ["address"], ["phone", "address"], ["address", "phone"]][int(rng.integers(4))]
        for what in asks:
            b.say(b.user(U_ASK[what]), s_here(r.phone if what == "phone" else r.address))
    elif task == 5:
        cells = _cells(restaurants, constraints, 2)
        if not cells:
            raise GenerationError("task 5 needs a cell with at least two restaurants")
        cell = _pick(rng, cells)
        final = cell[0].prefs
        options = _updates(config, final, constraints)
        if not options:
            raise GenerationError("task 5 needs a slot with at least two values")
        slot, old = _pick(rng, options)
        initial = dict(final, **{slot: old})
        b.collect(initial)
        b.say(SILENCE, s_api_call(initial))
        b.update(initial, slot, final[slot])
        order = rng.permutation(len(cell))
        b.facts([cell[i] for i in order])
        accepted = b.propose(cell)
        what = "phone" if rng.random() < 0.5 else "address"
        b.say(b.user(U_ASK[what]), s_here(accepted.phone if what == "phone" else accepted.address))
        b.say(b.user(U_THANKS), S_ANYTHING)
        b.say(b.user(U_DENY), S_WELCOME)
    else:
        raise GenerationError(f"unknown task {task}")
    return Dialog(dialog_id, tuple(b.items))


def generate_task(task: int, config: GenConfig, n: int, restaurants: list[Restaurant] | None = None,
                  constraints: Constraints | None = None, stream: str = "train") -> list[Dialog]:
    """``n`` dialogs for one task, ids 0..n-1, each from its own derived generator."""
    restaurants = restaurants if restaurants is not None else sample_restaurants(config)
    return [generate_dialog(task, config, make_rng(config.seed, "dialog", task, stream, i),
                            restaurants, constraints, i)
            for i in range(n)]


def user_template_inventory(task: int, config: GenConfig) -> set[tuple[str, ...]]:
    """Every delexicalized user utterance the grammar can emit for ``task``."""
    T = config.templates
    out: set[tuple[str, ...]] = set()

    def add(templates):
        out.update(tokenize(t) for t in templates[:T])

    def collect(all_given: bool):
        add(U_GREET)
        subsets = [set(SLOTS)] if all_given else [
            {s for s, keep in zip(SLOTS, mask) if keep} for mask in product((0, 1), repeat=4)]
        for i in range(T):
            for given in subsets:
                parts = [U_FRAMES[i]] + [_SLOT_PHRASE[s] for s in _FRAME_ORDERS[i % 4] if s in given]
                out.add(tokenize(" ".join(parts)))
        out.add((SILENCE,))
        if not all_given:
            for s in SLOTS:
                add(U_ANSWER[s])

    if task in (1, 2, 5):
        collect(False)
    if task in (2, 5):
        for s in SLOTS:
            add(U_UPDATE[s])
        add(U_DENY)
        add(U_THANKS)
    if task == 3:
        collect(True)
    if task in (3, 5):
        add(U_REJECT)
        add(U_ACCEPT)
    if task == 4:
        add(U_GREET)
        add(U_RESERVE_AT)
    if task in (4, 5):
        add(U_ASK["phone"])
        add(U_ASK["address"])
    if config.fillers:
        prefixes = [()] + [tokenize(f) for f in FILLER_PREFIX[:config.fillers]]
        suffixes = [()] + [tokenize(f) for f in FILLER_SUFFIX[:config.fillers]]
        out = {p + line + q if line != (SILENCE,) else line
               for line in out for p in prefixes for q in suffixes}
    return out


# --------------------------------------------------------------------------
# pools, DSTC candidate sets, splits


def make_candidate_pool(dialogs) -> CandidatePool:
    seen = {}
    for d in dialogs:
        for t in d.turns:
            seen.setdefault(t.system.tokens, t.system)
    return CandidatePool(tuple(seen.values()))


def make_dstc_candidate_sets(dialogs, pool: CandidatePool, rng: np.random.Generator,
                             lexicon: EntityLexicon, same_template_bias: float = 0.5) -> list[SidecarRecord]:
    """Gold plus 9 distractors per system turn.

    Each distractor comes from the gold's own template (same words, other
    entities) with probability ``same_template_bias`` while such candidates
    remain, otherwise from the rest of the pool.
    """
    if len(pool) < 10:
        raise GenerationError(f"pool has {len(pool)} candidates, need at least 10")
    template_of = [delexicalize(c, lexicon)[0].tokens for c in pool.candidates]
    template_ids = {t: i for i, t in enumerate(dict.fromkeys(template_of))}
    tid = np.array([template_ids[t] for t in template_of])
    records = []
    for d in dialogs:
        for t, turn in enumerate(d.turns):
            gold = pool.index(turn.system)
            same = np.flatnonzero(tid == tid[gold])
            same = same[same != gold]
            others = np.flatnonzero(tid != tid[gold])
            same = rng.permutation(same)[:9]
            others = rng.choice(others, size=min(9, len(others)), replace=False)
            chosen: list[int] = []
            si = oi = 0
            for _ in range(9):
                want_same = rng.random() < same_template_bias
                if (want_same and si < len(same)) or oi >= len(others):
                    chosen.append(int(same[si]))
                    si += 1
                else:
                    chosen.append(int(others[oi]))
                    oi += 1
            pos = int(rng.integers(10))
            cands = chosen[:pos] + [gold] + chosen[pos:]
            records.append(SidecarRecord(d.id, t, tuple(cands), pos))
    return records


def heldout_cells(config: GenConfig) -> frozenset:
    if config.heldout_fraction <= 0:
        return frozenset()
    inv = config.inventory
    cells = list(product(inv["cuisine"], inv["location"]))
    k = max(1, int(round(config.heldout_fraction * len(cells))))
    if k >= len(cells):
        raise GenerationError(f"held-out fraction {config.heldout_fraction} leaves no cells for training")
    rng = make_rng(config.seed, "heldout")
    picked = rng.choice(len(cells), size=k, replace=False)
    return frozenset(cells[i] for i in sorted(picked))


def dialog_cell(dialog: Dialog) -> tuple[str, str] | None:
    """(cuisine, location) a dialog is about: its first api_call or its first fact block."""
    for it in dialog.items:
        if isinstance(it, Turn) and it.system.tokens[0] == "api_call":
            return it.system.tokens[1], it.system.tokens[2]
        if isinstance(it, FactBlock):
            attrs = {f.attribute: f.value for f in it.facts}
            return attrs["R_cuisine"], attrs["R_location"]
    return None


def split_corpus(dialogs, config: GenConfig, rng: np.random.Generator) -> dict[str, list[Dialog]]:
    """8:1:1 split by dialog id; reserved cells go exclusively to test."""
    dialogs = list(dialogs)
    reserved = heldout_cells(config)
    if reserved:
        test = [d for d in dialogs if dialog_cell(d) in reserved]
        rest = [d for d in dialogs if dialog_cell(d) not in reserved]
        order = rng.permutation(len(rest))
        n_train = int(round(len(rest) * 8 / 9))
        train = [rest[i] for i in sorted(order[:n_train])]
        val = [rest[i] for i in sorted(order[n_train:])]
        return {"train": train, "validation": val, "test": test}
    n = len(dialogs)
    if n < 3:
        raise GenerationError("need at least 3 dialogs to split")
    order = rng.permutation(n)
    n_train, n_val = int(round(0.8 * n)), int(round(0.1 * n))
    pick = lambda idx: [dialogs[i] for i in sorted(idx)]
    return {"train": pick(order[:n_train]), "validation": pick(order[n_train:n_train + n_val]),
            "test": pick(order[n_train + n_val:])}


# --------------------------------------------------------------------------
# whole corpora


@dataclass
class Corpus:
    config: GenConfig
    kb: list[KBFact]
    pool: CandidatePool
    splits: dict[str, dict[int, list[Dialog]]]
    sidecars: dict[str, dict[int, list[SidecarRecord]]] = field(default_factory=dict)

    @property
    def lexicon(self) -> EntityLexicon:
        return build_lexicon(self.kb)

    def dialogs(self, split: str | None = None, task: int | None = None) -> list[Dialog]:
        out = []
        for s in SPLITS:
            if split is not None and s != split:
                continue
            for t, ds in sorted(self.splits.get(s, {}).items()):
                if task is None or t == task:
                    out.extend(ds)
        return out

    def examples(self, split: str, task: int):
        from .corpus import attach_candidate_sets
        dialogs = self.splits[split][task]
        if self.config.mode == "dstc":
            dialogs = attach_candidate_sets(dialogs, self.sidecars[split][task], self.pool)
        return make_examples(dialogs, self.pool, self.config.mode, task)


def generate_corpus(config: GenConfig) -> Corpus:
    restaurants = sample_restaurants(config)
    kb = [f for r in restaurants for f in r.facts()]
    reserved = heldout_cells(config)
    inv = config.inventory
    everything = frozenset(product(inv["cuisine"], inv["location"]))
    seen_side = Constraints(everything - reserved) if reserved else Constraints()
    test_side = Constraints(reserved) if reserved else Constraints()
    splits: dict[str, dict[int, list[Dialog]]] = {s: {} for s in SPLITS}
    for task in config.tasks:
        for split in SPLITS:
            cons = test_side if split == "test" else seen_side
            splits[split][task] = generate_task(task, config, getattr(config, split), restaurants, cons, split)
    pool = make_candidate_pool(d for s in SPLITS for t in config.tasks for d in splits[s][t])
    corpus = Corpus(config, kb, pool, splits)
    if config.mode == "dstc":
        lexicon = build_lexicon(kb)
        for split in SPLITS:
            corpus.sidecars[split] = {
                task: make_dstc_candidate_sets(splits[split][task], pool,
                                               make_rng(config.seed, "dstc", task, split), lexicon)
                for task in config.tasks}
    return corpus
