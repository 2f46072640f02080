"""Reading and writing a generated corpus directory.

Layout::

    config.json              generator configuration
    kb.txt                   one "RES_A R_phone RES_A_phone" fact per line
    candidates.txt           the global candidate pool, one utterance per line
    task<t>-<split>.txt      dialogs
    task<t>-<split>.cands    10-candidate sidecar (dstc mode only)
"""
from __future__ import annotations

import json
from pathlib import Path

from .corpus import (CandidatePool, Example, load_candidates, parse_dialogs, parse_facts,
                     parse_sidecar, serialize_candidates, serialize_dialogs, serialize_facts,
                     serialize_sidecar)
from .dialoggen import SPLITS, Corpus, GenConfig


def dialog_file(task: int, split: str) -> str:
    return f"task{task}-{split}.txt"


def sidecar_file(task: int, split: str) -> str:
    return f"task{task}-{split}.cands"


def write_corpus(corpus: Corpus, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(corpus.config.to_json(), encoding="utf-8")
    (out / "kb.txt").write_text(serialize_facts(corpus.kb), encoding="utf-8")
    (out / "candidates.txt").write_text(serialize_candidates(corpus.pool), encoding="utf-8")
    for split in SPLITS:
        for task, dialogs in sorted(corpus.splits[split].items()):
            (out / dialog_file(task, split)).write_text(serialize_dialogs(dialogs), encoding="utf-8")
            if split in corpus.sidecars:
                (out / sidecar_file(task, split)).write_text(
                    serialize_sidecar(corpus.sidecars[split][task]), encoding="utf-8")
    return out


def read_corpus(root) -> Corpus:
    """Inverse of :func:`write_corpus`. Missing files raise FileNotFoundError."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"data directory not found: {root}")
    config = GenConfig.from_dict(json.loads((root / "config.json").read_text(encoding="utf-8")))
    kb = parse_facts((root / "kb.txt").read_text(encoding="utf-8"))
    pool = load_candidates((root / "candidates.txt").read_text(encoding="utf-8"))
    splits, sidecars = {}, {}
    for split in SPLITS:
        splits[split] = {}
        for task in config.tasks:
            text = (root / dialog_file(task, split)).read_text(encoding="utf-8")
            splits[split][task] = parse_dialogs(text, pool)
            if config.mode == "dstc":
                side = (root / sidecar_file(task, split)).read_text(encoding="utf-8")
                sidecars.setdefault(split, {})[task] = parse_sidecar(side)
    return Corpus(config, kb, pool, splits, sidecars)


def remap_examples(examples: list[Example], source: CandidatePool,
                   target: CandidatePool) -> list[Example]:
    """Re-express candidate ids of ``source`` as ids of ``target``.

    Raises KeyError("unknown candidate") when a candidate is absent from ``target``.
    """
    if source.candidates == target.candidates:
        return examples
    table: dict[int, int] = {}

    def conv(i: int) -> int:
        if i not in table:
            table[i] = target.index(source.candidates[i])
        return table[i]

    out = []
    full = tuple(range(len(target)))
    for e in examples:
        cands = full if len(e.candidate_ids) == len(source) else tuple(conv(c) for c in e.candidate_ids)
        out.append(Example(e.context, e.query, conv(e.gold), cands, e.task, e.dialog_id, e.turn))
    return out
