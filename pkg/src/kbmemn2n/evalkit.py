"""Per-response accuracy, per-task reports and corpus statistics."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .corpus import Example
from .entities import EntityLexicon, delexicalize
from .memnet import MemoryNetwork


class IncompatibleVocabulary(ValueError):
    pass


def per_response_accuracy(predictions, golds) -> float:
    predictions, golds = list(predictions), list(golds)
    if len(predictions) != len(golds):
        raise ValueError(f"length mismatch: {len(predictions)} predictions, {len(golds)} golds")
    if not golds:
        raise ValueError("no examples to score")
    return 100.0 * sum(p == g for p, g in zip(predictions, golds)) / len(golds)


@dataclass
class TaskScore:
    examples: int = 0
    correct: int = 0

    @property
    def accuracy(self) -> float:
        return 100.0 * self.correct / self.examples if self.examples else 0.0


@dataclass
class EvalReport:
    tasks: dict[int, TaskScore]
    overall: TaskScore
    errors: list[tuple[str, str, int]] = field(default_factory=list)   # (gold, predicted, count)
    mode: str = "babi"

    def table(self) -> str:
        rows = [("task", "examples", "correct", "accuracy")]
        rows += [(str(t), str(s.examples), str(s.correct), f"{s.accuracy:.2f}")
                 for t, s in sorted(self.tasks.items())]
        rows.append(("all", str(self.overall.examples), str(self.overall.correct),
                     f"{self.overall.accuracy:.2f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        if self.errors:
            lines += ["", "most frequent errors (count  gold => predicted):"]
            lines += [f"{n:5d}  {g} => {p}" for g, p, n in self.errors]
        return "\n".join(lines) + "\n"

    def key_values(self) -> str:
        out = [f"mode={self.mode}"]
        for t, s in sorted(self.tasks.items()):
            out += [f"task{t}.examples={s.examples}", f"task{t}.correct={s.correct}",
                    f"task{t}.accuracy={s.accuracy:.4f}"]
        out += [f"overall.examples={self.overall.examples}", f"overall.correct={self.overall.correct}",
                f"overall.accuracy={self.overall.accuracy:.4f}"]
        for i, (g, p, n) in enumerate(self.errors, 1):
            out.append(f"error{i}={n}\t{g}\t{p}")
        return "\n".join(out) + "\n"


def check_compatible(model: MemoryNetwork, examples: list[Example]) -> None:
    n = len(model.pool)
    for ex in examples:
        if ex.gold >= n or any(c >= n for c in ex.candidate_ids):
            raise IncompatibleVocabulary(
                "incompatible vocabulary: dataset refers to candidates outside the checkpoint's pool")


def evaluate(model: MemoryNetwork, examples: list[Example], mode: str = "babi",
             top_errors: int = 10) -> EvalReport:
    """Run the model on every example and aggregate per task id."""
    examples = list(examples)
    if not examples:
        raise ValueError("empty dataset")
    check_compatible(model, examples)
    preds = model.predict_encoded([model.encode(e) for e in examples])
    tasks: dict[int, TaskScore] = {}
    overall = TaskScore()
    errs: Counter = Counter()
    for ex, p in zip(examples, preds):
        score = tasks.setdefault(ex.task, TaskScore())
        hit = p == ex.gold
        for s in (score, overall):
            s.examples += 1
            s.correct += hit
        if not hit:
            errs[(model.pool.candidates[ex.gold].text, model.pool.candidates[p].text)] += 1
    ranked = sorted(errs.items(), key=lambda kv: (-kv[1], kv[0]))[:top_errors]
    return EvalReport(tasks, overall, [(g, p, n) for (g, p), n in ranked], mode)


def unique_user_utterances(dialogs, lexicon: EntityLexicon) -> int:
    """Distinct user lines after replacing entities by their type tokens."""
    seen = set()
    for d in dialogs:
        for turn in d.turns:
            seen.add(delexicalize(turn.user, lexicon)[0].tokens)
    return len(seen)
