"""kbmemn2n command line: gen-data, train, eval, stats, chat."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .corpus import USER, ContextLine, Example, FormatError, Utterance, parse_facts, tokenize
from .datadir import read_corpus, remap_examples, write_corpus
from .dialoggen import GenConfig, GenerationError, generate_corpus, user_template_inventory
from .evalkit import IncompatibleVocabulary, evaluate, unique_user_utterances
from .memnet import Hyperparams, MemoryNetwork
from .trainer import (CheckpointError, TrainConfig, TrainingDiverged, build_model,
                      load_checkpoint, save_checkpoint, train)

log = logging.getLogger("kbmemn2n")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_FORMAT = 4
EXIT_VOCAB = 5
EXIT_CHECKPOINT = 6
EXIT_DIVERGED = 7


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _on_off(value: str) -> bool:
    v = value.lower()
    if v in ("on", "true", "1", "yes"):
        return True
    if v in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on|off, got {value!r}")


def _tasks(value: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in value.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated task ids, got {value!r}") from None


def _read_settings(path) -> dict:
    """JSON object or ``key=value`` lines."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        return json.loads(text)
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


# --------------------------------------------------------------------------
# gen-data

GEN_FLAGS = ("seed", "cuisines", "locations", "prices", "party_sizes", "restaurants", "tasks",
             "train", "validation", "test", "templates", "fillers", "mode", "heldout_fraction")


def cmd_gen_data(args) -> int:
    settings = _read_settings(args.config) if args.config else {}
    for name in GEN_FLAGS:
        value = getattr(args, name)
        if value is not None:
            settings[name] = value
    config = GenConfig.from_dict(settings)
    corpus = generate_corpus(config)
    out = write_corpus(corpus, args.out)
    n = sum(len(d) for s in corpus.splits.values() for d in s.values())
    print(f"wrote {n} dialogs, {len(corpus.pool)} candidates, {len(corpus.kb)} KB facts to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# train

@dataclass
class TrainSettings:
    mode: str | None = None
    task: tuple[int, ...] | None = None
    kb_mode: bool = True
    match_type: bool = False
    seed: int = 0
    dim: int = 30
    hops: int = 3
    lr: float = 0.001
    memory_cap: int = 50
    tying: str = "shared"
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 10
    eval_every: int = 1

    @classmethod
    def resolve(cls, file_settings: dict, flags: dict) -> "TrainSettings":
        known = {f.name for f in fields(cls)}
        unknown = set(file_settings) - known
        if unknown:
            raise FormatError(f"unknown training settings: {', '.join(sorted(unknown))}")
        out = cls()
        for source in (file_settings, flags):
            for k, v in source.items():
                if v is None:
                    continue
                default = getattr(cls(), k)
                if k == "task":
                    v = _tasks(v) if isinstance(v, str) else tuple(int(t) for t in (v if isinstance(v, (list, tuple)) else [v]))
                elif isinstance(default, bool):
                    v = _on_off(v) if isinstance(v, str) else bool(v)
                elif isinstance(default, int):
                    v = int(v)
                elif isinstance(default, float):
                    v = float(v)
                setattr(out, k, v)
        return out

    def hyper(self) -> Hyperparams:
        return Hyperparams(dim=self.dim, hops=self.hops, lr=self.lr, memory_cap=self.memory_cap,
                           tying=self.tying, use_match_type=self.match_type, kb_mode=self.kb_mode)

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, max_epochs=self.max_epochs,
                           patience=self.patience, eval_every=self.eval_every, seed=self.seed,
                           hyper=self.hyper())


def _examples(corpus, split: str, tasks) -> list[Example]:
    out = []
    for t in tasks:
        if t not in corpus.splits[split]:
            raise UsageError(f"task {t} is not in the data directory (have {sorted(corpus.splits[split])})")
        out.extend(corpus.examples(split, t))
    return out


def cmd_train(args) -> int:
    flags = {"mode": args.mode, "task": args.task, "kb_mode": args.kb_mode, "match_type": args.match_type,
             "seed": args.seed, "dim": args.dim, "hops": args.hops, "lr": args.lr,
             "batch_size": args.batch_size, "max_epochs": args.epochs, "patience": args.patience}
    settings = TrainSettings.resolve(_read_settings(args.config) if args.config else {}, flags)
    corpus = read_corpus(args.data)
    if settings.mode is not None and settings.mode != corpus.config.mode:
        raise UsageError(f"data directory holds {corpus.config.mode} data, not {settings.mode}")
    tasks = settings.task or corpus.config.tasks
    train_set = _examples(corpus, "train", tasks)
    val_set = _examples(corpus, "validation", tasks)
    cfg = settings.train_config()
    model = build_model(corpus.dialogs(), corpus.pool, corpus.lexicon, cfg.hyper, seed=settings.seed)

    def progress(entry):
        log.info("epoch %3d  loss %.4f  validation %.2f%%", entry["epoch"], entry["loss"],
                 entry["validation_accuracy"])

    ckpt, history = train(model, train_set, val_set, cfg, progress=progress)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, out)
    hist_path = out.with_name(out.name + ".history")
    hist_path.write_text("".join(f"epoch={h['epoch']}\tloss={h['loss']!r}\tvalidation_accuracy="
                                 f"{h['validation_accuracy']!r}\n" for h in history), encoding="utf-8")
    best = max(h["validation_accuracy"] for h in history)
    print(f"trained {len(history)} epochs on {len(train_set)} examples; "
          f"best validation accuracy {best:.2f}%")
    print(f"checkpoint: {out}")
    print(f"history: {hist_path}")
    if args.plot:
        from .plotting import plot_history
        print(f"figure: {plot_history(history, args.plot)}")
    return EXIT_OK


# --------------------------------------------------------------------------
# eval

def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = ckpt.model()
    try:
        corpus = read_corpus(args.data)
    except FormatError as err:
        if "unknown candidate" in str(err):
            raise IncompatibleVocabulary(f"incompatible vocabulary: {err}") from None
        raise
    tasks = args.task or corpus.config.tasks
    examples = _examples(corpus, args.split, tasks)
    try:
        examples = remap_examples(examples, corpus.pool, ckpt.pool)
    except KeyError as err:
        raise IncompatibleVocabulary(
            f"incompatible vocabulary: {err.args[0]} is not in the checkpoint's candidate pool") from None
    report = evaluate(model, examples, corpus.config.mode)
    if args.format in ("table", "both"):
        sys.stdout.write(report.table())
    if args.format == "both":
        print("---")
    if args.format in ("kv", "both"):
        sys.stdout.write(report.key_values())
    if args.report:
        Path(args.report).write_text(report.key_values(), encoding="utf-8")
    if args.plot:
        from .plotting import plot_report
        print(f"figure: {plot_report(report, args.plot)}", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------
# stats

def cmd_stats(args) -> int:
    corpus = read_corpus(args.data)
    lex = corpus.lexicon
    cfg = corpus.config
    print(f"mode={cfg.mode}")
    print(f"kb_facts={len(corpus.kb)}")
    print(f"entities={len(lex)}")
    print(f"candidates={len(corpus.pool)}")
    print(f"templates_per_intent={cfg.templates}")
    for task in cfg.tasks:
        dialogs = [d for s in corpus.splits.values() for d in s.get(task, [])]
        sizes = "\t".join(f"{s}={len(corpus.splits[s][task])}" for s in corpus.splits)
        turns = sum(len(d.turns) for d in dialogs)
        print(f"task{task}\t{sizes}\tturns={turns}\t"
              f"unique_user_utterances={unique_user_utterances(dialogs, lex)}\t"
              f"grammar_user_utterances={len(user_template_inventory(task, cfg))}")
    return EXIT_OK


# --------------------------------------------------------------------------
# chat

@dataclass
class ChatSession:
    lines: list[ContextLine] = field(default_factory=list)


def chat_step(session: ChatSession, user_line: str, model: MemoryNetwork) -> str | None:
    """Answer one user line; returns None (session untouched) for blank input."""
    tokens = tokenize(user_line.lower())
    if not tokens:
        return None
    query = Utterance(USER, tokens)
    everything = tuple(range(len(model.pool)))
    example = Example(tuple(session.lines), query, 0, everything)
    reply = model.pool.candidates[model.predict(example)]
    session.lines.extend((query, reply))
    return reply.text


def cmd_chat(args, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    model = load_checkpoint(args.ckpt).model()
    session = ChatSession()
    interactive = stdin.isatty()
    if interactive:
        stdout.write("type a message; /kb <file> loads facts, /reset clears, /quit exits\n")
    while True:
        if interactive:
            stdout.write("> ")
            stdout.flush()
        line = stdin.readline()
        if not line:
            break
        line = line.strip()
        if line in ("/quit", "/exit"):
            break
        if line == "/reset":
            session = ChatSession()
            continue
        if line.startswith("/kb"):
            path = line[3:].strip()
            try:
                facts = parse_facts(Path(path).read_text(encoding="utf-8"))
            except (OSError, FormatError) as err:
                stdout.write(f"cannot load facts: {err}\n")
                continue
            session.lines.extend(facts)
            stdout.write(f"loaded {len(facts)} facts\n")
            continue
        reply = chat_step(session, line, model)
        if reply is not None:
            stdout.write(reply + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kbmemn2n", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic corpus")
    g.add_argument("--config", help="generator settings (JSON or key=value)")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int)
    for name in ("cuisines", "locations", "prices", "party-sizes", "restaurants", "train",
                 "validation", "test", "templates", "fillers"):
        g.add_argument(f"--{name}", type=int, dest=name.replace("-", "_"))
    g.add_argument("--tasks", type=_tasks)
    g.add_argument("--mode", choices=("babi", "dstc"))
    g.add_argument("--heldout-fraction", type=float)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model on a corpus directory")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--config", help="training settings (JSON or key=value)")
    t.add_argument("--mode", choices=("babi", "dstc"))
    t.add_argument("--task", type=_tasks, help="comma-separated task ids (default: all)")
    t.add_argument("--kb-mode", type=_on_off)
    t.add_argument("--match-type", type=_on_off)
    t.add_argument("--seed", type=int)
    t.add_argument("--dim", type=int)
    t.add_argument("--hops", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--plot", help="write the training curve to this image file")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="per-response accuracy of a checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", default="test", choices=("train", "validation", "test"))
    e.add_argument("--task", type=_tasks)
    e.add_argument("--format", default="both", choices=("table", "kv", "both"))
    e.add_argument("--report", help="also write key=value report to this file")
    e.add_argument("--plot", help="write a per-task accuracy chart to this image file")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("stats", help="corpus sizes and unique user utterances")
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_stats)

    c = sub.add_parser("chat", help="talk to a trained checkpoint")
    c.add_argument("--ckpt", required=True)
    c.set_defaults(func=cmd_chat)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as err:
        print(f"error: missing file: {err.filename or err}", file=sys.stderr)
        return EXIT_MISSING
    except IncompatibleVocabulary as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VOCAB
    except CheckpointError as err:
        print(f"error: bad checkpoint: {err}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except TrainingDiverged as err:
        print(f"error: training diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FormatError, GenerationError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FORMAT
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())
