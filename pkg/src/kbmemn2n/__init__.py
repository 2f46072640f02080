"""Memory networks for goal-oriented dialog retrieval, with and without separate entity memories."""
from .corpus import CandidatePool, Dialog, Example, KBFact, Utterance, make_examples, parse_dialogs
from .dialoggen import GenConfig, generate_corpus
from .entities import EntityLexicon, EntityType, build_lexicon
from .evalkit import EvalReport, evaluate, per_response_accuracy, unique_user_utterances
from .memnet import Hyperparams, MemoryNetwork, Parameters, forward, predict
from .trainer import Checkpoint, TrainConfig, build_model, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "CandidatePool", "Checkpoint", "Dialog", "EntityLexicon", "EntityType", "EvalReport",
    "Example", "GenConfig", "Hyperparams", "KBFact", "MemoryNetwork", "Parameters",
    "TrainConfig", "Utterance", "build_lexicon", "build_model", "evaluate", "forward", "generate_corpus",
    "load_checkpoint", "make_examples", "parse_dialogs", "per_response_accuracy", "predict",
    "save_checkpoint", "train", "unique_user_utterances",
]
