"""cureval: instruction-corpus curation and multi-reference QA evaluation.

The package splits into a curation side (records -> PII/length/quality
filters -> curated corpus with stage reports) and an evaluation side
(benchmark + predictions -> BLEU/GLEU/ROUGE aggregates stratified by
category).  Both share the tokenizer and the scorer client.  Heavy
counting runs on compiled kernels when available; see cureval.kernels.
"""
from .errors import BackendError, ConfigError, CurevalError, DataError
from .records import (
    CategoryTable,
    EvalExample,
    InstructionRecord,
    PredictionRecord,
    read_corpus,
    write_corpus,
)
from .tokenization import TokenSequence, detokenize, ngrams, token_count, tokenize

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "CategoryTable",
    "ConfigError",
    "CurevalError",
    "DataError",
    "EvalExample",
    "InstructionRecord",
    "PredictionRecord",
    "TokenSequence",
    "__version__",
    "detokenize",
    "ngrams",
    "read_corpus",
    "token_count",
    "tokenize",
    "write_corpus",
]
