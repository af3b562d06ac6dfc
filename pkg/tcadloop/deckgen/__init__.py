from .corpus import (
    CorpusRecord,
    GridStrategy,
    LatinHypercubeStrategy,
    QueryTemplateSet,
    augment_queries,
    build_corpus,
    expand_variants,
    read_corpus,
    to_jsonl,
    write_corpus,
)
from .emit import (
    DeckPair,
    MESH_TAGS,
    MODEL_TAGS,
    build_deck_pair,
    format_number,
    generate_sde,
    generate_sdevice,
    write_deck_pair,
)
from .parse import SDE, SDEVICE, Diagnostic, ParsedDeck, parse_deck
from .sweep import SweepConfig

__all__ = [
    "CorpusRecord",
    "DeckPair",
    "Diagnostic",
    "GridStrategy",
    "LatinHypercubeStrategy",
    "MESH_TAGS",
    "MODEL_TAGS",
    "ParsedDeck",
    "QueryTemplateSet",
    "SDE",
    "SDEVICE",
    "SweepConfig",
    "augment_queries",
    "build_corpus",
    "build_deck_pair",
    "expand_variants",
    "format_number",
    "generate_sde",
    "generate_sdevice",
    "parse_deck",
    "read_corpus",
    "to_jsonl",
    "write_corpus",
    "write_deck_pair",
]
