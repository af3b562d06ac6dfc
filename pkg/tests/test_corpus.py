import json

import pytest
from scipy.stats import qmc

from tcadloop.deckgen import (
    CorpusRecord,
    GridStrategy,
    LatinHypercubeStrategy,
    QueryTemplateSet,
    SweepConfig,
    augment_queries,
    build_corpus,
    build_deck_pair,
    expand_variants,
    read_corpus,
    to_jsonl,
    write_corpus,
)
from tcadloop.deckgen.corpus import query_consistent, query_number
from tcadloop.errors import ConfigError, EmptySelection, InvalidParams, InvariantError, TransportError
from tcadloop.params import validate

IDVG = SweepConfig("IdVg", 0.65, 0.0, 0.65, 0.01)
IDVD = SweepConfig("IdVd", 0.65, 0.0, 0.65, 0.05)


class _Rephraser:
    def __init__(self, reply):
        self.reply = reply
        self.calls = 0

    def complete(self, messages):
        self.calls += 1
        if isinstance(self.reply, Exception):
            raise self.reply
        return self.reply


def test_grid_is_cartesian_product_with_endpoints(r1, space):
    variants = expand_variants(r1, space, GridStrategy({"gate_length": 3, "eot": 3}))
    assert len(variants) == 9
    assert sorted({v.gate_length for v in variants}) == [8.0, 19.0, 30.0]
    assert sorted({v.eot for v in variants}) == [0.5, 1.0, 1.5]
    assert all(validate(v, space).in_bounds for v in variants)
    assert all(v.sheet_width == r1.sheet_width for v in variants)


def test_integer_axis_collapses_duplicates(r1, space):
    variants = expand_variants(r1, space, GridStrategy({"num_sheets": 9}))
    assert [v.num_sheets for v in variants] == [1, 2, 3, 4, 5]


def test_latin_hypercube_is_seeded(r1, space):
    a = expand_variants(r1, space, LatinHypercubeStrategy(n=100, seed=7))
    b = expand_variants(r1, space, LatinHypercubeStrategy(n=100, seed=7))
    c = expand_variants(r1, space, LatinHypercubeStrategy(n=100, seed=8))
    assert a == b
    assert a != c
    assert all(validate(v, space).in_bounds for v in a)


def test_latin_hypercube_covers_every_stratum(r1, space):
    variants = expand_variants(r1, space, LatinHypercubeStrategy(n=10, seed=1, axes=("gate_length",)))
    strata = sorted(int(space.normalize("gate_length", v.gate_length) * 10) for v in variants)
    assert strata == list(range(10))


def test_latin_hypercube_follows_the_scipy_sampler(r1, space):
    axes = ("gate_length", "channel_doping")
    variants = expand_variants(r1, space, LatinHypercubeStrategy(n=6, seed=5, axes=axes))
    expected = qmc.LatinHypercube(d=2, seed=5).random(6)
    got = [space.normalize(name, getattr(v, name)) for v in variants for name in axes]
    assert got == pytest.approx(expected.ravel().tolist(), abs=1e-12)


def test_expansion_errors(r1, space):
    with pytest.raises(EmptySelection):
        expand_variants(r1, space, GridStrategy({}))
    with pytest.raises(ConfigError):
        expand_variants(r1, space, GridStrategy({"colour": 3}))
    with pytest.raises(InvalidParams):
        expand_variants(r1.replace(gate_length=50.0), space, GridStrategy({"eot": 2}))


def test_corpus_cardinality_and_determinism(r1, space):
    variants = expand_variants(r1, space, GridStrategy({"gate_length": 3, "eot": 3}))
    first = to_jsonl(build_corpus(variants, [IDVG, IDVD], QueryTemplateSet(), seed=5, base=r1))
    second = to_jsonl(build_corpus(variants, [IDVG, IDVD], QueryTemplateSet(), seed=5, base=r1))
    threaded = to_jsonl(build_corpus(variants, [IDVG, IDVD], QueryTemplateSet(), seed=5, base=r1, workers=4))
    assert len(first.splitlines()) == 18
    assert first == second == threaded


def test_records_carry_the_agreed_keys(r1, space):
    variants = expand_variants(r1, space, GridStrategy({"gate_length": 3}))
    lines = to_jsonl(build_corpus(variants, [IDVG], QueryTemplateSet(), seed=0, base=r1)).splitlines()
    for i, line in enumerate(lines):
        doc = json.loads(line)
        assert set(doc) == {"query", "sde", "sdevice", "metadata"}
        assert doc["metadata"]["provenance"]["record_index"] == i
        assert doc["metadata"]["sweep_kind"] == "IdVg"


def test_query_mentions_the_variant_gate_length(r1, space):
    templates = QueryTemplateSet(("Simulate a $family with gate length $gate_length nm using $sweep.",))
    variants = expand_variants(r1, space, GridStrategy({"gate_length": 3}))
    records = build_corpus(variants, [IDVG], templates, seed=3, base=r1)
    for variant, record in zip(variants, records):
        assert f"gate length {query_number(variant.gate_length)} nm" in record.query
        assert record.provenance["variation"] in ({}, {"gate_length": variant.gate_length})


def test_every_query_number_is_in_the_metadata(r1, space):
    variants = expand_variants(r1, space, LatinHypercubeStrategy(n=20, seed=4))
    records = build_corpus(variants, [IDVG, IDVD], QueryTemplateSet(), seed=9)
    assert len(records) == 40
    for record in records:
        assert query_consistent(record.query, record.metadata)


def test_record_rejects_inconsistent_query(r1):
    deck = build_deck_pair(r1, IDVG)
    with pytest.raises(InvariantError):
        CorpusRecord("a nanosheet FET with gate length 99 nm", deck)
    with pytest.raises(InvariantError):
        CorpusRecord("   ", deck)
    assert CorpusRecord("a nanosheet FET with gate length 14 nm", deck).query


def test_bad_variant_is_skipped_not_fatal(r1):
    collapsed = r1.replace(vertical_pitch=2.0)
    records = build_corpus([r1, collapsed, r1], [IDVG], QueryTemplateSet(), seed=0)
    assert [r.provenance["record_index"] for r in records] == [0, 2]


def test_template_file_lines(tmp_path):
    templates = QueryTemplateSet.from_lines(["# comment", "", "Run $sweep on a $family."])
    assert templates.templates == ("Run $sweep on a $family.",)
    with pytest.raises(ConfigError):
        QueryTemplateSet(())


def test_corpus_file_reads_back(tmp_path, r1):
    records = build_corpus([r1], [IDVG, IDVD], QueryTemplateSet(), seed=1)
    path = write_corpus(records, tmp_path / "out" / "corpus.jsonl")
    assert [r.to_dict() for r in read_corpus(path)] == [r.to_dict() for r in records]


def test_augmentation_keeps_consistent_rewrites(r1):
    records = build_corpus([r1], [IDVG], QueryTemplateSet(), seed=1)
    client = _Rephraser("Please build decks for a 14 nm gate nanosheet FET and sweep the gate.\n")
    out = augment_queries(records, client)
    assert out[0].query == "Please build decks for a 14 nm gate nanosheet FET and sweep the gate."
    assert out[0].deck == records[0].deck


def test_augmentation_falls_back_to_template_query(r1):
    records = build_corpus([r1], [IDVG], QueryTemplateSet(), seed=1)
    assert augment_queries(records, _Rephraser("A 99 nm device please."))[0].query == records[0].query
    assert augment_queries(records, _Rephraser(TransportError("down")))[0].query == records[0].query
    assert augment_queries(records, _Rephraser(""))[0].query == records[0].query


def test_query_number_reads_back_exactly():
    assert query_number(14.0) == "14"
    assert query_number(0.65) == "0.65"
    assert query_number(1e16) == "1e+16"
