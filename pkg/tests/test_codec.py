import json
from pathlib import Path

import pytest

from groupchronicle.codec import MalformedFile, dumps, dumps_json, load, loads, save, to_dot
from groupchronicle.chronicle import InvalidChronicle
from groupchronicle.fixtures import all_fixtures, s0, s1
from independent_encoding import fixture_ids

GOLDEN = Path(__file__).parent / "golden" / "fixture_ids.json"


def test_golden_ids_match_library():
    golden = json.loads(GOLDEN.read_text())
    got = {f"{f.name}.{k}": e.id.hex() for f in all_fixtures() for k, e in f.events.items()}
    assert got == golden


def test_golden_ids_match_independent_encoder():
    golden = json.loads(GOLDEN.read_text())
    assert {k: v.hex() for k, v in fixture_ids().items()} == golden


@pytest.mark.parametrize("f", all_fixtures(), ids=lambda f: f.name)
def test_file_roundtrip(f, tmp_path):
    data = dumps(f.chronicle)
    assert loads(data) == f.chronicle
    assert dumps(loads(data)) == data
    p = tmp_path / "g.chron"
    save(f.chronicle, p)
    assert load(p, check_valid=True) == f.chronicle


def test_every_flipped_byte_is_detected():
    data = dumps(s1().chronicle)
    for k in range(len(data)):
        bad = bytearray(data)
        bad[k] ^= 0x01
        with pytest.raises(MalformedFile):
            loads(bytes(bad))


def test_truncation_and_missing_links_are_malformed():
    data = dumps(s1().chronicle)
    with pytest.raises(MalformedFile):
        loads(data[:-5])
    with pytest.raises(MalformedFile):
        loads(b"not a chronicle")
    # drop the first record (a setup grant): its successors lose a predecessor
    head = len(b"GCHRON1\n")
    n = int.from_bytes(data[head:head + 4], "big")
    with pytest.raises(MalformedFile):
        loads(data[:head] + data[head + 4 + n + 32:])


def test_validity_flag():
    f = s1()
    half = f.chronicle.subset(f.chronicle.ancestors(f.id("c")))
    assert loads(dumps(half)) == half
    with pytest.raises(InvalidChronicle):
        loads(dumps(half), check_valid=True)


def test_json_export_lists_every_event():
    doc = json.loads(dumps_json(s0().chronicle))
    assert len(doc) == 2
    kinds = sorted(d["voc"]["kind"] for d in doc)
    assert kinds == ["create", "grant"]


def test_dot_export_shape():
    f = s1()
    text = to_dot(f.chronicle)
    nodes = [ln for ln in text.splitlines() if "[label=" in ln]
    edges = [ln for ln in text.splitlines() if "->" in ln]
    assert len(nodes) == len(f.chronicle) == 5
    assert sum("doubleoctagon" in ln for ln in nodes) == 2
    assert len(edges) == sum(len(e.preds) for e in f.chronicle)
