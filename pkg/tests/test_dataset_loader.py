import json

import pytest

from src.collectors.dataset_loader import load_dialogues, parse_dialogue_line, write_dataset
from src.errors import DatasetValidationError


def _line(**overrides):
    payload = {
        "dialogue_id": "conv-1",
        "turns": [
            {"index": 1, "user": "hi", "agent": "hello"},
            {"index": 2, "user": "I went to Italy", "agent": "nice"},
            {"index": 3, "user": "bye", "agent": "see you"},
        ],
        "tests": [{"query": "Where did I go?", "gold_answer": "Italy", "gold_turns": [2]}],
    }
    payload.update(overrides)
    return json.dumps(payload)


def _write(tmp_path, *lines):
    path = tmp_path / "data.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_loads_valid_dialogue(tmp_path):
    dataset = load_dialogues(_write(tmp_path, _line()))

    source, cases = dataset[0]
    assert source.dialogue_id == "conv-1"
    assert [t.index for t in source.turns] == [1, 2, 3]
    assert source.turns[1].encoded_unit == "User: I went to Italy\nAgent: nice"
    assert cases[0].gold_turns == frozenset({2})
    assert cases[0].asked_after_turn == 3


def test_gold_turn_out_of_range(tmp_path):
    bad = _line(tests=[{"query": "q", "gold_answer": "a", "gold_turns": [9]}])
    with pytest.raises(DatasetValidationError) as excinfo:
        load_dialogues(_write(tmp_path, bad))
    assert "line 1" in str(excinfo.value)
    assert "gold_turns" in str(excinfo.value)
    assert excinfo.value.exit_code == 2


def test_gold_turn_after_asked_after_turn():
    bad = _line(tests=[{"query": "q", "gold_turns": [3], "asked_after_turn": 2}])
    with pytest.raises(DatasetValidationError):
        parse_dialogue_line(bad)


def test_malformed_line_names_line_and_field(tmp_path):
    missing = json.dumps({"dialogue_id": "x", "turns": [{"index": 1, "user": "hi"}]})
    with pytest.raises(DatasetValidationError) as excinfo:
        load_dialogues(_write(tmp_path, _line(), missing))
    message = str(excinfo.value)
    assert "line 2" in message
    assert "turns[0]" in message


def test_invalid_json(tmp_path):
    with pytest.raises(DatasetValidationError) as excinfo:
        load_dialogues(_write(tmp_path, "{not json"))
    assert excinfo.value.code == "dataset_bad_json"


def test_non_contiguous_indices():
    bad = _line(turns=[{"index": 1, "user": "a", "agent": "b"}, {"index": 3, "user": "c", "agent": "d"}], tests=[])
    with pytest.raises(DatasetValidationError) as excinfo:
        parse_dialogue_line(bad)
    assert excinfo.value.code == "dataset_turn_order"


def test_duplicate_dialogue_ids(tmp_path):
    with pytest.raises(DatasetValidationError):
        load_dialogues(_write(tmp_path, _line(), _line()))


def test_utterance_turns_map_to_user_and_agent():
    line = json.dumps({
        "dialogue_id": "hh",
        "turns": [{"index": 1, "utterances": [{"speaker": "Caroline", "text": "hey"}, {"speaker": "Mel", "text": "hi!"}]}],
        "tests": [],
    })
    source, _ = parse_dialogue_line(line)
    assert source.turns[0].user_text == "hey"
    assert source.turns[0].agent_text == "hi!"


def test_write_then_load_preserves_dataset(tmp_path):
    dataset = load_dialogues(_write(tmp_path, _line()))
    out = write_dataset(tmp_path / "copy.jsonl", dataset)
    assert load_dialogues(out) == dataset


def test_missing_file(tmp_path):
    with pytest.raises(DatasetValidationError):
        load_dialogues(tmp_path / "nope.jsonl")
