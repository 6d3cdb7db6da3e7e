import json

from gridvla import dataset, oracle


def test_roundtrip_bit_exact(tmp_path):
    demos = [oracle.demo("place_at", 2, s) for s in range(3)]
    demos.append(oracle.demo("stack_tower", 3, 0, annotate_thoughts=False))
    path = tmp_path / "demos.jsonl"
    dataset.save_dataset(path, demos, grid_size=8)
    raw = path.read_bytes()

    header, loaded = dataset.load_dataset(path)
    assert header.grid_size == 8
    assert header.format == dataset.FORMAT_NAME
    assert loaded == demos

    path2 = tmp_path / "again.jsonl"
    dataset.save_dataset(path2, loaded, grid_size=header.grid_size,
                         thought_format=header.thought_format)
    assert path2.read_bytes() == raw


def test_header_first_line(tmp_path):
    path = tmp_path / "demos.jsonl"
    dataset.save_dataset(path, [oracle.demo("place_at", 2, 0)], grid_size=8)
    first = path.read_text(encoding="utf-8").splitlines()[0]
    h = json.loads(first)
    assert h == {
        "format": "gridvla-demos",
        "grid_size": 8,
        "thought_format": "short",
        "version": 1,
    }


def test_rejects_unknown_header(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"format":"other","version":9}\n', encoding="utf-8")
    try:
        dataset.load_dataset(path)
    except ValueError as e:
        assert "unsupported" in str(e)
    else:
        raise AssertionError("expected a header error")


def test_unannotated_steps_roundtrip_null(tmp_path):
    d = oracle.demo("place_at", 2, 0, annotate_thoughts=False)
    path = tmp_path / "d.jsonl"
    dataset.save_dataset(path, [d], grid_size=8)
    _, [loaded] = dataset.load_dataset(path)
    assert all(s.thought is None for s in loaded.steps)
