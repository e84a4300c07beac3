"""Tests for artifact persistence: atomic writes, hashes and state snapshots."""

import json

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from qcmediator.ensemble import ConfigurationGrid, ContinuousAxis, DiscreteAxis, EnsembleState
from qcmediator.persistence import (
    ArtifactWriter,
    canonical_json,
    content_hash,
    load_json,
    read_state,
    state_to_frame,
)


@pytest.fixture
def grid():
    return ConfigurationGrid((ContinuousAxis("x", -1.0, 1.0, 5), DiscreteAxis("s", 2)))


@pytest.fixture
def state(grid, rng):
    P = rng.random(grid.shape)
    S = rng.normal(size=grid.shape)
    return EnsembleState.normalized(grid, P, S)


class TestContentHash:
    def test_matches_git_blob_hash(self):
        # git hash-object of '{"a":1,"b":[1.5,2]}'
        assert content_hash({"b": [1.5, 2], "a": 1}) == "d57058c8e7e3e9ced879323fa5c9269998b8b833"

    def test_key_order_irrelevant(self):
        assert content_hash({"x": 1, "y": 2}) == content_hash({"y": 2, "x": 1})

    def test_numpy_scalars(self):
        assert canonical_json({"v": np.float64(0.5), "n": np.int64(3)}) == '{"n":3,"v":0.5}'

    def test_rejects_unknown_types(self):
        with pytest.raises(TypeError):
            canonical_json({"v": object()})


class TestArtifactWriter:
    def test_json_is_sorted_and_newline_terminated(self, out_dir):
        path = ArtifactWriter(out_dir).write_json("report.json", {"b": 1, "a": 2})
        text = path.read_text()
        assert text.endswith("\n")
        assert text.index('"a"') < text.index('"b"')

    def test_no_temp_files_left(self, out_dir):
        writer = ArtifactWriter(out_dir)
        writer.write_json("report.json", {"a": 1})
        writer.write_frame("table.csv", pd.DataFrame({"x": [1.0]}))
        assert not list(out_dir.glob("*.tmp"))
        assert set(writer.written) == {"report.json", "table.csv"}

    def test_overwrite_replaces(self, out_dir):
        writer = ArtifactWriter(out_dir)
        writer.write_json("report.json", {"a": 1})
        writer.write_json("report.json", {"a": 2})
        assert load_json(out_dir / "report.json") == {"a": 2}

    def test_nested_names(self, out_dir):
        path = ArtifactWriter(out_dir).write_json("states/final.json", [1, 2])
        assert path.parent.name == "states"
        assert json.loads(path.read_text()) == [1, 2]

    def test_failed_write_cleans_up(self, out_dir, monkeypatch):
        writer = ArtifactWriter(out_dir)

        def refuse(self, target):
            raise OSError("disk full")

        monkeypatch.setattr("pathlib.Path.replace", refuse)
        with pytest.raises(OSError):
            writer.write_json("report.json", {"a": 1})
        assert not (out_dir / "report.json").exists()
        assert not (out_dir / "report.json.tmp").exists()

    def test_csv_keeps_full_precision(self, out_dir):
        value = 0.1 + 0.2
        path = ArtifactWriter(out_dir).write_frame("t.csv", pd.DataFrame({"v": [value]}))
        assert pd.read_csv(path)["v"].iloc[0] == value


class TestStateSnapshots:
    def test_frame_layout(self, state, grid):
        frame = state_to_frame(state)
        assert list(frame.columns) == ["point", "x", "s", "P", "S"]
        assert len(frame) == grid.n_points

    def test_roundtrip(self, state, grid, out_dir):
        path = ArtifactWriter(out_dir).write_state("state.csv", state)
        back = read_state(path, grid)
        assert_allclose(back.P, state.P, rtol=0, atol=1e-16)
        assert_allclose(back.S, state.S, rtol=0, atol=1e-15)

    def test_wrong_grid(self, state, out_dir):
        path = ArtifactWriter(out_dir).write_state("state.csv", state)
        other = ConfigurationGrid((ContinuousAxis("x", -2.0, 2.0, 5), DiscreteAxis("s", 2)))
        with pytest.raises(ValueError):
            read_state(path, other)

    def test_wrong_size(self, state, out_dir):
        path = ArtifactWriter(out_dir).write_state("state.csv", state)
        with pytest.raises(ValueError):
            read_state(path, ConfigurationGrid((DiscreteAxis("s", 3),)))


def test_load_json_missing(out_dir):
    assert load_json(out_dir / "absent.json") is None
