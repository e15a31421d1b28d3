from __future__ import annotations

import numpy as np
import pytest

from embexport.formats import (
    ExportError,
    write_bank,
    write_manifest_fragment,
    write_prompt_sidecar,
)

# the consumer pipeline is the parsing oracle for everything we emit
from drivemon.embedstore import load_manifest, load_prompt_set, read_embedding_bank


class TestWriteBank:
    def test_consumer_parses_emitted_bank(self, tmp_path):
        vectors = np.array([[1.5, -2.0], [0.25, 8.0]], dtype=np.float32)
        path = write_bank(["a", "b"], vectors, tmp_path / "x.bank")
        bank = read_embedding_bank(path)
        assert bank.ids == ("a", "b")
        assert bank.dim == 2
        assert bank.vectors.tobytes() == vectors.tobytes()

    def test_repeated_write_byte_identical(self, tmp_path):
        vectors = np.random.default_rng(0).normal(size=(5, 7)).astype(np.float32)
        p1 = write_bank([f"i{k}" for k in range(5)], vectors, tmp_path / "one.bank")
        p2 = write_bank([f"i{k}" for k in range(5)], vectors, tmp_path / "two.bank")
        assert p1.read_bytes() == p2.read_bytes()

    def test_duplicate_ids_rejected(self, tmp_path):
        with pytest.raises(ExportError, match="duplicate"):
            write_bank(["a", "a"], np.ones((2, 2), dtype=np.float32), tmp_path / "x.bank")

    def test_non_finite_rejected(self, tmp_path):
        bad = np.array([[np.nan, 1.0]], dtype=np.float32)
        with pytest.raises(ExportError, match="non-finite"):
            write_bank(["a"], bad, tmp_path / "x.bank")

    def test_id_count_mismatch_rejected(self, tmp_path):
        with pytest.raises(ExportError, match="ids but"):
            write_bank(["a"], np.ones((2, 2), dtype=np.float32), tmp_path / "x.bank")


class TestManifestFragment:
    ROW = {
        "record_id": "v1_f000000",
        "dataset": "demo",
        "driver_id": "d01",
        "video_id": "v1",
        "event_id": "e1",
        "frame_index": 0,
        "source_fps": "30",
        "camera_view": "dashboard",
        "label": "drinking",
    }

    def test_consumer_parses_fragment(self, tmp_path):
        path = write_manifest_fragment([self.ROW], tmp_path / "m.csv")
        rows = load_manifest(path)
        assert rows[0].record_id == "v1_f000000"
        assert rows[0].label == "drinking"

    def test_missing_field_rejected(self, tmp_path):
        row = dict(self.ROW)
        del row["label"]
        with pytest.raises(ExportError, match="missing fields"):
            write_manifest_fragment([row], tmp_path / "m.csv")


class TestPromptSidecar:
    def test_consumer_parses_sidecar_with_bank(self, tmp_path):
        entries = [("drinking", "a driver drinking"), ("texting", "a driver texting")]
        sidecar = write_prompt_sidecar(entries, tmp_path / "p.tsv")
        bank = write_bank(
            ["drinking", "texting"], np.ones((2, 3), dtype=np.float32), tmp_path / "p.bank"
        )
        ps = load_prompt_set(bank, sidecar)
        assert ps.class_table == ("drinking", "texting")
        assert ps.prompts[0] == "a driver drinking"

    def test_tab_in_class_rejected(self, tmp_path):
        with pytest.raises(ExportError, match="tabs"):
            write_prompt_sidecar([("a\tb", "text")], tmp_path / "p.tsv")
