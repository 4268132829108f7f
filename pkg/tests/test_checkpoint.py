"""Round-trip and corruption handling for the binary checkpoint format."""

import struct

import numpy as np
import pytest

from triadic.checkpoint import MAGIC, VERSION, load_checkpoint, save_checkpoint
from triadic.errors import DataError
from triadic.operators import TernaryOpSpec, init_params


def _setup(kind="tensor_fusion", dim=3, cp_rank=None):
    spec = TernaryOpSpec(kind=kind, dim=dim, cp_rank=cp_rank)
    params = init_params(spec, num_entities=4, num_relations=2, seed=7)
    entities = ("a", "b", "c", "d")
    relations = ("r0", "r1")
    return spec, params, entities, relations


class TestRoundTrip:
    def test_everything_survives(self, tmp_path):
        spec, params, ents, rels = _setup()
        path = str(tmp_path / "model.bin")
        save_checkpoint(path, spec, params, ents, rels)
        spec2, params2, ents2, rels2 = load_checkpoint(path)
        assert spec2 == spec
        assert ents2 == ents
        assert rels2 == rels
        assert sorted(params2) == sorted(params)
        for name in params:
            np.testing.assert_array_equal(params2[name], params[name])

    def test_cp_factorized_spec(self, tmp_path):
        spec, params, ents, rels = _setup(cp_rank=2)
        path = str(tmp_path / "cp.bin")
        save_checkpoint(path, spec, params, ents, rels)
        spec2, params2, _, _ = load_checkpoint(path)
        assert spec2.cp_rank == 2
        assert "W1_fx" in params2 and "W1" not in params2

    def test_loaded_arrays_are_usable(self, tmp_path):
        spec, params, ents, rels = _setup(kind="attention_aggregation")
        path = str(tmp_path / "att.bin")
        save_checkpoint(path, spec, params, ents, rels)
        _, params2, _, _ = load_checkpoint(path)
        for arr in params2.values():
            assert arr.dtype == np.float64
            assert arr.flags.writeable
            arr += 1.0  # must not raise

    def test_save_is_deterministic(self, tmp_path):
        spec, params, ents, rels = _setup()
        p1, p2 = str(tmp_path / "a.bin"), str(tmp_path / "b.bin")
        save_checkpoint(p1, spec, params, ents, rels)
        save_checkpoint(p2, spec, params, ents, rels)
        assert open(p1, "rb").read() == open(p2, "rb").read()


class TestCorruption:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(DataError, match="magic"):
            load_checkpoint(str(path))

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "future.bin"
        path.write_bytes(MAGIC + struct.pack("<I", VERSION + 9) + b"\x00" * 32)
        with pytest.raises(DataError, match="version"):
            load_checkpoint(str(path))

    def test_trailing_bytes_rejected(self, tmp_path):
        spec, params, ents, rels = _setup(kind="oracle_hadamard")
        path = str(tmp_path / "pad.bin")
        save_checkpoint(path, spec, params, ents, rels)
        with open(path, "ab") as fh:
            fh.write(b"\x00\x01")
        with pytest.raises(DataError, match="trailing"):
            load_checkpoint(path)
