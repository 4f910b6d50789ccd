import struct

import numpy as np
import pytest

from qdetection.attacks import PoisonedDataset, flip_labels_targeted
from qdetection.data import DataError, SyntheticSpec, export, ingest, synth, synth_split
from qdetection.domain_model import accuracy, fit_classifier


def write(path, text):
    path.write_text(text)
    return path


class TestCsv:
    def test_three_rows(self, tmp_path):
        d = ingest(write(tmp_path / "a.csv", "f0,f1,label\n0.1,0.2,0\n0.3,0.4,1\n0.5,0.6,0\n"))
        assert (len(d), d.n_features) == (3, 2)
        assert not d.flags.any()

    def test_seven_labels_recount(self, tmp_path):
        raw = [3, 17, 5, 99, 3, 42, 8, 11, 17]
        body = "".join(f"0.5,{v}\n" for v in raw)
        d = ingest(write(tmp_path / "b.csv", "f0,label\n" + body))
        assert d.n_classes == len(set(raw)) == 7
        # dense re-indexing keeps the ordering of the original values
        order = sorted(set(raw))
        assert d.labels.tolist() == [order.index(v) for v in raw]

    def test_string_labels(self, tmp_path):
        d = ingest(write(tmp_path / "c.csv", "f0,label\n0.1,cat\n0.2,dog\n0.3,cat\n"))
        assert d.labels.tolist() == [0, 1, 0]

    def test_round_trip_with_flags(self, tmp_path, rng):
        d = PoisonedDataset(rng.uniform(size=(20, 3)), np.arange(20) % 2,
                            meta={"n_classes": 2})
        d = flip_labels_targeted(d, 0, 1, 0.3, seed=0)
        back = ingest(export(d, tmp_path / "d.csv"))
        assert np.array_equal(back.features, d.features)
        assert np.array_equal(back.labels, d.labels) and np.array_equal(back.flags, d.flags)

    def test_out_of_range_reports_line_and_column(self, tmp_path):
        path = write(tmp_path / "e.csv", "f0,f1,label\n0.1,0.2,0\n0.3,2.0,1\n")
        with pytest.raises(DataError, match=r"line 3, column 'f1'.*2\.0"):
            ingest(path)

    def test_missing_label_header(self, tmp_path):
        with pytest.raises(DataError, match="line 1"):
            ingest(write(tmp_path / "f.csv", "f0,f1\n0.1,0.2\n"))

    def test_ragged_row(self, tmp_path):
        with pytest.raises(DataError, match="line 2"):
            ingest(write(tmp_path / "g.csv", "f0,f1,label\n0.1,0\n"))

    def test_bad_number(self, tmp_path):
        with pytest.raises(DataError, match="line 2"):
            ingest(write(tmp_path / "h.csv", "f0,label\nabc,0\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            ingest(tmp_path / "nope.csv")


class TestQds1:
    def test_round_trip_bit_identical(self, tmp_path, rng):
        X = rng.uniform(size=(15, 4)).astype(np.float32).astype(np.float64)
        d = PoisonedDataset(X, np.arange(15) % 3, meta={"n_classes": 3})
        back = ingest(export(d, tmp_path / "x.qds1", "qds1"))
        assert back.features.tobytes() == d.features.tobytes()
        assert np.array_equal(back.labels, d.labels) and back.n_classes == 3
        again = export(back, tmp_path / "y.qds1", "qds1")
        assert again.read_bytes() == (tmp_path / "x.qds1").read_bytes()

    def test_header_layout(self, tmp_path):
        d = PoisonedDataset([[0.5, 0.25]], [0], meta={"n_classes": 2})
        raw = export(d, tmp_path / "z.qds1", "qds1", with_flags=False).read_bytes()
        assert raw[:4] == b"QDS1"
        assert struct.unpack_from("<IIIB", raw, 4) == (1, 2, 2, 0)
        assert np.frombuffer(raw, "<f4", 2, 17).tolist() == [0.5, 0.25]
        assert np.frombuffer(raw, "<u2", 1, 25).tolist() == [0]
        assert len(raw) == 27

    def test_flags_stored(self, tmp_path):
        d = PoisonedDataset([[0.5], [0.5]], [0, 1], flags=[True, False],
                            original_labels=[1, 1])
        back = ingest(export(d, tmp_path / "f.qds1", "qds1"), "qds1")
        assert back.flags.tolist() == [True, False]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.qds1"
        path.write_bytes(b"QDS2" + bytes(13))
        with pytest.raises(DataError, match="offset 0"):
            ingest(path)

    def test_truncated(self, tmp_path):
        d = PoisonedDataset([[0.5]], [0], meta={"n_classes": 2})
        raw = export(d, tmp_path / "t.qds1", "qds1").read_bytes()
        (tmp_path / "t.qds1").write_bytes(raw[:-1])
        with pytest.raises(DataError, match="offset"):
            ingest(tmp_path / "t.qds1")

    def test_feature_out_of_range_offset(self, tmp_path):
        raw = struct.pack("<4sIIIB", b"QDS1", 1, 2, 1, 0) + struct.pack("<ff", 0.5, 1.5)
        raw += struct.pack("<H", 0)
        (tmp_path / "r.qds1").write_bytes(raw)
        with pytest.raises(DataError, match="offset 21"):
            ingest(tmp_path / "r.qds1")

    def test_label_not_below_classes(self, tmp_path):
        raw = struct.pack("<4sIIIB", b"QDS1", 1, 1, 2, 0) + struct.pack("<fH", 0.5, 5)
        (tmp_path / "l.qds1").write_bytes(raw)
        with pytest.raises(DataError, match="label 5"):
            ingest(tmp_path / "l.qds1")


class TestSynth:
    def test_shapes(self):
        d = synth(SyntheticSpec(n=600, d=16, classes=3))
        assert d.features.shape == (600, 16) and d.n_classes == 3
        assert d.features.min() >= 0 and d.features.max() <= 1
        assert np.bincount(d.labels).tolist() == [200, 200, 200]

    def test_same_seed_same_bytes(self):
        a, b = synth(SyntheticSpec(seed=4)), synth(SyntheticSpec(seed=4))
        assert a.features.tobytes() == b.features.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()
        assert a.features.tobytes() != synth(SyntheticSpec(seed=5)).features.tobytes()

    def test_separable_at_small_spread(self):
        train, test = synth_split(SyntheticSpec(n=600, d=16, classes=3, spread=0.05,
                                                test_n=300, seed=1))
        p = fit_classifier(train.features, train.labels, 3, steps=300, lr=0.5)
        assert accuracy(p, test.features, test.labels) >= 0.95

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            SyntheticSpec(classes=1)
