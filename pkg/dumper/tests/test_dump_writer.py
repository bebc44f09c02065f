"""Writer output must satisfy the downstream reader's full validation."""
import numpy as np
import pytest

from attndumper.atnd import (
    LAYOUT_CROSS,
    LAYOUT_JOINT,
    DumpWriteError,
    DumpWriter,
    record_shape,
)
from subjectcut.dumpio import Layout, read_dump_file


def uniform_record(shape):
    rows = np.full(shape, 1.0 / shape[1], dtype=np.float32)
    return rows


def test_record_shape_helper():
    assert record_shape(LAYOUT_JOINT, 3, 16, 2) == (19, 19, 2)
    assert record_shape(LAYOUT_CROSS, 3, 16, 2) == (3, 16, 2)


def test_cross_file_roundtrips_through_reader(tmp_path):
    path = tmp_path / "d.atnd"
    writer = DumpWriter(
        path, layout=LAYOUT_CROSS, steps=2, layers=3,
        tokens=["a", "b"], valid_mask=[True, False],
        height=4, width=4, heads=2,
    )
    rng = np.random.default_rng(5)
    sent = []
    with writer:
        for t in range(2):
            for l in range(3):
                values = rng.random((2, 16, 2)).astype(np.float32)
                sent.append(values)
                writer.add(t, l, values)

    header, tokens, records = read_dump_file(path)
    assert header.layout is Layout.CROSS_ONLY
    assert (header.T, header.L, header.N) == (2, 3, 2)
    assert (header.h, header.w, header.f) == (4, 4, 2)
    assert header.text_first
    assert tokens.tokens == ("a", "b")
    assert tokens.valid_mask == (True, False)
    assert len(records) == 6
    for rec, values in zip(records, sent):
        assert np.array_equal(rec.values, values)


def test_joint_file_roundtrips_through_reader(tmp_path):
    path = tmp_path / "d.atnd"
    shape = record_shape(LAYOUT_JOINT, 2, 4, 1)
    with DumpWriter(
        path, layout=LAYOUT_JOINT, steps=1, layers=1,
        tokens=["x", "y"], height=2, width=2, heads=1,
        text_first=False,
    ) as writer:
        writer.add(0, 0, uniform_record(shape))
    header, tokens, records = read_dump_file(path)
    assert header.layout is Layout.JOINT
    assert not header.text_first
    assert records[0].values.shape == shape


def test_records_must_arrive_in_step_major_order(tmp_path):
    writer = DumpWriter(
        tmp_path / "d.atnd", layout=LAYOUT_CROSS, steps=2, layers=2,
        tokens=["a"], height=2, width=2, heads=1,
    )
    ok = uniform_record((1, 4, 1))
    writer.add(0, 0, ok)
    with pytest.raises(DumpWriteError, match="out of order"):
        writer.add(1, 0, ok)


def test_wrong_shape_rejected(tmp_path):
    writer = DumpWriter(
        tmp_path / "d.atnd", layout=LAYOUT_CROSS, steps=1, layers=1,
        tokens=["a"], height=2, width=2, heads=1,
    )
    with pytest.raises(DumpWriteError, match="shape"):
        writer.add(0, 0, uniform_record((1, 5, 1)))


@pytest.mark.parametrize("bad", [np.nan, np.inf, -0.5])
def test_bad_values_rejected(tmp_path, bad):
    writer = DumpWriter(
        tmp_path / "d.atnd", layout=LAYOUT_CROSS, steps=1, layers=1,
        tokens=["a"], height=2, width=2, heads=1,
    )
    values = uniform_record((1, 4, 1))
    values[0, 1, 0] = bad
    with pytest.raises(DumpWriteError):
        writer.add(0, 0, values)


def test_close_fails_when_records_missing(tmp_path):
    writer = DumpWriter(
        tmp_path / "d.atnd", layout=LAYOUT_CROSS, steps=2, layers=1,
        tokens=["a"], height=2, width=2, heads=1,
    )
    writer.add(0, 0, uniform_record((1, 4, 1)))
    with pytest.raises(DumpWriteError, match="1 of 2"):
        writer.close()


def test_context_exit_on_error_does_not_mask_it(tmp_path):
    with pytest.raises(RuntimeError, match="boom"):
        with DumpWriter(
            tmp_path / "d.atnd", layout=LAYOUT_CROSS, steps=1, layers=1,
            tokens=["a"], height=2, width=2, heads=1,
        ):
            raise RuntimeError("boom")


def test_constructor_validation(tmp_path):
    path = tmp_path / "d.atnd"
    with pytest.raises(DumpWriteError, match="layout"):
        DumpWriter(path, layout=7, steps=1, layers=1, tokens=["a"],
                   height=2, width=2, heads=1)
    with pytest.raises(DumpWriteError, match="empty"):
        DumpWriter(path, layout=LAYOUT_CROSS, steps=1, layers=1, tokens=[],
                   height=2, width=2, heads=1)
    with pytest.raises(DumpWriteError, match="valid"):
        DumpWriter(path, layout=LAYOUT_CROSS, steps=1, layers=1,
                   tokens=["a"], valid_mask=[False],
                   height=2, width=2, heads=1)
    with pytest.raises(DumpWriteError, match="length"):
        DumpWriter(path, layout=LAYOUT_CROSS, steps=1, layers=1,
                   tokens=["a"], valid_mask=[True, False],
                   height=2, width=2, heads=1)
    with pytest.raises(DumpWriteError, match="steps"):
        DumpWriter(path, layout=LAYOUT_CROSS, steps=0, layers=1,
                   tokens=["a"], height=2, width=2, heads=1)
