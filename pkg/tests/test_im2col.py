from collections import Counter

import numpy as np
import pytest

from vdbb import im2col_unit as iu
from vdbb.errors import UnsupportedGeometry
from vdbb.tensor import im2col_lower


def test_single_phase_counts():
    res = iu.stream_tile(np.arange(24, dtype=np.int8).reshape(6, 4))
    assert (res.sram_read_bytes, res.delivered_bytes, res.cycles, res.phases) == (24, 72, 9, 1)
    assert iu.magnification(res) == 3.0


def test_constant_strip():
    res = iu.stream_tile(np.full((6, 10), 7, np.int8))
    assert (res.output_stream.value == 7).all()


def test_single_phase_emission_order():
    strip = np.arange(24, dtype=np.int8).reshape(6, 4)
    vals = iu.stream_tile(strip).output_stream.value
    # cycle 0 = offset (0, 0): output column 0 rows 0..3, then column 1
    assert vals[:8].tolist() == [0, 4, 8, 12, 1, 5, 9, 13]
    # cycle 4 = offset (1, 1)
    assert vals[32:40].tolist() == [5, 9, 13, 17, 6, 10, 14, 18]


@pytest.mark.parametrize("width", [4, 5, 20, 64, 65])
def test_strip_stream_equals_software(width):
    rng = np.random.default_rng(width)
    strip = rng.integers(-128, 128, (6, width, 3)).astype(np.int8)
    res = iu.stream_tile(strip)
    ref = im2col_lower(strip, 3)
    s = res.output_stream
    assert np.array_equal(s.to_matrix(*ref.shape), ref)
    # each lowered element delivered exactly once
    assert len(s.value) == ref.size
    assert len(set(zip(s.pixel.tolist(), s.column.tolist()))) == ref.size
    assert Counter(s.value.tolist()) == Counter(ref.ravel().tolist())


def test_long_strip_magnification():
    assert iu.magnification(iu.stream_tile(np.zeros((6, 64), np.int8))) >= 2.5


def test_interior_phases_read_24():
    state = iu.Im2colUnitState()
    strip = np.arange(6 * 10, dtype=np.int8).reshape(6, 10)
    for ox0 in range(0, 8, 2):
        state.refill(strip[:, ox0:ox0 + 4], np.ones((6, 4), bool))
        for _ in range(9):
            assert state.step(2, 4).shape == (2, 4)
    assert state.refills == 4 and state.read_bytes == 96 and state.delivered_bytes == 288


def test_refill_only_on_phase_boundary():
    state = iu.Im2colUnitState()
    state.refill(np.zeros((6, 4), np.int8), np.ones((6, 4), bool))
    state.step(2, 4)
    with pytest.raises(RuntimeError):
        state.refill(np.zeros((6, 4), np.int8), np.ones((6, 4), bool))


@pytest.mark.parametrize("h, w, c, p", [(8, 8, 2, 0), (9, 7, 3, 1), (4, 4, 1, 1), (56, 56, 1, 1)])
def test_feature_map_stream_equals_software(h, w, c, p):
    rng = np.random.default_rng(h * w)
    fm = rng.integers(-128, 128, (h, w, c)).astype(np.int8)
    res = iu.stream_feature_map(fm, 3, 1, p, keep_stream=True)
    ref = im2col_lower(fm, 3, 1, p)
    assert np.array_equal(res.output_stream.to_matrix(*ref.shape), ref)
    assert res.delivered_bytes == ref.size


def test_padding_is_not_read():
    unpadded = iu.stream_feature_map(np.zeros((6, 6, 1), np.int8), 3, 1, 0)
    padded = iu.stream_feature_map(np.zeros((4, 4, 1), np.int8), 3, 1, 1)
    assert padded.delivered_bytes == 16 * 9
    assert padded.sram_read_bytes < unpadded.sram_read_bytes


def test_pointwise_bypass():
    res = iu.stream_feature_map(np.zeros((5, 5, 4), np.int8), 1)
    assert res.bypassed and iu.magnification(res) == 1.0


def test_five_by_five_falls_back():
    res = iu.stream_feature_map(np.zeros((9, 9, 2), np.int8), 5, 1, 2)
    assert res.software_fallback and iu.magnification(res) == 1.0


@pytest.mark.parametrize("k, s", [(5, 1), (3, 2), (1, 1)])
def test_stream_tile_unsupported(k, s):
    with pytest.raises(UnsupportedGeometry):
        iu.stream_tile(np.zeros((6, 8), np.int8), k, s)


def test_stream_tile_needs_six_rows():
    with pytest.raises(UnsupportedGeometry):
        iu.stream_tile(np.zeros((5, 8), np.int8))


def test_magnification_without_reads():
    with pytest.raises(ZeroDivisionError):
        iu.magnification(iu.Im2colResult(0, 0, 0))


def test_expected_magnification():
    assert iu.expected_magnification(6, 64, 3, 1, 0) == 3.0
    assert 2.9 < iu.expected_magnification(56, 56, 3, 1, 1) < 3.2
    assert iu.expected_magnification(56, 56, 1, 1, 0) == 1.0
