import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siam.data import (BounceEvent, DigitSet, IdxBadMagic, IdxError,
                       IdxTruncated, IdxUnsupportedDtype, MovingConfig,
                       SvtBadDtype, SvtBadMagic, SvtBadVersion, SvtError,
                       SvtTruncated, VideoBatch, builtin_digits,
                       generate_moving, parse_idx, parse_svt, read_svt,
                       split_io, svt_bytes, write_idx, write_svt)
from siam.errors import DataError


class TestIdx:
    def test_handcrafted_u8_image(self):
        # 1x2x2 u8 IDX: magic 00 00 08 03, extents 1,2,2, payload 0,128,255,64
        raw = bytes([0, 0, 0x08, 3]) + struct.pack(">III", 1, 2, 2) \
            + bytes([0, 128, 255, 64])
        assert len(raw) == 20
        arr, meta = parse_idx(raw, rescale=True)
        assert meta.dtype_code == 0x08 and meta.shape == (1, 2, 2)
        expect = np.array([[[0.0, 128 / 255], [1.0, 64 / 255]]],
                          dtype=np.float32)
        assert np.abs(arr - expect).max() < 1e-6
        assert abs(arr[0, 0, 1] - 0.50196) < 1e-5
        assert abs(arr[0, 1, 1] - 0.25098) < 1e-5

    def test_bad_magic(self):
        raw = bytes([1, 0, 0x08, 1]) + struct.pack(">I", 1) + b"\x00"
        with pytest.raises(IdxBadMagic):
            parse_idx(raw)

    def test_truncated_payload_reports_lengths(self):
        raw = bytes([0, 0, 0x08, 1]) + struct.pack(">I", 4) + b"\x00" * 3
        with pytest.raises(IdxTruncated, match="expected 4.*got 3"):
            parse_idx(raw)

    def test_unsupported_dtype_code(self):
        raw = bytes([0, 0, 0x42, 1]) + struct.pack(">I", 1) + b"\x00"
        with pytest.raises(IdxUnsupportedDtype):
            parse_idx(raw)

    @pytest.mark.parametrize("dtype", ["u1", "i1", ">i2", ">i4", ">f4", ">f8"])
    def test_roundtrip_all_dtypes(self, dtype, rng):
        if dtype in ("u1", "i1"):
            arr = rng.integers(0, 100, size=(3, 4)).astype(dtype)
        elif dtype.endswith("f4") or dtype.endswith("f8"):
            arr = rng.standard_normal((2, 3, 4)).astype(dtype)
        else:
            arr = rng.integers(-500, 500, size=(5,)).astype(dtype)
        back, meta = parse_idx(write_idx(arr))
        assert back.shape == arr.shape
        assert np.array_equal(back, arr.astype(back.dtype))

    @given(st.binary(max_size=80))
    @settings(max_examples=300, deadline=None)
    def test_fuzz_structured_errors(self, raw):
        try:
            parse_idx(raw)
        except IdxError:
            pass


class TestSvt:
    def test_roundtrip_bitwise(self, tmp_path, rng):
        vb = VideoBatch(rng.random((2, 3, 1, 8, 8)).astype(np.float32))
        p = tmp_path / "x.svt"
        write_svt(p, vb)
        back = read_svt(p)
        assert back.data.tobytes() == vb.data.tobytes()

    def test_version_error(self):
        raw = b"SVT2" + bytes([1]) + struct.pack("<5I", 1, 1, 1, 1, 1) + b"\x00" * 4
        with pytest.raises(SvtBadVersion):
            parse_svt(raw)

    def test_bad_magic(self):
        with pytest.raises(SvtBadMagic):
            parse_svt(b"JUNKJUNKJUNK" * 4)

    def test_payload_length_from_extents(self, rng):
        vb = VideoBatch(rng.random((2, 4, 2, 32, 32)).astype(np.float32))
        raw = svt_bytes(vb)
        assert len(raw) - 25 == 2 * 4 * 2 * 32 * 32 * 4 == 65536

    def test_length_mismatch(self):
        raw = b"SVT1" + bytes([1]) + struct.pack("<5I", 1, 1, 1, 2, 2) + b"\x00" * 15
        with pytest.raises(SvtTruncated, match="expected 16.*got 15"):
            parse_svt(raw)

    def test_bad_dtype_code(self):
        raw = b"SVT1" + bytes([9]) + struct.pack("<5I", 1, 1, 1, 1, 1) + b"\x00" * 4
        with pytest.raises(SvtBadDtype):
            parse_svt(raw)

    def test_non_finite_rejected(self):
        payload = struct.pack("<f", float("nan"))
        raw = b"SVT1" + bytes([1]) + struct.pack("<5I", 1, 1, 1, 1, 1) + payload
        with pytest.raises(SvtError, match="non-finite"):
            parse_svt(raw)

    @given(st.binary(max_size=120))
    @settings(max_examples=300, deadline=None)
    def test_fuzz_structured_errors(self, raw):
        try:
            parse_svt(raw)
        except SvtError:
            pass


class TestGenerator:
    def test_seed_determinism(self):
        conf = MovingConfig(seed=9, t_total=10)
        a = generate_moving(conf, builtin_digits(), 3)
        b = generate_moving(conf, builtin_digits(), 3)
        assert a.data.tobytes() == b.data.tobytes()

    def test_values_and_bounds(self):
        conf = MovingConfig(seed=3, t_total=15)
        vb = generate_moving(conf, builtin_digits(), 5)
        assert vb.shape == (5, 15, 1, 64, 64)
        assert vb.data.min() >= 0.0 and vb.data.max() <= 1.0
        vb.validate()

    def test_bounce_preserves_speed(self):
        log: list[BounceEvent] = []
        conf = MovingConfig(seed=5, t_total=40, speed_min=3.0, speed_max=5.0)
        generate_moving(conf, builtin_digits(), 10, bounce_log=log)
        assert log, "40 frames at speed >= 3 must produce bounces"
        for ev in log:
            assert abs(ev.speed_before - ev.speed_after) < 1e-9

    def test_empty_digits_rejected(self):
        empty = DigitSet(np.zeros((0, 28, 28), dtype=np.float32))
        with pytest.raises(DataError, match="empty digit"):
            generate_moving(MovingConfig(), empty, 1)

    def test_zero_sequences_rejected(self):
        with pytest.raises(DataError, match="empty dataset"):
            generate_moving(MovingConfig(), builtin_digits(), 0)

    def test_sequence_streams_independent_of_count(self):
        conf = MovingConfig(seed=21, t_total=6)
        small = generate_moving(conf, builtin_digits(), 2)
        large = generate_moving(conf, builtin_digits(), 5)
        assert np.array_equal(small.data, large.data[:2])


class TestSplitIo:
    def test_prefix_and_window(self, rng):
        vb = VideoBatch(rng.random((2, 20, 1, 4, 4)).astype(np.float32))
        a, b = split_io(vb, 10, 10)
        assert np.array_equal(a.data, vb.data[:, :10])
        assert np.array_equal(b.data, vb.data[:, 10:20])

    def test_insufficient_frames(self, rng):
        vb = VideoBatch(rng.random((1, 5, 1, 4, 4)).astype(np.float32))
        with pytest.raises(DataError, match="insufficient"):
            split_io(vb, 3, 3)

    def test_concat_reproduces_prefix(self, rng):
        vb = VideoBatch(rng.random((2, 9, 1, 4, 4)).astype(np.float32))
        a, b = split_io(vb, 4, 5)
        joined = np.concatenate([a.data, b.data], axis=1)
        assert joined.tobytes() == vb.data[:, :9].tobytes()


class TestDigits:
    def test_builtin_shape_and_range(self):
        ds = builtin_digits()
        assert ds.glyphs.shape == (10, 28, 28)
        assert ds.glyphs.min() >= 0.0 and ds.glyphs.max() <= 1.0
        assert list(ds.labels) == list(range(10))

    def test_glyphs_distinct_and_nonempty(self):
        ds = builtin_digits()
        for i in range(10):
            assert ds.glyphs[i].sum() > 10.0  # visible ink
            for j in range(i + 1, 10):
                assert np.abs(ds.glyphs[i] - ds.glyphs[j]).max() > 0.5
