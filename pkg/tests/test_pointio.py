import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lidarbg.errors import FormatError, IoError, NonMonotonicFrameId
from lidarbg.pointio import CSV_COLUMNS, Frame, PointRecord, read_frames, validate_frame, write_frames

HEADER = ",".join(CSV_COLUMNS)


def mixed_frame(fid=0, ts=0.0):
    nan = np.nan
    return Frame(fid, ts, [0, 1, 2, 3], [0.2, 90.0, 359.9, 360.0],
                 [10.0, nan, nan, 3.5],
                 [[nan, nan, nan], [1.0, 2.0, -0.5], [nan, nan, nan], [nan, nan, nan]],
                 [12.0, 255.0, nan, 0.0], [True, True, False, True])


record = st.builds(
    lambda beam, az, r, inten, ret: PointRecord(0, beam, az, r if ret else None, None, None, None,
                                                inten if ret else None, ret),
    st.integers(0, 127), st.floats(1e-3, 360.0), st.floats(0, 500), st.floats(0, 255), st.booleans())


@pytest.mark.parametrize("fmt,suffix", [("csv", ".csv"), ("binary", ".bin")])
class TestRoundTrip:
    def test_mixed(self, tmp_path, fmt, suffix):
        frames = [mixed_frame(0, 0.0), Frame.empty(1, 0.1), mixed_frame(5, 0.5)]
        path = tmp_path / f"f{suffix}"
        write_frames(frames, path, fmt)
        assert list(read_frames(path, fmt)) == frames

    def test_format_inferred(self, tmp_path, fmt, suffix):
        path = tmp_path / f"f{suffix}"
        write_frames([mixed_frame()], path)
        assert list(read_frames(path)) == [mixed_frame()]


@given(st.lists(record, max_size=20))
def test_records_roundtrip_binary(tmp_path_factory, recs):
    path = tmp_path_factory.mktemp("rt") / "x.bin"
    f = Frame.from_records(0, 1.0, recs)
    write_frames([f], path)
    (g,) = read_frames(path)
    assert g == f
    assert list(g.records()) == recs


@given(st.lists(record, max_size=10))
def test_records_roundtrip_csv(tmp_path_factory, recs):
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    f = Frame.from_records(0, 1.0, recs)
    write_frames([f], path)
    (g,) = read_frames(path)
    assert g == f


class TestCsvErrors:
    def write(self, tmp_path, *rows):
        p = tmp_path / "bad.csv"
        p.write_text("\n".join([HEADER, *rows]) + "\n")
        return p

    @pytest.mark.parametrize("row,reason", [
        ("0,0.0,0,0.0,1.0,,,,5,Return", "azimuth"),
        ("0,0.0,0,361,1.0,,,,5,Return", "azimuth"),
        ("0,0.0,-1,10,1.0,,,,5,Return", "beam_id"),
        ("0,0.0,0,10,,1,2,,5,Return", "partial"),
        ("0,0.0,0,10,1.0,1,2,3,5,Return", "exactly one"),
        ("0,0.0,0,10,-1.0,,,,5,Return", "negative"),
        ("0,0.0,0,10,1.0,,,,300,Return", "intensity"),
        ("0,0.0,0,10,1.0,,,,,NoReturn", "NoReturn"),
        ("0,0.0,0,10,1.0,,,,5,Maybe", "return_flag"),
        ("0,0.0,0,ten,1.0,,,,5,Return", "not a number"),
        ("0,0.0,0,10,1.0,,,5,Return", "fields"),
        ("0,0.0,0,10,inf,,,,5,Return", None),
    ])
    def test_line_number(self, tmp_path, row, reason):
        p = self.write(tmp_path, "0,0.0,0,10,1.0,,,,5,Return", row)
        if reason is None:
            list(read_frames(p))
            return
        with pytest.raises(FormatError) as e:
            list(read_frames(p))
        assert e.value.row == 3
        assert reason in e.value.reason

    def test_non_monotonic(self, tmp_path):
        p = self.write(tmp_path, "1,0.1,0,10,1.0,,,,5,Return", "0,0.2,0,10,1.0,,,,5,Return")
        with pytest.raises(NonMonotonicFrameId):
            list(read_frames(p))

    def test_timestamp_must_increase(self, tmp_path):
        p = self.write(tmp_path, "1,0.5,0,10,1.0,,,,5,Return", "2,0.5,0,10,1.0,,,,5,Return")
        with pytest.raises(FormatError):
            list(read_frames(p))

    def test_streaming_yields_before_error(self, tmp_path):
        p = self.write(tmp_path, "0,0.0,0,10,1.0,,,,5,Return", "1,0.1,0,10,1.0,,,,999,Return")
        it = read_frames(p)
        assert next(it).frame_id == 0
        with pytest.raises(FormatError):
            next(it)

    def test_max_intensity_override(self, tmp_path):
        p = self.write(tmp_path, "0,0.0,0,10,1.0,,,,300,Return")
        (f,) = read_frames(p, max_intensity=1000)
        assert f.intensity[0] == 300


class TestBinaryErrors:
    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"NOTPTS\x01\x00")
        with pytest.raises(FormatError):
            list(read_frames(p))

    def test_truncated(self, tmp_path):
        p = tmp_path / "x.bin"
        write_frames([mixed_frame()], p)
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(FormatError):
            list(read_frames(p))

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            read_frames(tmp_path / "none.bin")


def test_validate_frame_flags_first_bad_point():
    f = mixed_frame()
    validate_frame(f)
    bad = Frame(0, 0.0, [0, 0], [10.0, 10.0], [1.0, 1.0], np.full((2, 3), np.nan), [5.0, 400.0], [True, True])
    with pytest.raises(FormatError) as e:
        validate_frame(bad)
    assert e.value.row == 1


def test_frame_arrays_are_read_only():
    f = mixed_frame()
    with pytest.raises(ValueError):
        f.range_m[0] = 1.0


class TestEdgeCases:
    @pytest.mark.parametrize("suffix,content", [(".csv", b""), (".csv", (HEADER + "\n").encode()), (".bin", b"")])
    def test_empty_file_is_empty_stream(self, tmp_path, suffix, content):
        path = tmp_path / f"empty{suffix}"
        path.write_bytes(content)
        assert list(read_frames(path)) == []

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(IoError):
            write_frames([mixed_frame()], tmp_path / "no" / "such" / "dir" / "f.csv")

    @pytest.mark.parametrize("suffix", [".csv", ".bin"])
    def test_thousand_random_records(self, tmp_path, suffix):
        r = np.random.default_rng(11)
        n = 1000
        ret = r.random(n) < 0.9
        f = Frame(3, 0.3, r.integers(0, 128, n), r.uniform(1e-3, 360.0, n),
                  np.where(ret, r.uniform(0, 200, n), np.nan), np.full((n, 3), np.nan),
                  np.where(ret, r.integers(0, 256, n).astype(float), np.nan), ret)
        write_frames([f], tmp_path / f"big{suffix}")
        assert list(read_frames(tmp_path / f"big{suffix}")) == [f]

    def test_streaming_memory_is_bounded(self, tmp_path):
        import tracemalloc

        frames = [mixed_frame(i, i * 0.1) for i in range(3000)]
        path = tmp_path / "many.bin"
        write_frames(frames, path)
        tracemalloc.start()
        count = sum(1 for _ in read_frames(path))
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        assert count == 3000
        assert peak < path.stat().st_size
