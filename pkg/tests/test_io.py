import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _helpers import packet_from_rows, random_packet
from evdn.core import Event, SensorGeometry
from evdn.io import (
    EventFormatError,
    EventParseError,
    TruncationError,
    load_events,
    read_events_binary,
    read_events_text,
    save_events,
    write_events_binary,
    write_events_text,
)


def test_text_single_event():
    pk = read_events_text(b"346,260\n1000,10,20,1\n")
    assert pk.geometry == SensorGeometry(346, 260)
    assert list(pk) == [Event(10, 20, 1000, 1)]


def test_text_comments_and_zero_polarity():
    pk = read_events_text(b"# recorded\n4,4\n\n# first\n5,1,2,0\n")
    assert list(pk) == [Event(1, 2, 5, -1)]


def test_text_malformed_line_number():
    with pytest.raises(EventParseError, match="line 2") as info:
        read_events_text(b"346,260\nabc,1,2,1\n")
    assert info.value.line_no == 2


def test_text_polarity_out_of_range():
    with pytest.raises(EventParseError, match="polarity out of range"):
        read_events_text(b"346,260\n1,1,2,2\n")


def test_text_field_count():
    with pytest.raises(EventParseError, match="expected 4 fields"):
        read_events_text(b"346,260\n1,1,2\n")


def test_text_missing_header():
    with pytest.raises(EventFormatError, match="header"):
        read_events_text(b"# nothing\n")
    with pytest.raises(EventFormatError, match="header"):
        read_events_text(b"1000,10,20,1\n")


def test_text_resorts_out_of_order(caplog):
    pk = read_events_text(b"4,4\n5,0,0,1\n3,1,0,1\n5,2,0,0\n")
    assert pk.t.tolist() == [3, 5, 5]
    assert pk.x.tolist() == [1, 0, 2]
    assert pk.meta["resorted"] == 1
    assert "re-sorted" in caplog.text


def test_text_rejects_out_of_bounds():
    with pytest.raises(EventFormatError, match="x out of bounds"):
        read_events_text(b"4,4\n1,4,0,1\n")


def test_text_empty_and_one_event_output():
    buf = io.BytesIO()
    n = write_events_text(packet_from_rows(7, 3, []), buf)
    assert buf.getvalue() == b"7,3\n" and n == 4
    buf = io.BytesIO()
    write_events_text(packet_from_rows(7, 3, [(12, 6, 2, -1)]), buf)
    assert buf.getvalue() == b"7,3\n12,6,2,0\n"


def test_binary_header_only():
    buf = io.BytesIO()
    assert write_events_binary(packet_from_rows(3, 2, []), buf) == 16
    pk = read_events_binary(buf.getvalue())
    assert len(pk) == 0 and pk.geometry == SensorGeometry(3, 2)


def test_binary_layout():
    buf = io.BytesIO()
    write_events_binary(packet_from_rows(300, 2, [(2**33, 299, 1, -1)]), buf)
    data = buf.getvalue()
    assert data[:4] == b"EVT1"
    assert data[4:8] == (300).to_bytes(2, "little") + (2).to_bytes(2, "little")
    assert data[8:16] == (1).to_bytes(8, "little")
    assert data[16:] == (2**33).to_bytes(8, "little") + (299).to_bytes(2, "little") + (1).to_bytes(2, "little") + b"\xff"


def test_binary_bad_magic_and_truncation():
    buf = io.BytesIO()
    write_events_binary(random_packet(np.random.default_rng(1), n=4), buf)
    data = buf.getvalue()
    with pytest.raises(EventFormatError, match="magic"):
        read_events_binary(b"EVT2" + data[4:])
    with pytest.raises(TruncationError) as info:
        read_events_binary(data[:-3])
    assert info.value.expected == len(data) and info.value.actual == len(data) - 3
    assert "expected" in str(info.value) and "got" in str(info.value)
    with pytest.raises(TruncationError):
        read_events_binary(data[:10])


def test_binary_rejects_bad_polarity():
    buf = io.BytesIO()
    write_events_binary(packet_from_rows(4, 4, [(1, 1, 1, 1)]), buf)
    data = bytearray(buf.getvalue())
    data[-1] = 0
    with pytest.raises(EventFormatError, match="polarity"):
        read_events_binary(bytes(data))


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), big_t=st.booleans())
def test_round_trips(seed, big_t):
    rng = np.random.default_rng(seed)
    pk = random_packet(rng, max_n=300, t_span=2**62 if big_t else None)
    for write, read in ((write_events_text, read_events_text), (write_events_binary, read_events_binary)):
        first = io.BytesIO()
        write(pk, first)
        back = read(first.getvalue())
        assert back.same_events(pk)
        second = io.BytesIO()
        write(back, second)
        assert second.getvalue() == first.getvalue()


def test_load_save_detects_format(tmp_path):
    pk = random_packet(np.random.default_rng(3), n=50)
    save_events(pk, tmp_path / "a.evt")
    save_events(pk, tmp_path / "a.txt")
    assert (tmp_path / "a.evt").read_bytes()[:4] == b"EVT1"
    assert (tmp_path / "a.txt").read_bytes().startswith(f"{pk.geometry.width},".encode())
    assert load_events(tmp_path / "a.evt").same_events(pk)
    assert load_events(tmp_path / "a.txt").same_events(pk)


def test_non_strict_read_keeps_order(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("4,4\n5,0,0,1\n3,1,0,1\n")
    assert load_events(path, strict=False).t.tolist() == [5, 3]
