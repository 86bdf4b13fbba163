# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

import unittest

import pytest

from gfmreserve.errors import DecodeError
from gfmreserve.protocol import (
    ActRecord,
    ConsensusMsg,
    LineFramer,
    MeasRecord,
    decode,
    decode_consensus,
    encode,
)


class TestCodec(unittest.TestCase):
    def test_consensus_record_layout(self):
        msg = ConsensusMsg(1, 7, 0.123, 1e-3, 0.48, -2.5, 0.0)
        data = msg.encode()
        self.assertEqual(data, b"DAPI,1,7,0.123,0.001,0.48,-2.5,0.0\n")
        self.assertEqual(decode(data), msg)

    def test_floats_survive_exactly(self):
        record = MeasRecord(3, 1.0 / 3.0, -2.0e-17)
        self.assertEqual(decode(encode(record)), record)

    def test_line_endings_are_optional(self):
        expected = ActRecord(2, 376.99111843077515, 391.9)
        self.assertEqual(decode(b"ACT,2,376.99111843077515,391.9"), expected)
        self.assertEqual(decode(b"ACT,2,376.99111843077515,391.9\r\n"), expected)

    def test_non_finite_values_are_not_encoded(self):
        with self.assertRaises(ValueError):
            MeasRecord(1, float("nan"), 0.0).encode()

    def test_decode_consensus_rejects_other_records(self):
        with self.assertRaises(DecodeError) as ctx:
            decode_consensus(b"MEAS,1,2.0,3.0\n")
        self.assertEqual(ctx.exception.field_index, 0)


@pytest.mark.parametrize(
    "data, index",
    [
        (b"PING,1,2\n", 0),
        (b"\xff\xfe\n", 0),
        (b"MEAS,1,2.0\n", 3),
        (b"ACT,1,377.0,391.9,5.0\n", 4),
        (b"DAPI,1,-1,0.0,0.0,0.0,0.0,0.0\n", 2),
        (b"MEAS,1,abc,2.0\n", 2),
        (b"MEAS,1.5,2.0,3.0\n", 1),
        (b"MEAS,1,nan,2.0\n", 2),
        (b"MEAS,1,2.0,1e999\n", 3),
    ],
)
def test_decode_error_names_field(data, index):
    with pytest.raises(DecodeError) as excinfo:
        decode(data)
    assert excinfo.value.field_index == index
    assert excinfo.value.record == data


class TestLineFramer(unittest.TestCase):
    def test_records_split_across_chunks(self):
        framer = LineFramer()
        self.assertEqual(framer.feed(b"MEAS,1,2.0,3.0\nACT,1"), [MeasRecord(1, 2.0, 3.0)])
        self.assertEqual(framer.feed(b",377.0,391.9\n"), [ActRecord(1, 377.0, 391.9)])
        self.assertEqual(framer.errors, [])

    def test_malformed_line_is_skipped(self):
        framer = LineFramer()
        records = framer.feed(b"MEAS,1,2.0\n\nMEAS,2,4.0,5.0\n")
        self.assertEqual(records, [MeasRecord(2, 4.0, 5.0)])
        self.assertEqual(len(framer.errors), 1)
        self.assertEqual(framer.errors[0].field_index, 3)

    def test_over_long_line_is_discarded(self):
        framer = LineFramer(max_record=32)
        self.assertEqual(framer.feed(b"x" * 40), [])
        records = framer.feed(b"yyy\nMEAS,1,2.0,3.0\n")
        self.assertEqual(records, [MeasRecord(1, 2.0, 3.0)])
        self.assertEqual(len(framer.errors), 1)
        self.assertIn("too long", str(framer.errors[0]))

    def test_flush_decodes_unterminated_tail(self):
        framer = LineFramer()
        self.assertEqual(framer.feed(b"ACT,2,377.0,391.9"), [])
        self.assertEqual(framer.flush(), [ActRecord(2, 377.0, 391.9)])
        self.assertEqual(framer.flush(), [])
