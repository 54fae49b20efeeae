import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import (
    BackboneError,
    PipelineIOError,
    RecordFormatError,
    RecordValidationError,
    ResampleError,
)

from .backbone import EnvelopeCurve, IdealizedBackbone, extract_envelope, idealize
from .ingest import ColumnMapping, SignalPair, load_record, validate, write_record
from .resample import detect_reversals, irregular_resample, regular_reduce


def pair(displacement, load):
    return SignalPair(displacement=np.asarray(displacement), load=np.asarray(load))


def envelope(points):
    points = np.asarray(points, dtype=float)
    return EnvelopeCurve(
        displacement=points[:, 0], load=points[:, 1], indices=np.arange(len(points))
    )


class TempDirMixin:
    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()

    def write(self, name, text):
        path = self.tmp / name
        path.write_text(text, encoding="utf-8")
        return path


class LoadRecordTest(TempDirMixin, SimpleTestCase):
    def test_three_rows(self):
        path = self.write("r.csv", "0,0\n1,5\n2,10\n")
        record = load_record(path)
        self.assertEqual(len(record), 3)
        np.testing.assert_array_equal(record.displacement, [0.0, 1.0, 2.0])
        np.testing.assert_array_equal(record.load, [0.0, 5.0, 10.0])

    def test_header_carries_units(self):
        path = self.write("r.csv", "displacement_in,load_kip\n0,0\n1,5\n")
        record = load_record(path)
        self.assertEqual(len(record), 2)
        self.assertEqual(record.displacement_unit, "in")
        self.assertEqual(record.load_unit, "kip")

    def test_column_mapping_and_tab(self):
        path = self.write("r.tsv", "t\tload\tdisp\n0\t0\t0\n1\t5\t0.5\n2\t-5\t-0.5\n")
        columns = ColumnMapping(displacement_column=2, load_column=1, delimiter="tab")
        record = load_record(path, columns)
        np.testing.assert_array_equal(record.displacement, [0.0, 0.5, -0.5])
        np.testing.assert_array_equal(record.load, [0.0, 5.0, -5.0])

    def test_non_numeric_cell_names_line(self):
        rows = [f"{i},{i * 2}" for i in range(6)] + ["6,abc", "7,14"]
        path = self.write("r.csv", "\n".join(rows) + "\n")
        with self.assertRaises(RecordFormatError) as ctx:
            load_record(path)
        self.assertEqual(ctx.exception.line, 7)
        self.assertIn("line 7", str(ctx.exception))

    def test_non_numeric_cell_after_header(self):
        path = self.write("r.csv", "d,f\n0,0\n1,x\n")
        with self.assertRaises(RecordFormatError) as ctx:
            load_record(path)
        self.assertEqual(ctx.exception.line, 3)

    def test_single_row_too_short(self):
        path = self.write("r.csv", "0,0\n")
        with self.assertRaisesRegex(RecordFormatError, "too short"):
            load_record(path)

    def test_empty_file(self):
        path = self.write("r.csv", "")
        with self.assertRaisesRegex(RecordFormatError, "line 1"):
            load_record(path)

    def test_missing_file(self):
        with self.assertRaises(PipelineIOError):
            load_record(self.tmp / "nope.csv")

    def test_missing_column(self):
        path = self.write("r.csv", "0,0\n1,5\n")
        with self.assertRaises(RecordFormatError):
            load_record(path, ColumnMapping(load_column=3))

    def test_unsupported_delimiter(self):
        with self.assertRaises(ValueError):
            ColumnMapping(delimiter="|")

    def test_write_then_load(self):
        rng = np.random.default_rng(0)
        original = SignalPair(
            displacement=rng.normal(size=200) * 30.0,
            load=rng.normal(size=200) * 1e3,
            displacement_unit="mm",
            load_unit="kN",
        )
        path = write_record(self.tmp / "out.csv", original)
        self.assertTrue(path.read_text(encoding="utf-8").startswith("displacement_mm,load_kN\n"))

        loaded = load_record(path)
        np.testing.assert_allclose(loaded.displacement, original.displacement, rtol=1e-8)
        np.testing.assert_allclose(loaded.load, original.load, rtol=1e-8)
        self.assertEqual(loaded.displacement_unit, "mm")
        self.assertEqual(loaded.load_unit, "kN")

    def test_negative_zero_written_as_zero(self):
        path = write_record(self.tmp / "out.csv", pair([-0.0, 1.0], [0.0, -0.0]))
        self.assertEqual(path.read_text(encoding="utf-8"), "displacement_mm,load_kN\n0,0\n1,0\n")


class ValidateTest(SimpleTestCase):
    def test_valid_pair_returned_unchanged(self):
        record = pair([0, 1, 2], [0, 5, 10])
        self.assertIs(validate(record), record)
        self.assertIs(validate(validate(record)), record)

    def test_nan_names_index(self):
        load = [0.0, 1.0, 2.0, 3.0, math.nan, 5.0]
        with self.assertRaises(RecordValidationError) as ctx:
            validate(pair(np.arange(6), load))
        self.assertEqual(len(ctx.exception.errors), 1)
        self.assertIn("index 4", ctx.exception.errors[0])

    def test_length_mismatch(self):
        with self.assertRaisesRegex(RecordValidationError, "length mismatch"):
            validate(pair(np.arange(5), np.arange(6)))

    def test_every_violation_reported(self):
        with self.assertRaises(RecordValidationError) as ctx:
            validate(pair([math.inf], [0.0, 1.0]))
        self.assertEqual(len(ctx.exception.errors), 3)


class RegularReduceTest(SimpleTestCase):
    def test_cardinality(self):
        self.assertEqual(len(regular_reduce(pair(np.arange(10), np.arange(10)), 2)), 5)
        reduced = regular_reduce(pair(np.arange(7), np.arange(7) * 2.0), 3)
        np.testing.assert_array_equal(reduced.displacement, [0, 3, 6])
        np.testing.assert_array_equal(reduced.load, [0, 6, 12])

    def test_identity(self):
        record = pair(np.linspace(0, 1, 9), np.linspace(0, 2, 9))
        reduced = regular_reduce(record, 1)
        np.testing.assert_array_equal(reduced.displacement, record.displacement)
        np.testing.assert_array_equal(reduced.load, record.load)

    def test_invalid_step(self):
        with self.assertRaises(ResampleError):
            regular_reduce(pair([0, 1], [0, 1]), 0)


class DetectReversalsTest(SimpleTestCase):
    def test_zigzag(self):
        np.testing.assert_array_equal(detect_reversals([0, 2, 0, 2, 0]), [2, 3, 4, 5])

    def test_monotonic(self):
        np.testing.assert_array_equal(detect_reversals([0, 1, 2, 3]), [4])

    def test_plateau_keeps_direction(self):
        np.testing.assert_array_equal(detect_reversals([0, 1, 1, 2, 1]), [4, 5])


def triangle_protocol(rng):
    """Irregularly sampled multi-cycle triangle wave; returns (displacement, load)."""
    peaks = rng.uniform(0.3, 3.0, rng.integers(1, 5))
    stops = [0.0]
    for peak in peaks:
        stops += [peak, -peak * rng.uniform(0.5, 1.0)]
    pieces = [np.array([0.0])]
    for start, stop in zip(stops, stops[1:]):
        count = rng.integers(3, 40)
        fractions = np.sort(rng.uniform(0, 1, count - 1))
        pieces.append(start + (stop - start) * np.append(fractions, 1.0))
    d = np.concatenate(pieces)
    load = 10.0 * np.sin(d) + rng.normal(scale=0.1, size=d.size)
    return d, load


def interpolation_oracle(d, load, scale, changes):
    """Loop-by-loop re-statement of irregular resampling."""
    grid = [math.floor(round(x * scale, 9)) for x in d]
    out_d, out_l = [grid[0]], [load[0]]
    start = 0
    for change in changes:
        end = change - 1
        a, b = grid[start], grid[end]
        if a == b:
            start = end
            continue
        sign = 1 if b > a else -1
        knots = []
        for i in range(start, end + 1):
            if not knots or grid[i] != knots[-1][0]:
                knots.append((grid[i], load[i]))
        for q in range(a + sign, b + sign, sign):
            for (k0, l0), (k1, l1) in zip(knots, knots[1:]):
                if min(k0, k1) <= q <= max(k0, k1):
                    out_l.append(l0 + (l1 - l0) * (q - k0) / (k1 - k0))
                    break
            out_d.append(q)
        start = end
    return np.array(out_d) / scale, np.array(out_l)


class IrregularResampleTest(SimpleTestCase):
    def test_single_ramp(self):
        resampled = irregular_resample(pair([0.0, 0.25], [0.0, 10.0]), 20, [2])
        np.testing.assert_array_equal(
            resampled.displacement, [0.0, 0.05, 0.1, 0.15, 0.2, 0.25]
        )
        np.testing.assert_array_equal(resampled.load, [0.0, 2.0, 4.0, 6.0, 8.0, 10.0])

    def test_on_grid_input_is_reproduced(self):
        d = np.array([0, 1, 2, 3, 2, 1, 0, -1, -2, -1, 0]) / 100
        load = np.array([0.0, 3.0, 5.0, 6.0, 2.0, -1.0, -3.0, -5.0, -6.0, -2.0, 1.0])
        resampled = irregular_resample(pair(d, load), 100, detect_reversals(d))
        np.testing.assert_allclose(resampled.displacement, d, rtol=0, atol=1e-15)
        np.testing.assert_allclose(resampled.load, load, rtol=1e-12, atol=1e-12)

    def test_randomized_grid_and_oracle(self):
        rng = np.random.default_rng(42)
        for case in range(100):
            scale = (11, 20, 100)[case % 3]
            d, load = triangle_protocol(rng)
            changes = detect_reversals(d)
            resampled = irregular_resample(pair(d, load), scale, changes)

            ticks = resampled.displacement * scale
            np.testing.assert_allclose(ticks, np.rint(ticks), rtol=0, atol=1e-9)
            self.assertTrue(np.all(np.abs(np.diff(np.rint(ticks))) == 1))
            np.testing.assert_allclose(
                np.abs(np.diff(resampled.displacement)), 1 / scale, rtol=0, atol=1e-12
            )

            oracle_d, oracle_l = interpolation_oracle(d, load, scale, changes)
            np.testing.assert_allclose(resampled.displacement, oracle_d, rtol=0, atol=1e-12)
            np.testing.assert_allclose(
                resampled.load, oracle_l, rtol=1e-12, atol=1e-12 * np.abs(load).max()
            )

    def test_idempotent(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            d, load = triangle_protocol(rng)
            once = irregular_resample(pair(d, load), 20, detect_reversals(d))
            twice = irregular_resample(once, 20, detect_reversals(once.displacement))
            np.testing.assert_allclose(twice.displacement, once.displacement, rtol=0, atol=1e-12)
            np.testing.assert_allclose(twice.load, once.load, rtol=1e-12, atol=1e-12)

    def test_scale_must_exceed_ten(self):
        with self.assertRaises(ResampleError):
            irregular_resample(pair([0.0, 1.0], [0.0, 1.0]), 10, [2])

    def test_bad_changes(self):
        with self.assertRaises(ResampleError):
            irregular_resample(pair([0.0, 1.0, 2.0], [0.0, 1.0, 2.0]), 20, [5])
        with self.assertRaises(ResampleError):
            irregular_resample(pair([0.0, 1.0, 2.0], [0.0, 1.0, 2.0]), 20, [2, 2])

    def test_non_monotonic_segment_names_segment(self):
        with self.assertRaisesRegex(ResampleError, "segment 1"):
            irregular_resample(pair([0.0, 1.0, 0.5, 2.0], [0.0, 1.0, 2.0, 3.0]), 20, [4])


def half_cycle_oracle(d, load):
    """Signed extremum of every half-cycle, sorted, outer point kept per displacement."""
    segments, current, last_sign = [], [], 0
    for i, value in enumerate(load):
        sign = (value > 0) - (value < 0)
        if sign and last_sign and sign != last_sign:
            segments.append(current)
            current = []
        if sign:
            last_sign = sign
        current.append(i)
    segments.append(current)

    picked = []
    for segment in segments:
        values = [load[i] for i in segment]
        best = 0
        if sum(values) / len(values) > 0:
            for j, v in enumerate(values):
                if v > values[best]:
                    best = j
        else:
            for j, v in enumerate(values):
                if v < values[best]:
                    best = j
        picked.append(segment[best])

    picked.sort(key=lambda i: d[i])
    kept = []
    for i in picked:
        if kept and d[i] == d[kept[-1]]:
            if abs(load[i]) > abs(load[kept[-1]]):
                kept[-1] = i
            continue
        kept.append(i)
    return kept


class ExtractEnvelopeTest(SimpleTestCase):
    def test_three_half_cycles(self):
        d = [0, 1, 2, 1, 0.1, -1, -2, -1, -0.1, 2.5, 3, 1, 0.1]
        load = [0.1, 5, 10, 5, 1, -5, -10, -5, -1, 12, 15, 5, 1]
        env = extract_envelope(pair(d, load))
        np.testing.assert_array_equal(env.displacement, [-2, 2, 3])
        np.testing.assert_array_equal(env.load, [-10, 10, 15])
        self.assertFalse(env.degenerate)

    def test_single_half_sine(self):
        t = np.linspace(0, np.pi, 51)
        with self.assertLogs("records.backbone", level="WARNING"):
            env = extract_envelope(pair(t, np.sin(t)))
        self.assertTrue(env.degenerate)
        self.assertEqual(len(env), 1)
        self.assertEqual(env.indices[0], 25)

    def test_negation(self):
        d = [0, 1, 2, 1, 0.1, -1, -2, -1, -0.1, 2.5, 3, 1, 0.1]
        load = [0.1, 5, 10, 5, 1, -5, -10, -5, -1, 12, 15, 5, 1]
        env = extract_envelope(pair(d, load))
        mirrored = extract_envelope(pair(-np.asarray(d), -np.asarray(load)))
        np.testing.assert_array_equal(mirrored.displacement, -env.displacement[::-1])
        np.testing.assert_array_equal(mirrored.load, -env.load[::-1])

    def test_matches_half_cycle_oracle(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(5, 120))
            d = np.round(np.cumsum(rng.normal(size=n)), 1)
            load = np.round(rng.uniform(2, 20) * np.sin(rng.uniform(0.2, 1.5) * np.arange(n))
                            + rng.normal(scale=0.5, size=n), 1)
            env = extract_envelope(pair(d, load))
            np.testing.assert_array_equal(env.indices, half_cycle_oracle(d, load))
            self.assertTrue(np.all(np.diff(env.displacement) > 0))


class IdealizeTest(SimpleTestCase):
    def test_yield_at_peak(self):
        env = envelope([(-3, -12), (-2, -14), (-1, -9), (1, 8), (2, 13), (3, 11)])
        with self.assertLogs("records.backbone", level="WARNING"):
            backbone = idealize(env)
        self.assertEqual(
            [backbone.point(k) for k in range(1, 8)],
            [(-3, -12), (-2, -14), (-2, -14), (0, 0), (2, 13), (2, 13), (3, 11)],
        )
        self.assertTrue(backbone.yield_at_peak_pos)
        self.assertTrue(backbone.yield_at_peak_neg)

    def test_first_point_past_threshold(self):
        env = envelope([(-4, -10), (-3, -16), (-1, -8), (1, 7), (2, 11), (4, 16), (5, 12)])
        backbone = idealize(env)
        self.assertEqual(backbone.point(5), (2, 11))
        self.assertEqual(backbone.point(6), (4, 16))
        self.assertEqual(backbone.point(7), (5, 12))
        self.assertEqual(backbone.point(4), (0, 0))
        self.assertEqual(backbone.point(2), (-3, -16))
        self.assertEqual(backbone.point(1), (-4, -10))
        self.assertFalse(backbone.yield_at_peak_pos)
        self.assertEqual(backbone.load[5], env.load.max())
        self.assertEqual(backbone.load[1], env.load.min())

    def test_antisymmetric(self):
        points = [(-5, -12), (-4, -16), (-2, -11), (-1, -6), (1, 6), (2, 11), (4, 16), (5, 12)]
        env = envelope(points)
        mirrored = envelope([(-d, -f) for d, f in reversed(points)])
        backbone, flipped = idealize(env), idealize(mirrored)
        for k in range(1, 8):
            d, f = backbone.point(k)
            self.assertEqual(flipped.point(8 - k), (-d + 0.0, -f + 0.0))

    def test_ignores_points_in_the_opposite_quadrant(self):
        # (-0.5, 9.5) has positive load at negative displacement
        env = envelope([(-5, -8), (-4, -12), (-3, -9), (-0.5, 9.5), (1, 8), (2, 13), (3, 10)])
        with self.assertLogs("records.backbone", level="WARNING"):
            backbone = idealize(env)
        self.assertEqual(
            [backbone.point(k) for k in range(1, 8)],
            [(-5, -8), (-4, -12), (-3, -9), (0, 0), (2, 13), (2, 13), (3, 10)],
        )
        self.assertTrue(backbone.yield_at_peak_pos)
        self.assertFalse(backbone.yield_at_peak_neg)

    def test_too_few_points(self):
        with self.assertRaises(BackboneError):
            idealize(envelope([(-2, -5), (-1, -3), (1, 3), (2, 5), (3, 4)]))

    def test_rejects_invalid_points(self):
        with self.assertRaises(BackboneError):
            IdealizedBackbone(
                displacement=np.array([-3, -2, -1, 0.5, 1, 2, 3]),
                load=np.array([-5, -9, -7, 0, 7, 9, 5]),
            )
        with self.assertRaises(BackboneError):
            IdealizedBackbone(displacement=np.zeros(6), load=np.zeros(6))
