import numpy as np
from django.test import SimpleTestCase, tag
from pydantic import ValidationError

from core.exceptions import PivotError
from fitting.optimize import default_bounds
from records.backbone import IdealizedBackbone

from .pivot import (
    PARAMETER_NAMES,
    Branch,
    PivotEngine,
    PivotParams,
    build_geometry,
    cyclic_protocol,
    dissipated_energy,
    simulate,
)


def symmetric_backbone():
    # yield (2, 10), peak (4, 14), ultimate (6, 11); concave on both sides
    return IdealizedBackbone(
        displacement=np.array([-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0]),
        load=np.array([-11.0, -14.0, -10.0, 0.0, 10.0, 14.0, 11.0]),
    )


def asymmetric_backbone():
    return IdealizedBackbone(
        displacement=np.array([-4.0, -3.0, -3.0, 0.0, 2.0, 4.0, 5.0]),
        load=np.array([-10.0, -16.0, -16.0, 0.0, 11.0, 16.0, 12.0]),
    )


def params(**overrides):
    values = {"alpha1": 2.0, "alpha2": 2.0, "beta1": 1.0, "beta2": 1.0, "eta": 0.0}
    return PivotParams(**(values | overrides))


def random_params(rng):
    bounds = default_bounds()
    return PivotParams(
        **{name: rng.uniform(bounds[name].lower, bounds[name].upper) for name in PARAMETER_NAMES}
    )


def ramp(*stops, step=0.25):
    pieces = [np.array([stops[0]])]
    for start, stop in zip(stops, stops[1:]):
        count = int(round(abs(stop - start) / step))
        pieces.append(np.linspace(start, stop, count + 1)[1:])
    return np.concatenate(pieces)


class PivotParamsTest(SimpleTestCase):
    def test_bounds(self):
        with self.assertRaises(ValidationError):
            params(alpha1=0.5)
        with self.assertRaises(ValidationError):
            params(beta2=1.5)
        with self.assertRaises(ValidationError):
            params(eta=-1.0)
        with self.assertRaises(ValidationError):
            params(eta=float("nan"))

    def test_array_round_trip(self):
        original = PivotParams(alpha1=19.82, alpha2=16.11, beta1=0.73, beta2=0.8, eta=147.4)
        self.assertEqual(PivotParams.from_array(original.as_array()), original)


class BuildGeometryTest(SimpleTestCase):
    def test_symmetric(self):
        geom = build_geometry(symmetric_backbone())
        self.assertEqual(geom.k_pos, 5.0)
        self.assertEqual(geom.fy_pos, 10.0)
        self.assertEqual(geom.k_pos, geom.k_neg)
        self.assertEqual(geom.fy_pos, -geom.fy_neg)

    def test_asymmetric(self):
        geom = build_geometry(asymmetric_backbone())
        self.assertEqual(geom.k_pos, 11.0 / 2.0)
        self.assertEqual(geom.k_neg, (-16.0) / (-3.0))

    def test_envelope_passes_through_points(self):
        backbone = asymmetric_backbone()
        geom = build_geometry(backbone)
        for k in range(1, 8):
            d, f = backbone.point(k)
            self.assertEqual(geom.envelope(d), f)

    def test_zero_yield_displacement(self):
        backbone = IdealizedBackbone(
            displacement=np.array([-6.0, -4.0, -2.0, 0.0, 0.0, 4.0, 6.0]),
            load=np.array([-11.0, -14.0, -10.0, 0.0, 10.0, 14.0, 11.0]),
        )
        with self.assertRaises(PivotError):
            build_geometry(backbone)


class PivotEngineTest(SimpleTestCase):
    def test_elastic_ramp(self):
        d = np.linspace(0.0, 1.0, 11)
        loads = simulate(symmetric_backbone(), params(), d)
        np.testing.assert_allclose(loads, 5.0 * d, rtol=0, atol=1e-12)

    def test_zero_history(self):
        loads = simulate(symmetric_backbone(), params(), np.zeros(25))
        self.assertTrue(np.all(loads == 0.0))

    def test_unloading_aims_at_primary_pivot(self):
        d = ramp(0.0, 4.0, 0.0)
        loads = simulate(symmetric_backbone(), params(alpha1=2.0), d)

        # from (4, 14) toward (-alpha1 * Fy / K, -alpha1 * Fy) = (-4, -20)
        descending = np.arange(d.size) > int(np.argmax(d))
        check = descending & (loads > 0)
        self.assertGreater(check.sum(), 5)
        expected = 14.0 + (d[check] - 4.0) * (34.0 / 8.0)
        np.testing.assert_allclose(loads[check], expected, rtol=0, atol=1e-9)

    def test_virgin_loading_reproduces_backbone(self):
        for backbone in (symmetric_backbone(), asymmetric_backbone()):
            knots, first = np.unique(backbone.displacement, return_index=True)
            knot_loads = backbone.load[first]

            positive = np.union1d(np.linspace(0.0, knots[-1], 241), knots[knots >= 0])
            negative = np.union1d(np.linspace(knots[0], 0.0, 241), knots[knots <= 0])[::-1]
            for d in (positive, negative):
                loads = simulate(backbone, params(), d)
                expected = np.interp(d, knots, knot_loads)
                np.testing.assert_allclose(loads, expected, rtol=0, atol=1e-12)
                for knot, knot_load in zip(knots, knot_loads):
                    if knot in d:
                        self.assertEqual(loads[d == knot][0], knot_load)

    def test_elastic_closure(self):
        rng = np.random.default_rng(7)
        backbone = symmetric_backbone()
        peak_energy = 0.5 * 5.0 * 2.0**2
        for _ in range(50):
            walk = np.concatenate([[0.0], rng.uniform(-2.0, 2.0, 40), [0.0]])
            loads = simulate(backbone, random_params(rng), walk)
            self.assertEqual(loads[-1], 0.0)
            self.assertLessEqual(abs(dissipated_energy(walk, loads)), 1e-9 * peak_energy)

    def test_load_stays_within_envelope_bounds(self):
        rng = np.random.default_rng(11)
        for backbone in (symmetric_backbone(), asymmetric_backbone()):
            geom = build_geometry(backbone)
            for _ in range(500):
                reversals = rng.uniform(-7.0, 7.0, rng.integers(2, 8))
                d = ramp(0.0, *reversals, step=rng.uniform(0.05, 0.6))
                engine = PivotEngine(geom, random_params(rng))
                for value in d:
                    load = engine.step(value)
                    self.assertGreaterEqual(load, geom.lower(value))
                    self.assertLessEqual(load, geom.upper(value))

    def test_no_jumps_along_branches(self):
        rng = np.random.default_rng(3)
        h = 0.01
        for backbone in (symmetric_backbone(), asymmetric_backbone()):
            for _ in range(20):
                # reversals alternate sides, past the positive yield
                reversals = rng.uniform(2.5, 6.0, 6) * np.array([1, -1, 1, -1, 1, -1])
                d = ramp(0.0, *np.round(reversals, 2), step=h)
                loads = simulate(backbone, random_params(rng), d)
                self.assertLessEqual(np.max(np.abs(np.diff(loads))), 25.0 * h)

    def test_reloading_after_softened_unloading_is_continuous(self):
        p = PivotParams(alpha1=25.07, alpha2=62.11, beta1=0.421, beta2=0.394, eta=688.8)
        d = ramp(0.0, 4.5, -3.657, 4.5, step=0.01)
        loads = simulate(asymmetric_backbone(), p, d)
        slopes = np.abs(np.diff(loads) / np.diff(d))
        # steepest backbone segment is 6
        self.assertLessEqual(slopes.max(), 6.0 + 1e-9)

    def test_heavy_degradation_keeps_loops_clockwise(self):
        quarter = 20
        d = cyclic_protocol([4.0], points_per_quarter=quarter)
        for eta in (0.0, 400.0, 1000.0):
            p = params(alpha1=4.0, alpha2=4.0, beta1=0.5, beta2=0.5, eta=eta)
            loads = simulate(symmetric_backbone(), p, d)
            self.assertGreater(dissipated_energy(d, loads), 0.0)
            self.assertEqual(loads[np.argmin(d)], -14.0)
            # unloading never reaches zero load past the origin
            falling = slice(quarter, 3 * quarter + 1)
            self.assertTrue(np.all(loads[falling][d[falling] < 0] <= 0))

    def test_softened_unloading_crosses_zero_between_pivot_line_and_origin(self):
        d = ramp(0.0, 4.0, 0.0, step=0.05)
        crossings = []
        for eta in (0.0, 10.0, 1000.0):
            loads = simulate(symmetric_backbone(), params(alpha1=4.0, eta=eta), d)
            falling = np.arange(d.size) > int(np.argmax(d))
            crossings.append(d[falling][np.argmax(loads[falling] <= 0)])
        # pivot line from (4, 14) to (-8, -40) reaches zero at 8/9
        self.assertAlmostEqual(crossings[0], 0.85, delta=1e-9)
        self.assertTrue(0.0 < crossings[1] < crossings[0])
        self.assertEqual(crossings[2], 0.0)

    def test_post_yield_cycles_dissipate_energy(self):
        rng = np.random.default_rng(5)
        quarter = 20
        d = cyclic_protocol([3.0, 5.0], points_per_quarter=quarter, repeats=2)
        for _ in range(20):
            loads = simulate(symmetric_backbone(), random_params(rng), d)
            for start in range(0, d.size - 1, 4 * quarter):
                cycle = slice(start, start + 4 * quarter + 1)
                self.assertGreaterEqual(dissipated_energy(d[cycle], loads[cycle]), -1e-9)

    def test_reloading_without_pinching_is_straight(self):
        d = ramp(0.0, 5.0, -5.0, 5.0)
        loads = simulate(symmetric_backbone(), params(alpha2=2.0, beta1=1.0, beta2=1.0), d)

        # unloading from (-5, -12.5) toward (4, 20) crosses zero here
        zero = -5.0 + 12.5 * 9.0 / 32.5
        last = np.arange(d.size) > int(np.argmin(d))
        check = last & (d > zero + 1e-9)
        expected = 12.5 * (d[check] - zero) / (5.0 - zero)
        np.testing.assert_allclose(loads[check], expected, rtol=0, atol=1e-9)

    def test_repeated_cycles_retrace_without_degradation(self):
        quarter = 16
        d = cyclic_protocol([4.0], points_per_quarter=quarter, repeats=3)
        loads = simulate(symmetric_backbone(), params(beta1=0.4, beta2=0.6), d)
        second = loads[1 + 4 * quarter : 1 + 8 * quarter]
        third = loads[1 + 8 * quarter : 1 + 12 * quarter]
        np.testing.assert_allclose(second, third, rtol=0, atol=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        d = ramp(0.0, 3.0, -4.5, 5.5, -1.0, step=0.1)
        p = random_params(rng)
        first = simulate(asymmetric_backbone(), p, d)
        second = simulate(asymmetric_backbone(), p, d)
        self.assertTrue(np.array_equal(first, second))

    def test_beyond_ultimate_holds_terminal_load(self):
        d = ramp(0.0, 8.0, step=0.5)
        with self.assertLogs("hysteresis.pivot", level="WARNING"):
            loads = simulate(symmetric_backbone(), params(), d)
        self.assertEqual(loads[-1], 11.0)

        engine = PivotEngine(build_geometry(symmetric_backbone()), params())
        engine.run(d)
        self.assertEqual(engine.beyond_ultimate_steps, 4)
        self.assertTrue(engine.state.beyond_ultimate)
        self.assertEqual(engine.state.branch, Branch.ENVELOPE_POS)

    def test_non_finite_displacement(self):
        engine = PivotEngine(build_geometry(symmetric_backbone()), params())
        with self.assertRaises(PivotError):
            engine.step(float("nan"))


@tag("slow")
class PivotPropertyTest(SimpleTestCase):
    """Parameters drawn over the full default bounds, 1000 histories per backbone."""

    param_sets = 100
    histories = 10

    def test_full_bounds_histories(self):
        rng = np.random.default_rng(2024)
        h = 0.02
        for backbone in (symmetric_backbone(), asymmetric_backbone()):
            geom = build_geometry(backbone)
            for _ in range(self.param_sets):
                p = random_params(rng)
                for _ in range(self.histories):
                    signs = np.resize([1.0, -1.0], 5) * rng.choice([1.0, -1.0])
                    reversals = np.round(rng.uniform(0.5, 7.0, 5) * signs, 2)
                    d = ramp(0.0, *reversals, step=h)
                    loads = PivotEngine(geom, p).run(d)
                    lower = np.array([geom.lower(value) for value in d])
                    upper = np.array([geom.upper(value) for value in d])
                    self.assertTrue(np.all((loads >= lower) & (loads <= upper)))
                    self.assertLessEqual(np.max(np.abs(np.diff(loads))), 25.0 * h)

    def test_full_bounds_cycles_dissipate_energy(self):
        rng = np.random.default_rng(2025)
        quarter = 20
        for backbone in (symmetric_backbone(), asymmetric_backbone()):
            for _ in range(self.param_sets):
                p = random_params(rng)
                amplitudes = np.sort(rng.uniform(0.5, 4.0, 3))
                d = cyclic_protocol(amplitudes, points_per_quarter=quarter, repeats=2)
                loads = simulate(backbone, p, d)
                for start in range(0, d.size - 1, 4 * quarter):
                    cycle = slice(start, start + 4 * quarter + 1)
                    self.assertGreaterEqual(dissipated_energy(d[cycle], loads[cycle]), -1e-9)


class ProtocolTest(SimpleTestCase):
    def test_cyclic_protocol_shape(self):
        d = cyclic_protocol([1.0, 2.0], points_per_quarter=5, repeats=2)
        self.assertEqual(d.size, 1 + 2 * 2 * 4 * 5)
        self.assertEqual(d[0], 0.0)
        self.assertEqual(d[-1], 0.0)
        self.assertEqual(d.max(), 2.0)
        self.assertEqual(d.min(), -2.0)

    def test_dissipated_energy_of_rectangle(self):
        d = np.array([0.0, 1.0, 1.0, 0.0, 0.0])
        f = np.array([1.0, 1.0, -1.0, -1.0, 1.0])
        self.assertEqual(dissipated_energy(d, f), 2.0)
