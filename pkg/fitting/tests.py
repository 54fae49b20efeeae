import json
import math
import tempfile
from io import StringIO
from pathlib import Path
from unittest.mock import patch

import numpy as np
import yaml
from django.core.files.uploadedfile import SimpleUploadedFile
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings, tag
from django.urls import reverse
from pydantic import ValidationError

from core.exceptions import EXIT_IO, EXIT_VALIDATION, OptimizationError
from hysteresis.pivot import PARAMETER_NAMES, PivotParams, cyclic_protocol, simulate
from records.backbone import IdealizedBackbone
from records.ingest import SignalPair, load_record, write_record, write_table

from .management.commands.fit import Command as FitCommand
from .models import FIT_DONE, FIT_FAILED, FitRun
from .optimize import (
    GAConfig,
    ParameterBounds,
    deviation_score,
    evaluate,
    fit,
    grid_search,
)
from .pipeline import PipelineConfig, load_pipeline_config

TRUTH = PivotParams(alpha1=10.0, alpha2=8.0, beta1=0.5, beta2=0.4, eta=20.0)


def synthetic_backbone():
    return IdealizedBackbone(
        displacement=np.array([-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0]),
        load=np.array([-11.0, -14.0, -10.0, 0.0, 10.0, 14.0, 11.0]),
    )


def synthetic_record(params=TRUTH, amplitudes=(1.5, 3.0, 5.0), points_per_quarter=40):
    d = cyclic_protocol(amplitudes, points_per_quarter)
    return SignalPair(displacement=d, load=simulate(synthetic_backbone(), params, d))


def tiny_config(**overrides):
    values = {"population_size": 8, "max_generations": 5, "rng_seed": 3}
    return GAConfig(**(values | overrides))


class DeviationScoreTest(SimpleTestCase):
    def test_examples(self):
        a = np.array([0.5, -2.0, 3.25])
        self.assertEqual(deviation_score(a, a), 0.0)
        self.assertEqual(deviation_score([1.0, 2.0], [0.0, 0.0]), 5.0)

    def test_matches_elementwise_loop(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            n = int(rng.integers(1, 300))
            a, b = rng.normal(size=n) * 50, rng.normal(size=n) * 50
            squares = []
            for x, y in zip(a.tolist(), b.tolist()):
                squares.append((x - y) * (x - y))
            self.assertEqual(deviation_score(a, b), math.fsum(squares))
            self.assertEqual(deviation_score(a, b), deviation_score(b, a))

    def test_length_mismatch(self):
        with self.assertRaises(OptimizationError):
            deviation_score([1.0, 2.0], [1.0])


class EvaluateTest(SimpleTestCase):
    def test_generating_params_score_zero(self):
        record = synthetic_record()
        self.assertEqual(evaluate(TRUTH, synthetic_backbone(), record), 0.0)

    def test_zero_history(self):
        record = SignalPair(displacement=np.zeros(10), load=np.zeros(10))
        self.assertEqual(evaluate(TRUTH, synthetic_backbone(), record), 0.0)

    def test_perturbation_increases_score(self):
        record = synthetic_record()
        backbone = synthetic_backbone()
        for name, value in (("alpha1", 14.0), ("alpha2", 5.0), ("eta", 40.0)):
            perturbed = TRUTH.model_copy(update={name: value})
            self.assertGreater(evaluate(perturbed, backbone, record), 0.0)


class GAConfigTest(SimpleTestCase):
    def test_defaults(self):
        config = GAConfig()
        self.assertEqual(config.population_size, 50)
        self.assertEqual(config.max_generations, 300)
        self.assertEqual(config.elite_count, 2)
        self.assertEqual(list(config.parameter_bounds), list(PARAMETER_NAMES))
        self.assertEqual(config.parameter_bounds["eta"].upper, 1000.0)

    def test_partial_bounds_keep_defaults(self):
        config = GAConfig(parameter_bounds={"alpha1": {"lower": 2.0, "upper": 30.0}})
        self.assertEqual(config.parameter_bounds["alpha1"].upper, 30.0)
        self.assertEqual(config.parameter_bounds["beta1"].upper, 1.0)

    def test_invalid(self):
        with self.assertRaises(ValidationError):
            GAConfig(population_size=4, elite_count=4)
        with self.assertRaises(ValidationError):
            GAConfig(parameter_bounds={"beta1": {"lower": 0.0, "upper": 2.0}})
        with self.assertRaises(ValidationError):
            GAConfig(parameter_bounds={"eta": {"lower": 5.0, "upper": 1.0}})
        with self.assertRaises(ValidationError):
            GAConfig(parameter_bounds={"gamma": {"lower": 0.0, "upper": 1.0}})
        with self.assertRaises(ValidationError):
            GAConfig(crossover_probability=1.5)


class FitTest(SimpleTestCase):
    def test_history_is_monotonic_and_in_bounds(self):
        config = tiny_config(
            max_generations=8,
            parameter_bounds={
                "alpha1": {"lower": 2.0, "upper": 20.0},
                "eta": {"lower": 0.0, "upper": 50.0},
            },
        )
        seen = []
        best, history = fit(synthetic_record(), synthetic_backbone(), config, seen.append)

        self.assertEqual(len(history), 8)
        self.assertEqual(history.stop_reason, "max_generations")
        self.assertEqual(seen, history.records)
        self.assertTrue(np.all(np.diff(history.best_scores) <= 0))
        self.assertEqual(history.records[-1].best_params, best)

        lower, upper = config.bound_arrays()
        for record in history.records:
            values = record.best_params.as_array()
            self.assertTrue(np.all(values >= lower) and np.all(values <= upper))

    def test_fixed_seed_is_reproducible(self):
        record, backbone = synthetic_record(), synthetic_backbone()
        first = fit(record, backbone, tiny_config())[1].columns()
        second = fit(record, backbone, tiny_config())[1].columns()
        self.assertEqual(first, second)

    def test_worker_count_does_not_change_history(self):
        record, backbone = synthetic_record(), synthetic_backbone()
        inline = fit(record, backbone, tiny_config(workers=1))[1].columns()
        pooled = fit(record, backbone, tiny_config(workers=2))[1].columns()
        self.assertEqual(inline, pooled)

    def test_stall_stops_early(self):
        record = SignalPair(displacement=np.zeros(5), load=np.zeros(5))
        config = tiny_config(max_generations=50, stall_generations=2)
        with self.assertLogs("fitting.optimize", level="WARNING"):
            _, history = fit(record, synthetic_backbone(), config)
        self.assertEqual(len(history), 3)
        self.assertEqual(history.stop_reason, "stall")

    def test_pinned_parameter_never_moves(self):
        config = tiny_config(parameter_bounds={"beta2": {"lower": 0.4, "upper": 0.4}})
        best, history = fit(synthetic_record(), synthetic_backbone(), config)
        self.assertEqual(best.beta2, 0.4)
        self.assertTrue(all(r.best_params.beta2 == 0.4 for r in history.records))

    def test_every_evaluation_failing(self):
        record = SignalPair(displacement=np.array([0.0, math.nan]), load=np.zeros(2))
        with self.assertRaises(OptimizationError):
            fit(record, synthetic_backbone(), tiny_config())


@tag("slow")
class IdentificationTest(SimpleTestCase):
    def test_round_trip(self):
        record, backbone = synthetic_record(), synthetic_backbone()
        best, history = fit(record, backbone, GAConfig(max_generations=200, rng_seed=0))

        total = float(np.sum(record.load**2))
        self.assertLessEqual(history.best_scores[-1], 1e-3 * total)
        response = simulate(backbone, best, record.displacement)
        self.assertLessEqual(
            np.max(np.abs(response - record.load)), 0.02 * np.max(np.abs(record.load))
        )

    def test_one_parameter_matches_grid_search(self):
        record, backbone = synthetic_record(), synthetic_backbone()
        bounds = {
            name: {"lower": getattr(TRUTH, name), "upper": getattr(TRUTH, name)}
            for name in PARAMETER_NAMES
            if name != "alpha1"
        }
        config = GAConfig(
            population_size=20, max_generations=60, parameter_bounds=bounds, rng_seed=1
        )
        best, _ = fit(record, backbone, config)

        span = ParameterBounds(lower=1.0, upper=100.0)
        value, _ = grid_search("alpha1", TRUTH, backbone, record, span)
        self.assertLessEqual(abs(best.alpha1 - value), 0.02 * (span.upper - span.lower))


class PipelineConfigTest(SimpleTestCase):
    def test_file_then_overrides(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.yaml"
            path.write_text(
                yaml.safe_dump(
                    {"scale": 50, "ga": {"population_size": 12, "max_generations": 7}}
                ),
                encoding="utf-8",
            )
            config = load_pipeline_config(
                path, {"scale": None, "ga": {"max_generations": 9}}, {"ga": {"workers": 2}}
            )
        self.assertEqual(config.scale, 50)
        self.assertEqual(config.ga.population_size, 12)
        self.assertEqual(config.ga.max_generations, 9)
        self.assertEqual(config.ga.workers, 2)

    def test_digest_is_stable(self):
        first = PipelineConfig(outdir="runs/a", scale=20)
        second = PipelineConfig(scale=20, outdir="runs/a")
        self.assertEqual(first.digest(), second.digest())
        self.assertNotEqual(first.digest(), PipelineConfig(outdir="runs/a", scale=21).digest())


class CommandTestBase(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.raw = self.tmp / "raw.csv"
        write_record(self.raw, synthetic_record())

    def tearDown(self):
        self._tmp.cleanup()

    def call(self, name, **options):
        options.setdefault("outdir", str(self.tmp / "out"))
        call_command(name, stdout=StringIO(), **options)
        return Path(options["outdir"])

    def call_failing(self, name, **options):
        with self.assertRaises(CommandError) as ctx:
            self.call(name, **options)
        return ctx.exception


class ResampleCommandTest(CommandTestBase):
    def test_uniform_grid(self):
        out = self.call("resample", input=str(self.raw), step=2, scale=20)
        self.assertTrue((out / "reduced.csv").is_file())
        resampled = load_record(out / "resampled.csv")
        np.testing.assert_allclose(
            np.abs(np.diff(resampled.displacement)), 0.05, rtol=0, atol=1e-9
        )
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        self.assertIn("resample", manifest["stages"])

    def test_on_grid_input_is_kept(self):
        d = np.array([0, 1, 2, 3, 4, 3, 2, 1, 0, -1, -2, -1, 0]) / 20
        load = np.array([0, 2, 4, 5, 6, 3, 0, -2, -4, -5, -6, -2, 1], dtype=float)
        raw = write_record(self.tmp / "grid.csv", SignalPair(displacement=d, load=load))
        out = self.call("resample", input=str(raw), step=1, scale=20)
        resampled = load_record(out / "resampled.csv")
        np.testing.assert_allclose(resampled.displacement, d, rtol=1e-9)
        np.testing.assert_allclose(resampled.load, load, rtol=1e-9)

    def test_unwritable_outdir(self):
        blocker = self.tmp / "blocker"
        blocker.write_text("", encoding="utf-8")
        error = self.call_failing(
            "resample", input=str(self.raw), outdir=str(blocker / "out"), scale=20
        )
        self.assertEqual(error.returncode, EXIT_IO)
        self.assertIn(str(blocker / "out"), str(error))

    def test_empty_input(self):
        empty = self.tmp / "empty.csv"
        empty.write_text("", encoding="utf-8")
        error = self.call_failing("resample", input=str(empty), scale=20)
        self.assertEqual(error.returncode, EXIT_VALIDATION)
        self.assertIn("[resample]", str(error))
        self.assertIn("line 1", str(error))

    def test_scale_too_small(self):
        error = self.call_failing("resample", input=str(self.raw), scale=10)
        self.assertEqual(error.returncode, EXIT_VALIDATION)

    def test_missing_input(self):
        error = self.call_failing("resample", input=str(self.tmp / "nope.csv"), scale=20)
        self.assertEqual(error.returncode, EXIT_IO)


class BackboneCommandTest(CommandTestBase):
    def test_idealized_has_seven_rows_with_origin(self):
        self.call("resample", input=str(self.raw), scale=20)
        out = self.call("backbone")
        lines = (out / "idealized.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(len(lines), 8)
        self.assertEqual(lines[4], "0,0")
        envelope = load_record(out / "envelope.csv")
        self.assertTrue(np.all(np.diff(envelope.displacement) > 0))


class SimulateCommandTest(CommandTestBase):
    def setUp(self):
        super().setUp()
        self.out = self.tmp / "out"
        self.out.mkdir()
        d = cyclic_protocol((1.5, 3.0, 5.0), 30)
        d = np.round(d * 20) / 20
        record = SignalPair(displacement=d, load=simulate(synthetic_backbone(), TRUTH, d))
        write_record(self.out / "resampled.csv", record)
        backbone = synthetic_backbone()
        write_table(
            self.out / "idealized.csv",
            {"displacement_mm": backbone.displacement, "load_kN": backbone.load},
        )
        self.params = self.tmp / "truth.txt"
        self.params.write_text(yaml.safe_dump(TRUTH.model_dump()), encoding="utf-8")

    def response(self):
        frame = np.loadtxt(self.out / "response.csv", delimiter=",", skiprows=1)
        return frame[:, 1], frame[:, 2]

    def test_generating_params_reproduce_record(self):
        self.call("simulate", params=str(self.params))
        simulated, experimental = self.response()
        np.testing.assert_allclose(simulated, experimental, rtol=0, atol=1e-9)

    def test_params_at_bounds(self):
        extreme = PivotParams(alpha1=100.0, alpha2=1.0, beta1=0.0, beta2=1.0, eta=1000.0)
        self.params.write_text(yaml.safe_dump(extreme.model_dump()), encoding="utf-8")
        self.call("simulate", params=str(self.params))
        simulated, _ = self.response()
        self.assertTrue(np.all(np.isfinite(simulated)))

    def test_malformed_params(self):
        self.params.write_text("alpha1: 2\nbeta1: 0.5\n", encoding="utf-8")
        error = self.call_failing("simulate", params=str(self.params))
        self.assertEqual(error.returncode, EXIT_VALIDATION)
        self.assertIn("missing", str(error))


class FitCommandTest(CommandTestBase):
    def setUp(self):
        super().setUp()
        self.call("resample", input=str(self.raw), scale=20)
        self.call("backbone")

    def test_outputs(self):
        out = self.call("fit", population=6, generations=4, seed=1, bounds=["alpha1=1:40"])
        params = yaml.safe_load((out / "best_params.txt").read_text(encoding="utf-8"))
        self.assertEqual(list(params), list(PARAMETER_NAMES))
        self.assertTrue(1.0 <= params["alpha1"] <= 40.0)
        self.assertTrue(0.0 <= params["beta1"] <= 1.0)

        rows = (out / "convergence.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(rows[0], "generation,best_score,mean_score," + ",".join(PARAMETER_NAMES))
        self.assertLessEqual(len(rows) - 1, 4)
        self.assertTrue((out / "response.csv").is_file())

    def test_fixed_seed_gives_identical_history(self):
        first = self.call("fit", population=6, generations=3, seed=5)
        before = (first / "convergence.csv").read_bytes()
        self.call("fit", population=6, generations=3, seed=5)
        self.assertEqual((first / "convergence.csv").read_bytes(), before)

    def test_config_file(self):
        config = self.tmp / "run.yaml"
        config.write_text(
            yaml.safe_dump({"ga": {"population_size": 6, "max_generations": 2}}),
            encoding="utf-8",
        )
        out = self.call("fit", config=str(config), generations=3)
        rows = (out / "convergence.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(len(rows), 4)

    def test_bad_bounds_flag(self):
        error = self.call_failing("fit", bounds=["alpha1=1-40"])
        self.assertEqual(error.returncode, EXIT_VALIDATION)

    def test_help_notes_weak_alpha_identifiability(self):
        parser = FitCommand().create_parser("manage.py", "fit")
        text = " ".join(parser.format_help().split())
        self.assertIn("alpha1 and alpha2 are weakly constrained", text)


class PipelineCommandTest(CommandTestBase):
    def test_end_to_end_is_repeatable(self):
        options = {"input": str(self.raw), "scale": 20, "population": 6, "generations": 3}
        out = self.call("pipeline", **options)
        names = [
            "reduced.csv",
            "resampled.csv",
            "envelope.csv",
            "idealized.csv",
            "best_params.txt",
            "convergence.csv",
            "response.csv",
            "manifest.json",
        ]
        first = {name: (out / name).read_bytes() for name in names}

        manifest = json.loads(first["manifest.json"])
        self.assertEqual(
            sorted(manifest["stages"]), ["backbone", "fit", "resample", "simulate"]
        )
        self.assertEqual(len(manifest["config_sha256"]), 64)

        self.call("pipeline", **options)
        for name in names:
            self.assertEqual((out / name).read_bytes(), first[name], name)

    def test_failure_names_stage(self):
        empty = self.tmp / "empty.csv"
        empty.write_text("", encoding="utf-8")
        error = self.call_failing("pipeline", input=str(empty), scale=20)
        self.assertIn("[resample]", str(error))


class FitServiceTest(TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.media = override_settings(MEDIA_ROOT=self._tmp.name)
        self.media.enable()

    def tearDown(self):
        self.media.disable()
        self._tmp.cleanup()

    def upload(self, **fields):
        record = synthetic_record()
        lines = ["displacement_mm,load_kN"] + [
            f"{d:.17g},{f:.17g}" for d, f in zip(record.displacement, record.load)
        ]
        upload = SimpleUploadedFile("specimen.csv", "\n".join(lines).encode("utf-8"))
        return self.client.post(reverse("api_upload_record"), {"file": upload, **fields})

    def test_upload_runs_fit(self):
        response = self.upload(scale="20", population="4", generations="2", seed="7")
        self.assertEqual(response.status_code, 200)
        run_id = response.json()["run_id"]

        run = FitRun.objects.get(id=run_id)
        self.assertEqual(run.status, FIT_DONE, run.error)
        self.assertEqual(run.generations.count(), 2)

        status = self.client.get(reverse("api_get_status_fit", args=[run_id])).json()
        self.assertEqual(status["status"], FIT_DONE)
        self.assertEqual(sorted(status["best_params"]), sorted(PARAMETER_NAMES))

        history = self.client.get(reverse("api_get_fit_generations", args=[run_id])).json()
        self.assertEqual([g["generation"] for g in history["generations"]], [1, 2])

        records = self.client.get(reverse("api_get_all_record")).json()["records"]
        self.assertEqual(records[0]["fit_runs"], [run_id])

    def test_unexpected_fit_error_marks_run_failed(self):
        with (
            patch("fitting.methods.fit", side_effect=RuntimeError("worker crashed")),
            self.assertLogs("fitting.methods", level="ERROR"),
        ):
            response = self.upload(scale="20", population="4", generations="2")
        self.assertEqual(response.status_code, 200)

        run = FitRun.objects.get(id=response.json()["run_id"])
        self.assertEqual(run.status, FIT_FAILED)
        self.assertIn("worker crashed", run.error)
        self.assertFalse(run.generations.exists())

    def test_upload_without_file(self):
        response = self.client.post(reverse("api_upload_record"), {})
        self.assertEqual(response.status_code, 400)

    def test_upload_with_invalid_scale(self):
        response = self.upload(scale="5")
        self.assertEqual(response.status_code, 400)
        self.assertFalse(FitRun.objects.exists())

    def test_unknown_run(self):
        url = reverse("api_get_status_fit", args=["00000000-0000-0000-0000-000000000000"])
        self.assertEqual(self.client.get(url).status_code, 404)
