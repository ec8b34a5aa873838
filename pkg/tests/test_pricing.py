"""Feature extraction and the two baseline price models."""

from datetime import datetime

import numpy as np
import pytest

from gridstudy.dispatch import Generator
from gridstudy.pricing import (
    FeatureVector,
    PricingError,
    SystemSnapshot,
    TrainingSample,
    TrainingSet,
    extract_features,
    load_predictor,
    predict,
    predict_day,
    predict_rows,
    save_predictor,
    train,
)


def fv(demand, hour, names=("demand", "hour")):
    return FeatureVector(tuple(names), np.array([demand, hour], dtype=float))


def linear_set(rng, n=60, slope=2.0):
    samples = []
    for h in range(n):
        d = float(rng.uniform(100, 200))
        samples.append(TrainingSample(fv(d, h % 24), slope * d, "simulated"))
    return TrainingSet(tuple(samples))


class TestExtractFeatures:
    fleet = (Generator("U1", "black_coal", "CQ", "QLD", 500.0, 200.0, 26.14),
             Generator("W1", "wind", "NSA", "SA", 300.0, 0.0, 0.0))

    def snapshot(self, ts=datetime(2021, 1, 4, 0)):
        return SystemSnapshot(ts, "QLD", 5000.0, self.fleet,
                              {"NSW-QLD": (600.0, -1000.0)}, {"W1": 0.5})

    def test_monday_midnight_calendar(self):
        out = extract_features(self.snapshot())
        row = dict(zip(out.names, out.values))
        assert row["hour_of_day"] == 0.0
        assert row["day_of_week"] == 0.0  # 2021-01-04 is a Monday

    def test_capacity_feature_direct_copy(self):
        out = extract_features(self.snapshot())
        row = dict(zip(out.names, out.values))
        assert row["capacity:black_coal:CQ"] == 500.0
        assert row["capacity:wind:NSA"] == 150.0  # derated by availability

    def test_hand_computed_row(self):
        out = extract_features(self.snapshot(datetime(2021, 1, 6, 15)))
        expected = {
            "demand_mw": 5000.0, "hour_of_day": 15.0, "day_of_week": 2.0,
            "line:NSW-QLD:forward": 600.0, "line:NSW-QLD:reverse": -1000.0,
            "capacity:black_coal:CQ": 500.0, "capacity:wind:NSA": 150.0,
        }
        assert dict(zip(out.names, out.values)) == expected

    def test_deterministic(self):
        a, b = extract_features(self.snapshot()), extract_features(self.snapshot())
        assert a.names == b.names and np.array_equal(a.values, b.values)


class TestTrain:
    def test_constant_target_ridge(self):
        rng = np.random.default_rng(0)
        samples = tuple(TrainingSample(fv(rng.uniform(100, 200), h % 24), 42.0, "historical")
                        for h in range(48))
        p = train(TrainingSet(samples), "ridge-linear", 1)
        assert predict(p, fv(150.0, 5)) == pytest.approx(42.0, abs=1e-6)

    def test_ridge_recovers_slope(self):
        rng = np.random.default_rng(1)
        data = linear_set(rng)
        p = train(data, "ridge-linear", 1)
        got = predict(p, fv(170.0, 5))
        assert got == pytest.approx(340.0, rel=1e-3)

    def test_single_exemplar_neighbour(self):
        p = train(TrainingSet((TrainingSample(fv(100, 1), 77.0, "historical"),)),
                  "nearest-neighbor", 0)
        assert predict(p, fv(999, 23)) == 77.0

    def test_ridge_requires_24_samples(self):
        small = TrainingSet(tuple(TrainingSample(fv(float(i), i), float(i), "historical")
                                  for i in range(10)))
        with pytest.raises(PricingError, match="at least 24"):
            train(small, "ridge-linear", 0)

    def test_empty_set_rejected(self):
        with pytest.raises(PricingError, match="empty"):
            TrainingSet(())

    def test_degenerate_features_reported(self):
        flat = TrainingSet(tuple(TrainingSample(fv(5.0, 5.0), float(i), "historical")
                                 for i in range(30)))
        with pytest.raises(PricingError, match="constant"):
            train(flat, "ridge-linear", 0)
        nn = train(flat, "nearest-neighbor", 0)
        assert nn.dropped == ("demand", "hour")

    def test_constant_feature_dropped_and_recorded(self):
        rng = np.random.default_rng(5)
        samples = tuple(TrainingSample(
            FeatureVector(("demand", "fixed"), np.array([rng.uniform(0, 1), 7.0])),
            float(i), "simulated") for i in range(40))
        p = train(TrainingSet(samples), "ridge-linear", 0)
        assert p.dropped == ("fixed",)


class TestPredict:
    def test_flat_day_from_constant_model(self):
        rng = np.random.default_rng(2)
        samples = tuple(TrainingSample(fv(rng.uniform(10, 20), h % 24), 9.5, "historical")
                        for h in range(48))
        p = train(TrainingSet(samples), "ridge-linear", 0)
        day = [fv(15.0, h) for h in range(24)]
        out = predict_day(p, day)
        assert out.shape == (24,)
        assert np.allclose(out, 9.5, atol=1e-6)

    def test_neighbour_exact_training_point(self):
        rng = np.random.default_rng(3)
        samples = tuple(TrainingSample(fv(float(rng.uniform(0, 10)), h % 24), float(h), "historical")
                        for h in range(40))
        p = train(TrainingSet(samples), "nearest-neighbor", 0)
        assert predict(p, samples[7].features) == 7.0

    def test_golden_series_against_independent_formulas(self):
        """Ridge predictions match a from-scratch normal-equation solve."""
        rng = np.random.default_rng(4)
        x = rng.uniform(0, 50, size=(200, 3))
        y = 3.0 * x[:, 0] - 2.0 * x[:, 1] + rng.normal(0, 0.5, 200) + 10
        names = ("a", "b", "c")
        samples = tuple(TrainingSample(FeatureVector(names, x[i]), float(y[i]), "historical")
                        for i in range(200))
        p = train(TrainingSet(samples), "ridge-linear", 0)
        # independent implementation of the documented formulas
        mean, std = x.mean(axis=0), x.std(axis=0)
        z = (x - mean) / std
        a = np.hstack([z, np.ones((200, 1))])
        reg = np.eye(4) * 1e-3
        reg[3, 3] = 0.0
        coef = np.linalg.solve(a.T @ a + reg, a.T @ y)
        queries = x[:24]
        golden = ((queries - mean) / std) @ coef[:3] + coef[3]
        got = predict_day(p, [FeatureVector(names, q) for q in queries])
        assert np.max(np.abs(got - golden)) < 1e-9

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(6)
        p = train(linear_set(rng), "ridge-linear", 0)
        with pytest.raises(PricingError, match="names do not match"):
            predict(p, FeatureVector(("other", "hour"), np.array([1.0, 2.0])))

    def test_predict_day_needs_24(self):
        rng = np.random.default_rng(6)
        p = train(linear_set(rng), "ridge-linear", 0)
        with pytest.raises(PricingError, match="24"):
            predict_day(p, [fv(1.0, 0)] * 23)


class TestProperties:
    def test_determinism_bitwise(self):
        rng = np.random.default_rng(8)
        data = linear_set(rng)
        for kind in ("ridge-linear", "nearest-neighbor"):
            p1, p2 = train(data, kind, 7), train(data, kind, 7)
            assert np.array_equal(p1.mean, p2.mean) and np.array_equal(p1.std, p2.std)
            if kind == "ridge-linear":
                assert np.array_equal(p1.coef, p2.coef)
            else:
                assert np.array_equal(p1.exemplars, p2.exemplars)
            q = fv(137.0, 11)
            assert predict(p1, q) == predict(p2, q)

    def test_neighbour_zero_in_sample_error(self):
        rng = np.random.default_rng(9)
        data = linear_set(rng, n=50)
        p = train(data, "nearest-neighbor", 0)
        x, y = data.matrix()
        got = predict_rows(p, data.feature_names, x)
        assert np.array_equal(got, y)

    def test_ridge_beats_constant_in_sample(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            n = int(rng.integers(30, 120))
            x = rng.uniform(0, 10, (n, 2))
            y = rng.normal(0, 1, n) + x[:, 0] * rng.uniform(-3, 3)
            samples = tuple(TrainingSample(FeatureVector(("a", "b"), x[i]), float(y[i]), "simulated")
                            for i in range(n))
            data = TrainingSet(samples)
            p = train(data, "ridge-linear", 0)
            pred = predict_rows(p, data.feature_names, x)
            rmse = float(np.sqrt(np.mean((pred - y) ** 2)))
            rmse_const = float(np.sqrt(np.mean((y - y.mean()) ** 2)))
            assert rmse <= rmse_const + 1e-12

    def test_scale_invariance_of_neighbour(self):
        rng = np.random.default_rng(11)
        base = linear_set(rng, n=50)
        scaled = TrainingSet(tuple(
            TrainingSample(FeatureVector(s.features.names,
                                         s.features.values * np.array([1000.0, 1.0])),
                           s.price, s.provenance)
            for s in base.samples))
        pa = train(base, "nearest-neighbor", 0)
        pb = train(scaled, "nearest-neighbor", 0)
        q = base.samples[13].features
        qs = FeatureVector(q.names, q.values * np.array([1000.0, 1.0]))
        assert predict(pa, q) == predict(pb, qs)


class TestPersistence:
    @pytest.mark.parametrize("kind", ["ridge-linear", "nearest-neighbor"])
    def test_round_trip(self, tmp_path, kind):
        rng = np.random.default_rng(12)
        p = train(linear_set(rng), kind, 3)
        path = tmp_path / "model.txt"
        save_predictor(p, path)
        back = load_predictor(path)
        assert back.kind == p.kind and back.seed == p.seed
        q = fv(123.4, 9)
        assert predict(back, q) == predict(p, q)

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("not a model\n")
        with pytest.raises(PricingError, match="not a saved predictor"):
            load_predictor(path)
