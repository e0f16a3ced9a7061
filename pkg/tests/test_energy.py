"""Power sampling, the linear power model, and per-step energy."""

import pytest

from haloflow import (
    ConfigurationError,
    PowerModel,
    PowerSample,
    energy_per_step,
    energy_vs_time_series,
    fit_power_model,
    window_average,
)


class TestWindowAverage:
    def test_hold_across_sample_change(self):
        samples = [PowerSample(0.0, 100.0), PowerSample(1.0, 200.0)]
        assert window_average(samples, 0.0, 2.0) == pytest.approx(150.0)

    def test_first_sample_extends_backwards(self):
        samples = [PowerSample(0.0, 100.0), PowerSample(1.0, 200.0)]
        assert window_average(samples, -1.0, 1.0) == pytest.approx(100.0)

    def test_window_straddling_change(self):
        samples = [PowerSample(0.0, 100.0), PowerSample(1.0, 200.0)]
        assert window_average(samples, 0.5, 1.5) == pytest.approx(150.0)

    def test_three_sample_oracle(self):
        samples = [
            PowerSample(0.0, 190.0),
            PowerSample(1.0, 196.0),
            PowerSample(2.0, 189.0),
        ]
        assert window_average(samples, 0.5, 2.5) == pytest.approx(192.75)

    def test_validation(self):
        samples = [PowerSample(0.0, 100.0)]
        with pytest.raises(ConfigurationError):
            window_average(samples, 1.0, 1.0)
        with pytest.raises(ConfigurationError):
            window_average([], 0.0, 1.0)
        with pytest.raises(ConfigurationError):
            window_average([PowerSample(1.0, 1.0), PowerSample(1.0, 2.0)], 0.0, 2.0)
        with pytest.raises(ConfigurationError):
            PowerSample(0.0, -5.0)


class TestEnergyPerStep:
    def test_oracle(self):
        assert energy_per_step(193.0, 0.12, 4) == 92.64

    def test_single_device_default(self):
        assert energy_per_step(100.0, 0.5) == 50.0

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            energy_per_step(-1.0, 1.0)
        with pytest.raises(ConfigurationError):
            energy_per_step(1.0, -1.0)
        with pytest.raises(ConfigurationError):
            energy_per_step(1.0, 1.0, 0)


class TestPowerModel:
    def test_linear_prediction(self):
        m = PowerModel(p_idle=50.0, p_max=300.0)
        assert m.predict(0.0) == 50.0
        assert m.predict(1.0) == 300.0
        assert m.predict(0.5) == 175.0

    def test_busy_fraction_bounds(self):
        m = PowerModel()
        with pytest.raises(ConfigurationError):
            m.predict(-0.1)
        with pytest.raises(ConfigurationError):
            m.predict(1.1)

    def test_envelope_validation(self):
        with pytest.raises(ConfigurationError):
            PowerModel(p_idle=-1.0)
        with pytest.raises(ConfigurationError):
            PowerModel(p_idle=100.0, p_max=50.0)


class TestFit:
    def test_two_point_fit_passes_through_both(self):
        m = fit_power_model([(1.0, 196.0), (0.55, 152.0)])
        assert m.predict(1.0) == pytest.approx(196.0)
        assert m.predict(0.55) == pytest.approx(152.0)
        assert m.p_idle == pytest.approx(98.2222222222, rel=1e-9)

    def test_least_squares_on_collinear_points(self):
        m = fit_power_model([(0.0, 100.0), (0.5, 150.0), (1.0, 200.0)])
        assert m.p_idle == pytest.approx(100.0)
        assert m.p_max == pytest.approx(200.0)

    def test_degenerate_inputs(self):
        with pytest.raises(ConfigurationError):
            fit_power_model([(0.5, 100.0)])
        with pytest.raises(ConfigurationError):
            fit_power_model([(0.5, 100.0), (0.5, 120.0)])
        with pytest.raises(ConfigurationError):
            fit_power_model([(0.5, 100.0), (1.5, 120.0)])


class TestSeries:
    def test_slowest_first_and_joules_exact(self):
        model = fit_power_model([(1.0, 196.0), (0.55, 152.0)])
        series = energy_vs_time_series(model, [
            ("p8", 0.004, 0.55, 8),
            ("p1", 0.0216, 1.0, 1),
            ("p4", 0.0065, 0.765, 4),
            ("p2", 0.012, 0.867, 2),
        ])
        assert [p.name for p in series] == ["p1", "p2", "p4", "p8"]
        assert series[0].joules == pytest.approx(4.2336)
        assert series[-1].joules == pytest.approx(4.864)
        # saving wall time costs joules across this series
        joules = [p.joules for p in series]
        assert joules == sorted(joules)
        assert all(4.0 <= j <= 5.0 for j in joules)
