"""Event model, generators, splitting, and CSV round-trips."""

import io

import numpy as np
import pytest

from srfilter.events import (Dataset, Event, MixtureSpec, PhysicsParams,
                             SplitSpec, Tag, Truth, generate_physics_like,
                             generate_toy1d, generate_toy1d_null, read_events,
                             sample_mixture, split, toy1d_spec_3b,
                             toy1d_spec_4b, wrap_angle, write_events,
                             N_FEATURES, M_COLUMNS)


def _physics_event(seed=0):
    d3b, _ = generate_physics_like(1, 1, 0.0, seed=seed)
    return d3b.event(0)


class TestEventInvariants:
    def test_valid_event_passes(self):
        _physics_event().validate()

    def test_negative_pt_rejected(self):
        e = _physics_event()
        f = e.features.copy()
        f[0] = -1.0
        with pytest.raises(ValueError, match="pt1"):
            Event(f, Tag.THREE_B).validate()

    def test_negative_mass_rejected(self):
        e = _physics_event()
        f = e.features.copy()
        f[M_COLUMNS[2]] = -0.5
        with pytest.raises(ValueError, match="m3"):
            Event(f, Tag.THREE_B).validate()

    def test_phi_out_of_range_rejected(self):
        e = _physics_event()
        f = e.features.copy()
        f[2] = np.pi
        with pytest.raises(ValueError, match="phi1"):
            Event(f, Tag.THREE_B).validate()

    def test_signal_requires_4b(self):
        e = _physics_event()
        with pytest.raises(ValueError, match="4b"):
            Event(e.features, Tag.THREE_B, Truth.SIGNAL).validate()
        Event(e.features, Tag.FOUR_B, Truth.SIGNAL).validate()


class TestWrapAngle:
    def test_in_range_passes_through_bitwise(self):
        x = np.array([-np.pi, -1.0, 0.0, 1.0, np.nextafter(np.pi, 0)])
        w = wrap_angle(x)
        assert np.array_equal(w, x)

    def test_pi_maps_to_minus_pi_exactly(self):
        assert wrap_angle(np.pi) == -np.pi

    def test_wrapping_periodicity(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-np.pi, np.pi, 500)
        for k in (-2, -1, 1, 2):
            w = wrap_angle(x + 2 * np.pi * k)
            assert np.all(w >= -np.pi)
            assert np.all(w < np.pi)
            assert np.allclose(w, x, atol=1e-9)


class TestMixture:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            MixtureSpec.from_components([(0.6, 0.0, 1.0), (0.3, 1.0, 1.0)])

    def test_moments_match_sample(self):
        spec = toy1d_spec_4b(0.05)
        x, comp = sample_mixture(spec, 200000, seed=3)
        assert x.shape == (200000, 1)
        assert abs(x.mean() - spec.mean()[0]) < 0.05
        assert abs(x.var() - spec.variance()[0]) < 0.25
        # component frequencies follow the weights
        frac = np.mean(comp == 1)
        assert abs(frac - 0.05) < 0.005

    def test_sampling_deterministic(self):
        spec = toy1d_spec_3b()
        x1, c1 = sample_mixture(spec, 100, seed=9)
        x2, c2 = sample_mixture(spec, 100, seed=9)
        assert np.array_equal(x1, x2)
        assert np.array_equal(c1, c2)


class TestToyGenerators:
    def test_toy1d_shapes_and_labels(self):
        d3b, d4b = generate_toy1d(500, 400, 0.05, seed=1)
        assert len(d3b) == 500 and len(d4b) == 400
        assert d3b.dims == 1 and d4b.dims == 1
        assert d3b.n_3b == 500 and d4b.n_4b == 400
        assert d3b.n_signal == 0
        assert 0 < d4b.n_signal < 400
        # signal labels sit under the bump
        sig_vals = d4b.active_features[d4b.is_signal, 0]
        assert np.all(np.abs(sig_vals - 7.0) < 4.0)

    def test_toy1d_null_same_distribution(self):
        d3b, d4b = generate_toy1d_null(50000, 50000, 0.05, seed=2)
        a, b = d3b.active_features[:, 0], d4b.active_features[:, 0]
        assert abs(a.mean() - b.mean()) < 0.1
        assert abs(a.std() - b.std()) < 0.1
        # pseudo-labels are independent of the feature
        sig = d4b.is_signal
        assert 0.04 < sig.mean() < 0.06
        assert abs(b[sig].mean() - b[~sig].mean()) < 0.15

    def test_epsilon_zero_has_no_signal(self):
        _, d4b = generate_toy1d(10, 1000, 0.0, seed=3)
        assert d4b.n_signal == 0


class TestPhysicsGenerator:
    def test_shapes_and_validity(self):
        d3b, d4b = generate_physics_like(2000, 2000, 0.05, seed=5)
        assert d3b.features.shape == (2000, N_FEATURES)
        for ds in (d3b, d4b):
            for i in range(0, len(ds), 500):
                ds.event(i).validate()

    def test_signal_fraction_near_epsilon(self):
        _, d4b = generate_physics_like(10, 20000, 0.05, seed=6)
        assert abs(d4b.n_signal / 20000 - 0.05) < 0.01

    def test_signal_blob_localized(self):
        params = PhysicsParams()
        _, d4b = generate_physics_like(10, 40000, 0.05, seed=7)
        sig = d4b.features[d4b.is_signal]
        bkg = d4b.features[~d4b.is_signal]
        for col in params.blob_columns:
            assert sig[:, col].std() < 0.6 * bkg[:, col].std()

    def test_background_shift_between_tags(self):
        d3b, d4b = generate_physics_like(50000, 50000, 0.0, seed=8)
        # pt2 log-mean shift is the largest configured difference
        lm3 = np.log(d3b.features[:, 4]).mean()
        lm4 = np.log(d4b.features[:, 4]).mean()
        assert 0.1 < lm4 - lm3 < 0.26

    def test_log_density_matches_sampler(self):
        # closed-form background density integrates to ~1 over a feature slice
        params = PhysicsParams()
        d3b, _ = generate_physics_like(50000, 10, 0.0, seed=9)
        logp = params.log_density_3b(d3b.features)
        assert np.all(np.isfinite(logp))
        # higher density on average for its own sample than for shifted one
        _, d4b = generate_physics_like(10, 50000, 0.0, seed=10)
        logq = params.log_density_3b(d4b.features)
        assert logp.mean() > logq.mean()


class TestSplit:
    def test_sizes_and_disjointness(self):
        d3b, _ = generate_toy1d(1000, 10, 0.05, seed=11)
        spec = SplitSpec((("a", 0.75), ("b", 0.0625), ("c", 0.1875)))
        parts = split(d3b, spec, seed=12)
        assert [len(p) for p in parts] == [750, 62, 188]
        vals = np.concatenate([p.active_features[:, 0] for p in parts])
        assert len(np.unique(vals)) == 1000

    def test_remainder_goes_to_last(self):
        d3b, _ = generate_toy1d(10, 10, 0.05, seed=13)
        parts = split(d3b, SplitSpec((("x", 0.5), ("y", 0.5))), seed=14)
        assert len(parts[0]) + len(parts[1]) == 10

    def test_deterministic(self):
        d3b, _ = generate_toy1d(100, 10, 0.05, seed=15)
        spec = SplitSpec((("a", 0.3), ("b", 0.7)))
        p1 = split(d3b, spec, seed=16)
        p2 = split(d3b, spec, seed=16)
        assert np.array_equal(p1[0].features, p2[0].features)

    def test_fractions_must_sum(self):
        with pytest.raises(ValueError):
            SplitSpec((("a", 0.5), ("b", 0.4))).validate()


class TestEventsCsv:
    def test_round_trip_bit_exact_16d(self, tmp_path):
        d3b, d4b = generate_physics_like(50, 60, 0.1, seed=17)
        for ds in (d3b, d4b):
            path = tmp_path / f"{ds.name.replace('/', '_')}.csv"
            write_events(ds, path)
            back = read_events(path)
            assert np.array_equal(back.features, ds.features)
            assert np.array_equal(back.tags, ds.tags)
            assert np.array_equal(back.truths, ds.truths)
            assert back.dims == ds.dims

    def test_round_trip_1d_marker(self, tmp_path):
        _, d4b = generate_toy1d(10, 30, 0.2, seed=18)
        path = tmp_path / "toy.csv"
        write_events(d4b, path)
        text = path.read_text()
        assert text.startswith("# dims=1\n")
        back = read_events(path)
        assert back.dims == 1
        assert np.array_equal(back.features, d4b.features)

    def test_malformed_row_reports_line(self, tmp_path):
        d3b, _ = generate_physics_like(3, 3, 0.0, seed=19)
        path = tmp_path / "bad.csv"
        write_events(d3b, path)
        lines = path.read_text().splitlines()
        lines[2] = lines[2].replace(",", ";", 1)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match=r"bad\.csv:3"):
            read_events(path)

    def test_invalid_value_rejected(self, tmp_path):
        d3b, _ = generate_physics_like(3, 3, 0.0, seed=20)
        path = tmp_path / "bad.csv"
        write_events(d3b, path)
        lines = path.read_text().splitlines()
        parts = lines[1].split(",")
        parts[1] = "-5.0"  # pt1 < 0
        lines[1] = ",".join(parts)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="pt1"):
            read_events(path)
