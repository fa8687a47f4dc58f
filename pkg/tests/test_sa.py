import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelcode import analytic as an
from labelcode import codebook as cb
from labelcode import sa_designer as sa

FAST = dict(n_levels=8, n_bits=6, n_samples=200, f_samples_per_row=20)


class TestAccept:
    def test_improvement_always(self):
        assert sa.accept(-1e-9, 1e-6, 0.999999)

    def test_zero_delta_depends_on_u(self):
        assert sa.accept(0.0, 0.1, 0.5)

    def test_rate_matches_metropolis(self):
        rng = np.random.default_rng(0)
        n = 10_000
        d = rng.uniform(1e-3, 1.0, n)
        t = rng.uniform(0.05, 1.0, n)
        p = np.exp(-d / t)
        hits = sum(sa.accept(di, ti, rng.random()) for di, ti in zip(d, t))
        assert abs(hits - p.sum()) <= 3 * np.sqrt((p * (1 - p)).sum())


class TestMoves:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 12), st.integers(0, 2**31))
    def test_random_flip_hamming(self, b, seed):
        code = cb.random_code(6, 4, seed)
        out = sa.move_random_flip(code, b, np.random.default_rng(seed))
        assert int((out.bits != code.bits).sum()) == b

    def test_random_flip_bounds(self):
        with pytest.raises(ValueError):
            sa.move_random_flip(cb.unary_code(3), 7, np.random.default_rng(0))

    def test_top_pairs_order_and_ties(self):
        F = np.array([[0, 2, 5], [2, 0, 1], [5, 0, 0]], dtype=float)
        assert sa.top_pairs(F, 3) == [(0, 2), (2, 0), (0, 1)]

    def test_top_pairs_skips_zero(self):
        assert sa.top_pairs(np.zeros((4, 4)), 2) == []

    def test_error_based_increases_distance(self):
        code = cb.unary_code(6)
        F = np.zeros((6, 6))
        F[1, 2] = 3.0
        out = sa.move_error_based(code, F, 1, np.random.default_rng(0))
        assert (out.bits != code.bits).sum() == 1
        assert (out.bits[1] != code.bits[1]).sum() == 1
        assert cb.hamming_distance(out.row(2), out.row(3)) == cb.hamming_distance(code.row(2), code.row(3)) + 1

    def test_error_based_no_agreeing_bit(self):
        code = cb.CodeMatrix(np.array([[0, 0], [1, 1]], dtype=np.uint8))
        F = np.array([[0, 1.0], [1.0, 0]])
        assert sa.move_error_based(code, F, 1, np.random.default_rng(0)) == code


class TestAnneal:
    def test_kmax_zero_returns_initial(self):
        cfg = sa.AnnealConfig(k_max=0, seed=5, **FAST)
        best, trace = sa.anneal(cfg)
        assert len(trace.records) == 1
        assert best == cb.random_code(8, 6, sa._seed(cfg, 0, 0))

    @pytest.mark.parametrize("move", sa.MOVE_KINDS)
    def test_best_never_worse_and_monotone(self, move):
        _, trace = sa.anneal(sa.AnnealConfig(k_max=30, move_kind=move, seed=1, **FAST))
        best = trace.best_energies
        assert (np.diff(best) <= 0).all()
        assert best[-1] <= trace.records[0].current_energy

    def test_deterministic(self):
        cfg = sa.AnnealConfig(k_max=15, seed=3, **FAST)
        a, ta = sa.anneal(cfg)
        b, tb = sa.anneal(cfg)
        assert a == b
        assert ta.to_csv() == tb.to_csv()

    def test_temperature_schedule(self):
        _, trace = sa.anneal(sa.AnnealConfig(k_max=5, t_initial=0.3, **FAST))
        assert [r.temperature for r in trace.records[1:]] == pytest.approx([0.3 / k for k in range(1, 6)])

    def test_best_energy_matches_recorded_state(self):
        cfg = sa.AnnealConfig(k_max=20, move_kind="random_flip", seed=2, **FAST)
        best, trace = sa.anneal(cfg)
        assert best.bits.shape == (8, 6)
        k = int(np.argmin([r.current_energy for r in trace.records]))
        assert trace.records[-1].best_energy == trace.records[k].current_energy

    def test_trace_csv_header(self):
        _, trace = sa.anneal(sa.AnnealConfig(k_max=2, **FAST))
        lines = trace.to_csv().splitlines()
        assert lines[0] == "iteration,current_energy,best_energy,accepted,temperature"
        assert len(lines) == 4

    @pytest.mark.parametrize("kw", [{"k_max": -1}, {"t_initial": 0}, {"move_kind": "swap"}, {"flips_per_move": 0}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            sa.AnnealConfig(**kw)

    def test_energy_is_estimated_mae(self):
        code = cb.johnson_code(8)
        cfg = sa.AnnealConfig(**FAST)
        expected = an.estimate_mae(code, an.build_error_model(code, cfg.r, cfg.sigma), cfg.n_samples, 4)
        assert sa.energy(code, cfg, 4) == expected.mean_abs_error
