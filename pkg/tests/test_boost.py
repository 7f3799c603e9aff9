import numpy as np
import pytest

from hiprenet.boost import (
    HiPreNetModel,
    Stage,
    StageConfig,
    compute_stage_residuals,
    predict,
    sampling_distribution,
    train_hiprenet,
    train_stage,
    weighted_resample,
)
from hiprenet.feynman import Dataset
from hiprenet.mlp import Mlp, MlpArchitecture, batch_forward, init_params
from hiprenet.numeric import Rng
from hiprenet.optimizer import BfgsOptions


def random_net(seed, input_dim=2, widths=(3, 3)):
    arch = MlpArchitecture(input_dim, widths)
    return Mlp(arch, init_params(arch, Rng(seed)))


def toy_dataset(seed=0, n=64, input_dim=2):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, input_dim))
    y = X[:, 0] * 2.0 + np.sin(X[:, 1] if input_dim > 1 else X[:, 0])
    return Dataset(X=X, y=y)


def fast_opts(iters=120):
    return BfgsOptions(max_iterations=iters)


class TestPredict:
    def test_no_stages_equals_initial(self):
        model = HiPreNetModel(random_net(1))
        X = np.random.default_rng(0).uniform(-1, 1, (20, 2))
        assert (predict(model, X) == batch_forward(model.initial, X)).all()

    def test_zero_parameter_stage_is_identity(self):
        initial = random_net(1)
        zero_net = Mlp(initial.arch, np.zeros(initial.arch.parameter_count))
        model = HiPreNetModel(initial, [Stage(0.5, zero_net)])
        X = np.random.default_rng(1).uniform(-1, 1, (20, 2))
        assert (predict(model, X) == batch_forward(initial, X)).all()

    def test_three_stage_term_by_term(self):
        initial = random_net(1)
        stages = [Stage(0.5, random_net(2)), Stage(0.25, random_net(3)), Stage(0.125, random_net(4))]
        model = HiPreNetModel(initial, stages)
        X = np.random.default_rng(2).uniform(-1, 1, (10, 2))
        manual = batch_forward(initial, X).copy()
        for st in stages:
            manual += st.scale * batch_forward(st.net, X)
        assert (predict(model, X) == manual).all()

    def test_truncation_matches_recursion(self):
        initial = random_net(5)
        stages = [Stage(0.3, random_net(6)), Stage(0.09, random_net(7))]
        model = HiPreNetModel(initial, stages)
        X = np.random.default_rng(3).uniform(-1, 1, (15, 2))
        for k in range(1, 3):
            prev = predict(model.truncated(k - 1), X)
            step = prev + stages[k - 1].scale * batch_forward(stages[k - 1].net, X)
            assert (predict(model.truncated(k), X) == step).all()

    def test_dimension_mismatch(self):
        model = HiPreNetModel(random_net(1))
        with pytest.raises(ValueError):
            predict(model, np.zeros((4, 3)))


class TestStageResiduals:
    def test_perfect_model_degenerate(self):
        initial = random_net(1)
        X = np.random.default_rng(0).uniform(-1, 1, (30, 2))
        ds = Dataset(X=X, y=batch_forward(initial, X))
        res = compute_stage_residuals(HiPreNetModel(initial), ds)
        assert res.degenerate
        assert (res.raw == 0.0).all()
        assert res.normalized is None

    def test_direct_arithmetic(self):
        # zero network so the raw residuals equal the targets
        arch = MlpArchitecture(1, (1,))
        model = HiPreNetModel(Mlp(arch, np.zeros(arch.parameter_count)))
        ds = Dataset(X=np.zeros((3, 1)), y=np.array([0.2, -0.5, 0.1]))
        res = compute_stage_residuals(model, ds)
        assert res.scale == 0.5
        np.testing.assert_array_equal(res.normalized, [0.4, -1.0, 0.2])

    def test_normalized_max_is_one(self):
        rng = np.random.default_rng(4)
        for seed in range(5):
            model = HiPreNetModel(random_net(seed + 10))
            X = rng.uniform(-1, 1, (40, 2))
            ds = Dataset(X=X, y=rng.standard_normal(40))
            res = compute_stage_residuals(model, ds)
            assert abs(np.max(np.abs(res.normalized)) - 1.0) <= np.finfo(np.float64).eps

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            compute_stage_residuals(
                HiPreNetModel(random_net(0)), Dataset(X=np.zeros((0, 2)), y=np.zeros(0))
            )


class TestSamplingDistribution:
    def test_direct(self):
        np.testing.assert_allclose(sampling_distribution(np.array([1.0, 3.0])), [0.25, 0.75], rtol=0)

    def test_constant_residuals_uniform(self):
        p = sampling_distribution(np.full(8, -0.7))
        np.testing.assert_allclose(p, 0.125, rtol=1e-15)

    def test_normalization_and_sign(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            p = sampling_distribution(rng.standard_normal(int(rng.integers(1, 100))))
            assert abs(p.sum() - 1.0) <= 1e-12
            assert (p >= 0.0).all()

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            sampling_distribution(np.zeros(4))


class TestWeightedResample:
    def test_point_mass(self):
        ds = toy_dataset(n=8)
        p = np.zeros(8)
        p[3] = 1.0
        idx = weighted_resample(ds, p, 20, Rng(0))
        assert (idx == 3).all()

    def test_determinism(self):
        ds = toy_dataset(n=16)
        p = sampling_distribution(np.arange(1.0, 17.0))
        a = weighted_resample(ds, p, 50, Rng(4))
        b = weighted_resample(ds, p, 50, Rng(4))
        assert (a == b).all()

    def test_empirical_frequencies(self):
        ds = toy_dataset(n=4)
        p = np.array([0.1, 0.2, 0.3, 0.4])
        idx = weighted_resample(ds, p, 100_000, Rng(11))
        freq = np.bincount(idx, minlength=4) / idx.size
        assert np.max(np.abs(freq - p)) < 0.01

    def test_zero_count_rejected(self):
        ds = toy_dataset(n=4)
        with pytest.raises(ValueError):
            weighted_resample(ds, np.full(4, 0.25), 0, Rng(0))

    def test_indices_in_range_and_data_untouched(self):
        ds = toy_dataset(n=32)
        X_before = ds.X.copy()
        p = sampling_distribution(np.abs(np.random.default_rng(6).standard_normal(32)) + 0.01)
        idx = weighted_resample(ds, p, 200, Rng(2))
        assert ((0 <= idx) & (idx < 32)).all()
        assert (ds.X == X_before).all()


class TestTrainStage:
    def test_improves_training_rmse_on_linear_target(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(0.0, 1.0, (200, 1))
        ds = Dataset(X=X, y=2.0 * X[:, 0])
        # deliberately poor initial network
        arch = MlpArchitecture(1, (3,))
        model = HiPreNetModel(Mlp(arch, np.zeros(arch.parameter_count)))
        before = compute_stage_residuals(model, ds)
        cfg = StageConfig(hidden_widths=(5, 5), optimizer=fast_opts())
        model2, report = train_stage(model, ds, cfg, Rng(1))
        assert report.appended
        assert len(model2.stages) == 1
        assert report.train_rmse < float(np.sqrt(np.mean(before.raw**2)))

    def test_degenerate_residuals_no_stage(self):
        initial = random_net(3)
        X = np.random.default_rng(8).uniform(-1, 1, (50, 2))
        ds = Dataset(X=X, y=batch_forward(initial, X))
        model = HiPreNetModel(initial)
        model2, report = train_stage(model, ds, StageConfig((3,), optimizer=fast_opts(10)), Rng(0))
        assert not report.appended
        assert report.note == "degenerate"
        assert len(model2.stages) == 0

    def test_weighted_sampling_path(self):
        ds = toy_dataset(seed=9, n=150)
        model = HiPreNetModel(random_net(4))
        cfg = StageConfig((4, 4), optimizer=fast_opts(), sampling="weighted", resample_count=120)
        model2, report = train_stage(model, ds, cfg, Rng(3))
        assert report.appended and len(model2.stages) == 1

    def test_wmse_path(self):
        ds = toy_dataset(seed=10, n=150)
        model = HiPreNetModel(random_net(5))
        cfg = StageConfig((4, 4), optimizer=fast_opts(), loss="wmse")
        model2, report = train_stage(model, ds, cfg, Rng(3))
        assert report.appended
        assert np.isfinite(report.contraction)


class TestTrainHipreNet:
    def test_infinite_tolerance_stops_after_initial(self):
        ds, val = toy_dataset(0, 80), toy_dataset(1, 80)
        cfg = StageConfig((3, 3), optimizer=fast_opts(40))
        model, reports = train_hiprenet(ds, val, [cfg, cfg], cfg, np.inf, Rng(0))
        assert len(model.stages) == 0
        assert len(reports) == 1

    def test_empty_schedule(self):
        ds, val = toy_dataset(0, 80), toy_dataset(1, 80)
        cfg = StageConfig((3, 3), optimizer=fast_opts(40))
        model, reports = train_hiprenet(ds, val, [], cfg, 0.0, Rng(0))
        assert len(model.stages) == 0 and len(reports) == 1

    def test_reports_align_with_stages(self):
        ds, val = toy_dataset(2, 120), toy_dataset(3, 120)
        cfg = StageConfig((4, 4), optimizer=fast_opts(80))
        model, reports = train_hiprenet(ds, val, [cfg, cfg], cfg, 0.0, Rng(5))
        assert len(reports) == 1 + len(model.stages)
        assert [r.stage_index for r in reports] == list(range(len(reports)))
        assert all(r.val_rmse is not None for r in reports)

    def test_bit_reproducible(self):
        ds, val = toy_dataset(4, 100), toy_dataset(5, 100)
        cfg = StageConfig((4, 4), optimizer=fast_opts(60))
        m1, r1 = train_hiprenet(ds, val, [cfg], cfg, 0.0, Rng(9))
        m2, r2 = train_hiprenet(ds, val, [cfg], cfg, 0.0, Rng(9))
        assert (m1.initial.params == m2.initial.params).all()
        assert len(m1.stages) == len(m2.stages)
        for a, b in zip(m1.stages, m2.stages):
            assert a.scale == b.scale
            assert (a.net.params == b.net.params).all()
        assert [x.train_rmse for x in r1] == [x.train_rmse for x in r2]

    def test_contraction_identity_chain(self):
        ds, val = toy_dataset(6, 200), toy_dataset(7, 200)
        cfg = StageConfig((4, 4), optimizer=fast_opts(150))
        model, reports = train_hiprenet(ds, val, [cfg, cfg, cfg], cfg, 0.0, Rng(2))
        for i in range(1, len(model.stages) + 1):
            lhs = compute_stage_residuals(model.truncated(i), ds).scale
            rhs = reports[i].contraction * reports[i].scale
            assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs))
