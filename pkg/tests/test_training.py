import numpy as np
import pytest

from resgan.data import DegradeConfig, degrade, synth_dataset, synth_digits
from resgan.errors import ConfigError, ContractError, TrainingDiverged
from resgan.models import build_discriminator, build_generator
from resgan.tensor import Tensor
from resgan.training import (
    Adam,
    Batch,
    EpochRecord,
    EvalReport,
    Sgd,
    TrainConfig,
    TrainingLog,
    attribute_accuracy,
    build_models,
    detect_balance,
    discriminator_step,
    evaluate,
    generator_step,
    train,
    train_external_probe,
    train_step,
)

SMALL = dict(shape=(1, 16, 16), d=4)


def small_dataset(n=64, seed=0):
    return synth_dataset(n, shape=SMALL["shape"], d=SMALL["d"], seed=seed)


def small_config(kind="resgan", **kw):
    base = dict(kind=kind, epochs=2, batch_size=16, seed=3,
                degrade=DegradeConfig(factor=4))
    base.update(kw)
    return TrainConfig(**base)


def make_batch(ds, cfg, n=16):
    coarse = degrade(ds.images[:n], cfg.degrade)
    return Batch(coarse, ds.images[:n], ds.attributes[:n])


def snapshot(net):
    return [p.data.copy() for _, p in net.parameters()]


def unchanged(net, before):
    return all((p.data == b).all() for (_, p), b in zip(net.parameters(), before))


class TestOptimizers:
    def test_sgd_zero_gradient_noop(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        opt = Sgd([("p", p)], lr=0.1)
        opt.step()  # no grad at all
        np.testing.assert_array_equal(p.data, [1.0, -2.0])
        p.grad = np.zeros(2)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_sgd_step_direction(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([0.5])
        Sgd([("p", p)], lr=0.2).step()
        np.testing.assert_allclose(p.data, [0.9])

    def test_adam_zero_grad_zero_moments_noop(self):
        p = Tensor(np.array([3.0]), requires_grad=True)
        opt = Adam([("p", p)], lr=0.1)
        p.grad = np.zeros(1)
        opt.step()
        np.testing.assert_array_equal(p.data, [3.0])

    def test_adam_first_step_magnitude(self):
        # bias correction makes the first step lr-sized against any gradient scale
        p = Tensor(np.array([0.0]), requires_grad=True)
        opt = Adam([("p", p)], lr=0.01)
        p.grad = np.array([123.0])
        opt.step()
        np.testing.assert_allclose(p.data, [-0.01], rtol=1e-6)


class TestTrainStep:
    def test_zero_lr_leaves_parameters_bit_identical(self):
        ds = small_dataset()
        cfg = small_config()
        gen, disc = build_models(cfg, ds)
        g0, d0 = snapshot(gen), snapshot(disc)
        opt_d, opt_g = Sgd(disc.parameters(), 0.0), Sgd(gen.parameters(), 0.0)
        train_step(gen, disc, make_batch(ds, cfg), cfg, opt_d, opt_g,
                   np.random.default_rng(0))
        assert unchanged(gen, g0) and unchanged(disc, d0)

    def test_discriminator_step_leaves_generator_untouched(self):
        ds = small_dataset()
        cfg = small_config()
        gen, disc = build_models(cfg, ds)
        g0 = snapshot(gen)
        d0 = snapshot(disc)
        opt_d = Adam(disc.parameters(), cfg.lr)
        discriminator_step(gen, disc, make_batch(ds, cfg), cfg, opt_d,
                           np.random.default_rng(0))
        assert unchanged(gen, g0)
        assert not unchanged(disc, d0)

    def test_generator_step_leaves_discriminator_untouched(self):
        ds = small_dataset()
        cfg = small_config()
        gen, disc = build_models(cfg, ds)
        d0 = snapshot(disc)
        g0 = snapshot(gen)
        opt_g = Adam(gen.parameters(), cfg.lr)
        generator_step(gen, disc, make_batch(ds, cfg), cfg, opt_g,
                       np.random.default_rng(0))
        assert unchanged(disc, d0)
        assert not unchanged(gen, g0)

    def test_first_order_discriminator_improvement(self):
        # one D step at a small lr should not increase loss_d on the same batch
        ds = small_dataset(seed=42)
        cfg = small_config(lr=1e-3, optimizer="sgd", seed=42)
        gen, disc = build_models(cfg, ds)
        batch = make_batch(ds, cfg)
        opt_d = Sgd(disc.parameters(), cfg.lr)
        before, _, _ = discriminator_step(gen, disc, batch, cfg, opt_d,
                                          np.random.default_rng(1))
        after, _, _ = discriminator_step(gen, disc, batch, cfg, opt_d,
                                         np.random.default_rng(1))
        assert after <= before + 1e-9

    def test_wgan_step_clips_weights(self):
        ds = small_dataset()
        cfg = small_config(kind="wgan")
        gen, disc = build_models(cfg, ds)
        opt_d = Adam(disc.parameters(), cfg.lr)
        opt_g = Adam(gen.parameters(), cfg.lr)
        assert cfg.d_steps_per_g_step == 5
        train_step(gen, disc, make_batch(ds, cfg), cfg, opt_d, opt_g,
                   np.random.default_rng(0))
        assert max(np.abs(p.data).max() for _, p in disc.parameters()) <= cfg.clip_c

    def test_tiny_batch_rejected(self):
        ds = small_dataset()
        cfg = small_config()
        gen, disc = build_models(cfg, ds)
        batch = Batch(ds.images[:1], ds.images[:1], ds.attributes[:1])
        with pytest.raises(ContractError):
            train_step(gen, disc, batch, cfg, Sgd(disc.parameters(), 0.1),
                       Sgd(gen.parameters(), 0.1), np.random.default_rng(0))


class TestTrain:
    def test_epoch_cardinality(self):
        (_, _), log = train(small_config(epochs=3), small_dataset())
        assert len(log.records) == 3
        assert [r.epoch for r in log.records] == [0, 1, 2]

    def test_deterministic_logs(self):
        cfg_a, cfg_b = small_config(), small_config()
        (_, _), log_a = train(cfg_a, small_dataset())
        (_, _), log_b = train(cfg_b, small_dataset())
        assert log_a.loss_g() == log_b.loss_g()
        assert log_a.loss_d() == log_b.loss_d()
        assert [r.accuracy for r in log_a.records] == [r.accuracy for r in log_b.records]

    def test_checkpoints_written_at_cadence(self, tmp_path):
        train(small_config(epochs=2, checkpoint_every=1), small_dataset(),
              checkpoint_dir=str(tmp_path))
        assert sorted(p.name for p in tmp_path.glob("gen_*.rgan")) == \
            ["gen_0000.rgan", "gen_0001.rgan"]

    @pytest.mark.filterwarnings("ignore:invalid value encountered")
    def test_divergence_preserves_partial_log(self):
        ds = small_dataset()
        cfg = small_config(epochs=5, lr=1.0, optimizer="sgd")

        # force divergence by corrupting the generator after construction
        class Exploder(Sgd):
            def step(self):
                for _, p in self.params:
                    p.data = p.data + np.inf

        gen, disc = build_models(cfg, ds)
        coarse = degrade(ds.images, cfg.degrade)
        batch = Batch(coarse[:16], ds.images[:16], ds.attributes[:16])
        with pytest.raises(TrainingDiverged):
            train_step(gen, disc, batch, cfg, Exploder(disc.parameters(), 1.0),
                       Sgd(gen.parameters(), 1.0), np.random.default_rng(0))

    def test_record_hook_fires_per_epoch(self):
        seen = []
        train(small_config(epochs=2), small_dataset(),
              record_hook=lambda r: seen.append(r.epoch))
        assert seen == [0, 1]

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=1)
        with pytest.raises(ConfigError):
            TrainConfig(lr=0.0)


class TestDetectBalance:
    @staticmethod
    def fake_log(loss_g, loss_d):
        log = TrainingLog()
        for e, (g, d) in enumerate(zip(loss_g, loss_d)):
            log.records.append(EpochRecord(e, g, d, 0.0, 0.0))
        return log

    def test_crossing_reported_at_sign_change(self):
        log = self.fake_log([2.0, 1.5, 1.0], [1.0, 1.4, 1.8])
        assert detect_balance(log) == 2

    def test_parallel_curves_none(self):
        log = self.fake_log([2.0, 1.9, 1.8], [1.0, 0.9, 0.8])
        assert detect_balance(log) is None

    def test_short_log_none(self):
        assert detect_balance(self.fake_log([1.0], [2.0])) is None

    def test_prefix_shift_stability(self):
        base_g, base_d = [2.0, 1.5, 1.0], [1.0, 1.4, 1.8]
        assert detect_balance(self.fake_log(base_g, base_d)) == 2
        pad_g, pad_d = [2.2, 2.1] + base_g, [0.8, 0.9] + base_d
        assert detect_balance(self.fake_log(pad_g, pad_d)) == 4

    def test_touch_counts_as_crossing(self):
        log = self.fake_log([2.0, 1.0, 0.5], [1.0, 1.0, 1.5])
        assert detect_balance(log) == 1


class TestEvaluate:
    def test_argmax_agreement_rule(self):
        scores = np.array([[0.1, 0.7, 0.2]])
        labels = np.eye(3)[[1]]
        assert attribute_accuracy(scores, labels) == 1.0

    def test_random_responses_hit_chance_level(self):
        rng = np.random.default_rng(0)
        scores = rng.uniform(size=(2000, 10))
        labels = np.eye(10)[rng.integers(0, 10, 2000)]
        acc = attribute_accuracy(scores, labels)
        assert abs(acc - 0.1) < 0.03

    def test_embedded_eval_report(self):
        ds = small_dataset(n=48)
        cfg = small_config(epochs=1)
        models, _ = train(cfg, ds)
        report = evaluate(models, ds, cfg)
        assert report.kind == "resgan" and 0.0 <= report.accuracy <= 1.0
        assert np.isfinite(report.loss)

    def test_attribute_blind_kind_needs_probe(self):
        ds = small_dataset(n=48)
        cfg = small_config(kind="gan", epochs=1)
        models, _ = train(cfg, ds)
        with pytest.raises(ContractError):
            evaluate(models, ds, cfg)

    def test_external_probe_scores_all_kinds(self):
        ds = small_dataset(n=64)
        probe = train_external_probe(ds, seed=0, epochs=2)
        cfg = small_config(kind="gan", epochs=1)
        models, _ = train(cfg, ds)
        report = evaluate(models, ds, cfg, probe=probe)
        assert 0.0 <= report.accuracy <= 1.0

    def test_empty_split_rejected(self):
        ds = small_dataset(n=48)
        cfg = small_config(epochs=1)
        models, _ = train(cfg, ds)
        empty = ds.subset(np.array([], dtype=int))
        with pytest.raises(ContractError):
            evaluate(models, empty, cfg)

    def test_report_accuracy_range_enforced(self):
        with pytest.raises(ConfigError):
            EvalReport(loss=1.0, accuracy=1.2, kind="gan", dataset="synth")


class TestCsv:
    def test_default_timing_off_is_deterministic(self, tmp_path):
        log = TrainingLog()
        log.records.append(EpochRecord(0, 1.5, 2.5, 0.25, 0.123))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        log.write_csv(a)
        log.records[0] = EpochRecord(0, 1.5, 2.5, 0.25, 0.999)  # different wall time
        log.write_csv(b)
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().splitlines()[0] == "epoch,loss_g,loss_d,accuracy,wall_ms"

    def test_wall_timing_opt_in(self, tmp_path):
        log = TrainingLog()
        log.records.append(EpochRecord(0, 1.0, 2.0, 0.5, 0.123))
        path = tmp_path / "t.csv"
        log.write_csv(path, timing="wall")
        assert path.read_text().splitlines()[1].endswith(",123")
