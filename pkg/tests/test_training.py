import math

import numpy as np
import pytest

from maskstereo.model import ModelParams, checkpoint_bytes
from maskstereo.patches import TrainingSample
from maskstereo.training import (
    LossRecord,
    TrainConfig,
    TrainingDiverged,
    compute_loss,
    train,
    write_loss_csv,
)


def toy_samples(n, seed=0, dtype=np.float32):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        a = rng.uniform(0, 1, (36, 36, 4)).astype(dtype)
        b = rng.uniform(0, 1, (36, 36, 4)).astype(dtype)
        a[..., 3] = b[..., 3] = rng.integers(0, 2, (36, 36))
        out.append(TrainingSample(a, b, i % 2))
    return out


@pytest.fixture(scope="module")
def params64():
    return ModelParams.initialise(seed=4, dtype=np.float64)


class TestConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=-1)

    def test_json(self):
        cfg = TrainConfig.from_json('{"epochs": 3, "seed": 9}')
        assert (cfg.epochs, cfg.seed) == (3, 9)
        with pytest.raises(ValueError, match="momentum"):
            TrainConfig.from_json('{"momentum": 0.9}')


class TestLoss:
    def test_total_is_sum(self):
        rec = LossRecord(0.25, 0.5)
        assert rec.loss_total == 0.75

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            compute_loss([], ModelParams.initialise(0))

    def test_zero_heads_give_ln2(self):
        p = ModelParams.initialise(0)
        for head in (p.corr_head, p.concat_head):
            head.weights[-1].data[:] = 0
            head.biases[-1].data[:] = 0
        rec = compute_loss(toy_samples(4), p)
        assert rec.loss_corr == pytest.approx(math.log(2), abs=1e-6)
        assert rec.loss_concat == pytest.approx(math.log(2), abs=1e-6)
        assert rec.loss_total == pytest.approx(2 * math.log(2), abs=1e-6)

    def test_gradient_reaches_both_trunks(self):
        p = ModelParams.initialise(1)
        compute_loss(toy_samples(2), p)
        for name, t in p.named_tensors():
            assert t.grad is not None and t.grad.shape == t.data.shape, name
        assert np.any(p.rgb_branch.weights[0].grad) and np.any(p.lwir_branch.weights[0].grad)

    @pytest.mark.parametrize("name", ["rgb.conv1.weight", "lwir.conv9.weight", "corr.fc1.weight",
                                      "concat.fc3.bias", "lwir.conv5.bias"])
    def test_finite_differences(self, params64, name):
        batch = toy_samples(2, seed=3, dtype=np.float64)
        p = params64
        compute_loss(batch, p)
        tensor = dict(p.named_tensors())[name]
        analytic = tensor.grad.copy()
        rng = np.random.default_rng(0)
        eps = 1e-6
        for idx in [tuple(rng.integers(0, s) for s in tensor.data.shape) for _ in range(4)]:
            old = tensor.data[idx]
            tensor.data[idx] = old + eps
            up = compute_loss(batch, p, backward=False).loss_total
            tensor.data[idx] = old - eps
            down = compute_loss(batch, p, backward=False).loss_total
            tensor.data[idx] = old
            num = (up - down) / (2 * eps)
            rel = abs(num - analytic[idx]) / max(abs(num) + abs(analytic[idx]), 1e-7)
            assert rel < 1e-3 or abs(num - analytic[idx]) < 1e-9, (name, idx, num, analytic[idx])


class TestTrain:
    def test_zero_lr_keeps_params(self):
        p = ModelParams.initialise(0)
        before = checkpoint_bytes(p)
        train(toy_samples(4), TrainConfig(learning_rate=0.0, epochs=1, batch_size=2), params=p, final_loss=False)
        assert checkpoint_bytes(p) == before

    def test_loss_decreases(self):
        p = ModelParams.initialise(2, dtype=np.float64)
        batch = toy_samples(4, seed=2, dtype=np.float64)
        losses = []
        res = train(batch, TrainConfig(learning_rate=1e-4, epochs=10, batch_size=4), params=p,
                    on_step=lambda r: losses.append(r.loss_total))
        assert len(res.records) == 10
        assert losses[-1] < losses[0]
        assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))

    def test_identity_every_step(self):
        res = train(toy_samples(6), TrainConfig(epochs=1, batch_size=2), final_loss=False)
        for r in res.records:
            assert abs(r.loss_total - (r.loss_corr + r.loss_concat)) < 1e-6
        assert [r.step for r in res.records] == [0, 1, 2]

    def test_deterministic_checkpoints(self, tmp_path):
        cfg = TrainConfig(epochs=1, batch_size=3, seed=5)
        train(toy_samples(6), cfg, checkpoint_path=tmp_path / "a.ckpt", final_loss=False)
        train(toy_samples(6), cfg, checkpoint_path=tmp_path / "b.ckpt", final_loss=False)
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_nan_aborts(self):
        samples = toy_samples(2)
        samples[0].p_rgb[0, 0, 0] = np.nan
        with pytest.raises(TrainingDiverged):
            train(samples, TrainConfig(epochs=1, batch_size=2), final_loss=False)

    def test_empty(self):
        with pytest.raises(ValueError):
            train([], TrainConfig())

    def test_loss_csv(self, tmp_path):
        write_loss_csv(tmp_path / "l.csv", [LossRecord(0.5, 0.25, 0, 0)])
        lines = (tmp_path / "l.csv").read_text().splitlines()
        assert lines == ["epoch,step,loss_corr,loss_concat,loss_total", "0,0,0.5,0.25,0.75"]
