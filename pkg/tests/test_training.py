import numpy as np
import pytest

import reference
from csn import checkpoint as ckpt
from csn import ops
from csn.autodiff import ParamStore, Tape, l1_loss
from csn.degrade import degrade_bd
from csn.model import ModelConfig, build
from csn.training import (AdamState, SamplePair, TrainConfig, adam_step,
                          dihedral, lr_at, sample_batch, train, write_log)

TINY = ModelConfig(n=1, m=1, channels=8, growth=2, scale=2)


def make_pairs(count=4, hr_size=32, scale=2, seed=0):
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(count):
        hr = reference.synth_image(hr_size, hr_size, rng)
        lr = degrade_bd(hr, scale)
        pairs.append(SamplePair(f"img{i}", lr.astype(np.float32),
                                hr.astype(np.float32), scale))
    return pairs


def quick_cfg(**kw):
    base = dict(batch_size=2, patch_lr=8, iterations=40, lr0=1e-3,
                lr_halve_period=10 ** 9, seed=5, log_every=10,
                validation_every=20, checkpoint_every=0)
    base.update(kw)
    return TrainConfig(**base).validate()


class TestL1Loss:
    def test_matches_direct_mean_abs(self):
        rng = np.random.default_rng(1)
        a = rng.random((2, 1, 4, 4)).astype(np.float32)
        b = rng.random((2, 1, 4, 4)).astype(np.float32)
        tape = Tape()
        got = float(l1_loss(tape.leaf(a), b).value)
        assert abs(got - float(np.mean(np.abs(a - b)))) < 1e-10

    def test_gradient_entries_quantized(self):
        rng = np.random.default_rng(2)
        a = rng.random((1, 1, 4, 4)).astype(np.float32)
        b = rng.random((1, 1, 4, 4)).astype(np.float32)
        tape = Tape()
        pred = tape.leaf(a)
        tape.backward(l1_loss(pred, b))
        c = np.float32(1.0 / 16.0)
        assert np.all(np.isin(pred.grad, [np.float32(-c), np.float32(0.0), c]))


class TestAdam:
    def _store(self, value):
        s = ParamStore()
        s.add("w", np.array(value, dtype=np.float32))
        return s

    def test_zero_gradient_keeps_params(self):
        s = self._store([1.0, -2.0])
        s.zero_grad()
        st = AdamState(s)
        adam_step(s, st, 1e-3)
        assert np.array_equal(s["w"].value, np.array([1.0, -2.0], dtype=np.float32))
        assert st.t == 1

    def test_first_step_follows_hand_recurrence(self):
        lr, g = 0.01, 0.5
        s = self._store([0.0])
        s.zero_grad()
        s["w"].grad[...] = g
        st = AdamState(s, beta1=0.9, beta2=0.999, eps=1e-8)
        adam_step(s, st, lr)
        # t=1: mhat=g, vhat=g^2 -> step = -lr * g / (|g| + eps)
        want = -lr * (g / (abs(g) + 1e-8))
        assert abs(float(s["w"].value[0]) - want) < 1e-9
        assert np.all(s["w"].grad == 0)  # cleared

    def test_missing_gradient_names_parameter(self):
        s = self._store([1.0])
        st = AdamState(s)
        with pytest.raises(ValueError, match="'w'"):
            adam_step(s, st, 1e-3)

    def test_hundred_steps_deterministic(self):
        def run():
            s = self._store([0.3, -0.4])
            st = AdamState(s)
            rng = np.random.default_rng(3)
            for _ in range(100):
                s.zero_grad()
                s["w"].grad[...] = rng.standard_normal(2).astype(np.float32)
                adam_step(s, st, 1e-3)
            return s["w"].value.copy()

        assert np.array_equal(run(), run())


class TestLrSchedule:
    def test_published_values(self):
        cfg = TrainConfig()
        assert lr_at(0, cfg) == 1e-4
        assert lr_at(200_000, cfg) == 5e-5
        assert lr_at(1_000_000 - 1, cfg) == 6.25e-6

    def test_floor_formula(self):
        cfg = TrainConfig(lr0=8e-3, lr_halve_period=10)
        assert lr_at(9, cfg) == 8e-3
        assert lr_at(10, cfg) == 4e-3
        assert lr_at(35, cfg) == 1e-3

    def test_negative_iteration_rejected(self):
        with pytest.raises(ValueError, match="iteration"):
            lr_at(-1, TrainConfig())


class TestSampling:
    def test_hr_patch_is_colocated(self):
        # distinct ramp values let us recover the crop offset exactly
        lr = np.arange(24 * 24, dtype=np.float32).reshape(24, 24)
        hr = np.kron(lr, np.ones((2, 2), dtype=np.float32))
        pairs = [SamplePair("a", lr, hr, 2)]
        cfg = quick_cfg(batch_size=8, patch_lr=4)
        rng = np.random.default_rng(4)
        lrb, hrb = sample_batch(pairs, cfg, rng, 2)
        assert lrb.shape == (8, 1, 4, 4) and hrb.shape == (8, 1, 8, 8)
        for i in range(8):
            # hr crop sits at 2x the lr offset: every lr pixel appears as a
            # 2x2 block, and that structure survives the shared dihedral
            # transform only when both crops are co-located
            assert np.array_equal(np.kron(lrb[i, 0], np.ones((2, 2), dtype=np.float32)),
                                  hrb[i, 0])

    def test_reproducible_for_seed(self):
        pairs = make_pairs()
        cfg = quick_cfg()
        a = sample_batch(pairs, cfg, np.random.default_rng(9), 2)
        b = sample_batch(pairs, cfg, np.random.default_rng(9), 2)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_dihedral_transforms_uniform(self):
        # one exactly-patch-sized image pins the offset to (0,0), so the
        # returned patch identifies the transform
        rng0 = np.random.default_rng(10)
        lr = rng0.random((8, 8)).astype(np.float32)
        hr = np.kron(lr, np.ones((2, 2), dtype=np.float32))
        pairs = [SamplePair("a", lr, hr, 2)]
        cfg = quick_cfg(batch_size=100, patch_lr=8)
        candidates = [np.ascontiguousarray(dihedral(lr, k)) for k in range(8)]
        counts = np.zeros(8)
        rng = np.random.default_rng(11)
        for _ in range(100):  # 10^4 draws total
            lrb, _ = sample_batch(pairs, cfg, rng, 2)
            for i in range(100):
                k = next(j for j, c in enumerate(candidates)
                         if np.array_equal(lrb[i, 0], c))
                counts[k] += 1
        freqs = counts / counts.sum()
        assert np.all(np.abs(freqs - 0.125) <= 0.02)

    def test_dihedral_group_has_eight_distinct_elements(self):
        x = np.random.default_rng(12).random((5, 5))
        seen = {dihedral(x, k).tobytes() for k in range(8)}
        assert len(seen) == 8

    def test_image_smaller_than_patch_rejected(self):
        pairs = make_pairs(hr_size=12)  # lr is 6x6
        with pytest.raises(ValueError, match="smaller"):
            train(build(TINY, seed=0), pairs, quick_cfg(patch_lr=8, iterations=1))

    def test_scale_mismatch_rejected(self):
        pairs = make_pairs(scale=2)
        model = build(ModelConfig(n=1, m=1, channels=8, growth=2, scale=3), seed=0)
        with pytest.raises(ValueError, match="scale"):
            train(model, pairs, quick_cfg(iterations=1))


class TestTrainLoop:
    def test_loss_drops_on_overfit(self):
        pairs = make_pairs()
        model = build(TINY, seed=5)
        result = train(model, pairs, quick_cfg(iterations=120))
        assert result.records[-1].loss < result.records[0].loss

    def test_log_carries_schedule_lr(self):
        pairs = make_pairs()
        model = build(TINY, seed=5)
        cfg = quick_cfg(iterations=30, lr0=2e-3, lr_halve_period=10, log_every=10)
        result = train(model, pairs, cfg)
        by_iter = {r.iteration: r.lr for r in result.records}
        assert by_iter[0] == 2e-3
        assert by_iter[10] == 1e-3
        assert by_iter[20] == 5e-4

    def test_validation_psnr_logged(self):
        pairs = make_pairs()
        model = build(TINY, seed=5)
        result = train(model, pairs, quick_cfg(iterations=21), val_pairs=pairs[:2])
        vals = [r.val_psnr for r in result.records if r.val_psnr is not None]
        assert vals and all(np.isfinite(v) for v in vals)

    def test_nan_loss_aborts_with_iteration(self):
        pairs = make_pairs()
        model = build(TINY, seed=5)
        model.params["recover.weight"].value[0, 0, 0, 0] = np.nan
        with pytest.raises(RuntimeError, match="iteration 0"):
            train(model, pairs, quick_cfg(iterations=5))

    def test_two_runs_bit_identical(self):
        pairs = make_pairs()

        def run(threads):
            model = build(TINY, seed=5)
            train(model, pairs, quick_cfg(iterations=50), threads=threads)
            return model

        a, b, c = run(1), run(1), run(4)
        for name, p in a.params.items():
            assert np.array_equal(p.value, b.params[name].value)
            assert np.array_equal(p.value, c.params[name].value)

    def test_loss_log_pure_function_of_seed(self):
        pairs = make_pairs()
        runs = []
        for _ in range(2):
            model = build(TINY, seed=5)
            runs.append(train(model, pairs, quick_cfg(iterations=30)).records)
        assert [(r.iteration, r.loss) for r in runs[0]] == \
            [(r.iteration, r.loss) for r in runs[1]]

    def test_resume_replays_straight_run(self, tmp_path):
        pairs = make_pairs()
        cfg = quick_cfg(iterations=100)

        straight = build(TINY, seed=5)
        full = train(straight, pairs, cfg)

        first = build(TINY, seed=5)
        cfg_half = quick_cfg(iterations=50)
        part = train(first, pairs, cfg_half)
        path = tmp_path / "mid.csn"
        ckpt.save_checkpoint(path, first, part.state.iteration,
                             part.state.adam, part.state.sampler_rng)
        loaded = ckpt.load_checkpoint(path)
        resumed = loaded.model
        state = loaded.trainer_state(cfg)
        train(resumed, pairs, cfg, state=state)

        for name, p in straight.params.items():
            assert np.array_equal(p.value, resumed.params[name].value), name
        for name in full.state.adam.m:
            assert np.array_equal(full.state.adam.m[name], state.adam.m[name])
            assert np.array_equal(full.state.adam.v[name], state.adam.v[name])

    def test_write_log_format(self, tmp_path):
        pairs = make_pairs()
        model = build(TINY, seed=5)
        result = train(model, pairs, quick_cfg(iterations=21), val_pairs=pairs[:1])
        path = tmp_path / "log.txt"
        write_log(result.records, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# iteration")
        cols = lines[1].split("\t")
        assert int(cols[0]) == 0 and float(cols[1]) == 1e-3
