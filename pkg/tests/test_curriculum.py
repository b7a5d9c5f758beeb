"""Marginalized cross-entropy, curriculum-length rules, and the five
training schedules."""

import numpy as np
import pytest

from coarse2fine import netcore as nc
from coarse2fine import curriculum as cu
from coarse2fine import hierarchy as hi
from coarse2fine._util import SHUFFLE, STAGE_BASE, child_rng, child_seed

from _reference import ref_marginalized_ce, fd_gradients

CIFAR10 = ["airplane", "automobile", "bird", "cat", "deer",
           "dog", "frog", "horse", "ship", "truck"]


# ---------------------------------------------------------------------------
# label transforms
# ---------------------------------------------------------------------------

class TestTransformLabels:
    def test_singletons_identity(self):
        clusters = [[i] for i in range(5)]
        y = np.array([3, 0, 4, 4, 1])
        assert np.array_equal(cu.transform_labels(y, clusters), y)

    def test_vehicle_animal_example(self):
        vehicles = [0, 1, 8, 9]
        animals = [2, 3, 4, 5, 6, 7]
        car, dog, ship = 1, 5, 8
        out = cu.transform_labels(np.array([car, dog, ship]), [vehicles, animals])
        assert list(out) == [0, 1, 0]

    def test_matches_membership_scan(self):
        rng = np.random.default_rng(3)
        perm = rng.permutation(8)
        clusters = [sorted(perm[:3].tolist()), sorted(perm[3:5].tolist()),
                    sorted(perm[5:].tolist())]
        y = rng.integers(0, 8, 50)
        out = cu.transform_labels(y, clusters)
        for yi, oi in zip(y, out):
            assert yi in clusters[oi]


# ---------------------------------------------------------------------------
# marginalized cross-entropy
# ---------------------------------------------------------------------------

class TestMarginalizedCE:
    def test_pinned_value(self):
        z = np.array([[1.0, 2.0, 3.0]])
        loss, _ = cu.marginalized_cross_entropy(z, np.array([0]), np.array([0, 1, 0]))
        want = np.log(np.exp(z).sum()) - np.log(np.exp(1.0) + np.exp(3.0))
        assert loss == pytest.approx(0.28067795340140816, abs=1e-12)
        assert loss == pytest.approx(want, abs=1e-12)

    def test_singleton_equals_ce_bitwise(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(6, 5)).astype(np.float32)
        y = rng.integers(0, 5, 6)
        ce, dce = nc.softmax_cross_entropy(z, y)
        m, dm = cu.marginalized_cross_entropy(z, y, np.arange(5))
        assert m == ce
        assert np.array_equal(dm, dce)

    def test_one_cluster_exactly_zero(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(4, 6)) * 10
        y = rng.integers(0, 6, 4)
        loss, d = cu.marginalized_cross_entropy(z, y, np.zeros(6, dtype=int))
        assert loss == 0.0
        assert np.all(d == 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_reference(self, seed):
        rng = np.random.default_rng(50 + seed)
        z = rng.normal(0, 3, size=(7, 9))
        y = rng.integers(0, 9, 7)
        cm = rng.integers(0, 4, 9)
        loss, _ = cu.marginalized_cross_entropy(z, y, cm)
        assert loss == pytest.approx(ref_marginalized_ce(z, y, cm), abs=1e-12)

    def test_gradient_finite_difference(self):
        rng = np.random.default_rng(8)
        z = rng.normal(size=(5, 6))
        y = rng.integers(0, 6, 5)
        cm = np.array([0, 0, 1, 1, 2, 2])
        _, d = cu.marginalized_cross_entropy(z, y, cm)
        fd = fd_gradients(
            lambda arrs: cu.marginalized_cross_entropy(arrs[0], y, cm)[0],
            [z], h=1e-5)[0]
        rel = np.abs(d - fd) / (np.abs(d) + 1e-6)
        assert rel.max() <= 1e-4

    def test_extreme_logits_stable(self):
        z = np.array([[1000.0, -1000.0, 999.0]])
        loss, d = cu.marginalized_cross_entropy(z, np.array([0]), np.array([0, 1, 0]))
        assert np.isfinite(loss) and np.all(np.isfinite(d))

    def test_dtype_preserved(self):
        z = np.zeros((2, 4), dtype=np.float32)
        _, d = cu.marginalized_cross_entropy(z, np.array([0, 1]), np.array([0, 0, 1, 1]))
        assert d.dtype == np.float32


# ---------------------------------------------------------------------------
# curriculum length + epoch split
# ---------------------------------------------------------------------------

def worked_curve():
    """Validation curve peaking at 0.50 in epoch 40 whose first epoch at or
    above 0.45 is epoch 12."""
    curve = np.linspace(0.0, 0.44, 11).tolist()  # epochs 1..11 below 0.45
    curve += np.linspace(0.45, 0.50, 29).tolist()  # epochs 12..40 climb to peak
    curve += [0.49] * 5
    return curve


class TestCurriculumLength:
    def test_auto_text_worked_example(self):
        assert cu.curriculum_length(worked_curve(), "auto-text") == 12

    def test_auto_alg3_worked_example(self):
        assert cu.curriculum_length(worked_curve(), "auto-alg3") == 36

    def test_auto_text_bounded_by_best(self):
        curve = np.linspace(0.1, 0.9, 25)  # monotone, best is last
        assert cu.curriculum_length(curve, "auto-text") <= 25

    def test_fixed_passthrough(self):
        assert cu.curriculum_length([0.5, 0.6], "fixed", fixed_t=17) == 17

    def test_bad_mode(self):
        with pytest.raises(cu.CurriculumError):
            cu.curriculum_length([0.5], "auto")

    def test_empty_curve(self):
        with pytest.raises(cu.CurriculumError):
            cu.curriculum_length([], "auto-text")


class TestSplitEpochs:
    def test_even(self):
        assert cu.split_epochs(12, 3) == [4, 4, 4]

    def test_remainder_to_last(self):
        assert cu.split_epochs(7, 3) == [2, 2, 3]

    def test_small_t(self):
        assert cu.split_epochs(2, 5) == [0, 0, 0, 0, 2]

    def test_sums(self):
        for t in range(0, 30):
            for n in range(1, 6):
                s = cu.split_epochs(t, n)
                assert sum(s) == t and len(s) == n and min(s) >= 0


# ---------------------------------------------------------------------------
# shared toys
# ---------------------------------------------------------------------------

def separable_splits(seed=0):
    """Two linearly separable classes, 40 train points, margin >= 1."""
    rng = np.random.default_rng(seed)
    def draw(n):
        x0 = rng.uniform(-2.0, -0.5, size=(n // 2, 2))
        x1 = rng.uniform(0.5, 2.0, size=(n // 2, 2))
        x = np.concatenate([x0, x1]).astype(np.float32)
        y = np.repeat([0, 1], n // 2)
        return x, y
    xtr, ytr = draw(40)
    xva, yva = draw(10)
    xte, yte = draw(10)
    return cu.Splits(xtr, ytr, xva, yva, xte, yte)


def four_class_splits(seed, n_per=25, sep=3.0, gap=1.2, noise=0.18, dim=6):
    """Four well-separated Gaussian classes; {0,1} vs {2,3} along axis 0."""
    rng = np.random.default_rng(seed)
    means = np.zeros((4, dim))
    means[0, :2] = (-sep, -gap)
    means[1, :2] = (-sep, gap)
    means[2, :2] = (sep, -gap)
    means[3, :2] = (sep, gap)
    def draw(n):
        x = np.concatenate(
            [rng.normal(means[c], noise, size=(n, dim)) for c in range(4)]
        ).astype(np.float32)
        return x, np.repeat(np.arange(4), n)
    xtr, ytr = draw(n_per)
    xva, yva = draw(10)
    xte, yte = draw(40)
    return cu.Splits(xtr, ytr, xva, yva, xte, yte)


PAIRED = hi.LabelHierarchy(levels=[[[0, 1], [2, 3]], [[0], [1], [2], [3]]],
                           num_classes=4)
SINGLE4 = hi.singleton_hierarchy(4)


def vec_spec(dim=6, hidden=8, k=4):
    return nc.ModelSpec(input_shape=(dim,), layers=(nc.dense(hidden), nc.relu()),
                        num_classes=k)


def rows_equal(a, b, skip_timing=True):
    if len(a) != len(b):
        return False
    for ra, rb in zip(a, b):
        if (ra.epoch, ra.level) != (rb.epoch, rb.level):
            return False
        for f in ("train_acc", "val_acc", "val_acc_cluster", "loss"):
            if getattr(ra, f) != getattr(rb, f):
                return False
    return True


def params_equal(a, b):
    pa, pb = list(nc.param_items(a)), list(nc.param_items(b))
    return all(na == nb and np.array_equal(xa, xb)
               for (na, xa), (nb, xb) in zip(pa, pb))


# ---------------------------------------------------------------------------
# baseline trainer
# ---------------------------------------------------------------------------

class TestBaseline:
    def test_zero_epochs(self):
        spec = vec_spec(2, 4, 2)
        cfg = cu.CurriculumConfig(max_epochs=0)
        rep = cu.train_baseline(spec, separable_splits(), nc.adam(), cfg, 0)
        assert rep.rows == []
        assert rep.total_epochs == 0
        # test accuracy evaluated at the untrained init
        init = nc.init_params(spec, 0)
        sp = separable_splits()
        want = nc.evaluate(spec, init, sp.test_x, sp.test_y)
        assert rep.test_acc == want

    def test_separable_reaches_full_train_accuracy(self):
        spec = vec_spec(2, 4, 2)
        cfg = cu.CurriculumConfig(max_epochs=200, early_stop_patience=200,
                                  batch_size=16)
        rep = cu.train_baseline(spec, separable_splits(), nc.adam(lr=0.01), cfg, 1)
        assert max(r.train_acc for r in rep.rows) == 1.0

    def test_deterministic(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=8, batch_size=32)
        sp = four_class_splits(7)
        a = cu.train_baseline(spec, sp, nc.adam(lr=0.01), cfg, 3)
        b = cu.train_baseline(spec, sp, nc.adam(lr=0.01), cfg, 3)
        assert rows_equal(a.rows, b.rows)
        assert params_equal(a.params, b.params)

    def test_early_stopping(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=200, early_stop_patience=5,
                                  batch_size=32)
        rep = cu.train_baseline(spec, four_class_splits(1), nc.adam(lr=0.01), cfg, 0)
        assert rep.total_epochs < 200
        assert rep.total_epochs >= rep.best_val_epoch

    def test_empty_split_rejected(self):
        spec = vec_spec(2, 4, 2)
        sp = separable_splits()
        empty = cu.Splits(sp.train_x[:0], sp.train_y[:0], sp.val_x, sp.val_y,
                          sp.test_x, sp.test_y)
        with pytest.raises(cu.CurriculumError):
            cu.train_baseline(spec, empty, nc.adam(), cu.CurriculumConfig(), 0)

    def test_divergence_raises(self):
        spec = vec_spec(2, 4, 2)
        cfg = cu.CurriculumConfig(max_epochs=50, batch_size=16)
        with pytest.raises(cu.DivergenceError):
            cu.train_baseline(spec, separable_splits(), nc.sgd(lr=1e18), cfg, 0)

    def test_curve_csv_roundtrip(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=3, batch_size=32)
        rep = cu.train_baseline(spec, four_class_splits(2), nc.adam(lr=0.01), cfg, 0)
        text = cu.report_curves_csv(rep)
        lines = text.strip().splitlines()
        assert lines[0] == cu.CURVE_HEADER
        assert len(lines) == 1 + len(rep.rows)
        got = [float(v) for v in lines[1].split(",")]
        assert got[0] == 1 and got[1] == 0
        assert got[3] == pytest.approx(rep.rows[0].val_acc, abs=1e-9)


# ---------------------------------------------------------------------------
# continuous curriculum
# ---------------------------------------------------------------------------

class TestContinuous:
    def test_singleton_hierarchy_is_baseline_bitwise(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=10, batch_size=32)
        sp = four_class_splits(3)
        base = cu.train_baseline(spec, sp, nc.adam(lr=0.01), cfg, 5)
        cont = cu.train_continuous(spec, sp, SINGLE4, nc.adam(lr=0.01), cfg, 5,
                                   t_epochs=7)
        assert rows_equal(base.rows, cont.rows)
        assert params_equal(base.params, cont.params)
        assert base.test_acc == cont.test_acc

    def test_t_zero_is_baseline_with_empty_coarse_log(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=10, batch_size=32)
        sp = four_class_splits(4)
        base = cu.train_baseline(spec, sp, nc.adam(lr=0.01), cfg, 2)
        cont = cu.train_continuous(spec, sp, PAIRED, nc.adam(lr=0.01), cfg, 2,
                                   t_epochs=0)
        # identical training; only the level tag differs (fine level index)
        assert len(base.rows) == len(cont.rows)
        for b, c in zip(base.rows, cont.rows):
            assert b.epoch == c.epoch
            assert b.loss == c.loss
            assert b.train_acc == c.train_acc
            assert b.val_acc == c.val_acc
            assert b.val_acc_cluster == c.val_acc_cluster
            assert c.level == PAIRED.num_levels - 1
        assert base.test_acc == cont.test_acc
        assert cont.extras["epoch_split"] == [0]

    def test_coarse_epochs_use_coarse_levels(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=12, batch_size=32)
        rep = cu.train_continuous(spec, four_class_splits(5), PAIRED,
                                  nc.adam(lr=0.01), cfg, 0, t_epochs=4)
        levels = [r.level for r in rep.rows]
        assert levels[:4] == [0, 0, 0, 0]
        assert set(levels[4:]) == {1}
        assert rep.extras["epoch_split"] == [4]
        assert rep.extras["t_epochs"] == 4

    def test_budget_caps_total_epochs(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=50, early_stop_patience=50,
                                  batch_size=32)
        rep = cu.train_continuous(spec, four_class_splits(6), PAIRED,
                                  nc.adam(lr=0.01), cfg, 0, t_epochs=4, budget=9)
        assert rep.total_epochs <= 9

    def test_beats_or_ties_baseline_on_toy(self):
        """Paired comparison on the well-separated toy: the curriculum's
        final test accuracy should match or beat the baseline's in >=4/5
        seeds (everything is seeded, so this is deterministic)."""
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=60, early_stop_patience=15,
                                  batch_size=32)
        wins = 0
        for seed in range(5):
            sp = four_class_splits(100 + seed)
            base = cu.train_baseline(spec, sp, nc.adam(lr=0.01), cfg, seed)
            cont = cu.train_continuous(spec, sp, PAIRED, nc.adam(lr=0.01), cfg,
                                       seed, t_epochs=6)
            wins += cont.test_acc >= base.test_acc
        assert wins >= 4, wins


# ---------------------------------------------------------------------------
# staged curriculum
# ---------------------------------------------------------------------------

class TestStaged:
    def test_singleton_hierarchy_is_baseline(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=10, batch_size=32)
        sp = four_class_splits(8)
        base = cu.train_baseline(spec, sp, nc.adam(lr=0.01), cfg, 4)
        stag = cu.train_staged(spec, sp, SINGLE4, nc.adam(lr=0.01), cfg, 4)
        assert rows_equal(base.rows, stag.rows)
        assert base.test_acc == stag.test_acc

    def test_encoder_transferred_predictor_fresh(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=6, batch_size=32)
        rep = cu.train_staged(spec, four_class_splits(9), PAIRED,
                              nc.adam(lr=0.01), cfg, 11)
        ex = rep.extras
        # start-of-stage-1 encoder is bit-equal to end-of-stage-0 encoder
        assert ex["encoder_crc_in"][1] == ex["encoder_crc_out"][0]
        assert ex["encoder_crc_in"][1] != ex["encoder_crc_in"][0]
        # stage-1 predictor comes fresh from the stage's own seed stream
        stage_spec = nc.ModelSpec(input_shape=spec.input_shape, layers=spec.layers,
                                  num_classes=4)
        fresh = nc.init_params(stage_spec, child_seed(11, STAGE_BASE + 1))
        import zlib
        want = zlib.crc32(fresh.b.tobytes(), zlib.crc32(fresh.w.tobytes()))
        got = ex["predictor_crc_in"][1]
        # crc chain order: w then b
        want = zlib.crc32(np.ascontiguousarray(fresh.w).tobytes())
        want = zlib.crc32(np.ascontiguousarray(fresh.b).tobytes(), want)
        assert got == want

    def test_stage_structure(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=5, batch_size=32)
        rep = cu.train_staged(spec, four_class_splits(10), PAIRED,
                              nc.adam(lr=0.01), cfg, 0)
        assert len(rep.extras["stage_epochs"]) == 2
        assert sum(rep.extras["stage_epochs"]) == rep.total_epochs
        # rows renumbered 1..total and labeled by stage
        assert [r.epoch for r in rep.rows] == list(range(1, rep.total_epochs + 1))
        s0 = rep.extras["stage_epochs"][0]
        assert all(r.level == 0 for r in rep.rows[:s0])
        assert all(r.level == 1 for r in rep.rows[s0:])

    def test_transfer_visible_in_cluster_metric(self):
        """Stage-0 final coarse accuracy should be at least the fine stage's
        first-epoch accuracy projected onto the coarse task (averaged over
        seeds): the fresh predictor can't beat the converged coarse model
        on its own task after one epoch."""
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=30, early_stop_patience=8,
                                  batch_size=32)
        diffs = []
        for seed in range(5):
            rep = cu.train_staged(spec, four_class_splits(200 + seed), PAIRED,
                                  nc.adam(lr=0.01), cfg, seed)
            s0 = rep.extras["stage_epochs"][0]
            stage0_final = rep.rows[s0 - 1].val_acc
            stage1_first_cluster = rep.rows[s0].val_acc_cluster
            diffs.append(stage0_final - stage1_first_cluster)
        assert np.mean(diffs) >= 0.0, diffs


# ---------------------------------------------------------------------------
# multitask
# ---------------------------------------------------------------------------

class TestMultitask:
    def test_loss_decomposes_as_sum(self):
        rng = np.random.default_rng(21)
        z = rng.normal(size=(6, 4)).astype(np.float32)
        y = rng.integers(0, 4, 6)
        maps = (np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1]))
        phase = cu._Phase("multitask", level=0, max_epochs=1, early_stop=False,
                          maps=maps)
        total, dtotal = cu._batch_step(phase, z, y, None)
        ce, dce = nc.softmax_cross_entropy(z, y)
        want, dwant = ce, dce.astype(np.float64)
        for m in maps:
            l, d = cu.marginalized_cross_entropy(z, y, m)
            want += l
            dwant = dwant + d
        assert total == pytest.approx(want, abs=1e-6)
        assert np.allclose(dtotal, dwant, atol=1e-6)

    def test_single_level_hierarchy_is_baseline_bitwise(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=10, batch_size=32)
        sp = four_class_splits(11)
        base = cu.train_baseline(spec, sp, nc.adam(lr=0.01), cfg, 6)
        multi = cu.train_multitask(spec, sp, SINGLE4, nc.adam(lr=0.01), cfg, 6)
        assert rows_equal(base.rows, multi.rows)
        assert params_equal(base.params, multi.params)

    def test_budget_cap(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=50, early_stop_patience=50,
                                  batch_size=32)
        rep = cu.train_multitask(spec, four_class_splits(12), PAIRED,
                                 nc.adam(lr=0.01), cfg, 0, budget=5)
        assert rep.total_epochs <= 5


# ---------------------------------------------------------------------------
# self-paced
# ---------------------------------------------------------------------------

class TestSelfPaced:
    def test_infinite_lambda_is_baseline_bitwise(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=10, batch_size=32)
        sp = four_class_splits(13)
        base = cu.train_baseline(spec, sp, nc.adam(lr=0.01), cfg, 7)
        spl_cfg = cu.SplConfig(initial_lambda=np.inf, growth_factor=1.0,
                               warmup_epochs=0)
        rep = cu.train_spl(spec, sp, nc.adam(lr=0.01), spl_cfg, cfg, 7)
        assert rows_equal(base.rows, rep.rows)
        assert params_equal(base.params, rep.params)

    def test_tiny_lambda_falls_back_to_full_batch(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=6, batch_size=32)
        spl_cfg = cu.SplConfig(initial_lambda=1e-30, growth_factor=1.0,
                               warmup_epochs=1)
        rep = cu.train_spl(spec, four_class_splits(14), nc.adam(lr=0.01),
                           spl_cfg, cfg, 0)
        assert rep.extras["fallback_batches"] > 0
        assert rep.total_epochs == 6  # training continued despite fallback
        assert all(f == 1.0 for f in rep.extras["selected_frac_batches"])

    def test_selection_fraction_monotone_in_lambda(self):
        """At the first post-warmup epoch the parameters are identical for
        every lambda (warmup trains on full batches), so larger thresholds
        must select supersets."""
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=4, batch_size=1000)  # 1 batch/epoch
        sp = four_class_splits(15, noise=0.6)  # noisier -> spread of losses
        warmup = 2
        fracs = []
        for lam in (0.05, 0.2, 0.8, 3.0):
            spl_cfg = cu.SplConfig(initial_lambda=lam, growth_factor=1.1,
                                   warmup_epochs=warmup)
            rep = cu.train_spl(spec, sp, nc.adam(lr=0.01), spl_cfg, cfg, 3)
            fracs.append(rep.extras["selected_frac_batches"][warmup])
        assert fracs == sorted(fracs), fracs
        assert fracs[0] < 1.0  # smallest lambda actually filtered something

    def test_lambda_grows_after_warmup(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=6, batch_size=32)
        spl_cfg = cu.SplConfig(initial_lambda=1.0, growth_factor=1.5,
                               warmup_epochs=2)
        rep = cu.train_spl(spec, four_class_splits(16), nc.adam(lr=0.01),
                           spl_cfg, cfg, 0)
        lc = rep.extras["lambda_curve"]
        assert lc[0] == 1.0 and lc[1] == 1.0  # flat through warmup
        assert rep.extras["lambda_final"] == pytest.approx(1.5 ** 4)


# ---------------------------------------------------------------------------
# report plumbing
# ---------------------------------------------------------------------------

class TestReport:
    def test_report_to_dict_timing_optional(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=2, batch_size=32)
        rep = cu.train_baseline(spec, four_class_splits(17), nc.adam(lr=0.01),
                                cfg, 0)
        d = cu.report_to_dict(rep)
        assert "wall_seconds" in d
        d2 = cu.report_to_dict(rep, include_timing=False)
        assert "wall_seconds" not in d2
        assert all(len(r) == 6 for r in d2["epochs"])  # seconds key dropped

    def test_val_curve(self):
        spec = vec_spec()
        cfg = cu.CurriculumConfig(max_epochs=3, batch_size=32)
        rep = cu.train_baseline(spec, four_class_splits(18), nc.adam(lr=0.01),
                                cfg, 0)
        assert rep.val_curve() == [r.val_acc for r in rep.rows]
