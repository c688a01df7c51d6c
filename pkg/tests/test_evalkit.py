from collections import Counter

import numpy as np
import pytest

from oracles import brute_force_auc
from scb import embedkit, evalkit
from scb.manifest import HEADER, Label, parse_manifest
from scb.trainer import TrainConfig


def label_map(counts):
    out = {}
    k = 0
    for label, n in counts.items():
        for _ in range(n):
            out[f"u{k:05d}"] = label
            k += 1
    return out


class TestStratifiedSplit:
    def test_paper_shaped_counts(self):
        labels = label_map({Label.HC: 703, Label.MCI: 81, Label.AD: 405})
        _, test = evalkit.stratified_split(labels, 0.2, seed=0)
        c = Counter(labels[u] for u in test)
        assert (c[Label.HC], c[Label.MCI], c[Label.AD]) == (141, 16, 81)
        assert len(test) == 238

    def test_even_tiny_split(self):
        labels = label_map({Label.HC: 2, Label.MCI: 2, Label.AD: 2})
        _, out = evalkit.stratified_split(labels, 0.5, seed=1)
        c = Counter(labels[u] for u in out)
        assert (c[Label.HC], c[Label.MCI], c[Label.AD]) == (1, 1, 1)

    def test_deterministic_per_seed(self):
        labels = label_map({Label.HC: 20, Label.MCI: 10, Label.AD: 15})
        a = evalkit.stratified_split(labels, 0.2, seed=5)
        b = evalkit.stratified_split(labels, 0.2, seed=5)
        assert a == b
        c = evalkit.stratified_split(labels, 0.2, seed=6)
        assert a != c

    def test_disjoint_complete_and_proportional_on_random_sets(self):
        rng = np.random.default_rng(2)
        for trial in range(100):
            counts = {
                Label.HC: int(rng.integers(1, 40)),
                Label.MCI: int(rng.integers(1, 40)),
                Label.AD: int(rng.integers(1, 40)),
            }
            frac = float(rng.uniform(0.1, 0.9))
            labels = label_map(counts)
            inside, outside = evalkit.stratified_split(labels, frac, seed=trial)
            assert set(inside) | set(outside) == set(labels)
            assert not (set(inside) & set(outside))
            out_counts = Counter(labels[u] for u in outside)
            for c, n_c in counts.items():
                assert abs(out_counts[c] - n_c * frac) < 1.0

    def test_bad_frac(self):
        with pytest.raises(evalkit.EvalError):
            evalkit.stratified_split({"a": Label.HC}, 1.5, seed=0)


class TestAccuracy:
    def test_cases(self):
        assert evalkit.accuracy(np.array([0, 1, 2]), np.array([0, 1, 2])) == 1.0
        assert evalkit.accuracy(np.array([1, 2, 0]), np.array([0, 1, 2])) == 0.0
        assert evalkit.accuracy(np.array([0, 1, 2, 2]), np.array([0, 1, 2, 0])) == 0.75

    def test_length_mismatch(self):
        with pytest.raises(evalkit.LengthMismatch):
            evalkit.accuracy(np.array([0]), np.array([0, 1]))


class TestBinaryAuc:
    def test_perfect_separation(self):
        assert evalkit.binary_auc(np.array([0.9, 0.8, 0.1, 0.2]), np.array([1, 1, 0, 0], bool)) == 1.0

    def test_all_ties(self):
        assert evalkit.binary_auc(np.ones(6), np.array([1, 0, 1, 0, 1, 0], bool)) == 0.5

    def test_hand_counted(self):
        scores = np.array([0.1, 0.4, 0.35, 0.8])
        flags = np.array([False, False, True, True])
        assert evalkit.binary_auc(scores, flags) == 0.75

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(3)
        for trial in range(200):
            n = int(rng.integers(2, 51))
            scores = np.round(rng.standard_normal(n), 1)  # rounding injects ties
            flags = rng.random(n) < 0.5
            if flags.all() or not flags.any():
                flags[0] = not flags[0]
            assert abs(
                evalkit.binary_auc(scores, flags) - brute_force_auc(scores, flags)
            ) <= 1e-12

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(4)
        for trial in range(50):
            n = int(rng.integers(3, 40))
            scores = rng.uniform(0, 1, n)
            flags = rng.random(n) < 0.5
            if flags.all() or not flags.any():
                flags[0] = not flags[0]
            base = evalkit.binary_auc(scores, flags)
            for transform in (lambda s: 3.0 * s + 2.0, np.arctan, lambda s: s**3):
                assert abs(evalkit.binary_auc(transform(scores), flags) - base) <= 1e-12

    def test_complement_identity(self):
        rng = np.random.default_rng(5)
        scores = rng.standard_normal(30)
        flags = rng.random(30) < 0.4
        flags[0], flags[1] = True, False
        a = evalkit.binary_auc(scores, flags)
        b = evalkit.binary_auc(scores, ~flags)
        assert abs(a + b - 1.0) <= 1e-12

    def test_one_class_only(self):
        with pytest.raises(evalkit.OneClassOnly):
            evalkit.binary_auc(np.array([1.0, 2.0]), np.array([True, True]))


class TestMacroAuc:
    def test_perfect_classifier(self):
        true = np.array([0, 1, 2, 0, 1, 2])
        probs = np.eye(3)[true]
        assert float(evalkit.macro_auc(probs, true)) == 1.0

    def test_uniform_probabilities(self):
        true = np.array([0, 1, 2, 0])
        probs = np.full((4, 3), 1 / 3)
        assert float(evalkit.macro_auc(probs, true)) == 0.5

    def test_absent_class_skipped(self):
        true = np.array([0, 0, 2, 2])  # MCI absent
        rng = np.random.default_rng(6)
        probs = rng.dirichlet(np.ones(3), size=4)
        result = evalkit.macro_auc(probs, true)
        assert result.skipped == (Label.MCI,)
        assert set(result.per_class) == {Label.HC, Label.AD}
        assert result.value == pytest.approx(
            np.mean([result.per_class[Label.HC], result.per_class[Label.AD]])
        )

    def test_label_permutation_invariance(self):
        rng = np.random.default_rng(7)
        true = rng.integers(0, 3, 40)
        true[:3] = [0, 1, 2]
        probs = rng.dirichlet(np.ones(3), size=40)
        base = float(evalkit.macro_auc(probs, true))
        perm = np.array([2, 0, 1])
        permuted_true = perm[true]
        permuted_probs = np.zeros_like(probs)
        for old, new in enumerate(perm):
            permuted_probs[:, new] = probs[:, old]
        assert abs(float(evalkit.macro_auc(permuted_probs, permuted_true)) - base) <= 1e-12

    def test_no_computable_class(self):
        with pytest.raises(evalkit.NoComputableClass):
            evalkit.macro_auc(np.full((2, 3), 1 / 3), np.array([1, 1]))


class TestConfusion:
    def test_all_correct_is_diagonal(self):
        true = np.array([0, 1, 2, 2])
        mat = evalkit.confusion(true, true)
        assert np.array_equal(mat, np.diag([1, 1, 2]))

    def test_all_predicted_hc(self):
        true = np.array([0, 1, 2])
        mat = evalkit.confusion(np.zeros(3, dtype=int), true)
        assert np.all(mat[:, 1:] == 0)
        assert np.array_equal(mat[:, 0], [1, 1, 1])

    def test_entry_sum_and_trace_consistency(self):
        rng = np.random.default_rng(8)
        true = rng.integers(0, 3, 60)
        pred = rng.integers(0, 3, 60)
        mat = evalkit.confusion(pred, true)
        assert mat.sum() == 60
        assert np.trace(mat) / 60 == evalkit.accuracy(pred, true)


def synthetic_benchmark_inputs(tmp_path, n_per_class=30, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    rows = [HEADER]
    emb = embedkit.EmbeddingSet(dim=dim, provider_id="unit-test")
    centers = rng.standard_normal((3, dim)) * 5.0
    k = 0
    for ci, name in enumerate(("HC", "MCI", "AD")):
        for _ in range(n_per_class):
            uid = f"s{k:04d}"
            rows.append(f"{uid},a.wav,,{60 + k % 30},female,en,c,{name}")
            emb.vectors[uid] = (centers[ci] + rng.standard_normal(dim)).astype(np.float32)
            k += 1
    path = tmp_path / "m.csv"
    path.write_text("\n".join(rows) + "\n")
    return parse_manifest(path), emb


class TestRunBenchmark:
    def test_structure_and_aggregate(self, tmp_path):
        m, emb = synthetic_benchmark_inputs(tmp_path)
        cfg = TrainConfig(hidden=16)
        report = evalkit.run_benchmark(m, emb, cfg, n_reps=3, seed_base=10)
        assert [r.seed for r in report.repetitions] == [10, 11, 12]
        agg = report.aggregate()
        accs = [r.accuracy for r in report.repetitions]
        assert agg["accuracy"][0] == pytest.approx(np.mean(accs))
        assert agg["accuracy"][1] == pytest.approx(np.std(accs, ddof=1))
        assert agg["accuracy"][0] >= 0.8  # separable by construction
        for r in report.repetitions:
            assert r.confusion.sum() == 18  # 20% of 90

    def test_deterministic(self, tmp_path):
        m, emb = synthetic_benchmark_inputs(tmp_path)
        cfg = TrainConfig(hidden=8, max_epochs=10)
        r1 = evalkit.run_benchmark(m, emb, cfg, n_reps=2)
        r2 = evalkit.run_benchmark(m, emb, cfg, n_reps=2)
        assert evalkit.render_report(r1, "csv") == evalkit.render_report(r2, "csv")
        assert evalkit.render_report(r1, "markdown") == evalkit.render_report(r2, "markdown")

    def test_single_rep_zero_std(self, tmp_path):
        m, emb = synthetic_benchmark_inputs(tmp_path, n_per_class=20)
        report = evalkit.run_benchmark(m, emb, TrainConfig(hidden=8, max_epochs=5), n_reps=1)
        assert report.aggregate()["accuracy"][1] == 0.0


class TestRenderReport:
    def make_report(self):
        reps = [
            evalkit.Repetition(
                rep=i,
                seed=i,
                accuracy=0.7307 if i == 0 else 0.75,
                macro_auc=0.8024,
                auc_skipped=(),
                confusion=np.diag([3, 2, 1]),
            )
            for i in range(2)
        ]
        return evalkit.RunReport(
            provider="p", pipeline="audio", repetitions=reps, config_digest="abc", seeds=[0, 1]
        )

    def test_mean_std_formatting(self):
        assert evalkit.fmt_mean_std(0.7307, 0.0202) == "0.7307 (0.0202)"
        assert evalkit.fmt_mean_std(0.9, 0.0) == "0.9000 (0.0000)"

    def test_markdown_contains_cells(self):
        text = evalkit.render_report(self.make_report(), "markdown")
        assert "| 0 | 0 | 0.7307 | 0.8024 |" in text
        assert "0.8024 (0.0000)" in text

    def test_csv_columns(self):
        text = evalkit.render_report(self.make_report(), "csv")
        lines = text.splitlines()
        assert lines[0] == "provider,pipeline,rep,seed,accuracy,macro_auc"
        assert lines[1].startswith("p,audio,0,0,0.730700,")

    def test_byte_stable(self):
        r = self.make_report()
        assert evalkit.render_report(r) == evalkit.render_report(r)
