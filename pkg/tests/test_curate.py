import numpy as np
import pytest

from oracles import canonical_partition, naive_dbscan
from scb import curate
from scb.curate import ClusterAssignment, DbscanConfig
from scb.manifest import HEADER, parse_manifest


class TestDbscan:
    def test_two_blobs_two_clusters_no_noise(self):
        rng = np.random.default_rng(0)
        vecs = {}
        for i in range(20):
            vecs[f"a{i:02d}"] = rng.normal(0.0, 0.05, 3)
        for i in range(20):
            vecs[f"b{i:02d}"] = rng.normal(4.0, 0.05, 3)
        asg = curate.dbscan(vecs, DbscanConfig(eps=0.5, min_pts=3))
        clusters = asg.clusters()
        assert set(clusters) == {0, 1}
        assert {u[0] for u in clusters[0]} == {"a"}  # id 0 owns the smallest uid
        assert {u[0] for u in clusters[1]} == {"b"}

    def test_all_isolated_points_are_noise(self):
        vecs = {f"p{i}": np.array([10.0 * i]) for i in range(6)}
        asg = curate.dbscan(vecs, DbscanConfig(eps=1.0, min_pts=2))
        assert all(c == -1 for c in asg.labels.values())
        assert not any(asg.core.values())

    def test_matches_naive_reference_on_random_instances(self):
        rng = np.random.default_rng(1)
        for trial in range(100):
            n = int(rng.integers(2, 65))
            dim = int(rng.integers(1, 4))
            pts = rng.uniform(0, 4, (n, dim))
            vecs = {f"u{i:03d}": pts[i] for i in range(n)}
            eps = float(rng.uniform(0.3, 1.5))
            min_pts = int(rng.integers(1, 6))
            mine = curate.dbscan(vecs, DbscanConfig(eps=eps, min_pts=min_pts)).labels
            ref = naive_dbscan(vecs, eps, min_pts)
            assert canonical_partition(mine) == canonical_partition(ref), (trial, eps, min_pts)

    def test_core_membership_order_independent(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(0, 2, (30, 2))
        vecs = {f"u{i:02d}": pts[i] for i in range(30)}
        cfg = DbscanConfig(eps=0.6, min_pts=3)
        base = curate.dbscan(vecs, cfg)
        shuffled = dict(reversed(list(vecs.items())))
        again = curate.dbscan(shuffled, cfg)
        assert base.labels == again.labels

    def test_noise_has_no_core_neighbor_reachability(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0, 3, (40, 2))
        vecs = {f"u{i:02d}": pts[i] for i in range(40)}
        cfg = DbscanConfig(eps=0.4, min_pts=4)
        asg = curate.dbscan(vecs, cfg)
        uids = sorted(vecs)
        for uid in uids:
            if asg.labels[uid] != -1:
                continue
            assert not asg.core[uid]
            for other in uids:
                if asg.core[other]:
                    assert np.linalg.norm(vecs[uid] - vecs[other]) > cfg.eps

    def test_cosine_metric(self):
        vecs = {
            "a1": np.array([1.0, 0.01]),
            "a2": np.array([2.0, 0.0]),
            "a3": np.array([5.0, 0.02]),
            "b1": np.array([0.0, 1.0]),
            "b2": np.array([0.01, 3.0]),
            "b3": np.array([0.0, 7.0]),
        }
        asg = curate.dbscan(vecs, DbscanConfig(eps=0.05, min_pts=2, metric="cosine"))
        assert asg.labels["a1"] == asg.labels["a2"] == asg.labels["a3"]
        assert asg.labels["b1"] == asg.labels["b2"] == asg.labels["b3"]
        assert asg.labels["a1"] != asg.labels["b1"]

    def test_dim_mismatch(self):
        with pytest.raises(curate.DimMismatch):
            curate.dbscan({"a": np.zeros(2), "b": np.zeros(3)}, DbscanConfig(eps=1, min_pts=1))


class TestPca:
    def test_planar_data_distances_preserved(self):
        rng = np.random.default_rng(4)
        coords = rng.standard_normal((25, 2))
        basis, _ = np.linalg.qr(rng.standard_normal((7, 2)))
        embedded = coords @ basis.T + 3.0
        proj = curate.pca_2d(embedded)
        orig = np.linalg.norm(coords[:, None] - coords[None, :], axis=2)
        new = np.linalg.norm(proj[:, None] - proj[None, :], axis=2)
        assert np.max(np.abs(orig - new)) <= 1e-6


class TestReviewExport:
    def test_two_cluster_sections(self, tmp_path):
        rng = np.random.default_rng(5)
        vecs = {f"a{i}": rng.normal(0, 0.05, 4) for i in range(6)}
        vecs |= {f"b{i}": rng.normal(5, 0.05, 4) for i in range(6)}
        asg = curate.dbscan(vecs, DbscanConfig(eps=0.5, min_pts=2))
        transcripts = {u: f"transcript for {u} " + "x" * 200 for u in vecs}
        out = tmp_path / "review.md"
        pca_csv = curate.export_cluster_review(asg, vecs, transcripts, out)
        text = out.read_text()
        assert "## Cluster 0 (6 samples)" in text
        assert "## Cluster 1 (6 samples)" in text
        pca_lines = pca_csv.read_text().splitlines()
        assert pca_lines[0] == "uid,cluster,x,y"
        assert len(pca_lines) == 13

    def test_noise_only_section(self, tmp_path):
        vecs = {f"p{i}": np.array([10.0 * i, 0.0]) for i in range(4)}
        asg = curate.dbscan(vecs, DbscanConfig(eps=0.5, min_pts=2))
        out = tmp_path / "review.md"
        curate.export_cluster_review(asg, vecs, {}, out)
        text = out.read_text()
        assert "## Noise (4 samples)" in text
        assert "## Cluster" not in text

    def test_excerpts_truncated_to_80_chars(self, tmp_path):
        vecs = {"a": np.zeros(2), "b": np.zeros(2)}
        asg = ClusterAssignment(labels={"a": 0, "b": 0}, core={"a": True, "b": True})
        out = tmp_path / "review.md"
        curate.export_cluster_review(asg, vecs, {"a": "y" * 300, "b": ""}, out)
        line = [l for l in out.read_text().splitlines() if l.startswith("- `a`")][0]
        assert line == "- `a`: " + "y" * 80


def curation_manifest(tmp_path):
    rows = [
        HEADER,
        "k1,a.wav,,70,female,en,cookie,HC",
        "k2,a.wav,,71,male,en,cookie,AD",
        "es1,a.wav,,72,female,es,cookie,HC",
        "rd1,a.wav,,73,male,en,reading,MCI",
        "q1,a.wav,,74,female,en,cookie,AD",
    ]
    path = tmp_path / "m.csv"
    path.write_text("\n".join(rows) + "\n")
    return parse_manifest(path)


def full_assignment(cluster_of):
    return ClusterAssignment(labels=dict(cluster_of), core={u: True for u in cluster_of})


class TestApplyFilters:
    def setup_inputs(self, tmp_path):
        m = curation_manifest(tmp_path)
        asg = full_assignment({"k1": 0, "k2": 0, "es1": 0, "rd1": 1, "q1": 0})
        task_map = {0: "spontaneous", 1: "other"}
        speech = {"k1": 5.0, "k2": 4.0, "es1": 6.0, "rd1": 5.0, "q1": 2.5}
        return m, asg, task_map, speech

    def test_reason_codes(self, tmp_path):
        m, asg, task_map, speech = self.setup_inputs(tmp_path)
        kept, excluded = curate.apply_filters(m, asg, task_map, speech)
        assert [r.uid for r in kept.records] == ["k1", "k2"]
        reasons = {e.uid: e.reason for e in excluded}
        assert reasons == {
            "es1": "non_english",
            "rd1": "non_spontaneous",
            "q1": "low_quality",
        }

    def test_count_conservation(self, tmp_path):
        m, asg, task_map, speech = self.setup_inputs(tmp_path)
        kept, excluded = curate.apply_filters(m, asg, task_map, speech)
        assert len(kept.records) + len(excluded) == len(m.records)

    def test_unmapped_cluster(self, tmp_path):
        m, asg, task_map, speech = self.setup_inputs(tmp_path)
        with pytest.raises(curate.UnmappedCluster):
            curate.apply_filters(m, asg, {0: "spontaneous"}, speech)

    def test_manual_exclusion(self, tmp_path):
        m, asg, task_map, speech = self.setup_inputs(tmp_path)
        kept, excluded = curate.apply_filters(
            m, asg, task_map, speech, manual_exclude={"k1"}
        )
        assert [r.uid for r in kept.records] == ["k2"]
        assert ("k1", "manual") in [(e.uid, e.reason) for e in excluded]

    def test_noise_defaults_to_non_spontaneous(self, tmp_path):
        m, asg, task_map, speech = self.setup_inputs(tmp_path)
        asg.labels["k1"] = -1
        kept, excluded = curate.apply_filters(m, asg, task_map, speech)
        assert ("k1", "non_spontaneous") in [(e.uid, e.reason) for e in excluded]


class TestTaskMap:
    def test_parse(self, tmp_path):
        path = tmp_path / "tasks.csv"
        path.write_text("cluster_id,task\n0,spontaneous\n1,other\n-1,other\n")
        assert curate.parse_task_map(path) == {0: "spontaneous", 1: "other", -1: "other"}

    def test_bad_task_value(self, tmp_path):
        path = tmp_path / "tasks.csv"
        path.write_text("0,reading\n")
        with pytest.raises(curate.CurateError):
            curate.parse_task_map(path)
