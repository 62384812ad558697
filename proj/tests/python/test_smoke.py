import numpy as np
import pytest

import ocrr


def test_substrate_learns_a_new_class_from_one_correction():
    labels, splits, x = ocrr.generate_synthetic(dim=32, num_classes=6, samples_per_class=10, noise_sigma=0.05)
    s = ocrr.Substrate(32)
    for label, v in zip(labels, x):
        if label != "class_0005":
            s.append(v, label)
    novel = [v for label, v in zip(labels, x) if label == "class_0005"]
    assert s.predict(novel[1]) != "class_0005"
    s.append(novel[0], "class_0005")
    assert s.predict(novel[1]) == "class_0005"
    assert s.verify() == (True, None)
    assert len(s) == 51
    assert len(s.head_hash) == 64


def test_empty_substrate_raises():
    with pytest.raises(ocrr._core.NoEvidenceError):
        ocrr.Substrate(4).predict(np.ones(4, dtype=np.float32))


def test_ledger_file_round_trip(tmp_path):
    s = ocrr.Substrate(4)
    rng = np.random.default_rng(0)
    for i in range(10):
        s.append(rng.normal(size=4), f"c{i % 3}")
    path = tmp_path / "l.ocrrl"
    s.save_ledger(path)
    assert ocrr.verify_ledger_file(path) == (True, None)
    data = bytearray(path.read_bytes())
    data[20] ^= 0xFF  # inside record 0
    path.write_bytes(bytes(data))
    assert ocrr.verify_ledger_file(path) == (False, 0)


def test_embedding_file_round_trip(tmp_path):
    labels, splits, x = ocrr.generate_synthetic(dim=8, num_classes=3, samples_per_class=4, test_per_class=1)
    path = tmp_path / "d.emb"
    ocrr.save_embedding_file(path, labels, x, splits)
    l2, s2, x2 = ocrr.load_embedding_file(path)
    assert l2 == labels and s2 == splits
    np.testing.assert_array_equal(x2, x)
    assert (tmp_path / "d.emb.classes.txt").read_text() == "class_0000\nclass_0001\nclass_0002\n"


def test_recall_and_scale_study():
    assert ocrr.recall_at_k([1, 2, 3, 4, 5], [5, 9, 8, 7, 6], 5) == pytest.approx(0.2)
    rows = ocrr.run_scale_study([500], dim=16, num_classes=5, noise_sigma=0.0, test_queries=20)
    assert rows[0]["brute_acc"] == 1.0 and rows[0]["agreement"] == 1.0


def test_tiny_sweep(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        '{"datasets": [{"name": "t", "synthetic": {"dim": 8, "num_classes": 6, "samples_per_class": 8,'
        ' "test_per_class": 2}}], "systems": ["substrate"], "policies": ["oracle"], "seeds": [0],'
        ' "batch": 4, "held_out": 2}'
    )
    out = ocrr.run_sweep(cfg, tmp_path / "out")
    assert out["cells_run"] == 1
    header = open(out["summary_csv"]).readline().strip()
    assert header.startswith("dataset,system,policy,final_novel_mean")
    with pytest.raises(ValueError):
        bad = tmp_path / "bad.json"
        bad.write_text('{"datasets": [], "systems": ["substrate"]}')
        ocrr.run_sweep(bad, tmp_path / "out2")


def test_index_handles():
    _, _, x = ocrr.generate_synthetic(dim=16, num_classes=4, samples_per_class=50)
    brute, hnsw = ocrr.BruteForceIndex(16), ocrr.HnswIndex(16)
    brute.add(x)
    hnsw.add(x)
    assert len(brute) == len(hnsw) == 200
    ids, sims = brute.top_k(x[7], 5)
    assert ids[0] == 7 and sims[0] == pytest.approx(1.0, abs=1e-6)
    assert np.all(np.diff(sims) <= 0)
    hids, _ = hnsw.top_k(x[7], 5, ef=200)
    assert hids[0] == 7
