import json
from collections import Counter

import numpy as np
import pytest

from pseudo3d import io
from pseudo3d.augment import AugmentSpec
from pseudo3d.dataset import (
    BatchPlan,
    CorpusManifest,
    Entry,
    materialize,
    normalize,
    plan_epoch,
    scan_corpus,
    write_batches,
)
from pseudo3d.errors import ConfigurationError
from pseudo3d.p3d import P3DConfig, pseudo3d_for_model


def make_corpus(root, n2d=2, n3d=3, seed=0, img_shape=(96, 80), vol_shape=(70, 66, 34)):
    rng = np.random.default_rng(seed)
    (root / "xray").mkdir(parents=True, exist_ok=True)
    (root / "ct").mkdir(exist_ok=True)
    for i in range(n2d):
        io.save_pgm(root / "xray" / f"img{i}.pgm", rng.integers(0, 256, img_shape))
    for i in range(n3d):
        io.save_tensor(root / "ct" / f"vol{i}", rng.uniform(-1200, 1500, vol_shape).astype(np.float32), {"modality": "ct"})
    return root


def test_scan_empty(tmp_path):
    m = scan_corpus(tmp_path)
    assert (m.n2d, m.n3d) == (0, 0)


def test_scan_counts_and_order(tmp_path):
    make_corpus(tmp_path)
    (tmp_path / "broken.pgm").write_bytes(b"junk")
    m = scan_corpus(tmp_path)
    assert (m.n2d, m.n3d) == (2, 3)
    assert [e.path for e in m.entries] == sorted(e.path for e in m.entries)
    assert {e.modality for e in m.entries if e.kind == "3d"} == {"ct"}
    assert [r["path"] for r in m.rejects] == ["broken.pgm"]


def test_scan_rules_override_modality(tmp_path):
    make_corpus(tmp_path, n2d=0, n3d=1)
    m = scan_corpus(tmp_path, {"ct/*": "mri"})
    assert m.entries[0].modality == "mri"


def test_scan_parallel_matches_serial(tmp_path):
    make_corpus(tmp_path, n2d=4, n3d=4)
    assert scan_corpus(tmp_path, threads=1).to_dict() == scan_corpus(tmp_path, threads=4).to_dict()


def test_manifest_round_trip(tmp_path):
    make_corpus(tmp_path)
    m = scan_corpus(tmp_path)
    m.save(tmp_path / "m.json")
    assert CorpusManifest.load(tmp_path / "m.json") == m


def synthetic_manifest(n2d, n3d):
    entries = [Entry(f"i{i}.pgm", "2d", (224, 224), "xray") for i in range(n2d)]
    entries += [Entry(f"v{i}", "3d", (64, 64, 32), "ct") for i in range(n3d)]
    return CorpusManifest(root="/nonexistent", entries=entries)


def test_large_corpus_counts():
    m = synthetic_manifest(377_088, 6_453)
    assert (m.n2d, m.n3d) == (377_088, 6_453)


def test_plan_counts():
    m = synthetic_manifest(3, 7)
    sched = plan_epoch(m, BatchPlan(batch_size=4, epoch_length=10, mix_ratio=0.5))
    counts = Counter(d.kind for d in sched)
    assert counts == {"2d": 20, "3d": 20}
    assert all(m.entries[d.entry].kind == d.kind for d in sched)
    assert sorted(d.item_index for d in sched) == list(range(40))


@pytest.mark.parametrize("ratio,kind", [(0.0, "3d"), (1.0, "2d")])
def test_plan_pure(ratio, kind):
    sched = plan_epoch(synthetic_manifest(5, 5), BatchPlan(batch_size=4, epoch_length=3, mix_ratio=ratio))
    assert {d.kind for d in sched} == {kind}


def test_plan_needs_corpus():
    with pytest.raises(ConfigurationError):
        plan_epoch(synthetic_manifest(0, 5), BatchPlan(batch_size=2, mix_ratio=0.5))
    # zero share of the missing kind is fine
    assert len(plan_epoch(synthetic_manifest(0, 5), BatchPlan(batch_size=2, mix_ratio=0.0))) == 2


def test_plan_replacement_flagged():
    sched = plan_epoch(synthetic_manifest(2, 2), BatchPlan(batch_size=10, mix_ratio=0.5))
    twod = [d for d in sched if d.kind == "2d"]
    assert sum(not d.resampled for d in twod) == 2
    assert sum(d.resampled for d in twod) == 3


def test_plan_deterministic_and_seed_sensitive():
    m = synthetic_manifest(6, 6)
    plan = BatchPlan(batch_size=4, epoch_length=3, seed=11)
    assert plan_epoch(m, plan) == plan_epoch(m, plan)
    assert plan_epoch(m, plan) != plan_epoch(m, BatchPlan(batch_size=4, epoch_length=3, seed=12))
    assert plan_epoch(m, plan, epoch=1)[0].item_index == 12


@pytest.mark.parametrize("ratio", [0.0, 0.1, 0.33, 0.5, 0.77, 1.0])
def test_mix_within_one(ratio):
    plan = BatchPlan(batch_size=7, epoch_length=3, mix_ratio=ratio)
    sched = plan_epoch(synthetic_manifest(4, 4), plan)
    assert abs(sum(d.kind == "2d" for d in sched) - ratio * plan.total) <= 1


def test_normalize():
    ct = normalize(np.array([-2000.0, -1000.0, 0.0, 1000.0, 3000.0]), "ct")
    assert ct.tolist() == [0.0, 0.0, 0.5, 1.0, 1.0]
    assert normalize(np.array([2.0, 4.0, 6.0]), "xray").tolist() == [0.0, 0.5, 1.0]
    assert normalize(np.full(3, 5.0), "mri").tolist() == [0.0, 0.0, 0.0]


def test_materialize_identity_3d(tmp_path, rng):
    v = rng.random((64, 64, 32))
    v.flat[0], v.flat[1] = 0.0, 1.0
    io.save_tensor(tmp_path / "v", v, {"modality": "none"})
    m = scan_corpus(tmp_path)
    sched = plan_epoch(m, BatchPlan(batch_size=1, mix_ratio=0.0))
    a, b = materialize(sched[0], m, AugmentSpec.identity(), P3DConfig(5, 1))
    assert np.array_equal(a, v) and np.array_equal(b, v)


def test_materialize_identity_2d(tmp_path, rng):
    img = rng.random((224, 224))
    img.flat[0], img.flat[1] = 0.0, 1.0
    io.save_tensor(tmp_path / "img", img, {"modality": "xray"})
    m = scan_corpus(tmp_path)
    sched = plan_epoch(m, BatchPlan(batch_size=1, mix_ratio=1.0))
    a, b = materialize(sched[0], m, AugmentSpec.identity(), P3DConfig(5, 1))
    expected = pseudo3d_for_model(img, P3DConfig(5, 1), (64, 64, 32))
    assert np.array_equal(a, expected) and np.array_equal(b, expected)


def test_materialize_shapes_and_determinism(tmp_path):
    make_corpus(tmp_path, n2d=2, n3d=2)
    m = scan_corpus(tmp_path)
    sched = plan_epoch(m, BatchPlan(batch_size=4, mix_ratio=0.5, seed=3))
    aug = AugmentSpec(seed=1)
    for d in sched:
        a, b = materialize(d, m, aug, P3DConfig(5, 1), seed=3)
        assert a.shape == b.shape == (64, 64, 32)
        assert 0.0 <= a.min() and a.max() <= 1.0
        assert not np.array_equal(a, b)
        a2, b2 = materialize(d, m, aug, P3DConfig(5, 1), seed=3)
        assert a.tobytes() == a2.tobytes() and b.tobytes() == b2.tobytes()


def test_write_batches_order_and_rejects(tmp_path):
    root = make_corpus(tmp_path / "c", n2d=2, n3d=2)
    # an image too small to crop -> rejected at materialisation, not at scan
    io.save_pgm(root / "xray" / "tiny.pgm", np.zeros((32, 32)))
    m = scan_corpus(root)
    plan = BatchPlan(batch_size=3, epoch_length=2, mix_ratio=1.0, seed=5)
    audit = write_batches(m, plan, AugmentSpec(seed=2), P3DConfig(5, 1), tmp_path / "out", threads=2)
    sched = plan_epoch(m, plan)
    kept = [s for b in audit["batches"] for s in b["samples"]]
    rejected = {r["item_index"] for r in audit["rejects"]}
    assert [s["item_index"] for s in kept] == [d.item_index for d in sched if d.item_index not in rejected]
    tiny = next(i for i, e in enumerate(m.entries) if e.path.endswith("tiny.pgm"))
    assert rejected == {d.item_index for d in sched if d.entry == tiny}
    on_disk = json.loads((tmp_path / "out" / "schedule.json").read_text())
    assert on_disk == json.loads(json.dumps(audit))
    first = io.load_tensor(tmp_path / "out" / audit["batches"][0]["files"][0])
    assert first.shape[1:] == (64, 64, 32) and first.dtype == np.float32
