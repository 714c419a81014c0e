"""End-to-end smoke tests for the compiled extension."""

import json

import numpy as np
import pytest

import capsrep

CONFIG = {
    "seed": 3,
    "n_caps": 2,
    "epochs": 2,
    "batch": 4,
    "pairs_per_object": 2,
    "encoder": {
        "in_channels": 3,
        "image_size": 16,
        "stages": [[8, 3, 2, 1], [8, 3, 2, 1]],
    },
}


@pytest.fixture(scope="module")
def archive():
    return capsrep.generate_dataset(
        classes=1, objects_per_class=4, views_per_object=3, image_size=16, seed=11
    )


@pytest.fixture(scope="module")
def trained(archive):
    return capsrep.pretrain(json.dumps(CONFIG), archive)


def test_dataset_generation(archive):
    assert archive.n_records == 12
    assert archive.classes == 1
    assert archive.views_per_object == 3

    image = archive.image(0)
    assert image.shape == (3, 16, 16)
    assert image.dtype == np.float32
    assert image.min() >= 0.0 and image.max() <= 1.0

    again = capsrep.generate_dataset(
        classes=1, objects_per_class=4, views_per_object=3, image_size=16, seed=11
    )
    assert again.checksum() == archive.checksum()

    other = capsrep.generate_dataset(
        classes=1, objects_per_class=4, views_per_object=3, image_size=16, seed=12
    )
    assert other.checksum() != archive.checksum()


def test_archive_roundtrip(archive, tmp_path):
    path = str(tmp_path / "smoke.caps")
    archive.save(path)
    loaded = capsrep.load_archive(path)
    assert loaded.checksum() == archive.checksum()
    np.testing.assert_array_equal(loaded.image(5), archive.image(5))


def test_pretrain_log_and_checkpoint(trained):
    ckpt = trained["checkpoint"]
    assert ckpt.epoch == 2
    assert ckpt.step == 4  # 4 objects x 2 pairs / batch 4, x2 epochs

    logs = trained["log_lines"]
    assert len(logs) == 4
    record = json.loads(logs[0])
    assert record["type"] == "step"
    assert np.isfinite(record["total"])
    assert "invariant_ce" in record and "equivariant_mse" in record

    canonical = capsrep.train_config_json(json.dumps(CONFIG))
    assert ckpt.config_json == canonical


def test_embeddings_live_on_the_simplex(trained, archive):
    model = capsrep.Model.from_checkpoint(trained["checkpoint"])
    assert model.act_dim == 2
    assert model.pose_dim == 32

    table = model.embed(archive)
    act, pose = table["act"], table["pose"]
    assert act.shape == (12, 2)
    assert pose.shape == (12, 32)
    np.testing.assert_allclose(act.sum(axis=1), 1.0, atol=1e-5)
    assert len(table["class_ids"]) == 12
    assert table["rotations"].shape == (12, 4)


def test_forward_batches(archive):
    model = capsrep.Model(json.dumps(CONFIG))
    images = np.stack([archive.image(i) for i in range(4)])
    act, pose = model.forward(images)
    assert act.shape == (4, 2)
    assert pose.shape == (4, 32)
    np.testing.assert_allclose(act.sum(axis=1), 1.0, atol=1e-5)

    # Same config, same seed: the forward pass is reproducible.
    act2, _ = capsrep.Model(json.dumps(CONFIG)).forward(images)
    np.testing.assert_array_equal(act, act2)


def test_checkpoint_bytes_roundtrip(trained, archive):
    ckpt = trained["checkpoint"]
    back = capsrep.Checkpoint.from_bytes(ckpt.to_bytes())
    assert back.config_hash == ckpt.config_hash
    assert back.step == ckpt.step

    a = capsrep.Model.from_checkpoint(ckpt).embed(archive)
    b = capsrep.Model.from_checkpoint(back).embed(archive)
    np.testing.assert_array_equal(a["pose"], b["pose"])


def test_training_is_deterministic(trained, archive):
    again = capsrep.pretrain(json.dumps(CONFIG), archive)
    assert again["log_lines"] == trained["log_lines"]


def test_resume_matches_uninterrupted_run(archive):
    config = dict(CONFIG, epochs=4, checkpoint_every=2)
    full = capsrep.pretrain(json.dumps(config), archive)
    snapshots = full["checkpoints"]
    assert len(snapshots) == 1
    assert snapshots[0].epoch == 2

    resumed = capsrep.resume_pretrain(snapshots[0], archive)
    assert resumed["checkpoint"].epoch == 4
    n = len(full["log_lines"])
    assert resumed["log_lines"] == full["log_lines"][n // 2 :]
    assert resumed["checkpoint"].to_bytes() == full["checkpoint"].to_bytes()


def test_r_squared():
    y = np.arange(12, dtype=np.float32).reshape(6, 2)
    assert capsrep.r_squared(y, y) == pytest.approx(1.0)
    worse = y[::-1].copy()
    assert capsrep.r_squared(y, worse) < 0.0


def test_retrieval_metrics(archive):
    model = capsrep.Model(json.dumps(CONFIG))
    report = capsrep.retrieval_metrics(
        model, archive, split="all", predictor="identity"
    )
    assert report["n_pairs"] == 24  # 4 objects x (3 x 2) ordered view pairs
    assert 0.0 <= report["mrr"] <= 1.0
    assert 0.0 <= report["h_at_1"] <= report["h_at_5"] <= 1.0
    assert report["pre"] >= 0.0


def test_online_eval_leaves_model_untouched(archive):
    model = capsrep.Model(json.dumps(CONFIG))
    before = model.parameter_checksum()
    point = capsrep.online_eval_point(model, archive, epoch=0, probe_seed=5)
    assert model.parameter_checksum() == before
    assert 0.0 <= point["classification_top1"] <= 1.0


def test_config_errors():
    with pytest.raises(capsrep.ConfigError):
        capsrep.pretrain("{}", capsrep.generate_dataset(1, 1, 2, 16, 1))
    with pytest.raises(ValueError):
        capsrep.train_config_json('{"seed": 1, "batch": 1}')
