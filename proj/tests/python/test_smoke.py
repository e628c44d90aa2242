import numpy as np
import pytest

import sws_learngene as sws


def tiny_config(depth=4, classes=3):
    cfg = sws.ModelConfig()
    cfg.image_size = 8
    cfg.patch_size = 4
    cfg.depth = depth
    cfg.width = 16
    cfg.heads = 2
    cfg.mlp_ratio = 2.0
    cfg.classes = classes
    return cfg


def test_balanced_plans():
    assert sws.balanced_plan(16, 5).sizes == [3, 3, 4, 3, 3]
    assert sws.balanced_plan(12, 6).sizes == [2] * 6
    plan = sws.StagePlan.custom([2, 3, 1])
    assert sws.stage_partition(6, plan) == [2, 3, 1]
    assert sum(sws.stage_partition(9, plan)) == 9


def test_identity_expansion_matches_aux():
    plan = sws.StagePlan.custom([2, 2])
    aux = sws.build_aux(tiny_config(), plan, 1)
    assert aux.is_tied
    assert aux.layer_index == [0, 0, 1, 1]
    des = sws.init_descendant(sws.extract_learngene(aux, plan), 4)
    assert not des.is_tied
    x = np.random.default_rng(0).random((5, 1, 8, 8), dtype=np.float32)
    assert np.array_equal(aux.logits(x), des.logits(x))
    assert des.param_count() > aux.param_count()


def test_train_evaluate_and_round_trip(tmp_path):
    train, val = sws.split(sws.make_synthetic(120, 3, 8, 1), 0.75, 2)
    assert train.images.shape == (90, 1, 8, 8)
    model = sws.build_model(tiny_config(2), 3)
    cfg = sws.TrainConfig()
    cfg.alpha = 0.0
    cfg.epochs = 2
    cfg.batch_size = 30
    epochs = sws.train(model, train, val, cfg)
    assert [e["epoch"] for e in epochs] == [0, 1, 2]
    loss, top1 = sws.evaluate(model, val)
    assert loss == pytest.approx(epochs[-1]["val_loss"])
    assert 0.0 <= top1 <= 1.0

    path = str(tmp_path / "m.ckpt")
    sws.save_checkpoint(path, model)
    again = sws.load_checkpoint(path)
    assert np.array_equal(model.logits(val.images), again.logits(val.images))

    cache = sws.cache_teacher_logits(model, train)
    assert cache.logits.shape == (90, 3)
    cfg.alpha = 0.5
    student = sws.build_model(tiny_config(2), 4)
    sws.train(student, train, val, cfg, cache)
    with pytest.raises(sws.StaleCacheError):
        sws.train(student, val, val, cfg, cache)


def test_pack_round_trip(tmp_path):
    plan = sws.balanced_plan(6, 3)
    pack = sws.extract_learngene(sws.build_aux(tiny_config(6), plan, 5), plan, note="smoke")
    path = str(tmp_path / "p.lg")
    sws.save_learngene(path, pack)
    loaded = sws.load_learngene(path)
    assert loaded.plan == plan and loaded.note == "smoke"
    x = np.zeros((2, 1, 8, 8), dtype=np.float32)
    a = sws.init_descendant(pack, 8, strategy="cyclic-roundrobin")
    b = sws.init_descendant(loaded, 8, strategy="cyclic-roundrobin")
    assert np.array_equal(a.logits(x), b.logits(x))


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(sws.ValidationError):
        sws.balanced_plan(2, 3)
    bad = tmp_path / "bad.lg"
    bad.write_bytes(b"nope")
    with pytest.raises(sws.FormatError):
        sws.load_learngene(str(bad))
    with pytest.raises(sws.IoError):
        sws.load_checkpoint(str(tmp_path / "missing.ckpt"))


def test_cli_entry_point():
    code, out, _ = sws.run_cli(["--help"])
    assert code == 0 and "train-aux" in out
    code, _, err = sws.run_cli(["init-des", "--pack", "/nonexistent/p.lg", "--depth", "3"])
    assert code == 3 and err
