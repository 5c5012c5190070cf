import math
from pathlib import Path

import pytest

import rectape

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def test_model_names():
    assert len(rectape.model_names()) == 12
    assert "attrec" in rectape.model_names()


def test_rating_run_reports_rmse_and_mae():
    config = rectape.ExperimentConfig.load(str(FIXTURES / "biasedsvd.ini"))
    assert config.model_name == "biasedsvd"
    assert config.task == "rating"
    result = rectape.run(config)
    assert [k for k, _ in result["metrics"]] == ["rmse", "mae"]
    assert all(math.isfinite(v) for _, v in result["metrics"])
    assert len(result["epoch_loss"]) == 20


def test_ranking_run_checkpoint_and_recommend(tmp_path):
    config = rectape.ExperimentConfig.load(str(FIXTURES / "bprmf.ini"))
    ckpt = tmp_path / "bprmf.ckpt"
    report = tmp_path / "report.txt"
    result = rectape.run(config, checkpoint=str(ckpt), report=str(report))
    assert report.read_text() == result["report_text"]
    keys = [k for k, _ in result["metrics"]]
    assert keys == ["precision@5", "recall@5", "ndcg@5", "precision@10", "recall@10", "ndcg@10", "mrr"]

    model = rectape.load_model(str(ckpt))
    assert model.name == "bprmf"
    trained = result["model"]
    for u in range(model.n_users):
        assert model.score_items(u, list(range(model.n_items))) == trained.score_items(
            u, list(range(trained.n_items))
        )
    assert rectape.evaluate(model, config) == result["metrics"]

    recs = model.recommend("1", 3)
    assert len(recs) == 3
    scores = [s for _, s in recs]
    assert scores == sorted(scores, reverse=True)


def test_rerun_is_byte_identical():
    config = rectape.ExperimentConfig.load(str(FIXTURES / "bprmf.ini"))
    assert rectape.run(config)["report_text"] == rectape.run(config)["report_text"]


def test_validation_errors_are_raised():
    bad = (FIXTURES / "biasedsvd.ini").read_text().replace("k = 4", "k = four")
    with pytest.raises(rectape.ValidationError, match="model.k"):
        rectape.ExperimentConfig.parse(bad)


def test_bad_checkpoint(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"XXXX\x01\x00")
    with pytest.raises(rectape.CheckpointError, match="magic"):
        rectape.load_model(str(path))
    with pytest.raises(rectape.Error):
        rectape.load_model(str(tmp_path / "missing.ckpt"))
