import numpy as np
import pytest

import llnn


def test_auc_examples():
    assert llnn.auc([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0
    assert llnn.auc([0.9, 0.8, 0.3], [1, 0, 1]) == 0.5
    with pytest.raises(llnn.ContractError):
        llnn.auc([0.1, 0.2], [1, 1])


def test_expansion_and_strategies():
    assert llnn.expansion_size("SimilarityScaled", 25, [0.4]) == 15
    assert llnn.expansion_size("Constant", 25, [0.9]) == 25
    assert llnn.normalize_strategy("OneSimilar(0.7)") == "OneSimilar(0.7)"
    with pytest.raises(llnn.ConfigError):
        llnn.normalize_strategy("OneBest")


def test_config_round_trip():
    assert "e1-nonforgetting" in llnn.experiment_ids
    cfg = llnn.default_config("e4-confusion")
    assert cfg["gamma"] == 0.1
    assert llnn.parse_config(cfg) == cfg
    with pytest.raises(llnn.ConfigError, match="train.epochs"):
        llnn.parse_config({"experiment": "e1-nonforgetting", "train": {"epochs": 0}})


def test_network_forward_and_training():
    images, labels = llnn.synthetic_images("0Z", 30, seed=1)
    assert images.shape == (60, 28, 28)
    assert labels == "0" * 30 + "Z" * 30
    x = images.reshape(60, -1).T.astype(np.float64) / 255.0
    y = np.array([1.0 if c == "0" else 0.0 for c in labels])

    net = llnn.Network(784, seed=3)
    assert net.add_task(8) == 0
    losses = net.train_task(0, x, y, epochs=5, batch_size=16)
    assert len(losses) == 5
    assert losses[-1] < losses[0]
    p = net.forward(x)
    assert p.shape == (1, 60)
    assert llnn.auc(list(p[0]), [int(v) for v in y]) > 0.9

    net.freeze_all()
    before = net.forward(x)[0].copy()
    assert net.add_task(0, copy_from=0) == 1
    net.train_task(1, x, 1.0 - y, epochs=2)
    after = net.forward(x)
    assert np.array_equal(before, after[0])
    with pytest.raises(llnn.DimensionError):
        net.forward(np.zeros((5, 2)))


def test_run_experiment_is_deterministic(tmp_path):
    cfg = llnn.default_config("e6-backward")
    cfg["data"] = {"source": "synthetic", "synthetic": {"train_per_char": 100, "test_per_char": 20}}
    cfg["seeds"] = [0]
    cfg["train"]["epochs"] = 2
    cfg["backward"] = {"second": ["O"], "links": [True]}
    cfg["output_dir"] = str(tmp_path)
    first = llnn.run_experiment(cfg, write_files=True)
    second = llnn.run_experiment(cfg)
    assert first[0]["csv"] == second[0]["csv"]
    assert first[0]["csv"].startswith(llnn.csv_header)
    assert (tmp_path / "e6-backward" / "seed_0.csv").read_text() == first[0]["csv"]
    phases = {row[0] for row in first[0]["rows"]}
    assert phases == {"learn:0", "learn:O", "pre-link", "backward"}
