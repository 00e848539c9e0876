import io
import logging

import numpy as np
import pytest

from astetag import autodiff as ad
from astetag import fixture_path
from astetag.checkpoint import load_checkpoint
from astetag.dataset import DatasetSplit, load_split, parse_line
from astetag.errors import FormatError, NonFiniteLoss
from astetag.training import (LOG_HEADER, TrainConfig, coerce, evaluate_split, read_config_file,
                              train)
import astetag.training as training

SMALL = dict(dim=16, epochs=2)


@pytest.fixture(scope="module")
def fixture_split():
    return load_split(fixture_path(), "train")


@pytest.fixture(scope="module")
def small_split(fixture_split):
    return DatasetSplit("train", fixture_split.sentences[:6])


def _steps(cfg, split):
    rows = []
    train(cfg, split, split, out=None, step_hook=lambda *a: rows.append(a))
    return rows


def test_alpha_zero_is_focal_only(small_split):
    rows = _steps(TrainConfig(alpha=0.0, **SMALL), small_split)
    assert rows and all(total == focal for _, _, total, focal, _ in rows)


def test_ablation_diverges_after_first_update(small_split):
    a = _steps(TrainConfig(alpha=0.0, **SMALL), small_split)
    b = _steps(TrainConfig(alpha=0.1, **SMALL), small_split)
    assert a[0][3] == b[0][3]  # same focal on the very first step
    assert a[0][2] != b[0][2]  # totals differ by the contrastive term
    assert any(x[3] != y[3] for x, y in zip(a[1:], b[1:]))


def test_deterministic_logs(small_split, tmp_path):
    outs = []
    for k in range(2):
        buf = io.StringIO()
        train(TrainConfig(out_dir=str(tmp_path / f"r{k}"), **SMALL), small_split, small_split, out=buf)
        outs.append(buf.getvalue())
        assert (tmp_path / f"r{k}" / "log.tsv").read_text().splitlines()[0] == LOG_HEADER
    assert outs[0] == outs[1]
    assert (tmp_path / "r0" / "log.tsv").read_bytes() == (tmp_path / "r1" / "log.tsv").read_bytes()


def test_best_checkpoint_tracks_max(small_split, tmp_path):
    best, hist = train(TrainConfig(out_dir=str(tmp_path), dim=16, epochs=4), small_split,
                       small_split, out=None)
    assert best.best_dev_f1 == max(h.dev_f1 for h in hist)
    saved = load_checkpoint(tmp_path / "best.ckpt")
    assert saved.best_dev_f1 == best.best_dev_f1 and saved.epoch == best.epoch


def test_checkpoint_round_trip_f1(fixture_split, tmp_path):
    best, _ = train(TrainConfig(out_dir=str(tmp_path), dim=16, epochs=3), fixture_split,
                    fixture_split, out=None)
    before = evaluate_split(best, fixture_split)
    after = evaluate_split(load_checkpoint(tmp_path / "best.ckpt"), fixture_split)
    for task in before:
        assert abs(before[task].f1 - after[task].f1) < 1e-6


def test_untrained_is_near_zero(fixture_split):
    best, _ = train(TrainConfig(epochs=1, lr_encoder=1e-12, lr_head=1e-12), fixture_split,
                    fixture_split, out=None)
    assert evaluate_split(best, fixture_split)["ASTE"].f1 < 0.2


def test_empty_split_eval(small_split, caplog):
    best, _ = train(TrainConfig(**SMALL), small_split, small_split, out=None)
    with caplog.at_level(logging.WARNING):
        reps = evaluate_split(best, DatasetSplit("test", []))
    assert reps["ASTE"].f1 == 0.0 and "empty" in caplog.text


def test_gts_scheme_runs(small_split):
    best, hist = train(TrainConfig(scheme="gts", **SMALL), small_split, small_split, out=None)
    assert len(hist) == 2 and best.tensors["head.cls_w"].shape[-1] == 6


def test_sentiment5_roles_run(small_split):
    _, hist = train(TrainConfig(roles="sentiment5", head="literal", **SMALL), small_split,
                    small_split, out=None)
    assert len(hist) == 2


def test_non_representable_gold_is_logged(caplog):
    s = parse_line("a b c####[([0, 1], [2], 'POS'), ([1], [2], 'NEG')]")
    split = DatasetSplit("train", [s])
    with caplog.at_level(logging.WARNING):
        train(TrainConfig(dim=8, epochs=1), split, split, out=None)
    assert "non-representable" in caplog.text


def test_non_finite_loss(small_split, monkeypatch):
    real = training.step_losses

    def poisoned(model, ex, cfg):
        loss, focal, contr = real(model, ex, cfg)
        return loss * float("nan"), focal, contr

    monkeypatch.setattr(training, "step_losses", poisoned)
    monkeypatch.setattr(ad, "CHECK_FINITE", False)
    with pytest.raises(NonFiniteLoss, match="sentence"):
        train(TrainConfig(**SMALL), small_split, small_split, out=None)


def test_target_f1_stops_early(fixture_split):
    cfg = TrainConfig(dim=16, epochs=30)
    _, full = train(cfg, fixture_split, fixture_split, out=None)
    target = max(h.dev_f1 for h in full)
    assert target > 0
    first = next(h.epoch for h in full if h.dev_f1 >= target)
    _, hist = train(cfg.replace(target_f1=target), fixture_split, fixture_split, out=None)
    assert [h.epoch for h in hist] == list(range(1, first + 1))
    assert [h.line() for h in hist] == [h.line() for h in full[:first]]


def test_config_validation():
    for bad in (dict(epochs=0), dict(lr_head=0.0), dict(scheme="x"), dict(roles="x"),
                dict(d=0.0), dict(contrastive_reduction="max")):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nseed = 5\nalpha=0.25  # trailing\n\nscheme=gts\n")
    raw = read_config_file(p)
    assert raw == {"seed": "5", "alpha": "0.25", "scheme": "gts"}
    cfg = TrainConfig(**{k: coerce(TrainConfig, k, v) for k, v in raw.items()})
    assert (cfg.seed, cfg.alpha, cfg.scheme) == (5, 0.25, "gts")
    p.write_text("no equals sign\n")
    with pytest.raises(FormatError):
        read_config_file(p)
    with pytest.raises(KeyError):
        coerce(TrainConfig, "nope", "1")


def test_epoch_line_format(small_split):
    buf = io.StringIO()
    train(TrainConfig(**SMALL), small_split, small_split, out=buf)
    fields = buf.getvalue().splitlines()[0].split("\t")
    assert len(fields) == 5 and fields[0] == "1"
    assert np.isfinite([float(x) for x in fields[1:]]).all()
