import hashlib
import json
from pathlib import Path

import pytest
import torch

from amtl import data, denoiser, schedule, scorer

TESTS_DIR = Path(__file__).parent
CACHE_DIR = TESTS_DIR / ".model_cache"

# Training recipe for the session models. Sized to train in a few minutes on
# one CPU core while being strong enough for the directional benchmarks.
DENOISER_ARCH = denoiser.DenoiserConfig(base_channels=24, attn_dim=32,
                                        n_heads=2, time_dim=32)
DENOISER_TRAIN = denoiser.TrainConfig(epochs=250, batch_size=64, seed=0)
SCORER_STEPS = 1500


def _recipe_digest() -> str:
    """Cache key: training code plus the recipe; stale caches self-invalidate."""
    h = hashlib.sha256()
    src = Path(denoiser.__file__).parent
    for name in ("denoiser.py", "scorer.py", "schedule.py", "data.py"):
        h.update((src / name).read_bytes())
    h.update(repr((DENOISER_ARCH, DENOISER_TRAIN, SCORER_STEPS)).encode())
    h.update(torch.__version__.encode())
    return h.hexdigest()[:16]


@pytest.fixture(scope="session")
def vocab10():
    return denoiser.ConceptVocab.create(data.CLASS_NAMES, dim=32, seed=7)


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """Tiny end-to-end CLI workspace: dataset plus all three checkpoints."""
    from amtl.cli import main
    root = tmp_path_factory.mktemp("cliws")
    data_dir = root / "data"
    assert main(["gen-data", "--n-per-class", "3", "--seed", "1",
                 "--out", str(data_dir)]) == 0
    fast = ["--dataset", str(data_dir), "--timesteps", "50",
            "--base-channels", "8", "--no-charts"]
    assert main(["train", "denoiser", "--epochs", "2", "--batch-size", "15",
                 "--out", str(root / "dn")] + fast) == 0
    assert main(["train", "scorer", "--steps", "12", "--regime", "noise_aware",
                 "--emb-dim", "16", "--out", str(root / "sc")] + fast) == 0
    assert main(["train", "scorer", "--steps", "12", "--regime", "vanilla",
                 "--role", "evaluation", "--emb-dim", "16", "--seed", "4",
                 "--out", str(root / "ev")] + fast) == 0
    return {
        "root": root,
        "data": data_dir,
        "denoiser": root / "dn" / "denoiser.ckpt",
        "scorer": root / "sc" / "scorer.ckpt",
        "eval_scorer": root / "ev" / "scorer.ckpt",
    }


@pytest.fixture(scope="session")
def tiny_denoiser(vocab10):
    """Untrained but deterministically initialized small model (16x16)."""
    cfg = denoiser.DenoiserConfig(image_size=16, base_channels=8, attn_dim=16,
                                  n_heads=2, time_dim=16, max_timestep=100)
    m = denoiser.Denoiser(cfg, vocab10)
    denoiser.init_parameters(m, torch.Generator().manual_seed(5))
    m.eval()
    return m


@pytest.fixture(scope="session")
def sched1000():
    return schedule.make_schedule(1000)


@pytest.fixture(scope="session")
def train_dataset():
    return data.make_dataset(n_per_class=64, seed=11)


@pytest.fixture(scope="session")
def holdout_dataset():
    return data.make_dataset(n_per_class=16, seed=23)


def _train_all(train_dataset, vocab10, sched1000):
    dn, dn_log = denoiser.train_denoiser(
        train_dataset, vocab10, sched1000, DENOISER_TRAIN, DENOISER_ARCH)
    sc_noise, _ = scorer.train_scorer(
        train_dataset, vocab10, sched1000, "noise_aware",
        scorer.ScorerTrainConfig(steps=SCORER_STEPS, seed=1))
    sc_vanilla, _ = scorer.train_scorer(
        train_dataset, vocab10, sched1000, "vanilla",
        scorer.ScorerTrainConfig(steps=SCORER_STEPS, seed=2))
    sc_eval, _ = scorer.train_scorer(
        train_dataset, vocab10, sched1000, "vanilla",
        scorer.ScorerTrainConfig(steps=SCORER_STEPS, seed=3),
        arch=scorer.ScorerConfig(emb_dim=48, regime="vanilla", role="evaluation"))
    return dn, dn_log, sc_noise, sc_vanilla, sc_eval


@pytest.fixture(scope="session")
def trained_models(vocab10, sched1000, train_dataset):
    """Session denoiser plus the three scorers.

    Checkpoint round trips are bit-exact, so a cache keyed by the training
    code and recipe returns models identical to a fresh run.
    """
    cache = CACHE_DIR / _recipe_digest()
    paths = {
        "denoiser": cache / "denoiser.ckpt",
        "scorer_noise_aware": cache / "scorer_na.ckpt",
        "scorer_vanilla": cache / "scorer_v.ckpt",
        "eval_scorer": cache / "scorer_eval.ckpt",
        "log": cache / "denoiser_loss.json",
    }
    if all(p.exists() for p in paths.values()):
        return {
            "denoiser": denoiser.load_denoiser(paths["denoiser"]),
            "denoiser_loss_log": [tuple(x) for x in
                                  json.loads(paths["log"].read_text())],
            "scorer_noise_aware": scorer.load_scorer(paths["scorer_noise_aware"]),
            "scorer_vanilla": scorer.load_scorer(paths["scorer_vanilla"]),
            "eval_scorer": scorer.load_scorer(paths["eval_scorer"]),
        }
    dn, dn_log, sc_noise, sc_vanilla, sc_eval = _train_all(
        train_dataset, vocab10, sched1000)
    cache.mkdir(parents=True, exist_ok=True)
    denoiser.save_denoiser(dn, paths["denoiser"])
    scorer.save_scorer(sc_noise, paths["scorer_noise_aware"])
    scorer.save_scorer(sc_vanilla, paths["scorer_vanilla"])
    scorer.save_scorer(sc_eval, paths["eval_scorer"])
    paths["log"].write_text(json.dumps(dn_log))
    return {
        "denoiser": dn,
        "denoiser_loss_log": dn_log,
        "scorer_noise_aware": sc_noise,
        "scorer_vanilla": sc_vanilla,
        "eval_scorer": sc_eval,
    }
