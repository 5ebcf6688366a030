import sys
from pathlib import Path

import pytest

SRC = Path(__file__).resolve().parent.parent / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from fakefill.config import LossWeights, MaskSpec, ModelConfig, Paths, RunConfig, TrainConfig  # noqa: E402
from fakefill.data import build_manifest, write_toy_dataset  # noqa: E402


def micro_model_config(resolution=16, base_width=4, **kw) -> ModelConfig:
    """Small model used throughout the tests; defaults match the gradient-check scale."""
    kw.setdefault("disc_base_width", 8)
    kw.setdefault("disc_max_width", 64)
    return ModelConfig(resolution=resolution, base_width=base_width, **kw)


def micro_run_config(data_root, out_dir, resolution=32, steps=10, **train_kw) -> RunConfig:
    train_kw.setdefault("batch_size", 4)
    train_kw.setdefault("checkpoint_every", 5)
    train_kw.setdefault("seed", 11)
    return RunConfig(
        paths=Paths(data_root=str(data_root), manifest=str(Path(out_dir) / "manifest.tsv"),
                    out_dir=str(out_dir)),
        model=micro_model_config(resolution=resolution),
        mask=MaskSpec(mode="mixed", center_size=resolution // 2),
        loss=LossWeights(),
        train=TrainConfig(steps=steps, **train_kw),
    )


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """Eight 32x32 synthetic images plus their 75/25 manifest."""
    root = tmp_path_factory.mktemp("toy_data")
    write_toy_dataset(root, 8, resolution=32, seed=1)
    return build_manifest(root, val_fraction=0.25, seed=0)
