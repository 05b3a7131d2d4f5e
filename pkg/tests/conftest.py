import pytest

from vict import model, training
from vict.checkpoint import save_checkpoint

SMALL_MODEL = model.ModelConfig(cell_size=16, patch_size=8, embed_dim=32, encoder_depth=1, decoder_depth=1, num_heads=2)


@pytest.fixture(scope="session")
def small_checkpoint(tmp_path_factory):
    """Briefly pre-trained small model, shared by harness and CLI tests."""
    result = training.pretrain(SMALL_MODEL, training.PretrainConfig(steps=60, seed=0))
    path = tmp_path_factory.mktemp("ckpt") / "small.bin"
    save_checkpoint(result.params, path)
    return path
