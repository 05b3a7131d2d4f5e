import numpy as np
import pytest

from vict import model, tasks
from vict import tensor as T
from vict.canvas import CellPosition, assemble_inference, extract_cell
from vict.gradcheck import TINY_CONFIG, finite_diff_grad, rel_error


@pytest.fixture(scope="module")
def default_params():
    return model.init(model.ModelConfig(), seed=0)


@pytest.fixture(scope="module")
def canvas_and_mask():
    prompt = tasks.generate(tasks.TaskKind.DENOISE, 1)
    query = tasks.generate(tasks.TaskKind.DENOISE, 2)
    return assemble_inference(prompt.input, prompt.target, query.input)


def test_config_validation():
    with pytest.raises(ValueError, match="multiple"):
        model.ModelConfig(cell_size=30, patch_size=8)
    with pytest.raises(ValueError, match="divisible"):
        model.ModelConfig(embed_dim=60, num_heads=8)
    with pytest.raises(ValueError, match="positive"):
        model.ModelConfig(encoder_depth=0)


def test_init_deterministic_in_seed():
    a = model.init(model.ModelConfig(), seed=7)
    b = model.init(model.ModelConfig(), seed=7)
    assert a.digest() == b.digest()
    c = model.init(model.ModelConfig(), seed=8)
    assert a.digest() != c.digest()


def test_positional_embedding_length(default_params):
    assert default_params.tensors["pos_embed"].shape == (64, 64)
    assert model.ModelConfig().num_patches == 64


def test_every_tensor_has_group_label(default_params):
    groups = set(default_params.groups.values())
    assert groups == {model.ENCODER, model.DECODER}
    assert set(default_params.groups) == set(default_params.tensors)


def test_param_groups_partition(default_params):
    everything = model.param_group(default_params, "all")
    encoder = model.param_group(default_params, "encoder")
    decoder_names = set(everything) - set(encoder)
    assert set(everything) == set(encoder) | decoder_names
    assert all(default_params.groups[n] == model.DECODER for n in decoder_names)
    assert "head.weight" not in encoder
    assert "mask_token" in encoder
    assert "patch_embed.weight" in encoder
    assert "pos_embed" in encoder
    with pytest.raises(ValueError, match="selector"):
        model.param_group(default_params, "decoder")


def test_forward_output_shape_and_range(default_params, canvas_and_mask):
    canvas, mask = canvas_and_mask
    out = model.forward(default_params, canvas, mask)
    assert out.shape == (3, 64, 64)
    assert out.data.min() > 0.0 and out.data.max() < 1.0


def test_forward_deterministic(default_params, canvas_and_mask):
    canvas, mask = canvas_and_mask
    a = model.forward(default_params, canvas, mask).data
    b = model.forward(default_params, canvas, mask).data
    assert a.tobytes() == b.tobytes()


def test_forward_rejects_mismatched_mask(default_params, canvas_and_mask):
    from vict.canvas import MaskSpec

    canvas, _ = canvas_and_mask
    wrong = MaskSpec(CellPosition.TOP_RIGHT, canvas.cell_size)
    with pytest.raises(ValueError, match="inconsistent"):
        model.forward(default_params, canvas, wrong)


def test_forward_rejects_wrong_cell_size(default_params):
    prompt = tasks.generate(tasks.TaskKind.DENOISE, 1, cell_size=16)
    query = tasks.generate(tasks.TaskKind.DENOISE, 2, cell_size=16)
    canvas, mask = assemble_inference(prompt.input, prompt.target, query.input)
    with pytest.raises(ValueError, match="cell size"):
        model.forward(default_params, canvas, mask)


def test_permutation_sensitivity(default_params):
    a = tasks.generate(tasks.TaskKind.DENOISE, 3)
    b = tasks.generate(tasks.TaskKind.DENOISE, 4)
    c = tasks.generate(tasks.TaskKind.DENOISE, 5)
    c1, m1 = assemble_inference(a.input, b.input, c.input)
    c2, m2 = assemble_inference(a.input, c.input, b.input)
    o1 = model.forward(default_params, c1, m1).data
    o2 = model.forward(default_params, c2, m2).data
    assert np.abs(o1 - o2).max() > 1e-6


def test_masked_cell_output_independent_of_fill(default_params):
    """The 0.5 fill value never reaches attention; only the mask token does."""
    from vict import canvas as cv

    prompt = tasks.generate(tasks.TaskKind.DENOISE, 6)
    query = tasks.generate(tasks.TaskKind.DENOISE, 7)
    canvas, mask = assemble_inference(prompt.input, prompt.target, query.input)
    out_a = model.forward(default_params, canvas, mask).data

    original = cv.EMPTY_FILL
    try:
        cv.EMPTY_FILL = 0.123
        out_b = model.forward(default_params, canvas, mask).data
    finally:
        cv.EMPTY_FILL = original
    assert out_a.tobytes() == out_b.tobytes()


def test_tiny_config_gradients_match_finite_differences():
    params = model.init(TINY_CONFIG, seed=0, dtype=np.float64)
    prompt = tasks.generate(tasks.TaskKind.DENOISE, 1, cell_size=8)
    query = tasks.generate(tasks.TaskKind.DENOISE, 2, cell_size=8)
    pair = (prompt.input.astype(np.float64), prompt.target.astype(np.float64))
    target = T.constant(query.target.astype(np.float64))

    def loss_fn():
        canvas, mask = assemble_inference(pair[0], pair[1], query.input.astype(np.float64))
        out = model.forward(params, canvas, mask)
        return T.smooth_l1(extract_cell(out, CellPosition.BOTTOM_RIGHT), target, 1.0)

    T.zero_grads(params.tensors.values())
    loss_fn().backward()
    worst = 0.0
    for name in ("patch_embed.weight", "mask_token", "enc0.attn.qkv.weight", "enc0.mlp.fc1.bias"):
        t = params.tensors[name]
        numeric = finite_diff_grad(lambda: loss_fn().item(), t.data)
        worst = max(worst, rel_error(t.grad_or_zero(), numeric))
    assert worst < 1e-4


def test_clone_is_independent(default_params):
    clone = default_params.clone()
    assert clone.digest() == default_params.digest()
    clone.tensors["mask_token"].data += 1.0
    assert clone.digest() != default_params.digest()


def test_param_count_is_config_function():
    a = model.init(model.ModelConfig(), seed=0)
    b = model.init(model.ModelConfig(), seed=99)
    assert a.total_parameters() == b.total_parameters()
    shapes_a = {n: t.shape for n, t in a.tensors.items()}
    shapes_b = {n: t.shape for n, t in b.tensors.items()}
    assert shapes_a == shapes_b
