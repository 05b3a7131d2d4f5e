"""Grid-canvas visual in-context inpainting with per-sample test-time tuning.

A small numpy/scipy stack: a reverse-mode autodiff engine, 2x2 canvas
assembly with a prompt/test role flip, a patch-transformer inpainting
model, procedural tasks and corruptions, cycle-consistency test-time
tuning, and a deterministic benchmark harness.
"""

from . import canvas, checkpoint, corruptions, gradcheck, harness, model, tasks, tensor, training, tuning
from .canvas import CellPosition, assemble_flipped, assemble_inference, extract_cell, write_ppm
from .checkpoint import load_checkpoint, save_checkpoint
from .corruptions import ALL_KINDS, CorruptionKind, CorruptionSpec, apply
from .harness import BenchConfig, MetricReport, run_bench, run_clean_eval, run_fewshot
from .model import ModelConfig, Params, forward, init, param_group
from .tasks import ALL_TASKS, Metric, TaskKind, TaskSample, a_rel, generate, miou, psnr
from .tensor import AdamWState, Tensor, adamw_step, backward, smooth_l1, zero_grads
from .training import FewShotConfig, PretrainConfig, fewshot_finetune, pretrain
from .tuning import AdaptationResult, PromptSet, TestSample, VictConfig, adapt_and_predict, cycle_loss, select_prompt

__version__ = "0.1.0"
