from .checkpoint import CheckpointError, load_checkpoint, load_into, save_checkpoint
from .layers import Conv2d, ConvTranspose2d, Embedding, GroupNorm, Linear, Module
from .optim import AdamW, TrainingError, warmup_cosine_lr
from .tensor import (
    DimensionError, Tensor, add, avg_pool2d, concat, conv2d, conv_transpose2d, embedding, group_norm,
    linear, matmul, mse_loss, mul, no_grad, reshape, silu, sub, upsample_nearest,
)
