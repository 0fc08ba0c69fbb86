from author2vec.nn.layers import DenseLayer, KSparseLayer, softmax_xent, softmax_xent_batch
from author2vec.nn.gru import GruCell, gru_forward, gru_backward, bigru_encode
from author2vec.nn.optim import AdamState, adam_step, clip_gradients
from author2vec.nn.gradcheck import grad_check
from author2vec.nn.checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "DenseLayer",
    "KSparseLayer",
    "softmax_xent",
    "softmax_xent_batch",
    "GruCell",
    "gru_forward",
    "gru_backward",
    "bigru_encode",
    "AdamState",
    "adam_step",
    "clip_gradients",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",
]
