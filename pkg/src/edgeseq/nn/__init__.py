from .functional import cross_entropy, cross_entropy_logits, dropout, log_softmax, sigmoid, softmax
from .layers import Embedding, GRULayer, GRUStack, Linear, Module, Parameter, gru_step
from .optim import Adam, step_halving_lr

__all__ = [
    "Adam",
    "Embedding",
    "GRULayer",
    "GRUStack",
    "Linear",
    "Module",
    "Parameter",
    "cross_entropy",
    "cross_entropy_logits",
    "dropout",
    "gru_step",
    "log_softmax",
    "sigmoid",
    "softmax",
    "step_halving_lr",
]
