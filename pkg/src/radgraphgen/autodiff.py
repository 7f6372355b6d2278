"""Differentiable substrate: float64 primitives over torch tensors plus a
finite-difference gradient oracle.

All model math in this package is written with the functions below (or with
torch ops of identical semantics), so gradients come from torch's reverse-mode
engine. :func:`finite_difference_check` is independent of that engine and is
the oracle used to audit it.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
import torch
from torch import nn

DTYPE = torch.float64
LN_VAR_FLOOR = 1e-9

torch.set_default_dtype(DTYPE)


def tensor(data, requires_grad: bool = False) -> torch.Tensor:
    return torch.as_tensor(np.asarray(data, dtype=np.float64)).clone().requires_grad_(requires_grad)


# --- primitives ---------------------------------------------------------------

def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch {tuple(a.shape)} @ {tuple(b.shape)}")
    return a @ b


def add(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return a + b


def mul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return a * b


def scale(a: torch.Tensor, s: float) -> torch.Tensor:
    return a * s


def concat(parts: Sequence[torch.Tensor]) -> torch.Tensor:
    return torch.cat(list(parts), dim=-1)


def slice_last(a: torch.Tensor, start: int, stop: int) -> torch.Tensor:
    return a[..., start:stop]


def reshape(a: torch.Tensor, shape: Sequence[int]) -> torch.Tensor:
    return a.reshape(*shape)


def softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    z = x - x.amax(dim=dim, keepdim=True).detach()
    e = torch.exp(z)
    return e / e.sum(dim=dim, keepdim=True)


def log_softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    z = x - x.amax(dim=dim, keepdim=True).detach()
    return z - torch.log(torch.exp(z).sum(dim=dim, keepdim=True))


def log(x: torch.Tensor) -> torch.Tensor:
    return torch.log(x)


def exp(x: torch.Tensor) -> torch.Tensor:
    return torch.exp(x)


def relu(x: torch.Tensor) -> torch.Tensor:
    return torch.clamp(x, min=0.0)


def layer_norm(x: torch.Tensor, weight: torch.Tensor | None = None, bias: torch.Tensor | None = None) -> torch.Tensor:
    """Normalize over the last axis; variance is floored at ``LN_VAR_FLOOR``."""
    mu = x.mean(dim=-1, keepdim=True)
    xc = x - mu
    var = (xc * xc).mean(dim=-1, keepdim=True)
    y = xc / torch.sqrt(torch.clamp(var, min=LN_VAR_FLOOR))
    if weight is not None:
        y = y * weight
    if bias is not None:
        y = y + bias
    return y


def mean(x: torch.Tensor, dim=None) -> torch.Tensor:
    return x.mean() if dim is None else x.mean(dim=dim)


def total(x: torch.Tensor, dim=None) -> torch.Tensor:
    return x.sum() if dim is None else x.sum(dim=dim)


def embedding(table: torch.Tensor, ids: torch.Tensor) -> torch.Tensor:
    return table[ids]


PRIMITIVES: dict[str, Callable] = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "scale": scale,
    "concat": concat,
    "slice": slice_last,
    "reshape": reshape,
    "softmax": softmax,
    "log_softmax": log_softmax,
    "log": log,
    "exp": exp,
    "relu": relu,
    "layer_norm": layer_norm,
    "mean": mean,
    "sum": total,
    "embedding": embedding,
}


class LayerNorm(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))

    def forward(self, x):
        return layer_norm(x, self.weight, self.bias)


# --- gradients ----------------------------------------------------------------

def backward(loss: torch.Tensor) -> None:
    """Accumulate d(loss)/d(param) into ``.grad`` of every reachable leaf."""
    if loss.dim() != 0:
        raise ValueError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    loss.backward()


def zero_grad(params: Iterable[torch.Tensor]) -> None:
    for p in params:
        if p.grad is not None:
            p.grad.zero_()


def finite_difference_check(
    fn: Callable[[], torch.Tensor],
    params: Sequence[torch.Tensor],
    eps: float = 1e-5,
    coords_per_param: int | None = 20,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central differences.

    ``fn`` is a closure that recomputes the scalar loss from ``params``. Up to
    ``coords_per_param`` coordinates of each tensor are probed (all of them
    when None). Relative error is ``|a - n| / max(1, |a|, |n|)``.
    """
    params = list(params)
    for p in params:
        p.grad = None
    loss = fn()
    backward(loss)
    base = float(loss.detach())
    with torch.no_grad():
        if float(fn()) != base:
            raise RuntimeError("function is not deterministic: re-evaluation changed the loss")
    analytic = [torch.zeros_like(p) if p.grad is None else p.grad.detach().clone() for p in params]

    rng = np.random.default_rng(seed)
    coords = []
    for pi, p in enumerate(params):
        n = p.numel()
        if coords_per_param is None or n <= coords_per_param:
            coords.extend((pi, j) for j in range(n))
        else:
            coords.extend((pi, int(j)) for j in sorted(rng.choice(n, size=coords_per_param, replace=False)))

    worst = 0.0
    with torch.no_grad():
        for pi, j in coords:
            flat = params[pi].view(-1)
            orig = float(flat[j])
            flat[j] = orig + eps
            up = float(fn())
            flat[j] = orig - eps
            down = float(fn())
            flat[j] = orig
            numeric = (up - down) / (2 * eps)
            a = float(analytic[pi].view(-1)[j])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if not math.isfinite(err):
                return math.inf
            worst = max(worst, err)
    return worst
