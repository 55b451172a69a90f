"""Numerical validation of the composite loss gradient.

Runs the loss in float64 on a deep copy of a tiny model and compares the
autograd gradient against central finite differences over a random parameter
subset.  The incorrect set is treated as fixed by the analytic gradient, so
the comparison is only meaningful when no retention probability sits within
a finite-difference perturbation of the decision boundary; the checker
verifies that margin before differencing.
"""

from __future__ import annotations

import copy
import random

import torch
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from maskpress.core.types import RetentionMask
from maskpress.diffusion.loss import REMOVE_THRESHOLD, TrainConfig, loss_terms
from maskpress.diffusion.model import MaskModel
from maskpress.diffusion.process import ForwardSample
from maskpress.errors import ConfigError

MAX_GRADCHECK_PARAMS = 5000
#: minimal distance of any r_i from the remove/keep boundary
BOUNDARY_MARGIN = 1e-3


def finite_difference(loss_fn, params: torch.Tensor, index: int, h: float) -> float:
    """Central difference of loss_fn along one coordinate of params."""
    original = params[index].item()
    params[index] = original + h
    plus = loss_fn(params)
    params[index] = original - h
    minus = loss_fn(params)
    params[index] = original
    return (plus - minus) / (2.0 * h)


def grad_check(
    model: MaskModel,
    sample: ForwardSample,
    m: RetentionMask,
    cfg: TrainConfig,
    n_params: int = 64,
    h: float = 1e-4,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and finite-difference gradients."""
    if model.parameter_count > MAX_GRADCHECK_PARAMS:
        raise ConfigError(
            f"grad_check expects a tiny model (<= {MAX_GRADCHECK_PARAMS} params), "
            f"got {model.parameter_count}"
        )
    net = copy.deepcopy(model.net).double()
    net.eval()
    ids = torch.as_tensor(list(sample.x_tilde.tokens), dtype=torch.long)
    token_ids = sample.x_tilde.tokens

    def total_loss() -> torch.Tensor:
        logits = net(ids)
        _, _, l_total, _ = loss_terms(
            logits, token_ids, sample.m_t, m, cfg, model.mask_id
        )
        return l_total

    # decision-boundary margin guard: membership in the incorrect set must
    # not flip under +-h perturbations or the difference quotient is invalid
    with torch.no_grad():
        probs = torch.softmax(net(ids), dim=-1)
        visible = [i for i, bit in enumerate(sample.m_t.bits) if bit == 1]
        r = 1.0 - probs[visible, model.mask_id]
        margin = float((r - REMOVE_THRESHOLD).abs().min())
    if margin < BOUNDARY_MARGIN:
        raise ConfigError(
            f"sample puts a retention probability within {margin:.2e} of the "
            "decision boundary; pick a different sample or seed"
        )

    loss = total_loss()
    net.zero_grad()
    loss.backward()
    analytic = parameters_to_vector(
        [p.grad if p.grad is not None else torch.zeros_like(p) for p in net.parameters()]
    ).clone()
    params = parameters_to_vector(net.parameters()).detach().clone()

    def loss_at(vector: torch.Tensor) -> float:
        with torch.no_grad():
            vector_to_parameters(vector, net.parameters())
            return float(total_loss())

    rng = random.Random(seed)
    count = min(n_params, params.numel())
    indices = rng.sample(range(params.numel()), count)
    worst = 0.0
    for index in indices:
        fd = finite_difference(loss_at, params, index, h)
        a = float(analytic[index])
        scale = max(abs(a), abs(fd), 1e-8)
        worst = max(worst, abs(a - fd) / scale)
    with torch.no_grad():
        vector_to_parameters(params, net.parameters())
    return worst
