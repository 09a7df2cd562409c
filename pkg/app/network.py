"""
Differentiable multilayer-perceptron engine.

Networks are plain functions of a flat float64 parameter vector so that every
scheme, problem and optimizer works on the same layout. The layout is frozen:
layer by layer, the weight matrix (shape out x in) in row-major order followed
by its bias vector. Input derivatives come from torch autograd, so jets are
exact to machine precision and parameter gradients flow through them.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Literal, Mapping, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from app.exceptions import GraphError, NonFiniteError
from app.utils import ensure_finite, make_generator

DTYPE = torch.float64
CHECKPOINT_MAGIC = "PINNCW1"


class NetworkConfig(BaseModel):
    """Shape of one fully connected tanh network."""

    model_config = ConfigDict(frozen=True)

    input_dim: int = Field(ge=1)
    output_dim: int = Field(ge=1)
    hidden_layers: int = Field(ge=1)
    hidden_width: int = Field(ge=1)
    activation: Literal["tanh"] = "tanh"

    @property
    def layer_sizes(self) -> list:
        return (
            [self.input_dim]
            + [self.hidden_width] * self.hidden_layers
            + [self.output_dim]
        )


def param_count(config: NetworkConfig) -> int:
    """Number of entries in a ParamVector for this config."""
    sizes = config.layer_sizes
    return sum(fan_out * fan_in + fan_out for fan_in, fan_out in zip(sizes, sizes[1:]))


def init_params(config: NetworkConfig, seed: int) -> torch.Tensor:
    """
    Glorot-uniform weights and zero biases.

    Args:
        config: Network shape
        seed: Seed of the dedicated generator; equal seeds give equal vectors

    Returns:
        torch.Tensor: Flat float64 parameter vector in the frozen layout
    """
    generator = make_generator(seed)
    sizes = config.layer_sizes
    chunks = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = (6.0 / (fan_in + fan_out)) ** 0.5
        weight = (torch.rand((fan_out, fan_in), generator=generator, dtype=DTYPE) * 2.0 - 1.0) * bound
        chunks.append(weight.reshape(-1))
        chunks.append(torch.zeros(fan_out, dtype=DTYPE))
    return torch.cat(chunks)


def unflatten(params: torch.Tensor, config: NetworkConfig) -> list:
    """Split a flat vector into (weight, bias) views, one pair per layer."""
    expected = param_count(config)
    if params.numel() != expected:
        raise ValueError(f"Parameter vector has {params.numel()} entries, expected {expected}")
    layers = []
    offset = 0
    sizes = config.layer_sizes
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        weight = params[offset:offset + fan_out * fan_in].view(fan_out, fan_in)
        offset += fan_out * fan_in
        bias = params[offset:offset + fan_out]
        offset += fan_out
        layers.append((weight, bias))
    return layers


def as_points(points, input_dim: int = None) -> torch.Tensor:
    """Coerce array-like input to a finite (batch, dim) float64 tensor."""
    tensor = torch.as_tensor(points, dtype=DTYPE)
    if tensor.ndim == 1:
        tensor = tensor.unsqueeze(0)
    if input_dim is not None and tensor.shape[-1] != input_dim:
        raise ValueError(f"Inputs have {tensor.shape[-1]} coordinates, network expects {input_dim}")
    ensure_finite(tensor, "network input")
    return tensor


def forward(params: torch.Tensor, config: NetworkConfig, inputs) -> torch.Tensor:
    """
    Evaluate the network on a batch.

    Hidden layers use tanh, the output layer is affine. Rows are independent,
    so the batch result equals point-by-point evaluation.
    """
    h = as_points(inputs, config.input_dim)
    layers = unflatten(params, config)
    for weight, bias in layers[:-1]:
        h = torch.tanh(F.linear(h, weight, bias))
    weight, bias = layers[-1]
    return F.linear(h, weight, bias)


@dataclass
class InputJet:
    """
    Value, input gradient and input Hessian of a vector-valued map.

    Batched jets carry a leading batch axis: value (B, k), gradient (B, k, d),
    hessian (B, k, d, d). Single-point jets drop it.
    """

    value: torch.Tensor
    gradient: torch.Tensor
    hessian: torch.Tensor
    points: torch.Tensor = None

    def u(self, k: int = 0) -> torch.Tensor:
        return self.value[..., k]

    def d(self, i: int, k: int = 0) -> torch.Tensor:
        return self.gradient[..., k, i]

    def dd(self, i: int, j: int, k: int = 0) -> torch.Tensor:
        return self.hessian[..., k, i, j]

    def detach(self) -> "InputJet":
        return InputJet(
            self.value.detach(),
            self.gradient.detach(),
            self.hessian.detach(),
            None if self.points is None else self.points.detach(),
        )

    def at(self, index: int) -> "InputJet":
        """Single-point jet at one batch row."""
        return InputJet(
            self.value[index],
            self.gradient[index],
            self.hessian[index],
            None if self.points is None else self.points[index],
        )


def _grad_or_zeros(output: torch.Tensor, x: torch.Tensor, create_graph: bool) -> torch.Tensor:
    if not output.requires_grad:
        return torch.zeros_like(x)
    (grad,) = torch.autograd.grad(
        output, x, create_graph=create_graph, retain_graph=True, allow_unused=True
    )
    return torch.zeros_like(x) if grad is None else grad


def function_jet(fn: Callable, points, create_graph: bool = False) -> InputJet:
    """
    Exact jet of a batched map at every row of ``points``.

    ``fn`` maps a (B, d) tensor to (B, k) or (B,). Each output row must depend
    on its own input row only, which holds for networks and for the pointwise
    hard-constraint transforms built on them.

    With ``create_graph`` the jet stays attached to the autograd graph so a
    loss built from derivatives can be differentiated with respect to the
    network parameters.
    """
    x = as_points(points).detach().requires_grad_(True)
    with torch.enable_grad():
        out = fn(x)
        if out.ndim == 1:
            out = out.unsqueeze(1)
        gradients = []
        hessians = []
        for k in range(out.shape[1]):
            grad = _grad_or_zeros(out[:, k].sum(), x, create_graph=True)
            rows = [
                _grad_or_zeros(grad[:, i].sum(), x, create_graph=create_graph)
                for i in range(x.shape[1])
            ]
            hessian = torch.stack(rows, dim=1)
            gradients.append(grad)
            hessians.append(0.5 * (hessian + hessian.transpose(1, 2)))
    jet = InputJet(out, torch.stack(gradients, dim=1), torch.stack(hessians, dim=1), x)
    return jet if create_graph else jet.detach()


def input_jet(params: torch.Tensor, config: NetworkConfig, point) -> InputJet:
    """Jet of the raw network at a single point."""
    point = as_points(point, config.input_dim)
    jet = function_jet(lambda x: forward(params, config, x), point)
    return jet.at(0)


def _graph_leaves(value: torch.Tensor) -> list:
    """Leaf tensors that accumulate gradient somewhere below ``value``."""
    if value.grad_fn is None:
        return [value] if value.requires_grad else []
    leaves = []
    seen = set()
    stack = [value.grad_fn]
    while stack:
        node = stack.pop()
        if node is None or id(node) in seen:
            continue
        seen.add(id(node))
        variable = getattr(node, "variable", None)
        if variable is not None:
            leaves.append(variable)
        stack.extend(child for child, _ in node.next_functions)
    return leaves


class LossGraph:
    """
    A scalar loss together with the parameter vectors it was built from.

    Every parameter vector is registered once under a name. Input tensors used
    to take jets are registered as inputs; any other gradient-carrying leaf in
    the graph is treated as an unregistered parameter and rejected.
    """

    def __init__(
        self,
        value: torch.Tensor,
        params: Mapping[str, torch.Tensor],
        inputs: Sequence[torch.Tensor] = (),
    ):
        value = torch.as_tensor(value, dtype=DTYPE)
        if value.numel() != 1:
            raise ValueError("Loss must be a scalar")
        if not torch.isfinite(value).all():
            raise NonFiniteError(f"Loss value is not finite: {value.item()}")
        ids = [id(p) for p in params.values()]
        if len(set(ids)) != len(ids):
            raise GraphError("A parameter vector was registered more than once")
        for name, tensor in params.items():
            if not tensor.requires_grad:
                raise GraphError(f"Parameter vector '{name}' does not require grad")
        self.value = value.reshape(())
        self.params = dict(params)
        self.inputs = list(inputs)

    def check_registered(self):
        known = {id(t) for t in self.params.values()} | {id(t) for t in self.inputs}
        for leaf in _graph_leaves(self.value):
            if id(leaf) not in known:
                raise GraphError(
                    f"Loss depends on an unregistered tensor of shape {tuple(leaf.shape)}"
                )

    def item(self) -> float:
        return float(self.value.detach())


def param_gradient(loss: LossGraph, retain_graph: bool = False) -> dict:
    """
    Exact gradient of the loss with respect to every registered vector.

    Derivative-of-derivative paths (residuals built from jets) and hard
    constraint transforms are covered because the jets keep their graph.
    """
    loss.check_registered()
    names = list(loss.params)
    tensors = [loss.params[name] for name in names]
    if not loss.value.requires_grad:
        return {name: torch.zeros_like(t) for name, t in zip(names, tensors)}
    grads = torch.autograd.grad(
        loss.value, tensors, retain_graph=retain_graph, allow_unused=True
    )
    return {
        name: torch.zeros_like(t) if g is None else g.detach()
        for name, t, g in zip(names, tensors, grads)
    }


def save_checkpoint(path, networks: Mapping[str, tuple]):
    """
    Write networks to a checkpoint file.

    Args:
        path: Destination file
        networks: name -> (NetworkConfig, parameter vector), written in order

    The byte layout is described in docs/checkpoint_format.md.
    """
    path = Path(path)
    lines = [CHECKPOINT_MAGIC, f"networks {len(networks)}"]
    payload = []
    for name, (config, params) in networks.items():
        if params.numel() != param_count(config):
            raise ValueError(f"Network '{name}' has a parameter vector of the wrong size")
        lines.append(
            f"{name} {config.input_dim} {config.output_dim} {config.hidden_layers} "
            f"{config.hidden_width} {config.activation} {params.numel()}"
        )
        payload.append(np.asarray(params.detach().cpu().numpy(), dtype="<f8").tobytes())
    header = ("\n".join(lines) + "\n\n").encode("ascii")
    path.write_bytes(header + b"".join(payload))
    logger.debug(f"Checkpoint written to {path}")


def load_checkpoint(path) -> dict:
    """Read a checkpoint written by save_checkpoint."""
    data = Path(path).read_bytes()
    end = data.find(b"\n\n")
    if end < 0:
        raise ValueError(f"{path}: missing checkpoint header terminator")
    lines = data[:end].decode("ascii").split("\n")
    if lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    count = int(lines[1].split()[1])
    offset = end + 2
    networks = {}
    for line in lines[2:2 + count]:
        name, input_dim, output_dim, hidden_layers, hidden_width, activation, size = line.split()
        config = NetworkConfig(
            input_dim=int(input_dim),
            output_dim=int(output_dim),
            hidden_layers=int(hidden_layers),
            hidden_width=int(hidden_width),
            activation=activation,
        )
        size = int(size)
        if size != param_count(config):
            raise ValueError(f"{path}: network '{name}' size does not match its config")
        values = np.frombuffer(data, dtype="<f8", count=size, offset=offset)
        offset += 8 * size
        networks[name] = (config, torch.tensor(values.astype(np.float64), dtype=DTYPE))
    if offset != len(data):
        raise ValueError(f"{path}: trailing bytes after parameter data")
    return networks
