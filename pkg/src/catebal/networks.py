"""The four network roles of the balancing method.

Roles and architectures (fixed for all experiments):
  - generator: noise (R^l) -> scalar pseudo-confounder; hidden 16-16, ELU
  - outcome:   (x, u_tilde, t) -> scalar prediction; hidden 32-32, ELU (S-learner,
               the treatment enters as one extra real input)
  - marginal_critic:   scalar outcome -> score in [0, 1]; hidden 8-8, ReLU, logistic out
  - projection_critic: covariate vector -> score in [-1, 1]; hidden 8-8, ReLU, tanh out

Weights initialize from a zero-mean uniform fan-in scheme, reproducible by seed.
Checkpoints round-trip exactly (float64 npz plus a JSON header).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeError, Tape, Tensor

GENERATOR = "generator"
OUTCOME = "outcome"
MARGINAL_CRITIC = "marginal_critic"
PROJECTION_CRITIC = "projection_critic"

_ACTIVATIONS = {"elu", "relu"}
_OUTPUT_ACTIVATIONS = {"none", "tanh", "logistic"}

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    """Layer widths (input through output) plus activation choices."""

    widths: tuple[int, ...]
    hidden_activation: str = "elu"
    output_activation: str = "none"

    def __post_init__(self):
        if len(self.widths) < 2 or any(w <= 0 for w in self.widths):
            raise ValueError(f"invalid widths {self.widths}")
        if self.hidden_activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.hidden_activation!r}")
        if self.output_activation not in _OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")


def generator_architecture(noise_dim: int) -> Architecture:
    return Architecture((noise_dim, 16, 16, 1), "elu", "none")


def outcome_architecture(covariate_dim: int) -> Architecture:
    # inputs: covariates, scalar pseudo-confounder, treatment indicator
    return Architecture((covariate_dim + 2, 32, 32, 1), "elu", "none")


def marginal_critic_architecture() -> Architecture:
    return Architecture((1, 8, 8, 1), "relu", "logistic")


def projection_critic_architecture(covariate_dim: int) -> Architecture:
    return Architecture((covariate_dim, 8, 8, 1), "relu", "tanh")


@dataclass
class NetworkParams:
    """Weights and biases of one MLP, tagged with its role."""

    role: str
    architecture: Architecture
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def flat_arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.role,
            self.architecture,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


def init_params(architecture: Architecture, seed, role: str) -> NetworkParams:
    """Uniform(+-1/sqrt(fan_in)) initialization for all weights and biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = NetworkParams(role, architecture)
    widths = architecture.widths
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        params.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.biases.append(rng.uniform(-bound, bound, size=(fan_out,)))
    return params


def zero_params(architecture: Architecture, role: str) -> NetworkParams:
    params = NetworkParams(role, architecture)
    for fan_in, fan_out in zip(architecture.widths[:-1], architecture.widths[1:]):
        params.weights.append(np.zeros((fan_in, fan_out)))
        params.biases.append(np.zeros((fan_out,)))
    return params


# --------------------------------------------------------------- forward

def mlp_forward(tape: Tape, params: NetworkParams, x: Tensor, frozen: bool = False) -> Tensor:
    """Run the MLP on the tape; gradient flows to inputs and parameters.

    With frozen=True the weights enter as constants: gradient still flows to
    the inputs but none accumulates for the parameters.
    """
    wrap = tape.const if frozen else tape.param
    h = x
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = tape.affine(h, wrap(w), wrap(b))
        last = i == n_layers - 1
        act = params.architecture.output_activation if last else params.architecture.hidden_activation
        if last and act == "none":
            continue
        if act == "elu":
            h = tape.elu(h)
        elif act == "relu":
            h = tape.relu(h)
        elif act == "tanh":
            h = tape.tanh(h)
        elif act == "logistic":
            h = tape.logistic(h)
    return h


def mlp_forward_np(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Plain numpy forward pass (no gradient tracking), same arithmetic."""
    h = np.asarray(x, dtype=np.float64)
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        last = i == n_layers - 1
        act = params.architecture.output_activation if last else params.architecture.hidden_activation
        if last and act == "none":
            continue
        if act == "elu":
            ex = np.exp(np.minimum(h, 0.0))
            h = np.where(h >= 0.0, h, ex - 1.0)
        elif act == "relu":
            h = h * (h > 0.0)
        elif act == "tanh":
            h = np.tanh(h)
        elif act == "logistic":
            e = np.exp(-np.abs(h))
            h = np.where(h >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return h


def generator_forward(tape: Tape, params: NetworkParams, eta: Tensor) -> Tensor:
    """Map noise draws (n, l) to scalar pseudo-confounders (n, 1)."""
    if params.role != GENERATOR:
        raise ValueError(f"expected generator params, got {params.role!r}")
    if eta.data.ndim != 2 or eta.data.shape[1] != params.architecture.widths[0]:
        raise ShapeError(
            f"generator noise must be (n, {params.architecture.widths[0]}), "
            f"got {eta.data.shape}"
        )
    return mlp_forward(tape, params, eta)


def outcome_forward(
    tape: Tape, params: NetworkParams, x: Tensor, u_tilde: Tensor, t
) -> Tensor:
    """S-learner prediction: treatment enters as one extra input coordinate.

    `t` is either a scalar in {0, 1} applied to every row, or an (n, 1) tensor
    of per-row indicators.
    """
    if params.role != OUTCOME:
        raise ValueError(f"expected outcome params, got {params.role!r}")
    n = x.data.shape[0]
    if isinstance(t, Tensor):
        t_col = t
    else:
        t = float(t)
        if t not in (0.0, 1.0):
            raise ValueError(f"treatment must be 0 or 1, got {t}")
        t_col = tape.const(np.full((n, 1), t))
    inp = tape.concat([x, u_tilde, t_col])
    return mlp_forward(tape, params, inp)


def critic_forward(tape: Tape, params: NetworkParams, value: Tensor, frozen: bool = False) -> Tensor:
    """Bounded critic score; range set by the role's output activation."""
    if params.role not in (MARGINAL_CRITIC, PROJECTION_CRITIC):
        raise ValueError(f"expected critic params, got {params.role!r}")
    return mlp_forward(tape, params, value, frozen=frozen)


# ------------------------------------------------------------- checkpoints

def save_checkpoint(path, params_by_role: dict[str, NetworkParams]):
    """Write a versioned npz checkpoint; float64 arrays round-trip exactly."""
    meta = {"version": CHECKPOINT_VERSION, "roles": {}}
    arrays = {}
    for role, params in params_by_role.items():
        meta["roles"][role] = {
            "widths": list(params.architecture.widths),
            "hidden_activation": params.architecture.hidden_activation,
            "output_activation": params.architecture.output_activation,
            "n_layers": len(params.weights),
        }
        for i, (w, b) in enumerate(zip(params.weights, params.biases)):
            arrays[f"{role}__w{i}"] = w
            arrays[f"{role}__b{i}"] = b
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    np.savez(path, **arrays)


def load_checkpoint(path) -> dict[str, NetworkParams]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        out = {}
        for role, info in meta["roles"].items():
            arch = Architecture(
                tuple(info["widths"]),
                info["hidden_activation"],
                info["output_activation"],
            )
            params = NetworkParams(role, arch)
            for i in range(info["n_layers"]):
                params.weights.append(np.array(data[f"{role}__w{i}"]))
                params.biases.append(np.array(data[f"{role}__b{i}"]))
            out[role] = params
    return out
