"""
Named parameter tables.

Every network component declares its parameters as ``name -> (shape, fan_in)``;
values live in a plain ``Dict[str, np.ndarray]`` so checkpoints, optimizers and
tapes all see the same flat, ordered mapping.
"""

from typing import Dict, Mapping, Tuple

import numpy as np

from mocap_text.core.tensor import GradientTape, Tensor

ParameterSpec = Dict[str, Tuple[Tuple[int, ...], int]]
Parameters = Dict[str, np.ndarray]


def initialize(spec: ParameterSpec, seed: int) -> Parameters:
    """
    Draw every parameter uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)].

    Args:
        spec (ParameterSpec): Shapes and fan-in per name, in draw order
        seed (int): Generator seed

    Returns:
        Parameters: Fresh float64 arrays keyed by name
    """
    rng = np.random.default_rng(seed)
    params: Parameters = {}
    for name, (shape, fan_in) in spec.items():
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def parameter_count(params: Mapping[str, np.ndarray]) -> int:
    return int(sum(int(np.prod(v.shape)) for v in params.values()))


def spec_count(spec: ParameterSpec) -> int:
    return int(sum(int(np.prod(shape)) for shape, _ in spec.values()))


def watch_all(tape: GradientTape, params: Mapping[str, np.ndarray]) -> Dict[str, Tensor]:
    """Register every parameter on ``tape`` as a leaf"""
    return {name: tape.watch(value) for name, value in params.items()}


def constant_all(params: Mapping[str, np.ndarray]) -> Dict[str, Tensor]:
    """Wrap parameters as untracked tensors for inference"""
    return {name: Tensor(value) for name, value in params.items()}


def gradients_by_name(
    watched: Mapping[str, Tensor], grads: Mapping[int, Tensor]
) -> Parameters:
    """Re-key tape gradients from leaf ids to parameter names"""
    return {name: grads[t.node_id].data for name, t in watched.items()}
