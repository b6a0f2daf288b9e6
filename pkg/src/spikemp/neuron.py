"""Leaky integrate-and-fire neurons: timestep-wise updates and activation-wise
membrane potential propagation.

Two spiking policies share one configuration type:

* TWU -- the conventional timestep-wise update. Per step t:
  ``u = h_prev + x``, ``spike = step(u - v_th)``,
  ``h = beta * u * (1 - spike) + v_th * spike``.

* AMP2 -- single-timestep update where the membrane potential propagates
  between spatially adjacent spiking layers instead of across time:
  ``mp0 = alpha * mp1_prev + (1 - alpha) * mp_random`` (or pure ``mp_random``
  when no predecessor exists), ``mp1 = beta * mp0 + x``, spike thresholding on
  ``mp1 / v_th``, reset ``mp2 = mp1 * (1 - spike)``. ``mp1`` (not ``mp2``) is
  what hands off to the next spiking layer.

Spike emissions are non-differentiable; every emission records a tanh-based
surrogate backward rule ``g'(x) = k * sech^2(k * (x - c)) / (2 * tanh(k*c))``
so gradients can flow. ``g`` itself (the smooth companion used for gradient
checking) is ``g(x) = (tanh(k*(x - c)) + tanh(k*c)) / (2 * tanh(k*c))``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Union

import numpy as np

from . import tensor as T
from .tensor import ShapeMismatchError, Tensor


class Policy(Enum):
    TWU = "twu"
    AMP2 = "amp2"


class ThresholdMode(Enum):
    """Firing rule for AMP2 emissions.

    MINUS_C fires on ``mp1 / v_th >= c`` (implicit-threshold form); PLAIN
    fires on ``mp1 / v_th >= 0``. Both are first-class: the two published
    statements of the rule disagree, so neither is guessed to be canonical.
    """

    MINUS_C = "minus_c"
    PLAIN = "plain"


class HandoffMismatch(Enum):
    """What to do when a handed-off mp1 does not match the layer's shape."""

    RANDOM_INIT = "random_init"  # fall back to the no-predecessor branch
    BROADCAST_MEAN = "broadcast_mean"  # broadcast scalar mean of mp1_prev
    ERROR = "error"


@dataclass(frozen=True)
class NeuronConfig:
    """Constants and policy switches governing one spiking layer.

    Defaults are the reference operating point: k=5, c=0.5, beta=0.25,
    alpha=0.8, v_th=1.0.
    """

    k: float = 5.0
    c: float = 0.5
    beta: float = 0.25
    alpha: float = 0.8
    v_th: float = 1.0
    policy: Policy = Policy.AMP2
    spike_threshold_mode: ThresholdMode = ThresholdMode.MINUS_C
    handoff_mismatch: HandoffMismatch = HandoffMismatch.RANDOM_INIT

    def __post_init__(self) -> None:
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if not 0.0 < self.c <= 1.0:
            raise ValueError(f"c must be in (0, 1], got {self.c}")
        # beta = 0 is admitted (memoryless limit) even though typical
        # operating points sit strictly inside (0, 1).
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must be in [0, 1), got {self.beta}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not self.v_th > 0:
            raise ValueError(f"v_th must be positive, got {self.v_th}")
        # k*c > 0 keeps tanh(k*c), the surrogate denominator, nonzero.
        assert self.k * self.c > 0


@dataclass
class MembraneState:
    """Per-layer membrane record for one AMP2 forward pass.

    ``mp2 == mp1 * (1 - spikes)`` holds elementwise exactly; spikes are
    exactly 0/1 under hard emission (in [0, 1] under the smooth stand-in).
    """

    mp0: Tensor
    mp1: Tensor
    mp2: Tensor
    spikes: Tensor
    layer_index: int = 0


@dataclass
class TWUState:
    """Membrane state of a TWU layer after one timestep.

    Wherever a spike fired, ``h == v_th``; elsewhere ``h == beta * u``.
    """

    u: Tensor
    h: Tensor
    t: int = 0


def _tanh_kc(cfg: NeuronConfig) -> float:
    return float(np.tanh(cfg.k * cfg.c))


def g_prime_array(cfg: NeuronConfig, x: np.ndarray) -> np.ndarray:
    """Surrogate derivative on raw arrays: k * sech^2(k*(x-c)) / (2*tanh(k*c)).

    sech is computed as 2*exp(-|z|) / (1 + exp(-2|z|)): accurate to a few ulp
    deep into the saturated tails (1 - tanh^2 would cancel catastrophically
    there) and underflowing cleanly to zero instead of overflowing.
    """
    z = np.abs(cfg.k * (np.asarray(x, dtype=np.float64) - cfg.c))
    ez = np.exp(-z)
    sech = 2.0 * ez / (1.0 + ez * ez)
    return cfg.k * sech * sech / (2.0 * _tanh_kc(cfg))


def surrogate_g(cfg: NeuronConfig, x: Tensor) -> Tensor:
    """Smooth spike stand-in g(x), differentiable on the tape.

    g(0) = 0, g(c) = 1/2, g(2c) = 1; strictly increasing.
    """
    denom = 2.0 * _tanh_kc(cfg)
    inner = T.tanh(T.scale(T.add(x, -cfg.c), cfg.k))
    return T.scale(T.add(inner, _tanh_kc(cfg)), 1.0 / denom)


def surrogate_g_prime(cfg: NeuronConfig, x: Tensor) -> Tensor:
    """Analytic g'(x) as a plain tensor (no backward rule of its own)."""
    return Tensor(g_prime_array(cfg, x.data))


def _emit(cfg: NeuronConfig, x_scaled: Tensor, theta: float, soft: bool) -> Tensor:
    """Spike emission on normalized potential, hard step or smooth stand-in.

    The hard step carries g' evaluated at the same normalized potential as
    its backward rule.
    """
    if soft:
        return surrogate_g(cfg, x_scaled)
    return T.heaviside_shifted(x_scaled, theta, surrogate=lambda v: g_prime_array(cfg, v))


def twu_step(
    cfg: NeuronConfig, h_prev: Tensor, x: Tensor, *, t: int = 0, soft: bool = False
) -> tuple[Tensor, TWUState]:
    """One timestep of the conventional LIF update: accumulate, emit, reset."""
    if h_prev.shape != x.shape:
        raise ShapeMismatchError(f"twu_step: shapes {h_prev.shape} and {x.shape} differ")
    u = T.add(h_prev, x)
    x_norm = T.scale(u, 1.0 / cfg.v_th)
    if soft:
        # Shift so the smooth stand-in is centered on the firing threshold.
        spikes = surrogate_g(cfg, T.add(x_norm, cfg.c - 1.0))
    else:
        # Fires at u >= v_th. The surrogate is re-centered on that boundary
        # (g' peaks where the hard step actually switches).
        spikes = T.heaviside_shifted(
            x_norm, 1.0, surrogate=lambda v: g_prime_array(cfg, v - 1.0 + cfg.c)
        )
    one_minus_s = T.add(T.scale(spikes, -1.0), 1.0)
    h = T.add(T.mul(T.scale(u, cfg.beta), one_minus_s), T.scale(spikes, cfg.v_th))
    return spikes, TWUState(u=u, h=h, t=t)


def run_twu_sequence(
    cfg: NeuronConfig, xs: list[Tensor], *, soft: bool = False
) -> tuple[list[Tensor], TWUState]:
    """Iterate twu_step over a length-T input sequence from a zero membrane."""
    if len(xs) == 0:
        raise ValueError("run_twu_sequence: empty input sequence")
    h = T.zeros(xs[0].shape)
    spike_train: list[Tensor] = []
    state: Optional[TWUState] = None
    for t, x in enumerate(xs, start=1):
        spikes, state = twu_step(cfg, h, x, t=t, soft=soft)
        spike_train.append(spikes)
        h = state.h
    assert state is not None
    return spike_train, state


def sample_mp_random(
    cfg: NeuronConfig, shape, rng: np.random.Generator
) -> np.ndarray:
    """Draw the uniform membrane perturbation on (0, c) for the given shape."""
    return rng.uniform(0.0, cfg.c, size=shape)


def _resolve_handoff(
    cfg: NeuronConfig, x: Tensor, mp1_prev: Optional[Tensor]
) -> Optional[Tensor]:
    if mp1_prev is None or mp1_prev.shape == x.shape:
        return mp1_prev
    if cfg.handoff_mismatch is HandoffMismatch.RANDOM_INIT:
        return None
    if cfg.handoff_mismatch is HandoffMismatch.BROADCAST_MEAN:
        # Scalar summary of the predecessor's membrane; no gradient flows
        # through this broadcast.
        return T.full(x.shape, float(np.mean(mp1_prev.data)))
    raise ShapeMismatchError(
        f"amp2_forward: handed-off mp1 shape {mp1_prev.shape} does not match input {x.shape}"
    )


def amp2_forward(
    cfg: NeuronConfig,
    x: Tensor,
    mp1_prev: Optional[Tensor],
    rng: Optional[np.random.Generator] = None,
    *,
    mp_random: Union[Tensor, np.ndarray, None] = None,
    layer_index: int = 0,
    soft: bool = False,
) -> tuple[Tensor, MembraneState]:
    """Single-timestep spiking update with membrane handoff from the previous layer.

    ``mp_random`` overrides the uniform draw (for reproducing specific
    trajectories); otherwise it is sampled from ``rng``. The returned state
    carries ``mp1`` for handoff to the next spiking layer; ``mp2`` is kept for
    instrumentation only and is never propagated.
    """
    if mp_random is None:
        if rng is None:
            raise ValueError("amp2_forward: need rng when mp_random is not given")
        mp_random_t = Tensor(sample_mp_random(cfg, x.shape, rng))
    elif isinstance(mp_random, Tensor):
        mp_random_t = mp_random
    else:
        mp_random_t = Tensor(np.broadcast_to(np.asarray(mp_random, dtype=np.float64), x.shape).copy())
    if mp_random_t.shape != x.shape:
        raise ShapeMismatchError(
            f"amp2_forward: mp_random shape {mp_random_t.shape} does not match input {x.shape}"
        )

    prev = _resolve_handoff(cfg, x, mp1_prev)
    if prev is None:
        mp0 = mp_random_t
    else:
        mp0 = T.add(T.scale(prev, cfg.alpha), T.scale(mp_random_t, 1.0 - cfg.alpha))

    mp1 = T.add(T.scale(mp0, cfg.beta), x)
    x_scaled = T.scale(mp1, 1.0 / cfg.v_th)
    theta = cfg.c if cfg.spike_threshold_mode is ThresholdMode.MINUS_C else 0.0
    spikes = _emit(cfg, x_scaled, theta, soft)
    # Reset stage, off the tape: mp2 is recorded but never consumed downstream.
    mp2 = Tensor(mp1.data * (1.0 - spikes.data))
    state = MembraneState(mp0=mp0, mp1=mp1, mp2=mp2, spikes=spikes, layer_index=layer_index)
    return spikes, state


def amp2_backward_factor(cfg: NeuronConfig, mp1: Tensor) -> Tensor:
    """Local gradient factor from spike back to the initialized membrane.

    grad(mp0) = grad(spike) * g'(mp1 / v_th) * beta / v_th, elementwise. The
    tape composes this automatically during backprop; this standalone form
    exists for verification and analysis.
    """
    return Tensor(g_prime_array(cfg, mp1.data / cfg.v_th) * cfg.beta / cfg.v_th)


def with_policy(cfg: NeuronConfig, policy: Policy) -> NeuronConfig:
    return replace(cfg, policy=policy)
