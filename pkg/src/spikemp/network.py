"""Trainable spiking networks assembled from layer descriptors.

Two stock architectures:

* ``pointnet_tiny_spec`` -- shared per-point MLP (3 -> 32 -> 64 -> 128),
  symmetric max pool over points, classifier head.
* ``depth_mlp_spec`` -- a configurable-depth stack of uniform-width spiking
  blocks over per-point features, max pool, head. Block count is the depth
  knob for degradation studies; blocks can be wrapped in membrane-potential
  residual shortcuts.

Both run under either spiking policy. Under AMP2 each spiking layer receives
the previous spiking layer's mp1 (falling back to pure random init on shape
mismatch); under TWU the input is replicated T times, the classic LIF update
iterates per layer, and logits are averaged over timesteps.

Per-point processing flattens [B, N, C] activations to [B*N, C] so linear,
norm, and spike layers are shared across points; the pool restores [B, N, C]
and maxes over N. The membrane perturbation is drawn once per (spiking layer,
channel) and tiled across rows, so a permutation of input points cannot change
which random values any point sees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import tensor as T
from .neuron import (
    MembraneState,
    NeuronConfig,
    Policy,
    TWUState,
    amp2_forward,
    twu_step,
)
from .shortcuts import Combine, Kind, ShortcutKind, combine as combine_shortcut
from .tensor import GradTape, Tensor, backward, record_op


class SpecError(ValueError):
    """Malformed network spec; message names the offending layer index."""


# ---------------------------------------------------------------------------
# Layer descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Linear:
    in_features: int
    out_features: int


@dataclass(frozen=True)
class Norm:
    momentum: float = 0.1
    eps: float = 1e-5


@dataclass(frozen=True)
class Spike:
    cfg: Optional[NeuronConfig] = None  # None: use the spec-level config


@dataclass(frozen=True)
class ShortcutBegin:
    shortcut: ShortcutKind


@dataclass(frozen=True)
class ShortcutEnd:
    pass


@dataclass(frozen=True)
class MaxPoolPoints:
    pass


@dataclass(frozen=True)
class Head:
    classes: int


LayerSpec = Union[Linear, Norm, Spike, ShortcutBegin, ShortcutEnd, MaxPoolPoints, Head]


@dataclass
class NetworkSpec:
    """Declarative layer stack plus execution policy.

    ``timesteps`` only applies under TWU; AMP2 operates at a single timestep
    by construction. ``awp`` gates the membrane handoff between spiking
    layers (off = every layer uses pure random init).
    """

    layers: list
    neuron: NeuronConfig = field(default_factory=NeuronConfig)
    policy: Policy = Policy.AMP2
    timesteps: int = 1
    depth_blocks: int = 3
    awp: bool = True

    def validate(self) -> None:
        width: Optional[int] = None
        pools = 0
        head_seen = False
        shortcut_depth = 0
        for i, layer in enumerate(self.layers):
            if head_seen:
                raise SpecError(f"layer {i}: nothing may follow the head")
            if isinstance(layer, Linear):
                if width is not None and layer.in_features != width:
                    raise SpecError(
                        f"layer {i}: linear expects {layer.in_features} features "
                        f"but the chain carries {width}"
                    )
                width = layer.out_features
            elif isinstance(layer, Head):
                if width is None:
                    raise SpecError(f"layer {i}: head before any linear layer")
                if layer.classes < 2:
                    raise SpecError(f"layer {i}: head needs at least 2 classes")
                head_seen = True
            elif isinstance(layer, MaxPoolPoints):
                pools += 1
                if pools > 1:
                    raise SpecError(f"layer {i}: more than one point pool")
            elif isinstance(layer, ShortcutBegin):
                if shortcut_depth:
                    raise SpecError(f"layer {i}: nested shortcut regions")
                shortcut_depth += 1
            elif isinstance(layer, ShortcutEnd):
                if not shortcut_depth:
                    raise SpecError(f"layer {i}: shortcut end without begin")
                shortcut_depth -= 1
            elif not isinstance(layer, (Norm, Spike)):
                raise SpecError(f"layer {i}: unknown layer descriptor {layer!r}")
        if shortcut_depth:
            raise SpecError(f"layer {len(self.layers)}: unterminated shortcut region")
        if not head_seen:
            raise SpecError(f"layer {len(self.layers)}: spec has no head")
        if self.policy is Policy.AMP2 and self.timesteps != 1:
            raise SpecError("layer 0: timesteps must be 1 under the single-timestep policy")
        if self.timesteps < 1:
            raise SpecError("layer 0: timesteps must be >= 1")

    @property
    def classes(self) -> int:
        for layer in self.layers:
            if isinstance(layer, Head):
                return layer.classes
        raise SpecError("spec has no head")

    def spike_layer_count(self) -> int:
        return sum(isinstance(l, Spike) for l in self.layers)


# ---------------------------------------------------------------------------
# Fused differentiable primitives used by the executor
# ---------------------------------------------------------------------------


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    *,
    momentum: float = 0.1,
    eps: float = 1e-5,
    training: bool = True,
) -> Tensor:
    """Feature-wise batch normalization over the rows of an [M, C] tensor.

    Training mode normalizes with (biased) batch statistics and updates the
    running buffers in place with unbiased variance; eval mode normalizes
    with the running buffers.
    """
    xd = x.data
    m = xd.shape[0]
    if training:
        mean = xd.mean(axis=0)
        var = xd.var(axis=0)
        if m > 1:
            running_mean += momentum * (mean - running_mean)
            running_var += momentum * (var * m / (m - 1) - running_var)
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean) * inv_std
    out = gamma.data * xhat + beta.data

    gd = gamma.data

    if training:

        def bwd(g: np.ndarray):
            # d/dx of the batch-statistics normalization: remove the mean
            # gradient and the component along xhat before rescaling.
            dbeta = g.sum(axis=0)
            dgamma = (g * xhat).sum(axis=0)
            gx = (gd * inv_std) * (
                g - g.mean(axis=0) - xhat * (g * xhat).mean(axis=0)
            )
            return gx, dgamma, dbeta

    else:

        def bwd(g: np.ndarray):
            dbeta = g.sum(axis=0)
            dgamma = (g * xhat).sum(axis=0)
            gx = g * gd * inv_std
            return gx, dgamma, dbeta

    return record_op((x, gamma, beta), out, bwd)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of [B, K] logits against integer labels."""
    ld = logits.data
    b, k = ld.shape
    labels = np.asarray(labels)
    if labels.shape != (b,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {b}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(
            f"label out of range: got {int(labels.min())}..{int(labels.max())} for {k} classes"
        )
    shifted = ld - ld.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -log_probs[np.arange(b), labels].mean()

    probs = np.exp(log_probs)

    def bwd(g: np.ndarray):
        dl = probs.copy()
        dl[np.arange(b), labels] -= 1.0
        return (dl * (g.item() / b),)

    return record_op((logits,), np.asarray(loss), bwd)


# ---------------------------------------------------------------------------
# Runtime network
# ---------------------------------------------------------------------------


class _LinearLayer:
    def __init__(self, desc: Linear, rng: np.random.Generator) -> None:
        bound = 1.0 / np.sqrt(desc.in_features)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(desc.in_features, desc.out_features)))
        self.bias = Tensor(rng.uniform(-bound, bound, size=(desc.out_features,)))

    def __call__(self, x: Tensor) -> Tensor:
        return T.add_bias(T.matmul(x, self.weight), self.bias)

    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]


class _NormLayer:
    def __init__(self, desc: Norm, width: int) -> None:
        self.gamma = Tensor(np.ones(width))
        self.beta = Tensor(np.zeros(width))
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.momentum = desc.momentum
        self.eps = desc.eps

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            momentum=self.momentum,
            eps=self.eps,
            training=training,
        )

    def params(self) -> list[Tensor]:
        return [self.gamma, self.beta]


class _SpikeLayer:
    def __init__(self, cfg: NeuronConfig, index: int) -> None:
        self.cfg = cfg
        self.index = index


@dataclass
class ForwardTrace:
    """Everything observable from one forward pass.

    ``states`` has one entry per spiking layer: a MembraneState under AMP2,
    the final-timestep TWUState under TWU. ``spike_ones``/``spike_elems``
    count emitted ones and total neuron evaluations (timesteps included), the
    raw material for firing rates.
    """

    states: list
    logits: Tensor
    spike_ones: list[float] = field(default_factory=list)
    spike_elems: list[int] = field(default_factory=list)

    @property
    def spike_counts(self) -> list[float]:
        return list(self.spike_ones)


class Network:
    """Executable layer stack; parameters live on the runtime layer objects."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator) -> None:
        spec.validate()
        self.spec = spec
        self.runtime: list = []
        width: Optional[int] = None
        spike_idx = 0
        for i, layer in enumerate(spec.layers):
            if isinstance(layer, Linear):
                self.runtime.append(_LinearLayer(layer, rng))
                width = layer.out_features
            elif isinstance(layer, Norm):
                if width is None:
                    raise SpecError(f"layer {i}: norm before any linear layer")
                self.runtime.append(_NormLayer(layer, width))
            elif isinstance(layer, Spike):
                cfg = layer.cfg if layer.cfg is not None else spec.neuron
                self.runtime.append(_SpikeLayer(cfg, spike_idx))
                spike_idx += 1
            elif isinstance(layer, Head):
                assert width is not None
                self.runtime.append(_LinearLayer(Linear(width, layer.classes), rng))
            else:
                self.runtime.append(layer)  # markers: shortcut begin/end, pool

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for layer in self.runtime:
            if isinstance(layer, (_LinearLayer, _NormLayer)):
                out.extend(layer.params())
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def build_network(spec: NetworkSpec, rng: np.random.Generator) -> Network:
    """Validate the spec and initialize parameters (uniform fan-in scaling)."""
    return Network(spec, rng)


def _as_rows(batch: Tensor) -> tuple[Tensor, Optional[int], int]:
    """Flatten a [B, N, F] point batch to [B*N, F] rows; pass [B, F] through."""
    if batch.data.ndim == 3:
        b, n, f = batch.shape
        return T.reshape(batch, (b * n, f)), n, b
    if batch.data.ndim == 2:
        return batch, None, batch.shape[0]
    raise T.ShapeMismatchError(f"batch must be rank 2 or 3, got shape {batch.shape}")


def _tiled_mp_random(
    cfg: NeuronConfig, shape: tuple, rng: np.random.Generator
) -> np.ndarray:
    # One draw per channel, tiled across rows: point order cannot influence
    # which perturbation a point sees.
    per_channel = rng.uniform(0.0, cfg.c, size=(shape[-1],))
    return np.broadcast_to(per_channel, shape).copy()


def _forward_amp2(
    net: Network,
    batch: Tensor,
    train_mode: bool,
    rng: np.random.Generator,
    *,
    soft_spikes: bool = False,
) -> ForwardTrace:
    spec = net.spec
    h, n_points, b = _as_rows(batch)
    trace = ForwardTrace(states=[], logits=h)
    last_mp1: Optional[Tensor] = None
    last_spikes: Optional[Tensor] = None
    shortcut: Optional[ShortcutKind] = None
    skip_features: Optional[Tensor] = None
    skip_spikes: Optional[Tensor] = None
    entry_mp1: Optional[Tensor] = None

    for layer in net.runtime:
        if isinstance(layer, _LinearLayer):
            h = layer(h)
        elif isinstance(layer, _NormLayer):
            h = layer(h, train_mode)
        elif isinstance(layer, _SpikeLayer):
            cfg = layer.cfg
            prev = last_mp1 if spec.awp else None
            mp_rand = _tiled_mp_random(cfg, h.shape, rng)
            spikes, state = amp2_forward(
                cfg, h, prev, mp_random=mp_rand, layer_index=layer.index, soft=soft_spikes
            )
            trace.states.append(state)
            trace.spike_ones.append(float(np.count_nonzero(spikes.data == 1.0)))
            trace.spike_elems.append(spikes.size)
            last_mp1 = state.mp1
            last_spikes = spikes
            if shortcut is not None and entry_mp1 is None:
                entry_mp1 = state.mp1
            h = spikes
        elif isinstance(layer, ShortcutBegin):
            shortcut = layer.shortcut
            skip_features = h
            skip_spikes = last_spikes
            entry_mp1 = None
        elif isinstance(layer, ShortcutEnd):
            assert shortcut is not None
            h = _merge_shortcut(shortcut, h, skip_features, skip_spikes, entry_mp1, last_spikes)
            shortcut = None
        elif isinstance(layer, MaxPoolPoints):
            if n_points is None:
                raise T.ShapeMismatchError("point pool on a flat [B, F] batch")
            h = T.reshape(h, (b, n_points, h.shape[-1]))
            h = T.max_over_axis(h, axis=1)
            n_points = None
        else:  # pragma: no cover - validate() rejects anything else
            raise SpecError(f"unexpected runtime layer {layer!r}")
    trace.logits = h
    return trace


def _merge_shortcut(
    sc: ShortcutKind,
    h: Tensor,
    skip_features: Optional[Tensor],
    skip_spikes: Optional[Tensor],
    entry_mp1: Optional[Tensor],
    block_spikes: Optional[Tensor],
) -> Tensor:
    if sc.kind is Kind.RMP:
        if entry_mp1 is None:
            raise SpecError("rmp shortcut region contains no spiking layer")
        return combine_shortcut(sc, entry_mp1, h)
    if sc.kind is Kind.MEMBRANE:
        assert skip_features is not None
        return combine_shortcut(sc, skip_features, h)
    if sc.kind is Kind.VANILLA:
        assert skip_features is not None
        if block_spikes is None:
            raise SpecError("vanilla shortcut region produced no spikes")
        return combine_shortcut(sc, skip_features, block_spikes)
    # SEW
    if skip_spikes is None or block_spikes is None:
        raise SpecError("spike-element-wise shortcut needs spikes on both paths")
    return combine_shortcut(sc, skip_spikes, block_spikes)


def _forward_twu(
    net: Network,
    batch: Tensor,
    train_mode: bool,
    rng: np.random.Generator,
    *,
    soft_spikes: bool = False,
) -> ForwardTrace:
    spec = net.spec
    t_steps = spec.timesteps
    n_spikes = spec.spike_layer_count()
    membranes: list[Optional[Tensor]] = [None] * n_spikes
    states: list[Optional[TWUState]] = [None] * n_spikes
    ones = [0.0] * n_spikes
    elems = [0] * n_spikes
    logits_sum: Optional[Tensor] = None

    for t in range(1, t_steps + 1):
        h, n_points, b = _as_rows(batch)
        shortcut: Optional[ShortcutKind] = None
        skip_features: Optional[Tensor] = None
        skip_spikes: Optional[Tensor] = None
        entry_mp: Optional[Tensor] = None
        last_spikes: Optional[Tensor] = None
        for layer in net.runtime:
            if isinstance(layer, _LinearLayer):
                h = layer(h)
            elif isinstance(layer, _NormLayer):
                h = layer(h, train_mode)
            elif isinstance(layer, _SpikeLayer):
                idx = layer.index
                h_prev = membranes[idx]
                if h_prev is None or h_prev.shape != h.shape:
                    h_prev = T.zeros(h.shape)
                spikes, state = twu_step(layer.cfg, h_prev, h, t=t, soft=soft_spikes)
                membranes[idx] = state.h
                states[idx] = state
                ones[idx] += float(np.count_nonzero(spikes.data == 1.0))
                elems[idx] += spikes.size
                last_spikes = spikes
                if shortcut is not None and entry_mp is None:
                    entry_mp = state.u
                h = spikes
            elif isinstance(layer, ShortcutBegin):
                shortcut = layer.shortcut
                skip_features = h
                skip_spikes = last_spikes
                entry_mp = None
            elif isinstance(layer, ShortcutEnd):
                assert shortcut is not None
                h = _merge_shortcut(shortcut, h, skip_features, skip_spikes, entry_mp, last_spikes)
                shortcut = None
            elif isinstance(layer, MaxPoolPoints):
                if n_points is None:
                    raise T.ShapeMismatchError("point pool on a flat [B, F] batch")
                h = T.reshape(h, (b, n_points, h.shape[-1]))
                h = T.max_over_axis(h, axis=1)
                n_points = None
            else:  # pragma: no cover
                raise SpecError(f"unexpected runtime layer {layer!r}")
        logits_sum = h if logits_sum is None else T.add(logits_sum, h)

    assert logits_sum is not None
    logits = T.scale(logits_sum, 1.0 / t_steps)
    trace = ForwardTrace(states=list(states), logits=logits)
    trace.spike_ones = ones
    trace.spike_elems = elems
    return trace


def forward(
    net: Network,
    batch: Tensor,
    train_mode: bool,
    rng: np.random.Generator,
    *,
    soft_spikes: bool = False,
) -> ForwardTrace:
    """Run the network on a [B, N, F] point batch or a flat [B, F] batch."""
    if net.spec.policy is Policy.AMP2:
        return _forward_amp2(net, batch, train_mode, rng, soft_spikes=soft_spikes)
    return _forward_twu(net, batch, train_mode, rng, soft_spikes=soft_spikes)


def loss_and_grad(
    net: Network,
    batch: Tensor,
    labels: np.ndarray,
    rng: np.random.Generator,
) -> tuple[float, ForwardTrace]:
    """Cross-entropy loss with gradients populated on every parameter."""
    net.zero_grad()
    with GradTape() as tape:
        trace = forward(net, batch, train_mode=True, rng=rng)
        loss = softmax_cross_entropy(trace.logits, labels)
    backward(tape, loss)
    return loss.item(), trace


# ---------------------------------------------------------------------------
# Stock architectures
# ---------------------------------------------------------------------------


def pointnet_tiny_spec(
    classes: int,
    neuron: Optional[NeuronConfig] = None,
    *,
    policy: Policy = Policy.AMP2,
    timesteps: int = 1,
    widths: Sequence[int] = (32, 64, 128),
    head_width: int = 64,
    awp: bool = True,
) -> NetworkSpec:
    """Shared per-point MLP -> max pool -> classifier head.

    The trunk's final stage stays real-valued (linear + norm, no spike): a
    256-point OR over binary spikes saturates to all-ones, so the symmetric
    pool must see the normalized features instead. Spiking resumes in the
    head.
    """
    neuron = neuron if neuron is not None else NeuronConfig(policy=policy)
    layers: list = []
    prev = 3
    for w in widths[:-1]:
        layers += [Linear(prev, w), Norm(), Spike()]
        prev = w
    layers += [Linear(prev, widths[-1]), Norm(), MaxPoolPoints()]
    layers += [Linear(widths[-1], head_width), Norm(), Spike(), Head(classes)]
    return NetworkSpec(
        layers=layers,
        neuron=neuron,
        policy=policy,
        timesteps=timesteps,
        depth_blocks=len(widths),
        awp=awp,
    )


def depth_mlp_spec(
    classes: int,
    neuron: Optional[NeuronConfig] = None,
    *,
    policy: Policy = Policy.AMP2,
    timesteps: int = 1,
    depth_blocks: int = 3,
    width: int = 64,
    head_width: Optional[int] = None,
    use_rmp: bool = True,
    rmp: ShortcutKind = ShortcutKind(Kind.RMP, Combine.ADD),
    merge_post_norm: bool = False,
    awp: bool = True,
    in_features: int = 3,
    pool_points: bool = True,
) -> NetworkSpec:
    """Uniform-width spiking block stack with optional residual membrane shortcuts.

    Each block is spike -> linear (-> merge) -> norm; the membrane skip taps
    the block's entry spiking layer. With ``merge_post_norm`` the skip joins
    after the block's norm instead of before it. The trunk ends on normalized
    real features so the point pool does not saturate (see pointnet_tiny_spec).
    """
    if depth_blocks < 1:
        raise SpecError("layer 0: depth_blocks must be >= 1")
    head_width = head_width if head_width is not None else max(classes, width // 2)
    neuron = neuron if neuron is not None else NeuronConfig(policy=policy)
    layers: list = [Linear(in_features, width), Norm()]
    for _ in range(depth_blocks):
        if use_rmp:
            if merge_post_norm:
                layers += [ShortcutBegin(rmp), Spike(), Linear(width, width), Norm(), ShortcutEnd()]
            else:
                layers += [ShortcutBegin(rmp), Spike(), Linear(width, width), ShortcutEnd(), Norm()]
        else:
            layers += [Spike(), Linear(width, width), Norm()]
    if pool_points:
        layers += [MaxPoolPoints()]
    layers += [Linear(width, head_width), Norm(), Spike(), Head(classes)]
    return NetworkSpec(
        layers=layers,
        neuron=neuron,
        policy=policy,
        timesteps=timesteps,
        depth_blocks=depth_blocks,
        awp=awp,
    )
