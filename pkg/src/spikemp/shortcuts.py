"""Composable residual shortcut wrappers for spiking blocks.

Four topologies, distinguished by which signals the elementwise combine
``f`` joins:

==========  =======================  =============================
kind        skip operand             main-path operand
==========  =======================  =============================
VANILLA     input features           block output spikes
SEW         input spikes             block output spikes
MEMBRANE    input features           block output features (pre-act)
RMP         membrane potential mp1   block output features
==========  =======================  =============================

For RMP the skip carries the mp1 of the spiking layer at the block's entry;
a block that contains its entry spiking layer reports that mp1 on its output
bundle, otherwise the caller taps it just before the block and passes it in.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from . import tensor as T
from .tensor import ShapeMismatchError, Tensor


class Kind(Enum):
    VANILLA = "vanilla"
    SEW = "sew"
    MEMBRANE = "membrane"
    RMP = "rmp"


class Combine(Enum):
    ADD = "add"
    AND = "and"


@dataclass(frozen=True)
class ShortcutKind:
    kind: Kind
    combine: Combine = Combine.ADD


@dataclass
class Bundle:
    """Signals flowing through a shortcut region."""

    features: Tensor
    spikes: Optional[Tensor] = None
    mp1: Optional[Tensor] = None


class MissingBundleFieldError(ValueError):
    """A shortcut kind needed a bundle field that was not provided."""


def combine(sc: ShortcutKind, skip: Tensor, main: Tensor) -> Tensor:
    """Apply the elementwise combine f(skip, main)."""
    if skip.shape != main.shape:
        raise ShapeMismatchError(
            f"shortcut combine: shapes {skip.shape} and {main.shape} differ"
        )
    if sc.combine is Combine.ADD:
        return T.add(skip, main)
    # AND realized as elementwise product: exact logical AND on 0/1 spikes.
    return T.mul(skip, main)


def apply_shortcut(
    sc: ShortcutKind,
    block_fn: Callable[[Bundle], Bundle],
    bundle: Bundle,
) -> Bundle:
    """Run ``block_fn`` and merge its output with the skip path per kind."""
    out = block_fn(bundle)
    if sc.kind is Kind.VANILLA:
        if out.spikes is None:
            raise MissingBundleFieldError("vanilla shortcut needs block output spikes")
        merged = combine(sc, bundle.features, out.spikes)
        return Bundle(features=merged, spikes=out.spikes, mp1=out.mp1)
    if sc.kind is Kind.SEW:
        if bundle.spikes is None or out.spikes is None:
            raise MissingBundleFieldError("spike-element-wise shortcut needs spikes on both paths")
        merged = combine(sc, bundle.spikes, out.spikes)
        return Bundle(features=merged, spikes=merged, mp1=out.mp1)
    if sc.kind is Kind.MEMBRANE:
        merged = combine(sc, bundle.features, out.features)
        return Bundle(features=merged, spikes=out.spikes, mp1=out.mp1)
    # RMP: membrane potential of the entry spiking layer joins the block's
    # output features before the next accumulation.
    skip_mp = out.mp1 if out.mp1 is not None else bundle.mp1
    if skip_mp is None:
        raise MissingBundleFieldError("rmp shortcut needs an mp1 on the bundle or block output")
    merged = combine(sc, skip_mp, out.features)
    return Bundle(features=merged, spikes=out.spikes, mp1=skip_mp)
