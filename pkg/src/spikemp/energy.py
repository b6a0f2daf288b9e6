"""Inference energy model and firing-rate instrumentation.

Costs follow the standard 32-bit floating point estimates: 4.6 pJ per
multiply-accumulate (MAC) and 0.9 pJ per accumulate (AC). For activations of
extent T x B x C x N:

* timestep-wise LIF:       E = T * B * C * N * E_MAC
* single-pass add-combine: E = B * C * N * (E_AC + 2 * E_MAC)
* single-pass mul-combine: E = 3 * B * C * N * E_MAC

so the add-combine single-pass update beats timestep-wise LIF once T >= 3.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Sequence

E_MAC_PJ = 4.6
E_AC_PJ = 0.9


@dataclass
class EnergyReport:
    t: int
    b: int
    c_channels: int
    n: int
    e_mac_pj: float = E_MAC_PJ
    e_ac_pj: float = E_AC_PJ
    lif_pj: float = 0.0
    amp2_add_pj: float = 0.0
    amp2_mul_pj: float = 0.0
    per_layer_firing_rate: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def estimate_energy(
    t: int,
    b: int,
    c_channels: int,
    n: int,
    *,
    e_mac_pj: float = E_MAC_PJ,
    e_ac_pj: float = E_AC_PJ,
) -> EnergyReport:
    """Picojoule totals for one inference over the given activation extents."""
    for name, v in (("t", t), ("b", b), ("c_channels", c_channels), ("n", n)):
        if v < 1:
            raise ValueError(f"extent {name} must be >= 1, got {v}")
    bcn = float(b) * float(c_channels) * float(n)
    return EnergyReport(
        t=t,
        b=b,
        c_channels=c_channels,
        n=n,
        e_mac_pj=e_mac_pj,
        e_ac_pj=e_ac_pj,
        lif_pj=float(t) * bcn * e_mac_pj,
        amp2_add_pj=bcn * (e_ac_pj + 2.0 * e_mac_pj),
        amp2_mul_pj=3.0 * bcn * e_mac_pj,
    )


def add_crossover_timestep(e_mac_pj: float = E_MAC_PJ, e_ac_pj: float = E_AC_PJ) -> int:
    """Smallest integer T at which timestep-wise LIF costs more than add-combine."""
    per_element_add = e_ac_pj + 2.0 * e_mac_pj
    t = 1
    while t * e_mac_pj <= per_element_add:
        t += 1
    return t


def complexity_counts(t: int, b: int, c: int, n: int) -> dict:
    """Symbolic element counts behind the asymptotic space/time comparison.

    Constants here are implementation-measured conventions: timestep LIF
    stores membrane plus spike per timestep (2*T*B*C*N cells), the
    single-pass update stores membrane plus spike once (2*B*C*N), ReLU
    stores activations only.
    """
    bcn = b * c * n
    return {
        "relu": {"space": bcn, "time": bcn},
        "lif_timestep": {"space": 2 * t * bcn, "time": t * bcn},
        "lif_single_pass": {"space": 2 * bcn, "time": bcn},
    }


def measure_firing_rates(trace) -> list[float]:
    """Per-spiking-layer firing rates from one forward pass.

    rate = (number of emitted 1-spikes) / (neurons * batch * timesteps).
    ``trace`` is any object exposing ``spike_ones`` and ``spike_elems``.
    """
    ones = list(trace.spike_ones)
    elems = list(trace.spike_elems)
    if not ones:
        raise ValueError("trace contains no spiking layers")
    return [o / e for o, e in zip(ones, elems)]


def block_average_rates(rates: Sequence[float], groups: Sequence[Sequence[int]]) -> list[float]:
    """Arithmetic-mean firing rate per named group of layer indices."""
    out = []
    for group in groups:
        if len(group) == 0:
            raise ValueError("empty layer group")
        out.append(sum(rates[i] for i in group) / len(group))
    return out
