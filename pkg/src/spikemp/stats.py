"""Closed-form and Monte Carlo analysis of membrane-potential initialization.

Three initialization strategies for the pre-spike membrane potential are
compared through the normalized potential x_i = mp1_i / v_th, with layer
inputs standing in as unit-variance zero-mean normals (the post-normalization
regime):

* ZERO -- mp0 = 0 every layer, so mp1_i = x_input and
  E[x] = 0, Var(x) = 1 / v_th^2.
* RANDOM -- mp0 = mp_random ~ U(0, c) independently per layer:
  E[x] = beta*c / (2*v_th), Var(x) = (beta^2*c^2/12 + 1) / v_th^2.
* AMP2_FUSION -- mp0 blends the previous layer's mp1 with fresh perturbation
  (coefficient alpha), giving the linear recursion
  mp1_i = beta*alpha*mp1_{i-1} + beta*(1-alpha)*r_i + x_i whose unrolled form
  is the geometric sum
  mp1_i = sum_{k=0}^{i-1} (beta*alpha)^k [beta*(1-alpha)*r_{i-k} + x_{i-k}]
          + (beta*alpha)^i * mp1_0.
  The mean limit is beta*c*(1-alpha) / (2*v_th*(1-beta*alpha)). The variance
  limit follows from the same geometric series (derived here, validated by
  Monte Carlo): Var(x) -> (beta^2*(1-alpha)^2*c^2/12 + 1)
  / ((1 - (beta*alpha)^2) * v_th^2).

The analysis treats mp1 as this pure linear recursion -- spiking and reset do
not enter, which is faithful to the mechanism since the handoff carries mp1,
not the post-reset mp2. The boundary value mp1_0 is the first layer's literal
computation beta*r_0 + x_0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from .neuron import NeuronConfig


class Strategy(Enum):
    ZERO = "zero"
    RANDOM = "random"
    AMP2_FUSION = "amp2"


@dataclass(frozen=True)
class InitStrategy:
    """An initialization strategy under a neuron configuration.

    Inputs are standard normal (E = 0, Var = 1), the stand-in for normalized
    features.
    """

    strategy: Strategy
    cfg: NeuronConfig = field(default_factory=NeuronConfig)
    x_distribution: str = "standard_normal"

    def __post_init__(self) -> None:
        if self.x_distribution != "standard_normal":
            raise ValueError(f"unsupported input distribution {self.x_distribution!r}")


def closed_form_limits(strategy: InitStrategy) -> dict:
    """Large-depth mean and variance of x = mp1 / v_th for a strategy."""
    cfg = strategy.cfg
    v2 = cfg.v_th**2
    if strategy.strategy is Strategy.ZERO:
        return {"mean_x": 0.0, "var_x": 1.0 / v2}
    if strategy.strategy is Strategy.RANDOM:
        mean = cfg.beta * cfg.c / (2.0 * cfg.v_th)
        var = (cfg.beta**2 * cfg.c**2 / 12.0 + 1.0) / v2
        return {"mean_x": mean, "var_x": var}
    ba = cfg.beta * cfg.alpha
    mean = cfg.beta * cfg.c * (1.0 - cfg.alpha) / (2.0 * cfg.v_th * (1.0 - ba))
    # Stationary variance of the linear recursion via the geometric series
    # over squared coefficients.
    var = (cfg.beta**2 * (1.0 - cfg.alpha) ** 2 * cfg.c**2 / 12.0 + 1.0) / (
        (1.0 - ba**2) * v2
    )
    return {"mean_x": mean, "var_x": var}


@dataclass
class MonteCarloResult:
    strategy: str
    depth: int
    samples: int
    mean_hat: float
    var_hat: float
    stderr: float
    var_stderr: float
    closed_form_mean: float
    closed_form_var: float


def monte_carlo_x(
    strategy: InitStrategy,
    depth: int,
    samples: int,
    rng: np.random.Generator,
) -> MonteCarloResult:
    """Simulate `samples` independent layer chains to depth i and summarize x_i.

    The simulation runs the same spike-free recursion the closed forms
    describe. stderr is the standard error of the mean; var_stderr is the
    moment-based standard error of the variance estimate.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if samples < 10_000:
        raise ValueError(f"samples must be >= 10^4, got {samples}")
    cfg = strategy.cfg
    kind = strategy.strategy

    if kind is Strategy.ZERO:
        mp1 = rng.standard_normal(samples)
        for _ in range(depth):
            mp1 = rng.standard_normal(samples)
    else:
        alpha = 0.0 if kind is Strategy.RANDOM else cfg.alpha
        r0 = rng.uniform(0.0, cfg.c, size=samples)
        mp1 = cfg.beta * r0 + rng.standard_normal(samples)
        for _ in range(depth):
            r = rng.uniform(0.0, cfg.c, size=samples)
            mp0 = alpha * mp1 + (1.0 - alpha) * r
            mp1 = cfg.beta * mp0 + rng.standard_normal(samples)

    x = mp1 / cfg.v_th
    mean_hat = float(x.mean())
    var_hat = float(x.var(ddof=1))
    stderr = float(x.std(ddof=1) / np.sqrt(samples))
    centered = x - mean_hat
    m4 = float(np.mean(centered**4))
    var_stderr = float(np.sqrt(max(m4 - var_hat**2, 0.0) / samples))
    cf = closed_form_limits(strategy)
    return MonteCarloResult(
        strategy=kind.value,
        depth=depth,
        samples=samples,
        mean_hat=mean_hat,
        var_hat=var_hat,
        stderr=stderr,
        var_stderr=var_stderr,
        closed_form_mean=cf["mean_x"],
        closed_form_var=cf["var_x"],
    )


ArrayLike = Union[float, np.ndarray]


def unrolled_recursion_oracle(
    cfg: NeuronConfig,
    mp_randoms: Sequence[ArrayLike],
    xs: Sequence[ArrayLike],
    mp1_0: ArrayLike,
) -> ArrayLike:
    """Evaluate the unrolled geometric-sum form of the membrane recursion.

    ``mp_randoms[j]`` and ``xs[j]`` are the draws feeding layer j+1 (element 0
    is the first step after the boundary value ``mp1_0``). Must agree with the
    iterative accumulation to tight tolerance; the two routes are kept
    independent on purpose.
    """
    if len(mp_randoms) != len(xs):
        raise ValueError(
            f"length mismatch: {len(mp_randoms)} perturbations vs {len(xs)} inputs"
        )
    i = len(xs)
    ba = cfg.beta * cfg.alpha
    total = np.asarray(mp1_0, dtype=np.float64) * ba**i
    for k in range(i):
        term = cfg.beta * (1.0 - cfg.alpha) * np.asarray(mp_randoms[i - 1 - k], dtype=np.float64)
        term = term + np.asarray(xs[i - 1 - k], dtype=np.float64)
        total = total + ba**k * term
    return total


def mc_result_to_row(res: MonteCarloResult) -> list:
    return [
        res.strategy,
        res.depth,
        res.samples,
        res.mean_hat,
        res.var_hat,
        res.stderr,
        res.closed_form_mean,
        res.closed_form_var,
    ]


CSV_HEADER = [
    "strategy",
    "depth",
    "samples",
    "mean_hat",
    "var_hat",
    "stderr",
    "closed_form_mean",
    "closed_form_var",
]


def write_mc_csv(path, results: Sequence[MonteCarloResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for res in results:
            writer.writerow(mc_result_to_row(res))


def parse_strategy(name: str, cfg: Optional[NeuronConfig] = None) -> InitStrategy:
    cfg = cfg if cfg is not None else NeuronConfig()
    try:
        kind = Strategy(name)
    except ValueError:
        raise ValueError(f"unknown strategy {name!r}; expected zero, random, or amp2") from None
    return InitStrategy(strategy=kind, cfg=cfg)
