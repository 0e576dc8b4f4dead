"""Random-search hyperparameter spaces.

A space maps each hyperparameter to a ``Rule``. ``sample_hparams`` walks the
rules in a fixed order so a given rng state always yields the same config.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class HparamError(ValueError):
    pass


KINDS = ("fixed", "log10_uniform", "log2_uniform", "log2_uniform_int", "uniform", "choice")


@dataclass(frozen=True)
class Rule:
    """One sampling rule. ``low``/``high`` are exponents for the log kinds."""

    kind: str
    default: object
    low: float = 0.0
    high: float = 0.0
    choices: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise HparamError(f"unknown rule kind {self.kind!r}")
        if self.kind == "choice" and not self.choices:
            raise HparamError("choice rule needs at least one option")
        if self.kind not in ("fixed", "choice") and not self.low <= self.high:
            raise HparamError(f"range [{self.low}, {self.high}] is not ordered")

    def sample(self, rng):
        if self.kind == "fixed":
            return self.default
        if self.kind == "choice":
            return self.choices[int(rng.integers(len(self.choices)))]
        u = float(rng.uniform(self.low, self.high))
        if self.kind == "uniform":
            return u
        if self.kind == "log10_uniform":
            return 10.0 ** u
        if self.kind == "log2_uniform":
            return 2.0 ** u
        return int(round(2.0 ** u))


def fixed(value):
    return Rule("fixed", value)


@dataclass(frozen=True)
class HparamSpace:
    dataset: str
    rules: dict = field(default_factory=dict)

    def defaults(self):
        return {name: rule.default for name, rule in self.rules.items()}

    def with_rules(self, **rules):
        """Copy of the space with some rules swapped (plain values become fixed)."""
        merged = dict(self.rules)
        for name, rule in rules.items():
            merged[name] = rule if isinstance(rule, Rule) else fixed(rule)
        return replace(self, rules=merged)


# knobs every space shares; none of them are searched
_COMMON = {
    "momentum": fixed(0.9),
    "optimizer": fixed("sgd_momentum"),
    "init_scale": fixed(1.0),
    "activation": fixed("relu"),
    "averaging": fixed("arithmetic"),
}

SPIRALS = HparamSpace("spirals", {
    "lr": Rule("log10_uniform", 0.01, -3.5, -1.5),
    "batch_size": Rule("log2_uniform_int", 512, 3, 9),
    "weight_decay": Rule("log10_uniform", 0.001, -6, -2),
    "depth": Rule("choice", 3, choices=(3, 4, 5)),
    "width": Rule("log2_uniform_int", 256, 6, 10),
    "tau": Rule("uniform", 1.0, 0, 1),
    "dropout": Rule("choice", 0.0, choices=(0.0, 0.1, 0.5)),
    **_COMMON,
})

CMNIST = HparamSpace("cmnist", {
    "lr": Rule("log10_uniform", 0.001, -4.5, -3.5),
    "batch_size": Rule("log2_uniform_int", 64, 3, 9),
    "weight_decay": fixed(0.0),
    "depth": fixed(2),
    "width": fixed(64),
    "tau": Rule("uniform", 1.0, 0, 1),
    "dropout": fixed(0.0),
    **_COMMON,
})

SPACES = {"spirals": SPIRALS, "cmnist": CMNIST}


def space_for(dataset):
    try:
        return SPACES[dataset]
    except KeyError:
        raise HparamError(f"no hyperparameter space for dataset {dataset!r}; known: {sorted(SPACES)}") from None


def default_hparams(dataset, space=None):
    return (space or space_for(dataset)).defaults()


def sample_hparams(space, dataset, rng):
    """Draw one config. ``space`` may be None to use the dataset's own."""
    space = space or space_for(dataset)
    if space.dataset != dataset:
        raise HparamError(f"space is for {space.dataset!r}, not {dataset!r}")
    return {name: space.rules[name].sample(rng) for name in sorted(space.rules)}


def sample_configs(dataset, n, seed, space=None):
    """``n`` configs from one seeded stream; config 0 is the default config."""
    rng = np.random.default_rng(seed)
    space = space or space_for(dataset)
    configs = [space.defaults()]
    configs += [sample_hparams(space, dataset, rng) for _ in range(n - 1)]
    return configs[:n]
