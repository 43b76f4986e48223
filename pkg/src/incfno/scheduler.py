"""Mode-growth scheduling: decide when each layer gains frequency modes.

Two variants.  The frequency-based rule measures how much of each layer's
observed mode-strength spectrum the current ``K`` lowest modes explain
and raises ``K`` until that ratio reaches ``alpha``.  The loss-based rule
raises every layer by a fixed step whenever the training loss fails to
improve (relative to the best seen) by ``loss_epsilon`` for
``loss_patience`` consecutive epochs.  ``K`` never decreases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import expand_weights, frequency_strength

VARIANTS = ("frequency", "loss", "none")


class DegenerateSpectrumError(ValueError):
    """All-zero strength spectrum; the explanation ratio is undefined."""


@dataclass
class SchedulerConfig:
    variant: str = "frequency"
    alpha: float = 0.99
    check_interval: int = 1
    loss_epsilon: float = 0.001
    loss_patience: int = 5
    loss_step: int = 1
    max_modes: int | None = None
    growth_init_factor: float = 0.1

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown scheduler variant {self.variant!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.check_interval < 1:
            raise ValueError("check_interval must be >= 1")
        if self.loss_epsilon < 0:
            raise ValueError("loss_epsilon must be >= 0")
        if self.loss_patience < 1 or self.loss_step < 1:
            raise ValueError("need loss_patience >= 1 and loss_step >= 1")
        if self.growth_init_factor < 0:
            raise ValueError("growth_init_factor must be >= 0")


@dataclass
class SchedulerState:
    best_loss: float | None = None
    epochs_since_improvement: int = 0
    saturated: bool = False


@dataclass
class ExpansionAction:
    """One layer/dimension growth event, also a modes.csv row."""

    layer: int
    dim: int
    k_before: int
    k_after: int
    ratio_before: float


def explanation_ratio(strengths, k):
    """Fraction of total spectral strength carried by the ``k`` lowest modes."""
    s = np.asarray(strengths, dtype=np.float64)
    if not 1 <= k <= s.size:
        raise ValueError(f"k={k} outside spectrum of length {s.size}")
    total = float(s.sum())
    if total <= 0.0:
        raise DegenerateSpectrumError("strength spectrum sums to zero")
    return float(s[:k].sum()) / total


def find_min_modes(strengths, alpha, k_prev):
    """Smallest ``K >= k_prev`` whose explanation ratio reaches ``alpha``.

    A degenerate (all-zero) spectrum is treated as "nothing to explain"
    and returns ``k_prev``.  The result never exceeds the spectrum length.
    """
    s = np.asarray(strengths, dtype=np.float64)
    if not 1 <= k_prev <= s.size:
        raise ValueError(f"k_prev={k_prev} outside spectrum of length {s.size}")
    try:
        k = k_prev
        while k < s.size and explanation_ratio(s, k) < alpha:
            k += 1
        return k
    except DegenerateSpectrumError:
        return k_prev


def _apply_expansion(model, adam_state, layer, new_effective, rng):
    """Grow one layer's weights and keep its optimizer moments aligned."""
    blk = model.blocks[layer]
    old = blk.spectral
    blk.spectral = expand_weights(old, new_effective, model.config.scale(), rng)
    if adam_state is not None:
        adam_state.resize(f"block{layer}.spectral", old.weights.shape, blk.spectral.weights.shape)


def _cap(k, cfg):
    return k if cfg.max_modes is None else min(k, cfg.max_modes)


def step_frequency_based(model, state, cfg, rng, adam_state=None):
    """Run the explanation-ratio rule on every layer and dimension.

    Measures each layer's per-dimension strengths, finds the minimal
    explaining ``K``, expands the weights (new entries at the model's
    init scale, optimizer moments zero) and returns the actions taken.
    """
    actions = []
    for layer, blk in enumerate(model.blocks):
        spectra = frequency_strength(blk.spectral)
        k_now = blk.spectral.effective_modes
        k_new = []
        for dim, (s, k_prev) in enumerate(zip(spectra, k_now)):
            try:
                ratio = explanation_ratio(s, k_prev)
            except DegenerateSpectrumError:
                ratio = 1.0
            wanted = find_min_modes(s, cfg.alpha, k_prev)
            k = max(_cap(wanted, cfg), k_prev)
            if k < wanted:
                state.saturated = True
            k_new.append(k)
            if k > k_prev:
                actions.append(ExpansionAction(layer, dim, k_prev, k, ratio))
        if tuple(k_new) != k_now:
            _apply_expansion(model, adam_state, layer, tuple(k_new), rng)
    return actions


def step_loss_based(model, state, epoch_loss, cfg, rng, adam_state=None):
    """Count stalled epochs; on the ``loss_patience``-th, grow every layer.

    Improvement is relative decrease against the best loss seen so far;
    the first observed epoch counts as stalled (it cannot improve on
    itself).  A trigger expands all layers by ``loss_step`` modes per
    dimension and resets the counter.
    """
    epoch_loss = float(epoch_loss)
    if state.best_loss is None:
        state.best_loss = epoch_loss
        improved = False
    else:
        if state.best_loss > 0:
            improved = (state.best_loss - epoch_loss) / state.best_loss >= cfg.loss_epsilon
        else:
            improved = False
        state.best_loss = min(state.best_loss, epoch_loss)
    state.epochs_since_improvement = 0 if improved else state.epochs_since_improvement + 1

    if state.epochs_since_improvement < cfg.loss_patience:
        return []
    state.epochs_since_improvement = 0
    actions = []
    for layer, blk in enumerate(model.blocks):
        k_now = blk.spectral.effective_modes
        k_new = tuple(_cap(k + cfg.loss_step, cfg) for k in k_now)
        if any(a < b + cfg.loss_step for a, b in zip(k_new, k_now)):
            state.saturated = True
        if k_new != k_now:
            for dim, (k_prev, k) in enumerate(zip(k_now, k_new)):
                if k > k_prev:
                    actions.append(ExpansionAction(layer, dim, k_prev, k, float("nan")))
            _apply_expansion(model, adam_state, layer, k_new, rng)
    return actions
