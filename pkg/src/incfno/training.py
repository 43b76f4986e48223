"""Optimization loop: relative L2 loss, Adam with decoupled weight decay,
halving LR schedule, mode-scheduler hook, metrics and spectrum recording.

Everything is seeded and single-threaded, so a run is a pure function of
(model seed, data, config): two runs with the same inputs produce
bit-identical parameters, records, and CSV files.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import tape
from .scheduler import SchedulerConfig, SchedulerState, step_frequency_based, step_loss_based
from .spectral import frequency_strength


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the records collected so far."""

    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


DECAY_STYLES = ("l2", "decoupled")


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 8
    lr0: float = 0.001
    lr_halving_period: int = 100
    weight_decay: float = 0.0005
    decay_style: str = "l2"
    seed: int = 0

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("need epochs >= 1 and batch_size >= 1")
        if self.lr0 <= 0 or self.lr_halving_period < 1 or self.weight_decay < 0:
            raise ValueError("bad optimizer settings")
        if self.decay_style not in DECAY_STYLES:
            raise ValueError(f"unknown decay_style {self.decay_style!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_l2: float
    test_l2: float
    lr: float
    modes: list
    wall_ms: float


def relative_l2(pred, target):
    """``||pred - target|| / ||target||`` for one sample pair."""
    return float(tape.evaluate("relative_l2", pred, target))


def lr_at(epoch, cfg):
    """Learning rate for a 0-based epoch index: lr0 halved every period."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr0 * 0.5 ** (epoch // cfg.lr_halving_period)


def _float_shape(arr):
    if np.iscomplexobj(arr):
        return arr.shape[:-1] + (2 * arr.shape[-1],)
    return arr.shape


class AdamState:
    """First/second moments per parameter, stored over real components.

    Complex parameters are viewed as interleaved (re, im) doubles, so the
    update treats each complex entry as two independent reals.
    """

    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self):
        self.m = {}
        self.v = {}
        self.t = 0

    @classmethod
    def for_model(cls, model):
        state = cls()
        for name, arr in model.named_parameters():
            state.m[name] = np.zeros(_float_shape(arr))
            state.v[name] = np.zeros(_float_shape(arr))
        return state

    def resize(self, name, old_shape, new_shape):
        """Grow a complex parameter's moments in place of the old ones.

        ``old_shape``/``new_shape`` are the complex array shapes; moments
        use the doubled (re, im) last axis.  Old entries keep their slot,
        new entries start at zero.
        """
        del old_shape  # the stored moments carry their own extents
        target = tuple(new_shape[:-1]) + (2 * new_shape[-1],)
        for table in (self.m, self.v):
            old = table[name]
            grown = np.zeros(target)
            grown[tuple(slice(0, s) for s in old.shape)] = old
            table[name] = grown


def adam_step(params, grads, state, lr, weight_decay, decay_style="decoupled"):
    """Bias-corrected Adam update, in place; complex entries as (re, im) pairs.

    ``decay_style='decoupled'`` applies ``p -= lr * wd * p`` on top of the
    Adam step.  ``'l2'`` adds ``wd * p`` to the gradient before the
    moments, which Adam's normalizer turns into a fast, roughly
    lr-per-step crush of parameters the loss does not support; that is
    what produces the early ordering of mode strengths that the
    frequency scheduler feeds on.
    """
    state.t += 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = np.ascontiguousarray(grads[name])
        pf = p.view(np.float64) if np.iscomplexobj(p) else p
        gf = g.view(np.float64) if np.iscomplexobj(g) else g
        if decay_style == "l2":
            gf = gf + weight_decay * pf
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * gf
        v *= b2
        v += (1.0 - b2) * gf * gf
        step = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        if decay_style == "decoupled":
            step = step + lr * weight_decay * pf
        pf -= step
    return params


def record_spectrum(model, epoch):
    """One row per (epoch, layer, dim, mode) with that mode's strength."""
    rows = []
    for layer, blk in enumerate(model.blocks):
        for dim, strengths in enumerate(frequency_strength(blk.spectral)):
            for mode, s in enumerate(strengths):
                rows.append((epoch, layer + 1, dim, mode, float(s)))
    return rows


def _samples(dataset):
    return dataset.samples if hasattr(dataset, "samples") else list(dataset)


def resolve_scheduler(sched_cfg, grid_extents, buffer_modes):
    """Pin the mode cap: user cap or grid/2 - b, never beyond grid - b."""
    hard = min(grid_extents) - buffer_modes
    default = min(grid_extents) // 2 - buffer_modes
    cap = default if sched_cfg.max_modes is None else sched_cfg.max_modes
    cap = max(1, min(cap, hard))
    return SchedulerConfig(
        variant=sched_cfg.variant,
        alpha=sched_cfg.alpha,
        check_interval=sched_cfg.check_interval,
        loss_epsilon=sched_cfg.loss_epsilon,
        loss_patience=sched_cfg.loss_patience,
        loss_step=sched_cfg.loss_step,
        max_modes=cap,
        growth_init_factor=sched_cfg.growth_init_factor,
    )


@dataclass
class TrainResult:
    model: object
    records: list
    spectrum_rows: list = field(default_factory=list)
    action_rows: list = field(default_factory=list)
    scheduler_state: SchedulerState = field(default_factory=SchedulerState)


def train(model, train_data, test_data, cfg, sched_cfg=None):
    """Run the full loop and return the trained model plus diagnostics.

    Per epoch: seeded shuffle, minibatch forward/backward/Adam, test
    evaluation, spectrum recording, then the scheduler (which may grow
    modes and resize optimizer moments).  Epoch numbers in records are
    1-based; the learning rate for epoch ``e`` is ``lr_at(e - 1)``.
    """
    cfg.validate()
    sched_cfg = sched_cfg or SchedulerConfig(variant="none")
    sched_cfg.validate()
    train_samples = _samples(train_data)
    test_samples = _samples(test_data)
    if not train_samples or not test_samples:
        raise ValueError("train and test datasets must be non-empty")
    grid = train_samples[0].input.shape[: model.config.spatial_dims]
    sched = resolve_scheduler(sched_cfg, grid, model.config.buffer_modes)

    rng = np.random.default_rng(cfg.seed)
    adam = AdamState.for_model(model)
    state = SchedulerState()
    records, spectrum_rows, action_rows = [], [], []

    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        lr = lr_at(epoch - 1, cfg)
        order = rng.permutation(len(train_samples))
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            tp = tape.Tape()
            total = None
            for idx in batch:
                sample = train_samples[idx]
                out = model.forward(sample.input, tp)
                loss = tp.record("relative_l2", out, tp.leaf(sample.output))
                epoch_losses.append(float(loss.value))
                total = loss if total is None else tp.record("add", total, loss)
            mean_loss = tp.record("scalar_mul", total, scale=1.0 / len(batch))
            grads = tp.backward(mean_loss)
            params = dict(model.named_parameters())
            adam_step(params, grads, adam, lr, cfg.weight_decay, cfg.decay_style)

        train_l2 = float(np.mean(epoch_losses))
        test_l2 = float(
            np.mean([relative_l2(model.forward(s.input), s.output) for s in test_samples])
        )
        if not (np.isfinite(train_l2) and np.isfinite(test_l2)):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch} (train={train_l2}, test={test_l2})",
                records,
            )

        spectrum_rows.extend(record_spectrum(model, epoch))
        actions = []
        if sched.variant == "frequency" and epoch % sched.check_interval == 0:
            actions = step_frequency_based(model, state, sched, rng, adam_state=adam)
        elif sched.variant == "loss":
            actions = step_loss_based(model, state, train_l2, sched, rng, adam_state=adam)
        action_rows.extend(
            (epoch, a.layer + 1, a.dim, a.k_before, a.k_after, a.ratio_before) for a in actions
        )

        records.append(
            EpochRecord(
                epoch=epoch,
                train_l2=train_l2,
                test_l2=test_l2,
                lr=lr,
                modes=model.modes(),
                wall_ms=(time.perf_counter() - started) * 1000.0,
            )
        )
    return TrainResult(model, records, spectrum_rows, action_rows, state)


# ---------------------------------------------------------------------------
# CSV emission (UTF-8, '.' decimal separator, one row per record)
# ---------------------------------------------------------------------------


def _fmt(value):
    return repr(float(value))


def _fmt_modes(modes):
    return "x".join(str(k) for k in modes)


def metrics_csv(records, layers):
    """metrics.csv text; wall_ms is written as 0 so reruns are byte-identical."""
    header = "epoch,train_l2,test_l2,lr,wall_ms," + ",".join(
        f"K_l{i + 1}" for i in range(layers)
    )
    lines = [header]
    for r in records:
        ks = ",".join(_fmt_modes(m) for m in r.modes)
        lines.append(f"{r.epoch},{_fmt(r.train_l2)},{_fmt(r.test_l2)},{_fmt(r.lr)},0,{ks}")
    return "\n".join(lines) + "\n"


def spectrum_csv(rows):
    lines = ["epoch,layer,dim,mode,strength"]
    lines.extend(f"{e},{l},{d},{m},{_fmt(s)}" for e, l, d, m, s in rows)
    return "\n".join(lines) + "\n"


def actions_csv(rows):
    lines = ["epoch,layer,dim,K_before,K_after,ratio_before"]
    lines.extend(f"{e},{l},{d},{kb},{ka},{_fmt(r)}" for e, l, d, kb, ka, r in rows)
    return "\n".join(lines) + "\n"
