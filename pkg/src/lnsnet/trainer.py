"""Lifelong training loop: one image per task, two-phase schedule, Adam."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import grm, model
from .errors import ImageError, InvalidArgument, TrainingDiverged
from .fem import FemConfig
from .imagefeat import FeatureImage, load_image, prepare_image
from .loss import LossConfig, total_loss
from .ncm import make_grid

log = logging.getLogger(__name__)

PHASE_FEATURE = "feature"
PHASE_SEED = "seed"


@dataclass(frozen=True)
class Schedule:
    max_epochs: int = 50
    feature_epochs: int = 40
    learning_rate: float = 3e-4

    def __post_init__(self):
        if self.max_epochs < 1:
            raise InvalidArgument("max_epochs must be >= 1")
        if not 0 <= self.feature_epochs <= self.max_epochs:
            raise InvalidArgument(
                f"feature_epochs={self.feature_epochs} must lie in [0, {self.max_epochs}]")
        if self.learning_rate < 0:
            raise InvalidArgument("learning rate must be non-negative")

    @property
    def seed_epochs(self) -> int:
        return self.max_epochs - self.feature_epochs

    def phase(self, epoch: int) -> str:
        """Phase of a 1-based epoch number."""
        return PHASE_FEATURE if epoch <= self.feature_epochs else PHASE_SEED


@dataclass(frozen=True)
class TrainConfig:
    fem: FemConfig = FemConfig()
    loss: LossConfig = LossConfig()
    schedule: Schedule = Schedule()
    lam: float = 0.1
    epsilon: float = 0.1
    gal: bool = True
    gbl: bool = True
    color_space: str = "lab"
    seed: int = 42
    reset_moments: bool = False

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise InvalidArgument(f"lambda must lie in (0,1), got {self.lam}")
        if not 0.0 <= self.epsilon < 1.0:
            raise InvalidArgument(f"epsilon must lie in [0,1), got {self.epsilon}")
        if self.color_space not in ("lab", "rgb"):
            raise InvalidArgument(f"unknown color space {self.color_space!r}")


@dataclass
class AdamState:
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)
    param_steps: dict[str, int] = field(default_factory=dict)
    steps: int = 0


def adam_step(params, grads, moments: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update of every parameter that has a gradient.

    Each parameter keeps its own step count so a tensor that was frozen for a
    while starts with fresh bias correction.
    """
    moments.steps += 1
    for name, g in grads.items():
        if name not in moments.first:
            moments.first[name] = np.zeros_like(params[name])
            moments.second[name] = np.zeros_like(params[name])
            moments.param_steps[name] = 0
        t = moments.param_steps[name] + 1
        moments.param_steps[name] = t
        m = beta1 * moments.first[name] + (1.0 - beta1) * g
        v = beta2 * moments.second[name] + (1.0 - beta2) * g * g
        moments.first[name], moments.second[name] = m, v
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        params[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, moments


@dataclass
class ModelState:
    params: dict[str, np.ndarray]
    memory: grm.ChannelMemory
    adam: AdamState
    config: TrainConfig
    tasks_seen: int = 0

    @classmethod
    def initialize(cls, config: TrainConfig = TrainConfig()) -> "ModelState":
        rng = np.random.default_rng(config.seed)
        params = model.init_params(config.fem, rng)
        return cls(params=params, memory=grm.ChannelMemory.ones(config.fem.c_2, config.lam),
                   adam=AdamState(), config=config)

    def clone(self) -> "ModelState":
        return copy.deepcopy(self)

    @property
    def num_params(self) -> int:
        return model.count_params(self.params)


@dataclass
class EpochRecord:
    task_id: int
    epoch: int
    phase: str
    l_c: float
    l_rc: float
    l_rs: float
    total: float


def train_task(state: ModelState, image: FeatureImage, requested_k: int,
               task_id: int | None = None) -> tuple[ModelState, list[EpochRecord]]:
    """Run every epoch of the schedule on one image. ``state`` is updated in place.

    On a non-finite loss the state is restored to its value at task start and
    :class:`TrainingDiverged` is raised.
    """
    cfg = state.config
    sched = cfg.schedule
    if task_id is None:
        task_id = state.tasks_seen + 1
    grid = make_grid(image.height, image.width, requested_k)
    loss_cfg = cfg.loss
    if loss_cfg.n > grid.K:
        log.info("top-n %d clamped to realized superpixel count %d", loss_cfg.n, grid.K)
        loss_cfg = replace(loss_cfg, n=grid.K)
    backup = state.clone()
    if cfg.reset_moments:
        state.adam = AdamState(steps=state.adam.steps)
    fem_names = model.fem_param_names(state.params)
    records = []
    for epoch in range(1, sched.max_epochs + 1):
        phase = sched.phase(epoch)
        g = grm.channel_strength(state.params[model.RECON_WEIGHT])
        opts = model.GradientOptions(gal=cfg.gal, gbl=cfg.gbl, contour_epsilon=cfg.epsilon,
                                     fem=phase == PHASE_FEATURE, seed=phase == PHASE_SEED)
        # memory update sits between forward and backward; both only read W_r
        new_memory = state.memory.update(g)
        try:
            res = model.compute_gradients(state.params, image, grid, loss_cfg, strength=g,
                                          memory=new_memory.m, options=opts, config=cfg.fem)
            terms = res.terms
            total_loss(terms.l_c, terms.l_rc + loss_cfg.phi * terms.l_rs, loss_cfg.beta,
                       task_id=task_id, epoch=epoch)
            if not all(np.all(np.isfinite(v)) for v in res.grads.values()):
                raise TrainingDiverged("non-finite gradient", task_id=task_id, epoch=epoch)
        except (TrainingDiverged, FloatingPointError) as exc:
            _restore(state, backup)
            if isinstance(exc, TrainingDiverged):
                raise
            raise TrainingDiverged(str(exc), task_id=task_id, epoch=epoch) from exc
        state.memory = new_memory
        records.append(EpochRecord(task_id, epoch, phase, terms.l_c, terms.l_rc, terms.l_rs,
                                   terms.total))
        frozen = fem_names if phase == PHASE_SEED else [model.SEED_WEIGHT]
        update = {k: v for k, v in res.grads.items() if k not in frozen}
        adam_step(state.params, update, state.adam, sched.learning_rate)
    state.tasks_seen += 1
    return state, records


def _restore(state: ModelState, backup: ModelState) -> None:
    state.params = backup.params
    state.memory = backup.memory
    state.adam = backup.adam
    state.tasks_seen = backup.tasks_seen


@dataclass
class StreamResult:
    state: ModelState
    records: list[EpochRecord]
    task_summaries: list[dict]
    failures: list[tuple[str, str]]


def train_stream(state: ModelState, image_paths, requested_k: int, *, images=None,
                 on_task=None) -> StreamResult:
    """Train sequentially over an ordered image stream.

    Unreadable or diverging images are logged and skipped. ``images`` may hold
    pre-built :class:`FeatureImage` objects instead of paths. ``on_task`` is
    called as ``on_task(task_id, name, image, records)`` after each task.
    """
    items = list(images) if images is not None else list(image_paths)
    if not items:
        raise InvalidArgument("image stream is empty")
    records, summaries, failures = [], [], []
    for item in items:
        name = item if isinstance(item, str) else getattr(item, "name", f"task{len(summaries) + 1}")
        try:
            image = item if isinstance(item, FeatureImage) else prepare_image(
                load_image(item), state.config.color_space)
        except ImageError as exc:
            log.warning("skipping %s: %s", item, exc)
            failures.append((str(item), str(exc)))
            continue
        task_id = state.tasks_seen + 1
        try:
            _, task_records = train_task(state, image, requested_k, task_id=task_id)
        except TrainingDiverged as exc:
            log.warning("task %d (%s) diverged, rolled back: %s", task_id, name, exc)
            failures.append((str(name), str(exc)))
            continue
        records.extend(task_records)
        last = task_records[-1]
        summaries.append({"task_id": task_id, "image": str(name), "l_c": last.l_c,
                          "l_rc": last.l_rc, "l_rs": last.l_rs, "total": last.total})
        if on_task is not None:
            on_task(task_id, name, image, task_records)
    return StreamResult(state, records, summaries, failures)


def with_overrides(config: TrainConfig, **kw) -> TrainConfig:
    return replace(config, **kw)
