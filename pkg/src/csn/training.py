"""L1 training of a built model: Adam, patch sampling, dihedral augmentation,
halving learning-rate schedule and periodic validation.

Determinism contract: the loss at iteration i is a pure function of (seed,
config, dataset). The sampler rng is advanced strictly in iteration order,
so prefetching batches on a worker thread cannot change the numbers.
"""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field

import numpy as np

from . import metrics, ops
from .autodiff import ParamStore, Tape, l1_loss
from .model import CsnModel


@dataclass
class TrainConfig:
    batch_size: int = 16
    patch_lr: int = 24
    iterations: int = 1_000_000
    lr0: float = 1e-4
    lr_halve_period: int = 200_000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    log_every: int = 100
    validation_every: int = 1000
    checkpoint_every: int = 10_000

    def validate(self) -> "TrainConfig":
        for name in ("batch_size", "patch_lr", "iterations", "lr_halve_period",
                     "log_every", "validation_every", "checkpoint_every"):
            if getattr(self, name) < (0 if name == "checkpoint_every" else 1):
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr0 <= 0 or self.eps <= 0:
            raise ValueError("lr0 and eps must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("adam betas must lie in [0, 1)")
        return self


class AdamState:
    """First/second moment slots per parameter plus the step counter."""

    def __init__(self, store: ParamStore, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.value) for name, p in store.items()}
        self.v = {name: np.zeros_like(p.value) for name, p in store.items()}


def adam_step(store: ParamStore, state: AdamState, lr: float):
    """Bias-corrected Adam update in place; gradients are cleared after."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in store.items():
        g = p.grad
        if g is None:
            raise ValueError(f"parameter '{name}' has no gradient; run backward first")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.value -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        g[...] = 0


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    """Piecewise-constant schedule: lr0 halved every lr_halve_period steps."""
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    return cfg.lr0 * 0.5 ** (iteration // cfg.lr_halve_period)


@dataclass
class SamplePair:
    image_id: str
    lr: np.ndarray   # (H, W) float32
    hr: np.ndarray   # (H*r, W*r) float32
    scale: int


def dihedral(img: np.ndarray, k: int) -> np.ndarray:
    """Element k of the 8-element group generated by rot90 and flip_h."""
    out = img
    for _ in range(k & 3):
        out = ops.rot90(out)
    if k & 4:
        out = ops.flip_h(out)
    return out


def check_dataset(pairs, cfg: TrainConfig, scale: int):
    if not pairs:
        raise ValueError("dataset is empty")
    for pr in pairs:
        if pr.scale != scale:
            raise ValueError(f"entry '{pr.image_id}' has scale {pr.scale}, model expects {scale}")
        if pr.hr.shape != (pr.lr.shape[0] * scale, pr.lr.shape[1] * scale):
            raise ValueError(f"entry '{pr.image_id}': HR shape {pr.hr.shape} is not "
                             f"LR shape {pr.lr.shape} times {scale}")
        if min(pr.lr.shape) < cfg.patch_lr:
            raise ValueError(f"entry '{pr.image_id}': LR size {pr.lr.shape} smaller "
                             f"than patch {cfg.patch_lr}")


def sample_batch(pairs, cfg: TrainConfig, rng, scale: int):
    """Draw batch_size co-located LR/HR patch pairs, each with a random
    dihedral transform applied identically to both patches."""
    p = cfg.patch_lr
    lr_out, hr_out = [], []
    for _ in range(cfg.batch_size):
        pr = pairs[int(rng.integers(len(pairs)))]
        oy = int(rng.integers(pr.lr.shape[0] - p + 1))
        ox = int(rng.integers(pr.lr.shape[1] - p + 1))
        k = int(rng.integers(8))
        lr_patch = pr.lr[oy:oy + p, ox:ox + p]
        hr_patch = pr.hr[oy * scale:(oy + p) * scale, ox * scale:(ox + p) * scale]
        lr_out.append(np.ascontiguousarray(dihedral(lr_patch, k), dtype=np.float32))
        hr_out.append(np.ascontiguousarray(dihedral(hr_patch, k), dtype=np.float32))
    return np.stack(lr_out)[:, None], np.stack(hr_out)[:, None]


@dataclass
class TrainRecord:
    iteration: int
    lr: float
    loss: float
    val_psnr: float | None = None


@dataclass
class TrainerState:
    adam: AdamState
    sampler_rng: np.random.Generator
    iteration: int = 0


@dataclass
class TrainResult:
    records: list = field(default_factory=list)
    state: TrainerState | None = None


def validation_psnr(model: CsnModel, pairs) -> float:
    """Mean PSNR over full slices, normalized by each HR max."""
    vals = []
    for pr in pairs:
        sr = model.forward(pr.lr[None, None])[0, 0]
        peak = float(pr.hr.max()) or 1.0
        vals.append(metrics.psnr(pr.hr / peak, sr / peak, 1.0))
    return float(np.mean(vals))


def _batch_stream(pairs, cfg, rng, scale, first_iter, prefetch):
    if not prefetch:
        for _ in range(first_iter, cfg.iterations):
            yield sample_batch(pairs, cfg, rng, scale)
        return

    q: queue.Queue = queue.Queue(maxsize=4)
    stop = threading.Event()

    def producer():
        for _ in range(first_iter, cfg.iterations):
            batch = sample_batch(pairs, cfg, rng, scale)
            while not stop.is_set():
                try:
                    q.put(batch, timeout=0.1)
                    break
                except queue.Full:
                    continue
            if stop.is_set():
                return

    worker = threading.Thread(target=producer, daemon=True)
    worker.start()
    try:
        for _ in range(first_iter, cfg.iterations):
            yield q.get()
    finally:
        stop.set()
        worker.join()


def train(model: CsnModel, pairs, cfg: TrainConfig, *, val_pairs=(),
          threads: int = 1, state: TrainerState | None = None,
          checkpoint_writer=None) -> TrainResult:
    """Run the optimization loop; mutates the model in place.

    threads > 1 prefetches batches on a worker thread (numerically
    identical: the sampler rng is sequenced by iteration, not by worker
    timing). checkpoint_writer(model, state) is called every
    checkpoint_every iterations and forces synchronous sampling so the
    saved rng state matches the saved iteration.
    """
    cfg.validate()
    scale = model.config.scale
    check_dataset(pairs, cfg, scale)
    if state is None:
        state = TrainerState(
            adam=AdamState(model.params, cfg.beta1, cfg.beta2, cfg.eps),
            sampler_rng=np.random.default_rng(cfg.seed),
        )

    prefetch = threads > 1 and checkpoint_writer is None
    batches = _batch_stream(pairs, cfg, state.sampler_rng, scale, state.iteration, prefetch)

    records = []
    for it in range(state.iteration, cfg.iterations):
        lr_batch, hr_batch = next(batches)
        tape = Tape()
        pred = model.forward_on(tape, lr_batch)
        loss = l1_loss(pred, hr_batch)
        loss_val = float(loss.value)
        if not np.isfinite(loss_val):
            raise RuntimeError(f"training aborted: non-finite loss at iteration {it}")
        model.params.zero_grad()
        tape.backward(loss)
        adam_step(model.params, state.adam, lr_at(it, cfg))
        state.iteration = it + 1

        if it % cfg.log_every == 0 or it == cfg.iterations - 1:
            val = None
            if val_pairs and (it % cfg.validation_every == 0 or it == cfg.iterations - 1):
                val = validation_psnr(model, val_pairs)
            records.append(TrainRecord(it, lr_at(it, cfg), loss_val, val))
        if (checkpoint_writer is not None and cfg.checkpoint_every
                and state.iteration % cfg.checkpoint_every == 0):
            checkpoint_writer(model, state)
    return TrainResult(records=records, state=state)


def write_log(records, path):
    """Append-only text log: iteration, lr, loss, optional validation PSNR."""
    with open(path, "w") as fh:
        fh.write("# iteration\tlr\tloss\tval_psnr\n")
        for r in records:
            line = f"{r.iteration}\t{r.lr:.8e}\t{r.loss:.8e}"
            if r.val_psnr is not None:
                line += f"\t{r.val_psnr:.4f}"
            fh.write(line + "\n")
