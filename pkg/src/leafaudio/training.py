"""Optimization and evaluation: ADAM, multi-task objectives, noise sweeps,
and the bootstrap significance test.

Training is deterministic given (seed, config): batches, noise, and
evaluation sets all derive from SeedSequence folding, and every reduction
runs in a fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import tape
from .autodiff import loss_graph
from .errors import LengthMismatch, NonFiniteLoss, ShapeMismatch, UnknownTask
from .frontend import FrontendConfig, features_graph
from .params import Gradients, ParamSet, init_multitask_params, project_params
from .tasks import TaskSpec, generate_example, sample_batch, test_set

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

WINDOW_S = 1.0


@dataclass
class AdamState:
    """Per-parameter moment estimates plus the shared step counter."""

    first_moment: dict
    second_moment: dict
    step_count: int
    lr: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps_adam: float = ADAM_EPS


def init_adam(params: ParamSet, lr: float) -> AdamState:
    return AdamState(
        first_moment={k: np.zeros_like(v) for k, v in params.items()},
        second_moment={k: np.zeros_like(v) for k, v in params.items()},
        step_count=0,
        lr=lr,
    )


def adam_step(state: AdamState, params: ParamSet, grads: Gradients,
              cfg: FrontendConfig, trainable=None) -> tuple[AdamState, ParamSet]:
    """One bias-corrected ADAM update followed by constraint projection.

    ``trainable`` optionally restricts which keys move (e.g. frozen
    frontend); moments of untouched keys stay zero.
    """
    params.require_congruent(grads)
    if set(state.first_moment) != set(params):
        raise ShapeMismatch("optimizer state does not match parameter set")
    t = state.step_count + 1
    bias1 = 1.0 - state.beta1 ** t
    bias2 = 1.0 - state.beta2 ** t
    new_params = {}
    m_out, v_out = {}, {}
    for key, value in params.items():
        g = grads[key]
        if trainable is not None and key not in trainable:
            m_out[key] = state.first_moment[key]
            v_out[key] = state.second_moment[key]
            new_params[key] = value.copy()
            continue
        m = state.beta1 * state.first_moment[key] + (1.0 - state.beta1) * g
        v = state.beta2 * state.second_moment[key] + (1.0 - state.beta2) * (g * g)
        update = (m / bias1) / (np.sqrt(v / bias2) + state.eps_adam)
        m_out[key], v_out[key] = m, v
        new_params[key] = value - state.lr * update
    next_state = replace(state, first_moment=m_out, second_moment=v_out, step_count=t)
    return next_state, project_params(ParamSet(new_params), cfg)


@dataclass(frozen=True)
class MultiHead:
    """Shared frontend parameters with one linear head per task."""

    params: ParamSet
    cfg: FrontendConfig
    class_counts: tuple[int, ...]

    @property
    def n_tasks(self) -> int:
        return len(self.class_counts)

    def head(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return self.params[f"head{k}_weights"], self.params[f"head{k}_bias"]


def multitask_graph(xs: np.ndarray, labels: np.ndarray, task_ids: np.ndarray,
                    params, cfg: FrontendConfig, n_tasks: int):
    """Kronecker-masked multi-task loss: each example feeds only its own head.

    The total is the batch mean of per-example own-head cross-entropies, so
    a single-task batch reduces exactly to the single-task loss.
    """
    if np.any(task_ids >= n_tasks) or np.any(task_ids < 0):
        raise UnknownTask("batch contains a task id with no head")
    leaves = {
        name: value if isinstance(value, tape.Var) else tape.leaf(value)
        for name, value in params.items()
    }
    feats = features_graph(xs, leaves, cfg)
    pooled = tape.reduce_mean(feats, axis=2)
    total = None
    batch_size = xs.shape[0]
    for k in range(n_tasks):
        rows = np.nonzero(task_ids == k)[0]
        if rows.size == 0:
            continue  # absent task: its head never enters the graph
        logits = tape.matmul(pooled[rows], leaves[f"head{k}_weights"]) + leaves[f"head{k}_bias"]
        ce = tape.softmax_cross_entropy(logits, labels[rows], reduction="sum")
        total = ce if total is None else total + ce
    loss = total * (1.0 / batch_size)
    return loss, leaves


def multitask_loss(batch, model: MultiHead) -> float:
    """Batch loss of (Waveform, label, task_id) triples under the model."""
    xs = np.stack([x.samples for x, _, _ in batch])
    labels = np.asarray([y for _, y, _ in batch])
    task_ids = np.asarray([k for _, _, k in batch])
    loss, _ = multitask_graph(xs.astype(np.float64), labels, task_ids, model.params,
                              model.cfg, model.n_tasks)
    return float(loss.value)


def multitask_loss_and_grad(batch, params: ParamSet, cfg: FrontendConfig, n_tasks: int,
                            dtype=np.float32):
    xs = np.stack([x.samples for x, _, _ in batch]).astype(dtype)
    labels = np.asarray([y for _, y, _ in batch])
    task_ids = np.asarray([k for _, _, k in batch])
    loss, leaves = multitask_graph(xs, labels, task_ids, params, cfg, n_tasks)
    value = float(loss.value)
    if not np.isfinite(value):
        raise NonFiniteLoss(f"loss evaluated to {value}")
    tape.backward(loss)
    grads = Gradients({
        name: leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
        for name, leaf in leaves.items()
    })
    return value, grads, labels, task_ids


def head_grad_sparsity_ok(grads: Gradients, task_ids: np.ndarray, n_tasks: int) -> bool:
    """Heads of tasks absent from the batch must have exactly zero gradient."""
    present = set(int(k) for k in task_ids)
    for k in range(n_tasks):
        if k in present:
            continue
        if np.any(grads[f"head{k}_weights"] != 0.0) or np.any(grads[f"head{k}_bias"] != 0.0):
            return False
    return True


@dataclass
class TrainResult:
    model: MultiHead
    metrics: list  # rows: dict(step, task_id, loss, accuracy)
    snapshots: dict  # step -> ParamSet
    steps_run: int
    sparsity_checks_passed: bool = True


def train(tasks: list[TaskSpec], cfg: FrontendConfig, steps: int, batch_size: int,
          lr: float, seed: int, *, log_every: int = 50, dtype=np.float32,
          freeze_frontend: bool = False, eval_every: int | None = None,
          eval_clips: int = 200, stop_accuracy: float | None = None,
          sparsity_check_every: int | None = None) -> TrainResult:
    """Deterministic multi-task training run.

    Snapshots are taken at steps {0, steps//2, final}.  When ``eval_every``
    and ``stop_accuracy`` are both set, training stops early once every
    task's held-out accuracy reaches the target (the spec'd step count is
    an upper budget).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    class_counts = [t.num_classes for t in tasks]
    params = init_multitask_params(cfg, class_counts, dtype=dtype)
    state = init_adam(params, lr)
    trainable = None
    if freeze_frontend:
        trainable = {k for k in params if k.startswith("head")}
    metrics: list[dict] = []
    snapshots = {0: params.copy()}
    sparsity_ok = True
    steps_run = 0
    for step in range(1, steps + 1):
        batch = sample_batch(tasks, batch_size, seed, step)
        loss, grads, labels, task_ids = multitask_loss_and_grad(
            batch, params, cfg, len(tasks), dtype=dtype)
        if sparsity_check_every and step % sparsity_check_every == 0:
            sparsity_ok = sparsity_ok and head_grad_sparsity_ok(grads, task_ids, len(tasks))
        state, params = adam_step(state, params, grads, cfg, trainable=trainable)
        steps_run = step
        if step % log_every == 0 or step == steps:
            accs = _batch_accuracies(batch, params, cfg, len(tasks), dtype)
            for k in range(len(tasks)):
                metrics.append({
                    "step": step, "task_id": k, "loss": loss,
                    "accuracy": accs.get(k, float("nan")),
                })
        if step == steps // 2:
            snapshots[step] = params.copy()
        if eval_every and stop_accuracy and step % eval_every == 0:
            model = MultiHead(params, cfg, tuple(class_counts))
            held_out = [
                evaluate(model, task, eval_clips, seed + 7919, task_index=k).accuracy
                for k, task in enumerate(tasks)
            ]
            if min(held_out) >= stop_accuracy:
                break
    snapshots[steps_run] = params.copy()
    model = MultiHead(params, cfg, tuple(class_counts))
    return TrainResult(model, metrics, snapshots, steps_run, sparsity_ok)


def _batch_accuracies(batch, params, cfg, n_tasks, dtype):
    xs = np.stack([x.samples for x, _, _ in batch]).astype(dtype)
    labels = np.asarray([y for _, y, _ in batch])
    task_ids = np.asarray([k for _, _, k in batch])
    feats = features_graph(xs, dict(params), cfg)
    pooled = feats.value.mean(axis=2)
    out = {}
    for k in range(n_tasks):
        rows = np.nonzero(task_ids == k)[0]
        if rows.size == 0:
            continue
        logits = pooled[rows] @ params[f"head{k}_weights"] + params[f"head{k}_bias"]
        out[k] = float(np.mean(logits.argmax(axis=1) == labels[rows]))
    return out


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    ci95: float
    n_examples: int


def _split_windows(samples: np.ndarray, window: int) -> list[np.ndarray]:
    """Consecutive non-overlapping windows; a short clip is one window."""
    if len(samples) < window:
        return [samples]
    return [samples[w * window: (w + 1) * window] for w in range(len(samples) // window)]


def clip_logits(model: MultiHead, waveform, task_index: int = 0,
                window: int | None = None) -> np.ndarray:
    """Head logits for one clip, averaged over its one-second windows."""
    weights, bias = model.head(task_index)
    window = window or round(WINDOW_S * waveform.sample_rate)
    xs = np.stack(_split_windows(waveform.samples, window)).astype(weights.dtype)
    feats = features_graph(xs, dict(model.params), model.cfg)
    logits = feats.value.mean(axis=2) @ weights + bias
    return logits.mean(axis=0)


def evaluate(model: MultiHead, task: TaskSpec, n_examples: int, seed: int,
             task_index: int = 0, batch_clips: int = 64) -> EvalResult:
    """Held-out accuracy with a normal-approximation 95% interval.

    Clips longer than one second are split into consecutive non-overlapping
    one-second windows whose logits are averaged before the argmax.
    """
    examples = test_set(task, n_examples, seed)
    window = round(WINDOW_S * task.sample_rate)
    weights, bias = model.head(task_index)
    correct = 0
    for start in range(0, len(examples), batch_clips):
        chunk = examples[start: start + batch_clips]
        windows, owners = [], []
        for i, (wav, _) in enumerate(chunk):
            for piece in _split_windows(wav.samples, window):
                windows.append(piece)
                owners.append(i)
        xs = np.stack(windows).astype(weights.dtype)
        feats = features_graph(xs, dict(model.params), model.cfg)
        logits = feats.value.mean(axis=2) @ weights + bias
        owners = np.asarray(owners)
        for i, (_, label) in enumerate(chunk):
            avg = logits[owners == i].mean(axis=0)
            correct += int(avg.argmax() == label)
    p = correct / len(examples)
    ci = 1.96 * np.sqrt(p * (1.0 - p) / len(examples))
    return EvalResult(p, float(ci), len(examples))


def bootstrap_diff(acc_a, acc_b, iters: int = 100_000, seed: int = 0) -> tuple[float, float]:
    """Paired bootstrap of mean(acc_a - acc_b); returns (mean_diff, p).

    ``p`` is the one-sided probability that a resampled mean difference is
    <= 0 (small p: a reliably beats b).
    """
    a = np.asarray(acc_a, dtype=np.float64)
    b = np.asarray(acc_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch("paired accuracy lists must have equal length")
    if a.size < 2:
        raise LengthMismatch("need at least two paired observations")
    diffs = a - b
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, diffs.size, size=(iters, diffs.size))
    means = diffs[idx].mean(axis=1)
    return float(diffs.mean()), float(np.mean(means <= 0.0))


def noise_sweep(task: TaskSpec, snr_list, variants: list[FrontendConfig], seed: int, *,
                steps: int = 300, batch_size: int = 16, lr: float = 1e-3,
                eval_clips: int = 300, n_seeds: int = 3) -> list[dict]:
    """Train and evaluate each variant at each SNR, noise in both phases.

    Returns rows ``{"variant", "snr_db", "accuracies", "mean_accuracy",
    "ci95"}`` with one accuracy per seed.
    """
    from .frontend import variant_name

    rows = []
    for cfg in variants:
        for snr in snr_list:
            noisy_task = task.with_snr(snr)
            accs = []
            for s in range(n_seeds):
                run_seed = seed + 1000 * s
                result = train([noisy_task], cfg, steps, batch_size, lr, run_seed)
                ev = evaluate(result.model, noisy_task, eval_clips, run_seed + 7919)
                accs.append(ev.accuracy)
            rows.append({
                "variant": variant_name(cfg),
                "snr_db": float(snr),
                "accuracies": accs,
                "mean_accuracy": float(np.mean(accs)),
                "ci95": float(1.96 * np.sqrt(np.mean(accs) * (1 - np.mean(accs)) / (n_seeds * eval_clips))),
            })
    return rows
