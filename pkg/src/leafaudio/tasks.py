"""Desk-scale synthetic classification tasks.

Three generators exercise different frontend capabilities: pitch class
(frequency selectivity), amplitude-modulation rate (temporal envelope,
pooling, and PCEN dynamics), and noise color (broadband discrimination).
Every example is deterministic given (task, label, seed): clip-level
randomness (phases, gains, noise realizations) derives from a SeedSequence
over those values.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .errors import UnknownTask
from .signal import FRONTEND_RATE, ToneSpec, Waveform, add_noise_snr, gaussian_noise, synth_tones

PITCH_FREQS = (400.0, 800.0, 1600.0, 3200.0)
AM_RATES = (4.0, 16.0, 64.0)
AM_CARRIER = 1000.0
NOISE_COLORS = ("white", "lowpass", "highpass")

TASK_NAMES = ("pitch", "am", "noisecolor")


@dataclass(frozen=True)
class TaskSpec:
    """One synthetic classification problem at a fixed noise level."""

    task_id: int
    name: str
    num_classes: int
    snr_db: float
    duration_s: float = 1.0
    sample_rate: int = FRONTEND_RATE

    def with_snr(self, snr_db: float) -> "TaskSpec":
        return replace(self, snr_db=snr_db)


def make_task(name: str, task_id: int = 0, snr_db: float = np.inf) -> TaskSpec:
    if name == "pitch":
        return TaskSpec(task_id, name, len(PITCH_FREQS), snr_db)
    if name == "am":
        return TaskSpec(task_id, name, len(AM_RATES), snr_db)
    if name == "noisecolor":
        return TaskSpec(task_id, name, len(NOISE_COLORS), snr_db)
    raise UnknownTask(f"no task generator named {name!r}")


def _rng_for(task: TaskSpec, label: int, seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, task.task_id, label]))


def _pitch_example(task: TaskSpec, label: int, rng: np.random.Generator) -> Waveform:
    amp = rng.uniform(0.25, 1.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    spec = ToneSpec((PITCH_FREQS[label],), (amp,), task.duration_s, phases=(phase,))
    return synth_tones(spec, task.sample_rate)


def _am_example(task: TaskSpec, label: int, rng: np.random.Generator) -> Waveform:
    # full-depth modulation so pooling and PCEN dynamics see rate contrast
    n = round(task.duration_s * task.sample_rate)
    t = np.arange(n) / task.sample_rate
    amp = rng.uniform(0.25, 1.0)
    mod_phase = rng.uniform(0.0, 2.0 * np.pi)
    car_phase = rng.uniform(0.0, 2.0 * np.pi)
    envelope = 0.5 * (1.0 + np.cos(2.0 * np.pi * AM_RATES[label] * t + mod_phase))
    carrier = np.cos(2.0 * np.pi * AM_CARRIER * t + car_phase)
    return Waveform(amp * envelope * carrier, task.sample_rate)


def _noise_color_example(task: TaskSpec, label: int, rng: np.random.Generator) -> Waveform:
    n = round(task.duration_s * task.sample_rate)
    white = gaussian_noise(n, seed=int(rng.integers(2 ** 31)))
    color = NOISE_COLORS[label]
    if color == "white":
        shaped = white
    elif color == "lowpass":
        # one-pole smoother, ~800 Hz corner at 16 kHz
        shaped = lfilter([0.27], [1.0, -0.73], white)
    else:
        shaped = np.diff(white, prepend=0.0)
    shaped = shaped / float(np.sqrt(np.mean(shaped ** 2)))
    amp = rng.uniform(0.25, 1.0)
    return Waveform(amp * shaped, task.sample_rate)


def generate_example(task: TaskSpec, label: int, seed: int) -> Waveform:
    """Deterministic example for (task, label, seed), noise included."""
    if not 0 <= label < task.num_classes:
        raise ValueError(f"label {label} out of range for {task.name}")
    rng = _rng_for(task, label, seed)
    if task.name == "pitch":
        clean = _pitch_example(task, label, rng)
    elif task.name == "am":
        clean = _am_example(task, label, rng)
    elif task.name == "noisecolor":
        clean = _noise_color_example(task, label, rng)
    else:
        raise UnknownTask(f"no task generator named {task.name!r}")
    return add_noise_snr(clean, task.snr_db, seed=int(rng.integers(2 ** 31)))


def sample_batch(tasks: list[TaskSpec], batch_size: int, seed: int, step: int):
    """One training mini-batch, tasks drawn uniformly per slot.

    Returns a list of (Waveform, label, task_index) triples, deterministic
    in (seed, step).
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, step]))
    batch = []
    for slot in range(batch_size):
        k = int(rng.integers(len(tasks)))
        label = int(rng.integers(tasks[k].num_classes))
        example_seed = int(rng.integers(2 ** 31))
        batch.append((generate_example(tasks[k], label, example_seed), label, k))
    return batch


def test_set(task: TaskSpec, n_examples: int, seed: int):
    """Balanced held-out set; the seed namespace is disjoint from training."""
    out = []
    for i in range(n_examples):
        label = i % task.num_classes
        example_seed = int(
            np.random.default_rng(np.random.SeedSequence([seed, 0x7E57, i])).integers(2 ** 31)
        )
        out.append((generate_example(task, label, example_seed), label))
    return out
