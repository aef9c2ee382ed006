"""Seeded generator of labeled bed-load episodes.

Every episode walks through five phases that tile its duration:

    empty (fixed lead-in) -> non_active (stable in-bed) -> transition
    (pre-exit agitation) -> exit (monotone drop to tare) -> empty (tail)

The stable phase is the tare plus body weight with Gaussian sensor noise and
sparse raised-cosine "reposition" bumps. The transition phase carries the
exit-intent signature: a body-rock oscillation inside the vibration band
whose envelope ramps up over the opening stretch of the transition and then
holds, plus a smooth drift of weight off the sensor as the sleeper moves
toward the bed edge. Everything is a pure function of (seed, episode_index)
through named per-purpose random streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .rng import stream
from .signals import RawStream

# transition signature: oscillation inside the 0.5-10 Hz vibration band with
# a ramp-then-hold envelope, plus a smoothstep drift toward the bed edge
OSC_FREQ_HZ = (0.7, 3.0)
OSC_AMP_FRAC = (0.05, 0.15)    # of body weight, at full envelope
OSC_RAMP_FRAC = 0.15           # fraction of the transition over which the
                               # oscillation envelope ramps from 0 to full
DRIFT_FRAC = (0.12, 0.20)      # of body weight, at transition end
BUMP_AMP_FRAC = (0.03, 0.10)   # of body weight, either sign
BUMP_DURATION_S = (5.0, 20.0)
EXIT_SECONDS = (2.0, 5.0)

SPLIT_FRACTIONS = (0.6, 0.2)  # train, val; test takes the rest
WINDOW_GRID_S = 60.0          # candidate t_end spacing inside labeled phases


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 42
    sample_rate_hz: float = 25.0
    n_episodes: int = 10
    body_weight_kg: tuple[float, float] = (45.0, 95.0)
    tare_kg: tuple[float, float] = (3.0, 8.0)
    transition_minutes: tuple[float, float] = (1.0, 10.0)
    stable_hours: tuple[float, float] = (2.0, 8.0)
    reposition_rate_per_hour: float = 2.0
    noise_std_kg: float = 0.05
    positive_fraction: float = 0.5
    lead_in_s: float = 900.0
    tail_s: float = 300.0

    def validate(self) -> "SynthConfig":
        for name in ("body_weight_kg", "tare_kg", "transition_minutes", "stable_hours"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi):
                raise ConfigError(f"{name} range must satisfy 0 <= lo <= hi")
        if self.sample_rate_hz <= 0:
            raise ConfigError("sample_rate_hz must be positive")
        if self.n_episodes < 1:
            raise ConfigError("n_episodes must be >= 1")
        if self.reposition_rate_per_hour < 0 or self.noise_std_kg < 0:
            raise ConfigError("rates and noise must be non-negative")
        if not (0.0 < self.positive_fraction < 1.0):
            raise ConfigError("positive_fraction must lie in (0, 1)")
        if self.lead_in_s < 60.0 or self.tail_s < 0.0:
            raise ConfigError("lead_in_s must be >= 60 and tail_s >= 0")
        return self


@dataclass(frozen=True)
class EpisodeParams:
    """Scalar draws that fix an episode's skeleton (no sample arrays)."""

    tare_kg: float
    weight_kg: float
    stable_s: float
    transition_s: float
    exit_s: float
    osc_freq_hz: float
    osc_amp_kg: float
    drift_kg: float
    osc_phase: float

    def boundaries(self, config: SynthConfig) -> tuple[float, float, float, float, float]:
        """Sample-snapped phase edges t1..t5 in seconds."""
        fs = config.sample_rate_hz

        def snap(seconds: float) -> int:
            return max(1, int(round(seconds * fs)))

        n1 = snap(config.lead_in_s)
        n2 = n1 + snap(self.stable_s)
        n3 = n2 + snap(self.transition_s)
        n4 = n3 + snap(self.exit_s)
        n5 = n4 + snap(config.tail_s)
        return (n1 / fs, n2 / fs, n3 / fs, n4 / fs, n5 / fs)


@dataclass(frozen=True)
class Episode:
    episode_index: int
    raw: RawStream
    intervals: list[tuple[float, float, str]]

    @property
    def episode_id(self) -> str:
        return f"ep{self.episode_index:04d}"

    def interval(self, label: str) -> tuple[float, float]:
        for start, end, name in self.intervals:
            if name == label:
                return start, end
        raise DataError(f"episode has no {label!r} interval")

    @property
    def transition_start_s(self) -> float:
        return self.interval("transition")[0]

    @property
    def exit_start_s(self) -> float:
        return self.interval("exit")[0]


def _draw_params(rng: np.random.Generator, config: SynthConfig) -> EpisodeParams:
    """Fixed draw order shared by episode_params and generate_episode."""
    tare = rng.uniform(*config.tare_kg)
    weight = rng.uniform(*config.body_weight_kg)
    stable_s = rng.uniform(*config.stable_hours) * 3600.0
    transition_s = rng.uniform(*config.transition_minutes) * 60.0
    exit_s = rng.uniform(*EXIT_SECONDS)
    osc_freq = rng.uniform(*OSC_FREQ_HZ)
    osc_amp = rng.uniform(*OSC_AMP_FRAC) * weight
    drift = rng.uniform(*DRIFT_FRAC) * weight
    osc_phase = rng.uniform(0.0, 2.0 * np.pi)
    return EpisodeParams(
        tare_kg=tare, weight_kg=weight, stable_s=stable_s,
        transition_s=transition_s, exit_s=exit_s, osc_freq_hz=osc_freq,
        osc_amp_kg=osc_amp, drift_kg=drift, osc_phase=osc_phase,
    )


def episode_params(config: SynthConfig, episode_index: int) -> EpisodeParams:
    """Episode skeleton without materializing any sample arrays."""
    config.validate()
    return _draw_params(stream(config.seed, f"episode-{episode_index}"), config)


def _smoothstep(tau: np.ndarray) -> np.ndarray:
    return tau * tau * (3.0 - 2.0 * tau)


def generate_episode(config: SynthConfig, episode_index: int) -> Episode:
    """Materialize one episode, bit-reproducible per (seed, episode_index)."""
    config.validate()
    rng = stream(config.seed, f"episode-{episode_index}")
    p = _draw_params(rng, config)
    fs = config.sample_rate_hz

    t1, t2, t3, t4, t5 = p.boundaries(config)
    n1, n2, n3, n4, n5 = (int(round(t * fs)) for t in (t1, t2, t3, t4, t5))

    load = np.empty(n5)
    load[:n1] = p.tare_kg
    load[n1:n2] = p.tare_kg + p.weight_kg

    # sparse reposition bumps within the stable phase
    stable_len = n2 - n1
    n_bumps = rng.poisson(config.reposition_rate_per_hour * (stable_len / fs) / 3600.0)
    for _ in range(n_bumps):
        dur_s = rng.uniform(*BUMP_DURATION_S)
        dur = max(2, int(round(dur_s * fs)))
        start = int(rng.integers(0, max(1, stable_len - dur)))
        amp = rng.uniform(*BUMP_AMP_FRAC) * p.weight_kg
        if rng.random() < 0.5:
            amp = -amp
        tau = np.arange(dur) / (dur - 1)
        load[n1 + start : n1 + start + dur] += amp * 0.5 * (1.0 - np.cos(2.0 * np.pi * tau))

    # transition: growing oscillation + drift toward the bed edge; the
    # envelope reaches full amplitude early so the signature is present from
    # the first minute of even a long transition
    n_trans = n3 - n2
    tau = np.arange(n_trans) / max(1, n_trans - 1)
    t_rel = np.arange(n_trans) / fs
    env = np.clip(tau / OSC_RAMP_FRAC, 0.0, 1.0)
    osc = env * p.osc_amp_kg * np.sin(2.0 * np.pi * p.osc_freq_hz * t_rel + p.osc_phase)
    load[n2:n3] = p.tare_kg + p.weight_kg - p.drift_kg * _smoothstep(tau) + osc

    # exit: monotone drop from the drifted level to tare
    n_exit = n4 - n3
    tau = np.arange(1, n_exit + 1) / n_exit
    start_level = p.tare_kg + p.weight_kg - p.drift_kg
    load[n3:n4] = start_level - (start_level - p.tare_kg) * _smoothstep(tau)

    load[n4:] = p.tare_kg

    if config.noise_std_kg > 0:
        load = load + rng.normal(0.0, config.noise_std_kg, n5)
    load = np.maximum(load, 0.0)

    raw = RawStream(
        sample_rate_hz=fs,
        timestamps=np.arange(n5) / fs,
        load=load,
    ).validate()
    intervals = [
        (0.0, t1, "empty"),
        (t1, t2, "non_active"),
        (t2, t3, "transition"),
        (t3, t4, "exit"),
        (t4, t5, "empty"),
    ]
    return Episode(episode_index=episode_index, raw=raw, intervals=intervals)


def ground_truth_occupancy(episode: Episode) -> np.ndarray:
    """1 while the sleeper is on the bed (entry through end of exit drop)."""
    fs = episode.raw.sample_rate_hz
    t = episode.raw.timestamps
    t1, _ = episode.interval("non_active")
    t4 = episode.interval("exit")[1]
    return ((t >= t1) & (t < t4)).astype(np.int8)


def split_episodes(config: SynthConfig) -> dict[str, list[int]]:
    """Episode-level 60/20/20 split; no episode appears in two splits."""
    config.validate()
    if config.n_episodes < 10:
        raise DataError("need at least 10 episodes for a 60/20/20 split")
    order = stream(config.seed, "split").permutation(config.n_episodes)
    n_train = int(SPLIT_FRACTIONS[0] * config.n_episodes)
    n_val = int(SPLIT_FRACTIONS[1] * config.n_episodes)
    return {
        "train": sorted(int(i) for i in order[:n_train]),
        "val": sorted(int(i) for i in order[n_train : n_train + n_val]),
        "test": sorted(int(i) for i in order[n_train + n_val :]),
    }


def intervals_from_params(config: SynthConfig, episode_index: int) -> list[tuple[float, float, str]]:
    """Labeled phase intervals without materializing sample arrays."""
    t1, t2, t3, t4, t5 = episode_params(config, episode_index).boundaries(config)
    return [
        (0.0, t1, "empty"),
        (t1, t2, "non_active"),
        (t2, t3, "transition"),
        (t3, t4, "exit"),
        (t4, t5, "empty"),
    ]
