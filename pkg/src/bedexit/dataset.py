"""Dataset assembly: episodes -> labeled windows -> encoded image pairs.

Three interchangeable sources feed training and evaluation, all producing
the same uint8 image tensors for a given config + seed:

* in-memory synthesis (episodes never touch disk)
* an episode directory written by the `synth` subcommand
  (``episodes/<id>/{raw.csv,labels.csv}``)
* an image directory written by the `encode` subcommand
  (``<split>/{<id>_line.png,<id>_texture.png,manifest.csv}``)

Images are stored as 8-bit RGB throughout, so the PNG round trip is exact
and the three sources are bit-equivalent.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, EmptySplitError, InfeasibleFractionError
from .imaging import EncodingConfig, encode_window_pair
from .io import (
    read_labels_csv,
    read_manifest_csv,
    read_raw_stream,
    write_labels_csv,
    write_manifest_csv,
    write_raw_csv,
)
from .rng import stream
from .signals import WindowSpec, derive_frame, extract_window_at
from .synth import (
    WINDOW_GRID_S,
    Episode,
    SynthConfig,
    generate_episode,
    split_episodes,
)

SPLITS = ("train", "val", "test")


def worker_count() -> int:
    """Bounded worker pool size; BEDEXIT_WORKERS overrides the default of 1."""
    raw = os.environ.get("BEDEXIT_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise DataError(f"BEDEXIT_WORKERS must be an integer, got {raw!r}") from exc
    return max(1, n)


def _grid_inside(start: float, end: float, grid_s: float = WINDOW_GRID_S) -> list[float]:
    """Multiples of grid_s strictly inside (start, end)."""
    k = int(np.floor(start / grid_s)) + 1
    out = []
    while k * grid_s < end:
        out.append(k * grid_s)
        k += 1
    return out


def select_window_t_ends(
    intervals: list[tuple[float, float, str]],
    positive_fraction: float,
    seed: int,
    episode_id: str,
) -> tuple[list[float], list[float]]:
    """(positive, negative) window end times for one episode.

    Positives take every grid point inside transition intervals (midpoint
    fallback if a transition is too short to contain one); negatives are
    drawn without replacement from the non_active grid so the episode lands
    on positive_fraction, rounded to the nearest count.
    """
    positives: list[float] = []
    candidates: list[float] = []
    for start, end, label in intervals:
        if label == "transition":
            inside = _grid_inside(start, end)
            positives.extend(inside if inside else [(start + end) / 2.0])
        elif label == "non_active":
            candidates.extend(_grid_inside(start, end))
    if not positives:
        raise DataError(f"episode {episode_id} has no transition interval")
    n_neg = int(round(len(positives) * (1.0 - positive_fraction) / positive_fraction))
    if n_neg > len(candidates):
        raise InfeasibleFractionError(
            f"episode {episode_id}: need {n_neg} negative windows, "
            f"only {len(candidates)} non-active candidates"
        )
    rng = stream(seed, f"negatives-{episode_id}")
    chosen = rng.choice(len(candidates), size=n_neg, replace=False)
    negatives = sorted(candidates[int(i)] for i in chosen)
    return positives, negatives


@dataclass
class EncodedSplit:
    """All encoded windows of one split, images as 8-bit RGB."""

    ids: list[str]
    labels: np.ndarray  # (N,) int64
    t_ends: np.ndarray  # (N,) float64
    line: np.ndarray    # (N, S, S, 3) uint8
    texture: np.ndarray  # (N, S, S, 3) uint8

    def __len__(self) -> int:
        return len(self.ids)

    @staticmethod
    def concat(parts: list["EncodedSplit"]) -> "EncodedSplit":
        if not parts:
            raise EmptySplitError("split contains no windows")
        return EncodedSplit(
            ids=[i for p in parts for i in p.ids],
            labels=np.concatenate([p.labels for p in parts]),
            t_ends=np.concatenate([p.t_ends for p in parts]),
            line=np.concatenate([p.line for p in parts]),
            texture=np.concatenate([p.texture for p in parts]),
        )


def encode_episode(
    episode: Episode,
    window_spec: WindowSpec,
    encoding: EncodingConfig,
    positive_fraction: float,
    seed: int,
) -> EncodedSplit:
    """Derive channels, pick window ends, and encode both image modalities."""
    frame = derive_frame(episode.raw)
    pos, neg = select_window_t_ends(
        episode.intervals, positive_fraction, seed, episode.episode_id
    )
    entries = sorted([(t, 1) for t in pos] + [(t, 0) for t in neg])
    ids, labels, t_ends, lines, textures = [], [], [], [], []
    for k, (t_end, label) in enumerate(entries):
        window = extract_window_at(frame, window_spec, t_end, label=label)
        line_img, texture_img = encode_window_pair(window, encoding)
        ids.append(f"{episode.episode_id}_w{k:03d}")
        labels.append(label)
        t_ends.append(t_end)
        lines.append(line_img.to_uint8())
        textures.append(texture_img.to_uint8())
    return EncodedSplit(
        ids=ids,
        labels=np.asarray(labels, dtype=np.int64),
        t_ends=np.asarray(t_ends),
        line=np.stack(lines),
        texture=np.stack(textures),
    )


def _episode_source_synth(args) -> EncodedSplit:
    synth_config, index, window_spec, encoding = args
    episode = generate_episode(synth_config, index)
    return encode_episode(
        episode, window_spec, encoding, synth_config.positive_fraction, synth_config.seed
    )


def _episode_source_dir(args) -> EncodedSplit:
    data_dir, index, sample_rate_hz, window_spec, encoding, positive_fraction, seed = args
    episode = load_episode_dir(data_dir, index, sample_rate_hz)
    return encode_episode(episode, window_spec, encoding, positive_fraction, seed)


def _map_episodes(task, arg_list):
    workers = worker_count()
    if workers > 1 and len(arg_list) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(task, arg_list))
    return [task(args) for args in arg_list]


def encoded_dataset_from_synth(
    synth_config: SynthConfig,
    window_spec: WindowSpec,
    encoding: EncodingConfig,
) -> dict[str, EncodedSplit]:
    """Generate, derive, and encode every episode fully in memory."""
    splits = split_episodes(synth_config)
    args = [
        (synth_config, index, window_spec, encoding)
        for name in SPLITS
        for index in splits[name]
    ]
    encoded = _map_episodes(_episode_source_synth, args)
    out: dict[str, EncodedSplit] = {}
    cursor = 0
    for name in SPLITS:
        part = encoded[cursor : cursor + len(splits[name])]
        cursor += len(splits[name])
        out[name] = EncodedSplit.concat(part)
    return out


# ---------------------------------------------------------------------------
# episode directories (synth subcommand output)


def episode_dir_name(index: int) -> str:
    return f"ep{index:04d}"


def write_episode_dir(out_dir: str | Path, episode: Episode) -> Path:
    ep_dir = Path(out_dir) / "episodes" / episode.episode_id
    write_raw_csv(ep_dir / "raw.csv", episode.raw)
    write_labels_csv(ep_dir / "labels.csv", episode.intervals)
    return ep_dir


def write_episodes(synth_config: SynthConfig, out_dir: str | Path) -> list[Path]:
    """Materialize every episode as episodes/<id>/{raw.csv,labels.csv}."""
    synth_config.validate()
    paths = []
    for index in range(synth_config.n_episodes):
        paths.append(write_episode_dir(out_dir, generate_episode(synth_config, index)))
    return paths


def load_episode_dir(data_dir: str | Path, index: int, sample_rate_hz: float) -> Episode:
    ep_dir = Path(data_dir) / "episodes" / episode_dir_name(index)
    raw_csv = ep_dir / "raw.csv"
    raw_jsonl = ep_dir / "raw.jsonl"
    raw_path = raw_csv if raw_csv.exists() else raw_jsonl
    raw = read_raw_stream(raw_path, sample_rate_hz)
    intervals = read_labels_csv(ep_dir / "labels.csv")
    return Episode(episode_index=index, raw=raw, intervals=intervals)


def count_episode_dirs(data_dir: str | Path) -> int:
    root = Path(data_dir) / "episodes"
    if not root.is_dir():
        raise DataError(f"no episodes directory under {data_dir}")
    return sum(1 for p in root.iterdir() if p.is_dir() and p.name.startswith("ep"))


def encoded_dataset_from_episode_dir(
    data_dir: str | Path,
    synth_config: SynthConfig,
    window_spec: WindowSpec,
    encoding: EncodingConfig,
) -> dict[str, EncodedSplit]:
    """Encode episodes previously written to disk; split as at synth time."""
    n = count_episode_dirs(data_dir)
    if n != synth_config.n_episodes:
        raise DataError(
            f"{data_dir} holds {n} episodes but the config declares "
            f"{synth_config.n_episodes}"
        )
    splits = split_episodes(synth_config)
    args = [
        (
            data_dir,
            index,
            synth_config.sample_rate_hz,
            window_spec,
            encoding,
            synth_config.positive_fraction,
            synth_config.seed,
        )
        for name in SPLITS
        for index in splits[name]
    ]
    encoded = _map_episodes(_episode_source_dir, args)
    out: dict[str, EncodedSplit] = {}
    cursor = 0
    for name in SPLITS:
        part = encoded[cursor : cursor + len(splits[name])]
        cursor += len(splits[name])
        out[name] = EncodedSplit.concat(part)
    return out


# ---------------------------------------------------------------------------
# image directories (encode subcommand output)


def write_images_dataset(dataset: dict[str, EncodedSplit], out_dir: str | Path) -> None:
    """Per-split PNG pairs plus a manifest CSV."""
    from .imaging import ImageTensor, save_png

    for name, split in dataset.items():
        split_dir = Path(out_dir) / name
        split_dir.mkdir(parents=True, exist_ok=True)
        for k, wid in enumerate(split.ids):
            for kind, stack in (("line", split.line), ("texture", split.texture)):
                img = ImageTensor(values=stack[k].astype(np.float32) / 255.0)
                save_png(split_dir / f"{wid}_{kind}.png", img)
        write_manifest_csv(
            split_dir / "manifest.csv",
            zip(split.ids, split.labels.tolist(), split.t_ends.tolist()),
        )


def encoded_dataset_from_images_dir(images_dir: str | Path) -> dict[str, EncodedSplit]:
    """Load PNG pairs back; exact inverse of write_images_dataset."""
    out: dict[str, EncodedSplit] = {}
    for name in SPLITS:
        split_dir = Path(images_dir) / name
        manifest = read_manifest_csv(split_dir / "manifest.csv")
        if not manifest:
            raise EmptySplitError(f"{split_dir}: empty manifest")
        ids, labels, t_ends, lines, textures = [], [], [], [], []
        for wid, label, t_end in manifest:
            ids.append(wid)
            labels.append(label)
            t_ends.append(t_end)
            lines.append(_read_png(split_dir / f"{wid}_line.png"))
            textures.append(_read_png(split_dir / f"{wid}_texture.png"))
        out[name] = EncodedSplit(
            ids=ids,
            labels=np.asarray(labels, dtype=np.int64),
            t_ends=np.asarray(t_ends),
            line=np.stack(lines),
            texture=np.stack(textures),
        )
    return out


def _read_png(path: Path) -> np.ndarray:
    if not path.exists():
        raise DataError(f"image not found: {path}")
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return arr
