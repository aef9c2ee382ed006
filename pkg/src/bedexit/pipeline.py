"""Subcommand implementations behind the CLI (also the library entry points).

Dataset sourcing precedence for train/eval: an image directory if configured,
else an episode directory, else in-memory synthesis. All sources are exact
(8-bit images, shortest-round-trip floats), so a given config + seed yields
the same dataset regardless of which intermediate artifacts hit disk.

Images consumed by the model are encoded at ``model.input_size``; the
`encode` subcommand's PNG artifacts use ``encoding.image_size``. When the two
differ, images loaded from disk are bilinearly resized (and re-quantized to
8 bits) before training.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from .config import RunConfig
from .dataset import (
    EncodedSplit,
    SPLITS,
    encoded_dataset_from_episode_dir,
    encoded_dataset_from_images_dir,
    encoded_dataset_from_synth,
    write_episodes,
    write_images_dataset,
)
from .errors import CheckpointFormatError, CheckpointMismatchError, ConfigError, DataError
from .imaging import (
    EncodingConfig,
    ImageTensor,
    bilinear_resize,
    encode_window_pair,
    render_trace_image,
    save_png,
)
from .io import (
    atomic_write_text,
    read_labels_csv,
    read_raw_stream,
    write_json,
    write_trace_csv,
    write_training_log_csv,
)
from .metrics import EvalReport, evaluate
from .model import BedExitModel, predict_probs
from .signals import derive_frame, extract_window_at
from .training import TrainResult, train

ALARM_THRESHOLD = 0.5


def effective_encoding(config: RunConfig) -> EncodingConfig:
    """Encoding used for model-bound images: sized to the model input."""
    return dataclasses.replace(
        config.encoding, image_size=config.model.input_size
    ).validate()


def echo_config(config: RunConfig, out_dir: str | Path) -> None:
    """Drop a verbatim copy of the run config for provenance."""
    atomic_write_text(Path(out_dir) / "config.yaml", config.source_text)


def _resize_split(split: EncodedSplit, size: int) -> EncodedSplit:
    if split.line.shape[1] == size:
        return split

    def resize_stack(stack: np.ndarray) -> np.ndarray:
        out = np.empty((len(stack), size, size, 3), dtype=np.uint8)
        for i, img in enumerate(stack):
            chans = [
                bilinear_resize(img[:, :, c].astype(float) / 255.0, size)
                for c in range(3)
            ]
            out[i] = np.floor(np.clip(np.stack(chans, axis=-1), 0, 1) * 255.0 + 0.5)
        return out

    return EncodedSplit(
        ids=split.ids,
        labels=split.labels,
        t_ends=split.t_ends,
        line=resize_stack(split.line),
        texture=resize_stack(split.texture),
    )


def build_dataset(config: RunConfig, image_size: int | None = None) -> dict[str, EncodedSplit]:
    """Encoded splits from the best available source (images > episodes > synth)."""
    size = image_size if image_size is not None else config.model.input_size
    encoding = dataclasses.replace(config.encoding, image_size=size).validate()
    paths = config.paths
    if paths.images_dir and Path(paths.images_dir).is_dir():
        dataset = encoded_dataset_from_images_dir(paths.images_dir)
        return {name: _resize_split(split, size) for name, split in dataset.items()}
    spec = config.signal.window_spec()
    if paths.data_dir and Path(paths.data_dir).is_dir():
        return encoded_dataset_from_episode_dir(paths.data_dir, config.synth, spec, encoding)
    return encoded_dataset_from_synth(config.synth, spec, encoding)


def cmd_synth(config: RunConfig, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    paths = write_episodes(config.synth, out_dir)
    echo_config(config, out_dir)
    return paths


def cmd_encode(config: RunConfig, out_dir: str | Path) -> dict[str, EncodedSplit]:
    """Encode image pairs + manifests at the artifact image size."""
    out_dir = Path(out_dir)
    encoding = config.encoding.validate()
    spec = config.signal.window_spec()
    if config.paths.data_dir and Path(config.paths.data_dir).is_dir():
        dataset = encoded_dataset_from_episode_dir(
            config.paths.data_dir, config.synth, spec, encoding
        )
    else:
        dataset = encoded_dataset_from_synth(config.synth, spec, encoding)
    write_images_dataset(dataset, out_dir)
    echo_config(config, out_dir)
    return dataset


def cmd_train(config: RunConfig, out_dir: str | Path) -> tuple[Path, TrainResult]:
    out_dir = Path(out_dir)
    dataset = build_dataset(config)
    result = train(dataset, config.model, config.training)
    ckpt_path = out_dir / "checkpoint.bdxc"
    ckpt.save_checkpoint(ckpt_path, result.model)
    write_training_log_csv(out_dir / "training_log.csv", result.log)
    echo_config(config, out_dir)
    return ckpt_path, result


def load_model_for(config: RunConfig, checkpoint_path: str | Path) -> BedExitModel:
    """Load a checkpoint, requiring it to match the configured model exactly."""
    checkpoint_path = Path(checkpoint_path)
    if not checkpoint_path.exists():
        raise CheckpointFormatError(f"checkpoint not found: {checkpoint_path}")
    saved_config, tensors = ckpt.deserialize(checkpoint_path.read_bytes())
    if saved_config != config.model:
        diffs = [
            f.name
            for f in dataclasses.fields(saved_config)
            if getattr(saved_config, f.name) != getattr(config.model, f.name)
        ]
        raise CheckpointMismatchError(
            f"checkpoint model config differs from run config in: {', '.join(diffs)}"
        )
    torch.set_num_threads(1)
    model = BedExitModel(saved_config)
    ckpt.load_state_into(model, tensors)
    model.eval()
    return model


def eval_report(model: BedExitModel, split: EncodedSplit) -> tuple[EvalReport, np.ndarray]:
    line = torch.from_numpy(split.line).float().div_(255.0)
    texture = torch.from_numpy(split.texture).float().div_(255.0)
    probs = predict_probs(model, line, texture)
    return evaluate(probs, split.labels, threshold=ALARM_THRESHOLD), probs


def cmd_eval(
    config: RunConfig, checkpoint_path: str | Path, split: str, out_dir: str | Path
) -> EvalReport:
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}")
    out_dir = Path(out_dir)
    model = load_model_for(config, checkpoint_path)
    dataset = build_dataset(config)
    report, _ = eval_report(model, dataset[split])
    write_json(out_dir / f"metrics_{split}.json", report.to_dict())
    echo_config(config, out_dir)
    return report


def _stride_windows(config: RunConfig, raw_path: str | Path):
    """(t_end, line, texture) for every stride step over a raw stream."""
    spec = config.signal.window_spec()
    raw = read_raw_stream(raw_path, config.signal.sample_rate_hz)
    frame = derive_frame(raw)
    encoding = effective_encoding(config)
    fs = frame.sample_rate_hz
    out = []
    k = 1
    while int(round(k * spec.stride_s * fs)) <= len(frame):
        t_end = k * spec.stride_s
        window = extract_window_at(frame, spec, t_end)
        line, texture = encode_window_pair(window, encoding)
        out.append((t_end, line, texture))
        k += 1
    if not out:
        raise DataError("stream shorter than one stride step")
    return out


def _window_probs(model: BedExitModel, triples) -> np.ndarray:
    # quantize to 8 bits exactly as the training datasets are stored
    line = torch.from_numpy(np.stack([t[1].to_uint8() for t in triples]))
    texture = torch.from_numpy(np.stack([t[2].to_uint8() for t in triples]))
    return predict_probs(model, line.float().div_(255.0), texture.float().div_(255.0))


def cmd_predict(
    config: RunConfig, checkpoint_path: str | Path, raw_path: str | Path,
    out_dir: str | Path,
) -> list[dict]:
    out_dir = Path(out_dir)
    model = load_model_for(config, checkpoint_path)
    triples = _stride_windows(config, raw_path)
    probs = _window_probs(model, triples)
    records = [
        {
            "id": f"w{k:04d}",
            "t_end": t_end,
            "probability": float(p),
            "alarm": bool(p >= ALARM_THRESHOLD),
        }
        for k, ((t_end, _, _), p) in enumerate(zip(triples, probs))
    ]
    write_json(out_dir / "predictions.json", records)
    echo_config(config, out_dir)
    return records


def cmd_trace(
    config: RunConfig, checkpoint_path: str | Path, episode_path: str | Path,
    out_dir: str | Path,
) -> list[tuple[float, float, bool]]:
    """Probability trace over one episode: CSV + rendered overview PNG."""
    out_dir = Path(out_dir)
    episode_path = Path(episode_path)
    raw_path = episode_path / "raw.csv" if episode_path.is_dir() else episode_path
    model = load_model_for(config, checkpoint_path)
    triples = _stride_windows(config, raw_path)
    probs = _window_probs(model, triples)
    rows = [
        (t_end, float(p), bool(p >= ALARM_THRESHOLD))
        for (t_end, _, _), p in zip(triples, probs)
    ]
    write_trace_csv(out_dir / "trace.csv", rows)

    raw = read_raw_stream(raw_path, config.signal.sample_rate_hz)
    image = render_trace_image(
        raw.timestamps,
        raw.load,
        np.array([r[0] for r in rows]),
        np.array([r[1] for r in rows]),
        threshold=ALARM_THRESHOLD,
    )
    save_png(out_dir / "trace.png", image)
    echo_config(config, out_dir)
    return rows
