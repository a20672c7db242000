"""Local classifier fine-tuning on a labeled image folder.

The recipe: initialize a small backbone, add a fresh normalization
layer and linear head, train with cross-entropy under AdamW and a
cosine learning-rate schedule.  Labels live in a ``labels.json`` file
mapping image filename to class name (aliases allowed); label names are
validated against the class table before any training starts.

The training log records the full-dataset loss before the first step
and after the last one, plus every per-batch loss in between, so a
smoke test can assert the loss actually went down.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .classtable import ClassTable
from .config import AdapterConfig
from .errors import AdapterError, CategoryMismatchError
from .features import FEATURE_DIM, image_features
from .interchange import atomic_write_text, canonical_json


def build_classifier_net(num_classes: int):
    """Backbone, a new normalization layer, then the classification head."""
    import torch.nn as nn

    hidden = 64
    return nn.Sequential(
        nn.Linear(FEATURE_DIM, hidden),
        nn.ReLU(),
        nn.LayerNorm(hidden),
        nn.Linear(hidden, num_classes),
    )


def load_training_set(
    data_dir: Path | str, class_table: ClassTable
) -> list[tuple[Path, str]]:
    """(image path, canonical class name) pairs; fails on unknown names."""
    data_dir = Path(data_dir)
    labels_path = data_dir / "labels.json"
    if not labels_path.is_file():
        raise AdapterError(f"no labels.json under {data_dir}")
    try:
        raw = json.loads(labels_path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise AdapterError(f"{labels_path}: malformed JSON: {exc}") from exc
    if not isinstance(raw, dict) or not raw:
        raise AdapterError(f"{labels_path}: expected a non-empty filename -> class map")

    unknown = class_table.unknown_names(raw.values())
    if unknown:
        raise CategoryMismatchError(
            f"labels use class names missing from the class table: {unknown}"
        )
    items = []
    for filename, label in sorted(raw.items()):
        path = data_dir / filename
        if not path.is_file():
            raise AdapterError(f"labeled image {path} does not exist")
        items.append((path, class_table.name_of(class_table.resolve(label))))
    return items


def finetune_classifier(
    data_dir: Path | str,
    class_table: ClassTable | Path | str,
    out_checkpoint: Path | str,
    *,
    config: AdapterConfig | None = None,
    dry_run: bool = False,
    log_path: Path | str | None = None,
) -> dict:
    """Train the local classifier; returns a summary dict.

    Dry runs echo the effective recipe and run zero steps without
    touching the filesystem.
    """
    config = config or AdapterConfig()
    if not isinstance(class_table, ClassTable):
        class_table = ClassTable.load(class_table)
    items = load_training_set(data_dir, class_table)  # validates before training

    if dry_run:
        return {"config": config.echo(), "steps_run": 0, "checkpoint": None, "log": None}

    import torch

    torch.manual_seed(config.seed)
    classes = class_table.foreground_names()
    class_index = {name: i for i, name in enumerate(classes)}

    feats = [image_features(path) for path, _ in items]
    targets = [class_index[name] for _, name in items]
    if "horizontal_flip" in config.augmentations:
        feats += [image_features(path, flip=True) for path, _ in items]
        targets += targets
    x = torch.from_numpy(np.stack(feats))
    y = torch.tensor(targets, dtype=torch.long)

    net = build_classifier_net(len(classes))
    loss_fn = torch.nn.CrossEntropyLoss()
    optimizer = torch.optim.AdamW(
        net.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    steps_per_epoch = (len(x) + config.batch_size - 1) // config.batch_size
    total_steps = steps_per_epoch * config.epochs
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=total_steps)

    def full_loss() -> float:
        net.eval()
        with torch.no_grad():
            value = float(loss_fn(net(x), y))
        net.train()
        return value

    entries = [{"step": 0, "kind": "full", "loss": full_loss()}]
    generator = torch.Generator().manual_seed(config.seed)
    step = 0
    for _epoch in range(config.epochs):
        order = torch.randperm(len(x), generator=generator)
        for start in range(0, len(x), config.batch_size):
            batch = order[start : start + config.batch_size]
            optimizer.zero_grad()
            loss = loss_fn(net(x[batch]), y[batch])
            loss.backward()
            optimizer.step()
            scheduler.step()
            step += 1
            entries.append(
                {
                    "step": step,
                    "kind": "batch",
                    "loss": float(loss.detach()),
                    "lr": float(scheduler.get_last_lr()[0]),
                }
            )
    entries.append({"step": step, "kind": "full", "loss": full_loss()})

    out_checkpoint = Path(out_checkpoint)
    out_checkpoint.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(
        dir=out_checkpoint.parent, prefix=f".{out_checkpoint.name}.", suffix=".tmp"
    )
    os.close(fd)
    try:
        torch.save(
            {"state_dict": net.state_dict(), "classes": classes, "config": config.echo()},
            tmp,
        )
        os.replace(tmp, out_checkpoint)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise

    log_path = Path(log_path) if log_path else out_checkpoint.with_suffix(".log.json")
    atomic_write_text(
        log_path, canonical_json({"config": config.echo(), "entries": entries})
    )
    return {
        "config": config.echo(),
        "steps_run": step,
        "checkpoint": str(out_checkpoint),
        "log": str(log_path),
        "first_loss": entries[0]["loss"],
        "final_loss": entries[-1]["loss"],
    }
