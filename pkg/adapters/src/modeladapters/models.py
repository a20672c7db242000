"""Model backends behind a common three-role protocol.

A backend supplies classify / detect / segment for one image at a time
plus a checkpoint fingerprint used for idempotent emission.  Two are
provided: a deterministic stub suite for tests and offline work, and a
wrapper suite over real vision-language checkpoints (optional import).

The stub's detector and segmenter derive their outputs from a hash of
the image bytes, so records are a pure function of (image content,
prompt, checkpoint).  Its classifier genuinely loads a locally trained
checkpoint when one is configured; otherwise it hashes too.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .config import AdapterConfig
from .errors import ModelLoadError
from .features import image_features
from .interchange import canonical_json

DetectionOut = tuple[tuple[int, int, int, int], float]


def _file_hash(path: str) -> str:
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return f"sha256:{digest}"


class StubModels:
    """Deterministic offline backend; no checkpoints or network needed."""

    name = "stub-suite"

    def __init__(self, config: AdapterConfig | None = None):
        self.config = config or AdapterConfig()
        self._head = None
        ckpt = self.config.classifier_checkpoint
        if ckpt and Path(ckpt).is_file():
            self._head = _TrainedClassifier(ckpt)

    def checkpoint_hash(self) -> str:
        ckpt = self.config.classifier_checkpoint
        if ckpt and Path(ckpt).is_file():
            return _file_hash(ckpt)
        return "none"

    def _rng(self, image_bytes: bytes, *parts: str) -> np.random.Generator:
        h = hashlib.blake2b(digest_size=8)
        h.update(image_bytes)
        for part in parts:
            h.update(part.encode("utf-8"))
        return np.random.default_rng(int.from_bytes(h.digest(), "little"))

    def classify(self, image_path: Path, prompts: dict[str, str]) -> dict[str, float]:
        """name -> score for every requested class name."""
        if self._head is not None:
            return self._head.classify(image_path, list(prompts))
        data = Path(image_path).read_bytes()
        return {
            name: round(float(self._rng(data, "classify", prompt).random()), 6)
            for name, prompt in prompts.items()
        }

    def detect(self, image_path: Path, prompt: str, width: int, height: int) -> list[DetectionOut]:
        data = Path(image_path).read_bytes()
        rng = self._rng(data, "detect", prompt)
        boxes: list[DetectionOut] = []
        for _ in range(int(rng.integers(1, 3))):
            w = int(rng.integers(max(2, width // 4), max(3, width // 2 + 1)))
            h = int(rng.integers(max(2, height // 4), max(3, height // 2 + 1)))
            x0 = int(rng.integers(0, width - w + 1))
            y0 = int(rng.integers(0, height - h + 1))
            score = round(0.5 + 0.5 * float(rng.random()), 6)
            boxes.append(((x0, y0, x0 + w, y0 + h), score))
        return boxes

    def segment(
        self, image_path: Path, box: tuple[int, int, int, int], width: int, height: int
    ) -> list[tuple[np.ndarray, float]]:
        """Full-image boolean masks: an ellipse filling the box, sometimes
        plus a smaller inner one as a second proposal."""
        data = Path(image_path).read_bytes()
        rng = self._rng(data, "segment", repr(box))
        x0, y0, x1, y1 = box
        ys, xs = np.mgrid[0:height, 0:width]
        cx, cy = (x0 + x1 - 1) / 2.0, (y0 + y1 - 1) / 2.0
        out = []
        for shrink in (1.0, 0.6) if rng.random() < 0.5 else (1.0,):
            rx = max((x1 - x0) / 2.0 * shrink, 0.5)
            ry = max((y1 - y0) / 2.0 * shrink, 0.5)
            mask = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
            score = round(0.6 + 0.4 * float(rng.random()), 6)
            if mask.any():
                out.append((mask, score))
        return out


class _TrainedClassifier:
    """Runs a checkpoint produced by finetune_classifier."""

    def __init__(self, path: str):
        import torch

        try:
            blob = torch.load(path, map_location="cpu", weights_only=False)
            self.classes: list[str] = list(blob["classes"])
            self.state = blob["state_dict"]
        except (KeyError, TypeError, RuntimeError) as exc:
            raise ModelLoadError(f"unusable classifier checkpoint {path}: {exc}") from exc
        from .finetune import build_classifier_net

        self.net = build_classifier_net(len(self.classes))
        self.net.load_state_dict(self.state)
        self.net.eval()

    def classify(self, image_path: Path, names: list[str]) -> dict[str, float]:
        import torch

        feats = torch.from_numpy(image_features(image_path)).unsqueeze(0)
        with torch.no_grad():
            probs = torch.softmax(self.net(feats), dim=1)[0]
        by_name = {cls: float(probs[i]) for i, cls in enumerate(self.classes)}
        return {name: round(by_name.get(name, 0.0), 6) for name in names}


class RealModels:
    """Wrappers over hub checkpoints: CLIP-style classifier, grounded
    detector, box-prompted segmenter.  Requires the ``real`` extra and
    downloaded checkpoints; constructing it without them raises
    ModelLoadError rather than failing later mid-batch."""

    name = "transformers-suite"

    def __init__(self, config: AdapterConfig):
        self.config = config
        if not (config.classifier_checkpoint and config.detector_checkpoint
                and config.segmenter_checkpoint):
            raise ModelLoadError("real backend needs all three checkpoint identifiers")
        try:
            import torch  # noqa: F401
            from transformers import (
                AutoModelForZeroShotObjectDetection,
                AutoProcessor,
                CLIPModel,
                CLIPProcessor,
                SamModel,
                SamProcessor,
            )
        except ImportError as exc:
            raise ModelLoadError(
                "real backend needs the 'real' extra (pip install modeladapters[real])"
            ) from exc
        try:
            self._clip = CLIPModel.from_pretrained(config.classifier_checkpoint)
            self._clip_proc = CLIPProcessor.from_pretrained(config.classifier_checkpoint)
            self._det = AutoModelForZeroShotObjectDetection.from_pretrained(
                config.detector_checkpoint
            )
            self._det_proc = AutoProcessor.from_pretrained(config.detector_checkpoint)
            self._sam = SamModel.from_pretrained(config.segmenter_checkpoint)
            self._sam_proc = SamProcessor.from_pretrained(config.segmenter_checkpoint)
        except OSError as exc:
            raise ModelLoadError(f"could not load checkpoints: {exc}") from exc

    def checkpoint_hash(self) -> str:
        ids = canonical_json(
            [
                self.config.classifier_checkpoint,
                self.config.detector_checkpoint,
                self.config.segmenter_checkpoint,
            ]
        )
        return "ids-sha256:" + hashlib.sha256(ids.encode("utf-8")).hexdigest()

    def classify(self, image_path: Path, prompts: dict[str, str]) -> dict[str, float]:
        import torch
        from PIL import Image

        names = list(prompts)
        with Image.open(image_path) as img:
            inputs = self._clip_proc(
                text=[prompts[n] for n in names],
                images=img.convert("RGB"),
                return_tensors="pt",
                padding=True,
            )
        with torch.no_grad():
            logits = self._clip(**inputs).logits_per_image[0]
        probs = torch.sigmoid(logits)  # independent per-class presence scores
        return {name: float(probs[i]) for i, name in enumerate(names)}

    def detect(self, image_path: Path, prompt: str, width: int, height: int) -> list[DetectionOut]:
        import torch
        from PIL import Image

        with Image.open(image_path) as img:
            inputs = self._det_proc(
                images=img.convert("RGB"), text=f"{prompt}.", return_tensors="pt"
            )
        with torch.no_grad():
            outputs = self._det(**inputs)
        results = self._det_proc.post_process_grounded_object_detection(
            outputs, inputs.input_ids, target_sizes=[(height, width)]
        )[0]
        dets = []
        for box, score in zip(results["boxes"], results["scores"]):
            x0, y0, x1, y1 = (int(round(float(v))) for v in box)
            x0, y0 = max(0, x0), max(0, y0)
            x1, y1 = min(width, max(x0 + 1, x1)), min(height, max(y0 + 1, y1))
            dets.append(((x0, y0, x1, y1), float(score)))
        return dets

    def segment(
        self, image_path: Path, box: tuple[int, int, int, int], width: int, height: int
    ) -> list[tuple[np.ndarray, float]]:
        import torch
        from PIL import Image

        with Image.open(image_path) as img:
            inputs = self._sam_proc(
                img.convert("RGB"), input_boxes=[[list(box)]], return_tensors="pt"
            )
        with torch.no_grad():
            outputs = self._sam(**inputs)
        masks = self._sam_proc.image_processor.post_process_masks(
            outputs.pred_masks.cpu(),
            inputs["original_sizes"].cpu(),
            inputs["reshaped_input_sizes"].cpu(),
        )[0][0]
        scores = outputs.iou_scores[0][0]
        out = []
        for mask, score in zip(masks, scores):
            arr = np.asarray(mask, dtype=bool)
            if arr.shape == (height, width) and arr.any():
                out.append((arr, max(0.0, min(1.0, float(score)))))
        return out


def build_models(config: AdapterConfig, backend: str = "stub"):
    if backend == "stub":
        return StubModels(config)
    if backend == "real":
        return RealModels(config)
    raise ModelLoadError(f"unknown backend {backend!r} (use 'stub' or 'real')")
