import json

import numpy as np
import pytest
from PIL import Image

CLASSES = {
    "classes": [
        {"id": 0, "name": "background", "aliases": []},
        {"id": 1, "name": "cat", "aliases": ["kitty"]},
        {"id": 2, "name": "dog", "aliases": ["puppy", "hound"]},
        {"id": 3, "name": "bird", "aliases": []},
    ]
}


@pytest.fixture(scope="session")
def classes_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("classes") / "classes.json"
    path.write_text(json.dumps(CLASSES))
    return path


@pytest.fixture(scope="session")
def sample_images(tmp_path_factory):
    """Three small RGB images with deterministic content."""
    d = tmp_path_factory.mktemp("imgs")
    for i in range(3):
        rng = np.random.default_rng(1000 + i)
        arr = rng.integers(0, 256, size=(48, 48, 3), dtype=np.uint8)
        Image.fromarray(arr, "RGB").save(d / f"sample_{i}.png")
    return d


def make_training_dir(root, num_images=100):
    """Labeled classification folder: class k images sit in intensity band k."""
    d = root / "train"
    d.mkdir()
    names = ["cat", "dog", "bird"]
    rng = np.random.default_rng(0)
    labels = {}
    for i in range(num_images):
        cls = i % 3
        arr = (40 + 70 * cls + rng.integers(0, 30, size=(32, 32))).astype(np.uint8)
        name = f"im_{i:03d}.png"
        Image.fromarray(arr, "L").save(d / name)
        # exercise alias resolution on some labels
        labels[name] = "puppy" if cls == 1 and i % 2 else names[cls]
    (d / "labels.json").write_text(json.dumps(labels))
    return d
