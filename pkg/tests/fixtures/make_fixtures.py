"""Regenerate the committed test fixtures.

    python tests/fixtures/make_fixtures.py

Everything here is deterministic; rerunning rewrites identical files.
"""

import json
from pathlib import Path


from pathattr import models, tasks
from pathattr.imageio import read_png, write_png

HERE = Path(__file__).parent

# study model: checkerboard squares put black-ish pixels inside the class region
STUDY_TASK = "study"
STUDY_SEED = 7
STUDY_CONFIG = models.TrainConfig(activation="relu")
STUDY_IMAGES_SEED = 2024


def study_weights():
    w = models.train_toy(STUDY_TASK, seed=STUDY_SEED, config=STUDY_CONFIG)
    models.save_weights(w, HERE / "study_cnn.json")
    return w


def linearity_witness():
    doc = {
        "description": "two linear scores and their sum on a 2-pixel input; straight path from zero",
        "shape": [1, 2, 1],
        "w1": [2.0, 0.0],
        "w2": [0.0, 1.0],
        "baseline": [0.0, 0.0],
        "x": [1.0, 1.0],
        "steps": 10,
        "idgi_f1": [2.0, 0.0],
        "idgi_f2": [0.0, 1.0],
        "idgi_f3": [2.4, 0.6],
    }
    (HERE / "linearity_witness.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def black_pixels_in_mask(w):
    """A study image whose checker squares are exactly black, plus its mask."""
    task = tasks.make_task(w.meta["task"])
    xs, labels, masks = tasks.sample(task, 1, STUDY_IMAGES_SEED)
    x, mask = xs[0], masks[0]
    dark = mask & (x.max(axis=2) <= task.dark[1])
    x[dark] = 0.0
    write_png(x, HERE / "black_in_mask.png")
    write_png(mask[:, :, None].astype(float), HERE / "black_in_mask_mask.png")
    # forward-pass oracle on the quantized image as read back from disk
    m = models.ToyModel(w)
    x_read = read_png(HERE / "black_in_mask.png")
    meta = {
        "label": int(labels[0]),
        "black_pixels": int(dark.sum()),
        "value": models.value(m, x_read, int(labels[0])),
        "logits": [float(v) for v in m.logits(x_read)],
    }
    (HERE / "black_in_mask.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    weights = study_weights()
    print("study test accuracy", weights.meta["test_accuracy"])
    linearity_witness()
    black_pixels_in_mask(weights)
