"""Regenerate the bundled synthetic CSVs.

The benchmark configs reference two UCI tables (breast-cancer, wine-quality
red) that are not redistributed here.  These stand-ins match the originals'
shape, column names, value ranges, and rough class balance so the harness
and tests run self-contained; anyone with the real files can point
dataset_path at them instead.

Run from the repo root:  python3 scripts/make_synthetic_datasets.py
"""

import os

import numpy as np

OUT_DIR = os.path.join("src", "mlvi", "data")


def make_breast_cancer(path: str) -> None:
    # 683 rows, nine 1..10 cytology-style integer features, class 2/4
    # (~65% benign), drawn from a logistic ground truth over correlated
    # feature grades.
    rng = np.random.default_rng(20240601)
    n, k = 683, 9
    base = rng.normal(size=(n, 1))
    feats_latent = 0.8 * base + 0.6 * rng.normal(size=(n, k))
    grades = np.clip(np.round(3.2 + 2.4 * feats_latent), 1, 10).astype(int)
    w = rng.normal(size=k) * 0.9
    logits = (grades - grades.mean(axis=0)) / grades.std(axis=0) @ w - 1.1
    y = np.where(rng.random(n) < 1.0 / (1.0 + np.exp(-logits)), 4, 2)
    header = ["clump_thickness", "cell_size_uniformity", "cell_shape_uniformity",
              "marginal_adhesion", "epithelial_cell_size", "bare_nuclei",
              "bland_chromatin", "normal_nucleoli", "mitoses", "class"]
    lines = [",".join(header)]
    for row, label in zip(grades, y):
        lines.append(",".join(str(v) for v in row) + f",{label}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {path} ({n} rows, positive fraction "
          f"{float(np.mean(y == 4)):.3f})")


def make_wine_red(path: str) -> None:
    # 1599 rows, eleven physicochemical features in plausible ranges,
    # integer quality 3..8 from a noisy linear ground truth.
    rng = np.random.default_rng(20240602)
    n = 1599
    cols = {
        "fixed_acidity": (8.3, 1.7, 4.6, 15.9),
        "volatile_acidity": (0.53, 0.18, 0.12, 1.58),
        "citric_acid": (0.27, 0.19, 0.0, 1.0),
        "residual_sugar": (2.5, 1.4, 0.9, 15.5),
        "chlorides": (0.087, 0.047, 0.012, 0.61),
        "free_sulfur_dioxide": (15.9, 10.5, 1.0, 72.0),
        "total_sulfur_dioxide": (46.5, 32.9, 6.0, 289.0),
        "density": (0.9967, 0.0019, 0.990, 1.004),
        "ph": (3.31, 0.15, 2.74, 4.01),
        "sulphates": (0.66, 0.17, 0.33, 2.0),
        "alcohol": (10.4, 1.07, 8.4, 14.9),
    }
    feats = np.empty((n, len(cols)))
    for j, (mean, std, lo, hi) in enumerate(cols.values()):
        feats[:, j] = np.clip(rng.normal(mean, std, size=n), lo, hi)
    std_feats = (feats - feats.mean(axis=0)) / feats.std(axis=0)
    w = rng.normal(size=len(cols)) * 0.35
    score = 5.6 + std_feats @ w + 0.55 * rng.normal(size=n)
    quality = np.clip(np.round(score), 3, 8).astype(int)
    header = list(cols) + ["quality"]
    lines = [",".join(header)]
    for row, q in zip(feats, quality):
        lines.append(",".join(f"{v:.4g}" for v in row) + f",{q}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {path} ({n} rows, mean quality {quality.mean():.2f})")


if __name__ == "__main__":
    make_breast_cancer(os.path.join(OUT_DIR, "breast_cancer_synth.csv"))
    make_wine_red(os.path.join(OUT_DIR, "wine_red_synth.csv"))
