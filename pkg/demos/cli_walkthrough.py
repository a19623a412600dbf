"""Drives the command line: writes inputs and a YAML job, runs dist, geodesic
and regress, then prints each manifest's scalars."""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
import yaml

from shapeforge.curves import random_curve
from shapeforge.io import write_csv_matrix

work = Path(tempfile.mkdtemp(prefix="shapeforge_demo_"))
rng = np.random.default_rng(0)
write_csv_matrix(work / "a.csv", random_curve(40, 2, rng))
write_csv_matrix(work / "b.csv", random_curve(40, 2, rng))
(work / "curves.yaml").write_text(yaml.safe_dump(
    {"space_params": {"k": 40, "d": 2}, "inputs": {"a": "a.csv", "b": "b.csv"}, "frames": 5}))

X = np.linspace(0.0, 1.0, 8)
items = [{"name": f"t{i}", "data": [[1.0 + x, 2.0 - 3.0 * x]], "x": float(x)} for i, x in enumerate(X)]
(work / "batch.json").write_text(json.dumps({"items": items}))
(work / "line.yaml").write_text(yaml.safe_dump(
    {"space_params": {"dim": 2}, "inputs": {"batch": "batch.json"}, "x_new": [2.0]}))

jobs = [
    ["dist", "--space", "curves", "--config", str(work / "curves.yaml")],
    ["geodesic", "--space", "curve_shapes", "--config", str(work / "curves.yaml")],
    ["regress", "--space", "euclidean", "--config", str(work / "line.yaml")],
]
for i, job in enumerate(jobs):
    out = work / f"run{i}"
    proc = subprocess.run([sys.executable, "-m", "shapeforge.cli", *job, "--out", str(out), "--seed", "1"],
                          capture_output=True, text=True, check=False)
    manifest = json.loads((out / "manifest.json").read_text())
    print(f"$ shapeforge {' '.join(job[:3])} ...  exit {proc.returncode}")
    print(f"  artifacts: {', '.join(manifest['artifacts'])}")
    print(f"  scalars:   {manifest['scalars']}")
print(f"outputs in {work}")
