"""
Reproducible experiments
========================

Every experiment is a YAML-serializable config.  Cells of a sweep get seeds
derived from the master seed and the cell parameters, and result files are
byte-identical across reruns.
"""

import tempfile
from pathlib import Path

from gridsync.experiments import ExperimentConfig, run, sweep
from gridsync.io import file_sha256

out = Path(tempfile.mkdtemp())
cfg = ExperimentConfig("toy-mse", {"d": 2, "n_trials": 50}, seed=7, out=str(out / "a"),
                       sweep={"L": [4, 8, 16]})
print(cfg.to_yaml())
res = sweep(cfg)
for row in res.rows:
    print(row)

again = run(ExperimentConfig("toy-mse", {"d": 2, "L": 8, "n_trials": 50}, seed=7, out=str(out / "b")))
same = run(ExperimentConfig("toy-mse", {"d": 2, "L": 8, "n_trials": 50}, seed=7, out=str(out / "c")))
print("rerun identical:", file_sha256(again.results_path) == file_sha256(same.results_path))
print("manifest:", res.manifest_path)
