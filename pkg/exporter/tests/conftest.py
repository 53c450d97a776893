import json
import subprocess

import pytest

from exporter import export, export_batches, export_probe_batch, train_tiny

TRAIN_EPOCHS = 10
TRAIN_SEED = 0
PROBE_COUNT = 32


@pytest.fixture(scope="session")
def trained_model():
    return train_tiny(TRAIN_EPOCHS, TRAIN_SEED)


@pytest.fixture(scope="session")
def artifact_dir(tmp_path_factory, trained_model):
    """Exported model plus eval and probe batches, shared by the suite."""
    root = tmp_path_factory.mktemp("artifacts")
    export(trained_model, str(root / "model"))
    export_batches("eval", 1000, str(root / "eval-1000"))
    export_probe_batch(trained_model, PROBE_COUNT, str(root / "probe-32"))
    return root


def run_udfc(*args, expect=0):
    """Drive the compressor CLI; returns stdout."""
    cmd = ["udfc"] + [str(a) for a in args]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == expect, f"{cmd}: rc={proc.returncode}\n{proc.stderr}"
    return proc.stdout


def eval_top1(model_dir, data_dir) -> float:
    out = run_udfc("eval", "--model", model_dir, "--data", data_dir)
    return float(json.loads(out)["top1"])
