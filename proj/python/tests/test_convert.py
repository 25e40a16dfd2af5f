import subprocess
import sys
from pathlib import Path

import numpy as np

TOOL = Path(__file__).resolve().parents[2] / "tools" / "convert.py"


def run(*args):
    return subprocess.run([sys.executable, str(TOOL), *map(str, args)], capture_output=True, text=True)


def test_text_with_downsampling(tmp_path):
    src = tmp_path / "a.dat"
    src.write_text("1 2\n3 4\n5 6\n7 8\n")
    r = run("text", src, tmp_path / "a.csv", "--names", "u,y", "--every", "2")
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "a.csv").read_text().split() == ["u,y", "1,2", "5,6"]


def test_mat_variables(tmp_path):
    from scipy.io import savemat

    savemat(tmp_path / "m.mat", {"V": np.arange(4.0)[:, None], "F": -np.arange(4.0)[:, None]})
    r = run("mat", tmp_path / "m.mat", tmp_path / "m.csv", "--inputs", "V", "--output", "F")
    assert r.returncode == 0, r.stderr
    d = np.loadtxt(tmp_path / "m.csv", delimiter=",", skiprows=1)
    assert np.array_equal(d[:, 1], -d[:, 0])
    r = run("mat", tmp_path / "m.mat", tmp_path / "x.csv", "--inputs", "nope", "--output", "F")
    assert r.returncode != 0 and "nope" in r.stderr
