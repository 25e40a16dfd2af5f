#!/usr/bin/env python3
"""Turn published system-identification files into the CSV layout drgp reads.

    convert.py text robot_arm.dat data/actuator.csv --names u,y
    convert.py mat DATAPRBS.MAT data/drive.csv --inputs u1 --output z1
    convert.py mat mrdamper.mat data/damper.csv --inputs V --output F
    convert.py mat some.mat --list
"""
import argparse
import sys

import numpy as np


def write(path, cols, names, every):
    data = np.column_stack(cols)[::every]
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")
    print(f"{path}: {data.shape[0]} rows, output '{names[-1]}'")


def from_text(a):
    data = np.loadtxt(a.src, delimiter="," if a.comma else None, skiprows=a.skip)
    data = np.atleast_2d(data)
    names = a.names.split(",") if a.names else [f"x{i}" for i in range(data.shape[1] - 1)] + ["y"]
    if len(names) != data.shape[1]:
        sys.exit(f"{a.src}: {data.shape[1]} columns but {len(names)} names")
    write(a.dst, [data[:, i] for i in range(data.shape[1])], names, a.every)


def from_mat(a):
    from scipy.io import loadmat

    m = {k: v for k, v in loadmat(a.src).items() if not k.startswith("__")}
    if a.list:
        for k, v in m.items():
            print(k, getattr(v, "shape", "?"))
        return
    if not a.dst or not a.inputs or not a.output:
        sys.exit("need DST, --inputs and --output (use --list to see the variables)")
    names = a.inputs.split(",") + [a.output]
    missing = [n for n in names if n not in m]
    if missing:
        sys.exit(f"{a.src}: no variable(s) {', '.join(missing)}; have {', '.join(m)}")
    cols = [np.asarray(m[n], dtype=float).ravel() for n in names]
    if len({c.size for c in cols}) != 1:
        sys.exit(f"{a.src}: variables differ in length")
    write(a.dst, cols, names, a.every)


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="kind", required=True)
    t = sub.add_parser("text", help="whitespace or comma separated numeric columns, output last")
    t.add_argument("src")
    t.add_argument("dst")
    t.add_argument("--names", help="comma separated column names")
    t.add_argument("--skip", type=int, default=0, help="header lines to skip")
    t.add_argument("--comma", action="store_true")
    t.set_defaults(fn=from_text)
    m = sub.add_parser("mat", help="MATLAB .mat file with one vector per signal")
    m.add_argument("src")
    m.add_argument("dst", nargs="?")
    m.add_argument("--inputs", help="comma separated input variable names")
    m.add_argument("--output")
    m.add_argument("--list", action="store_true")
    m.set_defaults(fn=from_mat)
    for s in (t, m):
        s.add_argument("--every", type=int, default=1, help="keep every k-th row, starting at the first")
    a = p.parse_args()
    if a.every < 1:
        sys.exit("--every must be >= 1")
    a.fn(a)


if __name__ == "__main__":
    main()
