"""Regenerate the frozen reference data in this directory.

Run only when the reference scenario itself changes; the tests compare fresh
runs against the committed files.
"""
import csv
import math
from pathlib import Path

import numpy as np

from superramsey.model import FIELD_LABELS, SystemParams
from superramsey.oracle import exact_evolve, single_drive_config

HERE = Path(__file__).parent


def weak_drive_params():
    return SystemParams.operating_point().replace(g=(2 * math.pi * 50e3,) * 2)


def main():
    cfg = single_drive_config(weak_drive_params(), 1, 1, drive_duration=0.1e-6, total=2e-6,
                              sample_dt=10e-9)
    ex = exact_evolve(cfg)
    keep = [i for i in range(len(FIELD_LABELS)) if np.all(np.isfinite(ex.values[:, i]))]
    with open(HERE / "oracle_weak_n1n1.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["t_s"]
        for i in keep:
            header += [f"re_{FIELD_LABELS[i]}", f"im_{FIELD_LABELS[i]}"]
        w.writerow(header)
        for t, row in zip(ex.times, ex.values):
            out = [repr(float(t))]
            for i in keep:
                out += [repr(float(row[i].real)), repr(float(row[i].imag))]
            w.writerow(out)


if __name__ == "__main__":
    main()
