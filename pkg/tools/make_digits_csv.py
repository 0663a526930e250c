"""Regenerate the bundled DIGITS CSV split.

Source: the 1797-image 8x8 handwritten digits set (UCI optdigits, test
partition) as shipped with scikit-learn. Rows are shuffled with a fixed seed
and cut into 1439 training and 358 test rows. Each output line holds the 64
integer pixel values (0..16) followed by the label.

    python tools/make_digits_csv.py src/dpdropout/data
"""

import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

N_TRAIN = 1439
SEED = 0


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digits = load_digits()
    x = digits.data.astype(int)
    y = digits.target.astype(int)
    perm = np.random.default_rng(SEED).permutation(len(x))
    for name, idx in (("digits_train.csv", perm[:N_TRAIN]), ("digits_test.csv", perm[N_TRAIN:])):
        rows = np.column_stack([x[idx], y[idx]])
        np.savetxt(out / name, rows, fmt="%d", delimiter=",")
        print(f"{name}: {len(idx)} rows")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/dpdropout/data")
