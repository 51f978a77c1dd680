"""Regenerate the bundled Sobol direction-number table.

Pulls the first 1100 rows (dimensions 2..1101) of the Joe--Kuo "new-joe-kuo-6"
table out of scipy's packaged copy and writes them in the standard published
text layout: one row per dimension, columns  d  s  a  m_1 ... m_s.
Dimension 1 needs no row (van der Corput in base 2).

Run from the repo root:  python3 scripts/extract_direction_numbers.py
"""

import os

import numpy as np
import scipy.stats._sobol as _sobol

OUT = os.path.join("src", "mlvi", "data", "joe_kuo_6_1101.txt")
N_DIMS = 1100  # rows for dimensions 2..1101


def main():
    npz = np.load(
        os.path.join(os.path.dirname(_sobol.__file__), "_sobol_direction_numbers.npz")
    )
    poly, vinit = npz["poly"], npz["vinit"]
    lines = ["d s a m_i"]
    for d in range(2, 2 + N_DIMS):
        p = int(poly[d - 1])
        s = p.bit_length() - 1
        a = (p - (1 << s) - 1) // 2
        m = [str(int(v)) for v in vinit[d - 1][:s]]
        lines.append(" ".join([str(d), str(s), str(a)] + m))
    with open(OUT, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {OUT} ({N_DIMS} rows)")


if __name__ == "__main__":
    main()
