"""Regenerate the noiseless fit fixture in data/ (orthogonal design, n = p = 40, K = 3, s = 5)."""

import argparse
import os
import struct

from tgslope import io
from tgslope.experiments import SimulationSpec, gen_design, gen_response, gen_truth
from tgslope.linalg import Rng

SPEC = SimulationSpec(n=40, p=40, p1=3, p2=3, k_rank=3, s=5, design="orthogonal", sigma=0.0, q=0.1)
SEED = 20240


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)
    rng = Rng(SEED)
    x = gen_design(SPEC, rng)
    truth = gen_truth(SPEC, rng)
    y = gen_response(truth, x, 0.0, rng)
    io.write_matrix_csv(os.path.join(args.out, "fixture_x.csv"), x)
    io.write_t3d(os.path.join(args.out, "fixture_y.t3d"), y)
    io.write_t3d(os.path.join(args.out, "fixture_b_star.t3d"), truth.b_star)
    with open(os.path.join(args.out, "fixture_support.txt"), "w") as fh:
        fh.write("\n".join(str(int(j)) for j in truth.support) + "\n")
    # handcrafted endianness reference: 1 x 1 x 2 tensor holding (1.5, -2.0)
    with open(os.path.join(args.out, "ref_1x1x2.t3d"), "wb") as fh:
        fh.write(b"T3DENSE1" + struct.pack("<QQQ", 1, 1, 2) + struct.pack("<dd", 1.5, -2.0))
    print("support:", truth.support.tolist())


if __name__ == "__main__":
    main()
