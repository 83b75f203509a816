"""Compare V_n of the CvM kernel with both limit-law samplers for an IID sample.

Writes a small CSV table of quantiles to stdout.
"""

import argparse

import numpy as np

from canonstat import kernels as kn
from canonstat import limitlaw as ll
from canonstat import mixing as mx
from canonstat.empirical import v_statistics_batch


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--n-cells", type=int, default=256)
    p.add_argument("--seed", type=int, default=20240601)
    args = p.parse_args()

    gen = mx.MarkovUniformGenerator.iid(2, seed=args.seed)
    k = kn.discretize(kn.cvm_kernel(), args.n_cells)
    v = ll.map_batches(lambda b, size: v_statistics_batch(mx.sample_paths(gen, args.n, size, stream=(0, b)), k),
                       args.reps)
    msi = ll.sample_msi(k, ll.build_gaussian_grid(mx.limit_covariance(gen), args.n_cells), args.reps, args.seed)
    eig = ll.sample_eigen_series(ll.nystrom_eigens(kn.cvm_kernel(), 512, 200), "V", args.reps, args.seed)

    qs = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)
    print("quantile,v_n,msi,eigen_series")
    for q, a, b, c in zip(qs, np.quantile(v, qs), np.quantile(msi, qs), np.quantile(eig, qs)):
        print(f"{q},{a:.5f},{b:.5f},{c:.5f}")
    print(f"# KS(V_n, MSI) = {ll.ks_distance(v, msi):.4f}   KS(MSI, eigen) = {ll.ks_distance(msi, eig):.4f}")


if __name__ == "__main__":
    main()
