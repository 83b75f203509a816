"""KS distance between V_n and the MSI limit for a two-state chain, as n grows."""

import argparse

from canonstat import kernels as kn
from canonstat import limitlaw as ll
from canonstat import mixing as mx
from canonstat.empirical import v_statistics_batch


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--stay", type=float, default=0.7, help="diagonal entry of the 2x2 transition matrix")
    p.add_argument("--reps", type=int, default=5000)
    p.add_argument("--n-cells", type=int, default=128)
    p.add_argument("--seed", type=int, default=20240602)
    args = p.parse_args()

    gen = mx.MarkovUniformGenerator.two_state(args.stay, seed=args.seed)
    cov = mx.limit_covariance(gen, tail_tol=1e-10)
    k = kn.discretize(kn.cvm_kernel(), args.n_cells)
    msi = ll.sample_msi(k, ll.build_gaussian_grid(cov, args.n_cells), args.reps, args.seed)
    print(f"# C(1/2, 1/2) = {cov.C(0.5, 0.5):.12f}, k_max = {cov.k_max}")
    print("n,ks,mean_v,mean_limit")
    for n in (50, 100, 200, 400, 800, 1600):
        v = ll.map_batches(lambda b, size: v_statistics_batch(mx.sample_paths(gen, n, size, stream=(0, b)), k),
                           args.reps)
        print(f"{n},{ll.ks_distance(v, msi):.4f},{v.mean():.4f},{msi.mean():.4f}")


if __name__ == "__main__":
    main()
