"""Loopback sampler obeying the black-box command contract.

    python -m gibbsprobe.shim --model m.json --num-reads 1000 --out s.txt [--seed 7] [--noise n.json]

Without ``--noise`` the model is sampled exactly at unit temperature.
"""
import argparse
import sys

from .model import GibbsModel, read_model
from .sampler import NoiseSpec, read_noise, sample_noisy, write_samples


def main(argv=None):
    p = argparse.ArgumentParser(prog="gibbsprobe.shim")
    p.add_argument("--model", required=True)
    p.add_argument("--num-reads", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise")
    p.add_argument("--spins", type=int, help="misreport the spin count (for testing callers)")
    args = p.parse_args(argv)
    model = read_model(args.model)
    noise = read_noise(args.noise) if args.noise else NoiseSpec.uniform(model.n_spins)
    samples = sample_noisy(model, noise, args.num_reads, seed=args.seed)
    if args.spins is not None and args.spins != model.n_spins:
        samples = sample_noisy(GibbsModel(args.spins), NoiseSpec.uniform(args.spins), args.num_reads, args.seed)
    write_samples(samples, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
