#!/usr/bin/env python3
"""Run the hyperparameter sweep on a seeded toy corpus.

Generates the corpus, sweeps eta, both temperatures and the divergence
kinds through the CLI, and leaves the CSV table next to the corpus.

Usage: python scripts/run_toy_ablation.py [--workdir ablation_run] [--seed 0]
"""

import argparse
import sys
from pathlib import Path

from iecd2.cli import main as iecd2_main


def main(argv=None):
    parser = argparse.ArgumentParser()
    parser.add_argument("--workdir", default="ablation_run")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n-scenes", type=int, default=100)
    parser.add_argument("--vocab-size", type=int, default=12)
    parser.add_argument("--lambda", dest="lam", type=float, default=0.5)
    args = parser.parse_args(argv)

    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    corpus = workdir / "corpus.json"
    rc = iecd2_main([
        "gen-toy", "--seed", str(args.seed), "--n-scenes", str(args.n_scenes),
        "--vocab-size", str(args.vocab_size), "--lambda", str(args.lam),
        "--out", str(corpus),
    ])
    if rc != 0:
        return rc

    sweeps = [
        ("eta", ["--eta-grid=-2,-3,-5",
                 "--t-instr-grid", "1.0", "--t-evid-grid", "0.9"]),
        ("t_instruction", ["--eta-grid=-3",
                           "--t-instr-grid", "0.7,1.0,1.3",
                           "--t-evid-grid", "0.9"]),
        ("t_evidence", ["--eta-grid=-3", "--t-instr-grid", "1.0",
                        "--t-evid-grid", "0.7,0.9,1.3"]),
        ("divergence", ["--eta-grid=-3", "--t-instr-grid", "1.0",
                        "--t-evid-grid", "0.9",
                        "--divergence-grid",
                        "forward-kl,reverse-kl,symmetric-kl,hellinger,bhattacharyya"]),
    ]
    for name, flags in sweeps:
        out = workdir / f"sweep_{name}.csv"
        rc = iecd2_main(["ablate", "--scenes", str(corpus),
                         "--max-tokens", "12", "--out", str(out), *flags])
        if rc != 0:
            return rc
        print(f"[{name}] -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
