#!/usr/bin/env python3
"""End-to-end demo on synthetic embedding worlds.

Generates seeded group-robustness, retrieval, and generative worlds under a
work directory, then drives every CLI command over them: build a projection,
inspect the bias probe, evaluate groups across methods and a lambda sweep,
measure retrieval skew before and after debiasing, equalize generative
targets, score attribute discrepancy, and finish with the verify suite.

Usage: python scripts/run_synthetic_pipeline.py [workdir] [--seed N]
"""

import argparse
import subprocess
import sys
from pathlib import Path

from orthocal.synth import (
    GenerativeWorldConfig,
    GroupWorldConfig,
    RetrievalWorldConfig,
    build_generative_world,
    build_group_world,
    build_retrieval_world,
    write_generative_world,
    write_group_world,
    write_retrieval_world,
)


def run(*args: str) -> None:
    print(f"\n$ orthocal {' '.join(args)}")
    result = subprocess.run([sys.executable, "-m", "orthocal", *args])
    if result.returncode != 0:
        sys.exit(result.returncode)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("workdir", nargs="?", default="synthetic_runs")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    work = Path(args.workdir)

    group = write_group_world(build_group_world(GroupWorldConfig(seed=args.seed)), work / "group")
    retrieval = write_retrieval_world(
        build_retrieval_world(RetrievalWorldConfig(seed=args.seed)), work / "retrieval"
    )
    generative = write_generative_world(
        build_generative_world(GenerativeWorldConfig(seed=args.seed)), work / "generative"
    )
    print(f"synthetic worlds written under {work}/")

    run("build", "--text", group["text"], "--out", str(work / "group/proj"), "--lambda", "1000")
    run("eval-groups", "--text", group["text"], "--images", group["images"],
        "--methods", "zeroshot,orth-proj,orth-cali,cali-only",
        "--lambda", "200,400,600,1000", "--out", str(work / "group/report"))
    run("apply", "--input", group["text"], "--proj", str(work / "group/proj"),
        "--out", str(work / "group/debiased"))

    run("build", "--text", retrieval["text"], "--out", str(work / "retrieval/proj"))
    run("eval-skew", "--text", retrieval["text"], "--images", retrieval["images"],
        "--k", "100", "--out", str(work / "retrieval/skew_biased"))
    run("eval-skew", "--text", retrieval["text"], "--images", retrieval["images"],
        "--k", "100", "--proj", str(work / "retrieval/proj"),
        "--out", str(work / "retrieval/skew_debiased"))

    run("generative-prep", "--pairs", generative["train_pairs"],
        "--targets", generative["targets"], "--test-pairs", generative["test_pairs"],
        "--out", str(work / "generative/prepped"))
    run("eval-discrepancy", "--images", generative["generated"],
        "--attributes", generative["attributes"], "--out", str(work / "generative/disc"))

    run("verify", "--seed", str(args.seed), "--out", str(work / "verify"))
    print(f"\nreports under {work}/")


if __name__ == "__main__":
    main()
