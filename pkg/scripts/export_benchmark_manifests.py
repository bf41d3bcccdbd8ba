#!/usr/bin/env python3
"""Write the shipped benchmark prompt manifests as files ready for an encoder.

Produces, under the output directory:

    waterbird.manifest.json      class + spurious + positive-pair prompts
    celeba.manifest.json         class + spurious + positive-pair prompts
    fairface_queries.manifest.json
    pairs_<family>_<split>.manifest.json   profession positive pairs
    attributes_<family>.manifest.json      attribute-classifier prompts
    targets_<split>.manifest.json          plain profession prompts

Feed any of these to an embedding exporter, then run the CLI on the result.

Usage: python scripts/export_benchmark_manifests.py [outdir]
"""

import argparse
from pathlib import Path

from orthocal.interchange import write_json
from orthocal import prompts


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("outdir", nargs="?", default="benchmark_manifests")
    args = parser.parse_args()
    out = Path(args.outdir)

    docs = {
        "waterbird.manifest.json": prompts.waterbird_manifest(),
        "celeba.manifest.json": prompts.celeba_manifest(),
        "fairface_queries.manifest.json": prompts.fairface_query_manifest(),
    }
    for family in ("gender", "race"):
        for split in ("train", "test"):
            docs[f"pairs_{family}_{split}.manifest.json"] = prompts.generative_pair_manifest(
                family, split
            )
        docs[f"attributes_{family}.manifest.json"] = prompts.attribute_prompt_manifest(family)
    for split in ("train", "test"):
        docs[f"targets_{split}.manifest.json"] = prompts.target_prompt_manifest(split)

    for name, manifest in docs.items():
        write_json(out / name, manifest.to_json_dict())
        print(f"wrote {out / name}  ({manifest.count} entries)")


if __name__ == "__main__":
    main()
