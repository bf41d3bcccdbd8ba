"""Access to the shipped prompt manifests and prompt-list builders.

Static data under orthocal/data covers the two group-robustness benchmarks
(class, spurious, and positive-pair prompts), the ten neutral retrieval
queries, the 100-profession list with its fixed 80/20 train/test split, and
the attribute prompt prefixes used to build profession pairs and attribute
classifiers.  Builders return validated PromptManifest objects ready for an
encoder; none of them carry embeddings.
"""

from __future__ import annotations

import json
from importlib import resources
from itertools import combinations

from .interchange import ManifestEntry, PromptManifest


def _load_data(name: str) -> dict:
    ref = resources.files("orthocal").joinpath("data", name)
    return json.loads(ref.read_text(encoding="utf-8"))


def _manifest_from_data(name: str) -> PromptManifest:
    return PromptManifest.from_json_dict(_load_data(name))


def waterbird_manifest() -> PromptManifest:
    """Bird-class benchmark prompts: 2 classes, 8 spurious, 20 positive pairs."""
    return _manifest_from_data("waterbird.manifest.json")


def celeba_manifest() -> PromptManifest:
    """Hair-color benchmark prompts: 2 classes, 6 spurious, 2 positive pairs."""
    return _manifest_from_data("celeba.manifest.json")


def fairface_query_manifest() -> PromptManifest:
    """Ten neutral-concept retrieval queries."""
    return _manifest_from_data("fairface_queries.manifest.json")


def profession_split() -> tuple[tuple[str, ...], tuple[str, ...]]:
    doc = _load_data("professions.json")
    return tuple(doc["train"]), tuple(doc["test"])


def attribute_families() -> dict:
    return _load_data("attribute_prompts.json")


def _article(word: str) -> str:
    return "an" if word[:1].lower() in "aeiou" else "a"


def profession_prompt(profession: str) -> str:
    p = profession.lower()
    return f"A photo of {_article(p)} {p}."


def _attribute_prompt(prefix: str, profession: str) -> str:
    return f"{prefix} {profession.lower()}."


def generative_pair_manifest(family: str = "gender", split: str = "train") -> PromptManifest:
    """Positive pairs enumerating attribute variants of profession prompts.

    For each profession in the split and each unordered pair of attribute
    values in the family, one positive pair: the two prompts differ only in
    the attribute word.
    """
    families = attribute_families()
    if family not in families:
        raise ValueError(f"unknown attribute family {family!r}; have {sorted(families)}")
    train, test = profession_split()
    if split == "train":
        professions = train
    elif split == "test":
        professions = test
    else:
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")

    spec = families[family]
    attrs = spec["attributes"]
    prefixes = spec["prefixes"]
    entries = []
    for prof in professions:
        slug = prof.lower().replace(" ", "_")
        for i, j in combinations(range(len(attrs)), 2):
            pid = f"{family}_{slug}_{i}{j}"
            entries.append(
                ManifestEntry(
                    id=f"pair_{pid}_left",
                    text=_attribute_prompt(prefixes[attrs[i]], prof),
                    role="pair_left",
                    pair_id=pid,
                )
            )
            entries.append(
                ManifestEntry(
                    id=f"pair_{pid}_right",
                    text=_attribute_prompt(prefixes[attrs[j]], prof),
                    role="pair_right",
                    pair_id=pid,
                )
            )
    return PromptManifest(entries=tuple(entries))


def attribute_prompt_manifest(family: str = "gender") -> PromptManifest:
    """Attribute-classifier prompts, one per attribute value in the family."""
    families = attribute_families()
    if family not in families:
        raise ValueError(f"unknown attribute family {family!r}; have {sorted(families)}")
    spec = families[family]
    entries = [
        ManifestEntry(
            id=f"attribute_{attr.lower()}",
            text=f"{spec['prefixes'][attr]} person.",
            role="attribute",
            attribute_label=attr,
        )
        for attr in spec["attributes"]
    ]
    return PromptManifest(entries=tuple(entries))


def target_prompt_manifest(split: str = "test") -> PromptManifest:
    """Plain profession prompts to debias before generation."""
    train, test = profession_split()
    professions = train if split == "train" else test
    entries = [
        ManifestEntry(
            id=f"target_{p.lower().replace(' ', '_')}",
            text=profession_prompt(p),
            role="query",
        )
        for p in professions
    ]
    return PromptManifest(entries=tuple(entries))
