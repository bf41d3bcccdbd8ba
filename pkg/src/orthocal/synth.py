"""Seeded synthetic embedding worlds for demos, CLI tests, and acceptance checks.

Group world geometry: two orthonormal class directions, one spurious
direction, and isotropic noise.  Class prompts lean into the spurious
direction (that is the planted bias), images carry a strong spurious
component tied to their attribute, and minority groups are the items whose
attribute disagrees with their class.  The spurious prompts deliberately
point slightly off the true spurious direction, so projecting them out only
partially removes the bias; the positive pairs differ along the true
direction, so calibration removes what projection missed.  That reproduces
the ordering the real benchmarks show: plain projection helps some,
projection plus calibration helps most.

The generative world ties profession-style positive pairs to the shipped
80/20 profession split: every pair differs along one shared attribute
direction, so a calibration matrix fitted on training professions transfers
to held-out ones.

Everything is a pure function of its config dataclass, whose seed feeds a
single default_rng; writers emit the standard interchange files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .interchange import (
    EmbeddingMatrix,
    GroupedEvalSet,
    ManifestEntry,
    PromptManifest,
    save_embeddings,
    save_labels,
)
from .prompts import profession_split


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _frame(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Random orthonormal dim x dim frame."""
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))


@dataclass(frozen=True)
class GroupWorldConfig:
    dim: int = 48
    seed: int = 7
    class_signal: float = 1.0
    class_bias: float = 0.65
    image_spurious_weight: float = 1.2
    image_noise: float = 0.3
    probe_angle: float = 0.7
    probe_noise: float = 0.35
    num_spurious_prompts: int = 4
    pair_strength: float = 0.5
    pair_variants: int = 3
    prompt_noise: float = 0.03
    n_majority: int = 150
    n_minority: int = 30


@dataclass(frozen=True)
class GroupWorld:
    text_manifest: PromptManifest
    text_matrix: EmbeddingMatrix
    eval_set: GroupedEvalSet


def build_group_world(cfg: GroupWorldConfig = GroupWorldConfig()) -> GroupWorld:
    rng = np.random.default_rng(cfg.seed)
    frame = _frame(rng, cfg.dim)
    u_class = frame[:, 0:2]          # per-class feature directions
    u_spur = frame[:, 2]             # true spurious direction
    u_off = frame[:, 3]              # confound in the spurious prompts
    noise_basis = frame[:, 4:]

    def noise(scale: float) -> np.ndarray:
        coeff = rng.normal(size=noise_basis.shape[1])
        return scale * (noise_basis @ _unit(coeff))

    entries: list[ManifestEntry] = []
    columns: list[np.ndarray] = []

    # Class prompts contaminated by the spurious direction: class 0 leans
    # negative, class 1 positive, mirroring how attribute 0/1 items look.
    for k, sign in ((0, -1.0), (1, 1.0)):
        entries.append(
            ManifestEntry(
                id=f"class_{k}", text=f"synthetic class {k} prompt", role="class",
                class_label=f"class{k}",
            )
        )
        columns.append(
            _unit(cfg.class_signal * u_class[:, k] + cfg.class_bias * sign * u_spur
                  + noise(cfg.prompt_noise))
        )

    # Spurious prompts point along a rotated copy of the true direction.
    probe_dir = np.cos(cfg.probe_angle) * u_spur + np.sin(cfg.probe_angle) * u_off
    for j in range(cfg.num_spurious_prompts):
        sign = 1.0 if j % 2 == 0 else -1.0
        entries.append(
            ManifestEntry(
                id=f"spurious_{j}", text=f"synthetic spurious prompt {j}",
                role="spurious", attribute_label="attr1" if sign > 0 else "attr0",
            )
        )
        columns.append(_unit(sign * probe_dir + noise(cfg.probe_noise)))

    # Positive pairs differ along the true spurious direction only.
    for k in range(2):
        for v in range(cfg.pair_variants):
            pid = f"class{k}_v{v}"
            base = cfg.class_signal * u_class[:, k] + noise(cfg.prompt_noise)
            for role, sign in (("pair_left", 1.0), ("pair_right", -1.0)):
                entries.append(
                    ManifestEntry(
                        id=f"pair_{pid}_{role}", text=f"synthetic pair {pid} {role}",
                        role=role, pair_id=pid,
                    )
                )
                columns.append(
                    _unit(base + cfg.pair_strength * sign * u_spur
                          + noise(cfg.prompt_noise))
                )

    text_matrix = EmbeddingMatrix(np.stack(columns, axis=1))
    text_manifest = PromptManifest(entries=tuple(entries), encoder_tag=f"synthetic-group-{cfg.seed}")

    # Images: attribute 1 pushes +u_spur, attribute 0 pushes -u_spur.
    # Majority groups pair class 0 with attribute 0 and class 1 with attribute 1.
    img_cols, ys, attrs = [], [], []
    for y in range(2):
        for a in range(2):
            n = cfg.n_majority if y == a else cfg.n_minority
            sign = 1.0 if a == 1 else -1.0
            for _ in range(n):
                x = (cfg.class_signal * u_class[:, y]
                     + cfg.image_spurious_weight * sign * u_spur
                     + cfg.image_noise * rng.normal(size=cfg.dim))
                img_cols.append(_unit(x))
                ys.append(y)
                attrs.append(a)
    eval_set = GroupedEvalSet(
        embeddings=EmbeddingMatrix(np.stack(img_cols, axis=1)),
        y=np.array(ys), a=np.array(attrs),
        class_names=("class0", "class1"), attribute_names=("attr0", "attr1"),
    )
    return GroupWorld(text_manifest=text_manifest, text_matrix=text_matrix, eval_set=eval_set)


def _image_manifest(count: int, tag: str) -> PromptManifest:
    return PromptManifest(
        entries=tuple(
            ManifestEntry(id=f"img_{i:05d}", text="", role="image") for i in range(count)
        ),
        encoder_tag=tag,
    )


def write_group_world(world: GroupWorld, out_dir: str | Path) -> dict:
    out_dir = Path(out_dir)
    text_prefix = out_dir / "text"
    images_prefix = out_dir / "images"
    save_embeddings(world.text_matrix, world.text_manifest, text_prefix)
    es = world.eval_set
    save_embeddings(
        es.embeddings,
        _image_manifest(es.embeddings.count, world.text_manifest.encoder_tag),
        images_prefix,
    )
    save_labels(images_prefix, es.y, es.a, es.class_names, es.attribute_names)
    return {"text": str(text_prefix), "images": str(images_prefix)}


@dataclass(frozen=True)
class GenerativeWorldConfig:
    dim: int = 64
    seed: int = 11
    attribute_strength: float = 0.5
    target_bias: float = 0.3
    prompt_noise: float = 0.05
    images_per_profession: int = 40
    image_attribute_weight: float = 0.8
    image_noise: float = 0.2
    biased_attribute_rate: float = 0.85


@dataclass(frozen=True)
class GenerativeWorld:
    train_manifest: PromptManifest
    train_matrix: EmbeddingMatrix
    test_manifest: PromptManifest
    test_matrix: EmbeddingMatrix
    target_manifest: PromptManifest
    target_matrix: EmbeddingMatrix
    attribute_manifest: PromptManifest
    attribute_matrix: EmbeddingMatrix
    generated_manifest: PromptManifest
    generated_matrix: EmbeddingMatrix
    generated_attributes: np.ndarray


def build_generative_world(cfg: GenerativeWorldConfig = GenerativeWorldConfig()) -> GenerativeWorld:
    rng = np.random.default_rng(cfg.seed)
    frame = _frame(rng, cfg.dim)
    u_attr = frame[:, 0]
    noise_basis = frame[:, 1:]
    train, test = profession_split()

    def noise(scale: float) -> np.ndarray:
        coeff = rng.normal(size=noise_basis.shape[1])
        return scale * (noise_basis @ _unit(coeff))

    profession_dir = {}
    for prof in train + test:
        profession_dir[prof] = _unit(noise_basis @ _unit(rng.normal(size=noise_basis.shape[1])))

    def pair_set(professions, family: str):
        entries, cols = [], []
        for prof in professions:
            slug = prof.lower().replace(" ", "_")
            pid = f"{family}_{slug}"
            base = profession_dir[prof]
            for role, sign in (("pair_left", 1.0), ("pair_right", -1.0)):
                entries.append(
                    ManifestEntry(id=f"pair_{pid}_{role}", text=f"synthetic {slug} {role}",
                                  role=role, pair_id=pid)
                )
                cols.append(
                    _unit(base + cfg.attribute_strength * sign * u_attr
                          + noise(cfg.prompt_noise))
                )
        return (
            PromptManifest(entries=tuple(entries), encoder_tag=f"synthetic-generative-{cfg.seed}"),
            EmbeddingMatrix(np.stack(cols, axis=1)),
        )

    train_manifest, train_matrix = pair_set(train, "train")
    test_manifest, test_matrix = pair_set(test, "test")

    # Target prompts lean toward one attribute, like biased generation prompts do.
    t_entries, t_cols = [], []
    for prof in test:
        slug = prof.lower().replace(" ", "_")
        t_entries.append(ManifestEntry(id=f"target_{slug}", text=f"synthetic {slug} prompt", role="query"))
        t_cols.append(_unit(profession_dir[prof] + cfg.target_bias * u_attr + noise(cfg.prompt_noise)))
    target_manifest = PromptManifest(entries=tuple(t_entries), encoder_tag=f"synthetic-generative-{cfg.seed}")
    target_matrix = EmbeddingMatrix(np.stack(t_cols, axis=1))

    # Attribute classifier prompts straddle the attribute direction.
    a_entries, a_cols = [], []
    for name, sign in (("attr0", -1.0), ("attr1", 1.0)):
        a_entries.append(
            ManifestEntry(id=f"attribute_{name}", text=f"synthetic {name} prompt",
                          role="attribute", attribute_label=name)
        )
        a_cols.append(_unit(sign * u_attr + noise(cfg.prompt_noise)))
    attribute_manifest = PromptManifest(entries=tuple(a_entries), encoder_tag=f"synthetic-generative-{cfg.seed}")
    attribute_matrix = EmbeddingMatrix(np.stack(a_cols, axis=1))

    # "Generated" image embeddings whose attribute mix is biased.
    g_cols, g_attrs = [], []
    for prof in test:
        for _ in range(cfg.images_per_profession):
            a = 1 if rng.random() < cfg.biased_attribute_rate else 0
            sign = 1.0 if a == 1 else -1.0
            x = (profession_dir[prof]
                 + cfg.image_attribute_weight * sign * u_attr
                 + cfg.image_noise * rng.normal(size=cfg.dim))
            g_cols.append(_unit(x))
            g_attrs.append(a)
    generated_matrix = EmbeddingMatrix(np.stack(g_cols, axis=1))
    generated_manifest = _image_manifest(generated_matrix.count, f"synthetic-generative-{cfg.seed}")

    return GenerativeWorld(
        train_manifest=train_manifest, train_matrix=train_matrix,
        test_manifest=test_manifest, test_matrix=test_matrix,
        target_manifest=target_manifest, target_matrix=target_matrix,
        attribute_manifest=attribute_manifest, attribute_matrix=attribute_matrix,
        generated_manifest=generated_manifest, generated_matrix=generated_matrix,
        generated_attributes=np.array(g_attrs, dtype=np.int64),
    )


def write_generative_world(world: GenerativeWorld, out_dir: str | Path) -> dict:
    out_dir = Path(out_dir)
    paths = {}
    for name, manifest, matrix in (
        ("train_pairs", world.train_manifest, world.train_matrix),
        ("test_pairs", world.test_manifest, world.test_matrix),
        ("targets", world.target_manifest, world.target_matrix),
        ("attributes", world.attribute_manifest, world.attribute_matrix),
        ("generated", world.generated_manifest, world.generated_matrix),
    ):
        prefix = out_dir / name
        save_embeddings(matrix, manifest, prefix)
        paths[name] = str(prefix)
    save_labels(
        out_dir / "generated",
        np.zeros(world.generated_matrix.count, dtype=np.int64),
        world.generated_attributes,
        ("generated",),
        ("attr0", "attr1"),
    )
    return paths


@dataclass(frozen=True)
class RetrievalWorldConfig:
    dim: int = 32
    seed: int = 5
    n_concepts: int = 4
    n_images: int = 400
    query_bias: float = 0.6
    image_attribute_weight: float = 0.9
    image_noise: float = 0.25
    pair_strength: float = 0.5
    probe_noise: float = 0.1
    prompt_noise: float = 0.03


@dataclass(frozen=True)
class RetrievalWorld:
    text_manifest: PromptManifest
    text_matrix: EmbeddingMatrix
    images: EmbeddingMatrix
    attributes: np.ndarray


def build_retrieval_world(cfg: RetrievalWorldConfig = RetrievalWorldConfig()) -> RetrievalWorld:
    rng = np.random.default_rng(cfg.seed)
    frame = _frame(rng, cfg.dim)
    u_attr = frame[:, 0]
    concepts = frame[:, 1 : 1 + cfg.n_concepts]
    noise_basis = frame[:, 1 + cfg.n_concepts :]

    def noise(scale: float) -> np.ndarray:
        coeff = rng.normal(size=noise_basis.shape[1])
        return scale * (noise_basis @ _unit(coeff))

    entries, cols = [], []
    for j in range(cfg.n_concepts):
        entries.append(ManifestEntry(id=f"query_{j}", text=f"synthetic concept {j}", role="query"))
        cols.append(_unit(concepts[:, j] + cfg.query_bias * u_attr + noise(cfg.prompt_noise)))
    for j, sign in ((0, 1.0), (1, -1.0)):
        entries.append(
            ManifestEntry(id=f"spurious_{j}", text=f"synthetic attribute prompt {j}",
                          role="spurious", attribute_label=f"attr{j}")
        )
        cols.append(_unit(sign * u_attr + noise(cfg.probe_noise)))
    for j in range(cfg.n_concepts):
        pid = f"concept{j}"
        base = concepts[:, j]
        for role, sign in (("pair_left", 1.0), ("pair_right", -1.0)):
            entries.append(
                ManifestEntry(id=f"pair_{pid}_{role}", text=f"synthetic pair {pid} {role}",
                              role=role, pair_id=pid)
            )
            cols.append(_unit(base + cfg.pair_strength * sign * u_attr + noise(cfg.prompt_noise)))

    text_manifest = PromptManifest(entries=tuple(entries), encoder_tag=f"synthetic-retrieval-{cfg.seed}")
    text_matrix = EmbeddingMatrix(np.stack(cols, axis=1))

    img_cols, attrs = [], []
    for i in range(cfg.n_images):
        a = int(rng.integers(0, 2))
        sign = 1.0 if a == 1 else -1.0
        c = concepts[:, int(rng.integers(0, cfg.n_concepts))]
        x = (c + cfg.image_attribute_weight * sign * u_attr
             + cfg.image_noise * rng.normal(size=cfg.dim))
        img_cols.append(_unit(x))
        attrs.append(a)
    return RetrievalWorld(
        text_manifest=text_manifest,
        text_matrix=text_matrix,
        images=EmbeddingMatrix(np.stack(img_cols, axis=1)),
        attributes=np.array(attrs, dtype=np.int64),
    )


def write_retrieval_world(world: RetrievalWorld, out_dir: str | Path) -> dict:
    out_dir = Path(out_dir)
    text_prefix = out_dir / "text"
    images_prefix = out_dir / "images"
    save_embeddings(world.text_matrix, world.text_manifest, text_prefix)
    save_embeddings(
        world.images,
        _image_manifest(world.images.count, world.text_manifest.encoder_tag),
        images_prefix,
    )
    save_labels(
        images_prefix,
        np.zeros(world.images.count, dtype=np.int64),
        world.attributes,
        ("image",),
        ("attr0", "attr1"),
    )
    return {"text": str(text_prefix), "images": str(images_prefix)}
