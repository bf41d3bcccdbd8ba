"""Command-line pipeline: build, apply, evaluate, and verify projections.

Commands:
    build            construct P0, the calibration matrix, and P* from a prompt manifest
    apply            apply a saved projection to an embedding file
    eval-groups      worst-group / average accuracy and gap, per debiasing method
    eval-skew        per-query MaxSkew@k over a labeled image corpus
    eval-discrepancy attribute-balance discrepancy of generated-image embeddings
    generative-prep  equalize target prompt embeddings with a pair-fitted matrix
    verify           run the self-check suite (exit 2 on any failure)

All values may come from a JSON config (--config); explicit flags win.  Every
command is deterministic given its config and seed, and all files are written
atomically.  Exit codes: 0 success, 1 validation error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fairness, prompts, verify, zeroshot
from .interchange import (
    EmbeddingMatrix,
    InterchangeError,
    extract_pairs,
    labels_path,
    load_dataset,
    load_grouped_eval_set,
    manifest_path,
    read_json,
    save_embeddings,
    write_json,
    _atomic_write_bytes,
)
from .projection import (
    ProjectionResult,
    SpuriousBasis,
    apply_projection,
    calibrated_projection,
    load_projection,
    orthogonal_projection,
    save_projection,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_VERIFY = 2

DEFAULT_LAMBDA = {"generative-prep": 500.0}  # discriminative commands default to 1000
KNOWN_METHODS = ("zeroshot", "orth-proj", "orth-cali", "cali-only")


@dataclass
class RunConfig:
    """Merged command configuration: config-file values overridden by flags."""

    mode: str
    text: str | None = None
    images: str | None = None
    input: str | None = None
    proj: str | None = None
    out: str | None = None
    pairs: str | None = None
    targets: str | None = None
    test_pairs: str | None = None
    attributes: str | None = None
    labels: tuple[str, ...] = ()
    lam: tuple[float, ...] = ()
    k: int | None = None
    seed: int = 0
    skip_p0: bool = False
    renormalize: bool | None = None
    methods: tuple[str, ...] = ()

    def single_lambda(self) -> float:
        if len(self.lam) != 1:
            raise ValueError(f"{self.mode} takes exactly one lambda, got {list(self.lam)}")
        return self.lam[0]

    def validate(self) -> None:
        for lam in self.lam:
            if lam < 0:
                raise ValueError(f"lambda must be non-negative, got {lam}")
        if self.mode == "eval-skew" and (self.k is None or self.k < 1):
            raise ValueError("eval-skew requires k >= 1")
        for name in ("text", "images", "input", "pairs", "targets", "test_pairs", "attributes"):
            prefix = getattr(self, name)
            if prefix is not None and not manifest_path(prefix).exists():
                raise ValueError(f"--{name.replace('_', '-')}: no manifest at {manifest_path(prefix)}")
        for method in self.methods:
            if method not in KNOWN_METHODS:
                raise ValueError(f"unknown method {method!r}; known: {', '.join(KNOWN_METHODS)}")


def _parse_lambdas(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in str(text).split(","))
    except ValueError as exc:
        raise ValueError(f"bad --lambda value {text!r}") from exc


def _merge(args: argparse.Namespace) -> RunConfig:
    doc = read_json(args.config) if getattr(args, "config", None) else {}
    key_map = {"lambda": "lam"}

    def pick(name, default=None):
        val = getattr(args, name, None)
        if val is not None:
            return val
        for key, dest in key_map.items():
            if dest == name and key in doc:
                return doc[key]
        return doc.get(name, default)

    lam_raw = pick("lam")
    if lam_raw is None:
        lam = (DEFAULT_LAMBDA.get(args.command, 1000.0),)
    elif isinstance(lam_raw, (int, float)):
        lam = (float(lam_raw),)
    elif isinstance(lam_raw, str):
        lam = _parse_lambdas(lam_raw)
    else:
        lam = tuple(float(v) for v in lam_raw)

    methods = pick("methods")
    if methods is None:
        methods = ("zeroshot", "orth-proj", "orth-cali")
    elif isinstance(methods, str):
        methods = tuple(m.strip() for m in methods.split(",") if m.strip())
    else:
        methods = tuple(methods)

    labels = pick("labels", ())
    if isinstance(labels, str):
        labels = (labels,)

    skip_default = args.command == "generative-prep"
    skip = pick("skip_p0")
    renorm = pick("renormalize")

    cfg = RunConfig(
        mode=args.command,
        text=pick("text"),
        images=pick("images"),
        input=pick("input"),
        proj=pick("proj"),
        out=pick("out"),
        pairs=pick("pairs"),
        targets=pick("targets"),
        test_pairs=pick("test_pairs"),
        attributes=pick("attributes"),
        labels=tuple(labels),
        lam=lam,
        k=pick("k"),
        seed=int(pick("seed", 0)),
        skip_p0=skip_default if skip is None else bool(skip),
        renormalize=renorm if renorm is None else bool(renorm),
        methods=methods,
    )
    cfg.validate()
    return cfg


def _build_projection(cfg: RunConfig, prefix: str, lam: float) -> tuple[ProjectionResult, int]:
    """Shared build path: P0 from spurious entries, calibration from pairs."""
    manifest, matrix = load_dataset(prefix)
    pairs = extract_pairs(manifest, matrix)
    if pairs.count == 0:
        raise ValueError(f"{prefix}: manifest has no positive-pair entries")
    if cfg.skip_p0:
        p0 = np.eye(matrix.dim)
        rank = 0
    else:
        spur_idx = manifest.indices_with_role("spurious")
        if not spur_idx:
            raise ValueError(f"{prefix}: manifest has no spurious-role entries (use --skip-p0?)")
        basis = SpuriousBasis.from_columns(matrix.data[:, spur_idx])
        if basis.effective_rank == 0:
            raise ValueError(f"{prefix}: spurious basis has rank 0 (all-zero prompts)")
        p0 = orthogonal_projection(basis)
        rank = basis.effective_rank
    result = calibrated_projection(p0, pairs, lam)
    renorm = True if cfg.renormalize is None else cfg.renormalize
    result = ProjectionResult(
        p0=result.p0, calibration=result.calibration, p_star=result.p_star,
        lam=result.lam, pair_count=result.pair_count,
        skip_p0=cfg.skip_p0, renormalize=renorm,
    )
    return result, rank


def cmd_build(cfg: RunConfig) -> int:
    if cfg.text is None or cfg.out is None:
        raise ValueError("build requires --text and --out")
    lam = cfg.single_lambda()
    result, rank = _build_projection(cfg, cfg.text, lam)
    save_projection(result, cfg.out)
    print(f"wrote {cfg.out}.proj.f32 and {cfg.out}.proj.json")
    print(f"pair_count: {result.pair_count}")
    print(f"spurious_rank: {rank}")
    print(f"lambda: {result.lam}  lambda_prime: {result.lambda_prime}")
    print(f"skip_p0: {result.skip_p0}")
    return EXIT_OK


def cmd_apply(cfg: RunConfig) -> int:
    if cfg.input is None or cfg.proj is None or cfg.out is None:
        raise ValueError("apply requires --input, --proj, and --out")
    manifest, matrix = load_dataset(cfg.input)
    result = load_projection(cfg.proj)
    if result.dim != matrix.dim:
        raise ValueError(f"projection dim {result.dim} != embedding dim {matrix.dim}")
    renorm = result.renormalize if cfg.renormalize is None else cfg.renormalize
    applied = apply_projection(matrix, result.p_star, renormalize=renorm)
    save_embeddings(applied.matrix, manifest, cfg.out)
    write_json(
        Path(str(cfg.out) + ".apply.json"),
        {
            "projection": result.metadata(),
            "renormalized": renorm,
            "zeroed_columns": list(applied.zeroed_columns),
        },
    )
    print(f"wrote {cfg.out}.manifest.json and {cfg.out}.f32")
    if applied.zeroed_columns:
        print(f"warning: {len(applied.zeroed_columns)} column(s) annihilated: "
              f"{list(applied.zeroed_columns)}")
    return EXIT_OK


def _method_projection(method: str, p0: np.ndarray, pairs, lam: float) -> np.ndarray | None:
    if method == "zeroshot":
        return None
    if method == "orth-proj":
        return p0
    if method == "orth-cali":
        return calibrated_projection(p0, pairs, lam).p_star
    if method == "cali-only":
        return calibrated_projection(np.eye(p0.shape[0]), pairs, lam).p_star
    raise ValueError(f"unknown method {method!r}")


def cmd_eval_groups(cfg: RunConfig) -> int:
    if cfg.text is None or cfg.images is None:
        raise ValueError("eval-groups requires --text and --images")
    manifest, matrix = load_dataset(cfg.text)
    _, eval_set = load_grouped_eval_set(cfg.images)

    cls_idx = manifest.indices_with_role("class")
    if len(cls_idx) < 2:
        raise ValueError("text manifest needs at least 2 class-role entries")
    class_matrix = EmbeddingMatrix(matrix.data[:, cls_idx])
    class_names = manifest.labels_for_role("class")

    needs_p0 = any(m in ("orth-proj", "orth-cali") for m in cfg.methods)
    needs_pairs = any(m in ("orth-cali", "cali-only") for m in cfg.methods)
    p0 = np.eye(matrix.dim)
    if needs_p0:
        spur_idx = manifest.indices_with_role("spurious")
        if not spur_idx:
            raise ValueError("text manifest has no spurious-role entries")
        p0 = orthogonal_projection(SpuriousBasis.from_columns(matrix.data[:, spur_idx]))
    pairs = extract_pairs(manifest, matrix)
    if needs_pairs and pairs.count == 0:
        raise ValueError("text manifest has no positive-pair entries")

    renorm = True if cfg.renormalize is None else cfg.renormalize
    rows = []
    for method in cfg.methods:
        lambdas = cfg.lam if method in ("orth-cali", "cali-only") else (None,)
        for lam in lambdas:
            proj = _method_projection(method, p0, pairs, lam if lam is not None else 0.0)
            weights = zeroshot.build_classifier(
                class_matrix, class_names, proj=proj, renormalize=renorm, lam=lam
            )
            report = zeroshot.group_report(weights, eval_set)
            rows.append({"method": method, "lambda": lam, **report.to_json_dict()})

    header = f"{'method':<12}{'lambda':>10}{'WG':>8}{'Avg':>8}{'Gap':>8}"
    print(header)
    for row in rows:
        lam_text = "-" if row["lambda"] is None else f"{row['lambda']:g}"
        print(
            f"{row['method']:<12}{lam_text:>10}"
            f"{100 * row['worst_group']:>8.1f}{100 * row['average']:>8.1f}"
            f"{100 * row['gap']:>8.1f}"
        )
    if cfg.out is not None:
        write_json(Path(str(cfg.out) + ".groups.json"), {"rows": rows})
        print(f"wrote {cfg.out}.groups.json")
    return EXIT_OK


def cmd_eval_skew(cfg: RunConfig) -> int:
    if cfg.text is None or cfg.images is None:
        raise ValueError("eval-skew requires --text and --images")
    manifest, matrix = load_dataset(cfg.text)
    _, images = load_dataset(cfg.images)
    k = int(cfg.k)

    query_idx = manifest.indices_with_role("query")
    if not query_idx:
        raise ValueError("text manifest has no query-role entries")
    queries = matrix.data[:, query_idx]
    if cfg.proj is not None:
        result = load_projection(cfg.proj)
        applied = apply_projection(
            EmbeddingMatrix(queries), result.p_star,
            renormalize=result.renormalize if cfg.renormalize is None else cfg.renormalize,
        )
        if applied.zeroed_columns:
            raise ValueError(f"projection annihilated query columns {list(applied.zeroed_columns)}")
        queries = applied.matrix.data

    label_files = cfg.labels or (str(labels_path(cfg.images)),)
    families = {}
    for item in label_files:
        name, _, path = item.rpartition("=")
        path = path or item
        doc = read_json(path)
        family = name or str(doc.get("family", Path(path).name.split(".")[0]))
        attrs = np.asarray(doc["a"], dtype=np.int64)
        if attrs.shape[0] != images.count:
            raise ValueError(f"{path}: {attrs.shape[0]} attributes for {images.count} images")
        families[family] = (attrs, tuple(doc["attribute_names"]))

    report = {"k": k, "families": {}}
    csv_lines = ["family,query_id,max_skew"]
    for family, (attrs, attr_names) in families.items():
        per_query = {}
        for j, qi in enumerate(query_idx):
            ranked = fairness.rank_by_query(queries[:, j], images, k, attrs)
            per_query[manifest.entries[qi].id] = fairness.max_skew(ranked, len(attr_names), k)
        mean = fairness.mean_max_skew(per_query.values())
        report["families"][family] = {"per_query": per_query, "mean": mean}
        for qid, skew in per_query.items():
            csv_lines.append(f"{family},{qid},{skew:.6f}")
        print(f"{family}: mean MaxSkew@{k} = {mean:.6f}")
        for qid, skew in per_query.items():
            print(f"  {qid}: {skew:.6f}")
    if cfg.out is not None:
        write_json(Path(str(cfg.out) + ".skew.json"), report)
        _atomic_write_bytes(
            Path(str(cfg.out) + ".skew.csv"), ("\n".join(csv_lines) + "\n").encode()
        )
        print(f"wrote {cfg.out}.skew.json and {cfg.out}.skew.csv")
    return EXIT_OK


def cmd_eval_discrepancy(cfg: RunConfig) -> int:
    if cfg.images is None or cfg.attributes is None:
        raise ValueError("eval-discrepancy requires --images and --attributes")
    image_manifest, images = load_dataset(cfg.images)
    attr_manifest, attr_matrix = load_dataset(cfg.attributes)
    attr_idx = attr_manifest.indices_with_role("attribute")
    if len(attr_idx) < 2:
        raise ValueError("attribute manifest needs at least 2 attribute-role entries")
    attr_names = attr_manifest.labels_for_role("attribute")
    dist, per_item = fairness.classify_attributes(
        images, EmbeddingMatrix(attr_matrix.data[:, attr_idx]), attr_names
    )
    excluded = int(np.sum(per_item < 0))
    overall = fairness.discrepancy(dist)

    per_class = {}
    lpath = labels_path(cfg.images)
    if lpath.exists():
        doc = read_json(lpath)
        y = np.asarray(doc["y"], dtype=np.int64)
        for ci, cname in enumerate(doc["class_names"]):
            mask = (y == ci) & (per_item >= 0)
            if not np.any(mask):
                continue
            counts = np.bincount(per_item[mask], minlength=len(attr_names))
            per_class[str(cname)] = fairness.discrepancy(
                fairness.AttributeDistribution(counts, tuple(attr_names))
            )

    report = {
        "attribute_names": list(attr_names),
        "counts": [int(c) for c in dist.counts],
        "overall": overall,
        "excluded_count": excluded,
    }
    if per_class:
        values = list(per_class.values())
        report["per_class"] = per_class
        report["mean"] = float(np.mean(values))
        report["std"] = float(np.std(values))
    print(f"discrepancy: {overall:.6f}  (counts {list(map(int, dist.counts))}, "
          f"excluded {excluded})")
    if "mean" in report:
        print(f"per-class mean: {report['mean']:.6f}  std: {report['std']:.6f}")
    if cfg.out is not None:
        write_json(Path(str(cfg.out) + ".discrepancy.json"), report)
        write_json(
            Path(str(cfg.out) + ".assignments.json"),
            {
                "attribute_names": list(attr_names),
                "assignment": [int(v) for v in per_item],
                "item_ids": [e.id for e in image_manifest.entries],
            },
        )
        print(f"wrote {cfg.out}.discrepancy.json and {cfg.out}.assignments.json")
    return EXIT_OK


def cmd_generative_prep(cfg: RunConfig) -> int:
    if cfg.pairs is None or cfg.targets is None or cfg.out is None:
        raise ValueError("generative-prep requires --pairs, --targets, and --out")
    lam = cfg.single_lambda()
    if cfg.renormalize is None:
        cfg.renormalize = False
    result, _rank = _build_projection(cfg, cfg.pairs, lam)

    target_manifest, targets = load_dataset(cfg.targets)
    applied = apply_projection(targets, result.p_star, renormalize=cfg.renormalize)
    save_embeddings(applied.matrix, target_manifest, cfg.out)
    save_projection(result, cfg.out)

    train_manifest, train_matrix = load_dataset(cfg.pairs)
    train_pairs = extract_pairs(train_manifest, train_matrix)
    eye = np.eye(result.dim)
    gaps = {
        "train": {
            "before": fairness.pair_gap(eye, train_pairs),
            "after": fairness.pair_gap(result.p_star, train_pairs),
        }
    }
    if cfg.test_pairs is not None:
        test_manifest, test_matrix = load_dataset(cfg.test_pairs)
        test_pairs = extract_pairs(test_manifest, test_matrix)
        gaps["test"] = {
            "before": fairness.pair_gap(eye, test_pairs),
            "after": fairness.pair_gap(result.p_star, test_pairs),
        }

    print(f"wrote {cfg.out}.manifest.json, {cfg.out}.f32, and projection files")
    print(f"{'split':<8}{'before':>10}{'after':>10}")
    for split, vals in gaps.items():
        print(f"{split:<8}{vals['before']:>10.4f}{vals['after']:>10.4f}")
    write_json(
        Path(str(cfg.out) + ".prep.json"),
        {
            "lambda": lam,
            "pair_count": result.pair_count,
            "skip_p0": result.skip_p0,
            "renormalized": cfg.renormalize,
            "zeroed_columns": list(applied.zeroed_columns),
            "pair_gap": gaps,
        },
    )
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    results = verify.run_all_checks(seed=cfg.seed, proj_prefix=cfg.proj)
    for res in results:
        print(res.line())
    failed = [r for r in results if not r.passed]
    if cfg.out is not None:
        write_json(
            Path(str(cfg.out) + ".verify.json"),
            {
                "seed": cfg.seed,
                "checks": [
                    {
                        "name": r.name,
                        "passed": r.passed,
                        "max_deviation": r.max_deviation,
                        "threshold": r.threshold,
                    }
                    for r in results
                ],
            },
        )
    if failed:
        print(f"{len(failed)} check(s) failed")
        return EXIT_VERIFY
    print("all checks passed")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; that is reserved
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="orthocal", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **flags):
        p = sub.add_parser(name)
        p.set_defaults(func=func, command=name)
        p.add_argument("--config", default=None, help="JSON config; flags override")
        if flags.get("text"):
            p.add_argument("--text", default=None, help="text embedding prefix")
        if flags.get("images"):
            p.add_argument("--images", default=None, help="image embedding prefix")
        if flags.get("io"):
            p.add_argument("--input", default=None)
            p.add_argument("--proj", default=None)
        if flags.get("proj_only"):
            p.add_argument("--proj", default=None, help="projection prefix")
        if flags.get("out"):
            p.add_argument("--out", default=None, help="output prefix")
        if flags.get("lam"):
            p.add_argument("--lambda", dest="lam", default=None,
                           help="regularization weight; comma-separate to sweep")
        if flags.get("skip"):
            p.add_argument("--skip-p0", dest="skip_p0", default=None,
                           action=argparse.BooleanOptionalAction,
                           help="use the identity instead of the orthogonal projector")
        if flags.get("renorm"):
            p.add_argument("--renormalize", dest="renormalize", default=None,
                           action=argparse.BooleanOptionalAction,
                           help="rescale projected columns to unit norm")
        if flags.get("k"):
            p.add_argument("--k", type=int, default=None, help="retrieval cutoff")
        if flags.get("seed"):
            p.add_argument("--seed", type=int, default=None)
        return p

    add("build", cmd_build, text=True, out=True, lam=True, skip=True, renorm=True)
    add("apply", cmd_apply, io=True, out=True, renorm=True)
    p = add("eval-groups", cmd_eval_groups, text=True, images=True, out=True,
            lam=True, renorm=True)
    p.add_argument("--methods", default=None,
                   help=f"comma-separated subset of {','.join(KNOWN_METHODS)}")
    p = add("eval-skew", cmd_eval_skew, text=True, images=True, out=True,
            proj_only=True, k=True, renorm=True)
    p.add_argument("--labels", action="append", default=None,
                   help="extra attribute sidecar as family=path; repeatable")
    p = add("eval-discrepancy", cmd_eval_discrepancy, images=True, out=True)
    p.add_argument("--attributes", default=None, help="attribute prompt prefix")
    p = add("generative-prep", cmd_generative_prep, out=True, lam=True, skip=True,
            renorm=True)
    p.add_argument("--pairs", default=None, help="training pair prefix")
    p.add_argument("--targets", default=None, help="target prompt prefix")
    p.add_argument("--test-pairs", dest="test_pairs", default=None,
                   help="held-out pair prefix")
    add("verify", cmd_verify, proj_only=True, seed=True, out=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge(args)
        return args.func(cfg)
    except (InterchangeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
