import json
import subprocess
import sys

import numpy as np
import pytest

from orthocal.cli import main
from orthocal.interchange import (
    EmbeddingMatrix,
    ManifestEntry,
    PromptManifest,
    binary_path,
    load_dataset,
    save_embeddings,
    save_labels,
)
from orthocal.projection import load_projection
from orthocal.synth import (
    build_generative_world,
    build_group_world,
    build_retrieval_world,
    write_generative_world,
    write_group_world,
    write_retrieval_world,
)


@pytest.fixture(scope="module")
def group_paths(tmp_path_factory):
    return write_group_world(build_group_world(), tmp_path_factory.mktemp("group"))


@pytest.fixture(scope="module")
def generative_paths(tmp_path_factory):
    return write_generative_world(build_generative_world(), tmp_path_factory.mktemp("gen"))


@pytest.fixture(scope="module")
def retrieval_paths(tmp_path_factory):
    return write_retrieval_world(build_retrieval_world(), tmp_path_factory.mktemp("ret"))


class TestBuild:
    def test_writes_projection_and_reports_counts(self, group_paths, tmp_path, capsys):
        out = tmp_path / "proj"
        assert main(["build", "--text", group_paths["text"], "--out", str(out),
                     "--lambda", "1000"]) == 0
        printed = capsys.readouterr().out
        assert "pair_count: 6" in printed
        assert "spurious_rank: 4" in printed
        result = load_projection(out)
        assert result.lam == 1000.0 and result.pair_count == 6

    def test_skip_p0_stores_identity_block(self, group_paths, tmp_path):
        out = tmp_path / "proj"
        assert main(["build", "--text", group_paths["text"], "--out", str(out),
                     "--skip-p0"]) == 0
        result = load_projection(out)
        np.testing.assert_array_equal(result.p0, np.eye(result.dim))
        assert result.skip_p0 is True

    def test_lambda_zero_makes_p_star_equal_p0(self, group_paths, tmp_path):
        out = tmp_path / "proj"
        assert main(["build", "--text", group_paths["text"], "--out", str(out),
                     "--lambda", "0"]) == 0
        result = load_projection(out)
        np.testing.assert_array_equal(result.p_star, result.p0)

    def test_missing_spurious_role_fails(self, tmp_path, capsys):
        manifest = PromptManifest(entries=(
            ManifestEntry(id="l", text="a", role="pair_left", pair_id="p"),
            ManifestEntry(id="r", text="b", role="pair_right", pair_id="p"),
        ))
        save_embeddings(EmbeddingMatrix(np.eye(2)), manifest, tmp_path / "t")
        code = main(["build", "--text", str(tmp_path / "t"), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "spurious" in capsys.readouterr().err

    def test_rank_zero_spurious_basis_fails(self, tmp_path, capsys):
        manifest = PromptManifest(entries=(
            ManifestEntry(id="s", text="x", role="spurious", attribute_label="a"),
            ManifestEntry(id="l", text="a", role="pair_left", pair_id="p"),
            ManifestEntry(id="r", text="b", role="pair_right", pair_id="p"),
        ))
        data = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        save_embeddings(EmbeddingMatrix(data), manifest, tmp_path / "t")
        assert main(["build", "--text", str(tmp_path / "t"), "--out", str(tmp_path / "o")]) == 1
        assert "rank 0" in capsys.readouterr().err


class TestApply:
    def test_round_trip_loadable(self, group_paths, tmp_path):
        proj = tmp_path / "proj"
        main(["build", "--text", group_paths["text"], "--out", str(proj)])
        out = tmp_path / "debiased"
        assert main(["apply", "--input", group_paths["text"], "--proj", str(proj),
                     "--out", str(out)]) == 0
        manifest, matrix = load_dataset(out)
        _, original = load_dataset(group_paths["text"])
        assert matrix.count == original.count
        norms = np.linalg.norm(matrix.data, axis=0)
        np.testing.assert_allclose(norms, 1.0, atol=1e-6)

    def test_identity_projection_no_renormalize_bit_exact(self, group_paths, tmp_path):
        proj = tmp_path / "proj"
        main(["build", "--text", group_paths["text"], "--out", str(proj),
              "--skip-p0", "--lambda", "0", "--no-renormalize"])
        out = tmp_path / "copy"
        assert main(["apply", "--input", group_paths["text"], "--proj", str(proj),
                     "--out", str(out)]) == 0
        assert binary_path(out).read_bytes() == binary_path(group_paths["text"]).read_bytes()


class TestEvalGroups:
    def test_method_ordering_and_report(self, group_paths, tmp_path, capsys):
        out = tmp_path / "report"
        code = main(["eval-groups", "--text", group_paths["text"],
                     "--images", group_paths["images"],
                     "--methods", "zeroshot,orth-proj,orth-cali",
                     "--lambda", "1000", "--out", str(out)])
        assert code == 0
        rows = json.loads((tmp_path / "report.groups.json").read_text())["rows"]
        by_method = {r["method"]: r for r in rows}
        assert by_method["orth-cali"]["gap"] < by_method["zeroshot"]["gap"]
        assert by_method["orth-cali"]["gap"] < by_method["orth-proj"]["gap"]
        assert by_method["orth-cali"]["worst_group"] > by_method["zeroshot"]["worst_group"]
        printed = capsys.readouterr().out
        assert printed.splitlines()[0].split() == ["method", "lambda", "WG", "Avg", "Gap"]

    def test_lambda_sweep_one_row_per_lambda(self, group_paths, tmp_path):
        out = tmp_path / "sweep"
        main(["eval-groups", "--text", group_paths["text"], "--images", group_paths["images"],
              "--methods", "orth-cali", "--lambda", "200,400,600,1000", "--out", str(out)])
        rows = json.loads((tmp_path / "sweep.groups.json").read_text())["rows"]
        assert [r["lambda"] for r in rows] == [200.0, 400.0, 600.0, 1000.0]

    def test_missing_group_names_combination(self, group_paths, tmp_path, capsys):
        images = tmp_path / "imgs"
        manifest = PromptManifest(entries=(
            ManifestEntry(id="i0", text="", role="image"),
            ManifestEntry(id="i1", text="", role="image"),
        ))
        _, text_matrix = load_dataset(group_paths["text"])
        save_embeddings(EmbeddingMatrix(text_matrix.data[:, :2]), manifest, images)
        save_labels(images, [0, 1], [0, 1], ["class0", "class1"], ["attr0", "attr1"])
        assert main(["eval-groups", "--text", group_paths["text"],
                     "--images", str(images)]) == 1
        assert "(y=0, a=1)" in capsys.readouterr().err


class TestEvalSkew:
    def test_balanced_corpus_zero_skew(self, tmp_path, capsys):
        text = PromptManifest(entries=(ManifestEntry(id="q", text="q", role="query"),))
        save_embeddings(EmbeddingMatrix(np.array([[1.0], [0.0]])), text, tmp_path / "text")
        # descending similarity alternates attributes -> every prefix is balanced
        sims = np.array([[0.9, 0.8, 0.7, 0.6], [0.0, 0.0, 0.0, 0.0]])
        images = PromptManifest(entries=tuple(
            ManifestEntry(id=f"i{i}", text="", role="image") for i in range(4)))
        save_embeddings(EmbeddingMatrix(sims), images, tmp_path / "imgs")
        save_labels(tmp_path / "imgs", [0] * 4, [0, 1, 0, 1], ["c"], ["x", "y"])
        assert main(["eval-skew", "--text", str(tmp_path / "text"),
                     "--images", str(tmp_path / "imgs"), "--k", "4"]) == 0
        assert "= 0.000000" in capsys.readouterr().out

    def test_contrived_topk_matches_hand_value(self, tmp_path, capsys):
        text = PromptManifest(entries=(ManifestEntry(id="q", text="q", role="query"),))
        save_embeddings(EmbeddingMatrix(np.array([[1.0], [0.0]])), text, tmp_path / "text")
        sims = np.array([[0.9, 0.8, 0.7, 0.6], [0.0, 0.0, 0.0, 0.0]])
        images = PromptManifest(entries=tuple(
            ManifestEntry(id=f"i{i}", text="", role="image") for i in range(4)))
        save_embeddings(EmbeddingMatrix(sims), images, tmp_path / "imgs")
        save_labels(tmp_path / "imgs", [0] * 4, [0, 0, 0, 1], ["c"], ["x", "y"])
        assert main(["eval-skew", "--text", str(tmp_path / "text"),
                     "--images", str(tmp_path / "imgs"), "--k", "4"]) == 0
        assert f"{np.log(1.5):.6f}" in capsys.readouterr().out

    def test_k_larger_than_corpus_fails(self, retrieval_paths, capsys):
        assert main(["eval-skew", "--text", retrieval_paths["text"],
                     "--images", retrieval_paths["images"], "--k", "100000"]) == 1
        assert "out of range" in capsys.readouterr().err

    def test_debiasing_reduces_mean_skew(self, retrieval_paths, tmp_path):
        proj = tmp_path / "proj"
        main(["build", "--text", retrieval_paths["text"], "--out", str(proj)])
        raw = tmp_path / "raw"
        deb = tmp_path / "deb"
        main(["eval-skew", "--text", retrieval_paths["text"],
              "--images", retrieval_paths["images"], "--k", "100", "--out", str(raw)])
        main(["eval-skew", "--text", retrieval_paths["text"],
              "--images", retrieval_paths["images"], "--k", "100",
              "--proj", str(proj), "--out", str(deb)])
        raw_mean = list(json.loads((tmp_path / "raw.skew.json").read_text())["families"].values())[0]["mean"]
        deb_mean = list(json.loads((tmp_path / "deb.skew.json").read_text())["families"].values())[0]["mean"]
        assert deb_mean < raw_mean


class TestEvalDiscrepancy:
    def test_biased_generated_set(self, generative_paths, tmp_path, capsys):
        out = tmp_path / "disc"
        assert main(["eval-discrepancy", "--images", generative_paths["generated"],
                     "--attributes", generative_paths["attributes"], "--out", str(out)]) == 0
        report = json.loads((tmp_path / "disc.discrepancy.json").read_text())
        assert report["overall"] > 0.3  # the synthetic mix is strongly biased
        assignments = json.loads((tmp_path / "disc.assignments.json").read_text())
        assert len(assignments["assignment"]) == sum(report["counts"])


class TestGenerativePrep:
    def test_gap_shrinks_on_train_and_heldout(self, generative_paths, tmp_path, capsys):
        out = tmp_path / "prepped"
        code = main(["generative-prep", "--pairs", generative_paths["train_pairs"],
                     "--targets", generative_paths["targets"],
                     "--test-pairs", generative_paths["test_pairs"], "--out", str(out)])
        assert code == 0
        report = json.loads((tmp_path / "prepped.prep.json").read_text())
        assert report["lambda"] == 500.0
        assert report["skip_p0"] is True
        for split in ("train", "test"):
            assert report["pair_gap"][split]["after"] < report["pair_gap"][split]["before"]

    def test_lambda_zero_copies_input_bit_for_bit(self, generative_paths, tmp_path):
        out = tmp_path / "copy"
        assert main(["generative-prep", "--pairs", generative_paths["train_pairs"],
                     "--targets", generative_paths["targets"], "--lambda", "0",
                     "--out", str(out)]) == 0
        assert binary_path(out).read_bytes() == binary_path(
            generative_paths["targets"]).read_bytes()

    def test_unseen_prompt_processed_identically(self, generative_paths, tmp_path):
        # the matrix is prompt-independent: appending a new target changes nothing
        manifest, targets = load_dataset(generative_paths["targets"])
        extra = PromptManifest(
            entries=manifest.entries + (ManifestEntry(id="novel", text="novel prompt",
                                                      role="query"),),
            encoder_tag=manifest.encoder_tag,
        )
        rng = np.random.default_rng(0)
        novel = rng.normal(size=(targets.dim, 1))
        extended = EmbeddingMatrix(np.concatenate([targets.data, novel], axis=1))
        save_embeddings(extended, extra, tmp_path / "targets2")
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        main(["generative-prep", "--pairs", generative_paths["train_pairs"],
              "--targets", generative_paths["targets"], "--out", str(out1)])
        main(["generative-prep", "--pairs", generative_paths["train_pairs"],
              "--targets", str(tmp_path / "targets2"), "--out", str(out2)])
        _, a = load_dataset(out1)
        _, b = load_dataset(out2)
        np.testing.assert_array_equal(a.data, b.data[:, : a.count])


class TestVerify:
    def test_default_seed_passes(self, capsys):
        assert main(["verify", "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert "all checks passed" in out
        assert out.count("PASS") >= 7

    def test_corrupted_projection_fails_named_check(self, group_paths, tmp_path, capsys):
        proj = tmp_path / "proj"
        main(["build", "--text", group_paths["text"], "--out", str(proj)])
        blob = bytearray((tmp_path / "proj.proj.f32").read_bytes())
        blob[-64:] = b"\x00" * 64  # stomp on part of the p_star block
        (tmp_path / "proj.proj.f32").write_bytes(bytes(blob))
        assert main(["verify", "--proj", str(proj)]) == 2
        out = capsys.readouterr().out
        assert "FAIL  projection_file_consistency" in out


class TestConfigMerge:
    def test_config_supplies_values_flags_override(self, group_paths, tmp_path):
        cfg = {"text": group_paths["text"], "out": str(tmp_path / "from_config"),
               "lambda": 200}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        assert main(["build", "--config", str(cfg_path)]) == 0
        assert load_projection(tmp_path / "from_config").lam == 200.0
        assert main(["build", "--config", str(cfg_path), "--lambda", "700",
                     "--out", str(tmp_path / "flag_wins")]) == 0
        assert load_projection(tmp_path / "flag_wins").lam == 700.0

    def test_missing_file_is_validation_error(self, tmp_path, capsys):
        assert main(["build", "--text", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "o")]) == 1
        assert "no manifest" in capsys.readouterr().err


def test_console_script_entry_point(group_paths, tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "orthocal", "build", "--text", group_paths["text"],
         "--out", str(tmp_path / "proj")],
        capture_output=True, text=True,
    )
    assert result.returncode == 0
    assert "pair_count" in result.stdout
