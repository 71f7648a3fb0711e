use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;
use symco::hclust::complete_linkage;
use symco::umap::EmbedParams;
use symco::{Category, DistanceMatrix};
use symco_cli::artifacts::{validate, DendrogramArtifact, EmbeddingArtifact};
use symco_cli::manifest::{Manifest, StageStatus, MANIFEST_FILE};
use symco_cli::svg;

const BIN: &str = env!("CARGO_BIN_EXE_symco");

fn symco(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn manifest(out: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap()
}

/// Small synthetic cohort written by the CLI itself.
fn small_cohort(dir: &Path) -> PathBuf {
    let out = dir.join("synth");
    let o = symco(
        dir,
        &[
            "synth",
            "--dataset",
            "cis",
            "--n",
            "600",
            "--min-age",
            "0",
            "--max-age",
            "89",
            "--missing-rate",
            "0.05",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn abc_dendrogram() -> DendrogramArtifact {
    let d = DistanceMatrix::from_dense(
        vec!["A".into(), "B".into(), "C".into()],
        &[vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 3.0], vec![2.0, 3.0, 0.0]],
    )
    .unwrap();
    let dendrogram = complete_linkage(&d).unwrap();
    DendrogramArtifact {
        leaf_order: dendrogram.leaf_order(),
        newick: dendrogram.to_newick(),
        dendrogram,
    }
}

#[test]
fn hand_dendrogram_has_two_brackets() {
    let art = abc_dendrogram();
    let out = svg::emit("dendrogram", &serde_json::to_value(&art).unwrap()).unwrap();
    let heights: Vec<&str> = out
        .split("data-height=\"")
        .skip(1)
        .map(|s| &s[..s.find('"').unwrap()])
        .collect();
    assert_eq!(heights, ["1", "3"]);
    assert_eq!(
        out,
        svg::emit("dendrogram", &serde_json::to_value(&art).unwrap()).unwrap()
    );
}

#[test]
fn svg_rejects_empty_and_unknown() {
    let empty = EmbeddingArtifact {
        labels: vec![],
        coords: vec![],
        params: EmbedParams::tight(0),
        seed: 0,
        preset: "tight".into(),
        init: symco::umap::Init::Random,
        categories: vec![],
        frequencies: vec![],
    };
    assert!(svg::emit("embedding", &serde_json::to_value(&empty).unwrap()).is_err());
    assert!(svg::emit("piechart", &json!({})).is_err());
    assert!(svg::emit("heatmap", &json!({"labels": []})).is_err());
}

#[test]
fn scatter_radius_tracks_frequency() {
    let e = EmbeddingArtifact {
        labels: vec!["a".into(), "b".into()],
        coords: vec![[0.0, 0.0], [1.0, 1.0]],
        params: EmbedParams::tight(0),
        seed: 0,
        preset: "tight".into(),
        init: symco::umap::Init::Random,
        categories: vec![Category::Systemic, Category::Gastrointestinal],
        frequencies: vec![0.5, 0.25],
    };
    let out = svg::embedding(&e).unwrap();
    let radii: Vec<f64> = out
        .split(" r=\"")
        .skip(1)
        .map(|s| s[..s.find('"').unwrap()].parse().unwrap())
        .collect();
    assert_eq!(radii.len(), 2);
    assert!((radii[0] / radii[1] - 2.0).abs() < 1e-9);
}

#[test]
fn commands_write_valid_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_cohort(tmp.path());
    let input = data.join("cohort.csv");
    let rules = data.join("rules.conf");
    assert!(manifest(&data).is_complete());

    for cmd in ["describe", "jaccard", "hclust", "lpca", "umap"] {
        let out = tmp.path().join(cmd);
        let o = symco(
            tmp.path(),
            &[
                cmd,
                "--input",
                input.to_str().unwrap(),
                "--rules",
                rules.to_str().unwrap(),
                "--svg",
                "--out",
                out.to_str().unwrap(),
            ],
        );
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let m = manifest(&out);
        assert!(m.is_complete());
        for a in m.artifacts().filter(|a| a.format == "json") {
            validate(&a.kind, &std::fs::read_to_string(out.join(&a.path)).unwrap()).unwrap();
        }
    }
    let lpca = manifest(&tmp.path().join("lpca"));
    let params = &lpca.stages.iter().find(|s| s.name == "lpca").unwrap().params;
    assert_eq!(params["k_max"], 8);
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("from_env");
    let o = Command::new(BIN)
        .current_dir(tmp.path())
        .args(["synth", "--n", "50"])
        .env("SYMCO_OUT", &out)
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join(MANIFEST_FILE).is_file());
}

#[test]
fn failed_stage_is_partial_and_exit_is_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_cohort(tmp.path());
    let out = tmp.path().join("bad");
    // k_max larger than the number of symptoms makes the lpca stage fail
    let o = symco(
        tmp.path(),
        &[
            "pipeline",
            "--input",
            data.join("cohort.csv").to_str().unwrap(),
            "--rules",
            "cis",
            "--k-max",
            "40",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let m = manifest(&out);
    assert_eq!(m.partial, ["lpca", "umap_tight", "umap_loose"]);
    let status = |name: &str| m.stages.iter().find(|s| s.name == name).unwrap().status;
    assert_eq!(status("hclust"), StageStatus::Complete);
    assert_eq!(status("lpca"), StageStatus::Failed);
    assert_eq!(status("umap_loose"), StageStatus::NotRun);
    assert!(out.join("heatmap.json").is_file());
}

#[test]
fn ingest_errors_name_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("bad.csv");
    std::fs::write(&csv, "case_id,age,sex,cough,fever\na,30,F,1,maybe\n").unwrap();
    std::fs::write(
        tmp.path().join("r.conf"),
        "cough = lower_respiratory\nfever = systemic\n",
    )
    .unwrap();
    let o = symco(
        tmp.path(),
        &["describe", "--input", "bad.csv", "--rules", "r.conf", "--out", "o"],
    );
    assert_eq!(o.status.code(), Some(2));
    let m = manifest(&tmp.path().join("o"));
    let err = m.stages[0].error.clone().unwrap();
    assert!(
        err.contains("fever") && err.contains("maybe") && err.contains("row"),
        "{err}"
    );
}

#[test]
fn aligned_run_replays_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_cohort(tmp.path());
    let input = data.join("cohort.csv");
    let out = tmp.path().join("aligned");
    let args = [
        "aligned",
        "--input",
        input.to_str().unwrap(),
        "--rules",
        "cis",
        "--strata",
        "broad",
        "--preset",
        "loose",
        "--svg",
        "--out",
        out.to_str().unwrap(),
    ];
    assert!(symco(tmp.path(), &args).status.success());
    let m = manifest(&out);
    assert_eq!(m.seeds.keys().filter(|k| k.starts_with("aligned/")).count(), 3);

    let again = tmp.path().join("again");
    let o = symco(
        tmp.path(),
        &[
            "--replay",
            out.join(MANIFEST_FILE).to_str().unwrap(),
            "--out",
            again.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for a in m.artifacts() {
        assert_eq!(
            std::fs::read(out.join(&a.path)).unwrap(),
            std::fs::read(again.join(&a.path)).unwrap(),
            "{}",
            a.path
        );
    }
    assert_eq!(
        std::fs::read(out.join(MANIFEST_FILE)).unwrap(),
        std::fs::read(again.join(MANIFEST_FILE)).unwrap()
    );

    // a changed input is refused
    std::fs::write(
        &input,
        std::fs::read_to_string(&input).unwrap().replacen(",1,", ",0,", 1),
    )
    .unwrap();
    let o = symco(
        tmp.path(),
        &[
            "--replay",
            out.join(MANIFEST_FILE).to_str().unwrap(),
            "--out",
            tmp.path().join("x").to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(1));
}
