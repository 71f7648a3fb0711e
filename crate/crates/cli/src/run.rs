use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};
use symco::cohort::{filter_symptomatic, symptom_frequencies, FilterReport};
use symco::distance::jaccard_matrix;
use symco::hclust::{complete_linkage, heatmap};
use symco::ingest::{export_csv, ingest_csv};
use symco::lpca::{fit, scan, select_k, BinaryData, ScanOptions, SelectOptions, LOO_MAX_ROWS};
use symco::strata::stratify;
use symco::synth::{generate, presets};
use symco::umap::{
    aligned_embed, embed, fuzzy_graph, interpolate_ribbon, stratum_seed, EmbedParams, Embedding,
    DEFAULT_ALIGNMENT_STRENGTH, DEFAULT_WINDOW,
};
use symco::{Category, Cohort, DistanceMatrix};

use crate::artifacts::*;
use crate::config::{load_rules, Command, Preset, RunConfig, Strata};
use crate::manifest::{sha256_hex, ArtifactRecord, InputRecord, Manifest, StageRecord, StageStatus, MANIFEST_FILE};
use crate::svg;

/// Largest default component count for the deviance scan.
pub const K_MAX_CAP: usize = 8;
pub const RIBBON_STEPS: usize = 10;

struct Data {
    raw: Cohort,
    symptomatic: Cohort,
    report: FilterReport,
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    out: PathBuf,
    stages: Vec<StageRecord>,
    seeds: BTreeMap<String, u64>,
}

/// Collects the artifacts and parameters of one stage.
struct Stage {
    record: StageRecord,
}

impl Stage {
    fn new(name: &str) -> Self {
        Stage {
            record: StageRecord {
                name: name.to_string(),
                status: StageStatus::Complete,
                error: None,
                params: Value::Null,
                artifacts: Vec::new(),
            },
        }
    }
}

impl Runner<'_> {
    fn write_bytes(&self, stage: &mut Stage, file: &str, kind: &str, format: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out.join(file);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        stage.record.artifacts.push(ArtifactRecord {
            path: file.to_string(),
            kind: kind.to_string(),
            format: format.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    /// Writes `value` as `<stem>.json`, plus `<stem>.svg` for plottable
    /// kinds when SVG output is on.
    fn write_json<T: Serialize>(&self, stage: &mut Stage, stem: &str, kind: &str, value: &T) -> Result<()> {
        let v = serde_json::to_value(value)?;
        let mut text = serde_json::to_string_pretty(&v)?;
        text.push('\n');
        self.write_bytes(stage, &format!("{stem}.json"), kind, "json", text.as_bytes())?;
        if self.cfg.svg && matches!(kind, "dendrogram" | "heatmap" | "embedding" | "aligned" | "loadings") {
            let rendered = svg::emit(kind, &v)?;
            self.write_bytes(stage, &format!("{stem}.svg"), kind, "svg", rendered.as_bytes())?;
        }
        Ok(())
    }

    /// Runs `body` as a named stage. A failure is recorded and returned.
    fn stage<T>(&mut self, name: &str, body: impl FnOnce(&mut Self, &mut Stage) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let mut stage = Stage::new(name);
        let result = body(self, &mut stage);
        if let Err(e) = &result {
            stage.record.status = StageStatus::Failed;
            stage.record.error = Some(format!("{e:#}"));
        }
        info!("stage {name}: {:?} in {:.2?}", stage.record.status, start.elapsed());
        self.stages.push(stage.record);
        result.with_context(|| format!("stage `{name}` failed"))
    }
}

fn median_quartiles(mut v: Vec<f64>) -> (Option<f64>, Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None, None);
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    (Some(q(0.5)), Some(q(0.25)), Some(q(0.75)))
}

pub fn summarize(raw: &Cohort, symptomatic: &Cohort, report: &FilterReport, strata: Strata) -> Result<CohortSummary> {
    let ages: Vec<f64> = raw.cases().iter().filter_map(|c| c.age.map(f64::from)).collect();
    let mean = (!ages.is_empty()).then(|| ages.iter().sum::<f64>() / ages.len() as f64);
    let known = ages.len();
    let (median, q1, q3) = median_quartiles(ages);
    let mut sex = BTreeMap::new();
    for c in raw.cases() {
        *sex.entry(c.sex.clone().unwrap_or_else(|| "NA".into())).or_insert(0) += 1;
    }
    let freqs = symptom_frequencies(symptomatic);
    let frequencies = Category::ALL
        .into_iter()
        .map(|category| CategoryGroup {
            category,
            symptoms: freqs.iter().filter(|f| f.category == category).cloned().collect(),
        })
        .filter(|g| !g.symptoms.is_empty())
        .collect();
    let strata = match strata.scheme() {
        None => Vec::new(),
        Some(scheme) => {
            let all = stratify(raw, &scheme)?;
            let sym = stratify(symptomatic, &scheme)?;
            all.iter()
                .zip(&sym)
                .map(|(a, s)| StratumSize {
                    label: a.label.clone(),
                    cases: a.cohort.n_cases(),
                    symptomatic: s.cohort.n_cases(),
                })
                .collect()
        }
    };
    Ok(CohortSummary {
        cases: raw.n_cases(),
        symptomatic: report.retained,
        asymptomatic: report.dropped,
        symptomatic_proportion: report.retained_fraction(),
        age: AgeSummary {
            known,
            missing: raw.n_cases() - known,
            mean,
            median,
            q1,
            q3,
        },
        sex,
        frequencies,
        strata,
    })
}

fn embedding_artifact(e: &Embedding, preset: Preset, cohort: &Cohort) -> EmbeddingArtifact {
    let freqs = symptom_frequencies(cohort);
    let lookup = |label: &str| {
        let f = freqs
            .iter()
            .find(|f| f.id == label)
            .expect("embedded symptom belongs to the cohort");
        (f.category, f.proportion.unwrap_or(0.0))
    };
    let (categories, frequencies) = e.labels.iter().map(|l| lookup(l)).unzip();
    EmbeddingArtifact {
        labels: e.labels.clone(),
        coords: e.coords.clone(),
        params: e.params.clone(),
        seed: e.seed,
        preset: preset.name().to_string(),
        init: e.init,
        categories,
        frequencies,
    }
}

/// Drops symptoms nobody reported, so every distance is defined.
fn reported_only(c: &Cohort) -> (Cohort, Vec<String>) {
    let (keep, drop): (Vec<usize>, Vec<usize>) =
        (0..c.n_symptoms()).partition(|&j| c.column(j).iter().any(|e| e.is_present()));
    let dropped = drop.iter().map(|&j| c.symptoms()[j].id.clone()).collect();
    (c.select_columns(&keep), dropped)
}

fn load(r: &mut Runner<'_>, inputs: &mut Vec<InputRecord>) -> Result<Data> {
    let cfg = r.cfg;
    r.stage("ingest", |_, stage| {
        let input = cfg.input.as_ref().ok_or_else(|| anyhow!("--input is required"))?;
        let rules = load_rules(cfg.rules.as_deref().ok_or_else(|| anyhow!("--rules is required"))?)?;
        let bytes = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
        inputs.push(InputRecord {
            role: "input".into(),
            source: input.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        inputs.push(InputRecord {
            role: "rules".into(),
            source: rules.source.clone(),
            sha256: sha256_hex(rules.text.as_bytes()),
        });
        let raw = ingest_csv(input, &rules.config).with_context(|| format!("ingesting {}", input.display()))?;
        let (symptomatic, report) = filter_symptomatic(&raw)?;
        stage.record.params = json!({
            "cases": raw.n_cases(),
            "symptoms": raw.n_symptoms(),
            "symptomatic": report.retained,
            "dropped": report.dropped,
        });
        Ok(Data {
            raw,
            symptomatic,
            report,
        })
    })
}

fn describe(r: &mut Runner<'_>, d: &Data) -> Result<()> {
    let strata = r.cfg.strata;
    r.stage("describe", |r, stage| {
        let summary = summarize(&d.raw, &d.symptomatic, &d.report, strata)?;
        stage.record.params = json!({ "strata": strata });
        r.write_json(stage, "summary", "summary", &summary)
    })
}

fn distances(r: &mut Runner<'_>, d: &Data) -> Result<DistanceMatrix> {
    r.stage("jaccard", |r, stage| {
        let m = jaccard_matrix(&d.symptomatic)?;
        if !m.undefined.is_empty() {
            warn!(
                "{} symptom pairs have no support; the matrix cannot be embedded",
                m.undefined.len()
            );
        }
        stage.record.params = json!({
            "cases": d.symptomatic.n_cases(),
            "symptoms": m.len(),
            "missing": "pairwise deletion",
            "undefined_pairs": m.undefined.len(),
        });
        r.write_json(stage, "distance", "distance", &m)?;
        let mut csv = Vec::new();
        m.write_csv(&mut csv)?;
        r.write_bytes(stage, "distance.csv", "distance", "csv", &csv)?;
        Ok(m)
    })
}

fn hclust(r: &mut Runner<'_>, m: &DistanceMatrix) -> Result<()> {
    r.stage("hclust", |r, stage| {
        let dendrogram = complete_linkage(m)?;
        stage.record.params = json!({
            "linkage": "complete",
            "ties": "lowest smaller node id, then lowest partner id",
        });
        let art = DendrogramArtifact {
            leaf_order: dendrogram.leaf_order(),
            newick: dendrogram.to_newick(),
            dendrogram: dendrogram.clone(),
        };
        r.write_json(stage, "dendrogram", "dendrogram", &art)?;
        let h = HeatmapArtifact::new(heatmap(&dendrogram, m), dendrogram);
        r.write_json(stage, "heatmap", "heatmap", &h)
    })
}

fn lpca(r: &mut Runner<'_>, d: &Data) -> Result<()> {
    let seed = r.cfg.seed;
    let k_max_opt = r.cfg.k_max;
    r.seeds.insert("lpca_folds".into(), seed);
    r.stage("lpca", |r, stage| {
        let data = BinaryData::from_cohort(&d.symptomatic);
        let p = data.ncols();
        let k_max = k_max_opt.unwrap_or(p.min(K_MAX_CAP));
        if !(3..=p).contains(&k_max) {
            bail!("k_max = {k_max} must lie in 3..={p} for component selection");
        }
        let opts = ScanOptions::new(k_max, seed);
        let select = SelectOptions::default();
        let s = scan(&data, &opts)?;
        let selection = select_k(&s, &select)?;
        let k = selection.k;
        let model = fit(&data, k, s.records[k - 1].m, &opts.fit)?;
        if !model.converged {
            warn!("selected k = {k} model did not converge");
        }
        stage.record.params = json!({
            "k_max": k_max,
            "m_grid": opts.m_grid,
            "cross_validation": if data.nrows() <= LOO_MAX_ROWS { "leave-one-out".to_string() } else { format!("{}-fold", opts.folds) },
            "seed": seed,
            "fit": opts.fit,
            "cv_fit": opts.cv_fit,
            "select": select,
        });
        let mut proportions = vec![0.0];
        proportions.extend(s.proportions());
        let art = LpcaArtifact {
            marginals: s.marginals(),
            proportions,
            selection,
            model: model.export(),
            scan: s,
        };
        r.write_json(stage, "lpca", "lpca", &art)?;
        let components = (0..k)
            .map(|c| ComponentLoadings {
                component: c + 1,
                bars: d
                    .symptomatic
                    .symptoms()
                    .iter()
                    .enumerate()
                    .map(|(j, s)| LoadingBar {
                        symptom: s.id.clone(),
                        loading: model.loadings[(j, c)],
                        category: s.category,
                    })
                    .collect(),
            })
            .collect();
        r.write_json(stage, "loadings", "loadings", &LoadingsArtifact { components })
    })
}

fn umap(r: &mut Runner<'_>, d: &Data, m: &DistanceMatrix, preset: Preset) -> Result<()> {
    let seed = r.cfg.seed;
    r.seeds.insert(format!("umap_{}", preset.name()), seed);
    r.stage(&format!("umap_{}", preset.name()), |r, stage| {
        let params = EmbedParams::preset(preset.name(), seed).expect("known preset");
        stage.record.params = serde_json::to_value(&params)?;
        let g = fuzzy_graph(m, params.n_neighbours)?;
        let e = embed(&g, &params)?;
        let art = embedding_artifact(&e, preset, &d.symptomatic);
        r.write_json(stage, &format!("embedding_{}", preset.name()), "embedding", &art)
    })
}

fn aligned(r: &mut Runner<'_>, d: &Data) -> Result<()> {
    let cfg = r.cfg;
    r.seeds.insert("aligned".into(), cfg.seed);
    r.stage("aligned", |r, stage| {
        let scheme = cfg
            .strata
            .scheme()
            .ok_or_else(|| anyhow!("aligned embedding needs --strata broad or decade"))?;
        let params = EmbedParams::preset(cfg.preset.name(), cfg.seed).expect("known preset");
        stage.record.params = json!({
            "scheme": cfg.strata,
            "preset": cfg.preset,
            "window": DEFAULT_WINDOW,
            "alignment_strength": DEFAULT_ALIGNMENT_STRENGTH,
            "params": params,
        });
        let mut skipped = Vec::new();
        let mut dropped_symptoms = BTreeMap::new();
        let mut cohorts = Vec::new();
        let mut inputs = Vec::new();
        for s in stratify(&d.symptomatic, &scheme)? {
            if s.is_empty() {
                warn!("stratum {} has no symptomatic cases; skipped", s.label);
                skipped.push(s.label);
                continue;
            }
            let (c, dropped) = reported_only(&s.cohort);
            if !dropped.is_empty() {
                dropped_symptoms.insert(s.label.clone(), dropped);
            }
            if c.n_symptoms() < 2 {
                skipped.push(s.label);
                continue;
            }
            inputs.push((s.label, jaccard_matrix(&c)?));
            cohorts.push(c);
        }
        for i in 0..inputs.len() {
            r.seeds.insert(format!("aligned/{i}"), stratum_seed(cfg.seed, i));
        }
        let set = aligned_embed(&inputs, DEFAULT_WINDOW, DEFAULT_ALIGNMENT_STRENGTH, &params)?;
        let embeddings = set
            .embeddings
            .iter()
            .zip(&set.positions)
            .map(|(e, &pos)| embedding_artifact(e, cfg.preset, &cohorts[pos]))
            .collect();
        skipped.extend(set.skipped.iter().cloned());
        let art = AlignedArtifact {
            preset: cfg.preset.name().to_string(),
            strata: set.strata.clone(),
            positions: set.positions.clone(),
            embeddings,
            relations: set.relations.clone(),
            window: set.window,
            alignment_strength: set.alignment_strength,
            skipped,
            dropped_symptoms,
        };
        r.write_json(stage, &format!("aligned_{}", cfg.preset.name()), "aligned", &art)?;
        let ribbons = RibbonArtifact {
            preset: cfg.preset.name().to_string(),
            steps_per_gap: RIBBON_STEPS,
            strata: set.strata.clone(),
            ribbons: interpolate_ribbon(&set, RIBBON_STEPS),
        };
        r.write_json(stage, &format!("ribbons_{}", cfg.preset.name()), "ribbons", &ribbons)
    })
}

fn synth(r: &mut Runner<'_>) -> Result<()> {
    let cfg = r.cfg;
    let sc = cfg.synth.clone().ok_or_else(|| anyhow!("synth settings missing"))?;
    r.seeds.insert("synth".into(), cfg.seed);
    r.stage("synth", |r, stage| {
        let mut spec = presets::preset(&sc.dataset, sc.n, cfg.seed)?;
        spec.missing_rate = sc.missing_rate;
        if let Some(ages) = sc.ages {
            spec.age_range = ages;
        }
        stage.record.params = serde_json::to_value(&spec)?;
        let (cohort, truth) = generate(&spec)?;
        let path = r.out.join("cohort.csv");
        export_csv(&cohort, &path)?;
        let bytes = std::fs::read(&path)?;
        stage.record.artifacts.push(ArtifactRecord {
            path: "cohort.csv".into(),
            kind: "cohort".into(),
            format: "csv".into(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len(),
        });
        let rules = presets::preset_config(&sc.dataset)?.to_text();
        r.write_bytes(stage, "rules.conf", "rules", "text", rules.as_bytes())?;
        r.write_json(stage, "truth", "truth", &truth)
    })
}

/// Stages the command will run, in order.
pub fn planned_stages(cfg: &RunConfig) -> Vec<String> {
    let mut v: Vec<&str> = match cfg.command {
        Command::Synth => vec!["synth"],
        Command::Describe => vec!["ingest", "describe"],
        Command::Jaccard => vec!["ingest", "jaccard"],
        Command::Hclust => vec!["ingest", "jaccard", "hclust"],
        Command::Lpca => vec!["ingest", "lpca"],
        Command::Umap => vec![
            "ingest",
            "jaccard",
            if cfg.preset == Preset::Tight {
                "umap_tight"
            } else {
                "umap_loose"
            },
        ],
        Command::Aligned => vec!["ingest", "aligned"],
        Command::Pipeline => vec![
            "ingest",
            "describe",
            "jaccard",
            "hclust",
            "lpca",
            "umap_tight",
            "umap_loose",
        ],
    };
    if cfg.command == Command::Pipeline && cfg.strata != Strata::None {
        v.push("aligned");
    }
    v.into_iter().map(String::from).collect()
}

fn execute(r: &mut Runner<'_>, inputs: &mut Vec<InputRecord>) -> Result<()> {
    let cfg = r.cfg;
    if cfg.command == Command::Synth {
        return synth(r);
    }
    let d = load(r, inputs)?;
    match cfg.command {
        Command::Describe => describe(r, &d),
        Command::Jaccard => distances(r, &d).map(drop),
        Command::Hclust => {
            let m = distances(r, &d)?;
            hclust(r, &m)
        }
        Command::Lpca => lpca(r, &d),
        Command::Umap => {
            let m = distances(r, &d)?;
            umap(r, &d, &m, cfg.preset)
        }
        Command::Aligned => aligned(r, &d),
        Command::Pipeline => {
            describe(r, &d)?;
            let m = distances(r, &d)?;
            hclust(r, &m)?;
            lpca(r, &d)?;
            umap(r, &d, &m, Preset::Tight)?;
            umap(r, &d, &m, Preset::Loose)?;
            if cfg.strata != Strata::None {
                aligned(r, &d)?;
            }
            Ok(())
        }
        Command::Synth => unreachable!(),
    }
}

/// Runs `cfg` into `out` and writes the manifest. Returns the manifest
/// even when a stage failed; failed and unrun stages are listed in
/// `partial`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut r = Runner {
        cfg,
        out: out.to_path_buf(),
        stages: Vec::new(),
        seeds: BTreeMap::new(),
    };
    let mut inputs = Vec::new();
    if let Err(e) = execute(&mut r, &mut inputs) {
        log::error!("{e:#}");
    }
    let done: Vec<String> = r.stages.iter().map(|s| s.name.clone()).collect();
    for name in planned_stages(cfg) {
        if !done.contains(&name) {
            r.stages.push(StageRecord {
                name,
                status: StageStatus::NotRun,
                error: None,
                params: Value::Null,
                artifacts: Vec::new(),
            });
        }
    }
    let partial = r
        .stages
        .iter()
        .filter(|s| s.status != StageStatus::Complete)
        .map(|s| s.name.clone())
        .collect();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        inputs,
        seeds: r.seeds,
        stages: r.stages,
        partial,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(out.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

/// Outcome of re-running a recorded manifest.
pub struct Replay {
    pub manifest: Manifest,
    /// Artifacts whose bytes differ from the recording, or that are missing.
    pub mismatches: Vec<String>,
}

pub fn replay(manifest_path: &Path, out: &Path) -> Result<Replay> {
    let text =
        std::fs::read_to_string(manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
    let recorded: Manifest = serde_json::from_str(&text).context("manifest does not match the schema")?;
    for input in recorded.inputs.iter().filter(|i| i.role == "input") {
        let bytes = std::fs::read(&input.source).with_context(|| format!("reading recorded input {}", input.source))?;
        if sha256_hex(&bytes) != input.sha256 {
            bail!("input {} changed since the recorded run", input.source);
        }
    }
    let manifest = run(&recorded.config, out)?;
    let fresh: BTreeMap<&str, &str> = manifest
        .artifacts()
        .map(|a| (a.path.as_str(), a.sha256.as_str()))
        .collect();
    let mut mismatches: Vec<String> = recorded
        .artifacts()
        .filter(|a| fresh.get(a.path.as_str()) != Some(&a.sha256.as_str()))
        .map(|a| a.path.clone())
        .collect();
    if manifest != recorded {
        mismatches.push(MANIFEST_FILE.to_string());
    }
    Ok(Replay { manifest, mismatches })
}
