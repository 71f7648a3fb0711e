use symco::distance::jaccard_matrix;
use symco::synth::presets::preset;
use symco::synth::{generate, generate_two_cluster, TwoClusterSpec};
use symco::umap::{align_datasets, aligned_embed, embed, fuzzy_graph, stratum_seed, EmbedParams, Embedding};
use symco::{DistanceMatrix, CORE_SYMPTOMS};

fn two_cluster(seed: u64) -> (DistanceMatrix, TwoClusterSpec) {
    let spec = TwoClusterSpec::new(20, 2000, 0.6, 0.05, seed);
    (jaccard_matrix(&generate_two_cluster(&spec).unwrap()).unwrap(), spec)
}

fn run(d: &DistanceMatrix, params: &EmbedParams) -> Embedding {
    embed(&fuzzy_graph(d, params.n_neighbours).unwrap(), params).unwrap()
}

fn nearest(p: usize, k: usize, dist: impl Fn(usize, usize) -> f64, i: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..p).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)).then(a.cmp(&b)));
    others.truncate(k);
    others
}

fn knn_recall(d: &DistanceMatrix, e: &Embedding, k: usize) -> f64 {
    let p = d.len();
    let total: usize = (0..p)
        .map(|i| {
            let a = nearest(p, k, |x, y| d.at(x, y), i);
            let b = nearest(p, k, |x, y| e.distance(x, y), i);
            a.iter().filter(|j| b.contains(j)).count()
        })
        .sum();
    total as f64 / (p * k) as f64
}

fn within_between(e: &Embedding, spec: &TwoClusterSpec) -> (f64, f64) {
    let (mut w, mut nw, mut b, mut nb) = (0.0, 0, 0.0, 0);
    for i in 0..spec.p {
        for j in i + 1..spec.p {
            if spec.block_of(i) == spec.block_of(j) {
                w += e.distance(i, j);
                nw += 1;
            } else {
                b += e.distance(i, j);
                nb += 1;
            }
        }
    }
    (w / nw as f64, b / nb as f64)
}

#[test]
fn tight_preset_separates_planted_blocks() {
    let separated = (0..10)
        .filter(|&seed| {
            let (d, spec) = two_cluster(seed);
            let (w, b) = within_between(&run(&d, &EmbedParams::tight(seed)), &spec);
            w < b
        })
        .count();
    assert!(separated >= 8, "{separated}/10");
}

#[test]
fn loose_preset_keeps_neighbourhoods() {
    let recalls: Vec<f64> = (0..10)
        .map(|seed| {
            let (d, _) = two_cluster(seed);
            knn_recall(&d, &run(&d, &EmbedParams::loose(seed)), 3)
        })
        .collect();
    let mean = recalls.iter().sum::<f64>() / recalls.len() as f64;
    assert!(mean >= 0.6, "{recalls:?}");
}

#[test]
fn repeated_runs_are_bit_identical() {
    let (d, _) = two_cluster(3);
    for params in [EmbedParams::tight(17), EmbedParams::loose(17)] {
        let a = run(&d, &params);
        let b = run(&d, &params);
        let bits = |e: &Embedding| e.coords.iter().flat_map(|c| c.map(f64::to_bits)).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}

#[test]
fn zero_strength_reproduces_independent_runs() {
    let strata: Vec<(String, DistanceMatrix)> = (0..4)
        .map(|s| {
            let (c, _) = generate(&preset("css", 1500, 40 + s).unwrap()).unwrap();
            (format!("g{s}"), jaccard_matrix(&c).unwrap())
        })
        .collect();
    let params = EmbedParams::loose(5);
    let set = aligned_embed(&strata, 2, 0.0, &params).unwrap();
    for (s, (_, d)) in strata.iter().enumerate() {
        let own = EmbedParams {
            seed: stratum_seed(5, s),
            ..params.clone()
        };
        assert_eq!(set.embeddings[s].coords, run(d, &own).coords, "stratum {s}");
    }
}

/// Mean over symptoms of the spread of its positions across datasets,
/// relative to the mean embedding diameter.
fn dispersion(set: &symco::umap::AlignedEmbeddingSet, symptoms: &[String]) -> f64 {
    let diam = set.embeddings.iter().map(Embedding::diameter).sum::<f64>() / set.embeddings.len() as f64;
    let per: Vec<f64> = symptoms
        .iter()
        .map(|s| {
            let pts: Vec<[f64; 2]> = set.track(s).into_iter().map(|(_, xy)| xy).collect();
            let c = [0, 1].map(|k| pts.iter().map(|p| p[k]).sum::<f64>() / pts.len() as f64);
            pts.iter().map(|p| (p[0] - c[0]).hypot(p[1] - c[1])).sum::<f64>() / pts.len() as f64
        })
        .collect();
    per.iter().sum::<f64>() / per.len() as f64 / diam
}

#[test]
fn core_symptoms_align_across_datasets() {
    let names = ["pillar2", "sgss", "css", "cis"];
    let data: Vec<(String, DistanceMatrix)> = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let (c, _) = generate(&preset(n, 3000, 70 + i as u64).unwrap()).unwrap();
            (n.to_string(), jaccard_matrix(&c).unwrap())
        })
        .collect();
    let core: Vec<String> = CORE_SYMPTOMS.iter().map(|s| s.to_string()).collect();
    let params = EmbedParams::loose(8);
    let aligned = align_datasets(&data, &core, 0.7, &params).unwrap();
    let free = align_datasets(&data, &core, 0.0, &params).unwrap();
    let (a, f) = (dispersion(&aligned, &core), dispersion(&free, &core));
    assert!(a < f, "aligned {a:.3} vs unaligned {f:.3}");

    // symptoms shared by several vocabularies but not tied by the alignment
    let mut shared: Vec<String> = Vec::new();
    for e in &aligned.embeddings {
        for l in &e.labels {
            if !core.contains(l) && !shared.contains(l) && aligned.track(l).len() >= 2 {
                shared.push(l.clone());
            }
        }
    }
    assert!(!shared.is_empty());
    let baseline = dispersion(&aligned, &shared);
    assert!(a < baseline, "core {a:.3} vs non-core {baseline:.3} over {shared:?}");
}
