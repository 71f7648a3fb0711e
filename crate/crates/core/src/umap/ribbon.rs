use serde::{Deserialize, Serialize};

use super::AlignedEmbeddingSet;

/// A connected run of `(x, y, stratum)` vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RibbonSegment {
    pub points: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ribbon {
    pub symptom: String,
    pub segments: Vec<RibbonSegment>,
}

/// Per-symptom polylines through the aligned strata. The third coordinate
/// is the stratum's input position; consecutive strata are joined by
/// `steps_per_gap` linear steps, and the line breaks wherever the symptom
/// is missing from a stratum. Symptoms are listed in first-seen order.
pub fn interpolate_ribbon(set: &AlignedEmbeddingSet, steps_per_gap: usize) -> Vec<Ribbon> {
    let steps = steps_per_gap.max(1);
    let mut symptoms: Vec<&str> = Vec::new();
    for e in &set.embeddings {
        for l in &e.labels {
            if !symptoms.contains(&l.as_str()) {
                symptoms.push(l);
            }
        }
    }

    symptoms
        .into_iter()
        .map(|symptom| {
            let mut segments: Vec<RibbonSegment> = Vec::new();
            let mut prev: Option<(usize, [f64; 2])> = None;
            for (s, xy) in set.track(symptom) {
                let z = set.positions[s];
                let joined = prev.filter(|&(pz, _)| pz + 1 == z);
                match joined {
                    Some((pz, pxy)) => {
                        let seg = segments.last_mut().expect("segment started");
                        for k in 1..=steps {
                            let t = k as f64 / steps as f64;
                            seg.points.push([
                                pxy[0] + t * (xy[0] - pxy[0]),
                                pxy[1] + t * (xy[1] - pxy[1]),
                                pz as f64 + t,
                            ]);
                        }
                    }
                    None => segments.push(RibbonSegment {
                        points: vec![[xy[0], xy[1], z as f64]],
                    }),
                }
                prev = Some((z, xy));
            }
            Ribbon {
                symptom: symptom.to_string(),
                segments,
            }
        })
        .collect()
}
