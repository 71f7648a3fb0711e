//! Deterministic SVG rendering of the JSON artifacts. Coordinates are
//! printed with fixed precision so identical artifacts give identical
//! bytes.

use std::fmt::Write;

use anyhow::{bail, Context, Result};
use symco::hclust::Dendrogram;
use symco::Category;

use crate::artifacts::{AlignedArtifact, EmbeddingArtifact, HeatmapArtifact, LoadingsArtifact};

const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";

fn n(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        n(w),
        n(h),
        n(w),
        n(h)
    )
}

pub fn category_colour(c: Category) -> &'static str {
    match c {
        Category::Systemic => "#1b9e77",
        Category::LowerRespiratory => "#d95f02",
        Category::UpperRespiratory => "#7570b3",
        Category::Gastrointestinal => "#e7298a",
        Category::AlteredState => "#66a61e",
        Category::Other => "#777777",
    }
}

/// Blue (0) to near-white (1).
fn distance_colour(d: f64) -> String {
    let t = d.clamp(0.0, 1.0);
    let (a, b) = ([8.0, 48.0, 107.0], [247.0, 251.0, 255.0]);
    let c: Vec<u8> = (0..3).map(|i| (a[i] + t * (b[i] - a[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Merge brackets of `d` with leaves at `leaf_x[leaf]` on `baseline`; the
/// tallest merge reaches `top`.
fn dendrogram_paths(out: &mut String, d: &Dendrogram, leaf_x: &[f64], baseline: f64, top: f64) {
    let p = d.n_leaves();
    let hmax = d.merges.last().map_or(1.0, |m| m.height).max(f64::MIN_POSITIVE);
    let y = |h: f64| baseline - (baseline - top) * h / hmax;
    let mut x = leaf_x.to_vec();
    let mut ny = vec![baseline; p];
    for (i, m) in d.merges.iter().enumerate() {
        let (xl, xr, yl, yr, ym) = (x[m.left], x[m.right], ny[m.left], ny[m.right], y(m.height));
        let _ = writeln!(
            out,
            "<path class=\"merge\" data-height=\"{}\" d=\"M{} {} V{} H{} V{}\" fill=\"none\" stroke=\"black\"/>",
            m.height,
            n(xl),
            n(yl),
            n(ym),
            n(xr),
            n(yr)
        );
        x.push(0.5 * (xl + xr));
        ny.push(ym);
        debug_assert_eq!(x.len(), p + i + 1);
    }
}

pub fn dendrogram(d: &Dendrogram) -> Result<String> {
    let p = d.n_leaves();
    if p == 0 {
        bail!("empty dendrogram");
    }
    let order = d.leaf_order();
    let step = 30.0;
    let mut leaf_x = vec![0.0; p];
    for (pos, &leaf) in order.iter().enumerate() {
        leaf_x[leaf] = 40.0 + step * pos as f64;
    }
    let (w, h) = (80.0 + step * (p - 1) as f64, 260.0);
    let mut out = open(w, h);
    dendrogram_paths(&mut out, d, &leaf_x, 180.0, 20.0);
    for &leaf in &order {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"195\" {FONT} text-anchor=\"end\" transform=\"rotate(-60 {} 195)\">{}</text>",
            n(leaf_x[leaf]),
            n(leaf_x[leaf]),
            esc(&d.leaves[leaf])
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Distance heatmap in leaf order with the dendrogram above it.
pub fn heatmap(a: &HeatmapArtifact) -> Result<String> {
    let p = a.labels.len();
    if p == 0 || a.values.len() != p {
        bail!("heatmap needs a non-empty square matrix");
    }
    let (cell, left, top_dendro, top) = (22.0, 130.0, 20.0, 150.0);
    let w = left + cell * p as f64 + 20.0;
    let h = top + cell * p as f64 + 20.0;
    let mut out = open(w, h);

    let mut leaf_x = vec![0.0; p];
    for (pos, &leaf) in a.order.iter().enumerate() {
        leaf_x[leaf] = left + cell * (pos as f64 + 0.5);
    }
    dendrogram_paths(&mut out, &a.dendrogram, &leaf_x, top - 4.0, top_dendro);

    for (r, row) in a.values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let _ = writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"><title>{} / {}: {}</title></rect>",
                n(left + cell * c as f64),
                n(top + cell * r as f64),
                n(cell),
                n(cell),
                distance_colour(v),
                esc(&a.labels[r]),
                esc(&a.labels[c]),
                n(v)
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" {FONT} text-anchor=\"end\">{}</text>",
            n(left - 4.0),
            n(top + cell * (r as f64 + 0.7)),
            esc(&a.labels[r])
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

struct Frame {
    lo: [f64; 2],
    scale: f64,
    origin: [f64; 2],
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>, size: f64, origin: [f64; 2]) -> Frame {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for q in points {
            for k in 0..2 {
                lo[k] = lo[k].min(q[k]);
                hi[k] = hi[k].max(q[k]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        Frame {
            lo,
            scale: size / span,
            origin,
        }
    }

    fn map(&self, q: [f64; 2]) -> (f64, f64) {
        (
            self.origin[0] + (q[0] - self.lo[0]) * self.scale,
            self.origin[1] + (q[1] - self.lo[1]) * self.scale,
        )
    }
}

const MAX_RADIUS: f64 = 18.0;

fn points(out: &mut String, e: &EmbeddingArtifact, frame: &Frame) {
    for (i, label) in e.labels.iter().enumerate() {
        let (x, y) = frame.map(e.coords[i]);
        let _ = writeln!(
            out,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\" fill-opacity=\"0.7\"/>",
            n(x),
            n(y),
            n(MAX_RADIUS * e.frequencies[i]),
            category_colour(e.categories[i])
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" {FONT}>{}</text>",
            n(x + 4.0),
            n(y - 4.0),
            esc(label)
        );
    }
}

/// Scatter of an embedding; point radius is proportional to the share of
/// cases reporting the symptom.
pub fn embedding(e: &EmbeddingArtifact) -> Result<String> {
    if e.labels.is_empty() {
        bail!("embedding has no points");
    }
    let size = 420.0;
    let frame = Frame::fit(e.coords.iter().copied(), size, [40.0, 40.0]);
    let mut out = open(size + 160.0, size + 80.0);
    points(&mut out, e, &frame);
    out.push_str("</svg>\n");
    Ok(out)
}

/// One panel per stratum in a shared coordinate frame.
pub fn aligned(a: &AlignedArtifact) -> Result<String> {
    if a.embeddings.is_empty() || a.embeddings.iter().any(|e| e.labels.is_empty()) {
        bail!("aligned set has no points");
    }
    let (panel, pad) = (260.0, 40.0);
    let all = a.embeddings.iter().flat_map(|e| e.coords.iter().copied());
    let shared = Frame::fit(all, panel, [0.0, 0.0]);
    let mut out = open(
        (panel + 2.0 * pad + 80.0) * a.embeddings.len() as f64,
        panel + 2.0 * pad + 20.0,
    );
    for (s, e) in a.embeddings.iter().enumerate() {
        let x0 = (panel + 2.0 * pad + 80.0) * s as f64 + pad;
        let frame = Frame {
            origin: [x0, pad + 20.0],
            ..shared
        };
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" {FONT} font-weight=\"bold\">{}</text>",
            n(x0),
            n(pad - 10.0),
            esc(&a.strata[s])
        );
        points(&mut out, e, &frame);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Horizontal loading bars, one panel per component, coloured by category.
pub fn loadings(a: &LoadingsArtifact) -> Result<String> {
    if a.components.is_empty() {
        bail!("no components to plot");
    }
    let p = a.components[0].bars.len();
    let (row, left, half, gap) = (18.0, 130.0, 90.0, 40.0);
    let panel = left + 2.0 * half + gap;
    let h = 50.0 + row * p as f64;
    let mut out = open(panel * a.components.len() as f64, h);
    let max = a
        .components
        .iter()
        .flat_map(|c| c.bars.iter().map(|b| b.loading.abs()))
        .fold(f64::MIN_POSITIVE, f64::max);
    for (ci, comp) in a.components.iter().enumerate() {
        let x0 = panel * ci as f64;
        let axis = x0 + left + half;
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"20\" {FONT} font-weight=\"bold\">PC{}</text>",
            n(axis - 10.0),
            comp.component
        );
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"30\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            n(axis),
            n(axis),
            n(h - 10.0)
        );
        for (r, bar) in comp.bars.iter().enumerate() {
            let y = 34.0 + row * r as f64;
            let len = half * bar.loading / max;
            let _ = writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
                n(axis + len.min(0.0)),
                n(y),
                n(len.abs()),
                n(row - 4.0),
                category_colour(bar.category)
            );
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" {FONT} text-anchor=\"end\">{}</text>",
                n(x0 + left - 6.0),
                n(y + row - 7.0),
                esc(&bar.symptom)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Renders the artifact JSON of the given kind.
pub fn emit(kind: &str, artifact: &serde_json::Value) -> Result<String> {
    let v = artifact.clone();
    let ctx = || format!("artifact is not a valid `{kind}`");
    match kind {
        "dendrogram" => dendrogram(
            &serde_json::from_value::<crate::artifacts::DendrogramArtifact>(v)
                .with_context(ctx)?
                .dendrogram,
        ),
        "heatmap" => heatmap(&serde_json::from_value(v).with_context(ctx)?),
        "embedding" => embedding(&serde_json::from_value(v).with_context(ctx)?),
        "aligned" => aligned(&serde_json::from_value(v).with_context(ctx)?),
        "loadings" => loadings(&serde_json::from_value(v).with_context(ctx)?),
        other => bail!("no SVG rendering for artifact kind `{other}`"),
    }
}
