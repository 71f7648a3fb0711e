//! Agglomerative complete-linkage clustering of symptoms.
//!
//! Node ids follow the usual convention: leaves are `0..p`, the cluster
//! created by merge `i` is `p + i`.

use serde::{Deserialize, Serialize};

use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: Vec<String>,
    pub merges: Vec<Merge>,
}

/// Builds the complete-linkage dendrogram. At each step the closest pair
/// of clusters merges; ties go to the pair with the lowest smaller node id,
/// then the lowest partner id.
pub fn complete_linkage(d: &DistanceMatrix) -> Result<Dendrogram> {
    let p = d.len();
    if p < 2 {
        return Err(Error::param(format!("need at least 2 leaves, got {p}")));
    }
    d.require_defined()?;

    // active node ids and cluster-to-cluster distances, indexed by slot
    let mut ids: Vec<usize> = (0..p).collect();
    let mut min_leaf: Vec<usize> = (0..p).collect();
    let mut dist: Vec<Vec<f64>> = d.to_dense();
    let mut merges = Vec::with_capacity(p - 1);

    for step in 0..p - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                let (lo, hi) = (ids[i].min(ids[j]), ids[i].max(ids[j]));
                let cand = (dist[i][j], lo, hi, i, j);
                let better = match best {
                    None => true,
                    Some(b) => (cand.0, cand.1, cand.2) < (b.0, b.1, b.2),
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        let (height, _, _, i, j) = best.expect("at least two active clusters");
        let (left, right) = if min_leaf[i] < min_leaf[j] {
            (ids[i], ids[j])
        } else {
            (ids[j], ids[i])
        };
        merges.push(Merge { left, right, height });

        // complete linkage: distance to the union is the max of the two
        for k in 0..ids.len() {
            let v = dist[i][k].max(dist[j][k]);
            dist[i][k] = v;
            dist[k][i] = v;
        }
        dist[i][i] = 0.0;
        ids[i] = p + step;
        min_leaf[i] = min_leaf[i].min(min_leaf[j]);
        ids.remove(j);
        min_leaf.remove(j);
        dist.remove(j);
        for row in &mut dist {
            row.remove(j);
        }
    }
    Ok(Dendrogram {
        leaves: d.labels.clone(),
        merges,
    })
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn root(&self) -> usize {
        2 * self.n_leaves() - 2
    }

    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        node.checked_sub(self.n_leaves())
            .map(|i| (self.merges[i].left, self.merges[i].right))
    }

    pub fn node_height(&self, node: usize) -> f64 {
        match node.checked_sub(self.n_leaves()) {
            Some(i) => self.merges[i].height,
            None => 0.0,
        }
    }

    /// Checks merge count, monotone heights, and that every non-root node
    /// is a child exactly once and only after it exists.
    pub fn validate(&self) -> Result<()> {
        let p = self.n_leaves();
        if p < 2 || self.merges.len() != p - 1 {
            return Err(Error::Shape(format!("{} merges for {p} leaves", self.merges.len())));
        }
        let mut used = vec![false; 2 * p - 1];
        for (i, m) in self.merges.iter().enumerate() {
            for c in [m.left, m.right] {
                if c >= p + i || used[c] {
                    return Err(Error::Shape(format!("invalid child {c} in merge {i}")));
                }
                used[c] = true;
            }
            if i > 0 && m.height < self.merges[i - 1].height {
                return Err(Error::Shape(format!("height decreases at merge {i}")));
            }
        }
        Ok(())
    }

    fn union_find(&self, n_merges: usize) -> Vec<Vec<usize>> {
        let p = self.n_leaves();
        let mut parent: Vec<usize> = (0..2 * p - 1).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (i, m) in self.merges.iter().take(n_merges).enumerate() {
            let node = p + i;
            let (a, b) = (find(&mut parent, m.left), find(&mut parent, m.right));
            parent[a] = node;
            parent[b] = node;
        }
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for leaf in 0..p {
            let r = find(&mut parent, leaf);
            match groups.iter_mut().find(|(root, _)| *root == r) {
                Some((_, g)) => g.push(leaf),
                None => groups.push((r, vec![leaf])),
            }
        }
        // leaves are visited in order, so groups are sorted by first leaf
        groups.into_iter().map(|(_, g)| g).collect()
    }

    /// Clusters after removing merges strictly higher than `height`.
    /// Each cluster lists leaf indices ascending; clusters are ordered by
    /// their smallest leaf.
    pub fn cut(&self, height: f64) -> Vec<Vec<usize>> {
        // merges are height-ordered; a NaN height keeps nothing
        let kept = self.merges.iter().take_while(|m| m.height <= height).count();
        self.union_find(kept)
    }

    /// Partition into exactly `k` clusters (`1 <= k <= p`).
    pub fn cut_into(&self, k: usize) -> Result<Vec<Vec<usize>>> {
        let p = self.n_leaves();
        if k == 0 || k > p {
            return Err(Error::param(format!("cannot cut {p} leaves into {k} clusters")));
        }
        Ok(self.union_find(p - k))
    }

    /// In-order traversal; the child holding the smaller leaf index is
    /// visited first.
    pub fn leaf_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_leaves());
        let mut stack = vec![self.root()];
        while let Some(node) = stack.pop() {
            match self.children(node) {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => out.push(node),
            }
        }
        out
    }

    /// Newick string with branch lengths from merge heights.
    pub fn to_newick(&self) -> String {
        fn quote(label: &str) -> String {
            if label.chars().any(|c| "()[]':;, \t".contains(c)) {
                format!("'{}'", label.replace('\'', "''"))
            } else {
                label.to_string()
            }
        }
        fn write(d: &Dendrogram, node: usize, out: &mut String) {
            match d.children(node) {
                Some((l, r)) => {
                    let h = d.node_height(node);
                    out.push('(');
                    write(d, l, out);
                    out.push_str(&format!(":{}", h - d.node_height(l)));
                    out.push(',');
                    write(d, r, out);
                    out.push_str(&format!(":{}", h - d.node_height(r)));
                    out.push(')');
                }
                None => out.push_str(&quote(&d.leaves[node])),
            }
        }
        let mut out = String::new();
        write(self, self.root(), &mut out);
        out.push(';');
        out
    }
}

/// Distance matrix reordered by dendrogram leaf order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub order: Vec<usize>,
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

pub fn heatmap(dendrogram: &Dendrogram, d: &DistanceMatrix) -> Heatmap {
    let order = dendrogram.leaf_order();
    let q = d.permuted(&order);
    Heatmap {
        labels: q.labels.clone(),
        values: q.to_dense(),
        order,
    }
}
