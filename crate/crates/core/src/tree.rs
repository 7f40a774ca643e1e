//! CPT branching trees and the sparse ancestor-indicator design matrix.
//!
//! A tree branches on the ordered parents of one network node: depth `d`
//! holds one node per value combination of the first `d` parents, numbered
//! breadth-first and mixed-radix by parent value. Leaves are the CPT rows.
//! Column `j` of the design is tree node `j`; row `i` (a leaf) has a one in
//! every column on its root path.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::softmax_into;
use crate::structure::{conditional_mutual_information, NetworkStructure};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CptTree {
    pub child_index: usize,
    pub child_cardinality: usize,
    /// Class first, then attributes by descending `I(X; X_child | Y)`.
    pub ordered_parents: Vec<usize>,
    pub parent_cardinalities: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub depth: usize,
    /// Values of the first `depth` ordered parents.
    pub path: Vec<usize>,
}

/// Orders `child`'s parents and sizes its tree.
pub fn build_tree(ds: &Dataset, structure: &NetworkStructure, child: usize) -> Result<CptTree> {
    let class = structure.class_index;
    let parents = structure
        .parents
        .get(child)
        .ok_or_else(|| Error::contract(format!("node {child} not in structure")))?;
    let mut attrs: Vec<(usize, f64)> = parents
        .iter()
        .copied()
        .filter(|&p| p != class)
        .map(|p| (p, conditional_mutual_information(ds, p, child, class)))
        .collect();
    attrs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut ordered = Vec::with_capacity(parents.len());
    if parents.contains(&class) {
        ordered.push(class);
    }
    ordered.extend(attrs.into_iter().map(|(p, _)| p));
    CptTree::new(ds, child, ordered)
}

impl CptTree {
    /// Tree with an explicit parent order.
    pub fn new(ds: &Dataset, child: usize, ordered_parents: Vec<usize>) -> Result<Self> {
        let card = |j: usize| {
            ds.cardinality(j)
                .ok_or_else(|| Error::contract(format!("column {j} is not categorical")))
        };
        Ok(CptTree {
            child_index: child,
            child_cardinality: card(child)?,
            parent_cardinalities: ordered_parents.iter().map(|&p| card(p)).collect::<Result<_>>()?,
            ordered_parents,
        })
    }

    /// Tree over anonymous parents with the given cardinalities.
    pub fn from_cardinalities(child_cardinality: usize, parent_cardinalities: Vec<usize>) -> Self {
        CptTree {
            child_index: parent_cardinalities.len(),
            child_cardinality,
            ordered_parents: (0..parent_cardinalities.len()).collect(),
            parent_cardinalities,
        }
    }

    pub fn depth(&self) -> usize {
        self.ordered_parents.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.parent_cardinalities.iter().product()
    }

    /// Number of non-root nodes.
    pub fn n_nodes(&self) -> usize {
        self.level_sizes().iter().sum()
    }

    /// Node count at depths `1..=p`.
    pub fn level_sizes(&self) -> Vec<usize> {
        self.parent_cardinalities
            .iter()
            .scan(1usize, |acc, &c| {
                *acc *= c;
                Some(*acc)
            })
            .collect()
    }

    /// Index of the first node at each depth `1..=p`.
    pub fn level_offsets(&self) -> Vec<usize> {
        self.level_sizes()
            .iter()
            .scan(0usize, |acc, &s| {
                let start = *acc;
                *acc += s;
                Some(start)
            })
            .collect()
    }

    /// Node by breadth-first index.
    pub fn node(&self, j: usize) -> TreeNode {
        let offsets = self.level_offsets();
        let depth = offsets.partition_point(|&o| o <= j);
        let mut local = j - offsets[depth - 1];
        let mut path = vec![0; depth];
        for d in (0..depth).rev() {
            path[d] = local % self.parent_cardinalities[d];
            local /= self.parent_cardinalities[d];
        }
        TreeNode { depth, path }
    }

    pub fn nodes(&self) -> Vec<TreeNode> {
        (0..self.n_nodes()).map(|j| self.node(j)).collect()
    }

    /// Index of the node reached by `path` (of any length `1..=p`).
    pub fn node_index(&self, path: &[usize]) -> usize {
        let local = path
            .iter()
            .zip(&self.parent_cardinalities)
            .fold(0, |acc, (&v, &c)| acc * c + v);
        self.level_offsets()[path.len() - 1] + local
    }

    /// Leaf row for a full parent assignment.
    pub fn leaf_of_path(&self, path: &[usize]) -> usize {
        path.iter()
            .zip(&self.parent_cardinalities)
            .fold(0, |acc, (&v, &c)| acc * c + v)
    }

    /// Leaf row for dataset row `r`; out-of-range codes clamp to the last value.
    pub fn leaf_of_row(&self, ds: &Dataset, r: usize) -> usize {
        self.ordered_parents
            .iter()
            .zip(&self.parent_cardinalities)
            .fold(0, |acc, (&p, &c)| acc * c + ds.codes(p)[r].min(c - 1))
    }

    /// Leaf row for a full-width code vector (indexed by dataset column).
    pub fn leaf_of_values(&self, values: &[usize]) -> usize {
        self.ordered_parents
            .iter()
            .zip(&self.parent_cardinalities)
            .fold(0, |acc, (&p, &c)| acc * c + values[p].min(c - 1))
    }

    /// Root path of leaf `i` as node indices, shallowest first.
    pub fn leaf_ancestors(&self, leaf: usize) -> Vec<usize> {
        let offsets = self.level_offsets();
        let p = self.depth();
        let mut below = 1;
        let mut out = vec![0; p];
        for d in (0..p).rev() {
            out[d] = offsets[d] + leaf / below;
            below *= self.parent_cardinalities[d];
        }
        out
    }

    /// Human-readable path label, e.g. `3=1/0=2`.
    pub fn path_label(&self, path: &[usize]) -> String {
        let mut s = String::new();
        for (d, v) in path.iter().enumerate() {
            if d > 0 {
                s.push('/');
            }
            let _ = write!(s, "{}={}", self.ordered_parents[d], v);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignOptions {
    /// Drop the final tree column. Ignored for depth-one trees without an
    /// intercept, where it would pin the last leaf to the uniform CPT row.
    pub drop_last_column: bool,
    /// Prepend an unpenalized column shared by every row.
    pub intercept: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            drop_last_column: true,
            intercept: false,
        }
    }
}

/// Sparse 0/1 design with per-row multinomial counts over child values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    n_rows: usize,
    n_values: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    col_parent: Vec<Option<usize>>,
    /// Tree node of each column; `None` for the intercept.
    col_node: Vec<Option<usize>>,
    penalized: Vec<bool>,
    counts: Vec<f64>,
}

pub fn build_design(tree: &CptTree, options: DesignOptions) -> DesignMatrix {
    let p = tree.depth();
    let n_nodes = tree.n_nodes();
    let n_leaves = tree.n_leaves();
    let shift = usize::from(options.intercept);
    let offsets = tree.level_offsets();
    let cards = &tree.parent_cardinalities;

    let mut col_parent = Vec::with_capacity(n_nodes + shift);
    let mut col_node = Vec::with_capacity(n_nodes + shift);
    if options.intercept {
        col_parent.push(None);
        col_node.push(None);
    }
    for d in 0..p {
        let size = if d == 0 { cards[0] } else { (offsets[d] - offsets[d - 1]) * cards[d] };
        for local in 0..size {
            let parent = if d == 0 {
                options.intercept.then_some(0)
            } else {
                Some(offsets[d - 1] + local / cards[d] + shift)
            };
            col_parent.push(parent);
            col_node.push(Some(offsets[d] + local));
        }
    }
    let mut row_ptr = Vec::with_capacity(n_leaves + 1);
    let mut col_idx = Vec::with_capacity(n_leaves * (p + shift));
    row_ptr.push(0);
    for leaf in 0..n_leaves {
        if options.intercept {
            col_idx.push(0);
        }
        col_idx.extend(tree.leaf_ancestors(leaf).into_iter().map(|j| j + shift));
        row_ptr.push(col_idx.len());
    }
    let mut penalized = vec![true; col_parent.len()];
    if options.intercept {
        penalized[0] = false;
    }
    let design = DesignMatrix {
        n_rows: n_leaves,
        n_values: tree.child_cardinality,
        row_ptr,
        col_idx,
        col_parent,
        col_node,
        penalized,
        counts: vec![0.0; n_leaves * tree.child_cardinality],
    };
    let n_cols = design.n_cols();
    if options.drop_last_column && (p >= 2 || (options.intercept && p >= 1)) {
        design.drop_column(n_cols - 1).expect("last column exists")
    } else {
        design
    }
}

/// Per-leaf multinomial counts, `L × |X_c|` row-major.
pub fn aggregate_counts(ds: &Dataset, tree: &CptTree) -> Vec<f64> {
    let c = tree.child_cardinality;
    let mut counts = vec![0.0; tree.n_leaves() * c];
    let child = ds.codes(tree.child_index);
    for r in 0..ds.n_rows() {
        counts[tree.leaf_of_row(ds, r) * c + child[r].min(c - 1)] += 1.0;
    }
    counts
}

/// One design row per dataset row with a one-hot count — the duplicate-row
/// design a per-sample solver would see.
pub fn expand_design(ds: &Dataset, tree: &CptTree, options: DesignOptions) -> DesignMatrix {
    let base = build_design(tree, options);
    let c = tree.child_cardinality;
    let child = ds.codes(tree.child_index);
    let n = ds.n_rows();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut counts = vec![0.0; n * c];
    row_ptr.push(0);
    for r in 0..n {
        let leaf = tree.leaf_of_row(ds, r);
        col_idx.extend_from_slice(base.row(leaf));
        row_ptr.push(col_idx.len());
        counts[r * c + child[r].min(c - 1)] = 1.0;
    }
    DesignMatrix {
        n_rows: n,
        row_ptr,
        col_idx,
        counts,
        ..base
    }
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.col_parent.len()
    }

    /// Child cardinality `|X_c|`.
    pub fn n_values(&self) -> usize {
        self.n_values
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Non-zero columns of row `i`, ascending (root side first).
    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn col_parent(&self) -> &[Option<usize>] {
        &self.col_parent
    }

    pub fn col_node(&self) -> &[Option<usize>] {
        &self.col_node
    }

    pub fn penalized(&self) -> &[bool] {
        &self.penalized
    }

    pub fn has_intercept(&self) -> bool {
        self.col_node.first() == Some(&None)
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn row_counts(&self, i: usize) -> &[f64] {
        &self.counts[i * self.n_values..(i + 1) * self.n_values]
    }

    pub fn total_count(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Replaces the count table (`n_rows × n_values`).
    pub fn with_counts(mut self, counts: Vec<f64>) -> Result<Self> {
        self.set_counts(counts)?;
        Ok(self)
    }

    pub fn set_counts(&mut self, counts: Vec<f64>) -> Result<()> {
        if counts.len() != self.n_rows * self.n_values {
            return Err(Error::contract(format!(
                "count table has {} entries, expected {}",
                counts.len(),
                self.n_rows * self.n_values
            )));
        }
        if counts.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::contract("counts must be finite and non-negative"));
        }
        self.counts = counts;
        Ok(())
    }

    /// Marks whether column `j` is penalized.
    pub fn set_penalized(&mut self, j: usize, on: bool) {
        self.penalized[j] = on;
    }

    /// Removes column `j`; its children attach to its parent.
    pub fn drop_column(&self, j: usize) -> Result<Self> {
        if j >= self.n_cols() {
            return Err(Error::contract(format!("no column {j} to drop")));
        }
        let remap = |c: usize| if c > j { c - 1 } else { c };
        let mut col_parent = Vec::with_capacity(self.n_cols() - 1);
        for (c, p) in self.col_parent.iter().enumerate() {
            if c == j {
                continue;
            }
            let p = match *p {
                Some(q) if q == j => self.col_parent[j],
                other => other,
            };
            col_parent.push(p.map(remap));
        }
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz());
        row_ptr.push(0);
        for i in 0..self.n_rows {
            col_idx.extend(self.row(i).iter().filter(|&&c| c != j).map(|&c| remap(c)));
            row_ptr.push(col_idx.len());
        }
        fn keep<T: Copy>(v: &[T], j: usize) -> Vec<T> {
            v.iter()
                .enumerate()
                .filter(|&(c, _)| c != j)
                .map(|(_, x)| *x)
                .collect()
        }
        Ok(DesignMatrix {
            n_rows: self.n_rows,
            n_values: self.n_values,
            row_ptr,
            col_idx,
            col_node: keep(&self.col_node, j),
            penalized: keep(&self.penalized, j),
            col_parent,
            counts: self.counts.clone(),
        })
    }

    /// Dense 0/1 matrix, for tests and small exports.
    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        (0..self.n_rows)
            .map(|i| {
                let mut r = vec![0u8; self.n_cols()];
                for &c in self.row(i) {
                    r[c] = 1;
                }
                r
            })
            .collect()
    }

    /// Coordinate-format text: a `# rows cols nnz` header, then one
    /// zero-based `row col 1` line per non-zero.
    pub fn write_coo<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {} {} {}", self.n_rows, self.n_cols(), self.nnz())?;
        for i in 0..self.n_rows {
            for &c in self.row(i) {
                writeln!(w, "{i} {c} 1")?;
            }
        }
        Ok(())
    }

    /// Reads a coordinate export back as `(rows, cols, entries)`.
    pub fn read_coo<R: Read>(r: R) -> Result<(usize, usize, Vec<(usize, usize)>)> {
        let mut lines = BufReader::new(r).lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let dims: Vec<usize> = header
            .trim_start_matches('#')
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse { row: 1, message: "bad COO header".into() })?;
        if dims.len() != 3 {
            return Err(Error::Parse { row: 1, message: "bad COO header".into() });
        }
        let mut entries = Vec::with_capacity(dims[2]);
        for (k, line) in lines.enumerate() {
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            let parsed = (f.len() == 3 && f[2] == "1")
                .then(|| Some((f[0].parse().ok()?, f[1].parse().ok()?)))
                .flatten();
            match parsed {
                Some(e) => entries.push(e),
                None => {
                    return Err(Error::Parse {
                        row: k + 2,
                        message: format!("bad COO entry {line:?}"),
                    })
                }
            }
        }
        Ok((dims[0], dims[1], entries))
    }

    /// Per-column sum over rows containing the column of a per-row quantity
    /// `own` (`n_rows × width`), using the column forest.
    pub(crate) fn subtree_sums(&self, own: &[f64], width: usize) -> Vec<f64> {
        let mut agg = vec![0.0; self.n_cols() * width];
        for i in 0..self.n_rows {
            if let Some(&deep) = self.row(i).last() {
                for (a, v) in agg[deep * width..(deep + 1) * width]
                    .iter_mut()
                    .zip(&own[i * width..(i + 1) * width])
                {
                    *a += v;
                }
            }
        }
        for j in (0..self.n_cols()).rev() {
            if let Some(p) = self.col_parent[j] {
                let (head, tail) = agg.split_at_mut(j * width);
                for (a, v) in head[p * width..(p + 1) * width].iter_mut().zip(&tail[..width]) {
                    *a += v;
                }
            }
        }
        agg
    }
}

/// `N × |X_c|` coefficients, row-major by column of the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMatrix {
    pub n_cols: usize,
    pub n_values: usize,
    pub values: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn zeros(n_cols: usize, n_values: usize) -> Self {
        CoefficientMatrix {
            n_cols,
            n_values,
            values: vec![0.0; n_cols * n_values],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_values = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_values) {
            return Err(Error::contract("ragged coefficient rows"));
        }
        Ok(CoefficientMatrix {
            n_cols: rows.len(),
            n_values,
            values: rows.concat(),
        })
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_values..(j + 1) * self.n_values]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Coefficients keyed by tree path label (`(intercept)` for the intercept).
    pub fn to_node_map(&self, tree: &CptTree, design: &DesignMatrix) -> BTreeMap<String, Vec<f64>> {
        design
            .col_node()
            .iter()
            .enumerate()
            .map(|(j, node)| {
                let key = match node {
                    Some(n) => tree.path_label(&tree.node(*n).path),
                    None => "(intercept)".to_string(),
                };
                (key, self.row(j).to_vec())
            })
            .collect()
    }

    pub fn to_node_json(&self, tree: &CptTree, design: &DesignMatrix) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_node_map(tree, design))?)
    }
}

/// Row-stochastic `L × |X_c|` parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    pub n_rows: usize,
    pub n_values: usize,
    pub theta: Vec<f64>,
}

impl Cpt {
    pub fn uniform(n_rows: usize, n_values: usize) -> Self {
        Cpt {
            n_rows,
            n_values,
            theta: vec![1.0 / n_values as f64; n_rows * n_values],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.theta[i * self.n_values..(i + 1) * self.n_values]
    }

    /// Checks non-negativity and that rows sum to one within `1e-10`.
    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != self.n_rows * self.n_values {
            return Err(Error::contract("CPT shape mismatch"));
        }
        for i in 0..self.n_rows {
            let row = self.row(i);
            if row.iter().any(|&t| !(t >= 0.0)) {
                return Err(Error::contract(format!("CPT row {i} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::contract(format!("CPT row {i} sums to {s}")));
            }
        }
        Ok(())
    }
}

/// Linear predictor `H = U B` (`n_rows × |X_c|`).
pub fn linear_predictor(b: &CoefficientMatrix, design: &DesignMatrix) -> Result<Vec<f64>> {
    if b.n_cols != design.n_cols() || b.n_values != design.n_values() {
        return Err(Error::contract(format!(
            "coefficients are {}x{}, design needs {}x{}",
            b.n_cols,
            b.n_values,
            design.n_cols(),
            design.n_values()
        )));
    }
    let c = design.n_values();
    let mut eta = vec![0.0; design.n_rows() * c];
    for i in 0..design.n_rows() {
        let out = &mut eta[i * c..(i + 1) * c];
        for &j in design.row(i) {
            for (o, v) in out.iter_mut().zip(b.row(j)) {
                *o += v;
            }
        }
    }
    Ok(eta)
}

/// Row-wise softmax of `U B`.
pub fn predict_cpt(b: &CoefficientMatrix, design: &DesignMatrix) -> Result<Cpt> {
    let c = design.n_values();
    let eta = linear_predictor(b, design)?;
    let mut theta = vec![0.0; eta.len()];
    for (h, t) in eta.chunks(c).zip(theta.chunks_mut(c)) {
        softmax_into(h, t);
    }
    Ok(Cpt {
        n_rows: design.n_rows(),
        n_values: c,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn no_drop() -> DesignOptions {
        DesignOptions {
            drop_last_column: false,
            intercept: false,
        }
    }

    #[test]
    fn two_binary_parents() {
        let tree = CptTree::from_cardinalities(2, vec![2, 2]);
        assert_eq!((tree.n_leaves(), tree.n_nodes()), (4, 6));
        assert_eq!(tree.level_sizes(), vec![2, 4]);
        let u = build_design(&tree, no_drop()).to_dense();
        assert_eq!(u.len(), 4);
        // Leaf (0,0): node X1=0 (col 0) and node (0,0) (col 2).
        assert_eq!(u[0], vec![1, 0, 1, 0, 0, 0]);
        assert_eq!(u[3], vec![0, 1, 0, 0, 0, 1]);
    }

    #[test]
    fn zero_parents_is_one_by_zero() {
        let tree = CptTree::from_cardinalities(3, vec![]);
        assert_eq!((tree.n_leaves(), tree.n_nodes()), (1, 0));
        let d = build_design(&tree, DesignOptions::default());
        assert_eq!((d.n_rows(), d.n_cols(), d.nnz()), (1, 0, 0));
    }

    #[test]
    fn two_by_three_counts() {
        let tree = CptTree::from_cardinalities(2, vec![2, 3]);
        assert_eq!((tree.n_leaves(), tree.n_nodes()), (6, 8));
        assert_eq!(build_design(&tree, no_drop()).nnz(), 12);
    }

    #[test]
    fn drop_guard_and_intercept() {
        let t1 = CptTree::from_cardinalities(2, vec![3]);
        assert_eq!(build_design(&t1, DesignOptions::default()).n_cols(), 3);
        let with_int = build_design(&t1, DesignOptions { drop_last_column: true, intercept: true });
        assert_eq!(with_int.n_cols(), 3);
        assert!(with_int.has_intercept() && !with_int.penalized()[0]);
        assert!(with_int.row(0).starts_with(&[0]));
        let t2 = CptTree::from_cardinalities(2, vec![2, 2]);
        let d = build_design(&t2, DesignOptions::default());
        assert_eq!(d.n_cols(), 5);
        assert_eq!(d.row(3), &[1]);
        assert_eq!(d.nnz(), 7);
    }

    #[test]
    fn leaf_counts() {
        let ds = Dataset::from_codes(vec![vec![1, 1, 1, 1], vec![0, 0, 1, 0]], vec![2, 2], 0)
            .unwrap();
        let tree = CptTree::new(&ds, 1, vec![0]).unwrap();
        assert_eq!(aggregate_counts(&ds, &tree), vec![0.0, 0.0, 3.0, 1.0]);
        let empty = ds.subset(&[]);
        assert!(aggregate_counts(&empty, &tree).iter().all(|&c| c == 0.0));
    }

    #[test]
    fn counts_marginalize_up_the_tree() {
        let cols = vec![
            vec![0, 1, 1, 0, 1, 0, 1, 1, 0, 0],
            vec![2, 0, 1, 1, 2, 0, 0, 1, 2, 2],
            vec![0, 0, 1, 1, 1, 0, 1, 0, 1, 0],
        ];
        let ds = Dataset::from_codes(cols.clone(), vec![2, 3, 2], 0).unwrap();
        let tree = CptTree::new(&ds, 2, vec![0, 1]).unwrap();
        let counts = aggregate_counts(&ds, &tree);
        for x0 in 0..2 {
            for v in 0..2 {
                let summed: f64 = (0..3).map(|x1| counts[tree.leaf_of_path(&[x0, x1]) * 2 + v]).sum();
                let direct = (0..10).filter(|&r| cols[0][r] == x0 && cols[2][r] == v).count();
                assert_eq!(summed, direct as f64);
            }
        }
    }

    #[test]
    fn predict_zero_is_uniform() {
        let tree = CptTree::from_cardinalities(3, vec![2, 2]);
        let d = build_design(&tree, no_drop());
        let cpt = predict_cpt(&CoefficientMatrix::zeros(6, 3), &d).unwrap();
        assert!(cpt.theta.iter().all(|&t| (t - 1.0 / 3.0).abs() < 1e-15));
        assert!(predict_cpt(&CoefficientMatrix::zeros(5, 3), &d).is_err());
    }

    #[test]
    fn predict_matches_scalar_loop() {
        let tree = CptTree::from_cardinalities(2, vec![2, 2]);
        let d = build_design(&tree, no_drop());
        let rows: Vec<Vec<f64>> = (0..6).map(|j| vec![0.3 * j as f64 - 0.7, 0.1 * (j * j) as f64]).collect();
        let b = CoefficientMatrix::from_rows(&rows).unwrap();
        let cpt = predict_cpt(&b, &d).unwrap();
        let u = d.to_dense();
        for i in 0..4 {
            let h: Vec<f64> = (0..2)
                .map(|v| (0..6).map(|j| f64::from(u[i][j]) * rows[j][v]).sum())
                .collect();
            let z = h[0].exp() + h[1].exp();
            assert!((cpt.row(i)[0] - h[0].exp() / z).abs() < 1e-14);
            assert!((cpt.row(i)[1] - h[1].exp() / z).abs() < 1e-14);
        }
    }

    #[test]
    fn coo_round_trip() {
        let tree = CptTree::from_cardinalities(2, vec![2, 3]);
        let d = build_design(&tree, DesignOptions::default());
        let mut buf = Vec::new();
        d.write_coo(&mut buf).unwrap();
        let (r, c, entries) = DesignMatrix::read_coo(&buf[..]).unwrap();
        assert_eq!((r, c, entries.len()), (d.n_rows(), d.n_cols(), d.nnz()));
        let dense = d.to_dense();
        for (i, j) in entries {
            assert_eq!(dense[i][j], 1);
        }
    }

    #[test]
    fn node_map_keys_follow_paths() {
        let ds = Dataset::from_codes(vec![vec![0, 1], vec![0, 1], vec![0, 1]], vec![2, 2, 2], 0)
            .unwrap();
        let tree = CptTree::new(&ds, 2, vec![0, 1]).unwrap();
        let d = build_design(&tree, DesignOptions::default());
        let map = CoefficientMatrix::zeros(d.n_cols(), 2).to_node_map(&tree, &d);
        assert!(map.contains_key("0=1") && map.contains_key("0=1/1=0"));
        assert!(!map.contains_key("0=1/1=1"));
    }

    fn cards() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..5, 0..4)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn ancestor_closure_and_nnz(cards in cards(), c in 2usize..4) {
            let tree = CptTree::from_cardinalities(c, cards.clone());
            let d = build_design(&tree, no_drop());
            let p = cards.len();
            prop_assert_eq!(d.nnz(), tree.n_leaves() * p);
            prop_assert_eq!(d.n_cols(), tree.n_nodes());
            for leaf in 0..tree.n_leaves() {
                // Regenerate from path strings: every prefix of the leaf path.
                let mut path = vec![0; p];
                let mut rest = leaf;
                for k in (0..p).rev() {
                    path[k] = rest % cards[k];
                    rest /= cards[k];
                }
                let want: std::collections::BTreeSet<String> =
                    (1..=p).map(|k| tree.path_label(&path[..k])).collect();
                let got: std::collections::BTreeSet<String> = d
                    .row(leaf)
                    .iter()
                    .map(|&j| tree.path_label(&tree.node(j).path))
                    .collect();
                prop_assert_eq!(got, want);
            }
        }

        #[test]
        fn softmax_shift_invariance(
            h in prop::collection::vec(-5.0f64..5.0, 8),
            shift in -50.0f64..50.0,
            col in 0usize..2,
        ) {
            // Shifting every child value of one node's coefficients by the
            // same constant shifts whole rows of H and leaves theta alone.
            let tree = CptTree::from_cardinalities(2, vec![2, 2]);
            let d = build_design(&tree, DesignOptions { drop_last_column: false, intercept: true });
            let mut rows: Vec<Vec<f64>> = (0..7).map(|j| if j == 0 { vec![0.0, 0.0] } else { h[(j - 1)..(j + 1)].to_vec() }).collect();
            let before = predict_cpt(&CoefficientMatrix::from_rows(&rows).unwrap(), &d).unwrap();
            rows[1 + col][0] += shift;
            rows[1 + col][1] += shift;
            let after = predict_cpt(&CoefficientMatrix::from_rows(&rows).unwrap(), &d).unwrap();
            for (a, b) in before.theta.iter().zip(&after.theta) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn cpt_rows_are_stochastic(vals in prop::collection::vec(-30.0f64..30.0, 18)) {
            let tree = CptTree::from_cardinalities(3, vec![2, 2]);
            let d = build_design(&tree, no_drop());
            let b = CoefficientMatrix { n_cols: 6, n_values: 3, values: vals };
            predict_cpt(&b, &d).unwrap().validate().unwrap();
        }

        #[test]
        fn counts_are_permutation_invariant(
            rows in prop::collection::vec((0usize..2, 0usize..3, 0usize..2), 1..40),
            seed: u64,
        ) {
            let cols = |rs: &[(usize, usize, usize)]| vec![
                rs.iter().map(|r| r.0).collect::<Vec<_>>(),
                rs.iter().map(|r| r.1).collect(),
                rs.iter().map(|r| r.2).collect(),
            ];
            let ds = Dataset::from_codes(cols(&rows), vec![2, 3, 2], 0).unwrap();
            let tree = CptTree::new(&ds, 2, vec![0, 1]).unwrap();
            let mut shuffled = rows.clone();
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let ds2 = Dataset::from_codes(cols(&shuffled), vec![2, 3, 2], 0).unwrap();
            let counts = aggregate_counts(&ds, &tree);
            prop_assert_eq!(&counts, &aggregate_counts(&ds2, &tree));
            prop_assert_eq!(counts.iter().sum::<f64>(), rows.len() as f64);
        }
    }
}
