//! Structure learning for Bayesian network classifiers: tree-augmented naive
//! Bayes (TAN) and K-dependence Bayes (kDB) from plug-in mutual information.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    Tan,
    Kdb(usize),
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureKind::Tan => write!(f, "tan"),
            StructureKind::Kdb(k) => write!(f, "kdb:{k}"),
        }
    }
}

impl FromStr for StructureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "tan" {
            return Ok(StructureKind::Tan);
        }
        if let Some(k) = s.strip_prefix("kdb:").or_else(|| s.strip_prefix("kdb-")) {
            return k
                .parse()
                .map(StructureKind::Kdb)
                .map_err(|_| Error::config(format!("bad kDB order in {s:?}")));
        }
        Err(Error::config(format!(
            "unknown structure {s:?} (expected tan or kdb:K)"
        )))
    }
}

/// Mutual information statistics (in nats) between attributes and the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiTable {
    pub class_index: usize,
    pub attributes: Vec<usize>,
    /// `I(X_j; Y)` indexed by column; zero for the class column.
    pub mi_with_class: Vec<f64>,
    /// `I(X_i; X_j | Y)` indexed by column pairs; symmetric, zero diagonal.
    pub cmi: Vec<Vec<f64>>,
}

/// Per-node ordered parent lists. Attribute nodes list the class first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkStructure {
    pub kind: StructureKind,
    pub class_index: usize,
    /// Indexed by column; the class column has no parents.
    pub parents: Vec<Vec<usize>>,
}

fn xlogx_ratio(joint: f64, num: f64, den: f64) -> f64 {
    if joint > 0.0 {
        joint * (joint * num / den).ln()
    } else {
        0.0
    }
}

/// Plug-in `I(X_a; X_b)` in nats.
pub fn mutual_information(ds: &Dataset, a: usize, b: usize) -> f64 {
    let (ca, cb) = (card(ds, a), card(ds, b));
    let n = ds.n_rows() as f64;
    if ds.n_rows() == 0 {
        return 0.0;
    }
    let mut joint = vec![0.0; ca * cb];
    for (&x, &y) in ds.codes(a).iter().zip(ds.codes(b)) {
        joint[x * cb + y] += 1.0;
    }
    let pa: Vec<f64> = (0..ca).map(|x| (0..cb).map(|y| joint[x * cb + y]).sum()).collect();
    let pb: Vec<f64> = (0..cb).map(|y| (0..ca).map(|x| joint[x * cb + y]).sum()).collect();
    let mut mi = 0.0;
    for x in 0..ca {
        for y in 0..cb {
            let pj = joint[x * cb + y] / n;
            mi += xlogx_ratio(pj, 1.0, (pa[x] / n) * (pb[y] / n));
        }
    }
    mi.max(0.0)
}

/// Plug-in `I(X_a; X_b | X_c)` in nats.
pub fn conditional_mutual_information(ds: &Dataset, a: usize, b: usize, c: usize) -> f64 {
    let (ca, cb, cc) = (card(ds, a), card(ds, b), card(ds, c));
    if ds.n_rows() == 0 {
        return 0.0;
    }
    let n = ds.n_rows() as f64;
    let mut joint = vec![0.0; ca * cb * cc];
    let (xa, xb, xc) = (ds.codes(a), ds.codes(b), ds.codes(c));
    for r in 0..ds.n_rows() {
        joint[(xa[r] * cb + xb[r]) * cc + xc[r]] += 1.0;
    }
    let mut ac = vec![0.0; ca * cc];
    let mut bc = vec![0.0; cb * cc];
    let mut pc = vec![0.0; cc];
    for x in 0..ca {
        for y in 0..cb {
            for z in 0..cc {
                let v = joint[(x * cb + y) * cc + z];
                ac[x * cc + z] += v;
                bc[y * cc + z] += v;
                pc[z] += v;
            }
        }
    }
    let mut cmi = 0.0;
    for x in 0..ca {
        for y in 0..cb {
            for z in 0..cc {
                let v = joint[(x * cb + y) * cc + z];
                if v > 0.0 {
                    cmi += v / n * (v * pc[z] / (ac[x * cc + z] * bc[y * cc + z])).ln();
                }
            }
        }
    }
    cmi.max(0.0)
}

fn card(ds: &Dataset, j: usize) -> usize {
    ds.cardinality(j).expect("structure learning needs categorical columns")
}

/// Computes `I(X_i; Y)` for every attribute and `I(X_i; X_j | Y)` for every
/// attribute pair. Pairs are evaluated in parallel.
pub fn compute_mi_tables(ds: &Dataset) -> Result<MiTable> {
    ds.require_categorical()?;
    let class = ds.class_index();
    let attributes = ds.attributes();
    let p = ds.n_columns();
    let mut mi_with_class = vec![0.0; p];
    for &a in &attributes {
        mi_with_class[a] = mutual_information(ds, a, class);
    }
    let pairs: Vec<(usize, usize)> = attributes
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| attributes[i + 1..].iter().map(move |&b| (a, b)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| conditional_mutual_information(ds, a, b, class))
        .collect();
    let mut cmi = vec![vec![0.0; p]; p];
    for (&(a, b), v) in pairs.iter().zip(values) {
        cmi[a][b] = v;
        cmi[b][a] = v;
    }
    Ok(MiTable {
        class_index: class,
        attributes,
        mi_with_class,
        cmi,
    })
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Tree-augmented naive Bayes: a maximum spanning tree over the attributes
/// weighted by class-conditional mutual information, rooted at the first
/// attribute, with the class added as first parent of every attribute.
///
/// Equal weights are broken in favour of the lower `(i, j)` index pair.
pub fn learn_tan(mi: &MiTable) -> NetworkStructure {
    let p = mi.mi_with_class.len();
    let attrs = &mi.attributes;
    let mut edges: Vec<(usize, usize)> = attrs
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| attrs[i + 1..].iter().map(move |&b| (a, b)))
        .collect();
    edges.sort_by(|&(a, b), &(c, d)| {
        mi.cmi[c][d]
            .total_cmp(&mi.cmi[a][b])
            .then((a, b).cmp(&(c, d)))
    });

    let mut uf: Vec<usize> = (0..p).collect();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); p];
    for (a, b) in edges {
        let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
        if ra != rb {
            uf[ra] = rb;
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
    }

    let mut parents = vec![Vec::new(); p];
    if let Some(&root) = attrs.first() {
        let mut visited = vec![false; p];
        let mut queue = std::collections::VecDeque::from([root]);
        visited[root] = true;
        parents[root] = vec![mi.class_index];
        while let Some(u) = queue.pop_front() {
            let mut next = adjacency[u].clone();
            next.sort_unstable();
            for v in next {
                if !visited[v] {
                    visited[v] = true;
                    parents[v] = vec![mi.class_index, u];
                    queue.push_back(v);
                }
            }
        }
    }
    NetworkStructure {
        kind: StructureKind::Tan,
        class_index: mi.class_index,
        parents,
    }
}

/// K-dependence Bayes: attributes are ranked by `I(X; Y)`; each attribute
/// takes the class plus the `min(K, rank)` higher-ranked attributes with the
/// largest `I(X_i; X_j | Y)`.
pub fn learn_kdb(mi: &MiTable, k: usize) -> NetworkStructure {
    let p = mi.mi_with_class.len();
    let mut order = mi.attributes.clone();
    order.sort_by(|&a, &b| {
        mi.mi_with_class[b]
            .total_cmp(&mi.mi_with_class[a])
            .then(a.cmp(&b))
    });
    let mut parents = vec![Vec::new(); p];
    for (rank, &x) in order.iter().enumerate() {
        let mut candidates = order[..rank].to_vec();
        candidates.sort_by(|&a, &b| mi.cmi[x][b].total_cmp(&mi.cmi[x][a]).then(a.cmp(&b)));
        candidates.truncate(k.min(rank));
        let mut ps = vec![mi.class_index];
        ps.extend(candidates);
        parents[x] = ps;
    }
    NetworkStructure {
        kind: StructureKind::Kdb(k),
        class_index: mi.class_index,
        parents,
    }
}

/// Learns a structure of the requested kind from a categorical dataset.
pub fn learn_structure(ds: &Dataset, kind: StructureKind) -> Result<NetworkStructure> {
    let mi = compute_mi_tables(ds)?;
    Ok(match kind {
        StructureKind::Tan => learn_tan(&mi),
        StructureKind::Kdb(k) => learn_kdb(&mi, k),
    })
}

impl NetworkStructure {
    /// Attribute parents of `node`, excluding the class.
    pub fn attribute_parents(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.parents[node]
            .iter()
            .copied()
            .filter(move |&p| p != self.class_index)
    }

    /// Topological order of all nodes, or `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let p = self.parents.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); p];
        for (v, ps) in self.parents.iter().enumerate() {
            for &u in ps {
                children[u].push(v);
            }
        }
        let mut ready: Vec<usize> = (0..p).filter(|&v| indegree[v] == 0).collect();
        let mut out = Vec::with_capacity(p);
        while let Some(u) = ready.pop() {
            out.push(u);
            for &v in &children[u] {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    ready.push(v);
                }
            }
        }
        (out.len() == p).then_some(out)
    }

    /// Checks acyclicity, class-first parent lists and the per-kind parent
    /// limits.
    pub fn validate(&self) -> Result<()> {
        if self.topological_order().is_none() {
            return Err(Error::contract("structure has a cycle"));
        }
        if !self.parents[self.class_index].is_empty() {
            return Err(Error::contract("class node must have no parents"));
        }
        let limit = match self.kind {
            StructureKind::Tan => 1,
            StructureKind::Kdb(k) => k,
        };
        for (v, ps) in self.parents.iter().enumerate() {
            if v == self.class_index {
                continue;
            }
            if ps.first() != Some(&self.class_index) {
                return Err(Error::contract(format!("node {v} must list the class first")));
            }
            if self.attribute_parents(v).count() > limit {
                return Err(Error::contract(format!(
                    "node {v} exceeds the {} parent limit",
                    self.kind
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Number of attribute-to-attribute edges.
    pub fn n_attribute_edges(&self) -> usize {
        (0..self.parents.len())
            .map(|v| self.attribute_parents(v).count())
            .sum()
    }
}
