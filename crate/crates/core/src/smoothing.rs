//! Additive (pseudo-count) smoothing with back-off to the nearest ancestor
//! that has seen data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{Cpt, CptTree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdditiveConfig {
    pub m: f64,
}

impl AdditiveConfig {
    pub fn new(m: f64) -> Result<Self> {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::config(format!("pseudo-count must be >= 0, got {m}")));
        }
        Ok(AdditiveConfig { m })
    }
}

/// `θ = (n + m) / (n_Π + |X_c| m)` per leaf. A leaf with no samples takes the
/// estimate of its nearest ancestor (or the root marginal) with at least one
/// sample; with no data at all the row is uniform.
///
/// `counts` is `L × |X_c|` as produced by [`crate::tree::aggregate_counts`].
pub fn additive_cpt(counts: &[f64], tree: &CptTree, m: f64) -> Result<Cpt> {
    AdditiveConfig::new(m)?;
    let c = tree.child_cardinality;
    let leaves = tree.n_leaves();
    if counts.len() != leaves * c {
        return Err(Error::contract(format!(
            "count table has {} entries, tree needs {}",
            counts.len(),
            leaves * c
        )));
    }
    // levels[d] holds aggregated counts at depth d (0 = root, p = leaves).
    let p = tree.depth();
    let mut levels = vec![counts.to_vec()];
    for d in (0..p).rev() {
        let card = tree.parent_cardinalities[d];
        let below = levels.last().unwrap();
        let n_nodes = below.len() / c / card;
        let mut up = vec![0.0; n_nodes * c];
        for node in 0..n_nodes {
            for child in 0..card {
                for v in 0..c {
                    up[node * c + v] += below[(node * card + child) * c + v];
                }
            }
        }
        levels.push(up);
    }
    levels.reverse();

    let mut theta = vec![0.0; leaves * c];
    for leaf in 0..leaves {
        let mut node = leaf;
        let mut depth = p;
        let row = loop {
            let row = &levels[depth][node * c..(node + 1) * c];
            if row.iter().sum::<f64>() > 0.0 || depth == 0 {
                break row;
            }
            node /= tree.parent_cardinalities[depth - 1];
            depth -= 1;
        };
        let total: f64 = row.iter().sum();
        let out = &mut theta[leaf * c..(leaf + 1) * c];
        if total + c as f64 * m > 0.0 {
            for (o, &n) in out.iter_mut().zip(row) {
                *o = (n + m) / (total + c as f64 * m);
            }
        } else {
            out.fill(1.0 / c as f64);
        }
    }
    Ok(Cpt {
        n_rows: leaves,
        n_values: c,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_with_m_one() {
        let tree = CptTree::from_cardinalities(2, vec![]);
        let cpt = additive_cpt(&[3.0, 7.0], &tree, 1.0).unwrap();
        assert!((cpt.theta[0] - 4.0 / 12.0).abs() < 1e-15);
        assert!((cpt.theta[1] - 8.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn m_zero_is_maximum_likelihood() {
        let tree = CptTree::from_cardinalities(2, vec![]);
        assert_eq!(additive_cpt(&[3.0, 7.0], &tree, 0.0).unwrap().theta, vec![0.3, 0.7]);
    }

    #[test]
    fn empty_leaf_backs_off() {
        // Depth-2 tree; leaf (0,1) is empty and its parent (0) holds [1, 0].
        let tree = CptTree::from_cardinalities(2, vec![2, 2]);
        let counts = [1.0, 0.0, 0.0, 0.0, 4.0, 4.0, 2.0, 0.0];
        let cpt = additive_cpt(&counts, &tree, 1.0).unwrap();
        assert!((cpt.row(1)[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((cpt.row(1)[1] - 1.0 / 3.0).abs() < 1e-15);
        // Non-empty leaves use their own counts even when a cell is zero.
        assert!((cpt.row(3)[0] - 3.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn back_off_reaches_root_and_uniform() {
        let tree = CptTree::from_cardinalities(3, vec![2]);
        let cpt = additive_cpt(&[0.0, 0.0, 0.0, 2.0, 1.0, 1.0], &tree, 0.0).unwrap();
        assert_eq!(cpt.row(0), &[0.5, 0.25, 0.25]);
        let empty = additive_cpt(&[0.0; 6], &tree, 0.0).unwrap();
        assert!(empty.theta.iter().all(|&t| (t - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn negative_m_is_config_error() {
        let tree = CptTree::from_cardinalities(2, vec![]);
        assert!(matches!(additive_cpt(&[1.0, 1.0], &tree, -0.5), Err(Error::Config(_))));
    }

    #[test]
    fn large_m_approaches_uniform_monotonically() {
        let tree = CptTree::from_cardinalities(2, vec![]);
        let mut prev = 0.1;
        for m in [0.0, 0.5, 1.0, 10.0, 1e3, 1e9] {
            let t = additive_cpt(&[1.0, 9.0], &tree, m).unwrap().theta[0];
            assert!(t >= prev && t <= 0.5);
            prev = t;
        }
        assert!((prev - 0.5).abs() < 1e-8);
    }
}
