use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Column, Dataset};
use crate::error::{Error, Result};
use crate::linalg::cholesky_in_place;

/// Discretized correlated Gaussian data for timing runs.
///
/// Draws `p_parents + 1` jointly Gaussian columns whose correlation matrix is
/// the normalized Gram matrix of a seeded Gaussian matrix, then cuts each
/// column into `cardinality` equal-frequency bins. The last column is the
/// child and doubles as the dataset's class column.
pub fn gen_synthetic(
    p_parents: usize,
    cardinality: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Dataset> {
    if p_parents < 1 || cardinality < 2 || n_samples < 1 {
        return Err(Error::config(
            "synthetic data needs p_parents >= 1, cardinality >= 2, n_samples >= 1",
        ));
    }
    let d = p_parents + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let a: Vec<f64> = (0..d * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut corr = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            corr[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum();
        }
    }
    let diag: Vec<f64> = (0..d).map(|i| corr[i * d + i].sqrt()).collect();
    for i in 0..d {
        for j in 0..d {
            corr[i * d + j] /= diag[i] * diag[j];
        }
        // keeps the factorization safe when the Gram matrix is near singular
        corr[i * d + i] += 1e-9;
    }
    let mut chol = corr;
    if !cholesky_in_place(&mut chol, d) {
        return Err(Error::numeric("synthetic correlation matrix is not SPD"));
    }

    let mut samples = vec![vec![0.0; n_samples]; d];
    let mut z = vec![0.0; d];
    for r in 0..n_samples {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        for (i, col) in samples.iter_mut().enumerate() {
            col[r] = (0..=i).map(|k| chol[i * d + k] * z[k]).sum();
        }
    }

    let columns = samples
        .iter()
        .map(|values| Column::categorical(equal_frequency_bins(values, cardinality), cardinality))
        .collect();
    let mut names: Vec<String> = (0..p_parents).map(|i| format!("x{i}")).collect();
    names.push("child".into());
    Dataset::new(names, columns, p_parents)
}

fn equal_frequency_bins(values: &[f64], cardinality: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut bins = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        bins[i] = rank * cardinality / n;
    }
    bins
}
