//! Pólya-Gamma draws via a truncated gamma series with a moment-matched
//! gamma tail.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgParams {
    pub b: f64,
    pub c: f64,
    /// Number of explicit series terms.
    pub k: usize,
}

impl PgParams {
    pub fn new(b: f64, c: f64, k: usize) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() || !c.is_finite() || k == 0 {
            return Err(Error::contract(format!("invalid PG parameters b={b}, c={c}, K={k}")));
        }
        Ok(PgParams { b, c, k })
    }
}

/// `E[PG(b, c)]`, with the small- and large-`|c|` branches.
pub fn pg_mean(b: f64, c: f64) -> f64 {
    let c = c.abs();
    if c <= 1e-3 {
        b / 4.0
    } else if c >= 300.0 {
        b / (2.0 * c)
    } else {
        (c / 2.0).tanh() * b / (2.0 * c)
    }
}

/// `Var[PG(b, c)] = b (sinh c − c) / (4 c³ cosh²(c/2))`, with the same
/// branches. The middle branch uses a series for `sinh c − c` when `c` is
/// small enough for the closed form to cancel.
pub fn pg_variance(b: f64, c: f64) -> f64 {
    let c = c.abs();
    if c <= 1e-3 {
        b / 24.0
    } else if c >= 300.0 {
        b / (2.0 * c.powi(3))
    } else {
        let sinh_minus = if c < 0.5 {
            let c2 = c * c;
            // c³/3! + c⁵/5! + ... to double precision at c < 0.5
            let mut term = c * c2 / 6.0;
            let mut sum = term;
            let mut k = 2.0;
            while term > 1e-18 * sum {
                term *= c2 / ((2.0 * k) * (2.0 * k + 1.0));
                sum += term;
                k += 1.0;
            }
            sum
        } else {
            c.sinh() - c
        };
        let ch = (c / 2.0).cosh();
        b * sinh_minus / (4.0 * c.powi(3) * ch * ch)
    }
}

fn term_denominator(k: usize, c: f64) -> f64 {
    let h = k as f64 - 0.5;
    2.0 * PI * PI * h * h + c * c / 2.0
}

/// One `PG(b, c)` draw from `K` series terms plus a gamma tail whose mean and
/// variance are the full PG moments minus those of the explicit terms.
pub fn sample_pg<R: Rng + ?Sized>(b: f64, c: f64, k: usize, rng: &mut R) -> Result<f64> {
    PgParams::new(b, c, k)?;
    Ok(sample_pg_unchecked(b, c, k, rng))
}

pub(crate) fn sample_pg_unchecked<R: Rng + ?Sized>(b: f64, c: f64, k: usize, rng: &mut R) -> f64 {
    let gamma = Gamma::new(b, 1.0).expect("b > 0");
    let mut x = 0.0;
    let mut head_mean = 0.0;
    let mut head_var = 0.0;
    for j in 1..=k {
        let d = term_denominator(j, c);
        x += gamma.sample(rng) / d;
        head_mean += b / d;
        head_var += b / (d * d);
    }
    let mean = pg_mean(b, c) - head_mean;
    let var = pg_variance(b, c) - head_var;
    if mean > 0.0 && var > 0.0 {
        let tail = Gamma::new(mean * mean / var, var / mean).expect("positive moments");
        x += tail.sample(rng);
    } else if mean > 0.0 {
        x += mean;
    }
    x
}
