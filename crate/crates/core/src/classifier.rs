//! Bayesian network classifier assembly: structure, per-node CPTs and class
//! posteriors.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{fit_bayes_with_rng, ChainDiagnostics, GlsConfig};
use crate::data::{apply_discretization, Dataset, DiscretizationModel, Encoder};
use crate::error::{Error, Result};
use crate::map::{fit_lasso, fit_ridge, fit_ridge_cv, CvConfig};
use crate::smoothing::additive_cpt;
use crate::structure::{learn_structure, NetworkStructure, StructureKind};
use crate::tree::{
    aggregate_counts, build_design, build_tree, predict_cpt, CoefficientMatrix, Cpt, CptTree, DesignMatrix, DesignOptions,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Parameter estimator for every CPT in the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Smoother {
    /// Pseudo-count `m` with back-off; `m = 0` is maximum likelihood.
    Additive { m: f64 },
    /// Ridge HLS with a fixed `τ`.
    Ridge { tau: f64 },
    /// Ridge HLS with `τ` chosen by internal cross-validation.
    RidgeCv { cv: CvConfig },
    Lasso { tau: f64 },
    Bayes { config: GlsConfig, variant: BayesVariant },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BayesVariant {
    RidgeIg,
    RidgeHc,
    Hs,
    HsIg,
}

impl BayesVariant {
    pub fn config(self) -> GlsConfig {
        match self {
            BayesVariant::RidgeIg => GlsConfig::ridge_ig(),
            BayesVariant::RidgeHc => GlsConfig::ridge_hc(),
            BayesVariant::Hs => GlsConfig::hs(),
            BayesVariant::HsIg => GlsConfig::hs_ig(),
        }
    }

    fn tag(self) -> &'static str {
        match self {
            BayesVariant::RidgeIg => "ridge-ig",
            BayesVariant::RidgeHc => "ridge-hc",
            BayesVariant::Hs => "hs",
            BayesVariant::HsIg => "hs-ig",
        }
    }
}

impl Smoother {
    pub fn bayes(variant: BayesVariant) -> Self {
        Smoother::Bayes {
            config: variant.config(),
            variant,
        }
    }

}

impl fmt::Display for Smoother {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smoother::Additive { m } if *m == 0.0 => write!(f, "mle"),
            Smoother::Additive { m } => write!(f, "add:{m}"),
            Smoother::Ridge { tau } => write!(f, "hls-nb:{tau}"),
            Smoother::RidgeCv { cv } if *cv == CvConfig::naive() => write!(f, "hls-cv-naive"),
            Smoother::RidgeCv { .. } => write!(f, "hls-cv"),
            Smoother::Lasso { tau } => write!(f, "hls-lasso:{tau}"),
            Smoother::Bayes { variant, .. } => write!(f, "hls-bayes:{}", variant.tag()),
        }
    }
}

fn parse_number(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::config(format!("bad {what} {s:?}")))?;
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::config(format!("{what} must be finite and >= 0, got {v}")));
    }
    Ok(v)
}

impl FromStr for Smoother {
    type Err = Error;

    /// `add:m | mle | hls-nb[:tau] | hls-cv | hls-cv-naive | hls-lasso:tau |
    /// hls-bayes:{ridge-ig,ridge-hc,hs,hs-ig}`
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s.as_str(), None),
        };
        Ok(match (head, arg) {
            ("mle", None) => Smoother::Additive { m: 0.0 },
            ("add", Some(m)) => Smoother::Additive { m: parse_number(m, "pseudo-count")? },
            ("hls-nb", None) => Smoother::Ridge { tau: 1.0 },
            ("hls-nb", Some(t)) => Smoother::Ridge { tau: parse_number(t, "tau")? },
            ("hls-cv", None) => Smoother::RidgeCv { cv: CvConfig::default() },
            ("hls-cv-naive", None) => Smoother::RidgeCv { cv: CvConfig::naive() },
            ("hls-lasso", Some(t)) => Smoother::Lasso { tau: parse_number(t, "tau")? },
            ("hls-bayes", Some(v)) => Smoother::bayes(match v {
                "ridge-ig" => BayesVariant::RidgeIg,
                "ridge-hc" => BayesVariant::RidgeHc,
                "hs" => BayesVariant::Hs,
                "hs-ig" => BayesVariant::HsIg,
                _ => return Err(Error::config(format!("unknown Bayesian variant {v:?}"))),
            }),
            _ => return Err(Error::config(format!("unknown smoother {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub structure: StructureKind,
    pub smoother: Smoother,
    pub design: DesignOptions,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(structure: StructureKind, smoother: Smoother) -> Self {
        TrainConfig {
            structure,
            smoother,
            design: DesignOptions::default(),
            seed: 0,
        }
    }
}

/// Fit summary of one node's CPT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node: usize,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeModel {
    pub tree: CptTree,
    pub cpt: Cpt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BncModel {
    pub format_version: u32,
    pub names: Vec<String>,
    pub structure: NetworkStructure,
    /// Smoothed class marginal.
    pub class_prior: Vec<f64>,
    /// One entry per attribute, in column order.
    pub nodes: Vec<NodeModel>,
    pub smoother: String,
    #[serde(default)]
    pub reports: Vec<NodeReport>,
    /// Encoding of raw inputs, present when trained through [`fit_pipeline`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<Preprocessing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub encoder: Encoder,
    pub discretization: DiscretizationModel,
}

/// Discretizes numeric columns of a raw dataset (cuts fitted on it), trains,
/// and keeps the encoding so raw files can be scored later.
pub fn fit_pipeline(raw: &Dataset, cfg: &TrainConfig) -> Result<BncModel> {
    let discretization = DiscretizationModel::fit(raw);
    let ds = apply_discretization(&discretization, raw)?;
    let mut model = train(&ds, cfg)?;
    model.preprocessing = Some(Preprocessing {
        encoder: Encoder::from_dataset(raw),
        discretization,
    });
    Ok(model)
}

/// Learns the structure, then fits every attribute's CPT independently (in
/// parallel) with the configured smoother.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<BncModel> {
    ds.require_categorical()?;
    let structure = learn_structure(ds, cfg.structure)?;
    train_with_structure(ds, structure, cfg)
}

pub fn train_with_structure(ds: &Dataset, structure: NetworkStructure, cfg: &TrainConfig) -> Result<BncModel> {
    Ok(train_inner(ds, structure, cfg)?.0)
}

/// Intermediate products of one node's fit, kept for export.
#[derive(Debug, Clone)]
pub struct NodeArtifacts {
    pub node: usize,
    /// Design with counts; `None` for additive smoothing.
    pub design: Option<DesignMatrix>,
    pub fit: Option<DesignFit>,
}

/// Like [`train`], also returning every node's design and coefficients.
pub fn train_with_artifacts(ds: &Dataset, cfg: &TrainConfig) -> Result<(BncModel, Vec<NodeArtifacts>)> {
    ds.require_categorical()?;
    let structure = learn_structure(ds, cfg.structure)?;
    train_inner(ds, structure, cfg)
}

fn train_inner(ds: &Dataset, structure: NetworkStructure, cfg: &TrainConfig) -> Result<(BncModel, Vec<NodeArtifacts>)> {
    ds.require_categorical()?;
    structure.validate()?;
    let class = ds.class_index();
    if structure.class_index != class || structure.parents.len() != ds.n_columns() {
        return Err(Error::contract("structure does not match the dataset"));
    }
    let n_classes = ds.n_classes();
    let mut class_counts = vec![0.0; n_classes];
    for &y in ds.class_codes() {
        class_counts[y] += 1.0;
    }
    let m = match cfg.smoother {
        Smoother::Additive { m } => m,
        // The class has no parents: the unpenalized intercept-only fit is the
        // maximum-likelihood marginal.
        _ => 0.0,
    };
    let class_prior = additive_cpt(&class_counts, &CptTree::from_cardinalities(n_classes, vec![]), m)?.theta;

    let fitted: Vec<(NodeModel, NodeArtifacts)> = ds
        .attributes()
        .into_par_iter()
        .map(|node| fit_node(ds, &structure, node, cfg))
        .collect::<Result<_>>()?;
    let (nodes, artifacts): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let reports = artifacts
        .iter()
        .map(|a| match &a.fit {
            Some(f) => f.report.clone(),
            None => NodeReport {
                node: a.node,
                converged: true,
                iterations: 0,
                tau: None,
                min_ess: None,
            },
        })
        .collect();
    let model = BncModel {
        format_version: MODEL_FORMAT_VERSION,
        names: ds.names().to_vec(),
        structure,
        class_prior,
        nodes,
        smoother: cfg.smoother.to_string(),
        reports,
        preprocessing: None,
    };
    Ok((model, artifacts))
}

fn fit_node(ds: &Dataset, structure: &NetworkStructure, node: usize, cfg: &TrainConfig) -> Result<(NodeModel, NodeArtifacts)> {
    let tree = build_tree(ds, structure, node)?;
    let counts = aggregate_counts(ds, &tree);
    let mut art = NodeArtifacts {
        node,
        design: None,
        fit: None,
    };
    let cpt = match &cfg.smoother {
        Smoother::Additive { m } => additive_cpt(&counts, &tree, *m)?,
        sm => {
            let design = build_design(&tree, cfg.design).with_counts(counts)?;
            let fit = fit_design(&design, sm, cfg.seed, node)?;
            let cpt = match &fit.cpt {
                Some(cpt) => cpt.clone(),
                None => predict_cpt(&fit.b, &design)?,
            };
            art.design = Some(design);
            art.fit = Some(fit);
            cpt
        }
    };
    Ok((NodeModel { tree, cpt }, art))
}

/// Coefficients fitted by one of the HLS smoothers.
#[derive(Debug, Clone)]
pub struct DesignFit {
    pub b: CoefficientMatrix,
    /// Posterior-mean CPT for sampled fits; point fits leave this to
    /// [`predict_cpt`].
    pub cpt: Option<Cpt>,
    pub report: NodeReport,
    pub chain: Option<ChainDiagnostics>,
}

/// Fits an HLS smoother on a design that already carries its counts.
/// `stream` separates the random streams of nodes sharing one seed.
pub fn fit_design(design: &DesignMatrix, smoother: &Smoother, seed: u64, stream: usize) -> Result<DesignFit> {
    let mut report = NodeReport {
        node: stream,
        converged: true,
        iterations: 0,
        tau: None,
        min_ess: None,
    };
    let mut chain = None;
    let (b, cpt) = match smoother {
        Smoother::Additive { .. } => {
            return Err(Error::config("additive smoothing has no design-matrix fit"));
        }
        Smoother::Ridge { tau } | Smoother::Lasso { tau } => {
            let (b, rep) = if matches!(smoother, Smoother::Ridge { .. }) {
                fit_ridge(design, *tau)?
            } else {
                fit_lasso(design, *tau)?
            };
            report.converged = rep.converged;
            report.iterations = rep.iterations;
            report.tau = Some(*tau);
            (b, None)
        }
        Smoother::RidgeCv { cv } => {
            let cv = CvConfig {
                seed: seed ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ..cv.clone()
            };
            let (b, rep, out) = fit_ridge_cv(design, &cv)?;
            report.converged = rep.converged;
            report.iterations = rep.iterations;
            report.tau = Some(out.tau);
            (b, None)
        }
        Smoother::Bayes { config, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream as u64);
            let fit = fit_bayes_with_rng(design, config, &mut rng)?;
            report.iterations = config.burn_in + config.n_samples * config.thin;
            report.tau = Some(fit.diagnostics.mean_tau);
            report.min_ess = Some(fit.diagnostics.min_ess());
            chain = Some(fit.diagnostics);
            (fit.posterior_mean_b, Some(fit.cpt))
        }
    };
    Ok(DesignFit { b, cpt, report, chain })
}

impl BncModel {
    pub fn n_classes(&self) -> usize {
        self.class_prior.len()
    }

    pub fn class_index(&self) -> usize {
        self.structure.class_index
    }

    pub fn uses_hls(&self) -> bool {
        self.smoother.starts_with("hls")
    }

    /// Unnormalized log joint `log P(y, x)` for each class.
    pub fn log_joint(&self, row: &[usize]) -> Vec<f64> {
        let class = self.class_index();
        let mut values = row.to_vec();
        (0..self.n_classes())
            .map(|y| {
                values[class] = y;
                let mut lp = self.class_prior[y].max(1e-300).ln();
                for node in &self.nodes {
                    let t = &node.tree;
                    let leaf = t.leaf_of_values(&values);
                    let v = values[t.child_index].min(t.child_cardinality - 1);
                    lp += node.cpt.row(leaf)[v].max(1e-300).ln();
                }
                lp
            })
            .collect()
    }

    /// Class posterior for a full-width code row (the class entry is
    /// ignored). Codes beyond a column's training cardinality use its last
    /// value.
    pub fn predict_posterior(&self, row: &[usize]) -> Result<Vec<f64>> {
        if row.len() != self.structure.parents.len() {
            return Err(Error::contract(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.structure.parents.len()
            )));
        }
        let lj = self.log_joint(row);
        let z = crate::linalg::log_sum_exp(&lj);
        Ok(lj.iter().map(|l| (l - z).exp()).collect())
    }

    pub fn predict_class(&self, row: &[usize]) -> Result<usize> {
        Ok(argmax(&self.predict_posterior(row)?))
    }

    /// Posteriors for every dataset row, computed in parallel.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
        (0..ds.n_rows())
            .into_par_iter()
            .map(|r| self.predict_posterior(&ds.row(r)))
            .collect()
    }

    /// Reads and encodes a raw CSV with the training dictionaries and cuts.
    pub fn encode_csv(&self, path: impl AsRef<Path>) -> Result<Dataset> {
        let pre = self
            .preprocessing
            .as_ref()
            .ok_or_else(|| Error::config("model carries no input encoding"))?;
        apply_discretization(&pre.discretization, &pre.encoder.encode_csv(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: BncModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::config(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks that every CPT row is stochastic.
    pub fn validate(&self) -> Result<()> {
        let s: f64 = self.class_prior.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::contract("class prior does not sum to one"));
        }
        self.nodes.iter().try_for_each(|n| n.cpt.validate())
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v > p[best] { k } else { best })
}
