use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hls_core::classifier::{argmax, train_with_artifacts, BncModel, Preprocessing, Smoother, TrainConfig};
use hls_core::data::{apply_discretization, load_csv, load_suite, make_folds, DiscretizationModel, Encoder, Schema};
use hls_core::eval::{run_cv, score_rows, time_fit, wdl, EvalResult, FitVariant, Loss, TimingConfig};
use hls_core::structure::StructureKind;
use hls_core::tree::DesignOptions;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "hls", version, about = "Bayesian network classifiers with hierarchical linear smoothing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a classifier on one CSV file and export the model and per-node artifacts.
    Train(TrainArgs),
    /// Score a CSV file with a saved model.
    Predict(PredictArgs),
    /// Cross-validate several smoothers over a directory of datasets.
    Bench(BenchArgs),
    /// Time single-node parameter learning on synthetic data.
    Timing(TimingArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// tan | kdb:K
    #[arg(long, default_value = "kdb:1")]
    structure: StructureKind,
    #[arg(long, default_value = "0")]
    seed: u64,
    /// Keep every tree column instead of dropping the last one.
    #[arg(long)]
    keep_last_column: bool,
    /// Add an unpenalized intercept column to each design.
    #[arg(long)]
    intercept: bool,
}

impl ModelArgs {
    fn config(&self, smoother: Smoother) -> TrainConfig {
        TrainConfig {
            structure: self.structure,
            smoother,
            design: DesignOptions {
                drop_last_column: !self.keep_last_column,
                intercept: self.intercept,
            },
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Column schema (TOML); defaults to NAME.schema.toml next to the data.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// add:m | mle | hls-nb[:tau] | hls-cv | hls-cv-naive | hls-lasso:tau |
    /// hls-bayes:{ridge-ig,ridge-hc,hs,hs-ig}
    #[arg(long, default_value = "hls-nb")]
    smoother: Smoother,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV of predicted labels and class probabilities.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of NAME.csv + NAME.schema.toml pairs.
    #[arg(long)]
    data_dir: PathBuf,
    /// Smoothers to compare; the first is the W-D-L baseline.
    #[arg(long = "smoother", required = true)]
    smoothers: Vec<Smoother>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "10")]
    folds: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct TimingArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,5")]
    cardinality: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1000,100000")]
    samples: Vec<usize>,
    #[arg(long, default_value = "4")]
    parents: usize,
    #[arg(long, default_value = "10")]
    repetitions: usize,
    #[arg(long = "smoother", default_value = "hls-nb")]
    smoothers: Vec<Smoother>,
    #[arg(long, default_value = "0")]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Timing(a) => timing_cmd(a),
    }
}

fn schema_for(data: &Path, schema: Option<PathBuf>) -> Result<Schema> {
    let path = schema.unwrap_or_else(|| data.with_extension("schema.toml"));
    Schema::from_file(&path).with_context(|| format!("reading schema {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

/// File-system safe form of a model or node name.
fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let schema = schema_for(&a.data, a.schema)?;
    let raw = load_csv(&a.data, &schema)?;
    let cfg = a.model.config(a.smoother);
    let discretization = DiscretizationModel::fit(&raw);
    let ds = apply_discretization(&discretization, &raw)?;
    let (mut model, artifacts) = train_with_artifacts(&ds, &cfg)?;
    model.preprocessing = Some(Preprocessing {
        encoder: Encoder::from_dataset(&raw),
        discretization,
    });

    let nodes_dir = a.out.join("nodes");
    fs::create_dir_all(&nodes_dir)?;
    model.save(a.out.join("model.json"))?;
    fs::write(a.out.join("structure.json"), model.structure.to_json()?)?;
    write_json(&a.out.join("report.json"), &model.reports)?;
    for (node, art) in model.nodes.iter().zip(&artifacts) {
        let name = slug(&ds.names()[art.node]);
        let (Some(design), Some(fit)) = (&art.design, &art.fit) else {
            continue;
        };
        design.write_coo(BufWriter::new(File::create(nodes_dir.join(format!("{name}.design.coo")))?))?;
        fs::write(nodes_dir.join(format!("{name}.coef.json")), fit.b.to_node_json(&node.tree, design)?)?;
        if let Some(chain) = &fit.chain {
            chain.write_trace(BufWriter::new(File::create(nodes_dir.join(format!("{name}.trace.tsv")))?))?;
        }
    }
    println!(
        "trained {} on {} rows ({} attribute edges); wrote {}",
        model.smoother,
        ds.n_rows(),
        model.structure.n_attribute_edges(),
        a.out.display()
    );
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let model = BncModel::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let ds = model.encode_csv(&a.data)?;
    let post = model.predict_dataset(&ds)?;
    let class = model.class_index();
    let labels: Vec<String> = match ds.labels(class) {
        Some(l) if l.len() == model.n_classes() => l.to_vec(),
        _ => (0..model.n_classes()).map(|k| k.to_string()).collect(),
    };

    let mut w = csv::Writer::from_path(&a.out)?;
    let mut header = vec!["row".to_string(), "predicted".to_string()];
    header.extend(labels.iter().map(|l| format!("p_{l}")));
    w.write_record(&header)?;
    for (r, p) in post.iter().enumerate() {
        let mut rec = vec![r.to_string(), labels[argmax(p)].clone()];
        rec.extend(p.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let class_name = &model.names[class];
    let has_truth = csv::Reader::from_path(&a.data)?.headers()?.iter().any(|h| h == class_name);
    if has_truth {
        let rows: Vec<usize> = (0..ds.n_rows()).collect();
        let scores = score_rows(&rows, ds.class_codes(), &post);
        let n = scores.len().max(1) as f64;
        let summary = serde_json::json!({
            "rows": scores.len(),
            "zero_one": scores.iter().filter(|s| s.truth != s.predicted).count() as f64 / n,
            "log_loss": scores.iter().map(|s| s.log_loss).sum::<f64>() / n,
        });
        println!("{}", serde_json::to_string_pretty(&summary)?);
    }
    Ok(())
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let suite = load_suite(&a.data_dir)?;
    if suite.is_empty() {
        bail!("no NAME.csv + NAME.schema.toml pairs in {}", a.data_dir.display());
    }
    let configs: Vec<TrainConfig> = a.smoothers.iter().map(|s| a.model.config(s.clone())).collect();
    let jobs: Vec<(usize, usize)> = (0..suite.len())
        .flat_map(|d| (0..configs.len()).map(move |m| (d, m)))
        .collect();
    let results: Vec<EvalResult> = jobs
        .par_iter()
        .map(|&(d, m)| {
            let (name, ds) = &suite[d];
            let plan = make_folds(ds, a.folds.min(ds.n_rows()), a.model.seed)?;
            run_cv(ds, name, &configs[m], &plan).with_context(|| format!("{name} with {}", configs[m].smoother))
        })
        .collect::<Result<_>>()?;

    let reports = a.out.join("reports");
    for r in &results {
        let dir = reports.join(slug(&r.dataset)).join(slug(&r.model));
        fs::create_dir_all(&dir)?;
        for f in &r.folds {
            let doc = serde_json::json!({ "dataset": r.dataset, "model": r.model, "fold": f });
            write_json(&dir.join(format!("fold-{:02}.json", f.fold)), &doc)?;
        }
    }
    write_json(&a.out.join("results.json"), &results)?;

    let mut summary = csv::Writer::from_path(a.out.join("summary.csv"))?;
    summary.write_record(["dataset", "model", "rows", "zero_one", "log_loss", "fit_seconds"])?;
    for r in &results {
        summary.write_record([
            r.dataset.clone(),
            r.model.clone(),
            r.n_rows.to_string(),
            format!("{:.6}", r.zero_one),
            format!("{:.6}", r.log_loss),
            format!("{:.4}", r.fit_seconds),
        ])?;
    }
    summary.flush()?;

    let by_model = |m: &str| -> Vec<EvalResult> { results.iter().filter(|r| r.model == m).cloned().collect() };
    let models: Vec<String> = configs.iter().map(|c| format!("{}/{}", c.structure, c.smoother)).collect();
    let base = by_model(&models[0]);
    let mut table = csv::Writer::from_path(a.out.join("wdl.csv"))?;
    table.write_record(["model", "baseline", "loss", "wins", "draws", "losses"])?;
    for m in &models[1..] {
        for loss in [Loss::ZeroOne, Loss::LogLoss] {
            let rec = wdl(&by_model(m), &base, loss, loss.default_draw_tolerance())?;
            println!("{m} vs {} [{loss}]: {rec}", models[0]);
            table.write_record([
                m.clone(),
                models[0].clone(),
                loss.to_string(),
                rec.wins.to_string(),
                rec.draws.to_string(),
                rec.losses.to_string(),
            ])?;
        }
    }
    table.flush()?;
    println!("{} datasets x {} models; wrote {}", suite.len(), models.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct TimingRow {
    cardinality: usize,
    samples: usize,
    smoother: String,
    variant: FitVariant,
    seconds: f64,
}

fn timing_cmd(a: TimingArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let mut rows = Vec::new();
    for sm in &a.smoothers {
        for &card in &a.cardinality {
            for &n in &a.samples {
                let gen = TimingConfig {
                    cardinality: card,
                    n_samples: n,
                    n_parents: a.parents,
                    seed: a.seed,
                };
                for variant in [FitVariant::Fast, FitVariant::Slow] {
                    let seconds = time_fit(&gen, sm, variant, a.repetitions)?;
                    println!("{sm:>16} card={card:<3} n={n:<8} {variant:?}: {seconds:.4}s");
                    rows.push(TimingRow {
                        cardinality: card,
                        samples: n,
                        smoother: sm.to_string(),
                        variant,
                        seconds,
                    });
                }
            }
        }
    }
    write_json(&a.out.join("timing.json"), &rows)?;
    let mut w = csv::Writer::from_path(a.out.join("timing.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
