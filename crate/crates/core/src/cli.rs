//! Batch experiment runner behind the `diffmap` binary.
//!
//! A run is described by one JSON [`ExperimentConfig`]. Command-line flags
//! and `--set path=value` pairs are applied on top of the file, seeds left
//! unset are filled from the global `seed`, and the fully resolved config
//! is written to `config.echo.json` in the output directory. Feeding that
//! file back with `--threads 1` reproduces every output byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::datasets::{self, CurveKind, DataMatrix, SwissRollParams};
use crate::error::{Error, Result};
use crate::graph::{build_graph, component_labels, GraphMatrices, KernelParams, Neighbors, SquareMatrix};
use crate::io;
use crate::nre::{self, DecoderConfig, TrainReport};
use crate::pca;
use crate::seed;
use crate::spectral::{
    self, decompose_with, embed, embed_all, export_spectrum, spectrum_threshold, DiffusionModel, Embedding,
    EmbeddingSource, Solver, SolverOptions,
};
use crate::stats::pearson;

pub const ECHO_FILE: &str = "config.echo.json";

#[derive(Parser, Debug)]
#[command(name = "diffmap", version, about = "Diffusion map experiments with neural reconstruction error")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate (or load) the dataset and write it as CSV.
    Generate(CommonArgs),
    /// Diffusion map embedding, spectrum and summary.
    Embed(CommonArgs),
    /// Principal components of the dataset.
    Pca(CommonArgs),
    /// NRE of consecutive component sets.
    Nre(CommonArgs),
    /// Greedy search for the most informative components.
    Search(CommonArgs),
    /// Compare diffusion distances with embedding distances.
    DistanceCheck(CommonArgs),
    /// Eigenvalue spectrum and threshold counts.
    Spectrum(CommonArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DumpFormat {
    Csv,
    Binary,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Override a config entry, e.g. `--set kernel.epsilon=5`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Read the dataset from a CSV file instead of a generator.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Kernel width in `exp(-d^2 / epsilon)`.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Nearest neighbors kept per point, or `all`.
    #[arg(long)]
    pub neighbors: Option<String>,
    /// Diffusion time.
    #[arg(long)]
    pub t: Option<u32>,
    /// Number of nontrivial components to compute.
    #[arg(long)]
    pub k: Option<usize>,
    /// Embed each connected component separately instead of failing.
    #[arg(long)]
    pub allow_disconnected: bool,
    /// Dump K, M and Ms as triplets.
    #[arg(long, value_enum)]
    pub dump_matrices: Option<DumpFormat>,
}

fn default_n() -> usize {
    3000
}

fn default_noise() -> f64 {
    0.2
}

fn default_width() -> f64 {
    21.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    SwissRoll {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_noise")]
        noise_sigma: f64,
        #[serde(default = "default_width")]
        width: f64,
        seed: u64,
    },
    Curve {
        curve: CurveKind,
        n: usize,
        #[serde(default)]
        noise_sigma: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
    },
}

/// Preprocessing steps, applied in the listed order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    Standardize,
    MinmaxNormalize,
    ScaleColumn {
        column: usize,
        factor: f64,
    },
    DuplicateColumn {
        column: usize,
        copies: usize,
        noise_sigma: f64,
        seed: u64,
    },
    DiscretizeColumn {
        column: usize,
        levels: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub generator: Generator,
    #[serde(default)]
    pub transforms: Vec<Transform>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingParams {
    pub t: u32,
    /// Nontrivial components to compute.
    pub k: usize,
    /// Components written to the embedding file; all `1..=k` when absent.
    pub components: Option<Vec<usize>>,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        Self {
            t: 1,
            k: 10,
            components: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumParams {
    pub t_list: Vec<u32>,
    pub delta: f64,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self {
            t_list: vec![1, 10, 100],
            delta: 0.1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaParams {
    /// Components kept; all columns when absent.
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NreParams {
    pub source: EmbeddingSource,
    pub k_max: usize,
    pub t_max: usize,
    pub decoder: DecoderConfig,
}

impl Default for NreParams {
    fn default() -> Self {
        Self {
            source: EmbeddingSource::Diffusion,
            k_max: 7,
            t_max: 7,
            decoder: DecoderConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceCheckParams {
    pub sample_pairs: usize,
    pub t_list: Vec<u32>,
    /// Truncation level whose error is compared with the discarded tail.
    pub k: Option<usize>,
    pub seed: u64,
}

impl Default for DistanceCheckParams {
    fn default() -> Self {
        Self {
            sample_pairs: 50,
            t_list: vec![1, 2, 3],
            k: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputParams {
    pub allow_disconnected: bool,
    pub dump_matrices: Option<DumpFormat>,
}

fn default_kernel() -> KernelParams {
    KernelParams::new(5.0, Neighbors::All, 0.0)
}

fn default_dataset() -> DatasetSpec {
    DatasetSpec {
        generator: Generator::SwissRoll {
            n: default_n(),
            noise_sigma: default_noise(),
            width: default_width(),
            seed: 0,
        },
        transforms: Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Fills every seed the config leaves unset.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dataset")]
    pub dataset: DatasetSpec,
    #[serde(default = "default_kernel")]
    pub kernel: KernelParams,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub embedding: EmbeddingParams,
    #[serde(default)]
    pub spectrum: SpectrumParams,
    #[serde(default)]
    pub pca: PcaParams,
    #[serde(default)]
    pub nre: NreParams,
    #[serde(default)]
    pub distance_check: DistanceCheckParams,
    #[serde(default)]
    pub output: OutputParams,
}

impl ExperimentConfig {
    /// Parse a config, filling unset seeds from the global one.
    pub fn from_value(mut value: Value) -> Result<Self> {
        if !value.is_object() {
            return Err(Error::Format("config must be a JSON object".into()));
        }
        fill_seeds(&mut value);
        Ok(serde_json::from_value(value)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?)
    }
}

fn set_if_absent(obj: &mut Map<String, Value>, key: &str, v: u64) {
    obj.entry(key.to_string()).or_insert(json!(v));
}

fn object_at<'a>(root: &'a mut Value, path: &[&str]) -> &'a mut Map<String, Value> {
    let mut cur = root;
    for key in path {
        let obj = cur.as_object_mut().expect("object checked by caller");
        let slot = obj.entry(key.to_string()).or_insert_with(|| json!({}));
        if !slot.is_object() {
            *slot = json!({});
        }
        cur = slot;
    }
    cur.as_object_mut().expect("just made an object")
}

fn fill_seeds(value: &mut Value) {
    let global = value.get("seed").and_then(Value::as_u64).unwrap_or(0);
    let has_dataset = value.get("dataset").is_some_and(Value::is_object);
    if !has_dataset {
        value["dataset"] = serde_json::to_value(default_dataset()).expect("serializable");
        value["dataset"]["generator"]["seed"] = json!(global);
    }
    let dataset = object_at(value, &["dataset"]);
    if let Some(gen) = dataset.get_mut("generator").and_then(Value::as_object_mut) {
        if gen.get("kind").and_then(Value::as_str) != Some("csv") {
            set_if_absent(gen, "seed", global);
        }
    }
    if let Some(list) = dataset.get_mut("transforms").and_then(Value::as_array_mut) {
        for t in list.iter_mut().filter_map(Value::as_object_mut) {
            if t.get("op").and_then(Value::as_str) == Some("duplicate_column") {
                set_if_absent(t, "seed", global);
            }
        }
    }
    set_if_absent(object_at(value, &["nre", "decoder"]), "seed", global);
    set_if_absent(object_at(value, &["distance_check"]), "seed", global);
}

fn parse_override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Apply `a.b.c=value`; the value is JSON when it parses, a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::param(format!("override `{assignment}` is not of the form path=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::param(format!("bad override path `{path}`")));
    }
    if !root.is_object() {
        return Err(Error::Format("config must be a JSON object".into()));
    }
    let (last, parents) = keys.split_last().expect("nonempty");
    object_at(root, parents).insert(last.to_string(), parse_override_value(raw.trim()));
    Ok(())
}

/// Merge the config file, direct flags and `--set` pairs, in that order.
pub fn resolve_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut value: Value = match &args.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => json!({}),
    };
    if !value.is_object() {
        return Err(Error::Format("config must be a JSON object".into()));
    }
    let mut sets: Vec<String> = Vec::new();
    if let Some(s) = args.seed {
        sets.push(format!("seed={s}"));
    }
    if let Some(p) = &args.input {
        value["dataset"] = json!({ "generator": { "kind": "csv", "path": p } });
    }
    if let Some(e) = args.epsilon {
        sets.push(format!("kernel.epsilon={e:e}"));
    }
    if let Some(a) = args.alpha {
        sets.push(format!("kernel.alpha={a:e}"));
    }
    if let Some(nb) = &args.neighbors {
        sets.push(format!("kernel.n_neighbors={nb}"));
    }
    if let Some(t) = args.t {
        sets.push(format!("embedding.t={t}"));
    }
    if let Some(k) = args.k {
        sets.push(format!("embedding.k={k}"));
    }
    if args.allow_disconnected {
        sets.push("output.allow_disconnected=true".into());
    }
    if let Some(f) = args.dump_matrices {
        let name = match f {
            DumpFormat::Csv => "csv",
            DumpFormat::Binary => "binary",
        };
        sets.push(format!("output.dump_matrices={name}"));
    }
    sets.extend(args.set.iter().cloned());
    // Overrides patch the default generator when the file names none.
    let mut generator = serde_json::to_value(default_dataset().generator).expect("serializable");
    generator.as_object_mut().expect("object").remove("seed");
    let dataset = object_at(&mut value, &["dataset"]);
    if !dataset.get("generator").is_some_and(Value::is_object) {
        dataset.insert("generator".into(), generator);
    }
    let root = value.as_object_mut().expect("checked above");
    if !root.get("kernel").is_some_and(Value::is_object) {
        root.insert("kernel".into(), serde_json::to_value(default_kernel()).expect("serializable"));
    }
    for s in &sets {
        apply_override(&mut value, s)?;
    }
    ExperimentConfig::from_value(value)
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<DataMatrix> {
    let mut x = match &spec.generator {
        Generator::SwissRoll {
            n,
            noise_sigma,
            width,
            seed,
        } => datasets::make_swiss_roll(SwissRollParams {
            n: *n,
            noise_sigma: *noise_sigma,
            width: *width,
            seed: *seed,
        })?,
        Generator::Curve {
            curve,
            n,
            noise_sigma,
            seed,
        } => datasets::make_curve_1d(*curve, *n, *noise_sigma, *seed)?,
        Generator::Csv { path } => io::read_data_matrix(path)?,
    };
    for t in &spec.transforms {
        x = match t {
            Transform::Standardize => datasets::standardize(&x)?,
            Transform::MinmaxNormalize => datasets::minmax_normalize(&x)?,
            Transform::ScaleColumn { column, factor } => datasets::scale_column(&x, *column, *factor)?,
            Transform::DuplicateColumn {
                column,
                copies,
                noise_sigma,
                seed,
            } => datasets::duplicate_column(&x, *column, *copies, *noise_sigma, *seed)?,
            Transform::DiscretizeColumn { column, levels } => datasets::discretize_column(&x, *column, levels)?,
        };
    }
    Ok(x)
}

fn solver_options(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions {
        solver: cfg.solver,
        ..SolverOptions::default()
    }
}

fn dump_matrices(cfg: &ExperimentConfig, graph: &GraphMatrices, out: &Path) -> Result<()> {
    let Some(format) = cfg.output.dump_matrices else {
        return Ok(());
    };
    let mats: [(&str, &SquareMatrix); 3] = [("K", &graph.k), ("M", &graph.m), ("Ms", &graph.ms)];
    for (name, m) in mats {
        match format {
            DumpFormat::Csv => io::write_triplets_csv(&out.join(format!("{name}.csv")), m)?,
            DumpFormat::Binary => io::write_triplets_binary(&out.join(format!("{name}.bin")), m)?,
        }
    }
    Ok(())
}

/// Connected graph and its decomposition; disconnected graphs are an error.
fn connected_model(cfg: &ExperimentConfig, x: &DataMatrix, k: usize, out: &Path) -> Result<(GraphMatrices, DiffusionModel)> {
    let graph = build_graph(x, &cfg.kernel)?;
    dump_matrices(cfg, &graph, out)?;
    graph.ensure_connected()?;
    let mut model = decompose_with(&graph.ms, &graph.d_tilde, k, &solver_options(cfg))?;
    model.params = Some(cfg.kernel);
    Ok((graph, model))
}

fn column(m: &DMatrix<f64>, c: usize) -> Vec<f64> {
    m.column(c).iter().copied().collect()
}

/// Largest absolute correlation between `psi` and any principal component.
pub fn pca_similarity(x: &DataMatrix, psi: &[f64]) -> Result<f64> {
    let model = pca::pca_fit(x, x.ncols())?;
    let scores = pca::pca_transform(&model, x)?;
    Ok((0..scores.coords.ncols())
        .map(|c| pearson(psi, &column(&scores.coords, c)).abs())
        .fold(0.0, f64::max))
}

#[derive(Serialize)]
struct ThresholdRow {
    t: u32,
    count: usize,
}

fn thresholds(model: &DiffusionModel, params: &SpectrumParams) -> Result<Vec<ThresholdRow>> {
    params
        .t_list
        .iter()
        .map(|&t| {
            Ok(ThresholdRow {
                t,
                count: spectrum_threshold(model, params.delta, t)?,
            })
        })
        .collect()
}

pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let x = load_dataset(&cfg.dataset)?;
    io::write_data_matrix(&out.join("dataset.csv"), &x)
}

pub fn cmd_embed(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let x = load_dataset(&cfg.dataset)?;
    let k = cfg.embedding.k;
    let graph = build_graph(&x, &cfg.kernel)?;
    dump_matrices(cfg, &graph, out)?;
    if graph.components > 1 {
        if !cfg.output.allow_disconnected {
            return Err(Error::Disconnected {
                components: graph.components,
            });
        }
        return embed_components(cfg, &x, &graph, out);
    }
    let mut model = decompose_with(&graph.ms, &graph.d_tilde, k, &solver_options(cfg))?;
    model.params = Some(cfg.kernel);
    let comps = cfg
        .embedding
        .components
        .clone()
        .unwrap_or_else(|| (1..=model.k_max()).collect());
    let emb = embed(&model, cfg.embedding.t, &comps)?;
    io::write_embedding(&out.join("embedding.csv"), &emb, x.intrinsic())?;
    io::write_spectrum(&out.join("spectrum.csv"), &export_spectrum(&model, &cfg.spectrum.t_list))?;

    let similarity = if model.k_max() >= 1 {
        Some(pca_similarity(&x, &column(&model.psi, 1))?)
    } else {
        None
    };
    let summary = json!({
        "n": x.nrows(),
        "p": x.ncols(),
        "k_max": model.k_max(),
        "t": cfg.embedding.t,
        "graph_components": graph.components,
        "nnz": graph.k.nnz(),
        "eigenvalues": model.eigenvalues,
        "eigen_residuals": model.residuals,
        "negative_eigenvalues": model.negative_eigenvalues(),
        "spectrum_threshold": { "delta": cfg.spectrum.delta, "counts": thresholds(&model, &cfg.spectrum)? },
        "pca_similarity": similarity,
    });
    io::write_json(&out.join("summary.json"), &summary)
}

/// One embedding file per connected component of at least two points.
fn embed_components(cfg: &ExperimentConfig, x: &DataMatrix, graph: &GraphMatrices, out: &Path) -> Result<()> {
    let labels = component_labels(&graph.k);
    let count = graph.components;
    log::warn!("graph has {count} connected components; embedding each separately");
    let mut parts = Vec::new();
    for c in 0..count {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if rows.len() < 2 {
            log::warn!("component {c} holds a single point ({}); skipped", rows[0]);
            parts.push(json!({ "component": c, "size": rows.len(), "rows": rows, "skipped": true }));
            continue;
        }
        let sub = x.select_rows(&rows)?;
        let mut params = cfg.kernel;
        if let Neighbors::Count(nn) = params.n_neighbors {
            if nn > rows.len() {
                params.n_neighbors = Neighbors::All;
            }
        }
        let k = cfg.embedding.k.min(rows.len() - 1);
        let sub_graph = build_graph(&sub, &params)?;
        let mut model = decompose_with(&sub_graph.ms, &sub_graph.d_tilde, k, &solver_options(cfg))?;
        model.params = Some(params);
        let emb = embed_all(&model, cfg.embedding.t)?;
        io::write_embedding_rows(
            &out.join(format!("embedding_component_{c}.csv")),
            &emb,
            sub.intrinsic(),
            &rows,
        )?;
        parts.push(json!({
            "component": c,
            "size": rows.len(),
            "k_max": model.k_max(),
            "eigenvalues": model.eigenvalues,
            "skipped": false,
        }));
    }
    let summary = json!({
        "n": x.nrows(),
        "p": x.ncols(),
        "t": cfg.embedding.t,
        "graph_components": count,
        "components": parts,
    });
    io::write_json(&out.join("summary.json"), &summary)
}

pub fn cmd_spectrum(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let x = load_dataset(&cfg.dataset)?;
    let (_, model) = connected_model(cfg, &x, cfg.embedding.k, out)?;
    io::write_spectrum(&out.join("spectrum.csv"), &export_spectrum(&model, &cfg.spectrum.t_list))?;
    let report = json!({
        "delta": cfg.spectrum.delta,
        "k_max": model.k_max(),
        "counts": thresholds(&model, &cfg.spectrum)?,
        "negative_eigenvalues": model.negative_eigenvalues(),
    });
    io::write_json(&out.join("thresholds.json"), &report)
}

pub fn cmd_pca(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let x = load_dataset(&cfg.dataset)?;
    let k = cfg.pca.k.unwrap_or(x.ncols());
    let model = pca::pca_fit(&x, k)?;
    let emb = pca::pca_transform(&model, &x)?;
    io::write_embedding(&out.join("pca_embedding.csv"), &emb, x.intrinsic())?;
    let errors = (0..=x.ncols())
        .map(|j| pca::pca_reconstruction_error(&model, j))
        .collect::<Result<Vec<f64>>>()?;
    let components: Vec<Vec<f64>> = (0..model.k()).map(|c| column(&model.components, c)).collect();
    let summary = json!({
        "n": x.nrows(),
        "p": x.ncols(),
        "k": model.k(),
        "mean": model.mean,
        "components": components,
        "explained_variance": model.explained_variance,
        "all_variances": model.all_variances,
        "total_variance": model.total_variance,
        "reconstruction_error": errors,
    });
    io::write_json(&out.join("pca_summary.json"), &summary)
}

/// Embedding the decoder reads from, with components `1..=k_max`.
fn nre_embedding(cfg: &ExperimentConfig, x: &DataMatrix, out: &Path) -> Result<Embedding> {
    let k_max = cfg.nre.k_max;
    match cfg.nre.source {
        EmbeddingSource::Diffusion => {
            let (_, model) = connected_model(cfg, x, k_max, out)?;
            embed_all(&model, cfg.embedding.t)
        }
        EmbeddingSource::Pca => {
            let model = pca::pca_fit(x, k_max)?;
            pca::pca_transform(&model, x)
        }
    }
}

#[derive(Serialize)]
struct ReportEntry<'a> {
    components: &'a [usize],
    nre: f64,
    report: &'a TrainReport,
}

pub fn cmd_nre(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let x = load_dataset(&cfg.dataset)?;
    let emb = nre_embedding(cfg, &x, out)?;
    let baseline = nre::nre(&emb, &x, &[], &cfg.nre.decoder)?;
    let curve = nre::nre_curve_consecutive(&emb, &x, cfg.nre.k_max, &cfg.nre.decoder)?;
    io::write_curve(&out.join("nre_curve.csv"), Some(baseline.epsilon_k_normalized), &curve)?;
    let mut entries = vec![ReportEntry {
        components: &[],
        nre: baseline.epsilon_k_normalized,
        report: &baseline,
    }];
    entries.extend(curve.entries.iter().map(|e| ReportEntry {
        components: &e.components,
        nre: e.nre,
        report: &e.report,
    }));
    io::write_json(
        &out.join("nre_report.json"),
        &json!({ "source": cfg.nre.source, "entries": entries }),
    )
}

pub fn cmd_search(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let x = load_dataset(&cfg.dataset)?;
    let emb = nre_embedding(cfg, &x, out)?;
    let result = nre::greedy_search(&emb, &x, cfg.nre.k_max, cfg.nre.t_max, &cfg.nre.decoder)?;
    io::write_curve(&out.join("search_curve.csv"), None, &result.curve)?;
    io::write_rounds(&out.join("search_rounds.csv"), &result.rounds)?;
    let entries: Vec<ReportEntry> = result
        .curve
        .entries
        .iter()
        .map(|e| ReportEntry {
            components: &e.components,
            nre: e.nre,
            report: &e.report,
        })
        .collect();
    io::write_json(
        &out.join("search_report.json"),
        &json!({
            "source": cfg.nre.source,
            "order": result.order,
            "rounds": result.rounds,
            "entries": entries,
        }),
    )
}

#[derive(Serialize)]
struct PairCheck {
    i: usize,
    j: usize,
    t: u32,
    diffusion_distance: f64,
    embedding_distance: f64,
    relative_error: f64,
    truncated_distance: Option<f64>,
    tail_sum: Option<f64>,
}

fn sq_embedding_distance(model: &DiffusionModel, t: u32, i: usize, j: usize, comps: std::ops::Range<usize>) -> f64 {
    comps
        .map(|c| {
            let d = model.psi[(i, c)] - model.psi[(j, c)];
            model.eigenvalues[c].powi(2 * t as i32) * d * d
        })
        .sum()
}

pub fn cmd_distance_check(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let x = load_dataset(&cfg.dataset)?;
    let n = x.nrows();
    let params = &cfg.distance_check;
    if let Some(k) = params.k {
        if k == 0 || k >= n {
            return Err(Error::param(format!("truncation k must lie in 1..{n}, got {k}")));
        }
    }
    if n > spectral::FULL_DECOMPOSITION_LIMIT {
        log::warn!("full decomposition of {n} points will be slow");
    }
    let full = ExperimentConfig {
        solver: Solver::Dense,
        ..cfg.clone()
    };
    let (graph, model) = connected_model(&full, &x, n - 1, out)?;
    let phi0 = graph.stationary();

    let mut rng = seed::rng(params.seed);
    let mut pairs = vec![(0usize, 0usize)];
    while pairs.len() < params.sample_pairs.max(1) {
        pairs.push((rng.random_range(0..n), rng.random_range(0..n)));
    }

    let mut checks = Vec::new();
    let mut max_rel = 0.0f64;
    let mut max_tail_gap = 0.0f64;
    for &t in &params.t_list {
        for &(i, j) in &pairs {
            let oracle = spectral::diffusion_distance(&graph.m, t, i, j, &phi0)?;
            let emb = sq_embedding_distance(&model, t, i, j, 1..n);
            let rel = if oracle > 0.0 {
                (oracle - emb).abs() / oracle
            } else {
                emb.abs()
            };
            max_rel = max_rel.max(rel);
            let (truncated, tail) = match params.k {
                Some(k) => {
                    let tr = sq_embedding_distance(&model, t, i, j, 1..k + 1);
                    let tail = sq_embedding_distance(&model, t, i, j, k + 1..n);
                    let scale = oracle.max(f64::MIN_POSITIVE);
                    max_tail_gap = max_tail_gap.max(((oracle - tr) - tail).abs() / scale);
                    (Some(tr), Some(tail))
                }
                None => (None, None),
            };
            checks.push(PairCheck {
                i,
                j,
                t,
                diffusion_distance: oracle,
                embedding_distance: emb,
                relative_error: rel,
                truncated_distance: truncated,
                tail_sum: tail,
            });
        }
    }
    let report = json!({
        "n": n,
        "components_used": n - 1,
        "t_list": params.t_list,
        "truncation_k": params.k,
        "max_relative_error": max_rel,
        "max_relative_tail_mismatch": params.k.map(|_| max_tail_gap),
        "pairs": checks,
    });
    io::write_json(&out.join("distance_check.json"), &report)
}

/// Resolve the config, write the echo and run one command.
pub fn execute(command: &Command) -> Result<()> {
    let (args, run): (&CommonArgs, fn(&ExperimentConfig, &Path) -> Result<()>) = match command {
        Command::Generate(a) => (a, cmd_generate),
        Command::Embed(a) => (a, cmd_embed),
        Command::Pca(a) => (a, cmd_pca),
        Command::Nre(a) => (a, cmd_nre),
        Command::Search(a) => (a, cmd_search),
        Command::DistanceCheck(a) => (a, cmd_distance_check),
        Command::Spectrum(a) => (a, cmd_spectrum),
    };
    let cfg = resolve_config(args)?;
    fs::create_dir_all(&args.out)?;
    io::write_json(&args.out.join(ECHO_FILE), &cfg)?;
    let threads = args.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::param(format!("cannot start {threads} threads: {e}")))?;
    pool.install(|| run(&cfg, &args.out))
}
