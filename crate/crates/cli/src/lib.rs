//! Command-line surface: `predict`, `bench`, `eval`, `gen` and `inspect`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use hotspot_core::baselines::DEFAULT_FUZZIFIER;
use hotspot_core::evaluation::{
    self, generate_synthetic, predict_with, EvalConfig, HoldoutSpec, SyntheticSpec,
    DEFAULT_REGION_BINS,
};
use hotspot_core::io::{self, LoadOptions, OutputFormat};
use hotspot_core::partition::{partition_cloud, DEFAULT_LAMBDA};
use hotspot_core::voxel_grid::DEFAULT_BINS;
use hotspot_core::{
    CenterAdjust, Error, FeatureSpec, KMeansParams, Method, PointCloud, PredictConfig,
};

const DEFAULTS_HELP: &str = "\
Defaults: bins=16, epsilon=1.5/bins, lambda=0.1, region-bins=16, fuzzifier=2,
tol=1e-6, max-iter=100, k=10, seed=0, method=ours, center-adjust=paper.

Exit status: 0 ok, 1 usage or configuration error, 2 data error,
3 internal invariant violation.";

#[derive(Debug, Parser)]
#[command(name = "hotspot", version, about = "Voxel community hotspot prediction", after_help = DEFAULTS_HELP)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Predict hotspots for a CSV dataset.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// json, geojson or table.
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Time repeated prediction runs and trim outliers by the IQR rule.
    Bench {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 110)]
        trials: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Holdout recovery comparison across methods.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated list of ours, kmeans, cmeans.
        #[arg(long, default_value = "ours,kmeans,cmeans")]
        methods: String,
        /// Number of points removed before prediction.
        #[arg(long, default_value_t = 66)]
        remove: usize,
        /// Timed runs per method (100 or more uses the trimmed protocol).
        #[arg(long, default_value_t = 1)]
        timing_trials: usize,
        /// table or json.
        #[arg(long, default_value = "table")]
        format: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write a synthetic Gaussian-blob dataset as CSV.
    Gen {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write the blob centers as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Dump voxel occupancy and community diagnostics.
    Inspect {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Comma-separated feature columns.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    #[arg(long)]
    id_col: Option<String>,
    #[arg(long)]
    lat_col: Option<String>,
    #[arg(long)]
    lon_col: Option<String>,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    dims: usize,
    #[arg(long, default_value_t = 10)]
    hotspots: usize,
    #[arg(long, default_value_t = 0.02)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

#[derive(Debug, Args, Default)]
struct RunArgs {
    /// TOML file with run settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    bins: Option<u32>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    region_bins: Option<u32>,
    #[arg(long)]
    fuzzifier: Option<f64>,
    /// paper or convex.
    #[arg(long)]
    center_adjust: Option<String>,
}

/// Settings accepted in a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    method: Option<String>,
    k: Option<usize>,
    bins: Option<u32>,
    epsilon: Option<f64>,
    lambda: Option<f64>,
    seed: Option<u64>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    region_bins: Option<u32>,
    fuzzifier: Option<f64>,
    center_adjust: Option<String>,
    features: Option<Vec<String>>,
}

/// Fully resolved settings, echoed into every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub method: Method,
    pub k_global: usize,
    pub bins: u32,
    pub epsilon: f64,
    pub lambda: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub region_bins: u32,
    pub fuzzifier: f64,
    pub center_adjust: CenterAdjust,
    pub feature_spec: Option<FeatureSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

impl RunConfig {
    fn predict_config(&self) -> PredictConfig {
        PredictConfig {
            bins: self.bins,
            epsilon: Some(self.epsilon),
            lambda: self.lambda,
            k_global: self.k_global,
            seed: self.seed,
            kmeans: KMeansParams {
                max_iter: self.max_iter,
                tol: self.tol,
            },
            center_adjust: self.center_adjust,
        }
    }

    fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.k_global == 0 {
            return bad("k must be at least 1");
        }
        if self.bins == 0 || self.region_bins == 0 {
            return bad("bins and region-bins must be at least 1");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(self.fuzzifier.is_finite() && self.fuzzifier > 1.0) {
            return bad("fuzzifier must be greater than 1");
        }
        self.predict_config().kmeans.validate()
    }
}

fn resolve(run: &RunArgs, data: Option<&DataArgs>) -> Result<RunConfig, Error> {
    let file: ConfigFile = match &run.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    let method = run
        .method
        .clone()
        .or(file.method)
        .unwrap_or_else(|| "ours".into());
    let adjust = run
        .center_adjust
        .clone()
        .or(file.center_adjust)
        .unwrap_or_else(|| "paper".into());
    let bins = run.bins.or(file.bins).unwrap_or(DEFAULT_BINS);
    let features = data.and_then(|d| d.features.clone()).or(file.features);
    let feature_spec = features.map(|cols| {
        let mut spec = FeatureSpec::new(cols);
        if let Some(d) = data {
            if let Some(id) = &d.id_col {
                spec.id_column = Some(id.clone());
            }
            if let Some(lat) = &d.lat_col {
                spec.lat_column = lat.clone();
            }
            if let Some(lon) = &d.lon_col {
                spec.lon_column = lon.clone();
            }
        }
        spec
    });
    let cfg = RunConfig {
        method: method.parse()?,
        k_global: run.k.or(file.k).unwrap_or(10),
        bins,
        epsilon: run
            .epsilon
            .or(file.epsilon)
            .unwrap_or(1.5 / bins.max(1) as f64),
        lambda: run.lambda.or(file.lambda).unwrap_or(DEFAULT_LAMBDA),
        seed: run.seed.or(file.seed).unwrap_or(0),
        max_iter: run.max_iter.or(file.max_iter).unwrap_or(100),
        tol: run.tol.or(file.tol).unwrap_or(1e-6),
        region_bins: run
            .region_bins
            .or(file.region_bins)
            .unwrap_or(DEFAULT_REGION_BINS),
        fuzzifier: run
            .fuzzifier
            .or(file.fuzzifier)
            .unwrap_or(DEFAULT_FUZZIFIER),
        center_adjust: adjust.parse()?,
        feature_spec,
        input: data
            .and_then(|d| d.input.as_ref())
            .map(|p| p.display().to_string()),
        synthetic: None,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load(data: &DataArgs, cfg: &RunConfig) -> Result<PointCloud, Error> {
    let path = data
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("--input is required".into()))?;
    let spec = cfg
        .feature_spec
        .as_ref()
        .ok_or_else(|| Error::Config("--features is required with --input".into()))?;
    let report = io::load_csv(
        path,
        spec,
        LoadOptions {
            lenient: data.lenient,
        },
    )?;
    log::info!(
        "loaded {} of {} rows from {}",
        report.cloud.len(),
        report.rows_read,
        path.display()
    );
    Ok(report.cloud)
}

/// Uses `--input` when given, otherwise a synthetic dataset seeded by `--seed`.
fn load_or_generate(
    data: &DataArgs,
    synth: &SynthArgs,
    cfg: &mut RunConfig,
) -> Result<PointCloud, Error> {
    if data.input.is_some() {
        return load(data, cfg);
    }
    let spec = SyntheticSpec {
        n_points: synth.n,
        dims: synth.dims,
        n_hotspots: synth.hotspots,
        spread_sigma: synth.sigma,
        noise_fraction: synth.noise,
        seed: cfg.seed,
    };
    cfg.synthetic = Some(spec);
    Ok(generate_synthetic(&spec)?.cloud)
}

fn write_out(output: &Option<PathBuf>, text: &str, out: &mut dyn Write) -> Result<(), Error> {
    match output {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    fs::write(path, bytes).map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}

fn parse_methods(list: &str) -> Result<Vec<Method>, Error> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Runs one command, writing results to `out` unless `--output` is given.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), Error> {
    match cli.command {
        Command::Predict {
            data,
            run,
            format,
            output,
        } => {
            let cfg = resolve(&run, Some(&data))?;
            let format: OutputFormat = format.parse()?;
            let cloud = load(&data, &cfg)?;
            let prediction = predict_with(
                cfg.method,
                &cloud,
                &cfg.predict_config(),
                cfg.fuzzifier,
                cfg.k_global,
            )?;
            let text = io::emit_results(&prediction, format, &serde_json::to_value(&cfg)?)?;
            write_out(&output, &text, out)
        }
        Command::Bench {
            data,
            synth,
            run,
            trials,
            output,
        } => {
            let mut cfg = resolve(&run, Some(&data))?;
            let cloud = load_or_generate(&data, &synth, &mut cfg)?;
            let predict = cfg.predict_config();
            let report = evaluation::benchmark(&cfg.method.to_string(), trials, cfg.seed, || {
                predict_with(cfg.method, &cloud, &predict, cfg.fuzzifier, cfg.k_global).map(drop)
            })?;
            let doc = json!({ "config": cfg, "timing": report, "trials": trials });
            write_out(&output, &serde_json::to_string_pretty(&doc)?, out)
        }
        Command::Eval {
            data,
            synth,
            run,
            methods,
            remove,
            timing_trials,
            format,
            output,
        } => {
            let mut cfg = resolve(&run, Some(&data))?;
            let methods = parse_methods(&methods)?;
            let cloud = load_or_generate(&data, &synth, &mut cfg)?;
            let eval_cfg = EvalConfig {
                predict: cfg.predict_config(),
                fuzzifier: cfg.fuzzifier,
                holdout: HoldoutSpec {
                    removal_count: remove,
                    seed: cfg.seed,
                    region_bins: cfg.region_bins,
                },
                timing_trials,
            };
            let report = evaluation::evaluate(&cloud, &methods, &eval_cfg)?;
            let config = json!({ "run": cfg, "eval": eval_cfg });
            let text = match format.as_str() {
                "table" => io::eval_table(&report, &config),
                "json" => {
                    serde_json::to_string_pretty(&json!({ "config": config, "report": report }))?
                }
                other => return Err(Error::Config(format!("unknown eval format {other:?}"))),
            };
            write_out(&output, &text, out)
        }
        Command::Gen {
            synth,
            seed,
            output,
            truth,
        } => {
            let spec = SyntheticSpec {
                n_points: synth.n,
                dims: synth.dims,
                n_hotspots: synth.hotspots,
                spread_sigma: synth.sigma,
                noise_fraction: synth.noise,
                seed,
            };
            let data = generate_synthetic(&spec)?;
            let mut buf = Vec::new();
            io::write_cloud_csv(&data.cloud, &mut buf)?;
            if let Some(path) = truth {
                let doc = json!({ "config": spec, "centers": data.truth });
                write_file(&path, serde_json::to_string_pretty(&doc)?.as_bytes())?;
            }
            match output {
                Some(path) => write_file(&path, &buf),
                None => Ok(out.write_all(&buf)?),
            }
        }
        Command::Inspect { data, run, output } => {
            let cfg = resolve(&run, Some(&data))?;
            let cloud = load(&data, &cfg)?;
            let predict = cfg.predict_config();
            let parts = partition_cloud(&cloud, cfg.bins, predict.community_config()?)?;
            let grid: Vec<_> = parts
                .grid
                .occupancy()
                .into_iter()
                .map(|(index, count)| json!({ "index": index, "count": count }))
                .collect();
            let communities: Vec<_> = parts.communities.iter().map(|c| c.summary()).collect();
            let doc = json!({
                "config": cfg,
                "points": cloud.len(),
                "occupied_voxels": parts.grid.len(),
                "grid": grid,
                "communities": communities,
            });
            write_out(&output, &serde_json::to_string_pretty(&doc)?, out)
        }
    }
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
