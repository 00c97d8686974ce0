//! `previs`: scripted driver for the deformation preview pipeline.
//!
//! Every subcommand accepts `--config FILE`, a JSON object whose keys are the
//! subcommand's long flag names (`"noise-seed"`, `"batch-size"`, ...). Flags
//! given on the command line override the file. The resolved settings are
//! echoed as a `config:` line so any run can be repeated from its output.
//!
//! Exit codes: 0 success, 2 usage error, 3 runtime failure.

use std::fmt::Display;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use previs_core::ensemble::GeneratorSettings;
use previs_core::pipeline::{
    self, BasisRequest, CompareRequest, DesignSpec, EnsembleRequest, MeshRequest, OptimizerOverrides, TrainRequest,
};
use previs_core::regressors::RegressorKind;
use previs_core::store::{ArtifactStore, ReportRecord};
use previs_core::analysis::ComparisonReport;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "previs", version, about = "Deformation preview pipeline: ensembles, bases, regressors, reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a plate mesh and a parameter ensemble in a store.
    Generate(GenerateArgs),
    /// Fit a PCA basis to a stored ensemble.
    Basis(BasisArgs),
    /// Train a regressor on a stored ensemble.
    Train(TrainArgs),
    /// Compare trained models on a test ensemble and store the report.
    Evaluate(EvaluateArgs),
    /// Write a report's impact fields and summary for plotting.
    Export(ExportArgs),
    /// Run the HTTP service over a store.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct GenerateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// `plate:NXxNY[:WxH]`, sizes in mm [default: plate:40x25].
    #[arg(long)]
    mesh: Option<String>,
    /// `factorial3` or `lhs:N` [default: factorial3].
    #[arg(long)]
    design: Option<String>,
    /// Seeds the LHS design [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Quadratic coupling strength [default: 0].
    #[arg(long)]
    gamma: Option<f64>,
    /// Additive noise level in mm [default: 0].
    #[arg(long)]
    sigma: Option<f64>,
    /// Seeds the generator noise [default: 0].
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Store directory, created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct BasisArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Ensemble artifact id.
    #[arg(long)]
    ensemble: Option<String>,
    /// Retained components [default: 10].
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    ensemble: Option<String>,
    /// `olff` or `gcn`.
    #[arg(long)]
    model: Option<String>,
    /// Weight initialization seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    shuffle_seed: Option<u64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// OLFF hidden width.
    #[arg(long)]
    hidden: Option<usize>,
    /// GCN spectral truncation.
    #[arg(long)]
    mu: Option<usize>,
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    cheb_order: Option<usize>,
    /// GCN fully connected width.
    #[arg(long)]
    fc: Option<usize>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct EvaluateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Comma-separated model ids.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Test ensemble id.
    #[arg(long)]
    test: Option<String>,
    /// Basis id; defaults to the latest basis on the test mesh.
    #[arg(long)]
    basis: Option<String>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ExportArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Report id.
    #[arg(long)]
    report: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ServeArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// 0 picks a free port [default: 8080].
    #[arg(long)]
    port: Option<u16>,
    /// [default: 127.0.0.1]
    #[arg(long)]
    host: Option<String>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<previs_core::PrevisError> for Failure {
    fn from(e: previs_core::PrevisError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage(msg: impl Display) -> Failure {
    Failure::Usage(msg.to_string())
}

fn runtime(msg: impl Display) -> Failure {
    Failure::Runtime(msg.to_string())
}

/// Overlays the flags given on the command line onto the config file.
fn resolve<T: Serialize + DeserializeOwned>(flags: T, config: Option<&Path>) -> CliResult<T> {
    let Some(path) = config else { return Ok(flags) };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let mut merged: Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let Value::Object(map) = &mut merged else {
        return Err(usage(format!("{}: expected a JSON object", path.display())));
    };
    let Value::Object(given) = serde_json::to_value(&flags).map_err(runtime)? else {
        unreachable!("flag structs serialize to objects")
    };
    for (k, v) in given {
        if !v.is_null() {
            map.insert(k, v);
        }
    }
    serde_json::from_value(merged).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| usage(format!("missing required --{flag}")))
}

fn echo_config(command: &str, settings: Value) {
    println!("config: {}", json!({ "command": command, "settings": settings }));
}

fn open_store(path: Option<PathBuf>) -> CliResult<ArtifactStore> {
    Ok(ArtifactStore::open(required(path, "store")?)?)
}

fn generate(args: GenerateArgs) -> CliResult<()> {
    let config = args.config.clone();
    let args = resolve(args, config.as_deref())?;
    let mesh: MeshRequest = args.mesh.as_deref().unwrap_or("plate:40x25").parse().map_err(usage)?;
    let design: DesignSpec = args.design.as_deref().unwrap_or("factorial3").parse().map_err(usage)?;
    let out = required(args.out, "out")?;
    let seed = args.seed.unwrap_or(0);
    let generator = GeneratorSettings {
        gamma: args.gamma.unwrap_or(0.0),
        sigma: args.sigma.unwrap_or(0.0),
        seed: args.noise_seed.unwrap_or(0),
        ..GeneratorSettings::default()
    };
    if !(generator.gamma.is_finite() && generator.sigma.is_finite() && generator.sigma >= 0.0) {
        return Err(usage("--gamma must be finite and --sigma finite and non-negative"));
    }
    echo_config(
        "generate",
        json!({
            "mesh": format!("plate:{}x{}:{}x{}", mesh.nx, mesh.ny, mesh.width, mesh.height),
            "design": design.to_string(),
            "seed": seed,
            "gamma": generator.gamma,
            "sigma": generator.sigma,
            "noise-seed": generator.seed,
            "out": out,
        }),
    );
    let store = ArtifactStore::open(&out)?;
    let mesh_info = pipeline::create_plate_mesh(&store, &mesh)?;
    let ens = pipeline::create_ensemble(
        &store,
        &EnsembleRequest {
            mesh_id: mesh_info.id.clone(),
            design,
            seed,
            generator,
            space: None,
        },
    )?;
    println!("mesh {} ({} vertices)", mesh_info.id, mesh_info.vertex_count);
    println!("ensemble {} ({} samples)", ens.id, ens.samples);
    Ok(())
}

fn basis(args: BasisArgs) -> CliResult<()> {
    let config = args.config.clone();
    let args = resolve(args, config.as_deref())?;
    let ensemble_id = required(args.ensemble, "ensemble")?;
    let k = args.k.unwrap_or(previs_core::reduction::DEFAULT_BASIS_SIZE);
    if k == 0 {
        return Err(usage("--k must be positive"));
    }
    echo_config("basis", json!({ "store": args.store, "ensemble": ensemble_id, "k": k }));
    let store = open_store(args.store)?;
    let info = pipeline::create_basis(&store, &BasisRequest { ensemble_id, k })?;
    println!("basis {} (k = {})", info.id, info.k);
    for (i, (r, c)) in info.explained_variance_ratio.iter().zip(&info.cumulative_variance).enumerate() {
        println!("  PC{:<3} {:>12.6e}  cumulative {:.15}", i + 1, r, c);
    }
    Ok(())
}

fn train(args: TrainArgs) -> CliResult<()> {
    let config = args.config.clone();
    let args = resolve(args, config.as_deref())?;
    let kind: RegressorKind = required(args.model, "model")?.parse().map_err(usage)?;
    let req = TrainRequest {
        ensemble_id: required(args.ensemble, "ensemble")?,
        kind,
        seed: args.seed.unwrap_or(0),
        optimizer: OptimizerOverrides {
            epochs: args.epochs,
            lr: args.lr,
            batch_size: args.batch_size,
            shuffle_seed: args.shuffle_seed,
            momentum: args.momentum,
            eps: args.eps,
        },
        hidden: args.hidden,
        mu: args.mu,
        filters: args.filters,
        cheb_order: args.cheb_order,
        fc: args.fc,
    };
    let opt = req.optimizer_config().map_err(usage)?;
    echo_config(
        "train",
        json!({ "store": args.store, "request": req, "optimizer": opt }),
    );
    let store = open_store(args.store)?;
    let every = (opt.epochs / 20).max(1);
    let id = pipeline::train_model(&store, &req, |p| {
        if p.epoch == 1 || p.epoch % every == 0 || p.epoch == p.epochs {
            println!("epoch {:>6}/{}  loss {:.6e}", p.epoch, p.epochs, p.loss);
        }
    })?;
    println!("model {id}");
    Ok(())
}

fn print_table(report: &ComparisonReport) {
    let relative = report.models.first().is_some_and(|m| m.relative);
    println!(
        "{} errors per parameter (median [q1, q3], whiskers, outliers)",
        if relative { "relative" } else { "absolute" }
    );
    println!(
        "{:<12} {:<14} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8}",
        "parameter", "model", "median", "q1", "q3", "lo", "hi", "outliers"
    );
    for (j, name) in report.parameter_names.iter().enumerate() {
        for m in &report.models {
            let s = &m.parameters[j].stats;
            println!(
                "{:<12} {:<14} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>8}",
                name,
                m.model_id,
                s.median,
                s.q1,
                s.q3,
                s.whisker_lo,
                s.whisker_hi,
                s.outliers.len()
            );
        }
    }
}

fn evaluate(args: EvaluateArgs) -> CliResult<()> {
    let config = args.config.clone();
    let args = resolve(args, config.as_deref())?;
    let req = CompareRequest {
        model_ids: required(args.models, "models")?,
        test_ensemble_id: required(args.test, "test")?,
        basis_id: args.basis,
    };
    if req.model_ids.is_empty() {
        return Err(usage("--models must name at least one model"));
    }
    echo_config("evaluate", json!({ "store": args.store, "request": req }));
    let store = open_store(args.store)?;
    let outcome = pipeline::compare(&store, &req)?;
    print_table(&outcome.comparison);
    println!("report {} (basis {}, {} impact fields)", outcome.report_id, outcome.basis_id, 2 * outcome.impacts.len());
    Ok(())
}

fn export(args: ExportArgs) -> CliResult<()> {
    let config = args.config.clone();
    let args = resolve(args, config.as_deref())?;
    let report_id = required(args.report, "report")?;
    let out = required(args.out, "out")?;
    echo_config("export", json!({ "store": args.store, "report": report_id, "out": out }));
    let store = open_store(args.store)?;
    let report: ReportRecord = store.load(&report_id)?;
    let basis_meta = store.manifest(&report.basis_ref)?.meta;
    std::fs::create_dir_all(out.join("fig1"))?;
    std::fs::create_dir_all(out.join("fig4"))?;

    let mut fig1 = Vec::new();
    let mut fig4 = Vec::new();
    for imp in &report.impacts {
        for (dir, field_id, list) in [("fig1", &imp.whisker_field, &mut fig1), ("fig4", &imp.outlier_field, &mut fig4)] {
            let file = format!("{dir}/{}_{}.bin", imp.model_id, imp.parameter_name);
            std::fs::write(out.join(&file), store.blob_bytes(field_id, "values")?)?;
            list.push(json!({
                "model_id": imp.model_id,
                "parameter": imp.parameter_name,
                "field_id": field_id,
                "meta": store.manifest(field_id)?.meta["impact"],
                "file": file,
            }));
        }
    }
    let summary = json!({
        "report_id": report_id,
        "basis_id": report.basis_ref,
        "test_ensemble_id": report.test_ensemble_ref,
        "mesh_id": basis_meta["mesh_id"],
        "field_format": "little-endian f64, one value per vertex",
        "comparison": report.comparison,
        "fig1": fig1,
        "fig4": fig4,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(runtime)?;
    std::fs::write(out.join("summary.json"), text)?;
    println!("exported {} whisker and {} full-range fields to {}", fig1.len(), fig4.len(), out.display());
    Ok(())
}

fn serve(args: ServeArgs) -> CliResult<()> {
    let config = args.config.clone();
    let args = resolve(args, config.as_deref())?;
    let host = args.host.unwrap_or_else(|| "127.0.0.1".into());
    let port = args.port.unwrap_or(8080);
    let addr: SocketAddr = format!("{host}:{port}").parse().map_err(|e| usage(format!("bad --host: {e}")))?;
    let root = required(args.store, "store")?;
    echo_config("serve", json!({ "store": root, "host": host, "port": port }));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let state = previs_service::AppState::open(root)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let bound = listener.local_addr()?;
        println!("listening on http://{bound}");
        println!("port {}", bound.port());
        std::io::stdout().flush()?;
        previs_service::serve(listener, state).await
    })?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Basis(a) => basis(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Export(a) => export(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `previs help` for usage");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
