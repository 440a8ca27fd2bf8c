//! `srfm`: fit, simulate and study sender/receiver finite-mixture ERGMs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use srfm_ergm::evaluation::{adjusted_rand, adjusted_rand_subset};
use srfm_ergm::mixture::{fit_cem, CemControls, LabelAssignment, RefitPolicy};
use srfm_ergm::report::FitReport;
use srfm_ergm::sampler::{GibbsSampler, Init, SamplerControls};
use srfm_ergm::study::{run_condition, run_size_sweep, StudyCondition, StudyOptions};
use srfm_ergm::terms::CompiledModel;
use srfm_ergm::{CovariateTable, DirectedNetwork, Error, IdBase, ModelSpec, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "srfm", version, about = "Sender/receiver finite-mixture ERGMs")]
struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a homogeneous or mixture ERGM and write a JSON report.
    Fit(FitArgs),
    /// Draw networks from a model with fixed parameters.
    Simulate(SimulateArgs),
    /// Run a simulation-study condition or a sample-size sweep.
    Study(StudyArgs),
    /// Adjusted Rand index between two label files.
    Ari(AriArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Refit {
    Auto,
    Always,
    Never,
}

impl From<Refit> for RefitPolicy {
    fn from(r: Refit) -> Self {
        match r {
            Refit::Auto => RefitPolicy::Auto,
            Refit::Always => RefitPolicy::Always,
            Refit::Never => RefitPolicy::Never,
        }
    }
}

#[derive(Args)]
struct NetworkArgs {
    /// Model specification (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Node covariates (CSV with a header row, one row per node).
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Number of nodes; required without a covariate file.
    #[arg(long)]
    n_nodes: Option<usize>,
    /// Node ids in edge lists start at 1.
    #[arg(long)]
    one_based: bool,
}

impl NetworkArgs {
    fn base(&self) -> IdBase {
        if self.one_based {
            IdBase::One
        } else {
            IdBase::Zero
        }
    }

    fn load(&self) -> Result<(ModelSpec, CovariateTable)> {
        let spec = ModelSpec::load(&self.model).with_context(|| format!("reading model {}", self.model.display()))?;
        let cov = match &self.covariates {
            Some(path) => {
                let schema = spec.covariate_schema()?;
                CovariateTable::load(path, &schema, self.n_nodes)
                    .with_context(|| format!("reading covariates {}", path.display()))?
            }
            None => {
                let n = self
                    .n_nodes
                    .context("--n-nodes is required when no covariate file is given")?;
                CovariateTable::empty(n)
            }
        };
        spec.validate_against(&cov)?;
        Ok((spec, cov))
    }
}

#[derive(Args)]
struct FitArgs {
    /// Edge list CSV (`from,to`).
    #[arg(long)]
    network: PathBuf,
    #[command(flatten)]
    input: NetworkArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random starts for mixture fits.
    #[arg(long, default_value_t = 20)]
    starts: usize,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Monte-Carlo MLE refinement of the selected solution.
    #[arg(long, value_enum, default_value_t = Refit::Auto)]
    refit: Refit,
    /// Include the posterior membership matrix in the report.
    #[arg(long)]
    posterior: bool,
    /// Report path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    input: NetworkArgs,
    /// Parameters in report order, comma separated.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',', conflicts_with = "theta_file")]
    theta: Option<Vec<f64>>,
    /// JSON array of parameters, or a fit report.
    #[arg(long)]
    theta_file: Option<PathBuf>,
    /// CSV with a `label` column giving each node's class (mixture models).
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    draws: usize,
    /// Toggles before the first draw; defaults to 20·N(N−1).
    #[arg(long)]
    burn_in: Option<u64>,
    /// Toggles between draws; defaults to N(N−1).
    #[arg(long)]
    thin: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for `draw_XXXX.csv` and `stats.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    /// Built-in condition: 1, 1+, 2, 2+, 3, 3+, 4, 4+ or 5.
    #[arg(long, required_unless_present = "condition_file")]
    condition: Option<String>,
    /// Condition definition (JSON).
    #[arg(long, conflicts_with = "condition")]
    condition_file: Option<PathBuf>,
    /// Replications (per size with --sweep).
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 20)]
    starts: usize,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Overrides the condition's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Refit::Never)]
    refit: Refit,
    /// Run a sample-size sweep instead of a single condition.
    #[arg(long)]
    sweep: bool,
    #[arg(long, value_delimiter = ',', default_value = "75,151,300")]
    sizes: Vec<usize>,
    #[arg(long, default_value = "study_out")]
    out: PathBuf,
}

#[derive(Args)]
struct AriArgs {
    /// CSV with a `label` column.
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Column of `a` (or `b`) selecting items with a value above 0.
    #[arg(long)]
    mask: Option<String>,
}

/// A failure with a specific exit status.
struct Exit(u8, anyhow::Error);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Study(a) => cmd_study(a).map(|()| 0).map_err(|e| Exit(1, e)),
        Command::Ari(a) => cmd_ari(a).map(|()| 0).map_err(|e| Exit(1, e)),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn cmd_fit(args: FitArgs) -> Result<u8, Exit> {
    let fail = |e: anyhow::Error| Exit(1, e);
    let (spec, cov) = args.input.load().map_err(fail)?;
    let net = DirectedNetwork::load_edge_list(&args.network, cov.n_nodes(), args.input.base())
        .with_context(|| format!("reading network {}", args.network.display()))
        .map_err(fail)?;
    let controls = CemControls {
        n_starts: args.starts,
        max_iter: args.max_iter,
        seed: args.seed,
        refit: args.refit.into(),
        ..CemControls::default()
    };
    let fit = fit_cem(&net, &cov, &spec, &controls).map_err(|e| fail(e.into()))?;
    let report = FitReport::new(&spec, &fit, args.posterior);
    let text = report.to_json() + "\n";
    match &args.out {
        Some(path) => write_file(path, text.as_bytes()).map_err(fail)?,
        None => print!("{text}"),
    }
    if report.converged {
        Ok(0)
    } else {
        eprintln!("warning: fit did not converge; report written");
        Ok(2)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_theta(args: &SimulateArgs) -> Result<Vec<f64>> {
    if let Some(t) = &args.theta {
        return Ok(t.clone());
    }
    let path = args.theta_file.as_ref().context("one of --theta or --theta-file is required")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let values = match &value {
        serde_json::Value::Array(_) => value.clone(),
        serde_json::Value::Object(map) if map.contains_key("parameters") => serde_json::Value::Array(
            map["parameters"]
                .as_array()
                .context("`parameters` is not an array")?
                .iter()
                .map(|p| p["estimate"].clone())
                .collect(),
        ),
        _ => bail!("{}: expected a JSON array or a fit report", path.display()),
    };
    Ok(serde_json::from_value(values)?)
}

/// Reads one column of a CSV as strings.
fn read_column(path: &Path, column: &str) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let pos = rdr
        .headers()?
        .iter()
        .position(|h| h == column)
        .with_context(|| format!("{} has no `{column}` column", path.display()))?;
    rdr.records()
        .map(|r| Ok(r?.get(pos).unwrap_or("").to_string()))
        .collect()
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    read_column(path, "label")?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.parse::<usize>()
                .with_context(|| format!("{} row {}: label `{v}` is not a class index", path.display(), i + 1))
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8, Exit> {
    let fail = |e: anyhow::Error| Exit(1, e);
    if args.draws == 0 {
        return Err(fail(anyhow::anyhow!("--draws must be at least 1")));
    }
    let (spec, cov) = args.input.load().map_err(fail)?;
    let theta = read_theta(&args).map_err(fail)?;
    let n = cov.n_nodes();
    let labels = match &args.labels {
        Some(path) => Some(
            LabelAssignment::new(read_labels(path).map_err(fail)?, spec.n_classes)
                .map_err(|e| fail(e.into()))?,
        ),
        None => None,
    };
    let sampler = GibbsSampler::new(&spec, &cov, &theta, labels.as_ref()).map_err(|e| fail(e.into()))?;
    let defaults = SamplerControls::defaults(n, args.draws, args.seed);
    let controls = SamplerControls {
        burn_in: args.burn_in.unwrap_or(defaults.burn_in),
        thin: args.thin.unwrap_or(defaults.thin),
        ..defaults
    };
    controls.validate().map_err(|e| fail(e.into()))?;
    let model = CompiledModel::new(&spec, &cov).map_err(|e| fail(e.into()))?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(fail)?;
    let stats_path = args.out.join("stats.csv");
    let mut stats = BufWriter::new(
        File::create(&stats_path)
            .with_context(|| format!("writing {}", stats_path.display()))
            .map_err(fail)?,
    );
    let header: Vec<String> = ["draw", "n_edges", "density"]
        .into_iter()
        .map(String::from)
        .chain(spec.term_labels())
        .collect();
    writeln!(stats, "{}", header.join(",")).map_err(|e| fail(e.into()))?;
    let base = args.input.base();
    let out = &args.out;
    let run = sampler.run(Init::Empty, &controls, |k, state| {
        let net = state.to_network();
        let path = out.join(format!("draw_{k:04}.csv"));
        net.save_edge_list(&path, base)?;
        let s = model.sufficient_stats(&net)?;
        let row: Vec<String> = [k.to_string(), net.n_edges().to_string(), net.density().to_string()]
            .into_iter()
            .chain(s.iter().map(f64::to_string))
            .collect();
        writeln!(stats, "{}", row.join(",")).map_err(|e| Error::Io {
            path: stats_path.clone(),
            source: e,
        })?;
        stats.flush().map_err(|e| Error::Io {
            path: stats_path.clone(),
            source: e,
        })
    });
    let _ = stats.flush();
    match run {
        Ok(()) => Ok(0),
        Err(e @ Error::Degenerate(_)) => Err(Exit(3, anyhow::Error::new(e).context("simulation aborted; draws so far were kept"))),
        Err(e) => Err(fail(e.into())),
    }
}

fn cmd_study(args: StudyArgs) -> Result<()> {
    let cond = match (&args.condition, &args.condition_file) {
        (Some(name), _) => StudyCondition::builtin(name)?,
        (None, Some(path)) => StudyCondition::load(path).with_context(|| format!("reading {}", path.display()))?,
        (None, None) => bail!("one of --condition or --condition-file is required"),
    };
    let options = StudyOptions {
        n_replications: args.reps,
        seed: args.seed,
        n_starts: args.starts,
        max_iter: args.max_iter,
        refit: args.refit.into(),
        ..StudyOptions::default()
    };
    ensure!(options.n_starts >= 1, "--starts must be at least 1");
    if args.sweep {
        let reps = args.reps.unwrap_or(10);
        let sweep = run_size_sweep(&cond, &args.sizes, reps, &options, Some(&args.out))?;
        println!("size sweep for condition {} ({reps} replications per size)", cond.name);
        for &n in &args.sizes {
            match sweep.median_ari(n) {
                Some(m) => println!("  N = {n:<5} median ARI {m:.3}"),
                None => println!("  N = {n:<5} no successful fits"),
            }
        }
        return Ok(());
    }
    let result = run_condition(&cond, &options, Some(&args.out))?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "condition": result.condition.name,
        "seed": result.condition.seed,
        "n_replications": result.condition.n_replications,
        "n_nodes": result.condition.n_nodes,
        "ari": cond.fits.iter().filter_map(|f| result.ari_summary(&f.name)).collect::<Vec<_>>(),
        "failures": result.failures().map(|(r, msg)| json!({
            "replication": r.replication,
            "fit": r.fit,
            "message": msg,
        })).collect::<Vec<_>>(),
    });
    let path = args.out.join(format!("summary_{}.json", result.condition.name));
    write_file(&path, (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
    print!("{}", result.summary());
    Ok(())
}

fn cmd_ari(args: AriArgs) -> Result<()> {
    let a = read_labels(&args.a)?;
    let b = read_labels(&args.b)?;
    ensure!(
        a.len() == b.len(),
        "label files differ in length ({} vs {})",
        a.len(),
        b.len()
    );
    println!("ari\t{}", adjusted_rand(&a, &b)?);
    if let Some(col) = &args.mask {
        let values = read_column(&args.a, col).or_else(|_| read_column(&args.b, col))?;
        ensure!(values.len() == a.len(), "mask column `{col}` has {} rows, expected {}", values.len(), a.len());
        let mask: Vec<bool> = values
            .iter()
            .map(|v| match v.parse::<f64>() {
                Ok(x) => Ok(x > 0.0),
                Err(_) => match v.to_ascii_lowercase().as_str() {
                    "true" => Ok(true),
                    "false" => Ok(false),
                    _ => bail!("mask value `{v}` is neither numeric nor boolean"),
                },
            })
            .collect::<Result<_>>()?;
        println!("ari_subset\t{}", adjusted_rand_subset(&a, &b, &mask)?);
    }
    Ok(())
}
