use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rbns_core::aggregate::{
    bridge_test, build_triangle, chain_ladder, crm_from_triangles, dcl_from_triangles, mack_se, Triangle,
};
use rbns_core::data::{emit_csv, ingest_csv, read_schema, write_schema, Portfolio, SchemaConfig};
use rbns_core::evaluation::{moving_window_eval, summarize, write_results_csv, EvaluationConfig};
use rbns_core::model::{fit_hrm, model_weights, rbns_reserve, simulate_paths, HierarchicalModel, ModelConfig, Response};
use rbns_core::synthetic::{generate, GeneratorConfig};
use rbns_core::{Error, Result};

use rbns_core::rng::DEFAULT_SEED;

#[derive(Parser, Debug)]
#[command(name = "rbns", version, about = "Individual and aggregate RBNS claims reserving", arg_required_else_help = true)]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Random seed; overrides seeds in configuration files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "rbns-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Long-format claims CSV.
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON; without it the window is inferred from the data.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic portfolio from a generator configuration.
    Generate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit a hierarchical model.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// Model configuration JSON.
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate future development paths of the open claims.
    Simulate {
        #[command(flatten)]
        data: DataArgs,
        /// Fitted model JSON.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
    },
    /// RBNS reserve distribution from a fitted model.
    Reserve {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        /// Development years ahead to include; all when absent.
        #[arg(long)]
        horizon: Option<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.005, 0.05, 0.5, 0.95, 0.995])]
        quantiles: Vec<f64>,
    },
    /// Aggregate the data into incremental runoff triangles.
    Triangle {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Chain-ladder reserve with Mack standard errors.
    Chainladder {
        /// Incremental triangle CSV.
        #[arg(long, conflicts_with = "data")]
        triangle: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// DCL-style reserve from payment-count and size triangles.
    Dcl {
        #[command(flatten)]
        data: DataArgs,
    },
    /// CRM-style reserve with simulated quantiles.
    Crm {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.005, 0.5, 0.995])]
        quantiles: Vec<f64>,
    },
    /// Moving-window out-of-time evaluation.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// Evaluation configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the horizon of the configuration.
        #[arg(long)]
        horizon: Option<u32>,
        /// Overrides the path count of the configuration.
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Likelihood ratio test of covariate effects against the multiplicative model.
    BridgeTest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Fit { .. } => "fit",
            Command::Simulate { .. } => "simulate",
            Command::Reserve { .. } => "reserve",
            Command::Triangle { .. } => "triangle",
            Command::Chainladder { .. } => "chainladder",
            Command::Dcl { .. } => "dcl",
            Command::Crm { .. } => "crm",
            Command::Evaluate { .. } => "evaluate",
            Command::BridgeTest { .. } => "bridge-test",
        }
    }
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    arguments: Vec<String>,
    inputs: Vec<PathBuf>,
    seed: Option<u64>,
    threads: usize,
    outputs: Vec<PathBuf>,
}

struct Run {
    out: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
}

impl Run {
    fn input(&mut self, path: &Path) -> Result<PathBuf> {
        if !path.is_file() {
            return Err(Error::Config(format!("input file `{}` does not exist", path.display())));
        }
        self.inputs.push(path.to_path_buf());
        Ok(path.to_path_buf())
    }

    fn output(&mut self, name: &str) -> PathBuf {
        let path = self.out.join(name);
        self.outputs.push(path.clone());
        path
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.output(name);
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    fn seed(&mut self, configured: Option<u64>, flag: Option<u64>) -> u64 {
        let seed = flag.or(configured).unwrap_or(DEFAULT_SEED);
        self.seed = Some(seed);
        seed
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let reader = BufReader::new(File::open(path)?);
    serde_json::from_reader(reader).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load(run: &mut Run, args: &DataArgs) -> Result<Portfolio> {
    let data = run.input(&args.data)?;
    let schema = match &args.schema {
        Some(p) => read_schema(run.input(p)?)?,
        None => SchemaConfig::default(),
    };
    ingest_csv(data, &schema)
}

fn load_model(run: &mut Run, path: &Path) -> Result<HierarchicalModel> {
    let path = run.input(path)?;
    HierarchicalModel::read_json(BufReader::new(File::open(path)?))
}

#[derive(Serialize)]
struct ChainLadderReport {
    factors: Vec<f64>,
    latest: Vec<f64>,
    ultimates: Vec<f64>,
    reserves: Vec<f64>,
    total_reserve: f64,
    mack_row_se: Option<Vec<f64>>,
    mack_total_se: Option<f64>,
    mack_error: Option<String>,
}

#[derive(Serialize)]
struct CrmReport {
    params: rbns_core::aggregate::CrmParams,
    simulated_mean: f64,
    quantiles: Vec<(f64, f64)>,
}

fn execute(cli: &Cli, run: &mut Run) -> Result<()> {
    match &cli.command {
        Command::Generate { config } => {
            let mut gen: GeneratorConfig = read_json(&run.input(config)?)?;
            gen.seed = run.seed(Some(gen.seed), cli.seed);
            let portfolio = generate(&gen)?;
            emit_csv(&portfolio, run.output("claims.csv"))?;
            let schema =
                SchemaConfig { window: Some(portfolio.window), covariates: portfolio.covariate_columns.clone(), ..Default::default() };
            write_schema(&schema, run.output("schema.json"))?;
            println!("generated {} claims, {} records", portfolio.n_claims(), portfolio.n_records());
        }
        Command::Fit { data, config } => {
            let portfolio = load(run, data)?;
            let config: ModelConfig = read_json(&run.input(config)?)?;
            let seed = run.seed(None, cli.seed);
            let weights = model_weights(&config, &portfolio)?;
            let model = fit_hrm(&portfolio, &config, &weights, seed)?;
            let path = run.output("model.json");
            model.write_json(BufWriter::new(File::create(path)?))?;
            for (layer, n) in model.config.layers.iter().zip(&model.n_observations) {
                println!("layer {} ({}): {n} observations", layer.order, layer.name);
            }
        }
        Command::Simulate { data, model, paths } => {
            let portfolio = load(run, data)?;
            let model = load_model(run, model)?;
            let seed = run.seed(None, cli.seed);
            let sims = simulate_paths(&model, &portfolio, *paths, seed)?;
            let path = run.output("paths.csv");
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "path_id,claim_id,dev_year,calendar_year,close,payment,size")?;
            for p in &sims {
                for r in &p.records {
                    let claim = &portfolio.claims[r.claim_index as usize];
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{}",
                        p.path_id,
                        claim.claim_id,
                        r.dev_year,
                        portfolio.window.calendar_year(claim.reporting_year + r.dev_year - 1),
                        r.close as u8,
                        r.payment as u8,
                        r.size
                    )?;
                }
            }
            w.flush()?;
            let report = rbns_reserve(&sims, &portfolio, &[], None)?;
            println!("simulated {paths} paths; mean reserve {:.2}", report.mean);
        }
        Command::Reserve { data, model, paths, horizon, quantiles } => {
            let portfolio = load(run, data)?;
            let model = load_model(run, model)?;
            let seed = run.seed(None, cli.seed);
            let sims = simulate_paths(&model, &portfolio, *paths, seed)?;
            let report = rbns_reserve(&sims, &portfolio, quantiles, *horizon)?;
            run.write_json("reserve.json", &report)?;
            println!("mean {:.2}  sd {:.2}  (MC se {:.2})", report.mean, report.std_dev, report.standard_error());
            for (l, v) in &report.quantiles {
                println!("q{l}: {v:.2}");
            }
        }
        Command::Triangle { data } => {
            let portfolio = load(run, data)?;
            for (response, name) in [(Response::Payment, "payment"), (Response::Size, "size"), (Response::Close, "close")] {
                let tri = build_triangle(&portfolio, response);
                tri.write_csv(BufWriter::new(File::create(run.output(&format!("triangle_{name}.csv")))?))?;
            }
            let exposure: Vec<usize> = portfolio.reported_counts.clone();
            run.write_json("exposure.json", &exposure)?;
            println!("wrote triangles for {} reporting years", portfolio.window.tau);
        }
        Command::Chainladder { triangle, data, schema } => {
            let tri = match (triangle, data) {
                (Some(t), _) => Triangle::read_csv("size", BufReader::new(File::open(run.input(t)?)?))?,
                (None, Some(d)) => {
                    let portfolio = load(run, &DataArgs { data: d.clone(), schema: schema.clone() })?;
                    build_triangle(&portfolio, Response::Size)
                }
                (None, None) => return Err(Error::Config("chainladder needs --triangle or --data".into())),
            };
            let cl = chain_ladder(&tri)?;
            let mack = mack_se(&tri);
            let report = ChainLadderReport {
                factors: cl.factors.clone(),
                latest: cl.latest.clone(),
                ultimates: cl.ultimates.clone(),
                reserves: cl.reserves.clone(),
                total_reserve: cl.total_reserve,
                mack_row_se: mack.as_ref().ok().map(|m| m.row_se.clone()),
                mack_total_se: mack.as_ref().ok().map(|m| m.total_se),
                mack_error: mack.as_ref().err().map(|e| e.to_string()),
            };
            run.write_json("chainladder.json", &report)?;
            let factors: Vec<String> = cl.factors.iter().map(|f| format!("{f:.6}")).collect();
            println!("factors: {}", factors.join(" "));
            println!("reserve: {:.2}", cl.total_reserve);
            match &mack {
                Ok(m) => println!("mack se: {:.2}", m.total_se),
                Err(e) => println!("mack se: unavailable ({e})"),
            }
        }
        Command::Dcl { data } => {
            let portfolio = load(run, data)?;
            let counts = build_triangle(&portfolio, Response::Payment);
            let sizes = build_triangle(&portfolio, Response::Size);
            let params = dcl_from_triangles(&counts, &sizes, &counts.exposure)?;
            run.write_json("dcl.json", &params)?;
            println!("reserve: {:.2}", params.reserve);
        }
        Command::Crm { data, paths, quantiles } => {
            let portfolio = load(run, data)?;
            let seed = run.seed(None, cli.seed);
            let counts = build_triangle(&portfolio, Response::Payment);
            let sizes = build_triangle(&portfolio, Response::Size);
            let params = crm_from_triangles(&counts, &sizes, &counts.exposure)?;
            let mut totals = params.simulate_reserve(*paths, u32::MAX, seed)?;
            let mean = totals.iter().sum::<f64>() / totals.len().max(1) as f64;
            totals.sort_by(f64::total_cmp);
            if let Some(l) = quantiles.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
                return Err(Error::Input(format!("quantile level {l} outside (0, 1)")));
            }
            let q = quantiles.iter().map(|&l| (l, rbns_core::model::empirical_quantile(&totals, l))).collect();
            println!("reserve: {:.2} (simulated mean {mean:.2})", params.reserve);
            run.write_json("crm.json", &CrmReport { params, simulated_mean: mean, quantiles: q })?;
        }
        Command::Evaluate { data, config, horizon, paths } => {
            let portfolio = load(run, data)?;
            let mut config: EvaluationConfig = read_json(&run.input(config)?)?;
            config.seed = run.seed(Some(config.seed), cli.seed);
            if let Some(h) = horizon {
                config.horizon = *h;
            }
            if let Some(p) = paths {
                config.n_paths = *p;
            }
            let result = moving_window_eval(&portfolio, &config)?;
            write_results_csv(&result, BufWriter::new(File::create(run.output("results.csv"))?))?;
            let summary = summarize(&result)?;
            run.write_json("summary.json", &summary)?;
            for s in &summary {
                println!(
                    "{}: mean PE {:+.2}%, mean |PE| {:.2}% over {} dates ({} excluded)",
                    s.method, s.mean_pe, s.mean_abs_pe, s.n, s.excluded
                );
            }
        }
        Command::BridgeTest { data, config } => {
            let portfolio = load(run, data)?;
            let config: ModelConfig = read_json(&run.input(config)?)?;
            let test = bridge_test(&portfolio, &config)?;
            run.write_json("bridge_test.json", &test)?;
            for l in &test.layers {
                println!("{}: LR {:.3} on {} df, p = {:.4}", l.layer, l.test.statistic, l.test.dof, l.test.p_value);
            }
            println!("joint: LR {:.3} on {} df, p = {:.4}", test.joint.statistic, test.joint.dof, test.joint.p_value);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    let mut run = Run { out: cli.out.clone(), inputs: Vec::new(), outputs: Vec::new(), seed: None };
    let result = std::fs::create_dir_all(&cli.out)
        .map_err(|e| Error::Config(format!("output directory `{}`: {e}", cli.out.display())))
        .and_then(|_| execute(&cli, &mut run));
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        arguments: std::env::args().skip(1).collect(),
        inputs: run.inputs,
        seed: run.seed,
        threads: cli.threads,
        outputs: run.outputs,
    };
    if cli.out.is_dir() {
        let written = File::create(cli.out.join("manifest.json"))
            .map_err(Error::from)
            .and_then(|f| serde_json::to_writer_pretty(f, &manifest).map_err(Error::from));
        if let Err(e) = written {
            eprintln!("warning: could not write manifest: {e}");
        }
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 3 } else { 1 })
        }
    }
}
