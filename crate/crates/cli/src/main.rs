//! Command-line frontend: simulation, annealing, structural analysis,
//! restructuring, routed inference, update redistribution, and
//! equivalence verification over the on-disk formats.
//!
//! Exit codes: 0 success, 1 input/usage error, 2 internal invariant
//! violation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use decomp_core::io;
use decomp_core::{
    analyze, anneal, build_system, generate_planted_system, infer, p_adjacency,
    redistribute_update, verify_equivalence, AnalysisResult, AnalyzeOptions, Error,
    InitDistribution, Nonlinearity, RealMatrix, RealVector, TestConfig, Weights,
};

#[derive(Parser)]
#[command(
    name = "decomp",
    version,
    about = "Anneal, analyze, and restructure trained parameter matrices into \
             block-decomposed inference systems"
)]
struct Cli {
    /// Flat key=value configuration file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a planted local-update training run.
    Simulate(SimulateArgs),
    /// Statistically anneal a weight matrix, zeroing unsupported edges.
    Anneal(AnnealArgs),
    /// Compute the node attribute table and structural permutation.
    Analyze(AnalyzeArgs),
    /// Build a restructured-system bundle from annealed weights.
    Restructure(RestructureArgs),
    /// Run routed inference over a bundle.
    Infer(InferArgs),
    /// Redistribute one local training update into a bundle.
    Update(UpdateArgs),
    /// Verify bundle-vs-reference output equivalence on random inputs.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory for w0.mtx, w_final.mtx, trace.txt, truth.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k_blocks: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    init_sigma: Option<f64>,
}

#[derive(Args)]
struct AnnealArgs {
    /// Weight matrix (.mtx/.csv/.bin).
    #[arg(long)]
    weights: PathBuf,
    /// Annealed matrix output path.
    #[arg(long)]
    out: PathBuf,
    /// JSON report output path.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Null-model scale; estimated from the weights when omitted.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    /// Retain systematically suppressed edges.
    #[arg(long)]
    keep_suppressed: bool,
    #[arg(long, value_parser = ["paper", "transposed"])]
    edge_convention: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Adjacency or weight matrix; any nonzero entry is an edge.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for node_table.csv, condensation.mtx,
    /// permutation.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    isolated_last: bool,
    #[arg(long, value_parser = ["paper", "transposed"])]
    edge_convention: Option<String>,
}

#[derive(Args)]
struct RestructureArgs {
    /// Annealed weight matrix.
    #[arg(long)]
    weights: PathBuf,
    /// Optional analysis directory to validate against (permutation.csv).
    #[arg(long)]
    analysis: Option<PathBuf>,
    /// Bundle output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    isolated_last: bool,
    #[arg(long, value_parser = ["paper", "transposed"])]
    edge_convention: Option<String>,
    #[arg(long)]
    nonlinearity: Option<String>,
}

#[derive(Args)]
struct InferArgs {
    /// Bundle directory.
    #[arg(long)]
    bundle: PathBuf,
    /// Input vector batch CSV (one vector per line).
    #[arg(long)]
    input: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Dense reference weights; adds an equivalence report.
    #[arg(long)]
    verify_against: Option<PathBuf>,
    /// Equivalence report path (JSON, requires --verify-against).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct UpdateArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Input vector x (single CSV line).
    #[arg(long)]
    input: PathBuf,
    /// Output gradient g (single CSV line).
    #[arg(long)]
    grad: PathBuf,
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Dense reference weights.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Effective run configuration: defaults, overridden by the config
/// file, overridden by flags.
#[derive(Debug, Clone)]
struct RunConfig {
    alpha: f64,
    delta0: Option<f64>,
    tau: Option<f64>,
    bins: usize,
    sigma: Option<f64>,
    k_channels: usize,
    seed: u64,
    edge_convention: String,
    isolated_last: bool,
    nonlinearity: String,
    eta: f64,
    n: usize,
    k_blocks: usize,
    steps: usize,
    init_sigma: f64,
    trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 0.05,
            delta0: None,
            tau: None,
            bins: 10,
            sigma: None,
            k_channels: 8,
            seed: 0,
            edge_convention: "paper".into(),
            isolated_last: false,
            nonlinearity: "identity".into(),
            eta: 0.01,
            n: 64,
            k_blocks: 4,
            steps: 1000,
            init_sigma: 0.5,
            trials: 10,
        }
    }
}

impl RunConfig {
    fn load_file(&mut self, path: &Path) -> Result<(), Error> {
        let text = fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!(
                    "config line {}: expected key=value",
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, Error> {
            value
                .parse()
                .map_err(|_| Error::InvalidInput(format!("config key {key}: bad value {value:?}")))
        }
        match key {
            "alpha" => self.alpha = num(key, value)?,
            "delta0" => self.delta0 = Some(num(key, value)?),
            "tau" => self.tau = Some(num(key, value)?),
            "bins" => self.bins = num(key, value)?,
            "sigma" => self.sigma = Some(num(key, value)?),
            "k_channels" => self.k_channels = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "edge_convention" => match value {
                "paper" | "transposed" => self.edge_convention = value.into(),
                _ => {
                    return Err(Error::InvalidInput(
                        "edge_convention must be paper or transposed".into(),
                    ))
                }
            },
            "isolated_last" => self.isolated_last = num(key, value)?,
            "nonlinearity" => self.nonlinearity = value.into(),
            "eta" => self.eta = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "k_blocks" => self.k_blocks = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "init_sigma" => self.init_sigma = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            other => {
                return Err(Error::InvalidInput(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    fn print(&self) {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        map.insert("alpha", self.alpha.to_string());
        map.insert(
            "delta0",
            self.delta0.map_or("auto".into(), |v| v.to_string()),
        );
        map.insert("tau", self.tau.map_or("auto".into(), |v| v.to_string()));
        map.insert("bins", self.bins.to_string());
        map.insert("sigma", self.sigma.map_or("auto".into(), |v| v.to_string()));
        map.insert("k_channels", self.k_channels.to_string());
        map.insert("seed", self.seed.to_string());
        map.insert("edge_convention", self.edge_convention.clone());
        map.insert("isolated_last", self.isolated_last.to_string());
        map.insert("nonlinearity", self.nonlinearity.clone());
        map.insert("eta", self.eta.to_string());
        map.insert("n", self.n.to_string());
        map.insert("k_blocks", self.k_blocks.to_string());
        map.insert("steps", self.steps.to_string());
        map.insert("init_sigma", self.init_sigma.to_string());
        map.insert("trials", self.trials.to_string());
        for (k, v) in map {
            println!("{k}={v}");
        }
    }

    /// Test parameters for order-n inputs; file/flag values win over
    /// the n-derived defaults.
    fn test_config(&self, n: usize, keep_suppressed: bool) -> Result<TestConfig, Error> {
        let mut cfg = TestConfig::defaults_for(n, self.alpha)?;
        if let Some(d) = self.delta0 {
            cfg.delta0 = d;
        }
        if let Some(t) = self.tau {
            cfg.tau = t;
        }
        cfg.bins = self.bins;
        cfg.k = self.k_channels;
        cfg.keep_suppressed = keep_suppressed;
        Ok(cfg)
    }
}

fn apply_overrides(cfg: &mut RunConfig, cmd: &Cmd) {
    match cmd {
        Cmd::Simulate(a) => {
            if let Some(v) = a.n {
                cfg.n = v;
            }
            if let Some(v) = a.k_blocks {
                cfg.k_blocks = v;
            }
            if let Some(v) = a.steps {
                cfg.steps = v;
            }
            if let Some(v) = a.eta {
                cfg.eta = v;
            }
            if let Some(v) = a.seed {
                cfg.seed = v;
            }
            if let Some(v) = a.init_sigma {
                cfg.init_sigma = v;
            }
        }
        Cmd::Anneal(a) => {
            if let Some(v) = a.alpha {
                cfg.alpha = v;
            }
            if let Some(v) = a.sigma {
                cfg.sigma = Some(v);
            }
            if let Some(v) = a.delta0 {
                cfg.delta0 = Some(v);
            }
            if let Some(v) = a.tau {
                cfg.tau = Some(v);
            }
            if let Some(v) = a.bins {
                cfg.bins = v;
            }
            if let Some(v) = &a.edge_convention {
                cfg.edge_convention = v.clone();
            }
        }
        Cmd::Analyze(a) => {
            if a.isolated_last {
                cfg.isolated_last = true;
            }
            if let Some(v) = &a.edge_convention {
                cfg.edge_convention = v.clone();
            }
        }
        Cmd::Restructure(a) => {
            if a.isolated_last {
                cfg.isolated_last = true;
            }
            if let Some(v) = &a.edge_convention {
                cfg.edge_convention = v.clone();
            }
            if let Some(v) = &a.nonlinearity {
                cfg.nonlinearity = v.clone();
            }
        }
        Cmd::Infer(_) => {}
        Cmd::Update(a) => {
            if let Some(v) = a.eta {
                cfg.eta = v;
            }
        }
        Cmd::Verify(a) => {
            if let Some(v) = a.trials {
                cfg.trials = v;
            }
            if let Some(v) = a.seed {
                cfg.seed = v;
            }
        }
    }
}

fn read_weights(path: &Path, cfg: &RunConfig) -> Result<RealMatrix, Error> {
    let m = io::read_matrix(path)?;
    if !m.is_square() {
        return Err(Error::InvalidInput(format!(
            "{} is {}x{}, expected square",
            path.display(),
            m.n_rows(),
            m.n_cols()
        )));
    }
    Ok(if cfg.edge_convention == "transposed" {
        m.transpose()
    } else {
        m
    })
}

fn analysis_of(w: &RealMatrix, cfg: &RunConfig) -> Result<AnalysisResult, Error> {
    analyze(
        &p_adjacency(w)?,
        &AnalyzeOptions {
            isolated_last: cfg.isolated_last,
        },
    )
}

fn cmd_simulate(args: &SimulateArgs, cfg: &RunConfig) -> Result<(), Error> {
    fs::create_dir_all(&args.out)?;
    let sys = generate_planted_system(
        cfg.n,
        cfg.k_blocks,
        cfg.steps,
        cfg.eta,
        cfg.seed,
        cfg.init_sigma,
    )?;
    io::write_matrix_mtx(&args.out.join("w0.mtx"), &sys.w0)?;
    io::write_matrix_mtx(&args.out.join("w_final.mtx"), &sys.w_final)?;
    io::write_trace(&args.out.join("trace.txt"), &sys.trace)?;
    #[derive(Serialize)]
    struct Truth {
        n: usize,
        k_blocks: usize,
        classes: Vec<Vec<usize>>,
    }
    let mut classes = vec![Vec::new(); cfg.k_blocks];
    for (i, &g) in sys.group_of.iter().enumerate() {
        classes[g].push(i + 1);
    }
    let truth = Truth {
        n: cfg.n,
        k_blocks: cfg.k_blocks,
        classes,
    };
    fs::write(
        args.out.join("truth.json"),
        serde_json::to_string_pretty(&truth)
            .map_err(|e| Error::InternalInvariant(e.to_string()))?
            + "\n",
    )?;
    Ok(())
}

fn cmd_anneal(args: &AnnealArgs, cfg: &RunConfig) -> Result<(), Error> {
    let w = read_weights(&args.weights, cfg)?;
    let n = w.n_rows();
    let f0 = match cfg.sigma {
        Some(s) => InitDistribution::gaussian(s)?,
        None => InitDistribution::estimate(w.entries())?,
    };
    let tc = cfg.test_config(n, args.keep_suppressed)?;
    let annealed = anneal(&Weights::Scalar(w), f0, &tc)?;
    let out = match &annealed.weights {
        Weights::Scalar(m) => m,
        _ => unreachable!(),
    };
    io::write_matrix(&args.out, out)?;
    let json = serde_json::to_string_pretty(&annealed.report)
        .map_err(|e| Error::InternalInvariant(e.to_string()))?
        + "\n";
    match &args.report {
        Some(path) => fs::write(path, json)?,
        None => print!("{json}"),
    }
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs, cfg: &RunConfig) -> Result<(), Error> {
    let w = read_weights(&args.input, cfg)?;
    let result = analysis_of(&w, cfg)?;
    fs::create_dir_all(&args.out)?;
    io::write_node_table(&args.out.join("node_table.csv"), &result.table)?;
    io::write_bool_matrix(&args.out.join("condensation.mtx"), &result.condensation)?;
    io::write_permutation(&args.out.join("permutation.csv"), &result.permutation)?;
    Ok(())
}

fn cmd_restructure(args: &RestructureArgs, cfg: &RunConfig) -> Result<(), Error> {
    let w = read_weights(&args.weights, cfg)?;
    let result = analysis_of(&w, cfg)?;
    if let Some(dir) = &args.analysis {
        let stored = io::read_permutation(&dir.join("permutation.csv"))?;
        if stored != result.permutation {
            return Err(Error::InvalidInput(
                "analysis directory permutation disagrees with the weights".into(),
            ));
        }
    }
    let sigma = Nonlinearity::from_id(&cfg.nonlinearity)?;
    let sys = build_system(&Weights::Scalar(w), &result, sigma)?;
    let meta = io::BundleMeta {
        n: sys.n,
        block_count: sys.operators.len(),
        k_channels: 0,
        nonlinearity: cfg.nonlinearity.clone(),
        isolated_last: cfg.isolated_last,
        updates: 0,
    };
    io::write_bundle(&args.out, &sys, &meta)?;
    Ok(())
}

#[derive(Serialize)]
struct InferReport {
    inputs: usize,
    max_abs_deviation: f64,
    mismatched_components: usize,
    equivalent: bool,
}

fn cmd_infer(args: &InferArgs, cfg: &RunConfig) -> Result<(), Error> {
    let (sys, _meta) = io::read_bundle(&args.bundle)?;
    let inputs = io::read_vectors_csv(&args.input)?;
    let mut outputs = Vec::with_capacity(inputs.len());
    for x in &inputs {
        outputs.push(infer(&sys, x)?);
    }
    io::write_vectors_csv(&args.out, &outputs)?;
    if let Some(ref_path) = &args.verify_against {
        let w = read_weights(ref_path, cfg)?;
        let mut max_dev = 0.0f64;
        let mut mismatched = 0usize;
        for (x, y) in inputs.iter().zip(outputs.iter()) {
            let reference = decomp_core::matvec(&w, x)?;
            for i in 0..y.len() {
                let d = (y.get(i) - reference.get(i)).abs();
                if d > max_dev {
                    max_dev = d;
                }
                if y.get(i) != reference.get(i) {
                    mismatched += 1;
                }
            }
        }
        let report = InferReport {
            inputs: inputs.len(),
            max_abs_deviation: max_dev,
            mismatched_components: mismatched,
            equivalent: mismatched == 0,
        };
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::InternalInvariant(e.to_string()))?
            + "\n";
        match &args.report {
            Some(path) => fs::write(path, json)?,
            None => print!("{json}"),
        }
    }
    Ok(())
}

fn read_single_vector(path: &Path) -> Result<RealVector, Error> {
    let vs = io::read_vectors_csv(path)?;
    if vs.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "{} holds {} vectors, expected exactly 1",
            path.display(),
            vs.len()
        )));
    }
    Ok(vs.into_iter().next().unwrap())
}

fn cmd_update(args: &UpdateArgs, cfg: &RunConfig) -> Result<(), Error> {
    let (mut sys, mut meta) = io::read_bundle(&args.bundle)?;
    let x = read_single_vector(&args.input)?;
    let g = read_single_vector(&args.grad)?;
    redistribute_update(&mut sys, &x, &g, cfg.eta)?;
    meta.updates += 1;
    io::write_bundle(&args.bundle, &sys, &meta)?;
    Ok(())
}

fn cmd_verify(args: &VerifyArgs, cfg: &RunConfig) -> Result<(), Error> {
    let (sys, _meta) = io::read_bundle(&args.bundle)?;
    let w = read_weights(&args.weights, cfg)?;
    if w.n_rows() != sys.n {
        return Err(Error::DimensionMismatch(format!(
            "bundle order {}, reference order {}",
            sys.n,
            w.n_rows()
        )));
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let inputs: Vec<RealVector> = (0..cfg.trials)
        .map(|_| {
            RealVector::from_entries((0..sys.n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .expect("finite by construction")
        })
        .collect();
    let weights = Weights::Scalar(w.clone());
    let report = verify_equivalence(&sys, &weights, &inputs)?;
    let mut max_dev = 0.0f64;
    for x in &inputs {
        let y = infer(&sys, x)?;
        let reference = decomp_core::matvec(&w, x)?;
        for i in 0..sys.n {
            let d = (y.get(i) - reference.get(i)).abs();
            if d > max_dev {
                max_dev = d;
            }
        }
    }
    let out = InferReport {
        inputs: report.inputs_checked,
        max_abs_deviation: max_dev,
        mismatched_components: report.mismatches.len(),
        equivalent: report.is_equivalent(),
    };
    let json = serde_json::to_string_pretty(&out)
        .map_err(|e| Error::InternalInvariant(e.to_string()))?
        + "\n";
    match &args.report {
        Some(path) => fs::write(path, json)?,
        None => print!("{json}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    apply_overrides(&mut cfg, &cli.cmd);
    if cli.print_config {
        cfg.print();
        return Ok(());
    }
    match &cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(a, &cfg),
        Cmd::Anneal(a) => cmd_anneal(a, &cfg),
        Cmd::Analyze(a) => cmd_analyze(a, &cfg),
        Cmd::Restructure(a) => cmd_restructure(a, &cfg),
        Cmd::Infer(a) => cmd_infer(a, &cfg),
        Cmd::Update(a) => cmd_update(a, &cfg),
        Cmd::Verify(a) => cmd_verify(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InternalInvariant(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
