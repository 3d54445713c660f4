use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use touchroi::harness::{self, ExperimentConfig};
use touchroi::matrices::{
    build_bernoulli, build_hadamard, build_identity, build_phi_k, build_phi_kl,
};
use touchroi::oracle::exhaustive_check;
use touchroi::{BranchRule, Detector, Error, Execution, MatrixParams, SceneConfig, TernaryMatrix};

#[derive(Parser)]
#[command(
    name = "touchroi",
    version,
    about = "Context-aware touch readout simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides experiment.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or file for gen-matrix).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Monte Carlo trials, overrides experiment.trials.
    #[arg(long, global = true)]
    trials: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    PhiK,
    PhiKl,
    Hadamard,
    Identity,
    Bernoulli,
}

#[derive(Subcommand)]
enum Command {
    /// Write a sensing matrix in triplet format.
    GenMatrix {
        #[arg(long, value_enum, default_value = "phi-k")]
        kind: Kind,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        l: Option<usize>,
        /// Sensor count (columns).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Threshold sweep; writes roc.csv and manifest.txt.
    Roc,
    /// Energy table; writes energy.csv and manifest.txt.
    Power,
    /// Both sweeps; writes roc.csv, energy.csv and manifest.txt.
    Run,
    /// Exhaustive noiseless check of every support of size at most k.
    Oracle {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        l: usize,
        #[arg(long, default_value_t = 0.5)]
        vth: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 5.0])]
        dc: Vec<f64>,
        #[arg(long, default_value = "per_row")]
        rule: String,
        #[arg(long)]
        postprocess: bool,
    },
    /// Trace one frame through measurement, quantizer and detector.
    Demo {
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        l: usize,
        /// Active chunk indices.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 4])]
        active: Vec<usize>,
        #[arg(long, default_value_t = 0.0)]
        dc: f64,
        #[arg(long, default_value_t = 30.0)]
        snr_tsp: f64,
        #[arg(long, default_value_t = 40.0)]
        snr_ro: f64,
        #[arg(long, default_value_t = 0.5)]
        vth: f64,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParams(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::GenMatrix { kind, m, k, l, n } => gen_matrix(cli, *kind, *m, *k, *l, *n),
        Command::Roc => experiment(cli, true, false),
        Command::Power => experiment(cli, false, true),
        Command::Run => experiment(cli, true, true),
        Command::Oracle {
            m,
            k,
            l,
            vth,
            dc,
            rule,
            postprocess,
        } => oracle(*m, *k, *l, *vth, dc, rule, *postprocess),
        Command::Demo {
            m,
            k,
            l,
            active,
            dc,
            snr_tsp,
            snr_ro,
            vth,
        } => demo(cli, *m, *k, *l, active, *dc, *snr_tsp, *snr_ro, *vth),
    }
}

fn need(v: Option<usize>, flag: &str) -> Result<usize, Failure> {
    v.ok_or_else(|| Failure::Config(format!("--{flag} is required for this matrix kind")))
}

fn gen_matrix(
    cli: &Cli,
    kind: Kind,
    m: Option<usize>,
    k: Option<usize>,
    l: Option<usize>,
    n: Option<usize>,
) -> Result<(), Failure> {
    let mat: TernaryMatrix = match kind {
        Kind::PhiK => build_phi_k(need(m, "m")?, need(k, "k")?)?,
        Kind::PhiKl => {
            let (m, k, l) = (need(m, "m")?, need(k, "k")?, need(l, "l")?);
            let params = match n {
                Some(n) => MatrixParams::new(m, k, l, n)?,
                None => MatrixParams::full(m, k, l)?,
            };
            build_phi_kl(&params)?.0
        }
        Kind::Hadamard => build_hadamard(need(n, "n")?)?,
        Kind::Identity => build_identity(need(n, "n")?)?,
        Kind::Bernoulli => build_bernoulli(need(m, "m")?, need(n, "n")?, cli.seed.unwrap_or(1))?,
    };
    let mut buf = Vec::new();
    mat.write_triplets(&mut buf)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    match &cli.out {
        Some(path) => {
            fs::write(path, &buf)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            eprintln!(
                "wrote {} ({}x{}, {} nonzeros)",
                path.display(),
                mat.rows(),
                mat.cols(),
                mat.nnz()
            );
        }
        None => std::io::stdout()
            .write_all(&buf)
            .map_err(|e| Failure::Runtime(e.to_string()))?,
    }
    Ok(())
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("--config is required".into()))?;
    let mut cfg = harness::load_config(path).map_err(|e| match e {
        Error::Io { .. } => Failure::Config(e.to_string()),
        other => Failure::from(other),
    })?;
    if let Some(seed) = cli.seed {
        cfg.sweep.master_seed = seed;
    }
    if let Some(trials) = cli.trials {
        if trials == 0 {
            return Err(Failure::Config(
                "`experiment.trials`: trials must be at least 1".into(),
            ));
        }
        cfg.sweep.trials = trials;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn experiment(cli: &Cli, roc: bool, energy: bool) -> Result<(), Failure> {
    let cfg = load(cli)?;
    let exec = Execution::from_threads(cli.threads);
    let dir: &Path = &cfg.output_dir;
    let started = Instant::now();
    let mut written = Vec::new();
    let mut energy_table = None;

    if roc {
        let sets = harness::run_roc(&cfg, exec).map_err(runtime)?;
        println!(
            "{:<17} {:>6} {:>5} {:>3} {:>4} {:>7} {:>7}",
            "scheme", "N", "m", "k", "l", "SR", "AUC"
        );
        for set in &sets {
            let p = set.params;
            for c in &set.curves {
                println!(
                    "{:<17} {:>6} {:>5} {:>3} {:>4} {:>7.4} {:>7.4}",
                    c.scheme.name(),
                    p.n_sensors,
                    p.m,
                    p.k,
                    p.l,
                    p.sampling_ratio(),
                    c.auc()
                );
            }
        }
        let csv = harness::roc_csv(&sets, &cfg.sweep);
        written.push(harness::write_file(dir, "roc.csv", &csv).map_err(runtime)?);
    }
    if energy {
        let table = harness::run_energy(&cfg, exec).map_err(runtime)?;
        println!(
            "{:>6} {:>5} {:>3} {:>4} {:>7} {:>8} {:>7} {:>9} {:>10} {:>9} {:>8}",
            "N", "m", "k", "l", "SR", "vth_op", "recall", "fpr", "p_conv", "p_prop", "saving"
        );
        for r in harness::energy_rows(&table) {
            println!(
                "{:>6} {:>5} {:>3} {:>4} {:>7.4} {:>8.4} {:>7.4} {:>9.2e} {:>10.2} {:>9.3} {:>8.2}",
                r.n_sensors,
                r.m,
                r.k,
                r.l,
                r.sampling_ratio,
                r.vth_op,
                r.recall,
                r.fpr,
                r.p_conv_mw,
                r.p_prop_mw,
                r.saving
            );
        }
        for p in &table.unmet {
            println!(
                "recall floor unmet: m={} k={} l={} N={}",
                p.m, p.k, p.l, p.n_sensors
            );
        }
        written.push(
            harness::write_file(dir, "energy.csv", &harness::energy_csv(&table))
                .map_err(runtime)?,
        );
        energy_table = Some(table);
    }
    let manifest = harness::manifest(&cfg, energy_table.as_ref());
    written.push(harness::write_file(dir, "manifest.txt", &manifest).map_err(runtime)?);
    for p in &written {
        eprintln!("wrote {}", p.display());
    }
    eprintln!("done in {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn oracle(
    m: usize,
    k: usize,
    l: usize,
    vth: f64,
    dcs: &[f64],
    rule: &str,
    postprocess: bool,
) -> Result<(), Failure> {
    let rule = BranchRule::from_name(rule)
        .ok_or_else(|| Failure::Config(format!("unknown rule `{rule}` (per_row, all_rows)")))?;
    let params = MatrixParams::full(m, k, l)?;
    let report = exhaustive_check(&params, Detector::new(rule, postprocess), vth, dcs)?;
    println!(
        "m={m} k={k} l={l} N={} vth={vth} dc={dcs:?}: {} supports checked",
        params.n_sensors, report.supports_checked
    );
    if report.passed() {
        println!("all {k}-sparse supports detected exactly");
        Ok(())
    } else {
        for f in report.failures.iter().take(10) {
            println!(
                "  active {:?} dc {} -> flagged {:?}",
                f.active, f.dc, f.flagged
            );
        }
        Err(Failure::Runtime(format!(
            "{} of {} supports misdetected",
            report.failures.len(),
            report.supports_checked
        )))
    }
}

#[allow(clippy::too_many_arguments)]
fn demo(
    cli: &Cli,
    m: usize,
    k: usize,
    l: usize,
    active: &[usize],
    dc: f64,
    snr_tsp: f64,
    snr_ro: f64,
    vth: f64,
) -> Result<(), Failure> {
    let params = MatrixParams::full(m, k, l)?;
    let mut scene = SceneConfig::new(params.n_sensors, k);
    scene.dc = dc;
    scene.snr_tsp_db = snr_tsp;
    scene.validate()?;
    let t = harness::trace_frame(
        &params,
        &scene,
        active,
        snr_ro,
        vth,
        Detector::default(),
        cli.seed.unwrap_or(1),
    )?;
    let (_, chunks) = build_phi_kl(&params)?;

    println!("m={m} k={k} l={l} N={} vth={vth} dc={dc}", params.n_sensors);
    println!("active chunks {:?}", t.frame.chunks);
    println!("x:");
    for c in 0..chunks.n_chunks() {
        let vals: Vec<String> = t.sensed[chunks.sensors(c)]
            .iter()
            .map(|v| format!("{v:7.3}"))
            .collect();
        println!("  chunk {c:>3} {}", vals.join(" "));
    }
    println!("y -> code:");
    for (j, (y, code)) in t.samples.iter().zip(&t.codes).enumerate() {
        println!("  row {j:>3} {y:8.3} {}", code.symbol());
    }
    let det = t.outcome.detection.as_ref().expect("context-aware outcome");
    println!("w: flagged chunks {:?}", det.flagged_chunks());
    println!(
        "measurements used {} of {}",
        t.outcome.measurements_used, params.n_sensors
    );
    Ok(())
}
