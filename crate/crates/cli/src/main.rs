use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use zrperc::environment::{cluster_diameter_stats, label_clusters, BondLaw, ConductanceField};
use zrperc::harness::{
    check_ladder_coherence, check_report_consistency, run_bulk_experiment, run_corrected_measure_diagnostic,
    run_hydrodynamic_experiment, run_replacement_diagnostic, ComparisonReport, ExperimentSpec,
};
use zrperc::homogenization::{estimate_d_msd, estimate_d_variational, ClusterGraph, DiffusivityMethod, DiffusivityRecord};
use zrperc::io::{write_csv, write_json};
use zrperc::lattice::{Boundary, Lattice};
use zrperc::macroscopic::{Profile, TestFunction};
use zrperc::pde::{DensityGrid, NonlinearHeat};
use zrperc::rng::derive_seed;
use zrperc::zrp::{empirical_measure, sample_product_measure, simulate_kmc, FugacityTable, JumpRateFn, Trajectory};
use zrperc::{Error, Result};

#[derive(Parser)]
#[command(name = "zrperc", version, about = "Zero range process among random conductances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a conductance field and save it.
    GenEnv(GenEnv),
    /// Estimate the effective diffusion matrix.
    EffectiveD(EffectiveD),
    /// Solve the nonlinear heat equation.
    Pde(PdeArgs),
    /// Run the particle system on one environment.
    Simulate(Simulate),
    /// Hydrodynamic ladder experiment.
    Hydro(Experiment),
    /// Full-lattice start with finite clusters as traps.
    Bulk(Experiment),
    /// Replacement statistic ladder.
    DiagReplacement(Experiment),
    /// Corrected empirical measure diagnostic.
    DiagCorrected(Corrected),
}

#[derive(Clone, Copy, ValueEnum)]
enum LawKind {
    Bernoulli,
    Uniform,
    TwoPoint,
}

#[derive(Args)]
struct LawArgs {
    #[arg(long, value_enum, default_value = "bernoulli")]
    law: LawKind,
    /// Open probability (Bernoulli) or probability of `high` (two-point).
    #[arg(long, default_value_t = 0.7)]
    p: f64,
    /// Conductance of an open bond (Bernoulli).
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.1)]
    low: f64,
    #[arg(long, default_value_t = 1.0)]
    high: f64,
    /// Upper bound on conductances.
    #[arg(long, default_value_t = 1.0)]
    c0: f64,
    /// Window sides, e.g. 128,128.
    #[arg(long, value_delimiter = ',', default_value = "128,128")]
    dims: Vec<usize>,
    #[arg(long, default_value = "periodic")]
    boundary: Boundary,
}

impl LawArgs {
    fn law(&self) -> BondLaw {
        match self.law {
            LawKind::Bernoulli => BondLaw::Bernoulli { p: self.p, c: self.c },
            LawKind::Uniform => BondLaw::Uniform,
            LawKind::TwoPoint => BondLaw::TwoPoint {
                low: self.low,
                high: self.high,
                p_high: self.p,
            },
        }
    }

    fn generate(&self, seed: u64) -> Result<ConductanceField> {
        ConductanceField::generate(self.law(), self.c0, Lattice::new(&self.dims, self.boundary)?, seed)
    }
}

#[derive(Args)]
struct GenEnv {
    #[command(flatten)]
    law: LawArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EffectiveD {
    /// Saved environment; otherwise one is drawn per seed.
    #[arg(long)]
    env: Option<PathBuf>,
    #[command(flatten)]
    law: LawArgs,
    #[arg(long, default_value = "variational")]
    method: DiffusivityMethod,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    /// Walkers per environment (msd).
    #[arg(long, default_value_t = 4000)]
    walkers: usize,
    /// Walk duration in lattice time units (msd).
    #[arg(long, default_value_t = 1000.0)]
    t_end: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PdeArgs {
    #[arg(long)]
    rho0: String,
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value = "indicator")]
    g: String,
    #[arg(long)]
    t_end: f64,
    /// Snapshot times (defaults to t_end).
    #[arg(long, value_delimiter = ',')]
    times: Vec<f64>,
    #[arg(long, default_value_t = 128)]
    grid: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value = "periodic")]
    boundary: Boundary,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Simulate {
    #[arg(long)]
    env: PathBuf,
    #[arg(long, default_value = "indicator")]
    g: String,
    #[arg(long)]
    rho0: String,
    /// Diffusive scale; defaults to the window side.
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    t_end: f64,
    #[arg(long, value_delimiter = ',')]
    obs_times: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Start from ν_{ρ₀} on every site instead of ν_{ρ₀/m̂} on the giant cluster.
    #[arg(long)]
    all_sites: bool,
    /// Trajectory file; observables go to the same stem with .csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Experiment {
    /// TOML experiment spec; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Corrected {
    #[command(flatten)]
    experiment: Experiment,
    /// Resolvent parameter; defaults to the experiment spec's.
    #[arg(long)]
    lambda: Option<f64>,
    /// Index of the test function in the experiment spec.
    #[arg(long, default_value_t = 0)]
    test: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 3 for numerical failures, 2 for everything the user can fix.
fn exit_code(e: &Error) -> u8 {
    if e.is_solver_failure() {
        3
    } else {
        2
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenEnv(a) => gen_env(a),
        Command::EffectiveD(a) => effective_d(a),
        Command::Pde(a) => pde(a),
        Command::Simulate(a) => simulate(a),
        Command::Hydro(a) => experiment(a, "hydro", run_hydrodynamic_experiment),
        Command::Bulk(a) => experiment(a, "bulk", run_bulk_experiment),
        Command::DiagReplacement(a) => experiment(a, "replacement", run_replacement_diagnostic),
        Command::DiagCorrected(a) => {
            let lambda = a.lambda;
            let test = a.test;
            experiment(a.experiment, "corrected", move |spec| {
                let g = spec
                    .test_functions
                    .get(test)
                    .ok_or_else(|| Error::Config(format!("no test function with index {test}")))?;
                run_corrected_measure_diagnostic(spec, lambda.unwrap_or(spec.homogenization.lambda), g)
            })
        }
    }
}

#[derive(Serialize)]
struct EnvSummary {
    dims: Vec<usize>,
    seed: u64,
    open_bonds: usize,
    clusters: usize,
    giant_size: usize,
    m_hat: f64,
    max_finite_diameter: usize,
}

fn gen_env(a: GenEnv) -> Result<()> {
    let field = a.law.generate(a.seed)?;
    field.save(&a.out)?;
    let binary = field.threshold(0.0)?;
    let labeling = label_clusters(&binary);
    let summary = EnvSummary {
        dims: a.law.dims.clone(),
        seed: a.seed,
        open_bonds: binary.num_open(),
        clusters: labeling.num_clusters(),
        giant_size: labeling.giant_size(),
        m_hat: labeling.giant_fraction(),
        max_finite_diameter: cluster_diameter_stats(&labeling, true).max,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

#[derive(Serialize)]
struct EffectiveDOutput {
    /// Ensemble mean of σ = tr(𝒟)/d; read back as a coefficient cache.
    sigma: f64,
    m_hat: f64,
    records: Vec<DiffusivityRecord>,
}

fn effective_d(a: EffectiveD) -> Result<()> {
    let p = match a.law.law() {
        BondLaw::Bernoulli { p, .. } => Some(p),
        _ => None,
    };
    let fields: Vec<(ConductanceField, Option<u64>)> = match &a.env {
        Some(path) => vec![(ConductanceField::load(path)?, None)],
        None => a
            .seeds
            .iter()
            .map(|&s| Ok((a.law.generate(s)?, Some(s))))
            .collect::<Result<_>>()?,
    };
    let mut records = Vec::new();
    let mut sigmas = Vec::new();
    let mut ms = Vec::new();
    for (field, seed) in fields {
        let labeling = label_clusters(&field.threshold(0.0)?);
        let graph = ClusterGraph::giant(&field, &labeling, field.lattice().dims()[0])?;
        let mut est = match a.method {
            DiffusivityMethod::Variational => estimate_d_variational(&graph)?,
            DiffusivityMethod::Msd => estimate_d_msd(&graph, a.walkers, a.t_end, seed.unwrap_or(field.seed()))?,
        };
        est.meta.seed = Some(seed.unwrap_or(field.seed()));
        sigmas.push(est.sigma());
        ms.push(labeling.giant_fraction());
        records.push(est.record(p));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let out = EffectiveDOutput {
        sigma: mean(&sigmas),
        m_hat: mean(&ms),
        records,
    };
    write_json(&a.out, &out)?;
    println!("sigma = {:.6}  m_hat = {:.6}", out.sigma, out.m_hat);
    Ok(())
}

#[derive(Serialize)]
struct PdeMeta {
    rho0: String,
    m: f64,
    sigma: f64,
    g: String,
    grid: usize,
    dim: usize,
    times: Vec<f64>,
    files: Vec<String>,
    mass: Vec<f64>,
}

fn pde(a: PdeArgs) -> Result<()> {
    let profile: Profile = a.rho0.parse::<Profile>()?.for_dim(a.dim);
    let rate: JumpRateFn = a.g.parse()?;
    let table = FugacityTable::new(rate)?;
    let grid0 = DensityGrid::from_profile(&profile, a.grid, a.dim, a.boundary)?;
    let heat = NonlinearHeat::new(&table, a.m, a.sigma, profile.sup())?;
    let times = if a.times.is_empty() { vec![a.t_end] } else { a.times.clone() };
    let (_, snaps) = heat.solve_to_time(&grid0, a.t_end, &times, None)?;
    std::fs::create_dir_all(&a.out)?;
    let mut header: Vec<String> = (0..a.dim).map(|k| format!("i{k}")).collect();
    header.push("rho".into());
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut files = Vec::new();
    for (k, s) in snaps.iter().enumerate() {
        let name = format!("snapshot_{k:03}.csv");
        write_csv(&a.out.join(&name), &header, &s.csv_rows())?;
        files.push(name);
    }
    let meta = PdeMeta {
        rho0: a.rho0,
        m: a.m,
        sigma: a.sigma,
        g: a.g,
        grid: a.grid,
        dim: a.dim,
        times,
        files,
        mass: snaps.iter().map(|s| s.mass()).collect(),
    };
    write_json(&a.out.join("meta.json"), &meta)
}

fn simulate(a: Simulate) -> Result<()> {
    let field = ConductanceField::load(&a.env)?;
    let labeling = label_clusters(&field.threshold(0.0)?);
    let n = a.n.unwrap_or(field.lattice().dims()[0]);
    let d = field.lattice().dim();
    let rate: JumpRateFn = a.g.parse()?;
    let table = FugacityTable::new(rate.clone())?;
    let profile: Profile = a.rho0.parse::<Profile>()?.for_dim(d);
    let (graph, divisor) = if a.all_sites {
        (ClusterGraph::full(&field, n)?, 1.0)
    } else {
        (ClusterGraph::giant(&field, &labeling, n)?, labeling.giant_fraction())
    };
    let eta0 = sample_product_measure(&table, &profile, &graph, divisor, derive_seed(a.seed, &[1]))?;
    let mut times = a.obs_times.clone();
    if times.is_empty() {
        times.push(a.t_end);
    }
    let snaps = simulate_kmc(&graph, &rate, eta0, a.t_end, &times, derive_seed(a.seed, &[2]))?;
    let traj = Trajectory::new(n, a.seed, graph.sites().to_vec(), snaps)?;
    traj.save(&a.out)?;
    let tests: Vec<TestFunction> = zrperc::harness::default_test_functions(d);
    let mut header = vec!["time".to_string(), "events".into(), "particles".into()];
    header.extend((0..tests.len()).map(|k| format!("pi_G{k}")));
    let rows: Vec<Vec<String>> = traj
        .snapshots
        .iter()
        .map(|s| {
            let mut row = vec![
                format!("{:.12e}", s.time),
                s.event_count.to_string(),
                s.occupancy.iter().map(|&k| k as u64).sum::<u64>().to_string(),
            ];
            row.extend(tests.iter().map(|g| format!("{:.12e}", empirical_measure(&graph, &s.occupancy, g))));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    write_csv(&a.out.with_extension("csv"), &header, &rows)
}

fn experiment<F>(a: Experiment, name: &str, runner: F) -> Result<()>
where
    F: FnOnce(&ExperimentSpec) -> Result<ComparisonReport>,
{
    let spec = match &a.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::default(),
    };
    let out: PathBuf = a
        .out
        .clone()
        .or_else(|| spec.output.clone())
        .unwrap_or_else(|| Path::new("out").join(name));
    let report = runner(&spec)?;
    check_report_consistency(&report)?;
    check_ladder_coherence(&report)?;
    report.write(&out)?;
    std::fs::write(out.join("spec.toml"), spec.to_toml()?)?;
    print_summary(&report);
    Ok(())
}

fn print_summary(report: &ComparisonReport) {
    for s in &report.summary {
        println!(
            "{:<12} N={:<4} t={:<6} G{}  gap {:.3e} ± {:.1e}  (scale {:.3e})",
            s.model, s.n, s.t, s.test, s.gap_mean, s.gap_stderr, s.scale
        );
    }
    for s in &report.ladder_summary {
        println!("ell={:<3} V = {:.4e} ± {:.1e}", s.ell, s.mean, s.stderr);
    }
    for s in &report.corrected_summary {
        println!(
            "N={:<4} sup gap {:.3e} ± {:.1e}  L2 gap {:.3e}",
            s.n, s.sup_gap_mean, s.sup_gap_stderr, s.l2_gap_mean
        );
    }
    if let Some(b) = &report.bulk {
        let holds = b.traps.iter().filter(|t| t.holds).count();
        let violations: usize = b.conservation.iter().map(|c| c.violations).sum();
        println!(
            "traps: gamma {:.3}, bound holds {holds}/{}, conservation violations {violations}",
            b.diameter_fit.gamma,
            b.traps.len()
        );
    }
}
