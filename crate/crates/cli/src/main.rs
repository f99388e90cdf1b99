use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use ossa_core::advice::{gamma_from_predictions, make_predictions, Predictions};
use ossa_core::engine::{cost_of, run};
use ossa_core::harness::{
    actual_rho, audit_invariants, build_policy, run_sweep, write_outputs, BaselineRho, PolicySpec,
    SweepConfig, SEED_ENV,
};
use ossa_core::instances::{
    default_rho_grid, gen_advice_weak, gen_lower1, gen_lower2, gen_pareto, gen_synthetic,
    ingest_taxi, ingest_taxi_zones, InstanceFamily, SyntheticConfig, TaxiOptions,
};
use ossa_core::model::{GammaVector, Instance};
use ossa_core::offline::solve_offline;
use ossa_core::policies::{Gpa, PolicyKind};

#[derive(Parser)]
#[command(
    name = "ossa",
    version,
    about = "Online shared supply allocation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy on one instance.
    Simulate(SimulateArgs),
    /// Run a sweep described by a JSON config and write result CSVs.
    Sweep(SweepArgs),
    /// Print the offline optimum of an instance.
    Opt {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Generate a synthetic instance family, one file per supply level.
    GenSynthetic(GenSyntheticArgs),
    /// Generate hard two-scenario instances.
    GenHard {
        #[command(subcommand)]
        kind: HardKind,
    },
    /// Build instances from aggregated taxi pickup counts.
    IngestTaxi(IngestTaxiArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "gpa")]
    policy: PolicyKind,
    /// Uniform threshold for gpa instead of the default per-site values.
    #[arg(long)]
    gamma: Option<f64>,
    /// Distrust level for la-gpa, in (0, 1/3].
    #[arg(long)]
    lambda: Option<f64>,
    /// Prediction error to synthesize for la-gpa.
    #[arg(long, default_value_t = 0.0, conflicts_with = "predictions")]
    eta_target: f64,
    /// Seed for synthesized predictions.
    #[arg(long, default_value_t = 0)]
    advice_seed: u64,
    /// Predictions file `{"s_hat": .., "d_hat": [..]}` for la-gpa.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Rho handed to rho-greedy and rho-coinflip; defaults to s / sum D.
    #[arg(long)]
    rho: Option<f64>,
    /// Seed for rho-coinflip.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-step trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write per-site transport and penalty as CSV.
    #[arg(long)]
    site_summary: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rho handed to rho baselines: s / sum D ("actual") or the sweep value ("grid").
    #[arg(long, value_parser = ["actual", "grid"])]
    baseline_rho: Option<String>,
}

#[derive(Args)]
struct GenSyntheticArgs {
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    horizon: usize,
    #[arg(long, default_value_t = 10)]
    capacity: u64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 10.0)]
    b_mean: f64,
    /// Supply levels; repeat or comma-separate. Defaults to 0.1..=1.2.
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum HardKind {
    /// Half of the sites, chosen at random, see a second demand wave.
    Lower1 {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        gamma_units: u64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cheap site idle or busy after an expensive site's run.
    Lower2 {
        #[arg(long, default_value_t = 10)]
        s: u64,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Scenario pairs that aggregate advice cannot separate.
    AdviceWeak {
        #[arg(long, default_value_t = 1)]
        case: u8,
        #[arg(long, default_value_t = 28)]
        k: u64,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Accurate and inaccurate scenarios sharing one prediction.
    Pareto {
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct IngestTaxiArgs {
    /// Pickups CSV: `date,site_id,pickups` (or `date,zone_id,pickups` with --zones).
    #[arg(long)]
    demand: PathBuf,
    /// Coordinates CSV: `site_id,x,y` (or `zone_id,x,y,site_id` with --zones).
    #[arg(long)]
    geo: PathBuf,
    #[arg(long)]
    zones: bool,
    /// With --zones, split this site at its pickup-weighted median y.
    #[arg(long, requires = "zones")]
    split_site: Option<usize>,
    #[arg(long, default_value_t = 10)]
    capacity: u64,
    /// Keep raw distances even when some w / c exceeds 1.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Instance::from_json(&text).with_context(|| format!("loading {}", path.display()))
}

fn write_instance(path: &Path, instance: &Instance) -> Result<()> {
    fs::write(path, instance.to_json_pretty())
        .with_context(|| format!("writing {}", path.display()))
}

fn write_family(dir: &Path, prefix: &str, family: &InstanceFamily) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut paths = Vec::new();
    for (rho, inst) in &family.members {
        let path = dir.join(format!("{prefix}_rho{rho}.json"));
        write_instance(&path, inst)?;
        paths.push(path);
    }
    Ok(paths)
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("json value")
    );
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let instance = load_instance(&args.instance)?;
    let opt = solve_offline(&instance);
    let baseline = args.rho.unwrap_or_else(|| actual_rho(&instance));

    let mut predictions = None;
    let (mut policy, gamma): (Box<dyn ossa_core::Policy + Send>, Option<GammaVector>) =
        if args.policy == PolicyKind::LaGpa {
            let lambda = args.lambda.context("la-gpa needs --lambda")?;
            let preds = match &args.predictions {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    Predictions::from_json(&instance, &text)?
                }
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(args.advice_seed);
                    make_predictions(&instance, args.eta_target, &mut rng)
                }
            };
            let gamma = gamma_from_predictions(&instance, &preds, lambda)?;
            predictions = Some(preds);
            (
                Box::new(Gpa::new(gamma.clone()).with_label("la-gpa")),
                Some(gamma),
            )
        } else {
            if args.lambda.is_some() || args.predictions.is_some() {
                bail!("--lambda and --predictions apply to la-gpa only");
            }
            let spec = PolicySpec {
                gamma: args.gamma,
                ..PolicySpec::plain(args.policy)
            };
            let built = build_policy(&instance, &spec, baseline, args.seed)?;
            (built.policy, built.gamma)
        };

    let trace = run(&instance, &mut policy)?;
    let cost = cost_of(&trace)?;
    let violations = gamma
        .as_ref()
        .map(|g| audit_invariants(&trace, &instance, g, &opt));

    if let Some(path) = &args.trace {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        trace.write_csv(BufWriter::new(f))?;
    }
    if let Some(path) = &args.site_summary {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        trace.write_summary_csv(BufWriter::new(f))?;
    }

    print_json(&json!({
        "policy": trace.policy,
        "supply": instance.supply(),
        "supply_end": trace.supply_end,
        "exhausted_at": trace.exhausted_at,
        "transport": cost.transport,
        "penalty": cost.penalty,
        "total": cost.total,
        "opt_relaxed": opt.cost_relaxed,
        "opt_rounded": opt.cost_rounded,
        "ratio_relaxed": (opt.cost_relaxed > 0.0).then(|| cost.total / opt.cost_relaxed),
        "gamma": gamma.as_ref().map(|g| g.as_slice().to_vec()),
        "eta": predictions.as_ref().map(|p| p.eta),
        "violations": violations,
    }));
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut config = SweepConfig::from_path(&args.config)?;
    config.apply_env_seed()?;
    match args.baseline_rho.as_deref() {
        Some("grid") => config.baseline_rho = BaselineRho::Grid,
        Some(_) => config.baseline_rho = BaselineRho::Actual,
        None => {}
    }
    let out = args
        .out
        .or(config.output.clone())
        .context("no output directory: pass --out or set \"output\" in the config")?;
    let rows = run_sweep(&config)?;
    let written = write_outputs(&rows, &out)?;
    let violations: usize = rows.iter().map(|r| r.invariant_violations).sum();
    eprintln!("{} rows, {violations} invariant violations", rows.len());
    for path in written {
        println!("{}", path.display());
    }
    if violations > 0 {
        bail!("{violations} invariant violations in threshold-policy runs");
    }
    Ok(())
}

fn grid_or_default(rho: Vec<f64>) -> Vec<f64> {
    if rho.is_empty() {
        default_rho_grid()
    } else {
        rho
    }
}

fn gen_hard(kind: HardKind) -> Result<()> {
    match kind {
        HardKind::Lower1 {
            n,
            gamma_units,
            epsilon,
            k,
            seed,
            out,
        } => {
            let (inst, hot) = gen_lower1(n, gamma_units, epsilon, k, seed)?;
            write_instance(&out, &inst)?;
            print_json(&json!({ "instance": out, "second_wave_sites": hot }));
        }
        HardKind::Lower2 { s, p, out_dir } => {
            let (e1, e2) = gen_lower2(s, p)?;
            write_pair(&out_dir, &e1, &e2)?;
        }
        HardKind::AdviceWeak {
            case,
            k,
            p,
            out_dir,
        } => {
            let (e1, e2) = gen_advice_weak(case, k, p)?;
            write_pair(&out_dir, &e1, &e2)?;
        }
        HardKind::Pareto {
            lambda,
            epsilon,
            c,
            out_dir,
        } => {
            let pair = gen_pareto(lambda, epsilon, c)?;
            fs::create_dir_all(&out_dir)?;
            write_instance(&out_dir.join("accurate.json"), &pair.accurate)?;
            write_instance(&out_dir.join("inaccurate.json"), &pair.inaccurate)?;
            let preds = json!({
                "s_hat": pair.predictions_accurate.s_hat,
                "d_hat": pair.predictions_accurate.d_hat,
            });
            fs::write(
                out_dir.join("predictions.json"),
                serde_json::to_string_pretty(&preds)?,
            )?;
            print_json(&json!({
                "k": pair.k,
                "tau": pair.tau,
                "opt_accurate": solve_offline(&pair.accurate).cost_relaxed,
                "opt_inaccurate": solve_offline(&pair.inaccurate).cost_relaxed,
            }));
        }
    }
    Ok(())
}

fn write_pair(dir: &Path, e1: &Instance, e2: &Instance) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_instance(&dir.join("e1.json"), e1)?;
    write_instance(&dir.join("e2.json"), e2)?;
    print_json(&json!({
        "opt_e1": solve_offline(e1).cost_relaxed,
        "opt_e2": solve_offline(e2).cost_relaxed,
    }));
    Ok(())
}

fn ingest(args: IngestTaxiArgs) -> Result<()> {
    let options = TaxiOptions {
        capacity: args.capacity,
        normalize_distances: !args.no_normalize,
        split_site: args.split_site,
    };
    let demand =
        File::open(&args.demand).with_context(|| format!("opening {}", args.demand.display()))?;
    let geo = File::open(&args.geo).with_context(|| format!("opening {}", args.geo.display()))?;
    let taxi = if args.zones {
        ingest_taxi_zones(demand, geo, &options)?
    } else {
        ingest_taxi(demand, geo, &options)?
    };
    let family = InstanceFamily::from_base(taxi.instance.clone(), &grid_or_default(args.rho));
    let paths = write_family(&args.out_dir, "taxi", &family)?;
    let meta = json!({
        "sites": taxi.geo,
        "warehouse": [taxi.warehouse.0, taxi.warehouse.1],
        "dates": taxi.dates.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
        "distance_scale": taxi.distance_scale,
        "capacity": options.capacity,
        "penalty": taxi.instance.penalty(),
        "instances": paths,
    });
    fs::write(
        args.out_dir.join("taxi_meta.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    print_json(&meta);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
        Command::Opt { instance } => {
            let inst = load_instance(&instance)?;
            println!("{}", solve_offline(&inst).to_json_pretty());
            Ok(())
        }
        Command::GenSynthetic(args) => {
            let config = SyntheticConfig {
                n: args.n,
                horizon: args.horizon,
                capacity: args.capacity,
                alpha: args.alpha,
                beta: args.beta,
                b_mean: args.b_mean,
                rho_grid: grid_or_default(args.rho),
                seed: args.seed,
            };
            let family = gen_synthetic(&config)?;
            for path in write_family(&args.out_dir, "synthetic", &family)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::GenHard { kind } => gen_hard(kind),
        Command::IngestTaxi(args) => ingest(args),
    }
}
