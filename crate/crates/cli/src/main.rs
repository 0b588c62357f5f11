//! `ovplan`: plan deconflicted routes, build their operational-volume
//! contracts, run the congested scenario and verify contracts.
//!
//! Exit codes: 0 success, 2 domain failure (no route, infeasible scenario,
//! conflicts found), 1 usage or I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ovplan::airspace::{AirspaceModel, ContractStore};
use ovplan::config::ScenarioConfig;
use ovplan::flightsim::{simulate_route, SimConfig};
use ovplan::geometry::GeoPoint;
use ovplan::io::{
    contract_geojson, overlay_geojson, read_json, route_geojson, write_json, write_schedule_csv,
    write_trajectory_csv, ContractDocument, ContractsInput, RouteDocument, StoreDocument,
};
use ovplan::ovgen::build_contract;
use ovplan::router::plan_with_stats;
use ovplan::verify::{check_accuracy, check_contracts, cross_check, run_congested};
use ovplan::Error;

#[derive(Parser)]
#[command(name = "ovplan", version, about = "Strategic route planning with ellipse operational volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario configuration file (JSON); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one route, simulate it and emit its contract.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Airspace file (JSON)
        #[arg(long)]
        airspace: PathBuf,
        /// Origin vertiport id.
        #[arg(long)]
        from: String,
        /// Destination vertiport id.
        #[arg(long)]
        to: String,
        /// Departure time, seconds since the scenario epoch.
        #[arg(long, default_value_t = 0.0)]
        depart: f64,
        /// Cruise speed, m/s.
        #[arg(long)]
        speed: Option<f64>,
        /// Existing contracts (store dump or contract file) to deconflict against.
        #[arg(long)]
        contracts: Option<PathBuf>,
        /// Contract id to assign.
        #[arg(long, default_value = "C000")]
        id: String,
        /// Also write the full trajectory dump as CSV.
        #[arg(long)]
        trajectory: bool,
    },
    /// Fill the departure window with deconflicted flights.
    Congested {
        #[command(flatten)]
        common: Common,
        /// Airspace file (JSON)
        #[arg(long)]
        airspace: PathBuf,
        /// Number of contracts to place.
        #[arg(long)]
        target: Option<usize>,
        /// Include planning wall-times in the schedule CSV (not reproducible).
        #[arg(long)]
        wall_time: bool,
    },
    /// Check contracts for pairwise conflicts and holdout accuracy.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Contract files or store dumps.
        #[arg(long, num_args = 0.., required = true)]
        contracts: Vec<PathBuf>,
        /// Skip the Monte-Carlo accuracy checks.
        #[arg(long)]
        no_accuracy: bool,
    },
    /// Simulate a route file and dump the trajectories as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Route file as written by `plan`
        #[arg(long)]
        route: PathBuf,
    },
}

/// A failure with its exit code.
enum Failure {
    Usage(anyhow::Error),
    Domain(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::NoRoute { .. } | Error::ScenarioInfeasible { .. }) => Self::Domain(e),
            _ => Self::Usage(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CliResult<T = ()> = Result<T, Failure>;

#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    seed: u64,
    artifacts: Vec<String>,
}

/// Collects the files written under the output directory.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn create(dir: PathBuf) -> anyhow::Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, written: Vec::new() })
    }

    fn path(&mut self, name: &str) -> anyhow::Result<PathBuf> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.written.push(name.to_string());
        Ok(p)
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let p = self.path(name)?;
        write_json(&p, value).with_context(|| format!("writing {}", p.display()))
    }

    fn finish(mut self, command: &'static str, seed: u64) -> anyhow::Result<()> {
        self.written.push("manifest.json".into());
        let manifest = Manifest {
            command,
            seed,
            artifacts: self.written.clone(),
        };
        write_json(self.dir.join("manifest.json"), &manifest)?;
        Ok(())
    }
}

fn load_config(common: &Common) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

/// The configuration as written next to the artifacts. The output directory
/// is dropped so identical runs produce identical files wherever they land.
fn recorded(cfg: &ScenarioConfig) -> ScenarioConfig {
    ScenarioConfig {
        output_dir: None,
        ..cfg.clone()
    }
}

fn out_dir(cfg: &ScenarioConfig) -> PathBuf {
    cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn load_airspace(path: &Path) -> anyhow::Result<AirspaceModel> {
    AirspaceModel::load(path).with_context(|| format!("loading airspace {}", path.display()))
}

/// Reads contract documents from every input file.
fn load_documents(paths: &[PathBuf]) -> anyhow::Result<Vec<ContractDocument>> {
    let mut docs = Vec::new();
    for p in paths {
        let input: ContractsInput = read_json(p).with_context(|| format!("reading contracts {}", p.display()))?;
        docs.extend(input.into_documents());
    }
    Ok(docs)
}

fn store_from(docs: &[ContractDocument], origin: GeoPoint) -> anyhow::Result<ContractStore> {
    let mut store = ContractStore::default();
    for d in docs {
        store.register(d.to_contract(origin)?)?;
    }
    Ok(store)
}

#[allow(clippy::too_many_arguments)]
fn cmd_plan(
    common: &Common,
    airspace: &Path,
    from: &str,
    to: &str,
    depart: f64,
    speed: Option<f64>,
    contracts: Option<&Path>,
    id: &str,
    trajectory: bool,
) -> CliResult {
    let mut cfg = load_config(common)?;
    if let Some(v) = speed {
        cfg.router.cruise_speed = v;
    }
    cfg.validate().map_err(anyhow::Error::from)?;
    let air = load_airspace(airspace)?;
    // Validate ids before anything is written.
    air.vertiport(from)?;
    air.vertiport(to)?;
    let store = match contracts {
        Some(p) => store_from(&load_documents(&[p.to_path_buf()])?, air.origin)?,
        None => ContractStore::default(),
    };

    let started = Instant::now();
    let (route, stats) = plan_with_stats(&air, &store, from, to, depart, &cfg.router)?;
    let plan_time = started.elapsed();
    let sim = SimConfig {
        cruise_altitude: cfg.sim.cruise_altitude,
        ..cfg.sim().centered_on(route.cruise_speed)
    };
    let records = simulate_route(&route, &sim).map_err(anyhow::Error::from)?;
    let contract = build_contract(id, &route, &records, &cfg.ovgen, sim.cruise_altitude, cfg.seed)
        .map_err(anyhow::Error::from)?;
    let total_time = started.elapsed();

    let mut out = Outputs::create(out_dir(&cfg))?;
    out.json("config.json", &recorded(&cfg))?;
    out.json("route.json", &RouteDocument::from_route(&route, air.origin))?;
    out.json("route.geojson", &route_geojson(&route, air.origin))?;
    out.json("contract.json", &ContractDocument::from_contract(&contract, air.origin))?;
    out.json("contract.geojson", &contract_geojson(&contract, air.origin))?;
    out.json("overlay.geojson", &overlay_geojson(&air, store.contracts().chain([&contract])))?;
    if trajectory {
        let p = out.path("trajectory.csv")?;
        let file = fs::File::create(&p).with_context(|| format!("writing {}", p.display()))?;
        write_trajectory_csv(std::io::BufWriter::new(file), &records, air.origin).map_err(anyhow::Error::from)?;
    }
    let dir = out.dir.clone();
    out.finish("plan", cfg.seed)?;

    println!("route {from} -> {to}: {:.1} m, {} waypoints", route.total_length, route.waypoints.len());
    println!("search: {} expansions, {:.3} s", stats.expanded, plan_time.as_secs_f64());
    println!("contract {}: {} OVs, {:.3} s total", contract.id, contract.ovs.len(), total_time.as_secs_f64());
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_congested(common: &Common, airspace: &Path, target: Option<usize>, wall_time: bool) -> CliResult {
    let mut cfg = load_config(common)?;
    if let Some(n) = target {
        cfg.congested.target = n;
    }
    cfg.validate().map_err(anyhow::Error::from)?;
    let air = load_airspace(airspace)?;

    let started = Instant::now();
    let outcome = run_congested(&air, &cfg.router, &cfg.sim(), &cfg.ovgen, &cfg.congested())?;
    let elapsed = started.elapsed();
    let cross = if cfg.verify.cross_check {
        let sim = SimConfig {
            aircraft: cfg.verify.trials,
            ..cfg.verify_sim()
        };
        Some(cross_check(&outcome.store, &sim).map_err(anyhow::Error::from)?)
    } else {
        None
    };

    let mut out = Outputs::create(out_dir(&cfg))?;
    out.json("config.json", &recorded(&cfg))?;
    out.json("store.json", &StoreDocument::from_store(&outcome.store, air.origin))?;
    for c in outcome.store.contracts() {
        out.json(&format!("contracts/{}.json", c.id), &ContractDocument::from_contract(c, air.origin))?;
        out.json(&format!("contracts/{}.geojson", c.id), &contract_geojson(c, air.origin))?;
    }
    out.json("overlay.geojson", &overlay_geojson(&air, outcome.store.contracts()))?;
    out.json("conflict_report.json", &outcome.report)?;
    if let Some(cc) = &cross {
        out.json("cross_check.json", cc)?;
    }
    let p = out.path("schedule.csv")?;
    let file = fs::File::create(&p).with_context(|| format!("writing {}", p.display()))?;
    write_schedule_csv(file, &outcome.schedule, wall_time).map_err(anyhow::Error::from)?;
    let dir = out.dir.clone();
    out.finish("congested", cfg.seed)?;

    println!(
        "placed {} contracts in {} requests ({:.1} s); rejected candidates: {} no route, {} too close, {} unbuildable",
        outcome.schedule.len(),
        outcome.attempts,
        elapsed.as_secs_f64(),
        outcome.rejections.no_route,
        outcome.rejections.too_close,
        outcome.rejections.unbuildable,
    );
    println!(
        "conflict report: {} ({} conflicting pairs)",
        if outcome.report.clear { "clear" } else { "NOT clear" },
        outcome.report.pairs.len()
    );
    if let Some(cc) = &cross {
        println!("cross-check: {} foreign inclusions in {} records", cc.foreign_inclusions, cc.records);
    }
    println!("wrote {}", dir.display());
    if !outcome.report.clear || cross.is_some_and(|c| c.foreign_inclusions > 0) {
        return Err(Failure::Domain(anyhow!("the placed contracts are not deconflicted")));
    }
    Ok(())
}

fn cmd_verify(common: &Common, contracts: &[PathBuf], no_accuracy: bool) -> CliResult {
    let cfg = load_config(common)?;
    cfg.validate().map_err(anyhow::Error::from)?;
    let docs = load_documents(contracts)?;
    let origin = match docs.first() {
        Some(d) => d.origin.to_geo().map_err(anyhow::Error::from)?,
        None => GeoPoint::new(0.0, 0.0).map_err(anyhow::Error::from)?,
    };
    let store = store_from(&docs, origin)?;
    let report = check_contracts(&store);
    let accuracy = if no_accuracy {
        Vec::new()
    } else {
        store
            .contracts()
            .map(|c| check_accuracy(c, &cfg.verify_sim(), cfg.verify.trials))
            .collect::<ovplan::Result<Vec<_>>>()
            .map_err(anyhow::Error::from)?
    };

    let mut out = Outputs::create(out_dir(&cfg))?;
    out.json("conflict_report.json", &report)?;
    if !no_accuracy {
        out.json("accuracy.json", &accuracy)?;
    }
    let dir = out.dir.clone();
    out.finish("verify", cfg.seed)?;

    println!(
        "{} contracts, conflict report {} ({} pairs)",
        report.contracts,
        if report.clear { "clear" } else { "NOT clear" },
        report.pairs.len()
    );
    for a in &accuracy {
        println!("{}: accuracy {:.4} over {} records", a.contract, a.accuracy, a.total_records);
    }
    println!("wrote {}", dir.display());
    if !report.clear {
        let pairs: Vec<String> = report.pairs.iter().map(|p| format!("{}/{}", p.contract_a, p.contract_b)).collect();
        return Err(Failure::Domain(anyhow!("conflicts found: {}", pairs.join(", "))));
    }
    Ok(())
}

fn cmd_simulate(common: &Common, route: &Path) -> CliResult {
    let cfg = load_config(common)?;
    cfg.validate().map_err(anyhow::Error::from)?;
    let doc: RouteDocument = read_json(route).with_context(|| format!("reading route {}", route.display()))?;
    let origin = doc.origin.to_geo().map_err(anyhow::Error::from)?;
    let route = doc.to_route(origin).map_err(anyhow::Error::from)?;
    let sim = cfg.sim().centered_on(route.cruise_speed);
    let records = simulate_route(&route, &sim).map_err(anyhow::Error::from)?;

    let mut out = Outputs::create(out_dir(&cfg))?;
    let p = out.path("trajectory.csv")?;
    let file = fs::File::create(&p).with_context(|| format!("writing {}", p.display()))?;
    write_trajectory_csv(std::io::BufWriter::new(file), &records, origin).map_err(anyhow::Error::from)?;
    let dir = out.dir.clone();
    out.finish("simulate", cfg.seed)?;
    println!("{} segments of {} aircraft; wrote {}", records.len(), sim.aircraft, dir.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Plan {
            common,
            airspace,
            from,
            to,
            depart,
            speed,
            contracts,
            id,
            trajectory,
        } => cmd_plan(common, airspace, from, to, *depart, *speed, contracts.as_deref(), id, *trajectory),
        Command::Congested {
            common,
            airspace,
            target,
            wall_time,
        } => cmd_congested(common, airspace, *target, *wall_time),
        Command::Verify {
            common,
            contracts,
            no_accuracy,
        } => cmd_verify(common, contracts, *no_accuracy),
        Command::Simulate { common, route } => cmd_simulate(common, route),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
