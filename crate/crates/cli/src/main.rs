//! `origins`: run pipeline stages, score and search, export bundles, serve.
//!
//! Exit codes: 0 ok, 2 usage or configuration, 3 data, 4 numerical.

mod manifest;

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use origins_core::bundle::{self, export_bundle, write_run_artifacts, year_dir, Bundle, SIMULATION_FILE};
use origins_core::config::Config;
use origins_core::simulate::{
    grid_search, prepare_routing, prepare_year, read_captives_csv, score_port_counts, score_records,
    score_ships_for, simulate_stage, study_grid, SearchCell, ShipScores, YearScore,
};
use origins_core::surface::{krig_surface, normalize_to_pdf, observations};
use origins_core::{Error, ErrorCategory, GeoData};
use serde::Serialize;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "origins", version, about = "Conflict-driven origin maps for a trade network")]
struct Cli {
    /// Directory holding conflicts.csv, cities.csv, edges.csv and the optional
    /// ports.csv, ledgers.csv and regions.json.
    #[arg(long, global = true, default_value = "data")]
    data_dir: PathBuf,
    /// TOML configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Only report warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Krige one year's conflict surface; writes intensity and pdf grids.
    Krig {
        #[arg(long)]
        year: i32,
    },
    /// Simulate captives for each year and write the run artifacts.
    Simulate {
        #[command(flatten)]
        years: YearsArg,
    },
    /// Score simulation results against port totals and ship ledgers.
    Score {
        /// Directory written by `simulate` (defaults to --out).
        #[arg(long)]
        results: Option<PathBuf>,
        #[command(flatten)]
        years: OptYearsArg,
    },
    /// Grid search over c_max, epsilon and reward spread.
    Search {
        #[command(flatten)]
        years: OptYearsArg,
        /// Captives per year and cell (overrides search.n_captives).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Assemble the per-year bundle the server loads.
    ExportBundle {
        /// Directory written by `simulate`.
        #[arg(long)]
        results: PathBuf,
        #[command(flatten)]
        years: OptYearsArg,
    },
    /// Serve a bundle over HTTP.
    Serve {
        /// Bundle directory (defaults to --out).
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Show the effective configuration.
    Config {
        /// Print the built-in defaults instead.
        #[arg(long)]
        print_defaults: bool,
    },
}

#[derive(Args)]
struct YearsArg {
    /// Years as `1824`, `1824-1826` or `1824,1830`.
    #[arg(long, value_parser = parse_years)]
    years: Years,
}

#[derive(Args)]
struct OptYearsArg {
    /// Years as `1824`, `1824-1826` or `1824,1830`.
    #[arg(long, value_parser = parse_years)]
    years: Option<Years>,
}

/// A sorted, deduplicated year list.
#[derive(Debug, Clone)]
struct Years(Vec<i32>);

fn parse_years(s: &str) -> Result<Years, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("`{part}` is not a year or year range");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (i32, i32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(format!("empty year range {part}"));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err("no years given".into());
    }
    out.sort_unstable();
    out.dedup();
    Ok(Years(out))
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match (e.root(), e.category()) {
            (Error::Config(_), _) => 2,
            (_, ErrorCategory::Numeric) => 4,
            (_, ErrorCategory::Data) => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 3,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

struct Ctx {
    cli_data: PathBuf,
    config_path: Option<PathBuf>,
    config: Config,
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn data(&self) -> Result<GeoData, Failure> {
        GeoData::load_dir(&self.cli_data).map_err(Failure::from)
    }

    fn manifest(&self, command: &str) -> Result<RunManifest, Failure> {
        let mut m = RunManifest::start(command, serde_json::to_value(&self.config).map_err(|e| Failure::usage(e.to_string()))?);
        if self.cli_data.is_dir() {
            m.inputs_in(&self.cli_data)?;
        }
        if let Some(p) = &self.config_path {
            m.input(p)?;
        }
        Ok(m)
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<Config, Failure> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::usage(format!("cannot read config {}: {e}", p.display())))?;
            Config::from_toml_str(&text)?
        }
        None => Config::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T, m: &mut RunManifest) -> Outcome {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_vec_pretty(value).map_err(|e| Failure::usage(e.to_string()))?)?;
    m.output(path)?;
    Ok(())
}

fn cmd_krig(ctx: &Ctx, year: i32) -> Outcome {
    let data = ctx.data()?;
    let mut m = ctx.manifest("krig")?;
    let run = || -> origins_core::Result<_> {
        let cov = ctx.config.covariance.resolve(&data)?;
        let frame = data.frame()?;
        let events = data.active_conflicts(year);
        if events.is_empty() {
            return Err(Error::EmptyYear(year));
        }
        let spec = study_grid(&data, &frame, &ctx.config.grid)?;
        let intensity = krig_surface(&observations(&events, &frame)?, &cov, &spec, year)?;
        let pdf = normalize_to_pdf(&intensity)?;
        Ok((intensity, pdf))
    };
    let (intensity, pdf) = run()?;
    let dir = year_dir(&ctx.out, year);
    write_json(&dir.join(bundle::INTENSITY_FILE), &intensity, &mut m)?;
    write_json(&dir.join(bundle::PDF_FILE), &pdf, &mut m)?;
    ctx.say(format!("{year}: kriged {}x{} grid, max intensity {:.3}", intensity.spec.nx, intensity.spec.ny, intensity.max()));
    m.finish(&ctx.out)?;
    Ok(())
}

#[derive(Serialize)]
struct RunSummary {
    year: i32,
    n_captives: usize,
    port_counts: BTreeMap<String, usize>,
    unresolved: usize,
    score: Option<YearScore>,
    config: origins_core::simulate::YearConfig,
}

fn cmd_simulate(ctx: &Ctx, years: &[i32]) -> Outcome {
    let data = ctx.data()?;
    let mut m = ctx.manifest("simulate")?;
    let cov = ctx.config.covariance.resolve(&data)?;
    let mut first: Option<Failure> = None;
    for &year in years {
        let cfg = ctx.config.year_config(year, cov);
        let run = || -> origins_core::Result<_> {
            let stage = prepare_year(&data, year, &cfg.covariance, &cfg.grid)?;
            let routing = prepare_routing(&stage, &cfg)?;
            let result = simulate_stage(&stage, &routing, &cfg)?;
            Ok((stage, routing, result))
        };
        match run() {
            Ok((stage, routing, result)) => {
                let dir = year_dir(&ctx.out, year);
                write_run_artifacts(&dir, &stage, &routing, &result)?;
                for f in bundle::RUN_FILES {
                    m.output(&dir.join(f))?;
                }
                let score = score_records(&result.captives, &result.frame, year, &data).ok();
                let summary = RunSummary {
                    year,
                    n_captives: cfg.n_captives,
                    port_counts: result.port_counts.clone(),
                    unresolved: result.unresolved,
                    score,
                    config: cfg.clone(),
                };
                write_json(&dir.join("run.json"), &summary, &mut m)?;
                ctx.say(format!(
                    "{year}: {} resolved, {} unresolved{}",
                    result.resolved(),
                    result.unresolved,
                    summary.score.map(|s| format!(", chi2 {:.3}", s.total)).unwrap_or_default()
                ));
            }
            Err(e) => {
                log::error!("{e}");
                m.fail(year.to_string(), e.to_string());
                first.get_or_insert(Failure::from(e));
            }
        }
    }
    m.finish(&ctx.out)?;
    first.map_or(Ok(()), Err)
}

/// Year subdirectories of `dir`, sorted.
fn year_dirs(dir: &Path) -> Result<Vec<i32>, Failure> {
    let mut years: Vec<i32> = fs::read_dir(dir)
        .map_err(|e| Failure::from(Error::MissingArtifact(format!("{}: {e}", dir.display()))))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str()?.parse().ok())
        .collect();
    years.sort_unstable();
    Ok(years)
}

#[derive(Serialize)]
struct YearScores {
    year: i32,
    ports: Option<origins_core::simulate::ChiSquare>,
    ships: Option<ShipScores>,
    total: f64,
}

fn cmd_score(ctx: &Ctx, results: &Path, years: Option<&[i32]>) -> Outcome {
    let data = ctx.data()?;
    let frame = data.frame()?;
    let mut m = ctx.manifest("score")?;
    let years = match years {
        Some(y) => y.to_vec(),
        None => year_dirs(results)?,
    };
    let mut out = Vec::new();
    for year in years {
        let csv = year_dir(results, year).join(SIMULATION_FILE);
        let file = fs::File::open(&csv).map_err(|_| Failure::from(Error::MissingArtifact(csv.display().to_string())))?;
        m.input(&csv)?;
        let rows = read_captives_csv(file)?;
        let has_ports = data.ports.iter().any(|p| p.year == year && !p.is_unknown());
        let has_ships = data.ledgers.iter().any(|l| l.year == year);
        if !has_ports && !has_ships {
            ctx.say(format!("{year}: no validation data"));
            continue;
        }
        let score = || -> origins_core::Result<YearScores> {
            let ports = if has_ports {
                let mut counts = BTreeMap::new();
                for r in rows.iter().filter(|r| r.sale != origins_core::simulate::UNRESOLVED) {
                    *counts.entry(r.sale.clone()).or_insert(0usize) += 1;
                }
                Some(score_port_counts(&counts, &data.ports, year)?)
            } else {
                None
            };
            let ships = has_ships
                .then(|| score_ships_for(&rows, &frame, year, &data.ledgers, &data.regions))
                .transpose()?;
            let total = ports.map_or(0.0, |c| c.statistic) + ships.as_ref().map_or(0.0, |s| s.total);
            Ok(YearScores { year, ports, ships, total })
        };
        let s = score().map_err(|e| e.at(year, None))?;
        if let Some(p) = s.ports {
            ctx.say(format!("{year}  ports                 chi2 {:>12.3}  df {}", p.statistic, p.df));
        }
        for ship in s.ships.iter().flat_map(|x| &x.ships) {
            ctx.say(format!(
                "{year}  {:<12} {:<8} chi2 {:>12.3}  df {}  ({} simulated)",
                ship.ship_id, ship.port, ship.statistic, ship.df, ship.simulated
            ));
        }
        ctx.say(format!("{year}  total                 chi2 {:>12.3}", s.total));
        out.push(s);
    }
    write_json(&ctx.out.join("scores.json"), &out, &mut m)?;
    m.finish(&ctx.out)?;
    Ok(())
}

fn cmd_search(ctx: &Ctx, years: Option<&[i32]>, n: Option<usize>) -> Outcome {
    let data = ctx.data()?;
    let mut m = ctx.manifest("search")?;
    let s = &ctx.config.search;
    let years = years.map(<[i32]>::to_vec).unwrap_or_else(|| s.years.clone());
    let cov = ctx.config.covariance.resolve(&data)?;
    let mut base = ctx.config.year_config(0, cov);
    base.n_captives = n.unwrap_or(s.n_captives);
    if base.n_captives == 0 {
        return Err(Failure::usage("--n must be >= 1"));
    }
    let ranked: Vec<SearchCell> = grid_search(&s.grid(), &base, &data, &years)?;
    ctx.say(format!("{:>4}  {:>8}  {:>8}  {:>9}  {:>12}", "rank", "c_max", "epsilon", "reward_sd", "chi2"));
    for (i, c) in ranked.iter().enumerate() {
        let score = c.score.map_or_else(|| "failed".to_string(), |v| format!("{v:.3}"));
        ctx.say(format!("{:>4}  {:>8}  {:>8}  {:>9}  {:>12}", i + 1, c.c_max, c.epsilon, c.reward_sd, score));
    }
    write_json(&ctx.out.join("search.json"), &ranked, &mut m)?;
    m.finish(&ctx.out)?;
    Ok(())
}

fn cmd_export(ctx: &Ctx, results: &Path, years: Option<&[i32]>) -> Outcome {
    let data = ctx.data()?;
    let mut m = ctx.manifest("export-bundle")?;
    let years = match years {
        Some(y) => y.to_vec(),
        None => year_dirs(results)?,
    };
    if years.is_empty() {
        return Err(Error::MissingArtifact(format!("no year directories under {}", results.display())).into());
    }
    let config = serde_json::to_value(&ctx.config).map_err(|e| Failure::usage(e.to_string()))?;
    export_bundle(results, &data, &years, config, &ctx.out)?;
    // round trip through the server's startup validation
    Bundle::load(&ctx.out)?;
    for &y in &years {
        for f in bundle::YEAR_FILES {
            m.output(&year_dir(&ctx.out, y).join(f))?;
        }
    }
    m.output(&ctx.out.join(bundle::INDEX_FILE))?;
    ctx.say(format!("bundle with {} years written to {}", years.len(), ctx.out.display()));
    m.finish(&ctx.out)?;
    Ok(())
}

fn cmd_serve(ctx: &Ctx, dir: &Path, addr: SocketAddr) -> Outcome {
    let store = origins_server::BundleStore::open(dir)?;
    ctx.say(format!("serving {} years from {} on http://{addr}", store.years().len(), dir.display()));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(origins_server::serve(Arc::new(store), addr))?;
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    if let Command::Config { print_defaults: true } = cli.command {
        print!("{}", Config::defaults_toml());
        return Ok(());
    }
    let config = load_config(cli.config.as_deref(), cli.seed)?;
    let ctx = Ctx {
        cli_data: cli.data_dir,
        config_path: cli.config,
        config,
        out: cli.out,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Krig { year } => cmd_krig(&ctx, *year),
        Command::Simulate { years } => cmd_simulate(&ctx, &years.years.0),
        Command::Score { results, years } => {
            cmd_score(&ctx, results.as_deref().unwrap_or(&ctx.out), years.years.as_ref().map(|y| y.0.as_slice()))
        }
        Command::Search { years, n } => cmd_search(&ctx, years.years.as_ref().map(|y| y.0.as_slice()), *n),
        Command::ExportBundle { results, years } => cmd_export(&ctx, results, years.years.as_ref().map(|y| y.0.as_slice())),
        Command::Serve { bundle, addr } => cmd_serve(&ctx, bundle.as_deref().unwrap_or(&ctx.out), *addr),
        Command::Config { .. } => {
            print!("{}", ctx.config.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
