//! `nrhdg`: run drone races, compare controllers and render figures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nrhdg::controllers::ControllerKind;
use nrhdg::demo::{track_projection, write_samples, Excursion};
use nrhdg::io::{self, plot, ExperimentConfig, RunManifest};
use nrhdg::path::SinusoidPath;
use nrhdg::race::{
    compare_races, extract_progress, extract_progress_measured, run_races, Pairing, RaceLog, RaceRun, PAIRINGS,
};
use nrhdg::{Error, Result};

#[derive(Parser)]
#[command(name = "nrhdg", version, about = "Two-drone racing with NMPC and receding-horizon game controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; the shipped configuration when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct RaceArgs {
    #[command(flatten)]
    common: Common,
    /// Leave wall-clock solve times out of the logs so that repeated runs
    /// produce byte-identical files.
    #[arg(long)]
    seedless: bool,
    /// Also render SVG figures.
    #[arg(long)]
    plots: bool,
    /// Races run concurrently (defaults to the available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one race; `--pair B,A` puts B in front and A behind.
    Race {
        #[arg(long, value_parser = parse_pair, default_value = "D,M")]
        pair: Pairing,
        #[command(flatten)]
        args: RaceArgs,
    },
    /// Run all four pairings and report the overtaking/obstructing comparison.
    Compare {
        #[command(flatten)]
        args: RaceArgs,
        /// Format of the report printed to stdout.
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Track the projection point of a drone flying a prescribed trajectory.
    ProjectDemo {
        #[command(flatten)]
        common: Common,
    },
    /// Render SVG figures from race logs. Logs named `race_B_A.csv` for all
    /// four pairings also produce the comparison figures.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(required = true, value_name = "CSV")]
        logs: Vec<PathBuf>,
    },
}

fn parse_pair(s: &str) -> std::result::Result<Pairing, String> {
    let letters: Vec<&str> = s.split(',').map(str::trim).collect();
    let kind = |t: &str| {
        let mut c = t.chars();
        match (c.next(), c.next()) {
            (Some(ch), None) => ControllerKind::from_letter(ch).ok_or_else(|| format!("unknown controller `{t}`")),
            _ => Err(format!("expected a controller letter (M, D or H), got `{t}`")),
        }
    };
    match letters.as_slice() {
        [front, rear] => Ok((kind(front)?, kind(rear)?)),
        _ => Err("expected FRONT,REAR such as D,M".into()),
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    match &common.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::shipped()),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn log_name(p: Pairing) -> String {
    format!("race_{}_{}.csv", p.0.letter().to_ascii_lowercase(), p.1.letter().to_ascii_lowercase())
}

fn pairing_from_name(path: &Path) -> Option<Pairing> {
    let stem = path.file_stem()?.to_str()?;
    let rest = stem.strip_prefix("race_")?;
    parse_pair(&rest.replace('_', ",")).ok()
}

fn jobs(requested: Option<usize>) -> usize {
    requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn write_figures(dir: &Path, figures: Vec<(String, String)>, manifest: &mut RunManifest) -> Result<()> {
    for (name, svg) in figures {
        std::fs::write(dir.join(&name), svg)?;
        manifest.artifacts.push(name);
    }
    Ok(())
}

fn record_run(cfg: &ExperimentConfig, dir: &Path, p: Pairing, run: &RaceRun, manifest: &mut RunManifest) -> Result<()> {
    let name = log_name(p);
    io::write_log_file(&dir.join(&name), &run.log)?;
    manifest.artifacts.push(name);
    let path = cfg.path.build();
    let progress = extract_progress_measured(
        &run.log,
        cfg.race.overtake_measure,
        &path,
        cfg.race.rear_theta0,
        cfg.race.front_theta0,
    );
    manifest.add_race(run, progress.overtake_time);
    Ok(())
}

fn race(pair: Pairing, args: &RaceArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let dir = &args.common.out;
    prepare_out(dir)?;
    let rc = cfg.race_config(pair.0, pair.1, !args.seedless);
    let run = run_races(std::slice::from_ref(&rc), 1).remove(0)?;
    let mut manifest = RunManifest::new("race", &cfg);
    record_run(&cfg, dir, pair, &run, &mut manifest)?;
    if args.plots {
        write_figures(dir, plot::race_figures(&rc.label(), &run.log, &cfg.path.build()), &mut manifest)?;
    }
    manifest.write(&dir.join("manifest.json"))?;
    let summary = &manifest.races[0];
    match summary.overtake_time {
        Some(t) => println!("{}: overtake at t = {t:.3} s", summary.race),
        None => println!("{}: no overtake within {} s", summary.race, cfg.race.duration),
    }
    for (who, stats) in ["rear", "front"].iter().zip(summary.timing) {
        println!("{who}: mean solve {:.3} ms, max {:.3} ms over {} updates", stats.mean_ms, stats.max_ms, stats.updates);
    }
    Ok(())
}

fn compare(args: &RaceArgs, format: ReportFormat) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let dir = &args.common.out;
    prepare_out(dir)?;
    let configs: Vec<_> = PAIRINGS
        .iter()
        .map(|&(f, r)| cfg.race_config(f, r, !args.seedless))
        .collect();
    let results = run_races(&configs, jobs(args.jobs));
    let mut manifest = RunManifest::new("compare", &cfg);
    let mut logs = BTreeMap::new();
    let mut first_error = None;
    for (&p, result) in PAIRINGS.iter().zip(results) {
        match result {
            Ok(run) => {
                record_run(&cfg, dir, p, &run, &mut manifest)?;
                if args.plots {
                    let label = format!("Race({},{})", p.0.letter(), p.1.letter());
                    write_figures(dir, plot::race_figures(&label, &run.log, &cfg.path.build()), &mut manifest)?;
                }
                logs.insert(p, run.log);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let outcome = first_error
        .map_or_else(|| compare_races(&logs, &cfg.comparison), Err)
        .map(|report| {
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            (report, json)
        });
    if args.plots {
        write_figures(dir, plot::comparison_figures(&logs), &mut manifest)?;
    }
    if let Ok((report, json)) = &outcome {
        std::fs::write(dir.join("report.json"), format!("{json}\n"))?;
        std::fs::write(dir.join("report.txt"), report.to_text())?;
        manifest.artifacts.extend(["report.json".to_string(), "report.txt".to_string()]);
    }
    manifest.write(&dir.join("manifest.json"))?;
    let (report, json) = outcome?;
    match format {
        ReportFormat::Text => {
            print!("{}", report.to_text());
            for (name, t) in &manifest.timing {
                println!("{name}: mean solve {:.3} ms, max {:.3} ms over {} updates", t.mean_ms, t.max_ms, t.updates);
            }
        }
        ReportFormat::Json => println!("{json}"),
    }
    Ok(())
}

fn project_demo(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    prepare_out(&common.out)?;
    let path: SinusoidPath = cfg.path.build();
    let d = &cfg.demo;
    let traj = Excursion {
        theta0: d.theta0,
        speed: d.speed,
        terms: d.excursion,
    };
    let samples = track_projection(&path, &traj, d.duration, d.step, d.sample_every)?;
    let name = "projection_demo.csv";
    write_samples(std::io::BufWriter::new(std::fs::File::create(common.out.join(name))?), &samples)?;
    let mut manifest = RunManifest::new("project-demo", &cfg);
    manifest.artifacts.push(name.into());
    manifest.write(&common.out.join("manifest.json"))?;
    let worst = samples.iter().map(|s| s.stationarity.abs()).fold(0.0, f64::max);
    let margin = samples.iter().map(|s| s.margin).fold(f64::INFINITY, f64::min);
    let last = samples.last().expect("at least the initial sample");
    println!(
        "{} samples; final theta {:.6}, arc length {:.6}; max |stationarity| {worst:.3e}; min singularity margin {margin:.3}",
        samples.len(),
        last.theta,
        last.sigma
    );
    Ok(())
}

fn plot_logs(common: &Common, logs: &[PathBuf]) -> Result<()> {
    let cfg = load_config(common)?;
    prepare_out(&common.out)?;
    let path = cfg.path.build();
    let mut manifest = RunManifest::new("plot", &cfg);
    let mut by_pair: BTreeMap<Pairing, RaceLog> = BTreeMap::new();
    for file in logs {
        let log = io::read_log_file(file).map_err(|e| match e {
            Error::Io(m) => Error::Io(format!("{}: {m}", file.display())),
            other => other,
        })?;
        let label = match pairing_from_name(file) {
            Some(p) => format!("Race({},{})", p.0.letter(), p.1.letter()),
            None => file.file_stem().and_then(|s| s.to_str()).unwrap_or("race").to_string(),
        };
        write_figures(&common.out, plot::race_figures(&label, &log, &path), &mut manifest)?;
        if let Some(p) = pairing_from_name(file) {
            by_pair.insert(p, log);
        }
    }
    if PAIRINGS.iter().all(|p| by_pair.contains_key(p)) {
        write_figures(&common.out, plot::comparison_figures(&by_pair), &mut manifest)?;
        for (p, log) in &by_pair {
            if let Some(t) = extract_progress(log).overtake_time {
                println!("Race({},{}): overtake at t = {t:.3} s", p.0.letter(), p.1.letter());
            }
        }
    }
    manifest.write(&common.out.join("manifest.json"))?;
    println!("wrote {} figures to {}", manifest.artifacts.len(), common.out.display());
    Ok(())
}

fn error_record(e: &Error) -> serde_json::Value {
    let mut rec = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    match e {
        Error::RaceFailed { time, .. } => rec["time"] = (*time).into(),
        Error::Parse { row, column, .. } => {
            rec["row"] = (*row).into();
            rec["column"] = (*column).into();
        }
        _ => {}
    }
    rec
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Race { pair, args } => race(*pair, args),
        Command::Compare { args, format } => compare(args, *format),
        Command::ProjectDemo { common } => project_demo(common),
        Command::Plot { common, logs } => plot_logs(common, logs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(1)
        }
    }
}
