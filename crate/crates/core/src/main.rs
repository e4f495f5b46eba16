use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gcoerce::experiments::{
    read_records_csv, run_ensemble, tail_curve, verify_suite, write_records_csv, EnsembleSummary, ExperimentConfig,
    ExperimentError, REPORT_SCHEMA_VERSION,
};
use gcoerce::field::FieldDocument;
use gcoerce::frontier::{
    evolve, reachable_indicator, snapshot::{write_indicator, write_values}, volume, GridSpec, LevelSetState, Source,
};
use gcoerce::stats::r_star;
use gcoerce::theory::{default_lambda1, theorem_parameters, TheoryError};

#[derive(Parser)]
#[command(name = "gcoerce", version, about = "G-equation reachable sets, coercivity statistics and waiting times")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a field and write its full mode table.
    GenField(Common),
    /// E_N on a radius grid and the scale r*.
    Stats(StatsArgs),
    /// Evolve one point source and write grid snapshots.
    Evolve(EvolveArgs),
    /// Waiting-time ensemble over seeds and sources.
    WaitingTime(Common),
    /// Survival curve and tail fit of measured waiting times.
    Tails(TailsArgs),
    /// Derived constants of the waiting-time theorem.
    Params(ParamsArgs),
    /// Run the invariant checks and report pass/fail.
    Verify(Common),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Use this seed instead of the configured ones.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    n_r: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    center_time: Option<f64>,
    /// Comma-separated center point.
    #[arg(long, value_delimiter = ',')]
    center: Option<Vec<f64>>,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    t_final: Option<f64>,
}

#[derive(Args)]
struct TailsArgs {
    #[command(flatten)]
    common: Common,
    /// Waiting-time CSV; defaults to `<out-dir>/waiting_times.csv`.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long = "M")]
    m: f64,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// The theorem's large constant C.
    #[arg(long = "C", default_value_t = 1.0)]
    c_theorem: f64,
    /// The small constant c in β = c M^(-(d+1)).
    #[arg(long = "c", default_value_t = 1.0)]
    c_small: f64,
    /// Relative isoperimetric constant; a numerical estimate by default.
    #[arg(long)]
    lambda1: Option<f64>,
}

enum Failure {
    Check(String),
    Usage(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenField(a) => gen_field(&a),
        Command::Stats(a) => stats(&a),
        Command::Evolve(a) => evolve_cmd(&a),
        Command::WaitingTime(a) => waiting_time(&a),
        Command::Tails(a) => tails(&a),
        Command::Params(a) => params(&a),
        Command::Verify(a) => verify(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("gcoerce: check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("gcoerce: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.field.seed = seed;
        config.seeds.start = seed;
        config.seeds.count = 1;
    }
    let out = common.out_dir.clone().unwrap_or_else(|| config.out_dir.clone());
    fs::create_dir_all(&out)?;
    Ok((config, out))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn gen_field(a: &Common) -> Result<(), Failure> {
    let (config, out) = load(a)?;
    let field = config.field.build(config.field.seed)?;
    let doc = FieldDocument::from(field);
    match a.format {
        Format::Json => write_json(&out.join("field.json"), &doc),
        Format::Csv => {
            let path = out.join("mode_table.csv");
            let mut w = csv::Writer::from_path(&path).map_err(ExperimentError::from)?;
            let mut header: Vec<String> = (0..doc.dim).map(|i| format!("k_{i}")).collect();
            header.extend(["temporal_frequency", "amplitude", "phase"].map(String::from));
            if doc.dim == 3 {
                header.extend((0..3).map(|i| format!("p_{i}")));
            }
            w.write_record(&header).map_err(ExperimentError::from)?;
            for m in &doc.mode_table {
                let mut row: Vec<String> = m.wavevector.iter().map(|x| x.to_string()).collect();
                row.push(m.temporal_frequency.to_string());
                row.push(m.amplitude.to_string());
                row.push(m.phase.to_string());
                if let Some(p) = &m.polarization {
                    row.extend(p.iter().map(|x| x.to_string()));
                }
                w.write_record(&row).map_err(ExperimentError::from)?;
            }
            w.flush()?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn stats(a: &StatsArgs) -> Result<(), Failure> {
    let (config, out) = load(&a.common)?;
    let mut s = config.stats()?.clone();
    s.n = a.n.unwrap_or(s.n);
    s.epsilon = a.epsilon.unwrap_or(s.epsilon);
    s.r_min = a.r_min.unwrap_or(s.r_min);
    s.r_max = a.r_max.unwrap_or(s.r_max);
    s.n_r = a.n_r.unwrap_or(s.n_r);
    s.q = a.q.unwrap_or(s.q);
    s.center_time = a.center_time.unwrap_or(s.center_time);
    if let Some(c) = &a.center {
        s.center_point = Some(c.clone());
    }
    let point = s.center_point.clone().unwrap_or_else(|| vec![0.0; config.field.dim]);
    let field = config.field.build(config.field.seed)?;
    let result = r_star(&field, s.center_time, &point, &s.spec()).map_err(ExperimentError::from)?;
    if a.common.format == Format::Csv {
        let path = out.join("stats.csv");
        let mut w = csv::Writer::from_path(&path).map_err(ExperimentError::from)?;
        w.write_record(["r", "E_N", "censored"]).map_err(ExperimentError::from)?;
        for (r, e) in result.r_values.iter().zip(&result.e_n_values) {
            w.write_record([r.to_string(), e.to_string(), result.censored.to_string()])
                .map_err(ExperimentError::from)?;
        }
        w.flush()?;
        eprintln!("wrote {}", path.display());
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        schema_version: u32,
        seed: u64,
        #[serde(flatten)]
        stats: &'a gcoerce::stats::EmpiricalStats,
    }
    write_json(
        &out.join("stats.json"),
        &Summary {
            schema_version: REPORT_SCHEMA_VERSION,
            seed: config.field.seed,
            stats: &result,
        },
    )
}

fn evolve_cmd(a: &EvolveArgs) -> Result<(), Failure> {
    let (config, out) = load(&a.common)?;
    let mut e = config
        .evolve
        .clone()
        .ok_or_else(|| Failure::Usage("missing [evolve] section".into()))?;
    e.t_final = a.t_final.unwrap_or(e.t_final);
    let mut field = config.field.build(config.field.seed)?;
    if e.reverse {
        field = field.time_reversed();
    }
    let dim = config.field.dim;
    let x0 = e.x0.clone().unwrap_or_else(|| vec![0.0; dim]);
    let settings = config.front.settings();
    let delta = settings.delta();
    let speed = settings.scheme.laminar_speed + field.amplitude_bound();
    let run = || -> Result<Vec<LevelSetState>, gcoerce::frontier::FrontierError> {
        let grid = GridSpec::for_horizon(dim, settings.h, speed, e.t_final - e.t0, delta, &x0)?;
        let state = LevelSetState::point_source(grid, Source { t0: e.t0, x0: x0.clone() }, delta, settings.scheme)?;
        evolve(&state, &field, e.t_final, &e.snapshot_times)
    };
    let states = run().map_err(ExperimentError::from)?;
    #[derive(Serialize)]
    struct Snapshot {
        time: f64,
        values: String,
        indicator: String,
        volume: f64,
    }
    let mut snaps = Vec::new();
    for (k, s) in states.iter().enumerate() {
        let rs = reachable_indicator(s, settings.threshold).map_err(ExperimentError::from)?;
        let values = format!("u_{k:03}.bin");
        let indicator = format!("R_{k:03}.bin");
        let mut w = BufWriter::new(File::create(out.join(&values))?);
        write_values(&mut w, s).map_err(ExperimentError::from)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(out.join(&indicator))?);
        write_indicator(&mut w, &rs).map_err(ExperimentError::from)?;
        w.flush()?;
        snaps.push(Snapshot {
            time: s.time(),
            values,
            indicator,
            volume: volume(&rs, None),
        });
    }
    #[derive(Serialize)]
    struct Summary {
        schema_version: u32,
        seed: u64,
        h: f64,
        n: usize,
        delta: f64,
        snapshots: Vec<Snapshot>,
    }
    write_json(
        &out.join("evolve.json"),
        &Summary {
            schema_version: REPORT_SCHEMA_VERSION,
            seed: config.field.seed,
            h: settings.h,
            n: states[0].grid().n,
            delta,
            snapshots: snaps,
        },
    )
}

fn waiting_time(a: &Common) -> Result<(), Failure> {
    let (config, out) = load(a)?;
    let run = run_ensemble(&config)?;
    let records = run.records();
    match a.format {
        Format::Csv => {
            let path = out.join("waiting_times.csv");
            let mut w = BufWriter::new(File::create(&path)?);
            write_records_csv(&mut w, &records)?;
            w.flush()?;
            eprintln!("wrote {}", path.display());
        }
        Format::Json => write_json(&out.join("waiting_times.json"), &records)?,
    }
    let summary = EnsembleSummary::from_run(&run, &config.waiting()?.c);
    write_json(&out.join("waiting_summary.json"), &summary)
}

fn tails(a: &TailsArgs) -> Result<(), Failure> {
    let (config, out) = load(&a.common)?;
    let input = a.input.clone().unwrap_or_else(|| out.join("waiting_times.csv"));
    let records = read_records_csv(File::open(&input).map_err(|e| {
        Failure::Usage(format!("cannot open {}: {e}", input.display()))
    })?)?;
    if records.is_empty() {
        return Err(Failure::Usage(format!("{} holds no records", input.display())));
    }
    let t_max = config
        .tails
        .t_max
        .unwrap_or_else(|| records.iter().map(|r| r.horizon).fold(0.0, f64::max));
    let n_t = config.tails.n_t.max(2);
    let grid: Vec<f64> = (0..n_t).map(|i| t_max * i as f64 / (n_t - 1) as f64).collect();
    let curve = tail_curve(&records, &grid)?;
    match a.common.format {
        Format::Json => write_json(&out.join("tails.json"), &curve),
        Format::Csv => {
            let path = out.join("tails.csv");
            let mut w = csv::Writer::from_path(&path).map_err(ExperimentError::from)?;
            w.write_record(["t", "survival", "lower", "upper"]).map_err(ExperimentError::from)?;
            for i in 0..curve.t_grid.len() {
                w.write_record([
                    curve.t_grid[i].to_string(),
                    curve.survival[i].to_string(),
                    curve.lower[i].to_string(),
                    curve.upper[i].to_string(),
                ])
                .map_err(ExperimentError::from)?;
            }
            w.flush()?;
            eprintln!("wrote {}", path.display());
            write_json(&out.join("tails.json"), &curve)
        }
    }
}

fn params(a: &ParamsArgs) -> Result<(), Failure> {
    let lambda1 = a.lambda1.unwrap_or_else(|| default_lambda1(a.d));
    #[derive(Serialize)]
    struct Output<P: Serialize> {
        schema_version: u32,
        accepted: bool,
        violations: Vec<String>,
        params: P,
    }
    let (params, violations) = match theorem_parameters(a.m, a.d, a.c_theorem, a.c_small, lambda1) {
        Ok(p) => (p, Vec::new()),
        Err(TheoryError::Rejected { params, violations }) => (*params, violations),
        Err(e) => return Err(Failure::Usage(e.to_string())),
    };
    let accepted = violations.is_empty();
    let text = serde_json::to_string_pretty(&Output {
        schema_version: REPORT_SCHEMA_VERSION,
        accepted,
        violations: violations.clone(),
        params,
    })?;
    let _ = writeln!(std::io::stdout(), "{text}");
    if accepted {
        Ok(())
    } else {
        Err(Failure::Check(violations.join("; ")))
    }
}

fn verify(a: &Common) -> Result<(), Failure> {
    let (config, out) = load(a)?;
    let report = verify_suite(&config)?;
    let text = serde_json::to_string_pretty(&report)?;
    let _ = writeln!(std::io::stdout(), "{text}");
    fs::write(out.join("verify.json"), format!("{text}\n"))?;
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure::Check(failed.join(", ")))
    }
}
