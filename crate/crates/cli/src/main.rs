//! `irbeacon`: run approach simulations, detect light sources in PGM files,
//! score trajectory logs and sweep configuration keys.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use irbeacon_core::harness::metrics::{compute_metrics, compute_nested_metrics, write_metrics, MetricsTable};
use irbeacon_core::harness::{read_log_file, run_simulation_with, set_key, write_log_file, RunConfig, SimulationOutcome};
use irbeacon_core::imaging::pnm::{read_pgm_file, write_distance_pgm, write_pbm_file, write_pgm_file};
use irbeacon_core::{detect_light_sources, DetectorParams, SeedStream};

#[derive(Parser)]
#[command(name = "irbeacon", version, about = "Infrared-beacon landing tracker: simulation and tools")]
struct Cli {
    /// More progress output on stderr (repeat for per-frame lines).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Print nothing but errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fly one approach and write trajectory.csv, metrics.csv and config.toml.
    Simulate(SimulateArgs),
    /// Run the light source detector on a binary PGM and print detections as CSV.
    Detect(DetectArgs),
    /// Compute the band metrics of a trajectory log.
    Metrics(MetricsArgs),
    /// Run one simulation per value of a config key and collect the metrics in sweep.csv.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory.
    #[arg(short, long, env = "IRBEACON_OUT", default_value = "out")]
    out: PathBuf,
    /// Replaces the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `section.key=value` overrides, applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also dump every frame's image, source map and distance map under frames/.
    #[arg(long)]
    debug: bool,
}

#[derive(Args)]
struct DetectArgs {
    /// Binary (P5) PGM image.
    image: PathBuf,
    /// Detection threshold in standard deviations.
    #[arg(short, long, default_value_t = DetectorParams::default().k)]
    k: f64,
    /// Odd side length of the local window in pixels.
    #[arg(short, long, default_value_t = DetectorParams::default().window)]
    window: usize,
    /// Write the binary source map next to the input as `<stem>.sources.pbm`.
    #[arg(long)]
    write_map: bool,
}

#[derive(Args)]
struct MetricsArgs {
    /// Trajectory log written by `simulate`.
    log: PathBuf,
    /// Descending band boundaries in metres.
    #[arg(short, long, value_delimiter = ',', default_values_t = [500.0, 100.0, 10.0])]
    bands: Vec<f64>,
    /// Each band reaches down to touchdown instead of stopping at the next boundary.
    #[arg(long)]
    nested: bool,
    /// Also write the table to this CSV file.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Dotted config key to vary, e.g. `filter.particles`.
    #[arg(short, long)]
    key: String,
    /// Comma-separated values for the key.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Vec<String>,
    /// Give every run the base seed instead of one derived from its index.
    #[arg(long)]
    same_seed: bool,
    /// Runs in flight at once.
    #[arg(short, long, default_value_t = 1)]
    jobs: usize,
}

enum Failure {
    /// Bad configuration or unreadable input.
    Usage(String),
    /// Failure to write results.
    Io(String),
    /// The filter lost every hypothesis on at least one frame.
    Diverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Diverged(_) => 3,
        }
    }
}

fn io_failure(path: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

struct Ui {
    verbose: u8,
    quiet: bool,
}

impl Ui {
    fn say(&self, text: &str) {
        if !self.quiet {
            println!("{text}");
        }
    }

    fn progress(&self, level: u8, text: &str) {
        if !self.quiet && self.verbose >= level {
            eprintln!("{text}");
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ui = Ui {
        verbose: cli.verbose,
        quiet: cli.quiet,
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a, &ui),
        Command::Detect(a) => detect(a, &ui),
        Command::Metrics(a) => metrics(a, &ui),
        Command::Sweep(a) => sweep(a, &ui),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(m) | Failure::Io(m) | Failure::Diverged(m)) = &f;
            eprintln!("irbeacon: {m}");
            ExitCode::from(f.code())
        }
    }
}

fn load_table(path: &Path) -> Result<toml::Table, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    text.parse::<toml::Table>().map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<(), Failure> {
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("override {item:?} is not of the form key=value")))?;
        set_key(table, key.trim(), value).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn finish_config(table: toml::Table, seed: Option<u64>, origin: &Path) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::from_table(table).map_err(|e| Failure::Usage(format!("{}: {e}", origin.display())))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_config(run: &RunArgs) -> Result<RunConfig, Failure> {
    let mut table = load_table(&run.config)?;
    apply_overrides(&mut table, &run.overrides)?;
    finish_config(table, run.seed, &run.config)
}

/// Runs one simulation and writes its artifacts into `out`.
fn run_into(
    cfg: &RunConfig,
    out: &Path,
    debug: bool,
    ui: &Ui,
) -> Result<(SimulationOutcome, Result<MetricsTable, String>), Failure> {
    fs::create_dir_all(out).map_err(io_failure(out))?;
    let frames = out.join("frames");
    if debug {
        fs::create_dir_all(&frames).map_err(io_failure(&frames))?;
    }
    let mut dump_error: Option<Failure> = None;
    let outcome = run_simulation_with(cfg, |view| {
        ui.progress(2, &format!("frame {:4}  gain {:.3e}  sources {}", view.index, view.gain, view.sources.count()));
        if !debug || dump_error.is_some() {
            return;
        }
        let stem = frames.join(format!("{:04}", view.index));
        let dump = || -> io::Result<()> {
            write_pgm_file(&stem.with_extension("image.pgm"), view.image)?;
            write_pbm_file(&stem.with_extension("sources.pbm"), view.sources)?;
            let mut f = io::BufWriter::new(fs::File::create(stem.with_extension("distance.pgm"))?);
            write_distance_pgm(&mut f, view.distance)?;
            f.flush()
        };
        if let Err(e) = dump() {
            dump_error = Some(Failure::Io(format!("{}: {e}", frames.display())));
        }
    })
    .map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(e) = dump_error {
        return Err(e);
    }

    let log_path = out.join("trajectory.csv");
    write_log_file(&log_path, &outcome.log).map_err(|e| Failure::Io(format!("{}: {e}", log_path.display())))?;
    let cfg_path = out.join("config.toml");
    fs::write(&cfg_path, cfg.to_toml_string()).map_err(io_failure(&cfg_path))?;

    let table = compute_metrics(&outcome.log, &cfg.metrics.bands_m).map_err(|e| e.to_string());
    if let Ok(t) = &table {
        let path = out.join("metrics.csv");
        let f = fs::File::create(&path).map_err(io_failure(&path))?;
        write_metrics(io::BufWriter::new(f), t).map_err(io_failure(&path))?;
    }
    Ok((outcome, table))
}

fn format_table(t: &MetricsTable) -> String {
    let mut s = format!("{:>10}  {:>18}  {:>20}", "band_m", "max_linear_dev_m", "max_orient_dev_deg");
    for r in &t.rows {
        s.push_str(&format!("\n{:>10}  {:>18.4}  {:>20.4}", r.band_m, r.max_linear_dev_m, r.max_orient_dev_deg));
    }
    s
}

fn simulate(a: &SimulateArgs, ui: &Ui) -> Result<(), Failure> {
    let cfg = load_config(&a.run)?;
    ui.progress(1, &format!("simulating seed {} into {}", cfg.seed, a.run.out.display()));
    let (outcome, table) = run_into(&cfg, &a.run.out, a.debug, ui)?;
    let table = table.map_err(|e| Failure::Usage(format!("metrics: {e}")))?;
    ui.say(&format_table(&table));
    if outcome.diverged() {
        return Err(Failure::Diverged(format!(
            "filter diverged on {} frame(s), first at frame {}; the run was still logged",
            outcome.divergent_frames.len(),
            outcome.divergent_frames[0]
        )));
    }
    Ok(())
}

fn detect(a: &DetectArgs, ui: &Ui) -> Result<(), Failure> {
    let img = read_pgm_file(&a.image).map_err(|e| Failure::Usage(format!("{}: {e}", a.image.display())))?;
    let params = DetectorParams {
        k: a.k,
        window: a.window,
    };
    let (map, detections) = detect_light_sources(&img, &params).map_err(|e| Failure::Usage(e.to_string()))?;
    let stdout = io::stdout();
    let mut w = io::BufWriter::new(stdout.lock());
    let out = (|| -> io::Result<()> {
        writeln!(w, "u,v,intensity")?;
        for d in &detections {
            writeln!(w, "{},{},{}", d.x, d.y, d.intensity)?;
        }
        w.flush()
    })();
    out.map_err(|e| Failure::Io(e.to_string()))?;
    if a.write_map {
        let stem = a.image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
        let path = a.image.with_file_name(format!("{stem}.sources.pbm"));
        write_pbm_file(&path, &map).map_err(io_failure(&path))?;
        ui.progress(1, &format!("wrote {}", path.display()));
    }
    Ok(())
}

fn metrics(a: &MetricsArgs, ui: &Ui) -> Result<(), Failure> {
    let log = read_log_file(&a.log).map_err(|e| Failure::Usage(format!("{}: {e}", a.log.display())))?;
    let table = if a.nested {
        compute_nested_metrics(&log, &a.bands)
    } else {
        compute_metrics(&log, &a.bands)
    }
    .map_err(|e| Failure::Usage(e.to_string()))?;
    ui.say(&format_table(&table));
    if let Some(path) = &a.out {
        let f = fs::File::create(path).map_err(io_failure(path))?;
        write_metrics(io::BufWriter::new(f), &table).map_err(io_failure(path))?;
    }
    Ok(())
}

struct SweepRow {
    value: String,
    seed: u64,
    divergent_frames: usize,
    table: Result<MetricsTable, String>,
}

fn sweep(a: &SweepArgs, ui: &Ui) -> Result<(), Failure> {
    if a.values.iter().all(|v| v.trim().is_empty()) {
        return Err(Failure::Usage("the value list is empty".into()));
    }
    let mut base = load_table(&a.run.config)?;
    apply_overrides(&mut base, &a.run.overrides)?;
    let base_seed = finish_config(base.clone(), a.run.seed, &a.run.config)?.seed;
    let seeds = SeedStream::new(base_seed);

    let configs = a
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut t = base.clone();
            set_key(&mut t, &a.key, v).map_err(|e| Failure::Usage(e.to_string()))?;
            let seed = if a.same_seed { base_seed } else { seeds.derive_seed("sweep", i as u64) };
            finish_config(t, Some(seed), &a.run.config)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let runs_dir = a.run.out.join("runs");
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<Result<SweepRow, Failure>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..a.jobs.clamp(1, configs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let value = a.values[i].trim().to_string();
                ui.progress(1, &format!("run {i}: {} = {value}, seed {}", a.key, cfg.seed));
                let dir = runs_dir.join(format!("{i:03}"));
                let row = run_into(cfg, &dir, false, ui).map(|(outcome, table)| SweepRow {
                    value,
                    seed: cfg.seed,
                    divergent_frames: outcome.divergent_frames.len(),
                    table,
                });
                rows.lock().expect("no worker panicked")[i] = Some(row);
            });
        }
    });
    let rows: Vec<SweepRow> = rows
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every run finished"))
        .collect::<Result<_, _>>()?;

    let bands = &configs[0].metrics.bands_m;
    let mut csv = String::from("run,key,value,seed,divergent_frames");
    for b in bands {
        csv.push_str(&format!(",max_linear_dev_m_{b},max_orient_dev_deg_{b}"));
    }
    csv.push('\n');
    for (i, r) in rows.iter().enumerate() {
        csv.push_str(&format!("{i},{},{},{},{}", a.key, csv_field(&r.value), r.seed, r.divergent_frames));
        for b in bands {
            match r.table.as_ref().ok().and_then(|t| t.row(*b)) {
                Some(row) => csv.push_str(&format!(",{:?},{:?}", row.max_linear_dev_m, row.max_orient_dev_deg)),
                None => csv.push_str(",,"),
            }
        }
        csv.push('\n');
    }
    let path = a.run.out.join("sweep.csv");
    fs::create_dir_all(&a.run.out).map_err(io_failure(&a.run.out))?;
    fs::write(&path, &csv).map_err(io_failure(&path))?;
    ui.say(csv.trim_end());

    let diverged = rows.iter().filter(|r| r.divergent_frames > 0).count();
    if diverged > 0 {
        return Err(Failure::Diverged(format!("{diverged} of {} runs diverged; see {}", rows.len(), path.display())));
    }
    Ok(())
}

fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}
