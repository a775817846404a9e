use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use noarb::config::{ExperimentConfig, Task};
use noarb::error::CliError;
use noarb::{pipeline, presets, report};

#[derive(Parser)]
#[command(name = "noarb", version = report::VERSION, about = "No-arbitrage spectrum experiments")]
struct Cli {
    /// Progress messages on stderr (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config (or a previous run's manifest).
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output_dir: Option<PathBuf>,
        /// Overrides mc.master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated subset of characteristics,deflators,strategies,classify.
        #[arg(long, value_delimiter = ',')]
        tasks: Option<Vec<String>>,
    },
    /// Run the reference models and compare verdicts with the expected table.
    Reproduce {
        /// Only this model (black_scholes, abs_local_martingale, mvt_jump,
        /// integrated_ratio, bridge_exp, power_vol).
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        n_paths: Option<usize>,
        #[arg(short, long)]
        output_dir: Option<PathBuf>,
    },
    /// Print a bundled preset config.
    Preset { name: String },
}

fn logger(verbose: u8) -> impl FnMut(&str) {
    move |msg: &str| {
        if verbose > 0 {
            eprintln!("[noarb] {msg}");
        }
    }
}

fn cmd_run(
    config: PathBuf,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
    tasks: Option<Vec<String>>,
    verbose: u8,
) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(s) = seed {
        cfg.mc.master_seed = s;
    }
    if let Some(list) = tasks {
        let mut parsed = Vec::new();
        for t in list.iter().filter(|t| !t.trim().is_empty()) {
            parsed.push(Task::parse(t).ok_or_else(|| CliError::config(format!("unknown task `{t}`")))?);
        }
        cfg.tasks = parsed;
    }
    if let Some(d) = output_dir {
        cfg.output_dir = Some(d);
    }
    cfg.validate()?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("noarb-out"));
    let out = pipeline::run(&cfg, &mut logger(verbose))?;
    report::write_outputs(&out, &dir)?;
    print!("{}", report::summary_text(&out));
    println!("outputs written to {}", dir.display());
    if !out.failures.is_empty() {
        return Err(CliError::Statistical(out.failures.join("; ")));
    }
    Ok(())
}

fn cmd_reproduce(model: Option<String>, n_paths: Option<usize>, output_dir: Option<PathBuf>, verbose: u8) -> Result<(), CliError> {
    let selected: Vec<&presets::Preset> = match &model {
        Some(m) => vec![presets::find(m).ok_or_else(|| CliError::config(format!("unknown model `{m}`")))?],
        None => presets::PRESETS.iter().collect(),
    };
    // validate everything before the first long run
    let configs: Vec<ExperimentConfig> =
        selected.iter().map(|p| presets::prepared(p, n_paths)).collect::<Result<_, _>>()?;
    let mut log = logger(verbose);
    let mut rows = Vec::new();
    let mut deviations = Vec::new();
    println!("{:<22} {:<13} {:<13} {:<13} {:<13} check", "model", "NIP", "NSA", "NA1", "NFLVR");
    for (p, cfg) in selected.iter().zip(&configs) {
        log(&format!("model {}", p.name));
        let out = pipeline::run(cfg, &mut log)?;
        if let Some(dir) = &output_dir {
            report::write_outputs(&out, &dir.join(p.name))?;
        }
        let rep = out.spectrum.as_ref().expect("presets classify");
        let dev = p.deviations(rep);
        let v = rep.verdicts();
        println!(
            "{:<22} {:<13} {:<13} {:<13} {:<13} {}",
            p.name,
            v[0].as_str(),
            v[1].as_str(),
            v[2].as_str(),
            v[3].as_str(),
            if dev.is_empty() { "ok" } else { "DEVIATES" }
        );
        let mut row = report::spectrum_row(rep);
        row.push(if dev.is_empty() { "ok".into() } else { "deviates".into() });
        rows.push(row);
        deviations.extend(dev);
    }
    if let Some(dir) = &output_dir {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = report::SPECTRUM_HEADER.to_vec();
        header.push("check");
        w.write_record(&header)?;
        for r in &rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        report::write_atomic(dir, "reproduce.csv", &bytes)?;
    }
    if deviations.is_empty() {
        Ok(())
    } else {
        for d in &deviations {
            println!("deviation: {d}");
        }
        Err(CliError::Deviation(deviations))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run { config, output_dir, seed, tasks } => cmd_run(config, output_dir, seed, tasks, cli.verbose),
        Command::Reproduce { model, n_paths, output_dir } => cmd_reproduce(model, n_paths, output_dir, cli.verbose),
        Command::Preset { name } => match presets::find(&name) {
            Some(p) => {
                print!("{}", p.toml);
                Ok(())
            }
            None => Err(CliError::config(format!("unknown preset `{name}`"))),
        },
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
