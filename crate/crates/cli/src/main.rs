use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sensorcode::codebook::{build_fibonacci_codebook, build_tcode_codebook, FrequencyTable, SAMPLE_ALPHABET};
use sensorcode::experiment::{
    compare, parse_entries, run_experiment, write_artifacts, ExperimentConfig, OutputFormat,
};
use sensorcode::metrics::{render_csv, render_json, render_table, ReportRow};
use sensorcode::{CodecKind, DiscusCode};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "sensorcode", version, about = "Run and compare sensor-network source codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one codec and write the event log, report and plot series.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Run several codecs and print one report row per codec.
    Compare {
        /// Comma-separated codecs sharing the other flags.
        #[arg(long, value_delimiter = ',')]
        codecs: Vec<String>,
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Additional config files, one row each.
        #[arg(long = "with", value_name = "FILE")]
        with: Vec<PathBuf>,
    },
    /// Export a Fibonacci or T-code codebook as CSV.
    Codebook {
        /// fibonacci or tcode
        #[arg(long)]
        family: String,
        /// `symbol,count` histogram; symbols ranked by value when absent.
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the generator and parity-check matrices of the syndrome code.
    Matrices,
}

/// Every flag mirrors a config-file key and overrides it.
#[derive(Args)]
struct ExperimentArgs {
    /// Flat `key = value` experiment manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    codec: Option<String>,
    /// trace:PATH or pseudo:PATH
    #[arg(long)]
    source: Option<String>,
    /// bitflip:T[:WIDTH], samebin:N or additive:MAX
    #[arg(long)]
    correlation: Option<String>,
    /// Sampling rate in Hz (2..=125).
    #[arg(long)]
    rate: Option<String>,
    /// Samples per node.
    #[arg(long)]
    samples: Option<String>,
    /// DPCM frame length.
    #[arg(long)]
    frame: Option<String>,
    #[arg(long = "modulo-n")]
    modulo_n: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Pseudo-source schedule length.
    #[arg(long)]
    period: Option<String>,
    /// Simulated microseconds per abstract operation.
    #[arg(long = "cost-per-op")]
    cost_per_op: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv, json or table
    #[arg(long)]
    format: Option<String>,
}

impl ExperimentArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let out = self.out.as_ref().map(|p| p.display().to_string());
        [
            ("codec", self.codec.as_ref()),
            ("source", self.source.as_ref()),
            ("correlation", self.correlation.as_ref()),
            ("rate", self.rate.as_ref()),
            ("samples", self.samples.as_ref()),
            ("frame", self.frame.as_ref()),
            ("modulo_n", self.modulo_n.as_ref()),
            ("seed", self.seed.as_ref()),
            ("period", self.period.as_ref()),
            ("cost_per_op", self.cost_per_op.as_ref()),
            ("out", out.as_ref()),
            ("format", self.format.as_ref()),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v.clone())))
        .collect()
    }

    fn file_entries(path: &PathBuf) -> Result<Vec<(String, String)>, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        parse_entries(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    fn build(&self, file: Option<&PathBuf>, extra: &[(String, String)]) -> Result<ExperimentConfig, String> {
        let mut entries = match file.or(self.config.as_ref()) {
            Some(p) => Self::file_entries(p)?,
            None => Vec::new(),
        };
        entries.extend(self.overrides());
        entries.extend_from_slice(extra);
        let cfg = ExperimentConfig::from_entries(&entries).map_err(|e| e.to_string())?;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

fn render(rows: &[ReportRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => render_csv(rows),
        OutputFormat::Json => render_json(rows),
        OutputFormat::Table => render_table(rows),
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn cmd_run(exp: &ExperimentArgs) -> ExitCode {
    let cfg = match exp.build(None, &[]) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let run = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) if e.is_config() => return fail(EXIT_CONFIG, e),
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    if let Err(e) = write_artifacts(&run) {
        return fail(EXIT_RUNTIME, e);
    }
    print!("{}", render_table(&[Ok(run.report.clone())]));
    if let Some(h) = &run.entropy {
        println!(
            "H_X {:.4}  H_Y {:.4}  H_XY {:.4}  H_Y|X {:.4}  achieved {:.4} bits/pair",
            h.h_x, h.h_y, h.h_xy, h.h_y_given_x, h.achieved
        );
    }
    ExitCode::SUCCESS
}

fn cmd_compare(codecs: &[String], exp: &ExperimentArgs, with: &[PathBuf]) -> ExitCode {
    if codecs.is_empty() && with.is_empty() && exp.config.is_none() {
        return fail(EXIT_CONFIG, "compare needs --codecs, --config or --with");
    }
    let mut configs = Vec::new();
    let built: Result<(), String> = (|| {
        if codecs.is_empty() && exp.config.is_some() {
            configs.push(exp.build(None, &[])?);
        }
        for codec in codecs {
            configs.push(exp.build(None, &[("codec".into(), codec.clone())])?);
        }
        for file in with {
            configs.push(exp.build(Some(file), &[])?);
        }
        Ok(())
    })();
    if let Err(e) = built {
        return fail(EXIT_CONFIG, e);
    }
    // the table is the default here; --format picks another rendering
    let format = match (&exp.format, configs.first()) {
        (Some(_), Some(c)) => c.format,
        _ => OutputFormat::Table,
    };
    let rows = compare(&configs);
    print!("{}", render(&rows, format));
    if rows.iter().all(|r| r.is_err()) {
        return ExitCode::from(EXIT_RUNTIME);
    }
    ExitCode::SUCCESS
}

fn cmd_codebook(family: &str, histogram: Option<&PathBuf>, out: Option<&PathBuf>) -> ExitCode {
    let freqs = match histogram {
        Some(p) => FrequencyTable::load_counts_csv(p, SAMPLE_ALPHABET),
        None => FrequencyTable::uniform(SAMPLE_ALPHABET),
    };
    let freqs = match freqs {
        Ok(f) => f,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let book = match family.parse::<CodecKind>() {
        Ok(CodecKind::Fibonacci) => build_fibonacci_codebook(&freqs),
        Ok(CodecKind::TCode) => build_tcode_codebook(&freqs),
        _ => return fail(EXIT_CONFIG, format!("unknown codebook family {family:?} (fibonacci or tcode)")),
    };
    let book = match book {
        Ok(b) => b,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    let mut buf = Vec::new();
    if let Err(e) = book.write_csv(&mut buf) {
        return fail(EXIT_RUNTIME, e);
    }
    match out {
        Some(p) => {
            if let Err(e) = fs::write(p, &buf) {
                return fail(EXIT_RUNTIME, format!("cannot write {}: {e}", p.display()));
            }
            println!("average length {:.4} bits", book.avg_length());
        }
        None => print!("{}", String::from_utf8_lossy(&buf)),
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match &cli.command {
        Command::Run { exp } => cmd_run(exp),
        Command::Compare { codecs, exp, with } => cmd_compare(codecs, exp, with),
        Command::Codebook { family, histogram, out } => cmd_codebook(family, histogram.as_ref(), out.as_ref()),
        Command::Matrices => {
            print!("{}", DiscusCode::standard().dump());
            ExitCode::SUCCESS
        }
    }
}
