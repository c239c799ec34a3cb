//! Experiment manifests, single runs and multi-codec comparisons.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::codebook::{CodebookError, FrequencyTable, SAMPLE_ALPHABET};
use crate::codec::{CodecKind, CodecParams, CodecSuite};
use crate::distributed::{sample_to_word, ModuloParams};
use crate::metrics::{
    entropy_report, render_csv, render_json, render_table, EnergyModel, EntropyReport, MetricsAccumulator,
    MetricsReport, ReportRow,
};
use crate::netsim::{run_simulation, write_events_csv, write_events_jsonl, EventKind, NetError, SimConfig, SimulationLog};
use crate::scalar::CodecError;
use crate::sources::{
    estimate_histogram, load_trace, CorrelatedPair, CorrelationModel, PairSource, PseudoSource, SampleSource,
    SourceError, DEFAULT_PERIOD,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("missing required key {0:?}")]
    Missing(&'static str),
    #[error("{key} = {value:?}: {reason}")]
    Invalid { key: String, value: String, reason: String },
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// Problems with the manifest or its inputs, as opposed to failures
    /// while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config(_) | ExperimentError::Source(_) | ExperimentError::Codebook(_)
        ) || matches!(self, ExperimentError::Net(NetError::Config(_)))
            || matches!(self, ExperimentError::Codec(CodecError::InvalidParams(_)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceInput {
    /// One sample per line.
    Trace(PathBuf),
    /// `symbol,count` histogram driving a pseudo source.
    Pseudo(PathBuf),
}

impl fmt::Display for SourceInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceInput::Trace(p) => write!(f, "trace:{}", p.display()),
            SourceInput::Pseudo(p) => write!(f, "pseudo:{}", p.display()),
        }
    }
}

impl FromStr for SourceInput {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("trace", p)) if !p.is_empty() => Ok(SourceInput::Trace(p.into())),
            Some(("pseudo", p)) if !p.is_empty() => Ok(SourceInput::Pseudo(p.into())),
            _ => Err("expected trace:PATH or pseudo:PATH".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
    Table,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::Table => "table",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "table" => Ok(OutputFormat::Table),
            _ => Err("expected csv, json or table".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentConfig {
    pub codec: CodecKind,
    pub source: SourceInput,
    pub correlation: CorrelationModel,
    pub rate_hz: u32,
    pub samples: usize,
    pub frame_length: usize,
    pub modulo_n: u16,
    pub seed: u64,
    /// Pseudo-source schedule length.
    pub period: usize,
    pub cost_per_op_us: u32,
    pub out: PathBuf,
    pub format: OutputFormat,
}

pub const CONFIG_KEYS: [&str; 12] = [
    "codec",
    "source",
    "correlation",
    "rate",
    "samples",
    "frame",
    "modulo_n",
    "seed",
    "period",
    "cost_per_op",
    "out",
    "format",
];

impl ExperimentConfig {
    pub fn new(codec: CodecKind, source: SourceInput) -> Self {
        Self {
            codec,
            source,
            correlation: CorrelationModel::default(),
            rate_hz: 2,
            samples: 100,
            frame_length: 16,
            modulo_n: 8,
            seed: 0,
            period: DEFAULT_PERIOD,
            cost_per_op_us: 1,
            out: PathBuf::from("out"),
            format: OutputFormat::Csv,
        }
    }

    /// Sets one key from its text form; CLI flags go through here too.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let invalid = |reason: String| ConfigError::Invalid {
            key: key.to_string(),
            value: value.to_string(),
            reason,
        };
        fn num<T: FromStr>(v: &str) -> Result<T, String>
        where
            T::Err: fmt::Display,
        {
            v.parse::<T>().map_err(|e| e.to_string())
        }
        match key {
            "codec" => self.codec = value.parse().map_err(|e: CodecError| invalid(e.to_string()))?,
            "source" => self.source = value.parse().map_err(invalid)?,
            "correlation" => self.correlation = value.parse().map_err(|e: SourceError| invalid(e.to_string()))?,
            "rate" => self.rate_hz = num(value).map_err(invalid)?,
            "samples" => self.samples = num(value).map_err(invalid)?,
            "frame" => self.frame_length = num(value).map_err(invalid)?,
            "modulo_n" => self.modulo_n = num(value).map_err(invalid)?,
            "seed" => self.seed = num(value).map_err(invalid)?,
            "period" => self.period = num(value).map_err(invalid)?,
            "cost_per_op" => self.cost_per_op_us = num(value).map_err(invalid)?,
            "out" => self.out = PathBuf::from(value),
            "format" => self.format = value.parse().map_err(invalid)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "codec" => self.codec.to_string(),
            "source" => self.source.to_string(),
            "correlation" => self.correlation.to_string(),
            "rate" => self.rate_hz.to_string(),
            "samples" => self.samples.to_string(),
            "frame" => self.frame_length.to_string(),
            "modulo_n" => self.modulo_n.to_string(),
            "seed" => self.seed.to_string(),
            "period" => self.period.to_string(),
            "cost_per_op" => self.cost_per_op_us.to_string(),
            "out" => self.out.display().to_string(),
            "format" => self.format.to_string(),
            _ => return None,
        })
    }

    /// Parses the flat `key = value` form. `#` starts a comment; `codec`
    /// and `source` are required.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_entries(&parse_entries(text)?)
    }

    /// Builds a config from key/value pairs; later entries win.
    pub fn from_entries(entries: &[(String, String)]) -> Result<Self, ConfigError> {
        let lookup = |key: &'static str| entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let codec_text = lookup("codec").ok_or(ConfigError::Missing("codec"))?;
        let source_text = lookup("source").ok_or(ConfigError::Missing("source"))?;
        let mut cfg = Self::new(CodecKind::Fibonacci, SourceInput::Trace(PathBuf::new()));
        cfg.set("codec", codec_text)?;
        cfg.set("source", source_text)?;
        for (k, v) in entries {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Invalid {
            key: "config".into(),
            value: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(Self::parse(&text)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, reason: String| ConfigError::Invalid {
            key: key.into(),
            value: self.get(key).unwrap_or_default(),
            reason,
        };
        if !(2..=125).contains(&self.rate_hz) {
            return Err(invalid("rate", "sampling rate must be within 2..=125 Hz".into()));
        }
        if self.frame_length == 0 {
            return Err(invalid("frame", "frame length must be >= 1".into()));
        }
        if self.period == 0 {
            return Err(invalid("period", "period must be >= 1".into()));
        }
        ModuloParams::new(self.modulo_n).map_err(|e| invalid("modulo_n", e.to_string()))?;
        self.correlation
            .validate()
            .map_err(|e| invalid("correlation", e.to_string()))?;
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            rate_hz: self.rate_hz,
            samples: self.samples,
            cost_per_op_us: self.cost_per_op_us,
            ..SimConfig::default()
        }
    }
}

/// Splits the flat `key = value` form into entries, in file order.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: idx + 1,
            text: raw.to_string(),
        })?;
        entries.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(entries)
}

/// One point of the per-packet plot series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SeriesPoint {
    pub index: usize,
    pub node: u8,
    pub sequence: u8,
    pub raw: u16,
    pub coded: u16,
    pub decoded: u16,
    pub bits: u8,
    pub error: i32,
}

pub fn series_from_log(log: &SimulationLog) -> Vec<SeriesPoint> {
    log.events
        .iter()
        .filter(|e| e.event == EventKind::Decode)
        .enumerate()
        .map(|(index, e)| {
            let raw = e.original_data.unwrap_or(0);
            let decoded = e.decode_data.unwrap_or(0);
            SeriesPoint {
                index,
                node: e.node_id.unwrap_or(0),
                sequence: e.sequence.unwrap_or(0),
                raw,
                coded: e.code_data.unwrap_or(0),
                decoded,
                bits: e.length.unwrap_or(0),
                error: i32::from(decoded) - i32::from(raw),
            }
        })
        .collect()
}

/// Everything one run produced, held in memory until written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub log: SimulationLog,
    pub report: MetricsReport,
    pub series: Vec<SeriesPoint>,
    /// Joint codecs only: entropies of what the two nodes actually coded.
    pub entropy: Option<EntropyReport>,
}

struct PreparedSource {
    base: Option<Box<dyn SampleSource + Send>>,
    histogram: Option<FrequencyTable>,
}

fn prepare_source(cfg: &ExperimentConfig) -> Result<PreparedSource, ExperimentError> {
    match &cfg.source {
        SourceInput::Trace(path) => {
            let trace = load_trace(path)?;
            if trace.is_empty() {
                return Ok(PreparedSource {
                    base: None,
                    histogram: None,
                });
            }
            Ok(PreparedSource {
                histogram: Some(estimate_histogram(&trace)?),
                base: Some(Box::new(trace.playback()?)),
            })
        }
        SourceInput::Pseudo(path) => {
            let hist = FrequencyTable::load_counts_csv(path, SAMPLE_ALPHABET)?;
            let src = PseudoSource::new(&hist, cfg.period)?;
            Ok(PreparedSource {
                histogram: Some(src.emitted_histogram()),
                base: Some(Box::new(src)),
            })
        }
    }
}

/// Runs one experiment entirely in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    cfg.validate()?;
    let prepared = prepare_source(cfg)?;
    let params = CodecParams {
        frame_length: cfg.frame_length,
        modulo: ModuloParams::new(cfg.modulo_n)?,
    };
    // an empty trace still gets a codebook so the run is a valid no-op
    let fallback;
    let histogram = match &prepared.histogram {
        Some(h) => h,
        None => {
            fallback = FrequencyTable::uniform(SAMPLE_ALPHABET)?;
            &fallback
        }
    };
    let suite = CodecSuite::new(cfg.codec, params, Some(histogram))?;
    let mut sim = cfg.sim_config();

    let mut drawn = Vec::new();
    let log = match prepared.base {
        Some(base) => {
            let mut pairs = PairSource::new(base, cfg.correlation, cfg.seed)?;
            run_simulation(&sim, &suite, || {
                let p = pairs.next_pair();
                drawn.push(p);
                p
            })?
        }
        None => {
            sim.samples = 0;
            run_simulation(&sim, &suite, || unreachable!("no rounds are scheduled"))?
        }
    };

    let report = MetricsAccumulator::from_log(&log.events).report(cfg.codec.name(), &EnergyModel::default());
    let entropy = if cfg.codec.is_joint() && !drawn.is_empty() {
        let coded: Vec<CorrelatedPair> = if cfg.codec == CodecKind::Discus {
            drawn
                .iter()
                .map(|p| CorrelatedPair {
                    x: sample_to_word(p.x),
                    y: sample_to_word(p.y),
                })
                .collect()
        } else {
            drawn
        };
        entropy_report(&coded, 2.0 * report.avg_bits).ok()
    } else {
        None
    };
    Ok(RunOutput {
        config: cfg.clone(),
        series: series_from_log(&log),
        log,
        report,
        entropy,
    })
}

/// Rendered artifacts as `(file name, contents)`.
pub fn render_artifacts(run: &RunOutput) -> Result<Vec<(String, Vec<u8>)>, ExperimentError> {
    let mut files = Vec::new();
    let mut events = Vec::new();
    let events_name = match run.config.format {
        OutputFormat::Json => {
            write_events_jsonl(&run.log.events, &mut events)?;
            "events.jsonl"
        }
        OutputFormat::Csv | OutputFormat::Table => {
            write_events_csv(&run.log.events, &mut events)?;
            "events.csv"
        }
    };
    files.push((events_name.to_string(), events));

    let rows = [Ok(run.report.clone())];
    let (report_name, report) = match run.config.format {
        OutputFormat::Csv => ("report.csv", render_csv(&rows)),
        OutputFormat::Json => ("report.json", render_json(&rows)),
        OutputFormat::Table => ("report.txt", render_table(&rows)),
    };
    files.push((report_name.to_string(), report.into_bytes()));

    let mut series = csv::Writer::from_writer(Vec::new());
    for p in &run.series {
        series.serialize(p).map_err(NetError::from)?;
    }
    files.push(("series.csv".into(), series.into_inner().map_err(|e| NetError::Io(e.into_error()))?));

    if let Some(h) = &run.entropy {
        let json = serde_json::to_vec_pretty(h).map_err(NetError::from)?;
        files.push(("entropy.json".into(), json));
    }
    files.push(("config.txt".into(), run.config.render().into_bytes()));
    Ok(files)
}

/// Writes the artifacts of a finished run under `run.config.out`.
pub fn write_artifacts(run: &RunOutput) -> Result<Vec<PathBuf>, ExperimentError> {
    let files = render_artifacts(run)?;
    let dir = &run.config.out;
    let io = |path: &Path, source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Runs every config, in parallel, and returns rows in config order. A
/// failed run becomes an error row; the others still complete.
pub fn compare(configs: &[ExperimentConfig]) -> Vec<ReportRow> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| scope.spawn(move || run_experiment(cfg)))
            .collect();
        handles
            .into_iter()
            .zip(configs)
            .map(|(h, cfg)| match h.join() {
                Ok(Ok(run)) => Ok(run.report),
                Ok(Err(e)) => Err((cfg.codec.to_string(), e.to_string())),
                Err(_) => Err((cfg.codec.to_string(), "run panicked".into())),
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_identity() {
        let mut cfg = ExperimentConfig::new(CodecKind::Discus, SourceInput::Pseudo("flat.csv".into()));
        cfg.correlation = "bitflip:1".parse().unwrap();
        cfg.seed = 7;
        cfg.format = OutputFormat::Json;
        assert_eq!(ExperimentConfig::parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn parse_errors_are_precise() {
        assert_eq!(ExperimentConfig::parse("source = trace:a\n"), Err(ConfigError::Missing("codec")));
        assert!(matches!(
            ExperimentConfig::parse("codec = fibonacci\nsource = trace:a\nbogus = 1\n"),
            Err(ConfigError::UnknownKey(k)) if k == "bogus"
        ));
        assert!(matches!(
            ExperimentConfig::parse("codec = fibonacci\nsource = trace:a\nrate\n"),
            Err(ConfigError::Syntax { line: 3, .. })
        ));
        let cfg = ExperimentConfig::parse("codec = fibonacci # lossless\nsource = trace:a\nrate = 200\n").unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid { key, .. }) if key == "rate"));
    }
}
