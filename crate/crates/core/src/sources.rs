//! Sample streams: recorded traces, deterministic pseudo sources and
//! correlated pairs for the two-node codecs.

use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::{CodebookError, FrequencyTable, SAMPLE_ALPHABET};
use crate::scalar::Sample;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin} line {line}: {reason}")]
    Parse {
        origin: String,
        line: usize,
        reason: String,
    },
    #[error("{origin} line {line}: sample {value} outside 0..=255")]
    Range { origin: String, line: usize, value: i64 },
    #[error("source has no samples")]
    Empty,
    #[error("invalid source parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
}

/// A recorded sample trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSource {
    pub samples: Vec<Sample>,
    pub origin: PathBuf,
}

impl TraceSource {
    /// Parses one integer per line; blank lines are ignored.
    pub fn from_reader<R: Read>(reader: R, origin: impl Into<PathBuf>) -> Result<Self, SourceError> {
        let origin = origin.into();
        let name = origin.display().to_string();
        let mut samples = Vec::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|source| SourceError::Io {
                path: origin.clone(),
                source,
            })?;
            let text = line.trim().trim_end_matches(',');
            if text.is_empty() {
                continue;
            }
            let value: i64 = text.parse().map_err(|e| SourceError::Parse {
                origin: name.clone(),
                line: line_no,
                reason: format!("{text:?} is not an integer ({e})"),
            })?;
            let sample = Sample::try_from(value).map_err(|_| SourceError::Range {
                origin: name.clone(),
                line: line_no,
                value,
            })?;
            samples.push(sample);
        }
        Ok(Self { samples, origin })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// An endless stream that replays the trace from the start when it runs
    /// out.
    pub fn playback(&self) -> Result<TracePlayback, SourceError> {
        if self.samples.is_empty() {
            return Err(SourceError::Empty);
        }
        Ok(TracePlayback {
            samples: self.samples.clone(),
            position: 0,
        })
    }
}

pub fn load_trace(path: &Path) -> Result<TraceSource, SourceError> {
    let file = std::fs::File::open(path).map_err(|source| SourceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    TraceSource::from_reader(file, path)
}

/// Empirical symbol frequencies over the 8-bit alphabet.
pub fn estimate_histogram(src: &TraceSource) -> Result<FrequencyTable, SourceError> {
    if src.is_empty() {
        return Err(SourceError::Empty);
    }
    let mut counts = vec![0u64; SAMPLE_ALPHABET];
    for &s in &src.samples {
        counts[usize::from(s)] += 1;
    }
    Ok(FrequencyTable::from_counts(&counts)?)
}

pub trait SampleSource {
    fn next_sample(&mut self) -> Sample;
}

#[derive(Debug, Clone)]
pub struct TracePlayback {
    samples: Vec<Sample>,
    position: usize,
}

impl SampleSource for TracePlayback {
    fn next_sample(&mut self) -> Sample {
        let s = self.samples[self.position];
        self.position = (self.position + 1) % self.samples.len();
        s
    }
}

/// Deterministic source that emits a fixed schedule whose symbol counts over
/// one period match the histogram exactly.
#[derive(Debug, Clone)]
pub struct PseudoSource {
    period_counts: Vec<u64>,
    schedule: Vec<Sample>,
    position: usize,
}

pub const DEFAULT_PERIOD: usize = 256;

impl PseudoSource {
    /// Apportions `period` emissions by largest remainder, then interleaves
    /// them with smooth weighted round-robin.
    pub fn new(histogram: &FrequencyTable, period: usize) -> Result<Self, SourceError> {
        if period == 0 {
            return Err(SourceError::InvalidParams("pseudo source period must be >= 1".into()));
        }
        if histogram.len() > SAMPLE_ALPHABET {
            return Err(SourceError::InvalidParams(format!(
                "histogram over {} symbols exceeds the 8-bit alphabet",
                histogram.len()
            )));
        }
        let quotas: Vec<f64> = histogram
            .probabilities()
            .iter()
            .map(|p| p * period as f64)
            .collect();
        let mut counts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
        let assigned: u64 = counts.iter().sum();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &s in order.iter().take((period as u64).saturating_sub(assigned) as usize) {
            counts[s] += 1;
        }

        let mut credit = vec![0i64; counts.len()];
        let mut schedule = Vec::with_capacity(period);
        for _ in 0..period {
            for (c, &n) in credit.iter_mut().zip(&counts) {
                *c += n as i64;
            }
            // highest credit wins; lowest symbol on ties
            let pick = (0..counts.len())
                .filter(|&s| counts[s] > 0)
                .max_by(|&a, &b| credit[a].cmp(&credit[b]).then(b.cmp(&a)))
                .expect("period > 0 implies some count");
            credit[pick] -= period as i64;
            schedule.push(pick as Sample);
        }
        Ok(Self {
            period_counts: counts,
            schedule,
            position: 0,
        })
    }

    pub fn period(&self) -> usize {
        self.schedule.len()
    }

    pub fn schedule(&self) -> &[Sample] {
        &self.schedule
    }

    /// Integer emissions per symbol over one period.
    pub fn period_counts(&self) -> &[u64] {
        &self.period_counts
    }

    /// The distribution actually emitted, over the 8-bit alphabet.
    pub fn emitted_histogram(&self) -> FrequencyTable {
        let mut counts = self.period_counts.clone();
        counts.resize(SAMPLE_ALPHABET, 0);
        FrequencyTable::from_counts(&counts).expect("period > 0")
    }
}

impl SampleSource for PseudoSource {
    fn next_sample(&mut self) -> Sample {
        let s = self.schedule[self.position];
        self.position = (self.position + 1) % self.schedule.len();
        s
    }
}

/// Readings of the two nodes in the same slot pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorrelatedPair {
    pub x: Sample,
    pub y: Sample,
}

/// How the second node's reading is derived from the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationModel {
    /// Flip at most `max_flips` of the low `width` bits, every admissible
    /// error pattern equally likely.
    BitFlip { max_flips: u32, width: u32 },
    /// Uniform within the width-`n` bin holding `x`.
    SameBin { n: u16 },
    /// `x` plus a uniform offset in `-max_delta..=max_delta`, clamped.
    AdditiveDelta { max_delta: u8 },
}

impl Default for CorrelationModel {
    fn default() -> Self {
        CorrelationModel::AdditiveDelta { max_delta: 2 }
    }
}

impl CorrelationModel {
    pub fn validate(&self) -> Result<(), SourceError> {
        match *self {
            CorrelationModel::BitFlip { max_flips, width } if width == 0 || width > 8 || max_flips > width => {
                Err(SourceError::InvalidParams(format!(
                    "bitflip needs 1 <= width <= 8 and flips <= width (got {max_flips} of {width})"
                )))
            }
            CorrelationModel::SameBin { n } if n == 0 || n > 256 => Err(SourceError::InvalidParams(
                format!("same-bin width must be in 1..=256, got {n}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn correlate(&self, x: Sample, rng: &mut impl Rng) -> Sample {
        match *self {
            CorrelationModel::BitFlip { max_flips, width } => {
                let patterns: Vec<u8> = (0..1u16 << width)
                    .map(|m| m as u8)
                    .filter(|m| m.count_ones() <= max_flips)
                    .collect();
                x ^ patterns[rng.gen_range(0..patterns.len())]
            }
            CorrelationModel::SameBin { n } => {
                let base = u16::from(x) / n * n;
                (base + rng.gen_range(0..n)).min(255) as Sample
            }
            CorrelationModel::AdditiveDelta { max_delta } => {
                let d = i16::from(max_delta);
                (i16::from(x) + rng.gen_range(-d..=d)).clamp(0, 255) as Sample
            }
        }
    }

    /// Whether `(x, y)` is a pair this model can produce.
    pub fn admits(&self, x: Sample, y: Sample) -> bool {
        match *self {
            CorrelationModel::BitFlip { max_flips, width } => {
                let diff = x ^ y;
                diff.count_ones() <= max_flips && (width >= 8 || diff >> width == 0)
            }
            CorrelationModel::SameBin { n } => u16::from(x) / n == u16::from(y) / n,
            CorrelationModel::AdditiveDelta { max_delta } => x.abs_diff(y) <= max_delta,
        }
    }
}

impl fmt::Display for CorrelationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CorrelationModel::BitFlip { max_flips, width: 8 } => write!(f, "bitflip:{max_flips}"),
            CorrelationModel::BitFlip { max_flips, width } => write!(f, "bitflip:{max_flips}:{width}"),
            CorrelationModel::SameBin { n } => write!(f, "samebin:{n}"),
            CorrelationModel::AdditiveDelta { max_delta } => write!(f, "additive:{max_delta}"),
        }
    }
}

impl FromStr for CorrelationModel {
    type Err = SourceError;

    /// `bitflip:T[:WIDTH]`, `samebin:N` or `additive:MAX`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SourceError::InvalidParams(format!("unrecognised correlation model {s:?}"));
        let mut parts = s.trim().split(':');
        let kind = parts.next().ok_or_else(bad)?;
        let args: Vec<u32> = parts
            .map(|p| p.parse::<u32>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let model = match (kind, args.as_slice()) {
            ("bitflip", [t]) => CorrelationModel::BitFlip {
                max_flips: *t,
                width: 8,
            },
            ("bitflip", [t, w]) => CorrelationModel::BitFlip {
                max_flips: *t,
                width: *w,
            },
            ("samebin" | "same-bin", [n]) => CorrelationModel::SameBin {
                n: u16::try_from(*n).map_err(|_| bad())?,
            },
            ("additive" | "additive-delta", [d]) => CorrelationModel::AdditiveDelta {
                max_delta: u8::try_from(*d).map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        model.validate()?;
        Ok(model)
    }
}

/// Draws `x` from a base source and derives `y` through a correlation
/// model. All randomness comes from a ChaCha8 generator seeded once.
pub struct PairSource {
    base: Box<dyn SampleSource + Send>,
    model: CorrelationModel,
    rng: ChaCha8Rng,
}

impl PairSource {
    pub fn new(
        base: Box<dyn SampleSource + Send>,
        model: CorrelationModel,
        seed: u64,
    ) -> Result<Self, SourceError> {
        model.validate()?;
        Ok(Self {
            base,
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn model(&self) -> CorrelationModel {
        self.model
    }

    pub fn next_pair(&mut self) -> CorrelatedPair {
        let x = self.base.next_sample();
        let y = self.model.correlate(x, &mut self.rng);
        CorrelatedPair { x, y }
    }
}

impl fmt::Debug for PairSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PairSource").field("model", &self.model).finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    struct Constant(Sample);
    impl SampleSource for Constant {
        fn next_sample(&mut self) -> Sample {
            self.0
        }
    }

    #[test]
    fn trace_examples() {
        let t = TraceSource::from_reader("100\n103\n101\n".as_bytes(), "mem").unwrap();
        assert_eq!(t.samples, vec![100, 103, 101]);
        let t = TraceSource::from_reader("".as_bytes(), "mem").unwrap();
        assert!(t.is_empty());
        let err = TraceSource::from_reader("300\n".as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, SourceError::Range { line: 1, value: 300, .. }), "{err}");
        let err = TraceSource::from_reader("5\n\nabc\n".as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, SourceError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn load_trace_from_disk() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1\n2\n3").unwrap();
        let t = load_trace(f.path()).unwrap();
        assert_eq!(t.samples, vec![1, 2, 3]);
        assert!(matches!(load_trace(Path::new("/no/such/trace")), Err(SourceError::Io { .. })));
        let mut p = t.playback().unwrap();
        let got: Vec<_> = (0..5).map(|_| p.next_sample()).collect();
        assert_eq!(got, vec![1, 2, 3, 1, 2]);
    }

    #[test]
    fn histogram_examples() {
        let t = TraceSource::from_reader("1\n1\n2\n2\n".as_bytes(), "mem").unwrap();
        let h = estimate_histogram(&t).unwrap();
        assert_eq!((h.probability(1), h.probability(2)), (0.5, 0.5));
        let t = TraceSource::from_reader("7\n".as_bytes(), "mem").unwrap();
        assert_eq!(estimate_histogram(&t).unwrap().probability(7), 1.0);
        let empty = TraceSource::from_reader("".as_bytes(), "mem").unwrap();
        assert!(matches!(estimate_histogram(&empty), Err(SourceError::Empty)));
    }

    fn table(pairs: &[(usize, u64)]) -> FrequencyTable {
        let mut counts = vec![0; 256];
        for &(s, c) in pairs {
            counts[s] = c;
        }
        FrequencyTable::from_counts(&counts).unwrap()
    }

    #[test]
    fn pseudo_examples() {
        let mut s = PseudoSource::new(&table(&[(5, 1)]), 4).unwrap();
        assert_eq!((0..6).map(|_| s.next_sample()).collect::<Vec<_>>(), vec![5; 6]);
        let mut s = PseudoSource::new(&table(&[(0, 1), (1, 1)]), 2).unwrap();
        assert_eq!((0..6).map(|_| s.next_sample()).collect::<Vec<_>>(), vec![0, 1, 0, 1, 0, 1]);
        assert!(PseudoSource::new(&table(&[(0, 1)]), 0).is_err());
    }

    #[test]
    fn pseudo_period_counts_match_apportionment() {
        let h = table(&[(3, 7), (10, 2), (11, 1), (200, 13), (255, 3)]);
        let s = PseudoSource::new(&h, 256).unwrap();
        let mut seen = vec![0u64; 256];
        for &x in s.schedule() {
            seen[usize::from(x)] += 1;
        }
        assert_eq!(seen, s.period_counts());
        assert_eq!(seen.iter().sum::<u64>(), 256);
        // every count within one of its exact quota
        for (sym, &c) in seen.iter().enumerate() {
            let quota = h.probability(sym as u16) * 256.0;
            assert!((c as f64 - quota).abs() < 1.0, "symbol {sym}: {c} vs {quota}");
        }
    }

    #[test]
    fn correlation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let same = CorrelationModel::BitFlip { max_flips: 0, width: 8 };
        assert!((0..100).all(|_| same.correlate(77, &mut rng) == 77));
        let flip7 = CorrelationModel::BitFlip { max_flips: 1, width: 7 };
        let mut outputs = std::collections::BTreeSet::new();
        for _ in 0..2000 {
            outputs.insert(flip7.correlate(0, &mut rng));
        }
        let admissible: std::collections::BTreeSet<u8> =
            std::iter::once(0).chain((0..7).map(|i| 1u8 << i)).collect();
        assert_eq!(outputs, admissible);
        let bin = CorrelationModel::SameBin { n: 8 };
        assert!((0..500).all(|_| (40..=47).contains(&bin.correlate(40, &mut rng))));
    }

    #[test]
    fn correlation_parse_render() {
        for text in ["bitflip:1", "bitflip:1:7", "samebin:8", "additive:4"] {
            let m: CorrelationModel = text.parse().unwrap();
            assert_eq!(m.to_string(), text);
        }
        assert!("bitflip:9".parse::<CorrelationModel>().is_err());
        assert!("gauss:1".parse::<CorrelationModel>().is_err());
        assert!("samebin:0".parse::<CorrelationModel>().is_err());
    }

    #[test]
    fn pair_source_is_deterministic_and_admissible() {
        for model in [
            CorrelationModel::BitFlip { max_flips: 2, width: 8 },
            CorrelationModel::SameBin { n: 16 },
            CorrelationModel::AdditiveDelta { max_delta: 5 },
        ] {
            let make = || {
                let t = TraceSource::from_reader("0\n9\n128\n250\n255\n".as_bytes(), "mem").unwrap();
                PairSource::new(Box::new(t.playback().unwrap()), model, 42).unwrap()
            };
            let (mut a, mut b) = (make(), make());
            for _ in 0..2000 {
                let p = a.next_pair();
                assert_eq!(p, b.next_pair());
                assert!(model.admits(p.x, p.y), "{model}: {p:?}");
            }
        }
        let mut c = PairSource::new(Box::new(Constant(3)), CorrelationModel::default(), 0).unwrap();
        assert_eq!(c.next_pair().x, 3);
    }
}
