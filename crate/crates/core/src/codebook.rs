//! Fibonacci and T-code codeword sets, frequency-ranked assignment and
//! average codeword length.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::bitstream::BitString;

pub type Symbol = u16;

/// Widest codeword a sensor packet can carry (`code_data` is two bytes).
pub const MAX_CODEWORD_BITS: usize = 16;

/// Default alphabet for 8-bit samples.
pub const SAMPLE_ALPHABET: usize = 256;

const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("invalid frequency table: {0}")]
    InvalidFrequencies(String),
    #[error("Fibonacci codes start at 1; symbol indices must be shifted")]
    ZeroIndex,
    #[error("prefix {0} is not a member of the set")]
    PrefixNotInSet(BitString),
    #[error("codeword set is not prefix-free ({0} prefixes {1})")]
    NotPrefixFree(BitString, BitString),
    #[error("symbol {0} has nonzero probability but no codeword")]
    MissingSymbol(Symbol),
    #[error("symbol {symbol} would need a {len}-bit codeword (limit {MAX_CODEWORD_BITS})")]
    CodewordTooLong { symbol: Symbol, len: usize },
    #[error("frequency CSV line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Symbol probabilities over the alphabet `0..len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    probs: Vec<f64>,
}

impl FrequencyTable {
    pub fn from_probabilities(probs: Vec<f64>) -> Result<Self, CodebookError> {
        if probs.is_empty() {
            return Err(CodebookError::InvalidFrequencies("empty alphabet".into()));
        }
        if probs.len() > usize::from(Symbol::MAX) + 1 {
            return Err(CodebookError::InvalidFrequencies(format!(
                "alphabet of {} symbols is too large",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(CodebookError::InvalidFrequencies(format!(
                "probability {p} is not a finite non-negative number"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(CodebookError::InvalidFrequencies(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalizes raw occurrence counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self, CodebookError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(CodebookError::InvalidFrequencies("all counts are zero".into()));
        }
        Self::from_probabilities(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn uniform(symbols: usize) -> Result<Self, CodebookError> {
        Self::from_counts(&vec![1; symbols])
    }

    /// Reads `symbol,count` rows into an alphabet of `alphabet` symbols.
    /// Blank lines and a non-numeric header row are skipped.
    pub fn read_counts_csv<R: Read>(reader: R, alphabet: usize) -> Result<Self, CodebookError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut counts = vec![0u64; alphabet];
        for (idx, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| CodebookError::Csv {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            let line = record.position().map_or(idx + 1, |p| p.line() as usize);
            if record.iter().all(str::is_empty) {
                continue;
            }
            if record.len() != 2 {
                return Err(CodebookError::Csv {
                    line,
                    reason: format!("expected `symbol,count`, found {} fields", record.len()),
                });
            }
            let symbol = match record[0].parse::<usize>() {
                Ok(s) => s,
                Err(_) if idx == 0 => continue,
                Err(e) => {
                    return Err(CodebookError::Csv {
                        line,
                        reason: format!("bad symbol {:?}: {e}", &record[0]),
                    })
                }
            };
            let count = record[1].parse::<u64>().map_err(|e| CodebookError::Csv {
                line,
                reason: format!("bad count {:?}: {e}", &record[1]),
            })?;
            if symbol >= alphabet {
                return Err(CodebookError::Csv {
                    line,
                    reason: format!("symbol {symbol} outside alphabet 0..{alphabet}"),
                });
            }
            counts[symbol] += count;
        }
        Self::from_counts(&counts)
    }

    pub fn load_counts_csv(path: &Path, alphabet: usize) -> Result<Self, CodebookError> {
        Self::read_counts_csv(std::fs::File::open(path)?, alphabet)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probability(&self, symbol: Symbol) -> f64 {
        self.probs.get(usize::from(symbol)).copied().unwrap_or(0.0)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Symbols by descending probability; equal probabilities keep the
    /// lower symbol first.
    pub fn ranked_symbols(&self) -> Vec<Symbol> {
        let mut symbols: Vec<Symbol> = (0..self.probs.len()).map(|s| s as Symbol).collect();
        symbols.sort_by(|&a, &b| {
            self.probs[usize::from(b)]
                .total_cmp(&self.probs[usize::from(a)])
                .then(a.cmp(&b))
        });
        symbols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeFamily {
    Fibonacci,
    TCode,
}

/// Symbol to codeword lookup table with its design-time average length.
#[derive(Debug, Clone)]
pub struct Codebook {
    family: CodeFamily,
    codewords: Vec<BitString>,
    avg_length: f64,
    // (Zeckendorf value, symbol) sorted by value; Fibonacci books only.
    value_index: Vec<(u64, Symbol)>,
    // symbols from most to least probable
    rank_order: Vec<Symbol>,
}

impl Codebook {
    fn assemble(
        family: CodeFamily,
        freqs: &FrequencyTable,
        ranked_words: Vec<BitString>,
    ) -> Result<Self, CodebookError> {
        let ranked = freqs.ranked_symbols();
        let mut codewords = vec![BitString::new(); freqs.len()];
        for (&symbol, word) in ranked.iter().zip(ranked_words) {
            if word.len() > MAX_CODEWORD_BITS {
                return Err(CodebookError::CodewordTooLong {
                    symbol,
                    len: word.len(),
                });
            }
            codewords[usize::from(symbol)] = word;
        }
        let mut value_index = Vec::new();
        if family == CodeFamily::Fibonacci {
            value_index = codewords
                .iter()
                .enumerate()
                .map(|(s, w)| (fibonacci_value(w).expect("generated codeword"), s as Symbol))
                .collect();
            value_index.sort_unstable();
        }
        let mut book = Self {
            family,
            codewords,
            avg_length: 0.0,
            value_index,
            rank_order: ranked,
        };
        book.avg_length = average_length(&book, freqs)?;
        Ok(book)
    }

    pub fn family(&self) -> CodeFamily {
        self.family
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn codeword(&self, symbol: Symbol) -> Option<&BitString> {
        self.codewords.get(usize::from(symbol))
    }

    /// Codewords indexed by symbol.
    pub fn codewords(&self) -> &[BitString] {
        &self.codewords
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.codewords.iter().map(BitString::len).collect()
    }

    /// L_avg under the table the book was designed from.
    pub fn avg_length(&self) -> f64 {
        self.avg_length
    }

    pub(crate) fn value_index(&self) -> &[(u64, Symbol)] {
        &self.value_index
    }

    /// Symbols in the order their codewords were assigned, shortest first.
    pub fn rank_order(&self) -> &[Symbol] {
        &self.rank_order
    }

    pub fn kraft_sum(&self) -> f64 {
        self.codewords.iter().map(|w| 0.5f64.powi(w.len() as i32)).sum()
    }

    /// Writes `symbol,codeword,length` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CodebookError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| CodebookError::Io(e.into());
        w.write_record(["symbol", "codeword", "length"]).map_err(io)?;
        for (symbol, word) in self.codewords.iter().enumerate() {
            w.write_record([symbol.to_string(), word.to_string(), word.len().to_string()])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fibonacci_weights_upto(n: u64) -> Vec<u64> {
    let mut weights = vec![1u64, 2];
    loop {
        let next = weights[weights.len() - 1].checked_add(weights[weights.len() - 2]);
        match next {
            Some(w) if w <= n => weights.push(w),
            _ => break,
        }
    }
    weights.retain(|&w| w <= n);
    weights
}

/// Zeckendorf digits over weights 1,2,3,5,8,... least weight first, then a
/// terminating `1`.
pub fn fibonacci_codeword(n: u64) -> Result<BitString, CodebookError> {
    if n == 0 {
        return Err(CodebookError::ZeroIndex);
    }
    let weights = fibonacci_weights_upto(n);
    let mut digits = vec![false; weights.len()];
    let mut rest = n;
    for (i, &w) in weights.iter().enumerate().rev() {
        if w <= rest {
            digits[i] = true;
            rest -= w;
        }
    }
    debug_assert_eq!(rest, 0);
    // greedy selection always uses the largest weight, so no trailing zeros
    digits.push(true);
    Ok(BitString::from_bits(digits))
}

/// Inverse of [`fibonacci_codeword`]; `None` unless `word` is exactly one
/// well-formed codeword.
pub fn fibonacci_value(word: &BitString) -> Option<u64> {
    let bits = word.bits();
    let n = bits.len();
    if n < 2 || !bits[n - 1] || !bits[n - 2] {
        return None;
    }
    if bits[..n - 1].windows(2).any(|w| w[0] && w[1]) {
        return None;
    }
    let (mut a, mut b) = (1u64, 2u64);
    let mut value = 0u64;
    for &bit in &bits[..n - 1] {
        if bit {
            value = value.checked_add(a)?;
        }
        let next = a.checked_add(b)?;
        a = b;
        b = next;
    }
    Some(value)
}

fn tcode_order(set: &mut [BitString]) {
    set.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
}

fn check_prefix_free(set: &[BitString]) -> Result<(), CodebookError> {
    let mut sorted: Vec<&BitString> = set.iter().collect();
    sorted.sort();
    // any prefix relation shows up between lexicographic neighbours
    for pair in sorted.windows(2) {
        if pair[1].starts_with(pair[0]) {
            return Err(CodebookError::NotPrefixFree(pair[0].clone(), pair[1].clone()));
        }
    }
    Ok(())
}

/// One T-augmentation step: `{prefix . s : s in set} U (set \ {prefix})`,
/// returned in (length, lexicographic) order.
pub fn t_augment(set: &[BitString], prefix: &BitString) -> Result<Vec<BitString>, CodebookError> {
    if !set.contains(prefix) {
        return Err(CodebookError::PrefixNotInSet(prefix.clone()));
    }
    check_prefix_free(set)?;
    let mut out: Vec<BitString> = set.iter().map(|s| prefix.append(s)).collect();
    out.extend(set.iter().filter(|s| *s != prefix).cloned());
    tcode_order(&mut out);
    Ok(out)
}

/// The base set `{1, 00, 01}`.
pub fn tcode_base_set() -> Vec<BitString> {
    ["1", "00", "01"]
        .iter()
        .map(|s| s.parse().expect("literal"))
        .collect()
}

/// Prefix used for the next augmentation: the shortest codeword, ties broken
/// lexicographically.
pub fn tcode_next_prefix(set: &[BitString]) -> Option<&BitString> {
    set.iter().min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))
}

/// Augments from the base set until at least `needed` codewords are no
/// longer than [`MAX_CODEWORD_BITS`].
pub fn tcode_set_for(needed: usize) -> Vec<BitString> {
    let mut set = tcode_base_set();
    while set.iter().filter(|w| w.len() <= MAX_CODEWORD_BITS).count() < needed {
        let prefix = tcode_next_prefix(&set).expect("non-empty").clone();
        set = t_augment(&set, &prefix).expect("prefix taken from a prefix-free set");
    }
    set
}

pub fn build_tcode_codebook(freqs: &FrequencyTable) -> Result<Codebook, CodebookError> {
    let mut words: Vec<BitString> = tcode_set_for(freqs.len())
        .into_iter()
        .filter(|w| w.len() <= MAX_CODEWORD_BITS)
        .collect();
    tcode_order(&mut words);
    words.truncate(freqs.len());
    Codebook::assemble(CodeFamily::TCode, freqs, words)
}

pub fn build_fibonacci_codebook(freqs: &FrequencyTable) -> Result<Codebook, CodebookError> {
    let words = (1..=freqs.len() as u64)
        .map(fibonacci_codeword)
        .collect::<Result<Vec<_>, _>>()?;
    Codebook::assemble(CodeFamily::Fibonacci, freqs, words)
}

/// `sum l_i p_i` of `book` under `freqs`.
pub fn average_length(book: &Codebook, freqs: &FrequencyTable) -> Result<f64, CodebookError> {
    let mut total = 0.0;
    for (symbol, &p) in freqs.probabilities().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let word = book
            .codeword(symbol as Symbol)
            .filter(|w| !w.is_empty())
            .ok_or(CodebookError::MissingSymbol(symbol as Symbol))?;
        total += word.len() as f64 * p;
    }
    Ok(total)
}
