//! Single-node codecs: A-law and mu-law companders, framed DPCM, and
//! Fibonacci / T-code symbol coding.

use thiserror::Error;

use crate::bitstream::{bit_length, BitError, BitString};
use crate::codebook::{CodeFamily, Codebook, Symbol};
use crate::metrics::CostMeter;

/// An 8-bit sensor reading (MSBs of the ADC sample).
pub type Sample = u8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("invalid codec parameters: {0}")]
    InvalidParams(String),
    #[error("symbol {0} has no codeword")]
    UnknownSymbol(Symbol),
    #[error("no codeword matches the stream ({0})")]
    Desync(String),
    #[error("corrupt stream: {0}")]
    Corrupt(String),
    #[error("empty frame")]
    EmptyFrame,
    #[error(transparent)]
    Bits(#[from] BitError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompanderLaw {
    ALaw { a: f64 },
    MuLaw { mu: f64 },
}

impl CompanderLaw {
    pub const A_LAW: CompanderLaw = CompanderLaw::ALaw { a: 87.6 };
    pub const MU_LAW: CompanderLaw = CompanderLaw::MuLaw { mu: 255.0 };

    /// Compression curve on `[0, 1]`.
    pub fn curve(&self, x: f64) -> f64 {
        match *self {
            CompanderLaw::ALaw { a } => {
                let denom = 1.0 + a.ln();
                if x <= 1.0 / a {
                    a * x / denom
                } else {
                    (1.0 + (a * x).ln()) / denom
                }
            }
            CompanderLaw::MuLaw { mu } => (1.0 + mu * x).ln() / (1.0 + mu).ln(),
        }
    }
}

/// Integer compander over 0..=255 realized as a 256-entry lookup table.
#[derive(Debug, Clone)]
pub struct Compander {
    law: CompanderLaw,
    table: [u8; 256],
}

impl Compander {
    pub fn new(law: CompanderLaw) -> Result<Self, CodecError> {
        match law {
            CompanderLaw::ALaw { a } if !(a > 1.0 && a.is_finite()) => {
                return Err(CodecError::InvalidParams(format!("A-law needs A > 1, got {a}")))
            }
            CompanderLaw::MuLaw { mu } if !(mu > 0.0 && mu.is_finite()) => {
                return Err(CodecError::InvalidParams(format!("mu-law needs mu > 0, got {mu}")))
            }
            _ => {}
        }
        let mut table = [0u8; 256];
        for (v, slot) in table.iter_mut().enumerate() {
            // f64::round rounds half away from zero
            *slot = (255.0 * law.curve(v as f64 / 255.0)).round().clamp(0.0, 255.0) as u8;
        }
        Ok(Self { law, table })
    }

    pub fn law(&self) -> CompanderLaw {
        self.law
    }

    pub fn table(&self) -> &[u8; 256] {
        &self.table
    }

    pub fn encode(&self, v: Sample, meter: &mut CostMeter) -> u8 {
        meter.tick();
        self.table[usize::from(v)]
    }

    /// Smallest input whose code is at least `code`, by binary search over
    /// the encoder table.
    pub fn decode(&self, code: u8, meter: &mut CostMeter) -> Sample {
        let (mut lo, mut hi) = (0usize, self.table.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            meter.tick();
            if self.table[mid] < code {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo.min(255) as Sample
    }

    /// Wire form: the code's significant bits.
    pub fn code_bits(code: u8) -> BitString {
        let code = u64::from(code);
        BitString::from_value(code, bit_length(code) as usize).expect("<= 8 bits")
    }
}

/// Sign bit followed by the magnitude's significant bits.
pub fn sign_magnitude_bits(d: i32) -> BitString {
    let mag = u64::from(d.unsigned_abs());
    let mut out = BitString::from_bits([d < 0]);
    out.extend_from(&BitString::from_value(mag, bit_length(mag) as usize).expect("<= 32 bits"));
    out
}

pub fn parse_sign_magnitude(bits: &BitString) -> Result<i32, CodecError> {
    if bits.len() < 2 || bits.len() > 33 {
        return Err(CodecError::Corrupt(format!(
            "sign-magnitude field of {} bits",
            bits.len()
        )));
    }
    let (sign, mag) = bits.take_prefix(1)?;
    let mag = i64::try_from(mag.to_value()?).unwrap_or(i64::MAX);
    let v = if sign.get(0) == Some(true) { -mag } else { mag };
    i32::try_from(v).map_err(|_| CodecError::Corrupt(format!("magnitude {mag} out of range")))
}

/// First sample raw, then successive differences.
pub fn dpcm_encode(frame: &[Sample]) -> Result<Vec<i16>, CodecError> {
    let (&first, _) = frame.split_first().ok_or(CodecError::EmptyFrame)?;
    let mut out = Vec::with_capacity(frame.len());
    out.push(i16::from(first));
    out.extend(frame.windows(2).map(|w| i16::from(w[1]) - i16::from(w[0])));
    Ok(out)
}

pub fn dpcm_decode(coded: &[i16]) -> Result<Vec<Sample>, CodecError> {
    let (&first, rest) = coded.split_first().ok_or(CodecError::EmptyFrame)?;
    let mut prev = Sample::try_from(first)
        .map_err(|_| CodecError::Corrupt(format!("frame head {first} outside 0..=255")))?;
    let mut out = vec![prev];
    for &d in rest {
        let next = i16::from(prev) + d;
        prev = Sample::try_from(next)
            .map_err(|_| CodecError::Corrupt(format!("reconstruction {next} outside 0..=255")))?;
        out.push(prev);
    }
    Ok(out)
}

/// One coded DPCM element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpcmSymbol {
    Head(Sample),
    Diff(i16),
}

impl DpcmSymbol {
    pub fn to_bits(self) -> BitString {
        match self {
            DpcmSymbol::Head(v) => BitString::from_value(u64::from(v), 8).expect("8 bits"),
            DpcmSymbol::Diff(d) => sign_magnitude_bits(i32::from(d)),
        }
    }
}

/// Streaming DPCM encoder; restarts at every frame boundary.
#[derive(Debug, Clone)]
pub struct DpcmEncoder {
    frame_length: usize,
    position: usize,
    prev: Sample,
}

impl DpcmEncoder {
    pub fn new(frame_length: usize) -> Result<Self, CodecError> {
        if frame_length == 0 {
            return Err(CodecError::InvalidParams("DPCM frame length must be >= 1".into()));
        }
        Ok(Self {
            frame_length,
            position: 0,
            prev: 0,
        })
    }

    pub fn reset(&mut self) {
        self.position = 0;
    }

    pub fn encode(&mut self, v: Sample, meter: &mut CostMeter) -> DpcmSymbol {
        meter.tick();
        let sym = if self.position == 0 {
            DpcmSymbol::Head(v)
        } else {
            DpcmSymbol::Diff(i16::from(v) - i16::from(self.prev))
        };
        self.prev = v;
        self.position = (self.position + 1) % self.frame_length;
        sym
    }
}

#[derive(Debug, Clone)]
pub struct DpcmDecoder {
    frame_length: usize,
    position: usize,
    prev: Sample,
    poisoned: bool,
}

impl DpcmDecoder {
    pub fn new(frame_length: usize) -> Result<Self, CodecError> {
        if frame_length == 0 {
            return Err(CodecError::InvalidParams("DPCM frame length must be >= 1".into()));
        }
        Ok(Self {
            frame_length,
            position: 0,
            prev: 0,
            poisoned: false,
        })
    }

    pub fn reset(&mut self) {
        self.position = 0;
        self.poisoned = false;
    }

    /// Decodes the wire form of the next element. A corrupt element poisons
    /// the rest of its frame, so the decoder skips to the next frame head.
    pub fn decode_bits(&mut self, bits: &BitString, meter: &mut CostMeter) -> Result<Sample, CodecError> {
        meter.tick();
        let at_head = self.position == 0;
        self.position = (self.position + 1) % self.frame_length;
        if at_head {
            self.poisoned = false;
        } else if self.poisoned {
            return Err(CodecError::Corrupt("earlier element of this frame was lost".into()));
        }
        let result = if at_head {
            if bits.len() != 8 {
                Err(CodecError::Corrupt(format!("frame head of {} bits", bits.len())))
            } else {
                Ok(bits.to_value()? as Sample)
            }
        } else {
            parse_sign_magnitude(bits).and_then(|d| {
                let next = i32::from(self.prev) + d;
                Sample::try_from(next)
                    .map_err(|_| CodecError::Corrupt(format!("reconstruction {next} outside 0..=255")))
            })
        };
        match result {
            Ok(v) => {
                self.prev = v;
                Ok(v)
            }
            Err(e) => {
                self.poisoned = true;
                Err(e)
            }
        }
    }
}

pub fn symbol_encode(symbol: Symbol, book: &Codebook, meter: &mut CostMeter) -> Result<BitString, CodecError> {
    meter.tick();
    book.codeword(symbol)
        .cloned()
        .ok_or(CodecError::UnknownSymbol(symbol))
}

/// Decodes the codeword at the head of `stream`, returning the symbol and
/// the unconsumed remainder. Fibonacci books are searched by binary search
/// on the codeword value, T-code books linearly from the shortest codeword.
pub fn symbol_decode(
    stream: &BitString,
    book: &Codebook,
    meter: &mut CostMeter,
) -> Result<(Symbol, BitString), CodecError> {
    match book.family() {
        CodeFamily::Fibonacci => {
            let bits = stream.bits();
            let end = bits
                .windows(2)
                .position(|w| w[0] && w[1])
                .ok_or_else(|| CodecError::Desync("no Fibonacci terminator".into()))?
                + 2;
            let (word, rest) = stream.take_prefix(end)?;
            let value = crate::codebook::fibonacci_value(&word)
                .ok_or_else(|| CodecError::Desync(format!("malformed codeword {word}")))?;
            let index = book.value_index();
            let (mut lo, mut hi) = (0usize, index.len());
            while lo < hi {
                let mid = (lo + hi) / 2;
                meter.tick();
                match index[mid].0.cmp(&value) {
                    std::cmp::Ordering::Equal => return Ok((index[mid].1, rest)),
                    std::cmp::Ordering::Less => lo = mid + 1,
                    std::cmp::Ordering::Greater => hi = mid,
                }
            }
            Err(CodecError::Desync(format!("codeword {word} not in book")))
        }
        CodeFamily::TCode => {
            for &symbol in book.rank_order() {
                let word = &book.codewords()[usize::from(symbol)];
                meter.tick();
                if stream.starts_with(word) {
                    let (_, rest) = stream.take_prefix(word.len())?;
                    return Ok((symbol, rest));
                }
            }
            Err(CodecError::Desync("no T-code codeword prefixes the stream".into()))
        }
    }
}

/// Realigns a Fibonacci stream that may start mid-codeword.
///
/// A `0` followed by `11` can only be the tail of a codeword, so everything
/// up to the first such pattern is discarded. Returns an empty stream when
/// no boundary is visible.
pub fn fibonacci_resync(stream: &BitString) -> BitString {
    let bits = stream.bits();
    match bits.windows(3).position(|w| !w[0] && w[1] && w[2]) {
        Some(i) => stream.take_prefix(i + 3).expect("in range").1,
        None => BitString::new(),
    }
}
