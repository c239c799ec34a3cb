//! Two-node correlated codecs: modulo-N residues, the integer Haar pair
//! transform and syndrome coding over a split (7,4) Hamming code.

use crate::bitstream::BitString;
use crate::metrics::CostMeter;
use crate::scalar::{CodecError, Sample};

/// Which half of a modulo-coded pair a node sends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    /// Sends `v mod N`.
    Residue,
    /// Sends `v` unchanged.
    Reference,
}

impl NodeRole {
    /// Odd node ids send residues, even ids the reference.
    pub fn for_node(node_id: u8) -> Self {
        if node_id % 2 == 1 {
            NodeRole::Residue
        } else {
            NodeRole::Reference
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModuloParams {
    modulus: u16,
}

impl Default for ModuloParams {
    fn default() -> Self {
        Self { modulus: 8 }
    }
}

impl ModuloParams {
    pub fn new(modulus: u16) -> Result<Self, CodecError> {
        if modulus < 2 || !modulus.is_power_of_two() || modulus > 256 {
            return Err(CodecError::InvalidParams(format!(
                "modulus must be a power of two in 2..=256, got {modulus}"
            )));
        }
        Ok(Self { modulus })
    }

    pub fn modulus(&self) -> u16 {
        self.modulus
    }

    /// Width of a residue on the wire.
    pub fn residue_bits(&self) -> usize {
        self.modulus.trailing_zeros() as usize
    }
}

pub fn modulo_encode(v: Sample, role: NodeRole, params: ModuloParams) -> u16 {
    match role {
        NodeRole::Residue => u16::from(v) % params.modulus,
        NodeRole::Reference => u16::from(v),
    }
}

/// Places `residue` in the bin of width N that holds the reference sample.
pub fn modulo_joint_decode(reference: Sample, residue: u16, params: ModuloParams) -> Sample {
    let n = params.modulus;
    let base = u16::from(reference) / n * n;
    (base + residue % n).min(255) as Sample
}

/// One-level integer Haar pair: `(a + b, a - b)`.
pub fn haar_encode_pair(a: Sample, b: Sample) -> (u16, i16) {
    (u16::from(a) + u16::from(b), i16::from(a) - i16::from(b))
}

pub fn haar_decode_pair(sum: i32, diff: i32) -> Result<(Sample, Sample), CodecError> {
    if (sum + diff) % 2 != 0 {
        return Err(CodecError::Corrupt(format!("odd sum+difference ({sum}, {diff})")));
    }
    let a = (sum + diff) / 2;
    let b = (sum - diff) / 2;
    match (Sample::try_from(a), Sample::try_from(b)) {
        (Ok(a), Ok(b)) => Ok((a, b)),
        _ => Err(CodecError::Corrupt(format!(
            "pair ({sum}, {diff}) reconstructs outside 0..=255"
        ))),
    }
}

/// Width of the Haar sum coefficient on the wire.
pub const HAAR_SUM_BITS: usize = 9;

pub fn hamming_distance(x: &BitString, y: &BitString) -> Result<usize, CodecError> {
    if x.len() != y.len() {
        return Err(CodecError::InvalidParams(format!(
            "hamming distance of words with {} and {} bits",
            x.len(),
            y.len()
        )));
    }
    Ok(x.bits().iter().zip(y.bits()).filter(|(a, b)| a != b).count())
}

pub fn word_distance(x: u8, y: u8) -> u32 {
    (x ^ y).count_ones()
}

pub const WORD_BITS: usize = 7;
pub const SYNDROME_BITS: usize = 5;
const WORD_MASK: u8 = 0x7f;

/// Which sub-code of the split a node encodes with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubCode {
    First,
    Second,
}

impl SubCode {
    pub fn for_node(node_id: u8) -> Self {
        if node_id % 2 == 1 {
            SubCode::First
        } else {
            SubCode::Second
        }
    }
}

/// Result of joint syndrome decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointDecode {
    pub x: u8,
    pub y: u8,
    pub distance: u32,
    /// Set when the closest admissible pair is farther apart than the code
    /// corrects. The (7,4) code is perfect, so this never happens for it.
    pub ambiguous: bool,
}

/// A (7,4) Hamming code `[I4 | P]` split into the sub-codes spanned by
/// generator rows {1,2} and {3,4}.
///
/// Words are 7-bit values with bit position 1 in the most significant bit
/// (`0b1000000`). Matrix rows are stored the same way.
#[derive(Debug, Clone)]
pub struct DiscusCode {
    generator: [u8; 4],
    parity_full: [u8; 3],
    parity_first: [u8; 5],
    parity_second: [u8; 5],
    coset_first: [u8; 32],
    coset_second: [u8; 32],
    leaders: [u8; 8],
}

fn parity(v: u8) -> u8 {
    (v.count_ones() & 1) as u8
}

fn syndrome_of(rows: &[u8], word: u8) -> u8 {
    rows.iter().fold(0u8, |acc, &row| (acc << 1) | parity(row & word))
}

fn min_weight_table<const N: usize>(rows: &[u8]) -> [u8; N] {
    let mut table = [0xffu8; N];
    // ascending weight, then value, so each syndrome keeps its lightest word
    let mut words: Vec<u8> = (0..=WORD_MASK).collect();
    words.sort_by_key(|w| (w.count_ones(), *w));
    for w in words {
        let s = usize::from(syndrome_of(rows, w));
        if table[s] == 0xff {
            table[s] = w;
        }
    }
    debug_assert!(table.iter().all(|&w| w != 0xff));
    table
}

impl Default for DiscusCode {
    fn default() -> Self {
        Self::standard()
    }
}

impl DiscusCode {
    // bits grouped as message | parity
    #[allow(clippy::unusual_byte_groupings)]
    pub fn standard() -> Self {
        let generator = [0b1000_110, 0b0100_101, 0b0010_011, 0b0001_111];
        // [P^T | I3]
        let parity_full = [0b1101_100, 0b1011_010, 0b0111_001];
        // sub-code 1: x3 = x4 = 0, x5 = x1 + x2, x6 = x1, x7 = x2
        let parity_first = [0b0010_000, 0b0001_000, 0b1100_100, 0b1000_010, 0b0100_001];
        // sub-code 2: x1 = x2 = 0, x5 = x4, x6 = x3 + x4, x7 = x3 + x4
        let parity_second = [0b1000_000, 0b0100_000, 0b0001_100, 0b0011_010, 0b0011_001];
        Self {
            generator,
            parity_full,
            parity_first,
            parity_second,
            coset_first: min_weight_table(&parity_first),
            coset_second: min_weight_table(&parity_second),
            leaders: min_weight_table(&parity_full),
        }
    }

    pub fn generator(&self) -> &[u8; 4] {
        &self.generator
    }

    pub fn parity_check(&self, sub: SubCode) -> &[u8; 5] {
        match sub {
            SubCode::First => &self.parity_first,
            SubCode::Second => &self.parity_second,
        }
    }

    pub fn parity_check_full(&self) -> &[u8; 3] {
        &self.parity_full
    }

    /// Generator rows spanning the sub-code.
    pub fn sub_generator(&self, sub: SubCode) -> [u8; 2] {
        match sub {
            SubCode::First => [self.generator[0], self.generator[1]],
            SubCode::Second => [self.generator[2], self.generator[3]],
        }
    }

    /// Encodes a 4-bit message (MSB first) with the full code.
    pub fn encode_message(&self, message: u8) -> u8 {
        (0..4)
            .filter(|i| message >> (3 - i) & 1 == 1)
            .fold(0, |acc, i| acc ^ self.generator[i])
    }

    /// 5-bit syndrome of `word` in the chosen sub-code: its coset index.
    pub fn encode(&self, word: u8, sub: SubCode, meter: &mut CostMeter) -> u8 {
        meter.add(SYNDROME_BITS as u64);
        syndrome_of(self.parity_check(sub), word & WORD_MASK)
    }

    /// Closest pair `(x, y)` with `x` in the first sub-code's coset `s1` and
    /// `y` in the second sub-code's coset `s2`.
    ///
    /// `x ^ y` ranges over a coset of the full code, whose leader is the
    /// minimum-distance difference; splitting the remaining full-code word
    /// into its two sub-code components recovers the pair.
    pub fn joint_decode(&self, s1: u8, s2: u8, meter: &mut CostMeter) -> JointDecode {
        let a = self.coset_first[usize::from(s1 & 0x1f)];
        let b = self.coset_second[usize::from(s2 & 0x1f)];
        let z = a ^ b;
        let leader = self.leaders[usize::from(syndrome_of(&self.parity_full, z))];
        let full = z ^ leader;
        // systematic: the top four bits are the message
        let message = full >> 3;
        let c1 = (0..2)
            .filter(|i| message >> (3 - i) & 1 == 1)
            .fold(0, |acc, i| acc ^ self.generator[i]);
        let c2 = full ^ c1;
        meter.add(2 + 3 + 1 + 2);
        let distance = leader.count_ones();
        JointDecode {
            x: a ^ c1,
            y: b ^ c2,
            distance,
            ambiguous: distance > 1,
        }
    }

    /// Plain-text dump of every matrix, one binary row per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut section = |name: &str, rows: &[u8]| {
            out.push_str(name);
            out.push('\n');
            for r in rows {
                out.push_str(&format!("{:07b}\n", r));
            }
        };
        section("G", &self.generator);
        section("G1", &self.sub_generator(SubCode::First));
        section("G2", &self.sub_generator(SubCode::Second));
        section("H", &self.parity_full);
        section("H1", &self.parity_first);
        section("H2", &self.parity_second);
        out
    }
}

/// The 7-bit word a sample contributes to syndrome coding (its MSBs).
pub fn sample_to_word(v: Sample) -> u8 {
    v >> 1
}

pub fn word_to_sample(word: u8) -> Sample {
    (word & WORD_MASK) << 1
}
