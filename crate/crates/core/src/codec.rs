//! Per-node encoders and base-station decoders for every scheme, expressed on
//! wire codewords.

use std::fmt;
use std::str::FromStr;

use crate::bitstream::{bit_length, BitString};
use crate::codebook::{build_fibonacci_codebook, build_tcode_codebook, Codebook, FrequencyTable, SAMPLE_ALPHABET};
use crate::distributed::{
    haar_decode_pair, haar_encode_pair, modulo_encode, modulo_joint_decode, sample_to_word, word_to_sample,
    DiscusCode, ModuloParams, NodeRole, SubCode, HAAR_SUM_BITS, SYNDROME_BITS,
};
use crate::metrics::CostMeter;
use crate::scalar::{
    parse_sign_magnitude, sign_magnitude_bits, symbol_decode, symbol_encode, CodecError, Compander, CompanderLaw,
    DpcmDecoder, DpcmEncoder, Sample,
};
use crate::sources::CorrelatedPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodecKind {
    MuLaw,
    ALaw,
    Fibonacci,
    FibonacciPseudo,
    Modulo,
    TCode,
    TCodePseudo,
    Haar,
    Discus,
    Dpcm,
}

impl CodecKind {
    /// Every scheme, in results-table row order.
    pub const ALL: [CodecKind; 10] = [
        CodecKind::MuLaw,
        CodecKind::ALaw,
        CodecKind::Fibonacci,
        CodecKind::FibonacciPseudo,
        CodecKind::Modulo,
        CodecKind::TCode,
        CodecKind::TCodePseudo,
        CodecKind::Haar,
        CodecKind::Discus,
        CodecKind::Dpcm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CodecKind::MuLaw => "mulaw",
            CodecKind::ALaw => "alaw",
            CodecKind::Fibonacci => "fibonacci",
            CodecKind::FibonacciPseudo => "fibonacci-pseudo",
            CodecKind::Modulo => "modulo",
            CodecKind::TCode => "tcode",
            CodecKind::TCodePseudo => "tcode-pseudo",
            CodecKind::Haar => "haar",
            CodecKind::Discus => "discus",
            CodecKind::Dpcm => "dpcm",
        }
    }

    /// Decoding needs the partner node's packet.
    pub fn is_joint(self) -> bool {
        matches!(self, CodecKind::Modulo | CodecKind::Haar | CodecKind::Discus)
    }

    pub fn is_lossless(self) -> bool {
        matches!(
            self,
            CodecKind::Fibonacci
                | CodecKind::FibonacciPseudo
                | CodecKind::TCode
                | CodecKind::TCodePseudo
                | CodecKind::Haar
                | CodecKind::Dpcm
        )
    }

    /// Codebook is built from the source's own histogram.
    pub fn is_source_matched(self) -> bool {
        matches!(self, CodecKind::FibonacciPseudo | CodecKind::TCodePseudo)
    }
}

impl fmt::Display for CodecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CodecKind {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match wanted.as_str() {
            "mu-law" | "ulaw" => "mulaw",
            "a-law" => "alaw",
            "t-code" => "tcode",
            "t-code-pseudo" => "tcode-pseudo",
            "modulo-8" => "modulo",
            other => other,
        };
        CodecKind::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| {
                let known: Vec<_> = CodecKind::ALL.iter().map(|k| k.name()).collect();
                CodecError::InvalidParams(format!("unknown codec {s:?} (expected one of {})", known.join(", ")))
            })
    }
}

/// Tunables shared by every node of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecParams {
    pub frame_length: usize,
    pub modulo: ModuloParams,
}

impl Default for CodecParams {
    fn default() -> Self {
        Self {
            frame_length: 16,
            modulo: ModuloParams::default(),
        }
    }
}

/// Immutable codec state for one run: tables, codebooks and matrices.
#[derive(Debug, Clone)]
pub struct CodecSuite {
    kind: CodecKind,
    params: CodecParams,
    compander: Option<Compander>,
    book: Option<Codebook>,
    discus: DiscusCode,
}

impl CodecSuite {
    /// `histogram` feeds the source-matched codebooks; the other codebook
    /// variants rank symbols by value.
    pub fn new(kind: CodecKind, params: CodecParams, histogram: Option<&FrequencyTable>) -> Result<Self, CodecError> {
        DpcmEncoder::new(params.frame_length)?;
        let compander = match kind {
            CodecKind::MuLaw => Some(Compander::new(CompanderLaw::MU_LAW)?),
            CodecKind::ALaw => Some(Compander::new(CompanderLaw::A_LAW)?),
            _ => None,
        };
        let book = match kind {
            CodecKind::Fibonacci | CodecKind::TCode | CodecKind::FibonacciPseudo | CodecKind::TCodePseudo => {
                let identity;
                let freqs = if kind.is_source_matched() {
                    histogram.ok_or_else(|| {
                        CodecError::InvalidParams(format!("{kind} needs a source histogram"))
                    })?
                } else {
                    identity = FrequencyTable::uniform(SAMPLE_ALPHABET).expect("non-empty alphabet");
                    &identity
                };
                let built = if matches!(kind, CodecKind::Fibonacci | CodecKind::FibonacciPseudo) {
                    build_fibonacci_codebook(freqs)
                } else {
                    build_tcode_codebook(freqs)
                };
                Some(built.map_err(|e| CodecError::InvalidParams(e.to_string()))?)
            }
            _ => None,
        };
        Ok(Self {
            kind,
            params,
            compander,
            book,
            discus: DiscusCode::standard(),
        })
    }

    pub fn kind(&self) -> CodecKind {
        self.kind
    }

    pub fn params(&self) -> CodecParams {
        self.params
    }

    pub fn codebook(&self) -> Option<&Codebook> {
        self.book.as_ref()
    }

    pub fn discus(&self) -> &DiscusCode {
        &self.discus
    }

    pub fn encoder(&self, node_id: u8) -> NodeEncoder<'_> {
        NodeEncoder {
            suite: self,
            node_id,
            dpcm: DpcmEncoder::new(self.params.frame_length).expect("validated in new"),
        }
    }

    pub fn decoder(&self) -> BaseDecoder<'_> {
        let fresh = || DpcmDecoder::new(self.params.frame_length).expect("validated in new");
        BaseDecoder {
            suite: self,
            dpcm: [fresh(), fresh()],
        }
    }
}

/// Encoder state held by one sensor node.
#[derive(Debug, Clone)]
pub struct NodeEncoder<'a> {
    suite: &'a CodecSuite,
    node_id: u8,
    dpcm: DpcmEncoder,
}

impl NodeEncoder<'_> {
    pub fn node_id(&self) -> u8 {
        self.node_id
    }

    /// The node's own reading of a pair.
    pub fn reading(&self, pair: CorrelatedPair) -> Sample {
        if self.node_id % 2 == 1 {
            pair.x
        } else {
            pair.y
        }
    }

    /// Restarts DPCM framing after a broadcast reset.
    pub fn reset(&mut self) {
        self.dpcm.reset();
    }

    /// Codeword for this node's reading. The Haar node overhears its
    /// partner, so it is handed the whole pair.
    pub fn encode(&mut self, pair: CorrelatedPair, meter: &mut CostMeter) -> Result<BitString, CodecError> {
        let v = self.reading(pair);
        let suite = self.suite;
        let bits = match suite.kind {
            CodecKind::MuLaw | CodecKind::ALaw => {
                let c = suite.compander.as_ref().expect("compander built");
                Compander::code_bits(c.encode(v, meter))
            }
            CodecKind::Fibonacci | CodecKind::FibonacciPseudo | CodecKind::TCode | CodecKind::TCodePseudo => {
                symbol_encode(u16::from(v), suite.book.as_ref().expect("codebook built"), meter)?
            }
            CodecKind::Dpcm => self.dpcm.encode(v, meter).to_bits(),
            CodecKind::Modulo => {
                meter.tick();
                let params = suite.params.modulo;
                let role = NodeRole::for_node(self.node_id);
                let code = u64::from(modulo_encode(v, role, params));
                let width = match role {
                    NodeRole::Residue => params.residue_bits(),
                    NodeRole::Reference => bit_length(code) as usize,
                };
                BitString::from_value(code, width)?
            }
            CodecKind::Haar => {
                meter.tick();
                let (sum, diff) = haar_encode_pair(pair.x, pair.y);
                if self.node_id % 2 == 1 {
                    BitString::from_value(u64::from(sum), HAAR_SUM_BITS)?
                } else {
                    sign_magnitude_bits(i32::from(diff))
                }
            }
            CodecKind::Discus => {
                let s = suite.discus.encode(sample_to_word(v), SubCode::for_node(self.node_id), meter);
                BitString::from_value(u64::from(s), SYNDROME_BITS)?
            }
        };
        Ok(bits)
    }
}

/// Base-station decoder state; DPCM keeps one frame tracker per node.
#[derive(Debug, Clone)]
pub struct BaseDecoder<'a> {
    suite: &'a CodecSuite,
    dpcm: [DpcmDecoder; 2],
}

impl BaseDecoder<'_> {
    pub fn reset(&mut self) {
        for d in &mut self.dpcm {
            d.reset();
        }
    }

    /// Decodes a packet from a scheme that needs no partner.
    pub fn decode_single(&mut self, node_id: u8, bits: &BitString, meter: &mut CostMeter) -> Result<Sample, CodecError> {
        let suite = self.suite;
        match suite.kind {
            CodecKind::MuLaw | CodecKind::ALaw => {
                let code = u8::try_from(bits.to_value()?)
                    .map_err(|_| CodecError::Corrupt(format!("compander code {bits} exceeds 8 bits")))?;
                Ok(suite.compander.as_ref().expect("compander built").decode(code, meter))
            }
            CodecKind::Fibonacci | CodecKind::FibonacciPseudo | CodecKind::TCode | CodecKind::TCodePseudo => {
                let (symbol, rest) = symbol_decode(bits, suite.book.as_ref().expect("codebook built"), meter)?;
                if !rest.is_empty() {
                    return Err(CodecError::Desync(format!("{} trailing bits after codeword", rest.len())));
                }
                Sample::try_from(symbol).map_err(|_| CodecError::UnknownSymbol(symbol))
            }
            CodecKind::Dpcm => self.dpcm[usize::from(node_id % 2)].decode_bits(bits, meter),
            kind => Err(CodecError::InvalidParams(format!("{kind} needs joint decoding"))),
        }
    }

    /// Decodes a pair of partner packets: odd node first, even node second.
    pub fn decode_joint(
        &mut self,
        odd: &BitString,
        even: &BitString,
        meter: &mut CostMeter,
    ) -> Result<(Sample, Sample), CodecError> {
        let suite = self.suite;
        match suite.kind {
            CodecKind::Modulo => {
                meter.tick();
                let residue = u16::try_from(odd.to_value()?).map_err(|_| CodecError::Corrupt("residue too wide".into()))?;
                let reference = Sample::try_from(even.to_value()?)
                    .map_err(|_| CodecError::Corrupt(format!("reference {even} exceeds 8 bits")))?;
                Ok((modulo_joint_decode(reference, residue, suite.params.modulo), reference))
            }
            CodecKind::Haar => {
                meter.tick();
                let sum = i32::try_from(odd.to_value()?).map_err(|_| CodecError::Corrupt("sum too wide".into()))?;
                haar_decode_pair(sum, parse_sign_magnitude(even)?)
            }
            CodecKind::Discus => {
                let syndrome = |b: &BitString| -> Result<u8, CodecError> {
                    if b.len() != SYNDROME_BITS {
                        return Err(CodecError::Corrupt(format!("syndrome of {} bits", b.len())));
                    }
                    Ok(b.to_value()? as u8)
                };
                let joint = suite.discus.joint_decode(syndrome(odd)?, syndrome(even)?, meter);
                Ok((word_to_sample(joint.x), word_to_sample(joint.y)))
            }
            kind => Err(CodecError::InvalidParams(format!("{kind} decodes per packet"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(kind: CodecKind, pairs: &[CorrelatedPair]) -> Vec<(Sample, Sample)> {
        let suite = CodecSuite::new(kind, CodecParams::default(), Some(&FrequencyTable::uniform(256).unwrap())).unwrap();
        let (mut e1, mut e2) = (suite.encoder(1), suite.encoder(2));
        let mut dec = suite.decoder();
        let mut m = CostMeter::new();
        pairs
            .iter()
            .map(|&p| {
                let (a, b) = (e1.encode(p, &mut m).unwrap(), e2.encode(p, &mut m).unwrap());
                if kind.is_joint() {
                    dec.decode_joint(&a, &b, &mut m).unwrap()
                } else {
                    (dec.decode_single(1, &a, &mut m).unwrap(), dec.decode_single(2, &b, &mut m).unwrap())
                }
            })
            .collect()
    }

    #[test]
    fn names_parse_back() {
        for k in CodecKind::ALL {
            assert_eq!(k.name().parse::<CodecKind>().unwrap(), k);
        }
        assert_eq!("mu-law".parse::<CodecKind>().unwrap(), CodecKind::MuLaw);
        assert!("huffman".parse::<CodecKind>().is_err());
    }

    #[test]
    fn lossless_kinds_roundtrip() {
        let pairs: Vec<_> = (0..=255u8)
            .map(|x| CorrelatedPair { x, y: x.wrapping_mul(7) })
            .collect();
        for kind in CodecKind::ALL.into_iter().filter(|k| k.is_lossless()) {
            let out = roundtrip(kind, &pairs);
            for (p, d) in pairs.iter().zip(out) {
                assert_eq!(d, (p.x, p.y), "{kind}");
            }
        }
    }

    #[test]
    fn modulo_residue_node_example() {
        let suite = CodecSuite::new(CodecKind::Modulo, CodecParams::default(), None).unwrap();
        let bits = suite.encoder(1).encode(CorrelatedPair { x: 44, y: 40 }, &mut CostMeter::new()).unwrap();
        assert_eq!((bits.to_value().unwrap(), bits.len()), (4, 3));
        let out = roundtrip(CodecKind::Modulo, &[CorrelatedPair { x: 44, y: 40 }]);
        assert_eq!(out, vec![(44, 40)]);
    }

    #[test]
    fn haar_pair_example() {
        let out = roundtrip(CodecKind::Haar, &[CorrelatedPair { x: 100, y: 102 }]);
        assert_eq!(out, vec![(100, 102)]);
    }

    #[test]
    fn fibonacci_rank_ten_is_six_bits() {
        let suite = CodecSuite::new(CodecKind::Fibonacci, CodecParams::default(), None).unwrap();
        let bits = suite.encoder(1).encode(CorrelatedPair { x: 9, y: 9 }, &mut CostMeter::new()).unwrap();
        assert_eq!(bits.to_string(), "010011");
    }

    #[test]
    fn discus_equal_readings_recover_word() {
        let pairs: Vec<_> = (0..=255u8).map(|x| CorrelatedPair { x, y: x }).collect();
        for (p, (a, b)) in pairs.iter().zip(roundtrip(CodecKind::Discus, &pairs)) {
            assert_eq!((a, b), (p.x & !1, p.x & !1));
        }
    }

    #[test]
    fn source_matched_needs_histogram() {
        assert!(CodecSuite::new(CodecKind::TCodePseudo, CodecParams::default(), None).is_err());
        let bad = CodecParams {
            frame_length: 0,
            ..CodecParams::default()
        };
        assert!(CodecSuite::new(CodecKind::Dpcm, bad, None).is_err());
    }
}
