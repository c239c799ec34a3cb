//! Source codes for two-node wireless sensor networks, and a deterministic
//! simulator to measure them.
//!
//! Codecs cover companding quantizers (A-law, mu-law), DPCM, Fibonacci and
//! T-code universal codes, and three two-node schemes that exploit
//! correlation between neighbouring readings: modulo residues, the integer
//! Haar pair and syndrome coding over a (7,4) Hamming code. The simulator
//! runs two sensor nodes and a base station on a TDMA schedule and reports
//! bit rate, reconstruction error, codec cost and transmission energy.

pub mod bitstream;
pub mod codebook;
pub mod codec;
pub mod distributed;
pub mod experiment;
pub mod metrics;
pub mod netsim;
pub mod scalar;
pub mod sources;

pub use bitstream::{bit_length, BitError, BitString};
pub use codebook::{Codebook, CodeFamily, FrequencyTable, Symbol};
pub use codec::{CodecKind, CodecParams, CodecSuite};
pub use distributed::DiscusCode;
pub use experiment::{compare, run_experiment, ExperimentConfig, ExperimentError, RunOutput};
pub use metrics::{CostMeter, EnergyModel, MetricsReport};
pub use netsim::{run_simulation, EventKind, EventRecord, SimConfig, SimulationLog};
pub use scalar::{CodecError, Sample};
pub use sources::{CorrelatedPair, CorrelationModel};
