//! Two sensor nodes and a base station on a TDMA schedule.
//!
//! The simulation is a single-threaded discrete-event loop over integer
//! microseconds. The base station broadcasts a reset at start-up, the nodes
//! alternate slots, and every received packet is decoded and logged as a
//! PC record. When a sequence number reaches 255 the base station
//! rebroadcasts the reset before the next round.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitstream::BitString;
use crate::codec::{BaseDecoder, CodecSuite, NodeEncoder};
use crate::metrics::CostMeter;
use crate::scalar::{CodecError, Sample};
use crate::sources::CorrelatedPair;

pub const SENSOR_PACKET_BYTES: usize = 9;
pub const BROADCAST_PACKET_BYTES: usize = 5;
pub const PC_PACKET_BYTES: usize = 19;
/// `code_data` is two bytes wide.
pub const MAX_CODE_BITS: u8 = 16;

pub const NODE_COUNT: u8 = 2;
pub const DEFAULT_BAUD: u32 = 38_400;
pub const MIN_RATE_HZ: u32 = 2;
pub const MAX_RATE_HZ: u32 = 125;

pub const CMD_RESET: u16 = 1;
pub const SENSOR_PHOTO: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PacketError {
    #[error("{field} = {value} does not fit ({limit})")]
    FieldOverflow {
        field: &'static str,
        value: u64,
        limit: &'static str,
    },
    #[error("{kind} packet needs {expected} bytes, got {got}")]
    Size {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error("node {node}: {source}")]
    Codec {
        node: u8,
        #[source]
        source: CodecError,
    },
    #[error("cannot write event log: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write event log: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot write event log: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SensorDataPacket {
    pub node_id: u8,
    pub sequence: u8,
    pub code_data: u16,
    pub original_data: u16,
    /// Bits of `code_data` in use.
    pub length: u8,
    /// Encode cost in microseconds.
    pub latency: u16,
}

impl SensorDataPacket {
    fn validate(&self) -> Result<(), PacketError> {
        if self.length > MAX_CODE_BITS {
            return Err(PacketError::FieldOverflow {
                field: "length",
                value: u64::from(self.length),
                limit: "at most 16 bits",
            });
        }
        if u32::from(self.code_data) >> self.length != 0 {
            return Err(PacketError::FieldOverflow {
                field: "code_data",
                value: u64::from(self.code_data),
                limit: "wider than the length field",
            });
        }
        Ok(())
    }

    pub fn serialize(&self) -> Result<[u8; SENSOR_PACKET_BYTES], PacketError> {
        self.validate()?;
        let mut out = [0u8; SENSOR_PACKET_BYTES];
        out[0] = self.node_id;
        out[1] = self.sequence;
        out[2..4].copy_from_slice(&self.code_data.to_le_bytes());
        out[4..6].copy_from_slice(&self.original_data.to_le_bytes());
        out[6] = self.length;
        out[7..9].copy_from_slice(&self.latency.to_le_bytes());
        Ok(out)
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, PacketError> {
        let b: &[u8; SENSOR_PACKET_BYTES] = bytes.try_into().map_err(|_| PacketError::Size {
            kind: "sensor data",
            expected: SENSOR_PACKET_BYTES,
            got: bytes.len(),
        })?;
        let pkt = Self {
            node_id: b[0],
            sequence: b[1],
            code_data: u16::from_le_bytes([b[2], b[3]]),
            original_data: u16::from_le_bytes([b[4], b[5]]),
            length: b[6],
            latency: u16::from_le_bytes([b[7], b[8]]),
        };
        pkt.validate()?;
        Ok(pkt)
    }

    /// The coded bits, most significant first.
    pub fn code_bits(&self) -> Result<BitString, PacketError> {
        self.validate()?;
        Ok(BitString::from_value(u64::from(self.code_data), usize::from(self.length)).expect("validated width"))
    }

    pub fn from_code(node_id: u8, sequence: u8, code: &BitString, original: Sample, latency: u16) -> Result<Self, PacketError> {
        if code.len() > usize::from(MAX_CODE_BITS) {
            return Err(PacketError::FieldOverflow {
                field: "length",
                value: code.len() as u64,
                limit: "at most 16 bits",
            });
        }
        Ok(Self {
            node_id,
            sequence,
            code_data: code.to_value().expect("<= 16 bits") as u16,
            original_data: u16::from(original),
            length: code.len() as u8,
            latency,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BroadcastPacket {
    pub command: u16,
    /// Sampling interval every node synchronizes to, in milliseconds.
    pub timer: u16,
    pub sensor: u8,
}

impl BroadcastPacket {
    pub fn reset(rate_hz: u32) -> Self {
        Self {
            command: CMD_RESET,
            timer: u16::try_from(1000 / rate_hz.max(1)).unwrap_or(u16::MAX),
            sensor: SENSOR_PHOTO,
        }
    }

    pub fn serialize(&self) -> [u8; BROADCAST_PACKET_BYTES] {
        let mut out = [0u8; BROADCAST_PACKET_BYTES];
        out[0..2].copy_from_slice(&self.command.to_le_bytes());
        out[2..4].copy_from_slice(&self.timer.to_le_bytes());
        out[4] = self.sensor;
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, PacketError> {
        let b: &[u8; BROADCAST_PACKET_BYTES] = bytes.try_into().map_err(|_| PacketError::Size {
            kind: "broadcast",
            expected: BROADCAST_PACKET_BYTES,
            got: bytes.len(),
        })?;
        Ok(Self {
            command: u16::from_le_bytes([b[0], b[1]]),
            timer: u16::from_le_bytes([b[2], b[3]]),
            sensor: b[4],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PcDataPacket {
    pub sensor: SensorDataPacket,
    pub decode_data: u16,
    pub decode_latency: u16,
    /// Arrival time in microseconds, wrapping at 2^32.
    pub receive_time: u32,
    /// Packets lost so far.
    pub overflow: u16,
}

impl PcDataPacket {
    pub fn serialize(&self) -> Result<[u8; PC_PACKET_BYTES], PacketError> {
        let mut out = [0u8; PC_PACKET_BYTES];
        out[..SENSOR_PACKET_BYTES].copy_from_slice(&self.sensor.serialize()?);
        out[9..11].copy_from_slice(&self.decode_data.to_le_bytes());
        out[11..13].copy_from_slice(&self.decode_latency.to_le_bytes());
        out[13..17].copy_from_slice(&self.receive_time.to_le_bytes());
        out[17..19].copy_from_slice(&self.overflow.to_le_bytes());
        Ok(out)
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, PacketError> {
        if bytes.len() != PC_PACKET_BYTES {
            return Err(PacketError::Size {
                kind: "PC data",
                expected: PC_PACKET_BYTES,
                got: bytes.len(),
            });
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        Ok(Self {
            sensor: SensorDataPacket::deserialize(&bytes[..SENSOR_PACKET_BYTES])?,
            decode_data: u16_at(9),
            decode_latency: u16_at(11),
            receive_time: u32::from_le_bytes([bytes[13], bytes[14], bytes[15], bytes[16]]),
            overflow: u16_at(17),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Packet {
    Sensor(SensorDataPacket),
    Broadcast(BroadcastPacket),
    Pc(PcDataPacket),
}

pub fn serialize_packet(pkt: &Packet) -> Result<Vec<u8>, PacketError> {
    Ok(match pkt {
        Packet::Sensor(p) => p.serialize()?.to_vec(),
        Packet::Broadcast(p) => p.serialize().to_vec(),
        Packet::Pc(p) => p.serialize()?.to_vec(),
    })
}

/// Space-separated uppercase hex, the golden-file form.
pub fn hex_dump(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02X}")).collect::<Vec<_>>().join(" ")
}

/// Time on air for a frame, rounded up to whole microseconds.
pub fn airtime_us(bytes: usize, baud: u32) -> u64 {
    (bytes as u64 * 8 * 1_000_000).div_ceil(u64::from(baud))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Broadcast,
    Transmit,
    Decode,
    DecodeError,
    Drop,
}

/// One row of the event log. Decode rows carry every PC packet field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time_us: u64,
    pub event: EventKind,
    pub node_id: Option<u8>,
    pub sequence: Option<u8>,
    pub code_data: Option<u16>,
    pub original_data: Option<u16>,
    pub length: Option<u8>,
    pub latency: Option<u16>,
    pub decode_data: Option<u16>,
    pub decode_latency: Option<u16>,
    pub receive_time: Option<u32>,
    pub overflow: Option<u16>,
    pub detail: Option<String>,
}

impl EventRecord {
    fn bare(time_us: u64, event: EventKind) -> Self {
        Self {
            time_us,
            event,
            node_id: None,
            sequence: None,
            code_data: None,
            original_data: None,
            length: None,
            latency: None,
            decode_data: None,
            decode_latency: None,
            receive_time: None,
            overflow: None,
            detail: None,
        }
    }

    fn with_sensor(time_us: u64, event: EventKind, p: &SensorDataPacket) -> Self {
        Self {
            node_id: Some(p.node_id),
            sequence: Some(p.sequence),
            code_data: Some(p.code_data),
            original_data: Some(p.original_data),
            length: Some(p.length),
            latency: Some(p.latency),
            ..Self::bare(time_us, event)
        }
    }

    fn broadcast(time_us: u64, b: &BroadcastPacket) -> Self {
        Self {
            detail: Some(format!("command={} timer={} sensor={}", b.command, b.timer, b.sensor)),
            ..Self::bare(time_us, EventKind::Broadcast)
        }
    }

    fn decoded(time_us: u64, pc: &PcDataPacket) -> Self {
        Self {
            decode_data: Some(pc.decode_data),
            decode_latency: Some(pc.decode_latency),
            receive_time: Some(pc.receive_time),
            overflow: Some(pc.overflow),
            ..Self::with_sensor(time_us, EventKind::Decode, &pc.sensor)
        }
    }
}

pub fn write_events_csv<W: Write>(events: &[EventRecord], writer: W) -> Result<(), NetError> {
    let mut w = csv::Writer::from_writer(writer);
    for e in events {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_jsonl<W: Write>(events: &[EventRecord], mut writer: W) -> Result<(), NetError> {
    for e in events {
        serde_json::to_writer(&mut writer, e)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Fixed TDMA slots: each round gives node 1 the first slot and node 2 the
/// second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotSchedule {
    pub period_us: u64,
    pub slot_us: u64,
}

impl SlotSchedule {
    pub fn new(rate_hz: u32) -> Self {
        let period_us = 1_000_000 / u64::from(rate_hz.max(1));
        Self {
            period_us,
            slot_us: period_us / u64::from(NODE_COUNT),
        }
    }

    pub fn slot_offset(&self, node_id: u8) -> u64 {
        u64::from(node_id.saturating_sub(1) % NODE_COUNT) * self.slot_us
    }

    /// Node owning the slot that contains `offset_us` into a round.
    pub fn owner(&self, offset_us: u64) -> u8 {
        ((offset_us % self.period_us) / self.slot_us).min(u64::from(NODE_COUNT) - 1) as u8 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub rate_hz: u32,
    /// Samples taken by each node.
    pub samples: usize,
    pub cost_per_op_us: u32,
    pub baud: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rate_hz: MIN_RATE_HZ,
            samples: 100,
            cost_per_op_us: 1,
            baud: DEFAULT_BAUD,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if !(MIN_RATE_HZ..=MAX_RATE_HZ).contains(&self.rate_hz) {
            return Err(NetError::Config(format!(
                "sampling rate {} Hz outside {MIN_RATE_HZ}..={MAX_RATE_HZ}",
                self.rate_hz
            )));
        }
        if self.baud == 0 {
            return Err(NetError::Config("baud rate must be positive".into()));
        }
        let schedule = SlotSchedule::new(self.rate_hz);
        if airtime_us(SENSOR_PACKET_BYTES, self.baud) > schedule.slot_us {
            return Err(NetError::Config(format!(
                "a {SENSOR_PACKET_BYTES}-byte packet does not fit a {} us slot at {} baud",
                schedule.slot_us, self.baud
            )));
        }
        Ok(())
    }
}

/// Carries serialized frames from the nodes to the base station.
pub trait Channel {
    /// `None` drops the frame.
    fn carry(&mut self, frame: Vec<u8>) -> Option<Vec<u8>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Lossless;

impl Channel for Lossless {
    fn carry(&mut self, frame: Vec<u8>) -> Option<Vec<u8>> {
        Some(frame)
    }
}

fn saturate_u16(v: u64) -> u16 {
    u16::try_from(v).unwrap_or(u16::MAX)
}

pub struct SensorNode<'a> {
    pub id: u8,
    pub sequence: u8,
    encoder: NodeEncoder<'a>,
    cost_per_op_us: u32,
}

impl<'a> SensorNode<'a> {
    pub fn new(id: u8, suite: &'a CodecSuite, cost_per_op_us: u32) -> Self {
        Self {
            id,
            sequence: 0,
            encoder: suite.encoder(id),
            cost_per_op_us,
        }
    }

    pub fn reset(&mut self) {
        self.sequence = 0;
        self.encoder.reset();
    }
}

/// Samples and encodes one reading when `slot_owner` is this node.
pub fn node_step(
    node: &mut SensorNode<'_>,
    slot_owner: u8,
    pair: CorrelatedPair,
) -> Result<Option<SensorDataPacket>, NetError> {
    if slot_owner != node.id {
        return Ok(None);
    }
    let mut meter = CostMeter::new();
    let code = node
        .encoder
        .encode(pair, &mut meter)
        .map_err(|source| NetError::Codec { node: node.id, source })?;
    let latency = saturate_u16(meter.simulated_us(node.cost_per_op_us));
    let pkt = SensorDataPacket::from_code(node.id, node.sequence, &code, node.encoder.reading(pair), latency)?;
    node.sequence = node.sequence.wrapping_add(1);
    Ok(Some(pkt))
}

/// What the base station forwards to the PC for one packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaseOutput {
    Decoded(PcDataPacket),
    Failed { packet: SensorDataPacket, reason: String },
}

pub struct BaseStation<'a> {
    decoder: BaseDecoder<'a>,
    joint: bool,
    expected: [Option<u8>; NODE_COUNT as usize],
    pending: Option<SensorDataPacket>,
    overflow: u16,
    resync_due: bool,
    cost_per_op_us: u32,
}

impl<'a> BaseStation<'a> {
    pub fn new(suite: &'a CodecSuite, cost_per_op_us: u32) -> Self {
        Self {
            decoder: suite.decoder(),
            joint: suite.kind().is_joint(),
            expected: [None; NODE_COUNT as usize],
            pending: None,
            overflow: 0,
            resync_due: false,
            cost_per_op_us,
        }
    }

    pub fn overflow(&self) -> u16 {
        self.overflow
    }

    /// A sequence number of 255 has been seen since the last broadcast.
    pub fn resync_due(&self) -> bool {
        self.resync_due
    }

    /// Starts a new epoch. A half pair still waiting is reported as failed.
    pub fn on_broadcast(&mut self) -> Vec<BaseOutput> {
        self.expected = [None; NODE_COUNT as usize];
        self.resync_due = false;
        self.decoder.reset();
        self.pending
            .take()
            .map(|packet| BaseOutput::Failed {
                packet,
                reason: "partner packet never arrived".into(),
            })
            .into_iter()
            .collect()
    }

    fn lose(&mut self, n: u64) {
        self.overflow = saturate_u16(u64::from(self.overflow) + n);
    }

    fn finish(&self, sensor: SensorDataPacket, decoded: Sample, meter: &CostMeter, now_us: u64) -> BaseOutput {
        BaseOutput::Decoded(PcDataPacket {
            sensor,
            decode_data: u16::from(decoded),
            decode_latency: saturate_u16(meter.simulated_us(self.cost_per_op_us)),
            receive_time: now_us as u32,
            overflow: self.overflow,
        })
    }

    /// Decodes an arriving packet. Joint schemes hold the odd node's packet
    /// until its even partner arrives, then emit both records.
    pub fn base_station_step(&mut self, pkt: SensorDataPacket, now_us: u64) -> Vec<BaseOutput> {
        let slot = usize::from(pkt.node_id.wrapping_sub(1) % NODE_COUNT);
        if let Some(e) = self.expected[slot] {
            self.lose(u64::from(pkt.sequence.wrapping_sub(e)));
        }
        self.expected[slot] = Some(pkt.sequence.wrapping_add(1));
        if pkt.sequence == u8::MAX {
            self.resync_due = true;
        }
        let failed = |packet, reason: String| BaseOutput::Failed { packet, reason };

        let bits = match pkt.code_bits() {
            Ok(b) => b,
            Err(e) => return vec![failed(pkt, e.to_string())],
        };
        let mut meter = CostMeter::new();
        if !self.joint {
            return vec![match self.decoder.decode_single(pkt.node_id, &bits, &mut meter) {
                Ok(v) => self.finish(pkt, v, &meter, now_us),
                Err(e) => failed(pkt, e.to_string()),
            }];
        }

        let mut out = Vec::new();
        if pkt.node_id % 2 == 1 {
            if let Some(stale) = self.pending.replace(pkt) {
                self.lose(1);
                out.push(failed(stale, "partner packet never arrived".into()));
            }
            return out;
        }
        let Some(partner) = self.pending.take() else {
            return vec![failed(pkt, "partner packet missing".into())];
        };
        if partner.sequence != pkt.sequence {
            self.lose(1);
            return vec![
                failed(partner, format!("partner sequence {} never arrived", partner.sequence)),
                failed(pkt, format!("partner sequence {} never arrived", pkt.sequence)),
            ];
        }
        let joint = partner
            .code_bits()
            .map_err(|e| e.to_string())
            .and_then(|odd| self.decoder.decode_joint(&odd, &bits, &mut meter).map_err(|e| e.to_string()));
        match joint {
            Ok((a, b)) => {
                out.push(self.finish(partner, a, &meter, now_us));
                out.push(self.finish(pkt, b, &meter, now_us));
            }
            Err(reason) => {
                out.push(failed(partner, reason.clone()));
                out.push(failed(pkt, reason));
            }
        }
        out
    }

    /// Reports a half pair still buffered when the run ends.
    pub fn drain(&mut self) -> Vec<BaseOutput> {
        self.on_broadcast()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Action {
    Broadcast { resume: usize },
    RoundStart { round: usize },
    SlotTick { offset: u64, pair: CorrelatedPair, slot_end: u64 },
    Arrival { frame: Vec<u8> },
}

impl Action {
    fn priority(&self) -> u8 {
        match self {
            Action::Broadcast { .. } => 0,
            Action::RoundStart { .. } => 1,
            Action::SlotTick { .. } => 2,
            Action::Arrival { .. } => 3,
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
struct Scheduled {
    time: u64,
    seq: u64,
    action: Action,
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.action.priority(), self.seq).cmp(&(other.time, other.action.priority(), other.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Default)]
struct EventQueue {
    heap: BinaryHeap<Reverse<Scheduled>>,
    next_seq: u64,
}

impl EventQueue {
    fn push(&mut self, time: u64, action: Action) {
        self.heap.push(Reverse(Scheduled {
            time,
            seq: self.next_seq,
            action,
        }));
        self.next_seq += 1;
    }

    fn pop(&mut self) -> Option<Scheduled> {
        self.heap.pop().map(|Reverse(s)| s)
    }
}

/// Everything a run produced, in event order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimulationLog {
    pub events: Vec<EventRecord>,
    pub sensor_packets: Vec<SensorDataPacket>,
    pub pc_packets: Vec<PcDataPacket>,
    pub broadcasts: Vec<BroadcastPacket>,
}

impl SimulationLog {
    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.event == kind).count()
    }

    pub fn final_overflow(&self) -> u16 {
        self.pc_packets.last().map_or(0, |p| p.overflow)
    }
}

pub fn run_simulation(
    config: &SimConfig,
    suite: &CodecSuite,
    pairs: impl FnMut() -> CorrelatedPair,
) -> Result<SimulationLog, NetError> {
    run_simulation_with_channel(config, suite, pairs, &mut Lossless)
}

/// Runs `config.samples` rounds. `pairs` is called once per round and
/// yields the two nodes' readings.
pub fn run_simulation_with_channel(
    config: &SimConfig,
    suite: &CodecSuite,
    mut pairs: impl FnMut() -> CorrelatedPair,
    channel: &mut dyn Channel,
) -> Result<SimulationLog, NetError> {
    config.validate()?;
    let schedule = SlotSchedule::new(config.rate_hz);
    let sensor_air = airtime_us(SENSOR_PACKET_BYTES, config.baud);
    let broadcast_air = airtime_us(BROADCAST_PACKET_BYTES, config.baud);

    let mut nodes: Vec<SensorNode<'_>> = (1..=NODE_COUNT)
        .map(|id| SensorNode::new(id, suite, config.cost_per_op_us))
        .collect();
    let mut base = BaseStation::new(suite, config.cost_per_op_us);
    let mut log = SimulationLog::default();
    let mut queue = EventQueue::default();

    let emit = |log: &mut SimulationLog, now: u64, outputs: Vec<BaseOutput>| {
        for out in outputs {
            match out {
                BaseOutput::Decoded(pc) => {
                    log.events.push(EventRecord::decoded(now, &pc));
                    log.pc_packets.push(pc);
                }
                BaseOutput::Failed { packet, reason } => {
                    let mut rec = EventRecord::with_sensor(now, EventKind::DecodeError, &packet);
                    rec.detail = Some(reason);
                    log.events.push(rec);
                }
            }
        }
    };

    queue.push(0, Action::Broadcast { resume: 0 });
    while let Some(Scheduled { time: now, action, .. }) = queue.pop() {
        match action {
            Action::Broadcast { resume } => {
                let pkt = BroadcastPacket::reset(config.rate_hz);
                let stale = base.on_broadcast();
                emit(&mut log, now, stale);
                for n in &mut nodes {
                    n.reset();
                }
                log.events.push(EventRecord::broadcast(now, &pkt));
                log.broadcasts.push(pkt);
                if resume < config.samples {
                    queue.push(now + broadcast_air, Action::RoundStart { round: resume });
                }
            }
            Action::RoundStart { round } => {
                if base.resync_due() {
                    queue.push(now, Action::Broadcast { resume: round });
                    continue;
                }
                let pair = pairs();
                for node in 1..=NODE_COUNT {
                    let offset = schedule.slot_offset(node);
                    queue.push(
                        now + offset,
                        Action::SlotTick {
                            offset,
                            pair,
                            slot_end: now + offset + schedule.slot_us,
                        },
                    );
                }
                if round + 1 < config.samples {
                    queue.push(now + schedule.period_us, Action::RoundStart { round: round + 1 });
                }
            }
            Action::SlotTick { offset, pair, slot_end } => {
                let owner = schedule.owner(offset);
                let mut sent = None;
                for sensor in &mut nodes {
                    if let Some(p) = node_step(sensor, owner, pair)? {
                        sent = Some(p);
                    }
                }
                let Some(pkt) = sent else {
                    continue;
                };
                let tx_start = now + u64::from(pkt.latency);
                let tx_end = tx_start + sensor_air;
                log.sensor_packets.push(pkt);
                if tx_end > slot_end {
                    let mut rec = EventRecord::with_sensor(now, EventKind::Drop, &pkt);
                    rec.detail = Some(format!("transmission would end at {tx_end} us, slot ends at {slot_end} us"));
                    log.events.push(rec);
                    continue;
                }
                log.events.push(EventRecord::with_sensor(tx_start, EventKind::Transmit, &pkt));
                match channel.carry(pkt.serialize()?.to_vec()) {
                    Some(frame) => queue.push(tx_end, Action::Arrival { frame }),
                    None => {
                        let mut rec = EventRecord::with_sensor(tx_end, EventKind::Drop, &pkt);
                        rec.detail = Some("lost in channel".into());
                        log.events.push(rec);
                    }
                }
            }
            Action::Arrival { frame } => {
                let outputs = match SensorDataPacket::deserialize(&frame) {
                    Ok(pkt) => base.base_station_step(pkt, now),
                    Err(e) => {
                        let mut rec = EventRecord::bare(now, EventKind::DecodeError);
                        rec.detail = Some(format!("unreadable frame: {e}"));
                        log.events.push(rec);
                        Vec::new()
                    }
                };
                emit(&mut log, now, outputs);
            }
        }
    }
    let end = log.events.last().map_or(0, |e| e.time_us);
    let leftovers = base.drain();
    emit(&mut log, end, leftovers);
    Ok(log)
}
