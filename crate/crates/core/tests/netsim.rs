use std::collections::HashMap;

use proptest::prelude::*;
use sensorcode::codebook::FrequencyTable;
use sensorcode::codec::{CodecKind, CodecParams, CodecSuite};
use sensorcode::distributed::{sample_to_word, word_to_sample};
use sensorcode::netsim::*;
use sensorcode::scalar::{Compander, CompanderLaw};
use sensorcode::sources::CorrelatedPair;
use sensorcode::CostMeter;

fn suite(kind: CodecKind) -> CodecSuite {
    CodecSuite::new(kind, CodecParams::default(), Some(&FrequencyTable::uniform(256).unwrap())).unwrap()
}

/// Slow ramp on node 1, a close neighbour on node 2.
fn ramp() -> impl FnMut() -> CorrelatedPair {
    let mut i: u32 = 0;
    move || {
        i += 1;
        let x = (100 + (i / 3) % 60) as u8;
        CorrelatedPair { x, y: x + (i % 2) as u8 }
    }
}

fn sim(kind: CodecKind, rate_hz: u32, samples: usize) -> SimulationLog {
    let cfg = SimConfig {
        rate_hz,
        samples,
        ..SimConfig::default()
    };
    run_simulation(&cfg, &suite(kind), ramp()).unwrap()
}

#[test]
fn golden_sensor_packet() {
    let p = SensorDataPacket {
        node_id: 1,
        sequence: 0,
        code_data: 4,
        original_data: 44,
        length: 3,
        latency: 9,
    };
    assert_eq!(hex_dump(&p.serialize().unwrap()), "01 00 04 00 2C 00 03 09 00");
}

#[test]
fn golden_broadcast_packet() {
    let b = BroadcastPacket::reset(2);
    assert_eq!((b.command, b.timer, b.sensor), (1, 500, 1));
    assert_eq!(hex_dump(&b.serialize()), "01 00 F4 01 01");
    assert_eq!(BroadcastPacket::deserialize(&b.serialize()), Ok(b));
}

#[test]
fn golden_pc_packet() {
    let pc = PcDataPacket {
        sensor: SensorDataPacket {
            node_id: 2,
            sequence: 255,
            code_data: 0x0123,
            original_data: 200,
            length: 9,
            latency: 300,
        },
        decode_data: 200,
        decode_latency: 0x0102,
        receive_time: 0x0A0B_0C0D,
        overflow: 3,
    };
    let bytes = serialize_packet(&Packet::Pc(pc)).unwrap();
    assert_eq!(
        hex_dump(&bytes),
        "02 FF 23 01 C8 00 09 2C 01 C8 00 02 01 0D 0C 0B 0A 03 00"
    );
}

#[test]
fn serialization_rejects_overflowing_fields() {
    let too_long = SensorDataPacket {
        length: 17,
        ..SensorDataPacket::default()
    };
    assert!(matches!(too_long.serialize(), Err(PacketError::FieldOverflow { field: "length", .. })));
    let too_wide = SensorDataPacket {
        code_data: 8,
        length: 3,
        ..SensorDataPacket::default()
    };
    assert!(matches!(too_wide.serialize(), Err(PacketError::FieldOverflow { field: "code_data", .. })));
    assert!(matches!(SensorDataPacket::deserialize(&[0; 8]), Err(PacketError::Size { got: 8, .. })));
    assert!(PcDataPacket::deserialize(&[0; 20]).is_err());
}

#[test]
fn two_hertz_ten_samples_event_counts() {
    let log = sim(CodecKind::MuLaw, 2, 10);
    assert_eq!(log.count(EventKind::Transmit), 20);
    assert_eq!(log.sensor_packets.len(), 20);
    assert_eq!(log.count(EventKind::Broadcast), 1);
    assert_eq!(log.events[0].event, EventKind::Broadcast);
    assert_eq!(log.pc_packets.len(), 20);
}

#[test]
fn broadcasts_follow_sequence_wrap() {
    // one broadcast at start-up and one more per 256 completed rounds
    for samples in [255, 256, 257, 512, 513, 700] {
        let log = sim(CodecKind::Dpcm, 125, samples);
        assert_eq!(log.count(EventKind::Broadcast), 1 + (samples - 1) / 256, "samples={samples}");
    }
}

#[test]
fn tdma_mutual_exclusion() {
    for kind in CodecKind::ALL {
        let log = sim(kind, 125, 300);
        let mut busy: Vec<(u64, u64)> = log
            .events
            .iter()
            .filter_map(|e| match e.event {
                EventKind::Transmit => Some((e.time_us, e.time_us + airtime_us(SENSOR_PACKET_BYTES, DEFAULT_BAUD))),
                EventKind::Broadcast => Some((e.time_us, e.time_us + airtime_us(BROADCAST_PACKET_BYTES, DEFAULT_BAUD))),
                _ => None,
            })
            .collect();
        busy.sort_unstable();
        assert!(busy.windows(2).all(|w| w[0].1 <= w[1].0), "{kind}: overlapping transmissions");
        assert!(log.events.windows(2).all(|w| w[0].time_us <= w[1].time_us), "{kind}: log out of order");
    }
}

#[test]
fn runs_are_byte_identical() {
    for kind in CodecKind::ALL {
        let render = || {
            let mut buf = Vec::new();
            write_events_csv(&sim(kind, 40, 300).events, &mut buf).unwrap();
            buf
        };
        assert_eq!(render(), render(), "{kind}");
    }
}

fn conserved(log: &SimulationLog) -> bool {
    // every transmission ends in exactly one decode, decode error or drop
    let mut open: HashMap<(u8, u8), i32> = HashMap::new();
    for e in &log.events {
        let key = (e.node_id.unwrap_or(0), e.sequence.unwrap_or(0));
        match e.event {
            EventKind::Broadcast => {
                if open.values().any(|&v| v != 0) {
                    return false;
                }
                open.clear();
            }
            EventKind::Transmit => *open.entry(key).or_default() += 1,
            EventKind::Decode | EventKind::DecodeError | EventKind::Drop => *open.entry(key).or_default() -= 1,
        }
    }
    open.values().all(|&v| v == 0)
}

#[test]
fn every_transmission_is_accounted_for() {
    for kind in CodecKind::ALL {
        let log = sim(kind, 125, 600);
        assert!(conserved(&log), "{kind}");
        assert_eq!(log.count(EventKind::DecodeError), 0, "{kind}");
        assert_eq!(log.final_overflow(), 0, "{kind}");
    }
}

struct DropEvery {
    n: usize,
    seen: usize,
    dropped: usize,
}

impl Channel for DropEvery {
    fn carry(&mut self, frame: Vec<u8>) -> Option<Vec<u8>> {
        self.seen += 1;
        if self.seen.is_multiple_of(self.n) {
            self.dropped += 1;
            None
        } else {
            Some(frame)
        }
    }
}

#[test]
fn lossy_channel_is_counted_as_overflow() {
    let cfg = SimConfig {
        rate_hz: 10,
        samples: 200,
        ..SimConfig::default()
    };
    let mut ch = DropEvery { n: 7, seen: 0, dropped: 0 };
    let log = run_simulation_with_channel(&cfg, &suite(CodecKind::Fibonacci), ramp(), &mut ch).unwrap();
    assert!(conserved(&log));
    assert_eq!(log.count(EventKind::Drop), ch.dropped);
    // a trailing loss on a node has no later packet to reveal the gap
    let overflow = usize::from(log.final_overflow());
    assert!(overflow + 2 >= ch.dropped && overflow <= ch.dropped, "{overflow} vs {}", ch.dropped);

    let mut ch = DropEvery { n: 5, seen: 0, dropped: 0 };
    let log = run_simulation_with_channel(&cfg, &suite(CodecKind::Discus), ramp(), &mut ch).unwrap();
    assert!(conserved(&log));
    assert!(log.count(EventKind::DecodeError) > 0);
    assert!(log.pc_packets.iter().all(|p| p.sensor.node_id == 1 || p.sensor.node_id == 2));
}

#[test]
fn node_step_respects_slot_owner() {
    let s = suite(CodecKind::Modulo);
    let mut node = SensorNode::new(1, &s, 1);
    let pair = CorrelatedPair { x: 44, y: 40 };
    assert_eq!(node_step(&mut node, 2, pair).unwrap(), None);
    let pkt = node_step(&mut node, 1, pair).unwrap().unwrap();
    assert_eq!((pkt.code_data, pkt.length, pkt.original_data, pkt.sequence), (4, 3, 44, 0));
    assert_eq!(node.sequence, 1);

    let s = suite(CodecKind::Fibonacci);
    let mut node = SensorNode::new(1, &s, 1);
    let pkt = node_step(&mut node, 1, CorrelatedPair { x: 9, y: 9 }).unwrap().unwrap();
    assert_eq!(pkt.length, 6);
    assert_eq!(pkt.code_bits().unwrap().to_string(), "010011");
}

fn decoded(outputs: &[BaseOutput]) -> Vec<(u8, u16)> {
    outputs
        .iter()
        .map(|o| match o {
            BaseOutput::Decoded(pc) => (pc.sensor.node_id, pc.decode_data),
            BaseOutput::Failed { reason, .. } => panic!("decode failed: {reason}"),
        })
        .collect()
}

#[test]
fn base_station_haar_pair() {
    let s = suite(CodecKind::Haar);
    let mut base = BaseStation::new(&s, 1);
    let sum = SensorDataPacket {
        node_id: 1,
        code_data: 202,
        length: 9,
        ..SensorDataPacket::default()
    };
    // -2 in sign+magnitude: 1 10
    let diff = SensorDataPacket {
        node_id: 2,
        code_data: 0b110,
        length: 3,
        ..SensorDataPacket::default()
    };
    assert!(base.base_station_step(sum, 10).is_empty());
    assert_eq!(decoded(&base.base_station_step(diff, 20)), vec![(1, 100), (2, 102)]);
}

#[test]
fn base_station_discus_equal_readings() {
    let s = suite(CodecKind::Discus);
    for x in [0u8, 77, 200, 254] {
        let mut n1 = SensorNode::new(1, &s, 1);
        let mut n2 = SensorNode::new(2, &s, 1);
        let pair = CorrelatedPair { x, y: x };
        let p1 = node_step(&mut n1, 1, pair).unwrap().unwrap();
        let p2 = node_step(&mut n2, 2, pair).unwrap().unwrap();
        assert_eq!((p1.length, p2.length), (5, 5));
        let mut base = BaseStation::new(&s, 1);
        base.base_station_step(p1, 0);
        // only the 7 most significant bits are coded
        let word = u16::from(word_to_sample(sample_to_word(x)));
        assert_eq!(decoded(&base.base_station_step(p2, 1)), vec![(1, word), (2, word)]);
    }
}

#[test]
fn base_station_mulaw_smallest_preimage() {
    let s = suite(CodecKind::MuLaw);
    let mut base = BaseStation::new(&s, 1);
    let pkt = SensorDataPacket {
        node_id: 1,
        code_data: 223,
        length: 8,
        ..SensorDataPacket::default()
    };
    let table = Compander::new(CompanderLaw::MU_LAW).unwrap();
    let oracle = table.table().iter().position(|&c| c >= 223).unwrap() as u16;
    assert_eq!(decoded(&base.base_station_step(pkt, 0)), vec![(1, oracle)]);
    let mut m = CostMeter::new();
    assert_eq!(table.encode(oracle as u8, &mut m), 223);
}

#[test]
fn base_station_reports_garbage() {
    let s = suite(CodecKind::TCode);
    let mut base = BaseStation::new(&s, 1);
    // "0" alone is not a T-code codeword
    let pkt = SensorDataPacket {
        node_id: 1,
        code_data: 0,
        length: 1,
        ..SensorDataPacket::default()
    };
    assert!(matches!(base.base_station_step(pkt, 0).as_slice(), [BaseOutput::Failed { .. }]));
}

#[test]
fn rejects_rates_outside_range() {
    for rate_hz in [0, 1, 126, 1000] {
        let cfg = SimConfig {
            rate_hz,
            ..SimConfig::default()
        };
        assert!(matches!(
            run_simulation(&cfg, &suite(CodecKind::MuLaw), ramp()),
            Err(NetError::Config(_))
        ));
    }
}

#[test]
fn jsonl_and_csv_logs_parse_back() {
    let log = sim(CodecKind::Haar, 20, 40);
    let mut csv_buf = Vec::new();
    write_events_csv(&log.events, &mut csv_buf).unwrap();
    let back: Vec<EventRecord> = csv::Reader::from_reader(csv_buf.as_slice())
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(back, log.events);

    let mut json_buf = Vec::new();
    write_events_jsonl(&log.events, &mut json_buf).unwrap();
    let back: Vec<EventRecord> = String::from_utf8(json_buf)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(back, log.events);
}

proptest! {
    #[test]
    fn sensor_packet_roundtrip(node_id: u8, sequence: u8, raw_code: u16, original_data: u16, length in 0u8..=16, latency: u16) {
        let code_data = (u32::from(raw_code) & ((1u32 << length) - 1)) as u16;
        let p = SensorDataPacket { node_id, sequence, code_data, original_data, length, latency };
        let bytes = serialize_packet(&Packet::Sensor(p)).unwrap();
        prop_assert_eq!(bytes.len(), SENSOR_PACKET_BYTES);
        prop_assert_eq!(SensorDataPacket::deserialize(&bytes), Ok(p));
    }

    #[test]
    fn broadcast_roundtrip(command: u16, timer: u16, sensor: u8) {
        let b = BroadcastPacket { command, timer, sensor };
        prop_assert_eq!(BroadcastPacket::deserialize(&b.serialize()), Ok(b));
    }
}
