use gesturebot_core::command_map::Verb;
use gesturebot_core::raster::BinFrame;
use gesturebot_core::wire::*;
use gesturebot_oracles as oracle;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn finite() -> impl Strategy<Value = f32> {
    -1e6f32..1e6
}

fn body_strategy() -> impl Strategy<Value = PacketBody> {
    prop_oneof![
        (any::<u32>(), 1u16..50, 1u16..2000, 1u16..2000, proptest::collection::vec(any::<u8>(), 0..=CHUNK_DATA))
            .prop_flat_map(|(id, cnt, w, h, data)| (0..cnt).prop_map(move |idx| {
                PacketBody::FrameChunk(FrameChunk {
                    frame_id: id,
                    chunk_idx: idx,
                    chunk_cnt: cnt,
                    width: w,
                    height: h,
                    data: data.clone(),
                })
            })),
        (any::<u32>(), proptest::option::of(0u8..255), finite())
            .prop_map(|(frame_id, label, distance)| PacketBody::Class(ClassMsg { frame_id, label, distance })),
        (proptest::sample::select(Verb::ALL.to_vec()), finite())
            .prop_map(|(verb, magnitude)| PacketBody::Cmd(CmdMsg { verb, magnitude })),
        (finite(), finite(), finite(), any::<bool>(), any::<u32>())
            .prop_map(|(x, y, theta, grip, tick)| PacketBody::State(StateMsg { x, y, theta, grip, tick })),
    ]
}

fn packet_strategy() -> impl Strategy<Value = Packet> {
    (any::<u32>(), body_strategy()).prop_map(|(seq, body)| Packet { seq, body })
}

fn reassemble(buf: &mut ReassemblyBuffer, chunks: &[FrameChunk], now: u64) -> Vec<(u32, BinFrame)> {
    chunks.iter().filter_map(|c| buf.push(c, now).unwrap()).collect()
}

#[test]
fn payload_sizes() {
    let class = Packet { seq: 1, body: PacketBody::Class(ClassMsg { frame_id: 2, label: None, distance: 1.5 }) };
    let bytes = encode_packet(&class).unwrap();
    assert_eq!(bytes.len(), HEADER_LEN + 9);
    assert_eq!(&bytes[..4], b"GBOT");
    assert_eq!(bytes[HEADER_LEN + 4], 0xFF);
    let state =
        Packet { seq: 0, body: PacketBody::State(StateMsg { x: 0.0, y: 0.0, theta: 0.0, grip: true, tick: 9 }) };
    assert_eq!(encode_packet(&state).unwrap().len(), HEADER_LEN + 17);
    let cmd = Packet { seq: 0, body: PacketBody::Cmd(CmdMsg { verb: Verb::Forward, magnitude: 0.5 }) };
    assert_eq!(encode_packet(&cmd).unwrap().len(), HEADER_LEN + 5);
}

#[test]
fn chunk_counts() {
    assert_eq!(chunk_frame(&BinFrame::zeros(640, 480).unwrap(), 0).len(), 39);
    assert_eq!(chunk_frame(&BinFrame::zeros(60, 80).unwrap(), 0).len(), 1);
    let chunks = chunk_frame(&BinFrame::zeros(640, 480).unwrap(), 0);
    assert!(chunks[..38].iter().all(|c| c.data.len() == CHUNK_DATA));
    assert_eq!(chunks[38].data.len(), 38_400 - 38 * CHUNK_DATA);
}

#[test]
fn shuffled_chunks_reassemble() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let frame = oracle::random_bin(&mut rng, 640, 480, 0.3);
        let mut chunks = chunk_frame(&frame, 77);
        chunks.shuffle(&mut rng);
        let mut buf = ReassemblyBuffer::new();
        // every chunk travels through the codec
        let decoded: Vec<FrameChunk> = chunks
            .iter()
            .map(|c| {
                let bytes = encode_packet(&Packet { seq: 0, body: PacketBody::FrameChunk(c.clone()) }).unwrap();
                match decode_packet(&bytes).unwrap().body {
                    PacketBody::FrameChunk(c) => c,
                    other => panic!("{other:?}"),
                }
            })
            .collect();
        let out = reassemble(&mut buf, &decoded, 0);
        assert_eq!(out, vec![(77, frame)]);
        assert_eq!(buf.pending(), 0);
    }
}

#[test]
fn duplicate_chunks_are_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let frame = oracle::random_bin(&mut rng, 200, 100, 0.5);
    let chunks = chunk_frame(&frame, 5);
    assert!(chunks.len() > 1);
    let mut buf = ReassemblyBuffer::new();
    assert_eq!(buf.push(&chunks[0], 0).unwrap(), None);
    assert_eq!(buf.push(&chunks[0], 1).unwrap(), None);
    let out = reassemble(&mut buf, &chunks[1..], 2);
    assert_eq!(out, vec![(5, frame)]);
    // a late duplicate does not start the frame again
    assert_eq!(buf.push(&chunks[1], 3).unwrap(), None);
    assert_eq!(buf.pending(), 0);
}

#[test]
fn partial_frame_dropped_after_deadline() {
    let frame = BinFrame::ones(640, 480).unwrap();
    let chunks = chunk_frame(&frame, 9);
    let mut buf = ReassemblyBuffer::new();
    reassemble(&mut buf, &chunks[..20], 0);
    // exactly at the deadline the frame is still alive
    reassemble(&mut buf, &chunks[20..30], 500);
    assert_eq!(buf.dropped(), 0);
    assert_eq!(reassemble(&mut buf, &chunks[30..], 501), vec![]);
    assert_eq!(buf.dropped(), 1);
    // the remainder started a fresh partial that can never complete in time
    assert_eq!(buf.pending(), 1);
    let out = reassemble(&mut buf, &chunks[..30], 600);
    assert_eq!(out, vec![(9, frame)]);
}

#[test]
fn inconsistent_chunks_rejected() {
    let chunks = chunk_frame(&BinFrame::zeros(640, 480).unwrap(), 1);
    let mut buf = ReassemblyBuffer::new();
    buf.push(&chunks[0], 0).unwrap();
    let mut other = chunks[1].clone();
    other.width = 320;
    assert_eq!(buf.push(&other, 0), Err(ReassemblyError::InconsistentGeometry(1)));
}

#[test]
fn malformed_datagrams() {
    let cmd = Packet { seq: 3, body: PacketBody::Cmd(CmdMsg { verb: Verb::Stop, magnitude: 0.0 }) };
    let good = encode_packet(&cmd).unwrap();
    for cut in 0..good.len() {
        assert!(decode_packet(&good[..cut]).is_err(), "cut {cut}");
    }
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert_eq!(decode_packet(&bad_magic), Err(WireError::BadMagic));
    let mut bad_version = good.clone();
    bad_version[4] = 9;
    assert_eq!(decode_packet(&bad_version), Err(WireError::UnsupportedVersion(9)));
    let mut bad_kind = good.clone();
    bad_kind[5] = 0x7F;
    assert_eq!(decode_packet(&bad_kind), Err(WireError::UnknownKind(0x7F)));
    let mut trailing = good.clone();
    trailing.push(0);
    assert!(decode_packet(&trailing).is_err());
    let mut bad_verb = good;
    bad_verb[HEADER_LEN] = 42;
    assert_eq!(decode_packet(&bad_verb), Err(WireError::InvalidField("verb")));
    assert!(matches!(decode_packet(b"GBOT"), Err(WireError::TruncatedPayload { .. })));
}

#[test]
fn oversized_chunk_rejected_by_encoder() {
    let c = FrameChunk { frame_id: 0, chunk_idx: 0, chunk_cnt: 1, width: 1, height: 1, data: vec![0; MAX_PAYLOAD] };
    assert!(matches!(
        encode_packet(&Packet { seq: 0, body: PacketBody::FrameChunk(c) }),
        Err(WireError::PayloadTooLarge(_))
    ));
}

#[test]
fn random_bytes_never_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut buf = [0u8; 64];
    for i in 0..100_000 {
        let n = rng.gen_range(0..buf.len());
        rng.fill_bytes(&mut buf[..n]);
        if i % 2 == 0 && n >= 6 {
            // valid magic and version so the body parsers are exercised
            buf[..5].copy_from_slice(b"GBOT\x01");
            buf[5] = rng.gen_range(0..6);
        }
        let _ = decode_packet(&buf[..n]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn decode_inverts_encode(p in packet_strategy()) {
        let bytes = encode_packet(&p).unwrap();
        let back = decode_packet(&bytes).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(encode_packet(&back).unwrap(), bytes);
    }

    #[test]
    fn any_float_bits_roundtrip(bits in any::<u32>(), seq in any::<u32>()) {
        let p = Packet { seq, body: PacketBody::Cmd(CmdMsg { verb: Verb::Forward, magnitude: f32::from_bits(bits) }) };
        let bytes = encode_packet(&p).unwrap();
        prop_assert_eq!(encode_packet(&decode_packet(&bytes).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn frames_roundtrip_through_chunks(seed in any::<u64>(), w in 1usize..700, h in 1usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = oracle::random_bin(&mut rng, w, h, 0.5);
        let mut chunks = chunk_frame(&frame, 1);
        chunks.shuffle(&mut rng);
        let mut buf = ReassemblyBuffer::new();
        prop_assert_eq!(reassemble(&mut buf, &chunks, 0), vec![(1, frame)]);
    }
}
