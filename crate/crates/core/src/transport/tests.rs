use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::error::Error;
use crate::params::ParameterVector;
use crate::protocol::{MessageBody, ProtocolMessage};

fn up(seq: u64, gradient: Vec<f32>, loss: f64) -> ProtocolMessage<f32> {
    ProtocolMessage { user: 3, round: 7, step: 2, seq, body: MessageBody::ClientUpdateUp { gradient: ParameterVector::new(gradient), loss } }
}

fn down(seq: u64, weights: Vec<f32>) -> ProtocolMessage<f32> {
    ProtocolMessage { user: 3, round: 7, step: 2, seq, body: MessageBody::DiscriminatorDown { weights: ParameterVector::new(weights) } }
}

#[test]
fn ten_element_update_roundtrips() {
    let m = up(9, (0..10).map(|i| i as f32 * 0.25 - 1.0).collect(), 0.693);
    let bytes = encode(&m);
    assert_eq!(&bytes[..4], b"UFGN");
    assert_eq!(bytes.len(), HEADER_LEN + 8 + 8 + 2 + 8 + 40);
    assert_eq!(decode::<f32>(&bytes).unwrap(), m);
    assert_eq!(encode(&m), bytes);
}

#[test]
fn header_fields_are_little_endian() {
    let bytes = encode(&down(1, vec![1.0]));
    assert_eq!(bytes[4], WIRE_VERSION);
    assert_eq!(bytes[5], 1);
    assert_eq!(&bytes[6..10], &3u32.to_le_bytes());
    assert_eq!(&bytes[10..14], &7u32.to_le_bytes());
    assert_eq!(&bytes[14..18], &2u32.to_le_bytes());
    assert_eq!(u64::from_le_bytes(bytes[18..26].try_into().unwrap()) as usize, bytes.len() - HEADER_LEN);
}

#[test]
fn malformed_frames_report_offsets() {
    assert!(matches!(decode::<f32>(&[]), Err(Error::Frame { offset: 0, .. })));
    let good = encode(&up(1, vec![0.5; 4], 1.0));
    let mut bad = good.clone();
    bad[0] = b'X';
    assert!(matches!(decode::<f32>(&bad), Err(Error::Frame { offset: 0, .. })));
    let mut bad = good.clone();
    bad[4] = 9;
    assert!(matches!(decode::<f32>(&bad), Err(Error::Frame { offset: 4, .. })));
    let mut bad = good.clone();
    bad[18] ^= 0x01;
    assert!(matches!(decode::<f32>(&bad), Err(Error::Frame { offset: 18, .. })));
    assert!(matches!(decode::<f32>(&good[..good.len() - 1]), Err(Error::Frame { .. })));
    assert!(matches!(decode::<f64>(&good), Err(Error::Frame { .. })));
}

#[test]
fn decode_any_widens_single_precision() {
    let m = up(4, vec![0.5, -2.0], 0.25);
    let w = decode_any(&encode(&m)).unwrap();
    match w.body {
        MessageBody::ClientUpdateUp { gradient, loss } => {
            assert_eq!(gradient.as_slice(), &[0.5, -2.0]);
            assert_eq!(loss, 0.25);
        }
        _ => panic!("wrong variant"),
    }
}

#[test]
fn uplink_tap_sees_only_updates() {
    let up_tap = EavesdropTap::new(TapFilter::Uplink);
    let all = EavesdropTap::new(TapFilter::Both);
    let (mut server, mut client) = in_process_link(&[up_tap.clone(), all.clone()]);
    server.send(&down(0, vec![1.0, 2.0])).unwrap();
    let got: ProtocolMessage<f32> = client.recv().unwrap().unwrap();
    assert_eq!(got, down(0, vec![1.0, 2.0]));
    client.send(&up(0, vec![0.1, 0.2], 0.5)).unwrap();
    server.send(&down(1, vec![1.0, 2.0])).unwrap();
    assert_eq!(up_tap.len(), 1);
    assert!(read_header(&up_tap.frames()[0]).unwrap().is_uplink());
    assert_eq!(all.len(), 3);
    let stamps: Vec<u64> = all.records().iter().map(|r| r.timestamp).collect();
    assert!(stamps.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn link_is_fifo_and_checks_sequence() {
    let (mut server, mut client) = in_process_link(&[]);
    for seq in 0..5 {
        client.send(&up(seq, vec![seq as f32], 0.0)).unwrap();
    }
    for seq in 0..5 {
        let m: ProtocolMessage<f32> = server.recv().unwrap().unwrap();
        assert_eq!(m.seq, seq);
    }
    assert!(server.recv::<f32>().unwrap().is_none());
    client.send(&up(2, vec![0.0], 0.0)).unwrap();
    assert!(matches!(server.recv::<f32>(), Err(Error::Protocol(_))));
}

#[test]
fn send_after_close_fails() {
    let (mut server, mut client) = in_process_link(&[]);
    server.close();
    assert!(matches!(client.send(&up(0, vec![0.0], 0.0)), Err(Error::Link(_))));
}

#[test]
fn empty_transcript_is_header_only() {
    let t = Transcript::new(42, Vec::new());
    let bytes = t.to_bytes();
    assert_eq!(bytes.len(), 21);
    assert_eq!(Transcript::from_bytes(&bytes).unwrap(), t);
}

#[test]
fn corrupt_transcript_names_the_frame() {
    let frames: Vec<Vec<u8>> = (0..3).map(|i| encode(&up(i, vec![1.0; 3], 0.1))).collect();
    let mut bytes = Transcript::new(1, frames.clone()).to_bytes();
    let second = 21 + frames[0].len();
    bytes[second] = b'Z';
    assert!(matches!(Transcript::from_bytes(&bytes), Err(Error::Transcript { index: 1, .. })));
    let bytes = Transcript::new(1, frames).to_bytes();
    assert!(matches!(Transcript::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Transcript { index: 2, .. })));
}

fn arb_message() -> impl Strategy<Value = ProtocolMessage<f32>> {
    let vec = prop::collection::vec(-1e6f32..1e6, 0..40);
    (any::<u32>(), any::<u32>(), any::<u32>(), any::<u64>(), 0u8..3, vec, -1e3f64..1e3).prop_map(|(user, round, step, seq, kind, v, s)| {
        let body = match kind {
            0 => MessageBody::DiscriminatorDown { weights: ParameterVector::new(v) },
            1 => MessageBody::ClientUpdateUp { gradient: ParameterVector::new(v), loss: s },
            _ => MessageBody::RoundComplete { inception_score: s.abs() + 1.0 },
        };
        ProtocolMessage { user, round, step, seq, body }
    })
}

proptest! {
    #[test]
    fn encode_decode_roundtrip(m in arb_message()) {
        prop_assert_eq!(decode::<f32>(&encode(&m)).unwrap(), m);
    }

    #[test]
    fn decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = decode::<f32>(&bytes);
        let _ = decode::<f64>(&bytes);
        let _ = Transcript::from_bytes(&bytes);
    }

    #[test]
    fn mutated_frames_never_panic(m in arb_message(), at in any::<prop::sample::Index>(), byte in any::<u8>()) {
        let mut bytes = encode(&m);
        let i = at.index(bytes.len());
        bytes[i] = byte;
        let _ = decode::<f32>(&bytes);
    }

    #[test]
    fn transcript_roundtrip(ms in prop::collection::vec(arb_message(), 0..8), seed in any::<u64>()) {
        let t = Transcript::new(seed, ms.iter().map(encode).collect());
        prop_assert_eq!(Transcript::from_bytes(&t.to_bytes()).unwrap(), t);
    }
}
