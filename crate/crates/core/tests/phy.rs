use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rfidsim::phy::{self, Envelope, FrameKind, PieDecoded, PieTiming, SessionFlags};

/// Polynomial long division over GF(2) on explicit bit vectors. The preset
/// register is folded in by complementing the leading bits of the message.
fn long_division_crc(msg: &[u8], poly: &[u8], preset: &[u8], invert: bool) -> Vec<u8> {
    let w = poly.len() - 1;
    assert!(msg.len() >= w);
    let mut work: Vec<u8> = msg.to_vec();
    for (b, p) in work.iter_mut().zip(preset) {
        *b ^= p;
    }
    work.extend(std::iter::repeat_n(0, w));
    for i in 0..msg.len() {
        if work[i] == 1 {
            for (j, &p) in poly.iter().enumerate() {
                work[i + j] ^= p;
            }
        }
    }
    let rem = work[msg.len()..].to_vec();
    if invert {
        rem.into_iter().map(|b| b ^ 1).collect()
    } else {
        rem
    }
}

fn oracle_crc16(msg: &[u8]) -> Vec<u8> {
    // x^16 + x^12 + x^5 + 1
    let mut poly = vec![0u8; 17];
    for e in [16, 12, 5, 0] {
        poly[16 - e] = 1;
    }
    long_division_crc(msg, &poly, &[1; 16], true)
}

fn oracle_crc5(msg: &[u8]) -> Vec<u8> {
    // x^5 + x^3 + 1, preset 01001
    let mut poly = vec![0u8; 6];
    for e in [5, 3, 0] {
        poly[5 - e] = 1;
    }
    long_division_crc(msg, &poly, &[0, 1, 0, 0, 1], false)
}

fn ascii_bits(s: &str) -> Vec<u8> {
    s.bytes().flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1)).collect()
}

#[test]
fn crc16_matches_genibus_check_value() {
    let bits = ascii_bits("123456789");
    assert_eq!(phy::bits_to_u64(&phy::crc16(&bits)), 0xD64E);
    assert_eq!(phy::bits_to_u64(&oracle_crc16(&bits)), 0xD64E);
}

#[test]
fn crc16_of_epc_reply_matches_long_division() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let mut msg = phy::bits_from_u64(phy::PC_WORD as u64, 16);
        msg.extend((0..phy::EPC_BITS).map(|_| rng.random_range(0..2u8)));
        assert_eq!(phy::crc16(&msg), oracle_crc16(&msg));
    }
}

#[test]
fn crc5_matches_long_division_on_query_bodies() {
    for q in 0..16 {
        let f = phy::frame_query(q, SessionFlags::default()).unwrap();
        assert_eq!(f.crc_bits, oracle_crc5(&f.payload_bits));
        assert!(phy::crc5_check(&f.bits()));
    }
}

#[test]
fn crc16_detects_every_single_bit_flip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.random_range(1..200);
        let msg: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let mut flipped = msg.clone();
        flipped[rng.random_range(0..n)] ^= 1;
        assert_ne!(phy::crc16(&msg), phy::crc16(&flipped));
    }
}

fn with_tail(mut env: Envelope, timing: &PieTiming) -> Envelope {
    let n = (timing.tari_s * env.sample_rate_hz).round() as usize;
    env.samples.extend(std::iter::repeat_n(1.0, n));
    env
}

#[test]
fn pie_payload_of_single_zero_lasts_one_tari() {
    let t = PieTiming::for_blf(80e3);
    let fs = 8e6;
    let empty = phy::pie_encode(&[], &t, fs).samples.len();
    let one = phy::pie_encode(&[0], &t, fs).samples.len();
    assert_eq!(one - empty, (t.tari_s * fs).round() as usize);
    let expect = t.delimiter_s + t.tari_s + t.rtcal_s + t.trcal_s;
    assert!((empty as f64 / fs - expect).abs() <= 1.0 / fs);
}

#[test]
fn pie_round_trip_at_every_link_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for blf in phy::BLFS_HZ {
        let t = PieTiming::for_blf(blf);
        for _ in 0..200 {
            let n = rng.random_range(1..64);
            let bits: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
            let env = with_tail(phy::pie_encode(&bits, &t, 6.4e6), &t);
            match phy::pie_decode(&env, &t, phy::PIE_TOLERANCE) {
                PieDecoded::Command { bits: got, .. } => assert_eq!(got, bits),
                PieDecoded::NoCommand => panic!("blf {blf}: no command for {bits:?}"),
            }
        }
    }
}

#[test]
fn aligned_sum_decodes_offset_sum_does_not() {
    let t = PieTiming::for_blf(80e3);
    let fs = 6.4e6;
    let bits = phy::frame_query(2, SessionFlags::default()).unwrap().bits();
    let a = with_tail(phy::pie_encode(&bits, &t, fs), &t);
    let aligned = Envelope {
        samples: a.samples.iter().map(|v| 2.5 * v).collect(),
        sample_rate_hz: fs,
    };
    assert!(matches!(phy::pie_decode(&aligned, &t, phy::PIE_TOLERANCE), PieDecoded::Command { bits: ref b, .. } if *b == bits));

    // Two carriers' powers add; the second starts 0.6 tari later.
    let shift = (0.6 * t.tari_s * fs).round() as usize;
    let n = a.samples.len() + shift;
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(1.0);
    let offset = Envelope {
        samples: (0..n)
            .map(|i| at(&a.samples, i) + if i < shift { 1.0 } else { at(&a.samples, i - shift) })
            .collect(),
        sample_rate_hz: fs,
    };
    assert_eq!(phy::pie_decode(&offset, &t, phy::PIE_TOLERANCE), PieDecoded::NoCommand);
}

#[test]
fn random_envelopes_are_rejected() {
    let t = PieTiming::for_blf(80e3);
    let fs = 1e6;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 20_000;
    let mut accepted = 0;
    for _ in 0..trials {
        let mut samples = Vec::new();
        while samples.len() < 600 {
            let run = rng.random_range(1..40);
            let level = if rng.random::<bool>() { 1.0 } else { 0.0 };
            samples.extend(std::iter::repeat_n(level, run));
        }
        let env = Envelope {
            samples,
            sample_rate_hz: fs,
        };
        if matches!(phy::pie_decode(&env, &t, phy::PIE_TOLERANCE), PieDecoded::Command { .. }) {
            accepted += 1;
        }
    }
    assert!((accepted as f64) / (trials as f64) < 1e-3, "accepted {accepted}");
}

#[test]
fn fm0_round_trip_through_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let blf = 160e3;
    let fs = 3.2e6;
    // 20 dB SNR on unit-power levels.
    let noise = Normal::new(0.0, 0.1).unwrap();
    for _ in 0..1000 {
        let n = rng.random_range(1..128);
        let bits: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let levels: Vec<f64> = phy::fm0_encode(&bits, blf, fs)
            .into_iter()
            .map(|v| v + noise.sample(&mut rng))
            .collect();
        assert_eq!(phy::fm0_decode(&levels, n, blf, fs), bits);
    }
}

#[test]
fn fm0_data_zero_has_one_mid_symbol_transition() {
    let h = phy::fm0_halves(&[0]);
    let payload = &h[2 * phy::FM0_PREAMBLE_BITS..2 * phy::FM0_PREAMBLE_BITS + 2];
    assert_ne!(payload[0], payload[1]);
    // Boundary transition into the payload symbol.
    assert_ne!(h[2 * phy::FM0_PREAMBLE_BITS - 1], payload[0]);
}

#[test]
fn frame_fields_round_trip() {
    let q = phy::frame_query(4, SessionFlags::default()).unwrap();
    assert_eq!(phy::Frame::parse_downlink(&q.bits()).unwrap().q(), Some(4));
    let ack = phy::frame_ack(0xABCD);
    assert!(ack.bits().windows(16).any(|w| phy::bits_to_u64(w) == 0xABCD));
    assert_eq!(phy::Frame::parse_downlink(&ack.bits()).unwrap().kind, FrameKind::Ack);
    assert!(phy::frame_query(16, SessionFlags::default()).is_err());
}

proptest! {
    #[test]
    fn crc16_residue_property(bits in proptest::collection::vec(0u8..2, 0..300)) {
        let mut m = bits.clone();
        m.extend(phy::crc16(&bits));
        prop_assert!(phy::crc16_check(&m));
    }

    #[test]
    fn crc5_residue_property(bits in proptest::collection::vec(0u8..2, 1..64)) {
        let mut m = bits.clone();
        m.extend(phy::crc5(&bits));
        prop_assert!(phy::crc5_check(&m));
    }

    #[test]
    fn fm0_has_boundary_transitions(bits in proptest::collection::vec(0u8..2, 1..64)) {
        let h = phy::fm0_halves(&bits);
        let start = 2 * phy::FM0_PREAMBLE_BITS;
        for k in (start..h.len() - 1).step_by(2) {
            if k + 2 < h.len() {
                prop_assert_ne!(h[k + 1], h[k + 2]);
            }
        }
    }

    #[test]
    fn hex_round_trip(v in any::<u64>()) {
        let b = phy::bits_from_u64(v, 64);
        prop_assert_eq!(phy::hex_to_bits(&phy::bits_to_hex(&b)).unwrap(), b);
    }
}
