use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfidsim::band::IqStream;
use rfidsim::baseline::{cluster_decode, estimate_tag_count, ClusterOutcome};
use rfidsim::impairments::add_noise;
use rfidsim::phy;
use rfidsim::tag::UplinkConfig;

const FS: f64 = 6.4e6;
const BLF: f64 = 80e3;

/// n overlapping RN16s with random gains; SNR is per-tag power over the
/// noise in one bit-rate bandwidth.
fn collision(n: usize, snr_db: f64, rng: &mut ChaCha8Rng) -> (IqStream, Vec<Vec<u8>>, f64) {
    let rn: Vec<Vec<u8>> = (0..n).map(|_| phy::bits_from_u64(rng.random::<u16>() as u64, 16)).collect();
    let lead = 400;
    let len = phy::fm0_encode(&rn[0], BLF, FS).len() + 2 * lead;
    let mut x = vec![Complex64::new(0.2, 0.1); len];
    for bits in &rn {
        let g = Complex64::from_polar(rng.random_range(0.5..1.0), rng.random_range(0.0..std::f64::consts::TAU));
        for (i, l) in phy::fm0_encode(bits, BLF, FS).iter().enumerate() {
            x[lead + i] += g * (1.0 + l) / 2.0;
        }
    }
    // Tag amplitudes average 0.75 with OOK swing 0.5*|g|.
    let sig = 0.0625 * 0.75f64.powi(2) * 4.0;
    let psd = sig / 10f64.powf(snr_db / 10.0) / BLF;
    add_noise(&mut x, psd * FS, rng);
    (IqStream::new(x, FS, 915e6, 0.0).unwrap(), rn, psd)
}

fn success_rate(n: usize, snr_db: f64, trials: usize, seed: u64) -> f64 {
    let cfg = UplinkConfig::new(BLF).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = 0;
    for _ in 0..trials {
        let (x, truth, psd) = collision(n, snr_db, &mut rng);
        if let ClusterOutcome::Decoded(out) = cluster_decode(&x, n, &cfg, psd) {
            assert!(out.len() <= n);
            assert!(out.iter().all(|b| b.len() == 16));
            if truth.iter().all(|t| out.contains(t)) {
                ok += 1;
            }
        }
    }
    ok as f64 / trials as f64
}

#[test]
fn single_tag_matches_standard_demod() {
    let cfg = UplinkConfig::new(BLF).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (x, truth, psd) = collision(1, 30.0, &mut rng);
    let r = rfidsim::reader::demod_packet(&x, &cfg, rfidsim::reader::Expected::Rn16);
    assert_eq!(cluster_decode(&x, 1, &cfg, psd), ClusterOutcome::Decoded(vec![r.bits.unwrap()]));
    assert_eq!(cluster_decode(&x, 1, &cfg, psd), ClusterOutcome::Decoded(truth));
}

#[test]
fn two_tags_recovered_at_high_snr() {
    let rate = success_rate(2, 30.0, 200, 7);
    println!("n=2 success {rate}");
    assert!(rate >= 0.9, "{rate}");
}

#[test]
fn success_falls_with_tag_count() {
    let rates: Vec<f64> = (2..=5).map(|n| success_rate(n, 20.0, 200, 11 + n as u64)).collect();
    println!("success by n: {rates:?}");
    for w in rates.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{rates:?}");
    }
}

#[test]
fn tag_count_estimate() {
    let cfg = UplinkConfig::new(BLF).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut hits = 0;
    for _ in 0..50 {
        let (x, _, psd) = collision(2, 30.0, &mut rng);
        hits += (estimate_tag_count(&x, &cfg, psd) == 2) as usize;
    }
    assert!(hits >= 40, "{hits}");
}
