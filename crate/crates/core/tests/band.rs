use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rfidsim::band::{self, Channelizer, IqStream};

fn random_baseband(seed: u64, n: usize, plan: &band::BandPlan, i: usize) -> IqStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Normal::new(0.0, 1.0).unwrap();
    let white: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(g.sample(&mut rng), g.sample(&mut rng)))
        .collect();
    let lp = band::design_lowpass(0.5e6, 0.7e6, 70.0, plan.per_band_sample_rate_hz).unwrap();
    IqStream::new(
        lp.filter(&white),
        plan.per_band_sample_rate_hz,
        plan.bands[i].center_hz,
        0.0,
    )
    .unwrap()
}

fn evm(a: &[Complex64], b: &[Complex64]) -> f64 {
    let err: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let refp: f64 = a.iter().map(|x| x.norm_sqr()).sum();
    (err / refp).sqrt()
}

#[test]
fn default_plan_centers_and_selectivity() {
    let plan = band::make_band_plan(5, 902e6, 928e6, 1.6e6).unwrap();
    let centers: Vec<f64> = plan.bands.iter().map(|b| b.center_hz).collect();
    for (c, want) in centers.iter().zip([904e6, 909.5e6, 915e6, 920.5e6, 926e6]) {
        assert!((c - want).abs() < 1.0);
    }
    for b in &plan.bands {
        assert!(b.q_factor() >= 200.0);
    }
}

#[test]
fn duc_ddc_round_trip_evm() {
    let plan = band::default_plan();
    let chan = Channelizer::new(&plan).unwrap();
    let n = 8192;
    let inputs: Vec<IqStream> = (0..5).map(|i| random_baseband(100 + i as u64, n, &plan, i)).collect();
    let comp = chan.duc(&inputs).unwrap();
    // Edges carry filter transients.
    let edge = 256;
    for (i, x) in inputs.iter().enumerate() {
        let y = chan.ddc(&comp, i).unwrap();
        let e = evm(&x.samples[edge..n - edge], &y.samples[edge..n - edge]);
        assert!(e < 0.01, "band {i}: EVM {e}");
    }
}

#[test]
fn composite_power_is_sum_of_band_powers() {
    let plan = band::default_plan();
    let chan = Channelizer::new(&plan).unwrap();
    let n = 8192;
    let inputs: Vec<IqStream> = (0..5)
        .map(|i| {
            let mut s = random_baseband(200 + i as u64, n, &plan, i);
            let scale = (i + 1) as f64;
            s.samples.iter_mut().for_each(|v| *v *= scale);
            s
        })
        .collect();
    let comp = chan.duc(&inputs).unwrap();
    let r = plan.decimation();
    let edge = 256;
    let p_comp = band::mean_power(&comp.samples[edge * r..(n - edge) * r]);
    let p_sum: f64 = inputs.iter().map(|s| band::mean_power(&s.samples[edge..n - edge])).sum();
    let db = 10.0 * (p_comp / p_sum).log10();
    assert!(db.abs() < 0.2, "{db} dB");
}

#[test]
fn single_band_duc_is_that_band_shifted() {
    let plan = band::default_plan();
    let chan = Channelizer::new(&plan).unwrap();
    let n = 2048;
    let x = random_baseband(5, n, &plan, 3);
    let streams: Vec<IqStream> = (0..5)
        .map(|i| if i == 3 { x.clone() } else { IqStream::zeros(n, x.sample_rate_hz, plan.bands[i].center_hz, 0.0) })
        .collect();
    let comp = chan.duc(&streams).unwrap();
    let alone = chan.upconvert_one(&x.samples, 3, 0.0);
    assert_eq!(comp.samples, alone);
}

#[test]
fn neighbouring_tone_rejected_by_60_db() {
    let plan = band::default_plan();
    let fs = plan.composite_sample_rate_hz;
    let n = 60_000;
    for (tone, keep) in [(1, 2), (3, 2), (0, 4), (4, 0)] {
        let f = plan.offset_hz(tone);
        let samples: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(1.0, std::f64::consts::TAU * f * k as f64 / fs))
            .collect();
        let comp = IqStream::new(samples, fs, plan.center_hz(), 0.0).unwrap();
        let y = band::ddc(&comp, &plan, keep).unwrap();
        let p = band::mean_power(&y.samples[500..y.len() - 500]);
        assert!(10.0 * p.log10() <= -60.0, "tone {tone} into band {keep}: {} dB", 10.0 * p.log10());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn lowpass_designs_are_symmetric_unit_gain(
        pass in 0.05f64..0.3,
        width in 0.03f64..0.15,
        atten in 30.0f64..80.0,
    ) {
        let fs = 1.0e6;
        let f = band::design_lowpass(pass * fs, (pass + width) * fs, atten, fs).unwrap();
        let t = &f.taps;
        for i in 0..t.len() {
            prop_assert!((t[i] - t[t.len() - 1 - i]).abs() < 1e-12);
        }
        prop_assert!((20.0 * f.dc_gain().abs().log10()).abs() < 0.1);
        // Stopband on a dense grid.
        for k in 0..=400 {
            let fr = pass + width + (0.5 - pass - width) * k as f64 / 400.0;
            prop_assert!(f.response_db(fr) <= -atten + 0.5, "{} dB at {}", f.response_db(fr), fr);
        }
    }

    #[test]
    fn plans_respect_spacing(n in 1usize..=5) {
        let plan = band::make_band_plan(n, 902e6, 928e6, 1.6e6).unwrap();
        prop_assert_eq!(plan.bands.len(), n);
        for w in plan.bands.windows(2) {
            prop_assert!(w[1].center_hz - w[0].center_hz >= band::MIN_SPACING_HZ);
        }
        for b in &plan.bands {
            prop_assert!(b.center_hz - b.passband_hz / 2.0 >= 902e6);
            prop_assert!(b.center_hz + b.passband_hz / 2.0 <= 928e6);
        }
    }
}
