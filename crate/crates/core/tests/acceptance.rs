//! End-to-end acceptance checks. Each test prints one PASS/FAIL line per
//! criterion and fails when the criterion is not met.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rfidsim::band::{self, Channelizer, IqStream};
use rfidsim::baseline;
use rfidsim::harness::{
    self, expand_population, instantiate, simulate, Fidelity, GroupKind, MetricsReport, ReaderMode, ScenarioConfig,
    TagGroup,
};
use rfidsim::impairments::{self, GmpModel};
use rfidsim::phy::{self, FrameKind, PieDecoded, PieTiming, SessionFlags};
use rfidsim::reader::{self, EventKind, Expected, ReadEvent, ScheduledCommand, SessionInput, SessionState};
use rfidsim::tag::{self, ChipFrontEnd, SawFilterSpec, TagInstance, TagKind, UplinkConfig};

fn verdict(criterion: u32, pass: bool, detail: &str) -> bool {
    println!("{} criterion {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn scenario(reader: ReaderMode, kind: GroupKind, count: usize, blf_hz: f64, duration_s: f64) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(reader);
    c.blf_hz = blf_hz;
    c.duration_s = duration_s;
    c.tags = vec![TagGroup {
        kind,
        band: None,
        count,
        distance_m: 2.0,
    }];
    c
}

fn run(cfgs: &[ScenarioConfig]) -> Vec<MetricsReport> {
    harness::run_many(cfgs).unwrap()
}

#[test]
fn criterion_1_parallel_speedup() {
    let quin = scenario(ReaderMode::Quin(5), GroupKind::Quin, 25, 80e3, 2.0);
    let tdma = scenario(ReaderMode::Tdma, GroupKind::Conv, 25, 80e3, 2.0);
    let r = run(&[quin, tdma]);
    let ratio = r[0].read_rate_per_s / r[1].read_rate_per_s;
    let pass = (4.5..=5.2).contains(&ratio);
    assert!(verdict(
        1,
        pass,
        &format!(
            "read-rate ratio {ratio:.2} (quin {:.1}/s, tdma {:.1}/s), target [4.5, 5.2]",
            r[0].read_rate_per_s, r[1].read_rate_per_s
        )
    ));
}

#[test]
fn criterion_2_peak_read_rate() {
    let mut c = scenario(ReaderMode::Quin(5), GroupKind::Quin, 25, 640e3, 0.25);
    c.pa = true;
    c.dpd = true;
    let r = harness::run_scenario(&c).unwrap();
    // Slot-timing bound from first principles.
    let timing = PieTiming::for_blf(640e3);
    let t1 = timing.rtcal_s.max(10.0 / 640e3);
    let rep = phy::command_duration_s(&phy::frame_query_rep(), &timing);
    let ack = phy::command_duration_s(&phy::frame_ack(0), &timing);
    let bit = 1.0 / 640e3;
    // Preamble (6) + payload + dummy 1.
    let rn16 = (6.0 + 16.0 + 1.0) * bit;
    let epc = (6.0 + 128.0 + 1.0) * bit;
    let bound = 5.0 / (rep + t1 + rn16 + ack + t1 + epc);
    assert!((bound - harness::protocol_read_rate_bound(&c)).abs() / bound < 1e-9);
    let rate = r.read_rate_per_s;
    let pass = rate >= 4000.0 && rate <= bound;
    assert!(verdict(
        2,
        pass,
        &format!("read rate {rate:.0}/s at 640 kbps with DPD, need >= 4000 and <= bound {bound:.0}")
    ));
}

/// Largest distance on a geometric grid at which the tag decodes a Query.
fn decodable_range_m(narrowband: bool) -> f64 {
    let timing = PieTiming::for_blf(80e3);
    let fs = 6.4e6;
    let plan = band::default_plan();
    let center = plan.bands[2].center_hz;
    let query = phy::frame_query(0, SessionFlags::default()).unwrap();
    let env = phy::encode_command(&query, &timing, fs);
    let n = env.samples.len() + (200e-6 * fs) as usize;
    let unit = reader::band_baseband(
        &[ScheduledCommand {
            start_s: 50e-6,
            envelope: env,
        }],
        1.0,
        0.9,
        0.0,
        n,
        fs,
    );
    let mut t = if narrowband {
        TagInstance::new(vec![0; 96], TagKind::Quin(2), Some(SawFilterSpec::for_center(center, 1.6e6)), 1.0, 3)
    } else {
        TagInstance::new(vec![0; 96], TagKind::Conventional, None, 1.0, 3)
    };
    // Sensitivity only: the power-up gate would bind first for both.
    t.front_end.power_up_threshold_w = 0.0;
    let p_band = impairments::dbm_to_w(36.0) / 5.0;
    // Emulated insertion loss for the wideband tag.
    let deafen = if narrowband { 1.0 } else { 0.5 };
    let mut best = 0.0;
    let mut d = 1.0;
    while d < 1e6 {
        let g = p_band * deafen * 10f64.powf(-impairments::path_loss_db(d, center) / 10.0);
        let rf = IqStream::new(unit.iter().map(|v| v * g.sqrt()).collect(), fs, center, 0.0).unwrap();
        if let PieDecoded::Command { bits, .. } = tag::tag_receive_downlink(&t, &rf, &timing).decoded {
            if bits == query.bits() {
                best = d;
            }
        }
        d *= 1.01;
    }
    best
}

#[test]
fn criterion_3_noise_bandwidth_compensation() {
    let p_narrow = tag::min_detectable_power(&ChipFrontEnd::quin());
    let p_wide = tag::min_detectable_power(&ChipFrontEnd::conventional());
    // Direct evaluation of the detector bound.
    let direct = |bn: f64| {
        let (s, bs, k) = (tag::DEFAULT_S_MIN, tag::DEFAULT_B_SIGNAL_HZ, impairments::THERMAL_PSD_W_PER_HZ);
        4.0 * s * bs * k + 2.0 * k * (4.0 * bs * bs * s * s + bn * bs * s).sqrt()
    };
    assert!((p_narrow / direct(2e6) - 1.0).abs() < 1e-12);
    assert!((p_wide / direct(100e6) - 1.0).abs() < 1e-12);
    let gain_db = 10.0 * (p_wide / p_narrow).log10();
    let ok_db = (1.5..=3.0).contains(&gain_db);

    let narrow = decodable_range_m(true);
    let wide = decodable_range_m(false);
    // Free-space ranges scale with the square root of the power margin.
    let il_db = -tag::saw_gain_db(&SawFilterSpec::for_center(915e6, 1.6e6), 915e6);
    let predicted = 10f64.powf((gain_db + 3.0 - il_db) / 20.0);
    let ok_range = narrow > wide && wide > 0.0;
    let pass = ok_db && ok_range;
    assert!(verdict(
        3,
        pass,
        &format!(
            "P_m gain {gain_db:.2} dB (target [1.5, 3.0]); downlink range narrowband {narrow:.0} m vs 3 dB-deafened wideband {wide:.0} m (ratio {:.3}, predicted {predicted:.3})",
            narrow / wide
        )
    ));
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - (icpt + slope * a)).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

#[test]
fn criterion_4_dpd_ablation() {
    let ks = [2usize, 3, 4, 5];
    let mut cfgs = Vec::new();
    for &k in &ks {
        let base = scenario(ReaderMode::Quin(k), GroupKind::Quin, 5 * k, 640e3, 0.1);
        let mut off = base.clone();
        off.pa = true;
        let mut on = off.clone();
        on.dpd = true;
        cfgs.extend([base, off, on]);
    }
    let r = run(&cfgs);
    let mut pass = true;
    let mut lines = Vec::new();
    let mut on_rates = Vec::new();
    for (i, k) in ks.iter().enumerate() {
        let (lin, off, on) = (&r[3 * i], &r[3 * i + 1], &r[3 * i + 2]);
        let crc_ok = off.crc_error_rate > 0.0 && off.crc_error_rate > 5.0 * on.crc_error_rate;
        let rel = (on.read_rate_per_s - lin.read_rate_per_s).abs() / lin.read_rate_per_s;
        pass &= crc_ok && rel <= 0.05;
        on_rates.push(on.read_rate_per_s);
        lines.push(format!(
            "k={k}: crc off {:.4} on {:.4}, read on {:.0} linear {:.0} ({:+.1}%)",
            off.crc_error_rate,
            on.crc_error_rate,
            on.read_rate_per_s,
            lin.read_rate_per_s,
            100.0 * (on.read_rate_per_s / lin.read_rate_per_s - 1.0)
        ));
    }
    let kf: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let r2 = r_squared(&kf, &on_rates);
    pass &= r2 >= 0.98;
    assert!(verdict(4, pass, &format!("{}; R^2 over k {r2:.4}", lines.join("; "))));
}

#[test]
fn criterion_5_conventional_tag_robustness() {
    let quin_only = scenario(ReaderMode::Quin(5), GroupKind::Quin, 5, 80e3, 0.35);
    let mut mixed = quin_only.clone();
    mixed.tags.push(TagGroup {
        kind: GroupKind::Conv,
        band: None,
        count: 4,
        distance_m: 2.0,
    });
    let mut clean = quin_only.clone();
    clean.fidelity = Fidelity::Composite;
    mixed.fidelity = Fidelity::Composite;
    // Aligned downlinks force conventional replies so suppression is exercised.
    let mut forced = scenario(ReaderMode::Quin(5), GroupKind::Conv, 1, 640e3, 0.02);
    forced.synchronized_downlink = true;
    forced.fidelity = Fidelity::Composite;
    let r = run(&[clean, mixed, forced]);
    let (a, b, f) = (&r[0], &r[1], &r[2]);
    let rounds = b.per_band.iter().map(|x| x.queries).min().unwrap();
    let drop = 1.0 - b.read_rate_per_s / a.read_rate_per_s;
    let safe = |m: &MetricsReport| {
        m.unsuppressed_excitations == 0 && m.acks_to_conventional == 0 && m.acks_to_duplicates == 0 && m.conventional_misreads == 0
    };
    let pass = rounds >= 100 && drop <= 0.03 && safe(b) && f.conventional_excitations > 0 && safe(f);
    assert!(verdict(
        5,
        pass,
        &format!(
            "{rounds} rounds/band, read-rate drop {:.2}% with 4 conventional tags ({} excitations, {} acks to them); forced aligned downlink: {} excitations, {} unsuppressed, {} acks to conventional",
            100.0 * drop,
            b.conventional_excitations,
            b.acks_to_conventional,
            f.conventional_excitations,
            f.unsuppressed_excitations,
            f.acks_to_conventional
        )
    ));
}

/// Ends of the RN16 replies that follow each Query/QueryRep in a band,
/// from the command log and the replying tags' drifted link rates.
fn rn16_ends(cmds: &[(f64, phy::Frame)], blf: f64, drifts: &[f64]) -> Vec<f64> {
    let timing = PieTiming::for_blf(blf);
    let t1 = timing.rtcal_s.max(10.0 / blf);
    cmds.iter()
        .filter(|(_, f)| matches!(f.kind, FrameKind::Query | FrameKind::QueryRep))
        .map(|(t, f)| {
            let slowest = drifts.iter().cloned().fold(f64::INFINITY, f64::min);
            t + phy::command_duration_s(f, &timing) + t1 + (6.0 + 16.0 + 1.0) / (blf * (1.0 + slowest))
        })
        .collect()
}

#[test]
fn criterion_6_latency_budget() {
    let mut lines = Vec::new();
    let mut overhead = Vec::new();
    let mut pass = true;
    let chan = Channelizer::new(&band::default_plan()).unwrap();
    for blf in phy::BLFS_HZ {
        let c = scenario(ReaderMode::Quin(5), GroupKind::Quin, 5, blf, 0.01);
        let tags = instantiate(&expand_population(&c).unwrap(), &c.band_plan().unwrap());
        let out = simulate(&c, tags).unwrap();
        let mut worst = 0.0f64;
        let mut n = 0;
        for b in 0..5 {
            let drifts: Vec<f64> = out.tags.iter().filter(|t| t.kind == TagKind::Quin(b)).map(|t| t.clock_drift_frac).collect();
            let ends = rn16_ends(&out.commands[b], blf, &drifts);
            for e in out.events.iter().filter(|e| e.band_index == b && e.kind == EventKind::Rn16) {
                let end = ends.iter().cloned().filter(|x| *x <= e.time_s).fold(f64::NEG_INFINITY, f64::max);
                worst = worst.max(e.time_s - end);
                n += 1;
            }
        }
        let budget = 20.0 / blf;
        let analytic = reader::decision_latency_s(&UplinkConfig::new(blf).unwrap(), chan.pipeline_delay_s());
        pass &= n > 0 && worst <= budget && analytic <= budget;
        overhead.push((blf, worst));
        lines.push(format!("{:.0}k: worst {:.1} us / {:.1} us over {n} RN16s", blf / 1e3, worst * 1e6, budget * 1e6));
    }

    // Baseline: with Q = 0 every tag answers every Query until one is read.
    // An Ack cannot start before the reader's decision.
    let mut rows = Vec::new();
    for blf in [80e3, 160e3, 320e3, 640e3] {
        for n in 2..=5usize {
            let mut c = scenario(ReaderMode::Fliptracer, GroupKind::Conv, n, blf, 0.02);
            c.q = Some(0);
            let tags = instantiate(&expand_population(&c).unwrap(), &c.band_plan().unwrap());
            let out = simulate(&c, tags).unwrap();
            let drifts: Vec<f64> = out.tags.iter().map(|t| t.clock_drift_frac).collect();
            let ends = rn16_ends(&out.commands[0], blf, &drifts);
            let deadline = baseline::ack_deadline_s(blf);
            // Rounds up to the first read are n-tag collisions.
            let first_read = out.events.iter().find(|e| e.kind == EventKind::Epc).map_or(f64::INFINITY, |e| e.time_s);
            let mut lateness = Vec::new();
            for end in ends.iter().filter(|e| **e < first_read) {
                if let Some(d) = out.events.iter().find(|e| e.time_s >= *end) {
                    lateness.push(d.time_s - end);
                }
            }
            // Same pipeline as above, plus the collision decoder's latency.
            let base = overhead.iter().find(|(b, _)| *b == blf).unwrap().1;
            let with_decode = base + baseline::decode_latency_model(n).unwrap();
            let late = lateness.iter().filter(|l| **l > deadline).count();
            let misses = with_decode > deadline;
            if blf >= 160e3 && n >= 3 {
                pass &= !lateness.is_empty() && misses;
            }
            rows.push(format!(
                "{:.0}k n={n}: {:.1} us vs {:.1} us {} ({late}/{} rounds late)",
                blf / 1e3,
                with_decode * 1e6,
                deadline * 1e6,
                if misses { "miss" } else { "meet" },
                lateness.len()
            ));
        }
    }
    assert!(verdict(6, pass, &format!("decision {}; baseline collision decode {}", lines.join(", "), rows.join(", "))));
}

#[test]
fn criterion_7_cfo_tolerance() {
    let step = 150e3;
    let offsets: Vec<f64> = (0..=12).map(|i| i as f64 * step).collect();
    let mut cfgs = Vec::new();
    for blf in [640e3, 320e3] {
        for &f in &offsets {
            let mut c = scenario(ReaderMode::Quin(5), GroupKind::Quin, 5, blf, 0.04);
            c.cfo_hz = f;
            cfgs.push(c);
        }
    }
    let r = run(&cfgs);
    let mut pass = true;
    let mut lines = Vec::new();
    for (j, (blf, paper)) in [(640e3, 150e3), (320e3, 450e3)].into_iter().enumerate() {
        let rates: Vec<f64> = r[j * offsets.len()..(j + 1) * offsets.len()].iter().map(|m| m.read_rate_per_s).collect();
        let peak = rates.iter().cloned().fold(0.0, f64::max);
        let inside = rates.iter().take_while(|&&x| x >= 0.9 * peak).count();
        let threshold = offsets[inside.max(1) - 1];
        let beyond: Vec<f64> = offsets.iter().zip(&rates).filter(|(f, _)| **f >= 2.0 * threshold).map(|(_, r)| *r).collect();
        let collapsed = !beyond.is_empty() && beyond.iter().all(|&x| x <= 0.2 * peak);
        let within_2x = threshold >= paper / 2.0 && threshold <= paper * 2.0;
        pass &= inside > 0 && collapsed && within_2x;
        let curve: Vec<String> = rates.iter().map(|x| format!("{:.0}", x)).collect();
        lines.push(format!(
            "{:.0}k: threshold {:.0} kHz (paper {:.0} kHz), collapse beyond 2x {collapsed}, rates [{}]",
            blf / 1e3,
            threshold / 1e3,
            paper / 1e3,
            curve.join(" ")
        ));
    }
    assert!(verdict(7, pass, &lines.join("; ")));
}

fn random_bits(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

#[test]
fn criterion_8_property_suites() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut notes = Vec::new();

    // PIE, FM0 and CRC round trips.
    let mut codec = true;
    for blf in phy::BLFS_HZ {
        let t = PieTiming::for_blf(blf);
        for _ in 0..50 {
            let len = rng.random_range(1..48);
            let bits = random_bits(&mut rng, len);
            let mut env = phy::pie_encode(&bits, &t, 6.4e6);
            env.samples.extend(std::iter::repeat_n(1.0, (t.tari_s * 6.4e6) as usize));
            codec &= matches!(phy::pie_decode(&env, &t, phy::PIE_TOLERANCE), PieDecoded::Command { bits: b, .. } if b == bits);
            let levels = phy::fm0_encode(&bits, blf, 6.4e6);
            codec &= phy::fm0_decode(&levels, bits.len(), blf, 6.4e6) == bits;
            let mut m = bits.clone();
            m.extend(phy::crc16(&bits));
            codec &= phy::crc16_check(&m);
        }
    }
    notes.push(format!("codecs {codec}"));

    // Channelizer round trip and isolation.
    let plan = band::default_plan();
    let chan = Channelizer::new(&plan).unwrap();
    let fs_b = plan.per_band_sample_rate_hz;
    let lp = band::design_lowpass(0.5e6, 0.7e6, 70.0, fs_b).unwrap();
    let n = 8192;
    let inputs: Vec<IqStream> = (0..5)
        .map(|i| {
            let white: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            IqStream::new(lp.filter(&white), fs_b, plan.bands[i].center_hz, 0.0).unwrap()
        })
        .collect();
    let comp = chan.duc(&inputs).unwrap();
    let mut worst_evm = 0.0f64;
    for (i, x) in inputs.iter().enumerate() {
        let y = chan.ddc(&comp, i).unwrap();
        let (a, b) = (&x.samples[256..n - 256], &y.samples[256..n - 256]);
        let err: f64 = a.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum();
        let refp: f64 = a.iter().map(|p| p.norm_sqr()).sum();
        worst_evm = worst_evm.max((err / refp).sqrt());
    }
    let fs_c = plan.composite_sample_rate_hz;
    let f = plan.offset_hz(1);
    let tone: Vec<Complex64> = (0..60_000).map(|k| Complex64::from_polar(1.0, std::f64::consts::TAU * f * k as f64 / fs_c)).collect();
    let y = chan.ddc(&IqStream::new(tone, fs_c, plan.center_hz(), 0.0).unwrap(), 2).unwrap();
    let iso_db = -10.0 * band::mean_power(&y.samples[500..y.len() - 500]).log10();
    let chan_ok = worst_evm < 0.01 && iso_db >= 60.0;
    notes.push(format!("EVM {:.3}% isolation {iso_db:.1} dB", 100.0 * worst_evm));

    // GMP fit self-consistency.
    let mut g = GmpModel::zeros(5, 3);
    for v in g.coeffs.iter_mut() {
        *v = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    }
    let x: Vec<Complex64> = (0..3000).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 1.5).collect();
    let yv = impairments::gmp_apply_samples(&g, &x);
    let fit = impairments::fit_gmp(
        &IqStream::new(x, 1e6, 0.0, 0.0).unwrap(),
        &IqStream::new(yv, 1e6, 0.0, 0.0).unwrap(),
        5,
        3,
    )
    .unwrap();
    let fit_err = fit.model.coeffs.iter().zip(&g.coeffs).map(|(a, b)| (a - b).norm() / b.norm().max(1.0)).fold(0.0, f64::max);
    notes.push(format!("GMP fit error {fit_err:.1e}"));

    // Timing recovery at +/-5% drift.
    let cfg = UplinkConfig::new(640e3).unwrap();
    let mut locked = 0;
    let trials = 40;
    for s in 0..trials {
        let bits = random_bits(&mut rng, 16);
        let drift = if s % 2 == 0 { 0.05 } else { -0.05 };
        let levels = phy::fm0_encode(&bits, 640e3 * (1.0 + drift), 6.4e6);
        let gain = Complex64::from_polar(1e-3, s as f64);
        let mut v = vec![Complex64::new(0.0, 0.0); 400];
        v.extend(levels.iter().map(|l| gain * (0.5 * (1.0 + l))));
        v.extend(vec![Complex64::new(0.0, 0.0); 60]);
        let stream = impairments::awgn(&IqStream::new(v, 6.4e6, 0.0, 0.0).unwrap(), 1e-9 / 6.4e6, s);
        let r = reader::demod_packet(&stream, &cfg, Expected::Rn16);
        if r.bits == Some(bits) {
            locked += 1;
        }
    }
    notes.push(format!("timing lock {locked}/{trials}"));

    // Session safety over every trace of length <= 5.
    let mut dup = ReadEvent::timeout(0.0, 0);
    dup.kind = EventKind::Rn16;
    dup.rn16 = Some(0x1234);
    dup.duplicate = true;
    let mut fresh = dup.clone();
    fresh.duplicate = false;
    fresh.rn16 = Some(0x4321);
    let mut epc = ReadEvent::timeout(0.0, 0);
    epc.kind = EventKind::Epc;
    epc.epc = Some(vec![0; 96]);
    let alphabet = [
        SessionInput::SlotBoundary,
        SessionInput::Event(fresh),
        SessionInput::Event(dup),
        SessionInput::Event(epc),
        SessionInput::Event(ReadEvent::timeout(0.0, 0)),
    ];
    let mut fsm_ok = true;
    let mut traces = 0;
    for len in 1..=5u32 {
        for code in 0..alphabet.len().pow(len) {
            let mut s = SessionState::new(0, 2, 0.0);
            let mut c = code;
            for _ in 0..len {
                let input = &alphabet[c % alphabet.len()];
                c /= alphabet.len();
                let (next, cmd) = reader::session_step(&s, input);
                let Some(cmd) = cmd else {
                    fsm_ok = false;
                    break;
                };
                if let SessionInput::Event(e) = input {
                    if e.duplicate && cmd.kind == FrameKind::Ack {
                        fsm_ok = false;
                    }
                }
                fsm_ok &= next.slots_remaining < 1 << next.q_value;
                s = next;
            }
            traces += 1;
        }
    }
    notes.push(format!("{traces} session traces"));

    // Seed determinism.
    let c = scenario(ReaderMode::Quin(3), GroupKind::Quin, 6, 160e3, 0.02);
    let det = harness::run_scenario(&c).unwrap().to_csv() == harness::run_scenario(&c).unwrap().to_csv();
    notes.push(format!("determinism {det}"));

    let pass = codec && chan_ok && fit_err <= 1e-6 && locked == trials && fsm_ok && det;
    assert!(verdict(8, pass, &notes.join(", ")));
}
