//! Scenarios, the simulation loop and metrics.

mod config;
mod engine;
mod report;

use std::collections::HashSet;

pub use config::{
    expand_population, format_population, instantiate, parse_population, BandPlanConfig, Fidelity, GroupKind,
    ReaderMode, ScenarioConfig, TagGroup, TagSpec, MAX_EIRP_DBM,
};
pub use engine::{build_transmitter, fitted_predistorter, render_downlink, simulate, Excitation, RunOutput};
pub use report::{emit_report, parse_csv, BandMetrics, MetricsReport, ReportFormat};

use crate::band::IqStream;
use crate::error::{Error, Result};
use crate::phy::{self, FrameKind, PieTiming};
use crate::reader::EventKind;
use crate::tag::TagKind;

/// Run one scenario and summarize it.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let specs = expand_population(cfg)?;
    let plan = cfg.band_plan()?;
    let tags = instantiate(&specs, &plan);
    let out = simulate(cfg, tags)?;
    Ok(summarize(cfg, &out))
}

fn summarize(cfg: &ScenarioConfig, out: &RunOutput) -> MetricsReport {
    let d = cfg.duration_s;
    let k = cfg.n_bands();
    let mut per_band = vec![BandMetrics::default(); k];
    let conv_epcs: HashSet<&[u8]> = out
        .tags
        .iter()
        .filter(|t| t.kind == TagKind::Conventional)
        .map(|t| t.epc_96.as_slice())
        .collect();
    let mut misreads = 0;
    let mut unique = HashSet::new();
    for e in &out.events {
        let b = &mut per_band[e.band_index];
        match e.kind {
            EventKind::Rn16 => b.rn16 += 1,
            EventKind::Epc => {
                b.epc += 1;
                let epc = e.epc.as_deref().unwrap_or(&[]);
                unique.insert(epc.to_vec());
                if !cfg.reader.is_baseline() && conv_epcs.contains(epc) {
                    misreads += 1;
                }
            }
            EventKind::CrcError => b.crc_errors += 1,
            EventKind::Timeout => b.timeouts += 1,
        }
        if e.duplicate {
            b.duplicates += 1;
        }
    }
    for (b, s) in per_band.iter_mut().zip(&out.sessions) {
        b.acks = s.stats.acks;
        b.queries = s.stats.queries;
        b.read_rate_per_s = b.epc as f64 / d;
    }
    let epc: u64 = per_band.iter().map(|b| b.epc).sum();
    let crc: u64 = per_band.iter().map(|b| b.crc_errors).sum();
    let rn16: u64 = per_band.iter().map(|b| b.rn16).sum();
    let received_epc = epc + crc;
    let ratio = if received_epc == 0 { 0.0 } else { epc as f64 / received_epc as f64 };

    // A conventional reply counts as suppressed when some band flagged that
    // RN16 as duplicate.
    let unsuppressed = out
        .excitations
        .iter()
        .filter(|x| {
            !out.events.iter().any(|e| {
                e.kind == EventKind::Rn16 && e.duplicate && e.rn16 == Some(x.rn16) && e.time_s >= x.time_s
            })
        })
        .count() as u64;

    let window = phy::fm0_packet_duration_s(16, cfg.blf_hz) + 100.0 / cfg.blf_hz;
    let acks_to_conventional = out
        .commands
        .iter()
        .flatten()
        .filter(|(t, f)| {
            f.kind == FrameKind::Ack
                && out
                    .excitations
                    .iter()
                    .any(|x| f.rn16() == Some(x.rn16) && *t >= x.time_s && *t <= x.time_s + window)
        })
        .count() as u64;

    MetricsReport {
        throughput_pkts_per_s: (rn16 + received_epc) as f64 / d,
        read_rate_per_s: epc as f64 / d,
        err: ratio,
        crc_error_rate: if received_epc == 0 { 0.0 } else { crc as f64 / received_epc as f64 },
        per_band,
        conventional_misreads: misreads,
        conventional_excitations: out.excitations.len() as u64,
        acks_to_duplicates: out.acks_to_duplicates,
        unsuppressed_excitations: unsuppressed,
        acks_to_conventional,
        unique_epcs: unique.len() as u64,
        simulated_s: d,
        config: cfg.clone(),
        events: out.events.clone(),
    }
}

/// Downlink baseband of one band over the first `duration_s` of a run.
pub fn dump_iq(cfg: &ScenarioConfig, band: usize, duration_s: f64) -> Result<IqStream> {
    let mut c = cfg.clone();
    c.duration_s = duration_s.min(cfg.duration_s);
    c.validate()?;
    let plan = c.band_plan()?;
    plan.band(band)?;
    let tags = instantiate(&expand_population(&c)?, &plan);
    let out = simulate(&c, tags)?;
    render_downlink(&c, &out.commands[band], band, c.duration_s)
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Distance,
    TagCount,
    Blf,
    Cfo,
    NBands,
    Dpd,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "distance" => SweepParam::Distance,
            "tag_count" => SweepParam::TagCount,
            "blf" => SweepParam::Blf,
            "cfo" => SweepParam::Cfo,
            "n_bands" => SweepParam::NBands,
            "dpd" => SweepParam::Dpd,
            _ => {
                return Err(Error::Config(format!(
                    "unknown sweep parameter '{s}' (distance, tag_count, blf, cfo, n_bands, dpd)"
                )))
            }
        })
    }
}

/// Configuration for one sweep point. The master seed is unchanged so
/// points are paired.
pub fn sweep_point(base: &ScenarioConfig, param: SweepParam, value: f64) -> Result<ScenarioConfig> {
    let mut c = base.clone();
    match param {
        SweepParam::Distance => {
            for g in &mut c.tags {
                g.distance_m = value;
            }
        }
        SweepParam::TagCount => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!("tag_count {value} is not a count")));
            }
            let first = base.tags.first().cloned().unwrap_or(TagGroup {
                kind: if base.reader.is_baseline() { GroupKind::Conv } else { GroupKind::Quin },
                band: None,
                count: 0,
                distance_m: 2.0,
            });
            c.tags = vec![TagGroup {
                band: None,
                count: value as usize,
                ..first
            }];
        }
        SweepParam::Blf => c.blf_hz = value,
        SweepParam::Cfo => c.cfo_hz = value,
        SweepParam::NBands => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!("n_bands {value} is not a band count")));
            }
            c.reader = ReaderMode::Quin(value as usize);
            for g in &mut c.tags {
                g.band = None;
            }
        }
        SweepParam::Dpd => {
            c.dpd = value != 0.0;
            if c.dpd {
                c.pa = true;
            }
        }
    }
    c.validate()?;
    Ok(c)
}

/// One run per value; points run in parallel, results in value order.
pub fn sweep(base: &ScenarioConfig, param: SweepParam, values: &[f64]) -> Result<Vec<MetricsReport>> {
    let cfgs = values
        .iter()
        .map(|&v| sweep_point(base, param, v))
        .collect::<Result<Vec<_>>>()?;
    run_many(&cfgs)
}

/// Run independent scenarios on worker threads; output order follows input.
pub fn run_many(cfgs: &[ScenarioConfig]) -> Result<Vec<MetricsReport>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cfgs.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<MetricsReport>>> = (0..cfgs.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= cfgs.len() {
                    break;
                }
                let r = run_scenario(&cfgs[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every point ran")).collect()
}

/// Upper bound on read rate from slot timing: each read needs at least a
/// QueryRep, an RN16, an Ack and an EPC with the turnaround gaps.
pub fn protocol_read_rate_bound(cfg: &ScenarioConfig) -> f64 {
    let timing = PieTiming::for_blf(cfg.blf_hz);
    let t1 = timing.rtcal_s.max(10.0 / cfg.blf_hz);
    let rep = phy::command_duration_s(&phy::frame_query_rep(), &timing);
    let ack = phy::command_duration_s(&phy::frame_ack(0), &timing);
    let rn16 = phy::fm0_packet_duration_s(16, cfg.blf_hz);
    let epc = phy::fm0_packet_duration_s(16 + phy::EPC_BITS + 16, cfg.blf_hz);
    cfg.n_bands() as f64 / (rep + t1 + rn16 + ack + t1 + epc)
}
