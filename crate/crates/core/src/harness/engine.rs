//! Event-driven simulation of one scenario.
//!
//! Sessions run on a shared simulated-time queue. Waveforms are rendered on
//! demand for the interval an event needs and never beyond the event time,
//! so every decision uses only signal that has already arrived.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::rc::Rc;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::band::{self, BandPlan, Channelizer, FirFilter, IqStream};
use crate::baseline;
use crate::error::Result;
use crate::impairments::{self, GmpModel, Transmitter};
use crate::phy::{self, Envelope, Frame, FrameKind, PieDecoded, PieTiming};
use crate::reader::{self, EventKind, Expected, ReadEvent, ScheduledCommand, SessionInput, SessionState};
use crate::seed::{self, StreamKind};
use crate::tag::{self, FrontEndEnvelope, TagInstance, TagKind, TagState, UplinkConfig};

use super::config::{Fidelity, ReaderMode, ScenarioConfig};

/// How long waveform history is kept behind the current time.
const HISTORY_S: f64 = 20e-3;
/// Composite samples per cached transmit block.
const TX_BLOCK: usize = 6144;
/// Bandwidth-scale padding around FFT-filtered windows.
const FILTER_PAD_S: f64 = 25e-6;
/// Order and memory of the fitted pre-distorter.
const DPD_ORDER: usize = 5;
const DPD_MEMORY: usize = 3;

// ---------------------------------------------------------------------------
// Event queue
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ev {
    /// A command has fully arrived at the tags.
    CommandHeard { band: usize, id: u64 },
    /// Reader evaluates its receive window.
    Eval { band: usize, epoch: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Queued {
    t: f64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Queued {
    fn cmp(&self, o: &Self) -> Ordering {
        // Min-heap on (time, seq).
        o.t.total_cmp(&self.t).then(o.seq.cmp(&self.seq))
    }
}

// ---------------------------------------------------------------------------
// Medium: transmit schedule, uplinks, rendering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Cmd {
    id: u64,
    frame: Frame,
    sched: ScheduledCommand,
    end_s: f64,
}

#[derive(Debug, Clone)]
struct Uplink {
    tag: usize,
    start_s: f64,
    end_s: f64,
    halves: Vec<f64>,
    half_s: f64,
}

impl Uplink {
    fn reflection(&self, t: f64) -> f64 {
        if t < self.start_s || t >= self.end_s {
            return 0.0;
        }
        let k = ((t - self.start_s) / self.half_s) as usize;
        (1.0 + self.halves[k.min(self.halves.len() - 1)]) / 2.0
    }
}

struct TxBlock {
    actual: Vec<Complex64>,
    residual: Vec<Complex64>,
}

/// Shared physical state of the run.
struct Medium {
    plan: BandPlan,
    chan: Channelizer,
    band_fir: FirFilter,
    fs_b: f64,
    fs_c: f64,
    r: usize,
    amp: f64,
    depth: f64,
    cfo_hz: f64,
    fidelity: Fidelity,
    tx: Option<Transmitter>,
    ref_gain: Complex64,
    iso_amp: f64,
    noise_psd: f64,
    master_seed: u64,
    commands: Vec<VecDeque<Cmd>>,
    uplinks: VecDeque<Uplink>,
    cache: HashMap<i64, Rc<TxBlock>>,
    pad_b: usize,
}

impl Medium {
    fn band_tx(&self, b: usize, i0: i64, n: usize) -> Vec<Complex64> {
        let t0 = i0 as f64 / self.fs_b;
        let t1 = t0 + n as f64 / self.fs_b;
        let cmds: Vec<ScheduledCommand> = self.commands[b]
            .iter()
            .filter(|c| c.sched.start_s < t1 && c.end_s > t0)
            .map(|c| c.sched.clone())
            .collect();
        let mut v = reader::band_baseband(&cmds, self.amp, self.depth, t0, n, self.fs_b);
        if self.cfo_hz != 0.0 {
            band::mix(&mut v, self.cfo_hz, self.fs_b, t0);
        }
        v
    }

    fn nonlinear(&self) -> bool {
        self.tx.as_ref().is_some_and(|t| t.pa.is_some())
    }

    fn render_block(&self, blk: i64) -> TxBlock {
        let j0 = blk * TX_BLOCK as i64;
        let r = self.r as i64;
        let hist = self.tx.as_ref().map_or(0, |t| t.history()) as i64;
        let pad = self.pad_b as i64;
        let ib0 = j0 / r - pad;
        let nb = (TX_BLOCK / self.r) + 2 * self.pad_b;
        let t0 = ib0 as f64 / self.fs_b;
        let basebands: Vec<IqStream> = (0..self.plan.bands.len())
            .map(|b| IqStream {
                samples: self.band_tx(b, ib0, nb),
                sample_rate_hz: self.fs_b,
                center_frequency_hz: self.plan.bands[b].center_hz,
                start_time_s: t0,
            })
            .collect();
        let comp = self.chan.duc(&basebands).expect("consistent basebands");
        let off = (j0 - ib0 * r) as usize;
        let drive = &comp.samples[off - hist as usize..off + TX_BLOCK];
        let actual = match &self.tx {
            Some(tx) => tx.amplify(drive),
            None => drive.to_vec(),
        };
        let residual = if self.nonlinear() {
            actual
                .iter()
                .zip(&drive[hist as usize..])
                .map(|(a, d)| a - d * self.ref_gain)
                .collect()
        } else {
            Vec::new()
        };
        TxBlock { actual, residual }
    }

    /// Composite transmit signal and (when nonlinear) the residual after
    /// ideal carrier cancellation over composite samples `[j0, j0 + n)`.
    /// Blocks entirely before `now` are cached.
    fn composite_tx(&mut self, j0: i64, n: usize, now: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut actual = Vec::with_capacity(n);
        let mut residual = Vec::with_capacity(if self.nonlinear() { n } else { 0 });
        let b0 = j0.div_euclid(TX_BLOCK as i64);
        let b1 = (j0 + n as i64 - 1).div_euclid(TX_BLOCK as i64);
        let settle = self.pad_b as f64 / self.fs_b;
        for blk in b0..=b1 {
            let blk_end_s = ((blk + 1) * TX_BLOCK as i64) as f64 / self.fs_c;
            let data = if let Some(d) = self.cache.get(&blk) {
                d.clone()
            } else {
                let d = Rc::new(self.render_block(blk));
                if blk_end_s + settle < now {
                    self.cache.insert(blk, d.clone());
                }
                d
            };
            let bs = blk * TX_BLOCK as i64;
            let a = (j0.max(bs) - bs) as usize;
            let e = ((j0 + n as i64).min(bs + TX_BLOCK as i64) - bs) as usize;
            actual.extend_from_slice(&data.actual[a..e]);
            if !data.residual.is_empty() {
                residual.extend_from_slice(&data.residual[a..e]);
            }
        }
        (actual, residual)
    }

    fn prune(&mut self, now: f64) {
        let horizon = now - HISTORY_S;
        for q in &mut self.commands {
            while q.front().is_some_and(|c| c.end_s < horizon) {
                q.pop_front();
            }
        }
        while self.uplinks.front().is_some_and(|u| u.end_s < horizon) {
            self.uplinks.pop_front();
        }
        let fs_c = self.fs_c;
        self.cache
            .retain(|&blk, _| ((blk + 1) * TX_BLOCK as i64) as f64 / fs_c >= horizon);
    }

    fn composite_stream(&self, j0: i64, samples: Vec<Complex64>) -> IqStream {
        IqStream {
            samples,
            sample_rate_hz: self.fs_c,
            center_frequency_hz: self.plan.center_hz(),
            start_time_s: j0 as f64 / self.fs_c,
        }
    }

    /// Tag-side front-end envelope at unit path gain over per-band samples
    /// `[i0, i0 + n)`. `saw_band` selects the SAW of a Quin tag; `None`
    /// is a wideband tag.
    fn front_end(&mut self, saw_band: Option<usize>, i0: i64, n: usize, now: f64) -> FrontEndEnvelope {
        let bs = tag::DEFAULT_B_SIGNAL_HZ;
        match (self.fidelity, saw_band) {
            (Fidelity::Composite, _) => {
                let j0 = i0 * self.r as i64;
                let (actual, _) = self.composite_tx(j0, n * self.r, now);
                let x = self.composite_stream(j0, actual);
                let saw = saw_band.map(|b| self.saw(b));
                tag::front_end_envelope(saw.as_ref(), bs, &x)
            }
            (Fidelity::FastPerBand, Some(b)) => {
                let x = IqStream {
                    samples: self.band_tx(b, i0, n),
                    sample_rate_hz: self.fs_b,
                    center_frequency_hz: self.plan.bands[b].center_hz,
                    start_time_s: i0 as f64 / self.fs_b,
                };
                tag::front_end_envelope(Some(&self.saw(b)), bs, &x)
            }
            (Fidelity::FastPerBand, None) => {
                // Beat terms between bands average out in the detector.
                let mut det = vec![0.0; n];
                for b in 0..self.plan.bands.len() {
                    for (d, s) in det.iter_mut().zip(self.band_tx(b, i0, n)) {
                        *d += s.norm_sqr();
                    }
                }
                let mean = det.iter().sum::<f64>() / n.max(1) as f64;
                let w = ((self.fs_b / bs).round() as usize).max(1);
                FrontEndEnvelope {
                    power: Envelope {
                        samples: tag::moving_average(&det, w),
                        sample_rate_hz: self.fs_b,
                    },
                    mean_power_w: mean,
                }
            }
        }
    }

    fn saw(&self, b: usize) -> tag::SawFilterSpec {
        tag::SawFilterSpec::for_center(self.plan.bands[b].center_hz, self.plan.bands[b].passband_hz)
    }

    /// Reader receive signal of band `b` over per-band samples `[i0, i0+n)`,
    /// after channel filtering and carrier-offset removal.
    fn rx_band(&mut self, b: usize, i0: i64, n: usize, now: f64, tags: &[TagRt]) -> IqStream {
        let t0 = i0 as f64 / self.fs_b;
        let t1 = t0 + n as f64 / self.fs_b;
        let reaching: Vec<Uplink> = self
            .uplinks
            .iter()
            .filter(|u| u.start_s < t1 && u.end_s > t0)
            .filter(|u| match tags[u.tag].inst.kind {
                TagKind::Quin(c) => c == b,
                TagKind::Conventional => true,
            })
            .cloned()
            .collect();
        let mut rng = seed::rng_for(
            self.master_seed,
            StreamKind::Noise,
            ((b as u64) << 48) ^ (i0 as u64 & 0xFFFF_FFFF_FFFF),
        );
        let mut out = match self.fidelity {
            Fidelity::FastPerBand => {
                let pad = (FILTER_PAD_S * self.fs_b).ceil() as usize;
                let (pi0, pn) = (i0 - pad as i64, n + 2 * pad);
                let mut acc = vec![Complex64::new(0.0, 0.0); pn];
                if !reaching.is_empty() {
                    let carrier = self.band_tx(b, pi0, pn);
                    let start = pi0 as f64 / self.fs_b;
                    for u in &reaching {
                        let rt = &tags[u.tag];
                        let g2 = rt.phase * (rt.gain * rt.gain);
                        let modulated: Vec<Complex64> = match rt.inst.kind {
                            TagKind::Quin(_) => {
                                let spec = self.saw(b);
                                let x = IqStream {
                                    samples: carrier.clone(),
                                    sample_rate_hz: self.fs_b,
                                    center_frequency_hz: self.plan.bands[b].center_hz,
                                    start_time_s: start,
                                };
                                let inc = tag::saw_filter(&spec, &x);
                                let refl = inc.with_samples(
                                    inc.samples
                                        .iter()
                                        .enumerate()
                                        .map(|(i, s)| s * u.reflection(start + i as f64 / self.fs_b))
                                        .collect(),
                                );
                                tag::saw_filter(&spec, &refl).samples
                            }
                            TagKind::Conventional => carrier
                                .iter()
                                .enumerate()
                                .map(|(i, s)| s * u.reflection(start + i as f64 / self.fs_b))
                                .collect(),
                        };
                        for (a, m) in acc.iter_mut().zip(modulated) {
                            *a += m * g2;
                        }
                    }
                }
                if self.nonlinear() {
                    let r = self.r as i64;
                    let j0 = pi0 * r;
                    let (_, res) = self.composite_tx(j0, pn * self.r, now);
                    let leak: Vec<Complex64> = res.iter().map(|s| s * self.iso_amp).collect();
                    let d = self
                        .chan
                        .ddc(&self.composite_stream(j0, leak), b)
                        .expect("band in plan");
                    for (a, s) in acc.iter_mut().zip(d.samples) {
                        *a += s;
                    }
                }
                impairments::add_noise(&mut acc, self.noise_psd * self.fs_b, &mut rng);
                let filtered = self.band_fir.filter(&acc);
                IqStream {
                    samples: filtered[pad..pad + n].to_vec(),
                    sample_rate_hz: self.fs_b,
                    center_frequency_hz: self.plan.bands[b].center_hz,
                    start_time_s: t0,
                }
            }
            Fidelity::Composite => {
                let r = self.r;
                let pad_b = (FILTER_PAD_S * self.fs_b).ceil() as usize + self.pad_b;
                let (pi0, pn) = (i0 - pad_b as i64, n + 2 * pad_b);
                let j0 = pi0 * r as i64;
                let nc = pn * r;
                let (actual, residual) = self.composite_tx(j0, nc, now);
                let mut acc: Vec<Complex64> = if residual.is_empty() {
                    vec![Complex64::new(0.0, 0.0); nc]
                } else {
                    residual.iter().map(|s| s * self.iso_amp).collect()
                };
                let start = j0 as f64 / self.fs_c;
                for u in &reaching {
                    let rt = &tags[u.tag];
                    let g2 = rt.phase * (rt.gain * rt.gain);
                    let x = self.composite_stream(j0, actual.clone());
                    let modulated: Vec<Complex64> = match rt.inst.kind {
                        TagKind::Quin(c) => {
                            let spec = self.saw(c);
                            let inc = tag::saw_filter(&spec, &x);
                            let refl = inc.with_samples(
                                inc.samples
                                    .iter()
                                    .enumerate()
                                    .map(|(i, s)| s * u.reflection(start + i as f64 / self.fs_c))
                                    .collect(),
                            );
                            tag::saw_filter(&spec, &refl).samples
                        }
                        TagKind::Conventional => x
                            .samples
                            .iter()
                            .enumerate()
                            .map(|(i, s)| s * u.reflection(start + i as f64 / self.fs_c))
                            .collect(),
                    };
                    for (a, m) in acc.iter_mut().zip(modulated) {
                        *a += m * g2;
                    }
                }
                impairments::add_noise(&mut acc, self.noise_psd * self.fs_c, &mut rng);
                let d = self
                    .chan
                    .ddc(&self.composite_stream(j0, acc), b)
                    .expect("band in plan");
                IqStream {
                    samples: d.samples[pad_b..pad_b + n].to_vec(),
                    sample_rate_hz: self.fs_b,
                    center_frequency_hz: self.plan.bands[b].center_hz,
                    start_time_s: t0,
                }
            }
        };
        if self.cfo_hz != 0.0 {
            band::mix(&mut out.samples, -self.cfo_hz, self.fs_b, t0);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Runtime state
// ---------------------------------------------------------------------------

pub(crate) struct TagRt {
    pub inst: TagInstance,
    /// One-way amplitude gain.
    pub gain: f64,
    /// Round-trip propagation and reflection phase, unit magnitude.
    pub phase: Complex64,
    last_reply_end: f64,
    last_heard_end: f64,
}

#[derive(Debug, Clone, Copy)]
struct Await {
    expected: Expected,
    listen_from: f64,
    timeout_at: f64,
}

struct BandRt {
    session: SessionState,
    rng: ChaCha8Rng,
    awaiting: Option<Await>,
    epoch: u64,
    acks_to_duplicates: u64,
}

/// Conventional-tag reply seen by the engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excitation {
    pub time_s: f64,
    pub rn16: u16,
}

/// Raw outcome of a run.
pub struct RunOutput {
    pub events: Vec<ReadEvent>,
    pub sessions: Vec<SessionState>,
    pub acks_to_duplicates: u64,
    pub excitations: Vec<Excitation>,
    pub tags: Vec<TagInstance>,
    /// Per band, the commands sent (start time and frame).
    pub commands: Vec<Vec<(f64, Frame)>>,
}

pub(crate) struct Engine {
    cfg: ScenarioConfig,
    timing: PieTiming,
    up: UplinkConfig,
    medium: Medium,
    tags: Vec<TagRt>,
    bands: Vec<BandRt>,
    queue: BinaryHeap<Queued>,
    seq: u64,
    next_cmd: u64,
    events: Vec<ReadEvent>,
    excitations: Vec<Excitation>,
    command_log: Vec<Vec<(f64, Frame)>>,
    decision_latency: f64,
}

/// Training drive for the pre-distorter: every active carrier with random
/// on/off keying, normalized to unit mean power at full scale.
fn training_drive(chan: &Channelizer, depth: f64, seed: u64) -> Result<IqStream> {
    let plan = &chan.plan;
    let k = plan.bands.len();
    let n = 4096;
    let mut rng = seed::rng_for(seed, StreamKind::Training, 0);
    let a = (1.0 / k as f64).sqrt();
    let basebands: Vec<IqStream> = (0..k)
        .map(|b| {
            let mut s = Vec::with_capacity(n);
            while s.len() < n {
                let run = rng.random_range(8..80);
                let level = if rng.random::<f64>() < 0.3 { a * (1.0 - depth) } else { a };
                s.extend(std::iter::repeat_n(Complex64::new(level, 0.0), run));
            }
            s.truncate(n);
            IqStream {
                samples: s,
                sample_rate_hz: plan.per_band_sample_rate_hz,
                center_frequency_hz: plan.bands[b].center_hz,
                start_time_s: 0.0,
            }
        })
        .collect();
    chan.duc(&basebands)
}

/// PA, optional pre-distorter and the cascade's linear gain, which has
/// unit magnitude after output calibration.
pub fn build_transmitter(chan: &Channelizer, cfg: &ScenarioConfig) -> Result<(Option<Transmitter>, Complex64)> {
    if !cfg.pa {
        return Ok((None, Complex64::new(1.0, 0.0)));
    }
    let pa = impairments::reference_pa();
    let full = impairments::dbm_to_w(cfg.eirp_dbm);
    let train = training_drive(chan, cfg.modulation_depth, cfg.master_seed)?;
    let dpd = if cfg.dpd {
        Some(impairments::make_predistorter(&pa, &train, DPD_ORDER, DPD_MEMORY)?)
    } else {
        None
    };
    let tx = Transmitter {
        pa: Some(pa),
        dpd,
        full_scale_w: 1.0,
        output_gain: 1.0,
    };
    let h = tx.history();
    let out = tx.amplify(&train.samples);
    let g = impairments::linear_gain(&train.samples[h..], &out);
    // Radiated carrier power matches the drive.
    let cal = 1.0 / g.norm();
    let tx = Transmitter {
        full_scale_w: full,
        output_gain: cal,
        ..tx
    };
    Ok((Some(tx), g * cal))
}

impl Engine {
    pub fn new(cfg: &ScenarioConfig, tags: Vec<TagInstance>) -> Result<Self> {
        cfg.validate()?;
        let plan = cfg.band_plan()?;
        let chan = Channelizer::new(&plan)?;
        let band_fir = chan.band_filter()?;
        let (tx, ref_gain) = build_transmitter(&chan, cfg)?;
        let timing = PieTiming::for_blf(cfg.blf_hz);
        let up = UplinkConfig::new(cfg.blf_hz)?;
        let fs_b = plan.per_band_sample_rate_hz;
        let r = plan.decimation();
        let hb = chan.halfband.as_ref().map_or(0, |h| h.len());
        let hist = tx.as_ref().map_or(0, |t| t.history());
        let pad_b = (chan.channel.len() / chan.channel_factor + hb / r) / 2 + hist / r + 8;
        let k = plan.bands.len();
        let medium = Medium {
            fs_c: plan.composite_sample_rate_hz,
            fs_b,
            r,
            chan: chan.clone(),
            band_fir,
            amp: cfg.band_power_w().sqrt(),
            depth: cfg.modulation_depth,
            cfo_hz: cfg.cfo_hz,
            fidelity: cfg.fidelity,
            tx,
            ref_gain,
            iso_amp: impairments::db_to_amplitude(-cfg.tx_rx_isolation_db),
            noise_psd: cfg.rx_noise_psd(),
            master_seed: cfg.master_seed,
            commands: vec![VecDeque::new(); k],
            uplinks: VecDeque::new(),
            cache: HashMap::new(),
            pad_b,
            plan: plan.clone(),
        };
        let tags: Vec<TagRt> = tags
            .into_iter()
            .enumerate()
            .map(|(i, inst)| {
                let f = match inst.kind {
                    TagKind::Quin(b) => plan.bands[b].center_hz,
                    TagKind::Conventional => plan.center_hz(),
                };
                let gain = impairments::db_to_amplitude(-impairments::path_loss_db(inst.distance_m, f));
                let mut rng = seed::rng_for(cfg.master_seed, StreamKind::Channel, i as u64);
                let reflect = rng.random::<f64>() * std::f64::consts::TAU;
                let travel = -2.0 * std::f64::consts::TAU * inst.distance_m * f / impairments::SPEED_OF_LIGHT;
                TagRt {
                    inst,
                    gain,
                    phase: Complex64::from_polar(1.0, travel + reflect),
                    last_reply_end: f64::NEG_INFINITY,
                    last_heard_end: f64::NEG_INFINITY,
                }
            })
            .collect();
        let bands = (0..k)
            .map(|b| {
                let expected = match cfg.reader {
                    ReaderMode::Quin(_) => tags
                        .iter()
                        .filter(|t| t.inst.kind == TagKind::Quin(b))
                        .count(),
                    _ => tags.len(),
                };
                let q = cfg.q.unwrap_or_else(|| reader::choose_q(expected));
                let mut rng = seed::rng_for(cfg.master_seed, StreamKind::Session, b as u64);
                let delay = if cfg.synchronized_downlink {
                    0.0
                } else {
                    rng.random::<f64>() * 2.0 * timing.rtcal_s
                };
                BandRt {
                    session: SessionState::new(b, q, delay),
                    rng,
                    awaiting: None,
                    epoch: 0,
                    acks_to_duplicates: 0,
                }
            })
            .collect();
        let decision_latency = chan.pipeline_delay_s() + reader::DEMOD_COMPUTE_S;
        Ok(Self {
            cfg: cfg.clone(),
            timing,
            up,
            medium,
            tags,
            bands,
            queue: BinaryHeap::new(),
            seq: 0,
            next_cmd: 0,
            events: Vec::new(),
            excitations: Vec::new(),
            command_log: vec![Vec::new(); k],
            decision_latency,
        })
    }

    fn push(&mut self, t: f64, ev: Ev) {
        self.seq += 1;
        self.queue.push(Queued { t, seq: self.seq, ev });
    }

    /// Margin after a command's last edge before tags are evaluated.
    fn heard_pad(&self) -> f64 {
        (0.25 * self.timing.tari_s).max(2e-6)
    }

    fn t1(&self) -> f64 {
        self.timing.rtcal_s.max(10.0 / self.cfg.blf_hz)
    }

    fn issue(&mut self, b: usize, frame: Frame, start_s: f64) {
        let fs_b = self.medium.fs_b;
        let env = phy::encode_command(&frame, &self.timing, fs_b);
        let end_s = start_s + env.samples.len() as f64 / fs_b;
        self.next_cmd += 1;
        let id = self.next_cmd;
        self.command_log[b].push((start_s, frame.clone()));
        self.medium.commands[b].push_back(Cmd {
            id,
            frame,
            sched: ScheduledCommand { start_s, envelope: env },
            end_s,
        });
        let pad = self.heard_pad();
        self.push(end_s + pad, Ev::CommandHeard { band: b, id });
    }

    pub fn run(mut self) -> RunOutput {
        for b in 0..self.bands.len() {
            let (s, cmd) = reader::session_step(&self.bands[b].session, &SessionInput::SlotBoundary);
            let start = self.bands[b].session.downlink_delay_s;
            self.bands[b].session = s;
            if let Some(f) = cmd {
                self.issue(b, f, start);
            }
        }
        let mut last_prune = 0.0;
        while let Some(q) = self.queue.pop() {
            if q.t > self.cfg.duration_s {
                break;
            }
            if q.t - last_prune > 2e-3 {
                self.medium.prune(q.t);
                last_prune = q.t;
            }
            match q.ev {
                Ev::CommandHeard { band, id } => self.on_heard(band, id, q.t),
                Ev::Eval { band, epoch } => self.on_eval(band, epoch, q.t),
            }
        }
        RunOutput {
            events: self.events,
            sessions: self.bands.iter().map(|b| b.session.clone()).collect(),
            acks_to_duplicates: self.bands.iter().map(|b| b.acks_to_duplicates).sum(),
            excitations: self.excitations,
            tags: self.tags.into_iter().map(|t| t.inst).collect(),
            commands: self.command_log,
        }
    }

    fn on_heard(&mut self, b: usize, id: u64, now: f64) {
        let Some(cmd) = self.medium.commands[b].iter().find(|c| c.id == id).cloned() else {
            return;
        };
        // Reader starts listening.
        let expected = match cmd.frame.kind {
            FrameKind::Ack => Expected::Epc,
            _ => Expected::Rn16,
        };
        let max_len = phy::fm0_packet_duration_s(expected.bits(), self.cfg.blf_hz) * (1.0 + tag::MAX_CLOCK_DRIFT);
        let timeout_at = cmd.end_s + self.t1() + max_len + reader::DEMOD_TAIL_BITS / self.cfg.blf_hz;
        let band = &mut self.bands[b];
        band.epoch += 1;
        band.awaiting = Some(Await {
            expected,
            listen_from: cmd.end_s,
            timeout_at,
        });
        let epoch = band.epoch;
        self.push(timeout_at, Ev::Eval { band: b, epoch });

        let fs_b = self.medium.fs_b;
        let i0 = ((cmd.sched.start_s - 2.0 * self.timing.tari_s) * fs_b).floor() as i64;
        let i1 = (now * fs_b).floor() as i64;
        let n = (i1 - i0).max(1) as usize;

        // Band-selective tags of this band.
        let members: Vec<usize> = (0..self.tags.len())
            .filter(|&i| self.tags[i].inst.kind == TagKind::Quin(b))
            .collect();
        if !members.is_empty() {
            let fe = self.medium.front_end(Some(b), i0, n, now);
            for i in members {
                self.deliver(i, &fe, &cmd, now);
            }
        }
        // Wideband tags hear the sum of all bands.
        let conv: Vec<usize> = (0..self.tags.len())
            .filter(|&i| self.tags[i].inst.kind == TagKind::Conventional && self.tags[i].last_heard_end < cmd.sched.start_s)
            .collect();
        if !conv.is_empty() {
            let fe = self.medium.front_end(None, i0, n, now);
            for i in conv {
                self.deliver(i, &fe, &cmd, now);
            }
        }
    }

    fn deliver(&mut self, i: usize, fe_unit: &FrontEndEnvelope, cmd: &Cmd, now: f64) {
        let g2 = self.tags[i].gain.powi(2);
        let fe = fe_unit.scaled(g2);
        let t1 = self.t1();
        let rt = &mut self.tags[i];
        let res = tag::decide_downlink(&rt.inst, &fe, &self.timing);
        rt.inst.set_powered(res.powered);
        let PieDecoded::Command { bits, .. } = res.decoded else {
            return;
        };
        let Some(frame) = Frame::parse_downlink(&bits) else {
            return;
        };
        rt.last_heard_end = cmd.end_s;
        // The tag gave up waiting for an acknowledgement.
        if rt.inst.fsm_state == TagState::Reply && cmd.sched.start_s > rt.last_reply_end + 20.0 / self.cfg.blf_hz {
            rt.inst.reply_timeout();
        }
        let Some(reply) = rt.inst.step(&frame) else {
            return;
        };
        let blf = self.cfg.blf_hz * (1.0 + rt.inst.clock_drift_frac);
        let halves = phy::fm0_halves(&reply.bits());
        let half_s = 0.5 / blf;
        let start_s = cmd.end_s + t1;
        let end_s = start_s + halves.len() as f64 * half_s;
        rt.last_reply_end = end_s;
        if rt.inst.kind == TagKind::Conventional && reply.kind == FrameKind::Rn16Reply && !self.cfg.reader.is_baseline() {
            self.excitations.push(Excitation {
                time_s: start_s,
                rn16: reply.rn16().unwrap_or(0),
            });
        }
        let kind = rt.inst.kind;
        self.medium.uplinks.push_back(Uplink {
            tag: i,
            start_s,
            end_s,
            halves,
            half_s,
        });
        // Wake every band the reply reaches and that is listening.
        let tail = reader::DEMOD_TAIL_BITS / self.cfg.blf_hz;
        for c in 0..self.bands.len() {
            let reaches = match kind {
                TagKind::Quin(q) => q == c,
                TagKind::Conventional => true,
            };
            if let (true, Some(w)) = (reaches, self.bands[c].awaiting) {
                if start_s >= w.listen_from && start_s < w.timeout_at && end_s + tail < w.timeout_at {
                    let epoch = self.bands[c].epoch;
                    self.push((end_s + tail).max(now), Ev::Eval { band: c, epoch });
                }
            }
        }
    }

    fn demod_window(&mut self, b: usize, from: f64, now: f64, expected: Expected) -> (IqStream, reader::DemodResult) {
        let fs_b = self.medium.fs_b;
        let i0 = (from * fs_b).floor() as i64;
        let n = ((now * fs_b).floor() as i64 - i0).max(1) as usize;
        let x = self.medium.rx_band(b, i0, n, now, &self.tags);
        let r = reader::demod_packet(&x, &self.up, expected);
        (x, r)
    }

    fn on_eval(&mut self, b: usize, epoch: u64, now: f64) {
        if self.bands[b].epoch != epoch {
            return;
        }
        let Some(w) = self.bands[b].awaiting else {
            return;
        };
        let (x, res) = self.demod_window(b, w.listen_from, now, w.expected);
        let final_eval = now >= w.timeout_at - 1e-12;
        if res.kind == EventKind::Timeout && !final_eval {
            return;
        }
        let mut t_dec = now + self.decision_latency;
        let mut ev = reader::to_event(&res, b, t_dec);

        if self.cfg.reader == ReaderMode::Fliptracer && w.expected == Expected::Rn16 {
            let psd = self.medium.noise_psd;
            let n = baseline::estimate_tag_count(&x, &self.up, psd);
            if n >= 2 {
                t_dec += baseline::decode_latency_model(n.min(5)).unwrap_or(0.0);
                ev = ReadEvent::timeout(t_dec, b);
                if n <= 5 {
                    if let baseline::ClusterOutcome::Decoded(c) = baseline::cluster_decode(&x, n, &self.up, psd) {
                        ev.kind = EventKind::Rn16;
                        ev.rn16 = c.first().map(|bits| phy::bits_to_u64(bits) as u16);
                    }
                }
            }
        }

        if ev.kind == EventKind::Rn16 && self.bands.len() > 1 {
            let mut group = vec![ev.clone()];
            for c in 0..self.bands.len() {
                if c == b {
                    continue;
                }
                let (_, other) = self.demod_window(c, w.listen_from, now, Expected::Rn16);
                if other.kind == EventKind::Rn16 {
                    group.push(reader::to_event(&other, c, t_dec));
                }
            }
            reader::suppress_duplicates(&mut group, 1e-9);
            ev.duplicate = group[0].duplicate;
        }

        self.events.push(ev.clone());
        let band = &mut self.bands[b];
        band.awaiting = None;
        band.epoch += 1;
        let (s, cmd) = reader::session_step(&band.session, &SessionInput::Event(ev.clone()));
        band.session = s;
        if let Some(f) = cmd {
            if f.kind == FrameKind::Ack && ev.duplicate {
                band.acks_to_duplicates += 1;
            }
            let jitter = if self.cfg.synchronized_downlink {
                0.0
            } else {
                band.rng.random::<f64>() * self.timing.tari_s
            };
            self.issue(b, f, t_dec + jitter);
        }
    }
}

/// Run a configured scenario to completion.
pub fn simulate(cfg: &ScenarioConfig, tags: Vec<TagInstance>) -> Result<RunOutput> {
    Ok(Engine::new(cfg, tags)?.run())
}

/// Pre-distorter fitted for a plan's carriers at full scale; exposed for
/// inspection.
pub fn fitted_predistorter(cfg: &ScenarioConfig) -> Result<Option<GmpModel>> {
    let plan = cfg.band_plan()?;
    let chan = Channelizer::new(&plan)?;
    Ok(build_transmitter(&chan, cfg)?.0.and_then(|t| t.dpd))
}

/// Per-band downlink baseband of band `b` for a logged command list.
pub fn render_downlink(cfg: &ScenarioConfig, commands: &[(f64, Frame)], b: usize, duration_s: f64) -> Result<IqStream> {
    let plan = cfg.band_plan()?;
    plan.band(b)?;
    let fs_b = plan.per_band_sample_rate_hz;
    let timing = PieTiming::for_blf(cfg.blf_hz);
    let sched: Vec<ScheduledCommand> = commands
        .iter()
        .filter(|(t, _)| *t < duration_s)
        .map(|(t, f)| ScheduledCommand {
            start_s: *t,
            envelope: phy::encode_command(f, &timing, fs_b),
        })
        .collect();
    let n = (duration_s * fs_b).round() as usize;
    let mut v = reader::band_baseband(&sched, cfg.band_power_w().sqrt(), cfg.modulation_depth, 0.0, n, fs_b);
    if cfg.cfo_hz != 0.0 {
        band::mix(&mut v, cfg.cfo_hz, fs_b, 0.0);
    }
    IqStream::new(v, fs_b, plan.bands[b].center_hz, 0.0)
}
