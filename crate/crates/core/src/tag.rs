//! Tag models: the SAW band-select response, envelope-detector sensitivity,
//! downlink reception, backscatter, and the Gen-2 tag state machine.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::band::IqStream;
use crate::impairments::{db_to_amplitude, THERMAL_PSD_W_PER_HZ};
use crate::phy::{self, Bits, Frame, FrameKind, PieDecoded, PieTiming};

pub const SAW_INSERTION_LOSS_DB: f64 = 3.0;
pub const SAW_SUPPRESSION_DB: f64 = 30.0;
pub const SAW_TRANSITION_HZ: f64 = 1.5e6;
/// Minimum decodable SNR, 5 dB.
pub const DEFAULT_S_MIN: f64 = 3.16;
pub const DEFAULT_B_SIGNAL_HZ: f64 = 1.0e6;
pub const QUIN_B_NOISE_HZ: f64 = 2.0e6;
pub const CONV_B_NOISE_HZ: f64 = 100.0e6;
/// Chip power-up sensitivity, -21 dBm.
pub const POWER_UP_THRESHOLD_W: f64 = 7.943_282_347_242_815e-6;
pub const MAX_CLOCK_DRIFT: f64 = 0.05;
/// Default spread of per-tag clock drift.
pub const CLOCK_DRIFT_SPREAD: f64 = 0.025;
/// Slot counter value a tag parks at after losing its slot.
pub const SLOT_PARKED: u16 = 0x7FFF;

// ---------------------------------------------------------------------------
// SAW response
// ---------------------------------------------------------------------------

/// Frequency-selective front end of a band-specific tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SawFilterSpec {
    pub center_hz: f64,
    /// 3 dB width.
    pub passband_hz: f64,
    pub insertion_loss_db: f64,
    pub stopband_suppression_db: f64,
    /// Width of the raised-cosine skirt on each side.
    pub transition_hz: f64,
}

impl SawFilterSpec {
    pub fn for_center(center_hz: f64, passband_hz: f64) -> Self {
        Self {
            center_hz,
            passband_hz,
            insertion_loss_db: SAW_INSERTION_LOSS_DB,
            stopband_suppression_db: SAW_SUPPRESSION_DB,
            transition_hz: SAW_TRANSITION_HZ,
        }
    }

    /// Loaded Q, `center / passband`.
    pub fn q_factor(&self) -> f64 {
        self.center_hz / self.passband_hz
    }

    /// Half-width of the flat top. The skirt is placed so that the 3 dB
    /// point falls exactly at `passband / 2`.
    fn flat_half_width(&self) -> f64 {
        let u = (1.0 - 2.0 * 3.0 / self.stopband_suppression_db).acos() / PI;
        self.passband_hz / 2.0 - u * self.transition_hz
    }
}

/// Magnitude response in dB (negative = loss).
pub fn saw_gain_db(spec: &SawFilterSpec, freq_hz: f64) -> f64 {
    let d = (freq_hz - spec.center_hz).abs();
    let a = spec.flat_half_width();
    let s = spec.stopband_suppression_db;
    let rel = if d <= a {
        0.0
    } else if d >= a + spec.transition_hz {
        s
    } else {
        let u = (d - a) / spec.transition_hz;
        s * 0.5 * (1.0 - (PI * u).cos())
    };
    -(spec.insertion_loss_db + rel)
}

/// Complex gain (zero phase).
pub fn saw_gain(spec: &SawFilterSpec, freq_hz: f64) -> Complex64 {
    Complex64::new(db_to_amplitude(saw_gain_db(spec, freq_hz)), 0.0)
}

/// Filter a stream through the SAW response by FFT. The stream is padded so
/// circular wrap-around stays below the skirt's impulse-response length.
pub fn saw_filter(spec: &SawFilterSpec, x: &IqStream) -> IqStream {
    apply_frequency_response(x, |f| saw_gain(spec, f))
}

/// Apply an arbitrary zero-phase response `h(absolute frequency)` via FFT.
pub fn apply_frequency_response<F: Fn(f64) -> Complex64>(x: &IqStream, h: F) -> IqStream {
    let n = x.len();
    if n == 0 {
        return x.clone();
    }
    let pad = (20e-6 * x.sample_rate_hz).ceil() as usize;
    let len = (n + 2 * pad).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    buf[pad..pad + n].copy_from_slice(&x.samples);
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let fs = x.sample_rate_hz;
    for (k, v) in buf.iter_mut().enumerate() {
        let f = if k <= len / 2 {
            k as f64 * fs / len as f64
        } else {
            (k as f64 - len as f64) * fs / len as f64
        };
        *v *= h(x.center_frequency_hz + f);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / len as f64;
    x.with_samples(buf[pad..pad + n].iter().map(|v| v * scale).collect())
}

// ---------------------------------------------------------------------------
// Envelope-detector sensitivity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChipFrontEnd {
    /// Minimum decodable SNR (linear).
    pub s_min: f64,
    /// Noise density (W/Hz).
    pub k_t: f64,
    pub b_signal_hz: f64,
    /// Noise bandwidth admitted by the antenna.
    pub b_noise_hz: f64,
    pub power_up_threshold_w: f64,
}

impl ChipFrontEnd {
    pub fn quin() -> Self {
        Self {
            s_min: DEFAULT_S_MIN,
            k_t: THERMAL_PSD_W_PER_HZ,
            b_signal_hz: DEFAULT_B_SIGNAL_HZ,
            b_noise_hz: QUIN_B_NOISE_HZ,
            power_up_threshold_w: POWER_UP_THRESHOLD_W,
        }
    }

    pub fn conventional() -> Self {
        Self {
            b_noise_hz: CONV_B_NOISE_HZ,
            ..Self::quin()
        }
    }

    pub fn is_valid(&self) -> bool {
        self.s_min > 0.0
            && self.k_t > 0.0
            && self.b_signal_hz > 0.0
            && self.b_noise_hz >= self.b_signal_hz
            && self.power_up_threshold_w > 0.0
    }
}

/// Minimum detectable modulated power of an envelope detector:
/// `4 S B_s K + 2 K sqrt(4 B_s^2 S^2 + B_n B_s S)`.
pub fn min_detectable_power(fe: &ChipFrontEnd) -> f64 {
    let (s, bs, bn, k) = (fe.s_min, fe.b_signal_hz, fe.b_noise_hz, fe.k_t);
    4.0 * s * bs * k + 2.0 * k * (4.0 * bs * bs * s * s + bn * bs * s).sqrt()
}

// ---------------------------------------------------------------------------
// Tag instance and state machine
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagKind {
    /// Band-selective tag assigned to a band index.
    Quin(usize),
    Conventional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagState {
    Off,
    Ready,
    Arbitrate,
    Reply,
    Acknowledged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagInstance {
    pub epc_96: Bits,
    pub kind: TagKind,
    pub saw: Option<SawFilterSpec>,
    pub front_end: ChipFrontEnd,
    pub fsm_state: TagState,
    pub slot_counter: u16,
    pub active_rn16: u16,
    pub clock_drift_frac: f64,
    pub distance_m: f64,
    pub rng_seed: u64,
    /// Number of draws taken from the tag's counter-based generator.
    pub draws: u64,
}

impl TagInstance {
    /// Build a tag; clock drift is drawn from the seed within
    /// +/- [`CLOCK_DRIFT_SPREAD`].
    pub fn new(epc_96: Bits, kind: TagKind, saw: Option<SawFilterSpec>, distance_m: f64, rng_seed: u64) -> Self {
        let front_end = match kind {
            TagKind::Quin(_) => ChipFrontEnd::quin(),
            TagKind::Conventional => ChipFrontEnd::conventional(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(u64::MAX);
        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        Self {
            epc_96,
            kind,
            saw,
            front_end,
            fsm_state: TagState::Off,
            slot_counter: 0,
            active_rn16: 0,
            clock_drift_frac: (2.0 * u - 1.0) * CLOCK_DRIFT_SPREAD,
            distance_m,
            rng_seed,
            draws: 0,
        }
    }

    /// Next value of the tag's counter-based generator.
    fn draw(&mut self) -> u32 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(self.draws);
        self.draws += 1;
        rng.next_u32()
    }

    /// Power change. Losing power resets the state machine.
    pub fn set_powered(&mut self, powered: bool) {
        match (powered, self.fsm_state) {
            (false, _) => self.fsm_state = TagState::Off,
            (true, TagState::Off) => self.fsm_state = TagState::Ready,
            _ => {}
        }
    }

    pub fn is_powered(&self) -> bool {
        self.fsm_state != TagState::Off
    }

    fn new_rn16(&mut self) -> Frame {
        self.active_rn16 = (self.draw() >> 16) as u16;
        self.fsm_state = TagState::Reply;
        phy::frame_rn16(self.active_rn16)
    }

    fn park(&mut self) {
        self.fsm_state = TagState::Arbitrate;
        self.slot_counter = SLOT_PARKED;
    }

    /// Apply one decoded command in place.
    pub fn step(&mut self, command: &Frame) -> Option<Frame> {
        if self.fsm_state == TagState::Off {
            return None;
        }
        match command.kind {
            FrameKind::Query => {
                if !command.crc_ok() {
                    return None;
                }
                let q = command.q()?;
                let slots = 1u32 << q;
                self.slot_counter = (self.draw() % slots) as u16;
                if self.slot_counter == 0 {
                    Some(self.new_rn16())
                } else {
                    self.fsm_state = TagState::Arbitrate;
                    None
                }
            }
            FrameKind::QueryRep => match self.fsm_state {
                TagState::Arbitrate => {
                    if self.slot_counter == SLOT_PARKED || self.slot_counter == 0 {
                        return None;
                    }
                    self.slot_counter -= 1;
                    if self.slot_counter == 0 {
                        Some(self.new_rn16())
                    } else {
                        None
                    }
                }
                TagState::Reply => {
                    self.park();
                    None
                }
                TagState::Acknowledged => {
                    self.fsm_state = TagState::Ready;
                    None
                }
                _ => None,
            },
            FrameKind::Ack => match self.fsm_state {
                TagState::Reply | TagState::Acknowledged => {
                    if command.rn16() == Some(self.active_rn16) {
                        self.fsm_state = TagState::Acknowledged;
                        phy::frame_epc(&self.epc_96).ok()
                    } else {
                        self.park();
                        None
                    }
                }
                _ => None,
            },
            FrameKind::Nak => {
                if matches!(self.fsm_state, TagState::Reply | TagState::Acknowledged) {
                    self.park();
                }
                None
            }
            FrameKind::Rn16Reply | FrameKind::EpcReply => None,
        }
    }

    /// The reader did not answer within the reply-timeout window.
    pub fn reply_timeout(&mut self) {
        if self.fsm_state == TagState::Reply {
            self.park();
        }
    }
}

/// Pure form of [`TagInstance::step`]: returns the successor state.
pub fn tag_fsm_step(tag: &TagInstance, command: &Frame) -> (TagInstance, Option<Frame>) {
    let mut next = tag.clone();
    let reply = next.step(command);
    (next, reply)
}

// ---------------------------------------------------------------------------
// Downlink reception
// ---------------------------------------------------------------------------

/// Envelope seen by a tag after its front end.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEndEnvelope {
    /// Detected power, band-limited to the signal bandwidth (W).
    pub power: phy::Envelope,
    /// Mean input power after the antenna filter (W).
    pub mean_power_w: f64,
}

impl FrontEndEnvelope {
    /// Same envelope with all powers scaled (for a different path gain).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            power: phy::Envelope {
                samples: self.power.samples.iter().map(|v| v * factor).collect(),
                sample_rate_hz: self.power.sample_rate_hz,
            },
            mean_power_w: self.mean_power_w * factor,
        }
    }
}

/// Antenna filter, square-law detection, and a boxcar matched to the
/// signal bandwidth.
pub fn front_end_envelope(saw: Option<&SawFilterSpec>, b_signal_hz: f64, rf_at_tag: &IqStream) -> FrontEndEnvelope {
    let filtered = match saw {
        Some(s) => saw_filter(s, rf_at_tag),
        None => rf_at_tag.clone(),
    };
    let det: Vec<f64> = filtered.samples.iter().map(|s| s.norm_sqr()).collect();
    let mean = if det.is_empty() {
        0.0
    } else {
        det.iter().sum::<f64>() / det.len() as f64
    };
    let w = ((rf_at_tag.sample_rate_hz / b_signal_hz).round() as usize).max(1);
    FrontEndEnvelope {
        power: phy::Envelope {
            samples: moving_average(&det, w),
            sample_rate_hz: rf_at_tag.sample_rate_hz,
        },
        mean_power_w: mean,
    }
}

/// Centered moving average.
pub fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    if w <= 1 || x.is_empty() {
        return x.to_vec();
    }
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    let h = w / 2;
    (0..n)
        .map(|i| {
            let a = i.saturating_sub(h);
            let b = (i + w - h).min(n);
            (prefix[b] - prefix[a]) / (b - a) as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkResult {
    pub decoded: PieDecoded,
    pub powered: bool,
}

/// Power-up test, sensitivity test against the minimum detectable power,
/// then PIE decoding in the tag's drifted timebase.
pub fn decide_downlink(tag: &TagInstance, env: &FrontEndEnvelope, timing: &PieTiming) -> DownlinkResult {
    let powered = env.mean_power_w >= tag.front_end.power_up_threshold_w;
    if !powered {
        return DownlinkResult {
            decoded: PieDecoded::NoCommand,
            powered,
        };
    }
    let s = &env.power.samples;
    let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if hi - lo < min_detectable_power(&tag.front_end) {
        return DownlinkResult {
            decoded: PieDecoded::NoCommand,
            powered,
        };
    }
    DownlinkResult {
        decoded: phy::pie_decode_clocked(&env.power, timing, phy::PIE_TOLERANCE, 1.0 + tag.clock_drift_frac),
        powered,
    }
}

/// Full downlink reception for one tag.
pub fn tag_receive_downlink(tag: &TagInstance, rf_at_tag: &IqStream, timing: &PieTiming) -> DownlinkResult {
    let env = front_end_envelope(tag.saw.as_ref(), tag.front_end.b_signal_hz, rf_at_tag);
    decide_downlink(tag, &env, timing)
}

// ---------------------------------------------------------------------------
// Backscatter
// ---------------------------------------------------------------------------

/// Uplink encoding settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UplinkConfig {
    pub blf_hz: f64,
}

impl UplinkConfig {
    pub fn new(blf_hz: f64) -> crate::Result<Self> {
        if phy::BLFS_HZ.iter().any(|b| (b - blf_hz).abs() < 1e-6) {
            Ok(Self { blf_hz })
        } else {
            Err(crate::Error::InvalidParameter(format!(
                "BLF {blf_hz} Hz not in {{40, 80, 160, 320, 640}} kHz"
            )))
        }
    }

    pub fn bit_s(&self) -> f64 {
        1.0 / self.blf_hz
    }
}

/// Reflection state multiplied onto the incident field: 0 (absorb) or
/// 1 (reflect). The modulated component carries a quarter of the incident
/// power, i.e. the 6 dB modulation loss.
pub fn ook_reflection(levels: &[f64]) -> Vec<f64> {
    levels.iter().map(|l| 0.5 * (1.0 + l)).collect()
}

/// Reflected field for `reply`, starting at the first sample of
/// `carrier_at_tag`. Band-selective tags filter the incident field and the
/// reflection through the SAW; conventional tags reflect the whole span.
pub fn tag_backscatter(tag: &TagInstance, reply: &Frame, cfg: &UplinkConfig, carrier_at_tag: &IqStream) -> IqStream {
    let blf = cfg.blf_hz * (1.0 + tag.clock_drift_frac);
    let levels = phy::fm0_encode(&reply.bits(), blf, carrier_at_tag.sample_rate_hz);
    let refl = ook_reflection(&levels);
    let incident = match &tag.saw {
        Some(s) => saw_filter(s, carrier_at_tag),
        None => carrier_at_tag.clone(),
    };
    let n = incident.len();
    let modulated: Vec<Complex64> = (0..n)
        .map(|i| incident.samples[i] * refl.get(i).copied().unwrap_or(0.0))
        .collect();
    let out = incident.with_samples(modulated);
    match &tag.saw {
        Some(s) => saw_filter(s, &out),
        None => out,
    }
}
