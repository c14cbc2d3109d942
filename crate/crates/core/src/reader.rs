//! Reader side: per-band demodulation chain and the session MAC.
//!
//! Demodulation runs on one band's baseband:
//! decimate to ~10 samples per bit -> DC removal -> preamble correlation
//! (offset and complex channel gain) -> Gardner timing loop on FM0
//! half-bits -> slicing -> CRC check.

use num_complex::Complex64;

use crate::band::{BandPlan, Channelizer, IqStream};
use crate::error::Result;
use crate::impairments::Transmitter;
use crate::phy::{self, Bits, Envelope, Frame};
use crate::tag::UplinkConfig;

/// Normalized correlation needed to declare a preamble.
pub const PREAMBLE_THRESHOLD: f64 = 0.6;
pub const GARDNER_KP: f64 = 0.05;
pub const GARDNER_KI: f64 = 0.002;
/// Fixed compute time of the demodulator after the last sample arrives.
pub const DEMOD_COMPUTE_S: f64 = 5e-6;
/// Bits of signal the demodulator waits for after the expected packet end.
pub const DEMOD_TAIL_BITS: f64 = 2.0;
/// Working oversampling of the demodulator.
pub const DEMOD_SAMPLES_PER_BIT: f64 = 10.0;
/// DC-removal window in bit durations.
pub const DC_WINDOW_BITS: f64 = 16.0;
/// Timing-error variance above which the loop is declared unlocked.
pub const LOCK_ERROR_VARIANCE: f64 = 0.5;
/// Spacing of the initial rate offsets the timing loop is started from.
pub const RATE_GRID_STEP: f64 = 0.0125;

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Rn16,
    Epc,
    CrcError,
    Timeout,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Rn16 => "rn16",
            EventKind::Epc => "epc",
            EventKind::CrcError => "crc_error",
            EventKind::Timeout => "timeout",
        }
    }
}

/// One demodulation outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadEvent {
    pub time_s: f64,
    pub band_index: usize,
    pub kind: EventKind,
    /// EPC bits, only for `Epc`.
    pub epc: Option<Bits>,
    pub rn16: Option<u16>,
    pub duplicate: bool,
}

impl ReadEvent {
    pub fn timeout(time_s: f64, band_index: usize) -> Self {
        Self {
            time_s,
            band_index,
            kind: EventKind::Timeout,
            epc: None,
            rn16: None,
            duplicate: false,
        }
    }

    /// `time_s,band,kind,epc_hex,duplicate`
    pub fn csv_row(&self) -> String {
        format!(
            "{:.9},{},{},{},{}",
            self.time_s,
            self.band_index,
            self.kind.as_str(),
            self.epc.as_ref().map(|e| phy::bits_to_hex(e)).unwrap_or_default(),
            self.duplicate as u8
        )
    }
}

pub const EVENT_CSV_HEADER: &str = "time_s,band,kind,epc_hex,duplicate";

/// What the reader expects in a receive window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    Rn16,
    Epc,
}

impl Expected {
    pub fn bits(&self) -> usize {
        match self {
            Expected::Rn16 => 16,
            Expected::Epc => 16 + phy::EPC_BITS + 16,
        }
    }
}

// ---------------------------------------------------------------------------
// Front end
// ---------------------------------------------------------------------------

/// Boxcar-average and keep every `d`-th sample.
pub fn boxcar_decimate(x: &IqStream, d: usize) -> IqStream {
    if d <= 1 {
        return x.clone();
    }
    let samples = x
        .samples
        .chunks(d)
        .map(|c| c.iter().sum::<Complex64>() / c.len() as f64)
        .collect();
    // The averaged sample represents the middle of its block.
    IqStream {
        samples,
        sample_rate_hz: x.sample_rate_hz / d as f64,
        center_frequency_hz: x.center_frequency_hz,
        start_time_s: x.start_time_s + (d as f64 - 1.0) / 2.0 / x.sample_rate_hz,
    }
}

fn centered_mean(x: &[Complex64], w: usize) -> Vec<Complex64> {
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(Complex64::new(0.0, 0.0));
    for v in x {
        let last = *prefix.last().unwrap();
        prefix.push(last + v);
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

/// Subtract a centered moving average of length `window_s`.
pub fn remove_dc(x: &IqStream, window_s: f64) -> IqStream {
    let w = ((window_s * x.sample_rate_hz).round() as usize).max(1);
    let m = centered_mean(&x.samples, w);
    x.with_samples(x.samples.iter().zip(m).map(|(a, b)| a - b).collect())
}

/// Preamble search result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreambleHit {
    /// Sample index of the preamble start.
    pub offset_samples: usize,
    /// Complex gain mapping FM0 levels (+/-1) to samples.
    pub channel_gain: Complex64,
    pub peak: f64,
}

/// FM0 preamble template (+/-1) at the stream rate.
pub fn preamble_template(blf_hz: f64, sample_rate_hz: f64) -> Vec<f64> {
    let half = sample_rate_hz / (2.0 * blf_hz);
    let n = (12.0 * half).round() as usize;
    (0..n)
        .map(|i| phy::FM0_PREAMBLE_HALVES[(((i as f64 + 0.5) / half) as usize).min(11)])
        .collect()
}

/// Normalized correlation against the FM0 preamble over all offsets in
/// `search` (defaults to the whole stream).
pub fn detect_preamble(x: &IqStream, cfg: &UplinkConfig) -> Option<PreambleHit> {
    detect_preamble_in(x, cfg, 0..x.len())
}

pub fn detect_preamble_in(x: &IqStream, cfg: &UplinkConfig, search: std::ops::Range<usize>) -> Option<PreambleHit> {
    let t = preamble_template(cfg.blf_hz, x.sample_rate_hz);
    let l = t.len();
    if x.len() < l || l == 0 {
        return None;
    }
    let t_energy: f64 = t.iter().map(|v| v * v).sum();
    let s = &x.samples;
    let mut energy: f64 = s[..l].iter().map(|v| v.norm_sqr()).sum();
    let last = (x.len() - l).min(search.end.saturating_sub(1));
    let mut best: Option<PreambleHit> = None;
    for tau in 0..=last {
        if tau > 0 {
            energy += s[tau + l - 1].norm_sqr() - s[tau - 1].norm_sqr();
        }
        if tau < search.start || energy <= 1e-300 {
            continue;
        }
        let mut c = Complex64::new(0.0, 0.0);
        for (i, tv) in t.iter().enumerate() {
            c += s[tau + i] * *tv;
        }
        let rho = c.norm() / (t_energy * energy.max(0.0)).sqrt();
        if best.map_or(true, |b| rho > b.peak) {
            best = Some(PreambleHit {
                offset_samples: tau,
                channel_gain: c / t_energy,
                peak: rho,
            });
        }
    }
    best.filter(|b| b.peak >= PREAMBLE_THRESHOLD)
}

/// Joint least-squares fit of channel gain and constant offset over the
/// preamble starting at `offset` in a stream that still carries its DC.
pub fn fit_preamble(x: &[Complex64], offset: usize, template: &[f64]) -> Option<(Complex64, Complex64)> {
    let seg = x.get(offset..offset + template.len())?;
    let l = template.len() as f64;
    let st: f64 = template.iter().sum();
    let stt: f64 = template.iter().map(|v| v * v).sum();
    let sx: Complex64 = seg.iter().sum();
    let stx: Complex64 = seg.iter().zip(template).map(|(a, t)| a * *t).sum();
    let det = stt * l - st * st;
    if det.abs() < 1e-12 * stt * l {
        return None;
    }
    let gain = (stx * l - sx * st) / det;
    let dc = (sx * stt - stx * st) / det;
    Some((gain, dc))
}

// ---------------------------------------------------------------------------
// Gardner timing recovery
// ---------------------------------------------------------------------------

/// Loop state exposed for inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemodState {
    pub dc_estimate: Complex64,
    pub preamble_correlation_peak: f64,
    pub channel_gain_estimate: Complex64,
    /// Fractional strobe position within a sample.
    pub timing_phase: f64,
    pub ted_loop_gains: (f64, f64),
}

/// Output of the timing loop.
#[derive(Debug, Clone, PartialEq)]
pub struct GardnerOutput {
    /// Derotated soft half-bit values (nominal +/-1).
    pub soft: Vec<Complex64>,
    /// Timing error at each strobe.
    pub errors: Vec<f64>,
    /// Relative rate correction at the end of the packet.
    pub rate_correction: f64,
    /// Sample position just after the last half-bit.
    pub end_sample: f64,
    pub final_phase: f64,
    pub locked: bool,
}

fn interp(x: &[Complex64], t: f64) -> Complex64 {
    if t <= 0.0 {
        return x[0];
    }
    let i = t.floor() as usize;
    if i + 1 >= x.len() {
        return x[x.len() - 1];
    }
    let f = t - i as f64;
    x[i] * (1.0 - f) + x[i + 1] * f
}

fn gardner_pass(y: &[Complex64], start: f64, half: f64, n_halves: usize, rate0: f64) -> GardnerOutput {
    let mut soft: Vec<Complex64> = Vec::with_capacity(n_halves);
    let mut errors = Vec::with_capacity(n_halves);
    let mut rate = rate0;
    // Half-bit k spans samples start + k·half .. start + (k+1)·half - 1.
    let mut tau = start + (half - 1.0) / 2.0;
    let mut prev_tau = tau - half;
    for k in 0..n_halves {
        let cur = interp(y, tau);
        if k > 0 {
            let mid = interp(y, 0.5 * (tau + prev_tau));
            let e = ((cur - soft[k - 1]) * mid.conj()).re.clamp(-2.0, 2.0);
            errors.push(e);
            rate += GARDNER_KI * e;
            soft.push(cur);
            prev_tau = tau;
            tau += half * (1.0 - rate) - GARDNER_KP * e * half;
        } else {
            soft.push(cur);
            prev_tau = tau;
            tau += half * (1.0 - rate);
        }
    }
    let var = settled_variance(&errors);
    GardnerOutput {
        soft,
        errors,
        rate_correction: rate,
        end_sample: prev_tau + (half + 1.0) / 2.0,
        final_phase: prev_tau.rem_euclid(1.0),
        locked: var <= LOCK_ERROR_VARIANCE,
    }
}

/// Recover half-bit soft values from a DC-free stream.
///
/// `start` is the preamble start in samples and `gain` the channel gain
/// from the correlator. A matched boxcar of one half-bit precedes the loop.
/// The loop is started from a grid of rate offsets within `drift_max`,
/// each refined twice from the rate it ended with; the pass with the
/// smallest settled timing-error variance wins.
pub fn gardner_recover(
    x: &IqStream,
    cfg: &UplinkConfig,
    start: f64,
    gain: Complex64,
    n_halves: usize,
    drift_max: f64,
) -> GardnerOutput {
    let half = x.sample_rate_hz / (2.0 * cfg.blf_hz);
    let inv = if gain.norm() > 0.0 { 1.0 / gain } else { Complex64::new(1.0, 0.0) };
    let norm: Vec<Complex64> = x.samples.iter().map(|s| s * inv).collect();
    let w = (half.round() as usize).max(1);
    let y = if w > 1 { centered_mean(&norm, w) } else { norm };
    if y.is_empty() {
        return GardnerOutput {
            soft: vec![],
            errors: vec![],
            rate_correction: 0.0,
            end_sample: start,
            final_phase: 0.0,
            locked: false,
        };
    }
    let steps = (drift_max / RATE_GRID_STEP).floor() as i64;
    let mut best: Option<(f64, GardnerOutput)> = None;
    for i in -steps..=steps {
        let mut out = gardner_pass(&y, start, half, n_halves, i as f64 * RATE_GRID_STEP);
        for _ in 0..2 {
            let v = settled_variance(&out.errors);
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, out.clone()));
            }
            let est = out.rate_correction.clamp(-drift_max, drift_max);
            out = gardner_pass(&y, start, half, n_halves, est);
        }
        let v = settled_variance(&out.errors);
        if best.as_ref().map_or(true, |(b, _)| v < *b) {
            best = Some((v, out));
        }
    }
    best.map(|(_, o)| o).unwrap()
}

/// Mean squared timing error over the strobes after the preamble.
fn settled_variance(errors: &[f64]) -> f64 {
    let skip = (2 * phy::FM0_PREAMBLE_BITS - 1).min(errors.len() / 2);
    let settled = &errors[skip..];
    if settled.is_empty() {
        0.0
    } else {
        settled.iter().map(|e| e * e).sum::<f64>() / settled.len() as f64
    }
}

/// FM0 decision on half-bit soft values that include the 12 preamble halves.
pub fn fm0_slice(soft: &[Complex64], n_bits: usize) -> Bits {
    (0..n_bits)
        .map(|i| {
            let k = 2 * (phy::FM0_PREAMBLE_BITS + i);
            match (soft.get(k), soft.get(k + 1)) {
                (Some(a), Some(b)) if a.re * b.re < 0.0 => 0,
                _ => 1,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Packet demodulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct DemodResult {
    pub kind: EventKind,
    pub bits: Option<Bits>,
    /// Absolute time of the detected packet end.
    pub packet_end_s: Option<f64>,
    pub state: Option<DemodState>,
}

/// Decimation factor that brings a stream to about 10 samples per bit.
pub fn demod_decimation(sample_rate_hz: f64, blf_hz: f64) -> usize {
    ((sample_rate_hz / (DEMOD_SAMPLES_PER_BIT * blf_hz)).floor() as usize).max(1)
}

/// Full chain on one band's receive window.
pub fn demod_packet(x: &IqStream, cfg: &UplinkConfig, expected: Expected) -> DemodResult {
    let not_found = DemodResult {
        kind: EventKind::Timeout,
        bits: None,
        packet_end_s: None,
        state: None,
    };
    let d = demod_decimation(x.sample_rate_hz, cfg.blf_hz);
    let xd = boxcar_decimate(x, d);
    let dc_win = DC_WINDOW_BITS / cfg.blf_hz;
    let dc = centered_mean(&xd.samples, ((dc_win * xd.sample_rate_hz).round() as usize).max(1));
    let clean = xd.with_samples(xd.samples.iter().zip(&dc).map(|(a, b)| a - b).collect());
    let n_bits = expected.bits();
    let sps = xd.sample_rate_hz / cfg.blf_hz;
    let pkt_len = ((phy::fm0_packet_bits(n_bits) as f64) * sps * 0.95) as usize;
    let search_end = clean.len().saturating_sub(pkt_len.min(clean.len()));
    let Some(hit) = detect_preamble_in(&clean, cfg, 0..search_end + 1) else {
        return not_found;
    };
    let n_halves = 2 * (phy::FM0_PREAMBLE_BITS + n_bits);
    let template = preamble_template(cfg.blf_hz, xd.sample_rate_hz);
    let (gain, level) = fit_preamble(&xd.samples, hit.offset_samples, &template).unwrap_or((hit.channel_gain, dc[hit.offset_samples]));
    let local = xd.with_samples(xd.samples.iter().map(|a| a - level).collect());
    let g = gardner_recover(&local, cfg, hit.offset_samples as f64, gain, n_halves, 0.06);
    let state = DemodState {
        dc_estimate: level,
        preamble_correlation_peak: hit.peak,
        channel_gain_estimate: gain,
        timing_phase: g.final_phase,
        ted_loop_gains: (GARDNER_KP, GARDNER_KI),
    };
    if !g.locked {
        return DemodResult {
            state: Some(state),
            ..not_found
        };
    }
    let bits = fm0_slice(&g.soft, n_bits);
    // Dummy-1 closes the packet one bit after the payload.
    let end_s = clean.time_of(0) + (g.end_sample + sps) / clean.sample_rate_hz;
    let kind = match expected {
        Expected::Rn16 => EventKind::Rn16,
        Expected::Epc => {
            if phy::crc16_check(&bits) {
                EventKind::Epc
            } else {
                EventKind::CrcError
            }
        }
    };
    DemodResult {
        kind,
        bits: Some(bits),
        packet_end_s: Some(end_s),
        state: Some(state),
    }
}

/// Turn a demodulation result into an event stamped at `time_s`.
pub fn to_event(r: &DemodResult, band_index: usize, time_s: f64) -> ReadEvent {
    let mut ev = ReadEvent::timeout(time_s, band_index);
    ev.kind = r.kind;
    match r.kind {
        EventKind::Rn16 => ev.rn16 = r.bits.as_ref().map(|b| phy::bits_to_u64(b) as u16),
        EventKind::Epc => ev.epc = r.bits.as_ref().map(|b| b[16..16 + phy::EPC_BITS].to_vec()),
        _ => {}
    }
    ev
}

/// Simulated time from the last sample of a packet to the demod decision.
pub fn decision_latency_s(cfg: &UplinkConfig, channel_delay_s: f64) -> f64 {
    DEMOD_TAIL_BITS / cfg.blf_hz + channel_delay_s + DEMOD_COMPUTE_S
}

// ---------------------------------------------------------------------------
// MAC
// ---------------------------------------------------------------------------

/// Q such that 2^Q is closest to the expected tag count.
pub fn choose_q(expected_tags: usize) -> u8 {
    let n = expected_tags.max(1) as f64;
    (n.log2().round() as i64).clamp(0, 15) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionPhase {
    Idle,
    AwaitRn16,
    AwaitEpc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SessionStats {
    pub queries: u64,
    pub query_reps: u64,
    pub acks: u64,
    pub rn16s: u64,
    pub epcs: u64,
    pub crc_errors: u64,
    pub timeouts: u64,
    pub duplicates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub band_index: usize,
    pub phase: SessionPhase,
    pub q_value: u8,
    /// Slots left in the round after the current one.
    pub slots_remaining: u32,
    pub pending_rn16: Option<u16>,
    pub downlink_delay_s: f64,
    pub stats: SessionStats,
}

impl SessionState {
    pub fn new(band_index: usize, q_value: u8, downlink_delay_s: f64) -> Self {
        Self {
            band_index,
            phase: SessionPhase::Idle,
            q_value,
            slots_remaining: 0,
            pending_rn16: None,
            downlink_delay_s,
            stats: SessionStats::default(),
        }
    }
}

/// Input to the session state machine.
#[derive(Debug, Clone, PartialEq)]
pub enum SessionInput {
    /// Start of operation or explicit round restart.
    SlotBoundary,
    Event(ReadEvent),
}

fn next_slot(s: &mut SessionState) -> Frame {
    s.pending_rn16 = None;
    s.phase = SessionPhase::AwaitRn16;
    if s.slots_remaining > 0 {
        s.slots_remaining -= 1;
        s.stats.query_reps += 1;
        phy::frame_query_rep()
    } else {
        start_round(s)
    }
}

fn start_round(s: &mut SessionState) -> Frame {
    s.slots_remaining = (1u32 << s.q_value) - 1;
    s.phase = SessionPhase::AwaitRn16;
    s.stats.queries += 1;
    phy::frame_query(s.q_value, phy::SessionFlags::default()).expect("q in range")
}

/// Advance one session. Every input yields exactly one next command.
pub fn session_step(s: &SessionState, input: &SessionInput) -> (SessionState, Option<Frame>) {
    let mut n = s.clone();
    let cmd = match (s.phase, input) {
        (SessionPhase::Idle, _) | (_, SessionInput::SlotBoundary) => Some(start_round(&mut n)),
        (SessionPhase::AwaitRn16, SessionInput::Event(ev)) => match ev.kind {
            EventKind::Rn16 if ev.duplicate => {
                n.stats.duplicates += 1;
                Some(next_slot(&mut n))
            }
            EventKind::Rn16 => {
                n.stats.rn16s += 1;
                let r = ev.rn16.unwrap_or(0);
                n.pending_rn16 = Some(r);
                n.phase = SessionPhase::AwaitEpc;
                n.stats.acks += 1;
                Some(phy::frame_ack(r))
            }
            EventKind::Timeout => {
                n.stats.timeouts += 1;
                Some(next_slot(&mut n))
            }
            EventKind::CrcError => {
                n.stats.crc_errors += 1;
                Some(next_slot(&mut n))
            }
            EventKind::Epc => Some(next_slot(&mut n)),
        },
        (SessionPhase::AwaitEpc, SessionInput::Event(ev)) => {
            match ev.kind {
                EventKind::Epc => n.stats.epcs += 1,
                EventKind::CrcError => n.stats.crc_errors += 1,
                EventKind::Timeout => n.stats.timeouts += 1,
                EventKind::Rn16 => {}
            }
            Some(next_slot(&mut n))
        }
    };
    (n, cmd)
}

/// Flag RN16 values seen in two or more bands within `window_s` of each
/// other.
pub fn suppress_duplicates(events: &mut [ReadEvent], window_s: f64) {
    let n = events.len();
    let mut flag = vec![false; n];
    for i in 0..n {
        if events[i].kind != EventKind::Rn16 {
            continue;
        }
        for j in i + 1..n {
            let (a, b) = (&events[i], &events[j]);
            if b.kind == EventKind::Rn16
                && a.band_index != b.band_index
                && a.rn16.is_some()
                && a.rn16 == b.rn16
                && (a.time_s - b.time_s).abs() <= window_s
            {
                flag[i] = true;
                flag[j] = true;
            }
        }
    }
    for (e, f) in events.iter_mut().zip(flag) {
        if f {
            e.duplicate = true;
        }
    }
}

// ---------------------------------------------------------------------------
// Downlink synthesis
// ---------------------------------------------------------------------------

/// A command placed on one band's timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledCommand {
    pub start_s: f64,
    /// PIE envelope (0/1) at the per-band rate.
    pub envelope: Envelope,
}

/// Carrier amplitude of one band at per-band sample times, with any
/// overlapping command envelopes applied at modulation `depth`.
pub fn band_baseband(
    commands: &[ScheduledCommand],
    amplitude: f64,
    depth: f64,
    start_s: f64,
    n: usize,
    sample_rate_hz: f64,
) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(amplitude, 0.0); n];
    if amplitude == 0.0 {
        return out;
    }
    for c in commands {
        let off = ((c.start_s - start_s) * sample_rate_hz).round() as i64;
        for (i, e) in c.envelope.samples.iter().enumerate() {
            let k = off + i as i64;
            if k >= 0 && (k as usize) < n {
                out[k as usize] = Complex64::new(amplitude * (1.0 - depth * (1.0 - e)), 0.0);
            }
        }
    }
    out
}

/// Composite downlink over `[start_s, start_s + n_composite / fs)`.
///
/// Each active band carries its carrier (amplitude from `band_amplitudes`)
/// with its scheduled commands already offset by session delays; inactive
/// bands have amplitude zero. The sum goes through the transmitter model.
pub fn schedule_downlink(
    chan: &Channelizer,
    per_band: &[Vec<ScheduledCommand>],
    band_amplitudes: &[f64],
    depth: f64,
    tx: &Transmitter,
    start_s: f64,
    n_per_band: usize,
) -> Result<IqStream> {
    let plan: &BandPlan = &chan.plan;
    let fs_b = plan.per_band_sample_rate_hz;
    let r = plan.decimation();
    let hist = tx.history();
    let hist_b = hist.div_ceil(r);
    let t0 = start_s - hist_b as f64 / fs_b;
    let basebands: Vec<IqStream> = (0..plan.bands.len())
        .map(|b| {
            let amp = band_amplitudes.get(b).copied().unwrap_or(0.0);
            let cmds = per_band.get(b).map(|v| v.as_slice()).unwrap_or(&[]);
            IqStream {
                samples: band_baseband(cmds, amp, depth, t0, n_per_band + hist_b, fs_b),
                sample_rate_hz: fs_b,
                center_frequency_hz: plan.bands[b].center_hz,
                start_time_s: t0,
            }
        })
        .collect();
    let comp = chan.duc(&basebands)?;
    let skip = hist_b * r - hist;
    let amplified = tx.amplify(&comp.samples[skip..]);
    Ok(IqStream {
        samples: amplified,
        sample_rate_hz: plan.composite_sample_rate_hz,
        center_frequency_hz: plan.center_hz(),
        start_time_s: start_s,
    })
}
