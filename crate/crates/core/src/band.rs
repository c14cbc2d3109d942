//! Band planning, FIR design, and digital up/down conversion.
//!
//! The composite stream is centered on the span midpoint. Each band is
//! brought to baseband by mixing, then decimated in two stages: a halfband
//! stage (x2) followed by a channel FIR. Up-conversion mirrors the chain.
//!
//! All filters are applied with their group delay removed, so sample `n` of
//! any output refers to the same instant as sample `n` of the input at that
//! rate. The delay a real pipeline would add is reported by
//! [`Channelizer::pipeline_delay_s`] and charged separately as latency.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default span of the US UHF RFID band.
pub const SPAN_LOW_HZ: f64 = 902.0e6;
pub const SPAN_HIGH_HZ: f64 = 928.0e6;
/// Default SAW passband (3 dB width).
pub const DEFAULT_PASSBAND_HZ: f64 = 1.6e6;
/// Default one-sided guard between a working band and its neighbours.
pub const DEFAULT_ROLL_OFF_HZ: f64 = 1.2e6;
/// Smallest allowed spacing between adjacent band centers.
pub const MIN_SPACING_HZ: f64 = 5.0e6;
pub const COMPOSITE_RATE_HZ: f64 = 38.4e6;
pub const PER_BAND_RATE_HZ: f64 = 6.4e6;
/// Stopband attenuation used for the channelizer stages.
pub const CHANNEL_ATTEN_DB: f64 = 70.0;
/// Default tap-count cap for [`design_lowpass`].
pub const MAX_TAPS: usize = 512;

// ---------------------------------------------------------------------------
// IQ streams
// ---------------------------------------------------------------------------

/// Uniformly sampled complex baseband.
///
/// Amplitude is normalized so that `|x|^2 = 1.0` is 1 W (0 dB reference).
#[derive(Debug, Clone, PartialEq)]
pub struct IqStream {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
    /// Absolute RF frequency the stream is referenced to.
    pub center_frequency_hz: f64,
    pub start_time_s: f64,
}

impl IqStream {
    /// Build a stream, rejecting non-finite samples or a bad rate.
    pub fn new(
        samples: Vec<Complex64>,
        sample_rate_hz: f64,
        center_frequency_hz: f64,
        start_time_s: f64,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::Stream(format!("bad sample rate {sample_rate_hz}")));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::Stream("non-finite sample".into()));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            center_frequency_hz,
            start_time_s,
        })
    }

    /// Zero-filled stream.
    pub fn zeros(len: usize, sample_rate_hz: f64, center_frequency_hz: f64, start_time_s: f64) -> Self {
        Self {
            samples: vec![Complex64::new(0.0, 0.0); len],
            sample_rate_hz,
            center_frequency_hz,
            start_time_s,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Absolute time of sample `n`.
    pub fn time_of(&self, n: usize) -> f64 {
        self.start_time_s + n as f64 / self.sample_rate_hz
    }

    /// Mean power `E|x|^2`.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    /// Same metadata, new samples.
    pub fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            center_frequency_hz: self.center_frequency_hz,
            start_time_s: self.start_time_s,
        }
    }

    /// Write in the IQF1 dump format.
    pub fn write_iqf<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "IQF1 {} {} {}",
            self.sample_rate_hz,
            self.center_frequency_hz,
            self.samples.len()
        )?;
        let mut buf = Vec::with_capacity(self.samples.len() * 8);
        for s in &self.samples {
            buf.extend_from_slice(&(s.re as f32).to_le_bytes());
            buf.extend_from_slice(&(s.im as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Read an IQF1 dump. Start time is not part of the format and reads as 0.
    pub fn read_iqf<R: Read>(mut r: R) -> Result<Self> {
        let mut header = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            if r.read(&mut byte)? == 0 {
                return Err(Error::Parse("truncated IQF1 header".into()));
            }
            if byte[0] == b'\n' {
                break;
            }
            header.push(byte[0]);
            if header.len() > 256 {
                return Err(Error::Parse("IQF1 header too long".into()));
            }
        }
        let header = String::from_utf8(header).map_err(|e| Error::Parse(e.to_string()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "IQF1" {
            return Err(Error::Parse(format!("bad IQF1 header: {header:?}")));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(e.to_string()));
        let rate = parse(fields[1])?;
        let center = parse(fields[2])?;
        let count: usize = fields[3].parse().map_err(|_| Error::Parse("bad count".into()))?;
        let mut data = vec![0u8; count * 8];
        r.read_exact(&mut data)?;
        let samples = data
            .chunks_exact(8)
            .map(|c| {
                let i = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let q = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                Complex64::new(i as f64, q as f64)
            })
            .collect();
        IqStream::new(samples, rate, center, 0.0)
    }
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s.norm_sqr()).sum::<f64>() / x.len() as f64
}

// ---------------------------------------------------------------------------
// Band plan
// ---------------------------------------------------------------------------

/// One working band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSpec {
    pub center_hz: f64,
    /// 3 dB width.
    pub passband_hz: f64,
    /// One-sided guard width.
    pub roll_off_hz: f64,
}

impl BandSpec {
    /// Loaded quality factor `center / passband`.
    pub fn q_factor(&self) -> f64 {
        self.center_hz / self.passband_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandPlan {
    pub span_low_hz: f64,
    pub span_high_hz: f64,
    pub bands: Vec<BandSpec>,
    pub composite_sample_rate_hz: f64,
    pub per_band_sample_rate_hz: f64,
}

impl BandPlan {
    pub fn center_hz(&self) -> f64 {
        0.5 * (self.span_low_hz + self.span_high_hz)
    }

    /// Offset of band `i` from the composite center.
    pub fn offset_hz(&self, i: usize) -> f64 {
        self.bands[i].center_hz - self.center_hz()
    }

    pub fn decimation(&self) -> usize {
        (self.composite_sample_rate_hz / self.per_band_sample_rate_hz).round() as usize
    }

    pub fn band(&self, i: usize) -> Result<&BandSpec> {
        self.bands.get(i).ok_or(Error::OutOfRange {
            index: i,
            len: self.bands.len(),
        })
    }

    /// Check the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let span = self.span_high_hz - self.span_low_hz;
        if self.composite_sample_rate_hz < 1.25 * span {
            return Err(Error::BandPlan(format!(
                "composite rate {} below 1.25 x span {}",
                self.composite_sample_rate_hz, span
            )));
        }
        let ratio = self.composite_sample_rate_hz / self.per_band_sample_rate_hz;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::BandPlan("per-band rate must divide composite rate".into()));
        }
        for w in self.bands.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b.center_hz <= a.center_hz {
                return Err(Error::BandPlan("bands not sorted".into()));
            }
            if b.center_hz - a.center_hz < MIN_SPACING_HZ - 1e-3 {
                return Err(Error::BandPlan("spacing below 5 MHz".into()));
            }
            let a_hi = a.center_hz + a.passband_hz / 2.0 + a.roll_off_hz;
            let b_lo = b.center_hz - b.passband_hz / 2.0 - b.roll_off_hz;
            if a_hi > b_lo + 1e-3 {
                return Err(Error::BandPlan("guard regions overlap".into()));
            }
        }
        Ok(())
    }
}

/// Equal-spaced plan with the default roll-off guard.
pub fn make_band_plan(n_bands: usize, span_low_hz: f64, span_high_hz: f64, passband_hz: f64) -> Result<BandPlan> {
    make_band_plan_with(n_bands, span_low_hz, span_high_hz, passband_hz, DEFAULT_ROLL_OFF_HZ)
}

/// Equal-spaced plan. The outer bands keep `passband/2 + roll_off` clear of
/// the span edges; centers are symmetric about the midpoint.
pub fn make_band_plan_with(
    n_bands: usize,
    span_low_hz: f64,
    span_high_hz: f64,
    passband_hz: f64,
    roll_off_hz: f64,
) -> Result<BandPlan> {
    if n_bands == 0 {
        return Err(Error::BandPlan("n_bands must be at least 1".into()));
    }
    if !(passband_hz > 0.0) || roll_off_hz < 0.0 || !(span_high_hz > span_low_hz) {
        return Err(Error::BandPlan("non-positive passband or empty span".into()));
    }
    let span = span_high_hz - span_low_hz;
    let margin = passband_hz / 2.0 + roll_off_hz;
    let mid = 0.5 * (span_low_hz + span_high_hz);
    let centers: Vec<f64> = if n_bands == 1 {
        if span < 2.0 * margin {
            return Err(Error::BandPlan(format!(
                "span {span} Hz narrower than one band with guards ({} Hz)",
                2.0 * margin
            )));
        }
        vec![mid]
    } else {
        let usable = span - 2.0 * margin;
        let spacing = usable / (n_bands - 1) as f64;
        if usable <= 0.0 || spacing < MIN_SPACING_HZ {
            return Err(Error::BandPlan(format!(
                "{n_bands} bands need spacing >= {MIN_SPACING_HZ} Hz; span {span} Hz gives {spacing:.0} Hz"
            )));
        }
        (0..n_bands)
            .map(|i| mid + (i as f64 - (n_bands - 1) as f64 / 2.0) * spacing)
            .collect()
    };
    let bands: Vec<BandSpec> = centers
        .into_iter()
        .map(|c| BandSpec {
            center_hz: c,
            passband_hz,
            roll_off_hz,
        })
        .collect();
    // Smallest multiple of the per-band rate covering 1.25 x span with an
    // even decimation (so the halfband stage applies).
    let mut composite = PER_BAND_RATE_HZ * 2.0;
    while composite < 1.25 * span {
        composite += PER_BAND_RATE_HZ * 2.0;
    }
    let plan = BandPlan {
        span_low_hz,
        span_high_hz,
        bands,
        composite_sample_rate_hz: composite,
        per_band_sample_rate_hz: PER_BAND_RATE_HZ,
    };
    plan.validate()?;
    Ok(plan)
}

/// The five-band 902-928 MHz plan.
pub fn default_plan() -> BandPlan {
    make_band_plan(5, SPAN_LOW_HZ, SPAN_HIGH_HZ, DEFAULT_PASSBAND_HZ).expect("default plan is feasible")
}

// ---------------------------------------------------------------------------
// FIR design
// ---------------------------------------------------------------------------

/// Linear-phase FIR filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub group_delay_samples: usize,
}

impl FirFilter {
    pub fn from_taps(taps: Vec<f64>) -> Self {
        let group_delay_samples = (taps.len().saturating_sub(1)) / 2;
        Self {
            taps,
            group_delay_samples,
        }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Magnitude response in dB at normalized frequency `f / fs`.
    pub fn response_db(&self, f_norm: f64) -> f64 {
        let d = self.group_delay_samples as f64;
        let w = 2.0 * PI * f_norm;
        let a: f64 = self
            .taps
            .iter()
            .enumerate()
            .map(|(k, h)| h * (w * (k as f64 - d)).cos())
            .sum();
        20.0 * a.abs().max(1e-300).log10()
    }

    pub fn dc_gain(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// Zero-delay filtering at the input rate (output sample `n` aligned
    /// with input sample `n`).
    pub fn filter(&self, x: &[Complex64]) -> Vec<Complex64> {
        decimate(x, &self.taps, 1)
    }

    /// Same as [`filter`](Self::filter) for real input.
    pub fn filter_real(&self, x: &[f64]) -> Vec<f64> {
        let d = self.group_delay_samples as isize;
        let n = x.len() as isize;
        (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for (k, h) in self.taps.iter().enumerate() {
                    let j = i + d - k as isize;
                    if j >= 0 && j < n {
                        acc += h * x[j as usize];
                    }
                }
                acc
            })
            .collect()
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

fn kaiser_sinc(len: usize, cutoff_norm: f64, beta: f64) -> Vec<f64> {
    let d = (len - 1) as f64 / 2.0;
    let i0b = bessel_i0(beta);
    let mut taps: Vec<f64> = (0..len)
        .map(|n| {
            let x = n as f64 - d;
            let sinc = if x == 0.0 {
                2.0 * cutoff_norm
            } else {
                (2.0 * PI * cutoff_norm * x).sin() / (PI * x)
            };
            let r = if d > 0.0 { x / d } else { 0.0 };
            let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    // Exact symmetry against rounding in the window evaluation.
    for i in 0..len / 2 {
        let avg = 0.5 * (taps[i] + taps[len - 1 - i]);
        taps[i] = avg;
        taps[len - 1 - i] = avg;
    }
    taps
}

const VERIFY_GRID: usize = 4096;

fn meets_spec(f: &FirFilter, pass_norm: f64, stop_norm: f64, atten_db: f64) -> bool {
    (0..=VERIFY_GRID).all(|i| {
        let fn_ = 0.5 * i as f64 / VERIFY_GRID as f64;
        let db = f.response_db(fn_);
        if fn_ <= pass_norm {
            db >= -0.5
        } else if fn_ >= stop_norm {
            db <= -atten_db
        } else {
            true
        }
    })
}

/// Kaiser windowed-sinc lowpass with the default tap cap.
pub fn design_lowpass(pass_hz: f64, stop_hz: f64, stop_atten_db: f64, sample_rate_hz: f64) -> Result<FirFilter> {
    design_lowpass_capped(pass_hz, stop_hz, stop_atten_db, sample_rate_hz, MAX_TAPS)
}

/// Kaiser windowed-sinc lowpass. Starts from the Kaiser length estimate and
/// grows until the response measured on a 4096-point grid meets the spec.
pub fn design_lowpass_capped(
    pass_hz: f64,
    stop_hz: f64,
    stop_atten_db: f64,
    sample_rate_hz: f64,
    max_taps: usize,
) -> Result<FirFilter> {
    if !(pass_hz > 0.0 && pass_hz < stop_hz && stop_hz < sample_rate_hz / 2.0) {
        return Err(Error::FilterDesign(format!(
            "need 0 < pass ({pass_hz}) < stop ({stop_hz}) < fs/2 ({})",
            sample_rate_hz / 2.0
        )));
    }
    let pass = pass_hz / sample_rate_hz;
    let stop = stop_hz / sample_rate_hz;
    let cutoff = 0.5 * (pass + stop);
    let dw = 2.0 * PI * (stop - pass);
    let beta = kaiser_beta(stop_atten_db);
    let estimate = ((stop_atten_db - 7.95) / (2.285 * dw)).ceil().max(1.0) as usize + 1;
    let mut len = estimate | 1;
    while len <= max_taps {
        let f = FirFilter::from_taps(kaiser_sinc(len, cutoff, beta));
        if meets_spec(&f, pass, stop, stop_atten_db) {
            return Ok(f);
        }
        len += 2;
    }
    Err(Error::FilterDesign(format!(
        "{stop_atten_db} dB over a {:.0} Hz transition needs more than {max_taps} taps",
        stop_hz - pass_hz
    )))
}

// ---------------------------------------------------------------------------
// Resampling kernels
// ---------------------------------------------------------------------------

/// Zero-delay filter and keep every `r`-th output.
pub fn decimate(x: &[Complex64], h: &[f64], r: usize) -> Vec<Complex64> {
    let n = x.len();
    let d = (h.len() - 1) / 2;
    let out_len = n.div_ceil(r);
    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let center = m * r + d;
        // Valid k: 0 <= center - k < n.
        let k_lo = (center + 1).saturating_sub(n);
        let k_hi = h.len().min(center + 1);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in k_lo..k_hi {
            let s = x[center - k];
            acc.re += h[k] * s.re;
            acc.im += h[k] * s.im;
        }
        out.push(acc);
    }
    out
}

/// Zero-stuff by `r`, zero-delay filter, and restore unit gain.
pub fn interpolate(x: &[Complex64], h: &[f64], r: usize) -> Vec<Complex64> {
    let n_out = x.len() * r;
    let d = (h.len() - 1) / 2;
    let gain = r as f64;
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out {
        let base = n + d;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut k = base % r;
        while k < h.len() && k <= base {
            let idx = (base - k) / r;
            if idx < x.len() {
                let s = x[idx];
                acc.re += h[k] * s.re;
                acc.im += h[k] * s.im;
            }
            k += r;
        }
        out.push(acc * gain);
    }
    out
}

/// Multiply by `exp(j 2 pi f t)` with `t` the absolute sample time.
/// Phase is recomputed exactly every 1024 samples to bound drift.
pub fn mix(x: &mut [Complex64], freq_hz: f64, sample_rate_hz: f64, start_time_s: f64) {
    if freq_hz == 0.0 {
        return;
    }
    let step = Complex64::from_polar(1.0, 2.0 * PI * freq_hz / sample_rate_hz);
    for (blk, chunk) in x.chunks_mut(1024).enumerate() {
        let t0 = start_time_s + (blk * 1024) as f64 / sample_rate_hz;
        let cycles = (freq_hz * t0).rem_euclid(1.0);
        let mut ph = Complex64::from_polar(1.0, 2.0 * PI * cycles);
        for s in chunk.iter_mut() {
            *s *= ph;
            ph *= step;
        }
    }
}

// ---------------------------------------------------------------------------
// Channelizer
// ---------------------------------------------------------------------------

/// Designed filter chain for one plan.
#[derive(Debug, Clone)]
pub struct Channelizer {
    pub plan: BandPlan,
    /// First stage at the composite rate (x2), absent for odd decimation.
    pub halfband: Option<FirFilter>,
    /// Channel filter at the intermediate rate.
    pub channel: FirFilter,
    pub channel_factor: usize,
}

impl Channelizer {
    pub fn new(plan: &BandPlan) -> Result<Self> {
        plan.validate()?;
        let r = plan.decimation();
        let fs_c = plan.composite_sample_rate_hz;
        let edge = plan
            .bands
            .iter()
            .map(|b| b.passband_hz / 2.0)
            .fold(0.0, f64::max);
        let guard = plan.bands.iter().map(|b| b.roll_off_hz).fold(0.0, f64::max);
        let chan_stop = edge + guard.max(0.5 * edge);
        let (halfband, mid_rate, factor) = if r % 2 == 0 {
            let hb = design_lowpass(chan_stop, fs_c / 2.0 - chan_stop, CHANNEL_ATTEN_DB, fs_c)?;
            (Some(hb), fs_c / 2.0, r / 2)
        } else {
            (None, fs_c, r)
        };
        let channel = design_lowpass(edge, chan_stop, CHANNEL_ATTEN_DB, mid_rate)?;
        Ok(Self {
            plan: plan.clone(),
            halfband,
            channel,
            channel_factor: factor,
        })
    }

    /// Group delay a causal implementation of the DDC chain would add.
    pub fn pipeline_delay_s(&self) -> f64 {
        let fs_c = self.plan.composite_sample_rate_hz;
        let mut t = 0.0;
        let mid = if let Some(hb) = &self.halfband {
            t += hb.group_delay_samples as f64 / fs_c;
            fs_c / 2.0
        } else {
            fs_c
        };
        t + self.channel.group_delay_samples as f64 / mid
    }

    /// Down-convert band `band_index` to its per-band baseband.
    pub fn ddc(&self, composite: &IqStream, band_index: usize) -> Result<IqStream> {
        let plan = &self.plan;
        plan.band(band_index)?;
        if (composite.sample_rate_hz - plan.composite_sample_rate_hz).abs() > 1e-6 {
            return Err(Error::Stream("composite rate does not match plan".into()));
        }
        let mut x = composite.samples.clone();
        let off = plan.bands[band_index].center_hz - composite.center_frequency_hz;
        mix(&mut x, -off, composite.sample_rate_hz, composite.start_time_s);
        let y = match &self.halfband {
            Some(hb) => decimate(&x, &hb.taps, 2),
            None => x,
        };
        let z = decimate(&y, &self.channel.taps, self.channel_factor);
        Ok(IqStream {
            samples: z,
            sample_rate_hz: plan.per_band_sample_rate_hz,
            center_frequency_hz: plan.bands[band_index].center_hz,
            start_time_s: composite.start_time_s,
        })
    }

    /// Band-limit a per-band stream with the equivalent channel response,
    /// for per-band simulation without the composite stage.
    pub fn band_filter(&self) -> Result<FirFilter> {
        let edge = self.channel_edge_hz();
        let stop = edge + self.plan.bands.iter().map(|b| b.roll_off_hz).fold(0.0, f64::max).max(0.5 * edge);
        design_lowpass(edge, stop, CHANNEL_ATTEN_DB, self.plan.per_band_sample_rate_hz)
    }

    fn channel_edge_hz(&self) -> f64 {
        self.plan.bands.iter().map(|b| b.passband_hz / 2.0).fold(0.0, f64::max)
    }

    /// Up-convert one stream per band and sum into the composite.
    pub fn duc(&self, basebands: &[IqStream]) -> Result<IqStream> {
        let plan = &self.plan;
        if basebands.len() != plan.bands.len() {
            return Err(Error::Stream(format!(
                "{} streams for {} bands",
                basebands.len(),
                plan.bands.len()
            )));
        }
        let n = basebands[0].len();
        let t0 = basebands[0].start_time_s;
        for b in basebands {
            if b.len() != n {
                return Err(Error::Stream("mismatched stream lengths".into()));
            }
            if (b.sample_rate_hz - plan.per_band_sample_rate_hz).abs() > 1e-6 {
                return Err(Error::Stream("per-band rate mismatch".into()));
            }
        }
        let fs_c = plan.composite_sample_rate_hz;
        let mut acc = vec![Complex64::new(0.0, 0.0); n * plan.decimation()];
        for (i, b) in basebands.iter().enumerate() {
            if b.samples.iter().all(|s| s.re == 0.0 && s.im == 0.0) {
                continue;
            }
            let up = self.upconvert_one(&b.samples, i, t0);
            for (a, u) in acc.iter_mut().zip(up) {
                *a += u;
            }
        }
        Ok(IqStream {
            samples: acc,
            sample_rate_hz: fs_c,
            center_frequency_hz: plan.center_hz(),
            start_time_s: t0,
        })
    }

    /// Interpolate and shift one band; returns composite-rate samples.
    pub fn upconvert_one(&self, x: &[Complex64], band_index: usize, start_time_s: f64) -> Vec<Complex64> {
        let y = interpolate(x, &self.channel.taps, self.channel_factor);
        let mut z = match &self.halfband {
            Some(hb) => interpolate(&y, &hb.taps, 2),
            None => y,
        };
        mix(
            &mut z,
            self.plan.offset_hz(band_index),
            self.plan.composite_sample_rate_hz,
            start_time_s,
        );
        z
    }
}

/// Down-convert one band of a composite stream.
pub fn ddc(composite: &IqStream, plan: &BandPlan, band_index: usize) -> Result<IqStream> {
    plan.band(band_index)?;
    Channelizer::new(plan)?.ddc(composite, band_index)
}

/// Merge per-band basebands into one composite stream.
pub fn duc(basebands: &[IqStream], plan: &BandPlan) -> Result<IqStream> {
    Channelizer::new(plan)?.duc(basebands)
}
