//! RF impairments: free-space loss, thermal noise, carrier offset, and the
//! memory-polynomial power amplifier with its pre-distorter.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::band::IqStream;
use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Thermal noise density at 290 K (kT), rounded.
pub const THERMAL_PSD_W_PER_HZ: f64 = 4.0e-21;

// ---------------------------------------------------------------------------
// Channel
// ---------------------------------------------------------------------------

/// Link parameters for one tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub distance_m: f64,
    pub frequency_hz: f64,
    /// Receiver-side noise density.
    pub noise_psd_w_per_hz: f64,
    /// Noise bandwidth seen by a tag front end.
    pub tag_noise_bandwidth_hz: f64,
    pub cfo_hz: f64,
    pub rng_seed: u64,
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_m > 0.0) || !(self.noise_psd_w_per_hz >= 0.0) {
            return Err(Error::InvalidParameter("distance must be > 0 and noise psd >= 0".into()));
        }
        Ok(())
    }

    /// One-way amplitude gain from free-space loss.
    pub fn amplitude_gain(&self) -> f64 {
        db_to_amplitude(-path_loss_db(self.distance_m, self.frequency_hz))
    }
}

/// Free-space (Friis) loss in dB.
pub fn path_loss_db(distance_m: f64, frequency_hz: f64) -> f64 {
    20.0 * (4.0 * PI * distance_m * frequency_hz / SPEED_OF_LIGHT).log10()
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn power_to_db(p: f64) -> f64 {
    10.0 * p.max(1e-300).log10()
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    db_to_power(dbm - 30.0)
}

pub fn w_to_dbm(w: f64) -> f64 {
    power_to_db(w) + 30.0
}

/// Add circular complex Gaussian noise of one-sided density `noise_psd`
/// (W/Hz); total noise power is `noise_psd * sample_rate`.
pub fn awgn(x: &IqStream, noise_psd: f64, seed: u64) -> IqStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = x.clone();
    add_noise(&mut out.samples, noise_psd * x.sample_rate_hz, &mut rng);
    out
}

/// Add complex Gaussian noise of total power `power` drawn from `rng`.
pub fn add_noise<R: rand::Rng>(x: &mut [Complex64], power: f64, rng: &mut R) {
    if power <= 0.0 {
        return;
    }
    let sigma = (power / 2.0).sqrt();
    for s in x.iter_mut() {
        let i: f64 = StandardNormal.sample(rng);
        let q: f64 = StandardNormal.sample(rng);
        s.re += sigma * i;
        s.im += sigma * q;
    }
}

/// Rotate by `exp(j 2 pi cfo t)`, `t` the absolute sample time.
pub fn apply_cfo(x: &IqStream, cfo_hz: f64) -> IqStream {
    let mut out = x.clone();
    crate::band::mix(&mut out.samples, cfo_hz, x.sample_rate_hz, x.start_time_s);
    out
}

// ---------------------------------------------------------------------------
// Memory polynomial
// ---------------------------------------------------------------------------

/// `y(n) = sum_k sum_m a[k][m] x(n-m) |x(n-m)|^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmpModel {
    pub order_k: usize,
    pub memory_m: usize,
    /// Row-major, index `k * memory_m + m`.
    pub coeffs: Vec<Complex64>,
}

impl GmpModel {
    pub fn zeros(order_k: usize, memory_m: usize) -> Self {
        Self {
            order_k,
            memory_m,
            coeffs: vec![Complex64::new(0.0, 0.0); order_k * memory_m],
        }
    }

    /// Pure linear gain.
    pub fn linear(gain: Complex64) -> Self {
        let mut g = Self::zeros(1, 1);
        g.coeffs[0] = gain;
        g
    }

    pub fn get(&self, k: usize, m: usize) -> Complex64 {
        self.coeffs[k * self.memory_m + m]
    }

    pub fn set(&mut self, k: usize, m: usize, v: Complex64) {
        self.coeffs[k * self.memory_m + m] = v;
    }

    pub fn validate(&self) -> Result<()> {
        if self.order_k == 0 || self.memory_m == 0 {
            return Err(Error::InvalidParameter("GMP needs K >= 1 and M >= 1".into()));
        }
        if self.coeffs.len() != self.order_k * self.memory_m {
            return Err(Error::InvalidParameter("coefficient count != K*M".into()));
        }
        if self.coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Parse the `GMP K M` text format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let head = lines.next().ok_or_else(|| Error::Parse("empty GMP text".into()))?;
        let h: Vec<&str> = head.split_whitespace().collect();
        if h.len() != 3 || h[0] != "GMP" {
            return Err(Error::Parse(format!("bad GMP header {head:?}")));
        }
        let k: usize = h[1].parse().map_err(|_| Error::Parse("bad K".into()))?;
        let m: usize = h[2].parse().map_err(|_| Error::Parse("bad M".into()))?;
        let mut coeffs = Vec::with_capacity(k * m);
        for l in lines {
            let p: Vec<&str> = l.split_whitespace().collect();
            if p.len() != 2 {
                return Err(Error::Parse(format!("bad coefficient line {l:?}")));
            }
            let re: f64 = p[0].parse().map_err(|_| Error::Parse(format!("bad number {}", p[0])))?;
            let im: f64 = p[1].parse().map_err(|_| Error::Parse(format!("bad number {}", p[1])))?;
            coeffs.push(Complex64::new(re, im));
        }
        let g = Self {
            order_k: k,
            memory_m: m,
            coeffs,
        };
        g.validate()?;
        Ok(g)
    }
}

impl fmt::Display for GmpModel {
    /// One coefficient per line (`re im`), row-major in k.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GMP {} {}", self.order_k, self.memory_m)?;
        for c in &self.coeffs {
            writeln!(f, "{:e} {:e}", c.re, c.im)?;
        }
        Ok(())
    }
}

/// Basis columns `x(n)|x(n)|^k` for each k.
fn basis(x: &[Complex64], order_k: usize) -> Vec<Vec<Complex64>> {
    let mut cols = Vec::with_capacity(order_k);
    let mags: Vec<f64> = x.iter().map(|s| s.norm()).collect();
    let mut cur: Vec<Complex64> = x.to_vec();
    for k in 0..order_k {
        if k > 0 {
            for (c, m) in cur.iter_mut().zip(&mags) {
                *c *= *m;
            }
        }
        cols.push(cur.clone());
    }
    cols
}

/// Apply a model to raw samples with zero history.
pub fn gmp_apply_samples(model: &GmpModel, x: &[Complex64]) -> Vec<Complex64> {
    let cols = basis(x, model.order_k);
    let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
    for k in 0..model.order_k {
        for m in 0..model.memory_m {
            let a = model.get(k, m);
            if a.re == 0.0 && a.im == 0.0 {
                continue;
            }
            let col = &cols[k];
            for n in m..x.len() {
                y[n] += a * col[n - m];
            }
        }
    }
    y
}

/// Apply a model to a stream (zero padding before the first sample).
pub fn gmp_apply(model: &GmpModel, x: &IqStream) -> IqStream {
    x.with_samples(gmp_apply_samples(model, &x.samples))
}

/// Least-squares fit result.
#[derive(Debug, Clone, PartialEq)]
pub struct GmpFit {
    pub model: GmpModel,
    /// Normalized mean-square reconstruction error.
    pub nmse: f64,
}

/// Fit `y ~ GMP(x)` by regularized normal equations.
pub fn fit_gmp(x: &IqStream, y: &IqStream, order_k: usize, memory_m: usize) -> Result<GmpFit> {
    fit_gmp_samples(&x.samples, &y.samples, order_k, memory_m)
}

pub fn fit_gmp_samples(x: &[Complex64], y: &[Complex64], order_k: usize, memory_m: usize) -> Result<GmpFit> {
    if order_k == 0 || memory_m == 0 {
        return Err(Error::InvalidParameter("K and M must be >= 1".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Stream("x and y lengths differ".into()));
    }
    let p = order_k * memory_m;
    if x.len() < 10 * p {
        return Err(Error::InvalidParameter(format!(
            "need at least {} samples for K={order_k}, M={memory_m}",
            10 * p
        )));
    }
    let cols = basis(x, order_k);
    let n = x.len();
    let col = |j: usize, i: usize| -> Complex64 {
        let (k, m) = (j / memory_m, j % memory_m);
        if i >= m {
            cols[k][i - m]
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    // Column scaling keeps the Gram matrix well conditioned.
    let scale: Vec<f64> = (0..p)
        .map(|j| {
            let e: f64 = (0..n).map(|i| col(j, i).norm_sqr()).sum();
            if e > 0.0 {
                1.0 / e.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    if scale.iter().any(|&s| s == 0.0) {
        return Err(Error::Degenerate("all-zero basis column".into()));
    }
    let mut gram = vec![Complex64::new(0.0, 0.0); p * p];
    let mut row = vec![Complex64::new(0.0, 0.0); p];
    for i in 0..n {
        for (j, r) in row.iter_mut().enumerate() {
            *r = col(j, i) * scale[j];
        }
        for a in 0..p {
            let ca = row[a].conj();
            for b in a..p {
                gram[a * p + b] += ca * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[a * p + b] = gram[b * p + a].conj();
        }
    }
    // Rank test on the Gram matrix (unit diagonal after scaling).
    let chol = cholesky(&gram, p);
    let Some((l, _)) = chol.filter(|(_, min_pivot)| *min_pivot >= 1e-10) else {
        return Err(Error::Degenerate(
            "basis is rank deficient (stimulus does not excite all terms)".into(),
        ));
    };
    // A^H r over the scaled basis.
    let project = |r: &[Complex64]| -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); p];
        for (i, ri) in r.iter().enumerate() {
            for (j, vj) in v.iter_mut().enumerate() {
                *vj += (col(j, i) * scale[j]).conj() * ri;
            }
        }
        v
    };
    let mut sol = cholesky_solve(&l, p, &project(y));
    // Iterative refinement on the true residual recovers the accuracy the
    // normal equations lose.
    for _ in 0..2 {
        let r: Vec<Complex64> = (0..n)
            .map(|i| y[i] - (0..p).map(|j| col(j, i) * scale[j] * sol[j]).sum::<Complex64>())
            .collect();
        let d = cholesky_solve(&l, p, &project(&r));
        for (s, d) in sol.iter_mut().zip(d) {
            *s += d;
        }
    }
    let coeffs: Vec<Complex64> = sol.iter().zip(&scale).map(|(c, s)| c * s).collect();
    let model = GmpModel {
        order_k,
        memory_m,
        coeffs,
    };
    let yhat = gmp_apply_samples(&model, x);
    let err: f64 = yhat.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum();
    let ref_: f64 = y.iter().map(|s| s.norm_sqr()).sum();
    let nmse = if ref_ > 0.0 { err / ref_ } else { 0.0 };
    Ok(GmpFit { model, nmse })
}

/// Hermitian Cholesky; returns L (row-major lower) and the smallest pivot.
fn cholesky(a: &[Complex64], p: usize) -> Option<(Vec<Complex64>, f64)> {
    let mut l = vec![Complex64::new(0.0, 0.0); p * p];
    let mut min_pivot = f64::INFINITY;
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k].conj();
            }
            if i == j {
                let d = s.re;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                min_pivot = min_pivot.min(d);
                l[i * p + i] = Complex64::new(d.sqrt(), 0.0);
            } else {
                l[i * p + j] = s / l[j * p + j].re;
            }
        }
    }
    Some((l, min_pivot))
}

fn cholesky_solve(l: &[Complex64], p: usize, b: &[Complex64]) -> Vec<Complex64> {
    let mut z = vec![Complex64::new(0.0, 0.0); p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * z[k];
        }
        z[i] = s / l[i * p + i].re;
    }
    let mut x = vec![Complex64::new(0.0, 0.0); p];
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in i + 1..p {
            s -= l[k * p + i].conj() * x[k];
        }
        x[i] = s / l[i * p + i].re;
    }
    x
}

/// Least-squares complex gain `g` minimizing `|y - g x|`.
pub fn linear_gain(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    let num: Complex64 = x.iter().zip(y).map(|(a, b)| a.conj() * b).sum();
    let den: f64 = x.iter().map(|a| a.norm_sqr()).sum();
    if den > 0.0 {
        num / den
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// NMSE of `y` against `g x` with `g` the best linear gain.
pub fn nmse_vs_linear(x: &[Complex64], y: &[Complex64], g: Complex64) -> f64 {
    let err: f64 = x.iter().zip(y).map(|(a, b)| (b - g * a).norm_sqr()).sum();
    let ref_: f64 = x.iter().map(|a| (g * a).norm_sqr()).sum();
    err / ref_
}

/// Indirect-learning pre-distorter.
///
/// The post-inverse is fitted from the gain-normalized PA output back to the
/// PA input and then copied in front of the PA. A few passes refine it on
/// the pre-distorted drive.
pub fn make_predistorter(pa: &GmpModel, training: &IqStream, order_k: usize, memory_m: usize) -> Result<GmpModel> {
    let x = &training.samples;
    let g = linear_gain(x, &gmp_apply_samples(pa, x));
    if g.norm() == 0.0 {
        return Err(Error::Degenerate("PA has zero linear gain".into()));
    }
    let mut dpd = GmpModel::linear(Complex64::new(1.0, 0.0));
    for _ in 0..4 {
        let drive = gmp_apply_samples(&dpd, x);
        let out: Vec<Complex64> = gmp_apply_samples(pa, &drive).iter().map(|s| s / g).collect();
        dpd = fit_gmp_samples(&out, &drive, order_k, memory_m)?.model;
    }
    Ok(dpd)
}

/// Ground-truth PA used by scenarios, expressed for a drive normalized to
/// unit mean power at full scale.
///
/// Odd orders up to fifth (k in {0, 2, 4}) with three memory taps. The
/// third/fifth-order pair gives 1 dB compression of each carrier under a
/// full-scale two-carrier drive: `1 + 1.5 c3 + 2.5 c5 = 10^(-1/20)`.
pub fn reference_pa() -> GmpModel {
    let c5_ratio = -0.1;
    let target = 10f64.powf(-1.0 / 20.0);
    let c3 = (target - 1.0) / (1.5 + 2.5 * c5_ratio);
    let c5 = c5_ratio * c3;
    let mut g = GmpModel::zeros(5, 3);
    g.set(0, 0, Complex64::new(1.0, 0.0));
    g.set(0, 1, Complex64::from_polar(0.06, 0.4));
    g.set(0, 2, Complex64::from_polar(0.02, -0.9));
    g.set(2, 0, Complex64::from_polar(c3.abs(), PI + 0.15));
    g.set(2, 1, Complex64::from_polar(0.2 * c3.abs(), PI - 0.6));
    g.set(4, 0, Complex64::from_polar(c5.abs(), 0.2));
    g.set(4, 1, Complex64::from_polar(0.2 * c5.abs(), -0.3));
    g
}

// ---------------------------------------------------------------------------
// Transmit chain
// ---------------------------------------------------------------------------

/// Optional pre-distorter and PA acting on a drive normalized so that the
/// full-scale composite has unit mean power.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmitter {
    pub pa: Option<GmpModel>,
    pub dpd: Option<GmpModel>,
    /// Mean power (W) of the full-scale drive.
    pub full_scale_w: f64,
    /// Output calibration applied after the PA.
    pub output_gain: f64,
}

impl Transmitter {
    pub fn linear(full_scale_w: f64) -> Self {
        Self {
            pa: None,
            dpd: None,
            full_scale_w,
            output_gain: 1.0,
        }
    }

    /// Samples of history the models need before a block.
    pub fn history(&self) -> usize {
        let m = |g: &Option<GmpModel>| g.as_ref().map_or(1, |g| g.memory_m);
        m(&self.pa) + m(&self.dpd) - 2
    }

    /// Amplify `x`; the first [`history`](Self::history) samples only warm
    /// up the memory taps and are dropped from the output.
    pub fn amplify(&self, x: &[Complex64]) -> Vec<Complex64> {
        let h = self.history().min(x.len());
        if self.pa.is_none() && self.dpd.is_none() {
            return x[h..].to_vec();
        }
        let s = self.full_scale_w.sqrt();
        let out = s * self.output_gain;
        let mut v: Vec<Complex64> = x.iter().map(|c| c / s).collect();
        if let Some(d) = &self.dpd {
            v = gmp_apply_samples(d, &v);
        }
        if let Some(p) = &self.pa {
            v = gmp_apply_samples(p, &v);
        }
        v[h..].iter().map(|c| c * out).collect()
    }
}
