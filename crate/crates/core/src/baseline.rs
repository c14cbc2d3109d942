//! Collision-recovery baseline.
//!
//! A simplified IQ-cluster decoder in the style of parallel-decoding
//! readers: overlapping OOK tags produce up to 2^n constellation points,
//! one per combination of tag states. The decoder clusters half-bit
//! averages, recovers one generator vector per tag, and decodes each tag's
//! FM0 stream from its state sequence. It is deliberately simple
//! (k-means plus a subset decomposition) and serves only as the comparison
//! point for the band-parallel reader.

use num_complex::Complex64;

use crate::band::IqStream;
use crate::error::{Error, Result};
use crate::phy::{self, Bits};
use crate::reader;
use crate::tag::{self, UplinkConfig};

/// Processing time of the cluster decoder for 2..=5 collided tags.
pub const CLUSTER_DECODE_LATENCY_S: [f64; 4] = [50.6e-6, 97.2e-6, 189.0e-6, 275.9e-6];
/// Minimum center separation in units of the within-cluster deviation.
pub const SEPARATION_SIGMAS: f64 = 3.0;
/// Fraction of each half-bit averaged for its steady-state value.
pub const STEADY_FRACTION: f64 = 0.6;
const KMEANS_ITERS: usize = 50;
const EXPLAINED_SIGMAS: f64 = 4.5;
/// Share of steady samples a tag-count hypothesis must explain.
const EXPLAINED_FRACTION: f64 = 0.97;
/// Level tolerance as a fraction of the all-low to all-high distance.
const RELATIVE_TOLERANCE: f64 = 0.1;
/// Sample-to-sample change counted as a transition.
const STEP_SIGMAS: f64 = 4.5;
const MAX_ESTIMATED_TAGS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub centers: Vec<Complex64>,
    /// Cluster index of every half-bit.
    pub assignment: Vec<usize>,
    /// `transitions[a][b]` counts moves from cluster a to cluster b between
    /// consecutive half-bits.
    pub transitions: Vec<Vec<u32>>,
}

impl ClusterSet {
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.centers.len() {
            for j in i + 1..self.centers.len() {
                best = best.min((self.centers[i] - self.centers[j]).norm());
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClusterOutcome {
    /// One 16-bit candidate per tag.
    Decoded(Vec<Bits>),
    Failure,
}

/// Processing delay of the cluster decoder for `n_tags` collided replies.
pub fn decode_latency_model(n_tags: usize) -> Result<f64> {
    match n_tags {
        2..=5 => Ok(CLUSTER_DECODE_LATENCY_S[n_tags - 2]),
        _ => Err(Error::OutOfRange {
            index: n_tags,
            len: 6,
        }),
    }
}

/// Deadline for the Ack after an RN16 ends.
pub fn ack_deadline_s(blf_hz: f64) -> f64 {
    20.0 / blf_hz
}

pub fn misses_deadline(n_tags: usize, blf_hz: f64) -> Result<bool> {
    Ok(decode_latency_model(n_tags)? > ack_deadline_s(blf_hz))
}

/// Steady-state average of each half-bit, starting at sample `start`.
pub fn half_bit_means(x: &[Complex64], start: f64, half: f64, n_halves: usize) -> Vec<Complex64> {
    let trim = half * (1.0 - STEADY_FRACTION) / 2.0;
    (0..n_halves)
        .map(|k| {
            let a = (start + k as f64 * half + trim).round().max(0.0) as usize;
            let b = (start + (k + 1) as f64 * half - trim).round().max(0.0) as usize;
            let a = a.min(x.len());
            let b = b.max(a + 1).min(x.len());
            if a >= b {
                return Complex64::new(0.0, 0.0);
            }
            x[a..b].iter().sum::<Complex64>() / (b - a) as f64
        })
        .collect()
}

fn nearest(c: &[Complex64], p: Complex64) -> usize {
    let mut best = 0;
    for (i, v) in c.iter().enumerate() {
        if (v - p).norm_sqr() < (c[best] - p).norm_sqr() {
            best = i;
        }
    }
    best
}

/// Lloyd iterations from the given seeds, then farthest-point growth up to
/// `k` centers.
pub fn kmeans(points: &[Complex64], seeds: &[Complex64], k: usize) -> ClusterSet {
    let mut centers: Vec<Complex64> = seeds.iter().take(k).copied().collect();
    if centers.is_empty() && !points.is_empty() {
        centers.push(points[0]);
    }
    while centers.len() < k && centers.len() < points.len() {
        let far = points
            .iter()
            .copied()
            .max_by(|a, b| {
                let da = (centers[nearest(&centers, *a)] - a).norm();
                let db = (centers[nearest(&centers, *b)] - b).norm();
                da.total_cmp(&db)
            })
            .unwrap();
        centers.push(far);
    }
    let mut assignment = vec![0; points.len()];
    for _ in 0..KMEANS_ITERS {
        let next: Vec<usize> = points.iter().map(|p| nearest(&centers, *p)).collect();
        let mut sums = vec![(Complex64::new(0.0, 0.0), 0usize); centers.len()];
        for (p, &a) in points.iter().zip(&next) {
            sums[a].0 += p;
            sums[a].1 += 1;
        }
        for (c, (s, n)) in centers.iter_mut().zip(&sums) {
            if *n > 0 {
                *c = s / *n as f64;
            }
        }
        let done = next == assignment;
        assignment = next;
        if done {
            break;
        }
    }
    // Empty clusters are dropped and indices compacted.
    let mut used: Vec<usize> = assignment.clone();
    used.sort_unstable();
    used.dedup();
    let remap = |a: usize| used.iter().position(|&u| u == a).unwrap();
    let centers: Vec<Complex64> = used.iter().map(|&u| centers[u]).collect();
    let assignment: Vec<usize> = assignment.iter().map(|&a| remap(a)).collect();
    let mut transitions = vec![vec![0u32; centers.len()]; centers.len()];
    for w in assignment.windows(2) {
        transitions[w[0]][w[1]] += 1;
    }
    ClusterSet {
        centers,
        assignment,
        transitions,
    }
}

/// Express every center as `base + sum of a subset of generators`, with
/// the generators summing to `top - base`. Generators are searched among
/// the observed centers; the best-fitting consistent choice wins.
/// Returns the subset mask of each center.
fn decompose(centers: &[Complex64], base: usize, top: usize, n: usize, tol: f64) -> Option<Vec<u32>> {
    let b = centers[base];
    let total = centers[top] - b;
    let cand: Vec<usize> = (0..centers.len()).filter(|&i| i != base && (i != top || n == 1)).collect();
    let mut best: Option<(f64, Vec<u32>)> = None;
    let mut pick = Vec::with_capacity(n);
    search(centers, b, total, &cand, 0, n, tol, &mut pick, &mut best);
    best.map(|(_, m)| m)
}

#[allow(clippy::too_many_arguments)]
fn search(
    centers: &[Complex64],
    b: Complex64,
    total: Complex64,
    cand: &[usize],
    from: usize,
    n: usize,
    tol: f64,
    pick: &mut Vec<usize>,
    best: &mut Option<(f64, Vec<u32>)>,
) {
    if pick.len() == n {
        let gens: Vec<Complex64> = pick.iter().map(|&i| centers[i] - b).collect();
        if (gens.iter().sum::<Complex64>() - total).norm() > tol {
            return;
        }
        let sums: Vec<Complex64> = (0..1u32 << n)
            .map(|m| (0..n).filter(|g| m >> g & 1 == 1).map(|g| gens[g]).sum())
            .collect();
        let mut worst = 0.0f64;
        let mut masks = Vec::with_capacity(centers.len());
        for c in centers {
            let d = c - b;
            let (m, err) = sums
                .iter()
                .enumerate()
                .map(|(m, s)| (m as u32, (s - d).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            worst = worst.max(err);
            masks.push(m);
        }
        if worst <= tol && best.as_ref().is_none_or(|(w, _)| worst < *w) {
            *best = Some((worst, masks));
        }
        return;
    }
    for k in from..cand.len() {
        pick.push(cand[k]);
        search(centers, b, total, cand, k + 1, n, tol, pick, best);
        pick.pop();
    }
}

/// Decimated stream and preamble position. The constellation keeps its
/// static offset; a moving DC estimate would smear the clusters.
fn locate(x: &IqStream, cfg: &UplinkConfig) -> Option<(IqStream, reader::PreambleHit)> {
    let d = reader::demod_decimation(x.sample_rate_hz, cfg.blf_hz);
    let xd = reader::boxcar_decimate(x, d);
    let dc_free = reader::remove_dc(&xd, reader::DC_WINDOW_BITS / cfg.blf_hz);
    let hit = reader::detect_preamble(&dc_free, cfg)?;
    Some((xd, hit))
}

/// Decimated samples of one reply window around a detected preamble.
struct Reply {
    xd: IqStream,
    start: usize,
    end: usize,
    low: Complex64,
    high: Complex64,
    /// Noise deviation of one decimated sample.
    sigma: f64,
}

impl Reply {
    fn new(x: &IqStream, cfg: &UplinkConfig, noise_psd_w_per_hz: f64) -> Option<Self> {
        let d = reader::demod_decimation(x.sample_rate_hz, cfg.blf_hz);
        let (xd, hit) = locate(x, cfg)?;
        let sps = xd.sample_rate_hz / cfg.blf_hz;
        let start = hit.offset_samples;
        // Stop early enough that the fastest tag is still inside its packet.
        let span = (phy::FM0_PREAMBLE_BITS + 16) as f64 * sps * (1.0 - tag::MAX_CLOCK_DRIFT);
        let end = (start + span as usize).min(xd.len());
        // The first preamble halves are common to every tag and have not
        // slipped yet.
        let pre = &phy::FM0_PREAMBLE_HALVES[..6];
        let means = half_bit_means(&xd.samples, start as f64, sps / 2.0, pre.len());
        let avg = |sign: f64| {
            let v: Vec<Complex64> = pre.iter().zip(&means).filter(|(p, _)| **p == sign).map(|(_, m)| *m).collect();
            v.iter().sum::<Complex64>() / v.len() as f64
        };
        Some(Self {
            sigma: (noise_psd_w_per_hz * x.sample_rate_hz / d as f64).sqrt(),
            low: avg(-1.0),
            high: avg(1.0),
            xd,
            start,
            end,
        })
    }

    fn span(&self) -> f64 {
        (self.high - self.low).norm()
    }

    /// Samples not adjacent to a level change.
    fn steady_points(&self) -> Vec<Complex64> {
        let x = &self.xd.samples;
        let thr = (STEP_SIGMAS * self.sigma).max(RELATIVE_TOLERANCE * self.span());
        (self.start.max(1)..self.end.min(x.len().saturating_sub(1)))
            .filter(|&i| (x[i] - x[i - 1]).norm() <= thr && (x[i + 1] - x[i]).norm() <= thr)
            .map(|i| x[i])
            .collect()
    }
}

/// Decode `n_tags` overlapping RN16 replies.
///
/// `noise_psd_w_per_hz` is the complex baseband noise density at the input.
pub fn cluster_decode(x: &IqStream, n_tags: usize, cfg: &UplinkConfig, noise_psd_w_per_hz: f64) -> ClusterOutcome {
    if n_tags == 0 {
        return ClusterOutcome::Failure;
    }
    if n_tags == 1 {
        let r = reader::demod_packet(x, cfg, reader::Expected::Rn16);
        return match (r.kind, r.bits) {
            (reader::EventKind::Rn16, Some(b)) => ClusterOutcome::Decoded(vec![b]),
            _ => ClusterOutcome::Failure,
        };
    }
    let Some(reply) = Reply::new(x, cfg, noise_psd_w_per_hz) else {
        return ClusterOutcome::Failure;
    };
    let points = reply.steady_points();
    let set = kmeans(&points, &[reply.low, reply.high], 1 << n_tags);
    if set.centers.len() < 2 || set.min_separation() < SEPARATION_SIGMAS * reply.sigma {
        return ClusterOutcome::Failure;
    }
    let base = nearest(&set.centers, reply.low);
    let top = nearest(&set.centers, reply.high);
    let tol = (SEPARATION_SIGMAS * reply.sigma).max(0.25 * set.min_separation());
    let Some(masks) = decompose(&set.centers, base, top, n_tags, tol) else {
        return ClusterOutcome::Failure;
    };
    let n_bits = 16;
    let n_halves = 2 * (phy::FM0_PREAMBLE_BITS + n_bits);
    let labels: Vec<usize> = reply.xd.samples.iter().map(|p| nearest(&set.centers, *p)).collect();
    let decoded = (0..n_tags)
        .map(|t| {
            let states: Vec<Complex64> = labels
                .iter()
                .map(|&c| Complex64::new(if masks[c] >> t & 1 == 1 { 1.0 } else { -1.0 }, 0.0))
                .collect();
            let g = reader::gardner_recover(
                &reply.xd.with_samples(states),
                cfg,
                reply.start as f64,
                Complex64::new(1.0, 0.0),
                n_halves,
                2.0 * tag::MAX_CLOCK_DRIFT,
            );
            reader::fm0_slice(&g.soft, n_bits)
        })
        .collect();
    ClusterOutcome::Decoded(decoded)
}

/// Number of collided tags implied by a reply window: the smallest n whose
/// 2^n-center clustering leaves nearly every steady sample close to its
/// center. Zero when no preamble is found.
pub fn estimate_tag_count(x: &IqStream, cfg: &UplinkConfig, noise_psd_w_per_hz: f64) -> usize {
    let Some(reply) = Reply::new(x, cfg, noise_psd_w_per_hz) else {
        return 0;
    };
    let points = reply.steady_points();
    if points.is_empty() {
        return 0;
    }
    let tol = (EXPLAINED_SIGMAS * reply.sigma).max(RELATIVE_TOLERANCE * reply.span());
    for n in 1..MAX_ESTIMATED_TAGS {
        let set = kmeans(&points, &[reply.low, reply.high], 1 << n);
        let inside = points
            .iter()
            .zip(&set.assignment)
            .filter(|(p, &a)| (*p - set.centers[a]).norm() <= tol)
            .count();
        if inside as f64 >= EXPLAINED_FRACTION * points.len() as f64 {
            return n;
        }
    }
    MAX_ESTIMATED_TAGS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_table() {
        assert_eq!(decode_latency_model(2).unwrap(), 50.6e-6);
        assert_eq!(decode_latency_model(5).unwrap(), 275.9e-6);
        assert!(decode_latency_model(1).is_err());
        assert!(decode_latency_model(6).is_err());
        assert!(misses_deadline(3, 320e3).unwrap());
        assert!(!misses_deadline(2, 320e3).unwrap());
    }

    #[test]
    fn kmeans_separates_four_points() {
        let pts: Vec<Complex64> = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
            .iter()
            .cycle()
            .take(40)
            .map(|&(a, b)| Complex64::new(a, b))
            .collect();
        let s = kmeans(&pts, &[Complex64::new(0.0, 0.0)], 4);
        assert_eq!(s.centers.len(), 4);
        assert!((s.min_separation() - 1.0).abs() < 1e-12);
        let total: u32 = s.transitions.iter().flatten().sum();
        assert_eq!(total as usize, pts.len() - 1);
    }
}
