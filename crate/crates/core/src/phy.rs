//! EPC Gen-2 physical layer: PIE downlink, FM0 uplink, CRC-5/CRC-16 and
//! the frames used by the inventory loop.
//!
//! Bits are `u8` values 0/1, most significant first.

use std::fmt;

use crate::error::{Error, Result};

pub type Bits = Vec<u8>;

/// Legal backscatter link frequencies.
pub const BLFS_HZ: [f64; 5] = [40e3, 80e3, 160e3, 320e3, 640e3];
/// Default interval tolerance for PIE decoding.
pub const PIE_TOLERANCE: f64 = 0.12;
pub const EPC_BITS: usize = 96;
/// Protocol-control word announcing a 96-bit EPC (length field = 6 words).
pub const PC_WORD: u16 = 0x3000;
/// Remainder left in the CRC-16 register after a valid frame.
pub const CRC16_RESIDUE: u16 = 0x1D0F;

pub fn bits_from_u64(value: u64, n: usize) -> Bits {
    (0..n)
        .rev()
        .map(|i| if i < 64 { ((value >> i) & 1) as u8 } else { 0 })
        .collect()
}

pub fn bits_to_u64(bits: &[u8]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | (b & 1) as u64)
}

pub fn bits_to_hex(bits: &[u8]) -> String {
    bits.chunks(4)
        .map(|c| {
            let mut v = bits_to_u64(c) as u32;
            v <<= 4 - c.len();
            char::from_digit(v, 16).unwrap()
        })
        .collect()
}

pub fn hex_to_bits(hex: &str) -> Result<Bits> {
    let mut out = Vec::with_capacity(hex.len() * 4);
    for c in hex.chars() {
        let v = c
            .to_digit(16)
            .ok_or_else(|| Error::Parse(format!("bad hex digit {c:?}")))?;
        out.extend(bits_from_u64(v as u64, 4));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// CRCs
// ---------------------------------------------------------------------------

fn crc5_register(bits: &[u8]) -> u8 {
    let mut reg: u8 = 0b01001;
    for &b in bits {
        let fb = (b & 1) ^ ((reg >> 4) & 1);
        reg = (reg << 1) & 0x1F;
        if fb == 1 {
            reg ^= 0b01001;
        }
    }
    reg
}

/// CRC-5, polynomial x^5 + x^3 + 1, preset 01001.
pub fn crc5(bits: &[u8]) -> Bits {
    bits_from_u64(crc5_register(bits) as u64, 5)
}

/// True when `bits` ends in a valid CRC-5.
pub fn crc5_check(bits: &[u8]) -> bool {
    bits.len() >= 5 && crc5_register(bits) == 0
}

fn crc16_register(bits: &[u8]) -> u16 {
    let mut reg: u16 = 0xFFFF;
    for &b in bits {
        let fb = (b as u16 & 1) ^ (reg >> 15);
        reg <<= 1;
        if fb == 1 {
            reg ^= 0x1021;
        }
    }
    reg
}

/// CRC-16/CCITT, preset 0xFFFF, ones-complemented as transmitted.
pub fn crc16(bits: &[u8]) -> Bits {
    bits_from_u64(!crc16_register(bits) as u64, 16)
}

/// True when `bits` ends in a valid transmitted CRC-16.
pub fn crc16_check(bits: &[u8]) -> bool {
    bits.len() >= 16 && crc16_register(bits) == CRC16_RESIDUE
}

// ---------------------------------------------------------------------------
// PIE
// ---------------------------------------------------------------------------

/// Downlink timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PieTiming {
    pub tari_s: f64,
    pub data1_s: f64,
    /// Low-pulse width.
    pub pw_s: f64,
    pub rtcal_s: f64,
    pub trcal_s: f64,
    pub delimiter_s: f64,
}

impl PieTiming {
    pub fn new(tari_s: f64, data1_frac: f64, pw_frac: f64, trcal_s: f64) -> Self {
        let data1_s = data1_frac * tari_s;
        Self {
            tari_s,
            data1_s,
            pw_s: pw_frac * tari_s,
            rtcal_s: tari_s + data1_s,
            trcal_s,
            delimiter_s: 12.5e-6,
        }
    }

    /// Default timing for a link frequency: data1 = 2 tari, pw = tari/2.
    /// Tari 12.5 us with divide ratio 8 up to 160 kHz; above that tari
    /// shrinks to 6.25 us, and 640 kHz uses divide ratio 64/3 so that
    /// TRcal stays at least 1.1 RTcal.
    pub fn for_blf(blf_hz: f64) -> Self {
        let (tari, dr) = if blf_hz <= 160e3 + 1.0 {
            (12.5e-6, 8.0)
        } else if blf_hz <= 320e3 + 1.0 {
            (6.25e-6, 8.0)
        } else {
            (6.25e-6, 64.0 / 3.0)
        };
        Self::new(tari, 2.0, 0.5, dr / blf_hz)
    }

    /// Divide ratio implied by TRcal for a link frequency.
    pub fn divide_ratio(&self, blf_hz: f64) -> f64 {
        self.trcal_s * blf_hz
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.tari_s;
        let ok = (6.25e-6 - 1e-12..=25e-6 + 1e-12).contains(&t)
            && self.data1_s >= 1.5 * t - 1e-12
            && self.data1_s <= 2.0 * t + 1e-12
            && self.pw_s > 0.0
            && self.pw_s <= 0.525 * t + 1e-12
            && (self.rtcal_s - (t + self.data1_s)).abs() < 1e-12
            && self.trcal_s >= self.rtcal_s
            && self.delimiter_s > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("illegal PIE timing {self:?}")))
        }
    }

    /// Duration of a command with full preamble.
    pub fn query_duration_s(&self, bits: &[u8]) -> f64 {
        self.frame_sync_duration_s(bits) + self.trcal_s
    }

    /// Duration of a command with frame-sync only.
    pub fn frame_sync_duration_s(&self, bits: &[u8]) -> f64 {
        self.delimiter_s + self.tari_s + self.rtcal_s + self.payload_duration_s(bits)
    }

    pub fn payload_duration_s(&self, bits: &[u8]) -> f64 {
        bits.iter()
            .map(|&b| if b == 1 { self.data1_s } else { self.tari_s })
            .sum()
    }
}

/// Real envelope with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
}

fn push_level(out: &mut Vec<f64>, t_acc: &mut f64, dur: f64, fs: f64, level: f64) {
    // Sample boundaries are placed at rounded absolute times so durations
    // accumulate without drift.
    let start = (*t_acc * fs).round() as usize;
    *t_acc += dur;
    let end = (*t_acc * fs).round() as usize;
    out.extend(std::iter::repeat(level).take(end.saturating_sub(start)));
}

fn pie_symbols(out: &mut Vec<f64>, t: &mut f64, durations: &[f64], pw: f64, fs: f64) {
    for &d in durations {
        push_level(out, t, d - pw, fs, 1.0);
        push_level(out, t, pw, fs, 0.0);
    }
}

/// PIE envelope with full preamble (delimiter, data-0, RTcal, TRcal).
///
/// Every symbol is a high segment closed by a low pulse of width `pw`; the
/// carrier returns high right after the returned samples.
pub fn pie_encode(bits: &[u8], timing: &PieTiming, sample_rate_hz: f64) -> Envelope {
    encode_inner(bits, timing, sample_rate_hz, true)
}

/// PIE envelope with frame-sync (no TRcal), used for all non-Query commands.
pub fn pie_encode_frame_sync(bits: &[u8], timing: &PieTiming, sample_rate_hz: f64) -> Envelope {
    encode_inner(bits, timing, sample_rate_hz, false)
}

fn encode_inner(bits: &[u8], timing: &PieTiming, fs: f64, with_trcal: bool) -> Envelope {
    let mut out = Vec::new();
    let mut t = 0.0;
    push_level(&mut out, &mut t, timing.delimiter_s, fs, 0.0);
    let mut durs = vec![timing.tari_s, timing.rtcal_s];
    if with_trcal {
        durs.push(timing.trcal_s);
    }
    durs.extend(
        bits.iter()
            .map(|&b| if b == 1 { timing.data1_s } else { timing.tari_s }),
    );
    pie_symbols(&mut out, &mut t, &durs, timing.pw_s, fs);
    Envelope {
        samples: out,
        sample_rate_hz: fs,
    }
}

/// Result of decoding a downlink envelope.
#[derive(Debug, Clone, PartialEq)]
pub enum PieDecoded {
    Command {
        bits: Bits,
        /// Measured TRcal when a full preamble was present.
        trcal_s: Option<f64>,
    },
    NoCommand,
}

/// Decode a PIE envelope with the tag's own timebase.
///
/// The threshold sits at half the envelope maximum. The decoder requires a
/// delimiter, a data-0, an RTcal and optionally a TRcal, then classifies
/// each falling-edge interval as data-0 or data-1. Any interval or pulse
/// width outside `tolerance` of a legal value yields `NoCommand`.
/// `clock_scale` is the tag's oscillator rate relative to nominal.
pub fn pie_decode(env: &Envelope, timing: &PieTiming, tolerance: f64) -> PieDecoded {
    pie_decode_clocked(env, timing, tolerance, 1.0)
}

pub fn pie_decode_clocked(env: &Envelope, timing: &PieTiming, tolerance: f64, clock_scale: f64) -> PieDecoded {
    let x = &env.samples;
    if x.is_empty() {
        return PieDecoded::NoCommand;
    }
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return PieDecoded::NoCommand;
    }
    let thr = 0.5 * max;
    // Low runs as (start, end) sample indices.
    let mut pulses: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &v) in x.iter().enumerate() {
        let low = v < thr;
        match (low, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                pulses.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        pulses.push((s, x.len()));
    }
    // Durations as measured by the tag clock.
    let dt = clock_scale / env.sample_rate_hz;
    let dur = |a: usize, b: usize| (b - a) as f64 * dt;
    let within = |v: f64, nominal: f64| (v - nominal).abs() <= tolerance * nominal;

    if pulses.len() < 3 {
        return PieDecoded::NoCommand;
    }
    let (d0, d1) = pulses[0];
    if !within(dur(d0, d1), timing.delimiter_s) {
        return PieDecoded::NoCommand;
    }
    let pw_lo = 0.265 * timing.tari_s * (1.0 - tolerance);
    let pw_hi = 0.525 * timing.tari_s * (1.0 + tolerance);
    for &(a, b) in &pulses[1..] {
        let w = dur(a, b);
        if w < pw_lo || w > pw_hi {
            return PieDecoded::NoCommand;
        }
    }
    // data-0 after the delimiter: rising edge to next falling edge plus pw.
    let first_high = dur(d1, pulses[1].0);
    if !within(first_high + timing.pw_s, timing.tari_s) {
        return PieDecoded::NoCommand;
    }
    let falls: Vec<usize> = pulses[1..].iter().map(|p| p.0).collect();
    let rtcal = dur(falls[0], falls[1]);
    if !within(rtcal, timing.rtcal_s) {
        return PieDecoded::NoCommand;
    }
    let mut idx = 2;
    let mut trcal = None;
    if falls.len() > 2 {
        let next = dur(falls[1], falls[2]);
        if next > 1.05 * rtcal {
            if !within(next, timing.trcal_s) {
                return PieDecoded::NoCommand;
            }
            trcal = Some(next);
            idx = 3;
        }
    }
    let mut bits = Vec::with_capacity(falls.len().saturating_sub(idx));
    for w in falls[idx - 1..].windows(2) {
        let iv = dur(w[0], w[1]);
        if within(iv, timing.tari_s) {
            bits.push(0);
        } else if within(iv, timing.data1_s) {
            bits.push(1);
        } else {
            return PieDecoded::NoCommand;
        }
    }
    PieDecoded::Command { bits, trcal_s: trcal }
}

// ---------------------------------------------------------------------------
// FM0
// ---------------------------------------------------------------------------

/// FM0 preamble in half-bit levels (TRext = 0): 1 0 1 0 v 1.
pub const FM0_PREAMBLE_HALVES: [f64; 12] = [1., 1., -1., 1., -1., -1., 1., -1., -1., -1., 1., 1.];
pub const FM0_PREAMBLE_BITS: usize = 6;

/// Half-bit levels of preamble + payload + dummy-1.
pub fn fm0_halves(bits: &[u8]) -> Vec<f64> {
    let mut out: Vec<f64> = FM0_PREAMBLE_HALVES.to_vec();
    let mut level = *out.last().unwrap();
    for &b in bits.iter().chain(std::iter::once(&1u8)) {
        level = -level;
        out.push(level);
        if b == 0 {
            level = -level;
        }
        out.push(level);
    }
    out
}

/// Number of bit periods an FM0 packet of `n_bits` payload occupies.
pub fn fm0_packet_bits(n_bits: usize) -> usize {
    FM0_PREAMBLE_BITS + n_bits + 1
}

pub fn fm0_packet_duration_s(n_bits: usize, blf_hz: f64) -> f64 {
    fm0_packet_bits(n_bits) as f64 / blf_hz
}

/// FM0 baseband levels (+/-1) sampled at `sample_rate_hz`.
pub fn fm0_encode(bits: &[u8], blf_hz: f64, sample_rate_hz: f64) -> Vec<f64> {
    fm0_encode_at(bits, blf_hz, sample_rate_hz, 0.0)
}

/// FM0 levels with the first edge `offset_s` into the first sample period.
pub fn fm0_encode_at(bits: &[u8], blf_hz: f64, sample_rate_hz: f64, offset_s: f64) -> Vec<f64> {
    let halves = fm0_halves(bits);
    let half = 0.5 / blf_hz;
    let n = ((halves.len() as f64 * half - offset_s) * sample_rate_hz).ceil().max(0.0) as usize;
    (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) / sample_rate_hz + offset_s;
            let k = ((t / half).floor() as usize).min(halves.len() - 1);
            halves[k]
        })
        .collect()
}

/// Decode an aligned FM0 packet (sample 0 = preamble start) by integrating
/// each half-bit and comparing halves.
pub fn fm0_decode(levels: &[f64], n_bits: usize, blf_hz: f64, sample_rate_hz: f64) -> Bits {
    let half = 0.5 / blf_hz * sample_rate_hz;
    let integrate = |k: usize| -> f64 {
        let a = (k as f64 * half).round() as usize;
        let b = (((k + 1) as f64) * half).round() as usize;
        levels[a.min(levels.len())..b.min(levels.len())].iter().sum()
    };
    (0..n_bits)
        .map(|i| {
            let k = 2 * (FM0_PREAMBLE_BITS + i);
            let (a, b) = (integrate(k), integrate(k + 1));
            if a * b < 0.0 {
                0
            } else {
                1
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Query,
    QueryRep,
    Ack,
    Nak,
    Rn16Reply,
    EpcReply,
}

/// Query header fields other than Q.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SessionFlags {
    /// Divide ratio bit: false = 8, true = 64/3.
    pub dr: bool,
    /// Miller index (0 = FM0).
    pub m: u8,
    pub trext: bool,
    pub sel: u8,
    pub session: u8,
    pub target: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub payload_bits: Bits,
    pub crc_bits: Bits,
}

const QUERY_CMD: [u8; 4] = [1, 0, 0, 0];
const QUERYREP_CMD: [u8; 2] = [0, 0];
const ACK_CMD: [u8; 2] = [0, 1];
const NAK_CMD: [u8; 8] = [1, 1, 0, 0, 0, 0, 0, 0];

pub fn frame_query(q: u8, flags: SessionFlags) -> Result<Frame> {
    if q > 15 {
        return Err(Error::InvalidParameter(format!("q = {q} outside 0..=15")));
    }
    let mut p: Bits = QUERY_CMD.to_vec();
    p.push(flags.dr as u8);
    p.extend(bits_from_u64(flags.m as u64 & 3, 2));
    p.push(flags.trext as u8);
    p.extend(bits_from_u64(flags.sel as u64 & 3, 2));
    p.extend(bits_from_u64(flags.session as u64 & 3, 2));
    p.push(flags.target as u8);
    p.extend(bits_from_u64(q as u64, 4));
    let crc = crc5(&p);
    Ok(Frame {
        kind: FrameKind::Query,
        payload_bits: p,
        crc_bits: crc,
    })
}

pub fn frame_query_rep() -> Frame {
    frame_query_rep_session(0)
}

pub fn frame_query_rep_session(session: u8) -> Frame {
    let mut p = QUERYREP_CMD.to_vec();
    p.extend(bits_from_u64(session as u64 & 3, 2));
    Frame {
        kind: FrameKind::QueryRep,
        payload_bits: p,
        crc_bits: vec![],
    }
}

pub fn frame_ack(rn16: u16) -> Frame {
    let mut p = ACK_CMD.to_vec();
    p.extend(bits_from_u64(rn16 as u64, 16));
    Frame {
        kind: FrameKind::Ack,
        payload_bits: p,
        crc_bits: vec![],
    }
}

pub fn frame_nak() -> Frame {
    Frame {
        kind: FrameKind::Nak,
        payload_bits: NAK_CMD.to_vec(),
        crc_bits: vec![],
    }
}

pub fn frame_rn16(rn16: u16) -> Frame {
    Frame {
        kind: FrameKind::Rn16Reply,
        payload_bits: bits_from_u64(rn16 as u64, 16),
        crc_bits: vec![],
    }
}

/// EPC reply: PC word, EPC, CRC-16 over both.
pub fn frame_epc(epc: &[u8]) -> Result<Frame> {
    if epc.len() != EPC_BITS {
        return Err(Error::InvalidParameter(format!("EPC must be {EPC_BITS} bits")));
    }
    let mut p = bits_from_u64(PC_WORD as u64, 16);
    p.extend_from_slice(epc);
    let crc = crc16(&p);
    Ok(Frame {
        kind: FrameKind::EpcReply,
        payload_bits: p,
        crc_bits: crc,
    })
}

impl Frame {
    /// All transmitted bits.
    pub fn bits(&self) -> Bits {
        let mut b = self.payload_bits.clone();
        b.extend_from_slice(&self.crc_bits);
        b
    }

    pub fn len_bits(&self) -> usize {
        self.payload_bits.len() + self.crc_bits.len()
    }

    /// Q field of a Query.
    pub fn q(&self) -> Option<u8> {
        (self.kind == FrameKind::Query).then(|| bits_to_u64(&self.payload_bits[13..17]) as u8)
    }

    /// RN16 carried by an Ack or an Rn16Reply.
    pub fn rn16(&self) -> Option<u16> {
        match self.kind {
            FrameKind::Ack => Some(bits_to_u64(&self.payload_bits[2..18]) as u16),
            FrameKind::Rn16Reply => Some(bits_to_u64(&self.payload_bits) as u16),
            _ => None,
        }
    }

    /// EPC bits of an EpcReply.
    pub fn epc(&self) -> Option<&[u8]> {
        (self.kind == FrameKind::EpcReply).then(|| &self.payload_bits[16..16 + EPC_BITS])
    }

    /// Whether the carried CRC (if any) verifies.
    pub fn crc_ok(&self) -> bool {
        match self.kind {
            FrameKind::Query => crc5_check(&self.bits()),
            FrameKind::EpcReply => crc16_check(&self.bits()),
            _ => true,
        }
    }

    pub fn is_downlink(&self) -> bool {
        matches!(
            self.kind,
            FrameKind::Query | FrameKind::QueryRep | FrameKind::Ack | FrameKind::Nak
        )
    }

    /// Identify a decoded downlink bit string. CRC is not checked here.
    pub fn parse_downlink(bits: &[u8]) -> Option<Frame> {
        match bits.len() {
            22 if bits[..4] == QUERY_CMD => Some(Frame {
                kind: FrameKind::Query,
                payload_bits: bits[..17].to_vec(),
                crc_bits: bits[17..].to_vec(),
            }),
            4 if bits[..2] == QUERYREP_CMD => Some(Frame {
                kind: FrameKind::QueryRep,
                payload_bits: bits.to_vec(),
                crc_bits: vec![],
            }),
            18 if bits[..2] == ACK_CMD => Some(Frame {
                kind: FrameKind::Ack,
                payload_bits: bits.to_vec(),
                crc_bits: vec![],
            }),
            8 if bits == NAK_CMD => Some(frame_nak()),
            _ => None,
        }
    }

    /// Interpret uplink bits as an RN16 or an EPC reply.
    pub fn parse_uplink(bits: &[u8]) -> Option<Frame> {
        match bits.len() {
            16 => Some(Frame {
                kind: FrameKind::Rn16Reply,
                payload_bits: bits.to_vec(),
                crc_bits: vec![],
            }),
            128 => Some(Frame {
                kind: FrameKind::EpcReply,
                payload_bits: bits[..112].to_vec(),
                crc_bits: bits[112..].to_vec(),
            }),
            _ => None,
        }
    }

    /// Parse the canonical text form produced by `Display`.
    pub fn parse_text(s: &str) -> Result<Frame> {
        let mut it = s.split_whitespace();
        let head = it.next().ok_or_else(|| Error::Parse("empty frame".into()))?;
        let mut fields = std::collections::BTreeMap::new();
        for kv in it {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad field {kv:?}")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Parse(format!("missing field {k}")))
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?
                .parse::<u64>()
                .map_err(|e| Error::Parse(format!("{k}: {e}")))
        };
        let hex16 = |k: &str| -> Result<u16> {
            u16::from_str_radix(&get(k)?, 16).map_err(|e| Error::Parse(format!("{k}: {e}")))
        };
        let bitstr = |k: &str| -> Result<Bits> {
            get(k)?
                .chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    _ => Err(Error::Parse(format!("{k}: not a bit string"))),
                })
                .collect()
        };
        match head {
            "QUERY" => {
                let flags = SessionFlags {
                    dr: num("dr")? == 1,
                    m: num("m")? as u8,
                    trext: num("trext")? == 1,
                    sel: num("sel")? as u8,
                    session: num("session")? as u8,
                    target: num("target")? == 1,
                };
                let mut f = frame_query(num("q")? as u8, flags)?;
                f.crc_bits = bitstr("crc5")?;
                Ok(f)
            }
            "QUERYREP" => Ok(frame_query_rep_session(num("session")? as u8)),
            "ACK" => Ok(frame_ack(hex16("rn16")?)),
            "NAK" => Ok(frame_nak()),
            "RN16" => Ok(frame_rn16(hex16("rn16")?)),
            "EPC" => {
                let mut p = bits_from_u64(hex16("pc")? as u64, 16);
                p.extend(hex_to_bits(&get("epc")?)?);
                if p.len() != 16 + EPC_BITS {
                    return Err(Error::Parse("EPC must be 24 hex digits".into()));
                }
                Ok(Frame {
                    kind: FrameKind::EpcReply,
                    payload_bits: p,
                    crc_bits: bits_from_u64(hex16("crc16")? as u64, 16),
                })
            }
            _ => Err(Error::Parse(format!("unknown frame {head:?}"))),
        }
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.payload_bits;
        let bitstr = |b: &[u8]| b.iter().map(|v| if *v == 1 { '1' } else { '0' }).collect::<String>();
        match self.kind {
            FrameKind::Query => write!(
                f,
                "QUERY q={} dr={} m={} trext={} sel={} session={} target={} crc5={}",
                bits_to_u64(&p[13..17]),
                p[4],
                bits_to_u64(&p[5..7]),
                p[7],
                bits_to_u64(&p[8..10]),
                bits_to_u64(&p[10..12]),
                p[12],
                bitstr(&self.crc_bits)
            ),
            FrameKind::QueryRep => write!(f, "QUERYREP session={}", bits_to_u64(&p[2..4])),
            FrameKind::Ack => write!(f, "ACK rn16={:04x}", bits_to_u64(&p[2..18])),
            FrameKind::Nak => write!(f, "NAK"),
            FrameKind::Rn16Reply => write!(f, "RN16 rn16={:04x}", bits_to_u64(p)),
            FrameKind::EpcReply => write!(
                f,
                "EPC pc={:04x} epc={} crc16={:04x}",
                bits_to_u64(&p[..16]),
                bits_to_hex(&p[16..]),
                bits_to_u64(&self.crc_bits)
            ),
        }
    }
}

/// Downlink envelope for a frame: full preamble for Query, frame-sync
/// otherwise.
pub fn encode_command(frame: &Frame, timing: &PieTiming, sample_rate_hz: f64) -> Envelope {
    if frame.kind == FrameKind::Query {
        pie_encode(&frame.bits(), timing, sample_rate_hz)
    } else {
        pie_encode_frame_sync(&frame.bits(), timing, sample_rate_hz)
    }
}

pub fn command_duration_s(frame: &Frame, timing: &PieTiming) -> f64 {
    if frame.kind == FrameKind::Query {
        timing.query_duration_s(&frame.bits())
    } else {
        timing.frame_sync_duration_s(&frame.bits())
    }
}
