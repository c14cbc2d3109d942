//! Scenario configuration and tag populations.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::band::{self, BandPlan};
use crate::error::{Error, Result};
use crate::phy::{self, Bits};
use crate::seed::{self, StreamKind};
use crate::tag::{self, SawFilterSpec, TagInstance, TagKind};

pub const MAX_EIRP_DBM: f64 = 36.0;

/// Which reader runs the inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReaderMode {
    /// Band-parallel reader with `k` bands.
    Quin(usize),
    /// Single-carrier reader, standard slotted inventory.
    Tdma,
    /// Single-carrier reader with collision recovery.
    Fliptracer,
}

impl ReaderMode {
    pub fn n_bands(&self) -> usize {
        match self {
            ReaderMode::Quin(k) => *k,
            _ => 1,
        }
    }

    pub fn is_baseline(&self) -> bool {
        !matches!(self, ReaderMode::Quin(_))
    }
}

impl fmt::Display for ReaderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReaderMode::Quin(k) => write!(f, "quin:{k}"),
            ReaderMode::Tdma => write!(f, "tdma"),
            ReaderMode::Fliptracer => write!(f, "fliptracer"),
        }
    }
}

impl FromStr for ReaderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tdma" => Ok(ReaderMode::Tdma),
            "fliptracer" => Ok(ReaderMode::Fliptracer),
            _ => {
                let k = s
                    .strip_prefix("quin:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|k| *k >= 1)
                    .ok_or_else(|| Error::Config(format!("reader mode '{s}': expected quin:<k>, tdma or fliptracer")))?;
                Ok(ReaderMode::Quin(k))
            }
        }
    }
}

impl Serialize for ReaderMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ReaderMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    /// Full composite-rate waveforms through DUC/DDC.
    Composite,
    /// Each band at its own rate; transmitter products from the composite
    /// transmit path only when the PA is nonlinear.
    FastPerBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Quin,
    Conv,
}

/// A group of identical tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagGroup {
    pub kind: GroupKind,
    /// Band for Quin tags; omitted means round-robin over all bands.
    #[serde(default)]
    pub band: Option<usize>,
    pub count: usize,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandPlanConfig {
    #[serde(default = "default_span_low")]
    pub span_low_hz: f64,
    #[serde(default = "default_span_high")]
    pub span_high_hz: f64,
    #[serde(default = "default_passband")]
    pub passband_hz: f64,
}

fn default_span_low() -> f64 {
    band::SPAN_LOW_HZ
}
fn default_span_high() -> f64 {
    band::SPAN_HIGH_HZ
}
fn default_passband() -> f64 {
    band::DEFAULT_PASSBAND_HZ
}

impl Default for BandPlanConfig {
    fn default() -> Self {
        Self {
            span_low_hz: default_span_low(),
            span_high_hz: default_span_high(),
            passband_hz: default_passband(),
        }
    }
}

/// Everything a run depends on. Parsed from JSON; unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub band_plan: BandPlanConfig,
    pub reader: ReaderMode,
    #[serde(default = "default_eirp")]
    pub eirp_dbm: f64,
    #[serde(default)]
    pub tags: Vec<TagGroup>,
    /// Population file, one tag per line; appended to `tags`.
    #[serde(default)]
    pub tags_file: Option<String>,
    #[serde(default = "default_blf")]
    pub blf_hz: f64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub q: Option<u8>,
    #[serde(default)]
    pub dpd: bool,
    #[serde(default)]
    pub pa: bool,
    #[serde(default)]
    pub cfo_hz: f64,
    #[serde(default = "default_fidelity")]
    pub fidelity: Fidelity,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    /// Receiver noise density at the reader input.
    #[serde(default = "default_noise")]
    pub rx_noise_dbm_per_hz: f64,
    #[serde(default = "default_isolation")]
    pub tx_rx_isolation_db: f64,
    #[serde(default = "default_depth")]
    pub modulation_depth: f64,
    /// All sessions send at the same instants (no start offset or jitter).
    #[serde(default)]
    pub synchronized_downlink: bool,
}

fn default_eirp() -> f64 {
    MAX_EIRP_DBM
}
fn default_blf() -> f64 {
    80e3
}
fn default_duration() -> f64 {
    2.0
}
fn default_fidelity() -> Fidelity {
    Fidelity::FastPerBand
}
fn default_seed() -> u64 {
    1
}
fn default_noise() -> f64 {
    -164.0
}
fn default_isolation() -> f64 {
    60.0
}
fn default_depth() -> f64 {
    0.9
}

impl ScenarioConfig {
    /// Default scenario for a reader mode with no tags.
    pub fn new(reader: ReaderMode) -> Self {
        Self {
            band_plan: BandPlanConfig::default(),
            reader,
            eirp_dbm: default_eirp(),
            tags: Vec::new(),
            tags_file: None,
            blf_hz: default_blf(),
            duration_s: default_duration(),
            q: None,
            dpd: false,
            pa: false,
            cfo_hz: 0.0,
            fidelity: default_fidelity(),
            master_seed: default_seed(),
            rx_noise_dbm_per_hz: default_noise(),
            tx_rx_isolation_db: default_isolation(),
            modulation_depth: default_depth(),
            synchronized_downlink: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        // Relative population files resolve against the config's directory.
        if let (Some(f), Some(dir)) = (&cfg.tags_file, path.parent()) {
            let p = Path::new(f);
            if p.is_relative() {
                cfg.tags_file = Some(dir.join(p).to_string_lossy().into_owned());
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn n_bands(&self) -> usize {
        self.reader.n_bands()
    }

    pub fn band_plan(&self) -> Result<BandPlan> {
        let b = &self.band_plan;
        band::make_band_plan(self.n_bands(), b.span_low_hz, b.span_high_hz, b.passband_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("duration_s must be > 0".into()));
        }
        if !(self.eirp_dbm <= MAX_EIRP_DBM) {
            return Err(Error::Config(format!("eirp_dbm {} exceeds {MAX_EIRP_DBM} dBm", self.eirp_dbm)));
        }
        tag::UplinkConfig::new(self.blf_hz)?;
        if let Some(q) = self.q {
            if q > 15 {
                return Err(Error::Config(format!("q {q} > 15")));
            }
        }
        if self.dpd && !self.pa {
            return Err(Error::Config("dpd requires pa".into()));
        }
        if !(0.0..=1.0).contains(&self.modulation_depth) || self.modulation_depth == 0.0 {
            return Err(Error::Config("modulation_depth must be in (0, 1]".into()));
        }
        if !self.cfo_hz.is_finite() {
            return Err(Error::Config("cfo_hz must be finite".into()));
        }
        self.band_plan()?;
        let k = self.n_bands();
        for g in &self.tags {
            if !(g.distance_m > 0.0) {
                return Err(Error::Config("tag distance must be > 0".into()));
            }
            if let Some(b) = g.band {
                if b >= k {
                    return Err(Error::Config(format!("tag band {b} beyond plan of {k} bands")));
                }
            }
        }
        Ok(())
    }

    /// Per-band transmit power (W).
    pub fn band_power_w(&self) -> f64 {
        crate::impairments::dbm_to_w(self.eirp_dbm) / self.n_bands() as f64
    }

    pub fn rx_noise_psd(&self) -> f64 {
        crate::impairments::dbm_to_w(self.rx_noise_dbm_per_hz)
    }
}

// ---------------------------------------------------------------------------
// Population
// ---------------------------------------------------------------------------

/// One tag line: `epc=<24 hex> kind=quin:<band>|conv dist=<m> seed=<u64>`.
#[derive(Debug, Clone, PartialEq)]
pub struct TagSpec {
    pub epc: Bits,
    pub kind: TagKind,
    pub distance_m: f64,
    pub seed: u64,
}

impl fmt::Display for TagSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            TagKind::Quin(b) => format!("quin:{b}"),
            TagKind::Conventional => "conv".into(),
        };
        write!(
            f,
            "epc={} kind={} dist={} seed={}",
            phy::bits_to_hex(&self.epc),
            kind,
            self.distance_m,
            self.seed
        )
    }
}

impl FromStr for TagSpec {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let (mut epc, mut kind, mut dist, mut seed) = (None, None, None, None);
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad token '{tok}'")))?;
            match k {
                "epc" => {
                    if v.len() != 24 {
                        return Err(Error::Parse(format!("epc '{v}' is not 24 hex digits")));
                    }
                    epc = Some(phy::hex_to_bits(v)?);
                }
                "kind" => {
                    kind = Some(match v {
                        "conv" => TagKind::Conventional,
                        _ => TagKind::Quin(
                            v.strip_prefix("quin:")
                                .and_then(|b| b.parse().ok())
                                .ok_or_else(|| Error::Parse(format!("bad kind '{v}'")))?,
                        ),
                    })
                }
                "dist" => dist = Some(v.parse::<f64>().map_err(|e| Error::Parse(format!("dist: {e}")))?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|e| Error::Parse(format!("seed: {e}")))?),
                _ => return Err(Error::Parse(format!("unknown key '{k}'"))),
            }
        }
        let miss = |n: &str| Error::Parse(format!("missing {n} in '{line}'"));
        Ok(TagSpec {
            epc: epc.ok_or_else(|| miss("epc"))?,
            kind: kind.ok_or_else(|| miss("kind"))?,
            distance_m: dist.ok_or_else(|| miss("dist"))?,
            seed: seed.ok_or_else(|| miss("seed"))?,
        })
    }
}

pub fn parse_population(text: &str) -> Result<Vec<TagSpec>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}

pub fn format_population(tags: &[TagSpec]) -> String {
    tags.iter().map(|t| format!("{t}\n")).collect()
}

/// Expand groups (and the population file) into tag specs. EPCs and seeds
/// come from the population stream of the master seed.
pub fn expand_population(cfg: &ScenarioConfig) -> Result<Vec<TagSpec>> {
    let k = cfg.n_bands();
    let mut rng = seed::rng_for(cfg.master_seed, StreamKind::Population, 0);
    let mut out = Vec::new();
    let mut rr = 0usize;
    for g in &cfg.tags {
        for _ in 0..g.count {
            let kind = match g.kind {
                GroupKind::Conv => TagKind::Conventional,
                GroupKind::Quin => TagKind::Quin(g.band.unwrap_or_else(|| {
                    rr += 1;
                    (rr - 1) % k
                })),
            };
            let epc = phy::bits_from_u64(rng.random::<u64>(), 64)
                .into_iter()
                .chain(phy::bits_from_u64(rng.random::<u32>() as u64, 32))
                .collect();
            let idx = out.len() as u64;
            out.push(TagSpec {
                epc,
                kind,
                distance_m: g.distance_m,
                seed: seed::sub_seed(cfg.master_seed, StreamKind::Tag, idx),
            });
        }
    }
    if let Some(f) = &cfg.tags_file {
        out.extend(parse_population(&std::fs::read_to_string(f)?)?);
    }
    for t in &out {
        if let TagKind::Quin(b) = t.kind {
            if b >= k {
                return Err(Error::Config(format!("tag band {b} beyond plan of {k} bands")));
            }
        }
        if !(t.distance_m > 0.0) {
            return Err(Error::Config("tag distance must be > 0".into()));
        }
    }
    Ok(out)
}

/// Build tag instances against a plan.
pub fn instantiate(specs: &[TagSpec], plan: &BandPlan) -> Vec<TagInstance> {
    specs
        .iter()
        .map(|s| {
            let saw = match s.kind {
                TagKind::Quin(b) => Some(SawFilterSpec::for_center(plan.bands[b].center_hz, plan.bands[b].passband_hz)),
                TagKind::Conventional => None,
            };
            TagInstance::new(s.epc.clone(), s.kind, saw, s.distance_m, s.seed)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_strings() {
        for m in [ReaderMode::Quin(3), ReaderMode::Tdma, ReaderMode::Fliptracer] {
            assert_eq!(m.to_string().parse::<ReaderMode>().unwrap(), m);
        }
        assert!("quin:0".parse::<ReaderMode>().is_err());
        assert!("aloha".parse::<ReaderMode>().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_json(r#"{"reader":"tdma"}"#).is_ok());
        assert!(ScenarioConfig::from_json(r#"{"reader":"tdma","bogus":1}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"reader":"tdma","tags":[{"kind":"conv","count":1,"distance_m":1,"x":0}]}"#).is_err());
    }

    #[test]
    fn population_line_round_trip() {
        let line = "epc=e2801160600002054a1b0c77 kind=quin:3 dist=2.5 seed=42";
        let t: TagSpec = line.parse().unwrap();
        assert_eq!(t.kind, TagKind::Quin(3));
        assert_eq!(t.to_string(), line);
        assert!("epc=12 kind=conv dist=1 seed=1".parse::<TagSpec>().is_err());
        assert!("epc=e2801160600002054a1b0c77 kind=conv dist=1".parse::<TagSpec>().is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut c = ScenarioConfig::new(ReaderMode::Quin(5));
        assert!(c.validate().is_ok());
        c.eirp_dbm = 40.0;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::new(ReaderMode::Quin(2));
        c.tags.push(TagGroup {
            kind: GroupKind::Quin,
            band: Some(4),
            count: 1,
            distance_m: 1.0,
        });
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::new(ReaderMode::Tdma);
        c.duration_s = 0.0;
        assert!(c.validate().is_err());
    }
}
