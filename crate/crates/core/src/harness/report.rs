//! Run metrics and their serialized forms.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::reader::{self, ReadEvent};
use crate::tag;

use super::config::ScenarioConfig;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BandMetrics {
    pub rn16: u64,
    pub epc: u64,
    pub crc_errors: u64,
    pub timeouts: u64,
    pub duplicates: u64,
    pub acks: u64,
    pub queries: u64,
    pub read_rate_per_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// All uplink packets received (RN16, EPC, CRC-failed EPC).
    pub throughput_pkts_per_s: f64,
    /// CRC-passed EPCs per second.
    pub read_rate_per_s: f64,
    /// CRC-passed EPCs over all received EPC packets.
    pub err: f64,
    pub crc_error_rate: f64,
    pub per_band: Vec<BandMetrics>,
    /// EPCs of conventional tags read by a band-parallel reader.
    pub conventional_misreads: u64,
    /// Replies sent by conventional tags.
    pub conventional_excitations: u64,
    /// Acks sent for RN16s flagged duplicate (must stay zero).
    pub acks_to_duplicates: u64,
    /// Conventional RN16 replies not flagged duplicate in any band.
    pub unsuppressed_excitations: u64,
    /// Acks carrying an excited conventional tag's RN16 while its reply
    /// window was open.
    pub acks_to_conventional: u64,
    /// Distinct EPCs read.
    pub unique_epcs: u64,
    pub simulated_s: f64,
    pub config: ScenarioConfig,
    pub events: Vec<ReadEvent>,
}

impl MetricsReport {
    /// Ordered numeric rows `(metric, band, value)`; band `None` is the total.
    pub fn rows(&self) -> Vec<(String, Option<usize>, f64)> {
        let mut v: Vec<(String, Option<usize>, f64)> = vec![
            ("throughput_pkts_per_s".into(), None, self.throughput_pkts_per_s),
            ("read_rate_per_s".into(), None, self.read_rate_per_s),
            ("err".into(), None, self.err),
            ("crc_error_rate".into(), None, self.crc_error_rate),
            ("conventional_misreads".into(), None, self.conventional_misreads as f64),
            ("conventional_excitations".into(), None, self.conventional_excitations as f64),
            ("acks_to_duplicates".into(), None, self.acks_to_duplicates as f64),
            ("unsuppressed_excitations".into(), None, self.unsuppressed_excitations as f64),
            ("acks_to_conventional".into(), None, self.acks_to_conventional as f64),
            ("unique_epcs".into(), None, self.unique_epcs as f64),
            ("simulated_s".into(), None, self.simulated_s),
        ];
        for (i, b) in self.per_band.iter().enumerate() {
            for (name, val) in [
                ("read_rate_per_s", b.read_rate_per_s),
                ("rn16", b.rn16 as f64),
                ("epc", b.epc as f64),
                ("crc_errors", b.crc_errors as f64),
                ("timeouts", b.timeouts as f64),
                ("duplicates", b.duplicates as f64),
                ("acks", b.acks as f64),
                ("queries", b.queries as f64),
            ] {
                v.push((name.into(), Some(i), val));
            }
        }
        v
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,band,value\n");
        for (m, b, v) in self.rows() {
            let band = b.map_or("all".to_string(), |b| b.to_string());
            let _ = writeln!(s, "{m},{band},{v}");
        }
        s
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "reader            {}", c.reader);
        let _ = writeln!(s, "fidelity          {:?}", c.fidelity);
        let _ = writeln!(s, "simulated         {} s", self.simulated_s);
        let _ = writeln!(s, "read rate         {:.1} /s", self.read_rate_per_s);
        let _ = writeln!(s, "throughput        {:.1} pkts/s", self.throughput_pkts_per_s);
        let _ = writeln!(s, "EPC ratio         {:.4}", self.err);
        let _ = writeln!(s, "CRC error rate    {:.4}", self.crc_error_rate);
        let _ = writeln!(s, "unique EPCs       {}", self.unique_epcs);
        let _ = writeln!(s, "conv. misreads    {}", self.conventional_misreads);
        let _ = writeln!(s, "conv. excitations {}", self.conventional_excitations);
        let _ = writeln!(s, "acks to dups      {}", self.acks_to_duplicates);
        let _ = writeln!(s, "acks to conv.     {}", self.acks_to_conventional);
        for (i, b) in self.per_band.iter().enumerate() {
            let _ = writeln!(
                s,
                "band {i}: reads/s {:.1} rn16 {} epc {} crc_err {} timeout {} dup {} ack {} query {}",
                b.read_rate_per_s, b.rn16, b.epc, b.crc_errors, b.timeouts, b.duplicates, b.acks, b.queries
            );
        }
        s.push_str("\ncalibration\n");
        let fe = tag::ChipFrontEnd::quin();
        let _ = writeln!(s, "  min SNR S_m            {}", fe.s_min);
        let _ = writeln!(s, "  signal bandwidth       {} Hz", fe.b_signal_hz);
        let _ = writeln!(s, "  thermal density        {} W/Hz", fe.k_t);
        let _ = writeln!(s, "  power-up threshold     {} W", fe.power_up_threshold_w);
        let _ = writeln!(s, "  noise bw quin/conv     {} / {} Hz", tag::QUIN_B_NOISE_HZ, tag::CONV_B_NOISE_HZ);
        let _ = writeln!(s, "  backscatter mod. loss  6 dB");
        let _ = writeln!(
            s,
            "  SAW                    IL {} dB, floor {} dB, skirt {} Hz",
            tag::SAW_INSERTION_LOSS_DB,
            tag::SAW_SUPPRESSION_DB,
            tag::SAW_TRANSITION_HZ
        );
        let _ = writeln!(s, "  preamble threshold     {}", reader::PREAMBLE_THRESHOLD);
        let _ = writeln!(s, "  timing loop Kp/Ki      {} / {}", reader::GARDNER_KP, reader::GARDNER_KI);
        s.push_str("\nconfig\n");
        s.push_str(&c.to_json());
        s.push('\n');
        s
    }

    pub fn events_csv(&self) -> String {
        let mut s = String::new();
        if self.config.reader.is_baseline() {
            let _ = writeln!(s, "# baseline={}", self.config.reader);
        }
        s.push_str(reader::EVENT_CSV_HEADER);
        s.push('\n');
        for e in &self.events {
            s.push_str(&e.csv_row());
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "text" => Ok(ReportFormat::Text),
            _ => Err(Error::Config(format!("unknown report format '{s}'"))),
        }
    }
}

pub fn emit_report(report: &MetricsReport, format: ReportFormat, path: &Path) -> Result<()> {
    let body = match format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Text => report.to_text(),
    };
    std::fs::write(path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Parse `metric,band,value` rows back.
pub fn parse_csv(text: &str) -> Result<Vec<(String, Option<usize>, f64)>> {
    let mut lines = text.lines();
    if lines.next() != Some("metric,band,value") {
        return Err(Error::Parse("missing metrics header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let mut it = l.split(',');
            let (Some(m), Some(b), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
                return Err(Error::Parse(format!("bad row '{l}'")));
            };
            let band = if b == "all" {
                None
            } else {
                Some(b.parse().map_err(|_| Error::Parse(format!("bad band '{b}'")))?)
            };
            let value = v.parse().map_err(|_| Error::Parse(format!("bad value '{v}'")))?;
            Ok((m.to_string(), band, value))
        })
        .collect()
}
