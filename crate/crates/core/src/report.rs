//! Run records and comparison tables.
//!
//! A [`RunRecord`] is the only thing reporting reads: every table value is
//! recomputed from the persisted per-representation aggregates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bd::{bd_quality, bdet, delta_t_parallel, delta_t_serial, overlap_warning, RdCurve, RdPoint};
use crate::error::{Error, Result};
use crate::exec::{EncodeResult, TimingLedger};
use crate::media::Rational;
use crate::plan::{validate_plan, EncodePlan, Ladder, NodeId};

pub const RUN_SCHEMA: &str = "ladder360.run/1";
pub const AVG_ROW: &str = "Avg";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualitySource {
    /// Cost-model quality reported by the simulated backend.
    Model,
    /// PSNR / WS-PSNR of decoded output against the ERP reference.
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceQuality {
    pub tile: String,
    pub psnr_db: f64,
    pub wspsnr_db: f64,
}

/// One ladder rung aggregated over tiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationRecord {
    pub tier: usize,
    pub tier_name: String,
    pub qp: u8,
    /// Sum of tile bitrates.
    pub rate_kbps: f64,
    /// Sum of tile encode times.
    pub time_s: f64,
    pub psnr_db: f64,
    pub wspsnr_db: f64,
    /// Per-face scores, logged for cubemap runs; not used in comparisons.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faces: Vec<FaceQuality>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: String,
    /// Display name of the source sequence.
    pub sequence: String,
    /// Digest identifying the source content and frame count.
    pub sequence_id: String,
    pub fps: Rational,
    pub frames: usize,
    pub backend: String,
    pub quality_source: QualitySource,
    pub plan: EncodePlan,
    pub nodes: Vec<EncodeResult>,
    pub ledger: TimingLedger,
    pub representations: Vec<RepresentationRecord>,
    #[serde(default)]
    pub environment: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn validate(&self) -> Result<()> {
        if self.schema != RUN_SCHEMA {
            return Err(Error::Record(format!("unsupported schema `{}`", self.schema)));
        }
        if let Some(v) = validate_plan(&self.plan).first() {
            return Err(Error::Record(format!("embedded plan is invalid: {v}")));
        }
        let plan_ids: Vec<NodeId> = self.plan.nodes.iter().map(|n| n.id).collect();
        let mut node_ids: Vec<NodeId> = self.nodes.iter().map(|n| n.node).collect();
        node_ids.sort();
        let mut sorted = plan_ids.clone();
        sorted.sort();
        if node_ids != sorted {
            return Err(Error::Record("node results do not match the plan".into()));
        }
        let l = &self.plan.ladder;
        if self.representations.len() != l.tiers.len() * l.qualities.len() {
            return Err(Error::Record("representation count does not match the ladder".into()));
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let r: RunRecord = serde_json::from_str(&text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn ladder(&self) -> &Ladder {
        &self.plan.ladder
    }

    /// Method label such as `ERP-CRC`.
    pub fn method(&self) -> String {
        self.plan.variant.label()
    }

    fn tier_reps(&self, tier: usize) -> Vec<&RepresentationRecord> {
        let mut v: Vec<_> = self.representations.iter().filter(|r| r.tier == tier).collect();
        v.sort_by(|a, b| a.rate_kbps.total_cmp(&b.rate_kbps));
        v
    }

    /// Short ladders (under four qualities) get a relaxed curve.
    fn tier_curve(&self, tier: usize, wspsnr: bool) -> Result<RdCurve> {
        let pts: Vec<RdPoint> = self
            .tier_reps(tier)
            .iter()
            .map(|r| RdPoint::timed(r.rate_kbps, if wspsnr { r.wspsnr_db } else { r.psnr_db }, r.time_s))
            .collect();
        if pts.len() < RdCurve::MIN_POINTS {
            RdCurve::short(pts)
        } else {
            RdCurve::new(pts)
        }
    }

    fn tier_node_times(&self, tier: usize) -> Vec<f64> {
        self.ledger.nodes.iter().filter(|n| n.node.tier == tier).map(|n| n.time_s).collect()
    }
}

/// The six comparison figures, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub bd_psnr_db: f64,
    pub bd_wspsnr_db: f64,
    pub bdet_psnr_pct: f64,
    pub bdet_wspsnr_pct: f64,
    pub delta_ts_pct: f64,
    pub delta_tp_pct: f64,
}

impl Metrics {
    const NAMES: [&'static str; 6] = [
        "bd_psnr_db",
        "bd_wspsnr_db",
        "bdet_psnr_pct",
        "bdet_wspsnr_pct",
        "delta_ts_pct",
        "delta_tp_pct",
    ];

    fn to_array(self) -> [f64; 6] {
        [
            self.bd_psnr_db,
            self.bd_wspsnr_db,
            self.bdet_psnr_pct,
            self.bdet_wspsnr_pct,
            self.delta_ts_pct,
            self.delta_tp_pct,
        ]
    }

    fn from_array(a: [f64; 6]) -> Self {
        Metrics {
            bd_psnr_db: a[0],
            bd_wspsnr_db: a[1],
            bdet_psnr_pct: a[2],
            bdet_wspsnr_pct: a[3],
            delta_ts_pct: a[4],
            delta_tp_pct: a[5],
        }
    }
}

/// Per-tier and Avg figures of one test record against one reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceComparison {
    pub sequence: String,
    pub method: String,
    pub anchor: String,
    /// Tier rows in ladder order, then the Avg row.
    pub rows: Vec<(String, Metrics)>,
    pub warnings: Vec<String>,
}

fn check_comparable(reference: &RunRecord, test: &RunRecord) -> Result<()> {
    let (a, b) = (reference.ladder(), test.ladder());
    if a.tiers != b.tiers || a.qualities != b.qualities {
        return Err(Error::Record(format!(
            "ladder mismatch between {} and {}",
            reference.method(),
            test.method()
        )));
    }
    if reference.sequence_id != test.sequence_id {
        return Err(Error::Record(format!(
            "sequence mismatch: {} vs {}",
            reference.sequence, test.sequence
        )));
    }
    for rec in [reference, test] {
        for t in 0..a.tiers.len() {
            if rec.tier_reps(t).len() != a.qualities.len() {
                return Err(Error::Record(format!("{} is missing representations of tier {t}", rec.method())));
            }
        }
    }
    Ok(())
}

/// Compares `test` against `reference` tier by tier.
pub fn compare(reference: &RunRecord, test: &RunRecord) -> Result<SequenceComparison> {
    reference.validate()?;
    test.validate()?;
    check_comparable(reference, test)?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    if reference.ladder().qualities.len() < RdCurve::MIN_POINTS {
        warnings.push(format!(
            "{}: only {} qualities per tier; BD values use a short-curve interpolation",
            test.method(),
            reference.ladder().qualities.len()
        ));
    }
    for (t, tier) in reference.ladder().tiers.iter().enumerate() {
        let rp = reference.tier_curve(t, false)?;
        let tp = test.tier_curve(t, false)?;
        let rw = reference.tier_curve(t, true)?;
        let tw = test.tier_curve(t, true)?;
        for (kind, r, c) in [("PSNR", &rp, &tp), ("WS-PSNR", &rw, &tw)] {
            if let Some(w) = overlap_warning(r, c) {
                warnings.push(format!("{} {} {kind}: {w}", test.method(), tier.name));
            }
        }
        let (rt, tt) = (reference.tier_node_times(t), test.tier_node_times(t));
        let m = Metrics {
            bd_psnr_db: bd_quality(&rp, &tp)?,
            bd_wspsnr_db: bd_quality(&rw, &tw)?,
            bdet_psnr_pct: bdet(&rp, &tp)?,
            bdet_wspsnr_pct: bdet(&rw, &tw)?,
            delta_ts_pct: delta_t_serial(&rt, &tt)?,
            delta_tp_pct: delta_t_parallel(&rt, &tt)?,
        };
        rows.push((tier.name.clone(), m));
    }
    let n = rows.len() as f64;
    let mut avg = [0.0; 6];
    for (_, m) in &rows {
        for (a, v) in avg.iter_mut().zip(m.to_array()) {
            *a += v;
        }
    }
    rows.push((AVG_ROW.to_string(), Metrics::from_array(avg.map(|s| s / n))));
    Ok(SequenceComparison {
        sequence: test.sequence.clone(),
        method: test.method(),
        anchor: test.plan.anchor.to_string(),
        rows,
        warnings,
    })
}

/// Mean and sample standard deviation across sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// `None` for a single sequence.
    pub sample_sd: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sample_sd = (values.len() > 1).then(|| {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        });
        Stat { mean, sample_sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    #[serde(rename = "ref")]
    pub anchor: String,
    pub resolution: String,
    pub bd_psnr_db: Stat,
    pub bd_wspsnr_db: Stat,
    pub bdet_psnr_pct: Stat,
    pub bdet_wspsnr_pct: Stat,
    pub delta_ts_pct: Stat,
    pub delta_tp_pct: Stat,
    pub sequences: usize,
}

impl ComparisonRow {
    pub fn stats(&self) -> [Stat; 6] {
        [
            self.bd_psnr_db,
            self.bd_wspsnr_db,
            self.bdet_psnr_pct,
            self.bdet_wspsnr_pct,
            self.delta_ts_pct,
            self.delta_tp_pct,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ComparisonRow>,
    pub warnings: Vec<String>,
}

/// Builds the comparison table.
///
/// Each test record is compared with the reference of the same sequence;
/// rows for the same (method, anchor) are then pooled across sequences.
pub fn build_report(references: &[RunRecord], tests: &[RunRecord]) -> Result<Report> {
    if references.is_empty() || tests.is_empty() {
        return Err(Error::Record("report needs at least one reference and one test record".into()));
    }
    let mut by_seq: BTreeMap<&str, &RunRecord> = BTreeMap::new();
    for r in references {
        if by_seq.insert(&r.sequence_id, r).is_some() {
            return Err(Error::Record(format!("two reference records for sequence {}", r.sequence)));
        }
    }
    let mut groups: Vec<((String, String), Vec<SequenceComparison>)> = Vec::new();
    let mut warnings = Vec::new();
    for t in tests {
        let r = by_seq
            .get(t.sequence_id.as_str())
            .ok_or_else(|| Error::Record(format!("no reference record for sequence {}", t.sequence)))?;
        let c = compare(r, t)?;
        warnings.extend(c.warnings.iter().map(|w| format!("{}: {w}", c.sequence)));
        let key = (c.method.clone(), c.anchor.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(c),
            None => groups.push((key, vec![c])),
        }
    }
    let mut rows = Vec::new();
    for ((method, anchor), comps) in groups {
        for (k, (res, _)) in comps[0].rows.iter().enumerate() {
            let col = |f: fn(&Metrics) -> f64| -> Stat {
                Stat::of(&comps.iter().map(|c| f(&c.rows[k].1)).collect::<Vec<_>>())
            };
            rows.push(ComparisonRow {
                method: method.clone(),
                anchor: anchor.clone(),
                resolution: res.clone(),
                bd_psnr_db: col(|m| m.bd_psnr_db),
                bd_wspsnr_db: col(|m| m.bd_wspsnr_db),
                bdet_psnr_pct: col(|m| m.bdet_psnr_pct),
                bdet_wspsnr_pct: col(|m| m.bdet_wspsnr_pct),
                delta_ts_pct: col(|m| m.delta_ts_pct),
                delta_tp_pct: col(|m| m.delta_tp_pct),
                sequences: comps.len(),
            });
        }
    }
    Ok(Report { rows, warnings })
}

impl Report {
    /// CSV with one mean column and one sample-SD column per figure.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,ref,resolution");
        for name in Metrics::NAMES {
            let _ = write!(out, ",{name},{name}_sample_sd");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", r.method, r.anchor, r.resolution);
            for s in r.stats() {
                let sd = s.sample_sd.map(|v| v.to_string()).unwrap_or_default();
                let _ = write!(out, ",{},{sd}", s.mean);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_sd() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.sample_sd.unwrap() - 1.2909944487358056).abs() < 1e-15);
        assert_eq!(Stat::of(&[5.0]).sample_sd, None);
    }

    #[test]
    fn csv_header_order() {
        let r = Report {
            rows: vec![],
            warnings: vec![],
        };
        assert_eq!(
            r.to_csv(),
            "method,ref,resolution,bd_psnr_db,bd_psnr_db_sample_sd,bd_wspsnr_db,bd_wspsnr_db_sample_sd,\
             bdet_psnr_pct,bdet_psnr_pct_sample_sd,bdet_wspsnr_pct,bdet_wspsnr_pct_sample_sd,\
             delta_ts_pct,delta_ts_pct_sample_sd,delta_tp_pct,delta_tp_pct_sample_sd\n"
        );
    }
}
