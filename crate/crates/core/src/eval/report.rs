use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DatasetMetrics;
use crate::attack::AttackFamily;
use crate::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Equal-weight mean of the metrics of several datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub key: String,
    pub n_datasets: usize,
    pub n_samples: usize,
    pub mae_v: f64,
    pub mae_theta: f64,
    pub mae_overall: f64,
    pub mae95_v: f64,
    pub mae99_v: f64,
    pub mae95_theta: f64,
    pub mae99_theta: f64,
}

impl Aggregate {
    fn mean_of(key: &str, items: &[&DatasetMetrics]) -> Self {
        let k = items.len() as f64;
        let avg = |f: fn(&DatasetMetrics) -> f64| items.iter().map(|m| f(m)).sum::<f64>() / k;
        Aggregate {
            key: key.to_string(),
            n_datasets: items.len(),
            n_samples: items.iter().map(|m| m.n_samples).sum(),
            mae_v: avg(|m| m.mae_v),
            mae_theta: avg(|m| m.mae_theta),
            mae_overall: avg(|m| m.mae_overall),
            mae95_v: avg(|m| m.mae95_v),
            mae99_v: avg(|m| m.mae99_v),
            mae95_theta: avg(|m| m.mae95_theta),
            mae99_theta: avg(|m| m.mae99_theta),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub datasets: Vec<DatasetMetrics>,
    /// One entry per family: mean over that family's zone datasets.
    pub family_aggregates: Vec<Aggregate>,
    /// One entry per zone: mean over that zone's family datasets.
    pub zone_aggregates: Vec<Aggregate>,
}

impl Default for MetricReport {
    fn default() -> Self {
        MetricReport {
            schema_version: REPORT_SCHEMA_VERSION,
            metadata: BTreeMap::new(),
            datasets: Vec::new(),
            family_aggregates: Vec::new(),
            zone_aggregates: Vec::new(),
        }
    }
}

impl MetricReport {
    /// Builds the report and its aggregates. Datasets without a family or
    /// zone tag only appear as rows.
    pub fn new(datasets: Vec<DatasetMetrics>) -> Self {
        let mut by_family: BTreeMap<AttackFamily, Vec<&DatasetMetrics>> = BTreeMap::new();
        let mut by_zone: BTreeMap<&str, Vec<&DatasetMetrics>> = BTreeMap::new();
        for m in &datasets {
            if let (Some(f), Some(_)) = (m.family, &m.zone) {
                by_family.entry(f).or_default().push(m);
            }
            if let (Some(_), Some(z)) = (m.family, &m.zone) {
                by_zone.entry(z.as_str()).or_default().push(m);
            }
        }
        let family_aggregates = by_family
            .iter()
            .map(|(f, ms)| Aggregate::mean_of(f.name(), ms))
            .collect();
        let zone_aggregates = by_zone.iter().map(|(z, ms)| Aggregate::mean_of(z, ms)).collect();
        MetricReport {
            family_aggregates,
            zone_aggregates,
            datasets,
            ..Default::default()
        }
    }

    pub fn family(&self, family: AttackFamily) -> Option<&Aggregate> {
        self.family_aggregates.iter().find(|a| a.key == family.name())
    }

    pub fn dataset(&self, name: &str) -> Option<&DatasetMetrics> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn csv_header() -> [&'static str; 13] {
        [
            "row",
            "name",
            "family",
            "zone",
            "n_samples",
            "mae_v",
            "mae_theta",
            "mae_overall",
            "mae95_v",
            "mae99_v",
            "mae95_theta",
            "mae99_theta",
            "n_datasets",
        ]
    }

    /// Flat rows: datasets, then family aggregates, then zone aggregates.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let f = |x: f64| format!("{x:?}");
        let mut rows = Vec::new();
        for d in &self.datasets {
            rows.push(vec![
                "dataset".into(),
                d.name.clone(),
                d.family.map(|x| x.to_string()).unwrap_or_default(),
                d.zone.clone().unwrap_or_default(),
                d.n_samples.to_string(),
                f(d.mae_v),
                f(d.mae_theta),
                f(d.mae_overall),
                f(d.mae95_v),
                f(d.mae99_v),
                f(d.mae95_theta),
                f(d.mae99_theta),
                "1".into(),
            ]);
        }
        for (kind, aggs) in [("family", &self.family_aggregates), ("zone", &self.zone_aggregates)] {
            for a in aggs {
                let (fam, zone) = if kind == "family" {
                    (a.key.clone(), String::new())
                } else {
                    (String::new(), a.key.clone())
                };
                rows.push(vec![
                    kind.into(),
                    a.key.clone(),
                    fam,
                    zone,
                    a.n_samples.to_string(),
                    f(a.mae_v),
                    f(a.mae_theta),
                    f(a.mae_overall),
                    f(a.mae95_v),
                    f(a.mae99_v),
                    f(a.mae95_theta),
                    f(a.mae99_theta),
                    a.n_datasets.to_string(),
                ]);
            }
        }
        rows
    }
}

/// Writes `<stem>.json` (full) and `<stem>.csv` (flat) next to each other and
/// returns both paths.
pub fn emit_report(report: &MetricReport, json_path: &Path) -> Result<(PathBuf, PathBuf)> {
    let csv_path = json_path.with_extension("csv");
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(json_path, json + "\n").map_err(|e| Error::io(json_path, e))?;
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(MetricReport::csv_header())?;
    for row in report.csv_rows() {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok((json_path.to_path_buf(), csv_path))
}

pub fn read_report(path: &Path) -> Result<MetricReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: MetricReport = serde_json::from_str(&text)?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "report schema {} is not supported (expected {REPORT_SCHEMA_VERSION})",
            report.schema_version
        )));
    }
    Ok(report)
}
