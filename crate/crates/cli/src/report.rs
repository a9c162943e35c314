//! Allocation reports: JSON document and aligned text table.

use std::collections::BTreeMap;

use capplan_core::allocate::{format_sig4, CrewAllocation, OrderEntry, VehicleAllocation};
use capplan_core::risk::RiskTable;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct StationRow {
    pub id: String,
    pub risk: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operational: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slack: Option<usize>,
    pub indices: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct AllocationReport {
    pub kind: &'static str,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<usize>,
    pub objective: f64,
    pub objective_display: String,
    pub objective_station: String,
    pub stations: Vec<StationRow>,
    pub order_log: Vec<OrderEntry>,
    pub config_hash: String,
}

impl AllocationReport {
    pub fn vehicles(risks: &RiskTable, k: usize, a: &VehicleAllocation, config_hash: String) -> Self {
        let stations = risks
            .entries()
            .iter()
            .zip(&a.counts)
            .map(|(e, (_, n))| StationRow {
                id: e.station.clone(),
                risk: e.risk.value(),
                n: *n,
                f: None,
                operational: None,
                slack: None,
                indices: a.indices_of(&e.station),
            })
            .collect();
        AllocationReport {
            kind: "vehicles",
            k,
            alpha: None,
            objective: a.objective.value(),
            objective_display: format_sig4(a.objective.value()),
            objective_station: a.objective.station.clone(),
            stations,
            order_log: a.order_log.clone(),
            config_hash,
        }
    }

    pub fn crews(
        risks: &RiskTable,
        vehicles: &BTreeMap<String, usize>,
        k: usize,
        c: &CrewAllocation,
        config_hash: String,
    ) -> Self {
        let stations = risks
            .entries()
            .iter()
            .zip(&c.counts)
            .map(|(e, (_, f))| StationRow {
                id: e.station.clone(),
                risk: e.risk.value(),
                n: vehicles[&e.station],
                f: Some(*f),
                operational: Some(f / c.alpha),
                slack: Some(f % c.alpha),
                indices: c.indices_of(&e.station),
            })
            .collect();
        AllocationReport {
            kind: "crews",
            k,
            alpha: Some(c.alpha),
            objective: c.objective.value(),
            objective_display: format_sig4(c.objective.value()),
            objective_station: c.objective.station.clone(),
            stations,
            order_log: c.order_log.clone(),
            config_hash,
        }
    }

    /// Aligned table; crew reports add f, operational and slack columns.
    pub fn table(&self) -> String {
        let crews = self.alpha.is_some();
        let mut header = vec!["station", "risk", "n"];
        if crews {
            header.extend(["f", "operational", "slack"]);
        }
        header.push("order");
        let rows: Vec<Vec<String>> = self
            .stations
            .iter()
            .map(|s| {
                let mut r = vec![s.id.clone(), s.risk.to_string(), s.n.to_string()];
                if crews {
                    r.push(s.f.unwrap_or_default().to_string());
                    r.push(s.operational.unwrap_or_default().to_string());
                    r.push(s.slack.unwrap_or_default().to_string());
                }
                r.push(compress_indices(&s.indices));
                r
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                rows.iter()
                    .map(|r| r[c].len())
                    .chain([header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| -> String {
            let last = cells.len() - 1;
            cells
                .iter()
                .enumerate()
                .map(|(c, v)| {
                    if c == last {
                        v.clone()
                    } else if c == 0 {
                        format!("{v:<w$}", w = widths[c])
                    } else {
                        format!("{v:>w$}", w = widths[c])
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = String::new();
        out.push_str(&line(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
        out.push('\n');
        for r in &rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        let what = if crews {
            "risk per operational vehicle"
        } else {
            "risk per vehicle"
        };
        out.push_str(&format!(
            "K = {}{}; maximal {what} = {} (station {})\n",
            self.k,
            self.alpha.map_or(String::new(), |a| format!(", alpha = {a}")),
            self.objective_display,
            self.objective_station
        ));
        out
    }
}

/// `1, 2, 3, 5, 9, 10` -> `1-3, 5, 9-10`.
pub fn compress_indices(indices: &[usize]) -> String {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    let mut parts = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let start = sorted[i];
        while i + 1 < sorted.len() && sorted[i + 1] == sorted[i] + 1 {
            i += 1;
        }
        if sorted[i] == start {
            parts.push(start.to_string());
        } else {
            parts.push(format!("{start}-{}", sorted[i]));
        }
        i += 1;
    }
    parts.join(", ")
}
