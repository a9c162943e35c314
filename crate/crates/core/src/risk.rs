//! Per-station risk: the estimated intensity integrated over each catchment.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::CatchmentPartition;
use crate::intensity::IntensityField;

/// Scaled-integer decimal: `mantissa * 10^-scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decimal {
    pub mantissa: i128,
    pub scale: u32,
}

impl Decimal {
    /// Parse `[+-]digits[.digits]`. Anything else (exponents, more than 30
    /// significant digits) is not representable and returns `None`.
    pub fn parse(s: &str) -> Option<Decimal> {
        let s = s.trim();
        let (neg, body) = match s.as_bytes().first()? {
            b'-' => (true, &s[1..]),
            b'+' => (false, &s[1..]),
            _ => (false, s),
        };
        let (int, frac) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return None;
        }
        if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return None;
        }
        let digits = format!("{int}{frac}");
        let digits = digits.trim_start_matches('0');
        if digits.len() > 30 {
            return None;
        }
        let mut mantissa: i128 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
        if neg {
            mantissa = -mantissa;
        }
        Some(Decimal {
            mantissa,
            scale: frac.len() as u32,
        })
    }

    fn rescaled(&self, scale: u32) -> Option<i128> {
        let pow = 10i128.checked_pow(scale - self.scale)?;
        self.mantissa.checked_mul(pow)
    }
}

/// Expected incident count for one catchment.
///
/// Values read from text keep their exact decimal form so that ratio
/// comparisons in the allocation algorithms can be done without rounding.
#[derive(Debug, Clone, Copy)]
pub struct Risk {
    value: f64,
    exact: Option<Decimal>,
}

impl Risk {
    pub fn from_f64(value: f64) -> Self {
        Risk { value, exact: None }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let value: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("`{s}` is not a number")))?;
        Ok(Risk {
            value,
            exact: Decimal::parse(s),
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact(&self) -> Option<Decimal> {
        self.exact
    }
}

impl PartialEq for Risk {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl fmt::Display for Risk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

/// Relative tolerance for detecting ties between float ratios.
pub const RATIO_TIE_TOLERANCE: f64 = 1e-12;

/// Compare `a / na` with `b / nb`.
///
/// Exact cross-multiplication when both risks carry a decimal form,
/// otherwise float cross-multiplication where values within
/// [`RATIO_TIE_TOLERANCE`] (relative) compare equal.
pub fn cmp_ratio(a: &Risk, na: u64, b: &Risk, nb: u64) -> Ordering {
    if let (Some(da), Some(db)) = (a.exact, b.exact) {
        let scale = da.scale.max(db.scale);
        if let (Some(ma), Some(mb)) = (da.rescaled(scale), db.rescaled(scale)) {
            if let (Some(l), Some(r)) = (ma.checked_mul(nb as i128), mb.checked_mul(na as i128)) {
                return l.cmp(&r);
            }
        }
    }
    let l = a.value * nb as f64;
    let r = b.value * na as f64;
    if (l - r).abs() <= RATIO_TIE_TOLERANCE * l.abs().max(r.abs()) {
        Ordering::Equal
    } else {
        l.partial_cmp(&r).unwrap_or(Ordering::Equal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskEntry {
    pub station: String,
    pub risk: Risk,
}

/// Station id to integrated risk, in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RiskTable {
    pub period: String,
    entries: Vec<RiskEntry>,
}

impl RiskTable {
    pub fn new(period: impl Into<String>, entries: Vec<RiskEntry>) -> Result<Self> {
        let mut ids = HashSet::new();
        for e in &entries {
            if !ids.insert(e.station.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate station `{}` in risk table",
                    e.station
                )));
            }
            let v = e.risk.value();
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "risk {v} for station `{}` must be finite and non-negative",
                    e.station
                )));
            }
        }
        Ok(RiskTable {
            period: period.into(),
            entries,
        })
    }

    /// Convenience constructor from `(id, value)` pairs.
    pub fn from_values<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let entries = pairs
            .into_iter()
            .map(|(s, v)| RiskEntry {
                station: s.into(),
                risk: Risk::from_f64(v),
            })
            .collect();
        RiskTable::new("", entries)
    }

    /// Convenience constructor from decimal strings, keeping exact values.
    pub fn from_decimals<S: Into<String>, T: AsRef<str>>(pairs: impl IntoIterator<Item = (S, T)>) -> Result<Self> {
        let entries = pairs
            .into_iter()
            .map(|(s, v)| {
                Ok(RiskEntry {
                    station: s.into(),
                    risk: Risk::parse(v.as_ref())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RiskTable::new("", entries)
    }

    pub fn entries(&self) -> &[RiskEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, station: &str) -> Option<&Risk> {
        self.entries.iter().find(|e| e.station == station).map(|e| &e.risk)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.risk.value()).sum()
    }

    /// Entries ordered by descending risk; equal risks keep id order.
    pub fn sorted_by_risk(&self) -> RiskTable {
        let mut entries = self.entries.clone();
        entries.sort_by(|a, b| cmp_ratio(&b.risk, 1, &a.risk, 1).then_with(|| a.station.cmp(&b.station)));
        RiskTable {
            period: self.period.clone(),
            entries,
        }
    }

    /// Raise every risk below `floor` to `floor`.
    pub fn with_floor(&self, floor: f64) -> Result<RiskTable> {
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::invalid(format!("risk floor must be positive, got {floor}")));
        }
        let entries = self
            .entries
            .iter()
            .map(|e| RiskEntry {
                station: e.station.clone(),
                risk: if e.risk.value() < floor {
                    Risk::from_f64(floor)
                } else {
                    e.risk
                },
            })
            .collect();
        RiskTable::new(self.period.clone(), entries)
    }
}

/// Integrate the field over every catchment of the partition.
///
/// Stations appear in the partition's (id-sorted) order.
pub fn catchment_risks(field: &IntensityField, part: &CatchmentPartition) -> Result<RiskTable> {
    if field.grid() != part.grid() {
        return Err(Error::invalid(
            "intensity field and catchment partition use different grids",
        ));
    }
    let a = field.grid().pixel_area();
    let mut sums = vec![0.0f64; part.stations().len()];
    for (idx, v) in field.values().iter().enumerate() {
        if let Some(s) = part.label_index(idx) {
            sums[s] += v * a;
        }
    }
    let entries = part
        .stations()
        .iter()
        .zip(sums)
        .map(|(s, v)| RiskEntry {
            station: s.id.clone(),
            risk: Risk::from_f64(v),
        })
        .collect();
    RiskTable::new("", entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_partition, Domain, GridSpec, Point, Station, Window};
    use crate::intensity::{fixed_estimate, PointPattern};

    fn two_station_domain(n: usize) -> (Domain, CatchmentPartition) {
        let w = Window::rect(0.0, 0.0, 2.0, 1.0).unwrap();
        let d = Domain::new(w.clone(), GridSpec::covering(&w, n, n).unwrap()).unwrap();
        let st = [
            Station::new("east", 1.5, 0.5).unwrap(),
            Station::new("west", 0.5, 0.5).unwrap(),
        ];
        let p = build_partition(&st, &d).unwrap();
        (d, p)
    }

    #[test]
    fn decimal_parsing() {
        assert_eq!(
            Decimal::parse("168.9"),
            Some(Decimal {
                mantissa: 1689,
                scale: 1
            })
        );
        assert_eq!(
            Decimal::parse("-0.050"),
            Some(Decimal {
                mantissa: -50,
                scale: 3
            })
        );
        assert_eq!(Decimal::parse("7"), Some(Decimal { mantissa: 7, scale: 0 }));
        assert_eq!(Decimal::parse("1e3"), None);
        assert_eq!(Decimal::parse("."), None);
        assert!(Risk::parse("abc").is_err());
    }

    #[test]
    fn exact_ratio_comparison() {
        let a = Risk::parse("0.3").unwrap();
        let b = Risk::parse("0.1").unwrap();
        assert_eq!(cmp_ratio(&a, 1, &b, 1), Ordering::Greater);
        assert_eq!(cmp_ratio(&a, 3, &b, 1), Ordering::Equal);
        // 168.9/4 = 42.225 vs 42.225
        let c = Risk::parse("168.9").unwrap();
        let d = Risk::parse("42.225").unwrap();
        assert_eq!(cmp_ratio(&c, 4, &d, 1), Ordering::Equal);
    }

    #[test]
    fn float_ratio_tolerance() {
        let a = Risk::from_f64(0.1 + 0.2);
        let b = Risk::from_f64(0.3);
        assert_eq!(cmp_ratio(&a, 1, &b, 1), Ordering::Equal);
        let c = Risk::from_f64(0.3 + 1e-9);
        assert_eq!(cmp_ratio(&c, 1, &b, 1), Ordering::Greater);
    }

    #[test]
    fn constant_field_equal_catchments() {
        let (d, p) = two_station_domain(64);
        let f = IntensityField::constant(&d, 3.0).unwrap();
        let t = catchment_risks(&f, &p).unwrap();
        assert_eq!(t.len(), 2);
        for e in t.entries() {
            assert!((e.risk.value() - 3.0).abs() < 1e-12, "{}", e.risk);
        }
        assert!((t.total() - f.total_mass()).abs() <= 1e-12 * f.total_mass());
    }

    #[test]
    fn tight_cluster_lands_in_one_catchment() {
        let (d, p) = two_station_domain(128);
        let pts = (0..20)
            .map(|k| Point::new(0.4 + 0.01 * (k % 5) as f64, 0.45 + 0.02 * (k / 5) as f64).unwrap())
            .collect();
        let pat = PointPattern::new(pts, d.window()).unwrap();
        let f = fixed_estimate(&pat, 0.01, &d).unwrap();
        let t = catchment_risks(&f, &p).unwrap();
        let west = t.get("west").unwrap().value();
        let east = t.get("east").unwrap().value();
        assert!((west - 20.0).abs() / 20.0 < 0.01, "{west}");
        assert!(east < 0.2, "{east}");
    }

    #[test]
    fn merging_cells_adds_risks() {
        let w = Window::rect(0.0, 0.0, 1.0, 1.0).unwrap();
        let d = Domain::new(w.clone(), GridSpec::covering(&w, 50, 50).unwrap()).unwrap();
        let pat = PointPattern::new(vec![Point::new(0.2, 0.2).unwrap(), Point::new(0.7, 0.6).unwrap()], &w).unwrap();
        let f = fixed_estimate(&pat, 0.15, &d).unwrap();
        let three = [
            Station::new("a", 0.2, 0.2).unwrap(),
            Station::new("b", 0.8, 0.2).unwrap(),
            Station::new("c", 0.5, 0.9).unwrap(),
        ];
        let part = build_partition(&three, &d).unwrap();
        let t = catchment_risks(&f, &part).unwrap();
        let mut merged = 0.0;
        for idx in 0..d.grid().len() {
            if matches!(part.label(idx), Some("a") | Some("b")) {
                merged += f.values()[idx] * d.grid().pixel_area();
            }
        }
        let sum = t.get("a").unwrap().value() + t.get("b").unwrap().value();
        assert!((merged - sum).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let (_, p) = two_station_domain(16);
        let w = Window::rect(0.0, 0.0, 2.0, 1.0).unwrap();
        let other = Domain::new(w.clone(), GridSpec::covering(&w, 8, 8).unwrap()).unwrap();
        let f = IntensityField::constant(&other, 1.0).unwrap();
        assert!(catchment_risks(&f, &p).is_err());
    }

    #[test]
    fn table_validation_and_floor() {
        assert!(RiskTable::from_values([("a", 1.0), ("a", 2.0)]).is_err());
        assert!(RiskTable::from_values([("a", -1.0)]).is_err());
        let t = RiskTable::from_values([("a", 0.0), ("b", 2.0)]).unwrap();
        let f = t.with_floor(0.5).unwrap();
        assert_eq!(f.get("a").unwrap().value(), 0.5);
        assert_eq!(f.get("b").unwrap().value(), 2.0);
        let sorted = RiskTable::from_values([("x", 1.0), ("y", 3.0), ("z", 2.0)])
            .unwrap()
            .sorted_by_risk();
        let ids: Vec<_> = sorted.entries().iter().map(|e| e.station.as_str()).collect();
        assert_eq!(ids, ["y", "z", "x"]);
    }
}
