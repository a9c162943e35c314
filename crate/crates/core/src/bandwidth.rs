//! Bandwidth selection over a finite grid of candidates.
//!
//! Two criteria are available:
//!
//! * leave-one-out likelihood: `Σ_x log λ̂(x; Ψ∖{x}) − ∫_W λ̂`, maximized;
//! * CvL: `|Σ_x 1/λ̂(x) − area(W)|`, minimized.
//!
//! Estimates at data points are read at the point's pixel centre.

use std::cmp::Ordering;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Domain, Window};
use crate::intensity::{EstimateOptions, IntensityField, KernelTables, PointPattern, Scaling};

/// Number of candidates in the default search grid.
pub const DEFAULT_GRID_COUNT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    LooCv,
    Cvl,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::LooCv => "loocv",
            Method::Cvl => "cvl",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "loocv" => Ok(Method::LooCv),
            "cvl" => Ok(Method::Cvl),
            other => Err(Error::invalid(format!(
                "unknown bandwidth method `{other}` (expected loocv or cvl)"
            ))),
        }
    }
}

/// `count` log-spaced values from `min` to `max` inclusive.
pub fn log_spaced(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max.is_finite() && max >= min) || count == 0 {
        return Err(Error::invalid(format!("invalid log grid {min}:{max}:{count}")));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let (a, b) = (min.ln(), max.ln());
    Ok((0..count)
        .map(|i| {
            if i == count - 1 {
                max
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct BandwidthSearch {
    h_grid: Vec<f64>,
    method: Method,
    scores: Vec<f64>,
}

impl BandwidthSearch {
    pub fn new(h_grid: Vec<f64>, method: Method) -> Result<Self> {
        if h_grid.is_empty() {
            return Err(Error::invalid("bandwidth grid is empty"));
        }
        if let Some(h) = h_grid.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(Error::invalid(format!("bandwidth {h} is not positive")));
        }
        if h_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("bandwidth grid must be strictly increasing"));
        }
        Ok(BandwidthSearch {
            h_grid,
            method,
            scores: Vec::new(),
        })
    }

    /// Default grid: 32 log-spaced values between diameter/1000 and diameter/2.
    pub fn default_for(window: &Window, method: Method) -> Result<Self> {
        let d = window.diameter();
        BandwidthSearch::new(log_spaced(d / 1000.0, d / 2.0, DEFAULT_GRID_COUNT)?, method)
    }

    pub fn h_grid(&self) -> &[f64] {
        &self.h_grid
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Scores in grid order; empty until the search has run.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

/// Leave-one-out cross-validation log likelihood.
///
/// A zero leave-one-out estimate at some point yields `-inf`. A point whose
/// reduced pattern is empty (N = 1) contributes no log term.
pub fn loo_cv_score(pattern: &PointPattern, h: f64, domain: &Domain, scaling: Scaling<'_>) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
    }
    let n = pattern.len();
    let bw = scaling.local_bandwidths(h, n)?;
    if n == 0 {
        return Ok(0.0);
    }
    let opts = EstimateOptions::default();
    let tables = KernelTables::build(pattern, &bw, domain, opts)?;
    let mass = tables.mass(domain);
    if n == 1 {
        return Ok(-mass);
    }
    let loo: Vec<f64> = match scaling {
        Scaling::AdaptiveRecomputed(c) => loo_recomputed(pattern, h, c.factors(), domain)?,
        _ => (0..n).into_par_iter().map(|m| tables.value_at_point(m, true)).collect(),
    };
    let mut log_sum = 0.0;
    for v in loo {
        if v.is_nan() || v <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_sum += v.ln();
    }
    Ok(log_sum - mass)
}

/// Leave-one-out values when the scaling factors are renormalized over Ψ∖{x}.
///
/// Dropping `x` rescales every remaining factor by `sqrt(G_{-x} / G)`, where
/// `G` is the geometric mean of the pilot; in terms of the factors themselves
/// `ln(G_{-x}/G) = -2 (mean_{-x} ln c − mean ln c)`.
fn loo_recomputed(pattern: &PointPattern, h: f64, c: &[f64], domain: &Domain) -> Result<Vec<f64>> {
    let n = c.len();
    let logs: Vec<f64> = c.iter().map(|v| v.ln()).collect();
    let total: f64 = logs.iter().sum();
    let mean = total / n as f64;
    (0..n)
        .into_par_iter()
        .map(|m| {
            let mean_rest = (total - logs[m]) / (n - 1) as f64;
            let r = (-(mean_rest - mean)).exp();
            let rest: Vec<_> = pattern
                .points()
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != m)
                .map(|(_, p)| *p)
                .collect();
            let bw: Vec<f64> = (0..n).filter(|&k| k != m).map(|k| h * c[k] * r).collect();
            let reduced = PointPattern::from_trusted(rest);
            let tables = KernelTables::build(&reduced, &bw, domain, EstimateOptions::default())?;
            let target = domain.lookup_pixel(&pattern.points()[m]);
            Ok(tables.value_at_pixel(target))
        })
        .collect()
}

/// Reciprocal-intensity sum `Σ_x 1/λ̂(x)`, or the window area for an empty pattern.
#[allow(non_snake_case)]
pub fn cvl_T(pattern: &PointPattern, field: &IntensityField, domain: &Domain) -> Result<f64> {
    if pattern.is_empty() {
        return Ok(domain.window().area());
    }
    if field.grid() != domain.grid() {
        return Err(Error::invalid("field and domain use different grids"));
    }
    reciprocal_sum(pattern.points().iter().map(|p| field.value_at(domain, p)))
}

fn reciprocal_sum(values: impl Iterator<Item = f64>) -> Result<f64> {
    // Neumaier summation
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Numeric(format!("intensity {v} at a data point is not positive")));
        }
        let t = 1.0 / v;
        let s = sum + t;
        comp += if sum.abs() >= t.abs() {
            (sum - s) + t
        } else {
            (t - s) + sum
        };
        sum = s;
    }
    Ok(sum + comp)
}

/// CvL criterion `F(h) = |T(h) − area(W)|`.
pub fn cvl_score(pattern: &PointPattern, h: f64, domain: &Domain, scaling: Scaling<'_>) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
    }
    let bw = scaling.local_bandwidths(h, pattern.len())?;
    let area = domain.window().area();
    if pattern.is_empty() {
        return Ok(0.0);
    }
    let tables = KernelTables::build(pattern, &bw, domain, EstimateOptions::default())?;
    let t = reciprocal_sum((0..pattern.len()).map(|m| tables.value_at_point(m, false)))?;
    Ok((t - area).abs())
}

/// Index of the best score: largest for LOOCV, smallest for CvL; ties go to
/// the earliest (smallest-h) entry. Non-finite scores never win.
pub fn best_index(scores: &[f64], method: Method) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let ord = s.partial_cmp(&scores[b]).unwrap_or(Ordering::Equal);
                match method {
                    Method::LooCv => ord == Ordering::Greater,
                    Method::Cvl => ord == Ordering::Less,
                }
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Score every candidate bandwidth and return the selected one.
///
/// Candidates whose estimate fails numerically (kernel mass lost below the
/// pixel scale, zero density at a point) score `-inf` for LOOCV and `+inf`
/// for CvL and are skipped.
pub fn select_bandwidth(
    search: &mut BandwidthSearch,
    pattern: &PointPattern,
    domain: &Domain,
    scaling: Scaling<'_>,
) -> Result<f64> {
    let method = search.method;
    let scores: Vec<Result<f64>> = search
        .h_grid
        .par_iter()
        .map(|&h| {
            let r = match method {
                Method::LooCv => loo_cv_score(pattern, h, domain, scaling),
                Method::Cvl => cvl_score(pattern, h, domain, scaling),
            };
            match r {
                Err(Error::Numeric(_)) => Ok(match method {
                    Method::LooCv => f64::NEG_INFINITY,
                    Method::Cvl => f64::INFINITY,
                }),
                other => other,
            }
        })
        .collect();
    search.scores = scores.into_iter().collect::<Result<Vec<f64>>>()?;
    let idx = best_index(&search.scores, method).ok_or_else(|| {
        Error::Numeric(format!(
            "no candidate bandwidth produced a finite {} score",
            method.name()
        ))
    })?;
    Ok(search.h_grid[idx])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridSpec, Point};
    use crate::intensity::{fixed_estimate, IntensityField};
    use crate::simulate::{sample_poisson, IntensitySpec};

    fn unit_domain(n: usize) -> Domain {
        let w = Window::rect(0.0, 0.0, 1.0, 1.0).unwrap();
        Domain::new(w.clone(), GridSpec::covering(&w, n, n).unwrap()).unwrap()
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_spaced(0.001, 0.5, 32).unwrap();
        assert_eq!(g.len(), 32);
        assert!((g[0] - 0.001).abs() < 1e-15);
        assert_eq!(g[31], 0.5);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let d = BandwidthSearch::default_for(&Window::rect(0.0, 0.0, 3.0, 4.0).unwrap(), Method::Cvl).unwrap();
        assert!((d.h_grid()[0] - 0.005).abs() < 1e-15);
        assert_eq!(d.h_grid()[31], 2.5);
    }

    #[test]
    fn search_validation() {
        assert!(BandwidthSearch::new(vec![], Method::LooCv).is_err());
        assert!(BandwidthSearch::new(vec![0.1, 0.1], Method::LooCv).is_err());
        assert!(BandwidthSearch::new(vec![-0.1, 0.1], Method::LooCv).is_err());
        assert!("CVL".parse::<Method>().is_ok());
        assert!("plugin".parse::<Method>().is_err());
    }

    #[test]
    fn empty_pattern_scores() {
        let d = unit_domain(16);
        let e = PointPattern::empty();
        assert_eq!(loo_cv_score(&e, 0.1, &d, Scaling::Fixed).unwrap(), 0.0);
        assert_eq!(cvl_score(&e, 0.1, &d, Scaling::Fixed).unwrap(), 0.0);
        let f = fixed_estimate(&e, 0.1, &d).unwrap();
        assert_eq!(cvl_T(&e, &f, &d).unwrap(), 1.0);
    }

    #[test]
    fn two_point_loo_by_hand() {
        // huge window so the edge weight is 1; both points sit on pixel centres
        let w = Window::rect(-50.0, -50.0, 50.0, 50.0).unwrap();
        let d = Domain::new(w.clone(), GridSpec::covering(&w, 400, 400).unwrap()).unwrap();
        let pts = vec![Point::new(0.125, 0.125).unwrap(), Point::new(1.125, 0.125).unwrap()];
        let pat = PointPattern::new(pts, &w).unwrap();
        let score = loo_cv_score(&pat, 1.0, &d, Scaling::Fixed).unwrap();
        let by_hand = 2.0 * ((-0.5f64).exp() / (2.0 * std::f64::consts::PI)).ln() - 2.0;
        assert!((score - by_hand).abs() < 1e-9, "{score} vs {by_hand}");
        assert!((score - -6.67575).abs() < 1e-5);
    }

    #[test]
    fn loo_integral_term_is_n() {
        let d = unit_domain(128);
        let pat = sample_poisson(&IntensitySpec::constant(60.0), d.window(), 3).unwrap();
        let n = pat.len() as f64;
        for h in [0.02, 0.1, 0.4] {
            let bw = vec![h; pat.len()];
            let t = KernelTables::build(&pat, &bw, &d, EstimateOptions::default()).unwrap();
            assert!((t.mass(&d) - n).abs() / n < 0.01);
            let field = fixed_estimate(&pat, h, &d).unwrap();
            assert!((field.total_mass() - t.mass(&d)).abs() < 1e-9 * n);
        }
    }

    #[test]
    fn cvl_constant_field_and_homogeneity() {
        let d = unit_domain(8);
        let pts = (0..4).map(|k| Point::new(0.1 + 0.2 * k as f64, 0.5).unwrap()).collect();
        let pat = PointPattern::new(pts, d.window()).unwrap();
        let flat = IntensityField::constant(&d, 4.0).unwrap();
        assert_eq!(cvl_T(&pat, &flat, &d).unwrap(), 1.0);
        let double = IntensityField::constant(&d, 8.0).unwrap();
        assert_eq!(cvl_T(&pat, &double, &d).unwrap(), 0.5);
        let zero = IntensityField::constant(&d, 0.0).unwrap();
        assert!(matches!(cvl_T(&pat, &zero, &d), Err(Error::Numeric(_))));
    }

    #[test]
    fn cvl_score_matches_field_route() {
        let d = unit_domain(64);
        let pat = sample_poisson(&IntensitySpec::constant(40.0), d.window(), 11).unwrap();
        for h in [0.03, 0.2] {
            let f = fixed_estimate(&pat, h, &d).unwrap();
            let t = cvl_T(&pat, &f, &d).unwrap();
            let direct = cvl_score(&pat, h, &d, Scaling::Fixed).unwrap();
            assert!(((t - 1.0).abs() - direct).abs() < 1e-12);
            assert!(direct >= 0.0);
        }
    }

    #[test]
    fn best_index_rules() {
        assert_eq!(best_index(&[1.0, 3.0, 3.0, 2.0], Method::LooCv), Some(1));
        assert_eq!(best_index(&[1.0, 0.5, 0.5], Method::Cvl), Some(1));
        assert_eq!(best_index(&[f64::NEG_INFINITY, -2.0], Method::LooCv), Some(1));
        assert_eq!(best_index(&[f64::NEG_INFINITY, f64::NAN], Method::LooCv), None);
    }

    #[test]
    fn single_candidate_is_returned() {
        let d = unit_domain(32);
        let pat = sample_poisson(&IntensitySpec::constant(20.0), d.window(), 5).unwrap();
        let mut s = BandwidthSearch::new(vec![0.13], Method::Cvl).unwrap();
        assert_eq!(select_bandwidth(&mut s, &pat, &d, Scaling::Fixed).unwrap(), 0.13);
        assert_eq!(s.scores().len(), 1);
    }

    #[test]
    fn selection_matches_exhaustive_scan() {
        let d = unit_domain(64);
        let pat = sample_poisson(&IntensitySpec::constant(50.0), d.window(), 21).unwrap();
        let grid = log_spaced(0.01, 0.5, 10).unwrap();
        for method in [Method::LooCv, Method::Cvl] {
            let mut s = BandwidthSearch::new(grid.clone(), method).unwrap();
            let h = select_bandwidth(&mut s, &pat, &d, Scaling::Fixed).unwrap();
            // exhaustive scan, evaluated one at a time in reverse order
            let mut scored: Vec<(f64, f64)> = grid
                .iter()
                .rev()
                .map(|&h| {
                    let v = match method {
                        Method::LooCv => loo_cv_score(&pat, h, &d, Scaling::Fixed).unwrap(),
                        Method::Cvl => cvl_score(&pat, h, &d, Scaling::Fixed).unwrap(),
                    };
                    (h, v)
                })
                .collect();
            scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let best = scored
                .iter()
                .fold(None::<(f64, f64)>, |acc, &(h, v)| match acc {
                    None => Some((h, v)),
                    Some((bh, bv)) => {
                        let better = match method {
                            Method::LooCv => v > bv,
                            Method::Cvl => v < bv,
                        };
                        Some(if better { (h, v) } else { (bh, bv) })
                    }
                })
                .unwrap();
            assert_eq!(h, best.0);
        }
    }

    #[test]
    fn clustered_pattern_selects_smaller_pilot_bandwidth() {
        let d = unit_domain(64);
        let w = d.window();
        let diffuse = sample_poisson(&IntensitySpec::constant(80.0), w, 9).unwrap();
        let clusters = IntensitySpec::function(
            |p: &Point| {
                let a = ((p.x - 0.25).powi(2) + (p.y - 0.25).powi(2)) / (2.0 * 0.03f64.powi(2));
                let b = ((p.x - 0.75).powi(2) + (p.y - 0.7).powi(2)) / (2.0 * 0.03f64.powi(2));
                2000.0 * ((-a).exp() + (-b).exp())
            },
            2000.0,
        );
        let clustered = sample_poisson(&clusters, w, 9).unwrap();
        let grid = log_spaced(0.005, 0.5, 20).unwrap();
        let h_diffuse = crate::intensity::pilot_estimate(&diffuse, &d, &grid).unwrap().bandwidth;
        let h_clustered = crate::intensity::pilot_estimate(&clustered, &d, &grid)
            .unwrap()
            .bandwidth;
        assert!(h_clustered < h_diffuse, "{h_clustered} vs {h_diffuse}");
    }

    #[test]
    fn recomputed_factors_stay_close_to_fixed() {
        let d = unit_domain(32);
        let pat = sample_poisson(&IntensitySpec::constant(30.0), d.window(), 4).unwrap();
        let pilot = fixed_estimate(&pat, 0.1, &d).unwrap();
        let c = crate::intensity::scaling_factors(&pilot, &pat, &d).unwrap();
        let fixed = loo_cv_score(&pat, 0.1, &d, Scaling::Adaptive(&c)).unwrap();
        let recomputed = loo_cv_score(&pat, 0.1, &d, Scaling::AdaptiveRecomputed(&c)).unwrap();
        assert!(fixed.is_finite() && recomputed.is_finite());
        assert!(
            (fixed - recomputed).abs() / fixed.abs() < 0.05,
            "{fixed} vs {recomputed}"
        );
        // with uniform factors renormalization changes nothing
        let u = crate::intensity::ScalingFactors::uniform(pat.len());
        let a = loo_cv_score(&pat, 0.1, &d, Scaling::Adaptive(&u)).unwrap();
        let b = loo_cv_score(&pat, 0.1, &d, Scaling::AdaptiveRecomputed(&u)).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs());
    }
}
