//! Kernel estimation of the incident intensity function.
//!
//! All estimators here use the isotropic Gaussian kernel in the plane with
//! global edge correction: each data point's kernel is divided by the kernel
//! mass retained inside the window, measured with the same pixel-centre
//! quadrature that later integrates the field. Every point therefore
//! contributes exactly unit mass to the raster integral.
//!
//! The Gaussian is separable, so for a point `y` with local bandwidth `s` the
//! kernel at pixel `(i, j)` is `ex[i] * ey[j] / (2 pi s^2)`. The per-axis
//! factors are computed once per point and reused for the field, the edge
//! weight and the leave-one-out values.

use std::collections::HashSet;
use std::f64::consts::PI;

use rayon::prelude::*;

use crate::bandwidth::{self, BandwidthSearch, Method};
use crate::error::{Error, Result};
use crate::geometry::{Domain, GridSpec, Point, Window};

/// Relative floor applied to pilot values at data points, in units of `N / area`.
pub const PILOT_FLOOR: f64 = 1e-12;

/// Truncation radius, in local bandwidths, when kernel cutoff is enabled.
pub const CUTOFF_RADIUS: f64 = 6.0;

/// Standard bivariate Gaussian density at displacement `(zx, zy)`.
pub fn gaussian_kernel(zx: f64, zy: f64) -> f64 {
    (-0.5 * (zx * zx + zy * zy)).exp() / (2.0 * PI)
}

/// Incident locations inside a window. Duplicates are rejected.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointPattern {
    points: Vec<Point>,
}

impl PointPattern {
    pub fn new(points: Vec<Point>, window: &Window) -> Result<Self> {
        let mut seen = HashSet::with_capacity(points.len());
        for (k, p) in points.iter().enumerate() {
            if !window.contains(p) {
                return Err(Error::invalid(format!(
                    "point {k} at ({}, {}) lies outside the window",
                    p.x, p.y
                )));
            }
            if !seen.insert((p.x.to_bits(), p.y.to_bits())) {
                return Err(Error::invalid(format!(
                    "duplicate point ({}, {}); the pattern must be simple",
                    p.x, p.y
                )));
            }
        }
        Ok(PointPattern { points })
    }

    pub fn empty() -> Self {
        PointPattern::default()
    }

    /// Subsets of an already validated pattern.
    pub(crate) fn from_trusted(points: Vec<Point>) -> Self {
        PointPattern { points }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-point bandwidth multipliers c(y).
///
/// Factors produced by [`scaling_factors`] have geometric mean one; factors
/// built with [`ScalingFactors::new`] need only be positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFactors {
    factors: Vec<f64>,
}

impl ScalingFactors {
    pub fn new(factors: Vec<f64>) -> Result<Self> {
        if let Some(c) = factors.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::invalid(format!(
                "scaling factor must be positive and finite, got {c}"
            )));
        }
        Ok(ScalingFactors { factors })
    }

    pub fn uniform(n: usize) -> Self {
        ScalingFactors { factors: vec![1.0; n] }
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn geometric_mean(&self) -> f64 {
        if self.factors.is_empty() {
            return 1.0;
        }
        let mean_log = self.factors.iter().map(|c| c.ln()).sum::<f64>() / self.factors.len() as f64;
        mean_log.exp()
    }
}

/// How local bandwidths are formed from the global bandwidth `h`.
#[derive(Debug, Clone, Copy)]
pub enum Scaling<'a> {
    /// Every point uses `h`.
    Fixed,
    /// Point `y` uses `h * c(y)`; leave-one-out keeps `c` from the full pattern.
    Adaptive(&'a ScalingFactors),
    /// As `Adaptive`, but leave-one-out renormalizes the factors' geometric
    /// mean over the reduced pattern.
    AdaptiveRecomputed(&'a ScalingFactors),
}

impl Scaling<'_> {
    fn factors(&self) -> Option<&ScalingFactors> {
        match self {
            Scaling::Fixed => None,
            Scaling::Adaptive(c) | Scaling::AdaptiveRecomputed(c) => Some(c),
        }
    }

    pub(crate) fn local_bandwidths(&self, h: f64, n: usize) -> Result<Vec<f64>> {
        match self.factors() {
            None => Ok(vec![h; n]),
            Some(c) => {
                if c.len() != n {
                    return Err(Error::invalid(format!(
                        "{} scaling factors for a pattern of {n} points",
                        c.len()
                    )));
                }
                Ok(c.factors().iter().map(|c| h * c).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EstimateOptions {
    /// Zero the kernel beyond [`CUTOFF_RADIUS`] local bandwidths.
    pub truncate: bool,
}

/// Intensity estimate sampled at pixel centres; zero outside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityField {
    grid: GridSpec,
    values: Vec<f64>,
    total_mass: f64,
}

impl IntensityField {
    /// Wrap raw pixel values. Values must be finite and non-negative.
    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "field has {} values for a {}x{} grid",
                values.len(),
                grid.nx,
                grid.ny
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!("field value {v} is negative or non-finite")));
        }
        let total_mass = raster_sum(&values, grid.pixel_area());
        Ok(IntensityField {
            grid,
            values,
            total_mass,
        })
    }

    /// Constant value on the in-window pixels of `domain`.
    pub fn constant(domain: &Domain, value: f64) -> Result<Self> {
        let values = domain.mask().iter().map(|&m| if m { value } else { 0.0 }).collect();
        IntensityField::from_values(*domain.grid(), values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Value read at a data point (see [`Domain::lookup_pixel`]).
    pub fn value_at(&self, domain: &Domain, p: &Point) -> f64 {
        self.values[domain.lookup_pixel(p)]
    }
}

fn raster_sum(values: &[f64], pixel_area: f64) -> f64 {
    values.iter().map(|v| v * pixel_area).sum()
}

/// Raster integral of the field over a set of pixel indices.
pub fn integrate_field<I>(field: &IntensityField, region: I) -> f64
where
    I: IntoIterator<Item = usize>,
{
    let a = field.grid.pixel_area();
    region.into_iter().map(|idx| field.values[idx] * a).sum()
}

fn axis_factors(out: &mut [f64], origin: f64, step: f64, u: f64, s: f64, truncate: bool) {
    let cut = CUTOFF_RADIUS * s;
    for (k, e) in out.iter_mut().enumerate() {
        let d = origin + (k as f64 + 0.5) * step - u;
        *e = if truncate && d.abs() > cut {
            0.0
        } else {
            let z = d / s;
            (-0.5 * z * z).exp()
        };
    }
}

/// Σ over in-window pixels of `ex[i] * ey[j]`.
fn retained_sum(domain: &Domain, ex: &[f64], ey: &[f64]) -> f64 {
    if domain.is_full() {
        return ex.iter().sum::<f64>() * ey.iter().sum::<f64>();
    }
    let mut prefix = Vec::with_capacity(ex.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for e in ex {
        acc += e;
        prefix.push(acc);
    }
    let mut total = 0.0;
    for (j, &wy) in ey.iter().enumerate() {
        if wy == 0.0 {
            continue;
        }
        let row: f64 = domain.row_runs(j).iter().map(|&(a, b)| prefix[b] - prefix[a]).sum();
        total += wy * row;
    }
    total
}

/// Separable kernel factors for every data point at its local bandwidth.
pub(crate) struct KernelTables {
    nx: usize,
    ny: usize,
    ex: Vec<f64>,
    ey: Vec<f64>,
    /// `1 / (retained_sum * pixel_area)`: kernel normalization times inverse edge weight.
    amp: Vec<f64>,
    /// Pixel used to read the estimate at each data point.
    lookup: Vec<(usize, usize)>,
}

impl KernelTables {
    pub(crate) fn build(
        pattern: &PointPattern,
        bandwidths: &[f64],
        domain: &Domain,
        opts: EstimateOptions,
    ) -> Result<Self> {
        let g = *domain.grid();
        let (nx, ny) = (g.nx, g.ny);
        let n = pattern.len();
        let mut ex = vec![0.0; n * nx];
        let mut ey = vec![0.0; n * ny];
        let amp: Vec<Result<f64>> = ex
            .par_chunks_mut(nx.max(1))
            .zip(ey.par_chunks_mut(ny.max(1)))
            .zip(pattern.points().par_iter().zip(bandwidths.par_iter()))
            .map(|((rx, ry), (p, &s))| {
                axis_factors(rx, g.origin.x, g.dx, p.x, s, opts.truncate);
                axis_factors(ry, g.origin.y, g.dy, p.y, s, opts.truncate);
                let kept = retained_sum(domain, rx, ry);
                if !(kept > 0.0 && kept.is_finite()) {
                    return Err(Error::Numeric(format!(
                        "kernel of bandwidth {s} at ({}, {}) has no mass on the raster; \
                         bandwidth is too small for the grid",
                        p.x, p.y
                    )));
                }
                Ok(1.0 / (kept * g.pixel_area()))
            })
            .collect();
        let amp = amp.into_iter().collect::<Result<Vec<f64>>>()?;
        let lookup = pattern
            .points()
            .iter()
            .map(|p| {
                let idx = domain.lookup_pixel(p);
                (idx % nx, idx / nx)
            })
            .collect();
        Ok(KernelTables {
            nx,
            ny,
            ex,
            ey,
            amp,
            lookup,
        })
    }

    fn len(&self) -> usize {
        self.amp.len()
    }

    /// Contribution of point `k` at pixel `(i, j)`.
    fn term(&self, k: usize, i: usize, j: usize) -> f64 {
        self.amp[k] * self.ey[k * self.ny + j] * self.ex[k * self.nx + i]
    }

    /// Estimate at the lookup pixel of data point `m`, optionally leaving `m` out.
    pub(crate) fn value_at_point(&self, m: usize, leave_out: bool) -> f64 {
        let (i, j) = self.lookup[m];
        (0..self.len())
            .filter(|&k| !(leave_out && k == m))
            .map(|k| self.term(k, i, j))
            .sum()
    }

    /// Estimate at pixel `idx` from every point in the tables.
    pub(crate) fn value_at_pixel(&self, idx: usize) -> f64 {
        let (i, j) = (idx % self.nx, idx / self.nx);
        (0..self.len()).map(|k| self.term(k, i, j)).sum()
    }

    /// Raster integral of the estimate: Σ_k amp_k · retained_k · pixel_area.
    pub(crate) fn mass(&self, domain: &Domain) -> f64 {
        let a = domain.grid().pixel_area();
        (0..self.len())
            .map(|k| {
                let ex = &self.ex[k * self.nx..(k + 1) * self.nx];
                let ey = &self.ey[k * self.ny..(k + 1) * self.ny];
                self.amp[k] * retained_sum(domain, ex, ey) * a
            })
            .sum()
    }

    fn field(&self, domain: &Domain) -> Result<IntensityField> {
        let g = *domain.grid();
        let mut values = vec![0.0; g.len()];
        values.par_chunks_mut(g.nx).enumerate().for_each(|(j, row)| {
            let runs = domain.row_runs(j);
            if runs.is_empty() {
                return;
            }
            // fixed input order per pixel keeps the sums deterministic
            for k in 0..self.len() {
                let a = self.amp[k] * self.ey[k * self.ny + j];
                if a == 0.0 {
                    continue;
                }
                let ex = &self.ex[k * self.nx..(k + 1) * self.nx];
                for &(s, e) in runs {
                    for i in s..e {
                        row[i] += a * ex[i];
                    }
                }
            }
        });
        IntensityField::from_values(g, values)
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!(
            "bandwidth must be positive and finite, got {h}"
        )));
    }
    Ok(())
}

/// Global edge-correction weight: mass of the kernel with local bandwidth
/// `hc` centred at `u` that falls inside the window.
pub fn edge_weight(u: &Point, hc: f64, domain: &Domain) -> Result<f64> {
    edge_weight_with(u, hc, domain, EstimateOptions::default())
}

pub fn edge_weight_with(u: &Point, hc: f64, domain: &Domain, opts: EstimateOptions) -> Result<f64> {
    check_bandwidth(hc)?;
    let g = domain.grid();
    let mut ex = vec![0.0; g.nx];
    let mut ey = vec![0.0; g.ny];
    axis_factors(&mut ex, g.origin.x, g.dx, u.x, hc, opts.truncate);
    axis_factors(&mut ey, g.origin.y, g.dy, u.y, hc, opts.truncate);
    Ok(retained_sum(domain, &ex, &ey) * g.pixel_area() / (2.0 * PI * hc * hc))
}

/// Edge-corrected kernel estimate with the given bandwidth scaling.
pub fn estimate(
    pattern: &PointPattern,
    h: f64,
    scaling: Scaling<'_>,
    domain: &Domain,
    opts: EstimateOptions,
) -> Result<IntensityField> {
    check_bandwidth(h)?;
    let bw = scaling.local_bandwidths(h, pattern.len())?;
    if pattern.is_empty() {
        return IntensityField::from_values(*domain.grid(), vec![0.0; domain.grid().len()]);
    }
    KernelTables::build(pattern, &bw, domain, opts)?.field(domain)
}

/// Fixed-bandwidth estimate (all scaling factors equal to one).
pub fn fixed_estimate(pattern: &PointPattern, h: f64, domain: &Domain) -> Result<IntensityField> {
    estimate(pattern, h, Scaling::Fixed, domain, EstimateOptions::default())
}

/// Adaptive estimate: point `y` is smoothed with local bandwidth `h * c(y)`.
pub fn adaptive_estimate(
    pattern: &PointPattern,
    h: f64,
    c: &ScalingFactors,
    domain: &Domain,
) -> Result<IntensityField> {
    estimate(pattern, h, Scaling::Adaptive(c), domain, EstimateOptions::default())
}

/// Square-root-law factors `c(y) = (pilot(y) / G)^(-1/2)`, where `G` is the
/// geometric mean of the pilot over the data points.
///
/// Pilot values are read at each point's pixel and floored at
/// `PILOT_FLOOR * N / area(W)`.
pub fn scaling_factors(pilot: &IntensityField, pattern: &PointPattern, domain: &Domain) -> Result<ScalingFactors> {
    if pattern.is_empty() {
        return Err(Error::invalid("scaling factors need a non-empty pattern"));
    }
    if pilot.grid() != domain.grid() {
        return Err(Error::invalid("pilot field and domain use different grids"));
    }
    let n = pattern.len() as f64;
    let floor = PILOT_FLOOR * n / domain.window().area();
    let logs = pattern
        .points()
        .iter()
        .map(|p| {
            let v = pilot.value_at(domain, p).max(floor);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "pilot value {v} at ({}, {}) is not positive",
                    p.x, p.y
                )));
            }
            Ok(v.ln())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = logs.iter().sum::<f64>() / n;
    let factors = logs.iter().map(|l| (-0.5 * (l - mean)).exp()).collect();
    ScalingFactors::new(factors)
}

#[derive(Debug, Clone)]
pub struct Pilot {
    pub field: IntensityField,
    pub bandwidth: f64,
    /// Leave-one-out likelihood per candidate bandwidth, in grid order.
    pub scores: Vec<f64>,
}

/// Fixed-bandwidth pilot whose bandwidth maximizes the leave-one-out likelihood.
pub fn pilot_estimate(pattern: &PointPattern, domain: &Domain, h_grid: &[f64]) -> Result<Pilot> {
    if pattern.is_empty() {
        return Err(Error::invalid("a pilot estimate needs at least one point"));
    }
    let mut search = BandwidthSearch::new(h_grid.to_vec(), Method::LooCv)?;
    let h = bandwidth::select_bandwidth(&mut search, pattern, domain, Scaling::Fixed)?;
    let field = fixed_estimate(pattern, h, domain)?;
    Ok(Pilot {
        field,
        bandwidth: h,
        scores: search.scores().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{sample_poisson, IntensitySpec};
    use proptest::prelude::*;

    fn unit() -> Window {
        Window::rect(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    fn domain(n: usize) -> Domain {
        let w = unit();
        Domain::new(w.clone(), GridSpec::covering(&w, n, n).unwrap()).unwrap()
    }

    fn pattern(pts: &[(f64, f64)]) -> PointPattern {
        let pts = pts.iter().map(|&(x, y)| Point::new(x, y).unwrap()).collect();
        PointPattern::new(pts, &unit()).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert!((gaussian_kernel(0.0, 0.0) - 0.159_154_943_091_895_3).abs() < 1e-15);
        assert!((gaussian_kernel(1.0, 0.0) - (-0.5f64).exp() / (2.0 * PI)).abs() < 1e-15);
        assert!((gaussian_kernel(1.0, 0.0) - 0.096_532_4).abs() < 1e-7);
    }

    proptest! {
        #[test]
        fn kernel_is_even(x in -10.0f64..10.0, y in -10.0f64..10.0) {
            prop_assert_eq!(gaussian_kernel(x, y), gaussian_kernel(-x, -y));
        }
    }

    #[test]
    fn pattern_rejects_duplicates_and_outsiders() {
        let w = unit();
        let p = Point::new(0.5, 0.5).unwrap();
        assert!(PointPattern::new(vec![p, p], &w).is_err());
        assert!(PointPattern::new(vec![Point::new(2.0, 0.5).unwrap()], &w).is_err());
    }

    #[test]
    fn edge_weight_interior_is_one() {
        let d = domain(256);
        let w = edge_weight(&Point::new(0.5, 0.5).unwrap(), 0.01, &d).unwrap();
        assert!((w - 1.0).abs() < 1e-6, "{w}");
        assert!(edge_weight(&Point::new(0.5, 0.5).unwrap(), 0.0, &d).is_err());
    }

    #[test]
    fn empty_pattern_gives_zero_field() {
        let d = domain(32);
        let f = fixed_estimate(&PointPattern::empty(), 0.1, &d).unwrap();
        assert_eq!(f.total_mass(), 0.0);
        assert!(f.values().iter().all(|&v| v == 0.0));
        assert!(fixed_estimate(&PointPattern::empty(), -1.0, &d).is_err());
    }

    #[test]
    fn single_point_has_unit_mass() {
        let d = domain(256);
        for h in [0.005, 0.05, 0.3, 2.0] {
            let f = fixed_estimate(&pattern(&[(0.1, 0.93)]), h, &d).unwrap();
            assert!((f.total_mass() - 1.0).abs() < 0.01, "h={h} mass={}", f.total_mass());
        }
    }

    #[test]
    fn mass_on_polygon_window() {
        let tri = Window::polygon(vec![
            Point::new(0.0, 0.0).unwrap(),
            Point::new(1.0, 0.0).unwrap(),
            Point::new(0.0, 1.0).unwrap(),
        ])
        .unwrap();
        let d = Domain::new(tri.clone(), GridSpec::covering(&tri, 128, 128).unwrap()).unwrap();
        let pts = vec![
            Point::new(0.1, 0.1).unwrap(),
            Point::new(0.45, 0.5).unwrap(),
            Point::new(0.0, 0.9).unwrap(),
        ];
        let pat = PointPattern::new(pts, &tri).unwrap();
        let f = fixed_estimate(&pat, 0.2, &d).unwrap();
        assert!((f.total_mass() - 3.0).abs() < 1e-9);
        // nothing outside the window
        for (idx, v) in f.values().iter().enumerate() {
            if !d.mask()[idx] {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn adaptive_with_unit_factors_reduces_to_fixed() {
        let d = domain(64);
        let pat = pattern(&[(0.2, 0.3), (0.8, 0.1), (0.5, 0.55), (0.51, 0.56)]);
        let fixed = fixed_estimate(&pat, 0.07, &d).unwrap();
        let adaptive = adaptive_estimate(&pat, 0.07, &ScalingFactors::uniform(4), &d).unwrap();
        for (a, b) in fixed.values().iter().zip(adaptive.values()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn only_product_of_h_and_c_matters() {
        let d = domain(64);
        let pat = pattern(&[(0.5, 0.5)]);
        let a = adaptive_estimate(&pat, 0.05, &ScalingFactors::new(vec![2.0]).unwrap(), &d).unwrap();
        let b = fixed_estimate(&pat, 0.1, &d).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn mismatched_factors_rejected() {
        let d = domain(16);
        let pat = pattern(&[(0.5, 0.5), (0.2, 0.2)]);
        assert!(adaptive_estimate(&pat, 0.1, &ScalingFactors::uniform(3), &d).is_err());
    }

    #[test]
    fn scaling_factor_examples() {
        let d = domain(4);
        let pat = pattern(&[(0.1, 0.1), (0.9, 0.9)]);
        let mut values = vec![3.0; 16];
        let g = *d.grid();
        values[g.index(0, 0)] = 1.0;
        values[g.index(3, 3)] = 4.0;
        let pilot = IntensityField::from_values(g, values).unwrap();
        let c = scaling_factors(&pilot, &pat, &d).unwrap();
        assert!((c.factors()[0] - 2f64.sqrt()).abs() < 1e-12);
        assert!((c.factors()[1] - 0.5f64.sqrt()).abs() < 1e-12);

        let flat = IntensityField::constant(&d, 7.0).unwrap();
        let c = scaling_factors(&flat, &pat, &d).unwrap();
        assert!(c.factors().iter().all(|&v| (v - 1.0).abs() < 1e-15));

        assert!(scaling_factors(&flat, &PointPattern::empty(), &d).is_err());
    }

    #[test]
    fn zero_pilot_is_floored() {
        let d = domain(4);
        let pat = pattern(&[(0.1, 0.1), (0.9, 0.9)]);
        let g = *d.grid();
        let mut values = vec![1.0; 16];
        values[g.index(0, 0)] = 0.0;
        let pilot = IntensityField::from_values(g, values).unwrap();
        let c = scaling_factors(&pilot, &pat, &d).unwrap();
        assert!(c.factors().iter().all(|v| v.is_finite() && *v > 0.0));
        assert!((c.geometric_mean() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn geometric_mean_is_one_on_simulated_patterns() {
        let d = domain(64);
        for seed in 0..5 {
            let pat = sample_poisson(&IntensitySpec::constant(80.0), d.window(), seed).unwrap();
            let pilot = fixed_estimate(&pat, 0.08, &d).unwrap();
            let c = scaling_factors(&pilot, &pat, &d).unwrap();
            let prod_log: f64 = c.factors().iter().map(|v| v.ln()).sum();
            assert!(prod_log.abs() < 1e-9);
            assert!((c.geometric_mean() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn truncation_keeps_mass_and_is_close() {
        let d = domain(128);
        let pat = pattern(&[(0.2, 0.3), (0.7, 0.6), (0.05, 0.95)]);
        let exact = estimate(&pat, 0.05, Scaling::Fixed, &d, EstimateOptions::default()).unwrap();
        let cut = estimate(&pat, 0.05, Scaling::Fixed, &d, EstimateOptions { truncate: true }).unwrap();
        assert!((cut.total_mass() - 3.0).abs() < 1e-9);
        let diff: f64 = exact
            .values()
            .iter()
            .zip(cut.values())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * d.grid().pixel_area();
        assert!(diff < 1e-7, "{diff}");
    }

    #[test]
    fn integrate_constant_and_additivity() {
        let d = domain(8);
        let f = IntensityField::constant(&d, 2.5).unwrap();
        let all: Vec<usize> = d.in_window_pixels().collect();
        assert_eq!(integrate_field(&f, all.iter().copied()), f.total_mass());
        let half: Vec<usize> = all.iter().copied().filter(|i| i % 2 == 0).collect();
        let rest: Vec<usize> = all.iter().copied().filter(|i| i % 2 == 1).collect();
        let area = half.len() as f64 * d.grid().pixel_area();
        assert_eq!(integrate_field(&f, half.iter().copied()), 2.5 * area);
        let sum = integrate_field(&f, half) + integrate_field(&f, rest);
        assert!((sum - f.total_mass()).abs() < 1e-12);
    }

    #[test]
    fn pilot_single_point_takes_smallest_h() {
        let d = domain(64);
        let pat = pattern(&[(0.4, 0.6)]);
        let grid = vec![0.05, 0.1, 0.2];
        let pilot = pilot_estimate(&pat, &d, &grid).unwrap();
        assert_eq!(pilot.bandwidth, 0.05);
        assert!(pilot_estimate(&PointPattern::empty(), &d, &grid).is_err());
    }

    #[test]
    fn pilot_mass_on_homogeneous_pattern() {
        let d = domain(128);
        let pat = sample_poisson(&IntensitySpec::constant(200.0), d.window(), 7).unwrap();
        let grid = crate::bandwidth::log_spaced(0.01, 0.5, 12).unwrap();
        let pilot = pilot_estimate(&pat, &d, &grid).unwrap();
        let n = pat.len() as f64;
        assert!((pilot.field.total_mass() - n).abs() / n < 0.01);
    }
}
