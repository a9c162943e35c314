//! Poisson point patterns by thinning.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point, Window};
use crate::intensity::{IntensityField, PointPattern};

/// Generator used by [`sample_poisson`], recorded in run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng::seed_from_u64";

/// Relative slack allowed when checking `λ(u) <= λ_max`.
const BOUND_TOLERANCE: f64 = 1e-9;

type IntensityFn = dyn Fn(&Point) -> f64 + Send + Sync;

/// Intensity to sample from, with its upper bound `λ_max`.
#[derive(Clone)]
pub enum IntensitySpec {
    Constant(f64),
    Function {
        f: Arc<IntensityFn>,
        lmax: f64,
    },
    Field {
        field: Box<IntensityField>,
        domain: Box<Domain>,
        lmax: f64,
    },
}

impl fmt::Debug for IntensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntensitySpec::Constant(v) => write!(f, "Constant({v})"),
            IntensitySpec::Function { lmax, .. } => write!(f, "Function {{ lmax: {lmax} }}"),
            IntensitySpec::Field { lmax, .. } => write!(f, "Field {{ lmax: {lmax} }}"),
        }
    }
}

impl IntensitySpec {
    pub fn constant(rate: f64) -> Self {
        IntensitySpec::Constant(rate)
    }

    pub fn function(f: impl Fn(&Point) -> f64 + Send + Sync + 'static, lmax: f64) -> Self {
        IntensitySpec::Function { f: Arc::new(f), lmax }
    }

    /// Piecewise-constant intensity read from a raster field. Points take the
    /// value of the pixel they fall in.
    pub fn field(field: IntensityField, domain: Domain, lmax: f64) -> Result<Self> {
        if field.grid() != domain.grid() {
            return Err(Error::invalid("field grid does not match the window grid"));
        }
        Ok(IntensitySpec::Field {
            field: Box::new(field),
            domain: Box::new(domain),
            lmax,
        })
    }

    pub fn lmax(&self) -> f64 {
        match self {
            IntensitySpec::Constant(v) => *v,
            IntensitySpec::Function { lmax, .. } | IntensitySpec::Field { lmax, .. } => *lmax,
        }
    }

    pub fn value(&self, p: &Point) -> f64 {
        match self {
            IntensitySpec::Constant(v) => *v,
            IntensitySpec::Function { f, .. } => f(p),
            IntensitySpec::Field { field, domain, .. } => field.value_at(domain, p),
        }
    }
}

/// Sample a Poisson process with the given intensity on `w`.
///
/// Draws `Poisson(λ_max·|W|)` uniform candidates in `W` (bounding-box
/// rejection for polygons) and keeps each with probability `λ(u)/λ_max`.
/// The result is a deterministic function of `seed`.
pub fn sample_poisson(spec: &IntensitySpec, w: &Window, seed: u64) -> Result<PointPattern> {
    let lmax = spec.lmax();
    if !(lmax > 0.0 && lmax.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda_max must be positive and finite, got {lmax}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = lmax * w.area();
    let count = Poisson::new(mean)
        .map_err(|e| Error::invalid(format!("cannot sample Poisson({mean}): {e}")))?
        .sample(&mut rng) as u64;
    let bb = w.bbox();
    let mut points = Vec::new();
    for _ in 0..count {
        let candidate = loop {
            let p = Point {
                x: rng.random_range(bb.xmin..bb.xmax),
                y: rng.random_range(bb.ymin..bb.ymax),
            };
            if w.contains(&p) {
                break p;
            }
        };
        let u: f64 = rng.random();
        // the thinning uniform is drawn for every candidate to keep the stream aligned
        let lambda = spec.value(&candidate);
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "intensity at ({}, {}) is {lambda}",
                candidate.x, candidate.y
            )));
        }
        if lambda > lmax * (1.0 + BOUND_TOLERANCE) {
            return Err(Error::invalid(format!(
                "intensity {lambda} at ({}, {}) exceeds lambda_max {lmax}",
                candidate.x, candidate.y
            )));
        }
        if u * lmax < lambda {
            points.push(candidate);
        }
    }
    PointPattern::new(points, w)
}
