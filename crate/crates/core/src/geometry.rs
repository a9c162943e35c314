//! Planar windows, quadrature rasters, stations and nearest-station catchments.
//!
//! Every integral over the observation window is a midpoint sum over the
//! pixel centres of one [`GridSpec`]. A pixel belongs to the window when its
//! centre does (boundary counts as inside). [`Domain`] bundles a window with
//! its raster and caches that mask so estimation and integration agree on
//! exactly the same set of pixels.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default raster resolution along each axis.
pub const DEFAULT_GRID_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid(format!("non-finite coordinate ({x}, {y})")));
        }
        Ok(Point { x, y })
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BoundingBox {
    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    Rect(BoundingBox),
    /// Simple polygon, implicitly closed; the closing vertex is not repeated.
    Polygon(Vec<Point>),
}

/// Observation window W, either an axis-aligned rectangle or a simple polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    boundary: Boundary,
    area: f64,
    bbox: BoundingBox,
}

impl Window {
    pub fn rect(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        if ![xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidWindow("non-finite rectangle bounds".into()));
        }
        if xmax <= xmin || ymax <= ymin {
            return Err(Error::InvalidWindow(format!(
                "degenerate rectangle [{xmin}, {xmax}] x [{ymin}, {ymax}] has zero area"
            )));
        }
        let bbox = BoundingBox { xmin, ymin, xmax, ymax };
        Ok(Window {
            boundary: Boundary::Rect(bbox),
            area: (xmax - xmin) * (ymax - ymin),
            bbox,
        })
    }

    pub fn polygon(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::InvalidWindow(format!(
                "polygon needs at least 3 distinct vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidWindow("non-finite polygon vertex".into()));
        }
        let area = shoelace(&vertices).abs();
        let bbox = bounding_box(&vertices);
        let scale = bbox.width().max(bbox.height());
        if area.is_nan() || area <= 1e-12 * scale * scale {
            return Err(Error::InvalidWindow("polygon has zero area".into()));
        }
        check_simple(&vertices)?;
        Ok(Window {
            boundary: Boundary::Polygon(vertices),
            area,
            bbox,
        })
    }

    pub fn boundary(&self) -> &Boundary {
        &self.boundary
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn is_rect(&self) -> bool {
        matches!(self.boundary, Boundary::Rect(_))
    }

    /// Boundary vertices in order (four corners for a rectangle).
    pub fn vertices(&self) -> Vec<Point> {
        match &self.boundary {
            Boundary::Rect(b) => vec![
                Point { x: b.xmin, y: b.ymin },
                Point { x: b.xmax, y: b.ymin },
                Point { x: b.xmax, y: b.ymax },
                Point { x: b.xmin, y: b.ymax },
            ],
            Boundary::Polygon(v) => v.clone(),
        }
    }

    /// Largest distance between two boundary vertices.
    pub fn diameter(&self) -> f64 {
        let v = self.vertices();
        let mut best = 0.0f64;
        for (i, a) in v.iter().enumerate() {
            for b in &v[i + 1..] {
                best = best.max(a.dist2(b));
            }
        }
        best.sqrt()
    }

    /// Point-in-window test on the closure of W.
    pub fn contains(&self, p: &Point) -> bool {
        match &self.boundary {
            Boundary::Rect(b) => p.x >= b.xmin && p.x <= b.xmax && p.y >= b.ymin && p.y <= b.ymax,
            Boundary::Polygon(v) => polygon_contains(v, p),
        }
    }
}

/// Area of a window: exact for rectangles, shoelace for polygons.
pub fn window_area(w: &Window) -> f64 {
    w.area()
}

fn shoelace(v: &[Point]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

fn bounding_box(v: &[Point]) -> BoundingBox {
    let mut b = BoundingBox {
        xmin: f64::INFINITY,
        ymin: f64::INFINITY,
        xmax: f64::NEG_INFINITY,
        ymax: f64::NEG_INFINITY,
    };
    for p in v {
        b.xmin = b.xmin.min(p.x);
        b.ymin = b.ymin.min(p.y);
        b.xmax = b.xmax.max(p.x);
        b.ymax = b.ymax.max(p.y);
    }
    b
}

fn cross(o: &Point, a: &Point, b: &Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(a: &Point, b: &Point, p: &Point) -> bool {
    let scale = (b.x - a.x).abs().max((b.y - a.y).abs()).max(1.0);
    cross(a, b, p).abs() <= 1e-12 * scale * scale
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

fn segments_intersect(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(c, d, a) || on_segment(c, d, b) || on_segment(a, b, c) || on_segment(a, b, d)
}

fn check_simple(v: &[Point]) -> Result<()> {
    let n = v.len();
    for i in 0..n {
        if v[i] == v[(i + 1) % n] {
            return Err(Error::InvalidWindow(format!("repeated polygon vertex at index {i}")));
        }
    }
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        for j in i + 1..n {
            // adjacent edges share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (v[j], v[(j + 1) % n]);
            if segments_intersect(&a, &b, &c, &d) {
                return Err(Error::InvalidWindow(format!(
                    "polygon is not simple: edges {i} and {j} intersect"
                )));
            }
        }
    }
    Ok(())
}

fn polygon_contains(v: &[Point], p: &Point) -> bool {
    let n = v.len();
    let mut inside = false;
    for i in 0..n {
        let a = &v[i];
        let b = &v[(i + 1) % n];
        if on_segment(a, b, p) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Regular raster: `nx` by `ny` pixels of size `dx` by `dy`, lower-left corner at `origin`.
///
/// Pixels are stored row-major with row 0 at the bottom (smallest y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub origin: Point,
    pub dx: f64,
    pub dy: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, origin: Point, dx: f64, dy: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid("grid needs at least one pixel per axis"));
        }
        if !(dx > 0.0 && dx.is_finite() && dy > 0.0 && dy.is_finite()) {
            return Err(Error::invalid(format!("pixel size must be positive, got {dx} x {dy}")));
        }
        Ok(GridSpec { nx, ny, origin, dx, dy })
    }

    /// Grid of `nx` by `ny` pixels exactly spanning the window's bounding box.
    pub fn covering(w: &Window, nx: usize, ny: usize) -> Result<Self> {
        let b = w.bbox();
        if nx == 0 || ny == 0 {
            return Err(Error::invalid("grid needs at least one pixel per axis"));
        }
        GridSpec::new(
            nx,
            ny,
            Point { x: b.xmin, y: b.ymin },
            b.width() / nx as f64,
            b.height() / ny as f64,
        )
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixel_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center_x(&self, i: usize) -> f64 {
        self.origin.x + (i as f64 + 0.5) * self.dx
    }

    pub fn center_y(&self, j: usize) -> f64 {
        self.origin.y + (j as f64 + 0.5) * self.dy
    }

    pub fn center(&self, idx: usize) -> Point {
        Point {
            x: self.center_x(idx % self.nx),
            y: self.center_y(idx / self.nx),
        }
    }

    pub fn extent(&self) -> BoundingBox {
        BoundingBox {
            xmin: self.origin.x,
            ymin: self.origin.y,
            xmax: self.origin.x + self.nx as f64 * self.dx,
            ymax: self.origin.y + self.ny as f64 * self.dy,
        }
    }

    /// Column and row of the pixel containing `p`; points on the far edges
    /// belong to the last pixel. `None` outside the grid.
    pub fn pixel_of(&self, p: &Point) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.dx;
        let fy = (p.y - self.origin.y) / self.dy;
        let tol = 1e-9;
        if fx < -tol || fy < -tol || fx > self.nx as f64 + tol || fy > self.ny as f64 + tol {
            return None;
        }
        let i = (fx.floor().max(0.0) as usize).min(self.nx - 1);
        let j = (fy.floor().max(0.0) as usize).min(self.ny - 1);
        Some((i, j))
    }

    fn contains_bbox(&self, b: &BoundingBox) -> bool {
        let e = self.extent();
        let tol = 1e-9 * (e.width() + e.height());
        e.xmin <= b.xmin + tol && e.ymin <= b.ymin + tol && e.xmax >= b.xmax - tol && e.ymax >= b.ymax - tol
    }
}

/// A window together with its quadrature raster and the in-window pixel mask.
#[derive(Debug, Clone)]
pub struct Domain {
    window: Window,
    grid: GridSpec,
    mask: Vec<bool>,
    /// Per row, half-open column ranges of in-window pixels.
    runs: Vec<Vec<(usize, usize)>>,
    full: bool,
    inside: usize,
}

impl Domain {
    pub fn new(window: Window, grid: GridSpec) -> Result<Self> {
        if !grid.contains_bbox(&window.bbox()) {
            return Err(Error::invalid("grid bounding box does not contain the window"));
        }
        let mask: Vec<bool> = (0..grid.len())
            .into_par_iter()
            .map(|idx| window.contains(&grid.center(idx)))
            .collect();
        let runs: Vec<Vec<(usize, usize)>> = (0..grid.ny)
            .map(|j| {
                let row = &mask[j * grid.nx..(j + 1) * grid.nx];
                let mut out = Vec::new();
                let mut start = None;
                for (i, &m) in row.iter().enumerate() {
                    match (m, start) {
                        (true, None) => start = Some(i),
                        (false, Some(s)) => {
                            out.push((s, i));
                            start = None;
                        }
                        _ => {}
                    }
                }
                if let Some(s) = start {
                    out.push((s, grid.nx));
                }
                out
            })
            .collect();
        let inside = mask.iter().filter(|&&m| m).count();
        if inside == 0 {
            return Err(Error::invalid(
                "no pixel centre falls inside the window; refine the grid",
            ));
        }
        Ok(Domain {
            full: inside == grid.len(),
            window,
            grid,
            mask,
            runs,
            inside,
        })
    }

    /// Default 256 x 256 raster over the window's bounding box.
    pub fn with_default_grid(window: Window) -> Result<Self> {
        let grid = GridSpec::covering(&window, DEFAULT_GRID_SIZE, DEFAULT_GRID_SIZE)?;
        Domain::new(window, grid)
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn row_runs(&self, j: usize) -> &[(usize, usize)] {
        &self.runs[j]
    }

    /// True when every pixel centre lies in the window.
    pub fn is_full(&self) -> bool {
        self.full
    }

    pub fn inside_count(&self) -> usize {
        self.inside
    }

    /// Rasterized window area: in-window pixel count times pixel area.
    pub fn raster_area(&self) -> f64 {
        self.inside as f64 * self.grid.pixel_area()
    }

    pub fn in_window_pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    /// Pixel used to read an estimate at a data point: the pixel containing
    /// `p`, or the nearest in-window pixel when that pixel's centre is outside W.
    pub fn lookup_pixel(&self, p: &Point) -> usize {
        if let Some((i, j)) = self.grid.pixel_of(p) {
            let idx = self.grid.index(i, j);
            if self.mask[idx] {
                return idx;
            }
        }
        let mut best = (f64::INFINITY, 0usize);
        for idx in self.in_window_pixels() {
            let d = self.grid.center(idx).dist2(p);
            if d < best.0 {
                best = (d, idx);
            }
        }
        best.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub location: Point,
}

impl Station {
    pub fn new(id: impl Into<String>, x: f64, y: f64) -> Result<Self> {
        Ok(Station {
            id: id.into(),
            location: Point::new(x, y)?,
        })
    }
}

/// Nearest-station labelling of the in-window pixels.
#[derive(Debug, Clone)]
pub struct CatchmentPartition {
    grid: GridSpec,
    /// Stations sorted by id; labels index into this list.
    stations: Vec<Station>,
    labels: Vec<Option<u32>>,
}

impl CatchmentPartition {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn pixel_area(&self) -> f64 {
        self.grid.pixel_area()
    }

    /// Station id labelling pixel `idx`, `None` outside the window.
    pub fn label(&self, idx: usize) -> Option<&str> {
        self.labels[idx].map(|s| self.stations[s as usize].id.as_str())
    }

    pub fn label_index(&self, idx: usize) -> Option<usize> {
        self.labels[idx].map(|s| s as usize)
    }

    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.stations.binary_search_by(|s| s.id.as_str().cmp(id)).ok()
    }

    /// Pixels labelled by station `id`, in row-major order.
    pub fn pixels_of(&self, id: &str) -> Result<Vec<usize>> {
        let s = self
            .station_index(id)
            .ok_or_else(|| Error::invalid(format!("unknown station id `{id}`")))? as u32;
        Ok(self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(s))
            .map(|(i, _)| i)
            .collect())
    }

    pub fn pixel_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.stations.len()];
        for l in self.labels.iter().flatten() {
            counts[*l as usize] += 1;
        }
        counts
    }
}

/// Label every in-window pixel centre with its nearest station.
///
/// Distance ties go to the lexicographically smallest station id, so the
/// labelling does not depend on the order of `stations`.
pub fn build_partition(stations: &[Station], domain: &Domain) -> Result<CatchmentPartition> {
    if stations.is_empty() {
        return Err(Error::invalid("at least one station is required"));
    }
    let mut ids = HashSet::new();
    let mut locs = HashSet::new();
    for s in stations {
        if !ids.insert(s.id.as_str()) {
            return Err(Error::invalid(format!("duplicate station id `{}`", s.id)));
        }
        if !locs.insert((s.location.x.to_bits(), s.location.y.to_bits())) {
            return Err(Error::invalid(format!(
                "duplicate station location ({}, {})",
                s.location.x, s.location.y
            )));
        }
        if !domain.window().contains(&s.location) {
            return Err(Error::invalid(format!(
                "station `{}` at ({}, {}) lies outside the window",
                s.id, s.location.x, s.location.y
            )));
        }
    }
    let mut sorted = stations.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let grid = *domain.grid();
    let mask = domain.mask();
    let labels: Vec<Option<u32>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if !mask[idx] {
                return None;
            }
            let c = grid.center(idx);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (k, s) in sorted.iter().enumerate() {
                let d = c.dist2(&s.location);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            Some(best as u32)
        })
        .collect();

    Ok(CatchmentPartition {
        grid,
        stations: sorted,
        labels,
    })
}

/// Rasterized area of the catchment of station `id`.
pub fn cell_area(p: &CatchmentPartition, id: &str) -> Result<f64> {
    let s = p
        .station_index(id)
        .ok_or_else(|| Error::invalid(format!("unknown station id `{id}`")))?;
    Ok(p.pixel_counts()[s] as f64 * p.pixel_area())
}
