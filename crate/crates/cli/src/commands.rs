use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use capplan_core::allocate::{
    allocate_crews, allocate_vehicles, brute_force_minimax, crew_objective, format_sig4, vehicle_objective, BruteMode,
    DEFAULT_SEARCH_CAP,
};
use capplan_core::bandwidth::{log_spaced, select_bandwidth, BandwidthSearch, Method};
use capplan_core::geometry::{build_partition, Domain, GridSpec, Window, DEFAULT_GRID_SIZE};
use capplan_core::intensity::{estimate, scaling_factors, EstimateOptions, Scaling};
use capplan_core::io;
use capplan_core::risk::{catchment_risks, RiskTable};
use capplan_core::simulate::{sample_poisson, IntensitySpec, RNG_ALGORITHM};
use capplan_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::render;
use crate::report::AllocationReport;

/// `256` or `256x128`.
pub fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidInput(format!("invalid grid `{s}` (expected N or NXxNY)"));
    let (a, b) = match s.split_once(['x', 'X']) {
        Some((a, b)) => (a, b),
        None => (s, s),
    };
    let nx: usize = a.trim().parse().map_err(|_| bad())?;
    let ny: usize = b.trim().parse().map_err(|_| bad())?;
    if nx == 0 || ny == 0 {
        return Err(bad());
    }
    Ok((nx, ny))
}

/// `min:max:count`, log-spaced.
pub fn parse_log_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::InvalidInput(format!("invalid bandwidth grid `{s}` (expected min:max:count)"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let min: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let max: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    log_spaced(min, max, count)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn out_dir(s: &Settings) -> PathBuf {
    s.path("out-dir").unwrap_or_else(|| PathBuf::from("."))
}

fn estimate_options(s: &Settings) -> Result<EstimateOptions> {
    Ok(EstimateOptions {
        truncate: s.get::<bool>("truncate")?.unwrap_or(false),
    })
}

fn bandwidth_grid(s: &Settings, key: &str, window: &Window, method: Method) -> Result<Vec<f64>> {
    match s.raw(key) {
        Some(g) => parse_log_grid(g),
        None => Ok(BandwidthSearch::default_for(window, method)?.h_grid().to_vec()),
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SimulateReport {
    command: &'static str,
    seed: u64,
    rng: &'static str,
    lambda_max: f64,
    window_area: f64,
    count: usize,
    config_hash: String,
}

pub fn simulate(s: &Settings) -> Result<String> {
    let window = io::read_window(&s.require_path("window")?)?;
    let seed: u64 = s.require("seed")?;
    let out = s.require_path("out")?;
    let spec = match (s.get::<f64>("rate")?, s.path("field")) {
        (Some(rate), None) => IntensitySpec::constant(rate),
        (None, Some(field_path)) => {
            let (field, _) = io::read_field(&field_path)?;
            let lmax = match s.get::<f64>("lmax")? {
                Some(v) => v,
                None => field.max_value(),
            };
            let domain = Domain::new(window.clone(), *field.grid())?;
            IntensitySpec::field(field, domain, lmax)?
        }
        (Some(_), Some(_)) => {
            return Err(Error::InvalidInput(
                "give either `--rate` or `--field`, not both".into(),
            ))
        }
        (None, None) => return Err(Error::InvalidInput("missing `--rate` or `--field`".into())),
    };
    let pattern = sample_poisson(&spec, &window, seed)?;
    write_file(&out, csv_bytes(|b| io::write_points(b, pattern.points()))?)?;
    let report = SimulateReport {
        command: "simulate",
        seed,
        rng: RNG_ALGORITHM,
        lambda_max: spec.lmax(),
        window_area: window.area(),
        count: pattern.len(),
        config_hash: s.hash(),
    };
    write_file(&out.with_extension("json"), io::to_json_pretty(&report)?)?;
    Ok(format!("wrote {} incidents to {}\n", pattern.len(), out.display()))
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EstimateReport {
    command: &'static str,
    #[serde(rename = "N")]
    n: usize,
    total_mass: f64,
    pilot_total_mass: f64,
    h_pilot: f64,
    h_final: f64,
    method: &'static str,
    pilot_method: &'static str,
    grid: GridSpec,
    window_area: f64,
    raster_area: f64,
    scaling_geometric_mean: f64,
    truncate: bool,
    files: BTreeMap<&'static str, &'static str>,
    config_hash: String,
}

pub fn estimate_cmd(s: &Settings) -> Result<String> {
    let window = io::read_window(&s.require_path("window")?)?;
    let (nx, ny) = parse_grid(s.raw("grid").unwrap_or(&DEFAULT_GRID_SIZE.to_string()))?;
    let domain = Domain::new(window.clone(), GridSpec::covering(&window, nx, ny)?)?;
    let pattern = io::read_incidents(&s.require_path("incidents")?, &window)?;
    if pattern.is_empty() {
        return Err(Error::InvalidInput("the incident file contains no incidents".into()));
    }
    let opts = estimate_options(s)?;
    let dir = out_dir(s);

    let pilot_method = s.get::<Method>("pilot-method")?.unwrap_or(Method::LooCv);
    let mut pilot_search = BandwidthSearch::new(bandwidth_grid(s, "pilot-grid", &window, pilot_method)?, pilot_method)?;
    let h_pilot = select_bandwidth(&mut pilot_search, &pattern, &domain, Scaling::Fixed)?;
    let pilot = estimate(&pattern, h_pilot, Scaling::Fixed, &domain, opts)?;
    let c = scaling_factors(&pilot, &pattern, &domain)?;

    let method = s.get::<Method>("bw-method")?.unwrap_or(Method::LooCv);
    let mut search = BandwidthSearch::new(bandwidth_grid(s, "bw-grid", &window, method)?, method)?;
    let h_final = select_bandwidth(&mut search, &pattern, &domain, Scaling::Adaptive(&c))?;
    let field = estimate(&pattern, h_final, Scaling::Adaptive(&c), &domain, opts)?;

    fs::create_dir_all(&dir)?;
    io::write_field(&dir.join("pilot.csv"), &pilot, Some(h_pilot))?;
    io::write_field(&dir.join("field.csv"), &field, Some(h_final))?;
    write_file(
        &dir.join("pilot_scores.csv"),
        csv_bytes(|b| io::write_scores(b, pilot_search.h_grid(), pilot_search.scores()))?,
    )?;
    write_file(
        &dir.join("scores.csv"),
        csv_bytes(|b| io::write_scores(b, search.h_grid(), search.scores()))?,
    )?;
    let mut scaling = String::from("index,x,y,c\n");
    for (i, (p, f)) in pattern.points().iter().zip(c.factors()).enumerate() {
        scaling.push_str(&format!("{i},{},{},{f}\n", p.x, p.y));
    }
    write_file(&dir.join("scaling.csv"), scaling)?;

    let files = BTreeMap::from([
        ("field", "field.csv"),
        ("pilot", "pilot.csv"),
        ("pilot_scores", "pilot_scores.csv"),
        ("scaling", "scaling.csv"),
        ("scores", "scores.csv"),
    ]);
    let report = EstimateReport {
        command: "estimate",
        n: pattern.len(),
        total_mass: field.total_mass(),
        pilot_total_mass: pilot.total_mass(),
        h_pilot,
        h_final,
        method: method.name(),
        pilot_method: pilot_method.name(),
        grid: *domain.grid(),
        window_area: window.area(),
        raster_area: domain.raster_area(),
        scaling_geometric_mean: c.geometric_mean(),
        truncate: opts.truncate,
        files,
        config_hash: s.hash(),
    };
    write_file(&dir.join("report.json"), io::to_json_pretty(&report)?)?;
    Ok(format!(
        "N = {}, h_pilot = {h_pilot}, h_final = {h_final} ({}), total mass = {}\nwrote {}\n",
        pattern.len(),
        method.name(),
        field.total_mass(),
        dir.display()
    ))
}

// ---------------------------------------------------------------------------
// risks
// ---------------------------------------------------------------------------

/// Field, domain and partition for the commands that work on catchments.
fn load_catchments(
    s: &Settings,
) -> Result<(
    Window,
    capplan_core::intensity::IntensityField,
    io::FieldMeta,
    capplan_core::geometry::CatchmentPartition,
)> {
    let window = io::read_window(&s.require_path("window")?)?;
    let (field, meta) = io::read_field(&s.require_path("field")?)?;
    let domain = Domain::new(window.clone(), *field.grid())?;
    let stations = io::read_stations(&s.require_path("stations")?)?;
    let part = build_partition(&stations, &domain)?;
    Ok((window, field, meta, part))
}

pub fn risks(s: &Settings) -> Result<String> {
    let (_, field, meta, part) = load_catchments(s)?;
    let table = catchment_risks(&field, &part)?.sorted_by_risk();
    let total = table.total();
    if (total - meta.total_mass).abs() > 1e-9 * meta.total_mass.abs().max(1.0) {
        return Err(Error::Numeric(format!(
            "catchment risks sum to {total} but the field's stored mass is {}",
            meta.total_mass
        )));
    }
    let csv = csv_bytes(|b| io::write_risks(b, &table))?;
    match s.path("out") {
        Some(out) => {
            write_file(&out, csv)?;
            Ok(format!(
                "wrote {} station risks (total {total}) to {}\n",
                table.len(),
                out.display()
            ))
        }
        None => Ok(String::from_utf8(csv).expect("CSV output is UTF-8")),
    }
}

// ---------------------------------------------------------------------------
// allocation
// ---------------------------------------------------------------------------

fn load_risks(s: &Settings) -> Result<RiskTable> {
    let table = io::read_risks(&s.require_path("risks")?)?;
    match s.get::<f64>("risk-floor")? {
        Some(floor) => table.with_floor(floor),
        None => Ok(table),
    }
}

fn emit(report: &AllocationReport, s: &Settings, json: bool) -> Result<String> {
    let doc = io::to_json_pretty(report)?;
    if let Some(out) = s.path("out") {
        write_file(&out, &doc)?;
    }
    Ok(if json { doc } else { report.table() })
}

pub fn allocate_vehicles_cmd(s: &Settings, json: bool) -> Result<String> {
    let risks = load_risks(s)?;
    let k: usize = s.require("k")?;
    let alloc = allocate_vehicles(&risks, k)?;
    if let Some(path) = s.path("vehicles-out") {
        write_file(
            &path,
            csv_bytes(|b| io::write_vehicles(b, alloc.counts.iter().map(|(s, n)| (s.as_str(), *n))))?,
        )?;
    }
    emit(&AllocationReport::vehicles(&risks, k, &alloc, s.hash()), s, json)
}

pub fn allocate_crews_cmd(s: &Settings, json: bool) -> Result<String> {
    let risks = load_risks(s)?;
    let vehicles = io::read_vehicles(&s.require_path("vehicles")?)?;
    let alpha: usize = s.require("alpha")?;
    let k: usize = s.require("k")?;
    let alloc = allocate_crews(&risks, &vehicles, alpha, k)?;
    emit(
        &AllocationReport::crews(&risks, &vehicles, k, &alloc, s.hash()),
        s,
        json,
    )
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct ReportStation {
    id: String,
    n: usize,
    f: Option<usize>,
}

#[derive(Deserialize)]
struct ReportIn {
    kind: String,
    #[serde(rename = "K")]
    k: usize,
    alpha: Option<usize>,
    stations: Vec<ReportStation>,
}

pub fn verify(s: &Settings) -> Result<String> {
    let risks = load_risks(s)?;
    let cap: u128 = s.get("cap")?.unwrap_or(DEFAULT_SEARCH_CAP);

    // candidate counts in risk-table order, with the mode they belong to
    let (k, mode, counts, source) = match s.path("allocation") {
        Some(path) => {
            let text = fs::read_to_string(&path)?;
            let rep: ReportIn = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: e.line() as u64,
                message: e.to_string(),
            })?;
            let by_id: BTreeMap<&str, &ReportStation> = rep.stations.iter().map(|r| (r.id.as_str(), r)).collect();
            if by_id.len() != risks.len() {
                return Err(Error::InvalidInput(
                    "allocation and risk table list different stations".into(),
                ));
            }
            let mut counts = Vec::new();
            for e in risks.entries() {
                let r = by_id.get(e.station.as_str()).ok_or_else(|| {
                    Error::InvalidInput(format!("station `{}` missing from the allocation", e.station))
                })?;
                counts.push(if rep.kind == "crews" { r.f.unwrap_or(0) } else { r.n });
            }
            let mode = match (rep.kind.as_str(), rep.alpha) {
                ("vehicles", _) => BruteMode::Vehicles,
                ("crews", Some(alpha)) => BruteMode::Crews {
                    vehicles: rep.stations.iter().map(|r| (r.id.clone(), r.n)).collect(),
                    alpha,
                },
                _ => return Err(Error::InvalidInput(format!("unknown allocation kind `{}`", rep.kind))),
            };
            (rep.k, mode, counts, path.display().to_string())
        }
        None => {
            let k: usize = s.require("k")?;
            match s.path("vehicles") {
                Some(vpath) => {
                    let vehicles = io::read_vehicles(&vpath)?;
                    let alpha: usize = s.require("alpha")?;
                    let c = allocate_crews(&risks, &vehicles, alpha, k)?;
                    let counts = c.counts.iter().map(|(_, f)| *f).collect();
                    (k, BruteMode::Crews { vehicles, alpha }, counts, "greedy".to_string())
                }
                None => {
                    let a = allocate_vehicles(&risks, k)?;
                    let counts = a.counts.iter().map(|(_, n)| *n).collect();
                    (k, BruteMode::Vehicles, counts, "greedy".to_string())
                }
            }
        }
    };

    let sum: usize = counts.iter().sum();
    if sum != k {
        return Err(Error::Numeric(format!(
            "{source}: counts sum to {sum}, expected K = {k}"
        )));
    }
    let candidate = match &mode {
        BruteMode::Vehicles => {
            if counts.iter().any(|n| *n < 1) {
                return Err(Error::Numeric(format!("{source}: a station has no vehicle")));
            }
            vehicle_objective(&risks, &counts)
        }
        BruteMode::Crews { vehicles, alpha } => {
            for (e, f) in risks.entries().iter().zip(&counts) {
                let n = vehicles.get(&e.station).copied().unwrap_or(0);
                if *f < *alpha || *f > alpha * n {
                    return Err(Error::Numeric(format!(
                        "{source}: station `{}` has {f} crew members, outside {alpha}..={}",
                        e.station,
                        alpha * n
                    )));
                }
            }
            crew_objective(&risks, &counts, *alpha)
        }
    }
    .ok_or_else(|| Error::InvalidInput("risk table is empty".into()))?;
    let best = brute_force_minimax(&risks, k, &mode, cap)?;
    let verdict = candidate.cmp_value(&best.objective);
    let line = format!(
        "{source}: objective {} ({}); exhaustive optimum {} over {} allocations",
        format_sig4(candidate.value()),
        candidate.value(),
        format_sig4(best.objective.value()),
        best.searched
    );
    if verdict.is_eq() {
        Ok(format!("{line}: optimal\n"))
    } else {
        Err(Error::Numeric(format!("{line}: NOT optimal")))
    }
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

pub fn render_cmd(s: &Settings) -> Result<String> {
    let (window, field, _, part) = load_catchments(s)?;
    let risks = match s.path("risks") {
        Some(p) => io::read_risks(&p)?,
        None => catchment_risks(&field, &part)?,
    };
    let incidents = match s.path("incidents") {
        Some(p) => io::read_incidents(&p, &window)?.points().to_vec(),
        None => Vec::new(),
    };
    let dir = out_dir(s);
    let pgm_path = dir.join("field.pgm");
    let svg_path = dir.join("catchments.svg");
    write_file(&pgm_path, render::pgm(&field))?;
    write_file(&svg_path, render::svg(&window, &part, &risks, &incidents))?;
    Ok(format!("wrote {} and {}\n", pgm_path.display(), svg_path.display()))
}
