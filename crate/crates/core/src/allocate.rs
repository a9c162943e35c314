//! Integer resource allocation.
//!
//! Three families live here:
//!
//! * the generic separable convex problem, `min Σ f_s(n_s)` subject to
//!   `Σ n_s = K`, solved by repeatedly taking the smallest marginal cost;
//!   minimax problems `min max_s f_s(n_s)` reduce to it through the
//!   cumulative sums `g_s(i) = Σ_{j<=i} f_s(j)`;
//! * vehicles: `min max_s Λ(s)/n(s)` with every station keeping at least one
//!   vehicle. The greedy hands the next vehicle to the station with the
//!   largest risk per vehicle;
//! * crews: `min max_s Λ(s)/⌊f(s)/α⌋` with `α <= f(s) <= α n(s)` under
//!   shortage. The greedy hands single crew members out, preferring among
//!   equal ratios the station whose partial crew is furthest along, so slack
//!   collects at one station.
//!
//! [`brute_force_minimax`] enumerates every feasible allocation of small
//! instances and serves as the optimality oracle for both greedy algorithms.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::risk::{cmp_ratio, Risk, RiskTable};

/// Default cap on the number of allocations the brute-force oracle enumerates.
pub const DEFAULT_SEARCH_CAP: u128 = 10_000_000;

// ---------------------------------------------------------------------------
// Generic separable convex allocation
// ---------------------------------------------------------------------------

/// Cost functions `f_s(0..=m)` for a set of activities.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    ids: Vec<String>,
    values: Vec<Vec<f64>>,
    convex: bool,
}

impl CostTable {
    pub fn new<S: Into<String>>(tables: impl IntoIterator<Item = (S, Vec<f64>)>) -> Result<Self> {
        let (ids, values): (Vec<String>, Vec<Vec<f64>>) = tables.into_iter().map(|(s, v)| (s.into(), v)).unzip();
        if ids.is_empty() {
            return Err(Error::invalid("cost table has no activities"));
        }
        let mut seen = HashSet::new();
        for (id, v) in ids.iter().zip(&values) {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate activity `{id}`")));
            }
            if v.is_empty() {
                return Err(Error::invalid(format!("activity `{id}` has an empty cost table")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("activity `{id}` has a non-finite cost")));
            }
        }
        let convex = values.iter().all(|v| {
            let d: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
            d.windows(2).all(|w| w[1] >= w[0])
        });
        Ok(CostTable { ids, values, convex })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// True when every activity has non-decreasing increments.
    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn total_cost(&self, counts: &[usize]) -> f64 {
        self.values.iter().zip(counts).map(|(v, &n)| v[n]).sum()
    }

    pub fn max_cost(&self, counts: &[usize]) -> f64 {
        self.values
            .iter()
            .zip(counts)
            .map(|(v, &n)| v[n])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Tables of cumulative sums `g_s(i) = Σ_{j<=i} f_s(j)`.
    pub fn cumulative(&self) -> CostTable {
        let values: Vec<Vec<f64>> = self
            .values
            .iter()
            .map(|v| {
                v.iter()
                    .scan(0.0, |acc, x| {
                        *acc += x;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        let convex = self.values.iter().all(|v| v.windows(2).skip(1).all(|w| w[1] >= w[0]));
        CostTable {
            ids: self.ids.clone(),
            values,
            convex,
        }
    }

    fn check_covers(&self, k: usize) -> Result<()> {
        for (id, v) in self.ids.iter().zip(&self.values) {
            if v.len() <= k {
                return Err(Error::invalid(format!(
                    "cost table for `{id}` covers 0..={} but K = {k}",
                    v.len() - 1
                )));
            }
        }
        Ok(())
    }

    fn increments(&self, k: usize) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .map(|v| (1..=k).map(|i| v[i] - v[i - 1]).collect())
            .collect()
    }
}

/// Greedy on marginal costs: `inc[s][i-1]` is the cost of the `i`-th unit for
/// activity `s`. Equal increments go to the activity with the smallest id.
fn greedy_on_increments(ids: &[String], inc: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut n = vec![0usize; ids.len()];
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for s in 0..ids.len() {
            if n[s] >= inc[s].len() {
                continue;
            }
            best = match best {
                None => Some(s),
                Some(b) => {
                    let ord = inc[s][n[s]]
                        .partial_cmp(&inc[b][n[b]])
                        .unwrap_or(Ordering::Equal)
                        .then_with(|| ids[b].cmp(&ids[s]));
                    if ord == Ordering::Less {
                        Some(s)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        // inc[s] has K entries for every s, so some activity is always open
        n[best.expect("an open activity")] += 1;
    }
    n
}

/// Minimize `Σ f_s(n_s)` subject to `Σ n_s = K`, `n_s >= 0`, for convex `f_s`.
///
/// Counts are returned in table order.
pub fn greedy_convex_sum(costs: &CostTable, k: usize) -> Result<Vec<usize>> {
    costs.check_covers(k)?;
    if !costs.is_convex() {
        return Err(Error::Precondition("cost functions are not convex".into()));
    }
    Ok(greedy_on_increments(&costs.ids, &costs.increments(k), k))
}

/// The same optimum via the set V of the K smallest increments:
/// `n*(s) = 0` if `d_s(1) ∉ V`, `K` if `d_s(K) ∈ V`, otherwise the `i` with
/// `d_s(i) ∈ V` and `d_s(i+1) ∉ V`.
pub fn closed_form_convex_sum(costs: &CostTable, k: usize) -> Result<Vec<usize>> {
    costs.check_covers(k)?;
    if !costs.is_convex() {
        return Err(Error::Precondition("cost functions are not convex".into()));
    }
    let inc = costs.increments(k);
    let mut all: Vec<(usize, usize)> = (0..inc.len()).flat_map(|s| (1..=k).map(move |i| (s, i))).collect();
    // equal increments: earlier unit of the same activity first, then smallest id
    all.sort_by(|&(s, i), &(t, j)| {
        inc[s][i - 1]
            .partial_cmp(&inc[t][j - 1])
            .unwrap_or(Ordering::Equal)
            .then_with(|| {
                if s == t {
                    i.cmp(&j)
                } else {
                    costs.ids[s].cmp(&costs.ids[t])
                }
            })
    });
    let mut in_v = vec![vec![false; k + 2]; inc.len()];
    for &(s, i) in all.iter().take(k) {
        in_v[s][i] = true;
    }
    Ok((0..inc.len())
        .map(|s| {
            if k == 0 || !in_v[s][1] {
                0
            } else if in_v[s][k] {
                k
            } else {
                (1..k).find(|&i| in_v[s][i] && !in_v[s][i + 1]).unwrap_or(0)
            }
        })
        .collect())
}

/// Minimize `max_s f_s(n_s)` subject to `Σ n_s = K` for non-decreasing,
/// non-negative `f_s`, by running the greedy on the cumulative sums `g_s`.
pub fn minimax_via_cumsum(costs: &CostTable, k: usize) -> Result<Vec<usize>> {
    costs.check_covers(k)?;
    for (id, v) in costs.ids.iter().zip(&costs.values) {
        if v.iter().any(|&x| x < 0.0) {
            return Err(Error::Precondition(format!("cost function of `{id}` is negative")));
        }
        if v.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Precondition(format!("cost function of `{id}` is decreasing")));
        }
    }
    let g = costs.cumulative();
    debug_assert!(g.is_convex());
    // increments of g are f itself; taking them directly avoids cancellation
    let inc: Vec<Vec<f64>> = costs.values.iter().map(|v| v[1..=k].to_vec()).collect();
    Ok(greedy_on_increments(&g.ids, &inc, k))
}

// ---------------------------------------------------------------------------
// Vehicles and crews
// ---------------------------------------------------------------------------

/// One greedy step: after it, `k` units are allocated in total. `index` is
/// the position among the non-statutory units (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrderEntry {
    pub k: usize,
    pub index: usize,
    pub station: String,
}

/// A minimax value `risk / units` and the station attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub station: String,
    pub risk: Risk,
    pub units: u64,
}

impl Objective {
    pub fn value(&self) -> f64 {
        self.risk.value() / self.units as f64
    }

    /// Exact (or tolerance-based, for float risks) comparison of two objectives.
    pub fn cmp_value(&self, other: &Objective) -> Ordering {
        cmp_ratio(&self.risk, self.units, &other.risk, other.units)
    }
}

/// Largest ratio `risk / units` over the stations; `None` for an empty input.
fn max_ratio<'a>(items: impl Iterator<Item = (&'a str, &'a Risk, u64)>) -> Option<Objective> {
    let mut best: Option<Objective> = None;
    for (id, r, u) in items {
        let better = match &best {
            None => true,
            Some(b) => cmp_ratio(r, u, &b.risk, b.units) == Ordering::Greater,
        };
        if better {
            best = Some(Objective {
                station: id.to_string(),
                risk: *r,
                units: u,
            });
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleAllocation {
    /// Stations in risk-table order with their vehicle counts.
    pub counts: Vec<(String, usize)>,
    pub order_log: Vec<OrderEntry>,
    pub objective: Objective,
}

impl VehicleAllocation {
    pub fn n(&self, station: &str) -> Option<usize> {
        self.counts.iter().find(|(s, _)| s == station).map(|(_, n)| *n)
    }

    pub fn counts_map(&self) -> BTreeMap<String, usize> {
        self.counts.iter().cloned().collect()
    }

    /// Order-log indices per station.
    pub fn indices_of(&self, station: &str) -> Vec<usize> {
        indices_of(&self.order_log, station)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrewAllocation {
    pub alpha: usize,
    /// Stations in risk-table order with their crew-member counts f(s).
    pub counts: Vec<(String, usize)>,
    pub order_log: Vec<OrderEntry>,
    pub objective: Objective,
}

impl CrewAllocation {
    pub fn f(&self, station: &str) -> Option<usize> {
        self.counts.iter().find(|(s, _)| s == station).map(|(_, f)| *f)
    }

    /// Vehicles that can be operated: `⌊f(s)/α⌋`.
    pub fn operational(&self, station: &str) -> Option<usize> {
        self.f(station).map(|f| f / self.alpha)
    }

    /// Crew members beyond the last complete crew: `f(s) mod α`.
    pub fn slack(&self, station: &str) -> Option<usize> {
        self.f(station).map(|f| f % self.alpha)
    }

    pub fn indices_of(&self, station: &str) -> Vec<usize> {
        indices_of(&self.order_log, station)
    }
}

fn indices_of(log: &[OrderEntry], station: &str) -> Vec<usize> {
    log.iter().filter(|e| e.station == station).map(|e| e.index).collect()
}

fn check_positive_risks(risks: &RiskTable) -> Result<()> {
    if risks.is_empty() {
        return Err(Error::invalid("risk table is empty"));
    }
    for e in risks.entries() {
        if e.risk.value().is_nan() || e.risk.value() <= 0.0 {
            return Err(Error::Precondition(format!(
                "risk of station `{}` is {}; every risk must be positive (use a risk floor)",
                e.station,
                e.risk.value()
            )));
        }
    }
    Ok(())
}

fn check_vehicle_budget(risks: &RiskTable, k: usize) -> Result<()> {
    if k < risks.len() {
        return Err(Error::Infeasible(format!(
            "K >= |S| is required but K = {k} < |S| = {}",
            risks.len()
        )));
    }
    Ok(())
}

/// `Λ(s)/n(s)` maximized over stations, recomputed from counts.
pub fn vehicle_objective(risks: &RiskTable, counts: &[usize]) -> Option<Objective> {
    max_ratio(
        risks
            .entries()
            .iter()
            .zip(counts)
            .map(|(e, &n)| (e.station.as_str(), &e.risk, n as u64)),
    )
}

/// `Λ(s)/⌊f(s)/α⌋` maximized over stations, recomputed from crew counts.
pub fn crew_objective(risks: &RiskTable, f: &[usize], alpha: usize) -> Option<Objective> {
    max_ratio(
        risks
            .entries()
            .iter()
            .zip(f)
            .map(|(e, &f)| (e.station.as_str(), &e.risk, (f / alpha) as u64)),
    )
}

/// Greedy vehicle allocation.
///
/// Every station starts with one vehicle; each further vehicle goes to the
/// station with the largest risk per vehicle. Ties are broken by larger risk,
/// then smallest station id.
pub fn allocate_vehicles(risks: &RiskTable, k: usize) -> Result<VehicleAllocation> {
    check_positive_risks(risks)?;
    check_vehicle_budget(risks, k)?;
    let entries = risks.entries();
    let s_count = entries.len();
    let mut n = vec![1usize; s_count];
    let mut log = Vec::with_capacity(k - s_count);
    for total in s_count + 1..=k {
        let mut best = 0usize;
        for s in 1..s_count {
            let ord = cmp_ratio(&entries[s].risk, n[s] as u64, &entries[best].risk, n[best] as u64)
                .then_with(|| cmp_ratio(&entries[s].risk, 1, &entries[best].risk, 1))
                .then_with(|| entries[best].station.cmp(&entries[s].station));
            if ord == Ordering::Greater {
                best = s;
            }
        }
        n[best] += 1;
        log.push(OrderEntry {
            k: total,
            index: total - s_count,
            station: entries[best].station.clone(),
        });
    }
    let alloc = VehicleAllocation {
        objective: vehicle_objective(risks, &n).expect("non-empty table"),
        counts: entries.iter().map(|e| e.station.clone()).zip(n).collect(),
        order_log: log,
    };
    verify_vehicle_allocation(risks, k, &alloc)?;
    Ok(alloc)
}

/// Vehicle counts from the closed form.
///
/// Collect the candidate ratios `Λ(s)/m`, `m = 1..=K-|S|+1`, keep the
/// `K-|S|` largest as `V_K` and give station `s` the `m` with
/// `Λ(s)/(m-1) ∈ V_K`, `Λ(s)/m ∉ V_K` (1 if `Λ(s) ∉ V_K`, `1+K-|S|` if
/// `Λ(s)/(K-|S|) ∈ V_K`). Members of `V_K` are tracked per (station, m), with
/// equal ratios ordered by the greedy's tie rule. The order log is empty.
pub fn closed_form_vehicles(risks: &RiskTable, k: usize) -> Result<VehicleAllocation> {
    check_positive_risks(risks)?;
    check_vehicle_budget(risks, k)?;
    let entries = risks.entries();
    let extra = k - entries.len();
    let mut v: Vec<(usize, usize)> = (0..entries.len())
        .flat_map(|s| (1..=extra + 1).map(move |m| (s, m)))
        .collect();
    v.sort_by(|&(s, m), &(t, l)| {
        cmp_ratio(&entries[t].risk, l as u64, &entries[s].risk, m as u64)
            .then_with(|| cmp_ratio(&entries[t].risk, 1, &entries[s].risk, 1))
            .then_with(|| entries[s].station.cmp(&entries[t].station))
            .then_with(|| m.cmp(&l))
    });
    let mut in_vk = vec![vec![false; extra + 2]; entries.len()];
    for &(s, m) in v.iter().take(extra) {
        in_vk[s][m] = true;
    }
    let n: Vec<usize> = (0..entries.len())
        .map(|s| {
            if extra == 0 || !in_vk[s][1] {
                1
            } else if in_vk[s][extra] {
                1 + extra
            } else {
                (2..=extra).find(|&m| in_vk[s][m - 1] && !in_vk[s][m]).unwrap_or(1)
            }
        })
        .collect();
    let alloc = VehicleAllocation {
        objective: vehicle_objective(risks, &n).expect("non-empty table"),
        counts: entries.iter().map(|e| e.station.clone()).zip(n).collect(),
        order_log: Vec::new(),
    };
    verify_vehicle_allocation(risks, k, &alloc)?;
    Ok(alloc)
}

/// Check the constraints of a vehicle allocation: `Σ n = K`,
/// `1 <= n(s) <= K-|S|+1`, and the stored objective.
pub fn verify_vehicle_allocation(risks: &RiskTable, k: usize, alloc: &VehicleAllocation) -> Result<()> {
    let s_count = risks.len();
    if alloc.counts.len() != s_count
        || alloc
            .counts
            .iter()
            .zip(risks.entries())
            .any(|((a, _), e)| *a != e.station)
    {
        return Err(Error::Numeric("allocation stations do not match the risk table".into()));
    }
    let n: Vec<usize> = alloc.counts.iter().map(|(_, n)| *n).collect();
    let sum: usize = n.iter().sum();
    if sum != k {
        return Err(Error::Numeric(format!("vehicle counts sum to {sum}, expected {k}")));
    }
    if let Some((s, v)) = alloc.counts.iter().find(|(_, v)| *v < 1 || *v > k + 1 - s_count) {
        return Err(Error::Numeric(format!(
            "station `{s}` has {v} vehicles, outside 1..={}",
            k + 1 - s_count
        )));
    }
    let obj = vehicle_objective(risks, &n).expect("non-empty table");
    if obj.cmp_value(&alloc.objective) != Ordering::Equal {
        return Err(Error::Numeric("stored objective does not match the counts".into()));
    }
    Ok(())
}

fn vehicle_counts_for(risks: &RiskTable, n: &BTreeMap<String, usize>) -> Result<Vec<usize>> {
    for id in n.keys() {
        if risks.get(id).is_none() {
            return Err(Error::invalid(format!(
                "vehicle count given for unknown station `{id}`"
            )));
        }
    }
    risks
        .entries()
        .iter()
        .map(|e| {
            let v = *n
                .get(&e.station)
                .ok_or_else(|| Error::invalid(format!("no vehicle count for station `{}`", e.station)))?;
            if v < 1 {
                return Err(Error::Precondition(format!("station `{}` has no vehicle", e.station)));
            }
            Ok(v)
        })
        .collect()
}

fn check_crew_budget(risks: &RiskTable, n: &[usize], alpha: usize, k: usize) -> Result<()> {
    if alpha < 2 {
        return Err(Error::Precondition(format!(
            "crew size must be at least 2, got {alpha}"
        )));
    }
    let low = alpha * risks.len();
    let high = alpha * n.iter().sum::<usize>();
    if k < low || k >= high {
        return Err(Error::Infeasible(format!(
            "alpha*|S| <= K < alpha*sum(n) is required but {low} <= {k} < {high} does not hold"
        )));
    }
    Ok(())
}

/// Greedy crew allocation under shortage.
///
/// Every station starts with one crew of `alpha`. Each further member goes
/// to the station, among those with an unstaffed vehicle (`f < alpha n`),
/// with the largest `Λ/⌊f/alpha⌋`; ties prefer the largest `f mod alpha`,
/// then larger risk, then smallest id.
pub fn allocate_crews(
    risks: &RiskTable,
    vehicles: &BTreeMap<String, usize>,
    alpha: usize,
    k: usize,
) -> Result<CrewAllocation> {
    check_positive_risks(risks)?;
    let n = vehicle_counts_for(risks, vehicles)?;
    check_crew_budget(risks, &n, alpha, k)?;
    let entries = risks.entries();
    let s_count = entries.len();
    let start = alpha * s_count;
    let mut f = vec![alpha; s_count];
    let mut log = Vec::with_capacity(k - start);
    for total in start + 1..=k {
        let mut best: Option<usize> = None;
        for s in 0..s_count {
            if f[s] >= alpha * n[s] {
                continue;
            }
            best = match best {
                None => Some(s),
                Some(b) => {
                    let ord = cmp_ratio(
                        &entries[s].risk,
                        (f[s] / alpha) as u64,
                        &entries[b].risk,
                        (f[b] / alpha) as u64,
                    )
                    .then_with(|| (f[s] % alpha).cmp(&(f[b] % alpha)))
                    .then_with(|| cmp_ratio(&entries[s].risk, 1, &entries[b].risk, 1))
                    .then_with(|| entries[b].station.cmp(&entries[s].station));
                    Some(if ord == Ordering::Greater { s } else { b })
                }
            };
        }
        // K < alpha * Σn keeps at least one station open
        let best = best.expect("an open station");
        f[best] += 1;
        log.push(OrderEntry {
            k: total,
            index: total - start,
            station: entries[best].station.clone(),
        });
    }
    let alloc = CrewAllocation {
        alpha,
        objective: crew_objective(risks, &f, alpha).expect("non-empty table"),
        counts: entries.iter().map(|e| e.station.clone()).zip(f).collect(),
        order_log: log,
    };
    verify_crew_allocation(risks, vehicles, k, &alloc)?;
    if let Some(err) = slack_violation(&alloc, k) {
        return Err(Error::Numeric(err));
    }
    Ok(alloc)
}

/// Check `alpha <= f(s) <= alpha n(s)`, `Σ f = K` and the stored objective.
pub fn verify_crew_allocation(
    risks: &RiskTable,
    vehicles: &BTreeMap<String, usize>,
    k: usize,
    alloc: &CrewAllocation,
) -> Result<()> {
    let n = vehicle_counts_for(risks, vehicles)?;
    let alpha = alloc.alpha;
    if alloc.counts.len() != risks.len()
        || alloc
            .counts
            .iter()
            .zip(risks.entries())
            .any(|((a, _), e)| *a != e.station)
    {
        return Err(Error::Numeric("allocation stations do not match the risk table".into()));
    }
    let f: Vec<usize> = alloc.counts.iter().map(|(_, f)| *f).collect();
    let sum: usize = f.iter().sum();
    if sum != k {
        return Err(Error::Numeric(format!("crew counts sum to {sum}, expected {k}")));
    }
    for ((s, fs), ns) in alloc.counts.iter().zip(&n) {
        if *fs < alpha || *fs > alpha * ns {
            return Err(Error::Numeric(format!(
                "station `{s}` has {fs} crew members, outside {alpha}..={}",
                alpha * ns
            )));
        }
    }
    let obj = crew_objective(risks, &f, alpha).expect("non-empty table");
    if obj.cmp_value(&alloc.objective) != Ordering::Equal {
        return Err(Error::Numeric("stored objective does not match the counts".into()));
    }
    Ok(())
}

/// Greedy output carries slack at one station at most, of size `K mod alpha`.
fn slack_violation(alloc: &CrewAllocation, k: usize) -> Option<String> {
    let slack: Vec<(&String, usize)> = alloc
        .counts
        .iter()
        .map(|(s, f)| (s, f % alloc.alpha))
        .filter(|(_, r)| *r != 0)
        .collect();
    let expected = k % alloc.alpha;
    match slack.as_slice() {
        [] if expected == 0 => None,
        [(_, r)] if *r == expected => None,
        _ => Some(format!(
            "slack {slack:?} is not concentrated (expected {expected} at one station)"
        )),
    }
}

// ---------------------------------------------------------------------------
// Exhaustive oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum BruteMode {
    Vehicles,
    Crews {
        vehicles: BTreeMap<String, usize>,
        alpha: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub objective: Objective,
    /// First optimal allocation in lexicographic order, in risk-table order.
    pub witness: Vec<usize>,
    pub searched: u128,
}

/// Number of integer vectors with `lo[s] <= x[s] <= hi[s]` summing to `total`.
fn count_bounded(lo: &[usize], hi: &[usize], total: usize) -> u128 {
    let mut ways = vec![0u128; total + 1];
    ways[0] = 1;
    for (&l, &h) in lo.iter().zip(hi) {
        let mut next = vec![0u128; total + 1];
        for (t, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for x in l..=h {
                if t + x > total {
                    break;
                }
                next[t + x] = next[t + x].saturating_add(w);
            }
        }
        ways = next;
    }
    ways[total]
}

/// Exact minimax optimum by enumerating every feasible allocation.
pub fn brute_force_minimax(risks: &RiskTable, k: usize, mode: &BruteMode, cap: u128) -> Result<BruteForceResult> {
    check_positive_risks(risks)?;
    let s_count = risks.len();
    let (lo, hi, divisor) = match mode {
        BruteMode::Vehicles => {
            check_vehicle_budget(risks, k)?;
            (vec![1; s_count], vec![k + 1 - s_count; s_count], 1usize)
        }
        BruteMode::Crews { vehicles, alpha } => {
            let n = vehicle_counts_for(risks, vehicles)?;
            check_crew_budget(risks, &n, *alpha, k)?;
            (vec![*alpha; s_count], n.iter().map(|v| v * alpha).collect(), *alpha)
        }
    };
    let size = count_bounded(&lo, &hi, k);
    if size > cap {
        return Err(Error::SearchTooLarge { size, cap });
    }

    struct Search<'a> {
        risks: &'a RiskTable,
        lo: &'a [usize],
        hi: &'a [usize],
        divisor: usize,
        current: Vec<usize>,
        best: Option<(Objective, Vec<usize>)>,
        searched: u128,
        // suffix sums of the bounds for pruning
        lo_rest: Vec<usize>,
        hi_rest: Vec<usize>,
    }

    impl Search<'_> {
        fn run(&mut self, s: usize, remaining: usize) {
            if s == self.lo.len() {
                if remaining != 0 {
                    return;
                }
                self.searched += 1;
                let units: Vec<usize> = self.current.iter().map(|x| x / self.divisor).collect();
                let obj = vehicle_objective(self.risks, &units).expect("non-empty table");
                let better = match &self.best {
                    None => true,
                    Some((b, _)) => obj.cmp_value(b) == Ordering::Less,
                };
                if better {
                    self.best = Some((obj, self.current.clone()));
                }
                return;
            }
            let lo = self.lo[s].max(remaining.saturating_sub(self.hi_rest[s + 1]));
            let hi = self.hi[s].min(remaining.saturating_sub(self.lo_rest[s + 1]));
            for x in lo..=hi {
                self.current[s] = x;
                self.run(s + 1, remaining - x);
            }
        }
    }

    let mut lo_rest = vec![0usize; s_count + 1];
    let mut hi_rest = vec![0usize; s_count + 1];
    for s in (0..s_count).rev() {
        lo_rest[s] = lo_rest[s + 1] + lo[s];
        hi_rest[s] = hi_rest[s + 1] + hi[s];
    }
    let mut search = Search {
        risks,
        lo: &lo,
        hi: &hi,
        divisor,
        current: vec![0; s_count],
        best: None,
        searched: 0,
        lo_rest,
        hi_rest,
    };
    search.run(0, k);
    let (objective, witness) = search
        .best
        .ok_or_else(|| Error::Infeasible("no feasible allocation exists".into()))?;
    Ok(BruteForceResult {
        objective,
        witness,
        searched: search.searched,
    })
}

/// Format to four significant digits, dropping trailing zeros: `36.2`, `84.45`, `3`.
pub fn format_sig4(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mut magnitude = v.abs().log10().floor() as i32;
    // rounding may carry into a new digit (e.g. 99.996 -> 100.0)
    let decimals = |m: i32| (3 - m).max(0) as usize;
    let rounded: f64 = format!("{v:.prec$}", prec = decimals(magnitude)).parse().unwrap_or(v);
    if rounded.abs() >= 10f64.powi(magnitude + 1) {
        magnitude += 1;
    }
    let s = format!("{v:.prec$}", prec = decimals(magnitude));
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(pairs: &[(&str, &'static str)]) -> RiskTable {
        RiskTable::from_decimals(pairs.iter().copied()).unwrap()
    }

    fn vehicles(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(s, n)| (s.to_string(), *n)).collect()
    }

    #[test]
    fn convex_sum_examples() {
        let t = CostTable::new([("A", vec![0.0, 1.0, 4.0, 9.0]), ("B", vec![0.0, 2.0, 4.0, 6.0])]).unwrap();
        assert_eq!(greedy_convex_sum(&t, 0).unwrap(), vec![0, 0]);
        let n = greedy_convex_sum(&t, 3).unwrap();
        assert_eq!(n, vec![1, 2]);
        assert_eq!(t.total_cost(&n), 5.0);
        assert_eq!(closed_form_convex_sum(&t, 3).unwrap(), vec![1, 2]);
        assert!(greedy_convex_sum(&t, 4).is_err());
    }

    #[test]
    fn non_convex_rejected() {
        let t = CostTable::new([("A", vec![0.0, 3.0, 4.0])]).unwrap();
        assert!(!t.is_convex());
        assert!(matches!(greedy_convex_sum(&t, 2), Err(Error::Precondition(_))));
    }

    #[test]
    fn minimax_examples() {
        let t = CostTable::new([("A", vec![0.0, 1.0, 2.0, 3.0]), ("B", vec![0.0, 2.0, 4.0, 6.0])]).unwrap();
        let n = minimax_via_cumsum(&t, 3).unwrap();
        assert_eq!(n, vec![2, 1]);
        assert_eq!(t.max_cost(&n), 2.0);
        let single = CostTable::new([("only", vec![0.0, 1.0, 5.0, 5.0, 9.0])]).unwrap();
        assert_eq!(minimax_via_cumsum(&single, 4).unwrap(), vec![4]);
        let bad = CostTable::new([("A", vec![0.0, 2.0, 1.0])]).unwrap();
        assert!(minimax_via_cumsum(&bad, 2).is_err());
        let neg = CostTable::new([("A", vec![-1.0, 0.0, 1.0])]).unwrap();
        assert!(minimax_via_cumsum(&neg, 2).is_err());
    }

    #[test]
    fn statutory_only() {
        let r = table(&[("a", "5"), ("b", "9"), ("c", "1.5")]);
        let v = allocate_vehicles(&r, 3).unwrap();
        assert!(v.counts.iter().all(|(_, n)| *n == 1));
        assert!(v.order_log.is_empty());
        assert_eq!(v.objective.value(), 9.0);
        let c = closed_form_vehicles(&r, 3).unwrap();
        assert_eq!(c.counts, v.counts);
    }

    #[test]
    fn vehicle_errors() {
        let r = table(&[("a", "5"), ("b", "9")]);
        assert!(matches!(allocate_vehicles(&r, 1), Err(Error::Infeasible(_))));
        let z = RiskTable::from_values([("a", 0.0), ("b", 1.0)]).unwrap();
        assert!(matches!(allocate_vehicles(&z, 3), Err(Error::Precondition(_))));
        assert!(matches!(closed_form_vehicles(&z, 3), Err(Error::Precondition(_))));
    }

    #[test]
    fn vehicle_tie_prefers_larger_risk_then_id() {
        // 10/2 = 5 ties with 5/1; the larger risk wins
        let r = table(&[("small", "5"), ("big", "10")]);
        let v = allocate_vehicles(&r, 4).unwrap();
        assert_eq!(v.order_log[0].station, "big");
        assert_eq!(v.order_log[1].station, "big");
        let r = table(&[("b", "6"), ("a", "6")]);
        let v = allocate_vehicles(&r, 3).unwrap();
        assert_eq!(v.order_log[0].station, "a");
    }

    #[test]
    fn brute_force_examples() {
        let r = table(&[("a", "6"), ("b", "6")]);
        let b = brute_force_minimax(&r, 3, &BruteMode::Vehicles, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(b.objective.value(), 6.0);
        assert_eq!(b.searched, 2);
        let r = table(&[("a", "10"), ("b", "1")]);
        let b = brute_force_minimax(&r, 3, &BruteMode::Vehicles, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(b.objective.value(), 5.0);
        assert_eq!(b.witness, vec![2, 1]);
    }

    #[test]
    fn brute_force_cap() {
        let r = table(&[("a", "1"), ("b", "2"), ("c", "3")]);
        let err = brute_force_minimax(&r, 30, &BruteMode::Vehicles, 10).unwrap_err();
        assert!(matches!(err, Error::SearchTooLarge { size: 406, cap: 10 }));
    }

    #[test]
    fn count_bounded_matches_binomial() {
        // compositions of 10 into 4 positive parts: C(9, 3) = 84
        assert_eq!(count_bounded(&[1; 4], &[7; 4], 10), 84);
        assert_eq!(count_bounded(&[2, 2], &[4, 6], 8), 3);
    }

    #[test]
    fn tied_pair_crews() {
        let r = table(&[("s1", "6"), ("s2", "6")]);
        let n = vehicles(&[("s1", 2), ("s2", 2)]);
        let c = allocate_crews(&r, &n, 6, 18).unwrap();
        let first = c.order_log[0].station.clone();
        assert!(c.order_log.iter().all(|e| e.station == first));
        assert_eq!(c.order_log.len(), 6);
        assert_eq!(c.f(&first), Some(12));
        let mut fs: Vec<usize> = c.counts.iter().map(|(_, f)| *f).collect();
        fs.sort();
        assert_eq!(fs, vec![6, 12]);
        assert_eq!(c.objective.value(), 6.0);
        let b = brute_force_minimax(&r, 18, &BruteMode::Crews { vehicles: n, alpha: 6 }, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(b.objective.value(), 6.0);
    }

    #[test]
    fn crews_statutory_only() {
        let r = table(&[("a", "3"), ("b", "7")]);
        let n = vehicles(&[("a", 2), ("b", 1)]);
        let c = allocate_crews(&r, &n, 3, 6).unwrap();
        assert_eq!(c.counts, vec![("a".into(), 3), ("b".into(), 3)]);
        assert_eq!(c.objective.value(), 7.0);
    }

    #[test]
    fn crew_errors() {
        let r = table(&[("a", "3"), ("b", "7")]);
        let n = vehicles(&[("a", 2), ("b", 1)]);
        // alpha*sum(n) = 9, so K = 9 is not a shortage
        assert!(matches!(allocate_crews(&r, &n, 3, 9), Err(Error::Infeasible(_))));
        assert!(matches!(allocate_crews(&r, &n, 3, 5), Err(Error::Infeasible(_))));
        assert!(matches!(allocate_crews(&r, &n, 1, 3), Err(Error::Precondition(_))));
        let missing = vehicles(&[("a", 2)]);
        assert!(allocate_crews(&r, &missing, 3, 7).is_err());
        let zero = vehicles(&[("a", 2), ("b", 0)]);
        assert!(allocate_crews(&r, &zero, 3, 7).is_err());
        let extra = vehicles(&[("a", 2), ("b", 1), ("c", 1)]);
        assert!(allocate_crews(&r, &extra, 3, 7).is_err());
    }

    #[test]
    fn crew_cap_excludes_full_stations() {
        // b has the higher risk but only one vehicle, so it can never take more
        let r = table(&[("a", "1"), ("b", "100")]);
        let n = vehicles(&[("a", 3), ("b", 1)]);
        let c = allocate_crews(&r, &n, 2, 7).unwrap();
        assert_eq!(c.f("b"), Some(2));
        assert_eq!(c.f("a"), Some(5));
        assert_eq!(c.operational("a"), Some(2));
        assert_eq!(c.slack("a"), Some(1));
    }

    #[test]
    fn sig4_formatting() {
        assert_eq!(format_sig4(36.2), "36.2");
        assert_eq!(format_sig4(36.2000001), "36.2");
        assert_eq!(format_sig4(84.45), "84.45");
        assert_eq!(format_sig4(168.9), "168.9");
        assert_eq!(format_sig4(6.0), "6");
        assert_eq!(format_sig4(1234.6), "1235");
        assert_eq!(format_sig4(0.012346), "0.01235");
        assert_eq!(format_sig4(99.996), "100");
    }
}
