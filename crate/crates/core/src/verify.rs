//! Post-hoc checks on contracts and the congested-airspace driver.
//!
//! - [`check_contracts`]: pairwise region overlap between distinct contracts.
//! - [`check_accuracy`]: fraction of freshly simulated positions that fall
//!   inside a region of the contract valid at that time.
//! - [`cross_check`]: re-simulates every contract and counts positions that
//!   enter another contract's time-valid region.
//! - [`run_congested`]: keeps adding random flights until a target number of
//!   deconflicted contracts exists.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::airspace::{AirspaceModel, ContractStore};
use crate::error::{Error, Result};
use crate::flightsim::{simulate_route, Propagation, SegmentRecord, SimConfig};
use crate::geometry::{ellipses_overlap, point_in_ellipse, Ellipse, LocalPoint};
use crate::ovgen::{build_contract, Contract, OvGenConfig};
use crate::router::{plan, Route, RouterConfig};

/// One overlapping pair of regions from two different contracts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub contract_a: String,
    pub contract_b: String,
    pub ov_a: usize,
    pub ov_b: usize,
    pub region_a: usize,
    pub region_b: usize,
    /// Common time interval of the two regions, seconds.
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub contracts: usize,
    pub pairs: Vec<Conflict>,
    pub clear: bool,
}

/// Every pair of time-overlapping regions from distinct contracts whose
/// ellipses overlap. Each pair is reported once, with `contract_a` the
/// lexicographically smaller id.
pub fn check_contracts(store: &ContractStore) -> ConflictReport {
    let contracts: Vec<&Contract> = store.contracts().collect();
    let mut pairs: Vec<Conflict> = contracts
        .par_iter()
        .flat_map_iter(|a| {
            let mut found = Vec::new();
            for (ka, ova) in a.ovs.iter().enumerate() {
                let ellipses_a: Vec<Ellipse> = ova.regions.iter().map(|r| r.ellipse()).collect();
                for (id_b, kb, ovb) in store.query_indexed(ova.start, ova.end) {
                    if id_b <= a.id.as_str() {
                        continue;
                    }
                    for (ia, ra) in ova.regions.iter().enumerate() {
                        for (ib, rb) in ovb.regions.iter().enumerate() {
                            if ra.overlaps_time(rb.t_start, rb.t_end)
                                && ellipses_overlap(&ellipses_a[ia], &rb.ellipse())
                            {
                                found.push(Conflict {
                                    contract_a: a.id.clone(),
                                    contract_b: id_b.to_string(),
                                    ov_a: ka,
                                    ov_b: kb,
                                    region_a: ia,
                                    region_b: ib,
                                    start: ra.t_start.max(rb.t_start),
                                    end: ra.t_end.min(rb.t_end),
                                });
                            }
                        }
                    }
                }
            }
            found
        })
        .collect();
    pairs.sort_by(|x, y| {
        (&x.contract_a, &x.contract_b, x.ov_a, x.ov_b, x.region_a, x.region_b)
            .cmp(&(&y.contract_a, &y.contract_b, y.ov_a, y.ov_b, y.region_a, y.region_b))
    });
    ConflictReport {
        contracts: contracts.len(),
        clear: pairs.is_empty(),
        pairs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvAccuracy {
    pub ov: usize,
    pub total: usize,
    pub included: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub contract: String,
    pub total_records: usize,
    pub included_records: usize,
    pub accuracy: f64,
    pub per_ov: Vec<OvAccuracy>,
}

/// Time-indexed ellipses of one contract, ready for point queries.
struct RegionTable {
    rows: Vec<(usize, f64, f64, Ellipse)>,
}

impl RegionTable {
    fn new(contract: &Contract) -> Self {
        let rows = contract
            .ovs
            .iter()
            .enumerate()
            .flat_map(|(k, ov)| ov.regions.iter().map(move |r| (k, r.t_start, r.t_end, r.ellipse())))
            .collect();
        Self { rows }
    }

    /// Whether `p` lies in a region valid at `t`.
    fn contains(&self, t: f64, p: LocalPoint) -> bool {
        self.rows
            .iter()
            .any(|(_, t0, t1, e)| *t0 <= t && t <= *t1 && point_in_ellipse(p, e))
    }

    /// OV whose span holds `t`, preferring the earlier one at a boundary.
    fn ov_at(&self, t: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|(_, t0, t1, _)| *t0 <= t && t <= *t1)
            .map(|r| r.0)
    }
}

/// Simulates `trials` aircraft over the contract's route and reports the
/// fraction of airborne 1-second records inside a region of the contract
/// valid at the record's time.
///
/// `cfg` supplies the uncertainty model; its speed band is re-centered on
/// the contract's cruise speed and its seed should differ from the one that
/// generated the contract. The trial aircraft are flown independently
/// rather than resampled between segments, so each one is an independent
/// draw of the per-aircraft law.
pub fn check_accuracy(contract: &Contract, cfg: &SimConfig, trials: usize) -> Result<AccuracyReport> {
    let sim_cfg = SimConfig {
        aircraft: trials,
        propagation: Propagation::Independent,
        ..cfg.centered_on(contract.route.cruise_speed)
    };
    let records = simulate_route(&contract.route, &sim_cfg)?;
    let table = RegionTable::new(contract);
    let mut per_ov: Vec<OvAccuracy> = (0..contract.ovs.len())
        .map(|ov| OvAccuracy { ov, total: 0, included: 0 })
        .collect();
    let counts: Vec<(Option<usize>, bool)> = records
        .par_iter()
        .flat_map_iter(|rec| airborne(rec, &contract.route).map(|(t, p)| (table.ov_at(t), table.contains(t, p))).collect::<Vec<_>>())
        .collect();
    let (mut total, mut included) = (0, 0);
    for (ov, inside) in counts {
        total += 1;
        included += inside as usize;
        if let Some(k) = ov {
            per_ov[k].total += 1;
            per_ov[k].included += inside as usize;
        }
    }
    Ok(AccuracyReport {
        contract: contract.id.clone(),
        total_records: total,
        included_records: included,
        accuracy: if total > 0 { included as f64 / total as f64 } else { 1.0 },
        per_ov,
    })
}

fn airborne<'a>(rec: &'a SegmentRecord, route: &'a Route) -> impl Iterator<Item = (f64, LocalPoint)> + 'a {
    rec.slices.iter().flat_map(move |s| {
        s.states
            .iter()
            .filter(move |a| !a.landed(route))
            .map(move |a| (s.t, a.position))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub contracts: usize,
    pub records: usize,
    pub foreign_inclusions: usize,
    /// `(flight, foreign contract)` pairs with at least one inclusion.
    pub offenders: Vec<(String, String)>,
}

/// Re-simulates every contract in `store` and counts airborne records that
/// fall inside a region of a different contract valid at that time.
///
/// Each flight gets its own RNG stream derived from `cfg.seed` and its
/// position in id order.
pub fn cross_check(store: &ContractStore, cfg: &SimConfig) -> Result<CrossCheckReport> {
    let contracts: Vec<&Contract> = store.contracts().collect();
    let tables: Vec<(String, RegionTable)> = contracts
        .iter()
        .map(|c| (c.id.clone(), RegionTable::new(c)))
        .collect();
    let results = contracts
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let sim_cfg = SimConfig {
                seed: cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1)),
                propagation: Propagation::Independent,
                ..cfg.centered_on(c.route.cruise_speed)
            };
            let records = simulate_route(&c.route, &sim_cfg)?;
            let mut n = 0;
            let mut hits = 0;
            let mut offenders = Vec::new();
            for rec in &records {
                for (t, p) in airborne(rec, &c.route) {
                    n += 1;
                    for (id, table) in &tables {
                        if id != &c.id && table.contains(t, p) {
                            hits += 1;
                            if !offenders.contains(id) {
                                offenders.push(id.clone());
                            }
                        }
                    }
                }
            }
            Ok((n, hits, offenders.into_iter().map(|o| (c.id.clone(), o)).collect::<Vec<_>>()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = CrossCheckReport {
        contracts: contracts.len(),
        records: 0,
        foreign_inclusions: 0,
        offenders: Vec::new(),
    };
    for (n, hits, offenders) in results {
        report.records += n;
        report.foreign_inclusions += hits;
        report.offenders.extend(offenders);
    }
    report.offenders.sort();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CongestedConfig {
    /// Number of contracts to place.
    pub target: usize,
    /// Departure window length, seconds.
    pub window: f64,
    pub retry_step: f64,
    pub speed_low: f64,
    pub speed_high: f64,
    /// Extra clearance between a new contract's regions and existing ones,
    /// meters. Applied by growing both ellipses' semi-axes.
    pub separation: f64,
    /// Request draws allowed per target contract before giving up.
    pub attempts_per_target: usize,
    pub seed: u64,
}

impl Default for CongestedConfig {
    fn default() -> Self {
        Self {
            target: 31,
            window: 300.0,
            retry_step: 30.0,
            speed_low: 13.0,
            speed_high: 20.0,
            separation: 100.0,
            attempts_per_target: 10,
            seed: 0,
        }
    }
}

impl CongestedConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.target == 0 {
            return fail("target must be at least 1");
        }
        if !(self.window > 0.0 && self.retry_step > 0.0) {
            return fail("window and retry_step must be positive");
        }
        if !(self.speed_low > 0.0 && self.speed_low <= self.speed_high) {
            return fail("speed band must satisfy 0 < speed_low <= speed_high");
        }
        if !(self.separation >= 0.0) {
            return fail("separation must be non-negative");
        }
        if self.attempts_per_target == 0 {
            return fail("attempts_per_target must be at least 1");
        }
        Ok(())
    }
}

/// One placed flight of the congested scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub contract_id: String,
    pub origin: String,
    pub destination: String,
    pub requested_departure: f64,
    pub granted_departure: f64,
    pub cruise_speed: f64,
    pub route_length: f64,
    pub ov_count: usize,
    /// Departure times tried before this one was granted.
    pub retries: usize,
    /// Planning plus contract-building time, seconds.
    pub wall_time_s: f64,
}

/// Why candidate departures were turned down.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejections {
    pub no_route: usize,
    pub too_close: usize,
    pub unbuildable: usize,
}

#[derive(Debug, Clone)]
pub struct CongestedOutcome {
    pub store: ContractStore,
    pub report: ConflictReport,
    pub schedule: Vec<ScheduleEntry>,
    pub attempts: usize,
    pub rejections: Rejections,
}

/// Candidate departure times closest-first: `d, d+s, d−s, d+2s, …`, all
/// inside `[0, window]`.
pub fn departure_candidates(requested: f64, step: f64, window: f64) -> Vec<f64> {
    let mut out = vec![requested];
    let mut k = 1.0;
    loop {
        let (later, earlier) = (requested + k * step, requested - k * step);
        let (ok_l, ok_e) = (later <= window, earlier >= 0.0);
        if !ok_l && !ok_e {
            return out;
        }
        if ok_l {
            out.push(later);
        }
        if ok_e {
            out.push(earlier);
        }
        k += 1.0;
    }
}

/// Whether any region of `candidate` comes within `separation` of a
/// time-overlapping region already in `store`.
pub fn conflicts_with_store(candidate: &Contract, store: &ContractStore, separation: f64) -> bool {
    candidate.ovs.iter().any(|ov| {
        let others = store.query_interval(ov.start, ov.end);
        ov.regions.iter().any(|r| {
            let mine = r.ellipse().grown(separation);
            others.iter().any(|(_, o)| {
                o.regions.iter().any(|q| {
                    q.overlaps_time(r.t_start, r.t_end) && ellipses_overlap(&mine, &q.ellipse().grown(separation))
                })
            })
        })
    })
}

/// Places `cfg.target` deconflicted contracts with random vertiport pairs,
/// cruise speeds and Poisson-process departure requests.
///
/// A request that cannot be routed, or whose contract would come too close
/// to an existing one, is retried at the nearest other departure times on a
/// `retry_step` grid inside the window; once those are exhausted a new
/// request is drawn.
pub fn run_congested(
    airspace: &AirspaceModel,
    router: &RouterConfig,
    sim: &SimConfig,
    ovgen: &OvGenConfig,
    cfg: &CongestedConfig,
) -> Result<CongestedOutcome> {
    cfg.validate()?;
    router.validate()?;
    sim.validate()?;
    ovgen.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inter_arrival = Exp::new(cfg.target as f64 / cfg.window).map_err(|e| Error::Config(e.to_string()))?;
    let speeds = Uniform::new_inclusive(cfg.speed_low, cfg.speed_high).map_err(|e| Error::Config(e.to_string()))?;
    let ports: Vec<&str> = airspace.vertiports.iter().map(|v| v.id.as_str()).collect();
    let mut store = ContractStore::default();
    let mut schedule = Vec::new();
    let mut clock = 0.0;
    let max_attempts = cfg.attempts_per_target * cfg.target;
    let mut attempts = 0;
    let mut rejections = Rejections::default();

    while schedule.len() < cfg.target {
        if attempts >= max_attempts {
            return Err(Error::ScenarioInfeasible {
                placed: schedule.len(),
                target: cfg.target,
                attempts,
            });
        }
        attempts += 1;
        clock += inter_arrival.sample(&mut rng);
        if clock > cfg.window {
            clock %= cfg.window;
        }
        let requested = clock.round();
        let o = rng.random_range(0..ports.len());
        let mut d = rng.random_range(0..ports.len() - 1);
        if d >= o {
            d += 1;
        }
        let speed = speeds.sample(&mut rng);
        let flight_seed: u64 = rng.random();
        let route_cfg = RouterConfig {
            cruise_speed: speed,
            ..router.clone()
        };
        let sim_cfg = SimConfig {
            seed: flight_seed,
            ..sim.centered_on(speed)
        };
        let id = format!("C{:03}", schedule.len());
        for (retries, departure) in departure_candidates(requested, cfg.retry_step, cfg.window)
            .into_iter()
            .enumerate()
        {
            let started = Instant::now();
            let route = match plan(airspace, &store, ports[o], ports[d], departure, &route_cfg) {
                Ok(r) => r,
                Err(Error::NoRoute { .. }) => {
                    rejections.no_route += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let records = simulate_route(&route, &sim_cfg)?;
            let contract = match build_contract(id.clone(), &route, &records, ovgen, sim.cruise_altitude, flight_seed) {
                Ok(c) => c,
                Err(Error::Region { .. }) => {
                    rejections.unbuildable += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if conflicts_with_store(&contract, &store, cfg.separation) {
                rejections.too_close += 1;
                continue;
            }
            schedule.push(ScheduleEntry {
                contract_id: id.clone(),
                origin: ports[o].to_string(),
                destination: ports[d].to_string(),
                requested_departure: requested,
                granted_departure: departure,
                cruise_speed: speed,
                route_length: route.total_length,
                ov_count: contract.ovs.len(),
                retries,
                wall_time_s: started.elapsed().as_secs_f64(),
            });
            store.register(contract)?;
            break;
        }
    }
    let report = check_contracts(&store);
    Ok(CongestedOutcome {
        store,
        report,
        schedule,
        attempts,
        rejections,
    })
}
