//! Monte-Carlo flight simulation along a planned route.
//!
//! A fleet of `N` aircraft starts in a disc around the first waypoint and
//! flies the route segment by segment. Every segment of `t_d` seconds is
//! recorded at `dt` intervals. Between segments a fresh fleet is spawned:
//! the number of aircraft heading for each waypoint matches the occupancy at
//! the end of the previous segment, and each spawn starts from a randomly
//! chosen aircraft's final position plus Gaussian jitter.

pub mod model;

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LocalPoint;
use crate::router::Route;

pub use model::{default_models, FlightModel, PointMass};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AircraftState {
    pub position: LocalPoint,
    pub alt: f64,
    /// Index of the waypoint being flown to; equals the waypoint count once
    /// the aircraft has landed.
    pub active_waypoint: usize,
    pub speed: f64,
}

impl AircraftState {
    pub fn landed(&self, route: &Route) -> bool {
        self.active_waypoint >= route.waypoints.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Fleet size `N`. Larger fleets keep the resampled cloud close to the
    /// per-aircraft law; see the crate README for the measurements behind
    /// the default.
    pub aircraft: usize,
    /// Record interval, seconds.
    pub dt: f64,
    /// Segment duration `t_d`, seconds.
    pub segment_duration: f64,
    /// Radius `r0` of the initial-position disc, meters.
    pub init_radius: f64,
    pub speed_low: f64,
    pub speed_high: f64,
    pub capture_radius: f64,
    /// Standard deviation `σ` of the re-injection jitter, meters.
    pub jitter: f64,
    pub seed: u64,
    pub cruise_altitude: f64,
    pub model: String,
    pub propagation: Propagation,
}

/// How the fleet is carried from one segment to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Propagation {
    /// Spawn a fresh fleet proportionally to waypoint occupancy, from
    /// resampled final positions (see [`reinject`]).
    #[default]
    Resample,
    /// Every aircraft continues from its own final position with the same
    /// jitter and a redrawn speed. Each aircraft then follows the per-aircraft
    /// law that resampling approximates, without finite-fleet drift; used to
    /// fly verification fleets.
    Independent,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            aircraft: 1000,
            dt: 1.0,
            segment_duration: 60.0,
            init_radius: 50.0,
            speed_low: 13.0,
            speed_high: 17.0,
            capture_radius: 100.0,
            jitter: 10.0,
            seed: 0,
            cruise_altitude: 120.0,
            model: "point-mass".into(),
            propagation: Propagation::Resample,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.aircraft == 0 {
            return fail("aircraft must be at least 1");
        }
        if !(self.dt > 0.0 && self.dt <= self.segment_duration) {
            return fail("dt must be in (0, segment_duration]");
        }
        let steps = self.segment_duration / self.dt;
        if (steps - steps.round()).abs() > 1e-9 {
            return fail("dt must divide segment_duration");
        }
        if !(self.speed_low > 0.0 && self.speed_low <= self.speed_high) {
            return fail("speed band must satisfy 0 < speed_low <= speed_high");
        }
        if !(self.init_radius >= 0.0 && self.capture_radius >= 0.0 && self.jitter >= 0.0) {
            return fail("radii and jitter must be non-negative");
        }
        if !self.cruise_altitude.is_finite() {
            return fail("cruise_altitude must be finite");
        }
        Ok(())
    }

    /// Steps per segment.
    pub fn steps(&self) -> usize {
        (self.segment_duration / self.dt).round() as usize
    }

    /// The same uncertainty model with its speed band shifted to be centered
    /// on `cruise_speed`.
    pub fn centered_on(&self, cruise_speed: f64) -> Self {
        let half = 0.5 * (self.speed_high - self.speed_low);
        Self {
            speed_low: (cruise_speed - half).max(f64::MIN_POSITIVE),
            speed_high: cruise_speed + half,
            ..self.clone()
        }
    }

    fn draw_speed<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.speed_high > self.speed_low {
            Uniform::new_inclusive(self.speed_low, self.speed_high)
                .expect("validated speed band")
                .sample(rng)
        } else {
            self.speed_low
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSlice {
    pub t: f64,
    pub states: Vec<AircraftState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub segment_index: usize,
    pub start: f64,
    pub end: f64,
    pub slices: Vec<TimeSlice>,
}

impl SegmentRecord {
    pub fn final_slice(&self) -> &TimeSlice {
        self.slices.last().expect("segment records are never empty")
    }
}

/// `N` aircraft uniformly placed in the disc of radius `r0` around the first
/// waypoint, heading for the second, with speeds drawn from the band.
pub fn init_fleet<R: Rng + ?Sized>(route: &Route, cfg: &SimConfig, rng: &mut R) -> Vec<AircraftState> {
    let w0 = route.waypoints[0].position;
    (0..cfg.aircraft)
        .map(|_| {
            let r = cfg.init_radius * rng.random::<f64>().sqrt();
            let theta = std::f64::consts::TAU * rng.random::<f64>();
            AircraftState {
                position: w0 + LocalPoint::new(theta.cos(), theta.sin()) * r,
                alt: cfg.cruise_altitude,
                active_waypoint: 1,
                speed: cfg.draw_speed(rng),
            }
        })
        .collect()
}

pub fn step(fleet: &mut [AircraftState], route: &Route, cfg: &SimConfig, model: &dyn FlightModel) {
    for a in fleet.iter_mut() {
        model.advance(a, route, cfg);
    }
}

/// Flies `fleet` for one segment starting at time `start`, recording every
/// `dt` including both endpoints.
pub fn run_segment(
    fleet: &mut [AircraftState],
    route: &Route,
    cfg: &SimConfig,
    model: &dyn FlightModel,
    segment_index: usize,
    start: f64,
) -> SegmentRecord {
    let steps = cfg.steps();
    let mut slices = Vec::with_capacity(steps + 1);
    slices.push(TimeSlice {
        t: start,
        states: fleet.to_vec(),
    });
    for i in 1..=steps {
        step(fleet, route, cfg, model);
        slices.push(TimeSlice {
            t: start + i as f64 * cfg.dt,
            states: fleet.to_vec(),
        });
    }
    SegmentRecord {
        segment_index,
        start,
        end: start + steps as f64 * cfg.dt,
        slices,
    }
}

/// Splits `n` into integer shares proportional to `weights` using the
/// largest-remainder rule; ties go to the earlier entry.
pub fn apportion(weights: &[usize], n: usize) -> Vec<usize> {
    let total: usize = weights.iter().sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let mut shares: Vec<usize> = weights.iter().map(|&w| w * n / total).collect();
    let mut rest: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (w * n % total, i))
        .collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = n - shares.iter().sum::<usize>();
    for &(_, i) in rest.iter().take(missing) {
        shares[i] += 1;
    }
    shares
}

/// Spawns a fresh fleet from the end of `record`.
///
/// Waypoint occupancy of the final slice is reproduced exactly. Each spawn
/// copies the final position of a uniformly chosen aircraft with the same
/// active waypoint and adds isotropic Gaussian jitter; landed aircraft are
/// re-spawned on the final waypoint. Speeds are redrawn.
pub fn reinject<R: Rng + ?Sized>(
    record: &SegmentRecord,
    route: &Route,
    cfg: &SimConfig,
    rng: &mut R,
) -> Vec<AircraftState> {
    let last = record.final_slice();
    let mut groups: BTreeMap<usize, Vec<&AircraftState>> = BTreeMap::new();
    for a in &last.states {
        groups.entry(a.active_waypoint).or_default().push(a);
    }
    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
    let counts = apportion(&sizes, cfg.aircraft);
    let jitter = Normal::new(0.0, cfg.jitter).expect("validated jitter");
    let mut fleet = Vec::with_capacity(cfg.aircraft);
    for ((&wp, members), &count) in groups.iter().zip(&counts) {
        for _ in 0..count {
            let parent = **members.choose(rng).expect("groups are non-empty");
            let position = if parent.landed(route) || cfg.jitter == 0.0 {
                parent.position
            } else {
                parent.position + LocalPoint::new(jitter.sample(rng), jitter.sample(rng))
            };
            fleet.push(AircraftState {
                position,
                alt: parent.alt,
                active_waypoint: wp,
                speed: cfg.draw_speed(rng),
            });
        }
    }
    fleet
}

/// Carries every aircraft into the next segment on its own: airborne
/// aircraft get Gaussian jitter and a redrawn speed.
pub fn perturb<R: Rng + ?Sized>(fleet: &mut [AircraftState], route: &Route, cfg: &SimConfig, rng: &mut R) {
    let jitter = Normal::new(0.0, cfg.jitter).expect("validated jitter");
    for a in fleet.iter_mut().filter(|a| !a.landed(route)) {
        if cfg.jitter > 0.0 {
            a.position = a.position + LocalPoint::new(jitter.sample(rng), jitter.sample(rng));
        }
        a.speed = cfg.draw_speed(rng);
    }
}

/// Simulates the whole route with the model named in `cfg`.
///
/// Segments are produced until every aircraft has landed and the nominal
/// arrival time has passed, so the records cover every waypoint ETA.
pub fn simulate_route(route: &Route, cfg: &SimConfig) -> Result<Vec<SegmentRecord>> {
    cfg.validate()?;
    if route.waypoints.len() < 2 {
        return Err(Error::Config("route needs at least two waypoints".into()));
    }
    let model = default_models().get(&cfg.model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let limit = 4.0 * route.duration().max(cfg.segment_duration);
    let mut fleet = init_fleet(route, cfg, &mut rng);
    let mut records: Vec<SegmentRecord> = Vec::new();
    loop {
        let k = records.len();
        let start = route.departure_time + k as f64 * cfg.segment_duration;
        if start - route.departure_time >= limit {
            return Err(Error::NonTermination { limit_s: limit });
        }
        let rec = run_segment(&mut fleet, route, cfg, model.as_ref(), k, start);
        let done = rec.final_slice().states.iter().all(|a| a.landed(route))
            && rec.end >= route.arrival_time() - 1e-9;
        if !done {
            match cfg.propagation {
                Propagation::Resample => fleet = reinject(&rec, route, cfg, &mut rng),
                Propagation::Independent => perturb(&mut fleet, route, cfg, &mut rng),
            }
        }
        records.push(rec);
        if done {
            return Ok(records);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(len: f64) -> Route {
        Route::from_points(&[LocalPoint::ORIGIN, LocalPoint::new(len, 0.0)], 0.0, 15.0)
    }

    #[test]
    fn fleet_starts_in_disc_with_band_speeds() {
        let cfg = SimConfig {
            aircraft: 1000,
            ..SimConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let fleet = init_fleet(&straight(1000.0), &cfg, &mut rng);
        assert_eq!(fleet.len(), 1000);
        assert!(fleet.iter().all(|a| a.position.norm() <= 50.0 && a.active_waypoint == 1));
        assert!(fleet.iter().all(|a| (13.0..=17.0).contains(&a.speed)));
        let mean = fleet.iter().map(|a| a.speed).sum::<f64>() / 1000.0;
        assert!((mean - 15.0).abs() < 0.2, "{mean}");
        let again = init_fleet(&straight(1000.0), &cfg, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(fleet, again);
    }

    #[test]
    fn segment_has_inclusive_slices() {
        let cfg = SimConfig::default();
        let route = straight(5000.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut fleet = init_fleet(&route, &cfg, &mut rng);
        let before = fleet.clone();
        let rec = run_segment(&mut fleet, &route, &cfg, &PointMass, 0, 0.0);
        assert_eq!(rec.slices.len(), 61);
        assert!(rec.slices.iter().all(|s| s.states.len() == cfg.aircraft));
        assert_eq!(rec.slices[0].states, before);
        assert_eq!(rec.end, 60.0);
        for w in rec.slices.windows(2) {
            for (a, b) in w[0].states.iter().zip(&w[1].states) {
                assert!(b.active_waypoint >= a.active_waypoint);
                assert!((a.position.distance(b.position) - a.speed).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn landed_fleet_is_static() {
        let cfg = SimConfig::default();
        let route = straight(10.0);
        let mut fleet = vec![AircraftState {
            position: LocalPoint::new(10.0, 0.0),
            alt: 120.0,
            active_waypoint: 2,
            speed: 15.0,
        }];
        let rec = run_segment(&mut fleet, &route, &cfg, &PointMass, 0, 0.0);
        assert!(rec.slices.iter().all(|s| s.states == rec.slices[0].states));
    }

    fn record_with_histogram(hist: &[(usize, usize)]) -> SegmentRecord {
        let mut states = Vec::new();
        for &(wp, n) in hist {
            for i in 0..n {
                states.push(AircraftState {
                    position: LocalPoint::new(wp as f64 * 1000.0, i as f64),
                    alt: 120.0,
                    active_waypoint: wp,
                    speed: 15.0,
                });
            }
        }
        SegmentRecord {
            segment_index: 0,
            start: 0.0,
            end: 0.0,
            slices: vec![TimeSlice { t: 0.0, states }],
        }
    }

    fn histogram(fleet: &[AircraftState]) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for a in fleet {
            *h.entry(a.active_waypoint).or_insert(0) += 1;
        }
        h
    }

    #[test]
    fn reinject_preserves_occupancy() {
        let route = Route::from_points(
            &[LocalPoint::ORIGIN, LocalPoint::new(1000.0, 0.0), LocalPoint::new(2000.0, 0.0), LocalPoint::new(3000.0, 0.0)],
            0.0,
            15.0,
        );
        let rec = record_with_histogram(&[(1, 25), (2, 71), (3, 4)]);
        let cfg = SimConfig {
            aircraft: 100,
            ..SimConfig::default()
        };
        let fleet = reinject(&rec, &route, &cfg, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(fleet.len(), 100);
        assert_eq!(histogram(&fleet), BTreeMap::from([(1, 25), (2, 71), (3, 4)]));

        let single = record_with_histogram(&[(2, 100)]);
        let fleet = reinject(&single, &route, &cfg, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(fleet.iter().all(|a| a.active_waypoint == 2));
    }

    #[test]
    fn zero_jitter_is_a_bootstrap_resample() {
        let route = straight(3000.0);
        let rec = record_with_histogram(&[(1, 100)]);
        let cfg = SimConfig {
            jitter: 0.0,
            ..SimConfig::default()
        };
        let fleet = reinject(&rec, &route, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let finals: Vec<_> = rec.final_slice().states.iter().map(|a| a.position).collect();
        assert!(fleet.iter().all(|a| finals.contains(&a.position)));
    }

    #[test]
    fn largest_remainder_rounding() {
        assert_eq!(apportion(&[25, 71, 4], 100), vec![25, 71, 4]);
        assert_eq!(apportion(&[1, 1, 1], 10), vec![4, 3, 3]);
        assert_eq!(apportion(&[2, 5], 3), vec![1, 2]);
        assert_eq!(apportion(&[3], 7), vec![7]);
    }

    #[test]
    fn segment_counts_follow_flight_duration() {
        let cfg = SimConfig::default();
        // 826 s nominal at 15 m/s
        let recs = simulate_route(&straight(826.0 * 15.0), &cfg).unwrap();
        assert!((13..=15).contains(&recs.len()), "{}", recs.len());
        // 60 s nominal: the slowest aircraft may need a second segment
        let hop = simulate_route(&straight(900.0), &cfg).unwrap();
        assert!((1..=2).contains(&hop.len()));
        let short = simulate_route(&straight(700.0), &cfg).unwrap();
        assert_eq!(short.len(), 1);
        for (k, r) in recs.iter().enumerate() {
            assert_eq!(r.segment_index, k);
            assert!(r.slices.iter().all(|s| s.states.len() == cfg.aircraft));
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let cfg = SimConfig {
            seed: 42,
            ..SimConfig::default()
        };
        let route = straight(3000.0);
        assert_eq!(simulate_route(&route, &cfg).unwrap(), simulate_route(&route, &cfg).unwrap());
    }

    #[test]
    fn jitter_keeps_spread_alive() {
        let route = straight(20_000.0);
        let cfg = SimConfig {
            init_radius: 0.0,
            speed_low: 15.0,
            speed_high: 15.0,
            ..SimConfig::default()
        };
        let recs = simulate_route(&route, &cfg).unwrap();
        for rec in &recs[1..recs.len() - 1] {
            let s = &rec.slices[0].states;
            let spread = s.iter().map(|a| a.position.distance(s[0].position)).fold(0.0, f64::max);
            assert!(spread > 0.0);
        }
    }

    #[test]
    fn independent_propagation_keeps_identities() {
        let route = straight(5000.0);
        let cfg = SimConfig {
            propagation: Propagation::Independent,
            ..SimConfig::default()
        };
        let recs = simulate_route(&route, &cfg).unwrap();
        for w in recs.windows(2) {
            let (end, start) = (&w[0].final_slice().states, &w[1].slices[0].states);
            for (a, b) in end.iter().zip(start) {
                assert_eq!(a.active_waypoint, b.active_waypoint);
                assert!(a.position.distance(b.position) < 10.0 * cfg.jitter);
            }
        }
    }

    #[test]
    fn config_checks() {
        assert!(SimConfig::default().validate().is_ok());
        assert!(SimConfig { dt: 7.0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { speed_low: 18.0, ..SimConfig::default() }.validate().is_err());
        let c = SimConfig::default().centered_on(18.0);
        assert_eq!((c.speed_low, c.speed_high), (16.0, 20.0));
    }
}
