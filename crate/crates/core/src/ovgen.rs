//! Operational volumes from simulated position clouds.
//!
//! For each time interval a sample of simulated positions is split into a fit
//! set and a holdout set. The fit set gives a mean and covariance, the
//! covariance eigenpairs give the ellipse axes and heading, and a confidence
//! scalar `z` scales the axes to `z·√λ`. The ellipse is accepted once it
//! reaches the x-th percentile Mahalanobis distance of the fit set and
//! contains at least a fraction `x` of the holdout set; otherwise `z` is
//! bloated step by step.

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::flightsim::{AircraftState, SegmentRecord};
use crate::geometry::{Ellipse, LocalPoint};
use crate::router::Route;

/// Eigenvalues below this (m²) count as degenerate.
pub const DEGENERATE_EIGENVALUE: f64 = 1e-9;
/// Diagonal loading applied to degenerate covariances, m².
pub const REGULARIZATION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OvGenConfig {
    /// Desired minimum inclusion `x` in (0, 1).
    pub inclusion: f64,
    pub alpha0: f64,
    pub alpha_step: f64,
    pub alpha_max_iters: usize,
    /// Length of one ellipse interval, seconds. Must divide the segment length.
    pub interval: f64,
    pub min_fit_sample: usize,
}

impl Default for OvGenConfig {
    fn default() -> Self {
        Self {
            inclusion: 0.997,
            alpha0: 0.1,
            alpha_step: 0.1,
            alpha_max_iters: 100,
            interval: 10.0,
            min_fit_sample: 15,
        }
    }
}

impl OvGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inclusion > 0.0 && self.inclusion < 1.0) {
            return Err(Error::Config(format!("inclusion must be in (0, 1), got {}", self.inclusion)));
        }
        if !(self.alpha_step > 0.0) {
            return Err(Error::Config("alpha_step must be positive".into()));
        }
        if !(self.interval > 0.0) {
            return Err(Error::Config("ellipse interval must be positive".into()));
        }
        if self.min_fit_sample == 0 {
            return Err(Error::Config("min_fit_sample must be at least 1".into()));
        }
        Ok(())
    }
}

/// Symmetric 2×2 covariance, m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Covariance {
    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 1.0)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        (d > 0.0 && d.is_finite()).then(|| Self::new(self.yy / d, -self.xy / d, self.xx / d))
    }

    /// Quadratic form `vᵀ Σ v`.
    pub fn quad(&self, v: LocalPoint) -> f64 {
        self.xx * v.x * v.x + 2.0 * self.xy * v.x * v.y + self.yy * v.y * v.y
    }

    /// Eigenvalues in descending order with the unit eigenvector of the
    /// larger one. The eigenvector is chosen with heading in (-π/2, π/2].
    pub fn eigen(&self) -> (f64, f64, LocalPoint) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let r = half_diff.hypot(self.xy);
        let (l1, l2) = (mean + r, mean - r);
        let v = if self.xy.abs() > f64::EPSILON * r.max(f64::MIN_POSITIVE) {
            // (λ1 - yy, xy) and (xy, λ1 - xx) are both eigenvectors; take the
            // better conditioned one.
            let a = LocalPoint::new(l1 - self.yy, self.xy);
            let b = LocalPoint::new(self.xy, l1 - self.xx);
            if a.norm() >= b.norm() {
                a * (1.0 / a.norm())
            } else {
                b * (1.0 / b.norm())
            }
        } else if self.xx >= self.yy {
            LocalPoint::new(1.0, 0.0)
        } else {
            LocalPoint::new(0.0, 1.0)
        };
        let v = if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) { -v } else { v };
        (l1, l2, v)
    }

    /// Sample covariance (denominator n − 1) and mean of `points`.
    pub fn from_points(points: &[LocalPoint]) -> (LocalPoint, Self) {
        let n = points.len() as f64;
        let mean = points.iter().fold(LocalPoint::ORIGIN, |acc, p| acc + *p) * (1.0 / n);
        let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
        for p in points {
            let d = *p - mean;
            xx += d.x * d.x;
            xy += d.x * d.y;
            yy += d.y * d.y;
        }
        let denom = (n - 1.0).max(1.0);
        (mean, Self::new(xx / denom, xy / denom, yy / denom))
    }
}

/// One time-indexed ellipse of an operational volume.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipseRegion {
    pub mean: LocalPoint,
    pub covariance: Covariance,
    pub z: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Set when the covariance was diagonally loaded.
    pub regularized: bool,
}

impl EllipseRegion {
    /// Derived ellipse with semi-axes `z·√λ`.
    pub fn ellipse(&self) -> Ellipse {
        let (l1, l2, v) = self.covariance.eigen();
        let a = self.z * l1.max(0.0).sqrt();
        let b = self.z * l2.max(0.0).sqrt();
        Ellipse {
            center: self.mean,
            semi_major: a.max(f64::MIN_POSITIVE),
            semi_minor: b.max(f64::MIN_POSITIVE),
            rotation: v.y.atan2(v.x),
        }
    }

    pub fn contains_time(&self, t: f64) -> bool {
        self.t_start <= t && t <= self.t_end
    }

    pub fn overlaps_time(&self, start: f64, end: f64) -> bool {
        self.t_start <= end && self.t_end >= start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperationalVolume {
    pub regions: Vec<EllipseRegion>,
    pub start: f64,
    pub end: f64,
}

impl OperationalVolume {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contract {
    pub id: String,
    pub route: Route,
    pub ovs: Vec<OperationalVolume>,
    pub departure_time: f64,
    /// Cruise altitude band center, meters.
    pub altitude: f64,
}

impl Contract {
    pub fn start(&self) -> f64 {
        self.ovs.first().map_or(self.departure_time, |o| o.start)
    }

    pub fn end(&self) -> f64 {
        self.ovs.last().map_or(self.departure_time, |o| o.end)
    }

    /// Sum of OV durations.
    pub fn duration(&self) -> f64 {
        self.ovs.iter().map(OperationalVolume::duration).sum()
    }

    pub fn regions(&self) -> impl Iterator<Item = &EllipseRegion> {
        self.ovs.iter().flat_map(|o| o.regions.iter())
    }

    /// Checks the structural invariants: OVs and regions tile the contract
    /// span without gaps and every waypoint ETA lies inside it.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(format!("contract `{}`: {m}", self.id)));
        if self.ovs.is_empty() {
            return bad("no operational volumes".into());
        }
        for (k, ov) in self.ovs.iter().enumerate() {
            if ov.regions.is_empty() || !(ov.end > ov.start) {
                return bad(format!("OV {k} is empty"));
            }
            if (ov.regions[0].t_start - ov.start).abs() > 1e-6
                || (ov.regions.last().unwrap().t_end - ov.end).abs() > 1e-6
            {
                return bad(format!("OV {k} regions do not span the OV"));
            }
            for w in ov.regions.windows(2) {
                if (w[0].t_end - w[1].t_start).abs() > 1e-6 {
                    return bad(format!("OV {k} regions are not contiguous"));
                }
            }
            for r in &ov.regions {
                if !(r.z > 0.0) || !(r.t_end > r.t_start) || r.covariance.det() <= 0.0 {
                    return bad(format!("OV {k} has an invalid region"));
                }
            }
        }
        for w in self.ovs.windows(2) {
            if (w[0].end - w[1].start).abs() > 1e-6 {
                return bad("OVs are not contiguous".into());
            }
        }
        let (s, e) = (self.start(), self.end());
        if let Some(w) = self.route.waypoints.iter().find(|w| w.eta < s - 1e-6 || w.eta > e + 1e-6) {
            return bad(format!("waypoint ETA {} outside [{s}, {e}]", w.eta));
        }
        Ok(())
    }
}

/// Standard-normal confidence scalar `|PPF((1 − x)/2)| + α`.
pub fn confidence_scalar(inclusion: f64, alpha: f64) -> f64 {
    let normal = Normal::standard();
    normal.inverse_cdf((1.0 - inclusion) / 2.0).abs() + alpha
}

/// Splits positions into a fit set of `ceil(n/2)` drawn without
/// replacement and a holdout set of the remainder.
pub fn split_sample<T: Clone, R: Rng + ?Sized>(
    states: &[T],
    min_fit_sample: usize,
    rng: &mut R,
) -> Result<(Vec<T>, Vec<T>)> {
    let n = states.len();
    let need = 2 * min_fit_sample;
    if n < need {
        return Err(Error::TooFewStates { got: n, need });
    }
    let fit_len = n.div_ceil(2);
    let mut chosen = vec![false; n];
    for i in sample(rng, n, fit_len) {
        chosen[i] = true;
    }
    let mut fit = Vec::with_capacity(fit_len);
    let mut holdout = Vec::with_capacity(n - fit_len);
    for (s, c) in states.iter().zip(chosen) {
        if c {
            fit.push(s.clone());
        } else {
            holdout.push(s.clone());
        }
    }
    Ok((fit, holdout))
}

/// Fits an ellipse region to `fit` with bloat `alpha`.
///
/// Degenerate clouds (smallest eigenvalue below [`DEGENERATE_EIGENVALUE`])
/// are diagonally loaded by [`REGULARIZATION`] and flagged.
pub fn fit_ellipse(
    fit: &[LocalPoint],
    inclusion: f64,
    alpha: f64,
    t_start: f64,
    t_end: f64,
) -> Result<EllipseRegion> {
    if fit.len() < 2 {
        return Err(Error::TooFewStates { got: fit.len(), need: 2 });
    }
    let (mean, mut covariance) = Covariance::from_points(fit);
    let (_, l2, _) = covariance.eigen();
    let regularized = l2 < DEGENERATE_EIGENVALUE;
    if regularized {
        covariance.xx += REGULARIZATION;
        covariance.yy += REGULARIZATION;
    }
    Ok(EllipseRegion {
        mean,
        covariance,
        z: confidence_scalar(inclusion, alpha),
        t_start,
        t_end,
        regularized,
    })
}

/// Mahalanobis distance of `y` from the region's distribution. Singular
/// covariances give `+∞` away from the mean.
pub fn mahalanobis(y: LocalPoint, region: &EllipseRegion) -> f64 {
    let d = y - region.mean;
    match region.covariance.inverse() {
        Some(inv) => inv.quad(d).max(0.0).sqrt(),
        None if d.norm() == 0.0 => 0.0,
        None => f64::INFINITY,
    }
}

/// Linear-interpolation percentile (`q` in [0, 1]) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Validation {
    Pass { fraction: f64 },
    Fail { fraction: f64 },
}

impl Validation {
    pub fn passed(&self) -> bool {
        matches!(self, Validation::Pass { .. })
    }

    pub fn fraction(&self) -> f64 {
        match *self {
            Validation::Pass { fraction } | Validation::Fail { fraction } => fraction,
        }
    }
}

/// Mahalanobis threshold from the fit set: its x-th percentile distance.
pub fn fit_threshold(region: &EllipseRegion, fit: &[LocalPoint], inclusion: f64) -> f64 {
    let d: Vec<f64> = fit.iter().map(|p| mahalanobis(*p, region)).collect();
    percentile(&d, inclusion)
}

/// Holdout check of a region.
///
/// The threshold is the x-th percentile of fit-set Mahalanobis distances.
/// A region passes when its ellipse reaches that threshold (`z ≥ threshold`)
/// and at least a fraction `x` of the holdout lies inside the ellipse. The
/// reported fraction counts holdout points within `min(threshold, z)`.
pub fn validate_region(
    region: &EllipseRegion,
    fit: &[LocalPoint],
    holdout: &[LocalPoint],
    inclusion: f64,
) -> Validation {
    let threshold = fit_threshold(region, fit, inclusion);
    let holdout_d: Vec<f64> = holdout.iter().map(|p| mahalanobis(*p, region)).collect();
    judge(region.z, threshold, &holdout_d, inclusion)
}

fn judge(z: f64, threshold: f64, holdout_d: &[f64], inclusion: f64) -> Validation {
    if holdout_d.is_empty() {
        return Validation::Fail { fraction: 0.0 };
    }
    let n = holdout_d.len() as f64;
    let within = |r: f64| holdout_d.iter().filter(|d| **d <= r).count() as f64 / n;
    if z < threshold {
        return Validation::Fail { fraction: within(z) };
    }
    let fraction = within(threshold.min(z));
    if within(z) >= inclusion {
        Validation::Pass { fraction: within(z) }
    } else {
        Validation::Fail { fraction }
    }
}

/// Splits, fits and validates one region, bloating `z` by `alpha_step`
/// until validation passes or `alpha_max_iters` steps are used up.
pub fn build_region<R: Rng + ?Sized>(
    positions: &[LocalPoint],
    cfg: &OvGenConfig,
    rng: &mut R,
    t_start: f64,
    t_end: f64,
) -> Result<EllipseRegion> {
    let (fit, holdout) = split_sample(positions, cfg.min_fit_sample, rng)?;
    let mut region = fit_ellipse(&fit, cfg.inclusion, cfg.alpha0, t_start, t_end)?;
    // μ and Σ do not depend on α, so distances are computed once.
    let threshold = fit_threshold(&region, &fit, cfg.inclusion);
    let holdout_d: Vec<f64> = holdout.iter().map(|p| mahalanobis(*p, &region)).collect();
    let base = confidence_scalar(cfg.inclusion, 0.0);
    let mut last = 0.0;
    for step in 0..=cfg.alpha_max_iters {
        let alpha = cfg.alpha0 + step as f64 * cfg.alpha_step;
        region.z = base + alpha;
        match judge(region.z, threshold, &holdout_d, cfg.inclusion) {
            Validation::Pass { .. } => return Ok(region),
            Validation::Fail { fraction } => last = fraction,
        }
    }
    Err(Error::ValidationExhausted {
        iterations: cfg.alpha_max_iters,
        fraction: last,
    })
}

/// Independent RNG stream for region `(segment, interval)` under `seed`.
pub fn region_rng(seed: u64, segment: usize, interval: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((segment as u64) << 24) | interval as u64);
    rng
}

/// Positions from every slice of `record` with `t ∈ [t0, t1]`.
pub fn pooled_positions(record: &SegmentRecord, t0: f64, t1: f64) -> Vec<LocalPoint> {
    pooled(record, t0, t1, |_| true)
}

/// Like [`pooled_positions`], keeping only aircraft that have not landed on
/// the last of `waypoint_count` waypoints.
pub fn pooled_airborne(record: &SegmentRecord, t0: f64, t1: f64, waypoint_count: usize) -> Vec<LocalPoint> {
    pooled(record, t0, t1, |a| a.active_waypoint < waypoint_count)
}

fn pooled(record: &SegmentRecord, t0: f64, t1: f64, keep: impl Fn(&AircraftState) -> bool) -> Vec<LocalPoint> {
    record
        .slices
        .iter()
        .filter(|s| s.t >= t0 - 1e-9 && s.t <= t1 + 1e-9)
        .flat_map(|s| s.states.iter().filter(|a| keep(a)).map(|a| a.position))
        .collect()
}

/// Region for a sample too small to split: fitted to all of `positions`,
/// with `z` raised so that the ellipse contains every one of them.
pub fn enclosing_region(
    positions: &[LocalPoint],
    cfg: &OvGenConfig,
    t_start: f64,
    t_end: f64,
) -> Result<EllipseRegion> {
    let pts: Vec<LocalPoint> = match positions {
        [] => return Err(Error::TooFewStates { got: 0, need: 1 }),
        [p] => vec![*p, *p],
        _ => positions.to_vec(),
    };
    let mut region = fit_ellipse(&pts, cfg.inclusion, cfg.alpha0, t_start, t_end)?;
    let reach = pts.iter().map(|p| mahalanobis(*p, &region)).fold(0.0, f64::max);
    region.z = region.z.max(reach + cfg.alpha0);
    Ok(region)
}

/// Region for one interval of a segment.
///
/// Landed aircraft sit motionless on the destination and would dominate the
/// covariance of the few aircraft still flying, so only airborne positions
/// are used. An interval with no airborne aircraft is fitted to the landed
/// ones; one with too few airborne samples to split gets an enclosing
/// region instead of a validated one.
pub fn interval_region<R: Rng + ?Sized>(
    record: &SegmentRecord,
    waypoint_count: usize,
    cfg: &OvGenConfig,
    rng: &mut R,
    t_start: f64,
    t_end: f64,
) -> Result<EllipseRegion> {
    let airborne = pooled_airborne(record, t_start, t_end, waypoint_count);
    if airborne.is_empty() {
        build_region(&pooled_positions(record, t_start, t_end), cfg, rng, t_start, t_end)
    } else if airborne.len() < 2 * cfg.min_fit_sample {
        enclosing_region(&airborne, cfg, t_start, t_end)
    } else {
        build_region(&airborne, cfg, rng, t_start, t_end)
    }
}

/// Builds one OV per simulated segment, one region per `cfg.interval`.
///
/// Each region is fitted to the positions pooled over its whole interval so
/// that the ellipse covers the aircraft throughout the interval, not only at
/// its start. Regions are independent and built in parallel; each uses its
/// own RNG stream so the result does not depend on scheduling.
pub fn build_contract(
    id: impl Into<String>,
    route: &Route,
    records: &[SegmentRecord],
    cfg: &OvGenConfig,
    altitude: f64,
    seed: u64,
) -> Result<Contract> {
    cfg.validate()?;
    let ovs = records
        .par_iter()
        .map(|rec| build_ov(rec, route.waypoints.len(), cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    let contract = Contract {
        id: id.into(),
        route: route.clone(),
        ovs,
        departure_time: route.departure_time,
        altitude,
    };
    contract.check_invariants()?;
    Ok(contract)
}

fn build_ov(rec: &SegmentRecord, waypoint_count: usize, cfg: &OvGenConfig, seed: u64) -> Result<OperationalVolume> {
    let span = rec.end - rec.start;
    let count = (span / cfg.interval).round() as usize;
    if count == 0 || (count as f64 * cfg.interval - span).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "ellipse interval {} does not divide segment length {span}",
            cfg.interval
        )));
    }
    let regions = (0..count)
        .into_par_iter()
        .map(|j| {
            let t0 = rec.start + j as f64 * cfg.interval;
            let t1 = if j + 1 == count { rec.end } else { t0 + cfg.interval };
            let mut rng = region_rng(seed, rec.segment_index, j);
            interval_region(rec, waypoint_count, cfg, &mut rng, t0, t1).map_err(|e| Error::Region {
                segment: rec.segment_index,
                interval: j,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OperationalVolume {
        regions,
        start: rec.start,
        end: rec.end,
    })
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::router::Route;

    /// A contract with one unit-covariance region per OV span.
    pub fn contract_with_spans(id: &str, spans: &[(f64, f64)]) -> Contract {
        let ovs = spans
            .iter()
            .map(|&(s, e)| OperationalVolume {
                regions: vec![EllipseRegion {
                    mean: LocalPoint::ORIGIN,
                    covariance: Covariance::identity(),
                    z: 2.0,
                    t_start: s,
                    t_end: e,
                    regularized: false,
                }],
                start: s,
                end: e,
            })
            .collect();
        let route = Route::from_points(
            &[LocalPoint::ORIGIN, LocalPoint::new(100.0, 0.0)],
            spans.first().map_or(0.0, |s| s.0),
            15.0,
        );
        Contract {
            id: id.to_string(),
            route,
            departure_time: spans.first().map_or(0.0, |s| s.0),
            ovs,
            altitude: 120.0,
        }
    }
}
