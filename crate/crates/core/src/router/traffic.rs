//! Search-time snapshot of stored contract regions.
//!
//! The planner asks the same question thousands of times per search: which
//! regions are active during `[t0, t1]` and near a segment. The snapshot
//! derives every region's ellipse, inverse covariance and bounding box once,
//! and buckets regions by time so a query only touches nearby bins.

use crate::airspace::ContractStore;
use crate::geometry::{Ellipse, LocalPoint};
use crate::ovgen::Covariance;

/// Width of a time bucket, seconds.
const BUCKET: f64 = 30.0;

/// One stored region with its derived geometry.
#[derive(Debug, Clone)]
pub struct TrafficRegion {
    pub t_start: f64,
    pub t_end: f64,
    pub mean: LocalPoint,
    pub ellipse: Ellipse,
    /// `None` for a singular covariance.
    pub inverse: Option<Covariance>,
    /// Half extents of the ellipse's axis-aligned bounding box.
    pub half_extent: LocalPoint,
    /// Standard deviation along the major axis.
    pub sigma_max: f64,
}

impl TrafficRegion {
    /// True when the ellipse's bounding box, grown by `pad`, meets the
    /// bounding box of segment `ab`.
    pub fn near_segment(&self, a: LocalPoint, b: LocalPoint, pad: f64) -> bool {
        let (hx, hy) = (self.half_extent.x + pad, self.half_extent.y + pad);
        a.x.min(b.x) <= self.mean.x + hx
            && a.x.max(b.x) >= self.mean.x - hx
            && a.y.min(b.y) <= self.mean.y + hy
            && a.y.max(b.y) >= self.mean.y - hy
    }
}

/// Regions of a [`ContractStore`], bucketed by time.
#[derive(Debug, Clone, Default)]
pub struct Traffic {
    regions: Vec<TrafficRegion>,
    buckets: Vec<Vec<u32>>,
    origin: f64,
}

impl Traffic {
    pub fn new(store: &ContractStore) -> Self {
        let mut regions = Vec::new();
        for contract in store.contracts() {
            for ov in &contract.ovs {
                for r in &ov.regions {
                    let ellipse = r.ellipse();
                    let (c, s) = (ellipse.rotation.cos(), ellipse.rotation.sin());
                    let (a, b) = (ellipse.semi_major, ellipse.semi_minor);
                    let (l1, _, _) = r.covariance.eigen();
                    regions.push(TrafficRegion {
                        t_start: r.t_start,
                        t_end: r.t_end,
                        mean: r.mean,
                        ellipse,
                        inverse: r.covariance.inverse(),
                        half_extent: LocalPoint::new((a * c).hypot(b * s), (a * s).hypot(b * c)),
                        sigma_max: l1.max(0.0).sqrt(),
                    });
                }
            }
        }
        let origin = regions.iter().map(|r| r.t_start).fold(f64::INFINITY, f64::min);
        let mut traffic = Self {
            regions,
            buckets: Vec::new(),
            origin: if origin.is_finite() { origin } else { 0.0 },
        };
        for (i, r) in traffic.regions.iter().enumerate() {
            let last = traffic.bucket_of(r.t_end);
            if traffic.buckets.len() <= last {
                traffic.buckets.resize(last + 1, Vec::new());
            }
            for k in traffic.bucket_of(r.t_start)..=last {
                traffic.buckets[k].push(i as u32);
            }
        }
        traffic
    }

    fn bucket_of(&self, t: f64) -> usize {
        ((t - self.origin) / BUCKET).floor().max(0.0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Regions whose time interval overlaps `[t0, t1]`, each reported once.
    pub fn active(&self, t0: f64, t1: f64) -> impl Iterator<Item = &TrafficRegion> + '_ {
        let (first, last) = if self.buckets.is_empty() || t1 < self.origin {
            (1, 0)
        } else {
            (self.bucket_of(t0), self.bucket_of(t1).min(self.buckets.len() - 1))
        };
        (first..=last).flat_map(move |k| {
            self.buckets[k].iter().filter_map(move |&i| {
                let r = &self.regions[i as usize];
                // report in the first bucket shared by query and region
                let home = self.bucket_of(r.t_start).max(first);
                (home == k && r.t_start <= t1 && r.t_end >= t0).then_some(r)
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ovgen::testing::contract_with_spans;

    #[test]
    fn active_reports_each_overlapping_region_once() {
        let mut store = ContractStore::default();
        store
            .register(contract_with_spans("a", &[(0.0, 10.0), (10.0, 100.0), (200.0, 210.0)]))
            .unwrap();
        let traffic = Traffic::new(&store);
        let hits = |t0, t1| {
            let mut v: Vec<(f64, f64)> = traffic.active(t0, t1).map(|r| (r.t_start, r.t_end)).collect();
            v.sort_by(|x, y| x.0.total_cmp(&y.0));
            v
        };
        assert_eq!(hits(5.0, 95.0), vec![(0.0, 10.0), (10.0, 100.0)]);
        assert_eq!(hits(100.0, 150.0), vec![(10.0, 100.0)]);
        assert_eq!(hits(150.0, 199.0), vec![]);
        assert_eq!(hits(-50.0, 1e6), vec![(0.0, 10.0), (10.0, 100.0), (200.0, 210.0)]);
        assert_eq!(hits(1e6, 2e6), vec![]);
        assert_eq!(hits(-20.0, -1.0), vec![]);
    }

    #[test]
    fn bounding_box_covers_rotated_ellipse() {
        let mut store = ContractStore::default();
        let mut c = contract_with_spans("a", &[(0.0, 10.0)]);
        c.ovs[0].regions[0].covariance = Covariance::new(900.0, 250.0, 100.0);
        store.register(c).unwrap();
        let traffic = Traffic::new(&store);
        let r = traffic.active(0.0, 10.0).next().unwrap();
        for p in r.ellipse.boundary(720) {
            let d = p - r.mean;
            assert!(d.x.abs() <= r.half_extent.x + 1e-9 && d.y.abs() <= r.half_extent.y + 1e-9);
        }
    }
}
