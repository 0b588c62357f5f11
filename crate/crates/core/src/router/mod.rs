//! Arc-expansion A* route search with time-aware deconfliction.
//!
//! Nodes are generated on an arc ahead of the current heading. Candidates
//! that land near an already explored node are merged into it. Each
//! connection is checked against the no-fly zones and against every ellipse
//! of a stored contract that is active while the aircraft would fly it. The
//! open list is ordered by `g + h + β·δ`, where `δ` is the peak-normalized
//! density of existing traffic along the connection.

pub mod heuristic;
pub mod traffic;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::airspace::{AirspaceModel, ContractStore};
use crate::error::{Error, Result};
use crate::geometry::{
    point_in_polygon, segment_intersects_ellipse, segment_polygon_clearance, LocalPoint,
};

pub use traffic::{Traffic, TrafficRegion};
pub use heuristic::{angle_set, default_heuristics, extreme_vertex, Euclidean, ExtremeVertex, Heuristic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterConfig {
    /// Arc radius `r`, meters.
    pub arc_radius: f64,
    /// Arc angle `α`, radians.
    pub arc_angle: f64,
    pub arc_children: usize,
    pub dedup_radius: f64,
    /// Heuristic weight `ω`.
    pub weight: f64,
    /// Conflict penalty weight `β`, meters.
    pub penalty: f64,
    pub cruise_speed: f64,
    /// Minimum distance `d_min` between a connection and a time-aligned ellipse.
    pub ov_margin: f64,
    pub nfz_clearance: f64,
    /// Samples `K` along a connection for the conflict penalty.
    pub delta_samples: usize,
    pub heuristic: String,
    pub cache_heuristic: bool,
    /// Shortcut the found chain along clear lines of sight.
    pub smooth: bool,
    pub max_expansions: usize,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            arc_radius: 500.0,
            arc_angle: PI / 2.0,
            arc_children: 7,
            dedup_radius: 200.0,
            weight: 1.2,
            penalty: 500.0,
            cruise_speed: 15.0,
            ov_margin: 200.0,
            nfz_clearance: 50.0,
            delta_samples: 16,
            heuristic: "extreme-vertex".into(),
            cache_heuristic: true,
            smooth: true,
            max_expansions: 200_000,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.arc_radius > 0.0) {
            return fail("arc_radius must be positive");
        }
        if !(self.arc_angle > 0.0 && self.arc_angle <= 2.0 * PI) {
            return fail("arc_angle must be in (0, 2π]");
        }
        if self.arc_children == 0 {
            return fail("arc_children must be at least 1");
        }
        if !(1.0..=1.5).contains(&self.weight) {
            return fail("weight must be in [1.0, 1.5]");
        }
        if !(self.penalty >= 0.0) {
            return fail("penalty must be non-negative");
        }
        if !(self.dedup_radius >= 0.0 && self.dedup_radius < self.arc_radius) {
            return fail("dedup_radius must be in [0, arc_radius)");
        }
        if !(self.cruise_speed > 0.0) {
            return fail("cruise_speed must be positive");
        }
        if !(self.ov_margin >= 0.0 && self.nfz_clearance >= 0.0) {
            return fail("margins must be non-negative");
        }
        if self.delta_samples < 2 {
            return fail("delta_samples must be at least 2");
        }
        Ok(())
    }

    /// Angular spacing between neighbouring arc children.
    pub fn child_spacing(&self) -> f64 {
        if self.arc_children > 1 {
            self.arc_angle / (self.arc_children - 1) as f64
        } else {
            self.arc_angle
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: LocalPoint,
    /// Estimated time of arrival, seconds since scenario epoch.
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub waypoints: Vec<Waypoint>,
    pub total_length: f64,
    pub departure_time: f64,
    pub cruise_speed: f64,
}

impl Route {
    /// Builds a route through `points`, with ETAs at constant cruise speed.
    pub fn from_points(points: &[LocalPoint], departure_time: f64, cruise_speed: f64) -> Self {
        let mut s = 0.0;
        let mut waypoints = Vec::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                s += points[i - 1].distance(*p);
            }
            waypoints.push(Waypoint {
                position: *p,
                eta: departure_time + s / cruise_speed,
            });
        }
        Self {
            waypoints,
            total_length: s,
            departure_time,
            cruise_speed,
        }
    }

    pub fn points(&self) -> Vec<LocalPoint> {
        self.waypoints.iter().map(|w| w.position).collect()
    }

    /// Nominal flight duration at cruise speed, seconds.
    pub fn duration(&self) -> f64 {
        self.total_length / self.cruise_speed
    }

    pub fn arrival_time(&self) -> f64 {
        self.departure_time + self.duration()
    }

    pub fn segments(&self) -> impl Iterator<Item = (Waypoint, Waypoint)> + '_ {
        self.waypoints.windows(2).map(|w| (w[0], w[1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Open,
    Closed,
    InvalidConnection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    pub position: LocalPoint,
    pub g: f64,
    pub h: f64,
    /// Conflict penalty of the connection from the parent.
    pub delta: f64,
    pub parent: Option<usize>,
    pub eta: f64,
    pub status: NodeStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connection {
    Valid,
    InvalidConnection,
    InvalidNode,
}

/// Candidate child positions of `node`.
///
/// Children sit on an arc of radius `r` and angle `α` centred on the
/// `parent → node` heading; the root instead gets a full circle at the same
/// spacing, starting toward the goal. The goal itself is always offered as a
/// candidate; [`connection_valid`] decides whether it is reachable.
pub fn expand(
    node: LocalPoint,
    parent: Option<LocalPoint>,
    goal: LocalPoint,
    cfg: &RouterConfig,
) -> Vec<LocalPoint> {
    let spacing = cfg.child_spacing();
    let headings: Vec<f64> = match parent {
        Some(p) if p != node => {
            let base = p.bearing_to(node);
            if cfg.arc_children == 1 {
                vec![base]
            } else {
                (0..cfg.arc_children)
                    .map(|i| base - cfg.arc_angle / 2.0 + i as f64 * spacing)
                    .collect()
            }
        }
        _ => {
            let count = ((2.0 * PI / spacing).round() as usize).max(1);
            let step = 2.0 * PI / count as f64;
            let base = node.bearing_to(goal);
            (0..count).map(|i| base + i as f64 * step).collect()
        }
    };
    let mut out: Vec<LocalPoint> = headings
        .into_iter()
        .map(|h| node + LocalPoint::new(h.cos(), h.sin()) * cfg.arc_radius)
        .collect();
    out.push(goal);
    out
}

/// Classifies the connection from `a` (with ETA `eta_a`) to `b`.
pub fn connection_valid(
    a: LocalPoint,
    eta_a: f64,
    b: LocalPoint,
    airspace: &AirspaceModel,
    traffic: &Traffic,
    cfg: &RouterConfig,
) -> Connection {
    if !airspace.contains(b) {
        return Connection::InvalidNode;
    }
    for z in &airspace.nfzs {
        if point_in_polygon(b, &z.polygon) || z.polygon.boundary_distance(b) < cfg.nfz_clearance {
            return Connection::InvalidNode;
        }
    }
    for z in &airspace.nfzs {
        match segment_polygon_clearance(a, b, &z.polygon) {
            Ok(c) if c >= cfg.nfz_clearance => {}
            _ => return Connection::InvalidConnection,
        }
    }
    let eta_b = eta_a + a.distance(b) / cfg.cruise_speed;
    let blocked = traffic.active(eta_a, eta_b).any(|r| {
        r.near_segment(a, b, cfg.ov_margin) && segment_intersects_ellipse(a, b, &r.ellipse, cfg.ov_margin)
    });
    if blocked {
        Connection::InvalidConnection
    } else {
        Connection::Valid
    }
}

/// Peak-normalized density of time-aligned traffic along `a → b`, in [0, 1].
///
/// Each of `K` evenly spaced samples is scored against every active region
/// as `exp(−M²/2)`, the bivariate normal density divided by its peak. A
/// singular covariance counts as maximal conflict.
pub fn conflict_delta(
    a: LocalPoint,
    eta_a: f64,
    b: LocalPoint,
    eta_b: f64,
    traffic: &Traffic,
    cfg: &RouterConfig,
) -> f64 {
    let k = cfg.delta_samples.max(2);
    let mut delta: f64 = 0.0;
    for region in traffic.active(eta_a, eta_b) {
        let Some(inv) = region.inverse else {
            return 1.0;
        };
        // Beyond nine standard deviations the score is below 1e-17.
        if !region.near_segment(a, b, 9.0 * region.sigma_max) {
            continue;
        }
        for i in 0..k {
            let d = a.lerp(b, i as f64 / (k - 1) as f64) - region.mean;
            delta = delta.max((-0.5 * inv.quad(d).max(0.0)).exp());
        }
    }
    delta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchStats {
    pub expanded: usize,
    pub created: usize,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    f: f64,
    g: f64,
    seq: u64,
    node: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Spatial hash used to merge nearby candidates into explored nodes.
struct NodeGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl NodeGrid {
    fn new(radius: f64) -> Self {
        Self {
            cell: radius.max(1.0),
            cells: HashMap::new(),
        }
    }

    fn key(&self, p: LocalPoint) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    fn insert(&mut self, p: LocalPoint, idx: usize) {
        let k = self.key(p);
        self.cells.entry(k).or_default().push(idx);
    }

    /// Nearest node within `radius` of `p`; ties go to the older node.
    fn nearest(&self, p: LocalPoint, radius: f64, nodes: &[SearchNode]) -> Option<usize> {
        let (cx, cy) = self.key(p);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(list) = self.cells.get(&(cx + dx, cy + dy)) else { continue };
                for &i in list {
                    let d = nodes[i].position.distance(p);
                    if d <= radius && best.map_or(true, |(bd, bi)| d < bd || (d == bd && i < bi)) {
                        best = Some((d, i));
                    }
                }
            }
        }
        best.map(|(_, i)| i)
    }
}

/// One route search over a fixed airspace and contract snapshot.
pub struct Planner<'a> {
    airspace: &'a AirspaceModel,
    traffic: Traffic,
    cfg: &'a RouterConfig,
    heuristic: &'a dyn Heuristic,
}

impl<'a> Planner<'a> {
    pub fn new(
        airspace: &'a AirspaceModel,
        store: &'a ContractStore,
        cfg: &'a RouterConfig,
        heuristic: &'a dyn Heuristic,
    ) -> Self {
        Self {
            airspace,
            traffic: Traffic::new(store),
            cfg,
            heuristic,
        }
    }

    fn h(&self, p: LocalPoint, goal: LocalPoint) -> f64 {
        if p == goal {
            0.0
        } else {
            self.heuristic.estimate(p, goal, self.airspace, self.cfg.weight)
        }
    }

    fn priority(&self, n: &SearchNode, goal: LocalPoint) -> f64 {
        let h = if self.cfg.cache_heuristic { n.h } else { self.h(n.position, goal) };
        n.g + h + self.cfg.penalty * n.delta
    }

    /// Searches from `start` to `goal`, departing at `departure_time`.
    pub fn search(
        &self,
        start: LocalPoint,
        goal: LocalPoint,
        departure_time: f64,
    ) -> Result<(Route, SearchStats)> {
        self.cfg.validate()?;
        let cfg = self.cfg;
        let mut stats = SearchStats::default();
        let mut nodes: Vec<SearchNode> = Vec::new();
        let mut grid = NodeGrid::new(cfg.dedup_radius);
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;

        nodes.push(SearchNode {
            position: start,
            g: 0.0,
            h: self.h(start, goal),
            delta: 0.0,
            parent: None,
            eta: departure_time,
            status: NodeStatus::Open,
        });
        grid.insert(start, 0);
        // The goal is pre-registered as unreached so nearby candidates merge
        // into it.
        nodes.push(SearchNode {
            position: goal,
            g: f64::INFINITY,
            h: 0.0,
            delta: 0.0,
            parent: None,
            eta: f64::INFINITY,
            status: NodeStatus::InvalidConnection,
        });
        grid.insert(goal, 1);
        const GOAL: usize = 1;
        stats.created = 2;
        heap.push(Entry {
            f: self.priority(&nodes[0], goal),
            g: 0.0,
            seq,
            node: 0,
        });

        while let Some(entry) = heap.pop() {
            let idx = entry.node;
            if nodes[idx].status != NodeStatus::Open || nodes[idx].g.to_bits() != entry.g.to_bits() {
                continue;
            }
            if idx == GOAL {
                return Ok((self.reconstruct(&nodes, departure_time), stats));
            }
            nodes[idx].status = NodeStatus::Closed;
            stats.expanded += 1;
            if stats.expanded > cfg.max_expansions {
                break;
            }
            let here = nodes[idx].position;
            let parent = nodes[idx].parent.map(|p| nodes[p].position);
            let (g_here, eta_here) = (nodes[idx].g, nodes[idx].eta);

            for cand in expand(here, parent, goal, cfg) {
                let existing = if cand == goal {
                    Some(GOAL)
                } else {
                    grid.nearest(cand, cfg.dedup_radius, &nodes)
                };
                if existing == Some(idx) {
                    continue;
                }
                let target = existing.map_or(cand, |e| nodes[e].position);
                match connection_valid(here, eta_here, target, self.airspace, &self.traffic, cfg) {
                    Connection::InvalidNode => {}
                    Connection::InvalidConnection => {
                        if existing.is_none() {
                            let i = nodes.len();
                            nodes.push(SearchNode {
                                position: target,
                                g: f64::INFINITY,
                                h: self.h(target, goal),
                                delta: 0.0,
                                parent: None,
                                eta: f64::INFINITY,
                                status: NodeStatus::InvalidConnection,
                            });
                            grid.insert(target, i);
                            stats.created += 1;
                        }
                    }
                    Connection::Valid => {
                        let step = here.distance(target);
                        let g = g_here + step;
                        let eta = departure_time + g / cfg.cruise_speed;
                        let i = match existing {
                            // closed nodes are not re-opened: their subtrees were
                            // validated against the original timing
                            Some(e) if nodes[e].status != NodeStatus::Closed && g < nodes[e].g => e,
                            Some(_) => continue,
                            None => {
                                let i = nodes.len();
                                nodes.push(SearchNode {
                                    position: target,
                                    g,
                                    h: self.h(target, goal),
                                    delta: 0.0,
                                    parent: None,
                                    eta,
                                    status: NodeStatus::Open,
                                });
                                grid.insert(target, i);
                                stats.created += 1;
                                i
                            }
                        };
                        let delta = if cfg.penalty > 0.0 {
                            conflict_delta(here, eta_here, target, eta, &self.traffic, cfg)
                        } else {
                            0.0
                        };
                        let n = &mut nodes[i];
                        n.g = g;
                        n.eta = eta;
                        n.parent = Some(idx);
                        n.delta = delta;
                        n.status = NodeStatus::Open;
                        seq += 1;
                        heap.push(Entry {
                            f: self.priority(&nodes[i], goal),
                            g,
                            seq,
                            node: i,
                        });
                    }
                }
            }
        }
        Err(Error::NoRoute {
            expanded: stats.expanded,
        })
    }

    fn reconstruct(&self, nodes: &[SearchNode], departure_time: f64) -> Route {
        let mut chain = vec![1usize];
        while let Some(p) = nodes[*chain.last().unwrap()].parent {
            chain.push(p);
        }
        chain.reverse();
        let raw: Vec<LocalPoint> = chain.iter().map(|&i| nodes[i].position).collect();
        // A merged segment is checked against every region active at any
        // time along it, which is stricter than checking its pieces, so
        // each merge is re-validated.
        let pts = drop_collinear(&raw, |k, j| {
            let eta = nodes[chain[k]].eta;
            connection_valid(raw[k], eta, raw[j], self.airspace, &self.traffic, self.cfg) == Connection::Valid
        });
        if self.cfg.smooth {
            if let Some(short) = self.shortcut(&pts, departure_time) {
                return Route::from_points(&short, departure_time, self.cfg.cruise_speed);
            }
        }
        Route::from_points(&pts, departure_time, self.cfg.cruise_speed)
    }

    /// Greedy line-of-sight shortcutting of a found chain.
    ///
    /// From each kept point the farthest later point reachable by a valid
    /// connection is kept next. Shortcuts make the aircraft arrive earlier,
    /// so every connection is re-checked at its new ETA; if even an original
    /// edge becomes invalid under the new timing the chain is left as is.
    fn shortcut(&self, pts: &[LocalPoint], departure_time: f64) -> Option<Vec<LocalPoint>> {
        let mut out = vec![pts[0]];
        let (mut i, mut eta) = (0, departure_time);
        while i + 1 < pts.len() {
            let j = (i + 1..pts.len()).rev().find(|&j| {
                connection_valid(pts[i], eta, pts[j], self.airspace, &self.traffic, self.cfg) == Connection::Valid
            })?;
            eta += pts[i].distance(pts[j]) / self.cfg.cruise_speed;
            out.push(pts[j]);
            i = j;
        }
        Some(out)
    }
}

/// Removes interior points that lie on the straight line between their
/// neighbours and continue in the same direction, provided
/// `may_merge(kept, next)` accepts the joined segment between the indices
/// of the last kept point and the following point.
fn drop_collinear(pts: &[LocalPoint], mut may_merge: impl FnMut(usize, usize) -> bool) -> Vec<LocalPoint> {
    let mut out: Vec<LocalPoint> = Vec::with_capacity(pts.len());
    let mut kept = 0;
    for (i, p) in pts.iter().enumerate() {
        if i + 1 < pts.len() && !out.is_empty() {
            let prev = pts[kept];
            let (u, v) = (*p - prev, pts[i + 1] - *p);
            let scale = u.norm() * v.norm();
            if scale > 0.0 && u.cross(v).abs() <= 1e-12 * scale && u.dot(v) > 0.0 && may_merge(kept, i + 1) {
                continue;
            }
        }
        out.push(*p);
        kept = i;
    }
    out
}

/// Plans a route between two vertiports using the heuristic named in `cfg`.
pub fn plan(
    airspace: &AirspaceModel,
    store: &ContractStore,
    from_id: &str,
    to_id: &str,
    departure_time: f64,
    cfg: &RouterConfig,
) -> Result<Route> {
    plan_with_stats(airspace, store, from_id, to_id, departure_time, cfg).map(|(r, _)| r)
}

pub fn plan_with_stats(
    airspace: &AirspaceModel,
    store: &ContractStore,
    from_id: &str,
    to_id: &str,
    departure_time: f64,
    cfg: &RouterConfig,
) -> Result<(Route, SearchStats)> {
    if from_id == to_id {
        return Err(Error::Config(format!("origin and destination are both `{from_id}`")));
    }
    let from = airspace.vertiport(from_id)?.position;
    let to = airspace.vertiport(to_id)?.position;
    let heuristic = default_heuristics().get(&cfg.heuristic)?;
    Planner::new(airspace, store, cfg, heuristic.as_ref()).search(from, to, departure_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airspace::{NoFlyZone, Vertiport};
    use crate::geometry::{GeoPoint, Polygon};
    use crate::ovgen::testing::contract_with_spans;
    use crate::ovgen::{Covariance, EllipseRegion};

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon::new(
            "r",
            vec![
                LocalPoint::new(x0, y0),
                LocalPoint::new(x1, y0),
                LocalPoint::new(x1, y1),
                LocalPoint::new(x0, y1),
            ],
        )
        .unwrap()
    }

    fn airspace(nfzs: Vec<Polygon>, ports: &[(&str, f64, f64)]) -> AirspaceModel {
        AirspaceModel::new(
            GeoPoint::new(51.0, 0.0).unwrap(),
            rect(-5000.0, -5000.0, 5000.0, 5000.0),
            nfzs.into_iter()
                .enumerate()
                .map(|(i, polygon)| NoFlyZone { id: format!("z{i}"), polygon })
                .collect(),
            ports
                .iter()
                .map(|&(id, x, y)| Vertiport { id: id.into(), position: LocalPoint::new(x, y) })
                .collect(),
        )
        .unwrap()
    }

    fn headings_deg(node: LocalPoint, pts: &[LocalPoint]) -> Vec<f64> {
        pts.iter().map(|p| node.bearing_to(*p).to_degrees()).collect()
    }

    #[test]
    fn arc_children_headings() {
        let cfg = RouterConfig {
            arc_children: 5,
            arc_angle: PI / 2.0,
            ..RouterConfig::default()
        };
        let r = cfg.arc_radius;
        let kids = expand(LocalPoint::ORIGIN, Some(LocalPoint::new(-r, 0.0)), LocalPoint::new(1e4, 1e4), &cfg);
        assert_eq!(kids.len(), 6, "5 arc children plus the goal");
        let h = headings_deg(LocalPoint::ORIGIN, &kids[..5]);
        for (got, want) in h.iter().zip([-45.0, -22.5, 0.0, 22.5, 45.0]) {
            assert!((got - want).abs() < 1e-9, "{h:?}");
        }
        assert!(kids[..5].iter().all(|p| (p.norm() - r).abs() < 1e-9));
    }

    #[test]
    fn root_fan_is_full_circle() {
        let cfg = RouterConfig {
            arc_children: 5,
            arc_angle: PI / 2.0,
            ..RouterConfig::default()
        };
        let kids = expand(LocalPoint::ORIGIN, None, LocalPoint::new(100.0, 0.0), &cfg);
        assert_eq!(kids.len(), 16 + 1);
        assert_eq!(*kids.last().unwrap(), LocalPoint::new(100.0, 0.0));
    }

    #[test]
    fn connection_classes() {
        let air = airspace(vec![rect(-100.0, -100.0, 100.0, 100.0)], &[("a", -1000.0, 0.0), ("b", 1000.0, 0.0)]);
        let store = ContractStore::default();
        let cfg = RouterConfig::default();
        let a = LocalPoint::new(-1000.0, 0.0);
        assert_eq!(connection_valid(a, 0.0, LocalPoint::new(-6000.0, 0.0), &air, &Traffic::new(&store), &cfg), Connection::InvalidNode);
        assert_eq!(connection_valid(a, 0.0, LocalPoint::new(0.0, 0.0), &air, &Traffic::new(&store), &cfg), Connection::InvalidNode);
        assert_eq!(connection_valid(a, 0.0, LocalPoint::new(-120.0, 0.0), &air, &Traffic::new(&store), &cfg), Connection::InvalidNode, "inside clearance");
        assert_eq!(connection_valid(a, 0.0, LocalPoint::new(1000.0, 0.0), &air, &Traffic::new(&store), &cfg), Connection::InvalidConnection);
        assert_eq!(connection_valid(a, 0.0, LocalPoint::new(-1000.0, 800.0), &air, &Traffic::new(&store), &cfg), Connection::Valid);
    }

    fn store_with_region(mean: LocalPoint, t0: f64, t1: f64) -> ContractStore {
        let mut c = contract_with_spans("other", &[(t0, t1)]);
        c.ovs[0].regions[0] = EllipseRegion {
            mean,
            covariance: Covariance::new(400.0, 0.0, 400.0),
            z: 2.0,
            t_start: t0,
            t_end: t1,
            regularized: false,
        };
        let mut store = ContractStore::default();
        store.register(c).unwrap();
        store
    }

    #[test]
    fn temporal_filter_excludes_disjoint_regions() {
        let air = airspace(vec![], &[("a", -1000.0, 0.0), ("b", 1000.0, 0.0)]);
        let cfg = RouterConfig::default();
        let a = LocalPoint::new(-1000.0, 0.0);
        let b = LocalPoint::new(1000.0, 0.0);
        // flight a→b spans [0, 133 s]; region sits on the path
        let late = store_with_region(LocalPoint::ORIGIN, 1000.0, 1060.0);
        assert_eq!(connection_valid(a, 0.0, b, &air, &Traffic::new(&late), &cfg), Connection::Valid);
        let aligned = store_with_region(LocalPoint::ORIGIN, 60.0, 70.0);
        assert_eq!(connection_valid(a, 0.0, b, &air, &Traffic::new(&aligned), &cfg), Connection::InvalidConnection);
    }

    #[test]
    fn delta_values() {
        let cfg = RouterConfig::default();
        let a = LocalPoint::new(-100.0, 0.0);
        let b = LocalPoint::new(100.0, 0.0);
        assert_eq!(conflict_delta(a, 0.0, b, 10.0, &Traffic::default(), &cfg), 0.0);
        // sample 0 lands on the mean
        let through = store_with_region(a, 0.0, 10.0);
        assert!((conflict_delta(a, 0.0, b, 10.0, &Traffic::new(&through), &cfg) - 1.0).abs() < 1e-12);
        // σ = 20 m: nearest sample (the midpoint) at 40 m lateral offset is M = 2
        let off = store_with_region(LocalPoint::new(0.0, 40.0), 0.0, 10.0);
        let cfg_odd = RouterConfig {
            delta_samples: 3,
            ..cfg
        };
        let d = conflict_delta(a, 0.0, b, 10.0, &Traffic::new(&off), &cfg_odd);
        assert!((d - (-2.0f64).exp()).abs() < 1e-12, "{d}");
        assert!((d - 0.1353).abs() < 1e-4);
    }

    #[test]
    fn clear_line_of_sight_is_direct() {
        let air = airspace(vec![], &[("a", -3000.0, -1000.0), ("b", 2500.0, 1700.0)]);
        let cfg = RouterConfig {
            weight: 1.0,
            penalty: 0.0,
            ..RouterConfig::default()
        };
        let r = plan(&air, &ContractStore::default(), "a", "b", 100.0, &cfg).unwrap();
        assert_eq!(r.waypoints.len(), 2);
        let direct = LocalPoint::new(-3000.0, -1000.0).distance(LocalPoint::new(2500.0, 1700.0));
        assert!((r.total_length - direct).abs() < 1e-9);
        assert!((r.waypoints[1].eta - (100.0 + direct / 15.0)).abs() < 1e-9);
    }

    #[test]
    fn detours_around_wall() {
        let wall = rect(-100.0, -2000.0, 100.0, 2000.0);
        let air = airspace(vec![wall.clone()], &[("a", -2000.0, 0.0), ("b", 2000.0, 0.0)]);
        let cfg = RouterConfig::default();
        let r = plan(&air, &ContractStore::default(), "a", "b", 0.0, &cfg).unwrap();
        assert!(r.total_length > 4000.0);
        for (p, q) in r.segments() {
            let c = segment_polygon_clearance(p.position, q.position, &wall).unwrap();
            assert!(c >= cfg.nfz_clearance - 1e-9);
        }
        for w in r.waypoints.windows(2) {
            assert!(w[1].eta > w[0].eta);
        }
    }

    #[test]
    fn enclosed_destination_is_unreachable() {
        // Ring around b with a 20 m slit, narrower than twice the clearance.
        let ring = Polygon::new(
            "ring",
            [
                (1000.0, -1000.0),
                (3000.0, -1000.0),
                (3000.0, 1000.0),
                (1000.0, 1000.0),
                (1000.0, 10.0),
                (1500.0, 10.0),
                (1500.0, 500.0),
                (2500.0, 500.0),
                (2500.0, -500.0),
                (1500.0, -500.0),
                (1500.0, -10.0),
                (1000.0, -10.0),
            ]
            .iter()
            .map(|&(x, y)| LocalPoint::new(x, y))
            .collect(),
        )
        .unwrap();
        let air = airspace(vec![ring], &[("a", -2000.0, 0.0), ("b", 2000.0, 0.0)]);
        let err = plan(&air, &ContractStore::default(), "a", "b", 0.0, &RouterConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NoRoute { expanded } if expanded > 0));
    }

    #[test]
    fn same_origin_and_destination_rejected() {
        let air = airspace(vec![], &[("a", 0.0, 0.0), ("b", 10.0, 0.0)]);
        assert!(plan(&air, &ContractStore::default(), "a", "a", 0.0, &RouterConfig::default()).is_err());
        assert!(matches!(
            plan(&air, &ContractStore::default(), "a", "zz", 0.0, &RouterConfig::default()),
            Err(Error::UnknownVertiport(_))
        ));
    }

    #[test]
    fn collinear_points_are_merged() {
        let pts = [
            LocalPoint::new(0.0, 0.0),
            LocalPoint::new(1.0, 1.0),
            LocalPoint::new(2.0, 2.0),
            LocalPoint::new(3.0, 2.0),
        ];
        assert_eq!(drop_collinear(&pts, |_, _| true), vec![pts[0], pts[2], pts[3]]);
        assert_eq!(drop_collinear(&pts, |_, _| false), pts.to_vec());
    }

    #[test]
    fn config_validation() {
        assert!(RouterConfig::default().validate().is_ok());
        assert!(RouterConfig { weight: 2.0, ..Default::default() }.validate().is_err());
        assert!(RouterConfig { dedup_radius: 600.0, ..Default::default() }.validate().is_err());
        assert!(RouterConfig { arc_angle: 7.0, ..Default::default() }.validate().is_err());
    }
}
