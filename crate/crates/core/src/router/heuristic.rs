//! Distance-to-goal estimates for the route search.

use std::sync::Arc;

use crate::airspace::AirspaceModel;
use crate::geometry::{first_intersection_distance, normalize_angle, LocalPoint, Polygon};
use crate::registry::Registry;

pub trait Heuristic: Send + Sync {
    fn name(&self) -> &'static str;

    /// Weighted estimate of the remaining path length from `from` to `goal`.
    fn estimate(&self, from: LocalPoint, goal: LocalPoint, airspace: &AirspaceModel, weight: f64) -> f64;
}

/// Straight-line distance, ignoring obstacles.
#[derive(Debug, Default, Clone, Copy)]
pub struct Euclidean;

impl Heuristic for Euclidean {
    fn name(&self) -> &'static str {
        "euclidean"
    }

    fn estimate(&self, from: LocalPoint, goal: LocalPoint, _: &AirspaceModel, weight: f64) -> f64 {
        weight * from.distance(goal)
    }
}

/// Detour around the nearest blocking no-fly zone through its extreme vertex.
///
/// When the line of sight to the goal is blocked, the vertices of the first
/// polygon hit are ranked by signed angle off the node→goal line. The
/// leftmost and rightmost vertices are the two detour candidates; the one
/// with the smaller absolute angle is used, with ties going to the shorter
/// detour.
#[derive(Debug, Default, Clone, Copy)]
pub struct ExtremeVertex;

impl Heuristic for ExtremeVertex {
    fn name(&self) -> &'static str {
        "extreme-vertex"
    }

    fn estimate(&self, from: LocalPoint, goal: LocalPoint, airspace: &AirspaceModel, weight: f64) -> f64 {
        let blocking = airspace
            .nfzs
            .iter()
            .filter_map(|z| first_intersection_distance(from, goal, &z.polygon).map(|d| (d, &z.polygon)))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match blocking {
            None => weight * from.distance(goal),
            Some((_, poly)) => {
                let v = extreme_vertex(from, goal, poly);
                weight * (from.distance(v) + v.distance(goal))
            }
        }
    }
}

/// Signed angle of every vertex of `poly` off the `node → goal` line,
/// normalized to (-π, π]. Vertices to the right of the line are positive.
pub fn angle_set(node: LocalPoint, goal: LocalPoint, poly: &Polygon) -> Vec<f64> {
    let to_goal = node.bearing_to(goal);
    poly.vertices()
        .iter()
        .map(|v| normalize_angle(to_goal - node.bearing_to(*v)))
        .collect()
}

/// The extreme vertex used for the detour estimate.
pub fn extreme_vertex(node: LocalPoint, goal: LocalPoint, poly: &Polygon) -> LocalPoint {
    let angles = angle_set(node, goal, poly);
    let verts = poly.vertices();
    let argmin = (0..angles.len()).min_by(|&a, &b| angles[a].total_cmp(&angles[b])).unwrap();
    let argmax = (0..angles.len()).max_by(|&a, &b| angles[a].total_cmp(&angles[b])).unwrap();
    let (left, right) = (verts[argmin], verts[argmax]);
    let (al, ar) = (angles[argmin].abs(), angles[argmax].abs());
    let detour = |v: LocalPoint| node.distance(v) + v.distance(goal);
    if (al - ar).abs() <= 1e-12 {
        if detour(left) <= detour(right) {
            left
        } else {
            right
        }
    } else if al < ar {
        left
    } else {
        right
    }
}

/// Registry holding the built-in heuristics.
pub fn default_heuristics() -> Registry<dyn Heuristic> {
    let mut reg: Registry<dyn Heuristic> = Registry::new("heuristic");
    for h in [Arc::new(ExtremeVertex) as Arc<dyn Heuristic>, Arc::new(Euclidean)] {
        reg.register(h.name(), h);
    }
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airspace::{NoFlyZone, Vertiport};
    use crate::geometry::GeoPoint;

    fn square(cx: f64, cy: f64, half: f64) -> Polygon {
        Polygon::new(
            "sq",
            vec![
                LocalPoint::new(cx - half, cy - half),
                LocalPoint::new(cx + half, cy - half),
                LocalPoint::new(cx + half, cy + half),
                LocalPoint::new(cx - half, cy + half),
            ],
        )
        .unwrap()
    }

    fn airspace(nfzs: Vec<Polygon>) -> AirspaceModel {
        let bounds = square(0.0, 0.0, 10_000.0);
        AirspaceModel::new(
            GeoPoint::new(51.0, 0.0).unwrap(),
            bounds,
            nfzs.into_iter()
                .enumerate()
                .map(|(i, polygon)| NoFlyZone { id: format!("z{i}"), polygon })
                .collect(),
            vec![
                Vertiport { id: "a".into(), position: LocalPoint::new(-9000.0, 0.0) },
                Vertiport { id: "b".into(), position: LocalPoint::new(9000.0, 0.0) },
            ],
        )
        .unwrap()
    }

    #[test]
    fn vertex_on_goal_ray_is_zero() {
        let tri = Polygon::new(
            "t",
            vec![LocalPoint::new(10.0, 0.0), LocalPoint::new(12.0, -1.0), LocalPoint::new(12.0, 1.0)],
        )
        .unwrap();
        let a = angle_set(LocalPoint::ORIGIN, LocalPoint::new(20.0, 0.0), &tri);
        assert_eq!(a.len(), 3);
        assert!(a[0].abs() < 1e-15);
    }

    #[test]
    fn sides_of_the_line() {
        // unit square spanning x ∈ [10, 11], y ∈ [-0.5, 0.5]
        let sq = Polygon::new(
            "sq",
            vec![
                LocalPoint::new(10.0, -0.5),
                LocalPoint::new(11.0, -0.5),
                LocalPoint::new(11.0, 0.5),
                LocalPoint::new(10.0, 0.5),
            ],
        )
        .unwrap();
        let a = angle_set(LocalPoint::ORIGIN, LocalPoint::new(20.0, 0.0), &sq);
        let expected = (0.5f64 / 10.0).atan();
        assert!((a[0] - expected).abs() < 1e-12, "below the line is positive");
        assert!((a[3] + expected).abs() < 1e-12, "above the line is negative");
        assert!((expected - 0.04996).abs() < 1e-5);
        assert!(a[1] > 0.0 && a[2] < 0.0);
    }

    #[test]
    fn unblocked_estimate_is_weighted_distance() {
        let air = airspace(vec![]);
        let h = ExtremeVertex.estimate(LocalPoint::ORIGIN, LocalPoint::new(1000.0, 0.0), &air, 1.2);
        assert!((h - 1200.0).abs() < 1e-9);
    }

    #[test]
    fn smaller_angle_wins() {
        // Obstacle extends much further below the line than above it, so the
        // upper vertex (smaller |angle|) is the detour.
        let poly = Polygon::new(
            "p",
            vec![
                LocalPoint::new(400.0, -600.0),
                LocalPoint::new(600.0, -600.0),
                LocalPoint::new(600.0, 100.0),
                LocalPoint::new(400.0, 100.0),
            ],
        )
        .unwrap();
        let goal = LocalPoint::new(1000.0, 0.0);
        let v = extreme_vertex(LocalPoint::ORIGIN, goal, &poly);
        assert_eq!(v, LocalPoint::new(400.0, 100.0));
        let air = airspace(vec![poly]);
        let h = ExtremeVertex.estimate(LocalPoint::ORIGIN, goal, &air, 1.0);
        let expected = LocalPoint::ORIGIN.distance(v) + v.distance(goal);
        assert!((h - expected).abs() < 1e-9);
    }

    #[test]
    fn equal_angles_prefer_shorter_detour() {
        // Symmetric angles from the node, but the lower extreme vertex is
        // closer to the goal.
        let poly = Polygon::new(
            "kite",
            vec![
                LocalPoint::new(300.0, 0.0),
                LocalPoint::new(700.0, -350.0),
                LocalPoint::new(600.0, 0.0),
                LocalPoint::new(400.0, 200.0),
            ],
        )
        .unwrap();
        let node = LocalPoint::ORIGIN;
        let goal = LocalPoint::new(1000.0, 0.0);
        let a = angle_set(node, goal, &poly);
        let (lo, hi) = (a.iter().cloned().fold(f64::INFINITY, f64::min), a.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let detour = |v: LocalPoint| node.distance(v) + v.distance(goal);
        let up = LocalPoint::new(400.0, 200.0);
        let down = LocalPoint::new(700.0, -350.0);
        // arrange equality: angles of both extremes are atan(0.5)
        assert!((lo.abs() - hi.abs()).abs() < 1e-12, "{lo} {hi}");
        let expected = if detour(up) <= detour(down) { up } else { down };
        assert_eq!(extreme_vertex(node, goal, &poly), expected);
        // and mirrored, the same rule holds
        let mirrored = Polygon::new("m", poly.vertices().iter().map(|p| LocalPoint::new(p.x, -p.y)).collect()).unwrap();
        let exp_m = LocalPoint::new(expected.x, -expected.y);
        assert_eq!(extreme_vertex(node, goal, &mirrored), exp_m);
    }

    #[test]
    fn registry_has_builtins() {
        let reg = default_heuristics();
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["euclidean", "extreme-vertex"]);
        assert!(reg.get("rrt").is_err());
    }
}
