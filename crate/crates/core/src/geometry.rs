//! Planar geometry in a local east/north frame.
//!
//! Geographic input is mapped onto a tangent plane with an equirectangular
//! projection anchored at the airspace origin. Every membership predicate is
//! boundary-inclusive: a point on an edge counts as inside.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Mean Earth radius used by the projection, meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Number of boundary samples used by [`ellipses_overlap`].
pub const OVERLAP_SAMPLES: usize = 64;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        Self::with_alt(lat, lon, 0.0)
    }

    pub fn with_alt(lat: f64, lon: f64, alt: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !lat.is_finite() {
            return Err(Error::InvalidCoordinate(format!("latitude {lat} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) || !lon.is_finite() {
            return Err(Error::InvalidCoordinate(format!("longitude {lon} outside [-180, 180]")));
        }
        if !alt.is_finite() {
            return Err(Error::InvalidCoordinate(format!("altitude {alt} is not finite")));
        }
        Ok(Self { lat, lon, alt })
    }
}

/// A point in the local tangent plane: `x` meters east, `y` meters north.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalPoint {
    pub x: f64,
    pub y: f64,
}

impl LocalPoint {
    pub const ORIGIN: LocalPoint = LocalPoint { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Self) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Self) -> f64 {
        (self - o).norm()
    }

    /// Rotate counter-clockwise about the frame origin.
    pub fn rotated(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Heading of the vector from `self` to `o`, radians from +x.
    pub fn bearing_to(self, o: Self) -> f64 {
        (o.y - self.y).atan2(o.x - self.x)
    }

    pub fn lerp(self, o: Self, t: f64) -> Self {
        self + (o - self) * t
    }
}

impl Add for LocalPoint {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for LocalPoint {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for LocalPoint {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl Neg for LocalPoint {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Normalize an angle to (-π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

pub fn project(p: GeoPoint, origin: GeoPoint) -> LocalPoint {
    let x = EARTH_RADIUS_M * origin.lat.to_radians().cos() * (p.lon - origin.lon).to_radians();
    let y = EARTH_RADIUS_M * (p.lat - origin.lat).to_radians();
    LocalPoint::new(x, y)
}

/// Inverse of [`project`]. Altitude is taken from `alt`.
pub fn unproject(p: LocalPoint, origin: GeoPoint, alt: f64) -> GeoPoint {
    let lat = origin.lat + (p.y / EARTH_RADIUS_M).to_degrees();
    let lon = origin.lon + (p.x / (EARTH_RADIUS_M * origin.lat.to_radians().cos())).to_degrees();
    GeoPoint { lat, lon, alt }
}

/// A simple polygon, stored counter-clockwise and implicitly closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<LocalPoint>,
}

impl Polygon {
    /// Validates the ring and normalizes it to counter-clockwise order. A
    /// repeated closing vertex is dropped.
    pub fn new(id: &str, mut vertices: Vec<LocalPoint>) -> Result<Self> {
        let invalid = |reason: &str| Error::InvalidPolygon {
            id: id.to_string(),
            reason: reason.to_string(),
        };
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(invalid("fewer than 3 vertices"));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(invalid("non-finite vertex"));
        }
        let poly = Polygon { vertices };
        let area = poly.signed_area();
        if area.abs() < EPS {
            return Err(invalid("zero area"));
        }
        if !poly.is_simple() {
            return Err(invalid("ring self-intersects"));
        }
        let mut poly = poly;
        if area < 0.0 {
            poly.vertices.reverse();
        }
        Ok(poly)
    }

    pub fn vertices(&self) -> &[LocalPoint] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (LocalPoint, LocalPoint)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.cross(b)).sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            for j in (i + 1)..n {
                // adjacent edges share exactly one vertex
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (c, d) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    /// Distance from `p` to the polygon boundary (zero on the boundary).
    pub fn boundary_distance(&self, p: LocalPoint) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn orient(a: LocalPoint, b: LocalPoint, c: LocalPoint) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(p: LocalPoint, a: LocalPoint, b: LocalPoint) -> bool {
    p.x >= a.x.min(b.x) - EPS
        && p.x <= a.x.max(b.x) + EPS
        && p.y >= a.y.min(b.y) - EPS
        && p.y <= a.y.max(b.y) + EPS
}

/// Closed-segment intersection, including touching and collinear overlap.
pub fn segments_intersect(a: LocalPoint, b: LocalPoint, c: LocalPoint, d: LocalPoint) -> bool {
    let scale = 1.0 + a.norm().max(b.norm()).max(c.norm()).max(d.norm());
    let tol = EPS * scale * scale;
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > tol && d2 < -tol) || (d1 < -tol && d2 > tol))
        && ((d3 > tol && d4 < -tol) || (d3 < -tol && d4 > tol))
    {
        return true;
    }
    (d1.abs() <= tol && on_segment(a, c, d))
        || (d2.abs() <= tol && on_segment(b, c, d))
        || (d3.abs() <= tol && on_segment(c, a, b))
        || (d4.abs() <= tol && on_segment(d, a, b))
}

pub fn point_segment_distance(p: LocalPoint, a: LocalPoint, b: LocalPoint) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

pub fn segment_segment_distance(a: LocalPoint, b: LocalPoint, c: LocalPoint, d: LocalPoint) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// True when `p` is inside `poly` or on its boundary.
pub fn point_in_polygon(p: LocalPoint, poly: &Polygon) -> bool {
    let mut inside = false;
    for (a, b) in poly.edges() {
        if point_segment_distance(p, a, b) <= EPS {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// True when segment `ab` crosses or touches any edge of `poly`, or either
/// endpoint is inside it.
pub fn segment_intersects_polygon(a: LocalPoint, b: LocalPoint, poly: &Polygon) -> bool {
    point_in_polygon(a, poly)
        || point_in_polygon(b, poly)
        || poly.edges().any(|(c, d)| segments_intersect(a, b, c, d))
}

/// Minimum distance between segment `ab` and the boundary of `poly`.
///
/// Fails with [`Error::SegmentIntersects`] if the segment touches the
/// polygon, since the clearance would be ≤ 0.
pub fn segment_polygon_clearance(a: LocalPoint, b: LocalPoint, poly: &Polygon) -> Result<f64> {
    if segment_intersects_polygon(a, b, poly) {
        return Err(Error::SegmentIntersects);
    }
    Ok(poly
        .edges()
        .map(|(c, d)| segment_segment_distance(a, b, c, d))
        .fold(f64::INFINITY, f64::min))
}

/// Distance along `a → b` to the first crossing with the polygon boundary.
/// Returns zero if `a` is inside, `None` if the segment misses the polygon.
pub fn first_intersection_distance(a: LocalPoint, b: LocalPoint, poly: &Polygon) -> Option<f64> {
    if point_in_polygon(a, poly) {
        return Some(0.0);
    }
    let r = b - a;
    let mut best: Option<f64> = None;
    for (c, d) in poly.edges() {
        if !segments_intersect(a, b, c, d) {
            continue;
        }
        let s = d - c;
        let denom = r.cross(s);
        let t = if denom.abs() > EPS {
            ((c - a).cross(s) / denom).clamp(0.0, 1.0)
        } else {
            // collinear overlap: nearest edge endpoint along the ray
            let len2 = r.dot(r).max(EPS);
            ((c - a).dot(r) / len2).min((d - a).dot(r) / len2).clamp(0.0, 1.0)
        };
        let dist = t * r.norm();
        best = Some(best.map_or(dist, |cur| cur.min(dist)));
    }
    best.or_else(|| point_in_polygon(b, poly).then(|| r.norm()))
}

/// An ellipse in the local frame. `rotation` is the heading of the major axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: LocalPoint,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub rotation: f64,
}

impl Ellipse {
    /// Builds an ellipse, swapping axes if needed so that
    /// `semi_major >= semi_minor`.
    pub fn new(center: LocalPoint, semi_a: f64, semi_b: f64, rotation: f64) -> Result<Self> {
        if !(semi_a > 0.0 && semi_b > 0.0 && semi_a.is_finite() && semi_b.is_finite()) {
            return Err(Error::InvalidCoordinate(format!(
                "ellipse semi-axes must be positive and finite, got ({semi_a}, {semi_b})"
            )));
        }
        let (semi_major, semi_minor, rotation) = if semi_a >= semi_b {
            (semi_a, semi_b, rotation)
        } else {
            (semi_b, semi_a, rotation + PI / 2.0)
        };
        Ok(Self {
            center,
            semi_major,
            semi_minor,
            rotation: normalize_angle(rotation),
        })
    }

    pub fn circle(center: LocalPoint, radius: f64) -> Result<Self> {
        Self::new(center, radius, radius, 0.0)
    }

    /// Maps `p` into the frame where this ellipse is the unit circle.
    pub fn to_unit_frame(&self, p: LocalPoint) -> LocalPoint {
        let q = (p - self.center).rotated(-self.rotation);
        LocalPoint::new(q.x / self.semi_major, q.y / self.semi_minor)
    }

    /// Point on the boundary at parameter `phi`.
    pub fn boundary_point(&self, phi: f64) -> LocalPoint {
        let q = LocalPoint::new(self.semi_major * phi.cos(), self.semi_minor * phi.sin());
        self.center + q.rotated(self.rotation)
    }

    /// `n` boundary points at uniformly spaced parameters.
    pub fn boundary(&self, n: usize) -> Vec<LocalPoint> {
        (0..n)
            .map(|k| self.boundary_point(2.0 * PI * k as f64 / n as f64))
            .collect()
    }

    /// The same ellipse with both semi-axes grown by `margin`.
    ///
    /// The growth is exactly `margin` at the four axis vertices. Elsewhere it
    /// may be smaller, but the result always contains every point within
    /// `margin · semi_minor / semi_major` of this ellipse.
    pub fn grown(&self, margin: f64) -> Self {
        Self {
            semi_major: self.semi_major + margin,
            semi_minor: self.semi_minor + margin,
            ..*self
        }
    }

    pub fn area(&self) -> f64 {
        PI * self.semi_major * self.semi_minor
    }
}

pub fn point_in_ellipse(p: LocalPoint, e: &Ellipse) -> bool {
    let u = e.to_unit_frame(p);
    u.x * u.x + u.y * u.y <= 1.0 + 1e-12
}

/// Euclidean distance from `p` to the filled ellipse `e` (zero inside).
///
/// Uses bisection on the closest-point parameter in the ellipse's canonical
/// frame, which stays stable for very eccentric ellipses.
pub fn point_ellipse_distance(p: LocalPoint, e: &Ellipse) -> f64 {
    if point_in_ellipse(p, e) {
        return 0.0;
    }
    let q = (p - e.center).rotated(-e.rotation);
    let (y0, y1) = (q.x.abs(), q.y.abs());
    let e0 = e.semi_major;
    // A vanishing minor axis degenerates to a segment; flooring it keeps the
    // ratios finite at a sub-nanometre cost.
    let e1 = e.semi_minor.max(e0.max(1.0) * 1e-9);
    if y1 > 0.0 {
        if y0 > 0.0 {
            let (z0, z1) = (y0 / e0, y1 / e1);
            let r0 = (e0 / e1).powi(2);
            let n0 = r0 * z0;
            let (mut s0, mut s1) = (z1 - 1.0, n0.hypot(z1) - 1.0);
            for _ in 0..200 {
                let s = 0.5 * (s0 + s1);
                if s == s0 || s == s1 {
                    break;
                }
                let g = (n0 / (s + r0)).powi(2) + (z1 / (s + 1.0)).powi(2) - 1.0;
                if g > 0.0 {
                    s0 = s;
                } else if g < 0.0 {
                    s1 = s;
                } else {
                    break;
                }
            }
            let s = 0.5 * (s0 + s1);
            let x0 = r0 * y0 / (s + r0);
            let x1 = y1 / (s + 1.0);
            (x0 - y0).hypot(x1 - y1)
        } else {
            (y1 - e1).max(0.0)
        }
    } else {
        let (numer, denom) = (e0 * y0, e0 * e0 - e1 * e1);
        if numer < denom {
            let xd = numer / denom;
            let x0 = e0 * xd;
            let x1 = e1 * (1.0 - xd * xd).max(0.0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).max(0.0)
        }
    }
}

/// Euclidean distance from segment `ab` to the filled ellipse `e`.
///
/// Distance to a convex set is convex along the segment, so a golden-section
/// search over the segment parameter finds the minimum.
pub fn segment_ellipse_distance(a: LocalPoint, b: LocalPoint, e: &Ellipse) -> f64 {
    let ua = e.to_unit_frame(a);
    let ub = e.to_unit_frame(b);
    if point_segment_distance(LocalPoint::ORIGIN, ua, ub) <= 1.0 {
        return 0.0;
    }
    golden_min(|t| point_ellipse_distance(a.lerp(b, t), e), a.distance(b), f64::NEG_INFINITY)
}

/// Minimum of a convex function on `[0, 1]`, stopping early once a value at
/// or below `stop` is seen. `scale` converts the bracket width into metres.
fn golden_min(f: impl Fn(f64) -> f64, scale: f64, stop: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = f(0.0).min(f(1.0));
    if best <= stop {
        return best;
    }
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while (hi - lo) * scale > 1e-10 {
        best = best.min(fc).min(fd);
        if best <= stop {
            break;
        }
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    best.min(fc).min(fd)
}

/// True when segment `ab` passes within `margin` of ellipse `e`, boundary
/// inclusive. With a zero margin this is an exact intersection test.
pub fn segment_intersects_ellipse(a: LocalPoint, b: LocalPoint, e: &Ellipse, margin: f64) -> bool {
    let ua = e.to_unit_frame(a);
    let ub = e.to_unit_frame(b);
    if point_segment_distance(LocalPoint::ORIGIN, ua, ub) <= 1.0 + 1e-12 {
        return true;
    }
    if margin <= 0.0 || point_segment_distance(e.center, a, b) > e.semi_major + margin {
        return false;
    }
    // The ellipse with semi-axes √2·√(s² + m²) contains every point within
    // `m` of `e`, because its support function dominates h + m.
    let outer = Ellipse {
        semi_major: (2.0 * (e.semi_major.powi(2) + margin * margin)).sqrt(),
        semi_minor: (2.0 * (e.semi_minor.powi(2) + margin * margin)).sqrt(),
        ..*e
    };
    if point_segment_distance(LocalPoint::ORIGIN, outer.to_unit_frame(a), outer.to_unit_frame(b)) > 1.0 {
        return false;
    }
    let tol = 1e-9;
    golden_min(|t| point_ellipse_distance(a.lerp(b, t), e), a.distance(b), margin + tol) <= margin + tol
}

/// Conservative-leaning overlap test between two ellipses.
///
/// Reports overlap when either center lies in the other ellipse, when any of
/// [`OVERLAP_SAMPLES`] boundary points of one lies in the other, or when the
/// two inscribed boundary polygons cross. This slightly under-approximates
/// exact intersection (grazing contacts between samples can be missed);
/// callers that need a guarantee grow the ellipses by a margin first.
pub fn ellipses_overlap(e1: &Ellipse, e2: &Ellipse) -> bool {
    if e1.center.distance(e2.center) > e1.semi_major + e2.semi_major {
        return false;
    }
    if point_in_ellipse(e1.center, e2) || point_in_ellipse(e2.center, e1) {
        return true;
    }
    let b1 = e1.boundary(OVERLAP_SAMPLES);
    let b2 = e2.boundary(OVERLAP_SAMPLES);
    if b1.iter().any(|p| point_in_ellipse(*p, e2)) || b2.iter().any(|p| point_in_ellipse(*p, e1)) {
        return true;
    }
    let n = OVERLAP_SAMPLES;
    (0..n).any(|i| {
        let (a, b) = (b1[i], b1[(i + 1) % n]);
        (0..n).any(|j| segments_intersect(a, b, b2[j], b2[(j + 1) % n]))
    })
}
