//! File formats: route, contract and store documents, GeoJSON overlays,
//! trajectory and schedule CSVs.
//!
//! Documents carry positions as WGS84 lat/lon plus the projection origin
//! they were written against, so they can be loaded without the airspace
//! file. Times are seconds since the scenario epoch.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::airspace::{AirspaceModel, ContractStore, LatLon};
use crate::error::{Error, Result};
use crate::flightsim::{AircraftState, SegmentRecord, TimeSlice};
use crate::geometry::{project, unproject, GeoPoint, LocalPoint};
use crate::ovgen::{Contract, Covariance, EllipseRegion, OperationalVolume};
use crate::router::{Route, Waypoint};
use crate::verify::ScheduleEntry;

/// Vertices used to draw an ellipse in GeoJSON.
pub const ELLIPSE_VERTICES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointDocument {
    pub lat: f64,
    pub lon: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteDocument {
    pub origin: LatLon,
    pub departure_time: f64,
    pub cruise_speed: f64,
    pub total_length: f64,
    pub waypoints: Vec<WaypointDocument>,
}

impl RouteDocument {
    pub fn from_route(route: &Route, origin: GeoPoint) -> Self {
        Self {
            origin: origin.into(),
            departure_time: route.departure_time,
            cruise_speed: route.cruise_speed,
            total_length: route.total_length,
            waypoints: route
                .waypoints
                .iter()
                .map(|w| {
                    let g = unproject(w.position, origin, 0.0);
                    WaypointDocument {
                        lat: g.lat,
                        lon: g.lon,
                        eta: w.eta,
                    }
                })
                .collect(),
        }
    }

    /// The route in the local frame of `origin`.
    pub fn to_route(&self, origin: GeoPoint) -> Result<Route> {
        if self.waypoints.len() < 2 {
            return Err(Error::Contract("a route needs at least two waypoints".into()));
        }
        let waypoints = self
            .waypoints
            .iter()
            .map(|w| {
                Ok(Waypoint {
                    position: project(GeoPoint::new(w.lat, w.lon)?, origin),
                    eta: w.eta,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Route {
            waypoints,
            total_length: self.total_length,
            departure_time: self.departure_time,
            cruise_speed: self.cruise_speed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionDocument {
    pub mean: LatLon,
    /// Row-major 2×2 covariance in the local east/north frame, m².
    pub covariance: [[f64; 2]; 2],
    pub z: f64,
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default)]
    pub regularized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OvDocument {
    pub start: f64,
    pub end: f64,
    pub regions: Vec<RegionDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractDocument {
    pub id: String,
    pub origin: LatLon,
    pub departure_time: f64,
    pub cruise_speed: f64,
    pub altitude: f64,
    pub total_length: f64,
    pub route: Vec<WaypointDocument>,
    pub ovs: Vec<OvDocument>,
}

impl ContractDocument {
    pub fn from_contract(c: &Contract, origin: GeoPoint) -> Self {
        let route = RouteDocument::from_route(&c.route, origin);
        Self {
            id: c.id.clone(),
            origin: origin.into(),
            departure_time: c.departure_time,
            cruise_speed: c.route.cruise_speed,
            altitude: c.altitude,
            total_length: c.route.total_length,
            route: route.waypoints,
            ovs: c
                .ovs
                .iter()
                .map(|ov| OvDocument {
                    start: ov.start,
                    end: ov.end,
                    regions: ov
                        .regions
                        .iter()
                        .map(|r| {
                            let g = unproject(r.mean, origin, c.altitude);
                            let s = r.covariance;
                            RegionDocument {
                                mean: LatLon { lat: g.lat, lon: g.lon },
                                covariance: [[s.xx, s.xy], [s.xy, s.yy]],
                                z: r.z,
                                t_start: r.t_start,
                                t_end: r.t_end,
                                regularized: r.regularized,
                            }
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// The contract in the local frame of `origin`, checked for structural
    /// consistency.
    pub fn to_contract(&self, origin: GeoPoint) -> Result<Contract> {
        let route = RouteDocument {
            origin: self.origin,
            departure_time: self.departure_time,
            cruise_speed: self.cruise_speed,
            total_length: self.total_length,
            waypoints: self.route.clone(),
        }
        .to_route(origin)?;
        let ovs = self
            .ovs
            .iter()
            .map(|ov| {
                let regions = ov
                    .regions
                    .iter()
                    .map(|r| {
                        let [[xx, xy], [yx, yy]] = r.covariance;
                        if (xy - yx).abs() > 1e-9 * (xx.abs() + yy.abs()).max(1.0) {
                            return Err(Error::Contract(format!(
                                "contract `{}`: covariance is not symmetric",
                                self.id
                            )));
                        }
                        Ok(EllipseRegion {
                            mean: project(r.mean.to_geo()?, origin),
                            covariance: Covariance::new(xx, xy, yy),
                            z: r.z,
                            t_start: r.t_start,
                            t_end: r.t_end,
                            regularized: r.regularized,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(OperationalVolume {
                    regions,
                    start: ov.start,
                    end: ov.end,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let contract = Contract {
            id: self.id.clone(),
            route,
            ovs,
            departure_time: self.departure_time,
            altitude: self.altitude,
        };
        contract.check_invariants()?;
        Ok(contract)
    }

    /// The contract in the frame of the origin it was written against.
    pub fn to_contract_native(&self) -> Result<Contract> {
        self.to_contract(self.origin.to_geo()?)
    }
}

/// A dump of every contract in a store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreDocument {
    pub origin: LatLon,
    pub contracts: Vec<ContractDocument>,
}

impl StoreDocument {
    pub fn from_store(store: &ContractStore, origin: GeoPoint) -> Self {
        Self {
            origin: origin.into(),
            contracts: store
                .contracts()
                .map(|c| ContractDocument::from_contract(c, origin))
                .collect(),
        }
    }

    /// Rebuilds a store in the frame of the dump's origin.
    pub fn to_store(&self) -> Result<ContractStore> {
        let origin = self.origin.to_geo()?;
        let mut store = ContractStore::default();
        for doc in &self.contracts {
            store.register(doc.to_contract(origin)?)?;
        }
        Ok(store)
    }
}

/// Input accepted by the verifier: a single contract or a store dump.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ContractsInput {
    Store(StoreDocument),
    Contract(Box<ContractDocument>),
}

impl ContractsInput {
    pub fn into_documents(self) -> Vec<ContractDocument> {
        match self {
            Self::Store(s) => s.contracts,
            Self::Contract(c) => vec![*c],
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn lon_lat(p: LocalPoint, origin: GeoPoint) -> Value {
    let g = unproject(p, origin, 0.0);
    json!([g.lon, g.lat])
}

fn ring(points: &[LocalPoint], origin: GeoPoint) -> Value {
    let mut coords: Vec<Value> = points.iter().map(|p| lon_lat(*p, origin)).collect();
    if let Some(first) = coords.first().cloned() {
        coords.push(first);
    }
    Value::Array(coords)
}

fn route_feature(route: &Route, origin: GeoPoint, contract: Option<&str>) -> Value {
    json!({
        "type": "Feature",
        "geometry": {
            "type": "LineString",
            "coordinates": route.waypoints.iter().map(|w| lon_lat(w.position, origin)).collect::<Vec<_>>(),
        },
        "properties": {
            "kind": "route",
            "contract": contract,
            "departure_time": route.departure_time,
            "length_m": route.total_length,
        },
    })
}

fn collection(features: Vec<Value>) -> Value {
    json!({ "type": "FeatureCollection", "features": features })
}

/// GeoJSON LineString of a route.
pub fn route_geojson(route: &Route, origin: GeoPoint) -> Value {
    collection(vec![route_feature(route, origin, None)])
}

/// Route line plus every ellipse region as a closed polygon.
pub fn contract_features(c: &Contract, origin: GeoPoint) -> Vec<Value> {
    let mut features = vec![route_feature(&c.route, origin, Some(&c.id))];
    for (k, ov) in c.ovs.iter().enumerate() {
        for (j, r) in ov.regions.iter().enumerate() {
            let boundary = r.ellipse().boundary(ELLIPSE_VERTICES);
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": [ring(&boundary, origin)] },
                "properties": {
                    "kind": "region",
                    "contract": c.id,
                    "ov": k,
                    "region": j,
                    "t_start": r.t_start,
                    "t_end": r.t_end,
                    "z": r.z,
                },
            }));
        }
    }
    features
}

pub fn contract_geojson(c: &Contract, origin: GeoPoint) -> Value {
    collection(contract_features(c, origin))
}

/// Bounds, no-fly zones and vertiports.
pub fn airspace_features(air: &AirspaceModel) -> Vec<Value> {
    let o = air.origin;
    let mut features = vec![json!({
        "type": "Feature",
        "geometry": { "type": "Polygon", "coordinates": [ring(air.bounds.vertices(), o)] },
        "properties": { "kind": "bounds" },
    })];
    for z in &air.nfzs {
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Polygon", "coordinates": [ring(z.polygon.vertices(), o)] },
            "properties": { "kind": "nfz", "id": z.id },
        }));
    }
    for v in &air.vertiports {
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Point", "coordinates": lon_lat(v.position, o) },
            "properties": { "kind": "vertiport", "id": v.id },
        }));
    }
    features
}

/// Airspace plus any number of contracts in one collection.
pub fn overlay_geojson<'a>(air: &AirspaceModel, contracts: impl IntoIterator<Item = &'a Contract>) -> Value {
    let mut features = airspace_features(air);
    for c in contracts {
        features.extend(contract_features(c, air.origin));
    }
    collection(features)
}

/// One row of the trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub segment: usize,
    pub t: f64,
    pub aircraft_id: usize,
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
    pub waypoint: usize,
    pub speed: f64,
}

/// Writes every recorded state as one CSV row.
pub fn write_trajectory_csv<W: Write>(out: W, records: &[SegmentRecord], origin: GeoPoint) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in records {
        for slice in &rec.slices {
            for (i, s) in slice.states.iter().enumerate() {
                let g = unproject(s.position, origin, s.alt);
                w.serialize(TrajectoryRow {
                    segment: rec.segment_index,
                    t: slice.t,
                    aircraft_id: i,
                    lat: g.lat,
                    lon: g.lon,
                    alt: s.alt,
                    waypoint: s.active_waypoint,
                    speed: s.speed,
                })
                .map_err(csv_error)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory dump back into segment records. Rows must be grouped
/// by segment and time, with aircraft ids `0..n` in order inside each slice.
pub fn read_trajectory_csv<R: Read>(input: R, origin: GeoPoint) -> Result<Vec<SegmentRecord>> {
    let mut records: Vec<SegmentRecord> = Vec::new();
    for row in csv::Reader::from_reader(input).deserialize() {
        let row: TrajectoryRow = row.map_err(csv_error)?;
        let state = AircraftState {
            position: project(GeoPoint::new(row.lat, row.lon)?, origin),
            alt: row.alt,
            active_waypoint: row.waypoint,
            speed: row.speed,
        };
        if records.last().is_none_or(|r| r.segment_index != row.segment) {
            records.push(SegmentRecord {
                segment_index: row.segment,
                start: row.t,
                end: row.t,
                slices: Vec::new(),
            });
        }
        let rec = records.last_mut().expect("pushed above");
        if rec.slices.last().is_none_or(|s| s.t != row.t) {
            rec.slices.push(TimeSlice { t: row.t, states: Vec::new() });
            rec.end = row.t;
        }
        let slice = rec.slices.last_mut().expect("pushed above");
        if row.aircraft_id != slice.states.len() {
            return Err(Error::Schema(format!(
                "trajectory row for aircraft {} at t = {} is out of order",
                row.aircraft_id, row.t
            )));
        }
        slice.states.push(state);
    }
    Ok(records)
}

/// Schedule row without the non-deterministic wall-time column.
#[derive(Serialize)]
struct ScheduleRow<'a> {
    contract_id: &'a str,
    origin: &'a str,
    destination: &'a str,
    requested_departure: f64,
    granted_departure: f64,
    cruise_speed: f64,
    route_length: f64,
    ov_count: usize,
    retries: usize,
}

/// Writes the schedule log. Wall-times vary between runs, so they are only
/// included on request.
pub fn write_schedule_csv<W: Write>(out: W, schedule: &[ScheduleEntry], wall_time: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in schedule {
        if wall_time {
            w.serialize(e).map_err(csv_error)?;
        } else {
            w.serialize(ScheduleRow {
                contract_id: &e.contract_id,
                origin: &e.origin,
                destination: &e.destination,
                requested_departure: e.requested_departure,
                granted_departure: e.granted_departure,
                cruise_speed: e.cruise_speed,
                route_length: e.route_length,
                ov_count: e.ov_count,
                retries: e.retries,
            })
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Schema(format!("csv: {other:?}")),
    }
}
