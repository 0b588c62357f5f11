//! Per-step aircraft dynamics.

use std::sync::Arc;

use crate::flightsim::{AircraftState, SimConfig};
use crate::registry::Registry;
use crate::router::Route;

/// Advances one aircraft by one record interval.
pub trait FlightModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn advance(&self, aircraft: &mut AircraftState, route: &Route, cfg: &SimConfig);
}

/// Constant-speed point mass flying straight at its active waypoint.
///
/// An aircraft within the capture radius of an intermediate waypoint switches
/// to the next one, both before and after moving. The final waypoint is
/// reached exactly: once it is within one step the aircraft lands on it and
/// holds there.
#[derive(Debug, Default, Clone, Copy)]
pub struct PointMass;

impl FlightModel for PointMass {
    fn name(&self) -> &'static str {
        "point-mass"
    }

    fn advance(&self, a: &mut AircraftState, route: &Route, cfg: &SimConfig) {
        let wps = &route.waypoints;
        let last = wps.len() - 1;
        if a.active_waypoint > last {
            return;
        }
        let capture = |a: &mut AircraftState| {
            while a.active_waypoint < last
                && a.position.distance(wps[a.active_waypoint].position) <= cfg.capture_radius
            {
                a.active_waypoint += 1;
            }
        };
        capture(a);
        let target = wps[a.active_waypoint].position;
        let offset = target - a.position;
        let dist = offset.norm();
        let travel = a.speed * cfg.dt;
        if a.active_waypoint == last && dist <= travel {
            a.position = target;
            a.active_waypoint = wps.len();
            return;
        }
        if dist > 0.0 {
            a.position = a.position + offset * (travel / dist);
        }
        capture(a);
    }
}

/// Registry holding the built-in flight models.
pub fn default_models() -> Registry<dyn FlightModel> {
    let mut reg: Registry<dyn FlightModel> = Registry::new("flight model");
    let pm: Arc<dyn FlightModel> = Arc::new(PointMass);
    reg.register(pm.name(), pm);
    reg
}
