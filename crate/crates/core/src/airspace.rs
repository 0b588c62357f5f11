//! Airspace model and the time-binned contract store.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::{Arc, RwLock, RwLockReadGuard};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_in_polygon, project, GeoPoint, LocalPoint, Polygon};
use crate::ovgen::{Contract, OperationalVolume};

/// Default time-bin width, seconds. Matches the default OV segment length.
pub const DEFAULT_BIN_DURATION: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn to_geo(self) -> Result<GeoPoint> {
        GeoPoint::new(self.lat, self.lon)
    }
}

impl From<GeoPoint> for LatLon {
    fn from(g: GeoPoint) -> Self {
        Self { lat: g.lat, lon: g.lon }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NfzDocument {
    pub id: String,
    pub ring: Vec<LatLon>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertiportDocument {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
}

/// On-disk airspace description. All coordinates are WGS84 degrees.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AirspaceDocument {
    pub origin: LatLon,
    pub bounds: Vec<LatLon>,
    #[serde(default)]
    pub nfzs: Vec<NfzDocument>,
    pub vertiports: Vec<VertiportDocument>,
}

#[derive(Debug, Clone)]
pub struct NoFlyZone {
    pub id: String,
    pub polygon: Polygon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertiport {
    pub id: String,
    pub position: LocalPoint,
}

#[derive(Debug, Clone)]
pub struct AirspaceModel {
    pub origin: GeoPoint,
    pub bounds: Polygon,
    pub nfzs: Vec<NoFlyZone>,
    pub vertiports: Vec<Vertiport>,
}

impl AirspaceModel {
    /// Assembles a model from local-frame geometry and checks its invariants.
    pub fn new(
        origin: GeoPoint,
        bounds: Polygon,
        nfzs: Vec<NoFlyZone>,
        vertiports: Vec<Vertiport>,
    ) -> Result<Self> {
        if vertiports.len() < 2 {
            return Err(Error::Schema(format!(
                "need at least 2 vertiports, got {}",
                vertiports.len()
            )));
        }
        let mut ids = BTreeSet::new();
        for v in &vertiports {
            if !ids.insert(v.id.as_str()) {
                return Err(Error::Vertiport {
                    id: v.id.clone(),
                    reason: "is defined more than once".into(),
                });
            }
            if !point_in_polygon(v.position, &bounds) {
                return Err(Error::Vertiport {
                    id: v.id.clone(),
                    reason: "lies outside the operational bounds".into(),
                });
            }
            if let Some(z) = nfzs.iter().find(|z| point_in_polygon(v.position, &z.polygon)) {
                return Err(Error::Vertiport {
                    id: v.id.clone(),
                    reason: format!("lies inside no-fly zone `{}`", z.id),
                });
            }
        }
        for z in &nfzs {
            if z.polygon.vertices().iter().any(|p| !point_in_polygon(*p, &bounds)) {
                return Err(Error::InvalidPolygon {
                    id: z.id.clone(),
                    reason: "extends outside the operational bounds".into(),
                });
            }
        }
        Ok(Self {
            origin,
            bounds,
            nfzs,
            vertiports,
        })
    }

    pub fn from_document(doc: &AirspaceDocument) -> Result<Self> {
        let origin = doc.origin.to_geo()?;
        let ring = |id: &str, pts: &[LatLon]| -> Result<Polygon> {
            let local = pts
                .iter()
                .map(|p| Ok(project(p.to_geo()?, origin)))
                .collect::<Result<Vec<_>>>()?;
            Polygon::new(id, local)
        };
        let bounds = ring("bounds", &doc.bounds)?;
        let nfzs = doc
            .nfzs
            .iter()
            .map(|z| {
                Ok(NoFlyZone {
                    id: z.id.clone(),
                    polygon: ring(&z.id, &z.ring)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let vertiports = doc
            .vertiports
            .iter()
            .map(|v| {
                let geo = GeoPoint::new(v.lat, v.lon).map_err(|e| Error::Vertiport {
                    id: v.id.clone(),
                    reason: e.to_string(),
                })?;
                Ok(Vertiport {
                    id: v.id.clone(),
                    position: project(geo, origin),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(origin, bounds, nfzs, vertiports)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: AirspaceDocument =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Self::from_document(&doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn vertiport(&self, id: &str) -> Result<&Vertiport> {
        self.vertiports
            .iter()
            .find(|v| v.id == id)
            .ok_or_else(|| Error::UnknownVertiport(id.to_string()))
    }

    pub fn contains(&self, p: LocalPoint) -> bool {
        point_in_polygon(p, &self.bounds)
    }
}

/// Reference to one OV of one stored contract.
pub type OvRef = (String, usize);

/// Disjoint time bins of fixed width; an OV is listed in every bin its
/// closed interval touches.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBinIndex {
    bin_duration: f64,
    bins: BTreeMap<i64, BTreeSet<OvRef>>,
}

impl TimeBinIndex {
    pub fn new(bin_duration: f64) -> Result<Self> {
        if !(bin_duration > 0.0 && bin_duration.is_finite()) {
            return Err(Error::Config(format!("bin duration must be positive, got {bin_duration}")));
        }
        Ok(Self {
            bin_duration,
            bins: BTreeMap::new(),
        })
    }

    pub fn bin_duration(&self) -> f64 {
        self.bin_duration
    }

    pub fn bin_of(&self, t: f64) -> i64 {
        (t / self.bin_duration).floor() as i64
    }

    pub fn bins_for(&self, start: f64, end: f64) -> std::ops::RangeInclusive<i64> {
        self.bin_of(start)..=self.bin_of(end)
    }

    pub fn insert(&mut self, r: OvRef, start: f64, end: f64) {
        for b in self.bins_for(start, end) {
            self.bins.entry(b).or_default().insert(r.clone());
        }
    }

    pub fn remove(&mut self, r: &OvRef, start: f64, end: f64) {
        for b in self.bins_for(start, end) {
            if let Some(set) = self.bins.get_mut(&b) {
                set.remove(r);
                if set.is_empty() {
                    self.bins.remove(&b);
                }
            }
        }
    }

    /// Candidate references for `[start, end]`, before exact interval filtering.
    pub fn candidates(&self, start: f64, end: f64) -> BTreeSet<&OvRef> {
        self.bins
            .range(self.bins_for(start, end))
            .flat_map(|(_, set)| set.iter())
            .collect()
    }

    pub fn bins(&self) -> &BTreeMap<i64, BTreeSet<OvRef>> {
        &self.bins
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Registered contracts plus their time-bin index.
#[derive(Debug, Clone)]
pub struct ContractStore {
    contracts: BTreeMap<String, Contract>,
    index: TimeBinIndex,
    next_id: u64,
}

impl Default for ContractStore {
    fn default() -> Self {
        Self::new(DEFAULT_BIN_DURATION).expect("default bin duration is positive")
    }
}

impl ContractStore {
    pub fn new(bin_duration: f64) -> Result<Self> {
        Ok(Self {
            contracts: BTreeMap::new(),
            index: TimeBinIndex::new(bin_duration)?,
            next_id: 0,
        })
    }

    /// Stores `contract` and indexes each of its OVs. An empty id is replaced
    /// by a generated one (`C0000`, `C0001`, ...).
    pub fn register(&mut self, mut contract: Contract) -> Result<String> {
        if contract.id.is_empty() {
            loop {
                let id = format!("C{:04}", self.next_id);
                self.next_id += 1;
                if !self.contracts.contains_key(&id) {
                    contract.id = id;
                    break;
                }
            }
        }
        if self.contracts.contains_key(&contract.id) {
            return Err(Error::DuplicateContract(contract.id));
        }
        let id = contract.id.clone();
        for (k, ov) in contract.ovs.iter().enumerate() {
            self.index.insert((id.clone(), k), ov.start, ov.end);
        }
        self.contracts.insert(id.clone(), contract);
        Ok(id)
    }

    pub fn remove(&mut self, id: &str) -> Result<Contract> {
        let contract = self
            .contracts
            .remove(id)
            .ok_or_else(|| Error::UnknownContract(id.to_string()))?;
        for (k, ov) in contract.ovs.iter().enumerate() {
            self.index.remove(&(id.to_string(), k), ov.start, ov.end);
        }
        Ok(contract)
    }

    /// OVs whose closed interval intersects `[t_start, t_end]`, ordered by
    /// contract id then OV index.
    pub fn query_interval(&self, t_start: f64, t_end: f64) -> Vec<(&str, &OperationalVolume)> {
        self.query_indexed(t_start, t_end)
            .into_iter()
            .map(|(id, _, ov)| (id, ov))
            .collect()
    }

    /// Like [`ContractStore::query_interval`], also returning each OV's index
    /// within its contract.
    pub fn query_indexed(&self, t_start: f64, t_end: f64) -> Vec<(&str, usize, &OperationalVolume)> {
        self.index
            .candidates(t_start, t_end)
            .into_iter()
            .filter_map(|(id, k)| {
                let ov = &self.contracts.get(id)?.ovs[*k];
                (ov.start <= t_end && ov.end >= t_start).then_some((id.as_str(), *k, ov))
            })
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&Contract> {
        self.contracts.get(id)
    }

    pub fn contracts(&self) -> impl Iterator<Item = &Contract> {
        self.contracts.values()
    }

    pub fn len(&self) -> usize {
        self.contracts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contracts.is_empty()
    }

    pub fn index(&self) -> &TimeBinIndex {
        &self.index
    }
}

/// A store shared between planners. Readers proceed concurrently; a
/// registration holds the write lock for its whole insertion, so readers
/// never see a partially indexed contract.
#[derive(Debug, Clone, Default)]
pub struct SharedStore(Arc<RwLock<ContractStore>>);

impl SharedStore {
    pub fn new(store: ContractStore) -> Self {
        Self(Arc::new(RwLock::new(store)))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, ContractStore> {
        self.0.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn register(&self, contract: Contract) -> Result<String> {
        self.0.write().unwrap_or_else(|e| e.into_inner()).register(contract)
    }

    pub fn remove(&self, id: &str) -> Result<Contract> {
        self.0.write().unwrap_or_else(|e| e.into_inner()).remove(id)
    }
}
