use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::case_model::{GridGraph, NetworkModel};
use crate::{Error, Result};

/// Measured injections below this magnitude mark a zero-injection bus.
pub const ZERO_INJECTION_TOL: f64 = 1e-6;

/// A connected set of attacked buses, by internal index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackZone {
    /// Ascending.
    pub buses: Vec<usize>,
    pub interior: Vec<usize>,
    /// Zone buses with at least one exterior neighbour.
    pub boundary: Vec<usize>,
    pub zero_injection: Vec<usize>,
    pub seed_bus: usize,
    /// Largest hop distance from the seed inside the zone.
    pub hop_limit: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZoneLimits {
    pub h_max: usize,
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for ZoneLimits {
    fn default() -> Self {
        ZoneLimits {
            h_max: 2,
            n_min: 3,
            n_max: 10,
        }
    }
}

impl AttackZone {
    /// Builds a zone from an explicit bus set. The first listed bus is the
    /// seed.
    pub fn from_buses(graph: &GridGraph, buses: &[usize], limits: ZoneLimits) -> Result<AttackZone> {
        let seed_bus = *buses.first().ok_or_else(|| Error::Validation("empty zone".into()))?;
        let set: BTreeSet<usize> = buses.iter().copied().collect();
        if set.len() != buses.len() {
            return Err(Error::Validation("zone lists a bus twice".into()));
        }
        if let Some(&b) = set.iter().find(|&&b| b >= graph.n()) {
            return Err(Error::Validation(format!("zone bus index {b} out of range")));
        }
        let buses: Vec<usize> = set.into_iter().collect();
        if !graph.induces_connected(&buses) {
            return Err(Error::Validation("zone is not connected".into()));
        }
        if buses.len() < limits.n_min || buses.len() > limits.n_max {
            return Err(Error::Validation(format!(
                "zone size {} outside [{}, {}]",
                buses.len(),
                limits.n_min,
                limits.n_max
            )));
        }
        let inside = |k: usize| buses.binary_search(&k).is_ok();
        let (boundary, interior): (Vec<usize>, Vec<usize>) = buses
            .iter()
            .partition(|&&i| graph.neighbors(i).iter().any(|&j| !inside(j)));
        let hop_limit = zone_hops(graph, &buses, seed_bus)
            .into_iter()
            .flatten()
            .max()
            .unwrap_or(0);
        Ok(AttackZone {
            buses,
            interior,
            boundary,
            zero_injection: Vec::new(),
            seed_bus,
            hop_limit,
        })
    }

    /// Zero-injection buses of this zone under the measurements `p`, `q`.
    pub fn detect_zero_injection(&self, p: &[f64], q: &[f64]) -> Vec<usize> {
        self.buses
            .iter()
            .copied()
            .filter(|&i| p[i].abs() < ZERO_INJECTION_TOL && q[i].abs() < ZERO_INJECTION_TOL)
            .collect()
    }

    pub fn with_zero_injection(mut self, p: &[f64], q: &[f64]) -> Self {
        self.zero_injection = self.detect_zero_injection(p, q);
        self
    }

    pub fn contains(&self, bus: usize) -> bool {
        self.buses.binary_search(&bus).is_ok()
    }

    /// Exterior buses adjacent to the zone, ascending.
    pub fn exterior_neighbors(&self, graph: &GridGraph) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .buses
            .iter()
            .flat_map(|&i| graph.neighbors(i).iter().copied())
            .filter(|&j| !self.contains(j))
            .collect();
        set.into_iter().collect()
    }
}

/// Hop distances from `seed` inside the subgraph induced by `buses`.
fn zone_hops(graph: &GridGraph, buses: &[usize], seed: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; graph.n()];
    dist[seed] = Some(0);
    let mut queue = std::collections::VecDeque::from([seed]);
    while let Some(i) = queue.pop_front() {
        for &j in graph.neighbors(i) {
            if dist[j].is_none() && buses.binary_search(&j).is_ok() {
                dist[j] = Some(dist[i].unwrap() + 1);
                queue.push_back(j);
            }
        }
    }
    dist
}

/// Breadth-first zone from `seed_bus`: every bus within `h_max` hops,
/// truncated to `n_max` by (hop, index) order. `None` when fewer than
/// `n_min` buses remain.
pub fn enumerate_zone(graph: &GridGraph, seed_bus: usize, limits: ZoneLimits) -> Option<AttackZone> {
    if seed_bus >= graph.n() || graph.neighbors(seed_bus).is_empty() {
        return None;
    }
    let hops = graph.hops_from(seed_bus, limits.h_max);
    let mut ranked: Vec<(usize, usize)> = hops.iter().enumerate().filter_map(|(i, h)| h.map(|h| (h, i))).collect();
    ranked.sort_unstable();
    ranked.truncate(limits.n_max);
    if ranked.len() < limits.n_min {
        return None;
    }
    // Truncation by hop order keeps every bus's BFS parent, so the set stays
    // connected.
    let mut buses: Vec<usize> = ranked.iter().map(|&(_, i)| i).collect();
    buses.sort_unstable();
    let inside = |k: usize| buses.binary_search(&k).is_ok();
    let (boundary, interior): (Vec<usize>, Vec<usize>) = buses
        .iter()
        .partition(|&&i| graph.neighbors(i).iter().any(|&j| !inside(j)));
    Some(AttackZone {
        hop_limit: ranked.last().map_or(0, |&(h, _)| h),
        buses,
        interior,
        boundary,
        zero_injection: Vec::new(),
        seed_bus,
    })
}

/// One candidate zone per seed bus, skipping seeds that yield none.
pub fn enumerate_zones(graph: &GridGraph, seeds: &[usize], limits: ZoneLimits) -> Vec<AttackZone> {
    seeds.iter().filter_map(|&s| enumerate_zone(graph, s, limits)).collect()
}

/// Zone specification file.
///
/// Bus numbers are case-file bus ids when `index_base` is 1 (the default)
/// and positional indices into the bus table when it is 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneSpecFile {
    #[serde(default = "default_base")]
    pub index_base: u8,
    #[serde(default)]
    pub limits: ZoneLimits,
    pub zones: Vec<ZoneSpec>,
}

fn default_base() -> u8 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ZoneSpec {
    Buses { name: String, buses: Vec<usize> },
    Seed { name: String, seed: usize },
}

impl ZoneSpec {
    pub fn name(&self) -> &str {
        match self {
            ZoneSpec::Buses { name, .. } | ZoneSpec::Seed { name, .. } => name,
        }
    }
}

impl ZoneSpecFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn to_index(&self, model: &NetworkModel, bus: usize) -> Result<usize> {
        match self.index_base {
            0 if bus < model.n_bus() => Ok(bus),
            1 => model
                .bus_index(bus)
                .ok_or_else(|| Error::Validation(format!("unknown bus id {bus}"))),
            0 => Err(Error::Validation(format!("bus index {bus} out of range"))),
            b => Err(Error::Config(format!("index_base must be 0 or 1, got {b}"))),
        }
    }

    /// Resolves every entry to a validated zone, in file order.
    pub fn resolve(&self, model: &NetworkModel) -> Result<Vec<(String, AttackZone)>> {
        let graph = model.graph();
        self.zones
            .iter()
            .map(|spec| {
                let zone = match spec {
                    ZoneSpec::Buses { buses, .. } => {
                        let idx = buses
                            .iter()
                            .map(|&b| self.to_index(model, b))
                            .collect::<Result<Vec<_>>>()?;
                        AttackZone::from_buses(&graph, &idx, self.limits)
                    }
                    ZoneSpec::Seed { seed, .. } => {
                        let s = self.to_index(model, *seed)?;
                        enumerate_zone(&graph, s, self.limits)
                            .ok_or_else(|| Error::Validation(format!("seed {seed} yields no zone")))
                    }
                }
                .map_err(|e| Error::Validation(format!("zone '{}': {e}", spec.name())))?;
                Ok((spec.name().to_string(), zone))
            })
            .collect()
    }
}
