//! Network model: MATPOWER ingestion, admittance assembly, AC injections.
//!
//! All quantities are per-unit on the case MVA base and angles are radians.
//! Buses are addressed by dense internal index (`0..n_bus`); the original
//! case-file bus number is kept in [`BusRecord::id`].

mod admittance;
mod graph;
mod injections;
mod parse;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use admittance::{build_admittance, Admittance, BranchAdmittance, BranchEnd, TerminalFlow};
pub use graph::GridGraph;
pub use injections::{
    ac_injections, ac_injections_into, ac_injections_vjp, branch_active_flow, bus_injection, bus_injection_vjp,
    terminal_flows_at,
};
pub use parse::parse_case;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusType {
    Pq,
    Pv,
    Slack,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    /// Bus number as written in the case file.
    pub id: usize,
    pub kind: BusType,
    pub pd: f64,
    pub qd: f64,
    /// Shunt conductance, p.u. at 1 p.u. voltage.
    pub gs: f64,
    /// Shunt susceptance, p.u. at 1 p.u. voltage.
    pub bs: f64,
    pub vm: f64,
    pub va: f64,
    pub base_kv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    /// Internal index of the from bus.
    pub from: usize,
    /// Internal index of the to bus.
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance.
    pub b: f64,
    /// Off-nominal tap ratio; 0 in the file means nominal (1.0).
    pub ratio: f64,
    /// Phase shift in radians.
    pub shift: f64,
    pub in_service: bool,
}

impl BranchRecord {
    pub fn tap(&self) -> f64 {
        if self.ratio == 0.0 {
            1.0
        } else {
            self.ratio
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenRecord {
    /// Internal index of the generator bus.
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub vg: f64,
    pub in_service: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkModel {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    pub gens: Vec<GenRecord>,
    #[serde(skip)]
    index: HashMap<usize, usize>,
}

impl NetworkModel {
    /// Assembles and validates a model. Branch and generator records must
    /// already refer to internal bus indices.
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<BusRecord>,
        branches: Vec<BranchRecord>,
        gens: Vec<GenRecord>,
    ) -> crate::Result<Self> {
        let index = buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
        let model = NetworkModel {
            name: name.into(),
            base_mva,
            buses,
            branches,
            gens,
            index,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    /// Internal index of a case-file bus number.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn bus_id(&self, index: usize) -> usize {
        self.buses[index].id
    }

    pub fn slack(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusType::Slack)
            .expect("validated model has a slack bus")
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = &BranchRecord> {
        self.branches.iter().filter(|br| br.in_service)
    }

    /// Buses with at least one in-service generator.
    pub fn has_generator(&self) -> Vec<bool> {
        let mut out = vec![false; self.n_bus()];
        for g in self.gens.iter().filter(|g| g.in_service) {
            out[g.bus] = true;
        }
        out
    }

    /// Net scheduled injections (generation minus load) from the case data.
    pub fn scheduled_injections(&self) -> (Vec<f64>, Vec<f64>) {
        let mut p: Vec<f64> = self.buses.iter().map(|b| -b.pd).collect();
        let mut q: Vec<f64> = self.buses.iter().map(|b| -b.qd).collect();
        for g in self.gens.iter().filter(|g| g.in_service) {
            p[g.bus] += g.pg;
            q[g.bus] += g.qg;
        }
        (p, q)
    }

    /// Voltage magnitudes for a flat start: generator setpoints on PV and
    /// slack buses, 1.0 elsewhere.
    pub fn flat_start(&self) -> (Vec<f64>, Vec<f64>) {
        let mut v = vec![1.0; self.n_bus()];
        for g in self.gens.iter().filter(|g| g.in_service) {
            if self.buses[g.bus].kind != BusType::Pq {
                v[g.bus] = g.vg;
            }
        }
        (v, vec![0.0; self.n_bus()])
    }

    pub fn graph(&self) -> GridGraph {
        GridGraph::from_model(self)
    }

    fn validate(&self) -> crate::Result<()> {
        use crate::Error::Validation;
        if !(self.base_mva > 0.0) {
            return Err(Validation(format!("base_mva must be positive, got {}", self.base_mva)));
        }
        if self.buses.is_empty() {
            return Err(Validation("no buses".into()));
        }
        if self.index.len() != self.buses.len() {
            return Err(Validation("duplicate bus id".into()));
        }
        let n_slack = self.buses.iter().filter(|b| b.kind == BusType::Slack).count();
        match n_slack {
            0 => return Err(Validation("missing slack bus".into())),
            1 => {}
            n => return Err(Validation(format!("{n} slack buses, expected exactly one"))),
        }
        let n = self.n_bus();
        for br in &self.branches {
            if br.from >= n || br.to >= n {
                return Err(Validation("branch endpoint out of range".into()));
            }
            if br.from == br.to {
                return Err(Validation(format!("self-loop branch at bus {}", self.bus_id(br.from))));
            }
        }
        if let Some(g) = self.gens.iter().find(|g| g.bus >= n) {
            return Err(Validation(format!("generator at unknown bus index {}", g.bus)));
        }
        let graph = self.graph();
        let reached = graph.reachable_from(self.slack());
        if let Some(k) = reached.iter().position(|r| !r) {
            return Err(Validation(format!("disconnected bus {}", self.bus_id(k))));
        }
        Ok(())
    }
}
