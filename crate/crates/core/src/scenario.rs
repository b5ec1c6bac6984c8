//! The versioned experiment scenario: chamber, inlets, valve, mechanism,
//! time grid and oracle constants, all read from one JSON file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::OracleLaw;
use crate::error::{Error, Result};
use crate::kinetics::{Mechanism, MechanismRecord};
use crate::odeint::TimeGrid;
use crate::reactor::{FlowRate, Inlet, Outlet, ReactorConfig, ReactorState};
use crate::thermo::ThermoTable;

pub const SCENARIO_V1: &str = include_str!("../data/scenario_v1.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    #[serde(rename = "T")]
    pub t: f64,
    pub p: f64,
    #[serde(rename = "Y")]
    pub y: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InletSpec {
    pub mdot: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "Y")]
    pub y: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoflowSpec {
    /// Mass flow at `maf_max`; scales linearly with the coflow Mach number.
    pub mdot_max: f64,
    pub maf_max: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "Y")]
    pub y: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub id: String,
    pub volume: f64,
    pub initial: InitialSpec,
    pub oxidizer: InletSpec,
    pub coflow: CoflowSpec,
    pub outlet: Outlet,
    pub mechanism: MechanismRecord,
    pub grid: TimeGrid,
    pub oracle: OracleSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    /// RK4 steps per grid interval for the reference integrator.
    pub substeps: usize,
    #[serde(flatten)]
    pub law: OracleLaw,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub record: ScenarioRecord,
    pub mech: Mechanism,
    pub grid: TimeGrid,
    pub oracle: OracleSpec,
}

impl Scenario {
    pub fn builtin() -> Scenario {
        Scenario::from_json_str(SCENARIO_V1, "scenario_v1.json").expect("shipped scenario is valid")
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scenario::from_json_str(&text, &path.display().to_string())
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Scenario> {
        let record: ScenarioRecord = serde_json::from_str(text).map_err(|e| Error::Data {
            origin: origin.to_string(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        Scenario::from_record(record)
    }

    pub fn from_record(record: ScenarioRecord) -> Result<Scenario> {
        let mech = Mechanism::from_record(&record.mechanism, &ThermoTable::builtin())?;
        record.grid.validate()?;
        if record.oracle.substeps == 0 {
            return Err(Error::invalid("scenario", "oracle substeps must be at least 1"));
        }
        if !(record.coflow.maf_max > 0.0) || !(record.coflow.mdot_max >= 0.0) {
            return Err(Error::invalid("scenario", "coflow scaling must be positive"));
        }
        let s = Scenario {
            grid: record.grid,
            oracle: record.oracle,
            mech,
            record,
        };
        s.config(0.0)?;
        s.initial_state()?;
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.record.id
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.record).expect("scenario serializes")
    }

    fn composition(&self, y: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.mech.n_species()];
        for (name, &f) in y {
            let k = self
                .mech
                .index(name)
                .ok_or_else(|| Error::invalid("scenario", format!("unknown species {name}")))?;
            v[k] = f;
        }
        Ok(v)
    }

    /// Reactor with the oxidizer inlet and a coflow scaled by `maf`.
    pub fn config(&self, maf: f64) -> Result<ReactorConfig> {
        self.config_with(self.mech.clone(), maf)
    }

    pub fn config_with(&self, mech: Mechanism, maf: f64) -> Result<ReactorConfig> {
        let r = &self.record;
        let ox = Inlet::new(&mech, FlowRate::Constant(r.oxidizer.mdot), self.composition(&r.oxidizer.y)?, r.oxidizer.t)?;
        let co_mdot = r.coflow.mdot_max * (maf / r.coflow.maf_max);
        let co = Inlet::new(&mech, FlowRate::Constant(co_mdot), self.composition(&r.coflow.y)?, r.coflow.t)?;
        ReactorConfig::new(r.volume, vec![ox, co], r.outlet, mech)
    }

    pub fn initial_state(&self) -> Result<ReactorState> {
        let init = &self.record.initial;
        let y = self.composition(&init.y)?;
        self.config(0.0)?.state_at_pressure(init.p, init.t, y)
    }

    pub fn law(&self) -> OracleLaw {
        self.oracle.law
    }
}
