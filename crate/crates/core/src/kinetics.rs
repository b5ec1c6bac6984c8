//! Reaction mechanisms and Arrhenius production rates.
//!
//! Concentrations are kmol/m³ and production rates kmol/(m³·s). Mass
//! generation of species k is `V·ω̇_k·W_k`, so the rates here carry no
//! molecular-weight factor.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::thermo::{SpeciesThermo, ThermoTable, P_REF, R_U};

/// The shipped one-step methane mechanism.
pub const METHANE_1STEP: &str = include_str!("../data/methane_1step.json");

static CLAMPED: AtomicU64 = AtomicU64::new(0);

/// Number of negative concentrations clamped to zero since process start.
pub fn clamp_count() -> u64 {
    CLAMPED.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub equation: String,
    pub nu_fwd: Vec<f64>,
    pub nu_rev: Vec<f64>,
    pub orders: Vec<f64>,
    pub a: f64,
    pub beta: f64,
    pub e: f64,
    pub reversible: bool,
}

impl Reaction {
    /// Net stoichiometric coefficient `ν″ − ν′` of species `k`.
    pub fn nu(&self, k: usize) -> f64 {
        self.nu_rev[k] - self.nu_fwd[k]
    }

    pub fn delta_nu(&self) -> f64 {
        (0..self.nu_fwd.len()).map(|k| self.nu(k)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub species: Vec<SpeciesThermo>,
    pub reactions: Vec<Reaction>,
    pub elements: Vec<String>,
    /// `element_matrix[k][e]`: atoms of element `e` in species `k`.
    pub element_matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReactionRecord {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub equation: String,
    pub nu_fwd: BTreeMap<String, f64>,
    pub nu_rev: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orders: Option<BTreeMap<String, f64>>,
    #[serde(rename = "A")]
    pub a: f64,
    pub beta: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub reversible: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MechanismRecord {
    pub species: Vec<String>,
    pub reactions: Vec<ReactionRecord>,
}

impl Mechanism {
    /// The shipped one-step mechanism over the shipped thermo table.
    pub fn methane_1step() -> Mechanism {
        let rec: MechanismRecord = serde_json::from_str(METHANE_1STEP).expect("shipped mechanism parses");
        Mechanism::from_record(&rec, &ThermoTable::builtin()).expect("shipped mechanism is valid")
    }

    pub fn load(path: &Path, thermo: &ThermoTable) -> Result<Mechanism> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rec: MechanismRecord = serde_json::from_str(&text).map_err(|e| Error::Data {
            origin: path.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        Mechanism::from_record(&rec, thermo)
    }

    pub fn from_record(rec: &MechanismRecord, thermo: &ThermoTable) -> Result<Mechanism> {
        let mut species = Vec::with_capacity(rec.species.len());
        for name in &rec.species {
            if species.iter().any(|s: &SpeciesThermo| &s.name == name) {
                return Err(Error::invalid("mechanism", format!("duplicate species {name}")));
            }
            let sp = thermo
                .get(name)
                .ok_or_else(|| Error::invalid("mechanism", format!("no thermo data for {name}")))?;
            species.push(sp.clone());
        }
        let index = |name: &str| {
            rec.species
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::invalid("mechanism", format!("unknown species {name} in reaction")))
        };
        let dense = |map: &BTreeMap<String, f64>| -> Result<Vec<f64>> {
            let mut v = vec![0.0; rec.species.len()];
            for (name, &c) in map {
                v[index(name)?] = c;
            }
            Ok(v)
        };
        let mut reactions = Vec::with_capacity(rec.reactions.len());
        for r in &rec.reactions {
            let nu_fwd = dense(&r.nu_fwd)?;
            let nu_rev = dense(&r.nu_rev)?;
            let orders = match &r.orders {
                Some(o) => dense(o)?,
                None => nu_fwd.clone(),
            };
            reactions.push(Reaction {
                equation: r.equation.clone(),
                nu_fwd,
                nu_rev,
                orders,
                a: r.a,
                beta: r.beta,
                e: r.e,
                reversible: r.reversible,
            });
        }
        Mechanism::new(species, reactions)
    }

    pub fn new(species: Vec<SpeciesThermo>, reactions: Vec<Reaction>) -> Result<Mechanism> {
        let mut elements: Vec<String> = species
            .iter()
            .flat_map(|s| s.elements.keys().cloned())
            .collect();
        elements.sort();
        elements.dedup();
        let element_matrix: Vec<Vec<f64>> = species
            .iter()
            .map(|s| {
                elements
                    .iter()
                    .map(|e| s.elements.get(e).copied().unwrap_or(0.0))
                    .collect()
            })
            .collect();
        for s in &species {
            if let Some(w) = s.element_weight() {
                if !s.elements.is_empty() && (w - s.w).abs() > 0.01 {
                    return Err(Error::invalid(
                        "mechanism",
                        format!("{}: elements give W = {w:.4}, table says {}", s.name, s.w),
                    ));
                }
            }
        }
        let n = species.len();
        for (j, r) in reactions.iter().enumerate() {
            if r.nu_fwd.len() != n || r.nu_rev.len() != n || r.orders.len() != n {
                return Err(Error::invalid("reaction", format!("#{j}: coefficient count != {n}")));
            }
            if r.nu_fwd.iter().chain(&r.nu_rev).any(|&c| !(c >= 0.0)) {
                return Err(Error::invalid("reaction", format!("#{j}: negative stoichiometry")));
            }
            if r.nu_fwd.iter().all(|&c| c == 0.0) {
                return Err(Error::invalid("reaction", format!("#{j}: no reactants")));
            }
            if r.orders.iter().any(|&c| !(c >= 0.0)) {
                return Err(Error::invalid("reaction", format!("#{j}: negative order")));
            }
            if !(r.a > 0.0) || !(r.e >= 0.0) || !r.beta.is_finite() {
                return Err(Error::invalid("reaction", format!("#{j}: bad Arrhenius triple")));
            }
            for (e, name) in elements.iter().enumerate() {
                let bal: f64 = (0..n).map(|k| r.nu(k) * element_matrix[k][e]).sum();
                if bal.abs() > 1e-12 {
                    return Err(Error::invalid(
                        "reaction",
                        format!("#{j}: element {name} unbalanced by {bal}"),
                    ));
                }
            }
        }
        Ok(Mechanism {
            species,
            reactions,
            elements,
            element_matrix,
        })
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    /// Copy with every reaction's `A` and `E` replaced.
    pub fn with_arrhenius(&self, a: &[f64], e: &[f64]) -> Mechanism {
        let mut m = self.clone();
        for (r, (&a, &e)) in m.reactions.iter_mut().zip(a.iter().zip(e)) {
            r.a = a;
            r.e = e;
        }
        m
    }

    pub fn to_record(&self) -> MechanismRecord {
        let names: Vec<String> = self.species.iter().map(|s| s.name.clone()).collect();
        let sparse = |v: &[f64]| -> BTreeMap<String, f64> {
            names
                .iter()
                .zip(v)
                .filter(|(_, &c)| c != 0.0)
                .map(|(n, &c)| (n.clone(), c))
                .collect()
        };
        MechanismRecord {
            species: names.clone(),
            reactions: self
                .reactions
                .iter()
                .map(|r| ReactionRecord {
                    equation: r.equation.clone(),
                    nu_fwd: sparse(&r.nu_fwd),
                    nu_rev: sparse(&r.nu_rev),
                    orders: (r.orders != r.nu_fwd).then(|| sparse(&r.orders)),
                    a: r.a,
                    beta: r.beta,
                    e: r.e,
                    reversible: r.reversible,
                })
                .collect(),
        }
    }
}

/// `K_f = A·T^β·exp(−E/(R_u·T))`.
pub fn forward_rate_constant<R: Real>(a: R, beta: f64, e: R, t: R) -> R {
    let arr = (-(e / (t * R_U))).exp();
    if beta == 0.0 {
        a * arr
    } else {
        a * t.powf(beta) * arr
    }
}

/// `K_r = K_f / [(p_ref/(R_u·T))^Σν · exp(ΔS⁰/R_u − ΔH⁰/(R_u·T))]`.
pub fn reverse_rate_constant<R: Real>(rxn: &Reaction, species: &[SpeciesThermo], kf: R, t: R) -> Result<R> {
    if !rxn.reversible {
        return Err(Error::invalid("reaction", "reverse rate requested for an irreversible reaction"));
    }
    let mut ds = R::cst(0.0);
    let mut dh = R::cst(0.0);
    for (k, sp) in species.iter().enumerate() {
        let nu = rxn.nu(k);
        if nu != 0.0 {
            ds = ds + sp.s_mole(t, P_REF)? * nu;
            dh = dh + sp.h_mole(t)? * nu;
        }
    }
    let rt = t * R_U;
    let conc = (R::cst(P_REF) / rt).powf(rxn.delta_nu());
    let kc = conc * (ds / R_U - dh / rt).exp();
    Ok(kf / kc)
}

#[inline]
fn clamp_conc<R: Real>(x: R) -> R {
    if x.value() < 0.0 {
        CLAMPED.fetch_add(1, Ordering::Relaxed);
        R::cst(0.0)
    } else {
        x
    }
}

fn mass_action<R: Real>(x: &[R], exps: &[f64]) -> R {
    let mut p = R::cst(1.0);
    for (&xk, &ok) in x.iter().zip(exps) {
        if ok != 0.0 {
            p = p * clamp_conc(xk).powf(ok);
        }
    }
    p
}

/// `Q = K_f·ΠX^order − K_r·ΠX^ν″` with `kf` supplied by the caller.
pub fn rate_of_progress_with<R: Real>(
    rxn: &Reaction,
    species: &[SpeciesThermo],
    x: &[R],
    t: R,
    kf: R,
) -> Result<R> {
    let fwd = kf * mass_action(x, &rxn.orders);
    if !rxn.reversible {
        return Ok(fwd);
    }
    let kr = reverse_rate_constant(rxn, species, kf, t)?;
    Ok(fwd - kr * mass_action(x, &rxn.nu_rev))
}

pub fn rate_of_progress<R: Real>(rxn: &Reaction, species: &[SpeciesThermo], x: &[R], t: R) -> Result<R> {
    let kf = forward_rate_constant(R::cst(rxn.a), rxn.beta, R::cst(rxn.e), t);
    rate_of_progress_with(rxn, species, x, t, kf)
}

/// `ω̇_k = Σ_j ν_kj·Q_j`. Overrides, when given, replace each reaction's `A`
/// and `E` for this evaluation only.
pub fn net_production_rates<R: Real>(
    mech: &Mechanism,
    x: &[R],
    t: R,
    a_over: Option<&[R]>,
    e_over: Option<&[R]>,
) -> Result<Vec<R>> {
    let nr = mech.reactions.len();
    for (name, o) in [("A override", a_over), ("E override", e_over)] {
        if let Some(o) = o {
            if o.len() != nr {
                return Err(Error::invalid(name, format!("{} values for {nr} reactions", o.len())));
            }
        }
    }
    if x.len() != mech.n_species() {
        return Err(Error::invalid(
            "concentrations",
            format!("{} values for {} species", x.len(), mech.n_species()),
        ));
    }
    let mut wdot = vec![R::cst(0.0); x.len()];
    for (j, rxn) in mech.reactions.iter().enumerate() {
        let a = a_over.map_or(R::cst(rxn.a), |o| o[j]);
        let e = e_over.map_or(R::cst(rxn.e), |o| o[j]);
        let kf = forward_rate_constant(a, rxn.beta, e, t);
        let q = rate_of_progress_with(rxn, &mech.species, x, t, kf)?;
        for (k, w) in wdot.iter_mut().enumerate() {
            let nu = rxn.nu(k);
            if nu != 0.0 {
                *w = *w + q * nu;
            }
        }
    }
    Ok(wdot)
}
