//! Ideal-gas species and mixture thermodynamics from NASA 7-coefficient
//! polynomials. Molar quantities are per kmol, so `R_U` is in J/(kmol·K).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

pub const R_U: f64 = 8314.46261815324;
pub const P_REF: f64 = 101325.0;

/// The shipped five-species table (CH4, O2, H2O, CO2, N2).
pub const THERMO_V1: &str = include_str!("../data/thermo_v1.json");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub r_universal: f64,
    pub p_ref: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            r_universal: R_U,
            p_ref: P_REF,
        }
    }
}

/// Standard atomic weights used to cross-check species molecular weights.
pub fn atomic_weight(element: &str) -> Option<f64> {
    Some(match element {
        "H" => 1.008,
        "C" => 12.011,
        "N" => 14.007,
        "O" => 15.999,
        "Ar" => 39.948,
        "He" => 4.0026,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesThermo {
    pub name: String,
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(default)]
    pub elements: BTreeMap<String, f64>,
    #[serde(rename = "T_min")]
    pub t_min: f64,
    #[serde(rename = "T_mid")]
    pub t_mid: f64,
    #[serde(rename = "T_max")]
    pub t_max: f64,
    pub nasa_low: [f64; 7],
    pub nasa_high: [f64; 7],
}

impl SpeciesThermo {
    /// Checks ordering of the ranges, positivity of `W`, and cp continuity at `T_mid`.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.w > 0.0) {
            return Err(format!("{}: molecular weight must be positive", self.name));
        }
        if !(self.t_min < self.t_mid && self.t_mid < self.t_max) {
            return Err(format!(
                "{}: need T_min < T_mid < T_max, got {} / {} / {}",
                self.name, self.t_min, self.t_mid, self.t_max
            ));
        }
        if self.nasa_low.iter().chain(&self.nasa_high).any(|a| !a.is_finite()) {
            return Err(format!("{}: non-finite coefficient", self.name));
        }
        let lo = cp_over_r(&self.nasa_low, self.t_mid);
        let hi = cp_over_r(&self.nasa_high, self.t_mid);
        let rel = (lo - hi).abs() / lo.abs().max(hi.abs());
        if !(rel <= 1e-3) {
            return Err(format!(
                "{}: cp discontinuity at T_mid ({rel:.3e} relative)",
                self.name
            ));
        }
        Ok(())
    }

    pub fn check_range(&self, t: f64) -> Result<()> {
        if t >= self.t_min && t <= self.t_max {
            Ok(())
        } else {
            Err(Error::TemperatureRange {
                species: self.name.clone(),
                t,
                t_min: self.t_min,
                t_max: self.t_max,
            })
        }
    }

    fn coeffs(&self, t: f64) -> &[f64; 7] {
        if t < self.t_mid {
            &self.nasa_low
        } else {
            &self.nasa_high
        }
    }

    pub fn cp_mole<R: Real>(&self, t: R) -> Result<R> {
        self.check_range(t.value())?;
        Ok(cp_poly(self.coeffs(t.value()), t) * R_U)
    }

    pub fn h_mole<R: Real>(&self, t: R) -> Result<R> {
        self.check_range(t.value())?;
        Ok(h_poly(self.coeffs(t.value()), t) * R_U)
    }

    pub fn u_mole<R: Real>(&self, t: R) -> Result<R> {
        Ok(self.h_mole(t)? - t * R_U)
    }

    /// Entropy at pressure `p` (Pa), ideal-gas correction relative to `P_REF`.
    pub fn s_mole<R: Real>(&self, t: R, p: f64) -> Result<R> {
        self.check_range(t.value())?;
        let a = self.coeffs(t.value());
        let poly = t * (t * (t * (a[4] / 4.0) + a[3] / 3.0) + a[2] / 2.0) + a[1];
        let s0 = t.ln() * a[0] + t * poly;
        Ok((s0 + a[6]) * R_U - R_U * (p / P_REF).ln())
    }

    /// `(cp, u)` per kmol in one pass; the reactor needs both every stage.
    pub fn cp_u_mole<R: Real>(&self, t: R) -> Result<(R, R)> {
        self.check_range(t.value())?;
        let a = self.coeffs(t.value());
        let cp = cp_poly(a, t) * R_U;
        let u = (h_poly(a, t) - t) * R_U;
        Ok((cp, u))
    }

    /// Element-derived molecular weight, when all elements are known.
    pub fn element_weight(&self) -> Option<f64> {
        self.elements
            .iter()
            .map(|(e, n)| atomic_weight(e).map(|w| w * n))
            .sum()
    }
}

fn cp_over_r(a: &[f64; 7], t: f64) -> f64 {
    a[0] + t * (a[1] + t * (a[2] + t * (a[3] + t * a[4])))
}

fn cp_poly<R: Real>(a: &[f64; 7], t: R) -> R {
    (t * (t * (t * (t * a[4] + a[3]) + a[2]) + a[1])) + a[0]
}

/// h/R in kelvin.
fn h_poly<R: Real>(a: &[f64; 7], t: R) -> R {
    let inner = t * (t * (t * (t * (a[4] / 5.0) + a[3] / 4.0) + a[2] / 3.0) + a[1] / 2.0) + a[0];
    t * inner + a[5]
}

/// An ordered, validated list of species.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermoTable {
    pub species: Vec<SpeciesThermo>,
}

impl ThermoTable {
    pub fn builtin() -> ThermoTable {
        ThermoTable::from_json_str(THERMO_V1, "thermo_v1.json").expect("shipped thermo data is valid")
    }

    pub fn load(path: &Path) -> Result<ThermoTable> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ThermoTable::from_json_str(&text, &path.display().to_string())
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<ThermoTable> {
        let species: Vec<SpeciesThermo> = serde_json::from_str(text).map_err(|e| Error::Data {
            origin: origin.to_string(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        let data_err = |name: &str, reason: String| Error::Data {
            origin: origin.to_string(),
            line: record_line(text, name),
            reason,
        };
        let mut seen = std::collections::HashSet::new();
        for sp in &species {
            if !seen.insert(sp.name.as_str()) {
                return Err(data_err(&sp.name, format!("duplicate species {}", sp.name)));
            }
            sp.validate().map_err(|r| data_err(&sp.name, r))?;
            if let Some(w) = sp.element_weight() {
                if !sp.elements.is_empty() && (w - sp.w).abs() > 0.01 {
                    return Err(data_err(
                        &sp.name,
                        format!("{}: W = {} but elements give {w:.4}", sp.name, sp.w),
                    ));
                }
            }
        }
        if species.is_empty() {
            return Err(Error::Data {
                origin: origin.to_string(),
                line: 1,
                reason: "no species records".into(),
            });
        }
        Ok(ThermoTable { species })
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&SpeciesThermo> {
        self.species.iter().find(|s| s.name == name)
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.species.iter().map(|s| s.name.as_str()).collect()
    }
}

/// 1-based line of the record whose `name` field equals `name`.
fn record_line(text: &str, name: &str) -> usize {
    let needle = format!("\"{name}\"");
    text.lines()
        .position(|l| l.contains("\"name\"") && l.contains(&needle))
        .map(|i| i + 1)
        .unwrap_or(1)
}

/// Temperature and composition, validated at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    pub t: f64,
    pub y: Vec<f64>,
}

impl MixtureState {
    pub fn new(species: &[SpeciesThermo], t: f64, y: Vec<f64>) -> Result<MixtureState> {
        if y.len() != species.len() {
            return Err(Error::invalid(
                "mixture",
                format!("{} mass fractions for {} species", y.len(), species.len()),
            ));
        }
        if y.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::invalid("mixture", "negative mass fraction"));
        }
        let total: f64 = y.iter().sum();
        if total == 0.0 {
            return Err(Error::DegenerateMixture);
        }
        if (total - 1.0).abs() >= 1e-9 {
            return Err(Error::invalid(
                "mixture",
                format!("mass fractions sum to {total}"),
            ));
        }
        for sp in species {
            sp.check_range(t)?;
        }
        Ok(MixtureState { t, y })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureProps<R> {
    /// kg/kmol
    pub w_mix: R,
    /// J/(kg·K)
    pub cv_mass: R,
    /// J/kg
    pub h_mass: R,
    /// J/kg
    pub u_mass: R,
}

pub fn mixture_props<R: Real>(species: &[SpeciesThermo], t: R, y: &[R]) -> Result<MixtureProps<R>> {
    assert_eq!(species.len(), y.len(), "species/composition length mismatch");
    if y.iter().all(|v| v.value() == 0.0) {
        return Err(Error::DegenerateMixture);
    }
    let zero = R::cst(0.0);
    let (mut inv_w, mut cv, mut h, mut u) = (zero, zero, zero, zero);
    for (sp, &yk) in species.iter().zip(y) {
        let (cp_k, u_k) = sp.cp_u_mole(t)?;
        let yw = yk / sp.w;
        inv_w = inv_w + yw;
        cv = cv + yw * (cp_k - R_U);
        u = u + yw * u_k;
        h = h + yw * (u_k + t * R_U);
    }
    Ok(MixtureProps {
        w_mix: R::cst(1.0) / inv_w,
        cv_mass: cv,
        h_mass: h,
        u_mass: u,
    })
}

/// Mean molecular weight `1/Σ(Y_k/W_k)`.
pub fn mean_molecular_weight<R: Real>(species: &[SpeciesThermo], y: &[R]) -> R {
    let mut inv = R::cst(0.0);
    for (sp, &yk) in species.iter().zip(y) {
        inv = inv + yk / sp.w;
    }
    R::cst(1.0) / inv
}

pub fn ideal_gas_pressure<R: Real>(m: R, v: f64, t: R, w_mix: R) -> R {
    m * t * R_U / (w_mix * v)
}

/// `p = m·R_u·T/(W_mix·V)`.
pub fn pressure(species: &[SpeciesThermo], m: f64, v: f64, state: &MixtureState) -> Result<f64> {
    if !(m > 0.0) || !(v > 0.0) {
        return Err(Error::invalid("pressure", format!("m = {m}, V = {v}")));
    }
    let w = mean_molecular_weight(species, &state.y);
    Ok(ideal_gas_pressure(m, v, state.t, w))
}
