use std::collections::BTreeMap;

use pnode_core::kinetics::{
    forward_rate_constant, net_production_rates, rate_of_progress, reverse_rate_constant, Mechanism, Reaction,
};
use pnode_core::thermo::SpeciesThermo;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn toy_species(name: &str, a1: f64, a6: f64, a7: f64, atoms: f64) -> SpeciesThermo {
    let c = [a1, 0.0, 0.0, 0.0, 0.0, a6, a7];
    SpeciesThermo {
        name: name.into(),
        w: 10.0 * atoms,
        elements: BTreeMap::from([("Q".to_string(), atoms)]),
        t_min: 200.0,
        t_mid: 1000.0,
        t_max: 5000.0,
        nasa_low: c,
        nasa_high: c,
    }
}

#[test]
fn paper_constants_at_350k() {
    let kf = forward_rate_constant(121.75, 0.0, 1.68e7, 350.0);
    assert!(rel(kf, 0.37866503396592493) < 1e-14);
}

#[test]
fn unit_concentrations_reduce_to_rate_constant() {
    let mech = Mechanism::methane_1step();
    let q = rate_of_progress(&mech.reactions[0], &mech.species, &[1.0, 1.0, 0.0, 0.0, 0.0], 350.0).unwrap();
    assert!(rel(q, 0.37866503396592493) < 1e-14);
    let q2 = rate_of_progress(&mech.reactions[0], &mech.species, &[1.0, 2.0, 0.0, 0.0, 0.0], 350.0).unwrap();
    assert!(rel(q2, 4.0 * q) < 1e-14);
}

#[test]
fn one_step_production_pattern() {
    let mech = Mechanism::methane_1step();
    let x = [0.3, 0.7, 0.1, 0.05, 0.2];
    let q = rate_of_progress(&mech.reactions[0], &mech.species, &x, 1200.0).unwrap();
    let w = net_production_rates(&mech, &x, 1200.0, None, None).unwrap();
    let expect = [-q, -2.0 * q, 2.0 * q, q, 0.0];
    for (a, b) in w.iter().zip(expect) {
        assert!((a - b).abs() <= 1e-15 * q.abs());
    }
}

#[test]
fn symmetric_reaction_has_equal_rates() {
    let a = toy_species("A", 3.5, 0.0, 0.0, 1.0);
    let rxn = Reaction {
        equation: "A <=> A".into(),
        nu_fwd: vec![1.0],
        nu_rev: vec![1.0],
        orders: vec![1.0],
        a: 5.0,
        beta: 0.0,
        e: 1e7,
        reversible: true,
    };
    let kf = forward_rate_constant(5.0, 0.0, 1e7, 700.0);
    let kr = reverse_rate_constant(&rxn, &[a], kf, 700.0).unwrap();
    assert!(rel(kr, kf) < 1e-14);
}

// 2A <=> B at 1000 K against a 30-digit evaluation of the equilibrium expression.
#[test]
fn toy_reversible_reaction_matches_reference() {
    let sp = vec![
        toy_species("A", 3.5, 0.0, 0.0, 1.0),
        toy_species("B", 4.0, -500.0, 1.0, 2.0),
    ];
    let rxn = Reaction {
        equation: "2 A <=> B".into(),
        nu_fwd: vec![2.0, 0.0],
        nu_rev: vec![0.0, 1.0],
        orders: vec![2.0, 0.0],
        a: 1e3,
        beta: 0.5,
        e: 2e7,
        reversible: true,
    };
    let mech = Mechanism::new(sp.clone(), vec![rxn.clone()]).unwrap();
    let kf = forward_rate_constant(1e3, 0.5, 2e7, 1000.0);
    assert!(rel(kf, 2853.1696626985575) < 1e-13);
    let kr = reverse_rate_constant(&rxn, &sp, kf, 1000.0).unwrap();
    assert!(rel(kr, 386264553.93004436) < 1e-12);
    let q = rate_of_progress(&rxn, &sp, &[0.3, 0.2], 1000.0).unwrap();
    assert!(rel(q, -77252654.000739228) < 1e-12);
    let w = net_production_rates(&mech, &[0.3, 0.2], 1000.0, None, None).unwrap();
    assert!(rel(w[0], -2.0 * q) < 1e-14 && rel(w[1], q) < 1e-14);
}

fn conc() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..2.0, 5)
}

proptest! {
    #[test]
    fn chemistry_conserves_mass(x in conc(), t in 300.0f64..3500.0) {
        let mech = Mechanism::methane_1step();
        let w = net_production_rates(&mech, &x, t, None, None).unwrap();
        let terms: Vec<f64> = w.iter().zip(&mech.species).map(|(w, s)| w * s.w).collect();
        let scale = terms.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let total: f64 = terms.iter().sum();
        prop_assert!(total.abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn chemistry_conserves_elements(x in conc(), t in 300.0f64..3500.0) {
        let mech = Mechanism::methane_1step();
        let w = net_production_rates(&mech, &x, t, None, None).unwrap();
        for e in 0..mech.elements.len() {
            let terms: Vec<f64> = (0..5).map(|k| w[k] * mech.element_matrix[k][e]).collect();
            let scale = terms.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let total: f64 = terms.iter().sum();
            prop_assert!(total.abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn progress_monotone_in_reactants(x in conc(), k in 0usize..2, dx in 0.0f64..1.0, t in 300.0f64..3500.0) {
        let mech = Mechanism::methane_1step();
        let r = &mech.reactions[0];
        let q0 = rate_of_progress(r, &mech.species, &x, t).unwrap();
        let mut x1 = x.clone();
        x1[k] += dx;
        let q1 = rate_of_progress(r, &mech.species, &x1, t).unwrap();
        prop_assert!(q1 >= q0);
    }

    #[test]
    fn forward_constant_increases_with_temperature(
        a in 1e-3f64..1e12, beta in 0.0f64..3.0, e in 1e5f64..3e8, t in 300.0f64..3000.0, dt in 1.0f64..500.0,
    ) {
        prop_assert!(forward_rate_constant(a, beta, e, t + dt) > forward_rate_constant(a, beta, e, t));
    }
}
