//! Property tests for the invariants the engine promises: exact rational
//! round trips, structural identities of reductions, orthonormality and
//! positivity of the boundary eigenproblem, sum-rule convergence, and
//! passivity and symmetry of discretized baths.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use qcircuit::abg::{AbgSolver, BoundarySpec, OmegaGrid, Quadrature};
use qcircuit::bath::{
    convention_map, discretize_nr_twoport, discretize_oneport, Continuum, Kind, NrTarget, OnePortTarget,
};
use qcircuit::couplings::canonical_j_f64;
use qcircuit::graph::TreePreference;
use qcircuit::netlist::{emit_netlist, parse_netlist};
use qcircuit::numerics::geometric_grid;
use qcircuit::rational::{format_rational, parse_rational, Q};
use qcircuit::symplectic::reduce;
use qcircuit::verify::structural_checks;

fn fixture(name: &str) -> serde_json::Value {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Replaces every element parameter of a fixture with the given rationals,
/// cycling through them.
fn with_params(mut doc: serde_json::Value, values: &[(i64, i64)]) -> String {
    let mut it = values.iter().cycle();
    for b in doc["branches"].as_array_mut().unwrap() {
        if let Some(params) = b.get_mut("params").and_then(|p| p.as_object_mut()) {
            for v in params.values_mut() {
                let (p, q) = it.next().unwrap();
                *v = serde_json::Value::String(format!("{p}/{q}"));
            }
        }
    }
    doc.to_string()
}

fn positive_rationals() -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((1i64..=12, 1i64..=6), 8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rational_format_round_trips(p in any::<i64>(), q in 1i64..=i64::MAX) {
        let x = Q::new(p.into(), q.into());
        prop_assert_eq!(parse_rational(&format_rational(&x)).unwrap(), x);
    }

    #[test]
    fn netlist_emit_parse_round_trips(values in positive_rationals()) {
        for name in ["driven-transmon", "gkp", "lc_blackbox_transformer"] {
            let g = parse_netlist(&with_params(fixture(name), &values)).unwrap();
            let again = parse_netlist(&emit_netlist(&g)).unwrap();
            prop_assert_eq!(again, g);
        }
    }

    #[test]
    fn convention_map_is_symplectic(k in 0usize..24) {
        let s = convention_map(k);
        let j = canonical_j_f64(k + 1);
        prop_assert!((s.transpose() * &j * &s - &j).amax() < 1e-15);
    }

    #[test]
    fn nr_densities_are_even(c in 0.1f64..5.0, y0 in 0.1f64..5.0, g in -3.0f64..3.0, w in 0.0f64..50.0) {
        let t = NrTarget { c, y0, g };
        prop_assert_eq!(t.a(-w), t.a(w));
        prop_assert_eq!(t.b(-w), t.b(w));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reductions_satisfy_exact_identities(values in positive_rationals()) {
        for name in ["driven-transmon", "gkp", "two-island-loop", "two-island-dual", "lc_blackbox"] {
            let g = parse_netlist(&with_params(fixture(name), &values)).unwrap();
            let red = reduce(&g, &TreePreference::CapacitiveFirst).unwrap();
            let checks = structural_checks(&red);
            prop_assert!(checks.all_ok(), "{}: {:?}", name, checks);
            prop_assert!(red.system.hamiltonian.quad.is_symmetric());
        }
    }

    #[test]
    fn boundary_modes_are_orthonormal_and_dual(n in 1usize..=3, seed in any::<u64>(), t in 0.0f64..1.0) {
        let s = AbgSolver::new(BoundarySpec::random(n, seed)).unwrap();
        let (lo, hi) = s.spec.cutoff_range();
        // Log-uniform frequency from a decade below to a decade above the cutoffs.
        let w = (0.1 * lo) * (100.0 * hi / lo).powf(t);
        let set = s.modes(w).unwrap();
        prop_assert!(set.degeneracy_residual() < 1e-12);
        prop_assert!((s.gram_matrix(&set) - DMatrix::identity(2 * n, 2 * n)).amax() < 1e-10);
        prop_assert!(s.duality_residual(&set) < 1e-10);
        prop_assert!(s.boundary_residual(&set) < 1e-10);
    }

    #[test]
    fn quadratic_form_is_positive_and_matches_energy(
        n in 1usize..=3,
        seed in any::<u64>(),
        coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 6),
    ) {
        let s = AbgSolver::new(BoundarySpec::random(n, seed)).unwrap();
        let h = 1e-3;
        let samples: Vec<DVector<f64>> = (0..=8000)
            .map(|j| {
                let x = j as f64 * h;
                let env = (-x * x).exp();
                DVector::from_fn(2 * n, |i, _| env * (coeffs[i].0 + coeffs[i].1 * x))
            })
            .collect();
        let q = s.quadratic_form_discrete(&samples, h);
        let e = s.energy_form_discrete(&samples, h);
        prop_assert!(e >= 0.0);
        prop_assert!((q - e).abs() <= 1e-3 * e.max(1e-12), "{} vs {}", q, e);
    }

    #[test]
    fn oneport_baths_are_passive(
        r in 0.2f64..5.0,
        l in 0.2f64..5.0,
        c in 0.2f64..5.0,
        dw in 0.01f64..0.2,
        which in 0usize..3,
    ) {
        let (kind, continuum) = match which {
            0 => (Kind::Admittance, Continuum::Resistor { r }),
            1 => (Kind::Admittance, Continuum::ParallelRc { r, c }),
            _ => (Kind::Impedance, Continuum::ParallelRlc { r, l, c }),
        };
        let target = OnePortTarget { kind, pole_zero: 0.0, pole_inf: 0.0, continuum };
        let bath = discretize_oneport(&target, dw, 20.0).unwrap();
        for k in 0..bath.len() {
            prop_assert!(bath.weight[k] > 0.0 && bath.c[k] > 0.0 && bath.l[k] > 0.0);
            prop_assert!(bath.c[k].is_finite() && bath.l[k].is_finite());
        }
        prop_assert!(bath.tail >= 0.0);
    }

    #[test]
    fn nr_baths_are_passive(c in 0.2f64..3.0, y0 in 0.2f64..3.0, g in 0.0f64..2.0) {
        let bath = discretize_nr_twoport(&NrTarget { c, y0, g }, 0.05, 20.0).unwrap();
        for o in &bath.oscillators {
            prop_assert!(o.c > 0.0 && o.r > 0.0 && o.omega > 0.0);
        }
        let margin = bath.passivity_margin(&geometric_grid(0.05, 20.0, 30));
        prop_assert!(margin >= 0.0, "margin {}", margin);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Without tail corrections the sum-rule residual is the neglected
    /// `S_∞/Ω_max` tail, so it falls by a decade per decade of `Ω_max`.
    #[test]
    fn raw_sum_rule_residual_decays_as_inverse_cutoff(n in 1usize..=3, seed in any::<u64>()) {
        let spec = BoundarySpec::random(n, seed);
        let s = AbgSolver::new(spec.clone()).unwrap();
        let (_, hi) = spec.cutoff_range();
        let residual = |f: f64| {
            let mut grid = OmegaGrid::default_for(&spec);
            grid.omega_max = f * hi;
            s.sum_rules(&Quadrature::new(grid)).unwrap().residual_a_raw
        };
        let slope = (residual(1000.0) / residual(100.0)).log10();
        prop_assert!((slope + 1.0).abs() < 0.1, "slope {}", slope);
    }
}
