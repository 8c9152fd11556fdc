//! Contour winding numbers and the stability verdict for the Jin-Xin
//! Burgers shock.

use ndarray::array;
use relax_shock::evans::{
    evans_on_contour, stability_verdict, ContourKind, ContourSettings, EvansSystem, Tri,
};
use relax_shock::model::{Poly, RelaxationModel, ShockData};
use relax_shock::profile::solve_profile;

fn fixture() -> (RelaxationModel, ShockData) {
    let m = RelaxationModel::jin_xin(2.0, Poly::new(vec![0.0, 0.0, 0.5]));
    let shock = ShockData::new(&m, array![1.0], array![-1.0], 0.0).unwrap();
    (m, shock)
}

fn settings() -> ContourSettings {
    ContourSettings { r_outer: 30.0, eta1: 0.05, r0: 0.05, max_samples: 60_000 }
}

#[test]
fn winding_numbers_and_verdict() {
    let (m, shock) = fixture();
    let p = solve_profile(&m, &shock, 60.0, 0.05).unwrap();
    let sys = EvansSystem::new(&m, &p).unwrap();
    let set = settings();

    let origin = evans_on_contour(&sys, ContourKind::OriginCircle, &set).unwrap();
    assert_eq!(origin.winding, 1, "origin circle must carry the translation zero");
    assert!(origin.closure_defect < 1e-6);

    let outer = evans_on_contour(&sys, ContourKind::Outer, &set).unwrap();
    assert_eq!(outer.winding - origin.winding, 0, "no zeros outside the origin disk");
    assert!(outer.closure_defect < 1e-6);

    let v = stability_verdict(&sys, &set).unwrap();
    assert_eq!(v.winding_big, 0);
    assert_eq!(v.winding_origin, 1);
    assert_eq!(v.ell, 1);
    assert!((v.delta - 2.0).abs() < 1e-10);
    assert_eq!(v.d1, Tri::Pass);
    assert_eq!(v.d2, Tri::Pass);
    assert_eq!(v.script_d, Tri::Pass);
}

#[test]
fn winding_invariant_under_grid_halving() {
    let (m, shock) = fixture();
    let set = settings();
    let mut windings = Vec::new();
    for dx in [0.05, 0.025] {
        let p = solve_profile(&m, &shock, 60.0, dx).unwrap();
        let sys = EvansSystem::new(&m, &p).unwrap();
        let origin = evans_on_contour(&sys, ContourKind::OriginCircle, &set).unwrap();
        let outer = evans_on_contour(&sys, ContourKind::Outer, &set).unwrap();
        windings.push((origin.winding, outer.winding));
    }
    assert_eq!(windings[0], windings[1]);
}

#[test]
fn spectral_shift_breaks_d1() {
    // Shifting the spectrum right by 0.5 puts the translation zero at
    // λ = 0.5, inside the big contour: winding > 0 there and D1 fails.
    let (m, shock) = fixture();
    let p = solve_profile(&m, &shock, 60.0, 0.05).unwrap();
    let sys = EvansSystem::with_spectral_shift(&m, &p, 0.5).unwrap();
    let set = settings();
    let v = stability_verdict(&sys, &set).unwrap();
    assert!(v.winding_big > 0, "expected zeros inside the shifted contour");
    assert_eq!(v.d1, Tri::Fail);
    assert_eq!(v.script_d, Tri::Fail);
}
