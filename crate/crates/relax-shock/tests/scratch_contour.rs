use ndarray::array;
use relax_shock::evans::{evans_on_contour, ContourKind, ContourSettings, EvansSystem};
use relax_shock::model::{Poly, RelaxationModel, ShockData};
use relax_shock::profile::solve_profile;

#[test]
fn probe() {
    let m = RelaxationModel::jin_xin(2.0, Poly::new(vec![0.0, 0.0, 0.5]));
    let shock = ShockData::new(&m, array![1.0], array![-1.0], 0.0).unwrap();
    let p = solve_profile(&m, &shock, 60.0, 0.05).unwrap();
    let sys = EvansSystem::new(&m, &p).unwrap();
    let set = ContourSettings { r_outer: 30.0, eta1: 0.05, r0: 0.05, max_samples: 60_000 };
    let rep = evans_on_contour(&sys, ContourKind::Outer, &set).unwrap();
    println!(
        "winding {} refined {} nsamples {} defect {:.3e}",
        rep.winding,
        rep.refined,
        rep.samples.len(),
        rep.closure_defect
    );
    // Where does arg accumulate? print the trace coarsely plus any step
    // with a big darg, min log_abs, and behavior near the chord.
    let smp = &rep.samples;
    let mut min_log = f64::INFINITY;
    let mut min_i = 0;
    for (i, s) in smp.iter().enumerate() {
        if s.log_abs < min_log {
            min_log = s.log_abs;
            min_i = i;
        }
        if i > 0 {
            let da = s.arg_unwound - smp[i - 1].arg_unwound;
            if da.abs() > 0.35 {
                println!(
                    "big step i={} lam=({:.4},{:.4})->({:.4},{:.4}) darg={:.3} log={:.3}",
                    i,
                    smp[i - 1].lambda.re,
                    smp[i - 1].lambda.im,
                    s.lambda.re,
                    s.lambda.im,
                    da,
                    s.log_abs
                );
            }
        }
    }
    println!("min log_abs {:.4} at i={} lam=({:.5},{:.5})", min_log, min_i, smp[min_i].lambda.re, smp[min_i].lambda.im);
    let n = smp.len();
    for i in (0..n).step_by((n / 60).max(1)) {
        let s = &smp[i];
        println!(
            "i={:5} lam=({:9.4},{:9.4}) log={:9.3} arg={:9.4} k={}",
            i, s.lambda.re, s.lambda.im, s.log_abs, s.arg_unwound, s.k_stable
        );
    }
    let s = smp.last().unwrap();
    println!(
        "end lam=({:.4},{:.4}) log={:.3} arg={:.4}",
        s.lambda.re, s.lambda.im, s.log_abs, s.arg_unwound
    );
}
