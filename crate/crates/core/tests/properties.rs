//! End-to-end properties of the solver and the trace analytics on
//! generated problems.

use cglab::analysis::{
    audit_residual_ratio, estimate_floor, floor_vector, gap_report, scan_almost_monotonicity,
};
use cglab::cg::{run_cg, CgProblem};
use cglab::criteria::{CriteriaSet, VerdictKind};
use cglab::linalg::{norm2, DenseVector};
use cglab::oracle::{audit_exact_dr, exact_vec, oracle_run, oracle_trace, to_f64, RationalMatrix};
use cglab::problems::{generate, Family, GeneratedProblem, GeneratorSpec};
use cglab::rounding::RoundingModel;
use cglab::sweep::{run_sweep, SweepPlan};
use proptest::prelude::*;

const EPS: f64 = f64::EPSILON / 2.0;

fn gen(family: &str, seed: u64) -> GeneratedProblem {
    generate(GeneratorSpec::new(family.parse().unwrap(), seed)).unwrap()
}

fn crit(s: &str) -> CriteriaSet {
    s.parse().unwrap()
}

#[test]
fn true_residual_is_almost_monotone_before_stagnation() {
    let g = gen("diag-geometric:1e10:200", 0);
    let run = run_cg(&g.problem, RoundingModel::Double, &CriteriaSet::none(), 1000).unwrap();
    let s = run.series(|t| t.snorm);
    let rep = scan_almost_monotonicity("snorm", &s, EPS);
    assert!(rep.violations.is_empty(), "{rep:?}");
    assert!(rep.first_stagnation <= run.stop_index);
}

#[test]
fn identity_floor_is_representation_error() {
    let g = gen("diag-geometric:1:10", 0);
    let run = run_cg(&g.problem, RoundingModel::Double, &crit("stagnation"), 50).unwrap();
    let f = estimate_floor(&g.problem, &run).unwrap();
    let bnorm = norm2(g.problem.rhs.as_slice());
    assert!(f.floor_norm <= 10.0 * EPS * bnorm, "{}", f.floor_norm);
    assert!(f.stagnation_index <= run.stop_index);
}

#[test]
fn exact_runs_have_no_floor_no_gap_and_pass_the_audit() {
    for seed in 0..5 {
        let g = gen("integer-spd:6", seed);
        let a = RationalMatrix::from_spd(&g.problem.matrix);
        let b = exact_vec(g.problem.rhs.as_slice());
        let xstar = exact_vec(g.problem.reference_solution.as_ref().unwrap().as_slice());
        let states = oracle_run(&a, &b, &vec![Default::default(); 6]).unwrap();
        assert!(audit_exact_dr(&states).iter().all(|&(_, ok)| ok));

        let trace = oracle_trace(&a, &b, &states, Some(&xstar));
        let gaps = gap_report(&trace);
        assert!(gaps.gaps.iter().all(|&g| g == 0.0));
        assert_eq!(gaps.crossover, None);
        assert!(trace.iter().skip(1).all(|t| t.dr_ratio.unwrap() >= 1.0));
        assert!(audit_residual_ratio(&trace, EPS).passed());

        let x_final: Vec<f64> = states.last().unwrap().x.iter().map(to_f64).collect();
        let fv = floor_vector(&g.problem.matrix, g.problem.reference_solution.as_ref().unwrap().as_slice(), &x_final)
            .unwrap();
        assert_eq!(norm2(&fv), 0.0);
    }
}

#[test]
fn floor_scales_with_unit_roundoff() {
    let g = gen("diag-geometric:1e10:20", 3);
    let floor = |m| {
        let run = run_cg(&g.problem, m, &crit("stagnation"), 4000).unwrap();
        estimate_floor(&g.problem, &run).unwrap().floor_norm
    };
    let ratio = floor(RoundingModel::simulated(24).unwrap()) / floor(RoundingModel::Double);
    let target = 2f64.powi(29);
    assert!(ratio > target / 100.0 && ratio < target * 100.0, "ratio 2^{}", ratio.log2());
}

#[test]
fn floor_agrees_with_trailing_true_residual() {
    let g = gen("dense-spd:1e6:100", 5);
    for m in [RoundingModel::Double, RoundingModel::simulated(24).unwrap()] {
        let run = run_cg(&g.problem, m, &crit("stagnation"), 4000).unwrap();
        assert_eq!(run.verdict.kind, VerdictKind::Stagnation);
        let f = estimate_floor(&g.problem, &run).unwrap();
        assert!(
            (0.1..=10.0).contains(&f.agreement_ratio),
            "{m}: floor {} vs trailing snorm {}",
            f.floor_norm,
            f.trailing_snorm_mean
        );
    }
}

fn scaled(p: &CgProblem, s: f64) -> CgProblem {
    let mul = |v: &DenseVector| DenseVector::new(v.as_slice().iter().map(|x| x * s).collect()).unwrap();
    CgProblem::from_rhs(p.matrix.clone(), mul(&p.rhs), p.reference_solution.as_ref().map(mul)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // power-of-two scaling commutes with every rounding step, so the whole
    // run scales exactly
    #[test]
    fn floor_is_scale_equivariant(e in -40i32..40) {
        let g = gen("diag-geometric:1e4:30", 1);
        let s = 2f64.powi(e);
        let c = crit("stagnation");
        let base = run_cg(&g.problem, RoundingModel::Double, &c, 600).unwrap();
        let p2 = scaled(&g.problem, s);
        let run2 = run_cg(&p2, RoundingModel::Double, &c, 600).unwrap();
        let f1 = estimate_floor(&g.problem, &base).unwrap().floor_norm;
        let f2 = estimate_floor(&p2, &run2).unwrap().floor_norm;
        prop_assert!((f2 / (s * f1) - 1.0).abs() <= 4.0 * EPS);
    }
}

#[test]
fn well_conditioned_relres_runs_never_cross_over() {
    for family in ["diag-geometric:100:50", "dense-spd:100:50", "dense-spd:10:200", "laplacian-1d:30"] {
        let g = gen(family, 2);
        let run = run_cg(&g.problem, RoundingModel::Double, &crit("relres:1e-12"), 1000).unwrap();
        assert_eq!(run.verdict.kind, VerdictKind::Relres, "{family}");
        assert_eq!(gap_report(&run.trace).crossover, None, "{family}");
    }
}

#[test]
fn crossover_precedes_recursive_residual_passing_the_floor() {
    let g = gen("two-cluster:1e12:200", 12);
    let run = run_cg(&g.problem, RoundingModel::Double, &CriteriaSet::none(), 1000).unwrap();
    let crossover = gap_report(&run.trace).crossover.expect("crossover");
    let xstar = g.problem.reference_solution.as_ref().unwrap();
    let floor = norm2(&floor_vector(&g.problem.matrix, xstar.as_slice(), run.final_x.as_slice()).unwrap());
    let below = run.trace.iter().find(|t| t.rnorm < floor).expect("rnorm passes the floor").k;
    // in practice both events land on the same step
    assert!(crossover <= below, "crossover {crossover}, rnorm below floor {floor:e} at {below}");
}

fn relres_step(family: Family, seed: u64, max_iters: usize) -> (VerdictKind, usize) {
    let g = generate(GeneratorSpec::new(family, seed)).unwrap();
    let kappa = g.spectrum.unwrap().kappa;
    let c = crit(&format!("relres:{:e}", 10.0 * kappa * EPS));
    let run = run_cg(&g.problem, RoundingModel::Double, &c, max_iters).unwrap();
    (run.verdict.kind, run.stop_index)
}

#[test]
fn relres_at_ten_kappa_eps_fires_within_5n() {
    let mut cases = Vec::new();
    for n in [50, 200] {
        cases.push((Family::DiagGeometric { kappa: 1e2, n }, 0));
        cases.push((Family::DenseSpd { kappa: 1e2, n }, 1));
        for kappa in [1e2, 1e6, 1e10, 1e12] {
            for seed in 0..2 {
                cases.push((Family::TwoCluster { kappa, n }, seed));
            }
        }
    }
    for (family, seed) in cases {
        let (kind, _) = relres_step(family, seed, 5 * family.order());
        assert_eq!(kind, VerdictKind::Relres, "{family} seed {seed}");
    }
}

#[test]
fn spread_spectra_need_more_than_5n_steps() {
    // the iteration count scales with the square root of the condition
    // number here, not with the order
    let family = Family::DiagGeometric { kappa: 1e6, n: 200 };
    let (kind, _) = relres_step(family, 0, 1000);
    assert_eq!(kind, VerdictKind::Exhausted);
    let (kind, k) = relres_step(family, 0, 20_000);
    assert_eq!(kind, VerdictKind::Relres);
    assert!(k > 1000);
}

#[test]
fn gap_growth_is_bounded_and_persistent() {
    for (family, seed) in [("dense-spd:1e10:200", 3), ("diag-geometric:1e12:200", 0), ("two-cluster:1e12:200", 3)] {
        let g = gen(family, seed);
        let run = run_cg(&g.problem, RoundingModel::Double, &CriteriaSet::none(), 1000).unwrap();
        assert_eq!(run.trace[0].gap, 0.0);
        let anorm = g.problem.matrix.norm_inf();
        let xs = norm2(g.problem.reference_solution.as_ref().unwrap().as_slice());
        let max_x = xs + run.trace.iter().filter_map(|t| t.enorm2).fold(0.0, f64::max);
        let c = run
            .trace
            .iter()
            .skip(1)
            .map(|t| t.gap / (t.k as f64 * EPS * anorm * max_x))
            .fold(0.0, f64::max);
        assert!(c <= 1.0, "{family}: growth constant {c}");

        // the window-of-5 maxima never recede far below what was reached
        // before; exact monotonicity does not hold
        let mut reached: f64 = 0.0;
        for block in run.trace[1..].chunks(5) {
            let m = block.iter().map(|t| t.gap).fold(0.0, f64::max);
            assert!(m >= 0.5 * reached, "{family}: block max {m:e} after {reached:e}");
            reached = reached.max(m);
        }
    }
}

#[test]
fn residual_ratio_failures_only_once_squared_norm_underflows() {
    let plan = SweepPlan {
        kappas: vec![1e2],
        orders: vec![50],
        ..SweepPlan::clustered()
    };
    let outcomes = run_sweep(&plan.cases());
    let mut underflowing = 0;
    for o in outcomes.into_iter().map(Result::unwrap) {
        assert_eq!(o.audit.failures, o.audit.subnormal_failures, "{:?}", o.case.family);
        assert!(o.audit.rows.iter().filter(|r| !r.subnormal_rr).all(|r| r.pass));
        underflowing += o.audit.rows.iter().filter(|r| r.subnormal_rr).count();
    }
    assert!(underflowing > 0, "expected the clustered runs to reach the subnormal range");
}
