use cglab::cg::{run_cg, CgTraceRecord};
use cglab::criteria::CriteriaSet;
use cglab::error::Error;
use cglab::io::{
    format_trace, parse_trace, read_matrix_market, read_trace, write_matrix_market, write_plot_columns,
    write_trace,
};
use cglab::problems::{generate, GeneratorSpec};
use cglab::rounding::RoundingModel;
use proptest::prelude::*;

#[test]
fn generated_matrices_survive_matrix_market() {
    let dir = tempfile::tempdir().unwrap();
    for (family, seed) in [("laplacian-2d:7", 0), ("dense-spd:1e6:20", 4), ("diag-geometric:1e8:30", 0)] {
        let g = generate(GeneratorSpec::new(family.parse().unwrap(), seed)).unwrap();
        let path = dir.path().join("m.mtx");
        write_matrix_market(&g.problem.matrix, &path).unwrap();
        let back = read_matrix_market(&path).unwrap();
        let (a, b) = (g.problem.matrix.to_dense(), back.to_dense());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()), "{family}");
        assert_eq!(back.lower_triplets(), g.problem.matrix.lower_triplets());
    }
}

#[test]
fn missing_file_names_the_path() {
    match read_matrix_market("/nonexistent/dir/m.mtx") {
        Err(e @ Error::Io { .. }) => assert!(e.to_string().contains("/nonexistent/dir/m.mtx")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn trace_file_round_trip_and_plot_columns() {
    let g = generate(GeneratorSpec::new("dense-spd:1e4:15".parse().unwrap(), 1)).unwrap();
    let run = run_cg(&g.problem, RoundingModel::simulated(20).unwrap(), &CriteriaSet::none(), 40).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.csv");
    write_trace(&run.trace, &t).unwrap();
    assert_eq!(read_trace(&t).unwrap(), run.trace);

    let p = dir.path().join("p.csv");
    write_plot_columns(&run.trace, &["k".into(), "rnorm".into(), "snorm".into()], &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,rnorm,snorm"));
    assert_eq!(lines.count(), run.trace.len());
    assert!(write_plot_columns(&run.trace, &["bogus".into()], &p).is_err());
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        -1.0e3..1.0e3f64,
        Just(0.0),
        Just(-0.0),
    ]
}

fn record() -> impl Strategy<Value = (usize, [f64; 4], [Option<f64>; 3])> {
    (
        1usize..5,
        [finite(), finite(), finite(), finite()],
        [prop::option::of(finite()), prop::option::of(finite()), prop::option::of(finite())],
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn long_traces_round_trip_exactly(rows in prop::collection::vec(record(), 1000)) {
        let mut k = 0;
        let trace: Vec<CgTraceRecord> = rows
            .into_iter()
            .map(|(step, v, o)| {
                k += step;
                CgTraceRecord {
                    k,
                    alpha: v[0],
                    rnorm: v[1],
                    snorm: v[2],
                    gap: v[3],
                    enorm2: o[0],
                    enorm_a: o[1],
                    dr_ratio: o[2],
                }
            })
            .collect();
        let back = parse_trace(&format_trace(&trace).unwrap()).unwrap();
        prop_assert_eq!(back.len(), trace.len());
        for (a, b) in back.iter().zip(&trace) {
            // bitwise, so -0.0 and 0.0 are distinguished
            prop_assert_eq!(a.alpha.to_bits(), b.alpha.to_bits());
            prop_assert_eq!(a.rnorm.to_bits(), b.rnorm.to_bits());
            prop_assert_eq!(a.snorm.to_bits(), b.snorm.to_bits());
            prop_assert_eq!(a.gap.to_bits(), b.gap.to_bits());
            prop_assert_eq!(a.enorm2.map(f64::to_bits), b.enorm2.map(f64::to_bits));
            prop_assert_eq!(a.enorm_a.map(f64::to_bits), b.enorm_a.map(f64::to_bits));
            prop_assert_eq!(a.dr_ratio.map(f64::to_bits), b.dr_ratio.map(f64::to_bits));
            prop_assert_eq!(a.k, b.k);
        }
    }
}
