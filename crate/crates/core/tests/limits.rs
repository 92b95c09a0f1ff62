use proptest::prelude::*;
use wdistortion::limits::{
    cesaro_check, coupling_upper_bound, fidelity_limit_table, pooled_distortion, realism_limit_table, IidLaw, Seq1D,
};

fn periodic() -> impl Strategy<Value = Seq1D> {
    prop::collection::vec(-3.0f64..3.0, 1..6).prop_map(|v| Seq1D::periodic(v).unwrap())
}

fn finite() -> impl Strategy<Value = Seq1D> {
    (0usize..6).prop_flat_map(|n| prop::collection::vec(-3.0f64..3.0, 2 * n + 1)).prop_map(|v| Seq1D::finite(v).unwrap())
}

fn sequence() -> impl Strategy<Value = Seq1D> {
    prop_oneof![periodic(), finite()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aligned_coupling_bounds_distortion(z in sequence(), zh in sequence(), sigma in 0.0f64..20.0, p in prop::sample::select(vec![1.0f64, 2.0])) {
        let d = pooled_distortion(&z, &zh, p, sigma).unwrap();
        let ub = coupling_upper_bound(&z, &zh, p, sigma).unwrap();
        prop_assert!(d <= ub + 1e-12, "{} > {}", d, ub);
    }

    #[test]
    fn zero_width_is_pointwise(z in sequence(), zh in sequence(), p in 1.0f64..3.0) {
        let d = pooled_distortion(&z, &zh, p, 0.0).unwrap();
        prop_assert_eq!(d, (z.get(0) - zh.get(0)).abs().powf(p));
    }

    #[test]
    fn constant_sequences_sit_on_target(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let z = Seq1D::constant(a).unwrap();
        let zh = Seq1D::constant(b).unwrap();
        let t = fidelity_limit_table(&z, &zh, 2.0, &[10.0, 1.0, 0.1, 0.0], 1e-12).unwrap();
        let u = realism_limit_table(&z, &zh, 2.0, &[0.0, 1.0, 100.0], 1e-12).unwrap();
        for r in t.rows.iter().chain(&u.rows) {
            prop_assert!((r.value - (a - b).powi(2)).abs() <= 1e-12);
        }
    }
}

#[test]
fn alternating_fidelity_limit() {
    let z = Seq1D::periodic(vec![0.0, 1.0]).unwrap();
    let zh = Seq1D::periodic(vec![1.0, 0.0]).unwrap();
    let t = fidelity_limit_table(&z, &zh, 2.0, &[1.0, 0.1, 0.03, 0.01, 0.0], 1e-3).unwrap();
    assert!(t.passed);
    for r in &t.rows {
        if r.sigma <= 0.03 {
            assert!(r.abs_error <= 1e-3, "{r:?}");
        }
    }
    assert_eq!(t.rows.last().unwrap().value, 1.0);
}

#[test]
fn period_three_realism_limit() {
    let z = Seq1D::periodic(vec![0.0, 0.0, 1.0]).unwrap();
    let zh = Seq1D::periodic(vec![1.0, 1.0, 0.0]).unwrap();
    let t = realism_limit_table(&z, &zh, 1.0, &[1.0, 10.0, 100.0, 1e4], 1e-2).unwrap();
    assert!((t.rows[0].target - 1.0 / 3.0).abs() < 1e-12);
    assert!(t.passed, "{}", t.to_csv());
}

#[test]
fn iid_copies_share_a_limit() {
    let law = IidLaw::Uniform { lo: 0.0, hi: 1.0 };
    let z = Seq1D::iid(law, 1).unwrap();
    let zh = Seq1D::iid(law, 2).unwrap();
    let d = pooled_distortion(&z, &zh, 1.0, 1e4).unwrap();
    assert!(d < 2e-2, "{d}");
}

#[test]
fn weighted_sums_reach_cesaro_means() {
    for row in cesaro_check(1e4, 1e-2).unwrap() {
        assert!(row.passed, "{row:?}");
    }
}

#[test]
fn single_width_grid_is_rejected() {
    let z = Seq1D::constant(0.0).unwrap();
    assert!(realism_limit_table(&z, &z, 1.0, &[1.0], 1e-2).is_err());
}
