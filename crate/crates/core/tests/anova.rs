mod common;

use planecast::analytics::{cell_matrix, f_cdf, rm_anova_oneway, summarize, Factor, Measure, TrialTable};
use planecast::exec::ExecMode;
use planecast::geometry::TechniqueMode;
use planecast::session::SessionConfig;
use planecast::sim::{cohort, simulate_cohort, ControllerConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn matches_sums_of_squares_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for &(n, k) in &[(12, 2), (12, 12), (5, 3), (30, 4)] {
        for _ in 0..50 {
            let m = common::random_matrix(&mut rng, n, k);
            let r = rm_anova_oneway(&m).unwrap();
            let (f, df1, df2) = common::brute_force_rm_f(&m);
            assert_eq!((r.df1, r.df2), (df1, df2));
            assert!(common::rel_err(r.f, f) < 1e-9, "{} vs {f}", r.f);
            assert!((0.0..=1.0).contains(&r.p));
        }
    }
}

#[test]
fn two_levels_is_paired_t_squared() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let m = common::random_matrix(&mut rng, 12, 2);
        let t = common::paired_t(&m);
        let r = rm_anova_oneway(&m).unwrap();
        assert!(common::rel_err(r.f, t * t) < 1e-9);
    }
}

/// F(2, d2) has the closed form CDF 1 - (1 + 2x/d2)^(-d2/2).
#[test]
fn f_cdf_closed_forms() {
    for d2 in [1.0f64, 3.0, 11.0, 121.0] {
        for x in [0.01, 0.5, 1.0, 3.2, 17.1, 115.8] {
            let expect = 1.0 - (1.0 + 2.0 * x / d2).powf(-d2 / 2.0);
            assert!((f_cdf(x, 2.0, d2) - expect).abs() < 1e-12, "x={x} d2={d2}");
        }
    }
    // F(1,1): CDF = (2/pi) atan(sqrt x).
    for x in [0.1f64, 1.0, 4.0, 100.0] {
        let expect = 2.0 / std::f64::consts::PI * x.sqrt().atan();
        assert!((f_cdf(x, 1.0, 1.0) - expect).abs() < 1e-12);
    }
    assert!((f_cdf(1.0, 1.0, 1.0) - 0.5).abs() < 1e-12);
}

proptest! {
    #[test]
    fn f_cdf_is_monotone(a in 0.0f64..50.0, b in 0.0f64..50.0, d1 in 1usize..15, d2 in 1usize..130) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(f_cdf(lo, d1 as f64, d2 as f64) <= f_cdf(hi, d1 as f64, d2 as f64));
    }

    #[test]
    fn subject_offsets_cancel(seed in any::<u64>(), offsets in prop::collection::vec(-100.0f64..100.0, 12)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = common::random_matrix(&mut rng, 12, 4);
        let shifted: Vec<Vec<f64>> = m.iter().zip(&offsets).map(|(r, o)| r.iter().map(|x| x + o).collect()).collect();
        let (a, b) = (rm_anova_oneway(&m).unwrap(), rm_anova_oneway(&shifted).unwrap());
        prop_assert!(common::rel_err(b.f, a.f) < 1e-9);
    }

    #[test]
    fn scaling_leaves_f(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = common::random_matrix(&mut rng, 12, 3);
        let scaled: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|x| x * c).collect()).collect();
        let (a, b) = (rm_anova_oneway(&m).unwrap(), rm_anova_oneway(&scaled).unwrap());
        prop_assert!(common::rel_err(b.f, a.f) < 1e-9);
    }
}

#[test]
fn simulated_cohort_tables() {
    let subjects = cohort(3, 40, TechniqueMode::Pivot);
    let table = simulate_cohort(&subjects, &SessionConfig::default(), &ControllerConfig::default(), ExecMode::Parallel)
        .unwrap();
    assert_eq!(table.len(), 3 * 96);
    let by_position = summarize(&table, Factor::Position, Measure::Mt).unwrap();
    assert_eq!(by_position.len(), 12);
    assert!(by_position.iter().all(|l| l.mean.is_some() && l.subjects == 3 && l.trials == 3 * 8));

    let (levels, m) = cell_matrix(&table, Factor::Position, Measure::Mt).unwrap();
    assert_eq!(levels.len(), 12);
    let r = rm_anova_oneway(&m).unwrap();
    assert_eq!((r.df1, r.df2), (11, 22));

    // CSV round trip keeps what the statistics need.
    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    let back = TrialTable::read_csv(buf.as_slice()).unwrap();
    assert_eq!(
        summarize(&back, Factor::Technique, Measure::T).unwrap(),
        summarize(&table, Factor::Technique, Measure::T).unwrap()
    );
}
