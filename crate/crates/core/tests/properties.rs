use batchbo::acquisition::{constrained_ei, expected_improvement, probability_feasible, qcei_mc};
use batchbo::evaluators::protocol::{read_proposals, read_results, write_proposals, write_results, ResultRow};
use batchbo::gp::{Channel, GpHyperparameters, GpModel, PosteriorGaussian, Standardization};
use batchbo::seeds::derive_seed;
use batchbo::space::{ParameterSpace, UnitPoint};
use proptest::prelude::*;

/// Composite Simpson of (y - best) φ(y) over [max(best, mean - 12 std), mean + 12 std].
fn ei_quadrature(mean: f64, std: f64, best: f64) -> f64 {
    let n = 4000;
    let (a, b) = (best.max(mean - 12.0 * std), mean + 12.0 * std);
    if a >= b {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let f = |y: f64| {
        let z = (y - mean) / std;
        (y - best) * (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
    };
    let mut sum = f(a) + f(b);
    for i in 1..n {
        sum += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

fn model(points: &[Vec<f64>], channel: Channel, ls: f64) -> GpModel {
    let xs: Vec<UnitPoint> = points.iter().map(|p| UnitPoint::new(p.clone()).unwrap()).collect();
    let y: Vec<f64> = points.iter().map(|p| (5.0 * p[0]).sin() + p[1] * p[1] + 0.3 * p[0]).collect();
    let hyper = GpHyperparameters::new(vec![ls, ls], 1.3).unwrap();
    GpModel::with_hyperparameters(xs, &y, channel, hyper).unwrap()
}

fn design() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..1.0f64, 2), 4..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ei_matches_quadrature(mean in -3.0..3.0f64, std in 0.05..2.0f64, best in -3.0..3.0f64) {
        let ei = expected_improvement(PosteriorGaussian::new(mean, std), best);
        let oracle = ei_quadrature(mean, std, best);
        prop_assert!((ei - oracle).abs() <= 1e-9 + 1e-7 * oracle, "{ei} vs {oracle}");
    }

    #[test]
    fn ei_bounds_and_monotonicity(mean in -5.0..5.0f64, std in 0.0..3.0f64, best in -5.0..5.0f64, dm in 0.0..2.0f64) {
        let lo = expected_improvement(PosteriorGaussian::new(mean, std), best);
        let hi = expected_improvement(PosteriorGaussian::new(mean + dm, std), best);
        prop_assert!(lo >= (mean - best).max(0.0) - 1e-12);
        prop_assert!(hi >= lo - 1e-12);
    }

    #[test]
    fn pf_is_a_monotone_probability(mean in -50.0..50.0f64, std in 0.0..10.0f64, t in -50.0..50.0f64, dm in 0.0..5.0f64) {
        let a = probability_feasible(PosteriorGaussian::new(mean, std), t);
        let b = probability_feasible(PosteriorGaussian::new(mean + dm, std), t);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a + 1e-15);
    }

    #[test]
    fn cei_never_exceeds_ei(mk in -2.0..2.0f64, sk in 0.01..2.0f64, mv in 0.0..50.0f64, sv in 0.01..10.0f64, best in -2.0..2.0f64) {
        let gk = PosteriorGaussian::new(mk, sk);
        let cei = constrained_ei(gk, PosteriorGaussian::new(mv, sv), best, 25.0);
        prop_assert!(cei >= 0.0 && cei <= expected_improvement(gk, best) + 1e-15);
    }

    #[test]
    fn standardization_round_trips(raw in prop::collection::vec(-1e3..1e3f64, 2..20), probe in -1e4..1e4f64) {
        prop_assume!(raw.iter().any(|v| (v - raw[0]).abs() > 1e-3));
        for channel in [Channel::Objective, Channel::Constraint] {
            let s = Standardization::for_channel(channel, &raw).unwrap();
            prop_assert!((s.invert(s.apply(probe)) - probe).abs() <= 1e-9 * probe.abs().max(1.0));
        }
    }

    #[test]
    fn posterior_std_bounded_by_prior(points in design(), q in prop::collection::vec(0.0..1.0f64, 2), ls in 0.05..2.0f64) {
        let m = model(&points, Channel::Objective, ls);
        let p = m.posterior(&q);
        prop_assert!(p.std.is_finite() && p.std >= 0.0);
        prop_assert!(p.std <= 1.3f64.sqrt() + 1e-12);
    }

    #[test]
    fn qcei_is_seeded_and_nonnegative(points in design(), q in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 2), 1..4), seed in any::<u64>()) {
        let mk = model(&points, Channel::Objective, 0.3);
        let mv = model(&points, Channel::Constraint, 0.5);
        let xs: Vec<UnitPoint> = q.into_iter().map(|p| UnitPoint::new(p).unwrap()).collect();
        let a = qcei_mc(&mk, &mv, &xs, 0.2, 1.0, 128, seed).unwrap();
        let b = qcei_mc(&mk, &mv, &xs, 0.2, 1.0, 128, seed).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn proposals_round_trip_exactly(batch in prop::collection::vec(prop::collection::vec(0.0..=1.0f64, 3), 1..8), iteration in 0u32..50) {
        let space = ParameterSpace::unit_cube(3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (path, ids) = write_proposals(dir.path(), &space, &batch, iteration).unwrap();
        let back = read_proposals(&path, &space).unwrap();
        prop_assert_eq!(back.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>(), ids);
        for ((_, x), orig) in back.iter().zip(&batch) {
            prop_assert_eq!(x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), orig.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn results_round_trip_exactly(values in prop::collection::vec((-1e6..1e6f64, 0.0..1e3f64), 1..8)) {
        let rows: Vec<ResultRow> = values
            .iter()
            .enumerate()
            .map(|(j, &(k, v))| ResultRow { id: format!("iter2_{j}"), k, v })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_results(&path, &rows).unwrap();
        let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
        prop_assert_eq!(read_results(&path, &ids).unwrap(), rows);
    }

    #[test]
    fn derived_seeds_separate_streams(base in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(base, a), derive_seed(base, b));
        prop_assert_eq!(derive_seed(base, a), derive_seed(base, a));
    }
}
