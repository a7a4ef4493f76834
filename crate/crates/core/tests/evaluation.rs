use nalgebra::DVector;
use proptest::prelude::*;

use koopman_ib::dynamics::{lorenz63_ensemble, Trajectory};
use koopman_ib::evaluation::{evaluate, nrmse_with_scale, state_kld, truth_scale, EvalConfig, EvalReport};
use koopman_ib::Result;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kld_is_nonnegative(p in prop::collection::vec(-5.0..5.0f64, 20..80), q in prop::collection::vec(-5.0..5.0f64, 20..80)) {
        let wrap = |v: &[f64]| v.iter().map(|x| DVector::from_vec(vec![*x])).collect::<Vec<_>>();
        let d = state_kld(&wrap(&p), &wrap(&q), 16).unwrap();
        prop_assert!(d >= -1e-12 && d.is_finite());
    }
}

fn persistence(x0: &DVector<f64>, steps: usize, dt: f64) -> Result<Trajectory<f64>> {
    Trajectory::new(vec![x0.clone(); steps + 1], dt, "persistence")
}

#[test]
fn persistence_error_grows_with_horizon() {
    let trajs = lorenz63_ensemble::<f64>(4, 600, 0.01, 21).unwrap();
    let scale = truth_scale(&trajs).unwrap();
    let (mut pairs, mut violations) = (0, 0);
    for t in &trajs {
        for start in (0..500).step_by(25) {
            let truth = Trajectory::new(t.states()[start..start + 81].to_vec(), 0.01, "lorenz63").unwrap();
            let pred = persistence(&truth.states()[0], 80, 0.01).unwrap();
            let errs: Vec<f64> = [5, 20, 80].iter().map(|&h| nrmse_with_scale(&pred, &truth, h, &scale).unwrap()).collect();
            for w in errs.windows(2) {
                pairs += 1;
                violations += usize::from(w[1] < w[0]);
            }
        }
    }
    assert!(violations * 10 <= pairs, "{violations}/{pairs}");
}

#[test]
fn report_round_trips_through_json() {
    let tests = lorenz63_ensemble::<f64>(1, 1100, 0.01, 5).unwrap();
    let cfg = EvalConfig { horizons: vec![5, 20], ..Default::default() };
    let report = evaluate(&persistence, &tests, &cfg).unwrap();
    assert!(report.nrmse[&5].mean < report.nrmse[&20].mean);
    assert!(report.kld > 0.0 && report.sde > 0.0);
    let back = EvalReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
}
