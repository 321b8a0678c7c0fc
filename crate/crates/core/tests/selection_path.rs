//! Stepwise selection on simulated series.

mod common;

use common::sim::{daily, dataset};
use ggseason::design::{CoefficientSet, ModelStructure, Param, SelectionMode};
use ggseason::selection::{select_final, stepwise_select, FinalStrategy, SelectionOptions};
use std::time::Instant;

fn seasonal_truth() -> CoefficientSet {
    let st: ModelStructure = "mu=(2,-);sigma=(0,-);nu=(0,-)".parse().unwrap();
    CoefficientSet::new(st, vec![3.0, 1.0, 0.4, 0.3, -0.2, -1.2, 0.1]).unwrap()
}

fn check_path_invariants(path: &ggseason::selection::SelectionPath, mode: SelectionMode) {
    let limit = match mode {
        SelectionMode::PurelySeasonal => 6,
        SelectionMode::Dynamic => 12,
    };
    for w in path.steps.windows(2) {
        assert!(w[1].coef_total > w[0].coef_total);
        assert!(w[1].loglik >= w[0].loglik - 1e-9 * w[0].loglik.abs(), "{} -> {}", w[0].loglik, w[1].loglik);
    }
    assert!(path.steps.iter().all(|s| s.candidates <= limit));
    let min = path.steps.iter().map(|s| s.tic).fold(f64::INFINITY, f64::min);
    assert_eq!(path.steps[path.best_tic_index].tic, min);
}

#[test]
fn strongly_seasonal_location_enters_first() {
    let data = dataset("a", &seasonal_truth(), daily(30000.0, 3 * 365), 0.0, 21);
    let opts = SelectionOptions { patience: 3, ..Default::default() };
    let start = Instant::now();
    let path = stepwise_select(std::slice::from_ref(&data), &opts).unwrap();
    eprintln!("selection took {:?} over {} steps", start.elapsed(), path.steps.len());
    assert_eq!(path.steps[1].updated_param, Some(Param::Mu));
    check_path_invariants(&path, SelectionMode::PurelySeasonal);
    let best = &path.steps[path.best_tic_index];
    assert!(best.structure.shape(Param::Mu).seasonal >= 2, "{}", best.structure);
    assert!(select_final(&path, FinalStrategy::default()) <= path.best_tic_index);

    let again = stepwise_select(std::slice::from_ref(&data), &opts).unwrap();
    assert_eq!(path.steps, again.steps);
}

#[test]
fn patience_zero_stops_at_first_non_improvement() {
    let data = dataset("a", &seasonal_truth(), daily(30000.0, 2 * 365), 0.0, 5);
    let opts = SelectionOptions { patience: 0, mode: SelectionMode::Dynamic, ..Default::default() };
    let path = stepwise_select(std::slice::from_ref(&data), &opts).unwrap();
    check_path_invariants(&path, SelectionMode::Dynamic);
    let last = path.steps.len() - 1;
    assert!(path.stopped_early);
    assert!(path.steps[last].tic >= path.steps[last - 1].tic.min(path.steps[path.best_tic_index].tic));
    for i in 1..last {
        assert!(path.steps[i].tic < path.steps[i - 1].tic);
    }
}

#[test]
fn joint_selection_shares_structure() {
    let a = dataset("a", &seasonal_truth(), daily(30000.0, 2 * 365), 0.0, 8);
    let b = dataset("b", &seasonal_truth(), daily(30000.0, 2 * 365), 0.0, 9);
    let opts = SelectionOptions { patience: 2, max_steps: 4, ..Default::default() };
    let path = stepwise_select(&[a, b], &opts).unwrap();
    for (step, ms) in path.steps.iter().zip(&path.models) {
        assert_eq!(ms.len(), 2);
        assert!(ms.iter().all(|m| m.structure == step.structure));
        assert_eq!(step.coef_total, 2 * step.structure.total_coefs());
        let ll: f64 = ms.iter().map(|m| m.loglik).sum();
        assert!((ll - step.loglik).abs() < 1e-8 * ll.abs());
    }
    assert!(path.steps.len() <= 5);
}
