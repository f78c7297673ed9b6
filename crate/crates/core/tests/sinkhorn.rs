mod common;

use ndarray::array;
use sinkhorn_bridge::sinkhorn::{self, cost, fit, plan_density, PlanView, Sinkhorn, SolverConfig};
use sinkhorn_bridge::SampleSet;

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn potentials_match_extended_precision_reference() {
    for seed in 0..4 {
        let x = common::weighted_points(8, 2, 100 + seed);
        let y = common::weighted_points(8, 2, 200 + seed);
        let pair = fit(&x, &y, &SolverConfig::new(0.5).tol(1e-9)).unwrap();
        assert!(pair.converged);
        let (f, g, _) = common::reference_sinkhorn(&x, &y, 0.5, pair.iterations);
        assert!(sup_gap(&pair.f, &f) <= 1e-8, "seed {seed}: f gap {}", sup_gap(&pair.f, &f));
        assert!(sup_gap(&pair.g, &g) <= 1e-8, "seed {seed}: g gap {}", sup_gap(&pair.g, &g));
    }
}

#[test]
fn rectangular_problem_matches_reference() {
    let x = common::weighted_points(5, 3, 7);
    let y = common::weighted_points(9, 3, 8);
    let pair = fit(&x, &y, &SolverConfig::new(0.2).tol(1e-10)).unwrap();
    let (f, g, plan) = common::reference_sinkhorn(&x, &y, 0.2, pair.iterations);
    assert!(sup_gap(&pair.f, &f) <= 1e-8);
    assert!(sup_gap(&pair.g, &g) <= 1e-8);
    let view = PlanView::new(&x, &y, &pair).unwrap();
    for i in 0..5 {
        for j in 0..9 {
            assert!((view.density(i, j).unwrap() - plan[[i, j]]).abs() <= 1e-8 * plan[[i, j]].max(1.0));
        }
    }
}

#[test]
fn three_by_three_plan_matches_reference() {
    let x = SampleSet::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.5], vec![-0.5, 2.0]]).unwrap();
    let y = SampleSet::from_rows(&[vec![0.3, -1.0], vec![2.0, 2.0], vec![-1.0, 0.0]]).unwrap();
    let pair = fit(&x, &y, &SolverConfig::new(0.7).tol(1e-12)).unwrap();
    let (_, _, plan) = common::reference_sinkhorn(&x, &y, 0.7, pair.iterations);
    let view = PlanView::new(&x, &y, &pair).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((plan_density(&view, i, j).unwrap() - plan[[i, j]]).abs() <= 1e-8);
        }
    }
}

#[test]
fn dual_meets_primal_at_convergence() {
    for (seed, eps) in [(1, 0.1), (2, 0.5), (3, 2.0)] {
        let x = common::weighted_points(12, 2, seed);
        let y = common::weighted_points(10, 2, seed + 50);
        let pair = fit(&x, &y, &SolverConfig::new(eps).tol(1e-12).max_iter(100_000)).unwrap();
        // Primal value Σ π c + ε KL(π ‖ a⊗b) from the reference plan.
        let (_, _, gamma) = common::reference_sinkhorn(&x, &y, eps, pair.iterations);
        let mut primal = 0.0;
        for i in 0..x.len() {
            for j in 0..y.len() {
                let c = cost(x.point(i), y.point(j)).unwrap();
                let mass = x.weights()[i] * y.weights()[j] * gamma[[i, j]];
                primal += mass * (c + eps * gamma[[i, j]].ln());
            }
        }
        let dual = sinkhorn::dual_objective(&x, &y, &pair).unwrap();
        assert!((dual - primal).abs() <= 1e-8, "eps {eps}: dual {dual} primal {primal}");
        let view = PlanView::new(&x, &y, &pair).unwrap();
        assert!((view.primal_objective() - primal).abs() <= 1e-8);
    }
}

#[test]
fn perturbing_f_raises_marginal_error() {
    let x = common::uniform_points(6, 2, -1.0, 1.0, 5);
    let y = common::uniform_points(7, 2, -1.0, 1.0, 6);
    let eps = 0.3;
    let pair = fit(&x, &y, &SolverConfig::new(eps).tol(1e-10)).unwrap();
    let base = sinkhorn::marginal_error(&x, &y, &pair).unwrap();
    let mut bumped = pair.clone();
    bumped.f[2] += eps;
    let after = sinkhorn::marginal_error(&x, &y, &bumped).unwrap();

    // Direct recomputation of both L1 sums for the perturbed pair.
    let mut rows = vec![0.0; x.len()];
    let mut cols = vec![0.0; y.len()];
    for i in 0..x.len() {
        for j in 0..y.len() {
            let c = cost(x.point(i), y.point(j)).unwrap();
            let mass = x.weights()[i] * y.weights()[j] * ((bumped.f[i] + bumped.g[j] - c) / eps).exp();
            rows[i] += mass;
            cols[j] += mass;
        }
    }
    let direct: f64 = rows.iter().zip(x.weights()).map(|(r, a)| (r - a).abs()).sum::<f64>()
        + cols.iter().zip(y.weights()).map(|(c, b)| (c - b).abs()).sum::<f64>();
    assert!(after > base);
    assert!((after - direct).abs() <= 1e-12);
}

#[test]
fn converged_row_sums_are_within_tolerance() {
    let x = common::uniform_points(30, 2, 0.0, 1.0, 11);
    let y = common::uniform_points(40, 2, 0.0, 1.0, 12);
    let cfg = SolverConfig::new(0.05);
    let pair = fit(&x, &y, &cfg).unwrap();
    assert!(pair.converged && pair.marginal_error <= cfg.tol);
    let view = PlanView::new(&x, &y, &pair).unwrap();
    for i in 0..x.len() {
        let s: f64 = (0..y.len()).map(|j| y.weights()[j] * view.density(i, j).unwrap()).sum();
        assert!((s - 1.0).abs() <= cfg.tol / x.weights()[i], "row {i} sums to {s}");
    }
}

#[test]
fn sweeps_never_lower_the_dual() {
    for seed in 0..10 {
        let x = common::weighted_points(20, 2, 300 + seed);
        let y = common::weighted_points(15, 2, 400 + seed);
        let mut s = Sinkhorn::new(&x, &y, SolverConfig::new(0.05)).unwrap();
        let mut prev = s.dual_objective();
        for _ in 0..200 {
            s.sweep().unwrap();
            let cur = s.dual_objective();
            assert!(cur >= prev - 1e-12, "seed {seed} sweep {}: {prev} -> {cur}", s.iterations());
            prev = cur;
        }
    }
}

#[test]
fn single_pair_dual_is_the_cost() {
    let x = SampleSet::new(array![[0.5, -1.0]]).unwrap();
    let y = SampleSet::new(array![[2.0, 1.0]]).unwrap();
    let pair = fit(&x, &y, &SolverConfig::new(0.4)).unwrap();
    let c = cost(x.point(0), y.point(0)).unwrap();
    assert!((sinkhorn::dual_objective(&x, &y, &pair).unwrap() - c).abs() <= 1e-12);
    let view = PlanView::new(&x, &y, &pair).unwrap();
    assert!((view.density(0, 0).unwrap() - 1.0).abs() <= 1e-12);
}

#[test]
fn potentials_serialize_with_the_documented_keys() {
    let x = common::uniform_points(3, 2, 0.0, 1.0, 1);
    let pair = fit(&x, &x, &SolverConfig::new(1.0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    pair.save(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["converged", "eps", "f", "g", "iterations", "marginal_error"]);
    assert_eq!(sinkhorn_bridge::PotentialPair::load(&path).unwrap(), pair);
}
