mod common;

use ndarray::array;
use sinkhorn_bridge::data::{generate, DatasetName, DatasetSpec};
use sinkhorn_bridge::drift::{follmer_model, from_potentials, BridgeModel, Direction};
use sinkhorn_bridge::metrics::energy_distance;
use sinkhorn_bridge::sde::{bridge_mixture_sample, endpoints, simulate, SimConfig};
use sinkhorn_bridge::sinkhorn::{fit, PlanView, SolverConfig};
use sinkhorn_bridge::SampleSet;

fn toy_model(n: usize) -> (BridgeModel, SampleSet) {
    let source = generate(&DatasetSpec::new(DatasetName::Moons, n, 1)).unwrap();
    let target = generate(&DatasetSpec::new(DatasetName::Circles, n, 2)).unwrap();
    let pair = fit(&source, &target, &SolverConfig::new(0.1)).unwrap();
    (from_potentials(&pair, &source, &target, Direction::Forward).unwrap(), source)
}

#[test]
fn same_seed_gives_identical_batches_at_any_thread_count() {
    let (model, init) = toy_model(100);
    let cfg = SimConfig::new(0.9, 30, 0.1, 42);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate(&model, &init, &cfg).unwrap())
    };
    let a = run(1);
    assert_eq!(a.paths, run(1).paths);
    assert_eq!(a.paths, run(4).paths);
    assert_eq!(a.finals, run(3).finals);
}

#[test]
fn paths_do_not_depend_on_batch_size() {
    let (model, init) = toy_model(60);
    let cfg = SimConfig::new(0.8, 20, 0.1, 5);
    let full = simulate(&model, &init, &cfg).unwrap();
    let head = SampleSet::new(init.points().slice(ndarray::s![..7, ..]).to_owned()).unwrap();
    let part = simulate(&model, &head, &cfg).unwrap();
    assert_eq!(part.finals, full.finals.slice(ndarray::s![..7, ..]));
}

#[test]
fn endpoint_only_mode_matches_full_paths() {
    let (model, init) = toy_model(50);
    let cfg = SimConfig::new(0.9, 25, 0.1, 8);
    let full = simulate(&model, &init, &cfg).unwrap();
    let lean = simulate(&model, &init, &cfg.clone().keep_paths(false)).unwrap();
    assert!(lean.paths.is_none());
    assert_eq!(full.finals, lean.finals);
}

#[test]
fn time_grid_is_well_formed() {
    let model = follmer_model(&SampleSet::new(array![[1.0]]).unwrap(), 1.0).unwrap();
    let b = simulate(&model, &SampleSet::new(array![[0.0]]).unwrap(), &SimConfig::new(0.7, 13, 1.0, 0)).unwrap();
    assert_eq!(b.times.len(), 14);
    assert_eq!(b.times[0], 0.0);
    assert!((b.times[13] - 0.7).abs() <= 1e-12);
    assert!(b.times.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn zero_drift_increments_have_the_noise_variance() {
    // One atom at the start point: the first step's drift is exactly zero.
    let z0 = array![[0.4, -1.2]];
    let model = follmer_model(&SampleSet::new(z0.clone()).unwrap(), 0.5).unwrap();
    let init = SampleSet::new(z0.clone()).unwrap().cycled(100_000).unwrap();
    let cfg = SimConfig::new(0.1, 1, 0.5, 77).keep_paths(false);
    let ends = simulate(&model, &init, &cfg).unwrap().finals;
    let var = cfg.step_size() * cfg.eps;
    for k in 0..2 {
        let inc = ends.column(k).mapv(|v| v - z0[[0, k]]);
        let mean = inc.mean().unwrap();
        let v = inc.mapv(|x| (x - mean) * (x - mean)).mean().unwrap();
        assert!((v / var - 1.0).abs() <= 0.02, "coordinate {k}: variance {v} vs {var}");
    }
}

#[test]
fn single_atom_ode_lands_on_the_straight_line() {
    let y = [2.0, -1.0];
    let model = follmer_model(&SampleSet::new(array![[2.0, -1.0]]).unwrap(), 1.0).unwrap();
    let init = common::uniform_points(20, 2, -1.0, 1.0, 3);
    for steps in [1, 10, 1000] {
        let cfg = SimConfig::new(0.95, steps, 1.0, 0).zero_noise(true);
        let ends = endpoints(&simulate(&model, &init, &cfg).unwrap()).unwrap();
        for i in 0..init.len() {
            for k in 0..2 {
                let exact = 0.05 * init.row(i)[k] + 0.95 * y[k];
                assert!((ends.row(i)[k] - exact).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn one_by_one_mixture_is_gaussian_around_the_midpoint() {
    let x = SampleSet::new(array![[0.0, 2.0]]).unwrap();
    let y = SampleSet::new(array![[4.0, -2.0]]).unwrap();
    let eps = 0.6;
    let pair = fit(&x, &y, &SolverConfig::new(eps)).unwrap();
    let view = PlanView::new(&x, &y, &pair).unwrap();
    let n = 100_000;
    let s = bridge_mixture_sample(&view, 0.5, n, 12).unwrap().into_points();
    let var = eps / 4.0;
    for (k, mid) in [2.0, 0.0].into_iter().enumerate() {
        let col = s.column(k);
        let mean = col.mean().unwrap();
        let v = col.mapv(|x| (x - mean) * (x - mean)).mean().unwrap();
        assert!((mean - mid).abs() <= 3.0 * (var / n as f64).sqrt());
        assert!((v - var).abs() <= 3.0 * var * (2.0 / n as f64).sqrt());
    }
}

#[test]
fn toy_states_stay_bounded() {
    let pairs = [
        (DatasetName::Gaussian, DatasetName::Moons),
        (DatasetName::Moons, DatasetName::Circles),
        (DatasetName::Gaussian, DatasetName::Checkerboard),
        (DatasetName::Circles, DatasetName::SCurve),
    ];
    for (k, (src, tgt)) in pairs.into_iter().enumerate() {
        let source = generate(&DatasetSpec::new(src, 300, 10 + k as u64)).unwrap();
        let target = generate(&DatasetSpec::new(tgt, 300, 20 + k as u64)).unwrap();
        let pair = fit(&source, &target, &SolverConfig::new(0.1)).unwrap();
        let model = from_potentials(&pair, &source, &target, Direction::Forward).unwrap();
        let init = generate(&DatasetSpec::new(src, 300, 30 + k as u64)).unwrap();
        let batch = simulate(&model, &init, &SimConfig::new(0.99, 50, 0.1, 4)).unwrap();
        let radius = source.radius().max(target.radius());
        let worst = batch
            .paths
            .as_ref()
            .unwrap()
            .lanes(ndarray::Axis(2))
            .into_iter()
            .map(|v| v.dot(&v).sqrt())
            .fold(0.0, f64::max);
        assert!(worst <= 10.0 * radius, "{src} -> {tgt}: {worst} vs radius {radius}");
    }
}

#[test]
fn fitted_bridge_moves_mass_towards_target() {
    let source = generate(&DatasetSpec::new(DatasetName::Gaussian, 400, 1)).unwrap();
    let target = generate(&DatasetSpec::new(DatasetName::Moons, 400, 2)).unwrap();
    let pair = fit(&source, &target, &SolverConfig::new(0.1)).unwrap();
    let model = from_potentials(&pair, &source, &target, Direction::Forward).unwrap();
    let init = generate(&DatasetSpec::new(DatasetName::Gaussian, 400, 3)).unwrap();
    let ends = endpoints(&simulate(&model, &init, &SimConfig::new(0.9, 50, 0.1, 4)).unwrap()).unwrap();
    let fresh = generate(&DatasetSpec::new(DatasetName::Moons, 400, 5)).unwrap();
    assert!(energy_distance(&ends, &fresh, 0).unwrap() < energy_distance(&init, &fresh, 0).unwrap());
}
