//! Independent reference implementations shared by the integration and acceptance tests.
#![allow(dead_code)]

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use sinkhorn_bridge::SampleSet;

/// Working precision of the reference arithmetic, in bits.
pub const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

pub struct Big {
    cc: Consts,
}

impl Big {
    pub fn new() -> Self {
        Self {
            cc: Consts::new().expect("constants cache"),
        }
    }

    pub fn of(&self, v: f64) -> BigFloat {
        BigFloat::from_f64(v, PREC)
    }

    pub fn exp(&mut self, v: &BigFloat) -> BigFloat {
        v.exp(PREC, RM, &mut self.cc)
    }

    pub fn ln(&mut self, v: &BigFloat) -> BigFloat {
        v.ln(PREC, RM, &mut self.cc)
    }

    pub fn to_f64(&mut self, v: &BigFloat) -> f64 {
        v.format(Radix::Dec, RM, &mut self.cc)
            .expect("decimal formatting")
            .parse()
            .expect("formatted value parses")
    }
}

fn add(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.add(b, PREC, RM)
}

fn mul(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.mul(b, PREC, RM)
}

fn div(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.div(b, PREC, RM)
}

/// Scaling-form Sinkhorn `u ← 1 / (K (b ⊙ v))`, `v ← 1 / (Kᵀ (a ⊙ u))` in 256-bit
/// arithmetic, starting from `v = 1`. Returns `(f, g, γ)` with `f = ε log u`,
/// `g = ε log v` and `γ_ij = u_i K_ij v_j`.
pub fn reference_sinkhorn(
    x: &SampleSet,
    y: &SampleSet,
    eps: f64,
    sweeps: usize,
) -> (Vec<f64>, Vec<f64>, Array2<f64>) {
    let mut big = Big::new();
    let (m, n) = (x.len(), y.len());
    let e = big.of(eps);
    let half = big.of(0.5);
    let mut k = vec![vec![big.of(0.0); n]; m];
    for i in 0..m {
        for j in 0..n {
            let mut c = big.of(0.0);
            for (p, q) in x.row(i).iter().zip(y.row(j)) {
                let d = big.of(*p).sub(&big.of(*q), PREC, RM);
                c = add(&c, &mul(&d, &d));
            }
            let arg = div(&mul(&half, &c), &e).neg();
            k[i][j] = big.exp(&arg);
        }
    }
    let a: Vec<BigFloat> = x.weights().iter().map(|w| big.of(*w)).collect();
    let b: Vec<BigFloat> = y.weights().iter().map(|w| big.of(*w)).collect();
    let one = big.of(1.0);
    let mut u = vec![one.clone(); m];
    let mut v = vec![one.clone(); n];
    for _ in 0..sweeps {
        for i in 0..m {
            let mut s = big.of(0.0);
            for j in 0..n {
                s = add(&s, &mul(&mul(&b[j], &k[i][j]), &v[j]));
            }
            u[i] = div(&one, &s);
        }
        for j in 0..n {
            let mut s = big.of(0.0);
            for i in 0..m {
                s = add(&s, &mul(&mul(&a[i], &k[i][j]), &u[i]));
            }
            v[j] = div(&one, &s);
        }
    }
    let f = u.iter().map(|ui| { let l = big.ln(ui); big.to_f64(&mul(&e, &l)) }).collect();
    let g = v.iter().map(|vj| { let l = big.ln(vj); big.to_f64(&mul(&e, &l)) }).collect();
    let plan = Array2::from_shape_fn((m, n), |(i, j)| big.to_f64(&mul(&mul(&u[i], &k[i][j]), &v[j])));
    (f, g, plan)
}

/// Naive drift `(Σ_j w_j Y_j − z) / (1 − t)` with unnormalized weights
/// `exp((g_j − ‖z − Y_j‖²/(2(1 − t)))/ε)` evaluated in 256-bit arithmetic.
pub fn reference_drift(atoms: &[Vec<f64>], potential: &[f64], eps: f64, t: f64, z: &[f64]) -> Vec<f64> {
    let mut big = Big::new();
    let d = z.len();
    let h = big.of(1.0).sub(&big.of(t), PREC, RM);
    let two_h = mul(&big.of(2.0), &h);
    let e = big.of(eps);
    let mut total = big.of(0.0);
    let mut acc = vec![big.of(0.0); d];
    for (y, g) in atoms.iter().zip(potential) {
        let mut sq = big.of(0.0);
        for k in 0..d {
            let diff = big.of(z[k]).sub(&big.of(y[k]), PREC, RM);
            sq = add(&sq, &mul(&diff, &diff));
        }
        let logit = div(&big.of(*g).sub(&div(&sq, &two_h), PREC, RM), &e);
        let w = big.exp(&logit);
        total = add(&total, &w);
        for k in 0..d {
            acc[k] = add(&acc[k], &mul(&w, &big.of(y[k])));
        }
    }
    (0..d)
        .map(|k| {
            let bary = div(&acc[k], &total);
            let dr = div(&bary.sub(&big.of(z[k]), PREC, RM), &h);
            big.to_f64(&dr)
        })
        .collect()
}

/// `m × d` points uniform in `[lo, hi]^d`.
pub fn uniform_points(m: usize, d: usize, lo: f64, hi: f64, seed: u64) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SampleSet::new(Array2::from_shape_simple_fn((m, d), || rng.random_range(lo..hi))).unwrap()
}

/// Points with random (strictly positive) weights.
pub fn weighted_points(m: usize, d: usize, seed: u64) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = Array2::from_shape_simple_fn((m, d), || rng.random_range(-1.0..1.0));
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    SampleSet::with_weights(pts, raw.iter().map(|w| w / total).collect(), None).unwrap()
}

/// Largest singular value of `j` by power iteration on `jᵀ j`.
pub fn spectral_norm(j: &Array2<f64>, iters: usize) -> f64 {
    let jtj = j.t().dot(j);
    let mut v = ndarray::Array1::from_elem(j.ncols(), 1.0);
    v[0] += 0.1;
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = jtj.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w) / v.dot(&v);
        v = w / norm;
    }
    lambda.max(0.0).sqrt()
}

/// Central-difference Jacobian of `f` at `z`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, z: &[f64], h: f64) -> Array2<f64> {
    let d = z.len();
    let mut jac = Array2::zeros((d, d));
    for c in 0..d {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[c] += h;
        zm[c] -= h;
        let (fp, fm) = (f(&zp), f(&zm));
        for r in 0..d {
            jac[[r, c]] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

/// 1-D Gaussian grid on `[lo, hi]` with weights `∝ exp(−(x − mean)²/(2 var))`.
pub fn gaussian_grid(points: usize, lo: f64, hi: f64, mean: f64, var: f64) -> SampleSet {
    let xs: Vec<f64> = (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect();
    let raw: Vec<f64> = xs.iter().map(|x| (-(x - mean) * (x - mean) / (2.0 * var)).exp()).collect();
    let total: f64 = raw.iter().sum();
    let pts = Array2::from_shape_vec((points, 1), xs).unwrap();
    SampleSet::with_weights(pts, raw.iter().map(|w| w / total).collect(), None).unwrap()
}

/// Composite Simpson rule on `[lo, hi]` with `intervals` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, intervals: usize) -> f64 {
    assert!(intervals % 2 == 0);
    let h = (hi - lo) / intervals as f64;
    let mut s = f(lo) + f(hi);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + h * k as f64);
    }
    s * h / 3.0
}

/// `log-log` least-squares slope of `(x, y)` pairs.
pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let l: Vec<(f64, f64)> = pts.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = l.len() as f64;
    let mx = l.iter().map(|p| p.0).sum::<f64>() / n;
    let my = l.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = l.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = l.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
