//! Slow reference implementations used as test oracles.
#![allow(dead_code, clippy::needless_range_loop)]

use curvlab::sample::gaussian_tensor;
use curvlab::{ConeKind, CurvatureTensor};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense `n⁴` array of components, indexed `((i·n + j)·n + k)·n + l`.
pub struct Dense {
    pub n: usize,
    pub v: Vec<f64>,
}

impl Dense {
    pub fn of(r: &CurvatureTensor) -> Self {
        let n = r.dim();
        let mut v = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        v[((i * n + j) * n + k) * n + l] = r.component(i, j, k, l);
                    }
                }
            }
        }
        Self { n, v }
    }

    pub fn at(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.n;
        self.v[((i * n + j) * n + k) * n + l]
    }

    /// `R(a, b, c, d)` for arbitrary vectors.
    pub fn eval(&self, a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        s += self.at(i, j, k, l) * a[i] * b[j] * c[k] * d[l];
                    }
                }
            }
        }
        s
    }
}

/// `Q(R)` by the defining quadruple sums.
pub fn slow_q(r: &CurvatureTensor) -> Dense {
    let d = Dense::of(r);
    let n = d.n;
    let mut v = vec![0.0; n * n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut s = 0.0;
                    for p in 0..n {
                        for q in 0..n {
                            s += d.at(i, j, p, q) * d.at(k, l, p, q);
                            s += 2.0
                                * (d.at(i, p, k, q) * d.at(j, p, l, q)
                                    - d.at(i, p, l, q) * d.at(j, p, k, q));
                        }
                    }
                    v[((i * n + j) * n + k) * n + l] = s;
                }
            }
        }
    }
    Dense { n, v }
}

/// `Ric_ik = Σ_j R_ijkj`.
pub fn slow_ricci(d: &Dense) -> DMatrix<f64> {
    let n = d.n;
    DMatrix::from_fn(n, n, |i, k| (0..n).map(|j| d.at(i, j, k, j)).sum())
}

pub fn slow_scal(d: &Dense) -> f64 {
    slow_ricci(d).trace()
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    a.v.iter()
        .zip(&b.v)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &Dense) -> f64 {
    a.v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Orthonormal `n × 4` frame from a Gaussian matrix by Householder QR.
pub fn random_frame(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, 4, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    g.qr().q()
}

pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    g.qr().q()
}

fn col(e: &DMatrix<f64>, a: usize) -> Vec<f64> {
    e.column(a).iter().copied().collect()
}

/// Frame functional evaluated from dense components.
pub fn functional(d: &Dense, e: &DMatrix<f64>, lambda: f64, mu: f64) -> f64 {
    let (e1, e2, e3, e4) = (col(e, 0), col(e, 1), col(e, 2), col(e, 3));
    let r1313 = d.eval(&e1, &e3, &e1, &e3);
    let r1414 = d.eval(&e1, &e4, &e1, &e4);
    let r2323 = d.eval(&e2, &e3, &e2, &e3);
    let r2424 = d.eval(&e2, &e4, &e2, &e4);
    let r1234 = d.eval(&e1, &e2, &e3, &e4);
    r1313 + lambda * lambda * r1414 + mu * mu * r2323 + lambda * lambda * mu * mu * r2424
        - 2.0 * lambda * mu * r1234
}

/// Minimum of the functional on a `(steps+1)²` grid of admissible `(λ, μ)`.
pub fn grid_min(d: &Dense, e: &DMatrix<f64>, kind: ConeKind, steps: usize) -> f64 {
    let ticks: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
    match kind {
        ConeKind::Pic => functional(d, e, 1.0, 1.0),
        ConeKind::Pic1 => ticks
            .iter()
            .map(|&l| functional(d, e, l, 1.0))
            .fold(f64::INFINITY, f64::min),
        ConeKind::Pic2 => ticks
            .iter()
            .flat_map(|&l| ticks.iter().map(move |&m| (l, m)))
            .map(|(l, m)| functional(d, e, l, m))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Upper bound on the cone margin: best value over `frames` random frames.
pub fn random_frame_margin(r: &CurvatureTensor, kind: ConeKind, frames: usize, seed: u64) -> f64 {
    let d = Dense::of(r);
    let mut g = rng(seed);
    (0..frames)
        .map(|_| grid_min(&d, &random_frame(r.dim(), &mut g), kind, 20))
        .fold(f64::INFINITY, f64::min)
}

pub fn gaussian(n: usize, seed: u64) -> CurvatureTensor {
    gaussian_tensor(n, &mut rng(seed))
}
