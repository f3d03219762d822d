//! Multi-start minimization of a frame functional over orthonormal four-frames.
//!
//! Each restart runs Riemannian gradient descent on the Stiefel manifold
//! `V₄(ℝⁿ)` with a Barzilai–Borwein step, Armijo backtracking and a QR
//! retraction. The inner `(λ, μ)` minimization is exact, so the descent sees
//! the envelope `E ↦ min_{λ,μ} f(E, λ, μ)` and uses the gradient at the
//! minimizing parameters. For PIC1 and PIC2 every other restart starts with
//! a pass at fixed interior `(λ, μ)`, since at `λ = 0` or `μ = 0` the
//! functional does not see `e₄` or `e₂`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use rand::Rng;

use crate::frame::{
    effective_params, min_over_lambda_mu, orthonormalize, random_stiefel, ConeKind, FrameComponents,
};
use crate::rng::rng_for;
use crate::tensor::{pair_count, pair_index, CurvatureTensor};

/// Knobs for a frame search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    /// Random starting frames.
    pub restarts: usize,
    /// Descent iterations per restart.
    pub max_iters: usize,
    /// Stop once the Riemannian gradient norm falls below `grad_tol · ‖R‖`.
    pub grad_tol: f64,
    pub seed: u64,
    /// Membership tolerance; `None` means `1e-7 · (1 + |scal|)`.
    pub tolerance: Option<f64>,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            restarts: 64,
            max_iters: 400,
            grad_tol: 1e-6,
            seed: 0,
            tolerance: None,
        }
    }
}

impl SearchParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = Some(tolerance);
        self
    }

    /// The tolerance applied to a tensor with scalar curvature `scal`.
    pub fn tolerance_for(&self, scal: f64) -> f64 {
        self.tolerance.unwrap_or_else(|| default_tolerance(scal))
    }
}

pub fn default_tolerance(scal: f64) -> f64 {
    1e-7 * (1.0 + scal.abs())
}

/// One converged (or exhausted) restart.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMin {
    pub value: f64,
    pub vectors: DMatrix<f64>,
    pub lambda: f64,
    pub mu: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Restarts in order: warm starts first, then random ones.
    pub locals: Vec<LocalMin>,
    /// Index into `locals` of the lowest value (earliest on ties).
    pub best: usize,
}

impl SearchOutcome {
    pub fn best(&self) -> &LocalMin {
        &self.locals[self.best]
    }

    pub fn converged(&self) -> usize {
        self.locals.iter().filter(|l| l.converged).count()
    }
}

/// Functional and gradient evaluation for a fixed tensor.
pub(crate) struct Evaluator<'a> {
    n: usize,
    np: usize,
    m: &'a DMatrix<f64>,
    pairs: Vec<(usize, usize)>,
    scale: f64,
}

/// Scratch buffers reused across evaluations.
struct Work {
    w: Vec<[f64; 6]>,
    u: Vec<[f64; 6]>,
}

// Wedge slots: 13, 14, 23, 24, 12, 34 (zero-based column pairs).
const SLOTS: [(usize, usize); 6] = [(0, 2), (0, 3), (1, 2), (1, 3), (0, 1), (2, 3)];

impl<'a> Evaluator<'a> {
    pub(crate) fn new(r: &'a CurvatureTensor) -> Self {
        let n = r.dim();
        let np = pair_count(n);
        let mut pairs = Vec::with_capacity(np);
        for i in 0..n {
            for j in i + 1..n {
                debug_assert_eq!(pair_index(n, i, j), pairs.len());
                pairs.push((i, j));
            }
        }
        let m = r.pair_matrix();
        Self {
            n,
            np,
            m,
            pairs,
            scale: m.norm(),
        }
    }

    fn work(&self) -> Work {
        Work {
            w: vec![[0.0; 6]; self.np],
            u: vec![[0.0; 6]; self.np],
        }
    }

    fn components(&self, e: &[f64], wk: &mut Work) -> FrameComponents {
        let n = self.n;
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            let w = &mut wk.w[p];
            for (s, &(a, b)) in SLOTS.iter().enumerate() {
                let (x, y) = (&e[a * n..(a + 1) * n], &e[b * n..(b + 1) * n]);
                w[s] = x[i] * y[j] - x[j] * y[i];
            }
        }
        // u = M w for all six wedges in one pass; M is symmetric, so column q is row q.
        let mut out = [0.0; 5];
        for q in 0..self.np {
            let col = self.m.column(q);
            let mut acc = [0.0; 6];
            for (p, w) in wk.w.iter().enumerate() {
                let c = col[p];
                for s in 0..6 {
                    acc[s] += c * w[s];
                }
            }
            wk.u[q] = acc;
            let w = &wk.w[q];
            for s in 0..4 {
                out[s] += w[s] * acc[s];
            }
            out[4] += w[4] * acc[5];
        }
        FrameComponents {
            r1313: out[0],
            r1414: out[1],
            r2323: out[2],
            r2424: out[3],
            r1234: out[4],
        }
    }

    /// `out += c · U(u) y`, where `U(u)` is the skew matrix with entries `u` above the diagonal.
    fn add_skew_apply(&self, u: &[[f64; 6]], slot: usize, y: &[f64], c: f64, out: &mut [f64]) {
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            let v = c * u[p][slot];
            out[i] += v * y[j];
            out[j] -= v * y[i];
        }
    }

    /// Value at the optimal `(λ, μ)` (or at `fixed`) and, when asked, the Euclidean gradient in `E`.
    fn eval(
        &self,
        e: &[f64],
        kind: ConeKind,
        fixed: Option<(f64, f64)>,
        wk: &mut Work,
        grad: Option<&mut [f64]>,
    ) -> (f64, f64, f64) {
        let c = self.components(e, wk);
        let (v, l, m) = match fixed {
            Some((l, m)) => {
                let (l, m) = effective_params(kind, l, m);
                (c.biquadratic(l, m), l, m)
            }
            None => min_over_lambda_mu(&c, kind),
        };
        if let Some(g) = grad {
            let n = self.n;
            g.iter_mut().for_each(|x| *x = 0.0);
            let coeff = [1.0, l * l, m * m, l * l * m * m];
            for s in 0..4 {
                let k = coeff[s];
                if k == 0.0 {
                    continue;
                }
                let (a, b) = SLOTS[s];
                let (ga, gb) = split_cols(g, n, a, b);
                self.add_skew_apply(&wk.u, s, &e[b * n..(b + 1) * n], 2.0 * k, ga);
                self.add_skew_apply(&wk.u, s, &e[a * n..(a + 1) * n], -2.0 * k, gb);
            }
            let kappa = -2.0 * l * m;
            if kappa != 0.0 {
                // Cross term w12ᵀ M w34: u[5] = M w34, u[4] = M w12.
                let (g0, g1) = split_cols(g, n, 0, 1);
                self.add_skew_apply(&wk.u, 5, &e[n..2 * n], kappa, g0);
                self.add_skew_apply(&wk.u, 5, &e[0..n], -kappa, g1);
                let (g2, g3) = split_cols(g, n, 2, 3);
                self.add_skew_apply(&wk.u, 4, &e[3 * n..4 * n], kappa, g2);
                self.add_skew_apply(&wk.u, 4, &e[2 * n..3 * n], -kappa, g3);
            }
        }
        (v, l, m)
    }
}

fn split_cols(g: &mut [f64], n: usize, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a < b);
    let (lo, hi) = g.split_at_mut(b * n);
    (&mut lo[a * n..(a + 1) * n], &mut hi[..n])
}

/// Projects `g` onto the tangent space at `e`: `g − E sym(Eᵀg)`.
fn project_tangent(e: &[f64], g: &mut [f64], n: usize) {
    let mut s = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let ea = &e[a * n..(a + 1) * n];
            let gb = &g[b * n..(b + 1) * n];
            s[a][b] = ea.iter().zip(gb).map(|(x, y)| x * y).sum();
        }
    }
    let mut sym = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            sym[a][b] = 0.5 * (s[a][b] + s[b][a]);
        }
    }
    for b in 0..4 {
        for a in 0..4 {
            let k = sym[a][b];
            for i in 0..n {
                g[b * n + i] -= e[a * n + i] * k;
            }
        }
    }
}

/// QR retraction in place: modified Gram–Schmidt, applied twice.
fn retract(x: &mut [f64], n: usize) {
    for _ in 0..2 {
        for a in 0..4 {
            let (done, rest) = x.split_at_mut(a * n);
            let col = &mut rest[..n];
            for b in 0..a {
                let prev = &done[b * n..(b + 1) * n];
                let d: f64 = col.iter().zip(prev).map(|(u, v)| u * v).sum();
                col.iter_mut().zip(prev).for_each(|(u, v)| *u -= d * v);
            }
            let norm = norm2(col).sqrt();
            col.iter_mut().for_each(|u| *u /= norm);
        }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn descend(
    ev: &Evaluator<'_>,
    start: &DMatrix<f64>,
    kind: ConeKind,
    fixed: Option<(f64, f64)>,
    params: &SearchParams,
) -> LocalMin {
    let n = ev.n;
    let mut wk = ev.work();
    let mut e = start.as_slice().to_vec();
    let mut g = vec![0.0; 4 * n];
    let (mut f, mut l, mut m) = ev.eval(&e, kind, fixed, &mut wk, Some(&mut g));
    project_tangent(&e, &mut g, n);
    let target = params.grad_tol * ev.scale;
    let mut step = 1.0 / ev.scale;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; 4 * n];
    let mut g_new = vec![0.0; 4 * n];
    while iterations < params.max_iters {
        let gg = norm2(&g);
        if gg.sqrt() <= target {
            converged = true;
            break;
        }
        iterations += 1;
        let mut t = step;
        let mut accepted = None;
        for _ in 0..40 {
            for i in 0..4 * n {
                trial[i] = e[i] - t * g[i];
            }
            retract(&mut trial, n);
            let (fc, lc, mc) = ev.eval(&trial, kind, fixed, &mut wk, None);
            if fc <= f - 1e-4 * t * gg {
                accepted = Some((trial.clone(), fc, lc, mc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc, lc, mc)) = accepted else {
            // No descent left at working precision.
            converged = gg.sqrt() <= 1e3 * target;
            break;
        };
        ev.eval(&cand, kind, fixed, &mut wk, Some(&mut g_new));
        project_tangent(&cand, &mut g_new, n);
        let mut sy = 0.0;
        let mut ss = 0.0;
        for i in 0..4 * n {
            let s = cand[i] - e[i];
            sy += s * (g_new[i] - g[i]);
            ss += s * s;
        }
        step = if sy > 0.0 {
            (ss / sy).clamp(1e-6 / ev.scale, 1e3 / ev.scale)
        } else {
            2.0 * t
        };
        e = cand;
        std::mem::swap(&mut g, &mut g_new);
        f = fc;
        l = lc;
        m = mc;
    }
    if !converged && norm2(&g).sqrt() <= target {
        converged = true;
    }
    LocalMin {
        value: f,
        vectors: DMatrix::from_column_slice(n, 4, &e),
        lambda: l,
        mu: m,
        converged,
        iterations,
    }
}

/// Runs every restart (warm starts first) and returns all local minima.
///
/// Restart `i` draws its starting frame from `rng_for(params.seed, i)`, so the
/// outcome is the same for any thread count.
pub fn search(
    r: &CurvatureTensor,
    kind: ConeKind,
    params: &SearchParams,
    warm: &[DMatrix<f64>],
) -> SearchOutcome {
    let n = r.dim();
    let ev = Evaluator::new(r);
    if ev.scale == 0.0 {
        let e = warm
            .first()
            .cloned()
            .unwrap_or_else(|| DMatrix::from_fn(n, 4, |i, j| if i == j { 1.0 } else { 0.0 }));
        let (v, l, m) = min_over_lambda_mu(&FrameComponents::of(r, &e), kind);
        let total = warm.len() + params.restarts.max(1);
        let locals = (0..total)
            .map(|_| LocalMin {
                value: v,
                vectors: e.clone(),
                lambda: l,
                mu: m,
                converged: true,
                iterations: 0,
            })
            .collect();
        return SearchOutcome { locals, best: 0 };
    }
    let total = warm.len() + params.restarts.max(1);
    let locals: Vec<LocalMin> = (0..total)
        .into_par_iter()
        .map(|idx| {
            if idx < warm.len() {
                let mut w = warm[idx].clone();
                orthonormalize(&mut w);
                return descend(&ev, &w, kind, None, params);
            }
            let k = idx - warm.len();
            let mut rng = rng_for(params.seed, k as u64);
            let start = random_stiefel(n, &mut rng);
            if kind == ConeKind::Pic || k % 2 == 0 {
                return descend(&ev, &start, kind, None, params);
            }
            // Odd restarts first descend at a fixed interior (λ, μ).
            let fixed = (
                0.25 + 0.75 * rng.random::<f64>(),
                0.25 + 0.75 * rng.random::<f64>(),
            );
            let pre = descend(&ev, &start, kind, Some(fixed), params);
            let mut out = descend(&ev, &pre.vectors, kind, None, params);
            out.iterations += pre.iterations;
            out
        })
        .collect();
    let mut best = 0;
    for (i, l) in locals.iter().enumerate() {
        if l.value < locals[best].value {
            best = i;
        }
    }
    SearchOutcome { locals, best }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::ConeKind;

    fn random_tensor(n: usize, seed: u64) -> CurvatureTensor {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = rng_for(seed, 0);
        let np = pair_count(n);
        let raw = DMatrix::from_fn(np, np, |_, _| rng.sample::<f64, _>(StandardNormal));
        CurvatureTensor::project_bianchi(n, &(&raw + raw.transpose())).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let r = random_tensor(6, 5);
        let ev = Evaluator::new(&r);
        let mut wk = ev.work();
        let e = random_stiefel(6, &mut rng_for(9, 1));
        let e = e.as_slice().to_vec();
        // PIC is smooth in E, so the envelope gradient is exact there.
        let mut g = vec![0.0; 24];
        ev.eval(&e, ConeKind::Pic, None, &mut wk, Some(&mut g));
        let h = 1e-6;
        for i in 0..24 {
            let mut p = e.clone();
            p[i] += h;
            let mut q = e.clone();
            q[i] -= h;
            let fd = (ev.eval(&p, ConeKind::Pic, None, &mut wk, None).0
                - ev.eval(&q, ConeKind::Pic, None, &mut wk, None).0)
                / (2.0 * h);
            assert!(
                (fd - g[i]).abs() < 1e-6 * (1.0 + g[i].abs()),
                "{i}: {fd} vs {}",
                g[i]
            );
        }
    }

    #[test]
    fn components_match_frame_module() {
        let r = random_tensor(5, 2);
        let ev = Evaluator::new(&r);
        let mut wk = ev.work();
        let e = random_stiefel(5, &mut rng_for(1, 1));
        let a = ev.components(e.as_slice(), &mut wk);
        let b = FrameComponents::of(&r, &e);
        assert!((a.r1234 - b.r1234).abs() < 1e-12 && (a.r2424 - b.r2424).abs() < 1e-12);
    }

    #[test]
    fn search_is_reproducible() {
        let r = random_tensor(5, 3);
        let p = SearchParams::default().with_restarts(8).with_seed(4);
        let a = search(&r, ConeKind::Pic2, &p, &[]);
        let b = search(&r, ConeKind::Pic2, &p, &[]);
        assert_eq!(a, b);
    }

    #[test]
    fn search_on_identity_converges_immediately() {
        let out = search(
            &CurvatureTensor::identity(5),
            ConeKind::Pic,
            &SearchParams::default(),
            &[],
        );
        assert!((out.best().value - 4.0).abs() < 1e-13);
        assert_eq!(out.converged(), 64);
    }
}
