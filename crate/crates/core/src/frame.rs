//! Orthonormal four-frames and the isotropic-curvature frame functionals.
//!
//! For a frame `e₁..e₄` write `R_abcd = R(e_a, e_b, e_c, e_d)`. The three cones
//! are cut out by
//!
//! ```text
//! PIC : R1313 +   R1414 +   R2323 +      R2424 − 2   R1234
//! PIC1: R1313 + λ²R1414 +   R2323 + λ²   R2424 − 2λ  R1234
//! PIC2: R1313 + λ²R1414 + μ²R2323 + λ²μ² R2424 − 2λμ R1234
//! ```
//!
//! with `λ, μ ∈ [0, 1]`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ConeError, VerifyError};
use crate::tensor::{pair_count, pair_index, CurvatureTensor};

/// Gram deviation accepted for a user-supplied frame.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

/// Which isotropic-curvature cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeKind {
    Pic,
    Pic1,
    Pic2,
}

impl ConeKind {
    pub const ALL: [ConeKind; 3] = [ConeKind::Pic, ConeKind::Pic1, ConeKind::Pic2];

    /// Minimum over frames and `(λ, μ)` of the functional of `I`.
    pub fn identity_margin(self) -> f64 {
        match self {
            ConeKind::Pic => 4.0,
            ConeKind::Pic1 => 2.0,
            ConeKind::Pic2 => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConeKind::Pic => "pic",
            ConeKind::Pic1 => "pic1",
            ConeKind::Pic2 => "pic2",
        }
    }
}

impl fmt::Display for ConeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "pic" => Ok(ConeKind::Pic),
            "pic1" => Ok(ConeKind::Pic1),
            "pic2" => Ok(ConeKind::Pic2),
            other => Err(format!(
                "unknown cone `{other}` (expected pic, pic1 or pic2)"
            )),
        }
    }
}

/// A cone together with a uniformity offset: `R` belongs when `R − δ·scal(R)·I` lies in the cone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub kind: ConeKind,
    pub delta: f64,
}

impl ConeSpec {
    pub fn new(kind: ConeKind, delta: f64) -> Result<Self, VerifyError> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(VerifyError::InvalidConfig(format!(
                "delta must be finite and >= 0, got {delta}"
            )));
        }
        Ok(Self { kind, delta })
    }

    pub fn weak(kind: ConeKind) -> Self {
        Self { kind, delta: 0.0 }
    }

    /// `R − δ·scal(R)·I`, the tensor whose plain margin decides membership.
    pub fn shifted(&self, r: &CurvatureTensor) -> CurvatureTensor {
        if self.delta == 0.0 {
            return r.clone();
        }
        r - &(CurvatureTensor::identity(r.dim()) * (self.delta * r.scalar()))
    }

    /// Rate at which moving `R` along `+I` moves the shifted tensor along `+I`: `1 − δ n(n−1)`.
    pub fn identity_gain(&self, n: usize) -> f64 {
        1.0 - self.delta * (n * (n - 1)) as f64
    }
}

impl From<ConeKind> for ConeSpec {
    fn from(kind: ConeKind) -> Self {
        ConeSpec::weak(kind)
    }
}

/// An orthonormal four-frame in ℝⁿ, decorated with `(λ, μ) ∈ [0, 1]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    vectors: DMatrix<f64>,
    lambda: f64,
    mu: f64,
}

fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

impl Frame {
    /// Validates an `n × 4` matrix of column vectors.
    pub fn new(vectors: DMatrix<f64>, lambda: f64, mu: f64) -> Result<Self, ConeError> {
        if vectors.ncols() != 4 || vectors.nrows() < 4 {
            return Err(ConeError::NonOrthonormalFrame(f64::INFINITY));
        }
        let dev = gram_deviation(&vectors);
        if !(dev <= ORTHONORMAL_TOL) {
            return Err(ConeError::NonOrthonormalFrame(dev));
        }
        Ok(Self {
            vectors,
            lambda: clamp_unit(lambda),
            mu: clamp_unit(mu),
        })
    }

    pub(crate) fn from_parts(vectors: DMatrix<f64>, lambda: f64, mu: f64) -> Self {
        debug_assert!(gram_deviation(&vectors) < 1e-10);
        Self {
            vectors,
            lambda: clamp_unit(lambda),
            mu: clamp_unit(mu),
        }
    }

    /// The first four standard basis vectors.
    pub fn standard(n: usize) -> Self {
        Self::from_parts(
            DMatrix::from_fn(n, 4, |i, j| if i == j { 1.0 } else { 0.0 }),
            1.0,
            1.0,
        )
    }

    /// Frame spanned by the given standard basis vectors (zero-based, in order).
    pub fn coordinate(n: usize, axes: [usize; 4]) -> Self {
        Self::from_parts(
            DMatrix::from_fn(n, 4, |i, j| if i == axes[j] { 1.0 } else { 0.0 }),
            1.0,
            1.0,
        )
    }

    /// A frame drawn by orthonormalizing a Gaussian `n × 4` matrix.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self::from_parts(random_stiefel(n, rng), 1.0, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, a: usize) -> Vec<f64> {
        self.vectors.column(a).iter().copied().collect()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn with_params(&self, lambda: f64, mu: f64) -> Self {
        Self {
            vectors: self.vectors.clone(),
            lambda: clamp_unit(lambda),
            mu: clamp_unit(mu),
        }
    }

    /// The frame `U e₁, …, U e₄`.
    pub fn rotated(&self, u: &DMatrix<f64>) -> Self {
        Self {
            vectors: u * &self.vectors,
            lambda: self.lambda,
            mu: self.mu,
        }
    }
}

/// `max |EᵀE − I|`.
pub fn gram_deviation(e: &DMatrix<f64>) -> f64 {
    let g = e.transpose() * e;
    let mut dev = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((g[(i, j)] - target).abs());
        }
    }
    dev
}

/// Orthonormalizes the columns (modified Gram–Schmidt, applied twice).
pub(crate) fn orthonormalize(e: &mut DMatrix<f64>) {
    let k = e.ncols();
    for _ in 0..2 {
        for a in 0..k {
            for b in 0..a {
                let d = e.column(a).dot(&e.column(b));
                let cb = e.column(b).clone_owned();
                let mut ca = e.column_mut(a);
                ca.axpy(-d, &cb, 1.0);
            }
            let norm = e.column(a).norm();
            e.column_mut(a).scale_mut(1.0 / norm);
        }
    }
}

pub(crate) fn random_stiefel<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut e = DMatrix::from_fn(n, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize(&mut e);
    e
}

/// Haar-random orthogonal `n × n` matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut u = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize(&mut u);
    u
}

/// `a ∧ b` in the pair basis.
pub(crate) fn wedge(n: usize, a: &[f64], b: &[f64]) -> DVector<f64> {
    let mut w = DVector::zeros(pair_count(n));
    for i in 0..n {
        for j in i + 1..n {
            w[pair_index(n, i, j)] = a[i] * b[j] - a[j] * b[i];
        }
    }
    w
}

/// The five frame components entering the functionals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameComponents {
    pub r1313: f64,
    pub r1414: f64,
    pub r2323: f64,
    pub r2424: f64,
    pub r1234: f64,
}

impl FrameComponents {
    pub fn of(r: &CurvatureTensor, vectors: &DMatrix<f64>) -> Self {
        let n = r.dim();
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|a| vectors.column(a).iter().copied().collect())
            .collect();
        let m = r.pair_matrix();
        let w = |a: usize, b: usize| wedge(n, &cols[a], &cols[b]);
        let quad = |x: &DVector<f64>, y: &DVector<f64>| x.dot(&(m * y));
        let (w13, w14, w23, w24, w12, w34) = (w(0, 2), w(0, 3), w(1, 2), w(1, 3), w(0, 1), w(2, 3));
        Self {
            r1313: quad(&w13, &w13),
            r1414: quad(&w14, &w14),
            r2323: quad(&w23, &w23),
            r2424: quad(&w24, &w24),
            r1234: quad(&w12, &w34),
        }
    }

    /// The PIC2 biquadratic at `(λ, μ)`.
    #[inline]
    pub fn biquadratic(&self, lambda: f64, mu: f64) -> f64 {
        let (l2, m2) = (lambda * lambda, mu * mu);
        self.r1313 + l2 * self.r1414 + m2 * self.r2323 + l2 * m2 * self.r2424
            - 2.0 * lambda * mu * self.r1234
    }

    /// The functional of `kind`; parameters the cone fixes are ignored.
    pub fn value(&self, kind: ConeKind, lambda: f64, mu: f64) -> f64 {
        let (l, m) = effective_params(kind, lambda, mu);
        self.biquadratic(l, m)
    }
}

/// `(λ, μ)` actually used by `kind`: PIC fixes both to 1, PIC1 fixes `μ = 1`.
pub fn effective_params(kind: ConeKind, lambda: f64, mu: f64) -> (f64, f64) {
    match kind {
        ConeKind::Pic => (1.0, 1.0),
        ConeKind::Pic1 => (clamp_unit(lambda), 1.0),
        ConeKind::Pic2 => (clamp_unit(lambda), clamp_unit(mu)),
    }
}

/// The isotropic-curvature functional of `kind` for `R` on the frame.
pub fn frame_value(r: &CurvatureTensor, frame: &Frame, kind: ConeKind) -> Result<f64, ConeError> {
    if frame.dim() != r.dim() {
        return Err(ConeError::FrameDimMismatch {
            frame: frame.dim(),
            tensor: r.dim(),
        });
    }
    let dev = gram_deviation(frame.vectors());
    if !(dev <= ORTHONORMAL_TOL) {
        return Err(ConeError::NonOrthonormalFrame(dev));
    }
    Ok(FrameComponents::of(r, frame.vectors()).value(kind, frame.lambda(), frame.mu()))
}

/// Exact minimum of `a + bλ² + cμ² + dλ²μ² − 2eλμ` over `[0,1]²` (over `λ` only
/// for PIC1, nothing for PIC). Returns `(value, λ*, μ*)`; ties keep the first
/// candidate in the order corners, edge critical points, interior stationary points.
pub fn min_over_lambda_mu(c: &FrameComponents, kind: ConeKind) -> (f64, f64, f64) {
    match kind {
        ConeKind::Pic => (c.biquadratic(1.0, 1.0), 1.0, 1.0),
        ConeKind::Pic1 => {
            let mut best = (f64::INFINITY, 0.0, 1.0);
            let mut consider = |l: f64| {
                let v = c.biquadratic(l, 1.0);
                if v < best.0 {
                    best = (v, l, 1.0);
                }
            };
            consider(0.0);
            consider(1.0);
            if let Some(l) = inner_critical(c.r1414 + c.r2424, c.r1234) {
                consider(l);
            }
            best
        }
        ConeKind::Pic2 => min_biquadratic(c),
    }
}

/// Minimizer in `(0, 1)` of `A t² − 2 B t`, if `A > 0` and it lies strictly inside.
#[inline]
fn inner_critical(a: f64, b: f64) -> Option<f64> {
    if a > 0.0 {
        let t = b / a;
        if t > 0.0 && t < 1.0 {
            return Some(t);
        }
    }
    None
}

/// Best `μ ∈ [0,1]` for fixed `λ` (and symmetrically).
fn best_mu(c: &FrameComponents, lambda: f64) -> f64 {
    let a = c.r2323 + c.r2424 * lambda * lambda;
    let cands = [0.0, 1.0, inner_critical(a, c.r1234 * lambda).unwrap_or(0.0)];
    argmin_by(&cands, |m| c.biquadratic(lambda, m))
}

fn best_lambda(c: &FrameComponents, mu: f64) -> f64 {
    let a = c.r1414 + c.r2424 * mu * mu;
    let cands = [0.0, 1.0, inner_critical(a, c.r1234 * mu).unwrap_or(0.0)];
    argmin_by(&cands, |l| c.biquadratic(l, mu))
}

fn argmin_by(cands: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut best = (f64::INFINITY, cands[0]);
    for &t in cands {
        let v = f(t);
        if v < best.0 {
            best = (v, t);
        }
    }
    best.1
}

fn min_biquadratic(c: &FrameComponents) -> (f64, f64, f64) {
    let (b, cc, d, e) = (c.r1414, c.r2323, c.r2424, c.r1234);
    let mut cands: Vec<(f64, f64)> = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];
    if let Some(m) = inner_critical(cc + d, e) {
        cands.push((1.0, m));
    }
    if let Some(l) = inner_critical(b + d, e) {
        cands.push((l, 1.0));
    }
    // Interior stationary points: λ(b + dμ²) = eμ and μ(c + dλ²) = eλ.
    let inside = |t: f64| t > 0.0 && t < 1.0;
    if e == 0.0 {
        if d != 0.0 {
            let (l2, m2) = (-cc / d, -b / d);
            if inside(l2) && inside(m2) {
                cands.push((l2.sqrt(), m2.sqrt()));
            }
        }
    } else if d != 0.0 {
        // With s = b + dμ², stationarity reduces to c s² = e² b; symmetrically
        // s' = c + dλ² satisfies b s'² = e² c.
        if cc != 0.0 && e * e * b / cc >= 0.0 {
            let root = (e * e * b / cc).sqrt();
            for s in [root, -root] {
                if s != 0.0 {
                    let m2 = (s - b) / d;
                    if inside(m2) {
                        let m = m2.sqrt();
                        let l = e * m / s;
                        if inside(l) {
                            cands.push((l, m));
                        }
                    }
                }
            }
        }
        if b != 0.0 && e * e * cc / b >= 0.0 {
            let root = (e * e * cc / b).sqrt();
            for s in [root, -root] {
                if s != 0.0 {
                    let l2 = (s - cc) / d;
                    if inside(l2) {
                        let l = l2.sqrt();
                        let m = e * l / s;
                        if inside(m) {
                            cands.push((l, m));
                        }
                    }
                }
            }
        }
    }
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for (l, m) in cands {
        // Exact coordinate polishing never increases the value.
        let mut pt = (l, m, c.biquadratic(l, m));
        for _ in 0..2 {
            let m1 = best_mu(c, pt.0);
            let v1 = c.biquadratic(pt.0, m1);
            if v1 < pt.2 {
                pt = (pt.0, m1, v1);
            }
            let l1 = best_lambda(c, pt.1);
            let v2 = c.biquadratic(l1, pt.1);
            if v2 < pt.2 {
                pt = (l1, pt.1, v2);
            }
        }
        if pt.2 < best.0 {
            best = (pt.2, pt.0, pt.1);
        }
    }
    best
}
