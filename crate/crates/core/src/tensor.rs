//! Algebraic curvature tensors on ℝⁿ.
//!
//! A tensor is stored as a symmetric `N × N` matrix over the lexicographic
//! basis of index pairs `{(i, j) : i < j}`, `N = n(n-1)/2`. The entry at
//! `(ij, kl)` is `R_ijkl`; every other component is recovered from the
//! antisymmetries. All indices in this module are zero-based; the JSON
//! interchange format is one-based.

use std::collections::HashMap;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::TensorError;

/// Largest dimension accepted by validated constructors and readers.
pub const MAX_DIM: usize = 32;

/// Bianchi residual accepted by [`CurvatureTensor::make`], relative to the norm.
pub const BIANCHI_INPUT_TOL: f64 = 1e-9;

/// Number of index pairs `i < j` in dimension `n`.
pub fn pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Position of the pair `(i, j)`, `i < j`, in the lexicographic pair basis.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// All pairs `(i, j)` with `i < j`, in basis order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(pair_count(n));
    for i in 0..n {
        for j in i + 1..n {
            out.push((i, j));
        }
    }
    out
}

/// Pair index and sign for an ordered index pair, `None` on the diagonal.
#[inline]
fn signed_pair(n: usize, i: usize, j: usize) -> Option<(usize, f64)> {
    match i.cmp(&j) {
        std::cmp::Ordering::Less => Some((pair_index(n, i, j), 1.0)),
        std::cmp::Ordering::Greater => Some((pair_index(n, j, i), -1.0)),
        std::cmp::Ordering::Equal => None,
    }
}

fn check_dim(n: usize) -> Result<(), TensorError> {
    if (4..=MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(TensorError::DimensionOutOfRange(n))
    }
}

/// A symmetric bilinear form on ℝⁿ (Ricci tensor, metric, projectors).
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricForm {
    m: DMatrix<f64>,
}

impl SymmetricForm {
    /// Builds the form from `f(i, j)` evaluated on `i <= j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self { m }
    }

    /// Symmetrizes an arbitrary square matrix, `(A + Aᵀ) / 2`.
    pub fn from_matrix(a: &DMatrix<f64>) -> Self {
        assert!(a.is_square(), "symmetric form needs a square matrix");
        let n = a.nrows();
        Self::from_fn(n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            m: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
        }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self::from_fn(n, |i, j| if i == j { d[i] } else { 0.0 })
    }

    /// Orthogonal projector onto the first `rank` coordinates.
    pub fn coordinate_projector(n: usize, rank: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j && i < rank { 1.0 } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().0
    }

    /// Eigenvalues in ascending order with the matching orthonormal eigenvectors as columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = self.m.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |i, c| {
            eig.eigenvectors[(i, order[c])]
        });
        (values, vectors)
    }

    /// `Uᵀ A U`, the form expressed in the basis given by the columns of `U`.
    pub fn in_basis(&self, u: &DMatrix<f64>) -> Self {
        Self::from_matrix(&(u.transpose() * &self.m * u))
    }

    pub fn scale(&self, a: f64) -> Self {
        Self { m: &self.m * a }
    }
}

impl Add for &SymmetricForm {
    type Output = SymmetricForm;
    fn add(self, rhs: &SymmetricForm) -> SymmetricForm {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        SymmetricForm {
            m: &self.m + &rhs.m,
        }
    }
}

impl Sub for &SymmetricForm {
    type Output = SymmetricForm;
    fn sub(self, rhs: &SymmetricForm) -> SymmetricForm {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        SymmetricForm {
            m: &self.m - &rhs.m,
        }
    }
}

/// An algebraic curvature tensor: antisymmetric in each index pair,
/// symmetric under pair exchange, and satisfying the first Bianchi identity.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureTensor {
    n: usize,
    m: DMatrix<f64>,
}

impl CurvatureTensor {
    /// Wraps a pair matrix without validation. Callers guarantee symmetry and Bianchi.
    pub(crate) fn from_raw(n: usize, m: DMatrix<f64>) -> Self {
        debug_assert_eq!(m.nrows(), pair_count(n));
        Self { n, m }
    }

    pub fn zero(n: usize) -> Self {
        assert!(n >= 4, "curvature tensors need n >= 4");
        Self::from_raw(n, DMatrix::zeros(pair_count(n), pair_count(n)))
    }

    /// `I_ijkl = δ_ik δ_jl − δ_il δ_jk`, the curvature of the unit round sphere.
    pub fn identity(n: usize) -> Self {
        assert!(n >= 4, "curvature tensors need n >= 4");
        Self::from_raw(n, DMatrix::identity(pair_count(n), pair_count(n)))
    }

    /// `c · I`.
    pub fn sphere(n: usize, c: f64) -> Self {
        Self::identity(n) * c
    }

    /// Constant curvature `c` on the first `k` coordinates (an `S^{k−1}` factor),
    /// flat in the remaining ones.
    pub fn round_factor(n: usize, k: usize, c: f64) -> Self {
        assert!(n >= 4, "curvature tensors need n >= 4");
        assert!(k <= n);
        let np = pair_count(n);
        let mut m = DMatrix::zeros(np, np);
        for (a, &(_, j)) in pairs(n).iter().enumerate() {
            if j < k {
                m[(a, a)] = c;
            }
        }
        Self::from_raw(n, m)
    }

    /// `S^{n-1} × ℝ` with curvature `c` on the sphere factor, flat in the last coordinate.
    pub fn cylinder(n: usize, c: f64) -> Self {
        Self::round_factor(n, n - 1, c)
    }

    /// Builds a tensor from a sparse list of one-based `(i, j, k, l, value)` entries,
    /// closing them under the curvature symmetries.
    pub fn make(
        n: usize,
        entries: &[(usize, usize, usize, usize, f64)],
    ) -> Result<Self, TensorError> {
        check_dim(n)?;
        let np = pair_count(n);
        let mut m = DMatrix::zeros(np, np);
        let mut seen: HashMap<(usize, usize), f64> = HashMap::new();
        for &(i, j, k, l, v) in entries {
            if [i, j, k, l].iter().any(|&x| x == 0 || x > n) {
                return Err(TensorError::IndexOutOfRange { n, i, j, k, l });
            }
            if !v.is_finite() {
                return Err(TensorError::NonFinite);
            }
            let (a, sa) = match signed_pair(n, i - 1, j - 1) {
                Some(p) => p,
                None if v == 0.0 => continue,
                None => {
                    return Err(TensorError::SymmetryConflict {
                        i,
                        j,
                        k,
                        l,
                        first: 0.0,
                        second: v,
                    })
                }
            };
            let (b, sb) = match signed_pair(n, k - 1, l - 1) {
                Some(p) => p,
                None if v == 0.0 => continue,
                None => {
                    return Err(TensorError::SymmetryConflict {
                        i,
                        j,
                        k,
                        l,
                        first: 0.0,
                        second: v,
                    })
                }
            };
            let value = v * sa * sb;
            let key = (a.min(b), a.max(b));
            if let Some(&prev) = seen.get(&key) {
                let scale = 1.0f64.max(prev.abs()).max(value.abs());
                if (prev - value).abs() > 1e-12 * scale {
                    return Err(TensorError::SymmetryConflict {
                        i,
                        j,
                        k,
                        l,
                        first: prev,
                        second: value,
                    });
                }
                continue;
            }
            seen.insert(key, value);
            m[(a, b)] = value;
            m[(b, a)] = value;
        }
        let t = Self::from_raw(n, m);
        t.check_bianchi(BIANCHI_INPUT_TOL)?;
        Ok(t)
    }

    /// Validating constructor from a pair matrix.
    pub fn from_pair_matrix(n: usize, m: DMatrix<f64>) -> Result<Self, TensorError> {
        check_dim(n)?;
        let np = pair_count(n);
        if m.nrows() != np || m.ncols() != np {
            return Err(TensorError::DimMismatch(m.nrows(), np));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite);
        }
        let scale = 1.0f64.max(m.amax());
        for a in 0..np {
            for b in a + 1..np {
                let (x, y) = (m[(a, b)], m[(b, a)]);
                if (x - y).abs() > 1e-12 * scale {
                    let (i, j) = pairs(n)[a];
                    let (k, l) = pairs(n)[b];
                    return Err(TensorError::SymmetryConflict {
                        i: i + 1,
                        j: j + 1,
                        k: k + 1,
                        l: l + 1,
                        first: x,
                        second: y,
                    });
                }
            }
        }
        let t = Self::from_raw(n, SymmetricForm::from_matrix(&m).m);
        t.check_bianchi(BIANCHI_INPUT_TOL)?;
        Ok(t)
    }

    /// Orthogonal projection of a pair-symmetric tensor onto the Bianchi subspace:
    /// subtracts the totally antisymmetric part `(T_ijkl + T_iklj + T_iljk) / 3`.
    ///
    /// The input matrix is symmetrized first.
    pub fn project_bianchi(n: usize, raw: &DMatrix<f64>) -> Result<Self, TensorError> {
        check_dim(n)?;
        let np = pair_count(n);
        if raw.nrows() != np || raw.ncols() != np {
            return Err(TensorError::DimMismatch(raw.nrows(), np));
        }
        let mut m = SymmetricForm::from_matrix(raw).m;
        remove_exterior_part(n, &mut m);
        Ok(Self::from_raw(n, m))
    }

    /// Re-projects onto the Bianchi subspace, removing accumulated roundoff.
    pub fn reprojected(&self) -> Self {
        let mut m = SymmetricForm::from_matrix(&self.m).m;
        remove_exterior_part(self.n, &mut m);
        Self::from_raw(self.n, m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The symmetric pair-basis matrix.
    pub fn pair_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// `R_ijkl`, zero-based.
    #[inline]
    pub fn component(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        match (signed_pair(self.n, i, j), signed_pair(self.n, k, l)) {
            (Some((a, sa)), Some((b, sb))) => sa * sb * self.m[(a, b)],
            _ => 0.0,
        }
    }

    /// All `n⁴` components, row-major in `(i, j, k, l)`.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        out[((i * n + j) * n + k) * n + l] = self.component(i, j, k, l);
                    }
                }
            }
        }
        out
    }

    /// Frobenius norm over all `n⁴` components.
    pub fn norm(&self) -> f64 {
        2.0 * self.m.norm()
    }

    /// Full inner product `Σ R_ijkl S_ijkl`.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n, "dimension mismatch");
        4.0 * self.m.dot(&other.m)
    }

    /// Largest absolute cyclic sum `R_ijkl + R_iklj + R_iljk`.
    pub fn bianchi_residual(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for_each_quadruple(n, |ij, kl, ik, jl, il, jk| {
            let b = self.m[(ij, kl)] - self.m[(ik, jl)] + self.m[(il, jk)];
            worst = worst.max(b.abs());
        });
        worst
    }

    fn check_bianchi(&self, rel: f64) -> Result<(), TensorError> {
        let residual = self.bianchi_residual();
        let bound = rel * self.norm();
        if residual > bound {
            Err(TensorError::BianchiViolation { residual, bound })
        } else {
            Ok(())
        }
    }

    /// `Ric_ik = Σ_j R_ijkj`.
    pub fn ricci(&self) -> SymmetricForm {
        let n = self.n;
        SymmetricForm::from_fn(n, |i, k| (0..n).map(|j| self.component(i, j, k, j)).sum())
    }

    pub fn scalar(&self) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let a = pair_index(n, i, j);
                s += self.m[(a, a)];
            }
        }
        2.0 * s
    }

    /// Matrix `X[(i,k), (p,q)] = R_ipkq`, shared by the quadratic and its Ricci trace.
    fn mixed_matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n * n, n * n, |r, c| {
            self.component(r / n, c / n, r % n, c % n)
        })
    }

    /// The Hamilton quadratic
    /// `Q(R)_ijkl = Σ R_ijpq R_klpq + 2 Σ (R_ipkq R_jplq − R_iplq R_jpkq)`.
    pub fn q_map(&self) -> Self {
        let n = self.n;
        let np = pair_count(n);
        let x = self.mixed_matrix();
        let gram = &x * x.transpose();
        let square = &self.m * &self.m;
        let ps = pairs(n);
        let mut q = DMatrix::zeros(np, np);
        for a in 0..np {
            let (i, j) = ps[a];
            for b in a..np {
                let (k, l) = ps[b];
                let sharp = gram[(i * n + k, j * n + l)] - gram[(i * n + l, j * n + k)];
                let v = 2.0 * square[(a, b)] + 2.0 * sharp;
                q[(a, b)] = v;
                q[(b, a)] = v;
            }
        }
        Self::from_raw(n, q)
    }

    /// `Ric(Q(R))_ik = 2 Σ_pq R_ipkq Ric_pq`, computed without forming `Q(R)`.
    pub fn ricci_of_q(&self) -> SymmetricForm {
        let n = self.n;
        let ric = self.ricci();
        let x = self.mixed_matrix();
        let v = DMatrix::from_fn(n * n, 1, |c, _| ric.get(c / n, c % n));
        let out = x * v;
        SymmetricForm::from_fn(n, |i, k| 2.0 * out[i * n + k])
    }

    /// `scal(Q(R)) = 2 |Ric|²`.
    pub fn scal_of_q(&self) -> f64 {
        let r = self.ricci().frobenius_norm();
        2.0 * r * r
    }

    /// Conjugation of all four indices by `U`: `(U·R)_ijkl = Σ U_ia U_jb U_kc U_ld R_abcd`.
    pub fn conjugate(&self, u: &DMatrix<f64>) -> Self {
        let n = self.n;
        assert_eq!(
            (u.nrows(), u.ncols()),
            (n, n),
            "conjugation matrix must be n × n"
        );
        let ps = pairs(n);
        let np = ps.len();
        let wedge = DMatrix::from_fn(np, np, |r, c| {
            let (i, j) = ps[r];
            let (a, b) = ps[c];
            u[(i, a)] * u[(j, b)] - u[(i, b)] * u[(j, a)]
        });
        let m = &wedge * &self.m * wedge.transpose();
        Self::from_raw(n, SymmetricForm::from_matrix(&m).m)
    }

    /// Non-zero canonical components `(i, j, k, l, value)`, one-based, with
    /// `i < j`, `k < l`, `(i, j) <= (k, l)`, sorted lexicographically.
    pub fn canonical_entries(&self) -> Vec<(usize, usize, usize, usize, f64)> {
        let ps = pairs(self.n);
        let mut out = Vec::new();
        for a in 0..ps.len() {
            for b in a..ps.len() {
                let v = self.m[(a, b)];
                if v != 0.0 {
                    out.push((ps[a].0 + 1, ps[a].1 + 1, ps[b].0 + 1, ps[b].1 + 1, v));
                }
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.m.iter().all(|&v| v == 0.0)
    }

    /// `‖R − (scal / n(n−1)) I‖ / scal`; zero exactly on multiples of `I`.
    ///
    /// Returns `+∞` for non-zero tensors with non-positive scalar curvature.
    pub fn pinching_ratio(&self) -> f64 {
        let scal = self.scalar();
        let n = self.n as f64;
        let dev = self - &(Self::identity(self.n) * (scal / (n * (n - 1.0))));
        if self.is_zero() {
            0.0
        } else if scal <= 0.0 {
            f64::INFINITY
        } else {
            dev.norm() / scal
        }
    }
}

/// Visits each 4-subset `i < j < k < l` with the pair indices of `ij, kl, ik, jl, il, jk`.
fn for_each_quadruple(n: usize, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for l in k + 1..n {
                    f(
                        pair_index(n, i, j),
                        pair_index(n, k, l),
                        pair_index(n, i, k),
                        pair_index(n, j, l),
                        pair_index(n, i, l),
                        pair_index(n, j, k),
                    );
                }
            }
        }
    }
}

fn remove_exterior_part(n: usize, m: &mut DMatrix<f64>) {
    for_each_quadruple(n, |ij, kl, ik, jl, il, jk| {
        let b = (m[(ij, kl)] - m[(ik, jl)] + m[(il, jk)]) / 3.0;
        for (p, q, s) in [(ij, kl, -b), (ik, jl, b), (il, jk, -b)] {
            m[(p, q)] += s;
            m[(q, p)] = m[(p, q)];
        }
    });
}

/// Kulkarni–Nomizu product
/// `(A ∧ B)_pqrs = A_pr B_qs − A_ps B_qr − A_qr B_ps + A_qs B_pr`.
pub fn kulkarni_nomizu(
    a: &SymmetricForm,
    b: &SymmetricForm,
) -> Result<CurvatureTensor, TensorError> {
    if a.dim() != b.dim() {
        return Err(TensorError::DimMismatch(a.dim(), b.dim()));
    }
    let n = a.dim();
    check_dim(n)?;
    let ps = pairs(n);
    let np = ps.len();
    let mut m = DMatrix::zeros(np, np);
    for x in 0..np {
        let (p, q) = ps[x];
        for y in x..np {
            let (r, s) = ps[y];
            let v =
                a.get(p, r) * b.get(q, s) - a.get(p, s) * b.get(q, r) - a.get(q, r) * b.get(p, s)
                    + a.get(q, s) * b.get(p, r);
            m[(x, y)] = v;
            m[(y, x)] = v;
        }
    }
    Ok(CurvatureTensor::from_raw(n, m))
}

impl Add for &CurvatureTensor {
    type Output = CurvatureTensor;
    fn add(self, rhs: &CurvatureTensor) -> CurvatureTensor {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        CurvatureTensor::from_raw(self.n, &self.m + &rhs.m)
    }
}

impl Add for CurvatureTensor {
    type Output = CurvatureTensor;
    fn add(self, rhs: CurvatureTensor) -> CurvatureTensor {
        &self + &rhs
    }
}

impl AddAssign<&CurvatureTensor> for CurvatureTensor {
    fn add_assign(&mut self, rhs: &CurvatureTensor) {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        self.m += &rhs.m;
    }
}

impl Sub for &CurvatureTensor {
    type Output = CurvatureTensor;
    fn sub(self, rhs: &CurvatureTensor) -> CurvatureTensor {
        assert_eq!(self.n, rhs.n, "dimension mismatch");
        CurvatureTensor::from_raw(self.n, &self.m - &rhs.m)
    }
}

impl Sub for CurvatureTensor {
    type Output = CurvatureTensor;
    fn sub(self, rhs: CurvatureTensor) -> CurvatureTensor {
        &self - &rhs
    }
}

impl Neg for CurvatureTensor {
    type Output = CurvatureTensor;
    fn neg(self) -> CurvatureTensor {
        CurvatureTensor::from_raw(self.n, -self.m)
    }
}

impl Mul<f64> for CurvatureTensor {
    type Output = CurvatureTensor;
    fn mul(self, a: f64) -> CurvatureTensor {
        CurvatureTensor::from_raw(self.n, self.m * a)
    }
}

impl Mul<f64> for &CurvatureTensor {
    type Output = CurvatureTensor;
    fn mul(self, a: f64) -> CurvatureTensor {
        CurvatureTensor::from_raw(self.n, &self.m * a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn pair_index_is_lexicographic() {
        let n = 6;
        for (a, &(i, j)) in pairs(n).iter().enumerate() {
            assert_eq!(pair_index(n, i, j), a);
        }
    }

    #[test]
    fn make_closes_symmetries() {
        let r = CurvatureTensor::make(4, &[(1, 2, 1, 2, 1.0)]).unwrap();
        assert_eq!(r.component(0, 1, 0, 1), 1.0);
        assert_eq!(r.component(1, 0, 1, 0), 1.0);
        assert_eq!(r.component(1, 0, 0, 1), -1.0);
        assert_eq!(r.component(0, 2, 0, 2), 0.0);
    }

    #[test]
    fn make_empty_is_zero() {
        let r = CurvatureTensor::make(5, &[]).unwrap();
        assert!(r.is_zero());
        assert_eq!(r.dim(), 5);
    }

    #[test]
    fn make_rejects_cyclic_sum() {
        let err = CurvatureTensor::make(
            4,
            &[(1, 2, 3, 4, 1.0), (1, 3, 4, 2, 1.0), (1, 4, 2, 3, 1.0)],
        )
        .unwrap_err();
        assert!(matches!(err, TensorError::BianchiViolation { .. }));
    }

    #[test]
    fn make_rejects_bad_indices_and_conflicts() {
        assert!(matches!(
            CurvatureTensor::make(4, &[(1, 2, 1, 5, 1.0)]),
            Err(TensorError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            CurvatureTensor::make(4, &[(0, 2, 1, 2, 1.0)]),
            Err(TensorError::IndexOutOfRange { .. })
        ));
        // R_1212 = 1 and R_2112 = 1 would force R_1212 = -1.
        assert!(matches!(
            CurvatureTensor::make(4, &[(1, 2, 1, 2, 1.0), (2, 1, 1, 2, 1.0)]),
            Err(TensorError::SymmetryConflict { .. })
        ));
        assert!(matches!(
            CurvatureTensor::make(4, &[(1, 1, 2, 3, 1.0)]),
            Err(TensorError::SymmetryConflict { .. })
        ));
        assert!(matches!(
            CurvatureTensor::make(3, &[]),
            Err(TensorError::DimensionOutOfRange(3))
        ));
        // Consistent duplicates are fine.
        let r = CurvatureTensor::make(
            4,
            &[(1, 2, 1, 2, 1.0), (2, 1, 2, 1, 1.0), (1, 2, 2, 1, -1.0)],
        )
        .unwrap();
        assert_eq!(r.component(0, 1, 0, 1), 1.0);
    }

    #[test]
    fn exterior_element_projects_to_zero() {
        let n = 4;
        let np = pair_count(n);
        let mut raw = DMatrix::zeros(np, np);
        // Totally antisymmetric T with T_1234 = 1: T_1324 = -1, T_1423 = 1.
        let set = |m: &mut DMatrix<f64>, a: usize, b: usize, v: f64| {
            m[(a, b)] = v;
            m[(b, a)] = v;
        };
        set(&mut raw, pair_index(n, 0, 1), pair_index(n, 2, 3), 1.0);
        set(&mut raw, pair_index(n, 0, 2), pair_index(n, 1, 3), -1.0);
        set(&mut raw, pair_index(n, 0, 3), pair_index(n, 1, 2), 1.0);
        let p = CurvatureTensor::project_bianchi(n, &raw).unwrap();
        assert!(p.pair_matrix().amax() < 1e-15);
    }

    #[test]
    fn identity_traces() {
        let i5 = CurvatureTensor::identity(5);
        assert_eq!(i5.scalar(), 20.0);
        assert_eq!(i5.ricci(), SymmetricForm::identity(5).scale(4.0));
        let i4 = CurvatureTensor::identity(4);
        assert_eq!(i4.component(0, 1, 0, 1), 1.0);
        assert_eq!(i4.component(0, 1, 2, 3), 0.0);
        assert_eq!(i4.component(0, 1, 1, 0), -1.0);
    }

    #[test]
    fn kn_of_metric_is_twice_identity() {
        for n in 4..8 {
            let g = SymmetricForm::identity(n);
            let kn = kulkarni_nomizu(&g, &g).unwrap();
            assert_eq!(kn, CurvatureTensor::identity(n) * 2.0);
        }
    }

    #[test]
    fn kn_of_projector_is_cylinder() {
        let n = 6;
        let p = SymmetricForm::coordinate_projector(n, n - 1);
        let kn = kulkarni_nomizu(&p, &p).unwrap();
        assert_eq!(kn, CurvatureTensor::cylinder(n, 2.0));
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    assert_eq!(kn.component(i, j, k, n - 1), 0.0);
                }
            }
        }
        assert!(matches!(
            kulkarni_nomizu(&p, &SymmetricForm::identity(5)),
            Err(TensorError::DimMismatch(6, 5))
        ));
    }

    #[test]
    fn model_tensors() {
        assert_eq!(
            CurvatureTensor::sphere(5, 1.0),
            CurvatureTensor::identity(5)
        );
        let cyl = CurvatureTensor::cylinder(5, 1.0);
        assert_eq!(cyl.component(0, 1, 0, 1), 1.0);
        assert_eq!(cyl.component(0, 4, 0, 4), 0.0);
        assert_eq!(CurvatureTensor::cylinder(5, 2.0).scalar(), 24.0);
        assert_eq!(cyl.ricci().eigenvalues(), vec![0.0, 3.0, 3.0, 3.0, 3.0]);
        assert_eq!(cyl.scalar(), 12.0);
        let z = CurvatureTensor::zero(5);
        assert_eq!(z.scalar(), 0.0);
        assert_eq!(z.ricci(), SymmetricForm::zeros(5));
        assert!(z.q_map().is_zero());
        assert_eq!(z.scal_of_q(), 0.0);
    }

    #[test]
    fn quadratic_on_models() {
        for n in 5..=8 {
            let i = CurvatureTensor::identity(n);
            let qi = i.q_map();
            let expect = &i * (2.0 * (n as f64 - 1.0));
            assert!((&qi - &expect).norm() <= 1e-12 * expect.norm());
            let c = CurvatureTensor::cylinder(n, 1.0);
            let qc = c.q_map();
            let expect = &c * (2.0 * (n as f64 - 2.0));
            assert!((&qc - &expect).norm() <= 1e-12 * expect.norm());
        }
        assert!(close(
            CurvatureTensor::identity(5).scal_of_q(),
            160.0,
            1e-14
        ));
        assert!(close(
            CurvatureTensor::cylinder(5, 1.0).scal_of_q(),
            72.0,
            1e-14
        ));
    }

    #[test]
    fn norm_counts_all_components() {
        let i = CurvatureTensor::identity(5);
        let brute: f64 = i.dense().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(close(i.norm(), brute, 1e-15));
        assert!(close(i.norm(), 40f64.sqrt(), 1e-15));
        assert!(close(i.dot(&i), 40.0, 1e-15));
    }

    #[test]
    fn pinching_ratio_vanishes_on_spheres() {
        assert_eq!(CurvatureTensor::sphere(6, 3.0).pinching_ratio(), 0.0);
        assert!(CurvatureTensor::cylinder(6, 1.0).pinching_ratio() > 0.0);
        assert_eq!(CurvatureTensor::zero(6).pinching_ratio(), 0.0);
        assert_eq!(
            (-CurvatureTensor::identity(6)).pinching_ratio(),
            f64::INFINITY
        );
    }
}
