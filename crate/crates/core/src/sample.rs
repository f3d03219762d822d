//! Random curvature tensors with certified cone membership.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cone::{margin, solve_shift, MarginCertificate};
use crate::error::VerifyError;
use crate::frame::{random_orthogonal, ConeSpec};
use crate::rng::{derive_seed, rng_for};
use crate::search::SearchParams;
use crate::tensor::{kulkarni_nomizu, pair_count, pair_index, CurvatureTensor, SymmetricForm};

/// Attempts a sampler makes before reporting a stall.
pub const MAX_ATTEMPTS: usize = 8;

/// Boundary samples must re-certify within this multiple of `scal`.
pub const BOUNDARY_RECHECK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Interior,
    Boundary,
    Structured,
    Mixed,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Interior => "interior",
            Strategy::Boundary => "boundary",
            Strategy::Structured => "structured",
            Strategy::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "interior" => Ok(Strategy::Interior),
            "boundary" => Ok(Strategy::Boundary),
            "structured" => Ok(Strategy::Structured),
            "mixed" => Ok(Strategy::Mixed),
            other => Err(format!("unknown sampler `{other}`")),
        }
    }
}

/// A sampled tensor and the certificate that admitted it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tensor: CurvatureTensor,
    pub certificate: MarginCertificate,
    pub strategy: Strategy,
    pub attempts: usize,
}

/// Gaussian element of the curvature space: i.i.d. normal pair matrix, Bianchi-projected.
pub fn gaussian_tensor<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CurvatureTensor {
    let np = pair_count(n);
    let mut raw = DMatrix::zeros(np, np);
    for p in 0..np {
        for q in p..np {
            let v: f64 = rng.sample(StandardNormal);
            raw[(p, q)] = v;
            raw[(q, p)] = v;
        }
    }
    CurvatureTensor::project_bianchi(n, &raw).expect("dimension already valid")
}

/// `S^{n−2}` factor on coordinates `3..n`, plus `s·I`, minus `k` on the `e₁∧e₂` plane.
///
/// Ricci eigenvalues are `(n−1)s − k` (twice) and `(n−3) + (n−1)s`.
pub fn two_plane_deficit(n: usize, s: f64, k: f64) -> CurvatureTensor {
    let np = pair_count(n);
    let mut m = DMatrix::zeros(np, np);
    for i in 0..n {
        for j in i + 1..n {
            let p = pair_index(n, i, j);
            m[(p, p)] = s + if i >= 2 { 1.0 } else { 0.0 };
        }
    }
    let p = pair_index(n, 0, 1);
    m[(p, p)] -= k;
    CurvatureTensor::from_pair_matrix(n, m).expect("diagonal pair matrices satisfy Bianchi")
}

/// The deficit `k` for which `λ₁ + λ₂ = θ·scal` in `two_plane_deficit(n, s, k)`.
pub fn deficit_for_theta(n: usize, s: f64, theta: f64) -> f64 {
    let nf = n as f64;
    let base = (nf - 2.0) * (nf - 3.0);
    (2.0 * s * (nf - 1.0) - theta * (base + s * nf * (nf - 1.0))) / (2.0 * (1.0 - theta))
}

fn exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// A random convex mixture of conjugated model tensors, normalized to `scal = n(n−1)`.
pub fn structured_tensor<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CurvatureTensor {
    let u = random_orthogonal(n, rng);
    let v = random_orthogonal(n, rng);
    let b = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = SymmetricForm::from_matrix(&(&b * b.transpose() / n as f64));
    let kn = kulkarni_nomizu(&a, &a).expect("same dimension") * 0.5;
    let parts = [
        CurvatureTensor::identity(n),
        CurvatureTensor::cylinder(n, 1.0).conjugate(&u),
        CurvatureTensor::round_factor(n, n - 2, 1.0).conjugate(&v),
        kn,
    ];
    let mut out = CurvatureTensor::zero(n);
    for p in &parts {
        let w = exp(rng);
        let scal = p.scalar();
        if scal > 0.0 {
            out += &(p * (w / scal));
        }
    }
    let scal = out.scalar();
    out * ((n * (n - 1)) as f64 / scal)
}

fn max_eta(cone: ConeSpec, n: usize) -> f64 {
    cone.identity_gain(n) * cone.kind.identity_margin() / (n * (n - 1)) as f64
}

fn recertify(
    r: &CurvatureTensor,
    cone: ConeSpec,
    params: &SearchParams,
    seed: u64,
) -> MarginCertificate {
    margin(r, cone, &params.clone().with_seed(seed))
}

/// Moves `x` into the cone with margin about `eta·scal`, then re-certifies with `seed`.
fn shift_inside(
    x: &CurvatureTensor,
    cone: ConeSpec,
    eta: f64,
    params: &SearchParams,
    seed: u64,
) -> Result<(CurvatureTensor, MarginCertificate), VerifyError> {
    let sol = solve_shift(x, cone, eta, params)?;
    let scal = sol.tensor.scalar();
    let nudge = (1e-8 * (1.0 + scal.abs()) - sol.residual.min(0.0)) / sol.slope;
    let r = &sol.tensor + &(CurvatureTensor::identity(x.dim()) * nudge);
    let cert = recertify(&r, cone, params, seed);
    Ok((r, cert))
}

fn draw(
    n: usize,
    cone: ConeSpec,
    strategy: Strategy,
    rng: &mut impl Rng,
    params: &SearchParams,
    fresh: u64,
) -> Result<Option<(CurvatureTensor, MarginCertificate)>, VerifyError> {
    let interior =
        |(r, c): (CurvatureTensor, MarginCertificate)| (c.value >= 0.0).then_some((r, c));
    match strategy {
        Strategy::Interior => {
            let x = gaussian_tensor(n, rng);
            let eta = rng.random::<f64>() * 0.5 * max_eta(cone, n);
            Ok(interior(shift_inside(&x, cone, eta, params, fresh)?))
        }
        Strategy::Boundary => {
            let x = gaussian_tensor(n, rng);
            let sol = solve_shift(&x, cone, 0.0, params)?;
            let c = recertify(&sol.tensor, cone, params, fresh);
            let scal = sol.tensor.scalar();
            Ok((scal > 0.0 && c.value.abs() <= BOUNDARY_RECHECK * scal).then_some((sol.tensor, c)))
        }
        Strategy::Structured => {
            let x = structured_tensor(n, rng);
            let c = recertify(&x, cone, params, fresh);
            if c.value >= 0.0 {
                return Ok(Some((x, c)));
            }
            let eta = rng.random::<f64>() * 0.1 * max_eta(cone, n);
            Ok(interior(shift_inside(&x, cone, eta, params, fresh)?))
        }
        Strategy::Mixed => unreachable!("resolved by the caller"),
    }
}

/// Draws one tensor from `strategy` for `cone`, deterministically in `seed`.
///
/// Interior and structured samples certify `value ≥ 0`; boundary samples
/// certify `|value| ≤ 1e-6·scal` under a fresh seed.
pub fn sample_tensor(
    n: usize,
    cone: ConeSpec,
    strategy: Strategy,
    seed: u64,
    params: &SearchParams,
) -> Result<Sample, VerifyError> {
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = rng_for(seed, attempt as u64);
        let strat = match strategy {
            Strategy::Mixed => [Strategy::Interior, Strategy::Boundary, Strategy::Structured]
                [rng.random_range(0..3)],
            s => s,
        };
        let p = params
            .clone()
            .with_seed(derive_seed(seed, 1000 + attempt as u64));
        let fresh = derive_seed(seed, 2000 + attempt as u64);
        match draw(n, cone, strat, &mut rng, &p, fresh) {
            Ok(Some((tensor, certificate))) => {
                return Ok(Sample {
                    tensor,
                    certificate,
                    strategy: strat,
                    attempts: attempt + 1,
                });
            }
            Ok(None) | Err(VerifyError::Cone(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Err(VerifyError::SamplerStall {
        attempts: MAX_ATTEMPTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::ConeKind;

    #[test]
    fn deficit_hits_theta_exactly() {
        let (n, s, theta) = (5, 0.2, 0.001);
        let k = deficit_for_theta(n, s, theta);
        let r = two_plane_deficit(n, s, k);
        let eig = r.ricci().eigenvalues();
        assert!((eig[0] + eig[1] - theta * r.scalar()).abs() < 1e-12);
        assert!((eig[0] - eig[1]).abs() < 1e-12 && eig[2] > eig[1]);
    }

    #[test]
    fn structured_is_normalized() {
        let mut rng = rng_for(1, 1);
        let r = structured_tensor(6, &mut rng);
        assert!((r.scalar() - 30.0).abs() < 1e-10);
        assert!(r.bianchi_residual() < 1e-12 * r.norm());
    }

    #[test]
    fn pic2_with_delta_at_the_averaging_limit_stalls() {
        let spec = ConeSpec::new(ConeKind::Pic2, 0.05).unwrap();
        let p = SearchParams::default().with_restarts(8);
        assert!(matches!(
            sample_tensor(5, spec, Strategy::Structured, 3, &p),
            Err(VerifyError::SamplerStall { .. })
        ));
    }
}
