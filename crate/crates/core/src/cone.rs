//! Cone margins, membership, boundary projection and tangent-cone tests.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::ConeError;
use crate::frame::{
    effective_params, min_over_lambda_mu, ConeKind, ConeSpec, Frame, FrameComponents,
};
use crate::rng::rng_for;
use crate::search::{search, SearchOutcome, SearchParams};
use crate::tensor::CurvatureTensor;

/// Best frame found for `R − δ·scal(R)·I` together with search metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginCertificate {
    pub value: f64,
    pub frame: Frame,
    pub restarts: usize,
    pub converged_restarts: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl MarginCertificate {
    pub fn is_member(&self) -> bool {
        self.value >= -self.tolerance
    }

    /// Value of the identity tensor's functional on the certificate frame.
    pub fn identity_value(&self, kind: ConeKind) -> f64 {
        let (l, m) = effective_params(kind, self.frame.lambda(), self.frame.mu());
        (1.0 + l * l) * (1.0 + m * m)
    }
}

fn certificate_from(
    x: &CurvatureTensor,
    kind: ConeKind,
    outcome: &SearchOutcome,
    tolerance: f64,
    seed: u64,
) -> MarginCertificate {
    let best = outcome.best();
    // Recompute on the final frame so the value is exactly the functional there.
    let comps = FrameComponents::of(x, &best.vectors);
    let (value, l, m) = min_over_lambda_mu(&comps, kind);
    MarginCertificate {
        value,
        frame: Frame::from_parts(best.vectors.clone(), l, m),
        restarts: outcome.locals.len(),
        converged_restarts: outcome.converged(),
        tolerance,
        seed,
    }
}

/// Searched minimum of the cone functional of `R − δ·scal(R)·I` over frames.
pub fn margin(r: &CurvatureTensor, cone: ConeSpec, params: &SearchParams) -> MarginCertificate {
    margin_warm(r, cone, params, &[]).0
}

pub(crate) fn margin_warm(
    r: &CurvatureTensor,
    cone: ConeSpec,
    params: &SearchParams,
    warm: &[DMatrix<f64>],
) -> (MarginCertificate, SearchOutcome) {
    let x = cone.shifted(r);
    let outcome = search(&x, cone.kind, params, warm);
    let cert = certificate_from(
        &x,
        cone.kind,
        &outcome,
        params.tolerance_for(r.scalar()),
        params.seed,
    );
    (cert, outcome)
}

/// Membership in the (uniform) cone.
pub fn is_member(
    r: &CurvatureTensor,
    cone: ConeSpec,
    params: &SearchParams,
) -> (bool, MarginCertificate) {
    let cert = margin(r, cone, params);
    (cert.is_member(), cert)
}

/// Uniform PIC tested through the shift law: `margin(R, PIC) ≥ 4δ·scal(R)`.
pub fn is_uniform_pic_by_shift(
    r: &CurvatureTensor,
    delta: f64,
    params: &SearchParams,
) -> (bool, MarginCertificate) {
    let cert = margin(r, ConeSpec::weak(ConeKind::Pic), params);
    let ok = cert.value - 4.0 * delta * r.scalar() >= -cert.tolerance;
    (ok, cert)
}

/// A shift `s` with `margin(X + sI) ≈ η·scal(X + sI)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSolution {
    pub shift: f64,
    pub tensor: CurvatureTensor,
    pub certificate: MarginCertificate,
    /// `margin − η·scal` at the returned tensor.
    pub residual: f64,
    /// `dφ/ds` on the certificate frame.
    pub slope: f64,
    pub iterations: usize,
}

const SHIFT_MAX_ITERS: usize = 60;
const KEEP_WARM: usize = 8;

/// Solves `φ(s) = margin(X + sI) − η·scal(X + sI) = 0`.
///
/// `φ` is concave in `s`, and each frame gives an affine upper bound whose root
/// is a Newton step; a bracket falls back to bisection when a step leaves it.
/// The iterates approach the root from the side where `φ ≤ 0`.
pub fn solve_shift(
    x: &CurvatureTensor,
    cone: ConeSpec,
    eta: f64,
    params: &SearchParams,
) -> Result<ShiftSolution, ConeError> {
    let n = x.dim();
    let nn = (n * (n - 1)) as f64;
    let gain = cone.identity_gain(n);
    let id = CurvatureTensor::identity(n);
    let mut s = 0.0f64;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut warm: Vec<DMatrix<f64>> = Vec::new();
    for iter in 1..=SHIFT_MAX_ITERS {
        let y = x + &(&id * s);
        let scal = y.scalar();
        let (cert, outcome) = margin_warm(
            &y,
            cone,
            &params
                .clone()
                .with_seed(params.seed.wrapping_add(iter as u64)),
            &warm,
        );
        let phi = cert.value - eta * scal;
        let slope = gain * cert.identity_value(cone.kind) - eta * nn;
        if !(slope > 0.0) {
            return Err(ConeError::UnreachableBoundary(slope));
        }
        if phi > 0.0 {
            hi = hi.min(s);
        } else {
            lo = lo.max(s);
        }
        let mut next = s - phi / slope;
        if !(next > lo && next < hi) && lo.is_finite() && hi.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let width = 1e-9 * (1.0 + scal.abs());
        let done = phi.abs() <= 1e-12 * (1.0 + scal.abs())
            || (next - s).abs() <= width
            || (hi - lo) <= width;
        if done || iter == SHIFT_MAX_ITERS {
            return Ok(ShiftSolution {
                shift: s,
                tensor: y,
                certificate: cert,
                residual: phi,
                slope,
                iterations: iter,
            });
        }
        let mut order: Vec<usize> = (0..outcome.locals.len()).collect();
        order.sort_by(|&a, &b| outcome.locals[a].value.total_cmp(&outcome.locals[b].value));
        warm = order
            .iter()
            .take(KEEP_WARM)
            .map(|&i| outcome.locals[i].vectors.clone())
            .collect();
        s = next;
    }
    unreachable!()
}

/// Moves `R` along `−I` onto the cone boundary. Returns `(R − μ*·I, μ*)`.
pub fn boundary_point(
    r: &CurvatureTensor,
    cone: ConeSpec,
    params: &SearchParams,
) -> Result<(CurvatureTensor, f64), ConeError> {
    let cert = margin(r, cone, params);
    if !(cert.value > 0.0) {
        return Err(ConeError::NotInterior(cert.value));
    }
    let sol = solve_shift(r, cone, 0.0, params)?;
    Ok((sol.tensor, -sol.shift))
}

/// Result of a tangent-cone membership test.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentTest {
    pub contains: bool,
    /// Distinct near-active frames of the boundary tensor (with their `(λ, μ)`).
    pub active: Vec<Frame>,
    /// Functional of `S` on each active frame.
    pub values: Vec<f64>,
    /// Tolerance applied to `S`.
    pub tolerance: f64,
}

impl TangentTest {
    /// Lowest value of `S` on the active set and the frame attaining it.
    pub fn worst(&self) -> Option<(f64, &Frame)> {
        self.values
            .iter()
            .zip(&self.active)
            .fold(None, |acc: Option<(f64, &Frame)>, (&v, f)| match acc {
                Some((w, _)) if w <= v => acc,
                _ => Some((v, f)),
            })
    }
}

/// Angular clustering radius for active frames.
pub const CLUSTER_RADIUS: f64 = 1e-3;

/// Sign patterns flipping an even number of frame vectors; all of them fix every functional.
const EVEN_SIGNS: [[f64; 4]; 8] = [
    [1.0, 1.0, 1.0, 1.0],
    [-1.0, -1.0, 1.0, 1.0],
    [-1.0, 1.0, -1.0, 1.0],
    [-1.0, 1.0, 1.0, -1.0],
    [1.0, -1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0, -1.0],
    [1.0, 1.0, -1.0, -1.0],
    [-1.0, -1.0, -1.0, -1.0],
];

/// Distance between frames modulo the functional's discrete symmetries.
pub fn frame_distance(a: &Frame, b: &Frame, kind: ConeKind) -> f64 {
    let perms: &[[usize; 4]] = match kind {
        ConeKind::Pic => &[[0, 1, 2, 3], [1, 0, 3, 2]],
        _ => &[[0, 1, 2, 3]],
    };
    let (ea, eb) = (a.vectors(), b.vectors());
    let mut best = f64::INFINITY;
    for p in perms {
        for signs in &EVEN_SIGNS {
            let mut d = 0.0f64;
            for c in 0..4 {
                let diff = (0..ea.nrows())
                    .map(|i| (ea[(i, c)] - signs[c] * eb[(i, p[c])]).powi(2))
                    .sum::<f64>();
                d = d.max(diff.sqrt());
            }
            best = best.min(d);
        }
    }
    let (la, ma) = effective_params(kind, a.lambda(), a.mu());
    let (lb, mb) = effective_params(kind, b.lambda(), b.mu());
    best.max((la - lb).abs()).max((ma - mb).abs())
}

/// Active frames of `R` (value ≤ `eps_active·scal(R)`) from `search`, merged within `CLUSTER_RADIUS`.
pub fn active_frames(
    r: &CurvatureTensor,
    outcome: &SearchOutcome,
    kind: ConeKind,
    eps_active: f64,
) -> Vec<Frame> {
    let threshold = eps_active * r.scalar().abs();
    let mut order: Vec<usize> = (0..outcome.locals.len()).collect();
    order.sort_by(|&a, &b| outcome.locals[a].value.total_cmp(&outcome.locals[b].value));
    let mut active: Vec<Frame> = Vec::new();
    for i in order {
        let l = &outcome.locals[i];
        if l.value > threshold {
            break;
        }
        let f = Frame::from_parts(l.vectors.clone(), l.lambda, l.mu);
        if active
            .iter()
            .all(|g| frame_distance(g, &f, kind) > CLUSTER_RADIUS)
        {
            active.push(f);
        }
    }
    active
}

/// Restart multiplier for the wide active-set search.
pub const WIDE_SEARCH_FACTOR: usize = 4;

/// Tests whether `S` lies in the tangent cone of the cone at the boundary tensor `R_b`.
///
/// Active frames come from a search with `WIDE_SEARCH_FACTOR × restarts` starts.
/// `S` is accepted when its functional is at least `−tolerance` on each of them,
/// where the tolerance is `params.tolerance` or the default for `scal(S)`.
pub fn tangent_cone_contains(
    r_b: &CurvatureTensor,
    s: &CurvatureTensor,
    kind: ConeKind,
    eps_active: f64,
    params: &SearchParams,
) -> Result<TangentTest, ConeError> {
    if s.dim() != r_b.dim() {
        return Err(ConeError::FrameDimMismatch {
            frame: s.dim(),
            tensor: r_b.dim(),
        });
    }
    let wide = params
        .clone()
        .with_restarts(params.restarts * WIDE_SEARCH_FACTOR);
    let outcome = search(r_b, kind, &wide, &[]);
    let boundary_tol = crate::search::default_tolerance(r_b.scalar());
    let best = outcome.best().value;
    if best.abs() > boundary_tol {
        return Err(ConeError::NotOnBoundary {
            margin: best,
            tolerance: boundary_tol,
        });
    }
    let active = active_frames(r_b, &outcome, kind, eps_active);
    let tolerance = params.tolerance_for(s.scalar());
    let values: Vec<f64> = active
        .iter()
        .map(|f| FrameComponents::of(s, f.vectors()).value(kind, f.lambda(), f.mu()))
        .collect();
    let contains = values.iter().all(|&v| v >= -tolerance);
    Ok(TangentTest {
        contains,
        active,
        values,
        tolerance,
    })
}

/// `λ₁ + λ₂ − θ·scal` for the two smallest Ricci eigenvalues.
pub fn two_positivity_margin(r: &CurvatureTensor, theta: f64) -> f64 {
    let eig = r.ricci().eigenvalues();
    eig[0] + eig[1] - theta * r.scalar()
}

/// Empirical compactness and tangent-cone constants of a cone.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConstantsReport {
    pub kind: ConeKind,
    pub n: usize,
    /// Largest `‖R‖ / scal(R)` over sampled members.
    pub theta_upper: f64,
    /// Smallest `f_{Q(R_b)}(F) / (scal(R_b)² f_I(F))` over boundary samples and active frames, floored at 0.
    pub theta_lower: f64,
    /// The same minimum before flooring.
    pub raw_theta_lower: f64,
    pub member_samples: usize,
    pub boundary_samples: usize,
    pub active_frames: usize,
    pub failed_samples: usize,
}

/// Estimates `θ` and `Θ` for `kind` in dimension `n` from `trials` sampled tensors.
pub fn estimate_constants(
    kind: ConeKind,
    n: usize,
    trials: usize,
    seed: u64,
    params: &SearchParams,
) -> ConstantsReport {
    let spec = ConeSpec::weak(kind);
    let id = CurvatureTensor::identity(n);
    struct Trial {
        ratio: Option<f64>,
        theta: Option<f64>,
        frames: usize,
    }
    let trials_out: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let p = params
                .clone()
                .with_seed(crate::rng::derive_seed(seed, t as u64));
            let mut rng = rng_for(seed, t as u64);
            let x = if t == 0 {
                id.clone()
            } else {
                crate::sample::gaussian_tensor(n, &mut rng)
            };
            let eta = if t == 0 {
                0.0
            } else {
                rng.random::<f64>() * 0.5 * kind.identity_margin() / (n * (n - 1)) as f64
            };
            let member = if t == 0 {
                Ok(id.clone())
            } else {
                solve_shift(&x, spec, eta, &p).map(|s| s.tensor)
            };
            let Ok(member) = member else {
                return Trial {
                    ratio: None,
                    theta: None,
                    frames: 0,
                };
            };
            let scal = member.scalar();
            let ratio = (scal > 0.0).then(|| member.norm() / scal);
            let Ok(rb) = solve_shift(&member, spec, 0.0, &p).map(|s| s.tensor) else {
                return Trial {
                    ratio,
                    theta: None,
                    frames: 0,
                };
            };
            let Ok(test) = tangent_cone_contains(&rb, &rb.q_map(), kind, 1e-6, &p) else {
                return Trial {
                    ratio,
                    theta: None,
                    frames: 0,
                };
            };
            let sb = rb.scalar();
            let theta = test
                .active
                .iter()
                .zip(&test.values)
                .map(|(f, v)| {
                    let (l, m) = effective_params(kind, f.lambda(), f.mu());
                    v / (sb * sb * (1.0 + l * l) * (1.0 + m * m))
                })
                .fold(None, |acc: Option<f64>, v| {
                    Some(acc.map_or(v, |a| a.min(v)))
                });
            Trial {
                ratio,
                theta,
                frames: test.active.len(),
            }
        })
        .collect();
    let mut report = ConstantsReport {
        kind,
        n,
        theta_upper: 0.0,
        theta_lower: 0.0,
        raw_theta_lower: f64::INFINITY,
        member_samples: 0,
        boundary_samples: 0,
        active_frames: 0,
        failed_samples: 0,
    };
    for t in trials_out {
        match t.ratio {
            Some(r) => {
                report.member_samples += 1;
                report.theta_upper = report.theta_upper.max(r);
            }
            None => report.failed_samples += 1,
        }
        if let Some(th) = t.theta {
            report.boundary_samples += 1;
            report.raw_theta_lower = report.raw_theta_lower.min(th);
        }
        report.active_frames += t.frames;
    }
    report.theta_lower = if report.raw_theta_lower.is_finite() {
        report.raw_theta_lower.max(0.0)
    } else {
        0.0
    };
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> SearchParams {
        SearchParams::default().with_restarts(16)
    }

    #[test]
    fn identity_margins() {
        let i = CurvatureTensor::identity(5);
        for kind in ConeKind::ALL {
            let c = margin(&i, ConeSpec::weak(kind), &quick());
            assert!((c.value - kind.identity_margin()).abs() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn negative_identity_is_not_member() {
        let (ok, c) = is_member(
            &(-CurvatureTensor::identity(5)),
            ConeSpec::weak(ConeKind::Pic),
            &quick(),
        );
        assert!(!ok);
        assert!((c.value + 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_tensor_has_zero_margin() {
        let c = margin(
            &CurvatureTensor::zero(6),
            ConeSpec::weak(ConeKind::Pic2),
            &quick(),
        );
        assert_eq!(c.value, 0.0);
        assert!(c.is_member());
    }

    #[test]
    fn boundary_of_scaled_identity() {
        let (rb, mu) = boundary_point(
            &(CurvatureTensor::identity(5) * 2.0),
            ConeSpec::weak(ConeKind::Pic),
            &quick(),
        )
        .unwrap();
        assert!((mu - 2.0).abs() < 1e-12);
        assert!(rb.norm() < 1e-11);
        let (_, mu) = boundary_point(
            &CurvatureTensor::identity(5),
            ConeSpec::weak(ConeKind::Pic2),
            &quick(),
        )
        .unwrap();
        assert!((mu - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_rejects_exterior() {
        let r = CurvatureTensor::identity(5) * -1.0;
        assert!(matches!(
            boundary_point(&r, ConeSpec::weak(ConeKind::Pic), &quick()),
            Err(ConeError::NotInterior(_))
        ));
    }

    #[test]
    fn unreachable_when_identity_gain_vanishes() {
        let spec = ConeSpec::new(ConeKind::Pic2, 0.05).unwrap();
        let r = CurvatureTensor::cylinder(5, 1.0);
        assert!(matches!(
            solve_shift(&r, spec, 0.0, &quick()),
            Err(ConeError::UnreachableBoundary(_))
        ));
    }

    #[test]
    fn two_positivity_examples() {
        assert!((two_positivity_margin(&CurvatureTensor::identity(5), 0.1) - 6.0).abs() < 1e-12);
        let cyl = CurvatureTensor::cylinder(5, 1.0);
        assert!((two_positivity_margin(&cyl, 0.0) - 3.0).abs() < 1e-12);
        assert!(two_positivity_margin(&cyl, 0.25).abs() < 1e-12);
    }

    #[test]
    fn frame_distance_respects_symmetries() {
        let f = Frame::standard(5);
        let swapped = Frame::coordinate(5, [1, 0, 3, 2]);
        assert!(frame_distance(&f, &swapped, ConeKind::Pic) < 1e-15);
        assert!(frame_distance(&f, &swapped, ConeKind::Pic2) > 0.5);
        let v = f.vectors().map(|x| x) * -1.0;
        let flipped = Frame::from_parts(v, 1.0, 1.0);
        assert!(frame_distance(&f, &flipped, ConeKind::Pic2) < 1e-15);
    }
}
