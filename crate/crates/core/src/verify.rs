//! Sampling campaigns that check the algebraic curvature inequalities.
//!
//! Every trial draws from its own seeded stream and results are folded in
//! trial order, so a report does not depend on the size of the thread pool.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{
    boundary_point, margin, solve_shift, tangent_cone_contains, two_positivity_margin,
};
use crate::error::{FormatError, VerifyError};
use crate::flow::{flow, FlowOptions};
use crate::frame::{random_orthogonal, ConeKind, ConeSpec, Frame, FrameComponents};
use crate::io::{frame_from_rows, frame_rows};
use crate::rng::{derive_seed, rng_for};
use crate::sample::{
    deficit_for_theta, gaussian_tensor, sample_tensor, structured_tensor, two_plane_deficit,
    Strategy, BOUNDARY_RECHECK,
};
use crate::search::SearchParams;
use crate::tensor::CurvatureTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Campaign {
    RicciBound,
    TwoPositive,
    PicPreservation,
    Pic1Pic2,
    FlowPreservation,
}

impl Campaign {
    pub const ALL: [Campaign; 5] = [
        Campaign::RicciBound,
        Campaign::TwoPositive,
        Campaign::PicPreservation,
        Campaign::Pic1Pic2,
        Campaign::FlowPreservation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Campaign::RicciBound => "ricci-bound",
            Campaign::TwoPositive => "two-positive",
            Campaign::PicPreservation => "pic-preservation",
            Campaign::Pic1Pic2 => "pic1-pic2",
            Campaign::FlowPreservation => "flow-preservation",
        }
    }

    /// Relative tolerance used when the configuration does not give one.
    pub fn default_tolerance(self) -> f64 {
        match self {
            Campaign::RicciBound => 1e-8,
            Campaign::TwoPositive => 0.0,
            Campaign::PicPreservation | Campaign::Pic1Pic2 => 1e-6,
            Campaign::FlowPreservation => 1e-7,
        }
    }

    /// The cone a campaign is defined for, if it fixes one.
    pub fn required_cone(self) -> Option<ConeKind> {
        match self {
            Campaign::RicciBound | Campaign::TwoPositive | Campaign::PicPreservation => {
                Some(ConeKind::Pic)
            }
            Campaign::Pic1Pic2 => Some(ConeKind::Pic2),
            Campaign::FlowPreservation => None,
        }
    }
}

impl fmt::Display for Campaign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Campaign {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Campaign::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown campaign `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub n: usize,
    pub cone: ConeKind,
    pub delta: f64,
    pub theta: f64,
    pub trials: usize,
    pub seed: u64,
    pub sampler: Strategy,
    /// Relative tolerance; each campaign states what it multiplies.
    pub tolerance: Option<f64>,
    pub restarts: usize,
    pub t_end: f64,
    pub normalized: bool,
    /// Keep one record per trial in the report.
    pub records: bool,
}

impl CampaignConfig {
    pub fn new(n: usize, cone: ConeKind, trials: usize, seed: u64) -> Self {
        Self {
            n,
            cone,
            delta: 0.0,
            theta: 0.0,
            trials,
            seed,
            sampler: Strategy::Mixed,
            tolerance: None,
            restarts: 64,
            t_end: 1.0,
            normalized: true,
            records: false,
        }
    }

    pub fn spec(&self) -> ConeSpec {
        ConeSpec {
            kind: self.cone,
            delta: self.delta,
        }
    }

    fn search(&self, seed: u64) -> SearchParams {
        SearchParams::default()
            .with_restarts(self.restarts)
            .with_seed(seed)
    }

    fn validate(&self, campaign: Campaign) -> Result<(), VerifyError> {
        let bad = |m: String| Err(VerifyError::InvalidConfig(m));
        if !(4..=crate::tensor::MAX_DIM).contains(&self.n) {
            return bad(format!("n must lie in 4..={}", crate::tensor::MAX_DIM));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.restarts == 0 {
            return bad("restarts must be >= 1".into());
        }
        if !(self.delta >= 0.0 && self.delta.is_finite())
            || !(self.theta >= 0.0 && self.theta.is_finite())
        {
            return bad("delta and theta must be finite and >= 0".into());
        }
        if let Some(t) = self.tolerance {
            if !(t >= 0.0 && t.is_finite()) {
                return bad("tolerance must be finite and >= 0".into());
            }
        }
        if let Some(kind) = campaign.required_cone() {
            if kind != self.cone {
                return bad(format!("{campaign} is defined for the {kind} cone"));
            }
        }
        if campaign == Campaign::TwoPositive && self.theta > self.delta / (2.0 * self.n as f64) {
            return bad(format!(
                "theta = {} exceeds delta/(2n) = {}",
                self.theta,
                self.delta / (2.0 * self.n as f64)
            ));
        }
        if campaign == Campaign::FlowPreservation && !(self.t_end >= 0.0 && self.t_end.is_finite())
        {
            return bad("t_end must be finite and >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// A frame with its `(λ, μ)`, as stored in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDoc {
    pub vectors: Vec<Vec<f64>>,
    pub lambda: f64,
    pub mu: f64,
}

impl FrameDoc {
    pub fn of(f: &Frame) -> Self {
        Self {
            vectors: frame_rows(f),
            lambda: f.lambda(),
            mu: f.mu(),
        }
    }

    pub fn frame(&self) -> Result<Frame, FormatError> {
        frame_from_rows(&self.vectors, self.lambda, self.mu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub trial: usize,
    pub value: f64,
    pub tolerance: f64,
    pub witness: CurvatureTensor,
    pub frame: Option<FrameDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub admitted: bool,
    pub value: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub campaign: Campaign,
    pub config: CampaignConfig,
    pub attempted: usize,
    pub admitted: usize,
    pub violated: usize,
    pub inconclusive: bool,
    /// Lowest checked value over admitted trials.
    pub worst_value: Option<f64>,
    /// Tensor attaining `worst_value`.
    pub witness: Option<CurvatureTensor>,
    pub witness_frame: Option<FrameDoc>,
    pub outcome: Outcome,
    /// Trials whose sampler gave up.
    pub stalled: usize,
    pub violations: Vec<Violation>,
    pub records: Option<Vec<TrialRecord>>,
    pub wall_seconds: f64,
}

impl CampaignReport {
    pub fn to_json(&self) -> String {
        crate::io::to_json(self)
    }

    pub fn from_json(s: &str) -> Result<Self, FormatError> {
        let r: CampaignReport = serde_json::from_str(s)?;
        if r.admitted > r.attempted || r.violated > r.admitted || r.violations.len() != r.violated {
            return Err(FormatError::Invalid {
                field: "violated",
                reason: "counts are inconsistent".into(),
            });
        }
        if let Some(f) = &r.witness_frame {
            f.frame()?;
        }
        for v in &r.violations {
            if let Some(f) = &v.frame {
                f.frame()?;
            }
        }
        Ok(r)
    }
}

enum Trial {
    Rejected {
        stalled: bool,
        note: &'static str,
    },
    Admitted {
        value: f64,
        tolerance: f64,
        violated: bool,
        tensor: CurvatureTensor,
        frame: Option<Frame>,
    },
}

impl Trial {
    fn checked(value: f64, tolerance: f64, tensor: CurvatureTensor, frame: Option<Frame>) -> Self {
        Trial::Admitted {
            value,
            tolerance,
            violated: value < -tolerance,
            tensor,
            frame,
        }
    }

    fn from_error(e: VerifyError) -> Result<Self, VerifyError> {
        match e {
            VerifyError::SamplerStall { .. } => Ok(Trial::Rejected {
                stalled: true,
                note: "sampler stall",
            }),
            VerifyError::Cone(_) => Ok(Trial::Rejected {
                stalled: false,
                note: "no certificate",
            }),
            other => Err(other),
        }
    }
}

fn run(
    campaign: Campaign,
    config: &CampaignConfig,
    trial: impl Fn(usize, u64) -> Result<Trial, VerifyError> + Sync,
) -> Result<CampaignReport, VerifyError> {
    config.validate(campaign)?;
    let start = Instant::now();
    let results: Vec<Result<Trial, VerifyError>> = (0..config.trials)
        .into_par_iter()
        .map(|t| trial(t, derive_seed(config.seed, t as u64)).or_else(Trial::from_error))
        .collect();
    let mut report = CampaignReport {
        campaign,
        config: config.clone(),
        attempted: config.trials,
        admitted: 0,
        violated: 0,
        inconclusive: true,
        worst_value: None,
        witness: None,
        witness_frame: None,
        outcome: Outcome::Inconclusive,
        stalled: 0,
        violations: Vec::new(),
        records: config.records.then(Vec::new),
        wall_seconds: 0.0,
    };
    for (t, res) in results.into_iter().enumerate() {
        let (admitted, value, note) = match res? {
            Trial::Rejected { stalled, note } => {
                report.stalled += stalled as usize;
                (false, None, note.to_string())
            }
            Trial::Admitted {
                value,
                tolerance,
                violated,
                tensor,
                frame,
            } => {
                report.admitted += 1;
                if violated {
                    report.violated += 1;
                    report.violations.push(Violation {
                        trial: t,
                        value,
                        tolerance,
                        witness: tensor.clone(),
                        frame: frame.as_ref().map(FrameDoc::of),
                    });
                }
                if report.worst_value.is_none_or(|w| value < w) {
                    report.worst_value = Some(value);
                    report.witness = Some(tensor);
                    report.witness_frame = frame.as_ref().map(FrameDoc::of);
                }
                (
                    true,
                    Some(value),
                    if violated {
                        "violation".into()
                    } else {
                        "ok".into()
                    },
                )
            }
        };
        if let Some(records) = report.records.as_mut() {
            records.push(TrialRecord {
                trial: t,
                admitted,
                value,
                note,
            });
        }
    }
    report.inconclusive = report.admitted == 0;
    report.outcome = if report.inconclusive {
        Outcome::Inconclusive
    } else if report.violated > 0 {
        Outcome::Fail
    } else {
        Outcome::Pass
    };
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

pub fn run_campaign(
    campaign: Campaign,
    config: &CampaignConfig,
) -> Result<CampaignReport, VerifyError> {
    match campaign {
        Campaign::RicciBound => verify_ricci_bound(config),
        Campaign::TwoPositive => verify_two_positive_derivative(config),
        Campaign::PicPreservation => verify_pic_preservation(config),
        Campaign::Pic1Pic2 => verify_pic1_pic2_step(config),
        Campaign::FlowPreservation => verify_flow_preservation(config),
    }
}

fn relative_tolerance(config: &CampaignConfig, campaign: Campaign) -> f64 {
    config.tolerance.unwrap_or(campaign.default_tolerance())
}

/// Checks `½·scal − max Ric ≥ −tol·scal` on certified PIC samples.
pub fn verify_ricci_bound(config: &CampaignConfig) -> Result<CampaignReport, VerifyError> {
    let rel = relative_tolerance(config, Campaign::RicciBound);
    run(Campaign::RicciBound, config, |_, seed| {
        let s = sample_tensor(
            config.n,
            config.spec(),
            config.sampler,
            seed,
            &config.search(derive_seed(seed, 1)),
        )?;
        let r = s.tensor;
        let scal = r.scalar();
        if !(s.certificate.is_member() && scal > 0.0) {
            return Ok(Trial::Rejected {
                stalled: false,
                note: "not certified",
            });
        }
        let top = *r.ricci().eigenvalues().last().expect("n >= 4");
        Ok(Trial::checked(
            0.5 * scal - top,
            rel * scal,
            r,
            Some(s.certificate.frame),
        ))
    })
}

/// One-sided derivative of `λ₁ + λ₂` under `dR/dt = Q(R)`, resolving eigenvalue clusters.
///
/// Eigenvalues closer than `cluster_tol` are treated as equal; inside the
/// cluster that meets the second eigenvalue the derivative picks the smallest
/// eigenvalues of `Ric(Q)` restricted to it.
pub fn two_smallest_derivative(r: &CurvatureTensor, cluster_tol: f64) -> f64 {
    let (vals, vecs) = r.ricci().eigen();
    let rq = r.ricci_of_q().in_basis(&vecs);
    let n = vals.len();
    // Cluster containing index 1.
    let mut lo = 1;
    while lo > 0 && vals[1] - vals[lo - 1] <= cluster_tol {
        lo -= 1;
    }
    let mut hi = 1;
    while hi + 1 < n && vals[hi + 1] - vals[1] <= cluster_tol {
        hi += 1;
    }
    let block = nalgebra::DMatrix::from_fn(hi - lo + 1, hi - lo + 1, |a, b| rq.get(lo + a, lo + b));
    let mut ev: Vec<f64> = block.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    if lo == 0 {
        ev[0] + ev[1]
    } else {
        rq.get(0, 0) + ev[0]
    }
}

/// `Ric(Q)₁₁ + Ric(Q)₂₂ − θ·scal(Q)` in a Ricci eigenbasis.
pub fn two_positive_quantity(r: &CurvatureTensor, theta: f64) -> f64 {
    let tol = 1e-9 * (1.0 + r.ricci().frobenius_norm());
    two_smallest_derivative(r, tol) - theta * r.scal_of_q()
}

fn two_positive_candidate(
    config: &CampaignConfig,
    rng: &mut impl Rng,
    trial: usize,
    seed: u64,
) -> Option<CurvatureTensor> {
    let n = config.n;
    let spec = ConeSpec {
        kind: ConeKind::Pic,
        delta: config.delta,
    };
    let u = random_orthogonal(n, rng);
    let c = match trial % 4 {
        0 | 1 => {
            let s = rng.random::<f64>() * 2.0;
            let k0 = deficit_for_theta(n, s, config.theta);
            // Trial family 0 sits exactly on λ₁ + λ₂ = θ·scal.
            let k = if trial % 4 == 0 {
                k0
            } else {
                k0 + rng.random::<f64>() * 0.1 * (n - 1) as f64 * s
            };
            two_plane_deficit(n, s, k)
        }
        2 => {
            let s = rng.random::<f64>() * 0.5;
            &CurvatureTensor::round_factor(n, n - 2, 1.0) + &(CurvatureTensor::identity(n) * s)
        }
        _ => {
            let x = if rng.random::<bool>() {
                gaussian_tensor(n, rng)
            } else {
                structured_tensor(n, rng)
            };
            solve_shift(&x, spec, 0.0, &config.search(seed))
                .ok()?
                .tensor
        }
    };
    Some(c.conjugate(&u))
}

/// Checks the derivative inequality for two-positive Ricci curvature on
/// uniformly PIC tensors with `λ₁ + λ₂ ≤ θ·scal` and `scal > 0`.
pub fn verify_two_positive_derivative(
    config: &CampaignConfig,
) -> Result<CampaignReport, VerifyError> {
    let spec = ConeSpec {
        kind: ConeKind::Pic,
        delta: config.delta,
    };
    run(Campaign::TwoPositive, config, |t, seed| {
        let mut rng = rng_for(seed, 0);
        let Some(r) = two_positive_candidate(config, &mut rng, t, derive_seed(seed, 1)) else {
            return Ok(Trial::Rejected {
                stalled: false,
                note: "no candidate",
            });
        };
        let scal = r.scalar();
        if !(scal > 0.0) {
            return Ok(Trial::Rejected {
                stalled: false,
                note: "scal <= 0",
            });
        }
        if two_positivity_margin(&r, config.theta) > 1e-12 * (1.0 + scal) {
            return Ok(Trial::Rejected {
                stalled: false,
                note: "lambda1 + lambda2 > theta scal",
            });
        }
        let cert = margin(&r, spec, &config.search(derive_seed(seed, 2)));
        if !cert.is_member() {
            return Ok(Trial::Rejected {
                stalled: false,
                note: "not uniformly PIC",
            });
        }
        let value = two_positive_quantity(&r, config.theta);
        Ok(Trial::Admitted {
            value,
            tolerance: 0.0,
            violated: !(value > 0.0),
            tensor: r,
            frame: Some(cert.frame),
        })
    })
}

/// A boundary tensor of `spec` drawn with `sampler`.
fn boundary_sample(
    config: &CampaignConfig,
    spec: ConeSpec,
    seed: u64,
) -> Result<CurvatureTensor, VerifyError> {
    let params = config.search(derive_seed(seed, 1));
    let s = sample_tensor(config.n, spec, config.sampler, seed, &params)?;
    let scal = s.tensor.scalar();
    if s.certificate.value.abs() <= BOUNDARY_RECHECK * scal.abs() {
        return Ok(s.tensor);
    }
    Ok(boundary_point(&s.tensor, spec, &params)?.0)
}

/// Tangent-cone check of `Q(R_b)` on boundary points of weak PIC.
pub fn verify_pic_preservation(config: &CampaignConfig) -> Result<CampaignReport, VerifyError> {
    let rel = relative_tolerance(config, Campaign::PicPreservation);
    let spec = ConeSpec::weak(ConeKind::Pic);
    run(Campaign::PicPreservation, config, |t, seed| {
        let rb = if t == 0 {
            boundary_point(
                &CurvatureTensor::cylinder(config.n, 1.0),
                spec,
                &config.search(seed),
            )?
            .0
        } else {
            boundary_sample(config, spec, seed)?
        };
        let scal = rb.scalar();
        if !(scal > 0.0) {
            return Ok(Trial::Rejected {
                stalled: false,
                note: "scal <= 0",
            });
        }
        let tol = rel * scal * scal;
        let params = config.search(derive_seed(seed, 3)).with_tolerance(tol);
        let test = match tangent_cone_contains(&rb, &rb.q_map(), ConeKind::Pic, 1e-6, &params) {
            Ok(test) => test,
            Err(_) => {
                return Ok(Trial::Rejected {
                    stalled: false,
                    note: "not on boundary",
                })
            }
        };
        match test.worst() {
            Some((v, f)) => {
                let f = f.clone();
                Ok(Trial::checked(v, tol, rb, Some(f)))
            }
            None => Ok(Trial::Rejected {
                stalled: false,
                note: "empty active set",
            }),
        }
    })
}

/// `Q(S)` functional at the minimizing `(F, λ, μ)` of boundary points of PIC2.
pub fn verify_pic1_pic2_step(config: &CampaignConfig) -> Result<CampaignReport, VerifyError> {
    let rel = relative_tolerance(config, Campaign::Pic1Pic2);
    let spec = ConeSpec::weak(ConeKind::Pic2);
    run(Campaign::Pic1Pic2, config, |t, seed| {
        let s = if t == 0 {
            CurvatureTensor::cylinder(config.n, 1.0)
        } else {
            boundary_sample(config, spec, seed)?
        };
        let scal = s.scalar();
        let cert = margin(&s, spec, &config.search(derive_seed(seed, 3)));
        if cert.value.abs() > BOUNDARY_RECHECK * scal.abs().max(f64::MIN_POSITIVE) && !s.is_zero() {
            return Ok(Trial::Rejected {
                stalled: false,
                note: "not on boundary",
            });
        }
        let f = &cert.frame;
        let value =
            FrameComponents::of(&s.q_map(), f.vectors()).value(ConeKind::Pic2, f.lambda(), f.mu());
        Ok(Trial::checked(
            value,
            rel * scal * scal,
            s,
            Some(cert.frame),
        ))
    })
}

/// Margins of the configured cone along normalized flows from certified members.
///
/// With `θ > 0`, starts satisfying `λ₁ + λ₂ ≥ θ·scal` are also checked to keep it.
pub fn verify_flow_preservation(config: &CampaignConfig) -> Result<CampaignReport, VerifyError> {
    let rel = relative_tolerance(config, Campaign::FlowPreservation);
    let spec = config.spec();
    run(Campaign::FlowPreservation, config, |t, seed| {
        let n = config.n;
        let r0 = match t {
            0 => CurvatureTensor::identity(n),
            1 => &(CurvatureTensor::identity(n) * 0.7) + &(CurvatureTensor::cylinder(n, 1.0) * 0.3),
            _ => {
                sample_tensor(
                    n,
                    spec,
                    config.sampler,
                    seed,
                    &config.search(derive_seed(seed, 1)),
                )?
                .tensor
            }
        };
        let start = margin(&r0, spec, &config.search(derive_seed(seed, 2)));
        let scal0 = r0.scalar();
        if !(start.is_member() && scal0 > 0.0) {
            return Ok(Trial::Rejected {
                stalled: false,
                note: "start not certified",
            });
        }
        let opts = FlowOptions {
            samples: 21,
            ..FlowOptions::default()
                .normalized(config.normalized)
                .without_margins()
        };
        let traj = flow(&r0, config.t_end, &opts)?;
        let track_two = config.theta > 0.0 && two_positivity_margin(&r0, config.theta) >= 0.0;
        let mut worst = (f64::INFINITY, 0usize, None);
        for (k, s) in traj.samples.iter().enumerate() {
            let scal = s.tensor.scalar();
            let c = margin(
                &s.tensor,
                spec,
                &config.search(derive_seed(seed, 10 + k as u64)),
            );
            let m = c.value / scal;
            if m < worst.0 {
                worst = (m, k, Some(c.frame));
            }
            if track_two {
                let v = two_positivity_margin(&s.tensor, config.theta) / scal;
                if v < worst.0 {
                    worst = (v, k, None);
                }
            }
        }
        let (value, k, frame) = worst;
        Ok(Trial::checked(
            value,
            rel,
            traj.samples[k].tensor.clone(),
            frame,
        ))
    })
}
