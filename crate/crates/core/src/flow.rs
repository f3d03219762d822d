//! The Hamilton ODE `dR/dt = Q(R)` and its scale-normalized version.
//!
//! Integration uses the Dormand–Prince 5(4) pair with a norm-wise relative
//! error test. Steps are shortened to land exactly on the requested output
//! times, so samples carry full integrator accuracy.

use serde::Serialize;

use crate::cone::margin;
use crate::error::FlowError;
use crate::frame::{ConeKind, ConeSpec};
use crate::search::{default_tolerance, SearchParams};
use crate::tensor::CurvatureTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    pub initial_step: f64,
    /// Relative local error target.
    pub rtol: f64,
    /// Hold `scal` fixed: drift `−(scal(Q)/scal)·R` plus rescaling after every step.
    pub normalized: bool,
    /// Unnormalized runs stop once `‖R‖` exceeds this multiple of `‖R₀‖`.
    pub blowup_factor: f64,
    /// Output times in `[0, t_end]`; `None` means `samples` equally spaced points.
    pub sample_times: Option<Vec<f64>>,
    pub samples: usize,
    pub max_steps: usize,
    /// Compute cone margins at each sample.
    pub margins: bool,
    /// Search used for the per-sample margins.
    pub margin_params: SearchParams,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            initial_step: 1e-3,
            rtol: 1e-8,
            normalized: false,
            blowup_factor: 1e8,
            sample_times: None,
            samples: 51,
            max_steps: 1_000_000,
            margins: true,
            margin_params: SearchParams::default().with_restarts(8),
        }
    }
}

impl FlowOptions {
    pub fn normalized(mut self, on: bool) -> Self {
        self.normalized = on;
        self
    }

    pub fn without_margins(mut self) -> Self {
        self.margins = false;
        self
    }

    fn times(&self, t_end: f64) -> Vec<f64> {
        match &self.sample_times {
            Some(ts) => ts.clone(),
            None => {
                let k = self.samples.max(2) - 1;
                (0..=k)
                    .map(|i| {
                        if i == k {
                            t_end
                        } else {
                            t_end * i as f64 / k as f64
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Per-sample diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub scal: f64,
    pub ricci_eigs: Vec<f64>,
    pub pic_margin: f64,
    pub pic1_margin: f64,
    pub pic2_margin: f64,
    pub pinching_ratio: f64,
}

impl Diagnostics {
    pub fn of(r: &CurvatureTensor, params: Option<&SearchParams>) -> Self {
        let m = |kind| params.map_or(f64::NAN, |p| margin(r, ConeSpec::weak(kind), p).value);
        Self {
            scal: r.scalar(),
            ricci_eigs: r.ricci().eigenvalues(),
            pic_margin: m(ConeKind::Pic),
            pic1_margin: m(ConeKind::Pic1),
            pic2_margin: m(ConeKind::Pic2),
            pinching_ratio: r.pinching_ratio(),
        }
    }

    pub fn margin(&self, kind: ConeKind) -> f64 {
        match kind {
            ConeKind::Pic => self.pic_margin,
            ConeKind::Pic1 => self.pic1_margin,
            ConeKind::Pic2 => self.pic2_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub tensor: CurvatureTensor,
    pub diag: Diagnostics,
    /// Size of the accepted step that produced or bracketed this sample.
    pub accepted_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub accepted: usize,
    pub rejected: usize,
    pub normalized: bool,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectories are never empty")
    }
}

fn rhs(r: &CurvatureTensor, normalized: bool) -> Result<CurvatureTensor, FlowError> {
    let q = r.q_map();
    if !normalized {
        return Ok(q);
    }
    let scal = r.scalar();
    if scal == 0.0 {
        return Err(FlowError::ZeroScal);
    }
    let rate = q.scalar() / scal;
    Ok(&q - &(r * rate))
}

// Dormand–Prince 5(4) tableau; the field is autonomous, so the nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights are the last row of A; these are fifth minus fourth order.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Step {
    y: CurvatureTensor,
    f_end: CurvatureTensor,
    err: f64,
}

fn dp_step(
    y: &CurvatureTensor,
    f0: &CurvatureTensor,
    h: f64,
    normalized: bool,
) -> Result<Step, FlowError> {
    let mut k: Vec<CurvatureTensor> = Vec::with_capacity(7);
    k.push(f0.clone());
    for stage in 1..7 {
        let mut yi = y.clone();
        for (j, kj) in k.iter().enumerate() {
            let a = A[stage][j];
            if a != 0.0 {
                yi += &(kj * (h * a));
            }
        }
        if stage == 6 {
            let f = rhs(&yi, normalized)?;
            let mut err = CurvatureTensor::zero(y.dim());
            for (j, kj) in k.iter().chain(std::iter::once(&f)).enumerate() {
                if E[j] != 0.0 {
                    err += &(kj * (h * E[j]));
                }
            }
            let scale = y.norm().max(yi.norm());
            let err = if scale > 0.0 {
                err.norm() / scale
            } else {
                err.norm()
            };
            return Ok(Step {
                y: yi,
                f_end: f,
                err,
            });
        }
        k.push(rhs(&yi, normalized)?);
    }
    unreachable!()
}

fn rescaled(r: CurvatureTensor, scal0: f64) -> CurvatureTensor {
    let scal = r.scalar();
    if scal == 0.0 {
        r
    } else {
        r * (scal0 / scal)
    }
}

/// Integrates from `R₀` over `[0, t_end]`.
pub fn flow(r0: &CurvatureTensor, t_end: f64, opts: &FlowOptions) -> Result<Trajectory, FlowError> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(FlowError::InvalidOptions(format!(
            "t_end must be finite and >= 0, got {t_end}"
        )));
    }
    if !(opts.rtol > 0.0 && opts.initial_step > 0.0) {
        return Err(FlowError::InvalidOptions(
            "rtol and initial_step must be positive".into(),
        ));
    }
    let times = opts.times(t_end);
    if times.windows(2).any(|w| !(w[1] > w[0]))
        || times.first().is_some_and(|&t| t < 0.0)
        || times.last().is_some_and(|&t| t > t_end)
    {
        return Err(FlowError::InvalidOptions(
            "sample times must increase strictly within [0, t_end]".into(),
        ));
    }
    let normalized = opts.normalized;
    let scal0 = r0.scalar();
    if normalized && scal0 == 0.0 {
        return Err(FlowError::ZeroScal);
    }
    let cap = opts.blowup_factor * r0.norm();
    let diag_params = opts.margins.then_some(&opts.margin_params);
    let record = |t: f64, r: CurvatureTensor, dt: f64| TrajectorySample {
        t,
        diag: Diagnostics::of(&r, diag_params),
        tensor: r,
        accepted_dt: dt,
    };

    let mut samples = Vec::with_capacity(times.len());
    let mut next = 0;
    let mut t = 0.0f64;
    let mut y = r0.reprojected();
    let mut f = rhs(&y, normalized)?;
    let mut h = opts.initial_step.min(t_end.max(f64::MIN_POSITIVE));
    let (mut accepted, mut rejected) = (0, 0);
    let mut last_dt = 0.0;
    while next < times.len() && times[next] <= t {
        samples.push(record(times[next], y.clone(), 0.0));
        next += 1;
    }
    while t < t_end {
        if accepted + rejected >= opts.max_steps {
            return Err(FlowError::StepUnderflow { t, h });
        }
        // Steps are shortened to land on the next output time.
        let stop = times
            .get(next)
            .copied()
            .filter(|&ts| ts < t_end)
            .unwrap_or(t_end);
        let clipped = t + h >= stop;
        let dt = if clipped { stop - t } else { h };
        let step = dp_step(&y, &f, dt, normalized)?;
        let err = step.err / opts.rtol;
        if !err.is_finite() {
            rejected += 1;
            h = 0.2 * dt;
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(FlowError::StepUnderflow { t, h });
            }
            continue;
        }
        if err <= 1.0 {
            accepted += 1;
            let t1 = if clipped { stop } else { t + dt };
            let mut y1 = step.y.reprojected();
            if normalized {
                y1 = rescaled(y1, scal0);
            }
            let f1 = if normalized {
                rhs(&y1, true)?
            } else {
                step.f_end
            };
            let norm = y1.norm();
            if !norm.is_finite() || (!normalized && norm > cap) {
                return Err(FlowError::BlowUp { t: t1, norm, cap });
            }
            while next < times.len() && times[next] <= t1 {
                samples.push(record(times[next], y1.clone(), dt));
                next += 1;
            }
            last_dt = dt;
            t = t1;
            y = y1;
            f = f1;
        } else {
            rejected += 1;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        // A clipped step says nothing about how far the controller could have gone.
        h = if clipped && err <= 1.0 {
            h.max(dt * factor)
        } else {
            dt * factor
        };
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(FlowError::StepUnderflow { t, h });
        }
    }
    while next < times.len() {
        samples.push(record(times[next], y.clone(), last_dt));
        next += 1;
    }
    Ok(Trajectory {
        samples,
        accepted,
        rejected,
        normalized,
    })
}

/// `‖Q(R) − (scal(Q)/scal(R))·R‖ / ‖Q(R)‖`; zero exactly on fixed rays of the normalized flow.
pub fn fixed_point_residual(r: &CurvatureTensor) -> Result<f64, FlowError> {
    let scal = r.scalar();
    if !(scal.abs() > 0.0) {
        return Err(FlowError::ZeroScal);
    }
    let q = r.q_map();
    let qn = q.norm();
    if qn == 0.0 {
        return Ok(0.0);
    }
    Ok((&q - &(r * (q.scalar() / scal))).norm() / qn)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinchingRow {
    pub t: f64,
    pub margin: f64,
    pub pinching_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinchingReport {
    pub cone: ConeSpec,
    pub rows: Vec<PinchingRow>,
    /// First sample time whose margin is below `−tolerance`.
    pub first_exit: Option<f64>,
    /// Whether the pinching ratio never increases between samples.
    pub pinching_monotone: bool,
}

/// Margins of `cone` and pinching ratios along a trajectory.
pub fn pinching_report(traj: &Trajectory, cone: ConeSpec, params: &SearchParams) -> PinchingReport {
    let rows: Vec<PinchingRow> = traj
        .samples
        .iter()
        .map(|s| PinchingRow {
            t: s.t,
            margin: margin(&s.tensor, cone, params).value,
            pinching_ratio: s.diag.pinching_ratio,
        })
        .collect();
    let first_exit = traj
        .samples
        .iter()
        .zip(&rows)
        .find(|(s, row)| {
            row.margin
                < -params
                    .tolerance
                    .unwrap_or_else(|| default_tolerance(s.diag.scal))
        })
        .map(|(s, _)| s.t);
    let pinching_monotone = rows
        .windows(2)
        .all(|w| w[1].pinching_ratio <= w[0].pinching_ratio + 1e-12 * (1.0 + w[0].pinching_ratio));
    PinchingReport {
        cone,
        rows,
        first_exit,
        pinching_monotone,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_ray_closed_form() {
        let opts = FlowOptions {
            sample_times: Some(vec![0.0, 0.05, 0.1]),
            ..FlowOptions::default().without_margins()
        };
        let traj = flow(&CurvatureTensor::identity(5), 0.1, &opts).unwrap();
        for s in &traj.samples {
            let c = 1.0 / (1.0 - 8.0 * s.t);
            let err = (&s.tensor - &(CurvatureTensor::identity(5) * c)).norm()
                / (c * CurvatureTensor::identity(5).norm());
            assert!(err < 1e-7, "t={} err={err}", s.t);
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let opts = FlowOptions::default().without_margins();
        let err = flow(&CurvatureTensor::identity(5), 0.2, &opts).unwrap_err();
        assert!(matches!(err, FlowError::BlowUp { .. }), "{err:?}");
    }

    #[test]
    fn fixed_points() {
        assert!(fixed_point_residual(&CurvatureTensor::identity(6)).unwrap() < 1e-12);
        assert!(fixed_point_residual(&CurvatureTensor::cylinder(5, 1.0)).unwrap() < 1e-10);
        let mix =
            &(CurvatureTensor::identity(5) * 0.5) + &(CurvatureTensor::cylinder(5, 1.0) * 0.5);
        assert!(fixed_point_residual(&mix).unwrap() > 1e-3);
        assert_eq!(
            fixed_point_residual(&CurvatureTensor::zero(5)),
            Err(FlowError::ZeroScal)
        );
    }

    #[test]
    fn zero_flows_to_zero() {
        let traj = flow(
            &CurvatureTensor::zero(5),
            1.0,
            &FlowOptions::default().without_margins(),
        )
        .unwrap();
        assert!(traj.last().tensor.is_zero());
        assert!(matches!(
            flow(
                &CurvatureTensor::zero(5),
                1.0,
                &FlowOptions::default().normalized(true)
            ),
            Err(FlowError::ZeroScal)
        ));
    }
}
