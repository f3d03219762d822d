//! Algebraic curvature tensors, the Hamilton quadratic `Q`, isotropic-curvature
//! cones and numerical verification campaigns.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cone;
pub mod error;
pub mod flow;
pub mod frame;
pub mod io;
pub mod rng;
pub mod sample;
pub mod search;
pub mod tensor;
pub mod verify;

pub use cone::{
    boundary_point, estimate_constants, is_member, margin, solve_shift, tangent_cone_contains,
    two_positivity_margin, ConstantsReport, MarginCertificate, ShiftSolution, TangentTest,
};
pub use error::{ConeError, FlowError, FormatError, TensorError, VerifyError};
pub use flow::{fixed_point_residual, flow, pinching_report, Diagnostics, FlowOptions, Trajectory};
pub use frame::{frame_value, min_over_lambda_mu, ConeKind, ConeSpec, Frame, FrameComponents};
pub use sample::{sample_tensor, Sample, Strategy};
pub use search::SearchParams;
pub use tensor::{kulkarni_nomizu, CurvatureTensor, SymmetricForm};
pub use verify::{run_campaign, Campaign, CampaignConfig, CampaignReport, Outcome};
