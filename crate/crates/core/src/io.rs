//! JSON and CSV interchange formats.
//!
//! Floats are written with 17 significant digits so every value round-trips;
//! non-finite floats become `null`.

use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cone::MarginCertificate;
use crate::error::FormatError;
use crate::flow::Trajectory;
use crate::frame::Frame;
use crate::tensor::{CurvatureTensor, MAX_DIM};

/// Formatter emitting floats as `{:.16e}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RoundTripFormatter;

impl serde_json::ser::Formatter for RoundTripFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes `value` as compact JSON with round-trip floats.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, RoundTripFormatter);
    value
        .serialize(&mut ser)
        .expect("in-memory serialization cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// A float formatted with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorDoc {
    n: usize,
    entries: Vec<(usize, usize, usize, usize, f64)>,
}

impl Serialize for CurvatureTensor {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TensorDoc {
            n: self.dim(),
            entries: self.canonical_entries(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CurvatureTensor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = TensorDoc::deserialize(deserializer)?;
        tensor_from_doc(doc).map_err(D::Error::custom)
    }
}

fn tensor_from_doc(doc: TensorDoc) -> Result<CurvatureTensor, FormatError> {
    // Checked before any allocation proportional to n⁴.
    if !(4..=MAX_DIM).contains(&doc.n) {
        return Err(crate::error::TensorError::DimensionOutOfRange(doc.n).into());
    }
    Ok(CurvatureTensor::make(doc.n, &doc.entries)?)
}

pub fn tensor_to_json(r: &CurvatureTensor) -> String {
    to_json(r)
}

/// Reads a tensor document, accepting any index representative.
pub fn tensor_from_json(s: &str) -> Result<CurvatureTensor, FormatError> {
    let doc: TensorDoc = serde_json::from_str(s)?;
    tensor_from_doc(doc)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertificateDoc {
    value: f64,
    frame: Vec<Vec<f64>>,
    lambda: f64,
    mu: f64,
    restarts: usize,
    converged_restarts: usize,
    tolerance: f64,
    seed: u64,
}

impl Serialize for MarginCertificate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("MarginCertificate", 8)?;
        st.serialize_field("value", &self.value)?;
        st.serialize_field("frame", &frame_rows(&self.frame))?;
        st.serialize_field("lambda", &self.frame.lambda())?;
        st.serialize_field("mu", &self.frame.mu())?;
        st.serialize_field("restarts", &self.restarts)?;
        st.serialize_field("converged_restarts", &self.converged_restarts)?;
        st.serialize_field("tolerance", &self.tolerance)?;
        st.serialize_field("seed", &self.seed)?;
        st.end()
    }
}

/// The four frame vectors as rows.
pub fn frame_rows(f: &Frame) -> Vec<Vec<f64>> {
    (0..4).map(|a| f.vector(a)).collect()
}

/// Rebuilds a frame from four row vectors, checking orthonormality.
pub fn frame_from_rows(rows: &[Vec<f64>], lambda: f64, mu: f64) -> Result<Frame, FormatError> {
    if rows.len() != 4 {
        return Err(FormatError::Invalid {
            field: "frame",
            reason: format!("expected 4 vectors, got {}", rows.len()),
        });
    }
    let n = rows[0].len();
    if !(4..=MAX_DIM).contains(&n) || rows.iter().any(|r| r.len() != n) {
        return Err(FormatError::Invalid {
            field: "frame",
            reason: "vectors must share a length in 4..=32".into(),
        });
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) || !lambda.is_finite() || !mu.is_finite() {
        return Err(FormatError::Invalid {
            field: "frame",
            reason: "non-finite entry".into(),
        });
    }
    Ok(Frame::new(
        DMatrix::from_fn(n, 4, |i, a| rows[a][i]),
        lambda,
        mu,
    )?)
}

impl<'de> Deserialize<'de> for MarginCertificate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = CertificateDoc::deserialize(deserializer)?;
        certificate_from_doc(doc).map_err(D::Error::custom)
    }
}

fn certificate_from_doc(doc: CertificateDoc) -> Result<MarginCertificate, FormatError> {
    if !doc.value.is_finite() {
        return Err(FormatError::Invalid {
            field: "value",
            reason: "must be finite".into(),
        });
    }
    if !(doc.tolerance.is_finite() && doc.tolerance >= 0.0) {
        return Err(FormatError::Invalid {
            field: "tolerance",
            reason: "must be finite and >= 0".into(),
        });
    }
    if doc.converged_restarts > doc.restarts {
        return Err(FormatError::Invalid {
            field: "converged_restarts",
            reason: "exceeds restarts".into(),
        });
    }
    let frame = frame_from_rows(&doc.frame, doc.lambda, doc.mu)?;
    Ok(MarginCertificate {
        value: doc.value,
        frame,
        restarts: doc.restarts,
        converged_restarts: doc.converged_restarts,
        tolerance: doc.tolerance,
        seed: doc.seed,
    })
}

pub fn certificate_to_json(c: &MarginCertificate) -> String {
    to_json(c)
}

pub fn certificate_from_json(s: &str) -> Result<MarginCertificate, FormatError> {
    let doc: CertificateDoc = serde_json::from_str(s)?;
    certificate_from_doc(doc)
}

/// Trajectory CSV: `t, scal, lambda1..lambdaN, pic_margin, pic1_margin, pic2_margin, pinching_ratio, accepted_dt`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    let n = traj.samples.first().map_or(0, |s| s.tensor.dim());
    let mut header = vec!["t".to_string(), "scal".to_string()];
    header.extend((1..=n).map(|i| format!("lambda{i}")));
    header.extend(
        [
            "pic_margin",
            "pic1_margin",
            "pic2_margin",
            "pinching_ratio",
            "accepted_dt",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for s in &traj.samples {
        let d = &s.diag;
        let mut row = vec![fmt_f64(s.t), fmt_f64(d.scal)];
        row.extend(d.ricci_eigs.iter().map(|&v| fmt_f64(v)));
        row.extend(
            [
                d.pic_margin,
                d.pic1_margin,
                d.pic2_margin,
                d.pinching_ratio,
                s.accepted_dt,
            ]
            .map(fmt_f64),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::margin;
    use crate::frame::{ConeKind, ConeSpec};
    use crate::search::SearchParams;

    #[test]
    fn tensor_round_trip() {
        let r =
            &CurvatureTensor::cylinder(5, 1.0) * 0.3 + CurvatureTensor::identity(5) * (1.0 / 3.0);
        let s = tensor_to_json(&r);
        assert_eq!(tensor_from_json(&s).unwrap(), r);
    }

    #[test]
    fn reader_canonicalizes() {
        let a = tensor_from_json(r#"{"n":4,"entries":[[2,1,1,2,-1.5]]}"#).unwrap();
        let b = tensor_from_json(r#"{"n":4,"entries":[[1,2,1,2,1.5]]}"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            tensor_to_json(&a),
            r#"{"n":4,"entries":[[1,2,1,2,1.5000000000000000e0]]}"#
        );
    }

    #[test]
    fn reader_rejects_bad_input() {
        for bad in [
            "",
            "{",
            r#"{"n":3,"entries":[]}"#,
            r#"{"n":100000,"entries":[]}"#,
            r#"{"n":4,"entries":[[1,2,3,4,1],[1,3,4,2,1],[1,4,2,3,1]]}"#,
            r#"{"n":4,"entries":[[1,2,1,5,1]]}"#,
            r#"{"n":4,"entries":[[1,1,1,2,1]]}"#,
            r#"{"n":4,"entries":[[1,2,1,2]]}"#,
            r#"{"n":4,"entries":[],"extra":1}"#,
        ] {
            assert!(tensor_from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn certificate_round_trip() {
        let c = margin(
            &CurvatureTensor::cylinder(5, 1.0),
            ConeSpec::weak(ConeKind::Pic2),
            &SearchParams::default().with_restarts(4),
        );
        let s = certificate_to_json(&c);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        for key in [
            "value",
            "frame",
            "lambda",
            "mu",
            "restarts",
            "converged_restarts",
            "tolerance",
            "seed",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(certificate_from_json(&s).unwrap(), c);
    }

    #[test]
    fn non_finite_becomes_null() {
        assert_eq!(to_json(&[f64::NAN, 1.0]), "[null,1.0000000000000000e0]");
    }
}
