mod common;

use common::{gaussian, random_orthogonal, rng, slow_q, slow_ricci, Dense};
use curvlab::io::tensor_from_json;
use curvlab::sample::{deficit_for_theta, two_plane_deficit};
use curvlab::verify::{two_positive_quantity, two_smallest_derivative};
use curvlab::{
    margin, run_campaign, two_positivity_margin, Campaign, CampaignConfig, CampaignReport,
    ConeKind, ConeSpec, CurvatureTensor, FrameComponents, Outcome, SearchParams,
};

fn config(n: usize, cone: ConeKind, trials: usize, seed: u64) -> CampaignConfig {
    CampaignConfig {
        restarts: 16,
        ..CampaignConfig::new(n, cone, trials, seed)
    }
}

#[test]
fn ricci_bound_models() {
    let i = CurvatureTensor::identity(5);
    assert_eq!(i.ricci().eigenvalues()[4], 4.0);
    assert!(4.0 <= 0.5 * i.scalar());
    let cyl = CurvatureTensor::cylinder(5, 1.0);
    let top = cyl.ricci().eigenvalues()[4];
    assert!((top - 3.0).abs() < 1e-12 && (0.5 * cyl.scalar() - 6.0).abs() < 1e-12);
}

#[test]
fn derivative_matches_eigenbasis_formula() {
    for seed in 0..10 {
        let r = gaussian(5, seed);
        let (vals, vecs) = r.ricci().eigen();
        let d = Dense::of(&r.conjugate(&vecs.transpose()));
        // In a Ricci eigenbasis Ric(Q)_ii = 2 Σ_j R_ijij λ_j.
        let want: f64 = (0..2)
            .map(|i| {
                (0..5)
                    .map(|j| 2.0 * d.at(i, j, i, j) * vals[j])
                    .sum::<f64>()
            })
            .sum();
        let got = two_smallest_derivative(&r, 1e-9);
        assert!(
            (got - want).abs() < 1e-9 * (1.0 + want.abs()),
            "{got} vs {want}"
        );
        // And agrees with the trace of the slow Q.
        let q = slow_ricci(&slow_q(&r));
        let qm = vecs.transpose() * q * &vecs;
        assert!((qm[(0, 0)] + qm[(1, 1)] - want).abs() < 1e-9 * (1.0 + want.abs()));
    }
}

#[test]
fn exact_theta_sample_has_positive_derivative() {
    let (n, delta, theta) = (5, 0.01, 0.001);
    let spec = ConeSpec::new(ConeKind::Pic, delta).unwrap();
    let s = 0.5;
    let r = two_plane_deficit(n, s, deficit_for_theta(n, s, theta));
    let u = random_orthogonal(n, &mut rng(3));
    let r = r.conjugate(&u);
    assert!(two_positivity_margin(&r, theta).abs() < 1e-12 * r.scalar());
    assert!(margin(&r, spec, &SearchParams::default()).is_member());
    assert!(two_positive_quantity(&r, theta) > 0.0);
}

#[test]
fn sphere_is_filtered_from_two_positive() {
    let r = CurvatureTensor::identity(5);
    let e = r.ricci().eigenvalues();
    assert_eq!(e[0] + e[1], 8.0);
    assert!(two_positivity_margin(&r, 0.01) > 0.0);
}

#[test]
fn zero_tensor_gives_zero_functional() {
    let z = CurvatureTensor::zero(5);
    let f = curvlab::Frame::standard(5);
    assert_eq!(
        FrameComponents::of(&z.q_map(), f.vectors()).value(ConeKind::Pic2, 0.5, 0.5),
        0.0
    );
}

#[test]
fn reports_are_reproducible() {
    for campaign in Campaign::ALL {
        let cone = campaign.required_cone().unwrap_or(ConeKind::Pic);
        let mut c = config(5, cone, 6, 42);
        c.t_end = 0.2;
        let a = run_campaign(campaign, &c).unwrap();
        let b = run_campaign(campaign, &c).unwrap();
        assert_eq!(
            (a.attempted, a.admitted, a.violated),
            (b.attempted, b.admitted, b.violated),
            "{campaign}"
        );
        assert_eq!(
            a.worst_value.map(f64::to_bits),
            b.worst_value.map(f64::to_bits),
            "{campaign}"
        );
        assert_eq!(a.witness, b.witness);
    }
}

#[test]
fn report_json_has_the_documented_fields() {
    let r = run_campaign(Campaign::RicciBound, &config(5, ConeKind::Pic, 4, 1)).unwrap();
    let json = r.to_json();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    for key in [
        "config",
        "attempted",
        "admitted",
        "violated",
        "inconclusive",
        "worst_value",
        "witness",
        "wall_seconds",
    ] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["outcome"], "PASS");
    assert_eq!(CampaignReport::from_json(&json).unwrap(), r);
}

#[test]
fn ricci_witness_revalidates() {
    let r = run_campaign(Campaign::RicciBound, &config(6, ConeKind::Pic, 8, 5)).unwrap();
    let json = serde_json::to_string(
        &serde_json::from_str::<serde_json::Value>(&r.to_json()).unwrap()["witness"],
    )
    .unwrap();
    let w = tensor_from_json(&json).unwrap();
    let value = 0.5 * w.scalar() - w.ricci().eigenvalues()[5];
    assert!((value - r.worst_value.unwrap()).abs() <= 1e-10 * (1.0 + value.abs()));
}

#[test]
fn pic2_step_witness_revalidates() {
    let r = run_campaign(Campaign::Pic1Pic2, &config(5, ConeKind::Pic2, 6, 3)).unwrap();
    assert_eq!(r.outcome, Outcome::Pass);
    let w = r.witness.as_ref().unwrap();
    let f = r.witness_frame.as_ref().unwrap().frame().unwrap();
    let v = FrameComponents::of(&w.q_map(), f.vectors()).value(ConeKind::Pic2, f.lambda(), f.mu());
    assert!((v - r.worst_value.unwrap()).abs() <= 1e-10 * (1.0 + w.scalar().powi(2)));
}

#[test]
fn two_positive_admissions_recheck_with_fresh_seed() {
    let mut c = config(5, ConeKind::Pic, 24, 9);
    c.delta = 0.01;
    c.theta = 0.001;
    let r = run_campaign(Campaign::TwoPositive, &c).unwrap();
    assert!(r.admitted > 0);
    assert_eq!(r.outcome, Outcome::Pass);
    let w = r.witness.unwrap();
    let spec = ConeSpec::new(ConeKind::Pic, c.delta).unwrap();
    assert!(margin(&w, spec, &SearchParams::default().with_seed(12345)).is_member());
    assert!(two_positivity_margin(&w, c.theta) <= 1e-12 * (1.0 + w.scalar()));
    assert!(w.scalar() > 0.0);
}

#[test]
fn empty_hypothesis_region_is_inconclusive() {
    let mut c = config(5, ConeKind::Pic, 12, 0);
    c.delta = 0.1;
    c.theta = 0.01;
    let r = run_campaign(Campaign::TwoPositive, &c).unwrap();
    assert_eq!((r.admitted, r.outcome), (0, Outcome::Inconclusive));
    assert!(r.inconclusive && r.worst_value.is_none() && r.witness.is_none());
}

#[test]
fn flow_from_sphere_keeps_margins() {
    let mut c = config(5, ConeKind::Pic2, 1, 0);
    c.t_end = 1.0;
    let r = run_campaign(Campaign::FlowPreservation, &c).unwrap();
    assert_eq!(r.outcome, Outcome::Pass);
    // Normalized margin of I for PIC2 is 1/20 throughout.
    assert!((r.worst_value.unwrap() - 0.05).abs() < 1e-7);
}

#[test]
fn records_cover_every_trial() {
    let mut c = config(5, ConeKind::Pic, 5, 2);
    c.records = true;
    let r = run_campaign(Campaign::PicPreservation, &c).unwrap();
    let recs = r.records.unwrap();
    assert_eq!(recs.len(), 5);
    assert_eq!(recs.iter().filter(|t| t.admitted).count(), r.admitted);
}
