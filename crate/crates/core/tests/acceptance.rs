//! Acceptance criteria at full strength: ten seeds, 5000 s horizons.
//! Each test prints one PASS/FAIL line (plus per-check detail).

use std::sync::OnceLock;

use succprob::acceptance::{CriterionOutcome, Verifier, VerifyConfig};

fn verifier() -> &'static Verifier {
    static V: OnceLock<Verifier> = OnceLock::new();
    V.get_or_init(|| Verifier::new(VerifyConfig::default()))
}

fn report(outcome: CriterionOutcome) {
    println!("{outcome}");
    assert!(outcome.passed(), "{outcome}");
}

#[test]
fn criterion_1_thinning() {
    report(verifier().thinning());
}

#[test]
fn criterion_2_hazard() {
    report(verifier().hazard());
}

#[test]
fn criterion_3_enclosure() {
    report(verifier().enclosure());
}

#[test]
fn criterion_4_closed_form() {
    report(verifier().closed_form());
}

#[test]
fn criterion_5_saturation() {
    report(verifier().saturation());
}

#[test]
fn criterion_6_update_rate_plateau() {
    report(verifier().plateau());
}

#[test]
fn criterion_7_link_rate_flatness() {
    report(verifier().flatness());
}

#[test]
fn criterion_8_property_suites() {
    report(verifier().properties());
}

#[test]
fn criterion_9_determinism() {
    report(verifier().determinism());
}
