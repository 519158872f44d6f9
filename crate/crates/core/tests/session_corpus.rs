//! Loads the shipped theory corpus through the session runner. Failures
//! print the per-lemma report for debugging.

use std::path::PathBuf;

use zfauto_core::theory::{Session, SessionConfig};

fn stdlib(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../stdlib")
        .join(name)
}

pub fn check_files(files: &[&str]) -> Session {
    let mut session = Session::new(SessionConfig {
        timeout_ms: 10_000,
        ..SessionConfig::default()
    });
    let paths: Vec<PathBuf> = files.iter().map(|f| stdlib(f)).collect();
    if let Err(e) = session.run_files(&paths) {
        panic!("load error: {}", e);
    }
    session
}

fn assert_all_proved(session: &Session) {
    let mut ok = true;
    for l in &session.report.lemmas {
        if l.status != "proved" {
            ok = false;
            eprintln!(
                "LEMMA {} => {} ({} ms, {} items, {} steps)",
                l.name, l.status, l.ms, l.items, l.steps
            );
        }
    }
    assert!(ok, "some lemmas failed");
}

#[test]
fn axioms_load() {
    let session = check_files(&["01_axioms.thy"]);
    assert_all_proved(&session);
    assert!(session.sig.axiom("extension").is_some());
    assert!(session.sig.axiom("choice").is_some());
    assert_eq!(
        session.report.lemmas.len(),
        2,
        "expected the two pair-membership lemmas"
    );
}

#[test]
fn logic_file_proves() {
    let session = check_files(&["01_axioms.thy", "02_logic.thy"]);
    assert_all_proved(&session);
}

#[test]
fn set_basics_prove() {
    let session = check_files(&["01_axioms.thy", "02_logic.thy", "03_set_basics.thy"]);
    assert_all_proved(&session);
}
