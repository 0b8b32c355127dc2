//! The verification suite must pass on a fresh build, and its output must
//! carry the uniform-multinomial elimination fraction near 1/e.

use fvd_cli::checks;

#[test]
fn all_verification_checks_pass() {
    let checks = checks::all_checks();
    for c in &checks {
        assert!(
            c.pass,
            "{}: measured {} expected {} tol {}",
            c.name, c.measured, c.expected, c.tolerance
        );
    }
    let one_over_e = checks
        .iter()
        .find(|c| c.name.contains("1/e"))
        .expect("suite must report the 1/e elimination check");
    assert!(
        (one_over_e.measured - 0.368).abs() < 0.01,
        "measured {}",
        one_over_e.measured
    );
    println!("PASS verify suite: {} checks green", checks.len());
}
