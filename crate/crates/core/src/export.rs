//! Deterministic number formatting shared by the CSV and JSON writers.

/// Scientific notation with 12 significant digits, e.g. `6.55772221271e-2`.
pub fn fmt_sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Rounds to 12 significant digits so JSON output does not depend on
/// last-bit noise in how a value was printed.
pub fn round_sig12(x: f64) -> f64 {
    if x.is_finite() {
        fmt_sig12(x).parse().expect("formatted float parses")
    } else {
        x
    }
}
