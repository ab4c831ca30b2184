//! Shared formatting for tabular outputs.

/// Ten significant digits, round-trippable through `str::parse`.
pub fn sig10(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.9e}")
}
