//! Float formatting shared by every CSV writer in this crate.

/// Formats with 17 significant digits in scientific notation, enough
/// for any `f64` to round-trip exactly, so equal values always render
/// to equal bytes.
pub fn g17(v: f64) -> String {
    format!("{v:.16e}")
}
