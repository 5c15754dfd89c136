//! Hamming-windowed ideal low-pass FIR used as a comparison filter.

use crate::error::{invalid, Result};

/// Linear-phase low-pass with `taps` coefficients and cutoff `cutoff`
/// (rad/sample):
/// `h[k] = (wc/pi) sinc(wc (k - (L-1)/2) / pi) (0.54 - 0.46 cos(2 pi k/(L-1)))`,
/// with the window taken as 1 when `L = 1`.
pub fn windowed_sinc(taps: usize, cutoff: f64) -> Result<Vec<f64>> {
    use std::f64::consts::PI;
    if taps == 0 {
        return invalid("baseline needs at least one tap");
    }
    if !(cutoff > 0.0 && cutoff <= PI) {
        return invalid("cutoff must lie in (0, pi]");
    }
    let center = (taps as f64 - 1.0) / 2.0;
    Ok((0..taps)
        .map(|k| {
            let t = k as f64 - center;
            let ideal = if t == 0.0 {
                cutoff / PI
            } else {
                (cutoff * t).sin() / (PI * t)
            };
            let window = if taps == 1 {
                1.0
            } else {
                0.54 - 0.46 * (2.0 * PI * k as f64 / (taps as f64 - 1.0)).cos()
            };
            ideal * window
        })
        .collect())
}
