//! Weighted H-infinity FIR approximation of an IIR filter, and a
//! Chebyshev type I low-pass designer for targets.
//!
//! The error system is `(K - K_f) V` where `V` is the weight itself or its
//! inverse; it is written as the one-block plant `G11 = K V`, `G12 = -1`,
//! `G21 = V`.

use num_complex::Complex64;

use crate::analysis::{h2_norm, hinf_norm};
use crate::error::{invalid, Error, Result};
use crate::sslib::{add, product, Domain, StateSpaceModel, TransferFunction};
use crate::synthesis::{
    fir_hinf_synthesis, DesignReport, FirFilter, GeneralizedPlant, SynthesisOptions,
};

use super::discrete_model;

/// FIR approximation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct FirApproxSpec {
    /// Stable IIR filter to approximate.
    pub target: TransferFunction,
    /// Frequency weight `W(z)`.
    pub weight: TransferFunction,
    /// Weight the error by `1/W` (true) or by `W` (false).
    pub invert_weight: bool,
    /// Number of FIR taps (order + 1).
    pub taps: usize,
    pub h: f64,
}

impl FirApproxSpec {
    fn effective_weight(&self) -> Result<StateSpaceModel> {
        if self.invert_weight {
            let inv =
                TransferFunction::new(self.weight.den(), self.weight.num(), self.weight.domain())
                    .map_err(|_| {
                    Error::InvalidArgument("inverse weight must be proper (biproper weight)".into())
                })?;
            discrete_model(&inv, "inverse weight", self.h)
        } else {
            discrete_model(&self.weight, "weight", self.h)
        }
    }

    /// One-block plant `G11 = K V`, `G12 = -1`, `G21 = V`.
    pub fn plant(&self) -> Result<GeneralizedPlant> {
        if self.taps == 0 {
            return invalid("at least one tap is required");
        }
        let k = discrete_model(&self.target, "target", self.h)?;
        let v = self.effective_weight()?;
        let minus_one =
            StateSpaceModel::static_gain(nalgebra::DMatrix::from_element(1, 1, -1.0), v.domain())?;
        GeneralizedPlant::new(product(&k, &v)?, minus_one, v)
    }
}

/// Result of an FIR approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct FirApproxDesign {
    pub filter: FirFilter,
    pub report: DesignReport,
    /// Unweighted `||K - K_f||_inf`.
    pub error_hinf: f64,
    /// Unweighted `||K - K_f||_2`.
    pub error_h2: f64,
}

/// Minimizes the weighted error and reports unweighted error norms.
pub fn design_fir_approx(spec: &FirApproxSpec, opts: &SynthesisOptions) -> Result<FirApproxDesign> {
    let plant = spec.plant()?;
    let (filter, report) = fir_hinf_synthesis(&plant, spec.taps - 1, opts)?;
    let k = discrete_model(&spec.target, "target", spec.h)?;
    let err = add(&k, &filter.to_state_space()?.neg())?;
    Ok(FirApproxDesign {
        error_hinf: hinf_norm(&err, 1e-6)?.gamma,
        error_h2: h2_norm(&err)?,
        filter,
        report,
    })
}

/// Monic polynomial with the given roots (conjugate pairs assumed).
fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); p.len() + 1];
        for (i, c) in p.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        p = next;
    }
    p.iter().map(|c| c.re).collect()
}

/// Digital Chebyshev type I low-pass of the given order with passband
/// ripple `ripple_db` and edge `wn` (fraction of the Nyquist frequency),
/// obtained from the analog prototype by the prewarped bilinear transform.
pub fn chebyshev1_lowpass(
    order: usize,
    ripple_db: f64,
    wn: f64,
    h: f64,
) -> Result<TransferFunction> {
    use std::f64::consts::PI;
    if order == 0 {
        return invalid("filter order must be at least 1");
    }
    if !(ripple_db > 0.0) || !(wn > 0.0 && wn < 1.0) {
        return invalid("ripple must be positive and the edge must lie in (0, 1)");
    }
    let eps = (10f64.powf(0.1 * ripple_db) - 1.0).sqrt();
    let mu = (1.0 / eps).asinh() / order as f64;
    let analog: Vec<Complex64> = (0..order)
        .map(|i| {
            let m = -(order as f64) + 1.0 + 2.0 * i as f64;
            let theta = PI * m / (2.0 * order as f64);
            -Complex64::new(mu, theta).sinh()
        })
        .collect();
    let mut gain = analog
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, p| acc * (-p))
        .re;
    if order.is_multiple_of(2) {
        gain /= (1.0 + eps * eps).sqrt();
    }
    // prewarp for a unit-Nyquist digital frequency (fs = 2)
    let fs = 2.0;
    let warped = 2.0 * fs * (PI * wn / fs).tan();
    let scaled: Vec<Complex64> = analog.iter().map(|p| p * warped).collect();
    gain *= warped.powi(order as i32);
    let fs2 = 2.0 * fs;
    let digital: Vec<Complex64> = scaled.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();
    let denom = scaled
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, p| acc * (fs2 - p));
    let kd = gain * (1.0 / denom).re;
    let zeros = vec![Complex64::new(-1.0, 0.0); order];
    let num: Vec<f64> = poly_from_roots(&zeros).iter().map(|c| c * kd).collect();
    let den = poly_from_roots(&digital);
    TransferFunction::new(&num, &den, Domain::discrete(h)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chebyshev_matches_printed_coefficients() {
        let k = chebyshev1_lowpass(8, 0.01, 0.25678, 1.0).unwrap();
        let den = [
            1.0, -4.953, 11.71, -16.95, 16.29, -10.58, 4.522, -1.161, 0.1369,
        ];
        for (a, b) in k.den().iter().zip(den) {
            assert!((a - b).abs() <= 6e-4 * b.abs().max(1.0), "{a} vs {b}");
        }
        let num = [
            0.04705, 0.3764, 1.317, 2.635, 3.294, 2.635, 1.317, 0.3764, 0.04705,
        ];
        for (a, b) in k.num().iter().zip(num) {
            assert!((a * 1e3 - b).abs() <= 1e-3 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn chebyshev_dc_gain_and_ripple() {
        // even order: DC gain is the passband minimum 10^{-rp/20}
        let k = chebyshev1_lowpass(4, 1.0, 0.3, 1.0).unwrap();
        let dc = k.eval(Complex64::new(1.0, 0.0)).norm();
        assert!((dc - 10f64.powf(-0.05)).abs() < 1e-10);
        let k = chebyshev1_lowpass(3, 1.0, 0.3, 1.0).unwrap();
        assert!((k.eval(Complex64::new(1.0, 0.0)).norm() - 1.0).abs() < 1e-10);
        let edge = k
            .eval(Complex64::from_polar(1.0, 0.3 * std::f64::consts::PI))
            .norm();
        assert!((edge - 10f64.powf(-0.05)).abs() < 1e-8);
    }

    #[test]
    fn unit_weight_plant_reduces_to_plain_approximation() {
        let d = Domain::discrete(1.0).unwrap();
        let spec = FirApproxSpec {
            target: TransferFunction::new(&[1.0, 0.0], &[1.0, -0.5], d).unwrap(),
            weight: TransferFunction::new(&[1.0], &[1.0], d).unwrap(),
            invert_weight: true,
            taps: 4,
            h: 1.0,
        };
        let out = design_fir_approx(&spec, &SynthesisOptions::default()).unwrap();
        // at most the truncation error, at least the first untouched impulse-response coefficient
        assert!(out.error_hinf <= 0.5f64.powi(4) / 0.5 + 1e-9);
        assert!(out.error_hinf >= 0.5f64.powi(4) - 1e-9);
        assert!((out.report.gamma_certified - out.error_hinf).abs() < 1e-5);
    }
}
