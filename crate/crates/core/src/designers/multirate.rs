//! Interpolator, decimator and sampling-rate-converter design.
//!
//! The interpolator reconstructs `z^{-m}`-delayed continuous signals from
//! samples at period `h` with a filter running at `h/L`; the decimator
//! produces samples at period `h` from samples at `h/M`. Both are designed
//! in lifted form (a slow-rate FIR `K~`) and converted to a fast SISO FIR by
//! polyphase reconstruction.

use crate::analysis::{hinf_norm, HinfNorm};
use crate::error::{dim, invalid, Error, Result};
use crate::lifting::{
    downsample, polyphase_decompose_decim, polyphase_decompose_interp, polyphase_reconstruct_decim,
    polyphase_reconstruct_interp, selection_matrices, upsample, Signal,
};
use crate::sslib::{augment_delay, same_period, StateSpaceModel, TransferFunction};
use crate::synthesis::{
    affine_closed_loop, fir_hinf_synthesis, DesignReport, FirFilter, GeneralizedPlant,
    SynthesisOptions,
};

use super::lifted_continuous;

/// Interpolator or decimator specification.
#[derive(Debug, Clone, PartialEq)]
pub struct MultirateSpec {
    /// Signal generator model: stable, strictly proper, continuous.
    pub f: TransferFunction,
    /// Output hold model: stable, proper, continuous.
    pub p: TransferFunction,
    /// Rate factor `L` (interpolator) or `M` (decimator).
    pub factor: usize,
    /// Allowed reconstruction delay in slow samples.
    pub delay: usize,
    /// Slow sampling period.
    pub h: f64,
    /// FSFH factor; a multiple of `factor`.
    pub n: usize,
    /// Order of the lifted (slow-rate) filter.
    pub fir_order: usize,
}

pub type InterpSpec = MultirateSpec;
pub type DecimSpec = MultirateSpec;

impl MultirateSpec {
    /// Checks the scalar fields and the divisibility of `N` by the factor.
    pub fn validate(&self) -> Result<()> {
        if self.factor == 0 {
            return invalid("rate factor must be at least 1");
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return invalid("sampling period must be positive");
        }
        if self.n == 0 || !self.n.is_multiple_of(self.factor) {
            return invalid(format!(
                "N = {} is not a multiple of the rate factor {}",
                self.n, self.factor
            ));
        }
        Ok(())
    }

    fn lifted_f(&self) -> Result<StateSpaceModel> {
        lifted_continuous(&self.f, "F", true, self.h, self.n)
    }

    fn lifted_p(&self) -> Result<StateSpaceModel> {
        lifted_continuous(&self.p, "P", false, self.h, self.n)
    }
}

/// Result of an interpolator or decimator design.
#[derive(Debug, Clone, PartialEq)]
pub struct MultirateDesign {
    /// Slow-rate lifted filter found by synthesis.
    pub lifted: FirFilter,
    /// Fast-rate SISO filter.
    pub filter: FirFilter,
    pub report: DesignReport,
}

/// Interpolator plant: `G11 = z^{-m}[F]_N`, `G12 = -[P]_N H`,
/// `G21 = S [F]_N` with `(S, H)` the selection matrices for `(1, L, N)`.
/// The free filter is 1-input, L-output.
pub fn build_interpolator_plant(spec: &InterpSpec) -> Result<GeneralizedPlant> {
    spec.validate()?;
    let fl = spec.lifted_f()?;
    let pl = spec.lifted_p()?;
    let (s, hm) = selection_matrices(1, spec.factor, spec.n)?;
    GeneralizedPlant::new(
        augment_delay(&fl, spec.delay)?,
        pl.right_mul(&hm)?.neg(),
        fl.left_mul(&s)?,
    )
}

/// Decimator plant: `G11 = z^{-m}[F]_N`, `G12 = -[P]_N H`, `G21 = S [F]_N`
/// with `(S, H)` the selection matrices for `(M, 1, N)`. The free filter is
/// M-input, 1-output.
pub fn build_decimator_plant(spec: &DecimSpec) -> Result<GeneralizedPlant> {
    spec.validate()?;
    let fl = spec.lifted_f()?;
    let pl = spec.lifted_p()?;
    let (s, hm) = selection_matrices(spec.factor, 1, spec.n)?;
    GeneralizedPlant::new(
        augment_delay(&fl, spec.delay)?,
        pl.right_mul(&hm)?.neg(),
        fl.left_mul(&s)?,
    )
}

/// Designs the interpolator and returns the fast filter
/// `K(z) = sum_i z^{-i} K~_i(z^L)` with `L (order + 1)` taps.
pub fn design_interpolator(spec: &InterpSpec, opts: &SynthesisOptions) -> Result<MultirateDesign> {
    let plant = build_interpolator_plant(spec)?;
    let (lifted, report) = fir_hinf_synthesis(&plant, spec.fir_order, opts)?;
    let filter = polyphase_reconstruct_interp(&lifted, spec.factor)?;
    Ok(MultirateDesign {
        lifted,
        filter,
        report,
    })
}

/// Designs the decimator and returns the causal fast filter
/// `H(z) = z^{-M} H~(z^M) [1, z, ..., z^{M-1}]^T`.
pub fn design_decimator(spec: &DecimSpec, opts: &SynthesisOptions) -> Result<MultirateDesign> {
    let plant = build_decimator_plant(spec)?;
    let (lifted, report) = fir_hinf_synthesis(&plant, spec.fir_order, opts)?;
    let filter = polyphase_reconstruct_decim(&lifted, spec.factor)?;
    Ok(MultirateDesign {
        lifted,
        filter,
        report,
    })
}

/// H-infinity norm of the interpolator error system for an arbitrary fast
/// filter running at `h/L`.
pub fn interpolator_error(spec: &InterpSpec, taps: &[f64]) -> Result<HinfNorm> {
    let plant = build_interpolator_plant(spec)?;
    let kt = polyphase_decompose_interp(taps, spec.factor, spec.h / spec.factor as f64)?;
    hinf_norm(&affine_closed_loop(&plant, &kt)?, 1e-6)
}

/// H-infinity norm of the decimator error system for a fast filter whose
/// first tap is zero (the causal form produced by the polyphase shift).
pub fn decimator_error(spec: &DecimSpec, taps: &[f64]) -> Result<HinfNorm> {
    let plant = build_decimator_plant(spec)?;
    match taps.first() {
        None => return invalid("empty filter"),
        Some(t) if *t != 0.0 => return invalid("decimator filter must have a zero leading tap"),
        _ => {}
    }
    let ht = polyphase_decompose_decim(&taps[1..], spec.factor, spec.h / spec.factor as f64)?;
    hinf_norm(&affine_closed_loop(&plant, &ht)?, 1e-6)
}

/// Result of a sampling-rate-converter design.
#[derive(Debug, Clone, PartialEq)]
pub struct SrcDesign {
    pub interpolator: MultirateDesign,
    pub decimator: MultirateDesign,
    /// Composite fast-rate filter `L(z) = H(z) K(z)`.
    pub composite: FirFilter,
}

/// Designs an interpolator by `M1` followed by a decimator by `M2` sharing
/// the fast rate, and convolves the two fast filters.
pub fn design_src(
    spec_i: &InterpSpec,
    spec_d: &DecimSpec,
    opts: &SynthesisOptions,
) -> Result<SrcDesign> {
    spec_i.validate()?;
    spec_d.validate()?;
    let fast_i = spec_i.h / spec_i.factor as f64;
    let fast_d = spec_d.h / spec_d.factor as f64;
    if !same_period(fast_i, fast_d) {
        return Err(Error::Domain(format!(
            "interpolator output period {fast_i} differs from decimator input period {fast_d}"
        )));
    }
    let interpolator = design_interpolator(spec_i, opts)?;
    let decimator = design_decimator(spec_d, opts)?;
    let composite = decimator
        .filter
        .convolve(&interpolator.filter.clone_with_period(fast_d)?)?;
    Ok(SrcDesign {
        interpolator,
        decimator,
        composite,
    })
}

/// Rate conversion `(down M2) L (up M1)` of a scalar signal by direct
/// convolution with a SISO FIR filter.
pub fn rate_convert(x: &Signal, filter: &FirFilter, up: usize, down: usize) -> Result<Signal> {
    if x.dim() != 1 || filter.inputs() != 1 || filter.outputs() != 1 {
        return dim("rate conversion needs a scalar signal and a SISO filter");
    }
    let u = upsample(x, up)?;
    let taps = filter.scalar_taps();
    let src = u.as_flat();
    let y: Vec<f64> = (0..src.len())
        .map(|k| {
            taps.iter()
                .enumerate()
                .take(k + 1)
                .map(|(j, t)| t * src[k - j])
                .sum()
        })
        .collect();
    downsample(&Signal::scalar(y, u.period())?, down)
}

impl FirFilter {
    /// Same taps with a different period, allowing for rounding in periods
    /// computed along different paths.
    pub(crate) fn clone_with_period(&self, period: f64) -> Result<FirFilter> {
        if !same_period(self.period(), period) {
            return Err(Error::Domain("filter rates differ".into()));
        }
        FirFilter::new(self.taps().to_vec(), period)
    }
}
