//! DPCM coder design.
//!
//! The encoder quantizes `e = r - u` with predictor feedback `u = K1 e^`,
//! where `e^ = Q e`; the decoder reconstructs `r^ = K2 (e^ + n)`. With the
//! quantizer replaced by `e^ = e + W_d d` and `r = W~ w` the first lifted
//! sample of an FSFH-lifted analog model `W`:
//!
//! * encoder error `T1 = [(1 - Q) W~, -Q W_d]` with `Q = K1 (1 + K1)^{-1}`;
//! * reconstruction error
//!   `T2 = [(z^{-m} - K2 S_d) W~, -K2 S_d W_d, -K2 W_n]`, `S_d = (1 + K1)^{-1}`.
//!
//! `T1` is affine in `Q`. Restricting `Q = z^{-1} Q'` with `Q'` FIR keeps the
//! predictor strictly causal and gives `K1 = Q / (1 - Q)` with a nilpotent
//! sensitivity `S_d = 1 - Q`.

use nalgebra::DMatrix;

use crate::analysis::hinf_norm;
use crate::error::{invalid, Result};
use crate::sslib::{
    add, augment_delay, delay, feedback_inverse_unity, hstack, product, tf_to_ss, Domain,
    StateSpaceModel, TransferFunction,
};
use crate::synthesis::{
    fir_hinf_synthesis, DesignReport, FirFilter, GeneralizedPlant, SynthesisOptions,
};

use super::{default_rate_scale, discrete_model, lifted_continuous};

/// DPCM design specification.
#[derive(Debug, Clone, PartialEq)]
pub struct DpcmSpec {
    /// Analog signal model: stable, strictly proper, continuous.
    pub w: TransferFunction,
    /// Quantization-noise weight.
    pub w_d: f64,
    /// Channel-noise weight at period `h`.
    pub w_n: TransferFunction,
    /// Reconstruction delay in samples.
    pub delay: usize,
    pub h: f64,
    pub n: usize,
    /// Order of `Q'` (the predictor loop `Q = z^{-1} Q'`).
    pub order_q: usize,
    /// Order of the decoder `K2`.
    pub order_k2: usize,
    /// Overrides the default rate scale `N / h`.
    pub rate_scale: Option<f64>,
}

impl DpcmSpec {
    /// Checks the scalar fields.
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return invalid("sampling period must be positive");
        }
        if self.n == 0 {
            return invalid("N must be at least 1");
        }
        if !self.w_d.is_finite() {
            return invalid("W_d must be finite");
        }
        if let Some(r) = self.rate_scale {
            if !(r > 0.0) || !r.is_finite() {
                return invalid("rate scale must be positive");
            }
        }
        Ok(())
    }

    /// Rate scale in effect.
    pub fn rate_scale(&self) -> f64 {
        self.rate_scale
            .unwrap_or_else(|| default_rate_scale(self.n, self.h))
    }

    /// `sqrt(rate_scale) [1, 0, ..., 0] [W]_N`.
    fn signal_model(&self) -> Result<StateSpaceModel> {
        self.validate()?;
        let wl = lifted_continuous(&self.w, "W", true, self.h, self.n)?;
        let mut first = DMatrix::zeros(1, self.n);
        first[(0, 0)] = 1.0;
        Ok(wl.left_mul(&first)?.scale(self.rate_scale().sqrt()))
    }

    fn static_gain(&self, g: f64) -> Result<StateSpaceModel> {
        StateSpaceModel::static_gain(DMatrix::from_element(1, 1, g), Domain::discrete(self.h)?)
    }
}

/// Encoder plant in the parameter `Q'`: `G11 = [W~, 0]`, `G12 = -z^{-1}`,
/// `G21 = [W~, W_d]`.
pub fn build_encoder_plant(spec: &DpcmSpec) -> Result<GeneralizedPlant> {
    let wt = spec.signal_model()?;
    GeneralizedPlant::new(
        hstack(&[&wt, &spec.static_gain(0.0)?])?,
        delay(1, 1, spec.h)?.neg(),
        hstack(&[&wt, &spec.static_gain(spec.w_d)?])?,
    )
}

/// Decoder plant for a fixed predictor `K1`: `G11 = [z^{-m} W~, 0, 0]`,
/// `G12 = -1`, `G21 = [S_d W~, S_d W_d, W_n]`. Fails when `S_d` is unstable.
pub fn build_decoder_plant(spec: &DpcmSpec, k1: &StateSpaceModel) -> Result<GeneralizedPlant> {
    let wt = spec.signal_model()?;
    let k1 = k1.with_domain(Domain::discrete(spec.h)?)?;
    let sd = feedback_inverse_unity(&k1)?;
    let wn = discrete_model(&spec.w_n, "W_n", spec.h)?;
    let zero = spec.static_gain(0.0)?;
    GeneralizedPlant::new(
        hstack(&[&augment_delay(&wt, spec.delay)?, &zero, &zero])?,
        spec.static_gain(-1.0)?,
        hstack(&[&product(&sd, &wt)?, &sd.scale(spec.w_d), &wn])?,
    )
}

/// Both DPCM plants: the encoder plant (independent of `K1`) and the
/// decoder plant for the given `K1`.
pub fn build_dpcm_plants(
    spec: &DpcmSpec,
    k1: &StateSpaceModel,
) -> Result<(GeneralizedPlant, GeneralizedPlant)> {
    Ok((build_encoder_plant(spec)?, build_decoder_plant(spec, k1)?))
}

/// Predictor `K1 = Q / (1 - Q)` for `Q(z) = sum_k q_k z^{-k}` with
/// `q_0 = 0`, as a transfer function in `z`.
pub fn predictor_from_loop(q: &[f64], h: f64) -> Result<TransferFunction> {
    match q.first() {
        None => return invalid("empty loop filter"),
        Some(v) if *v != 0.0 => return invalid("loop filter must be strictly causal"),
        _ => {}
    }
    let den: Vec<f64> = q
        .iter()
        .enumerate()
        .map(|(k, v)| if k == 0 { 1.0 } else { -v })
        .collect();
    TransferFunction::new(q, &den, Domain::discrete(h)?)
}

/// Result of a DPCM design.
#[derive(Debug, Clone, PartialEq)]
pub struct DpcmDesign {
    /// Loop filter `Q = K1 (1 + K1)^{-1}` including its zero leading tap.
    pub q: FirFilter,
    pub k1: TransferFunction,
    pub k1_model: StateSpaceModel,
    /// Decoder filter.
    pub k2: FirFilter,
    pub encoder_report: DesignReport,
    pub decoder_report: DesignReport,
    /// `||K2 S_d||_inf`, the gain from quantization noise to reconstruction error.
    pub gamma_zd: f64,
}

/// Designs the predictor on the encoder plant, then the decoder on the
/// decoder plant built with the resulting `S_d`.
pub fn design_dpcm(spec: &DpcmSpec, opts: &SynthesisOptions) -> Result<DpcmDesign> {
    let g1 = build_encoder_plant(spec)?;
    let (qp, encoder_report) = fir_hinf_synthesis(&g1, spec.order_q, opts)?;
    let mut q = vec![0.0];
    q.extend(qp.scalar_taps());
    let k1 = predictor_from_loop(&q, spec.h)?;
    let k1_model = tf_to_ss(&k1)?;
    let g2 = build_decoder_plant(spec, &k1_model)?;
    let (k2, decoder_report) = fir_hinf_synthesis(&g2, spec.order_k2, opts)?;
    let sd = feedback_inverse_unity(&k1_model)?;
    let gamma_zd = hinf_norm(&product(&k2.to_state_space()?, &sd)?, 1e-6)?.gamma;
    Ok(DpcmDesign {
        q: FirFilter::scalar(&q, spec.h)?,
        k1,
        k1_model,
        k2,
        encoder_report,
        decoder_report,
        gamma_zd,
    })
}

/// `||T1||` for an arbitrary predictor with stable sensitivity, realized
/// through `Q = 1 - S_d` so that unstable predictors with stable `S_d`
/// (such as the delta-modulation integrator) can be evaluated.
pub fn encoder_error_norm(spec: &DpcmSpec, k1: &StateSpaceModel) -> Result<f64> {
    let wt = spec.signal_model()?;
    let sd = feedback_inverse_unity(&k1.with_domain(Domain::discrete(spec.h)?)?)?;
    let q = add(&spec.static_gain(1.0)?, &sd.neg())?;
    let g11 = hstack(&[&wt, &spec.static_gain(0.0)?])?;
    let g21 = hstack(&[&wt, &spec.static_gain(spec.w_d)?])?;
    let t1 = add(&g11, &product(&q, &g21)?.neg())?;
    Ok(hinf_norm(&t1, 1e-6)?.gamma)
}

/// Norms of a given encoder/decoder pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpcmEvaluation {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma_zd: f64,
}

/// Evaluates `||T1||`, `||T2||` and `||K2 S_d||` for a predictor and a
/// decoder. The decoder must be Schur stable; the delta-modulation decoder
/// `z/(z-1)` is rejected here.
pub fn evaluate_dpcm_decoder(
    spec: &DpcmSpec,
    k1: &StateSpaceModel,
    k2: &StateSpaceModel,
) -> Result<DpcmEvaluation> {
    let k2 = k2.with_domain(Domain::discrete(spec.h)?)?;
    k2.require_schur("decoder K2 acting on the S_d output")?;
    let g2 = build_decoder_plant(spec, k1)?;
    let t2 = add(&g2.g11, &product(&g2.g12, &product(&k2, &g2.g21)?)?)?;
    let sd = feedback_inverse_unity(&k1.with_domain(Domain::discrete(spec.h)?)?)?;
    Ok(DpcmEvaluation {
        gamma1: encoder_error_norm(spec, k1)?,
        gamma2: hinf_norm(&t2, 1e-6)?.gamma,
        gamma_zd: hinf_norm(&product(&k2, &sd)?, 1e-6)?.gamma,
    })
}
