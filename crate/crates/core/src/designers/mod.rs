//! Generalized-plant builders and design drivers for the filter families:
//! interpolators, decimators, sampling-rate converters, communication
//! transmit/receive pairs, DPCM coders and weighted FIR approximation.
//!
//! Continuous blocks enter through FSFH lifting with factor `N`; the free
//! filter always appears affinely, so every design ends in
//! [`fir_hinf_synthesis`](crate::synthesis::fir_hinf_synthesis).

pub mod baseline;
pub mod comm;
pub mod dpcm;
pub mod fir_approx;
pub mod multirate;

pub use baseline::windowed_sinc;
pub use comm::{
    build_comm_plants, build_joint_plants, comm_alternation, comm_objective, AlternationObjective,
    CommDesign, CommNorms, CommSpec,
};
pub use dpcm::{
    build_dpcm_plants, design_dpcm, evaluate_dpcm_decoder, DpcmDesign, DpcmEvaluation, DpcmSpec,
};
pub use fir_approx::{chebyshev1_lowpass, design_fir_approx, FirApproxDesign, FirApproxSpec};
pub use multirate::{
    build_decimator_plant, build_interpolator_plant, decimator_error, design_decimator,
    design_interpolator, design_src, interpolator_error, rate_convert, DecimSpec, InterpSpec,
    MultirateDesign, MultirateSpec, SrcDesign,
};

use crate::error::{invalid, Error, Result};
use crate::lifting::fsfh_lift;
use crate::sslib::{eigenvalues, tf_to_ss, Domain, StateSpaceModel, TransferFunction};

/// Realizes a continuous transfer function and checks that all poles lie in
/// the open left half plane.
pub fn continuous_model(
    tf: &TransferFunction,
    name: &str,
    strictly_proper: bool,
) -> Result<StateSpaceModel> {
    if tf.domain() != Domain::Continuous {
        return Err(Error::Domain(format!(
            "{name} must be a continuous-time transfer function"
        )));
    }
    let sys = tf_to_ss(tf)?;
    if strictly_proper && sys.d().iter().any(|v| *v != 0.0) {
        return invalid(format!("{name} must be strictly proper"));
    }
    let abscissa = eigenvalues(sys.a())?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= 0.0 {
        return Err(Error::Unstable {
            context: format!("{name}: continuous pole with real part {abscissa}"),
            spectral_radius: abscissa.exp(),
        });
    }
    Ok(sys)
}

/// Realizes a discrete transfer function at period `h` and checks Schur
/// stability. The period stored in `tf` is replaced by `h`.
pub fn discrete_model(tf: &TransferFunction, name: &str, h: f64) -> Result<StateSpaceModel> {
    if tf.domain() == Domain::Continuous {
        return Err(Error::Domain(format!(
            "{name} must be a discrete-time transfer function"
        )));
    }
    let sys = tf_to_ss(tf)?.with_domain(Domain::discrete(h)?)?;
    sys.require_schur(name)?;
    Ok(sys)
}

/// FSFH-lifted model of a stable continuous transfer function.
pub(crate) fn lifted_continuous(
    tf: &TransferFunction,
    name: &str,
    strictly_proper: bool,
    h: f64,
    n: usize,
) -> Result<StateSpaceModel> {
    let sys = continuous_model(tf, name, strictly_proper)?;
    Ok(fsfh_lift(&sys, h, n)?.inner)
}

/// Default rate scale `N / h`; discrete channels are weighted by its square
/// root so that lifted and discrete channel norms are commensurate.
pub fn default_rate_scale(n: usize, h: f64) -> f64 {
    n as f64 / h
}
