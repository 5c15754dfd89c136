//! Problem setups shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use liftsynth::designers::{
    AlternationObjective, CommSpec, DpcmSpec, FirApproxSpec, MultirateSpec,
};
use liftsynth::sslib::{poly_mul, Domain, StateSpaceModel, TransferFunction};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn cont(num: &[f64], den: &[f64]) -> TransferFunction {
    TransferFunction::new(num, den, Domain::Continuous).unwrap()
}

pub fn disc(num: &[f64], den: &[f64], h: f64) -> TransferFunction {
    TransferFunction::new(num, den, Domain::discrete(h).unwrap()).unwrap()
}

/// Time constant used by the interpolator and decimator examples.
pub fn example_t() -> f64 {
    22.05 / std::f64::consts::PI
}

/// `1 / ((T s + 1)(0.1 T s + 1))`
pub fn second_order_lag(t: f64) -> TransferFunction {
    cont(&[1.0], &poly_mul(&[t, 1.0], &[0.1 * t, 1.0]))
}

pub fn interp_spec(n: usize, order: usize) -> MultirateSpec {
    MultirateSpec {
        f: second_order_lag(example_t()),
        p: cont(&[1.0], &[1.0]),
        factor: 2,
        delay: 2,
        h: 1.0,
        n,
        fir_order: order,
    }
}

pub fn decim_spec(n: usize, order: usize) -> MultirateSpec {
    interp_spec(n, order)
}

/// Interpolation by 3 at `h = 1` followed by decimation by 4 to `h = 4/3`.
pub fn src_specs(order: usize) -> (MultirateSpec, MultirateSpec) {
    let t = example_t();
    let si = MultirateSpec {
        f: second_order_lag(t),
        p: cont(&[1.0], &[1.0]),
        factor: 3,
        delay: 2,
        h: 1.0,
        n: 12,
        fir_order: order,
    };
    let sd = MultirateSpec {
        f: second_order_lag(t / 3.0),
        p: cont(&[1.0], &[1.0]),
        factor: 4,
        delay: 2,
        h: 4.0 / 3.0,
        n: 16,
        fir_order: order,
    };
    (si, sd)
}

pub fn comm_spec(r: f64, iterations: usize) -> CommSpec {
    CommSpec {
        f: cont(&[1.0], &[10.0, 1.0]),
        p: cont(&[1.0], &[1.0]),
        channel: TransferFunction::from_z_inverse(&[1.0, 0.65, -0.52, -0.2975], &[1.0], 1.0)
            .unwrap(),
        w_n: disc(&[1.0], &[1.0], 1.0),
        w_z: disc(&[r, -r], &[1.0, 0.5], 1.0),
        factor: 1,
        delay: 2,
        h: 1.0,
        n: 8,
        order_t: 8,
        order_r: 8,
        iterations,
        rate_scale: None,
        objective: AlternationObjective::Joint,
    }
}

pub fn dpcm_spec() -> DpcmSpec {
    DpcmSpec {
        w: cont(&[1.0], &poly_mul(&[10.0, 1.0], &[10.0, 1.0])),
        w_d: 0.5,
        w_n: disc(
            &[0.1 * 0.01753, -0.1 * 0.03506, 0.1 * 0.01753],
            &[1.0, 0.572, 0.3147],
            1.0,
        ),
        delay: 2,
        h: 1.0,
        n: 8,
        order_q: 8,
        order_k2: 8,
        rate_scale: None,
    }
}

pub const CHEBYSHEV_NUM: [f64; 9] = [
    0.04705, 0.3764, 1.317, 2.635, 3.294, 2.635, 1.317, 0.3764, 0.04705,
];
/// Denominator as printed; the `z^2` coefficient makes it unstable.
pub const CHEBYSHEV_DEN_PRINTED: [f64; 9] = [
    1.0, -4.953, 11.71, -16.95, 16.29, -10.58, 4.552, -1.161, 0.1369,
];
/// Printed denominator with the transposed digits of the `z^2` coefficient restored.
pub const CHEBYSHEV_DEN: [f64; 9] = [
    1.0, -4.953, 11.71, -16.95, 16.29, -10.58, 4.522, -1.161, 0.1369,
];

pub fn chebyshev_target() -> TransferFunction {
    let num: Vec<f64> = CHEBYSHEV_NUM.iter().map(|v| v * 1e-3).collect();
    disc(&num, &CHEBYSHEV_DEN, 1.0)
}

pub fn weight(i: usize) -> TransferFunction {
    match i {
        1 => disc(&[0.7661, -1.305, 0.675], &[1.0, -1.735, 0.9289], 1.0),
        2 => disc(
            &[0.2831, -0.5515, 0.5416, -0.2708, 0.05882],
            &[1.0, -2.865, 3.6, -2.268, 0.6056],
            1.0,
        ),
        3 => {
            let num: Vec<f64> = [
                14.44, -7.838, 19.02, -4.448, 6.697, -0.1857, 0.5287, 0.01134,
            ]
            .iter()
            .map(|v| v * 1e-3)
            .collect();
            disc(
                &num,
                &[1.0, -4.229, 8.561, -10.43, 8.172, -4.089, 1.206, -0.1613],
                1.0,
            )
        }
        _ => panic!("weights are numbered 1 to 3"),
    }
}

pub fn fir_approx_spec(i: usize) -> FirApproxSpec {
    FirApproxSpec {
        target: chebyshev_target(),
        weight: weight(i),
        invert_weight: true,
        taps: 32,
        h: 1.0,
    }
}

/// Random matrix with entries uniform in `[-1, 1]`.
pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Random Schur-stable discrete system with spectral radius in `[0.2, 0.95]`.
pub fn random_stable(rng: &mut ChaCha8Rng, n: usize, p: usize, m: usize) -> StateSpaceModel {
    let mut a = random_matrix(rng, n, n);
    let r = liftsynth::sslib::spectral_radius(&a).unwrap();
    if r > 0.0 {
        a *= rng.random_range(0.2..0.95) / r;
    }
    StateSpaceModel::new(
        a,
        random_matrix(rng, n, m),
        random_matrix(rng, p, n),
        random_matrix(rng, p, m),
        Domain::discrete(1.0).unwrap(),
    )
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
