//! Uniform quantization, bounds for linear systems driven by quantization
//! error, and DPCM encoding/decoding.
//!
//! A quantizer is modeled as `Q(y) = y + d` with `|d|_inf <= Delta/2`. For
//! `x[k+1] = F x[k] + B d[k]` with diagonalizable Schur `F = T diag(l) T^{-1}`
//! the deviation from the free response satisfies
//! `|x[k] - F^k x0| <= c (1 - g^k)/(1 - g) |B| (Delta/2) sqrt(q)`
//! where `c = cond(T)`, `g > r(F)` and `q` is the number of quantized channels.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{hinf_norm, power_norm, sigma_max_real, simulate};
use crate::error::{dim, invalid, Error, Result};
use crate::lifting::Signal;
use crate::sslib::{eigenvalues, StateSpaceModel};

/// Uniform quantizer with step `delta`; ties round away from zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerConfig {
    delta: f64,
}

impl QuantizerConfig {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return invalid("quantization step must be positive and finite");
        }
        Ok(QuantizerConfig { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Nearest multiple of `delta`, ties away from zero.
    pub fn quantize_scalar(&self, x: f64) -> f64 {
        let half = 0.5 * self.delta;
        let mut q = (x / self.delta).round() * self.delta;
        // guard against rounding in the division
        if x - q > half {
            q += self.delta;
        } else if q - x > half {
            q -= self.delta;
        }
        q
    }
}

/// Componentwise quantization.
pub fn quantize(x: &[f64], cfg: &QuantizerConfig) -> Vec<f64> {
    x.iter().map(|v| cfg.quantize_scalar(*v)).collect()
}

/// Constants of the deviation bound for a diagonalizable Schur matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityBound {
    /// Condition number of the unit-column eigenvector matrix.
    pub c: f64,
    /// Contraction rate `r(F) + margin`.
    pub gamma: f64,
    /// Spectral norm of `B`.
    pub b_norm: f64,
    pub delta: f64,
    /// Number of quantized channels (columns of `B`).
    pub channels: usize,
    /// Limit of `r_k`.
    pub r_inf: f64,
    /// Radius of the invariant set `{x : |T^{-1} x| <= rho}`.
    pub rho: f64,
    /// Inverse eigenvector matrix `T^{-1}`.
    pub t_inv: DMatrix<Complex64>,
}

impl StabilityBound {
    /// Bound on `|x[k] - F^k x0|` after `k` steps.
    pub fn r_k(&self, k: usize) -> f64 {
        let geometric = if k == 0 {
            0.0
        } else {
            (1.0 - self.gamma.powi(k as i32)) / (1.0 - self.gamma)
        };
        self.c * geometric * self.noise_gain()
    }

    fn noise_gain(&self) -> f64 {
        self.b_norm * 0.5 * self.delta * (self.channels as f64).sqrt()
    }

    /// `|T^{-1} x|`, the gauge of the invariant set.
    pub fn modal_norm(&self, x: &DVector<f64>) -> f64 {
        let xc = x.map(|v| Complex64::new(v, 0.0));
        (&self.t_inv * xc).norm()
    }
}

fn complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Unit-column eigenvector matrix of `f`, or an error for defective `f`.
fn eigenvector_matrix(f: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
    let n = f.nrows();
    let lambdas = eigenvalues(f)?;
    let scale = sigma_max_real(f).max(1.0);
    let cluster_tol = 1e-8 * scale;
    let mut used = vec![false; n];
    let mut t = DMatrix::<Complex64>::zeros(n, n);
    let mut col = 0;
    for i in 0..n {
        if used[i] {
            continue;
        }
        let members: Vec<usize> = (i..n)
            .filter(|&j| !used[j] && (lambdas[j] - lambdas[i]).norm() <= cluster_tol)
            .collect();
        let center = members.iter().map(|&j| lambdas[j]).sum::<Complex64>() / members.len() as f64;
        let shifted = complex(f) - DMatrix::<Complex64>::identity(n, n) * center;
        let svd = shifted.svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::NoConvergence("eigenvector SVD".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let k = members.len();
        if svd.singular_values[order[k - 1]] > 1e-6 * scale {
            return Err(Error::NotDiagonalizable {
                condition: f64::INFINITY,
            });
        }
        for &idx in order.iter().take(k) {
            let v = v_t.row(idx).adjoint();
            t.set_column(col, &(&v / Complex64::new(v.norm(), 0.0)));
            col += 1;
        }
        for &j in &members {
            used[j] = true;
        }
    }
    Ok(t)
}

/// Deviation-bound constants for `x+ = F x + B d`, `|d|_inf <= delta/2`.
/// Rejects `F` whose eigenvector matrix has condition number above `1e8`.
pub fn stability_bounds(
    f: &DMatrix<f64>,
    b: &DMatrix<f64>,
    delta: f64,
    gamma_margin: f64,
) -> Result<StabilityBound> {
    let n = f.nrows();
    if f.ncols() != n || b.nrows() != n {
        return dim("F must be square and B must have as many rows as F");
    }
    if !(delta > 0.0) || !(gamma_margin > 0.0) {
        return invalid("delta and the margin must be positive");
    }
    let radius = eigenvalues(f)?.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let gamma = radius + gamma_margin;
    if gamma >= 1.0 {
        return Err(Error::Unstable {
            context: "r(F) + margin must be below 1".into(),
            spectral_radius: radius,
        });
    }
    let (c, t_inv) = if n == 0 {
        (1.0, DMatrix::zeros(0, 0))
    } else {
        let t = eigenvector_matrix(f)?;
        let sv = t.clone().svd(false, false).singular_values;
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let c = if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        };
        if !(c <= 1e8) {
            return Err(Error::NotDiagonalizable { condition: c });
        }
        let t_inv = t
            .try_inverse()
            .ok_or(Error::NotDiagonalizable { condition: c })?;
        (c, t_inv)
    };
    let b_norm = sigma_max_real(b);
    let channels = b.ncols();
    let t_inv_norm = if n == 0 {
        0.0
    } else {
        t_inv
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    };
    let noise = b_norm * 0.5 * delta * (channels as f64).sqrt();
    Ok(StabilityBound {
        c,
        gamma,
        b_norm,
        delta,
        channels,
        r_inf: c * noise / (1.0 - gamma),
        rho: t_inv_norm * noise / (1.0 - gamma),
        t_inv,
    })
}

/// Outcome of [`invariant_set_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSetReport {
    pub trials: usize,
    pub steps: usize,
    /// Largest `|x| / r_inf` seen on trajectories started on the boundary of
    /// the modal invariant set.
    pub max_ball_ratio: f64,
    /// Largest `|T^{-1} x| / rho` on the same trajectories.
    pub max_modal_ratio: f64,
    /// Largest `|x| / r_inf` on trajectories started on the sphere
    /// `|x0| = r_inf`; at most `c` in theory, at most 1 when `F` is normal.
    pub max_sphere_ratio: f64,
    pub contained: bool,
    /// First trajectory that left its bound, if any.
    pub witness: Option<Vec<DVector<f64>>>,
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 1e-3 {
            return v / norm;
        }
    }
}

/// Disturbance vertex in `{-delta/2, delta/2}^q` that maximizes the next
/// state norm (greedy adversary); falls back to random signs for large `q`.
fn adversarial_d(
    f: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x: &DVector<f64>,
    half: f64,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    let q = b.ncols();
    if q > 10 {
        return DVector::from_fn(q, |_, _| if rng.random_bool(0.5) { half } else { -half });
    }
    let fx = f * x;
    let mut best = (f64::NEG_INFINITY, DVector::zeros(q));
    for mask in 0..(1usize << q) {
        let d = DVector::from_fn(q, |i, _| if mask >> i & 1 == 1 { half } else { -half });
        let v = (&fx + b * &d).norm();
        if v > best.0 {
            best = (v, d);
        }
    }
    best.1
}

/// Simulates `x+ = F x + B d` from boundary states with greedy adversarial
/// and random-sign disturbances, checking the ball `|x| <= r_inf` and the
/// modal invariant set.
pub fn invariant_set_check(
    bound: &StabilityBound,
    f: &DMatrix<f64>,
    b: &DMatrix<f64>,
    trials: usize,
    steps: usize,
    seed: u64,
) -> Result<InvariantSetReport> {
    let n = f.nrows();
    if f.ncols() != n || b.nrows() != n || b.ncols() != bound.channels {
        return dim("F and B do not match the bound");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.5 * bound.delta;
    let slack = 1e-9;
    let mut report = InvariantSetReport {
        trials,
        steps,
        max_ball_ratio: 0.0,
        max_modal_ratio: 0.0,
        max_sphere_ratio: 0.0,
        contained: true,
        witness: None,
    };
    if n == 0 || bound.r_inf == 0.0 {
        return Ok(report);
    }
    for trial in 0..trials {
        let greedy = trial % 2 == 0;
        let dir = random_direction(&mut rng, n);
        // start on the boundary of the modal set
        let mut x = &dir * (bound.rho / bound.modal_norm(&dir));
        let mut path = vec![x.clone()];
        let mut failed = false;
        for _ in 0..steps {
            let d = if greedy {
                adversarial_d(f, b, &x, half, &mut rng)
            } else {
                DVector::from_fn(
                    b.ncols(),
                    |_, _| if rng.random_bool(0.5) { half } else { -half },
                )
            };
            x = f * &x + b * d;
            path.push(x.clone());
            let ball = x.norm() / bound.r_inf;
            let modal = if bound.rho > 0.0 {
                bound.modal_norm(&x) / bound.rho
            } else {
                0.0
            };
            report.max_ball_ratio = report.max_ball_ratio.max(ball);
            report.max_modal_ratio = report.max_modal_ratio.max(modal);
            if ball > 1.0 + slack || modal > 1.0 + slack {
                failed = true;
            }
        }
        // start on the sphere |x0| = r_inf
        let mut y = &dir * bound.r_inf;
        let mut sphere_path = vec![y.clone()];
        for _ in 0..steps {
            let d = if greedy {
                adversarial_d(f, b, &y, half, &mut rng)
            } else {
                DVector::from_fn(
                    b.ncols(),
                    |_, _| if rng.random_bool(0.5) { half } else { -half },
                )
            };
            y = f * &y + b * d;
            sphere_path.push(y.clone());
            let ratio = y.norm() / bound.r_inf;
            report.max_sphere_ratio = report.max_sphere_ratio.max(ratio);
            if ratio > bound.c * (1.0 + slack) && report.witness.is_none() {
                report.contained = false;
                report.witness = Some(sphere_path.clone());
            }
        }
        if failed {
            report.contained = false;
            if report.witness.is_none() {
                report.witness = Some(path);
            }
        }
    }
    Ok(report)
}

/// Encoder output: prediction error before and after quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub e: Signal,
    pub e_hat: Signal,
}

/// Streaming DPCM encoder `e = r - u`, `e^ = Q(e)`, `u = K1 e^`.
///
/// With a strictly causal `K1` the prediction `u[k]` uses `e^[0..k-1]`. If
/// `K1` has a direct feedthrough, the prediction used at step `k` is the
/// full output computed at step `k - 1`.
#[derive(Debug, Clone)]
pub struct DpcmEncoder {
    k1: StateSpaceModel,
    cfg: QuantizerConfig,
    x: DVector<f64>,
    u_prev: f64,
    strictly_causal: bool,
}

impl DpcmEncoder {
    pub fn new(k1: &StateSpaceModel, cfg: QuantizerConfig) -> Result<Self> {
        if k1.ninputs() != 1 || k1.noutputs() != 1 {
            return dim("predictor must be SISO");
        }
        k1.require_discrete("predictor")?;
        Ok(DpcmEncoder {
            strictly_causal: k1.d()[(0, 0)] == 0.0,
            x: DVector::zeros(k1.nstates()),
            k1: k1.clone(),
            cfg,
            u_prev: 0.0,
        })
    }

    /// Processes one sample and returns `(e, e^)`.
    pub fn step(&mut self, r: f64) -> (f64, f64) {
        let u = if self.strictly_causal {
            (self.k1.c() * &self.x)[0]
        } else {
            self.u_prev
        };
        let e = r - u;
        let e_hat = self.cfg.quantize_scalar(e);
        let out = (self.k1.c() * &self.x)[0] + self.k1.d()[(0, 0)] * e_hat;
        self.x = self.k1.a() * &self.x + self.k1.b() * e_hat;
        self.u_prev = out;
        (e, e_hat)
    }
}

/// Encodes a scalar signal.
pub fn dpcm_encode(r: &Signal, k1: &StateSpaceModel, cfg: &QuantizerConfig) -> Result<Encoded> {
    if r.dim() != 1 {
        return dim("DPCM works on scalar signals");
    }
    let mut enc = DpcmEncoder::new(k1, *cfg)?;
    let (e, e_hat): (Vec<f64>, Vec<f64>) = r.as_flat().iter().map(|v| enc.step(*v)).unzip();
    Ok(Encoded {
        e: Signal::scalar(e, r.period())?,
        e_hat: Signal::scalar(e_hat, r.period())?,
    })
}

/// Decodes `r^ = K2 (e^ + n)`.
pub fn dpcm_decode(e_hat: &Signal, noise: &Signal, k2: &StateSpaceModel) -> Result<Signal> {
    if e_hat.dim() != 1 || noise.dim() != 1 || e_hat.len() != noise.len() {
        return dim("decoder input and noise must be scalar signals of equal length");
    }
    if k2.ninputs() != 1 || k2.noutputs() != 1 {
        return dim("decoder must be SISO");
    }
    let sum: Vec<f64> = e_hat
        .as_flat()
        .iter()
        .zip(noise.as_flat())
        .map(|(a, b)| a + b)
        .collect();
    simulate(k2, &Signal::scalar(sum, e_hat.period())?, None)
}

/// Test disturbance for [`power_gain_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Disturbance {
    /// Independent uniform samples in `[-delta/2, delta/2]`.
    Uniform,
    /// Independent random signs of magnitude `delta/2`.
    RandomSign,
    /// Sinusoid of amplitude `delta/2` at the peak-gain frequency.
    PeakSinusoid,
}

/// Outcome of [`power_gain_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerGainReport {
    /// `||T_zd||_inf`.
    pub gamma: f64,
    /// `gamma delta / 2`.
    pub bound: f64,
    /// Power of the output over the trailing window.
    pub estimate: f64,
    /// `estimate <= bound (1 + slack)`.
    pub holds: bool,
}

/// Drives `T_zd` with a bounded disturbance for `2 window` samples and
/// compares the output power over the last `window` samples with `gamma delta/2`.
pub fn power_gain_check(
    t_zd: &StateSpaceModel,
    delta: f64,
    window: usize,
    kind: Disturbance,
    slack: f64,
    seed: u64,
) -> Result<PowerGainReport> {
    if t_zd.ninputs() != 1 {
        return dim("power gain check expects a single disturbance input");
    }
    if !(delta > 0.0) || window == 0 {
        return invalid("delta and window must be positive");
    }
    t_zd.require_schur("T_zd")?;
    let hn = hinf_norm(t_zd, 1e-6)?;
    let half = 0.5 * delta;
    let len = 2 * window;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d: Vec<f64> = match kind {
        Disturbance::Uniform => (0..len).map(|_| rng.random_range(-half..=half)).collect(),
        Disturbance::RandomSign => (0..len)
            .map(|_| if rng.random_bool(0.5) { half } else { -half })
            .collect(),
        Disturbance::PeakSinusoid => (0..len)
            .map(|k| half * (hn.peak_omega * k as f64).cos())
            .collect(),
    };
    let period = t_zd.period().unwrap_or(1.0);
    let z = simulate(t_zd, &Signal::scalar(d, period)?, None)?;
    let estimate = power_norm(&z, window)?.value;
    let bound = hn.gamma * half;
    Ok(PowerGainReport {
        gamma: hn.gamma,
        bound,
        estimate,
        holds: estimate <= bound * (1.0 + slack),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sslib::{add, tf_to_ss, Domain, TransferFunction};
    use nalgebra::dmatrix;

    #[test]
    fn quantizer_examples() {
        let q = QuantizerConfig::new(0.25).unwrap();
        assert_eq!(q.quantize_scalar(0.0), 0.0);
        assert_eq!(q.quantize_scalar(0.3), 0.25);
        assert_eq!(q.quantize_scalar(0.125), 0.25);
        assert_eq!(q.quantize_scalar(-0.125), -0.25);
        assert!(QuantizerConfig::new(0.0).is_err());
        assert_eq!(quantize(&[0.3, -0.3], &q), vec![0.25, -0.25]);
    }

    #[test]
    fn scalar_bound_is_tight() {
        let f = dmatrix![0.5];
        let b = dmatrix![1.0];
        let bound = stability_bounds(&f, &b, 0.2, 1e-9).unwrap();
        assert!((bound.c - 1.0).abs() < 1e-12);
        assert!((bound.r_inf - 0.2).abs() < 1e-8);
        // constant worst case d = 0.1 drives x to 0.2
        let mut x = 0.0;
        for _ in 0..200 {
            x = 0.5 * x + 0.1;
        }
        assert!(x <= bound.r_inf && x > 0.2 - 1e-9);
    }

    #[test]
    fn scalar_exhaustive_sign_sequences() {
        let f = dmatrix![0.5];
        let b = dmatrix![1.0];
        let bound = stability_bounds(&f, &b, 0.2, 1e-9).unwrap();
        for start in [-0.2f64, 0.2] {
            for mask in 0..(1u32 << 12) {
                let mut x = start;
                for i in 0..12 {
                    let d = if mask >> i & 1 == 1 { 0.1 } else { -0.1 };
                    x = 0.5 * x + d;
                    assert!(x.abs() <= bound.r_inf + 1e-12);
                }
            }
        }
    }

    #[test]
    fn deadbeat_and_repeated_eigenvalues() {
        let f = DMatrix::zeros(3, 3);
        let b = dmatrix![1.0; 0.5; 0.0];
        let bound = stability_bounds(&f, &b, 0.1, 0.01).unwrap();
        assert!((bound.c - 1.0).abs() < 1e-9);
        let expect = b.norm() * 0.05 / (1.0 - 0.01);
        assert!((bound.r_inf - expect).abs() < 1e-12);
        let f = DMatrix::identity(2, 2) * 0.3;
        assert!(
            (stability_bounds(&f, &dmatrix![1.0; 1.0], 0.1, 0.01)
                .unwrap()
                .c
                - 1.0)
                .abs()
                < 1e-9
        );
    }

    #[test]
    fn defective_matrix_is_rejected() {
        let f = dmatrix![0.5, 1.0; 0.0, 0.5];
        assert!(matches!(
            stability_bounds(&f, &dmatrix![1.0; 1.0], 0.1, 0.01),
            Err(Error::NotDiagonalizable { .. })
        ));
        let f = dmatrix![1.2, 0.0; 0.0, 0.5];
        assert!(matches!(
            stability_bounds(&f, &dmatrix![1.0; 1.0], 0.1, 0.01),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn non_normal_invariant_set() {
        let f = dmatrix![0.6, 2.0; 0.0, -0.3];
        let b = dmatrix![0.0; 1.0];
        let bound = stability_bounds(&f, &b, 0.2, 0.01).unwrap();
        assert!(bound.c > 1.0);
        let rep = invariant_set_check(&bound, &f, &b, 50, 200, 7).unwrap();
        assert!(rep.contained, "{rep:?}");
        assert!(rep.max_modal_ratio <= 1.0 + 1e-9);
    }

    #[test]
    fn pcm_and_no_noise_identity() {
        let d = Domain::discrete(1.0).unwrap();
        let cfg = QuantizerConfig::new(0.125).unwrap();
        let r = Signal::scalar((0..200).map(|k| (0.3 * k as f64).sin()).collect(), 1.0).unwrap();
        let zero = StateSpaceModel::zero(1, 1, d).unwrap();
        let enc = dpcm_encode(&r, &zero, &cfg).unwrap();
        assert_eq!(enc.e_hat.as_flat(), quantize(r.as_flat(), &cfg).as_slice());
        let k1 =
            tf_to_ss(&TransferFunction::new(&[0.5, 0.1], &[1.0, -0.3, 0.1], d).unwrap()).unwrap();
        let enc = dpcm_encode(&r, &k1, &cfg).unwrap();
        let k2 = add(&StateSpaceModel::identity(1, d).unwrap(), &k1).unwrap();
        let n = Signal::zeros(1, 200, 1.0).unwrap();
        let rh = dpcm_decode(&enc.e_hat, &n, &k2).unwrap();
        for k in 0..200 {
            let err = rh.as_flat()[k] - r.as_flat()[k];
            assert!(err.abs() <= 0.0625 + 1e-12);
        }
    }

    #[test]
    fn static_power_gain() {
        let d = Domain::discrete(1.0).unwrap();
        let g = StateSpaceModel::static_gain(dmatrix![-3.0], d).unwrap();
        let rep = power_gain_check(&g, 0.2, 1000, Disturbance::RandomSign, 1e-12, 1).unwrap();
        assert!((rep.estimate - 0.3).abs() < 1e-12 && rep.holds, "{rep:?}");
    }
}
