//! Multirate operators, discrete-time lifting and fast-sample/fast-hold
//! lifted realizations.
//!
//! Lifting stacks `N` consecutive samples into one vector, index 0 first
//! (type-1 polyphase order). A continuous plant driven by a hold and
//! observed by a sampler, both at period `h/N`, becomes a single-rate
//! discrete system at period `h` after lifting.

use nalgebra::DMatrix;

use crate::error::{dim, invalid, Error, Result};
use crate::sslib::{zoh_pair, Domain, StateSpaceModel};
use crate::synthesis::FirFilter;

/// Uniformly sampled vector-valued sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    dim: usize,
    data: Vec<f64>,
    period: f64,
}

impl Signal {
    /// Builds a signal from per-sample vectors of equal length.
    pub fn new(samples: &[Vec<f64>], period: f64) -> Result<Signal> {
        let dim = samples.first().map(|s| s.len()).unwrap_or(1);
        if samples.iter().any(|s| s.len() != dim) {
            return dim_err("samples have different dimensions");
        }
        let data = samples.iter().flatten().cloned().collect();
        Self::from_flat(dim, data, period)
    }

    /// Builds a signal from row-major storage (`dim` values per sample).
    pub fn from_flat(dim: usize, data: Vec<f64>, period: f64) -> Result<Signal> {
        if dim == 0 {
            return invalid("signal dimension must be positive");
        }
        if !data.len().is_multiple_of(dim) {
            return dim_err("data length is not a multiple of the dimension");
        }
        if !(period.is_finite() && period > 0.0) {
            return invalid(format!("signal period must be positive, got {period}"));
        }
        Ok(Signal { dim, data, period })
    }

    /// Scalar signal.
    pub fn scalar(values: Vec<f64>, period: f64) -> Result<Signal> {
        Self::from_flat(1, values, period)
    }

    /// `len` zero samples of dimension `dim`.
    pub fn zeros(dim: usize, len: usize, period: f64) -> Result<Signal> {
        Self::from_flat(dim, vec![0.0; dim * len], period)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn period(&self) -> f64 {
        self.period
    }
    /// Row-major sample storage.
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }
    /// All values of channel `i` in time order.
    pub fn channel(&self, i: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(i)
            .step_by(self.dim)
            .cloned()
            .collect()
    }
    /// Euclidean norm over all samples and channels.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
    /// Largest absolute entry.
    pub fn linf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn dim_err<T>(msg: &str) -> Result<T> {
    Err(Error::Dimension(msg.to_string()))
}

fn check_factor(n: usize) -> Result<()> {
    if n == 0 {
        invalid("rate factor must be at least 1")
    } else {
        Ok(())
    }
}

/// Zero insertion: `M - 1` zeros after each sample; period divided by `M`.
pub fn upsample(x: &Signal, m: usize) -> Result<Signal> {
    check_factor(m)?;
    let mut data = vec![0.0; x.data.len() * m];
    for k in 0..x.len() {
        data[k * m * x.dim..(k * m + 1) * x.dim].copy_from_slice(x.sample(k));
    }
    Signal::from_flat(x.dim, data, x.period / m as f64)
}

/// Keeps samples `0, M, 2M, ...`; period multiplied by `M`.
pub fn downsample(x: &Signal, m: usize) -> Result<Signal> {
    check_factor(m)?;
    let data = (0..x.len())
        .step_by(m)
        .flat_map(|k| x.sample(k).to_vec())
        .collect();
    Signal::from_flat(x.dim, data, x.period * m as f64)
}

/// A lifted signal together with the length it had before zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSignal {
    pub signal: Signal,
    pub factor: usize,
    pub original_len: usize,
}

/// Stacks blocks of `N` samples; pads with zeros to a multiple of `N`.
pub fn lift_signal(x: &Signal, n: usize) -> Result<LiftedSignal> {
    check_factor(n)?;
    let blocks = x.len().div_ceil(n);
    let mut data = x.data.clone();
    data.resize(blocks * n * x.dim, 0.0);
    Ok(LiftedSignal {
        signal: Signal::from_flat(x.dim * n, data, x.period * n as f64)?,
        factor: n,
        original_len: x.len(),
    })
}

/// Inverse of [`lift_signal`], dropping the padding.
pub fn unlift_signal(x: &LiftedSignal) -> Result<Signal> {
    let mut s = unlift(&x.signal, x.factor)?;
    s.data.truncate(x.original_len * s.dim);
    Ok(s)
}

/// Splits each sample of dimension `N d` into `N` consecutive samples of dimension `d`.
pub fn unlift(x: &Signal, n: usize) -> Result<Signal> {
    check_factor(n)?;
    if !x.dim.is_multiple_of(n) {
        return dim_err("lifted dimension is not a multiple of the factor");
    }
    Signal::from_flat(x.dim / n, x.data.clone(), x.period / n as f64)
}

/// A single-rate discrete system obtained by lifting with factor `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSystem {
    pub inner: StateSpaceModel,
    pub factor: usize,
    /// Input width before lifting.
    pub base_inputs: usize,
    /// Output width before lifting.
    pub base_outputs: usize,
}

/// Block realization shared by discrete lifting and FSFH lifting, given the
/// fast-rate matrices.
fn lifted_blocks(
    ad: &DMatrix<f64>,
    bd: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    n: usize,
    period: f64,
) -> Result<StateSpaceModel> {
    let ns = ad.nrows();
    let (p, m) = d.shape();
    // powers[k] = Ad^k, k = 0..N
    let mut powers = Vec::with_capacity(n + 1);
    powers.push(DMatrix::<f64>::identity(ns, ns));
    for k in 1..=n {
        let next = ad * &powers[k - 1];
        powers.push(next);
    }
    let mut b = DMatrix::zeros(ns, n * m);
    for col in 0..n {
        b.view_mut((0, col * m), (ns, m))
            .copy_from(&(&powers[n - 1 - col] * bd));
    }
    let mut cl = DMatrix::zeros(n * p, ns);
    for (row, pw) in powers.iter().take(n).enumerate() {
        cl.view_mut((row * p, 0), (p, ns)).copy_from(&(c * pw));
    }
    // Markov parameters c Ad^k bd for k = 0..N-2
    let markov: Vec<DMatrix<f64>> = (0..n.saturating_sub(1))
        .map(|k| c * &powers[k] * bd)
        .collect();
    let mut dl = DMatrix::zeros(n * p, n * m);
    for row in 0..n {
        dl.view_mut((row * p, row * m), (p, m)).copy_from(d);
        for col in 0..row {
            dl.view_mut((row * p, col * m), (p, m))
                .copy_from(&markov[row - col - 1]);
        }
    }
    StateSpaceModel::new(powers[n].clone(), b, cl, dl, Domain::discrete(period)?)
}

/// FSFH lifting of a continuous system: hold and sampler at period `h/N`,
/// lifted to a single-rate system at period `h`.
pub fn fsfh_lift(sys: &StateSpaceModel, h: f64, n: usize) -> Result<LiftedSystem> {
    if sys.domain() != Domain::Continuous {
        return Err(Error::Domain(
            "fsfh_lift expects a continuous-time model".into(),
        ));
    }
    check_factor(n)?;
    Domain::discrete(h)?;
    let (ad, bd) = zoh_pair(sys.a(), sys.b(), h / n as f64);
    Ok(LiftedSystem {
        inner: lifted_blocks(&ad, &bd, sys.c(), sys.d(), n, h)?,
        factor: n,
        base_inputs: sys.ninputs(),
        base_outputs: sys.noutputs(),
    })
}

/// Discrete-time lifting of a discrete system by factor `N`.
pub fn dlift(sys: &StateSpaceModel, n: usize) -> Result<LiftedSystem> {
    let period = sys.require_discrete("dlift")?;
    check_factor(n)?;
    Ok(LiftedSystem {
        inner: lifted_blocks(sys.a(), sys.b(), sys.c(), sys.d(), n, period * n as f64)?,
        factor: n,
        base_inputs: sys.ninputs(),
        base_outputs: sys.noutputs(),
    })
}

/// Selection matrices for `N = k M1 M2`: `S` (M1 x N) keeps the first fast
/// sample of each slow period `h/M1`, `H` (N x M2) repeats each slow-hold
/// value over the `k M1` fast samples of a period `h/M2`.
pub fn selection_matrices(m1: usize, m2: usize, n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if m1 == 0 || m2 == 0 || n == 0 {
        return invalid("selection factors must be positive");
    }
    if !n.is_multiple_of(m1 * m2) {
        return invalid(format!("N = {n} is not divisible by M1 M2 = {}", m1 * m2));
    }
    let k = n / (m1 * m2);
    let mut s = DMatrix::zeros(m1, n);
    for i in 0..m1 {
        s[(i, i * k * m2)] = 1.0;
    }
    let mut hm = DMatrix::zeros(n, m2);
    for j in 0..m2 {
        for r in 0..k * m1 {
            hm[(j * k * m1 + r, j)] = 1.0;
        }
    }
    Ok((s, hm))
}

/// Fast-rate SISO filter `K(z) = sum_i z^{-i} K~_i(z^L)` from a
/// 1-input/L-output lifted filter.
pub fn polyphase_reconstruct_interp(kt: &FirFilter, l: usize) -> Result<FirFilter> {
    check_factor(l)?;
    if kt.inputs() != 1 || kt.outputs() != l {
        return dim(format!(
            "interpolator polyphase filter must be {l}x1, got {}x{}",
            kt.outputs(),
            kt.inputs()
        ));
    }
    let mut taps = vec![0.0; l * kt.taps().len()];
    for (j, c) in kt.taps().iter().enumerate() {
        for i in 0..l {
            taps[j * l + i] = c[(i, 0)];
        }
    }
    FirFilter::scalar(&taps, kt.period() / l as f64)
}

/// Causal fast-rate SISO filter `H(z) = z^{-M} H~(z^M) [1, z, ..., z^{M-1}]^T`
/// from an M-input/1-output lifted filter.
pub fn polyphase_reconstruct_decim(ht: &FirFilter, m: usize) -> Result<FirFilter> {
    check_factor(m)?;
    if ht.outputs() != 1 || ht.inputs() != m {
        return dim(format!(
            "decimator polyphase filter must be 1x{m}, got {}x{}",
            ht.outputs(),
            ht.inputs()
        ));
    }
    let mut taps = vec![0.0; m * ht.taps().len() + 1];
    for (j, c) in ht.taps().iter().enumerate() {
        for i in 0..m {
            taps[(j + 1) * m - i] = c[(0, i)];
        }
    }
    FirFilter::scalar(&taps, ht.period() / m as f64)
}

/// Inverse of [`polyphase_reconstruct_decim`] for a fast filter `z^{-1} b(z)`:
/// returns the lifted filter whose causal reconstruction is `z^{-1} b`
/// (padded to whole blocks).
pub fn polyphase_decompose_decim(b: &[f64], m: usize, period_fast: f64) -> Result<FirFilter> {
    check_factor(m)?;
    let blocks = b.len().div_ceil(m).max(1);
    let taps = (0..blocks)
        .map(|j| {
            DMatrix::from_fn(1, m, |_, i| {
                b.get((j + 1) * m - i - 1).cloned().unwrap_or(0.0)
            })
        })
        .collect();
    FirFilter::new(taps, period_fast * m as f64)
}

/// Inverse of [`polyphase_reconstruct_interp`] (padded to whole blocks).
pub fn polyphase_decompose_interp(k: &[f64], l: usize, period_fast: f64) -> Result<FirFilter> {
    check_factor(l)?;
    let blocks = k.len().div_ceil(l).max(1);
    let taps = (0..blocks)
        .map(|j| DMatrix::from_fn(l, 1, |i, _| k.get(j * l + i).cloned().unwrap_or(0.0)))
        .collect();
    FirFilter::new(taps, period_fast * l as f64)
}
