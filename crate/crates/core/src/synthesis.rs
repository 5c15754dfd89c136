//! H-infinity optimal FIR design for one-block generalized plants.
//!
//! The closed loop `T = G11 + G12 K G21` is affine in the FIR taps of `K`,
//! so `max_w sigma_max(T(e^{jw}))` is convex in the taps. The design solves
//! this semi-infinite minimax with an exchange method: a finite frequency
//! grid is minimized, the true peak of the resulting closed loop is located
//! with [`hinf_norm`], and the peak frequencies are added to the grid until
//! the certified norm and the grid value agree.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::analysis::{
    brl_block_matrix, brl_certificate, hinf_norm, linear_grid, max_symmetric_eigenvalue, sigma_max,
};
use crate::error::{dim, invalid, Error, Result};
use crate::sslib::{add, product_chain, same_period, Domain, StateSpaceModel};

/// FIR filter `K(z) = sum_k C_k z^{-k}` with `p x m` taps.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<DMatrix<f64>>,
    period: f64,
}

impl FirFilter {
    pub fn new(taps: Vec<DMatrix<f64>>, period: f64) -> Result<FirFilter> {
        let first = taps
            .first()
            .ok_or_else(|| Error::InvalidArgument("FIR filter needs at least one tap".into()))?;
        let shape = first.shape();
        if taps.iter().any(|t| t.shape() != shape) {
            return dim("FIR taps have different shapes");
        }
        if taps.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return invalid("FIR taps must be finite");
        }
        Domain::discrete(period)?;
        Ok(FirFilter { taps, period })
    }

    /// SISO filter from scalar taps.
    pub fn scalar(taps: &[f64], period: f64) -> Result<FirFilter> {
        Self::new(
            taps.iter()
                .map(|&v| DMatrix::from_element(1, 1, v))
                .collect(),
            period,
        )
    }

    /// All-zero filter of the given order and shape.
    pub fn zeros(order: usize, outputs: usize, inputs: usize, period: f64) -> Result<FirFilter> {
        Self::new(vec![DMatrix::zeros(outputs, inputs); order + 1], period)
    }

    /// Filter whose taps are read from a flat parameter vector ordered by
    /// tap, then row, then column.
    pub fn from_params(
        params: &[f64],
        order: usize,
        outputs: usize,
        inputs: usize,
        period: f64,
    ) -> Result<FirFilter> {
        let per = outputs * inputs;
        if params.len() != (order + 1) * per {
            return dim("parameter vector length does not match the filter shape");
        }
        let taps = (0..=order)
            .map(|j| DMatrix::from_row_slice(outputs, inputs, &params[j * per..(j + 1) * per]))
            .collect();
        Self::new(taps, period)
    }

    /// Flat parameter vector (inverse of [`FirFilter::from_params`]).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.taps.len() * self.outputs() * self.inputs());
        for t in &self.taps {
            for r in 0..t.nrows() {
                for c in 0..t.ncols() {
                    out.push(t[(r, c)]);
                }
            }
        }
        out
    }

    pub fn taps(&self) -> &[DMatrix<f64>] {
        &self.taps
    }
    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }
    pub fn outputs(&self) -> usize {
        self.taps[0].nrows()
    }
    pub fn inputs(&self) -> usize {
        self.taps[0].ncols()
    }
    pub fn period(&self) -> f64 {
        self.period
    }

    /// Entry (0, 0) of every tap.
    pub fn scalar_taps(&self) -> Vec<f64> {
        self.taps.iter().map(|t| t[(0, 0)]).collect()
    }

    /// Same taps padded with zeros up to `order`.
    pub fn padded(&self, order: usize) -> Result<FirFilter> {
        if order < self.order() {
            return invalid("cannot pad a filter to a lower order");
        }
        let mut taps = self.taps.clone();
        taps.resize(order + 1, DMatrix::zeros(self.outputs(), self.inputs()));
        Self::new(taps, self.period)
    }

    /// Frequency response at `omega` rad/sample.
    pub fn eval(&self, omega: f64) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.outputs(), self.inputs());
        for (k, t) in self.taps.iter().enumerate() {
            let z = Complex64::from_polar(1.0, -omega * k as f64);
            out += t.map(|v| z * v);
        }
        out
    }

    /// Shift-register realization on the narrower side (inputs or outputs).
    pub fn to_state_space(&self) -> Result<StateSpaceModel> {
        let (p, m, n) = (self.outputs(), self.inputs(), self.order());
        let domain = Domain::discrete(self.period)?;
        if n == 0 {
            return StateSpaceModel::static_gain(self.taps[0].clone(), domain);
        }
        if m <= p {
            // x = [u[k-1]; ...; u[k-n]]
            let ns = n * m;
            let mut a = DMatrix::zeros(ns, ns);
            for i in m..ns {
                a[(i, i - m)] = 1.0;
            }
            let mut b = DMatrix::zeros(ns, m);
            b.view_mut((0, 0), (m, m)).fill_with_identity();
            let mut c = DMatrix::zeros(p, ns);
            for j in 1..=n {
                c.view_mut((0, (j - 1) * m), (p, m))
                    .copy_from(&self.taps[j]);
            }
            StateSpaceModel::new(a, b, c, self.taps[0].clone(), domain)
        } else {
            // observable form: y = C_0 u + x_1, x_i+ = x_{i+1} + C_i u
            let ns = n * p;
            let mut a = DMatrix::zeros(ns, ns);
            for i in 0..ns - p {
                a[(i, i + p)] = 1.0;
            }
            let mut b = DMatrix::zeros(ns, m);
            for j in 1..=n {
                b.view_mut(((j - 1) * p, 0), (p, m))
                    .copy_from(&self.taps[j]);
            }
            let mut c = DMatrix::zeros(p, ns);
            c.view_mut((0, 0), (p, p)).fill_with_identity();
            StateSpaceModel::new(a, b, c, self.taps[0].clone(), domain)
        }
    }

    /// Convolution of two SISO filters at the same rate.
    pub fn convolve(&self, other: &FirFilter) -> Result<FirFilter> {
        if self.outputs() != 1 || self.inputs() != 1 || other.outputs() != 1 || other.inputs() != 1
        {
            return dim("convolution is defined for SISO filters");
        }
        if !same_period(self.period, other.period) {
            return Err(Error::Domain(
                "convolving filters at different rates".into(),
            ));
        }
        let taps = crate::sslib::poly_mul(&self.scalar_taps(), &other.scalar_taps());
        Self::scalar(&taps, self.period)
    }

    /// Text tap file: `#` header with dimensions and period, then one line
    /// per tap `k c_11 c_12 ...` (row-major).
    pub fn to_tap_file(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# fir taps={} outputs={} inputs={} period={}",
            self.taps.len(),
            self.outputs(),
            self.inputs(),
            self.period
        );
        for (k, t) in self.taps.iter().enumerate() {
            let _ = write!(out, "{k}");
            for r in 0..t.nrows() {
                for c in 0..t.ncols() {
                    let _ = write!(out, " {}", t[(r, c)]);
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parses the format written by [`FirFilter::to_tap_file`].
    pub fn from_tap_file(text: &str) -> Result<FirFilter> {
        let mut header: Option<(usize, usize, usize, f64)> = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let mut taps = None;
                let mut outs = None;
                let mut ins = None;
                let mut period = None;
                for tok in h.split_whitespace() {
                    if let Some((k, v)) = tok.split_once('=') {
                        let bad = || Error::Parse(format!("bad header value {tok}"));
                        match k {
                            "taps" => taps = Some(v.parse::<usize>().map_err(|_| bad())?),
                            "outputs" => outs = Some(v.parse::<usize>().map_err(|_| bad())?),
                            "inputs" => ins = Some(v.parse::<usize>().map_err(|_| bad())?),
                            "period" => period = Some(v.parse::<f64>().map_err(|_| bad())?),
                            _ => {}
                        }
                    }
                }
                if let (Some(t), Some(o), Some(i), Some(p)) = (taps, outs, ins, period) {
                    header = Some((t, o, i, p));
                }
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad number {t}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(vals);
        }
        let (t, o, i, p) = header.ok_or_else(|| Error::Parse("missing tap-file header".into()))?;
        if rows.len() != t {
            return Err(Error::Parse(format!(
                "expected {t} taps, found {}",
                rows.len()
            )));
        }
        let mut taps = Vec::with_capacity(t);
        for (k, r) in rows.iter().enumerate() {
            if r.len() != 1 + o * i || r[0] != k as f64 {
                return Err(Error::Parse(format!("malformed tap line {k}")));
            }
            taps.push(DMatrix::from_row_slice(o, i, &r[1..]));
        }
        FirFilter::new(taps, p)
    }
}

/// One-block generalized plant: closed loop `G11 + G12 K G21`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedPlant {
    pub g11: StateSpaceModel,
    pub g12: StateSpaceModel,
    pub g21: StateSpaceModel,
}

impl GeneralizedPlant {
    /// Checks conformity, a common sampling period and Schur stability of every block.
    pub fn new(g11: StateSpaceModel, g12: StateSpaceModel, g21: StateSpaceModel) -> Result<Self> {
        let h = g11.require_discrete("G11")?;
        for (g, name) in [(&g12, "G12"), (&g21, "G21")] {
            let hg = g.require_discrete(name)?;
            if !same_period(h, hg) {
                return Err(Error::Domain(format!(
                    "{name} period {hg} differs from G11 period {h}"
                )));
            }
        }
        if g12.noutputs() != g11.noutputs() {
            return dim(format!(
                "G12 has {} outputs, G11 has {}",
                g12.noutputs(),
                g11.noutputs()
            ));
        }
        if g21.ninputs() != g11.ninputs() {
            return dim(format!(
                "G21 has {} inputs, G11 has {}",
                g21.ninputs(),
                g11.ninputs()
            ));
        }
        g11.require_schur("G11")?;
        g12.require_schur("G12")?;
        g21.require_schur("G21")?;
        Ok(GeneralizedPlant { g11, g12, g21 })
    }

    pub fn period(&self) -> f64 {
        self.g11.period().unwrap_or(1.0)
    }
    /// Number of filter outputs (columns of G12).
    pub fn filter_outputs(&self) -> usize {
        self.g12.ninputs()
    }
    /// Number of filter inputs (rows of G21).
    pub fn filter_inputs(&self) -> usize {
        self.g21.noutputs()
    }
}

/// Realization of `G11 + G12 K G21`.
pub fn affine_closed_loop(plant: &GeneralizedPlant, k: &FirFilter) -> Result<StateSpaceModel> {
    if k.outputs() != plant.filter_outputs() || k.inputs() != plant.filter_inputs() {
        return dim(format!(
            "filter is {}x{}, plant expects {}x{}",
            k.outputs(),
            k.inputs(),
            plant.filter_outputs(),
            plant.filter_inputs()
        ));
    }
    let ks = k.to_state_space()?.with_domain(plant.g11.domain())?;
    add(&plant.g11, &product_chain(&[&plant.g12, &ks, &plant.g21])?)
}

/// Inner minimax solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSolver {
    /// L-BFGS on a log-sum-exp smoothing of the grid maximum with a
    /// decreasing smoothing parameter.
    SmoothedLbfgs,
    /// Subgradient descent with Polyak steps.
    PolyakSubgradient,
}

/// Options for [`fir_hinf_synthesis`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    /// Stop when the certified norm exceeds the grid value by less than this fraction.
    pub gap_rel: f64,
    /// Maximum number of grid-exchange rounds.
    pub max_outer: usize,
    /// Number of points in the initial uniform grid on `[0, pi]`.
    pub initial_grid: usize,
    /// Relative tolerance handed to [`hinf_norm`].
    pub hinf_tol: f64,
    pub inner: InnerSolver,
    /// Iteration cap per smoothing stage (or total, for the subgradient method).
    pub inner_max_iter: usize,
    /// Warm start; when absent the least-squares fit on the grid is used.
    pub initial: Option<FirFilter>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            gap_rel: 1e-3,
            max_outer: 500,
            initial_grid: 128,
            hinf_tol: 1e-5,
            inner: InnerSolver::SmoothedLbfgs,
            inner_max_iter: 300,
            initial: None,
        }
    }
}

/// Summary of a synthesis run.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignReport {
    /// Largest grid gain of the returned filter.
    pub gamma_achieved: f64,
    /// H-infinity norm of the returned closed loop (certified by a BRL solution).
    pub gamma_certified: f64,
    /// Level at which the bounded-real certificate holds.
    pub gamma_upper: f64,
    /// Grid-exchange rounds performed.
    pub iterations: usize,
    /// Total inner-solver iterations.
    pub inner_iterations: usize,
    /// Final grid size.
    pub grid_points: usize,
    pub converged: bool,
    /// Relative gap `(certified - grid) / grid` after each round.
    pub gap_history: Vec<f64>,
    /// Frequency (rad/sample) where the closed-loop gain peaks.
    pub peak_omega: f64,
}

struct GridPoint {
    omega: f64,
    g11: DMatrix<Complex64>,
    g12: DMatrix<Complex64>,
    g21: DMatrix<Complex64>,
    phases: Vec<Complex64>,
}

struct Problem {
    points: Vec<GridPoint>,
    order: usize,
    ko: usize,
    ki: usize,
}

struct PointEval {
    sigmas: Vec<f64>,
    u: DMatrix<Complex64>,
    v_t: DMatrix<Complex64>,
}

impl Problem {
    fn nparams(&self) -> usize {
        (self.order + 1) * self.ko * self.ki
    }

    fn point(plant: &GeneralizedPlant, omega: f64, order: usize) -> Result<GridPoint> {
        Ok(GridPoint {
            omega,
            g11: plant.g11.eval_freq(omega)?,
            g12: plant.g12.eval_freq(omega)?,
            g21: plant.g21.eval_freq(omega)?,
            phases: (0..=order)
                .map(|j| Complex64::from_polar(1.0, -omega * j as f64))
                .collect(),
        })
    }

    fn filter_response(&self, pt: &GridPoint, alpha: &[f64]) -> DMatrix<Complex64> {
        let per = self.ko * self.ki;
        let mut k = DMatrix::<Complex64>::zeros(self.ko, self.ki);
        for (j, z) in pt.phases.iter().enumerate() {
            for r in 0..self.ko {
                for c in 0..self.ki {
                    k[(r, c)] += z * alpha[j * per + r * self.ki + c];
                }
            }
        }
        k
    }

    fn closed_loop(&self, pt: &GridPoint, alpha: &[f64]) -> DMatrix<Complex64> {
        let k = self.filter_response(pt, alpha);
        &pt.g11 + &pt.g12 * (k * &pt.g21)
    }

    fn grid_max(&self, alpha: &[f64]) -> f64 {
        self.points
            .par_iter()
            .map(|pt| sigma_max(&self.closed_loop(pt, alpha)))
            .collect::<Vec<f64>>()
            .into_iter()
            .fold(0.0, f64::max)
    }

    fn eval_point(&self, pt: &GridPoint, alpha: &[f64]) -> PointEval {
        let t = self.closed_loop(pt, alpha);
        let (p, m) = t.shape();
        if p == 1 {
            let s = t.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            let v_t = if s > 0.0 {
                t.map(|v| v / s)
            } else {
                DMatrix::zeros(1, m)
            };
            return PointEval {
                sigmas: vec![s],
                u: DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
                v_t,
            };
        }
        if m == 1 {
            let s = t.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            let u = if s > 0.0 {
                t.map(|v| v / s)
            } else {
                DMatrix::zeros(p, 1)
            };
            return PointEval {
                sigmas: vec![s],
                u,
                v_t: DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
            };
        }
        let svd = t.svd(true, true);
        PointEval {
            sigmas: svd.singular_values.iter().cloned().collect(),
            u: svd.u.unwrap(),
            v_t: svd.v_t.unwrap(),
        }
    }

    /// Smoothed maximum `mu log sum exp(sigma / mu)` and its gradient.
    fn smoothed(&self, alpha: &[f64], mu: f64) -> (f64, Vec<f64>) {
        let evals: Vec<PointEval> = self
            .points
            .par_iter()
            .map(|pt| self.eval_point(pt, alpha))
            .collect();
        let smax = evals
            .iter()
            .flat_map(|e| e.sigmas.iter())
            .cloned()
            .fold(0.0, f64::max);
        let z: f64 = evals
            .iter()
            .flat_map(|e| e.sigmas.iter())
            .map(|s| ((s - smax) / mu).exp())
            .sum();
        let f = smax + mu * z.ln();
        let grads: Vec<Vec<f64>> = self
            .points
            .par_iter()
            .zip(evals.par_iter())
            .map(|(pt, e)| {
                let mut g = vec![0.0; self.nparams()];
                for (s_idx, s) in e.sigmas.iter().enumerate() {
                    let w = ((s - smax) / mu).exp() / z;
                    if w < 1e-16 {
                        continue;
                    }
                    self.accumulate_sigma_gradient(pt, e, s_idx, w, &mut g);
                }
                g
            })
            .collect();
        let mut grad = vec![0.0; self.nparams()];
        for g in grads {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        (f, grad)
    }

    /// Adds `w * d sigma_s / d alpha` for singular triplet `s` at a point.
    fn accumulate_sigma_gradient(
        &self,
        pt: &GridPoint,
        e: &PointEval,
        s: usize,
        w: f64,
        g: &mut [f64],
    ) {
        let u = e.u.column(s);
        let v = e.v_t.row(s).adjoint();
        // a = G12^H u, b = G21 v; d sigma = Re(conj(a_r) z_j b_c)
        let a = pt.g12.adjoint() * u;
        let b = &pt.g21 * v;
        let per = self.ko * self.ki;
        for (j, z) in pt.phases.iter().enumerate() {
            for r in 0..self.ko {
                let ar = a[r].conj() * z;
                for c in 0..self.ki {
                    g[j * per + r * self.ki + c] += w * (ar * b[c]).re;
                }
            }
        }
    }

    /// Top singular value gradient at the worst grid point.
    fn subgradient(&self, alpha: &[f64]) -> (f64, Vec<f64>) {
        let evals: Vec<PointEval> = self
            .points
            .par_iter()
            .map(|pt| self.eval_point(pt, alpha))
            .collect();
        let mut best = 0;
        for (i, e) in evals.iter().enumerate() {
            if e.sigmas[0] > evals[best].sigmas[0] {
                best = i;
            }
        }
        let mut g = vec![0.0; self.nparams()];
        self.accumulate_sigma_gradient(&self.points[best], &evals[best], 0, 1.0, &mut g);
        (evals[best].sigmas[0], g)
    }

    /// Least-squares fit `min sum_i ||T_i||_F^2` over the grid.
    fn least_squares(&self) -> Vec<f64> {
        let d = self.nparams();
        let per = self.ko * self.ki;
        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut rhs = DVector::<f64>::zeros(d);
        for pt in &self.points {
            let p12 = pt.g12.adjoint() * &pt.g12;
            let p21 = &pt.g21 * pt.g21.adjoint();
            let t0 = pt.g12.adjoint() * &pt.g11 * pt.g21.adjoint();
            for j in 0..=self.order {
                for r in 0..self.ko {
                    for c in 0..self.ki {
                        let k = j * per + r * self.ki + c;
                        rhs[k] -= (pt.phases[j].conj() * t0[(r, c)]).re;
                        for j2 in 0..=self.order {
                            let ph = pt.phases[j].conj() * pt.phases[j2];
                            for r2 in 0..self.ko {
                                for c2 in 0..self.ki {
                                    let l = j2 * per + r2 * self.ki + c2;
                                    gram[(k, l)] += (ph * p12[(r, r2)] * p21[(c2, c)]).re;
                                }
                            }
                        }
                    }
                }
            }
        }
        let gram = (&gram + gram.transpose()) * 0.5;
        let scale = gram.diagonal().iter().cloned().fold(0.0, f64::max);
        if scale == 0.0 {
            return vec![0.0; d];
        }
        let svd = gram.svd(true, true);
        match svd.solve(&rhs, 1e-12 * scale) {
            Ok(x) => x.iter().cloned().collect(),
            Err(_) => vec![0.0; d],
        }
    }
}

/// Outcome of one inner solve.
struct InnerResult {
    alpha: Vec<f64>,
    iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with Armijo backtracking.
fn lbfgs<F: Fn(&[f64]) -> (f64, Vec<f64>)>(
    f: F,
    x0: &[f64],
    max_iter: usize,
) -> (Vec<f64>, f64, usize) {
    const MEM: usize = 12;
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iters = 0;
    let mut stall = 0;
    while iters < max_iter {
        let gn = dot(&g, &g).sqrt();
        if gn <= 1e-14 * (1.0 + fx.abs()) {
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let k = s_hist.len();
        let mut alphas = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alphas[i] = rho * dot(&s_hist[i], &q);
            for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
                *qj -= alphas[i] * yj;
            }
        }
        let h0 = if k > 0 {
            dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1])
        } else {
            (1e-2 * (1.0 + fx.abs()) / gn) / gn
        };
        for v in q.iter_mut() {
            *v *= h0;
        }
        for i in 0..k {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &q);
            for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
                *qj += (alphas[i] - beta) * sj;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            dir = g
                .iter()
                .map(|v| -v * 1e-2 * (1.0 + fx.abs()) / (gn * gn))
                .collect();
            slope = dot(&g, &dir);
            s_hist.clear();
            y_hist.clear();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let (fnew, gnew) = f(&xn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            t *= 0.5;
        }
        iters += 1;
        let Some((xn, fnew, gnew)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&y, &y).max(1e-300) && sy > 0.0 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > MEM {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let decrease = fx - fnew;
        x = xn;
        g = gnew;
        fx = fnew;
        if decrease <= 1e-12 * fx.abs().max(1e-300) {
            stall += 1;
            if stall >= 4 {
                break;
            }
        } else {
            stall = 0;
        }
    }
    (x, fx, iters)
}

fn inner_solve(
    prob: &Problem,
    alpha0: &[f64],
    opts: &SynthesisOptions,
    mu_start: f64,
) -> InnerResult {
    let mut alpha = alpha0.to_vec();
    let mut best = (prob.grid_max(&alpha), alpha.clone());
    let mut iterations = 0;
    match opts.inner {
        InnerSolver::SmoothedLbfgs => {
            let f0 = best.0;
            if f0 == 0.0 {
                return InnerResult { alpha, iterations };
            }
            let count: usize = prob.points.len()
                * prob.points[0]
                    .g11
                    .nrows()
                    .min(prob.points[0].g11.ncols())
                    .max(1);
            let mu_min = 1e-7 * f0 / (count as f64).ln().max(1.0);
            let mut mu = mu_start * f0;
            loop {
                let (x, _, it) = lbfgs(|a| prob.smoothed(a, mu), &alpha, opts.inner_max_iter);
                iterations += it;
                alpha = x;
                let gm = prob.grid_max(&alpha);
                if gm < best.0 {
                    best = (gm, alpha.clone());
                }
                if mu <= mu_min {
                    break;
                }
                mu = (mu * 0.2).max(mu_min);
            }
        }
        InnerSolver::PolyakSubgradient => {
            for _ in 0..opts.inner_max_iter * 10 {
                let (fval, g) = prob.subgradient(&alpha);
                iterations += 1;
                if fval < best.0 {
                    best = (fval, alpha.clone());
                }
                let gn2 = dot(&g, &g);
                if gn2 == 0.0 {
                    break;
                }
                let target = 0.999 * best.0;
                let step = (fval - target) / gn2;
                for (a, gi) in alpha.iter_mut().zip(&g) {
                    *a -= step * gi;
                }
            }
            let gm = prob.grid_max(&alpha);
            if gm < best.0 {
                best = (gm, alpha.clone());
            }
        }
    }
    InnerResult {
        alpha: best.1,
        iterations,
    }
}

/// Minimizes `||G11 + G12 K G21||_inf` over FIR filters `K` of the given order.
pub fn fir_hinf_synthesis(
    plant: &GeneralizedPlant,
    order: usize,
    opts: &SynthesisOptions,
) -> Result<(FirFilter, DesignReport)> {
    if !(opts.gap_rel > 0.0)
        || !(opts.hinf_tol > 0.0)
        || opts.initial_grid < 2
        || opts.max_outer == 0
    {
        return invalid("synthesis options out of range");
    }
    let (ko, ki, h) = (
        plant.filter_outputs(),
        plant.filter_inputs(),
        plant.period(),
    );
    let mut prob = Problem {
        points: linear_grid(opts.initial_grid)
            .into_iter()
            .map(|w| Problem::point(plant, w, order))
            .collect::<Result<Vec<_>>>()?,
        order,
        ko,
        ki,
    };
    let mut alpha = match &opts.initial {
        Some(k) => {
            if k.outputs() != ko || k.inputs() != ki || k.order() > order {
                return dim("initial filter does not fit the plant or order");
            }
            k.padded(order)?.params()
        }
        None => prob.least_squares(),
    };
    let certify = |alpha: &[f64]| -> Result<(FirFilter, crate::analysis::HinfNorm)> {
        let k = FirFilter::from_params(alpha, order, ko, ki, h)?;
        let cl = affine_closed_loop(plant, &k)?;
        let hn = hinf_norm(&cl, opts.hinf_tol)?;
        Ok((k, hn))
    };
    let (k0, hn0) = certify(&alpha)?;
    let mut best = (
        k0,
        hn0.gamma,
        hn0.gamma_upper,
        prob.grid_max(&alpha),
        hn0.peak_omega,
    );
    let mut gap_history = Vec::new();
    let mut inner_iterations = 0;
    let mut converged = false;
    let mut iterations = 0;
    let mut mu_start = 0.1;
    for _ in 0..opts.max_outer {
        iterations += 1;
        let res = inner_solve(&prob, &alpha, opts, mu_start);
        inner_iterations += res.iterations;
        alpha = res.alpha;
        mu_start = 1e-3;
        let grid_val = prob.grid_max(&alpha);
        let (k, hn) = certify(&alpha)?;
        let cert = hn.gamma;
        let gap = if grid_val > 0.0 {
            (cert - grid_val) / grid_val
        } else {
            0.0
        };
        gap_history.push(gap);
        if cert < best.1 {
            best = (k, cert, hn.gamma_upper, grid_val, hn.peak_omega);
        }
        let tiny = cert <= 1e-13 * (1.0 + best.3);
        if cert <= grid_val * (1.0 + opts.gap_rel) || tiny {
            converged = true;
            break;
        }
        let mut added = 0;
        for pk in &hn.peaks {
            if pk.gain <= grid_val * (1.0 + 0.5 * opts.gap_rel) {
                continue;
            }
            if prob
                .points
                .iter()
                .any(|p| (p.omega - pk.omega).abs() <= 1e-12)
            {
                continue;
            }
            prob.points.push(Problem::point(plant, pk.omega, order)?);
            added += 1;
        }
        if added == 0 {
            break;
        }
    }
    let (k, gamma_certified, gamma_upper, _, peak_omega) = best;
    let gamma_achieved = prob.grid_max(&k.params());
    let converged = converged && gamma_certified <= gamma_achieved * (1.0 + opts.gap_rel) + 1e-13;
    Ok((
        k,
        DesignReport {
            gamma_achieved,
            gamma_certified,
            gamma_upper,
            iterations,
            inner_iterations,
            grid_points: prob.points.len(),
            converged,
            gap_history,
            peak_omega,
        },
    ))
}

/// Bounded-real block matrix whose `C` and `D` depend affinely on parameters:
/// `C(a) = C0 + sum a_i C_i`, `D(a) = D0 + sum a_i D_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrlLmi {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c0: DMatrix<f64>,
    pub d0: DMatrix<f64>,
    pub c_slots: Vec<DMatrix<f64>>,
    pub d_slots: Vec<DMatrix<f64>>,
    pub gamma: f64,
}

impl BrlLmi {
    pub fn nparams(&self) -> usize {
        self.c_slots.len()
    }

    /// The system `(A, B, C(a), D(a))`.
    pub fn system(&self, alpha: &[f64], period: f64) -> Result<StateSpaceModel> {
        if alpha.len() != self.nparams() {
            return dim("parameter count mismatch");
        }
        let mut c = self.c0.clone();
        let mut d = self.d0.clone();
        for (i, a) in alpha.iter().enumerate() {
            c += &self.c_slots[i] * *a;
            d += &self.d_slots[i] * *a;
        }
        StateSpaceModel::new(
            self.a.clone(),
            self.b.clone(),
            c,
            d,
            Domain::discrete(period)?,
        )
    }

    /// `[[A'PA - P, A'PB, C(a)'], [B'PA, -gI + B'PB, D(a)'], [C(a), D(a), -gI]]`.
    pub fn matrix(&self, p: &DMatrix<f64>, alpha: &[f64]) -> Result<DMatrix<f64>> {
        if p.shape() != self.a.shape() {
            return dim("P must match the state dimension");
        }
        Ok(brl_block_matrix(&self.system(alpha, 1.0)?, p, self.gamma))
    }
}

/// Bounded-real block matrix of a fixed system (no free parameters).
pub fn brl_lmi_assemble(sys: &StateSpaceModel, gamma: f64) -> Result<BrlLmi> {
    if !(gamma > 0.0) {
        return invalid("gamma must be positive");
    }
    Ok(BrlLmi {
        a: sys.a().clone(),
        b: sys.b().clone(),
        c0: sys.c().clone(),
        d0: sys.d().clone(),
        c_slots: Vec::new(),
        d_slots: Vec::new(),
        gamma,
    })
}

/// Bounded-real block matrix of `G11 + E K G21` for a plant whose `G12 = E` is
/// static; the FIR taps of `K` (ordered as [`FirFilter::params`]) enter only
/// `C` and `D`.
pub fn brl_lmi_assemble_affine(
    plant: &GeneralizedPlant,
    order: usize,
    gamma: f64,
) -> Result<BrlLmi> {
    if !(gamma > 0.0) {
        return invalid("gamma must be positive");
    }
    if plant.g12.nstates() != 0 {
        return invalid("affine BRL template requires a static G12");
    }
    let (g11, g21) = (&plant.g11, &plant.g21);
    let e = plant.g12.d();
    let (ko, ki) = (plant.filter_outputs(), plant.filter_inputs());
    let (n11, n21, nk) = (g11.nstates(), g21.nstates(), order * ki);
    let n = n11 + n21 + nk;
    let m = g11.ninputs();
    let p = g11.noutputs();
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n11, n11)).copy_from(g11.a());
    a.view_mut((n11, n11), (n21, n21)).copy_from(g21.a());
    // shift register holding y21[k-1..k-order]
    if nk > 0 {
        a.view_mut((n11 + n21, n11), (ki, n21)).copy_from(g21.c());
        for i in ki..nk {
            a[(n11 + n21 + i, n11 + n21 + i - ki)] = 1.0;
        }
    }
    let mut b = DMatrix::zeros(n, m);
    b.view_mut((0, 0), (n11, m)).copy_from(g11.b());
    b.view_mut((n11, 0), (n21, m)).copy_from(g21.b());
    if nk > 0 {
        b.view_mut((n11 + n21, 0), (ki, m)).copy_from(g21.d());
    }
    let mut c0 = DMatrix::zeros(p, n);
    c0.view_mut((0, 0), (p, n11)).copy_from(g11.c());
    let d0 = g11.d().clone();
    let mut c_slots = Vec::new();
    let mut d_slots = Vec::new();
    for j in 0..=order {
        for r in 0..ko {
            for c in 0..ki {
                let mut unit = DMatrix::<f64>::zeros(ko, ki);
                unit[(r, c)] = 1.0;
                let eu = e * &unit;
                let mut cs = DMatrix::zeros(p, n);
                let mut ds = DMatrix::zeros(p, m);
                if j == 0 {
                    cs.view_mut((0, n11), (p, n21)).copy_from(&(&eu * g21.c()));
                    ds.copy_from(&(&eu * g21.d()));
                } else {
                    let col = n11 + n21 + (j - 1) * ki;
                    cs.view_mut((0, col), (p, ki)).copy_from(&eu);
                }
                c_slots.push(cs);
                d_slots.push(ds);
            }
        }
    }
    Ok(BrlLmi {
        a,
        b,
        c0,
        d0,
        c_slots,
        d_slots,
        gamma,
    })
}

/// Result of [`brl_certificate_check`].
#[derive(Debug, Clone, PartialEq)]
pub enum CertificateCheck {
    /// `P > 0` found; `max_eigenvalue` of the block matrix is negative.
    Feasible {
        p: DMatrix<f64>,
        max_eigenvalue: f64,
    },
    Infeasible,
}

/// Decides `||sys||_inf < gamma` through the bounded-real Riccati equation
/// and verifies the block matrix by eigenvalues.
pub fn brl_certificate_check(sys: &StateSpaceModel, gamma: f64) -> CertificateCheck {
    if !(gamma > 0.0) || sys.period().is_none() || !sys.is_schur().unwrap_or(false) {
        return CertificateCheck::Infeasible;
    }
    match brl_certificate(sys, gamma) {
        Some(c) if c.max_eigenvalue <= 1e-8 * gamma => {
            let lam = max_symmetric_eigenvalue(&brl_block_matrix(sys, &c.p, gamma));
            CertificateCheck::Feasible {
                p: c.p,
                max_eigenvalue: lam,
            }
        }
        _ => CertificateCheck::Infeasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::freq_response;
    use crate::sslib::{tf_to_ss, TransferFunction};
    use nalgebra::dmatrix;

    fn dz() -> Domain {
        Domain::Discrete { period: 1.0 }
    }

    fn tf(num: &[f64], den: &[f64]) -> StateSpaceModel {
        tf_to_ss(&TransferFunction::new(num, den, dz()).unwrap()).unwrap()
    }

    fn unit() -> StateSpaceModel {
        StateSpaceModel::identity(1, dz()).unwrap()
    }

    #[test]
    fn fir_realizations_match_eval() {
        let k = FirFilter::new(
            vec![
                dmatrix![1.0, 2.0, 0.5],
                dmatrix![-1.0, 0.0, 3.0],
                dmatrix![0.25, 1.0, -2.0],
            ],
            1.0,
        )
        .unwrap();
        let kt = FirFilter::new(k.taps().iter().map(|t| t.transpose()).collect(), 1.0).unwrap();
        for f in [&k, &kt] {
            let ss = f.to_state_space().unwrap();
            assert!(ss.spectral_radius().unwrap() < 1e-12);
            for i in 0..10 {
                let w = 0.3 * i as f64;
                assert!((ss.eval_freq(w).unwrap() - f.eval(w)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn tap_file_round_trip() {
        let k = FirFilter::new(vec![dmatrix![1.0, -0.5], dmatrix![0.125, 3.0e-7]], 0.25).unwrap();
        let text = k.to_tap_file();
        assert!(text.starts_with("# fir taps=2 outputs=1 inputs=2 period=0.25\n"));
        assert_eq!(FirFilter::from_tap_file(&text).unwrap(), k);
        assert!(FirFilter::from_tap_file("0 1 2\n").is_err());
    }

    #[test]
    fn closed_loop_with_zero_filter_is_g11() {
        let g11 = tf(&[1.0, 0.2], &[1.0, -0.3]);
        let plant = GeneralizedPlant::new(g11.clone(), tf(&[1.0], &[1.0, 0.5]), unit()).unwrap();
        let cl = affine_closed_loop(&plant, &FirFilter::zeros(3, 1, 1, 1.0).unwrap()).unwrap();
        for i in 0..8 {
            let w = 0.4 * i as f64;
            assert!((cl.eval_freq(w).unwrap() - g11.eval_freq(w).unwrap()).norm() < 1e-13);
        }
    }

    #[test]
    fn perfect_matching() {
        let g11 = tf(&[0.5, -0.25, 1.0], &[1.0, 0.0, 0.0]);
        let plant = GeneralizedPlant::new(g11, unit().neg(), unit()).unwrap();
        let (k, rep) = fir_hinf_synthesis(&plant, 2, &SynthesisOptions::default()).unwrap();
        assert!(rep.gamma_certified <= 1e-8, "{rep:?}");
        let taps = k.scalar_taps();
        assert!(
            (taps[0] - 0.5).abs() < 1e-8
                && (taps[1] + 0.25).abs() < 1e-8
                && (taps[2] - 1.0).abs() < 1e-8
        );
    }

    #[test]
    fn delay_by_constant() {
        let plant = GeneralizedPlant::new(tf(&[1.0], &[1.0, 0.0]), unit().neg(), unit()).unwrap();
        let (k, rep) = fir_hinf_synthesis(&plant, 0, &SynthesisOptions::default()).unwrap();
        assert!(k.scalar_taps()[0].abs() < 1e-3);
        assert!((rep.gamma_certified - 1.0).abs() < 1e-3);
        assert!(rep.converged);
    }

    #[test]
    fn polyak_solver_also_works() {
        let plant = GeneralizedPlant::new(tf(&[1.0], &[1.0, -0.5]), unit().neg(), unit()).unwrap();
        let opts = SynthesisOptions {
            inner: InnerSolver::PolyakSubgradient,
            ..Default::default()
        };
        let (_, a) = fir_hinf_synthesis(&plant, 1, &opts).unwrap();
        let (_, b) = fir_hinf_synthesis(&plant, 1, &SynthesisOptions::default()).unwrap();
        assert!(a.gamma_certified <= b.gamma_certified * 1.01);
    }

    #[test]
    fn certificate_examples() {
        let s = StateSpaceModel::static_gain(dmatrix![0.5], dz()).unwrap();
        assert!(matches!(
            brl_certificate_check(&s, 1.0),
            CertificateCheck::Feasible { .. }
        ));
        let g = tf(&[1.0], &[1.0, -0.5]);
        match brl_certificate_check(&g, 3.0) {
            CertificateCheck::Feasible { p, max_eigenvalue } => {
                assert!(p[(0, 0)] > 0.0);
                assert!(max_eigenvalue < 0.0);
            }
            CertificateCheck::Infeasible => panic!("expected feasible"),
        }
        assert_eq!(brl_certificate_check(&g, 1.0), CertificateCheck::Infeasible);
    }

    #[test]
    fn static_lmi_collapses_to_norm_test() {
        let s = StateSpaceModel::static_gain(dmatrix![2.0], dz()).unwrap();
        let empty = DMatrix::zeros(0, 0);
        let ok = brl_lmi_assemble(&s, 2.5)
            .unwrap()
            .matrix(&empty, &[])
            .unwrap();
        let bad = brl_lmi_assemble(&s, 1.5)
            .unwrap()
            .matrix(&empty, &[])
            .unwrap();
        assert!(max_symmetric_eigenvalue(&ok) < 0.0);
        assert!(max_symmetric_eigenvalue(&bad) > 0.0);
    }

    #[test]
    fn affine_template_matches_closed_loop() {
        let plant = GeneralizedPlant::new(
            tf(&[1.0, 0.1], &[1.0, -0.4, 0.1]),
            StateSpaceModel::static_gain(dmatrix![-1.0], dz()).unwrap(),
            tf(&[0.5], &[1.0, 0.3]),
        )
        .unwrap();
        let k = FirFilter::scalar(&[0.3, -0.2, 0.7], 1.0).unwrap();
        let lmi = brl_lmi_assemble_affine(&plant, 2, 1.0).unwrap();
        let sys = lmi.system(&k.params(), 1.0).unwrap();
        let cl = affine_closed_loop(&plant, &k).unwrap();
        let grid = linear_grid(16);
        let a = freq_response(&sys, &grid).unwrap();
        let b = freq_response(&cl, &grid).unwrap();
        for i in 0..grid.len() {
            assert!((&a.values[i] - &b.values[i]).norm() < 1e-12);
        }
    }
}
