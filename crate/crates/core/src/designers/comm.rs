//! Transmitting/receiving filter pair for a sampled channel.
//!
//! A continuous signal `F w` is sampled at `h/M`, filtered by `K_T`,
//! decimated by `M`, sent through the discrete channel `C(z)` with additive
//! noise `W_n n`, expanded by `M`, filtered by `K_R`, held at `h/M` and
//! smoothed by `P`. The error `e = e^{-mhs} F w - P u` and the weighted
//! transmitted signal `z = W_z v` are penalized jointly:
//! `J = sup (|e|^2 + |z|^2) / (|w|^2 + |n|^2)`.
//!
//! Both filters are designed in lifted form: `K~_T` is 1-output/M-input and
//! `K~_R` is M-output/1-input, both at period `h`. Discrete channels are
//! weighted by `sqrt(rate_scale)` (outputs) and its inverse (inputs) so the
//! lifted FSFH channels and the discrete ones share one norm.

use nalgebra::DMatrix;

use crate::analysis::hinf_norm;
use crate::error::{invalid, Result};
use crate::lifting::selection_matrices;
use crate::sslib::{
    augment_delay, hstack, product_chain, vstack, StateSpaceModel, TransferFunction,
};
use crate::synthesis::{
    affine_closed_loop, fir_hinf_synthesis, DesignReport, FirFilter, GeneralizedPlant,
    SynthesisOptions,
};

use super::{default_rate_scale, discrete_model, lifted_continuous};

/// What each alternation step minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlternationObjective {
    /// Step 1 drops `W_z`, step 2 drops `W_n` (the decomposed sub-problems).
    Decomposed,
    /// Both steps minimize the full objective over one filter; a step is
    /// kept only if it does not increase `J`.
    Joint,
}

/// Communication design specification.
#[derive(Debug, Clone, PartialEq)]
pub struct CommSpec {
    /// Source model: stable, strictly proper, continuous.
    pub f: TransferFunction,
    /// Output hold model: stable, proper, continuous.
    pub p: TransferFunction,
    /// Channel `C(z)` at period `h`.
    pub channel: TransferFunction,
    /// Noise weight `W_n(z)`.
    pub w_n: TransferFunction,
    /// Transmitted-signal weight `W_z(z)`.
    pub w_z: TransferFunction,
    /// Compression factor `M`.
    pub factor: usize,
    pub delay: usize,
    pub h: f64,
    pub n: usize,
    /// Order of the lifted transmitting filter.
    pub order_t: usize,
    /// Order of the lifted receiving filter.
    pub order_r: usize,
    pub iterations: usize,
    /// Overrides the default rate scale `N / h`.
    pub rate_scale: Option<f64>,
    pub objective: AlternationObjective,
}

struct Blocks {
    /// `z^{-m} [F]_N`
    fd: StateSpaceModel,
    /// `S [F]_N`, M x N
    sf: StateSpaceModel,
    /// `-[P]_N H`, N x M
    ph: StateSpaceModel,
    c: StateSpaceModel,
    wn: StateSpaceModel,
    wz: StateSpaceModel,
    s_out: f64,
}

impl CommSpec {
    /// Checks the scalar fields.
    pub fn validate(&self) -> Result<()> {
        if self.factor == 0 {
            return invalid("compression factor must be at least 1");
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return invalid("sampling period must be positive");
        }
        if self.n == 0 || !self.n.is_multiple_of(self.factor) {
            return invalid(format!(
                "N = {} is not a multiple of M = {}",
                self.n, self.factor
            ));
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

    /// Initial transmitting filter `K_T = 1`, i.e. `K~_T = [1, 0, ..., 0]`.
    pub fn initial_transmitter(&self) -> Result<FirFilter> {
        let mut tap = DMatrix::zeros(1, self.factor);
        tap[(0, 0)] = 1.0;
        FirFilter::new(vec![tap], self.h)
    }

    fn blocks(&self) -> Result<Blocks> {
        self.validate()?;
        let fl = lifted_continuous(&self.f, "F", true, self.h, self.n)?;
        let pl = lifted_continuous(&self.p, "P", false, self.h, self.n)?;
        let (s, _) = selection_matrices(self.factor, 1, self.n)?;
        let (_, hm) = selection_matrices(1, self.factor, self.n)?;
        let scale = self.rate_scale().sqrt();
        Ok(Blocks {
            fd: augment_delay(&fl, self.delay)?,
            sf: fl.left_mul(&s)?,
            ph: pl.right_mul(&hm)?.neg(),
            c: discrete_model(&self.channel, "C", self.h)?,
            wn: discrete_model(&self.w_n, "W_n", self.h)?.scale(1.0 / scale),
            wz: discrete_model(&self.w_z, "W_z", self.h)?.scale(scale),
            s_out: scale,
        })
    }
}

fn filter_model(
    k: &FirFilter,
    outputs: usize,
    inputs: usize,
    name: &str,
) -> Result<StateSpaceModel> {
    if k.outputs() != outputs || k.inputs() != inputs {
        return crate::error::dim(format!(
            "{name} must be {outputs}x{inputs}, got {}x{}",
            k.outputs(),
            k.inputs()
        ));
    }
    k.to_state_space()
}

fn zero(p: usize, m: usize, like: &StateSpaceModel) -> Result<StateSpaceModel> {
    StateSpaceModel::zero(p, m, like.domain())
}

/// Decomposed plants: `G_R` (free `K~_R`, with `W_z` dropped) and `G_T`
/// (free `K~_T`, with `W_n` dropped).
pub fn build_comm_plants(
    spec: &CommSpec,
    kt: &FirFilter,
    kr: &FirFilter,
) -> Result<(GeneralizedPlant, GeneralizedPlant)> {
    let b = spec.blocks()?;
    let m = spec.factor;
    let n = spec.n;
    let kt_ss = filter_model(kt, 1, m, "K_T")?;
    let kr_ss = filter_model(kr, m, 1, "K_R")?;
    let gr = GeneralizedPlant::new(
        hstack(&[&b.fd, &zero(n, 1, &b.fd)?])?,
        b.ph.clone(),
        hstack(&[&product_chain(&[&b.c, &kt_ss, &b.sf])?, &b.wn])?,
    )?;
    let gt = GeneralizedPlant::new(
        vstack(&[&b.fd, &zero(1, n, &b.fd)?])?,
        vstack(&[&product_chain(&[&b.ph, &kr_ss, &b.c])?, &b.wz])?,
        b.sf.clone(),
    )?;
    Ok((gr, gt))
}

/// Plants whose closed loops are the full error system: the first has
/// `K~_R` free with `K~_T` fixed, the second `K~_T` free with `K~_R` fixed.
pub fn build_joint_plants(
    spec: &CommSpec,
    kt: &FirFilter,
    kr: &FirFilter,
) -> Result<(GeneralizedPlant, GeneralizedPlant)> {
    let b = spec.blocks()?;
    let m = spec.factor;
    let n = spec.n;
    let kt_ss = filter_model(kt, 1, m, "K_T")?;
    let kr_ss = filter_model(kr, m, 1, "K_R")?;
    let zkt = product_chain(&[&b.wz, &kt_ss, &b.sf])?;
    let jr = GeneralizedPlant::new(
        vstack(&[
            &hstack(&[&b.fd, &zero(n, 1, &b.fd)?])?,
            &hstack(&[&zkt, &zero(1, 1, &b.fd)?])?,
        ])?,
        vstack(&[&b.ph, &zero(1, m, &b.fd)?])?,
        hstack(&[&product_chain(&[&b.c, &kt_ss, &b.sf])?, &b.wn])?,
    )?;
    let jt = GeneralizedPlant::new(
        vstack(&[
            &hstack(&[&b.fd, &product_chain(&[&b.ph, &kr_ss, &b.wn])?])?,
            &zero(1, n + 1, &b.fd)?,
        ])?,
        vstack(&[&product_chain(&[&b.ph, &kr_ss, &b.c])?, &b.wz])?,
        hstack(&[&b.sf, &zero(m, 1, &b.fd)?])?,
    )?;
    Ok((jr, jt))
}

/// Norms of a transmitter/receiver pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommNorms {
    /// Full objective `J = ||T||^2`.
    pub j: f64,
    /// `||T_ew||`: source to reconstruction error.
    pub t_ew: f64,
    /// `||T_vw||`: source to transmitted signal.
    pub t_vw: f64,
    /// `||T_en||`: channel noise to reconstruction error.
    pub t_en: f64,
}

/// Evaluates the full objective and the component norms.
pub fn comm_objective(spec: &CommSpec, kt: &FirFilter, kr: &FirFilter) -> Result<CommNorms> {
    let (jr, _) = build_joint_plants(spec, kt, kr)?;
    let t = affine_closed_loop(&jr, kr)?;
    let n = spec.n;
    let all_w: Vec<usize> = (0..n).collect();
    let all_e: Vec<usize> = (0..n).collect();
    let tol = 1e-9;
    let gamma = hinf_norm(&t, tol)?.gamma;
    let t_ew = hinf_norm(&t.select(&all_e, &all_w)?, tol)?.gamma;
    let t_en = hinf_norm(&t.select(&all_e, &[n])?, tol)?.gamma;
    let b = spec.blocks()?;
    let kt_ss = filter_model(kt, 1, spec.factor, "K_T")?;
    let t_vw = hinf_norm(&product_chain(&[&kt_ss, &b.sf])?.scale(b.s_out), tol)?.gamma;
    Ok(CommNorms {
        j: gamma * gamma,
        t_ew,
        t_vw,
        t_en,
    })
}

/// Result of the alternating design.
#[derive(Debug, Clone, PartialEq)]
pub struct CommDesign {
    /// Lifted transmitting filter (1 x M).
    pub kt: FirFilter,
    /// Lifted receiving filter (M x 1).
    pub kr: FirFilter,
    /// `J` after each full round (receiver step then transmitter step).
    pub j_history: Vec<f64>,
    /// `J` after every individual step.
    pub step_history: Vec<f64>,
    /// Synthesis reports in step order.
    pub reports: Vec<DesignReport>,
    pub norms: CommNorms,
}

/// Alternates receiver and transmitter designs starting from `K_T = 1`.
pub fn comm_alternation(spec: &CommSpec, opts: &SynthesisOptions) -> Result<CommDesign> {
    if spec.iterations == 0 {
        return invalid("at least one alternation round is required");
    }
    spec.validate()?;
    let m = spec.factor;
    let mut kt = spec.initial_transmitter()?.padded(spec.order_t)?;
    let mut kr: Option<FirFilter> = None;
    let mut current_j = f64::INFINITY;
    let mut j_history = Vec::new();
    let mut step_history = Vec::new();
    let mut reports = Vec::new();
    let joint = spec.objective == AlternationObjective::Joint;
    for _ in 0..spec.iterations {
        let kr_fixed = match &kr {
            Some(k) => k.clone(),
            None => FirFilter::zeros(spec.order_r, m, 1, spec.h)?,
        };
        let plant = if joint {
            build_joint_plants(spec, &kt, &kr_fixed)?.0
        } else {
            build_comm_plants(spec, &kt, &kr_fixed)?.0
        };
        let step_opts = SynthesisOptions {
            initial: kr.clone(),
            ..opts.clone()
        };
        let (cand, rep) = fir_hinf_synthesis(&plant, spec.order_r, &step_opts)?;
        reports.push(rep);
        let j = comm_objective(spec, &kt, &cand)?.j;
        if !joint || kr.is_none() || j <= current_j {
            kr = Some(cand);
            current_j = j;
        }
        step_history.push(current_j);

        let kr_now = kr.clone().expect("receiver designed");
        let plant = if joint {
            build_joint_plants(spec, &kt, &kr_now)?.1
        } else {
            build_comm_plants(spec, &kt, &kr_now)?.1
        };
        let step_opts = SynthesisOptions {
            initial: Some(kt.clone()),
            ..opts.clone()
        };
        let (cand, rep) = fir_hinf_synthesis(&plant, spec.order_t, &step_opts)?;
        reports.push(rep);
        let j = comm_objective(spec, &cand, &kr_now)?.j;
        if !joint || j <= current_j {
            kt = cand;
            current_j = j;
        }
        step_history.push(current_j);
        j_history.push(current_j);
    }
    let kr = kr.expect("at least one round");
    let norms = comm_objective(spec, &kt, &kr)?;
    Ok(CommDesign {
        kt,
        kr,
        j_history,
        step_history,
        reports,
        norms,
    })
}
