//! Job configuration files.
//!
//! A configuration is a TOML document with an `output_dir` key, exactly one
//! job section (`[interp]`, `[decim]`, `[src]`, `[comm]`, `[dpcm]`,
//! `[fir_approx]`, `[analyze]` or `[simulate]`) and optional `[synthesis]`,
//! `[freqresp]` and `[simulation]` sections. Transfer functions are inline
//! tables of coefficient lists in descending powers, for example
//! `f = { num = [1.0], den_factors = [[7.0, 1.0], [0.7, 1.0]] }`.
//! Relative paths are resolved against the directory of the file.

use std::path::{Path, PathBuf};

use liftsynth::designers::{AlternationObjective, CommSpec, DpcmSpec, MultirateSpec};
use liftsynth::sslib::{poly_mul, Domain, TransferFunction};
use liftsynth::synthesis::{InnerSolver, SynthesisOptions};
use serde::Deserialize;

/// Error raised while reading or validating a configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Transfer function written as coefficients or as products of factors.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfEntry {
    pub num: Option<Vec<f64>>,
    pub den: Option<Vec<f64>>,
    pub num_factors: Option<Vec<Vec<f64>>>,
    pub den_factors: Option<Vec<Vec<f64>>>,
    /// Coefficients are in ascending powers of `z^{-1}` (discrete only).
    #[serde(default)]
    pub z_inverse: bool,
}

fn poly(
    name: &str,
    flat: &Option<Vec<f64>>,
    factors: &Option<Vec<Vec<f64>>>,
    default: Option<Vec<f64>>,
) -> Result<Vec<f64>, ConfigError> {
    match (flat, factors) {
        (Some(_), Some(_)) => err(format!(
            "{name}: give either coefficients or factors, not both"
        )),
        (Some(p), None) => Ok(p.clone()),
        (None, Some(fs)) => Ok(fs.iter().fold(vec![1.0], |acc, f| poly_mul(&acc, f))),
        (None, None) => default.ok_or_else(|| ConfigError(format!("{name}: missing coefficients"))),
    }
}

impl TfEntry {
    fn build(&self, name: &str, domain: Domain) -> Result<TransferFunction, ConfigError> {
        let num = poly(&format!("{name}.num"), &self.num, &self.num_factors, None)?;
        let den = poly(
            &format!("{name}.den"),
            &self.den,
            &self.den_factors,
            Some(vec![1.0]),
        )?;
        let tf = if self.z_inverse {
            let Some(h) = domain.period() else {
                return err(format!(
                    "{name}: z_inverse applies to discrete transfer functions only"
                ));
            };
            TransferFunction::from_z_inverse(&num, &den, h)
        } else {
            TransferFunction::new(&num, &den, domain)
        };
        tf.map_err(|e| ConfigError(format!("{name}: {e}")))
    }

    pub fn continuous(&self, name: &str) -> Result<TransferFunction, ConfigError> {
        self.build(name, Domain::Continuous)
    }

    pub fn discrete(&self, name: &str, h: f64) -> Result<TransferFunction, ConfigError> {
        let d = Domain::discrete(h).map_err(|e| ConfigError(format!("{name}: {e}")))?;
        self.build(name, d)
    }
}

fn unit() -> TfEntry {
    TfEntry {
        num: Some(vec![1.0]),
        den: Some(vec![1.0]),
        num_factors: None,
        den_factors: None,
        z_inverse: false,
    }
}

/// Interpolator or decimator problem.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultirateSection {
    pub f: TfEntry,
    #[serde(default = "unit")]
    pub p: TfEntry,
    pub factor: usize,
    pub delay: usize,
    pub h: f64,
    pub n: usize,
    pub fir_order: usize,
}

impl MultirateSection {
    pub fn spec(&self, name: &str) -> Result<MultirateSpec, ConfigError> {
        let spec = MultirateSpec {
            f: self.f.continuous(&format!("{name}.f"))?,
            p: self.p.continuous(&format!("{name}.p"))?,
            factor: self.factor,
            delay: self.delay,
            h: self.h,
            n: self.n,
            fir_order: self.fir_order,
        };
        spec.validate()
            .map_err(|e| ConfigError(format!("{name}: {e}")))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrcSection {
    pub interpolator: MultirateSection,
    pub decimator: MultirateSection,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Joint,
    Decomposed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommSection {
    pub f: TfEntry,
    #[serde(default = "unit")]
    pub p: TfEntry,
    pub channel: TfEntry,
    pub w_n: TfEntry,
    pub w_z: TfEntry,
    pub factor: usize,
    pub delay: usize,
    pub h: f64,
    pub n: usize,
    pub order_t: usize,
    pub order_r: usize,
    pub iterations: usize,
    pub rate_scale: Option<f64>,
    #[serde(default = "joint")]
    pub objective: Objective,
}

fn joint() -> Objective {
    Objective::Joint
}

impl CommSection {
    pub fn spec(&self) -> Result<CommSpec, ConfigError> {
        let spec = CommSpec {
            f: self.f.continuous("comm.f")?,
            p: self.p.continuous("comm.p")?,
            channel: self.channel.discrete("comm.channel", self.h)?,
            w_n: self.w_n.discrete("comm.w_n", self.h)?,
            w_z: self.w_z.discrete("comm.w_z", self.h)?,
            factor: self.factor,
            delay: self.delay,
            h: self.h,
            n: self.n,
            order_t: self.order_t,
            order_r: self.order_r,
            iterations: self.iterations,
            rate_scale: self.rate_scale,
            objective: match self.objective {
                Objective::Joint => AlternationObjective::Joint,
                Objective::Decomposed => AlternationObjective::Decomposed,
            },
        };
        spec.validate()
            .map_err(|e| ConfigError(format!("comm: {e}")))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpcmSection {
    pub w: TfEntry,
    pub w_d: f64,
    pub w_n: TfEntry,
    pub delay: usize,
    pub h: f64,
    pub n: usize,
    pub order_q: usize,
    pub order_k2: usize,
    pub rate_scale: Option<f64>,
}

impl DpcmSection {
    pub fn spec(&self) -> Result<DpcmSpec, ConfigError> {
        let spec = DpcmSpec {
            w: self.w.continuous("dpcm.w")?,
            w_d: self.w_d,
            w_n: self.w_n.discrete("dpcm.w_n", self.h)?,
            delay: self.delay,
            h: self.h,
            n: self.n,
            order_q: self.order_q,
            order_k2: self.order_k2,
            rate_scale: self.rate_scale,
        };
        spec.validate()
            .map_err(|e| ConfigError(format!("dpcm: {e}")))?;
        Ok(spec)
    }
}

/// Chebyshev type I low-pass used as an approximation target.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChebyshevEntry {
    pub order: usize,
    pub ripple_db: f64,
    /// Passband edge as a fraction of the Nyquist frequency.
    pub edge: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirApproxSection {
    pub target: Option<TfEntry>,
    pub chebyshev: Option<ChebyshevEntry>,
    pub weight: TfEntry,
    #[serde(default = "yes")]
    pub invert_weight: bool,
    pub taps: usize,
    #[serde(default = "one")]
    pub h: f64,
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Hinf,
    H2,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    pub system: TfEntry,
    #[serde(default = "one")]
    pub h: f64,
    #[serde(default = "both_norms")]
    pub norms: Vec<NormKind>,
}

fn both_norms() -> Vec<NormKind> {
    vec![NormKind::Hinf, NormKind::H2]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub system: TfEntry,
    #[serde(default = "one")]
    pub h: f64,
}

/// Overrides of the synthesis defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    pub gap_rel: Option<f64>,
    pub max_outer: Option<usize>,
    pub initial_grid: Option<usize>,
    pub hinf_tol: Option<f64>,
    pub inner_max_iter: Option<usize>,
    /// `lbfgs` or `subgradient`.
    pub inner: Option<String>,
}

impl SynthesisSection {
    pub fn options(&self) -> Result<SynthesisOptions, ConfigError> {
        let mut o = SynthesisOptions::default();
        if let Some(v) = self.gap_rel {
            o.gap_rel = v;
        }
        if let Some(v) = self.max_outer {
            o.max_outer = v;
        }
        if let Some(v) = self.initial_grid {
            o.initial_grid = v;
        }
        if let Some(v) = self.hinf_tol {
            o.hinf_tol = v;
        }
        if let Some(v) = self.inner_max_iter {
            o.inner_max_iter = v;
        }
        if let Some(s) = &self.inner {
            o.inner = match s.as_str() {
                "lbfgs" => InnerSolver::SmoothedLbfgs,
                "subgradient" => InnerSolver::PolyakSubgradient,
                _ => return err(format!("synthesis.inner: unknown solver {s:?}")),
            };
        }
        if !(o.gap_rel > 0.0 && o.hinf_tol > 0.0) {
            return err("synthesis tolerances must be positive");
        }
        if o.max_outer == 0 || o.initial_grid < 2 || o.inner_max_iter == 0 {
            return err(
                "synthesis iteration counts must be positive and the grid needs two points",
            );
        }
        Ok(o)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreqSection {
    #[serde(default = "default_points")]
    pub points: usize,
}

impl Default for FreqSection {
    fn default() -> Self {
        FreqSection {
            points: default_points(),
        }
    }
}

fn default_points() -> usize {
    512
}

/// Test input for the optional simulation.
#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    Square,
    Sine,
    File,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub signal: Waveform,
    /// Number of samples for generated signals.
    #[serde(default = "default_length")]
    pub length: usize,
    /// Period of the generated waveform in samples.
    #[serde(default = "default_wave_period")]
    pub period: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Raw signal file (one sample per line) for `signal = "file"`.
    pub file: Option<PathBuf>,
    /// Quantizer step (DPCM and plain simulations).
    pub delta: Option<f64>,
}

fn default_length() -> usize {
    400
}

fn default_wave_period() -> f64 {
    100.0
}

/// Parsed configuration file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub freqresp: FreqSection,
    pub simulation: Option<SimulationSection>,
    pub interp: Option<MultirateSection>,
    pub decim: Option<MultirateSection>,
    pub src: Option<SrcSection>,
    pub comm: Option<CommSection>,
    pub dpcm: Option<DpcmSection>,
    pub fir_approx: Option<FirApproxSection>,
    pub analyze: Option<AnalyzeSection>,
    pub simulate: Option<SimulateSection>,
}

/// The single job of a configuration.
#[derive(Debug, Clone)]
pub enum Job {
    Interp(MultirateSection),
    Decim(MultirateSection),
    Src(SrcSection),
    Comm(CommSection),
    Dpcm(DpcmSection),
    FirApprox(FirApproxSection),
    Analyze(AnalyzeSection),
    Simulate(SimulateSection),
}

/// Validated configuration with resolved paths.
#[derive(Debug, Clone)]
pub struct JobConfig {
    pub job: Job,
    pub output_dir: PathBuf,
    pub synthesis: SynthesisOptions,
    pub freq_points: usize,
    pub simulation: Option<SimulationSection>,
}

impl JobConfig {
    pub fn parse(text: &str, base: &Path) -> Result<JobConfig, ConfigError> {
        let cfg: ConfigFile =
            toml::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))?;
        let mut jobs = Vec::new();
        if let Some(s) = cfg.interp {
            jobs.push(Job::Interp(s));
        }
        if let Some(s) = cfg.decim {
            jobs.push(Job::Decim(s));
        }
        if let Some(s) = cfg.src {
            jobs.push(Job::Src(s));
        }
        if let Some(s) = cfg.comm {
            jobs.push(Job::Comm(s));
        }
        if let Some(s) = cfg.dpcm {
            jobs.push(Job::Dpcm(s));
        }
        if let Some(s) = cfg.fir_approx {
            jobs.push(Job::FirApprox(s));
        }
        if let Some(s) = cfg.analyze {
            jobs.push(Job::Analyze(s));
        }
        if let Some(s) = cfg.simulate {
            jobs.push(Job::Simulate(s));
        }
        if jobs.len() != 1 {
            return err(format!(
                "config must contain exactly one job section, found {}",
                jobs.len()
            ));
        }
        let job = jobs.pop().unwrap_or_else(|| unreachable!());
        if cfg.freqresp.points < 2 {
            return err("freqresp.points must be at least 2");
        }
        let mut simulation = cfg.simulation;
        if let Some(sim) = simulation.as_mut() {
            if sim.signal == Waveform::File {
                match &sim.file {
                    Some(f) => sim.file = Some(base.join(f)),
                    None => return err("simulation: signal = \"file\" needs a file"),
                }
            } else if sim.length == 0 || !(sim.period > 0.0) {
                return err("simulation: length and period must be positive");
            }
            if matches!(sim.delta, Some(d) if !(d > 0.0 && d.is_finite())) {
                return err("simulation.delta must be positive");
            }
        }
        if matches!(job, Job::Simulate(_)) && simulation.is_none() {
            return err("a simulate job needs a [simulation] section");
        }
        Ok(JobConfig {
            job,
            output_dir: base.join(cfg.output_dir),
            synthesis: cfg.synthesis.options()?,
            freq_points: cfg.freqresp.points,
            simulation,
        })
    }
}
