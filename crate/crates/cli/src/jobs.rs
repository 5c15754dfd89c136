//! Job execution. Every job renders its outputs in memory; nothing touches
//! the output directory until the whole job has succeeded.

use std::fmt::Write as _;
use std::path::Path;

use liftsynth::analysis::{freq_response, h2_norm, hinf_norm, linear_grid, simulate};
use liftsynth::designers::{
    build_decimator_plant, build_interpolator_plant, chebyshev1_lowpass, comm_alternation,
    design_decimator, design_dpcm, design_fir_approx, design_interpolator, design_src,
    rate_convert, FirApproxSpec, MultirateDesign,
};
use liftsynth::lifting::Signal;
use liftsynth::quantization::{dpcm_decode, dpcm_encode, quantize, QuantizerConfig};
use liftsynth::sslib::{tf_to_ss, StateSpaceModel, TransferFunction};
use liftsynth::synthesis::{affine_closed_loop, DesignReport, FirFilter, GeneralizedPlant};

use crate::config::{
    ConfigError, FirApproxSection, Job, JobConfig, NormKind, SimulationSection, Waveform,
};
use crate::signal_io::{read_signal, sim_csv};

/// Failure of a job, mapped to an exit code by the caller.
#[derive(Debug)]
pub enum JobError {
    /// Invalid configuration or problem data.
    Invalid(String),
    /// The solver gave up without a usable result.
    NoConvergence(String),
}

impl JobError {
    pub fn exit_code(&self) -> i32 {
        match self {
            JobError::Invalid(_) => 2,
            JobError::NoConvergence(_) => 3,
        }
    }
}

impl std::fmt::Display for JobError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            JobError::Invalid(m) => write!(f, "error: {m}"),
            JobError::NoConvergence(m) => write!(f, "solver failed: {m}"),
        }
    }
}

impl From<liftsynth::Error> for JobError {
    fn from(e: liftsynth::Error) -> Self {
        match e {
            liftsynth::Error::NoConvergence(_) => JobError::NoConvergence(e.to_string()),
            _ => JobError::Invalid(e.to_string()),
        }
    }
}

impl From<ConfigError> for JobError {
    fn from(e: ConfigError) -> Self {
        JobError::Invalid(e.0)
    }
}

/// Rendered files of a finished job.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, String)>,
    /// False when some synthesis stopped before meeting its tolerance.
    pub converged: bool,
}

impl Outputs {
    fn new() -> Self {
        Outputs {
            files: Vec::new(),
            converged: true,
        }
    }

    fn add(&mut self, name: impl Into<String>, text: String) {
        self.files.push((name.into(), text));
    }
}

/// `key = value` report text.
#[derive(Default)]
struct Report(String);

impl Report {
    fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.0, "{key} = {value}");
    }

    fn section(&mut self, name: &str) {
        if !self.0.is_empty() {
            self.0.push('\n');
        }
        let _ = writeln!(self.0, "[{name}]");
    }

    fn design(&mut self, out: &mut Outputs, name: &str, r: &DesignReport) {
        self.section(name);
        self.kv("gamma_achieved", r.gamma_achieved);
        self.kv("gamma_certified", r.gamma_certified);
        self.kv("gamma_upper", r.gamma_upper);
        self.kv("iterations", r.iterations);
        self.kv("inner_iterations", r.inner_iterations);
        self.kv("grid_points", r.grid_points);
        self.kv("peak_omega", r.peak_omega);
        self.kv("converged", r.converged);
        out.converged &= r.converged;
    }
}

fn list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn freq_csv(sys: &StateSpaceModel, points: usize) -> Result<String, JobError> {
    let h = sys.require_discrete("frequency response")?;
    Ok(freq_response(sys, &linear_grid(points))?.to_csv(h))
}

fn unsupported_simulation(cfg: &JobConfig, job: &str) -> Result<(), JobError> {
    if cfg.simulation.is_some() {
        return Err(JobError::Invalid(format!(
            "{job} jobs do not support [simulation]"
        )));
    }
    Ok(())
}

/// Generated or file-provided test input at period `h`.
pub fn test_signal(sim: &SimulationSection, h: f64) -> Result<Signal, JobError> {
    let values = match sim.signal {
        Waveform::File => {
            let path = sim
                .file
                .as_deref()
                .ok_or_else(|| JobError::Invalid("simulation file missing".into()))?;
            read_signal(path)?
        }
        Waveform::Square => (0..sim.length)
            .map(|k| {
                let phase = (k as f64 / sim.period).fract();
                if phase < 0.5 {
                    sim.amplitude
                } else {
                    -sim.amplitude
                }
            })
            .collect(),
        Waveform::Sine => (0..sim.length)
            .map(|k| sim.amplitude * (2.0 * std::f64::consts::PI * k as f64 / sim.period).sin())
            .collect(),
    };
    if values.is_empty() {
        return Err(JobError::Invalid("simulation input is empty".into()));
    }
    Ok(Signal::scalar(values, h)?)
}

/// Runs the configured job.
pub fn run_job(cfg: &JobConfig) -> Result<Outputs, JobError> {
    match &cfg.job {
        Job::Interp(s) => multirate(cfg, &s.spec("interp")?, true),
        Job::Decim(s) => multirate(cfg, &s.spec("decim")?, false),
        Job::Src(s) => src(cfg, s),
        Job::Comm(s) => comm(cfg, s),
        Job::Dpcm(s) => dpcm(cfg, s),
        Job::FirApprox(s) => fir_approx(cfg, s),
        Job::Analyze(s) => {
            unsupported_simulation(cfg, "analyze")?;
            let sys = tf_to_ss(&s.system.discrete("analyze.system", s.h)?)?;
            let mut out = Outputs::new();
            out.add("report.txt", analyze_report(&sys, &s.norms)?);
            out.add("freqresp_system.csv", freq_csv(&sys, cfg.freq_points)?);
            Ok(out)
        }
        Job::Simulate(s) => {
            let sim = cfg
                .simulation
                .as_ref()
                .ok_or_else(|| JobError::Invalid("missing [simulation]".into()))?;
            let sys = tf_to_ss(&s.system.discrete("simulate.system", s.h)?)?;
            let mut u = test_signal(sim, s.h)?;
            if let Some(delta) = sim.delta {
                u = Signal::scalar(quantize(u.as_flat(), &QuantizerConfig::new(delta)?), s.h)?;
            }
            let y = simulate(&sys, &u, None)?;
            let mut out = Outputs::new();
            out.add(
                "sim_output.csv",
                sim_csv(&["u", "y"], &[u.as_flat(), y.as_flat()]),
            );
            Ok(out)
        }
    }
}

/// Norm lines for `analyze`.
pub fn analyze_report(sys: &StateSpaceModel, norms: &[NormKind]) -> Result<String, JobError> {
    sys.require_schur("analyzed system")?;
    let mut r = Report::default();
    r.section("analysis");
    r.kv("states", sys.nstates());
    for n in norms {
        match n {
            NormKind::Hinf => {
                let hn = hinf_norm(sys, 1e-9)?;
                r.kv("hinf_norm", hn.gamma);
            }
            NormKind::H2 => r.kv("h2_norm", h2_norm(sys)?),
        }
    }
    Ok(r.0)
}

fn error_system(
    plant: &GeneralizedPlant,
    d: &MultirateDesign,
) -> Result<StateSpaceModel, JobError> {
    Ok(affine_closed_loop(plant, &d.lifted)?)
}

fn multirate(
    cfg: &JobConfig,
    spec: &liftsynth::designers::MultirateSpec,
    interp: bool,
) -> Result<Outputs, JobError> {
    let (d, plant, name) = if interp {
        (
            design_interpolator(spec, &cfg.synthesis)?,
            build_interpolator_plant(spec)?,
            "interpolator",
        )
    } else {
        (
            design_decimator(spec, &cfg.synthesis)?,
            build_decimator_plant(spec)?,
            "decimator",
        )
    };
    let mut out = Outputs::new();
    let mut r = Report::default();
    r.section("problem");
    r.kv("kind", name);
    r.kv("factor", spec.factor);
    r.kv("delay", spec.delay);
    r.kv("h", spec.h);
    r.kv("n", spec.n);
    r.kv("fir_order", spec.fir_order);
    r.kv("taps", d.filter.scalar_taps().len());
    r.design(&mut out, "synthesis", &d.report);
    out.add(format!("taps_{name}.txt"), d.filter.to_tap_file());
    out.add(format!("taps_{name}_lifted.txt"), d.lifted.to_tap_file());
    out.add(
        format!("freqresp_{name}.csv"),
        freq_csv(&d.filter.to_state_space()?, cfg.freq_points)?,
    );
    out.add(
        "freqresp_error.csv",
        freq_csv(&error_system(&plant, &d)?, cfg.freq_points)?,
    );
    if let Some(sim) = &cfg.simulation {
        let fast = spec.h / spec.factor as f64;
        let (x, y) = if interp {
            let x = test_signal(sim, spec.h)?;
            let y = rate_convert(&x, &d.filter, spec.factor, 1)?;
            (x, y)
        } else {
            let x = test_signal(sim, fast)?;
            let y = rate_convert(&x, &d.filter, 1, spec.factor)?;
            (x, y)
        };
        out.add("sim_input.csv", sim_csv(&["x"], &[x.as_flat()]));
        out.add("sim_output.csv", sim_csv(&["y"], &[y.as_flat()]));
    }
    out.add("report.txt", r.0);
    Ok(out)
}

fn src(cfg: &JobConfig, s: &crate::config::SrcSection) -> Result<Outputs, JobError> {
    let si = s.interpolator.spec("src.interpolator")?;
    let sd = s.decimator.spec("src.decimator")?;
    let d = design_src(&si, &sd, &cfg.synthesis)?;
    let mut out = Outputs::new();
    let mut r = Report::default();
    r.section("problem");
    r.kv("up", si.factor);
    r.kv("down", sd.factor);
    r.kv("input_period", si.h);
    r.kv("output_period", sd.h);
    r.kv("composite_taps", d.composite.scalar_taps().len());
    r.design(&mut out, "interpolator", &d.interpolator.report);
    r.design(&mut out, "decimator", &d.decimator.report);
    out.add("taps_interpolator.txt", d.interpolator.filter.to_tap_file());
    out.add("taps_decimator.txt", d.decimator.filter.to_tap_file());
    out.add("taps_composite.txt", d.composite.to_tap_file());
    out.add(
        "freqresp_composite.csv",
        freq_csv(&d.composite.to_state_space()?, cfg.freq_points)?,
    );
    if let Some(sim) = &cfg.simulation {
        let x = test_signal(sim, si.h)?;
        let y = rate_convert(&x, &d.composite, si.factor, sd.factor)?;
        out.add("sim_input.csv", sim_csv(&["x"], &[x.as_flat()]));
        out.add("sim_output.csv", sim_csv(&["y"], &[y.as_flat()]));
    }
    out.add("report.txt", r.0);
    Ok(out)
}

fn comm(cfg: &JobConfig, s: &crate::config::CommSection) -> Result<Outputs, JobError> {
    unsupported_simulation(cfg, "comm")?;
    let spec = s.spec()?;
    let d = comm_alternation(&spec, &cfg.synthesis)?;
    let mut out = Outputs::new();
    let mut r = Report::default();
    r.section("problem");
    r.kv("factor", spec.factor);
    r.kv("n", spec.n);
    r.kv("iterations", spec.iterations);
    r.kv("rate_scale", spec.rate_scale());
    r.section("objective");
    r.kv("j_history", list(&d.j_history));
    r.kv("step_history", list(&d.step_history));
    r.kv("j", d.norms.j);
    r.kv("t_ew", d.norms.t_ew);
    r.kv("t_vw", d.norms.t_vw);
    r.kv("t_en", d.norms.t_en);
    for (i, rep) in d.reports.iter().enumerate() {
        let side = if i % 2 == 0 {
            "receiver"
        } else {
            "transmitter"
        };
        r.design(&mut out, &format!("step_{}_{side}", i + 1), rep);
    }
    out.add("taps_transmitter.txt", d.kt.to_tap_file());
    out.add("taps_receiver.txt", d.kr.to_tap_file());
    out.add(
        "freqresp_transmitter.csv",
        freq_csv(&d.kt.to_state_space()?, cfg.freq_points)?,
    );
    out.add(
        "freqresp_receiver.csv",
        freq_csv(&d.kr.to_state_space()?, cfg.freq_points)?,
    );
    out.add("report.txt", r.0);
    Ok(out)
}

fn dpcm(cfg: &JobConfig, s: &crate::config::DpcmSection) -> Result<Outputs, JobError> {
    let spec = s.spec()?;
    if let Some(sim) = &cfg.simulation {
        if sim.delta.is_none() {
            return Err(JobError::Invalid(
                "dpcm simulation needs a quantizer step delta".into(),
            ));
        }
    }
    let d = design_dpcm(&spec, &cfg.synthesis)?;
    let mut out = Outputs::new();
    let mut r = Report::default();
    r.section("problem");
    r.kv("delay", spec.delay);
    r.kv("n", spec.n);
    r.kv("rate_scale", spec.rate_scale());
    r.section("predictor");
    r.kv("num", list(d.k1.num()));
    r.kv("den", list(d.k1.den()));
    r.kv("gamma_zd", d.gamma_zd);
    r.design(&mut out, "encoder", &d.encoder_report);
    r.design(&mut out, "decoder", &d.decoder_report);
    out.add("taps_loop.txt", d.q.to_tap_file());
    out.add("taps_decoder.txt", d.k2.to_tap_file());
    out.add(
        "freqresp_predictor.csv",
        freq_csv(&d.k1_model, cfg.freq_points)?,
    );
    out.add(
        "freqresp_decoder.csv",
        freq_csv(&d.k2.to_state_space()?, cfg.freq_points)?,
    );
    if let Some(sim) = &cfg.simulation {
        let q = QuantizerConfig::new(sim.delta.unwrap_or_else(|| unreachable!()))?;
        let x = test_signal(sim, spec.h)?;
        let enc = dpcm_encode(&x, &d.k1_model, &q)?;
        let noise = Signal::zeros(1, x.len(), spec.h)?;
        let rh = dpcm_decode(&enc.e_hat, &noise, &d.k2.to_state_space()?)?;
        out.add(
            "sim_dpcm.csv",
            sim_csv(
                &["r", "e", "e_hat", "r_hat"],
                &[
                    x.as_flat(),
                    enc.e.as_flat(),
                    enc.e_hat.as_flat(),
                    rh.as_flat(),
                ],
            ),
        );
    }
    out.add("report.txt", r.0);
    Ok(out)
}

fn approx_target(s: &FirApproxSection) -> Result<TransferFunction, JobError> {
    match (&s.target, &s.chebyshev) {
        (Some(t), None) => Ok(t.discrete("fir_approx.target", s.h)?),
        (None, Some(c)) => Ok(chebyshev1_lowpass(c.order, c.ripple_db, c.edge, s.h)?),
        _ => Err(JobError::Invalid(
            "fir_approx needs exactly one of target or chebyshev".into(),
        )),
    }
}

fn fir_approx(cfg: &JobConfig, s: &FirApproxSection) -> Result<Outputs, JobError> {
    let spec = FirApproxSpec {
        target: approx_target(s)?,
        weight: s.weight.discrete("fir_approx.weight", s.h)?,
        invert_weight: s.invert_weight,
        taps: s.taps,
        h: s.h,
    };
    let d = design_fir_approx(&spec, &cfg.synthesis)?;
    let target = tf_to_ss(&spec.target)?;
    let fir = d.filter.to_state_space()?;
    let mut out = Outputs::new();
    let mut r = Report::default();
    r.section("problem");
    r.kv("taps", spec.taps);
    r.kv("invert_weight", spec.invert_weight);
    r.kv("target_num", list(spec.target.num()));
    r.kv("target_den", list(spec.target.den()));
    r.section("error");
    r.kv("hinf", d.error_hinf);
    r.kv("h2", d.error_h2);
    r.design(&mut out, "synthesis", &d.report);
    out.add("taps_fir.txt", d.filter.to_tap_file());
    out.add("freqresp_fir.csv", freq_csv(&fir, cfg.freq_points)?);
    out.add("freqresp_target.csv", freq_csv(&target, cfg.freq_points)?);
    if let Some(sim) = &cfg.simulation {
        let x = test_signal(sim, s.h)?;
        let yt = simulate(&target, &x, None)?;
        let yf = simulate(&fir, &x, None)?;
        out.add(
            "sim_output.csv",
            sim_csv(
                &["x", "target", "fir"],
                &[x.as_flat(), yt.as_flat(), yf.as_flat()],
            ),
        );
    }
    out.add("report.txt", r.0);
    Ok(out)
}

/// Writes all files, each through a temporary name, after creating the
/// directory. Existing files with the same names are replaced.
pub fn write_outputs(dir: &Path, out: &Outputs) -> Result<(), JobError> {
    let io = |e: std::io::Error, what: &Path| {
        JobError::Invalid(format!("cannot write {}: {e}", what.display()))
    };
    std::fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    let mut staged = Vec::new();
    for (name, text) in &out.files {
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = std::fs::write(&tmp, text) {
            for t in &staged {
                let _ = std::fs::remove_file(t);
            }
            let _ = std::fs::remove_file(&tmp);
            return Err(io(e, &tmp));
        }
        staged.push(tmp);
    }
    for ((name, _), tmp) in out.files.iter().zip(&staged) {
        let dest = dir.join(name);
        std::fs::rename(tmp, &dest).map_err(|e| io(e, &dest))?;
    }
    Ok(())
}

/// Parses `"num;den"` with comma- or space-separated coefficients.
pub fn parse_tf_arg(text: &str, h: f64) -> Result<TransferFunction, JobError> {
    let (num, den) = text.split_once(';').ok_or_else(|| {
        JobError::Invalid("transfer function must be written as \"num;den\"".into())
    })?;
    let coeffs = |s: &str| -> Result<Vec<f64>, JobError> {
        s.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| JobError::Invalid(format!("bad coefficient {t:?}")))
            })
            .collect()
    };
    let d = liftsynth::sslib::Domain::discrete(h)?;
    Ok(TransferFunction::new(&coeffs(num)?, &coeffs(den)?, d)?)
}

/// Single-filter tap file for the windowed-sinc baseline.
pub fn baseline_taps(taps: usize, cutoff: f64, gain: f64, h: f64) -> Result<FirFilter, JobError> {
    if !(cutoff > 0.0 && cutoff <= std::f64::consts::PI) {
        return Err(JobError::Invalid("cutoff must lie in (0, pi]".into()));
    }
    let t: Vec<f64> = liftsynth::designers::windowed_sinc(taps, cutoff)?
        .iter()
        .map(|v| gain * v)
        .collect();
    Ok(FirFilter::scalar(&t, h)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tf_argument_parsing() {
        let tf = parse_tf_arg("1; 1, -0.5", 1.0).unwrap();
        assert_eq!(tf.num(), &[1.0]);
        assert_eq!(tf.den(), &[1.0, -0.5]);
        assert!(parse_tf_arg("1 -0.5", 1.0).is_err());
        assert!(parse_tf_arg("1;x", 1.0).is_err());
    }

    #[test]
    fn analyze_first_order_lag() {
        let sys = tf_to_ss(&parse_tf_arg("1;1 -0.5", 1.0).unwrap()).unwrap();
        let text = analyze_report(&sys, &[NormKind::Hinf, NormKind::H2]).unwrap();
        let hinf: f64 = text
            .lines()
            .find_map(|l| l.strip_prefix("hinf_norm = "))
            .unwrap()
            .parse()
            .unwrap();
        assert!((hinf - 2.0).abs() < 1e-8);
        assert!(text.contains("h2_norm = "));
    }

    #[test]
    fn square_wave_alternates() {
        let sim = SimulationSection {
            signal: Waveform::Square,
            length: 8,
            period: 4.0,
            amplitude: 2.0,
            file: None,
            delta: None,
        };
        let s = test_signal(&sim, 1.0).unwrap();
        assert_eq!(s.as_flat(), &[2.0, 2.0, -2.0, -2.0, 2.0, 2.0, -2.0, -2.0]);
    }

    #[test]
    fn library_errors_map_to_exit_codes() {
        assert_eq!(
            JobError::from(liftsynth::Error::NoConvergence("x".into())).exit_code(),
            3
        );
        assert_eq!(
            JobError::from(liftsynth::Error::InvalidArgument("x".into())).exit_code(),
            2
        );
    }
}
