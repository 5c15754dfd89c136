//! State-space and transfer-function primitives.
//!
//! Discrete systems use the convention `x[k+1] = A x[k] + B u[k]`,
//! `y[k] = C x[k] + D u[k]`; continuous systems use `dx/dt = A x + B u`.
//! Polynomials are stored with the highest power first.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{dim, invalid, Error, Result};

/// Time domain of a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Continuous,
    /// Discrete time with sampling period `period > 0`.
    Discrete {
        period: f64,
    },
}

impl Domain {
    pub fn discrete(period: f64) -> Result<Domain> {
        if !(period.is_finite() && period > 0.0) {
            return invalid(format!("sampling period must be positive, got {period}"));
        }
        Ok(Domain::Discrete { period })
    }

    pub fn period(&self) -> Option<f64> {
        match self {
            Domain::Continuous => None,
            Domain::Discrete { period } => Some(*period),
        }
    }

    /// Domains agree when both are continuous or both are discrete with the
    /// same period up to a relative tolerance of 1e-9.
    pub fn compatible(&self, other: &Domain) -> bool {
        match (self, other) {
            (Domain::Continuous, Domain::Continuous) => true,
            (Domain::Discrete { period: a }, Domain::Discrete { period: b }) => {
                (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
            }
            _ => false,
        }
    }
}

/// Periods agree to a relative tolerance of 1e-9.
pub fn same_period(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

fn check_domains(a: &Domain, b: &Domain, what: &str) -> Result<()> {
    if a.compatible(b) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what}: {a:?} vs {b:?}")))
    }
}

/// Linear time-invariant model in state-space form.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    domain: Domain,
}

impl StateSpaceModel {
    /// Builds a model after checking that the four matrices conform and are finite.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        domain: Domain,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return dim(format!("A must be square, got {}x{}", n, a.ncols()));
        }
        if b.nrows() != n {
            return dim(format!("B has {} rows, expected {n}", b.nrows()));
        }
        if c.ncols() != n {
            return dim(format!("C has {} columns, expected {n}", c.ncols()));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return dim(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            ));
        }
        for m in [&a, &b, &c, &d] {
            if m.iter().any(|v| !v.is_finite()) {
                return invalid("state-space matrices must be finite");
            }
        }
        if let Domain::Discrete { period } = domain {
            Domain::discrete(period)?;
        }
        Ok(StateSpaceModel { a, b, c, d, domain })
    }

    /// Memoryless gain `y = D u`.
    pub fn static_gain(d: DMatrix<f64>, domain: Domain) -> Result<Self> {
        let (p, m) = d.shape();
        Self::new(
            DMatrix::zeros(0, 0),
            DMatrix::zeros(0, m),
            DMatrix::zeros(p, 0),
            d,
            domain,
        )
    }

    /// The zero system with `p` outputs and `m` inputs.
    pub fn zero(p: usize, m: usize, domain: Domain) -> Result<Self> {
        Self::static_gain(DMatrix::zeros(p, m), domain)
    }

    /// Identity gain on `n` channels.
    pub fn identity(n: usize, domain: Domain) -> Result<Self> {
        Self::static_gain(DMatrix::identity(n, n), domain)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn domain(&self) -> Domain {
        self.domain
    }
    pub fn period(&self) -> Option<f64> {
        self.domain.period()
    }
    pub fn nstates(&self) -> usize {
        self.a.nrows()
    }
    pub fn ninputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn noutputs(&self) -> usize {
        self.c.nrows()
    }

    /// Period of a discrete model, or an error for continuous ones.
    pub fn require_discrete(&self, what: &str) -> Result<f64> {
        self.period()
            .ok_or_else(|| Error::Domain(format!("{what} must be discrete-time")))
    }

    /// Spectral radius of `A` (zero for static models).
    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.a)
    }

    /// True when every eigenvalue of `A` lies strictly inside the unit disk.
    pub fn is_schur(&self) -> Result<bool> {
        Ok(self.spectral_radius()? < 1.0)
    }

    /// Errors with [`Error::Unstable`] unless the model is discrete and Schur stable.
    pub fn require_schur(&self, context: &str) -> Result<()> {
        self.require_discrete(context)?;
        let r = self.spectral_radius()?;
        if r < 1.0 {
            Ok(())
        } else {
            Err(Error::Unstable {
                context: context.to_string(),
                spectral_radius: r,
            })
        }
    }

    /// Transfer matrix `D + C (sI - A)^{-1} B` at the complex point `s`.
    pub fn eval(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        let n = self.nstates();
        let mut g = self.d.map(|v| Complex64::new(v, 0.0));
        if n == 0 {
            return Ok(g);
        }
        let mut m = self.a.map(|v| Complex64::new(-v, 0.0));
        for i in 0..n {
            m[(i, i)] += s;
        }
        let lu = m.lu();
        let u = lu.u();
        let diag: Vec<f64> = (0..n).map(|i| u[(i, i)].norm()).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(dmin > 1e-13 * dmax.max(1.0)) {
            return Err(Error::Singular(format!("resolvent singular at {s}")));
        }
        let bc = self.b.map(|v| Complex64::new(v, 0.0));
        let x = lu
            .solve(&bc)
            .ok_or_else(|| Error::Singular(format!("resolvent singular at {s}")))?;
        let cc = self.c.map(|v| Complex64::new(v, 0.0));
        g += cc * x;
        if g.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Singular(format!("non-finite response at {s}")));
        }
        Ok(g)
    }

    /// Frequency response at `omega`: `e^{j omega}` for discrete models
    /// (omega normalized to the model's own sampling period), `j omega` otherwise.
    pub fn eval_freq(&self, omega: f64) -> Result<DMatrix<Complex64>> {
        let s = match self.domain {
            Domain::Discrete { .. } => Complex64::from_polar(1.0, omega),
            Domain::Continuous => Complex64::new(0.0, omega),
        };
        self.eval(s)
    }

    /// `-G`.
    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// `k G`.
    pub fn scale(&self, k: f64) -> Self {
        StateSpaceModel {
            a: self.a.clone(),
            b: self.b.clone(),
            c: &self.c * k,
            d: &self.d * k,
            domain: self.domain,
        }
    }

    /// `L G` for a constant matrix `L`.
    pub fn left_mul(&self, l: &DMatrix<f64>) -> Result<Self> {
        if l.ncols() != self.noutputs() {
            return dim(format!(
                "left factor has {} columns, system has {} outputs",
                l.ncols(),
                self.noutputs()
            ));
        }
        Self::new(
            self.a.clone(),
            self.b.clone(),
            l * &self.c,
            l * &self.d,
            self.domain,
        )
    }

    /// `G R` for a constant matrix `R`.
    pub fn right_mul(&self, r: &DMatrix<f64>) -> Result<Self> {
        if r.nrows() != self.ninputs() {
            return dim(format!(
                "right factor has {} rows, system has {} inputs",
                r.nrows(),
                self.ninputs()
            ));
        }
        Self::new(
            self.a.clone(),
            &self.b * r,
            self.c.clone(),
            &self.d * r,
            self.domain,
        )
    }

    /// Same matrices, relabelled with another domain.
    pub fn with_domain(&self, domain: Domain) -> Result<Self> {
        Self::new(
            self.a.clone(),
            self.b.clone(),
            self.c.clone(),
            self.d.clone(),
            domain,
        )
    }

    /// Selects output rows and input columns.
    pub fn select(&self, outputs: &[usize], inputs: &[usize]) -> Result<Self> {
        if outputs.iter().any(|&i| i >= self.noutputs())
            || inputs.iter().any(|&j| j >= self.ninputs())
        {
            return dim("channel index out of range");
        }
        let b = DMatrix::from_fn(self.nstates(), inputs.len(), |i, j| self.b[(i, inputs[j])]);
        let c = DMatrix::from_fn(outputs.len(), self.nstates(), |i, j| {
            self.c[(outputs[i], j)]
        });
        let d = DMatrix::from_fn(outputs.len(), inputs.len(), |i, j| {
            self.d[(outputs[i], inputs[j])]
        });
        Self::new(self.a.clone(), b, c, d, self.domain)
    }
}

/// Rational transfer function in `s` or `z`, coefficients highest power first.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
    domain: Domain,
}

fn trim_leading(p: &[f64]) -> Vec<f64> {
    let first = p.iter().position(|&v| v != 0.0).unwrap_or(p.len());
    if first == p.len() {
        vec![0.0]
    } else {
        p[first..].to_vec()
    }
}

impl TransferFunction {
    /// A proper rational function `num / den`.
    pub fn new(num: &[f64], den: &[f64], domain: Domain) -> Result<Self> {
        let tf = Self::new_improper(num, den, domain)?;
        if !tf.is_proper() {
            return invalid(format!(
                "improper transfer function: numerator degree {} > denominator degree {}",
                tf.num.len() - 1,
                tf.den.len() - 1
            ));
        }
        Ok(tf)
    }

    /// Like [`TransferFunction::new`] but allows numerator degree above the
    /// denominator degree. Such functions can be evaluated but not realized.
    pub fn new_improper(num: &[f64], den: &[f64], domain: Domain) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return invalid("empty polynomial");
        }
        if num.iter().chain(den.iter()).any(|v| !v.is_finite()) {
            return invalid("polynomial coefficients must be finite");
        }
        let den = trim_leading(den);
        if den == [0.0] {
            return invalid("denominator is identically zero");
        }
        if let Domain::Discrete { period } = domain {
            Domain::discrete(period)?;
        }
        Ok(TransferFunction {
            num: trim_leading(num),
            den,
            domain,
        })
    }

    /// Discrete transfer function from coefficients of `z^0, z^{-1}, z^{-2}, ...`
    /// in numerator and denominator.
    pub fn from_z_inverse(num: &[f64], den: &[f64], period: f64) -> Result<Self> {
        let n = num.len().max(den.len());
        let mut nn = num.to_vec();
        nn.resize(n, 0.0);
        let mut dd = den.to_vec();
        dd.resize(n, 0.0);
        Self::new(&nn, &dd, Domain::discrete(period)?)
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }
    pub fn den(&self) -> &[f64] {
        &self.den
    }
    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn is_proper(&self) -> bool {
        self.num == [0.0] || self.num.len() <= self.den.len()
    }

    /// Value at the complex point `s`.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }
}

/// Horner evaluation of a polynomial stored highest power first.
pub fn poly_eval(p: &[f64], x: Complex64) -> Complex64 {
    p.iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Product of two polynomials.
pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Controllable canonical realization of a proper transfer function.
pub fn tf_to_ss(tf: &TransferFunction) -> Result<StateSpaceModel> {
    if !tf.is_proper() {
        return invalid("cannot realize an improper transfer function");
    }
    let a0 = tf.den[0];
    let den: Vec<f64> = tf.den.iter().map(|v| v / a0).collect();
    let n = den.len() - 1;
    let mut num = vec![0.0; n + 1 - tf.num.len().min(n + 1)];
    num.extend(tf.num.iter().map(|v| v / a0));
    let b0 = num[0];
    if n == 0 {
        return StateSpaceModel::static_gain(DMatrix::from_element(1, 1, b0), tf.domain);
    }
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        a[(0, j)] = -den[j + 1];
    }
    for i in 1..n {
        a[(i, i - 1)] = 1.0;
    }
    let mut b = DMatrix::zeros(n, 1);
    b[(0, 0)] = 1.0;
    let c = DMatrix::from_fn(1, n, |_, j| num[j + 1] - b0 * den[j + 1]);
    let d = DMatrix::from_element(1, 1, b0);
    StateSpaceModel::new(a, b, c, d, tf.domain)
}

/// Zero-order-hold discretization with period `h`, computed from the
/// exponential of the augmented matrix `[[A, B], [0, 0]] h`.
pub fn c2d_zoh(sys: &StateSpaceModel, h: f64) -> Result<StateSpaceModel> {
    if sys.domain != Domain::Continuous {
        return Err(Error::Domain(
            "c2d_zoh expects a continuous-time model".into(),
        ));
    }
    let domain = Domain::discrete(h)?;
    let (ad, bd) = zoh_pair(sys.a(), sys.b(), h);
    StateSpaceModel::new(ad, bd, sys.c.clone(), sys.d.clone(), domain)
}

/// `(e^{A t}, \int_0^t e^{A s} ds B)` for a continuous pair.
pub(crate) fn zoh_pair(a: &DMatrix<f64>, b: &DMatrix<f64>, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    if n == 0 {
        return (DMatrix::zeros(0, 0), DMatrix::zeros(0, m));
    }
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * t));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * t));
    let e = aug.exp();
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    )
}

fn block_diag(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows() + y.nrows(), x.ncols() + y.ncols());
    out.view_mut((0, 0), x.shape()).copy_from(x);
    out.view_mut(x.shape(), y.shape()).copy_from(y);
    out
}

/// Block-diagonal matrix built from a list of blocks.
pub fn block_diag_all(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Series connection: the signal passes through `g1` and then `g2`, so the
/// transfer matrix is `G2 G1`.
pub fn series(g1: &StateSpaceModel, g2: &StateSpaceModel) -> Result<StateSpaceModel> {
    check_domains(&g1.domain, &g2.domain, "series")?;
    if g1.noutputs() != g2.ninputs() {
        return dim(format!(
            "series: first system has {} outputs, second has {} inputs",
            g1.noutputs(),
            g2.ninputs()
        ));
    }
    let (n1, n2) = (g1.nstates(), g2.nstates());
    let mut a = block_diag(&g1.a, &g2.a);
    a.view_mut((n1, 0), (n2, n1)).copy_from(&(&g2.b * &g1.c));
    let mut b = DMatrix::zeros(n1 + n2, g1.ninputs());
    b.view_mut((0, 0), (n1, g1.ninputs())).copy_from(&g1.b);
    b.view_mut((n1, 0), (n2, g1.ninputs()))
        .copy_from(&(&g2.b * &g1.d));
    let mut c = DMatrix::zeros(g2.noutputs(), n1 + n2);
    c.view_mut((0, 0), (g2.noutputs(), n1))
        .copy_from(&(&g2.d * &g1.c));
    c.view_mut((0, n1), (g2.noutputs(), n2)).copy_from(&g2.c);
    let d = &g2.d * &g1.d;
    StateSpaceModel::new(a, b, c, d, g1.domain)
}

/// Transfer-matrix product `lhs rhs` (the signal enters `rhs` first).
pub fn product(lhs: &StateSpaceModel, rhs: &StateSpaceModel) -> Result<StateSpaceModel> {
    series(rhs, lhs)
}

/// Chain of products `G_1 G_2 ... G_k`.
pub fn product_chain(factors: &[&StateSpaceModel]) -> Result<StateSpaceModel> {
    let (last, rest) = factors
        .split_last()
        .ok_or_else(|| Error::InvalidArgument("empty product".into()))?;
    let mut acc = (*last).clone();
    for f in rest.iter().rev() {
        acc = product(f, &acc)?;
    }
    Ok(acc)
}

/// Parallel connection `s1 G1 + s2 G2`.
pub fn parallel(
    g1: &StateSpaceModel,
    g2: &StateSpaceModel,
    s1: f64,
    s2: f64,
) -> Result<StateSpaceModel> {
    check_domains(&g1.domain, &g2.domain, "parallel")?;
    if g1.noutputs() != g2.noutputs() || g1.ninputs() != g2.ninputs() {
        return dim(format!(
            "parallel: {}x{} vs {}x{}",
            g1.noutputs(),
            g1.ninputs(),
            g2.noutputs(),
            g2.ninputs()
        ));
    }
    let a = block_diag(&g1.a, &g2.a);
    let mut b = DMatrix::zeros(a.nrows(), g1.ninputs());
    b.view_mut((0, 0), g1.b.shape()).copy_from(&g1.b);
    b.view_mut((g1.nstates(), 0), g2.b.shape()).copy_from(&g2.b);
    let mut c = DMatrix::zeros(g1.noutputs(), a.nrows());
    c.view_mut((0, 0), g1.c.shape()).copy_from(&(&g1.c * s1));
    c.view_mut((0, g1.nstates()), g2.c.shape())
        .copy_from(&(&g2.c * s2));
    let d = &g1.d * s1 + &g2.d * s2;
    StateSpaceModel::new(a, b, c, d, g1.domain)
}

/// `G1 + G2`.
pub fn add(g1: &StateSpaceModel, g2: &StateSpaceModel) -> Result<StateSpaceModel> {
    parallel(g1, g2, 1.0, 1.0)
}

/// Row block `[G_1, G_2, ...]`: shared output, concatenated inputs.
pub fn hstack(blocks: &[&StateSpaceModel]) -> Result<StateSpaceModel> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty hstack".into()))?;
    let p = first.noutputs();
    for g in blocks {
        check_domains(&first.domain, &g.domain, "hstack")?;
        if g.noutputs() != p {
            return dim("hstack: output counts differ");
        }
    }
    let a = block_diag_all(&blocks.iter().map(|g| g.a.clone()).collect::<Vec<_>>());
    let b = block_diag_all(&blocks.iter().map(|g| g.b.clone()).collect::<Vec<_>>());
    let mut c = DMatrix::zeros(p, a.nrows());
    let mut d = DMatrix::zeros(p, b.ncols());
    let (mut off_n, mut off_m) = (0, 0);
    for g in blocks {
        c.view_mut((0, off_n), g.c.shape()).copy_from(&g.c);
        d.view_mut((0, off_m), g.d.shape()).copy_from(&g.d);
        off_n += g.nstates();
        off_m += g.ninputs();
    }
    StateSpaceModel::new(a, b, c, d, first.domain)
}

/// Column block `[G_1; G_2; ...]`: shared input, stacked outputs.
pub fn vstack(blocks: &[&StateSpaceModel]) -> Result<StateSpaceModel> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty vstack".into()))?;
    let m = first.ninputs();
    for g in blocks {
        check_domains(&first.domain, &g.domain, "vstack")?;
        if g.ninputs() != m {
            return dim("vstack: input counts differ");
        }
    }
    let a = block_diag_all(&blocks.iter().map(|g| g.a.clone()).collect::<Vec<_>>());
    let c = block_diag_all(&blocks.iter().map(|g| g.c.clone()).collect::<Vec<_>>());
    let mut b = DMatrix::zeros(a.nrows(), m);
    let mut d = DMatrix::zeros(c.nrows(), m);
    let (mut off_n, mut off_p) = (0, 0);
    for g in blocks {
        b.view_mut((off_n, 0), g.b.shape()).copy_from(&g.b);
        d.view_mut((off_p, 0), g.d.shape()).copy_from(&g.d);
        off_n += g.nstates();
        off_p += g.noutputs();
    }
    StateSpaceModel::new(a, b, c, d, first.domain)
}

/// Block-diagonal connection `diag(G_1, G_2, ...)`.
pub fn append(blocks: &[&StateSpaceModel]) -> Result<StateSpaceModel> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty append".into()))?;
    for g in blocks {
        check_domains(&first.domain, &g.domain, "append")?;
    }
    let diag = |f: fn(&StateSpaceModel) -> &DMatrix<f64>| {
        block_diag_all(&blocks.iter().map(|g| f(g).clone()).collect::<Vec<_>>())
    };
    StateSpaceModel::new(
        diag(|g| &g.a),
        diag(|g| &g.b),
        diag(|g| &g.c),
        diag(|g| &g.d),
        first.domain,
    )
}

/// Pure delay `z^{-m} I_channels` at the given period.
pub fn delay(m: usize, channels: usize, period: f64) -> Result<StateSpaceModel> {
    let domain = Domain::discrete(period)?;
    if m == 0 {
        return StateSpaceModel::identity(channels, domain);
    }
    let n = m * channels;
    let mut a = DMatrix::zeros(n, n);
    for i in channels..n {
        a[(i, i - channels)] = 1.0;
    }
    let mut b = DMatrix::zeros(n, channels);
    let mut c = DMatrix::zeros(channels, n);
    for i in 0..channels {
        b[(i, i)] = 1.0;
        c[(i, n - channels + i)] = 1.0;
    }
    StateSpaceModel::new(a, b, c, DMatrix::zeros(channels, channels), domain)
}

/// `z^{-m} G`, realized on whichever side has fewer channels.
pub fn augment_delay(sys: &StateSpaceModel, m: usize) -> Result<StateSpaceModel> {
    let period = sys.require_discrete("augment_delay")?;
    if m == 0 {
        return Ok(sys.clone());
    }
    if sys.ninputs() <= sys.noutputs() {
        series(&delay(m, sys.ninputs(), period)?, sys)
    } else {
        series(sys, &delay(m, sys.noutputs(), period)?)
    }
}

/// `(I + K)^{-1}` for a square model, without a stability check.
pub fn feedback_inverse_unchecked(k: &StateSpaceModel) -> Result<StateSpaceModel> {
    let p = k.noutputs();
    if k.ninputs() != p {
        return dim("feedback inverse needs a square system");
    }
    let i_d = DMatrix::identity(p, p) + &k.d;
    let e = i_d
        .try_inverse()
        .ok_or_else(|| Error::IllPosed("I + D is singular".into()))?;
    let ec = &e * &k.c;
    let a = &k.a - &k.b * &ec;
    let b = &k.b * &e;
    StateSpaceModel::new(a, b, -ec, e, k.domain)
}

/// `(I + K)^{-1}` for a discrete square model; errors with
/// [`Error::Unstable`] when the result is not Schur stable.
pub fn feedback_inverse_unity(k: &StateSpaceModel) -> Result<StateSpaceModel> {
    k.require_discrete("feedback_inverse_unity")?;
    let s = feedback_inverse_unchecked(k)?;
    s.require_schur("(I + K)^{-1}")?;
    Ok(s)
}

/// Eigenvalues of a real square matrix (real Schur form).
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return dim("eigenvalues of a non-square matrix");
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let max_iter = 1000 * n.max(10);
    if let Some(schur) = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, max_iter) {
        return Ok(schur.complex_eigenvalues().iter().cloned().collect());
    }
    // The QR iteration can stall on exactly structured matrices such as
    // shift registers; an orthogonal similarity breaks the structure.
    for attempt in 1..=4u32 {
        let m = DMatrix::from_fn(n, n, |i, j| {
            ((i * 7 + j * 13 + 1) as f64 * 0.618_033_988_75 * attempt as f64).sin()
        });
        let q = m.qr().q();
        let rotated = q.transpose() * a * &q;
        if let Some(schur) = nalgebra::Schur::try_new(rotated, f64::EPSILON, max_iter) {
            return Ok(schur.complex_eigenvalues().iter().cloned().collect());
        }
    }
    Err(Error::NoConvergence("Schur decomposition".into()))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn dz() -> Domain {
        Domain::Discrete { period: 1.0 }
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn unit_delay_realization() {
        let tf = TransferFunction::new(&[1.0], &[1.0, 0.0], dz()).unwrap();
        let ss = tf_to_ss(&tf).unwrap();
        assert_eq!(ss.a(), &dmatrix![0.0]);
        assert_eq!(ss.b(), &dmatrix![1.0]);
        assert_eq!(ss.c(), &dmatrix![1.0]);
        assert_eq!(ss.d(), &dmatrix![0.0]);
    }

    #[test]
    fn realization_matches_rational_function() {
        let tf = TransferFunction::new(&[2.0, -1.0, 0.5], &[1.0, 0.3, -0.2, 0.1], dz()).unwrap();
        let ss = tf_to_ss(&tf).unwrap();
        for k in 0..20 {
            let z = Complex64::from_polar(1.0, 0.15 * k as f64);
            assert!(close(ss.eval(z).unwrap()[(0, 0)], tf.eval(z), 1e-12));
        }
    }

    #[test]
    fn biproper_realization_has_feedthrough() {
        let tf = TransferFunction::new(&[3.0, 1.0], &[2.0, 0.5], dz()).unwrap();
        let ss = tf_to_ss(&tf).unwrap();
        assert!((ss.d()[(0, 0)] - 1.5).abs() < 1e-15);
        let z = Complex64::new(0.3, 0.9);
        assert!(close(ss.eval(z).unwrap()[(0, 0)], tf.eval(z), 1e-12));
    }

    #[test]
    fn improper_rejected() {
        assert!(TransferFunction::new(&[1.0, 0.0, 0.0], &[1.0, 1.0], dz()).is_err());
        let tf = TransferFunction::new_improper(&[1.0, 0.0, 0.0], &[1.0, 1.0], dz()).unwrap();
        assert!(tf_to_ss(&tf).is_err());
    }

    #[test]
    fn z_inverse_constructor() {
        let tf =
            TransferFunction::from_z_inverse(&[1.0, 0.65, -0.52, -0.2975], &[1.0], 1.0).unwrap();
        let z = Complex64::from_polar(1.0, 0.7);
        let zi = z.inv();
        let expect = 1.0 + 0.65 * zi - 0.52 * zi * zi - 0.2975 * zi * zi * zi;
        assert!(close(tf.eval(z), expect, 1e-14));
    }

    #[test]
    fn zoh_of_first_order_lag() {
        let tf = TransferFunction::new(&[1.0], &[10.0, 1.0], Domain::Continuous).unwrap();
        let ss = tf_to_ss(&tf).unwrap();
        let d = c2d_zoh(&ss, 1.0).unwrap();
        let ad = (-0.1f64).exp();
        assert!((d.a()[(0, 0)] - ad).abs() < 1e-14);
        let gain = d.c()[(0, 0)] * d.b()[(0, 0)];
        assert!((gain - (1.0 - ad)).abs() < 1e-14);
    }

    #[test]
    fn zoh_of_integrator_chain() {
        let a = dmatrix![0.0, 1.0; 0.0, 0.0];
        let b = dmatrix![0.0; 1.0];
        let sys = StateSpaceModel::new(a, b, dmatrix![1.0, 0.0], dmatrix![0.0], Domain::Continuous)
            .unwrap();
        let h = 0.3;
        let d = c2d_zoh(&sys, h).unwrap();
        assert!((d.a()[(0, 1)] - h).abs() < 1e-14);
        assert!((d.b()[(0, 0)] - h * h / 2.0).abs() < 1e-14);
        assert!((d.b()[(1, 0)] - h).abs() < 1e-14);
    }

    #[test]
    fn series_identity_is_neutral() {
        let tf = TransferFunction::new(&[1.0, 0.2], &[1.0, -0.5, 0.06], dz()).unwrap();
        let g = tf_to_ss(&tf).unwrap();
        let id = StateSpaceModel::identity(1, dz()).unwrap();
        let s = series(&id, &g).unwrap();
        assert_eq!(s.a(), g.a());
        assert_eq!(s.b(), g.b());
        assert_eq!(s.c(), g.c());
        assert_eq!(s.d(), g.d());
    }

    #[test]
    fn series_order_matters_for_matrices() {
        let g1 = StateSpaceModel::static_gain(dmatrix![1.0, 2.0; 0.0, 1.0], dz()).unwrap();
        let g2 = StateSpaceModel::static_gain(dmatrix![0.0, 1.0; 1.0, 0.0], dz()).unwrap();
        let s = series(&g1, &g2).unwrap();
        assert_eq!(s.d(), &(g2.d() * g1.d()));
    }

    #[test]
    fn domain_mismatch_rejected() {
        let g1 = StateSpaceModel::identity(1, dz()).unwrap();
        let g2 = StateSpaceModel::identity(1, Domain::Discrete { period: 0.5 }).unwrap();
        let g3 = StateSpaceModel::identity(1, Domain::Continuous).unwrap();
        assert!(matches!(series(&g1, &g2), Err(Error::Domain(_))));
        assert!(matches!(
            parallel(&g1, &g3, 1.0, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn feedback_inverse_of_half_delay() {
        let k = tf_to_ss(&TransferFunction::new(&[0.5], &[1.0, 0.0], dz()).unwrap()).unwrap();
        let s = feedback_inverse_unity(&k).unwrap();
        for i in 0..16 {
            let w = 0.2 * i as f64;
            let expect = 1.0 / (1.0 + 0.5 * Complex64::from_polar(1.0, -w));
            assert!(close(s.eval_freq(w).unwrap()[(0, 0)], expect, 1e-13));
        }
    }

    #[test]
    fn feedback_inverse_reports_instability() {
        let k = tf_to_ss(&TransferFunction::new(&[2.0], &[1.0, 0.0], dz()).unwrap()).unwrap();
        match feedback_inverse_unity(&k) {
            Err(Error::Unstable {
                spectral_radius, ..
            }) => {
                assert!((spectral_radius - 2.0).abs() < 1e-12)
            }
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn delay_augmentation() {
        let g = StateSpaceModel::static_gain(dmatrix![1.0, 2.0, 3.0], dz()).unwrap();
        let d = augment_delay(&g, 3).unwrap();
        assert_eq!(d.nstates(), 3);
        let w = 0.4;
        let r = d.eval_freq(w).unwrap();
        let ph = Complex64::from_polar(1.0, -3.0 * w);
        for j in 0..3 {
            assert!(close(r[(0, j)], ph * (j as f64 + 1.0), 1e-14));
        }
    }

    #[test]
    fn stacking_and_append() {
        let a = tf_to_ss(&TransferFunction::new(&[1.0], &[1.0, -0.5], dz()).unwrap()).unwrap();
        let b = tf_to_ss(&TransferFunction::new(&[1.0, 0.0], &[1.0, 0.25], dz()).unwrap()).unwrap();
        let z = Complex64::from_polar(1.0, 1.1);
        let (ea, eb) = (a.eval(z).unwrap()[(0, 0)], b.eval(z).unwrap()[(0, 0)]);
        let h = hstack(&[&a, &b]).unwrap().eval(z).unwrap();
        let v = vstack(&[&a, &b]).unwrap().eval(z).unwrap();
        let d = append(&[&a, &b]).unwrap().eval(z).unwrap();
        assert!(close(h[(0, 0)], ea, 1e-14) && close(h[(0, 1)], eb, 1e-14));
        assert!(close(v[(0, 0)], ea, 1e-14) && close(v[(1, 0)], eb, 1e-14));
        assert!(close(d[(0, 0)], ea, 1e-14) && close(d[(1, 1)], eb, 1e-14));
        assert!(d[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let a = dmatrix![0.6, -0.8; 0.8, 0.6] * 0.9;
        assert!((spectral_radius(&a).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn singular_resolvent_flagged() {
        let g = tf_to_ss(&TransferFunction::new(&[1.0], &[1.0, -1.0], dz()).unwrap()).unwrap();
        assert!(matches!(g.eval_freq(0.0), Err(Error::Singular(_))));
    }
}
