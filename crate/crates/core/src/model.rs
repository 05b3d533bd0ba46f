//! Scalar system models `x ↦ f(g(x); ε)`.
//!
//! A [`SystemModel`] bundles the node map `f`, the companion map `g`, their
//! derivatives and the way the channel parameter `ε` enters. The catalog
//! covers regular LDPC ensembles on the erasure channel and the iterative
//! interference-cancelation recursion; arbitrary models can be assembled with
//! [`ModelBuilder`] or loaded from sampled tables.

use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ParamMap = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Step used for finite-difference derivatives of user maps.
pub const FD_STEP: f64 = 1e-5;

/// Points sampled when checking monotonicity at construction.
const MONOTONE_SAMPLES: usize = 1001;

/// How the parameter enters the node map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonMode {
    /// `f(u; ε) = ε · f(u)`.
    Multiplicative,
    /// `f(u; ε)` is an arbitrary two-argument map.
    Generic,
}

#[derive(Clone)]
enum NodeMap {
    Multiplicative(ScalarMap),
    Generic(ParamMap),
}

#[derive(Clone)]
enum NodeDerivative {
    Multiplicative(ScalarMap),
    Generic(ParamMap),
}

/// Closed interval the state lives in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub const UNIT: Domain = Domain { lo: 0.0, hi: 1.0 };

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// `n` equally spaced points covering the domain, endpoints included.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        let h = self.width() / (n - 1) as f64;
        (0..n).map(|k| self.lo + k as f64 * h).collect()
    }
}

/// Potential split `U(x; ε) = P(x) − ε·Q(x)` known in closed form.
#[derive(Clone)]
pub struct PotentialSplit {
    pub p: ScalarMap,
    pub q: ScalarMap,
}

/// An immutable `(f, g, ε)` system. Cheap to clone and safe to share.
#[derive(Clone)]
pub struct SystemModel {
    name: String,
    f: NodeMap,
    f_prime: Option<NodeDerivative>,
    g: ScalarMap,
    g_prime: Option<ScalarMap>,
    domain: Domain,
    potential: Option<PotentialSplit>,
    catalog: bool,
    monotone: bool,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("epsilon_mode", &self.epsilon_mode())
            .field("domain", &self.domain)
            .field("catalog", &self.catalog)
            .finish()
    }
}

impl SystemModel {
    /// Starts a model whose node map is `ε · f(u)`.
    pub fn multiplicative(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> ModelBuilder {
        ModelBuilder::new(name.into(), NodeMap::Multiplicative(Arc::new(f)))
    }

    /// Starts a model whose node map is an arbitrary `f(u; ε)`.
    pub fn generic(
        name: impl Into<String>,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> ModelBuilder {
        ModelBuilder::new(name.into(), NodeMap::Generic(Arc::new(f)))
    }

    /// Regular `(l, r)` LDPC ensemble on the binary erasure channel.
    pub fn ldpc_regular(l: u32, r: u32) -> Result<SystemModel> {
        make_ldpc_regular(l, r)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn epsilon_mode(&self) -> EpsilonMode {
        match self.f {
            NodeMap::Multiplicative(_) => EpsilonMode::Multiplicative,
            NodeMap::Generic(_) => EpsilonMode::Generic,
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn is_catalog(&self) -> bool {
        self.catalog
    }

    /// Whether `f` and `g` passed the sampled monotonicity check.
    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn potential_split(&self) -> Option<&PotentialSplit> {
        self.potential.as_ref()
    }

    pub fn g(&self, x: f64) -> f64 {
        (self.g)(x)
    }

    pub fn g_prime(&self, x: f64) -> f64 {
        match &self.g_prime {
            Some(d) => d(x),
            None => finite_difference(&*self.g, x, self.domain),
        }
    }

    /// Node map `f(u; ε)`.
    pub fn node(&self, u: f64, epsilon: f64) -> f64 {
        match &self.f {
            NodeMap::Multiplicative(f) => epsilon * f(u),
            NodeMap::Generic(f) => f(u, epsilon),
        }
    }

    /// Unscaled node map `f(u)` of a multiplicative model.
    pub fn node_unscaled(&self, u: f64) -> Option<f64> {
        match &self.f {
            NodeMap::Multiplicative(f) => Some(f(u)),
            NodeMap::Generic(_) => None,
        }
    }

    /// `∂f(u; ε)/∂u`.
    pub fn node_prime(&self, u: f64, epsilon: f64) -> f64 {
        match (&self.f_prime, &self.f) {
            (Some(NodeDerivative::Multiplicative(d)), _) => epsilon * d(u),
            (Some(NodeDerivative::Generic(d)), _) => d(u, epsilon),
            (None, NodeMap::Multiplicative(f)) => {
                epsilon * finite_difference(&**f, u, self.node_input_domain())
            }
            (None, NodeMap::Generic(f)) => {
                finite_difference(&|v| f(v, epsilon), u, self.node_input_domain())
            }
        }
    }

    /// Derivative of `x ↦ f(g(x); ε)`.
    pub fn composite_prime(&self, x: f64, epsilon: f64) -> f64 {
        self.node_prime(self.g(x), epsilon) * self.g_prime(x)
    }

    /// One application of the update map, clamped to the domain.
    pub fn evaluate(&self, x: f64, epsilon: f64) -> Result<f64> {
        let v = self.node(self.g(x), epsilon);
        if v.is_nan() {
            return Err(Error::NumericDomain { x, epsilon });
        }
        let clamped = self.domain.clamp(v);
        if self.catalog && (0.0..=1.0).contains(&epsilon) {
            debug_assert_eq!(clamped, v, "catalog model left its domain");
        }
        Ok(clamped)
    }

    /// Clamped node map `f(u; ε)`, used by the outside-average coupling.
    pub(crate) fn node_clamped(&self, u: f64, epsilon: f64) -> Result<f64> {
        let v = self.node(u, epsilon);
        if v.is_nan() {
            return Err(Error::NumericDomain { x: u, epsilon });
        }
        Ok(self.domain.clamp(v))
    }

    fn node_input_domain(&self) -> Domain {
        let a = self.g(self.domain.lo);
        let b = self.g(self.domain.hi);
        Domain {
            lo: a.min(b),
            hi: a.max(b),
        }
    }
}

/// Central difference with step [`FD_STEP`]; second-order one-sided
/// differences within one step of a domain endpoint.
pub fn finite_difference(f: &dyn Fn(f64) -> f64, x: f64, domain: Domain) -> f64 {
    let h = FD_STEP;
    if domain.hi.is_finite() && x + h > domain.hi {
        (3.0 * f(x) - 4.0 * f(x - h) + f(x - 2.0 * h)) / (2.0 * h)
    } else if x - h < domain.lo {
        (-3.0 * f(x) + 4.0 * f(x + h) - f(x + 2.0 * h)) / (2.0 * h)
    } else {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }
}

/// Builder for user-defined models.
pub struct ModelBuilder {
    name: String,
    f: NodeMap,
    f_prime: Option<NodeDerivative>,
    g: ScalarMap,
    g_prime: Option<ScalarMap>,
    domain: Domain,
    potential: Option<PotentialSplit>,
    check_monotone: bool,
    catalog: bool,
}

impl ModelBuilder {
    fn new(name: String, f: NodeMap) -> Self {
        ModelBuilder {
            name,
            f,
            f_prime: None,
            g: Arc::new(|x| x),
            g_prime: Some(Arc::new(|_| 1.0)),
            domain: Domain::UNIT,
            potential: None,
            check_monotone: true,
            catalog: false,
        }
    }

    pub fn g(mut self, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.g = Arc::new(g);
        self.g_prime = None;
        self
    }

    pub fn g_prime(mut self, d: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.g_prime = Some(Arc::new(d));
        self
    }

    /// Derivative of the unscaled node map (multiplicative models).
    pub fn f_prime(mut self, d: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.f_prime = Some(NodeDerivative::Multiplicative(Arc::new(d)));
        self
    }

    /// `∂f(u; ε)/∂u` for generic models.
    pub fn f_prime_generic(mut self, d: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.f_prime = Some(NodeDerivative::Generic(Arc::new(d)));
        self
    }

    pub fn domain(mut self, lo: f64, hi: f64) -> Self {
        self.domain = Domain { lo, hi };
        self
    }

    pub fn potential_split(
        mut self,
        p: impl Fn(f64) -> f64 + Send + Sync + 'static,
        q: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.potential = Some(PotentialSplit {
            p: Arc::new(p),
            q: Arc::new(q),
        });
        self
    }

    /// Skip the monotonicity requirement; the result reports it through
    /// [`SystemModel::is_monotone`] instead of failing.
    pub fn allow_non_monotone(mut self) -> Self {
        self.check_monotone = false;
        self
    }

    pub(crate) fn catalog(mut self) -> Self {
        self.catalog = true;
        self
    }

    pub fn build(self) -> Result<SystemModel> {
        let Domain { lo, hi } = self.domain;
        if !(lo < hi) || lo.is_nan() {
            return Err(Error::InvalidModel(format!(
                "domain [{lo}, {hi}] is empty"
            )));
        }
        let mut model = SystemModel {
            name: self.name,
            f: self.f,
            f_prime: self.f_prime,
            g: self.g,
            g_prime: self.g_prime,
            domain: self.domain,
            potential: self.potential,
            catalog: self.catalog,
            monotone: true,
        };

        let monotone = sampled_monotone(&model);
        if let Err(msg) = &monotone {
            if self.check_monotone {
                return Err(Error::InvalidModel(msg.clone()));
            }
        }
        model.monotone = monotone.is_ok();

        if model.epsilon_mode() == EpsilonMode::Multiplicative {
            let origin = model.node_unscaled(model.g(lo)).unwrap_or(0.0);
            if origin.abs() > 1e-12 {
                return Err(Error::InvalidModel(format!(
                    "f(g({lo})) = {origin}, but zero must be a fixed point"
                )));
            }
        }
        Ok(model)
    }
}

fn sampled_monotone(model: &SystemModel) -> std::result::Result<(), String> {
    let domain = model.domain;
    let hi = if domain.hi.is_finite() {
        domain.hi
    } else {
        domain.lo + 1.0
    };
    let span = Domain { lo: domain.lo, hi };
    let xs = span.grid(MONOTONE_SAMPLES);
    let gs: Vec<f64> = xs.iter().map(|&x| model.g(x)).collect();
    check_nondecreasing(&xs, &gs).map_err(|x| format!("g decreases near x = {x}"))?;

    let u_lo = gs.iter().cloned().fold(f64::INFINITY, f64::min);
    let u_hi = gs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if u_hi > u_lo {
        let us = Domain { lo: u_lo, hi: u_hi }.grid(MONOTONE_SAMPLES);
        let fs: Vec<f64> = us.iter().map(|&u| model.node(u, 1.0)).collect();
        check_nondecreasing(&us, &fs).map_err(|u| format!("f decreases near u = {u}"))?;
    }
    Ok(())
}

fn check_nondecreasing(xs: &[f64], ys: &[f64]) -> std::result::Result<(), f64> {
    for (k, w) in ys.windows(2).enumerate() {
        let slack = 1e-12 * w[0].abs().max(1.0);
        if w[1] < w[0] - slack || w[1].is_nan() {
            return Err(xs[k + 1]);
        }
    }
    Ok(())
}

/// Regular `(l, r)` LDPC ensemble over the BEC.
///
/// The check-node map is `g(x) = 1 − (1−x)^(r−1)` and the variable-node map
/// is `f(u) = u^(l−1)`, so `f(g(x)) = [1 − (1−x)^(r−1)]^(l−1)`. For (3,6) this
/// is `[1 − (1−x)^5]^2`.
pub fn make_ldpc_regular(l: u32, r: u32) -> Result<SystemModel> {
    if l < 2 || r < 2 {
        return Err(Error::InvalidModel(format!(
            "degrees must be at least 2, got l = {l}, r = {r}"
        )));
    }
    let (lf, rf) = (l as f64, r as f64);
    let (dv, dc) = (l as i32 - 1, r as i32 - 1);
    SystemModel::multiplicative(format!("ldpc:{l},{r}"), move |u: f64| u.powi(dv))
        .f_prime(move |u: f64| dv as f64 * u.powi(dv - 1))
        .g(move |x: f64| 1.0 - (1.0 - x).powi(dc))
        .g_prime(move |x: f64| dc as f64 * (1.0 - x).powi(dc - 1))
        .potential_split(
            move |x: f64| {
                1.0 / rf - (1.0 - x).powi(r as i32) / rf - x * (1.0 - x).powi(dc)
            },
            move |x: f64| (1.0 - (1.0 - x).powi(dc)).powi(l as i32) / lf,
        )
        .catalog()
        .build()
}

/// Iterative interference-cancelation recursion `x ↦ α·g(x) + σ²`.
///
/// The load `α` plays the role of the channel parameter.
#[derive(Clone)]
pub struct CancelationModel {
    model: SystemModel,
    g: ScalarMap,
    g_prime: Option<ScalarMap>,
    pub sigma2: f64,
    pub alpha: f64,
    /// Upper end of the range scanned for stationary points and used as the
    /// worst-case starting state.
    pub x_max: f64,
}

impl fmt::Debug for CancelationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CancelationModel")
            .field("sigma2", &self.sigma2)
            .field("alpha", &self.alpha)
            .field("x_max", &self.x_max)
            .finish()
    }
}

/// Builds the cancelation recursion. `g` must be positive and bounded; it
/// need not be monotone.
pub fn make_cancelation(
    g: impl Fn(f64) -> f64 + Send + Sync + 'static,
    sigma2: f64,
    alpha: f64,
) -> Result<CancelationModel> {
    CancelationModel::new(Arc::new(g), None, sigma2, alpha)
}

impl CancelationModel {
    pub fn new(g: ScalarMap, g_prime: Option<ScalarMap>, sigma2: f64, alpha: f64) -> Result<Self> {
        if !(sigma2 >= 0.0) {
            return Err(Error::InvalidModel(format!("sigma2 = {sigma2} is negative")));
        }
        if !(alpha >= 0.0) {
            return Err(Error::InvalidModel(format!("alpha = {alpha} is negative")));
        }
        let s2 = sigma2;
        let gm = g.clone();
        let mut builder = SystemModel::generic("cancelation", move |u, a| a * u + s2)
            .f_prime_generic(|_, a| a)
            .g(move |x| gm(x))
            .domain(0.0, f64::INFINITY)
            .allow_non_monotone();
        if let Some(d) = &g_prime {
            let d = d.clone();
            builder = builder.g_prime(move |x| d(x));
        }
        let model = builder.build()?;
        Ok(CancelationModel {
            model,
            g,
            g_prime,
            sigma2,
            alpha,
            x_max: 1.0 + sigma2,
        })
    }

    pub fn with_g_prime(self, d: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let mut out = CancelationModel::new(self.g, Some(Arc::new(d)), self.sigma2, self.alpha)?;
        out.x_max = self.x_max;
        Ok(out)
    }

    pub fn with_x_max(mut self, x_max: f64) -> Self {
        self.x_max = x_max;
        self
    }

    pub fn system(&self) -> &SystemModel {
        &self.model
    }

    pub fn g(&self, x: f64) -> f64 {
        (self.g)(x)
    }

    pub fn g_prime(&self, x: f64) -> f64 {
        match &self.g_prime {
            Some(d) => d(x),
            None => finite_difference(
                &*self.g,
                x,
                Domain {
                    lo: 0.0,
                    hi: f64::INFINITY,
                },
            ),
        }
    }

    /// `α·g(x) + σ²` at the model's own load.
    pub fn map(&self, x: f64) -> f64 {
        self.map_at(x, self.alpha)
    }

    pub fn map_at(&self, x: f64, alpha: f64) -> f64 {
        alpha * self.g(x) + self.sigma2
    }

    /// Limit of the recursion at load `alpha` from `x0`, stopping once the step
    /// drops below `tol` or after `max_iter` steps.
    pub fn iterate(&self, x0: f64, alpha: f64, max_iter: usize, tol: f64) -> (f64, usize) {
        let mut x = x0;
        for k in 0..max_iter {
            let next = self.map_at(x, alpha);
            let step = (next - x).abs();
            x = next;
            if step < tol {
                return (x, k + 1);
            }
        }
        (x, max_iter)
    }

    /// `(x − σ²)/g(x)`: the load at which `x` is a fixed point.
    pub fn load_ratio(&self, x: f64) -> f64 {
        (x - self.sigma2) / self.g(x)
    }

    /// `g(x) − (x − σ²)·g′(x)`; zero exactly at stationary points of the ratio.
    pub fn stationarity(&self, x: f64) -> f64 {
        self.g(x) - (x - self.sigma2) * self.g_prime(x)
    }
}

/// A sampled map on a uniform grid with monotone piecewise-cubic
/// (Fritsch–Carlson) interpolation.
#[derive(Debug, Clone)]
pub struct TableMap {
    pub name: String,
    x0: f64,
    dx: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl TableMap {
    pub fn new(name: impl Into<String>, xs: &[f64], values: &[f64]) -> Result<Self> {
        let name = name.into();
        if xs.len() != values.len() {
            return Err(Error::Shape {
                expected: xs.len(),
                got: values.len(),
            });
        }
        if xs.len() < 2 {
            return Err(Error::Parse {
                what: format!("table `{name}`"),
                reason: "need at least two samples".into(),
            });
        }
        let dx = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        if !(dx > 0.0) {
            return Err(Error::Parse {
                what: format!("table `{name}`"),
                reason: "grid must be increasing".into(),
            });
        }
        for (k, &x) in xs.iter().enumerate() {
            let expect = xs[0] + k as f64 * dx;
            if (x - expect).abs() > 1e-9 * dx.max(expect.abs()).max(1.0) {
                return Err(Error::Parse {
                    what: format!("table `{name}`"),
                    reason: format!("grid is not uniform at row {}", k + 1),
                });
            }
        }
        let slopes = pchip_slopes(values, dx);
        Ok(TableMap {
            name,
            x0: xs[0],
            dx,
            values: values.to_vec(),
            slopes,
        })
    }

    /// Reads `header` then `x value` rows; blank lines and `#` comments after
    /// the header are skipped.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    let t = line.trim();
                    if !t.is_empty() {
                        break t.trim_start_matches('#').trim().to_string();
                    }
                }
                None => {
                    return Err(Error::Parse {
                        what: "table".into(),
                        reason: "empty file".into(),
                    })
                }
            }
        };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let mut cols = t.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Parse {
                    what: format!("table `{header}`"),
                    reason: format!("line {} has fewer than two columns", n + 2),
                })?
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    what: format!("table `{header}`"),
                    reason: format!("line {}: {e}", n + 2),
                })
            };
            xs.push(parse(cols.next())?);
            ys.push(parse(cols.next())?);
        }
        TableMap::new(header, &xs, &ys)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        TableMap::from_reader(std::io::BufReader::new(file))
    }

    pub fn range(&self) -> Domain {
        Domain {
            lo: self.x0,
            hi: self.x0 + self.dx * (self.values.len() - 1) as f64,
        }
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.values.len();
        let x = self.range().clamp(x);
        let s = (x - self.x0) / self.dx;
        let k = (s.floor() as usize).min(n - 2);
        (k, s - k as f64)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (k, t) = self.locate(x);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * self.dx, self.slopes[k + 1] * self.dx);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (k, t) = self.locate(x);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * self.dx, self.slopes[k + 1] * self.dx);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / self.dx
    }
}

fn pchip_slopes(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let delta: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let mut m = vec![0.0; n];
    if n == 2 {
        m[0] = delta[0];
        m[1] = delta[0];
        return m;
    }
    for k in 1..n - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        m[k] = if a * b <= 0.0 {
            0.0
        } else {
            // Harmonic mean keeps the interpolant monotone on a uniform grid.
            2.0 * a * b / (a + b)
        };
    }
    m[0] = end_slope(delta[0], delta[1]);
    m[n - 1] = end_slope(delta[n - 2], delta[n - 3]);
    m
}

fn end_slope(d0: f64, d1: f64) -> f64 {
    let m = (3.0 * d0 - d1) / 2.0;
    if m.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Multiplicative model from two sampled tables, one for `f` and one for `g`.
pub fn load_table_model(f_path: impl AsRef<Path>, g_path: impl AsRef<Path>) -> Result<SystemModel> {
    let f = TableMap::from_path(f_path)?;
    let g = TableMap::from_path(g_path)?;
    table_model(f, g)
}

pub fn table_model(f: TableMap, g: TableMap) -> Result<SystemModel> {
    let domain = g.range();
    let name = format!("table:{}/{}", f.name, g.name);
    let (f1, f2, g1, g2) = (f.clone(), f, g.clone(), g);
    SystemModel::multiplicative(name, move |u| f1.eval(u))
        .f_prime(move |u| f2.derivative(u))
        .g(move |x| g1.eval(x))
        .g_prime(move |x| g2.derivative(x))
        .domain(domain.lo, domain.hi)
        .build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ldpc36() -> SystemModel {
        make_ldpc_regular(3, 6).unwrap()
    }

    #[test]
    fn ldpc_composite_matches_closed_form() {
        let m = ldpc36();
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            let expect = (1.0 - (1.0 - x).powi(5)).powi(2);
            assert!((m.evaluate(x, 1.0).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn ldpc_boundary_values() {
        let m = ldpc36();
        assert_eq!(m.evaluate(0.0, 0.7).unwrap(), 0.0);
        assert_eq!(m.evaluate(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(m.evaluate(1.0, 0.4).unwrap(), 0.4);
    }

    #[test]
    fn ldpc_48_half() {
        // f = [1 − (1−x)^{r−1}]^{l−1}: at x = 0.5, 0.5^7 = 0.0078125, then cubed.
        let base = 1.0 - 0.007_812_5;
        let expect = base * base * base;
        let m = make_ldpc_regular(4, 8).unwrap();
        assert!((m.evaluate(0.5, 1.0).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.976_745_128_631_591_8).abs() < 1e-15);
    }

    #[test]
    fn ldpc_threshold_fixed_point() {
        let m = ldpc36();
        let x0 = 0.26057;
        assert!((x0 / m.evaluate(x0, 1.0).unwrap() - 0.4294398).abs() < 1e-6);
        assert!((m.evaluate(x0, 0.4294398).unwrap() - x0).abs() < 1e-5);
    }

    #[test]
    fn degree_below_two_rejected() {
        assert!(matches!(make_ldpc_regular(1, 6), Err(Error::InvalidModel(_))));
        assert!(matches!(make_ldpc_regular(3, 1), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn analytic_derivatives_match_central_differences() {
        for (l, r) in [(3, 6), (4, 8), (5, 10)] {
            let m = make_ldpc_regular(l, r).unwrap();
            let fu = |u: f64| m.node_unscaled(u).unwrap();
            let g = |x: f64| m.g(x);
            for k in 1..1000 {
                let x = k as f64 / 1000.0;
                let fd_g = (g(x + 1e-5) - g(x - 1e-5)) / 2e-5;
                let fd_f = (fu(x + 1e-5) - fu(x - 1e-5)) / 2e-5;
                assert!((m.g_prime(x) - fd_g).abs() <= 1e-6, "g' at {x}");
                assert!((m.node_prime(x, 1.0) - fd_f).abs() <= 1e-6, "f' at {x}");
            }
        }
    }

    #[test]
    fn finite_difference_fallback_near_endpoints() {
        let m = SystemModel::multiplicative("sq", |u| u * u)
            .g(|x| x.sqrt().powi(3))
            .build()
            .unwrap();
        // g(x) = x^1.5, g'(x) = 1.5 sqrt(x)
        assert!((m.g_prime(1.0) - 1.5).abs() < 1e-8);
        assert!((m.g_prime(0.5) - 1.5 * 0.5f64.sqrt()).abs() < 1e-8);
        assert!((m.node_prime(0.3, 2.0) - 1.2).abs() < 1e-8);
    }

    #[test]
    fn decreasing_map_rejected() {
        let err = SystemModel::multiplicative("bad", |u| u).g(|x| 1.0 - x).build();
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn nonzero_origin_rejected() {
        let err = SystemModel::multiplicative("bad", |u| 0.5 + 0.5 * u).build();
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn nan_reported_with_location() {
        let m = SystemModel::multiplicative("nan", |u| if u > 0.5 { f64::NAN } else { u })
            .allow_non_monotone()
            .build()
            .unwrap();
        match m.evaluate(0.75, 0.3) {
            Err(Error::NumericDomain { x, epsilon }) => {
                assert_eq!(x, 0.75);
                assert_eq!(epsilon, 0.3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn user_model_clamped_to_domain() {
        let m = SystemModel::multiplicative("steep", |u| 2.0 * u).build().unwrap();
        assert_eq!(m.evaluate(0.9, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn cancelation_linear() {
        let c = make_cancelation(|x| x, 0.1, 0.5).unwrap();
        assert!((c.map(0.4) - 0.3).abs() < 1e-15);
        let (x, _) = c.iterate(1.0, 0.5, 10_000, 1e-15);
        assert!((x - 0.2).abs() < 1e-14);
        assert!((c.system().evaluate(0.4, 0.5).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(c.system().epsilon_mode(), EpsilonMode::Generic);
    }

    #[test]
    fn cancelation_fixed_point_matches_root() {
        let c = make_cancelation(|x| 1.0 / (1.0 + x), 0.05, 0.3).unwrap();
        let mut x = 1.0;
        for _ in 0..200 {
            x = c.map(x);
        }
        // Independent root of α g(x) + σ² − x by bisection.
        let root = crate::search::bisect_root(|x| 0.3 / (1.0 + x) + 0.05 - x, 0.0, 1.0);
        assert!((x - root).abs() < 1e-10);
    }

    #[test]
    fn cancelation_rejects_negative_parameters() {
        assert!(make_cancelation(|x| x, -0.1, 0.5).is_err());
        assert!(make_cancelation(|x| x, 0.1, -0.5).is_err());
    }

    #[test]
    fn table_roundtrip_reproduces_samples() {
        let xs: Vec<f64> = (0..=50).map(|k| k as f64 / 50.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let t = TableMap::new("sq", &xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((t.eval(*x) - y).abs() < 1e-14);
        }
        assert!((t.eval(0.33) - 0.1089).abs() < 1e-4);
    }

    #[test]
    fn table_rejects_nonuniform_grid() {
        let err = TableMap::new("x", &[0.0, 0.1, 0.3], &[0.0, 0.1, 0.3]);
        assert!(matches!(err, Err(Error::Parse { .. })));
    }

    #[test]
    fn table_file_model() {
        let dir = tempfile::tempdir().unwrap();
        let fp = dir.path().join("f.txt");
        let gp = dir.path().join("g.txt");
        let mut fs = String::from("# var node u^2\n");
        let mut gs = String::from("check node\n");
        for k in 0..=200 {
            let x = k as f64 / 200.0;
            fs.push_str(&format!("{x} {}\n", x * x));
            gs.push_str(&format!("{x} {}\n", 1.0 - (1.0 - x).powi(5)));
        }
        std::fs::write(&fp, fs).unwrap();
        std::fs::write(&gp, gs).unwrap();
        let m = load_table_model(&fp, &gp).unwrap();
        assert_eq!(m.name(), "table:var node u^2/check node");
        let exact = make_ldpc_regular(3, 6).unwrap();
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            let d = (m.evaluate(x, 0.45).unwrap() - exact.evaluate(x, 0.45).unwrap()).abs();
            assert!(d < 1e-5, "x = {x}: {d}");
        }
    }
}
