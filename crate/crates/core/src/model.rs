//! GLM loss families with canonical link, penalties and their proximal maps,
//! and the per-machine data block ([`Shard`]).
//!
//! The local loss on a shard is `f(θ) = (1/n) Σ [b(xᵢᵀθ) − yᵢ xᵢᵀθ]`, where `b`
//! is the family's cumulant function.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};

/// Exponential family with canonical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlmFamily {
    /// Least squares: `b(x) = x²/2`.
    Gaussian,
    /// Logistic regression: `b(x) = log(1 + eˣ)`.
    Bernoulli,
}

impl GlmFamily {
    /// Cumulant `b(x)`.
    #[inline]
    pub fn b(self, x: f64) -> f64 {
        match self {
            GlmFamily::Gaussian => 0.5 * x * x,
            GlmFamily::Bernoulli => f64::max(x, 0.0) + libm::log1p(libm::exp(-libm::fabs(x))),
        }
    }

    /// Mean function `b′(x)`.
    #[inline]
    pub fn b1(self, x: f64) -> f64 {
        match self {
            GlmFamily::Gaussian => x,
            GlmFamily::Bernoulli => sigmoid(x),
        }
    }

    /// Variance function `b″(x)`.
    #[inline]
    pub fn b2(self, x: f64) -> f64 {
        match self {
            GlmFamily::Gaussian => 1.0,
            GlmFamily::Bernoulli => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    /// Rejects responses outside the family's support.
    pub fn check_labels(self, y: &[f64]) -> Result<()> {
        for (row, v) in y.iter().enumerate() {
            let ok = match self {
                GlmFamily::Gaussian => v.is_finite(),
                GlmFamily::Bernoulli => *v == 0.0 || *v == 1.0,
            };
            if !ok {
                return Err(Error::LabelDomain { row, value: *v });
            }
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyKind {
    None,
    /// `λ‖θ‖₂²` (no factor one half).
    L2(f64),
    /// `λ‖θ‖₁`
    L1(f64),
}

/// Deterministic penalty `g`. By default the intercept is penalized too.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub kind: PenaltyKind,
    pub exempt_intercept: bool,
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty::none()
    }
}

impl Penalty {
    pub fn none() -> Self {
        Penalty {
            kind: PenaltyKind::None,
            exempt_intercept: false,
        }
    }

    pub fn l2(lambda: f64) -> Self {
        Penalty {
            kind: PenaltyKind::L2(lambda),
            exempt_intercept: false,
        }
    }

    pub fn l1(lambda: f64) -> Self {
        Penalty {
            kind: PenaltyKind::L1(lambda),
            exempt_intercept: false,
        }
    }

    pub fn with_exempt_intercept(mut self, exempt: bool) -> Self {
        self.exempt_intercept = exempt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PenaltyKind::L1(l) | PenaltyKind::L2(l) if !(l >= 0.0 && l.is_finite()) => {
                Err(Error::invalid("penalty level must be a finite nonnegative number"))
            }
            _ => Ok(()),
        }
    }

    pub fn lambda(&self) -> f64 {
        match self.kind {
            PenaltyKind::None => 0.0,
            PenaltyKind::L1(l) | PenaltyKind::L2(l) => l,
        }
    }

    /// True unless the penalty is a nonzero ℓ1 term.
    pub fn is_smooth(&self) -> bool {
        !matches!(self.kind, PenaltyKind::L1(l) if l > 0.0)
    }

    #[inline]
    fn first_penalized(&self) -> usize {
        usize::from(self.exempt_intercept)
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let tail = theta.get(self.first_penalized()..).unwrap_or(&[]);
        match self.kind {
            PenaltyKind::None => 0.0,
            PenaltyKind::L2(l) => l * dot(tail, tail),
            PenaltyKind::L1(l) => l * tail.iter().map(|x| libm::fabs(*x)).sum::<f64>(),
        }
    }

    /// Adds the gradient of the smooth (ℓ2) part into `out`; ℓ1 contributes nothing.
    pub fn add_smooth_gradient(&self, theta: &[f64], out: &mut [f64]) {
        if let PenaltyKind::L2(l) = self.kind {
            let start = self.first_penalized();
            for j in start..theta.len() {
                out[j] += 2.0 * l * theta[j];
            }
        }
    }

    /// Diagonal curvature added to a Hessian: `2λ` for ℓ2 on penalized coordinates.
    pub fn curvature(&self, coordinate: usize) -> f64 {
        match self.kind {
            PenaltyKind::L2(l) if coordinate >= self.first_penalized() => 2.0 * l,
            _ => 0.0,
        }
    }

    /// `argmin_u g(u) + ‖u − v‖²/(2·step)`.
    pub fn prox(&self, v: &[f64], step: f64) -> Result<Vec<f64>> {
        if !(step > 0.0) {
            return Err(Error::invalid("proximal step must be positive"));
        }
        let mut out = v.to_vec();
        self.prox_in_place(&mut out, step);
        Ok(out)
    }

    pub(crate) fn prox_in_place(&self, v: &mut [f64], step: f64) {
        let start = self.first_penalized().min(v.len());
        match self.kind {
            PenaltyKind::None => {}
            PenaltyKind::L2(l) => {
                let shrink = 1.0 / (1.0 + 2.0 * l * step);
                v[start..].iter_mut().for_each(|x| *x *= shrink);
            }
            PenaltyKind::L1(l) => {
                let t = l * step;
                v[start..].iter_mut().for_each(|x| *x = soft_threshold(*x, t));
            }
        }
    }
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// One node machine's data: design matrix with a leading column of ones, and
/// the responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    x: Matrix,
    y: Vec<f64>,
}

impl Shard {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::invalid("a shard needs at least one row"));
        }
        if x.cols() == 0 {
            return Err(Error::invalid("a shard needs an intercept column"));
        }
        if y.len() != x.rows() {
            return Err(Error::DimensionMismatch {
                expected: x.rows(),
                found: y.len(),
            });
        }
        if let Some(i) = (0..x.rows()).find(|&i| x[(i, 0)] != 1.0) {
            return Err(Error::invalid(alloc::format!(
                "row {i}: first design column must be exactly 1.0"
            )));
        }
        Ok(Shard { x, y })
    }

    /// Builds a shard from feature rows, prepending the intercept column.
    pub fn from_features(features: &[&[f64]], y: Vec<f64>) -> Result<Self> {
        let p = features.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(features.len() * (p + 1));
        for r in features {
            if r.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: r.len(),
                });
            }
            data.push(1.0);
            data.extend_from_slice(r);
        }
        Shard::new(Matrix::from_vec(features.len(), p + 1, data)?, y)
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Number of rows `n`.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Number of columns, intercept included (`p + 1`).
    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Concatenates shards row-wise in order.
    pub fn concat(shards: &[Shard]) -> Result<Shard> {
        let first = shards.first().ok_or_else(|| Error::invalid("no shards"))?;
        let d = first.dim();
        let n: usize = shards.iter().map(Shard::len).sum();
        let mut data = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for s in shards {
            if s.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: s.dim(),
                });
            }
            data.extend_from_slice(s.x.as_slice());
            y.extend_from_slice(&s.y);
        }
        Ok(Shard {
            x: Matrix::from_vec(n, d, data)?,
            y,
        })
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Shard> {
        let d = self.dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        let mut y = Vec::with_capacity(rows.len());
        for &i in rows {
            if i >= self.len() {
                return Err(Error::invalid("row index out of range"));
            }
            data.extend_from_slice(self.x.row(i));
            y.push(self.y[i]);
        }
        Shard::new(Matrix::from_vec(rows.len(), d, data)?, y)
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        Ok(())
    }

    /// Linear predictor `Xθ`.
    pub(crate) fn predictor(&self, theta: &[f64]) -> Vec<f64> {
        self.x.matvec(theta)
    }

    /// Loss from a precomputed linear predictor.
    pub(crate) fn loss_from_predictor(&self, family: GlmFamily, eta: &[f64]) -> f64 {
        let s: f64 = eta
            .iter()
            .zip(&self.y)
            .map(|(e, y)| family.b(*e) - y * e)
            .sum();
        s / self.len() as f64
    }

    /// Gradient from a precomputed linear predictor, written into `out`.
    pub(crate) fn gradient_from_predictor(&self, family: GlmFamily, eta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let inv_n = 1.0 / self.len() as f64;
        for (i, (e, y)) in eta.iter().zip(&self.y).enumerate() {
            let r = (family.b1(*e) - y) * inv_n;
            if r != 0.0 {
                axpy(r, self.x.row(i), out);
            }
        }
    }

    /// Hessian from a precomputed linear predictor.
    pub(crate) fn hessian_from_predictor(&self, family: GlmFamily, eta: &[f64]) -> Matrix {
        let d = self.dim();
        let mut h = Matrix::zeros(d, d);
        let inv_n = 1.0 / self.len() as f64;
        for (i, e) in eta.iter().enumerate() {
            let w = family.b2(*e) * inv_n;
            if w == 0.0 {
                continue;
            }
            let xi = self.x.row(i);
            for j in 0..d {
                let a = w * xi[j];
                if a != 0.0 {
                    let hj = h.row_mut(j);
                    axpy(a, &xi[j..], &mut hj[j..]);
                }
            }
        }
        h.symmetrize_from_upper();
        h
    }

    /// `f_k(θ) = (1/n) Σ [b(xᵢᵀθ) − yᵢ xᵢᵀθ]`
    pub fn loss(&self, family: GlmFamily, theta: &[f64]) -> Result<f64> {
        self.check_dim(theta)?;
        Ok(self.loss_from_predictor(family, &self.predictor(theta)))
    }

    /// `∇f_k(θ) = (1/n) Σ [b′(xᵢᵀθ) − yᵢ] xᵢ`
    pub fn gradient(&self, family: GlmFamily, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        let mut g = vec![0.0; self.dim()];
        self.gradient_from_predictor(family, &self.predictor(theta), &mut g);
        Ok(g)
    }

    /// `∇²f_k(θ) = (1/n) Σ b″(xᵢᵀθ) xᵢxᵢᵀ`
    pub fn hessian(&self, family: GlmFamily, theta: &[f64]) -> Result<Matrix> {
        self.check_dim(theta)?;
        Ok(self.hessian_from_predictor(family, &self.predictor(theta)))
    }

    /// `∇²f_k(θ) v` without forming the matrix.
    pub fn hessian_vector(&self, family: GlmFamily, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        self.check_dim(v)?;
        let eta = self.predictor(theta);
        let xv = self.x.matvec(v);
        let inv_n = 1.0 / self.len() as f64;
        let weights: Vec<f64> = eta
            .iter()
            .zip(&xv)
            .map(|(e, u)| family.b2(*e) * u * inv_n)
            .collect();
        Ok(self.x.matvec_t(&weights))
    }
}

/// Free-function form of [`Shard::loss`].
pub fn loss(shard: &Shard, family: GlmFamily, theta: &[f64]) -> Result<f64> {
    shard.loss(family, theta)
}

/// Free-function form of [`Shard::gradient`].
pub fn gradient(shard: &Shard, family: GlmFamily, theta: &[f64]) -> Result<Vec<f64>> {
    shard.gradient(family, theta)
}

/// Free-function form of [`Shard::hessian`].
pub fn hessian(shard: &Shard, family: GlmFamily, theta: &[f64]) -> Result<Matrix> {
    shard.hessian(family, theta)
}

/// Proximal map of the penalty with the given step.
pub fn prox_penalty(penalty: &Penalty, v: &[f64], step: f64) -> Result<Vec<f64>> {
    penalty.prox(v, step)
}
