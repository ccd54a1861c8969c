//! Gaussian-process regression with an ARD squared-exponential kernel.
//!
//! Inputs are mapped to the unit cube of the problem box and targets are
//! standardized (zero mean, unit variance) before fitting; predictions are
//! reported in the original units. The model stores the Cholesky factor `L`
//! of `K + noise * I` and the weights `alpha = (K + noise * I)^-1 y`, so
//! prediction at a query costs one kernel row and one triangular solve.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng as _;
use thiserror::Error;

use crate::domain::Bounds;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::seeding;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-2;
/// Largest training residual accepted from a model pinned to zero noise,
/// in original target units.
const INTERPOLATION_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("no training data")]
    Empty,
    #[error("got {inputs} inputs but {targets} targets")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("point {index} has dimension {found}, expected {expected}")]
    Dimension {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("training input {index} is not finite or lies outside the box")]
    InvalidInput { index: usize },
    #[error("training target {index} is not finite ({value})")]
    NonFiniteTarget { index: usize, value: f64 },
    #[error("query has dimension {found}, expected {expected}")]
    QueryDimension { found: usize, expected: usize },
    #[error("query is not finite")]
    NonFiniteQuery,
    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),
    #[error("kernel matrix is numerically singular (jitter escalated to {jitter:e})")]
    Conditioning { jitter: f64 },
}

/// Hyperparameters of the ARD squared-exponential kernel
/// `k(a, b) = signal_variance * exp(-0.5 * sum(((a_i - b_i) / l_i)^2))`.
///
/// Lengthscales are measured in unit-cube coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(
        lengthscales: Vec<f64>,
        signal_variance: f64,
        noise_variance: f64,
    ) -> Result<Self, GpError> {
        let params = Self {
            lengthscales,
            signal_variance,
            noise_variance,
        };
        params.validate()?;
        Ok(params)
    }

    /// Unit lengthscales and signal variance, zero noise.
    pub fn unit(dim: usize) -> Self {
        Self {
            lengthscales: vec![1.0; dim],
            signal_variance: 1.0,
            noise_variance: 0.0,
        }
    }

    fn validate(&self) -> Result<(), GpError> {
        if self.lengthscales.is_empty() {
            return Err(GpError::InvalidParams("no lengthscales".into()));
        }
        if let Some(l) = self
            .lengthscales
            .iter()
            .find(|l| !(l.is_finite() && **l > 0.0))
        {
            return Err(GpError::InvalidParams(format!("lengthscale {l} must be > 0")));
        }
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            return Err(GpError::InvalidParams(format!(
                "signal variance {} must be > 0",
                self.signal_variance
            )));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(GpError::InvalidParams(format!(
                "noise variance {} must be >= 0",
                self.noise_variance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Fixed(f64),
    Fitted { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpConfig {
    pub lengthscale_bounds: (f64, f64),
    pub signal_variance_bounds: (f64, f64),
    pub noise: NoiseModel,
    /// Number of multi-starts for the likelihood search (at least one).
    pub restarts: usize,
    /// Likelihood evaluations per start; `None` scales with the parameter count.
    pub max_evals: Option<usize>,
    pub seed: u64,
    pub standardize: bool,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            lengthscale_bounds: (1e-3, 1e3),
            signal_variance_bounds: (1e-2, 1e2),
            noise: NoiseModel::Fitted {
                lower: 1e-10,
                upper: 1e-1,
            },
            restarts: 5,
            max_evals: None,
            seed: 0,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
}

/// A fitted, immutable GP posterior.
#[derive(Debug, Clone)]
pub struct GpModel {
    bounds: Bounds,
    /// Row-major `n x d` inputs in unit-cube coordinates.
    inputs: Vec<f64>,
    raw_targets: Vec<f64>,
    targets: DVector<f64>,
    kernel: KernelParams,
    inv_lengthscales: Vec<f64>,
    jitter: f64,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    target_mean: f64,
    target_std: f64,
}

struct Factorization {
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

struct Standardized {
    inputs: Vec<f64>,
    targets: DVector<f64>,
    mean: f64,
    std: f64,
}

impl GpModel {
    /// Fits kernel hyperparameters by multi-start maximization of the log
    /// marginal likelihood and returns the best posterior.
    pub fn fit(
        inputs: &[Vec<f64>],
        targets: &[f64],
        bounds: &Bounds,
        config: &GpConfig,
    ) -> Result<Self, GpError> {
        let data = prepare(inputs, targets, bounds, config.standardize)?;
        let d = bounds.dim();
        let n = targets.len();

        let ln = |(lo, hi): (f64, f64)| (lo.ln(), hi.ln());
        let (ls_lo, ls_hi) = ln(config.lengthscale_bounds);
        let (sf_lo, sf_hi) = ln(config.signal_variance_bounds);
        let mut lower = vec![ls_lo; d];
        let mut upper = vec![ls_hi; d];
        lower.push(sf_lo);
        upper.push(sf_hi);
        let fixed_noise = match config.noise {
            NoiseModel::Fixed(v) => Some(v),
            NoiseModel::Fitted { lower: lo, upper: hi } => {
                lower.push(lo.ln());
                upper.push(hi.ln());
                None
            }
        };
        let unpack = |theta: &[f64]| KernelParams {
            lengthscales: theta[..d].iter().map(|v| v.exp()).collect(),
            signal_variance: theta[d].exp(),
            noise_variance: fixed_noise.unwrap_or_else(|| theta[d + 1].exp()),
        };
        let objective = |theta: &[f64]| {
            let params = unpack(theta);
            match factorize(&data.inputs, n, &data.targets, &params, data.std) {
                Ok(f) => -log_likelihood(&data.targets, &f),
                Err(_) => f64::INFINITY,
            }
        };

        let p = lower.len();
        let opts = NelderMeadOptions {
            initial_step: 0.7,
            max_evals: config.max_evals.unwrap_or(60 * (p + 1)),
            f_tol: 1e-9,
            x_tol: 1e-5,
        };
        let mut rng = seeding::stream(config.seed, "gp-fit", &[]);
        let mut best: Option<(Vec<f64>, f64)> = None;
        for restart in 0..config.restarts.max(1) {
            let mut start: Vec<f64> = Vec::with_capacity(p);
            for i in 0..d {
                let (lo, hi) = (lower[i].max(0.05f64.ln()), upper[i].min(5f64.ln()));
                start.push(if restart == 0 || lo >= hi {
                    0.5f64.ln().clamp(lower[i], upper[i])
                } else {
                    rng.gen_range(lo..hi)
                });
            }
            for i in d..p {
                start.push(if restart == 0 {
                    if i == d {
                        0.0f64.clamp(lower[i], upper[i])
                    } else {
                        0.5 * (lower[i] + upper[i])
                    }
                } else {
                    rng.gen_range(lower[i]..=upper[i])
                });
            }
            let m = nelder_mead(objective, &start, &lower, &upper, &opts);
            if m.value.is_finite() && best.as_ref().is_none_or(|b| m.value < b.1) {
                best = Some((m.x, m.value));
            }
        }

        let Some((theta, _)) = best else {
            return Err(GpError::Conditioning { jitter: JITTER_MAX });
        };
        Self::assemble(bounds.clone(), data, targets.to_vec(), unpack(&theta))
    }

    /// Builds the posterior for fixed hyperparameters.
    pub fn with_params(
        inputs: &[Vec<f64>],
        targets: &[f64],
        bounds: &Bounds,
        params: KernelParams,
        standardize: bool,
    ) -> Result<Self, GpError> {
        params.validate()?;
        if params.lengthscales.len() != bounds.dim() {
            return Err(GpError::InvalidParams(format!(
                "{} lengthscales for a {}-dimensional box",
                params.lengthscales.len(),
                bounds.dim()
            )));
        }
        let data = prepare(inputs, targets, bounds, standardize)?;
        Self::assemble(bounds.clone(), data, targets.to_vec(), params)
    }

    fn assemble(
        bounds: Bounds,
        data: Standardized,
        raw_targets: Vec<f64>,
        kernel: KernelParams,
    ) -> Result<Self, GpError> {
        let n = raw_targets.len();
        let f = factorize(&data.inputs, n, &data.targets, &kernel, data.std)?;
        Ok(Self {
            bounds,
            inv_lengthscales: kernel.lengthscales.iter().map(|l| 1.0 / l).collect(),
            inputs: data.inputs,
            raw_targets,
            targets: data.targets,
            kernel,
            jitter: f.jitter,
            chol: f.chol,
            alpha: f.alpha,
            target_mean: data.mean,
            target_std: data.std,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, GpError> {
        let k = self.cross_covariance(x)?;
        let mean = k.dot(&self.alpha);
        let v = self
            .chol
            .solve_lower_triangular(&k)
            .expect("cholesky factor has a positive diagonal");
        let var = (self.kernel.signal_variance - v.norm_squared()).max(0.0);
        Ok(Prediction {
            mean: self.target_mean + self.target_std * mean,
            std: self.target_std * var.sqrt(),
        })
    }

    /// Posterior mean only; skips the triangular solve.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64, GpError> {
        let k = self.cross_covariance(x)?;
        Ok(self.target_mean + self.target_std * k.dot(&self.alpha))
    }

    /// `-1/2 y^T alpha - sum(log L_ii) - n/2 log(2 pi)` on the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let f = Factorization {
            chol: self.chol.clone(),
            alpha: self.alpha.clone(),
            jitter: self.jitter,
        };
        log_likelihood(&self.targets, &f)
    }

    fn cross_covariance(&self, x: &[f64]) -> Result<DVector<f64>, GpError> {
        let d = self.bounds.dim();
        if x.len() != d {
            return Err(GpError::QueryDimension {
                found: x.len(),
                expected: d,
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFiniteQuery);
        }
        let z = self.bounds.normalize(x);
        let n = self.len();
        Ok(DVector::from_iterator(
            n,
            (0..n).map(|i| {
                kernel_value(
                    &z,
                    &self.inputs[i * d..(i + 1) * d],
                    &self.inv_lengthscales,
                    self.kernel.signal_variance,
                )
            }),
        ))
    }

    pub fn len(&self) -> usize {
        self.raw_targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    /// Jitter added to the diagonal on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Diagonal term actually factorized: noise variance plus jitter.
    pub fn effective_noise(&self) -> f64 {
        self.kernel.noise_variance + self.jitter
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn target_std(&self) -> f64 {
        self.target_std
    }

    /// Training inputs in original units.
    pub fn train_inputs(&self) -> Vec<Vec<f64>> {
        self.inputs
            .chunks(self.dim())
            .map(|z| self.bounds.denormalize(z))
            .collect()
    }

    /// Training targets in original units.
    pub fn train_targets(&self) -> &[f64] {
        &self.raw_targets
    }

    /// Targets after standardization.
    pub fn standardized_targets(&self) -> &[f64] {
        self.targets.as_slice()
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Kernel covariance between two points given in original units.
    pub fn covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        kernel_value(
            &self.bounds.normalize(a),
            &self.bounds.normalize(b),
            &self.inv_lengthscales,
            self.kernel.signal_variance,
        )
    }
}

fn prepare(
    inputs: &[Vec<f64>],
    targets: &[f64],
    bounds: &Bounds,
    standardize: bool,
) -> Result<Standardized, GpError> {
    if inputs.is_empty() {
        return Err(GpError::Empty);
    }
    if inputs.len() != targets.len() {
        return Err(GpError::LengthMismatch {
            inputs: inputs.len(),
            targets: targets.len(),
        });
    }
    let d = bounds.dim();
    let mut flat = Vec::with_capacity(inputs.len() * d);
    for (index, x) in inputs.iter().enumerate() {
        if x.len() != d {
            return Err(GpError::Dimension {
                index,
                found: x.len(),
                expected: d,
            });
        }
        if !x.iter().all(|v| v.is_finite()) || !bounds.contains(x) {
            return Err(GpError::InvalidInput { index });
        }
        flat.extend(bounds.normalize(x));
    }
    if let Some((index, &value)) = targets.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(GpError::NonFiniteTarget { index, value });
    }

    let n = targets.len() as f64;
    let (mean, std) = if standardize {
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        (mean, if std > 1e-12 * (1.0 + mean.abs()) { std } else { 1.0 })
    } else {
        (0.0, 1.0)
    };
    Ok(Standardized {
        inputs: flat,
        targets: DVector::from_iterator(targets.len(), targets.iter().map(|y| (y - mean) / std)),
        mean,
        std,
    })
}

#[inline]
fn kernel_value(a: &[f64], b: &[f64], inv_ls: &[f64], signal_variance: f64) -> f64 {
    let mut r2 = 0.0;
    for i in 0..a.len() {
        let t = (a[i] - b[i]) * inv_ls[i];
        r2 += t * t;
    }
    signal_variance * (-0.5 * r2).exp()
}

/// Cholesky of `K + (noise + jitter) I`, escalating jitter from 1e-8 by x10
/// up to 1e-2. A model pinned to zero noise must also reproduce its
/// training targets, otherwise the matrix is reported as singular.
fn factorize(
    inputs: &[f64],
    n: usize,
    targets: &DVector<f64>,
    params: &KernelParams,
    target_std: f64,
) -> Result<Factorization, GpError> {
    let d = params.lengthscales.len();
    let inv_ls: Vec<f64> = params.lengthscales.iter().map(|l| 1.0 / l).collect();
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let a = &inputs[i * d..(i + 1) * d];
        gram[(i, i)] = params.signal_variance;
        for j in 0..i {
            let v = kernel_value(a, &inputs[j * d..(j + 1) * d], &inv_ls, params.signal_variance);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }

    let mut jitter = 0.0;
    loop {
        let mut m = gram.clone();
        for i in 0..n {
            m[(i, i)] += params.noise_variance + jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            let alpha = chol.solve(targets);
            let l = chol.unpack();
            let accepted = params.noise_variance > 0.0 || {
                let residual = (&gram * &alpha - targets).amax();
                residual * target_std <= INTERPOLATION_TOL
            };
            if accepted && alpha.iter().all(|v| v.is_finite()) {
                return Ok(Factorization {
                    chol: l,
                    alpha,
                    jitter,
                });
            }
        }
        jitter = if jitter == 0.0 {
            JITTER_START
        } else {
            jitter * 10.0
        };
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return Err(GpError::Conditioning { jitter: JITTER_MAX });
        }
    }
}

fn log_likelihood(targets: &DVector<f64>, f: &Factorization) -> f64 {
    let n = targets.len() as f64;
    let log_det_half: f64 = f.chol.diagonal().iter().map(|v| v.ln()).sum();
    -0.5 * targets.dot(&f.alpha) - log_det_half - 0.5 * n * LN_2PI
}
