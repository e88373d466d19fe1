//! Single-hidden-layer feed-forward network with logistic sigmoid units and
//! a linear output, trained by Levenberg–Marquardt on the Bayesian
//! regularised objective `F = β·E_D + α·E_W` with evidence re-estimation of
//! `α` and `β` after every accepted step.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{HourlySample, Timestamp};
use crate::seed;

use super::{
    daytime, gti_features, FeatureSet, Forecaster, MinMaxScaler, ModelDescription, ModelError,
    ModelKind, ModelSnapshot,
};

/// Parameter count of the default network (one input, three hidden units).
pub const NN_PARAM_COUNT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnConfig {
    pub hidden_neurons: usize,
    pub max_epochs: usize,
    pub mu_init: f64,
    pub mu_max: f64,
    /// Re-initialisations after a diverged (non-finite) run.
    pub max_restarts: usize,
    /// Stop after this many epochs without a log-evidence improvement;
    /// 0 runs all epochs.
    pub patience: usize,
    pub features: FeatureSet,
}

impl Default for NnConfig {
    fn default() -> Self {
        Self {
            hidden_neurons: 3,
            max_epochs: 200,
            mu_init: 0.005,
            mu_max: 1e10,
            max_restarts: 3,
            patience: 20,
            features: gti_features(),
        }
    }
}

impl NnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_neurons == 0 {
            return Err(ModelError::InvalidConfig("nn.hidden_neurons must be at least 1".into()));
        }
        if !(self.mu_init > 0.0 && self.mu_max > self.mu_init) {
            return Err(ModelError::InvalidConfig("nn.mu_init must be positive and below nn.mu_max".into()));
        }
        if self.features.is_empty() {
            return Err(ModelError::InvalidConfig("nn.features is empty".into()));
        }
        Ok(())
    }
}

/// Weights laid out as `[W1 (hidden × inputs, row-major), b1, w2, b2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnParams {
    pub inputs: usize,
    pub hidden: usize,
    pub w: Vec<f64>,
}

impl NnParams {
    pub fn count(inputs: usize, hidden: usize) -> usize {
        hidden * inputs + 2 * hidden + 1
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            inputs,
            hidden,
            w: vec![0.0; Self::count(inputs, hidden)],
        }
    }

    pub fn random(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(inputs, hidden);
        for v in &mut p.w {
            *v = rng.gen_range(-1.0..1.0);
        }
        p
    }

    fn b1_off(&self) -> usize {
        self.hidden * self.inputs
    }

    fn w2_off(&self) -> usize {
        self.b1_off() + self.hidden
    }

    fn b2_off(&self) -> usize {
        self.w2_off() + self.hidden
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Network output and, optionally, its gradient with respect to every
/// weight written into `jac_row`.
fn forward(p: &NnParams, x: &[f64], jac_row: Option<&mut [f64]>) -> f64 {
    let (ni, nh) = (p.inputs, p.hidden);
    let (b1, w2, b2) = (p.b1_off(), p.w2_off(), p.b2_off());
    let mut out = p.w[b2];
    let mut jac = jac_row;
    for h in 0..nh {
        let mut z = p.w[b1 + h];
        for j in 0..ni {
            z += p.w[h * ni + j] * x[j];
        }
        let s = sigmoid(z);
        out += p.w[w2 + h] * s;
        if let Some(row) = jac.as_deref_mut() {
            let ds = p.w[w2 + h] * s * (1.0 - s);
            for j in 0..ni {
                row[h * ni + j] = ds * x[j];
            }
            row[b1 + h] = ds;
            row[w2 + h] = s;
        }
    }
    if let Some(row) = jac {
        row[b2] = 1.0;
    }
    out
}

pub fn network_output(p: &NnParams, x: &[f64]) -> f64 {
    forward(p, x, None)
}

/// `F = β·Σ(out - t)² + α·Σw²` and its gradient over row-major inputs.
pub fn evidence_objective(p: &NnParams, x: &[f64], t: &[f64], alpha: f64, beta: f64) -> (f64, Vec<f64>) {
    let n_w = p.w.len();
    let mut grad: Vec<f64> = p.w.iter().map(|w| 2.0 * alpha * w).collect();
    let mut row = vec![0.0; n_w];
    let mut ed = 0.0;
    for (xi, ti) in x.chunks_exact(p.inputs).zip(t) {
        let e = forward(p, xi, Some(&mut row)) - ti;
        ed += e * e;
        for k in 0..n_w {
            grad[k] += 2.0 * beta * e * row[k];
        }
    }
    let ew: f64 = p.w.iter().map(|w| w * w).sum();
    (beta * ed + alpha * ew, grad)
}

struct Linearisation {
    jtj: DMatrix<f64>,
    jte: DVector<f64>,
    ed: f64,
}

fn linearise(p: &NnParams, x: &[f64], t: &[f64]) -> Linearisation {
    let n_w = p.w.len();
    let mut upper = vec![0.0; n_w * n_w];
    let mut jte = DVector::zeros(n_w);
    let mut row = vec![0.0; n_w];
    let mut ed = 0.0;
    for (xi, ti) in x.chunks_exact(p.inputs).zip(t) {
        let e = forward(p, xi, Some(&mut row)) - ti;
        ed += e * e;
        for a in 0..n_w {
            let ra = row[a];
            jte[a] += ra * e;
            let dst = &mut upper[a * n_w..a * n_w + a + 1];
            for (d, rb) in dst.iter_mut().zip(&row[..=a]) {
                *d += ra * rb;
            }
        }
    }
    let jtj = DMatrix::from_fn(n_w, n_w, |a, b| if b <= a { upper[a * n_w + b] } else { upper[b * n_w + a] });
    Linearisation { jtj, jte, ed }
}

fn sum_sq_error(p: &NnParams, x: &[f64], t: &[f64]) -> f64 {
    x.chunks_exact(p.inputs)
        .zip(t)
        .map(|(xi, ti)| (forward(p, xi, None) - ti).powi(2))
        .sum()
}

fn sum_sq(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum()
}

/// Training outcome of one initialisation.
struct Trained {
    params: NnParams,
    alpha: f64,
    beta: f64,
    epochs: usize,
}

fn train_once(init: NnParams, x: &[f64], t: &[f64], config: &NnConfig) -> Option<Trained> {
    let n = t.len() as f64;
    let n_w = init.w.len();
    let n_wf = n_w as f64;
    let mut p = init;
    let mut alpha = 0.01;
    let mut beta = 1.0;
    let mut mu = config.mu_init;

    let mut lin = linearise(&p, x, t);
    let mut best: Option<(f64, NnParams, f64, f64, usize)> = None;
    let mut epochs = 0;

    for epoch in 0..config.max_epochs {
        epochs = epoch + 1;
        let ew = sum_sq(&p.w);
        let f_old = beta * lin.ed + alpha * ew;
        if !f_old.is_finite() {
            return None;
        }
        let rhs: DVector<f64> =
            -(lin.jte.clone() * beta + DVector::from_column_slice(&p.w) * alpha);
        if rhs.norm() < 1e-10 {
            break;
        }
        let mut accepted = None;
        while mu <= config.mu_max {
            let mut a = lin.jtj.clone() * beta;
            for k in 0..n_w {
                a[(k, k)] += alpha + mu;
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => {
                    mu *= 10.0;
                    continue;
                }
            };
            let mut trial = p.clone();
            for k in 0..n_w {
                trial.w[k] += step[k];
            }
            let f_new = beta * sum_sq_error(&trial, x, t) + alpha * sum_sq(&trial.w);
            if !f_new.is_finite() {
                return None;
            }
            if f_new < f_old {
                mu = (mu / 10.0).max(1e-20);
                let trial_lin = linearise(&trial, x, t);
                accepted = Some((trial, trial_lin));
                break;
            }
            mu *= 10.0;
        }
        let Some((np, nl)) = accepted else {
            break;
        };
        p = np;
        lin = nl;

        // evidence re-estimation of α and β
        let mut h = lin.jtj.clone() * (2.0 * beta);
        for k in 0..n_w {
            h[(k, k)] += 2.0 * alpha;
        }
        let Some(ch) = h.clone().cholesky() else {
            continue;
        };
        let trace_inv = ch.inverse().trace();
        let gamma = (n_wf - 2.0 * alpha * trace_inv).clamp(0.0, n_wf);
        let ew = sum_sq(&p.w).max(1e-300);
        let ed = lin.ed.max(1e-300);
        alpha = (gamma / (2.0 * ew)).max(1e-12);
        beta = ((n - gamma).max(1e-12) / (2.0 * ed)).max(1e-12);

        let mut h = lin.jtj.clone() * (2.0 * beta);
        for k in 0..n_w {
            h[(k, k)] += 2.0 * alpha;
        }
        let log_det = match h.cholesky() {
            Some(ch) => 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
            None => continue,
        };
        let log_ev = -(beta * ed + alpha * ew) - 0.5 * log_det + 0.5 * n_wf * alpha.ln()
            + 0.5 * n * beta.ln();
        if !log_ev.is_finite() {
            return None;
        }
        if best.as_ref().map_or(true, |b| log_ev > b.0) {
            best = Some((log_ev, p.clone(), alpha, beta, epochs));
        } else if config.patience > 0 && best.as_ref().is_some_and(|b| epochs - b.4 >= config.patience) {
            break;
        }
    }

    if p.w.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(match best {
        Some((_, params, alpha, beta, epochs)) => Trained {
            params,
            alpha,
            beta,
            epochs,
        },
        None => Trained {
            params: p,
            alpha,
            beta,
            epochs,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnModel {
    pub config: NnConfig,
    pub seed: u64,
    scaler: Option<MinMaxScaler>,
    params: Option<NnParams>,
    /// Final regularisation hyperparameters `(α, β)`.
    pub hyper: (f64, f64),
    pub epochs: usize,
    /// Weights of the previous fit, used as the first initialisation.
    #[serde(skip)]
    warm: Option<NnParams>,
}

impl NnModel {
    pub fn new(config: NnConfig, seed: u64) -> Self {
        Self {
            config,
            seed,
            scaler: None,
            params: None,
            hyper: (0.0, 0.0),
            epochs: 0,
            warm: None,
        }
    }

    /// Starts the next fit from `previous`'s weights.
    pub fn warm_start_from(&mut self, previous: &NnModel) {
        self.warm = previous.params.clone();
    }

    pub fn params(&self) -> Option<&NnParams> {
        self.params.as_ref()
    }

    /// Fits on raw row-major inputs and normalised targets.
    pub fn fit_matrix(&mut self, x: &[f64], t: &[f64]) -> Result<(), ModelError> {
        let dim = self.config.features.len();
        if t.is_empty() {
            return Err(ModelError::InsufficientData { needed: 1, got: 0 });
        }
        let n_w = NnParams::count(dim, self.config.hidden_neurons);
        if t.len() < 10 * n_w {
            log::warn!(
                "neural network trained on {} samples, fewer than 10 per weight ({n_w} weights)",
                t.len()
            );
        }
        let scaler = MinMaxScaler::fit(x, dim);
        let xs: Vec<f64> = x
            .chunks_exact(dim)
            .flat_map(|r| scaler.transform(r).into_iter().map(|v| 2.0 * v - 1.0))
            .collect();
        for attempt in 0..=self.config.max_restarts {
            let init = match self.warm.take() {
                Some(w) if attempt == 0 && w.w.len() == n_w && w.inputs == dim => w,
                _ => {
                    let mut rng = seed::rng(self.seed, &[attempt as u64]);
                    NnParams::random(dim, self.config.hidden_neurons, &mut rng)
                }
            };
            if let Some(tr) = train_once(init, &xs, t, &self.config) {
                self.params = Some(tr.params);
                self.hyper = (tr.alpha, tr.beta);
                self.epochs = tr.epochs;
                self.scaler = Some(scaler);
                return Ok(());
            }
        }
        Err(ModelError::Diverged {
            attempts: self.config.max_restarts + 1,
        })
    }

    /// Normalised output for raw inputs.
    pub fn output(&self, raw: &[f64]) -> Result<f64, ModelError> {
        let (Some(scaler), Some(p)) = (&self.scaler, &self.params) else {
            return Err(ModelError::NotFitted);
        };
        let x: Vec<f64> = scaler.transform(raw).into_iter().map(|v| 2.0 * v - 1.0).collect();
        Ok(network_output(p, &x))
    }
}

impl Forecaster for NnModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Nn
    }

    fn fit(&mut self, train: &[HourlySample], _now: Timestamp) -> Result<(), ModelError> {
        let rows = daytime(train);
        let mut x = Vec::with_capacity(rows.len() * self.config.features.len());
        for s in &rows {
            self.config.features.extract_into(&s.features, &mut x)?;
        }
        let t: Vec<f64> = rows.iter().map(|s| s.measured_power / s.nominal_power).collect();
        self.fit_matrix(&x, &t)
    }

    fn predict(&self, sample: &HourlySample) -> Result<f64, ModelError> {
        let x = self.config.features.extract(&sample.features)?;
        let y = self.output(&x)? * sample.nominal_power;
        if y.is_finite() {
            Ok(y)
        } else {
            Err(ModelError::NonFinite("network output"))
        }
    }

    fn describe(&self) -> ModelDescription {
        ModelDescription::new(ModelKind::Nn, &self.config)
    }

    fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            version: ModelSnapshot::VERSION,
            model: super::AnyModel::Nn(self.clone()),
        }
    }
}
