//! ν-support vector regression with an RBF kernel, solved in the dual by
//! SMO with second-order working set selection.
//!
//! The dual has `2l` variables: `α_i` (index `i`, sign +1) and `α*_i`
//! (index `i + l`, sign -1), each boxed in `[0, C]`, with
//! `Σ(α - α*) = 0` and `Σ(α + α*) = C·ν·l`. The regression function is
//! `f(x) = Σ (α_i - α*_i) K(x_i, x) - ρ` and the tube half-width is `ε = -r`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::data::{HourlySample, Timestamp};

use super::{
    daytime, full_features, FeatureSet, Forecaster, MinMaxScaler, ModelDescription, ModelError,
    ModelKind, ModelSnapshot,
};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrConfig {
    pub nu: f64,
    /// Kernel width in `K(x, y) = exp(-γ‖x - y‖²)`.
    pub gamma: f64,
    /// Box constraint of each dual variable.
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    /// Iteration cap; `None` uses `max(10⁷, 100·l)`.
    pub max_iter: Option<usize>,
    /// Kernel row cache budget in MiB.
    pub cache_mb: usize,
    pub features: FeatureSet,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            nu: 0.5,
            gamma: 1.25,
            c: 1.0,
            tolerance: 1e-3,
            max_iter: None,
            cache_mb: 512,
            features: full_features(),
        }
    }
}

impl SvrConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(ModelError::InvalidConfig("svr.nu must lie in (0, 1]".into()));
        }
        if !(self.gamma > 0.0) || !(self.c > 0.0) || !(self.tolerance > 0.0) {
            return Err(ModelError::InvalidConfig(
                "svr.gamma, svr.c and svr.tolerance must be positive".into(),
            ));
        }
        if self.features.is_empty() {
            return Err(ModelError::InvalidConfig("svr.features is empty".into()));
        }
        Ok(())
    }
}

/// Dual solution of one ν-SVR problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrSolution {
    /// `[α_0..α_{l-1}, α*_0..α*_{l-1}]`.
    pub alpha: Vec<f64>,
    /// `α_i - α*_i`.
    pub coef: Vec<f64>,
    pub rho: f64,
    /// Tube half-width.
    pub epsilon: f64,
    pub iterations: usize,
    /// Maximal KKT violation at termination.
    pub violation: f64,
    /// `Σ_j K(x_k, x_j)(α_j - α*_j)` for each training point `k`.
    pub kernel_sums: Vec<f64>,
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

struct KernelCache<'a> {
    x: &'a [f64],
    dim: usize,
    l: usize,
    gamma: f64,
    rows: Vec<Option<Box<[f64]>>>,
    fifo: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a [f64], dim: usize, gamma: f64, cache_mb: usize) -> Self {
        let l = x.len() / dim;
        let per_row = (l * std::mem::size_of::<f64>()).max(1);
        let capacity = ((cache_mb << 20) / per_row).clamp(2, l.max(2));
        Self {
            x,
            dim,
            l,
            gamma,
            rows: vec![None; l],
            fifo: VecDeque::new(),
            capacity,
        }
    }

    /// Loads row `i`, never evicting row `keep`.
    fn ensure(&mut self, i: usize, keep: usize) {
        if self.rows[i].is_some() {
            return;
        }
        if self.fifo.len() >= self.capacity {
            if let Some(old) = self.fifo.pop_front() {
                if old == keep {
                    self.fifo.push_back(old);
                    if let Some(other) = self.fifo.pop_front() {
                        self.rows[other] = None;
                    }
                } else {
                    self.rows[old] = None;
                }
            }
        }
        let xi = &self.x[i * self.dim..(i + 1) * self.dim];
        let row: Box<[f64]> = self
            .x
            .chunks_exact(self.dim)
            .map(|xk| rbf(xi, xk, self.gamma))
            .collect();
        self.rows[i] = Some(row);
        self.fifo.push_back(i);
    }

    /// Rows `i` and `j` (indices in `0..l`), both resident.
    fn pair(&mut self, i: usize, j: usize) -> (&[f64], &[f64]) {
        self.ensure(i, j);
        self.ensure(j, i);
        (
            self.rows[i].as_deref().expect("resident"),
            self.rows[j].as_deref().expect("resident"),
        )
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.ensure(i, i);
        self.rows[i].as_deref().expect("resident")
    }

    fn l(&self) -> usize {
        self.l
    }
}

fn sign(t: usize, l: usize) -> f64 {
    if t < l {
        1.0
    } else {
        -1.0
    }
}

/// Gradient `G = p + Qα` computed from scratch.
fn full_gradient(cache: &mut KernelCache<'_>, y: &[f64], alpha: &[f64]) -> Vec<f64> {
    let l = cache.l();
    let mut g: Vec<f64> = (0..2 * l)
        .map(|t| if t < l { -y[t] } else { y[t - l] })
        .collect();
    for i in 0..l {
        let c = alpha[i] - alpha[i + l];
        if c == 0.0 {
            continue;
        }
        let row = cache.row(i);
        for k in 0..l {
            let v = row[k] * c;
            g[k] += v;
            g[k + l] -= v;
        }
    }
    g
}

/// Maximal KKT violation `max(m⁺ - M⁺, m⁻ - M⁻)` of a dual point; zero when
/// no pair can be improved.
fn violation(g: &[f64], alpha: &[f64], c: f64, l: usize) -> f64 {
    let (mut gmaxp, mut gmaxp2, mut gmaxn, mut gmaxn2) = (
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    );
    for t in 0..2 * l {
        let upper = alpha[t] >= c;
        let lower = alpha[t] <= 0.0;
        if t < l {
            if !upper {
                gmaxp = gmaxp.max(-g[t]);
            }
            if !lower {
                gmaxp2 = gmaxp2.max(g[t]);
            }
        } else {
            if !lower {
                gmaxn = gmaxn.max(g[t]);
            }
            if !upper {
                gmaxn2 = gmaxn2.max(-g[t]);
            }
        }
    }
    (gmaxp + gmaxp2).max(gmaxn + gmaxn2).max(0.0)
}

/// Recomputes the gradient from scratch and returns the maximal KKT
/// violation of `solution` on `(x, y)`.
pub fn kkt_residual(x: &[f64], dim: usize, y: &[f64], solution: &SvrSolution, config: &SvrConfig) -> f64 {
    let mut cache = KernelCache::new(x, dim, config.gamma, config.cache_mb);
    let g = full_gradient(&mut cache, y, &solution.alpha);
    violation(&g, &solution.alpha, config.c, y.len())
}

/// Solves the ν-SVR dual on scaled row-major inputs `x` and targets `y`.
pub fn solve_nu_svr(x: &[f64], dim: usize, y: &[f64], config: &SvrConfig) -> Result<SvrSolution, ModelError> {
    solve_nu_svr_from(x, dim, y, config, None)
}

/// Feasible starting point for [`solve_nu_svr_from`].
#[derive(Debug, Clone, Copy)]
pub struct DualStart<'a> {
    pub alpha: &'a [f64],
    /// Kernel sums of `alpha` as in [`SvrSolution::kernel_sums`]; computed
    /// from scratch when absent.
    pub kernel_sums: Option<&'a [f64]>,
}

/// Whether `alpha` is a feasible dual point for `l` samples.
fn feasible(alpha: &[f64], l: usize, config: &SvrConfig) -> bool {
    let c = config.c;
    let target = c * config.nu * l as f64;
    alpha.len() == 2 * l
        && alpha.iter().all(|&a| (0.0..=c).contains(&a))
        && (alpha.iter().sum::<f64>() - target).abs() <= 1e-9 * target.max(1.0)
        && (alpha[..l].iter().sum::<f64>() - alpha[l..].iter().sum::<f64>()).abs() <= 1e-9 * target.max(1.0)
}

/// As [`solve_nu_svr`], starting from `init` when it is a feasible dual
/// point and from the standard initial point otherwise.
pub fn solve_nu_svr_from(
    x: &[f64],
    dim: usize,
    y: &[f64],
    config: &SvrConfig,
    init: Option<DualStart<'_>>,
) -> Result<SvrSolution, ModelError> {
    let l = y.len();
    if l < 2 {
        return Err(ModelError::InsufficientData { needed: 2, got: l });
    }
    if x.len() != l * dim {
        return Err(ModelError::DimensionMismatch {
            expected: l * dim,
            got: x.len(),
        });
    }
    let c = config.c;
    let n = 2 * l;
    let mut alpha = vec![0.0; n];
    let init = init.filter(|s| feasible(s.alpha, l, config));
    match init {
        Some(s) => alpha.copy_from_slice(s.alpha),
        None => {
            let mut sum = c * config.nu * l as f64 / 2.0;
            for i in 0..l {
                let a = sum.min(c);
                alpha[i] = a;
                alpha[i + l] = a;
                sum -= a;
            }
        }
    }

    let mut cache = KernelCache::new(x, dim, config.gamma, config.cache_mb);
    let mut g = match init.and_then(|s| s.kernel_sums).filter(|k| k.len() == l) {
        Some(sums) => (0..n)
            .map(|t| if t < l { sums[t] - y[t] } else { y[t - l] - sums[t - l] })
            .collect(),
        None => full_gradient(&mut cache, y, &alpha),
    };
    let max_iter = config.max_iter.unwrap_or((100 * l).max(10_000_000));
    let eps = config.tolerance;
    let mut iter = 0;

    loop {
        // select i: most violating in each class
        let mut gmaxp = f64::NEG_INFINITY;
        let mut ip = usize::MAX;
        let mut gmaxn = f64::NEG_INFINITY;
        let mut in_ = usize::MAX;
        for t in 0..n {
            if t < l {
                if alpha[t] < c && -g[t] >= gmaxp {
                    gmaxp = -g[t];
                    ip = t;
                }
            } else if alpha[t] > 0.0 && g[t] >= gmaxn {
                gmaxn = g[t];
                in_ = t;
            }
        }
        let (mut gmaxp2, mut gmaxn2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut jbest = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if ip != usize::MAX || in_ != usize::MAX {
            let a = if ip != usize::MAX { ip % l } else { in_ % l };
            let b = if in_ != usize::MAX { in_ % l } else { a };
            let (ra, rb) = cache.pair(a, b);
            let kp = (ip != usize::MAX).then_some(ra);
            let kn = (in_ != usize::MAX).then_some(rb);
            for t in 0..n {
                if t < l {
                    if alpha[t] > 0.0 {
                        let diff = gmaxp + g[t];
                        gmaxp2 = gmaxp2.max(g[t]);
                        if diff > 0.0 {
                            if let Some(kp) = kp {
                                // same-sign pairs: Q_ij = K_ij
                                let qij = kp[t];
                                let quad = (2.0 - 2.0 * qij).max(TAU);
                                let obj = -(diff * diff) / quad;
                                if obj <= obj_min {
                                    obj_min = obj;
                                    jbest = t;
                                }
                            }
                        }
                    }
                } else if alpha[t] < c {
                    let diff = gmaxn - g[t];
                    gmaxn2 = gmaxn2.max(-g[t]);
                    if diff > 0.0 {
                        if let Some(kn) = kn {
                            let qij = kn[t - l];
                            let quad = (2.0 - 2.0 * qij).max(TAU);
                            let obj = -(diff * diff) / quad;
                            if obj <= obj_min {
                                obj_min = obj;
                                jbest = t;
                            }
                        }
                    }
                }
            }
        }
        let viol = (gmaxp + gmaxp2).max(gmaxn + gmaxn2);
        if viol < eps || jbest == usize::MAX {
            let (rho, r) = rho_and_r(&g, &alpha, c, l);
            let coef = (0..l).map(|i| alpha[i] - alpha[i + l]).collect();
            let kernel_sums = (0..l).map(|k| g[k] + y[k]).collect();
            return Ok(SvrSolution {
                alpha,
                coef,
                rho,
                epsilon: -r,
                iterations: iter,
                violation: viol.max(0.0),
                kernel_sums,
            });
        }
        if iter >= max_iter {
            return Err(ModelError::NotConverged {
                iterations: iter,
                violation: viol,
            });
        }
        iter += 1;

        let i = if jbest < l { ip } else { in_ };
        let j = jbest;
        let (ki, kj) = cache.pair(i % l, j % l);
        let kij = ki[j % l];
        let quad = (2.0 - 2.0 * kij).max(TAU);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let delta = (g[i] - g[j]) / quad;
        let s = alpha[i] + alpha[j];
        let mut ai = alpha[i] - delta;
        let mut aj = alpha[j] + delta;
        if s > c {
            if ai > c {
                ai = c;
                aj = s - c;
            }
        } else if aj < 0.0 {
            aj = 0.0;
            ai = s;
        }
        if s > c {
            if aj > c {
                aj = c;
                ai = s - c;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = s;
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let di = (ai - old_i) * sign(i, l);
        let dj = (aj - old_j) * sign(j, l);
        for k in 0..l {
            let v = ki[k] * di + kj[k] * dj;
            g[k] += v;
            g[k + l] -= v;
        }
    }
}

fn rho_and_r(g: &[f64], alpha: &[f64], c: f64, l: usize) -> (f64, f64) {
    let mut r = [0.0; 2];
    for (class, range) in [(0, 0..l), (1, l..2 * l)] {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut nfree, mut sfree) = (0usize, 0.0);
        for t in range {
            if alpha[t] >= c {
                lb = lb.max(g[t]);
            } else if alpha[t] <= 0.0 {
                ub = ub.min(g[t]);
            } else {
                nfree += 1;
                sfree += g[t];
            }
        }
        r[class] = if nfree > 0 {
            sfree / nfree as f64
        } else {
            (ub + lb) / 2.0
        };
    }
    ((r[0] - r[1]) / 2.0, (r[0] + r[1]) / 2.0)
}

/// Fitted ν-SVR on `[0, 1]`-scaled features predicting `P / P_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub config: SvrConfig,
    scaler: Option<MinMaxScaler>,
    support: Vec<f64>,
    coef: Vec<f64>,
    rho: f64,
    epsilon: f64,
    /// Dual variables of the last fit keyed by training hour, used to start
    /// the next fit on a grown training set.
    #[serde(skip)]
    warm: Option<WarmStart>,
}

#[derive(Debug, Clone, PartialEq)]
struct WarmStart {
    hours: Vec<Timestamp>,
    alpha: Vec<f64>,
    kernel_sums: Vec<f64>,
    /// The fitted model, without its own warm-start state.
    model: Box<SvrModel>,
}

impl WarmStart {
    /// Dual point for training hours `hours` (raw features `x`, scaled
    /// features `xs` under `scaler`, targets `y`): previous values where the
    /// hour is still present. New hours fill what each side needs to reach
    /// `Cνl/2`, going first to hours the previous model leaves outside its
    /// tube on that side. Kernel sums are updated incrementally when no hour
    /// was dropped and the scaling is unchanged. `None` when no feasible
    /// point results.
    fn initial_point(
        &self,
        hours: &[Timestamp],
        x: &[f64],
        xs: &[f64],
        y: &[f64],
        scaler: &MinMaxScaler,
        config: &SvrConfig,
    ) -> Option<(Vec<f64>, Option<Vec<f64>>)> {
        let l = hours.len();
        let old_l = self.hours.len();
        let dim = config.features.len();
        let c = config.c;
        let mut alpha = vec![0.0; 2 * l];
        let mut kept = Vec::with_capacity(old_l);
        let mut fresh = Vec::new();
        let mut k = 0;
        for (i, ts) in hours.iter().enumerate() {
            while k < old_l && self.hours[k] < *ts {
                k += 1;
            }
            if k < old_l && self.hours[k] == *ts {
                alpha[i] = self.alpha[k];
                alpha[i + l] = self.alpha[k + old_l];
                kept.push((i, k));
                k += 1;
            } else {
                fresh.push(i);
            }
        }
        let eps = self.model.epsilon;
        let mut above = Vec::new();
        let mut below = Vec::new();
        for &i in &fresh {
            let r = y[i] - self.model.decision(&x[i * dim..(i + 1) * dim]).ok()?;
            if r > eps {
                above.push(i);
            } else if r < -eps {
                below.push(i);
            }
        }
        let target = c * config.nu * l as f64 / 2.0;
        for (offset, preferred) in [(0, &above), (l, &below)] {
            let share = target - alpha[offset..offset + l].iter().sum::<f64>();
            if share < 0.0 || share > c * fresh.len() as f64 {
                return None;
            }
            let per = if preferred.is_empty() { 0.0 } else { (share / preferred.len() as f64).min(c) };
            for &i in preferred.iter() {
                alpha[i + offset] = per;
            }
            let rest = share - per * preferred.len() as f64;
            let others = fresh.len() - preferred.len();
            if others > 0 {
                let each = rest / others as f64;
                for &i in &fresh {
                    if !preferred.contains(&i) {
                        alpha[i + offset] = each;
                    }
                }
            }
        }
        if !feasible(&alpha, l, config) {
            return None;
        }
        let incremental = kept.len() == old_l && self.model.scaler.as_ref() == Some(scaler);
        let sums = incremental.then(|| {
            let mut sums = vec![0.0; l];
            for &(i, k) in &kept {
                sums[i] = self.kernel_sums[k];
            }
            for &i in &fresh {
                let xi = &xs[i * dim..(i + 1) * dim];
                let ci = alpha[i] - alpha[i + l];
                let mut own = 0.0;
                for (j, xj) in xs.chunks_exact(dim).enumerate() {
                    let kij = rbf(xi, xj, config.gamma);
                    own += kij * (alpha[j] - alpha[j + l]);
                    if fresh.binary_search(&j).is_err() {
                        sums[j] += kij * ci;
                    }
                }
                sums[i] = own;
            }
            sums
        });
        Some((alpha, sums))
    }
}

impl SvrModel {
    pub fn new(config: SvrConfig) -> Self {
        Self {
            config,
            scaler: None,
            support: Vec::new(),
            coef: Vec::new(),
            rho: 0.0,
            epsilon: 0.0,
            warm: None,
        }
    }

    /// Starts the next fit from `previous`'s dual solution when the new
    /// training hours extend the old ones.
    pub fn warm_start_from(&mut self, previous: &SvrModel) {
        self.warm = previous.warm.clone();
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_support(&self) -> usize {
        self.coef.len()
    }

    /// Fits on raw row-major features and normalised targets; returns the
    /// dual solution.
    pub fn fit_matrix(&mut self, x: &[f64], y: &[f64]) -> Result<SvrSolution, ModelError> {
        self.fit_matrix_from(x, y, None)
    }

    fn fit_matrix_from(&mut self, x: &[f64], y: &[f64], init: Option<DualStart<'_>>) -> Result<SvrSolution, ModelError> {
        let dim = self.config.features.len();
        let scaler = MinMaxScaler::fit(x, dim);
        let mut xs = x.to_vec();
        scaler.transform_in_place(&mut xs);
        self.fit_scaled(scaler, &xs, y, init)
    }

    fn fit_scaled(
        &mut self,
        scaler: MinMaxScaler,
        xs: &[f64],
        y: &[f64],
        init: Option<DualStart<'_>>,
    ) -> Result<SvrSolution, ModelError> {
        let dim = self.config.features.len();
        let sol = solve_nu_svr_from(xs, dim, y, &self.config, init)?;
        self.support.clear();
        self.coef.clear();
        for (i, &c) in sol.coef.iter().enumerate() {
            if c != 0.0 {
                self.support.extend_from_slice(&xs[i * dim..(i + 1) * dim]);
                self.coef.push(c);
            }
        }
        self.rho = sol.rho;
        self.epsilon = sol.epsilon;
        self.scaler = Some(scaler);
        Ok(sol)
    }

    /// Decision function on raw (unscaled) features.
    pub fn decision(&self, raw: &[f64]) -> Result<f64, ModelError> {
        let scaler = self.scaler.as_ref().ok_or(ModelError::NotFitted)?;
        let q = scaler.transform(raw);
        let dim = q.len();
        let f: f64 = self
            .support
            .chunks_exact(dim)
            .zip(&self.coef)
            .map(|(sv, c)| c * rbf(sv, &q, self.config.gamma))
            .sum();
        Ok(f - self.rho)
    }
}

impl Forecaster for SvrModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Svr
    }

    fn fit(&mut self, train: &[HourlySample], _now: Timestamp) -> Result<(), ModelError> {
        let rows = daytime(train);
        let mut x = Vec::with_capacity(rows.len() * self.config.features.len());
        for s in &rows {
            self.config.features.extract_into(&s.features, &mut x)?;
        }
        let y: Vec<f64> = rows.iter().map(|s| s.measured_power / s.nominal_power).collect();
        let hours: Vec<Timestamp> = rows.iter().map(|s| s.timestamp).collect();
        let dim = self.config.features.len();
        let scaler = MinMaxScaler::fit(&x, dim);
        let mut xs = x.clone();
        scaler.transform_in_place(&mut xs);
        let start = self
            .warm
            .take()
            .and_then(|w| w.initial_point(&hours, &x, &xs, &y, &scaler, &self.config));
        let init = start.as_ref().map(|(alpha, sums)| DualStart {
            alpha,
            kernel_sums: sums.as_deref(),
        });
        let sol = self.fit_scaled(scaler, &xs, &y, init)?;
        self.warm = Some(WarmStart {
            hours,
            alpha: sol.alpha,
            kernel_sums: sol.kernel_sums,
            model: Box::new(self.clone()),
        });
        Ok(())
    }

    fn predict(&self, sample: &HourlySample) -> Result<f64, ModelError> {
        let x = self.config.features.extract(&sample.features)?;
        Ok(self.decision(&x)? * sample.nominal_power)
    }

    fn describe(&self) -> ModelDescription {
        ModelDescription::new(ModelKind::Svr, &self.config)
    }

    fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            version: ModelSnapshot::VERSION,
            model: super::AnyModel::Svr(self.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_problem_converges() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let cfg = SvrConfig {
            features: FeatureSet::new(vec![crate::data::FeatureKind::Gti]),
            ..SvrConfig::default()
        };
        let sol = solve_nu_svr(&x, 1, &y, &cfg).unwrap();
        assert!(sol.violation < cfg.tolerance);
        assert!(kkt_residual(&x, 1, &y, &sol, &cfg) < cfg.tolerance);
        let sum: f64 = sol.coef.iter().sum();
        assert!(sum.abs() < 1e-9);
    }
}
