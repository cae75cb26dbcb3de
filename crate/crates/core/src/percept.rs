//! Per-agent ownership prediction from perceptual features with kernel
//! logistic regression on fractional labels.

use crate::dsl::PALETTE;
use crate::world::{AgentId, ObjectState, DEFAULT_PRIOR};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Dimension of a feature vector: position, color one-hot, recency.
pub const FEATURE_DIM: usize = 3 + PALETTE.len() + 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KlrConfig {
    /// RBF bandwidth γ in exp(−γ‖x−x′‖²).
    pub gamma: f64,
    /// Regularization λ.
    pub lambda: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Interaction gaps are capped here, seconds.
    pub horizon: f64,
}

impl Default for KlrConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lambda: 0.01,
            max_iters: 500,
            grad_tol: 1e-6,
            horizon: 1e4,
        }
    }
}

pub type FeatureVector = [f64; FEATURE_DIM];

/// Standardization parameters, fit on a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeatureStats {
    pub position_mean: [f64; 3],
    pub position_std: [f64; 3],
    pub recency_mean: f64,
    pub recency_std: f64,
    pub horizon: f64,
}

/// log(1 + gap) with the gap capped at `horizon`; never-interacted objects
/// sit at the cap.
pub fn raw_recency(object: &ObjectState, agent: &AgentId, now: f64, horizon: f64) -> f64 {
    let gap = match object.last_interaction.get(agent) {
        Some(t) => (now - t).clamp(0.0, horizon),
        None => horizon,
    };
    gap.ln_1p()
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 1e-12 { std } else { 1.0 })
}

impl FeatureStats {
    pub fn fit(objects: &[&ObjectState], agent: &AgentId, now: f64, horizon: f64) -> Self {
        let mut position_mean = [0.0; 3];
        let mut position_std = [1.0; 3];
        for d in 0..3 {
            (position_mean[d], position_std[d]) = mean_std(objects.iter().map(|o| o.position[d]));
        }
        let (recency_mean, recency_std) = mean_std(objects.iter().map(|o| raw_recency(o, agent, now, horizon)));
        Self {
            position_mean,
            position_std,
            recency_mean,
            recency_std,
            horizon,
        }
    }
}

pub fn featurize(object: &ObjectState, agent: &AgentId, now: f64, stats: &FeatureStats) -> FeatureVector {
    let mut x = [0.0; FEATURE_DIM];
    for d in 0..3 {
        x[d] = (object.position[d] - stats.position_mean[d]) / stats.position_std[d];
    }
    if let Some(i) = PALETTE.iter().position(|c| *c == object.color) {
        x[3 + i] = 1.0;
    }
    x[FEATURE_DIM - 1] = (raw_recency(object, agent, now, stats.horizon) - stats.recency_mean) / stats.recency_std;
    x
}

pub fn rbf(a: &FeatureVector, b: &FeatureVector, gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (-gamma * d2).exp()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// The dual training objective
/// `Σ CE(σ(f_i), t_i) + (λ/2)·wᵀKw` with `f = Kw`.
#[derive(Clone, Debug)]
pub struct KlrObjective {
    pub kernel: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub lambda: f64,
}

impl KlrObjective {
    pub fn new(points: &[FeatureVector], targets: &[f64], gamma: f64, lambda: f64) -> Self {
        let n = points.len();
        let kernel = DMatrix::from_fn(n, n, |i, j| rbf(&points[i], &points[j], gamma));
        Self {
            kernel,
            targets: DVector::from_column_slice(targets),
            lambda,
        }
    }

    pub fn loss(&self, w: &DVector<f64>) -> f64 {
        let f = &self.kernel * w;
        // CE(σ(f), t) = softplus(f) − t·f
        let ce: f64 = f.iter().zip(self.targets.iter()).map(|(fi, ti)| softplus(*fi) - ti * fi).sum();
        ce + 0.5 * self.lambda * w.dot(&f)
    }

    /// K(σ(Kw) − t + λw).
    pub fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.kernel * self.residual(w)
    }

    fn residual(&self, w: &DVector<f64>) -> DVector<f64> {
        let f = &self.kernel * w;
        f.map(sigmoid) - &self.targets + w * self.lambda
    }

    /// Newton direction d with (KSK + λK)d = ∇, found through the
    /// always-invertible (SK + λI)d = σ − t + λw.
    fn newton_direction(&self, w: &DVector<f64>) -> Option<DVector<f64>> {
        let f = &self.kernel * w;
        let s = f.map(|z| {
            let p = sigmoid(z);
            p * (1.0 - p)
        });
        let n = w.len();
        let mut m = DMatrix::from_fn(n, n, |i, j| s[i] * self.kernel[(i, j)]);
        for i in 0..n {
            m[(i, i)] += self.lambda;
        }
        m.lu().solve(&self.residual(w))
    }
}

/// Result of minimizing a [`KlrObjective`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Fit {
    pub weights: Vec<f64>,
    /// Loss before the first iteration and after each accepted step.
    pub loss_trace: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Damped Newton with Armijo backtracking. Every accepted step lowers the
/// loss, so the trace is non-increasing.
pub fn minimize(obj: &KlrObjective, max_iters: usize, grad_tol: f64) -> Fit {
    let n = obj.targets.len();
    let mut w = DVector::zeros(n);
    let mut loss = obj.loss(&w);
    let mut trace = vec![loss];
    let mut grad = obj.gradient(&w);
    let mut iterations = 0;
    while iterations < max_iters && grad.norm() > grad_tol {
        let Some(dir) = obj.newton_direction(&w) else { break };
        let slope = grad.dot(&dir);
        if slope <= 0.0 {
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &w - &dir * step;
            let cand_loss = obj.loss(&cand);
            if cand_loss <= loss - 1e-4 * step * slope {
                accepted = Some((cand, cand_loss));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_loss)) = accepted else { break };
        iterations += 1;
        w = next;
        loss = next_loss;
        trace.push(loss);
        grad = obj.gradient(&w);
    }
    Fit {
        weights: w.iter().copied().collect(),
        loss_trace: trace,
        grad_norm: grad.norm(),
        iterations,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KlrModel {
    pub agent: AgentId,
    pub stats: FeatureStats,
    pub points: Vec<FeatureVector>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
    pub gamma: f64,
    pub lambda: f64,
    pub fit: Fit,
}

impl KlrModel {
    /// Fits one agent's model to `(object, target probability)` pairs.
    /// Returns `None` when there is nothing to train on.
    pub fn train(agent: &AgentId, data: &[(&ObjectState, f64)], now: f64, config: &KlrConfig) -> Option<Self> {
        if data.is_empty() {
            return None;
        }
        let objects: Vec<&ObjectState> = data.iter().map(|(o, _)| *o).collect();
        let stats = FeatureStats::fit(&objects, agent, now, config.horizon);
        let points: Vec<FeatureVector> = objects.iter().map(|o| featurize(o, agent, now, &stats)).collect();
        let targets: Vec<f64> = data.iter().map(|(_, t)| *t).collect();
        let obj = KlrObjective::new(&points, &targets, config.gamma, config.lambda);
        let fit = minimize(&obj, config.max_iters, config.grad_tol);
        Some(Self {
            agent: agent.clone(),
            stats,
            points,
            targets,
            weights: fit.weights.clone(),
            gamma: config.gamma,
            lambda: config.lambda,
            fit,
        })
    }

    pub fn predict_features(&self, x: &FeatureVector) -> f64 {
        let f: f64 = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * rbf(x, p, self.gamma))
            .sum();
        sigmoid(f)
    }

    pub fn predict(&self, object: &ObjectState, now: f64) -> f64 {
        self.predict_features(&featurize(object, &self.agent, now, &self.stats))
    }
}

/// Prediction with an optional model; untrained means the default prior.
pub fn predict_or_default(model: Option<&KlrModel>, object: &ObjectState, now: f64) -> f64 {
    model.map_or(DEFAULT_PRIOR, |m| m.predict(object, now))
}
