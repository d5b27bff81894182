use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::FeatureMatrix;

/// Training parameters for the ν-one-class SVM with an RBF kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcsvmParams {
    pub nu: f64,
    pub gamma: f64,
    /// Stop once the maximal KKT violation drops below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for OcsvmParams {
    fn default() -> Self {
        OcsvmParams {
            nu: 0.1,
            gamma: 1.0,
            tol: 1e-8,
            max_iters: 1_000_000,
        }
    }
}

impl OcsvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::InvalidArgument(format!("nu must lie in (0, 1], got {}", self.nu)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("solver tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub samples: usize,
    pub iterations: usize,
    /// Largest KKT violation of the returned solution.
    pub kkt_violation: f64,
    pub upper_bound: f64,
    pub free_support_vectors: usize,
    /// Every training sample was identical.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmModel {
    pub gamma: f64,
    pub nu: f64,
    pub rho: f64,
    pub support_vectors: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub diagnostics: TrainDiagnostics,
}

#[inline]
fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

impl OcsvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    /// `f(x) = sum_j alpha_j exp(-gamma |x - sv_j|^2) - rho`.
    pub fn decision(&self, x: &[f64]) -> f64 {
        let s: f64 = self
            .support_vectors
            .iter()
            .zip(&self.alpha)
            .map(|(sv, &a)| a * rbf(self.gamma, x, sv))
            .sum();
        s - self.rho
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: OcsvmModel = serde_json::from_str(s)?;
        if m.support_vectors.len() != m.alpha.len() || m.support_vectors.is_empty() {
            return Err(Error::InvalidArgument("model needs one coefficient per support vector".into()));
        }
        let d = m.dim();
        if m.support_vectors.iter().any(|sv| sv.len() != d) {
            return Err(Error::InvalidArgument("support vectors differ in dimension".into()));
        }
        Ok(m)
    }
}

/// `1 / (d * Var(X))` over all coordinates; 1 when the samples have no spread.
pub fn default_gamma(samples: &FeatureMatrix) -> f64 {
    let n = samples.data.len();
    if n == 0 || samples.dim == 0 {
        return 1.0;
    }
    let mean = samples.data.iter().sum::<f64>() / n as f64;
    let var = samples.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var > 0.0 {
        1.0 / (samples.dim as f64 * var)
    } else {
        1.0
    }
}

/// Solves `min 1/2 a'Ka` s.t. `0 <= a_i <= 1/(nu l)`, `sum a = 1` with
/// maximal-violating-pair SMO and second-order working set selection.
pub fn ocsvm_train(samples: &FeatureMatrix, params: &OcsvmParams) -> Result<OcsvmModel> {
    params.validate()?;
    let l = samples.rows();
    if l < 2 {
        return Err(Error::InvalidArgument(format!("need at least two samples, got {l}")));
    }
    if samples.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("training samples must be finite".into()));
    }
    let gamma = params.gamma;
    let mut k = vec![0.0; l * l];
    for i in 0..l {
        k[i * l + i] = 1.0;
        for j in 0..i {
            let v = rbf(gamma, samples.row(i), samples.row(j));
            k[i * l + j] = v;
            k[j * l + i] = v;
        }
    }
    let kk = |i: usize, j: usize| k[i * l + j];
    let c = 1.0 / (params.nu * l as f64);

    let mut alpha = vec![0.0; l];
    let full = ((params.nu * l as f64).floor() as usize).min(l);
    for a in alpha.iter_mut().take(full) {
        *a = c;
    }
    if full < l {
        alpha[full] = (1.0 - full as f64 * c).max(0.0);
    }
    let mut grad: Vec<f64> = (0..l).map(|i| (0..l).map(|j| kk(i, j) * alpha[j]).sum()).collect();

    let at_upper = |a: f64| a >= c;
    let at_lower = |a: f64| a <= 0.0;
    let mut iterations = 0;
    while iterations < params.max_iters {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..l {
            if !at_upper(alpha[t]) && -grad[t] > g_max {
                g_max = -grad[t];
                i = t;
            }
        }
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        let mut best_gain = f64::NEG_INFINITY;
        for t in 0..l {
            if at_lower(alpha[t]) {
                continue;
            }
            g_min = g_min.min(-grad[t]);
            if i == usize::MAX {
                continue;
            }
            let b = g_max + grad[t];
            if b > 0.0 {
                let a = (kk(i, i) + kk(t, t) - 2.0 * kk(i, t)).max(1e-12);
                let gain = b * b / a;
                if gain > best_gain {
                    best_gain = gain;
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < params.tol {
            break;
        }
        iterations += 1;
        let quad = (kk(i, i) + kk(j, j) - 2.0 * kk(i, j)).max(1e-12);
        let step = ((grad[j] - grad[i]) / quad).min(c - alpha[i]).min(alpha[j]);
        if step <= 0.0 {
            break;
        }
        let (new_i, new_j) = if step == alpha[j] {
            (alpha[i] + alpha[j], 0.0)
        } else if step == c - alpha[i] {
            (c, alpha[j] - step)
        } else {
            (alpha[i] + step, alpha[j] - step)
        };
        let (di, dj) = (new_i - alpha[i], new_j - alpha[j]);
        alpha[i] = new_i;
        alpha[j] = new_j;
        for (t, g) in grad.iter_mut().enumerate() {
            *g += di * kk(t, i) + dj * kk(t, j);
        }
    }

    // Fresh gradient so the offset and the decision function agree exactly.
    let grad: Vec<f64> = (0..l)
        .map(|i| (0..l).filter(|&j| alpha[j] > 0.0).map(|j| kk(i, j) * alpha[j]).sum())
        .collect();
    let (mut up, mut low) = (f64::NEG_INFINITY, f64::INFINITY);
    for t in 0..l {
        if !at_upper(alpha[t]) {
            up = up.max(-grad[t]);
        }
        if !at_lower(alpha[t]) {
            low = low.min(-grad[t]);
        }
    }
    let kkt_violation = (up - low).max(0.0);

    let first = samples.row(0);
    let degenerate = (1..l).all(|i| samples.row(i) == first);
    let mut free = 0usize;
    let mut free_sum = 0.0;
    let (mut lb, mut ub) = (f64::NEG_INFINITY, f64::INFINITY);
    for t in 0..l {
        if at_upper(alpha[t]) {
            lb = lb.max(grad[t]);
        } else if at_lower(alpha[t]) {
            ub = ub.min(grad[t]);
        } else {
            free += 1;
            free_sum += grad[t];
        }
    }
    let rho = if degenerate {
        grad[0]
    } else if free > 0 {
        free_sum / free as f64
    } else {
        0.5 * (lb + ub)
    };

    let (support_vectors, alpha): (Vec<Vec<f64>>, Vec<f64>) = (0..l)
        .filter(|&t| alpha[t] > 0.0)
        .map(|t| (samples.row(t).to_vec(), alpha[t]))
        .unzip();
    if degenerate {
        log::warn!("all {l} training samples are identical; model accepts only that point");
    }
    Ok(OcsvmModel {
        gamma,
        nu: params.nu,
        rho,
        support_vectors,
        alpha,
        diagnostics: TrainDiagnostics {
            samples: l,
            iterations,
            kkt_violation,
            upper_bound: c,
            free_support_vectors: free,
            degenerate,
        },
    })
}
