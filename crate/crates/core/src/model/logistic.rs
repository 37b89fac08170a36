//! L2-regularized logistic regression fitted by damped Newton steps with
//! Armijo backtracking, falling back to the gradient direction when the
//! Newton system is singular.

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    /// L2 penalty on the weights (not the bias). `None` means `1 / n`.
    #[serde(default)]
    pub l2: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tolerance() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    10_000
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            l2: None,
            tolerance: default_tolerance(),
            max_iter: default_max_iter(),
        }
    }
}

impl TrainerConfig {
    pub fn penalty(&self, n: usize) -> f64 {
        self.l2.unwrap_or(1.0 / n.max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
    pub loss: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn linear(row: &[f64], w: &[f64], b: f64) -> f64 {
    row.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() + b
}

/// Mean binary cross-entropy plus `l2/2 * |w|^2`.
pub fn loss(x: &[Vec<f64>], y: &[bool], w: &[f64], b: f64, l2: f64) -> f64 {
    let n = x.len() as f64;
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let z = linear(row, w, b);
            softplus(z) - if yi { z } else { 0.0 }
        })
        .sum();
    data / n + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Loss with its gradient: `(loss, d/dw, d/db)`.
pub fn loss_and_gradient(
    x: &[Vec<f64>],
    y: &[bool],
    w: &[f64],
    b: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let r = sigmoid(linear(row, w, b)) - if yi { 1.0 } else { 0.0 };
        for (g, xi) in gw.iter_mut().zip(row) {
            *g += r * xi;
        }
        gb += r;
    }
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wi;
    }
    (loss(x, y, w, b, l2), gw, gb / n)
}

fn hessian(x: &[Vec<f64>], w: &[f64], b: f64, l2: f64) -> Vec<Vec<f64>> {
    let p = w.len() + 1;
    let n = x.len() as f64;
    let mut h = vec![vec![0.0; p]; p];
    let mut ext = vec![0.0; p];
    for row in x {
        let s = sigmoid(linear(row, w, b));
        let c = s * (1.0 - s);
        ext[..p - 1].copy_from_slice(row);
        ext[p - 1] = 1.0;
        for i in 0..p {
            for j in 0..=i {
                h[i][j] += c * ext[i] * ext[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..=i {
            h[i][j] /= n;
            h[j][i] = h[i][j];
        }
    }
    for (i, row) in h.iter_mut().enumerate().take(p - 1) {
        row[i] += l2;
    }
    h
}

/// Gaussian elimination with partial pivoting; `None` if (near) singular.
fn solve(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut out = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * out[c]).sum();
        out[r] = (rhs[r] - s) / a[r][r];
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Fit weights and bias from zero initialization.
pub fn fit_logistic(
    x: &[Vec<f64>],
    y: &[bool],
    config: &TrainerConfig,
) -> Result<LogisticFit, ModelError> {
    if x.is_empty() || x.len() != y.len() {
        return Err(ModelError::Shape(format!(
            "{} rows for {} labels",
            x.len(),
            y.len()
        )));
    }
    let p = x[0].len();
    if let Some(bad) = x.iter().position(|r| r.len() != p) {
        return Err(ModelError::Shape(format!("row {bad} has inconsistent width")));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("feature matrix contains non-finite values".into()));
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == y.len() {
        return Err(ModelError::SingleClass);
    }
    let l2 = config.penalty(x.len());
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    let (mut f, mut gw, mut gb) = loss_and_gradient(x, y, &w, b, l2);
    loop {
        if !f.is_finite() {
            return Err(ModelError::NonFinite(format!(
                "loss became {f} at iteration {iterations} (w={w:?}, b={b})"
            )));
        }
        let gnorm = gw.iter().chain(std::iter::once(&gb)).fold(0.0f64, |m, g| m.max(g.abs()));
        if gnorm < config.tolerance {
            converged = true;
            break;
        }
        if iterations >= config.max_iter {
            break;
        }
        iterations += 1;

        let mut g = gw.clone();
        g.push(gb);
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut dir = solve(hessian(x, &w, b, l2), neg_g.clone()).unwrap_or_else(|| neg_g.clone());
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        if !(slope < 0.0) {
            dir = neg_g;
            slope = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        }

        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-20 {
            let w_new: Vec<f64> = w.iter().zip(&dir).map(|(wi, d)| wi + t * d).collect();
            let b_new = b + t * dir[p];
            let f_new = loss(x, y, &w_new, b_new, l2);
            if f_new < f && f_new <= f + 1e-4 * t * slope {
                accepted = Some((w_new, b_new));
                break;
            }
            t *= 0.5;
        }
        let (w_new, b_new) = match accepted {
            Some(step) => step,
            None => {
                // Near the optimum loss differences fall below rounding; take
                // the full step if it still shrinks the gradient.
                let w_full: Vec<f64> = w.iter().zip(&dir).map(|(wi, d)| wi + d).collect();
                let b_full = b + dir[p];
                let (f_full, gw_full, gb_full) = loss_and_gradient(x, y, &w_full, b_full, l2);
                let g_full = gw_full.iter().chain(std::iter::once(&gb_full)).fold(0.0f64, |m, g| m.max(g.abs()));
                if !(f_full <= f + 8.0 * f64::EPSILON * f.abs() && g_full < gnorm) {
                    break;
                }
                (w_full, b_full)
            }
        };
        w = w_new;
        b = b_new;
        (f, gw, gb) = loss_and_gradient(x, y, &w, b, l2);
    }
    let grad_inf_norm = gw.iter().chain(std::iter::once(&gb)).fold(0.0f64, |m, g| m.max(g.abs()));
    Ok(LogisticFit {
        weights: w,
        bias: b,
        l2,
        loss: f,
        grad_inf_norm,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_one_dimensional() {
        let x: Vec<Vec<f64>> = [-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0]
            .iter()
            .map(|&v| vec![v])
            .collect();
        let y = [false, false, false, false, true, true, true, true];
        let fit = fit_logistic(&x, &y, &TrainerConfig { l2: Some(1e-3), ..Default::default() }).unwrap();
        assert!(fit.converged);
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(r, &yi)| (sigmoid(linear(r, &fit.weights, fit.bias)) > 0.5) == yi)
            .count();
        assert_eq!(correct, x.len());
        assert!(fit.weights[0] > 0.0);
    }

    #[test]
    fn zero_features_balanced_labels() {
        let x = vec![vec![0.0, 0.0]; 6];
        let y = [true, false, true, false, true, false];
        let fit = fit_logistic(&x, &y, &TrainerConfig { l2: Some(0.0), ..Default::default() }).unwrap();
        assert_eq!(fit.weights, vec![0.0, 0.0]);
        assert_eq!(fit.bias, 0.0);
        assert_eq!(sigmoid(fit.bias), 0.5);
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![1.0]; 3];
        assert!(matches!(
            fit_logistic(&x, &[true, true, true], &TrainerConfig::default()),
            Err(ModelError::SingleClass)
        ));
    }

    #[test]
    fn non_finite_input_rejected() {
        let x = vec![vec![f64::NAN], vec![1.0]];
        assert!(matches!(
            fit_logistic(&x, &[true, false], &TrainerConfig::default()),
            Err(ModelError::NonFinite(_))
        ));
    }

    #[test]
    fn sigmoid_is_stable_and_monotone() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        let mut prev = 0.0;
        for b in -20..=20 {
            let s = sigmoid(b as f64);
            assert!(s > prev);
            prev = s;
        }
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn solver_handles_singular_system() {
        assert!(solve(vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![1.0, 1.0]).is_none());
        let s = solve(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((s[0] - 0.8).abs() < 1e-12 && (s[1] - 1.4).abs() < 1e-12);
    }
}
