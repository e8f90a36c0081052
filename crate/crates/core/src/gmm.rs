//! Diagonal-covariance Gaussian mixtures over flat points.

use std::f64::consts::PI;

/// Log-density of `sum_j w_j N(x; mu_j, diag(var))` and its gradient in `x`.
///
/// `log_weights` may be unnormalized; `None` means equal weights.
pub fn log_density_and_grad<'a, I>(centers: I, log_weights: Option<&[f64]>, var: &[f64], x: &[f64]) -> (f64, Vec<f64>)
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let dim = x.len();
    let log_norm: f64 = var.iter().map(|v| -0.5 * (2.0 * PI * v).ln()).sum();
    let centers: Vec<&[f64]> = centers.into_iter().collect();
    let n = centers.len();
    let terms: Vec<f64> = centers
        .iter()
        .enumerate()
        .map(|(j, mu)| {
            let mut e = 0.0;
            for d in 0..dim {
                let r = x[d] - mu[d];
                e += r * r / var[d];
            }
            let lw = match log_weights {
                Some(w) => w[j],
                None => 0.0,
            };
            lw - 0.5 * e
        })
        .collect();
    let weight_norm = match log_weights {
        Some(w) => log_sum_exp(w),
        None => (n as f64).ln(),
    };
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let resp: Vec<f64> = terms.iter().map(|t| (t - max).exp()).collect();
    let total: f64 = resp.iter().sum();
    let log_density = max + total.ln() - weight_norm + log_norm;
    let mut grad = vec![0.0; dim];
    for (r, mu) in resp.iter().zip(&centers) {
        let r = r / total;
        if r == 0.0 {
            continue;
        }
        for d in 0..dim {
            grad[d] += r * (mu[d] - x[d]) / var[d];
        }
    }
    (log_density, grad)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalized weights `exp(v_i) / sum_j exp(v_j)`.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(values);
    values.iter().map(|v| (v - lse).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_mixture_reduces_to_dominant_component() {
        let a = [0.0];
        let b = [10.0];
        let (ld, g) = log_density_and_grad([&a[..], &b[..]], Some(&[0.0, -1e9]), &[1.0], &[1.0]);
        assert!((ld - (-0.5 - 0.5 * (2.0 * PI).ln())).abs() < 1e-12);
        assert!((g[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[1001.0, 1002.0, 1003.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
