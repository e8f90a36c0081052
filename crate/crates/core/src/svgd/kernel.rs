use super::bandwidth::{isj_bandwidth, median_bandwidth, scott_bandwidth, silverman_bandwidth};
use super::ParticleSet;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Data-driven bandwidth selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Median,
    Silverman,
    Scott,
    #[serde(alias = "isj")]
    ImprovedSheatherJones,
}

/// RBF kernel `k(x, y) = exp(-sum_d (x_d - y_d)^2 / h_d)` with either a
/// constant squared length-scale or a rule resolved against the particles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSpec {
    Fixed(f64),
    Rule(BandwidthRule),
}

impl KernelSpec {
    pub fn fixed(h: f64) -> Self {
        KernelSpec::Fixed(h)
    }

    pub fn rule(rule: BandwidthRule) -> Self {
        KernelSpec::Rule(rule)
    }

    /// Rules that return a per-dimension standard deviation `sigma_d` map to
    /// `h_d = 2 sigma_d^2`, so the kernel is a Gaussian with that deviation.
    pub fn resolve(&self, ps: &ParticleSet) -> Result<Bandwidth> {
        let bw = match self {
            KernelSpec::Fixed(h) => Bandwidth::Isotropic(*h),
            KernelSpec::Rule(BandwidthRule::Median) => Bandwidth::Isotropic(median_bandwidth(ps)),
            KernelSpec::Rule(rule) => {
                let sigma = match rule {
                    // Silverman and Scott need two particles; one particle
                    // has no pairwise term, so any width is equivalent.
                    _ if ps.len() < 2 => vec![1.0; ps.dim()],
                    BandwidthRule::Silverman => silverman_bandwidth(ps)?,
                    BandwidthRule::Scott => scott_bandwidth(ps)?,
                    _ => (0..ps.dim()).map(|d| isj_bandwidth(&ps.column(d))).collect(),
                };
                Bandwidth::Diagonal(sigma.iter().map(|s| 2.0 * s * s).collect())
            }
        };
        bw.validate()?;
        Ok(bw)
    }
}

/// A resolved bandwidth: squared length-scales, shared or per dimension.
#[derive(Clone, Debug, PartialEq)]
pub enum Bandwidth {
    Isotropic(f64),
    Diagonal(Vec<f64>),
}

impl Bandwidth {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Bandwidth::Isotropic(h) => h.is_finite() && *h > 0.0,
            Bandwidth::Diagonal(h) => h.iter().all(|v| v.is_finite() && *v > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bandwidth must be positive and finite: {self:?}")))
        }
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            Bandwidth::Diagonal(h) if h.len() != dim => Err(Error::InvalidArgument(format!(
                "bandwidth has {} entries for {dim} dimensions",
                h.len()
            ))),
            _ => self.validate(),
        }
    }

    #[inline]
    pub(crate) fn at(&self, d: usize) -> f64 {
        match self {
            Bandwidth::Isotropic(h) => *h,
            Bandwidth::Diagonal(h) => h[d],
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut e = 0.0;
        for d in 0..x.len() {
            let diff = x[d] - y[d];
            e += diff * diff / self.at(d);
        }
        (-e).exp()
    }
}

/// RBF kernel value and its gradient with respect to `x`.
pub fn rbf_kernel(x: &[f64], y: &[f64], h: f64) -> Result<(f64, Vec<f64>)> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "kernel arguments differ in dimension: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite kernel argument".into()));
    }
    let value = Bandwidth::Isotropic(h).eval(x, y);
    let grad = x.iter().zip(y).map(|(a, b)| -2.0 / h * (a - b) * value).collect();
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use rand::Rng;

    #[test]
    fn zero_distance() {
        let (v, g) = rbf_kernel(&[0.4, -2.0], &[0.4, -2.0], 0.3).unwrap();
        assert_eq!(v, 1.0);
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn unit_offset() {
        let (v, g) = rbf_kernel(&[0.0], &[1.0], 1.0).unwrap();
        let e = (-1.0f64).exp();
        assert!((v - e).abs() < 1e-15);
        assert!((g[0] - 2.0 * e).abs() < 1e-15);
        // central differences of the closed form
        let f = |x: f64| (-(x - 1.0) * (x - 1.0)).exp();
        let fd = (f(1e-6) - f(-1e-6)) / 2e-6;
        assert!((fd - g[0]).abs() < 1e-8);
    }

    #[test]
    fn symmetric() {
        let mut rng = StreamKey::from_seed(11).rng();
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let h = rng.gen_range(0.1..5.0);
            assert_eq!(rbf_kernel(&x, &y, h).unwrap().0, rbf_kernel(&y, &x, h).unwrap().0);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(rbf_kernel(&[0.0], &[1.0], 0.0).is_err());
        assert!(rbf_kernel(&[0.0], &[1.0], -1.0).is_err());
        assert!(rbf_kernel(&[f64::NAN], &[1.0], 1.0).is_err());
        assert!(rbf_kernel(&[0.0, 1.0], &[1.0], 1.0).is_err());
    }

    #[test]
    fn silverman_resolves_to_gaussian_width() {
        let ps = ParticleSet::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![4.0]]).unwrap();
        let sigma = silverman_bandwidth(&ps).unwrap()[0];
        match KernelSpec::rule(BandwidthRule::Silverman).resolve(&ps).unwrap() {
            Bandwidth::Diagonal(h) => assert!((h[0] - 2.0 * sigma * sigma).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }
}
