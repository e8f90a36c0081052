//! Stein variational gradient descent.
//!
//! Particles are transported along the kernelized Stein direction
//!
//! ```text
//! phi*(x_i) = 1/n * sum_j [ k(x_j, x_i) * score(x_j) + grad_{x_j} k(x_j, x_i) ]
//! ```
//!
//! with fixed-step updates `x_i <- x_i + eps * phi*(x_i)`. The first term
//! drives particles toward high density, the second keeps them apart.

mod bandwidth;
mod kernel;
mod particles;

pub use bandwidth::{
    isj_bandwidth, median_bandwidth, scott_bandwidth, silverman_bandwidth, BANDWIDTH_FLOOR,
};
pub use kernel::{rbf_kernel, Bandwidth, BandwidthRule, KernelSpec};
pub use particles::ParticleSet;

use crate::error::{Error, Result};

/// Step size and iteration count for a run of SVGD updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvgdConfig {
    pub step_size: f64,
    pub num_steps: usize,
}

impl SvgdConfig {
    pub fn new(step_size: f64, num_steps: usize) -> Result<Self> {
        let cfg = Self {
            step_size,
            num_steps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive and finite, got {}",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// Stein velocity field for every particle, row-major `n x dim`.
pub fn phi_star(ps: &ParticleSet, scores: &[f64], kernel: &KernelSpec) -> Result<Vec<f64>> {
    let bandwidth = kernel.resolve(ps)?;
    phi_star_with(ps, scores, &bandwidth)
}

/// [`phi_star`] with an already resolved bandwidth.
pub fn phi_star_with(ps: &ParticleSet, scores: &[f64], bandwidth: &Bandwidth) -> Result<Vec<f64>> {
    let (n, dim) = (ps.len(), ps.dim());
    if scores.len() != n * dim {
        return Err(Error::InvalidArgument(format!(
            "score matrix has {} entries, expected {n}x{dim}",
            scores.len()
        )));
    }
    bandwidth.check_dim(dim)?;
    if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NumericalFailure {
            index: pos / dim,
            detail: "non-finite score".into(),
        });
    }

    // Kernel matrix is symmetric; k[j * n + i] = k(x_j, x_i).
    let mut kmat = vec![0.0; n * n];
    for i in 0..n {
        kmat[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let v = bandwidth.eval(ps.row(i), ps.row(j));
            kmat[i * n + j] = v;
            kmat[j * n + i] = v;
        }
    }

    let inv_n = 1.0 / n as f64;
    let mut out = vec![0.0; n * dim];
    for i in 0..n {
        let xi = ps.row(i);
        let acc = &mut out[i * dim..(i + 1) * dim];
        for j in 0..n {
            let k = kmat[j * n + i];
            let xj = ps.row(j);
            let sj = &scores[j * dim..(j + 1) * dim];
            for d in 0..dim {
                // grad_{x_j} k(x_j, x_i) = -2 (x_j - x_i) / h_d * k
                let repulse = -2.0 * (xj[d] - xi[d]) / bandwidth.at(d) * k;
                acc[d] += k * sj[d] + repulse;
            }
        }
        for a in acc.iter_mut() {
            *a *= inv_n;
        }
    }
    Ok(out)
}

/// Runs `cfg.num_steps` SVGD updates. Scores and rule-based bandwidths are
/// re-evaluated on every iteration. `score_fn` maps the current particles to
/// a row-major `n x dim` score matrix.
pub fn svgd_step<F>(
    ps: &ParticleSet,
    mut score_fn: F,
    kernel: &KernelSpec,
    cfg: &SvgdConfig,
) -> Result<ParticleSet>
where
    F: FnMut(&ParticleSet) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let mut current = ps.clone();
    for _ in 0..cfg.num_steps {
        let scores = score_fn(&current)?;
        let phi = phi_star(&current, &scores, kernel)?;
        let mut next = current.as_slice().to_vec();
        for (x, v) in next.iter_mut().zip(&phi) {
            *x += cfg.step_size * v;
        }
        if let Some(pos) = next.iter().position(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure {
                index: pos / current.dim(),
                detail: "particle left the finite domain".into(),
            });
        }
        current = ParticleSet::new(current.len(), current.dim(), next)?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_score<'a>(mean: &'a [f64], var: &'a [f64]) -> impl Fn(&ParticleSet) -> Result<Vec<f64>> + 'a {
        move |ps: &ParticleSet| {
            let mut out = Vec::with_capacity(ps.len() * ps.dim());
            for row in ps.rows() {
                for d in 0..ps.dim() {
                    out.push((mean[d] - row[d]) / var[d]);
                }
            }
            Ok(out)
        }
    }

    // Naive double sum, written independently of the kernel-matrix path.
    fn naive_phi(ps: &ParticleSet, scores: &[f64], h: f64) -> Vec<f64> {
        let (n, p) = (ps.len(), ps.dim());
        let mut out = vec![0.0; n * p];
        for i in 0..n {
            for j in 0..n {
                let xi = ps.row(i);
                let xj = ps.row(j);
                let d2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
                let k = (-d2 / h).exp();
                for d in 0..p {
                    out[i * p + d] += (k * scores[j * p + d] - 2.0 / h * (xj[d] - xi[d]) * k) / n as f64;
                }
            }
        }
        out
    }

    #[test]
    fn single_particle_phi_is_score() {
        let ps = ParticleSet::from_rows(&[vec![0.3, -1.2]]).unwrap();
        let scores = vec![1.5, -0.25];
        for kernel in [KernelSpec::fixed(0.7), KernelSpec::rule(BandwidthRule::Median)] {
            let phi = phi_star(&ps, &scores, &kernel).unwrap();
            assert_eq!(phi, scores);
        }
    }

    #[test]
    fn coincident_particles_get_plain_score() {
        let ps = ParticleSet::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let scores = vec![0.5, 0.1, 0.5, 0.1];
        let phi = phi_star(&ps, &scores, &KernelSpec::fixed(1.0)).unwrap();
        for (a, b) in phi.iter().zip(&scores) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_naive_double_loop() {
        let mut rng = StreamKey::from_seed(3).rng();
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..2).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let ps = ParticleSet::from_rows(&rows).unwrap();
        let scores = gaussian_score(&[0.5, -0.5], &[1.0, 2.0])(&ps).unwrap();
        let h = 0.8;
        let phi = phi_star(&ps, &scores, &KernelSpec::fixed(h)).unwrap();
        let oracle = naive_phi(&ps, &scores, h);
        for (a, b) in phi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn permutation_equivariance() {
        let rows = vec![vec![0.0, 1.0], vec![0.5, -0.3], vec![2.0, 0.2]];
        let ps = ParticleSet::from_rows(&rows).unwrap();
        let scores = vec![1.0, 0.0, -0.5, 0.3, 0.2, 0.2];
        let kernel = KernelSpec::fixed(1.3);
        let phi = phi_star(&ps, &scores, &kernel).unwrap();

        let perm = [2usize, 0, 1];
        let prow: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let pscores: Vec<f64> = perm.iter().flat_map(|&i| scores[i * 2..i * 2 + 2].to_vec()).collect();
        let pphi = phi_star(&ParticleSet::from_rows(&prow).unwrap(), &pscores, &kernel).unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for d in 0..2 {
                assert!((pphi[new_i * 2 + d] - phi[old_i * 2 + d]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_steps_is_identity() {
        let ps = ParticleSet::from_rows(&[vec![0.1], vec![0.7]]).unwrap();
        let cfg = SvgdConfig::new(0.3, 0).unwrap();
        let out = svgd_step(&ps, gaussian_score(&[0.0], &[1.0]), &KernelSpec::rule(BandwidthRule::Median), &cfg)
            .unwrap();
        assert_eq!(out, ps);
    }

    #[test]
    fn single_particle_gradient_ascent() {
        let ps = ParticleSet::from_rows(&[vec![3.0, -4.0]]).unwrap();
        let mu = [1.0, 2.0];
        let cfg = SvgdConfig::new(0.1, 200).unwrap();
        let out = svgd_step(&ps, gaussian_score(&mu, &[1.0, 1.0]), &KernelSpec::rule(BandwidthRule::Median), &cfg)
            .unwrap();
        let dist: f64 = out.row(0).iter().zip(&mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        // (1 - 0.1)^200 * |x0 - mu| ~ 5e-9
        assert!(dist < 1e-3);
    }

    #[test]
    fn non_finite_score_names_particle() {
        let ps = ParticleSet::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let cfg = SvgdConfig::new(0.1, 3).unwrap();
        let err = svgd_step(
            &ps,
            |_: &ParticleSet| Ok(vec![0.0, f64::NAN, 0.0]),
            &KernelSpec::fixed(1.0),
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NumericalFailure { index: 1, .. }));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let ps = ParticleSet::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            phi_star(&ps, &[1.0], &KernelSpec::fixed(1.0)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn invalid_step_size_rejected() {
        assert!(SvgdConfig::new(0.0, 1).is_err());
        assert!(SvgdConfig::new(f64::NAN, 1).is_err());
    }
}
