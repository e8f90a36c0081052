//! Bandwidth heuristics for kernels and kernel density estimates.

use super::ParticleSet;
use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Lower bound applied to every bandwidth returned from a degenerate set.
pub const BANDWIDTH_FLOOR: f64 = 1e-6;

/// Median heuristic: `h = med^2 / ln(n + 1)` over pairwise Euclidean distances.
pub fn median_bandwidth(ps: &ParticleSet) -> f64 {
    let n = ps.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = ps.row(i).iter().zip(ps.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return BANDWIDTH_FLOOR;
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let med = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    let h = med * med / ((n + 1) as f64).ln();
    if h > BANDWIDTH_FLOOR {
        h
    } else {
        BANDWIDTH_FLOOR
    }
}

fn rule_of_thumb(ps: &ParticleSet, factor: f64) -> Result<Vec<f64>> {
    if ps.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "bandwidth rule needs at least 2 samples, got {}",
            ps.len()
        )));
    }
    Ok(ps
        .variance()
        .iter()
        .map(|v| (v.sqrt() * factor).max(BANDWIDTH_FLOOR))
        .collect())
}

/// Multivariate Silverman rule, one standard deviation per dimension:
/// `sigma_d = std_d * (4 / ((p + 2) n))^(1 / (p + 4))`.
pub fn silverman_bandwidth(ps: &ParticleSet) -> Result<Vec<f64>> {
    let (n, p) = (ps.len() as f64, ps.dim() as f64);
    rule_of_thumb(ps, (4.0 / ((p + 2.0) * n)).powf(1.0 / (p + 4.0)))
}

/// Scott's rule: `sigma_d = std_d * n^(-1 / (p + 4))`.
pub fn scott_bandwidth(ps: &ParticleSet) -> Result<Vec<f64>> {
    let (n, p) = (ps.len() as f64, ps.dim() as f64);
    rule_of_thumb(ps, n.powf(-1.0 / (p + 4.0)))
}

fn silverman_1d(samples: &[f64]) -> f64 {
    match ParticleSet::new(samples.len(), 1, samples.to_vec()) {
        Ok(ps) if ps.len() >= 2 => silverman_bandwidth(&ps).map(|s| s[0]).unwrap_or(BANDWIDTH_FLOOR),
        _ => BANDWIDTH_FLOOR,
    }
}

const ISJ_GRID: usize = 1 << 12;
const ISJ_MIN_DISTINCT: usize = 8;

/// Improved Sheather-Jones bandwidth (Botev's diffusion fixed point) for 1-D
/// samples, returned as a Gaussian standard deviation.
///
/// Falls back to Silverman's rule when there are fewer than 8 distinct values
/// or the fixed-point equation has no root in `(0, 0.1]`.
pub fn isj_bandwidth(samples: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let distinct = sorted.len();
    if distinct < ISJ_MIN_DISTINCT {
        log::debug!("ISJ: only {distinct} distinct values, using Silverman");
        return silverman_1d(samples);
    }

    let (min, max) = (sorted[0], sorted[distinct - 1]);
    let span = max - min;
    let lo = min - span / 10.0;
    let range = span * 1.2;

    let mut hist = vec![0.0; ISJ_GRID];
    for &x in samples {
        let bin = (((x - lo) / range) * ISJ_GRID as f64).floor() as usize;
        hist[bin.min(ISJ_GRID - 1)] += 1.0;
    }
    let total: f64 = hist.iter().sum();

    // Squared DCT-II coefficients (divided by two) of the binned density.
    // The histogram is often sparse, so only non-empty bins are visited.
    let occupied: Vec<(usize, f64)> = hist
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0.0)
        .map(|(j, c)| (j, c / total))
        .collect();
    let scale = PI / (2.0 * ISJ_GRID as f64);
    let coeffs: Vec<(f64, f64)> = (1..ISJ_GRID)
        .map(|k| {
            let a: f64 = occupied
                .iter()
                .map(|&(j, w)| w * (scale * (k * (2 * j + 1)) as f64).cos())
                .sum();
            ((k * k) as f64, a * a)
        })
        .collect();

    let n = distinct as f64;
    let fixed_point = |t: f64| -> f64 {
        let functional = |s: i32, time: f64| -> f64 {
            2.0 * PI.powi(2 * s)
                * coeffs
                    .iter()
                    .map(|&(i, a2)| i.powi(s) * a2 * (-i * PI * PI * time).exp())
                    .sum::<f64>()
        };
        let l = 7;
        let mut f = functional(l, t);
        for s in (2..l).rev() {
            let k0 = (1..2 * s).step_by(2).map(|v| v as f64).product::<f64>() / (2.0 * PI).sqrt();
            let c = (1.0 + 0.5f64.powf(s as f64 + 0.5)) / 3.0;
            let time = (2.0 * c * k0 / n / f).powf(2.0 / (3.0 + 2.0 * s as f64));
            f = functional(s, time);
        }
        t - (2.0 * n * PI.sqrt() * f).powf(-0.4)
    };

    let (mut a, mut b) = (0.0, 0.1);
    let (fa, fb) = (fixed_point(a), fixed_point(b));
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        log::debug!("ISJ: fixed point not bracketed, using Silverman");
        return silverman_1d(samples);
    }
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        let fm = fixed_point(mid);
        if !fm.is_finite() {
            return silverman_1d(samples);
        }
        if fm.signum() == fa.signum() {
            a = mid;
        } else {
            b = mid;
        }
    }
    let sigma = (0.5 * (a + b)).sqrt() * range;
    sigma.max(BANDWIDTH_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = StreamKey::from_seed(seed).rng();
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn brute_median(points: &[Vec<f64>]) -> f64 {
        let mut d = vec![];
        for (i, a) in points.iter().enumerate() {
            for b in &points[i + 1..] {
                d.push(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt());
            }
        }
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = d.len();
        if m % 2 == 1 {
            d[m / 2]
        } else {
            (d[m / 2 - 1] + d[m / 2]) / 2.0
        }
    }

    #[test]
    fn median_degenerate_floor() {
        let ps = ParticleSet::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(median_bandwidth(&ps), BANDWIDTH_FLOOR);
    }

    #[test]
    fn median_three_points() {
        let ps = ParticleSet::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert!((median_bandwidth(&ps) - 1.0 / 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn median_matches_brute_force() {
        let z = normals(5, 100);
        let pts: Vec<Vec<f64>> = z.chunks(2).map(|c| c.to_vec()).collect();
        let ps = ParticleSet::from_rows(&pts).unwrap();
        let med = brute_median(&pts);
        let expected = med * med / 51f64.ln();
        assert!((median_bandwidth(&ps) - expected).abs() / expected < 0.2);
    }

    #[test]
    fn silverman_formula() {
        // standardize 100 samples to unit sample std
        let mut z = normals(1, 100);
        let mean = z.iter().sum::<f64>() / 100.0;
        let sd = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
        z.iter_mut().for_each(|x| *x = (*x - mean) / sd);
        let ps = ParticleSet::new(100, 1, z).unwrap();
        let sigma = silverman_bandwidth(&ps).unwrap()[0];
        assert!((sigma - (4.0f64 / 300.0).powf(0.2)).abs() < 1e-12);
        assert!((sigma - 0.4217).abs() < 1e-4);
    }

    #[test]
    fn silverman_degenerate_and_scaling() {
        let flat = ParticleSet::new(4, 1, vec![2.0; 4]).unwrap();
        assert_eq!(silverman_bandwidth(&flat).unwrap(), vec![BANDWIDTH_FLOOR]);

        let z = normals(2, 30);
        let a = silverman_bandwidth(&ParticleSet::new(30, 1, z.clone()).unwrap()).unwrap()[0];
        let doubled: Vec<f64> = z.iter().map(|x| 2.0 * x).collect();
        let b = silverman_bandwidth(&ParticleSet::new(30, 1, doubled).unwrap()).unwrap()[0];
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn silverman_needs_two_samples() {
        let one = ParticleSet::new(1, 1, vec![0.0]).unwrap();
        assert!(matches!(silverman_bandwidth(&one), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn scott_formula() {
        let ps = ParticleSet::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((scott_bandwidth(&ps).unwrap()[0] - sd * 4f64.powf(-0.2)).abs() < 1e-14);
    }

    #[test]
    fn isj_close_to_silverman_on_gaussian() {
        let z = normals(9, 5000);
        let isj = isj_bandwidth(&z);
        let silver = silverman_1d(&z);
        assert!((isj - silver).abs() / silver < 0.3, "isj {isj} silverman {silver}");
    }

    #[test]
    fn isj_constant_falls_back_to_floor() {
        assert_eq!(isj_bandwidth(&[1.5; 20]), BANDWIDTH_FLOOR);
    }

    #[test]
    fn isj_scale_equivariant() {
        let z = normals(4, 400);
        let a = isj_bandwidth(&z);
        let scaled: Vec<f64> = z.iter().map(|x| 2.5 * x).collect();
        let b = isj_bandwidth(&scaled);
        assert!((b - 2.5 * a).abs() / (2.5 * a) < 1e-6);
    }
}
