//! Goodness-of-fit helpers used by the oracle suite and the comparisons.

use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square of observed counts against expected counts.
///
/// Adjacent bins are pooled until every pooled bin expects at least
/// `min_expected` counts. Degrees of freedom are pooled bins minus one.
pub fn chi_square(observed: &[u64], expected: &[f64], min_expected: f64) -> ChiSquareTest {
    assert_eq!(observed.len(), expected.len());
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &ex) in observed.iter().zip(expected) {
        o += ob as f64;
        e += ex;
        if e >= min_expected {
            pooled.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => pooled.push((o, e)),
        }
    }
    let statistic: f64 = pooled.iter().filter(|p| p.1 > 0.0).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = pooled.len().saturating_sub(1).max(1);
    let p_value = ChiSquared::new(dof as f64).map(|d| d.sf(statistic)).unwrap_or(f64::NAN);
    ChiSquareTest {
        statistic,
        dof,
        p_value,
    }
}

/// Histogram of `samples` on equal-width bins over [lo, hi); samples
/// outside are dropped.
pub fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    let w = (hi - lo) / bins as f64;
    for &x in samples {
        if x >= lo && x < hi {
            counts[(((x - lo) / w) as usize).min(bins - 1)] += 1;
        }
    }
    counts
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `samples` and `cdf`. Sorts `samples` in place.
pub fn ks_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Half-width of the k-sigma Poisson band around an expected count. Bins
/// expecting less than one count use the width of a one-count bin.
pub fn poisson_band(expected: f64, k: f64) -> f64 {
    k * expected.max(1.0).sqrt()
}

/// Fraction of bins whose observed count lies inside the k-sigma band.
pub fn fraction_within_band(observed: &[u64], expected: &[f64], k: f64) -> f64 {
    if observed.is_empty() {
        return 1.0;
    }
    let inside = observed
        .iter()
        .zip(expected)
        .filter(|(&o, &e)| (o as f64 - e).abs() <= poisson_band(e, k))
        .count();
    inside as f64 / observed.len() as f64
}

/// Trapezoidal rule on a uniform grid.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|k| f(a + k as f64 * h)).sum();
    h * (inner + 0.5 * (f(a) + f(b)))
}

/// Mean of `f` over [a, b] by the composite Gauss-Legendre rule with
/// `panels` three-point panels.
pub fn interval_mean(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
    const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            sum += w * f(mid + 0.5 * h * x);
        }
    }
    sum / (2.0 * panels as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_of_exact_counts() {
        let t = chi_square(&[10, 20, 30], &[10.0, 20.0, 30.0], 5.0);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.dof, 2);
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_matches_table() {
        // χ² = 3.84 with one degree of freedom is the 5% point.
        let t = chi_square(&[60, 40], &[50.0, 50.0], 5.0);
        assert!((t.statistic - 4.0).abs() < 1e-12);
        assert!((t.p_value - 0.0455).abs() < 1e-3);
    }

    #[test]
    fn small_bins_are_pooled() {
        let t = chi_square(&[1, 1, 1, 10], &[1.0, 1.0, 1.0, 10.0], 5.0);
        assert_eq!(t.dof, 1);
    }

    #[test]
    fn ks_of_uniform_grid() {
        let mut xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_distance(&mut xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.0005).abs() < 1e-12);
    }

    #[test]
    fn interval_mean_is_exact_for_quintics() {
        let m = interval_mean(|x| x.powi(5) - 2.0 * x * x, 0.0, 2.0, 1);
        assert!((m - (64.0 / 6.0 - 16.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_band_floor() {
        assert_eq!(poisson_band(0.2, 3.0), 3.0);
        assert_eq!(poisson_band(100.0, 3.0), 30.0);
        assert_eq!(fraction_within_band(&[0, 5, 100], &[0.5, 20.0, 100.0], 3.0), 2.0 / 3.0);
    }
}
