/// Thomas algorithm for a diagonally dominant tridiagonal system.
///
/// `lower[i]` multiplies x[i-1] in row i and `upper[i]` multiplies x[i+1];
/// `lower[0]` and `upper[n-1]` are ignored. The solution overwrites `rhs`,
/// `scratch` must have the same length.
pub fn solve_in_place(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    debug_assert!(diag.len() == n && lower.len() == n && upper.len() == n && scratch.len() == n);
    if n == 0 {
        return;
    }
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        scratch[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * scratch[i];
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn residual_is_small(n in 1usize..60, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let lower: Vec<f64> = (0..n).map(|_| -rng.random::<f64>()).collect();
            let upper: Vec<f64> = (0..n).map(|_| -rng.random::<f64>()).collect();
            let diag: Vec<f64> = (0..n).map(|i| 2.5 + rng.random::<f64>() + lower[i].abs()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut x = b.clone();
            let mut scratch = vec![0.0; n];
            solve_in_place(&lower, &diag, &upper, &mut x, &mut scratch);
            for i in 0..n {
                let mut r = diag[i] * x[i] - b[i];
                if i > 0 { r += lower[i] * x[i - 1]; }
                if i + 1 < n { r += upper[i] * x[i + 1]; }
                prop_assert!(r.abs() < 1e-12);
            }
        }
    }
}
