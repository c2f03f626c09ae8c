use nalgebra::DMatrix;

/// Eigenvalues below this fraction of the largest are treated as zero when inverting.
const RELATIVE_FLOOR: f64 = 1e-12;

/// Square root of a symmetric positive semi-definite matrix; negative eigenvalues from
/// rounding are clipped to zero.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Pseudo-inverse of a symmetric PSD matrix via its eigendecomposition.
fn pinv_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let floor = top * RELATIVE_FLOOR;
    let d = eig.eigenvalues.map(|l| if l > floor && l > 0.0 { 1.0 / l } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Squared 2-Wasserstein distance between `N(μ_z, Σ_z)` and `N(μ_r, Σ_r)`, with its gradient
/// with respect to `μ_z` and `Σ_z`.
///
/// `W² = ‖μ_z − μ_r‖² + tr(Σ_z + Σ_r − 2 (A Σ_z A)^{1/2})` with `A = Σ_r^{1/2}`; the
/// covariance gradient is `I − A S⁺ A` with `S = (A Σ_z A)^{1/2}`.
pub fn gaussian_w2(
    mu_z: &[f64],
    cov_z: &DMatrix<f64>,
    mu_r: &[f64],
    cov_r: &DMatrix<f64>,
) -> (f64, Vec<f64>, DMatrix<f64>) {
    let c = mu_z.len();
    let d_mu: Vec<f64> = mu_z.iter().zip(mu_r).map(|(a, b)| 2.0 * (a - b)).collect();
    let mean_term: f64 = mu_z.iter().zip(mu_r).map(|(a, b)| (a - b) * (a - b)).sum();
    let a = sqrtm_psd(cov_r);
    let mut inner = &a * cov_z * &a;
    inner = (&inner + inner.transpose()) * 0.5;
    let s = sqrtm_psd(&inner);
    let value = mean_term + cov_z.trace() + cov_r.trace() - 2.0 * s.trace();
    let mut d_cov = DMatrix::identity(c, c) - &a * pinv_psd(&s) * &a;
    d_cov = (&d_cov + d_cov.transpose()) * 0.5;
    (value.max(0.0), d_mu, d_cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(seed: u64, c: usize) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(c, c, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(c, c) * 0.1
    }

    #[test]
    fn univariate_closed_form() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let (w, _, _) = gaussian_w2(&[0.0], &one, &[3.0], &one);
        assert!((w - 9.0).abs() < 1e-12);
        // (σ1 − σ2)² for scalars
        let (w, _, _) = gaussian_w2(&[0.0], &DMatrix::from_element(1, 1, 4.0), &[0.0], &one);
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_is_zero_with_zero_gradient() {
        let s = spd(1, 5);
        let mu = [0.1, -0.2, 0.3, 0.0, 1.0];
        let (w, dm, dc) = gaussian_w2(&mu, &s, &mu, &s);
        assert!(w.abs() < 1e-10);
        assert!(dm.iter().all(|v| v.abs() < 1e-12));
        assert!(dc.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn commuting_case() {
        // diagonal covariances: Σ (√a − √b)²
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0, 9.0]));
        let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0, 9.0]));
        let (w, _, _) = gaussian_w2(&[0.0; 3], &a, &[0.0; 3], &b);
        assert!((w - 2.0).abs() < 1e-10);
    }

    #[test]
    fn covariance_gradient_matches_differences() {
        let (z, r) = (spd(2, 4), spd(3, 4));
        let mu = [0.0; 4];
        let (_, _, g) = gaussian_w2(&mu, &z, &mu, &r);
        let h = 1e-6;
        for (i, j) in [(0, 0), (1, 2), (3, 1), (2, 2)] {
            let mut e = DMatrix::zeros(4, 4);
            e[(i, j)] += 0.5;
            e[(j, i)] += 0.5;
            let f = |s: f64| gaussian_w2(&mu, &(&z + &e * s), &mu, &r).0;
            let fd = (f(h) - f(-h)) / (2.0 * h);
            let an = (&g.component_mul(&e)).sum();
            assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0), "{i},{j}: {fd} vs {an}");
        }
    }
}
