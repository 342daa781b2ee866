//! Tensor Gauss–Hermite integration over the bivariate normal covariates.

use super::DgpOracle;

/// Nodes and weights for `int f(t) exp(-t^2) dt`, by Newton iteration on
/// the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

/// `E[f(X)]` for `X ~ N(mean, I_2)` on an `n x n` grid.
pub fn expect_bivariate_normal(mean: [f64; 2], n: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    let (t, w) = gauss_hermite(n);
    let s = std::f64::consts::SQRT_2;
    let mut total = 0.0;
    for (ti, wi) in t.iter().zip(&w) {
        for (tj, wj) in t.iter().zip(&w) {
            total += wi * wj * f(&[mean[0] + s * ti, mean[1] + s * tj]);
        }
    }
    total / std::f64::consts::PI
}

/// Population worst-case welfare of a treat-probability rule.
pub fn worst_welfare(oracle: &DgpOracle, nodes: usize, treat: impl Fn(&[f64]) -> f64) -> f64 {
    expect_bivariate_normal(oracle.config().mu_x, nodes, |x| {
        let b = oracle.bounds_at(x);
        let p = treat(x);
        p * b.mu_lo[1] + (1.0 - p) * b.mu_lo[0]
    })
}

/// Population worst-case improvement over never-treat.
pub fn worst_improvement(oracle: &DgpOracle, nodes: usize, treat: impl Fn(&[f64]) -> f64) -> f64 {
    expect_bivariate_normal(oracle.config().mu_x, nodes, |x| treat(x) * oracle.bounds_at(x).tau_lo())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        let (t, w) = gauss_hermite(64);
        let sp = std::f64::consts::PI.sqrt();
        assert!((w.iter().sum::<f64>() - sp).abs() < 1e-12);
        let m2: f64 = t.iter().zip(&w).map(|(t, w)| w * t * t).sum();
        assert!((m2 - sp / 2.0).abs() < 1e-12);
        let m4: f64 = t.iter().zip(&w).map(|(t, w)| w * t.powi(4)).sum();
        assert!((m4 - 3.0 * sp / 4.0).abs() < 1e-11);
    }

    #[test]
    fn bivariate_normal_moments() {
        let m = [-1.0, 1.0];
        assert!((expect_bivariate_normal(m, 64, |x| x[0]) + 1.0).abs() < 1e-12);
        assert!((expect_bivariate_normal(m, 64, |x| x[1] * x[1]) - 2.0).abs() < 1e-11);
        // E[cos X1] = cos(-1) exp(-1/2)
        let want = (-1.0f64).cos() * (-0.5f64).exp();
        assert!((expect_bivariate_normal(m, 64, |x| x[0].cos()) - want).abs() < 1e-12);
    }
}
