//! k-nearest-neighbour regressors on standardized covariates.

/// What a neighbourhood is summarized into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KnnTarget {
    /// Mean of neighbour targets.
    Mean,
    /// `inf { q : F(q) >= level }` of neighbour targets.
    Quantile(f64),
}

#[derive(Debug, Clone)]
pub struct Knn {
    xs: Vec<Vec<f64>>,
    center: Vec<f64>,
    scale: Vec<f64>,
    targets: Vec<f64>,
    k: usize,
    target: KnnTarget,
}

/// Default neighbour count `ceil(n^0.6)`.
pub fn default_neighbors(n: usize) -> usize {
    ((n as f64).powf(0.6).ceil() as usize).clamp(1, n.max(1))
}

impl Knn {
    /// `k` is clamped to `[1, n]`; `None` uses [`default_neighbors`].
    pub fn fit(xs: &[Vec<f64>], targets: &[f64], k: Option<usize>, target: KnnTarget) -> Self {
        let n = xs.len();
        let d = xs.first().map_or(0, Vec::len);
        let mut center = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in 0..d {
            let mean = xs.iter().map(|x| x[j]).sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n as f64;
            center[j] = mean;
            if var > 0.0 {
                scale[j] = var.sqrt();
            }
        }
        let xs = xs
            .iter()
            .map(|x| x.iter().zip(&center).zip(&scale).map(|((v, c), s)| (v - c) / s).collect())
            .collect();
        let k = k.unwrap_or_else(|| default_neighbors(n)).clamp(1, n);
        Self { xs, center, scale, targets: targets.to_vec(), k, target }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Indices of the `k` nearest training points, ties broken by index.
    fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        let z: Vec<f64> =
            x.iter().zip(&self.center).zip(&self.scale).map(|((v, c), s)| (v - c) / s).collect();
        let mut dist: Vec<(f64, usize)> = self
            .xs
            .iter()
            .enumerate()
            .map(|(i, xi)| (xi.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
            dist.truncate(self.k);
        }
        dist.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let nb = self.neighbors(x);
        match self.target {
            KnnTarget::Mean => nb.iter().map(|&i| self.targets[i]).sum::<f64>() / nb.len() as f64,
            KnnTarget::Quantile(level) => {
                let mut v: Vec<f64> = nb.iter().map(|&i| self.targets[i]).collect();
                v.sort_by(f64::total_cmp);
                empirical_quantile_sorted(&v, level)
            }
        }
    }

    /// Frequencies of each label `0..m` among the neighbours; targets hold
    /// labels as floats.
    pub fn predict_frequencies(&self, x: &[f64], m: usize) -> Vec<f64> {
        let nb = self.neighbors(x);
        let mut f = vec![0.0; m];
        for &i in &nb {
            f[self.targets[i] as usize] += 1.0;
        }
        let k = nb.len() as f64;
        f.iter_mut().for_each(|v| *v /= k);
        f
    }
}

/// `inf { q : F(q) >= level }` on sorted data; the comparison is done on
/// counts with a small tolerance so that e.g. `level = 2/3` with three
/// points selects the second one.
pub fn empirical_quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let need = level * n as f64 - 1e-9;
    for (i, &v) in sorted.iter().enumerate() {
        if (i + 1) as f64 >= need {
            return v;
        }
    }
    sorted[n - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_by_hand() {
        assert_eq!(empirical_quantile_sorted(&[1.0, 2.0, 3.0], 2.0 / 3.0), 2.0);
        assert_eq!(empirical_quantile_sorted(&[1.0, 2.0, 3.0], 0.5), 2.0);
        assert_eq!(empirical_quantile_sorted(&[1.0, 2.0, 3.0], 1.0 / 3.0), 1.0);
        assert_eq!(empirical_quantile_sorted(&[1.0, 2.0, 3.0], 0.34), 2.0);
    }

    #[test]
    fn all_neighbors_is_global() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let ys: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let mean = Knn::fit(&xs, &ys, Some(10), KnnTarget::Mean);
        assert!((mean.predict(&[3.3, -1.0]) - 0.55).abs() < 1e-12);
        let q = Knn::fit(&xs, &ys, Some(10), KnnTarget::Quantile(0.25));
        assert_eq!(q.predict(&[100.0, 0.0]), 0.3);
    }

    #[test]
    fn nearest_one() {
        let xs = vec![vec![0.0], vec![1.0], vec![5.0]];
        let m = Knn::fit(&xs, &[10.0, 20.0, 30.0], Some(1), KnnTarget::Mean);
        assert_eq!(m.predict(&[4.0]), 30.0);
        assert_eq!(m.predict(&[0.4]), 10.0);
    }

    #[test]
    fn default_count() {
        assert_eq!(default_neighbors(1000), 64);
        assert_eq!(default_neighbors(1), 1);
    }
}
