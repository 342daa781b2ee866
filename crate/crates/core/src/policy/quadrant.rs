//! Quadrant rules `1{s1 (x_i - t1) > 0, s2 (x_j - t2) > 0}` and their
//! exact maximizer.
//!
//! For a fixed sign pattern, flipping coordinates by their signs turns the
//! region into an upper-right quadrant `{u > a, v > b}`. Sweeping `a` from
//! the top activates points one at a time; a segment tree over the sorted
//! distinct `v` values maintains the best suffix, so each pattern costs
//! `O(n log n)`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{check_index, maybe_inf};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadrantPolicy {
    pub i: usize,
    pub j: usize,
    pub s1: i8,
    pub s2: i8,
    #[serde(with = "maybe_inf")]
    pub t1: f64,
    #[serde(with = "maybe_inf")]
    pub t2: f64,
}

impl QuadrantPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.i == self.j {
            return Err(Error::NeedTwoFeatures);
        }
        if ![self.s1, self.s2].iter().all(|s| *s == 1 || *s == -1) {
            return Err(Error::BadConfig("quadrant signs must be +1 or -1".into()));
        }
        if self.t1.is_nan() || self.t2.is_nan() {
            return Err(Error::BadConfig("quadrant thresholds must not be NaN".into()));
        }
        Ok(())
    }

    pub fn treats(&self, x: &[f64]) -> Result<bool> {
        check_index(x, self.i)?;
        check_index(x, self.j)?;
        Ok(f64::from(self.s1) * (x[self.i] - self.t1) > 0.0 && f64::from(self.s2) * (x[self.j] - self.t2) > 0.0)
    }

    /// The rule treating nobody that sorts first among all such rules.
    pub fn empty(i: usize, j: usize) -> Self {
        Self { i, j, s1: -1, s2: -1, t1: f64::NEG_INFINITY, t2: f64::NEG_INFINITY }
    }
}

/// Candidate thresholds on one feature: `-inf`, midpoints of consecutive
/// distinct values, `+inf`.
pub fn candidate_thresholds(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let mut out = Vec::with_capacity(v.len() + 1);
    out.push(f64::NEG_INFINITY);
    out.extend(v.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(f64::INFINITY);
    out
}

/// Objective, treated count and the rule; ordering is "better first".
#[derive(Debug, Clone)]
pub(crate) struct Scored {
    pub sum: f64,
    pub count: usize,
    pub rule: QuadrantPolicy,
}

/// Greater is better: higher sum, fewer treated, then lexicographically
/// smaller `(s1, s2, t1, t2)`.
pub(crate) fn compare(a: &Scored, b: &Scored) -> Ordering {
    a.sum
        .total_cmp(&b.sum)
        .then(b.count.cmp(&a.count))
        .then(b.rule.s1.cmp(&a.rule.s1))
        .then(b.rule.s2.cmp(&a.rule.s2))
        .then(b.rule.t1.total_cmp(&a.rule.t1))
        .then(b.rule.t2.total_cmp(&a.rule.t2))
}

#[derive(Clone, Copy)]
struct Suffix {
    sum: f64,
    count: usize,
    pos: usize,
}

#[derive(Clone, Copy)]
struct SegNode {
    sum: f64,
    count: usize,
    best: Suffix,
}

struct SuffixTree {
    size: usize,
    nodes: Vec<SegNode>,
    prefer_low_pos: bool,
}

impl SuffixTree {
    fn new(len: usize, prefer_low_pos: bool) -> Self {
        let size = len.next_power_of_two();
        let mut t = Self {
            size,
            nodes: vec![SegNode { sum: 0.0, count: 0, best: Suffix { sum: 0.0, count: 0, pos: 0 } }; 2 * size],
            prefer_low_pos,
        };
        for p in 0..size {
            t.nodes[size + p].best.pos = p;
        }
        for v in (1..size).rev() {
            t.nodes[v] = t.combine(t.nodes[2 * v], t.nodes[2 * v + 1]);
        }
        t
    }

    fn better(&self, a: Suffix, b: Suffix) -> Suffix {
        let ord = a.sum.total_cmp(&b.sum).then(b.count.cmp(&a.count)).then(if self.prefer_low_pos {
            b.pos.cmp(&a.pos)
        } else {
            a.pos.cmp(&b.pos)
        });
        if ord == Ordering::Less {
            b
        } else {
            a
        }
    }

    fn combine(&self, l: SegNode, r: SegNode) -> SegNode {
        let extended = Suffix { sum: l.best.sum + r.sum, count: l.best.count + r.count, pos: l.best.pos };
        SegNode { sum: l.sum + r.sum, count: l.count + r.count, best: self.better(r.best, extended) }
    }

    fn add(&mut self, pos: usize, g: f64) {
        let mut v = self.size + pos;
        self.nodes[v].sum += g;
        self.nodes[v].count += 1;
        self.nodes[v].best.sum = self.nodes[v].sum;
        self.nodes[v].best.count = self.nodes[v].count;
        v /= 2;
        while v >= 1 {
            self.nodes[v] = self.combine(self.nodes[2 * v], self.nodes[2 * v + 1]);
            v /= 2;
        }
    }
}

/// Exact maximizer of `sum_i gains_i * pi(x_i)` over quadrant rules on
/// features `(i, j)`.
pub fn quadrant_search(gains: &[f64], xs: &[Vec<f64>], i: usize, j: usize) -> Result<QuadrantPolicy> {
    Ok(quadrant_search_scored(gains, xs, i, j)?.rule)
}

pub(crate) fn quadrant_search_scored(gains: &[f64], xs: &[Vec<f64>], i: usize, j: usize) -> Result<Scored> {
    if i == j {
        return Err(Error::NeedTwoFeatures);
    }
    if gains.len() != xs.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: gains.len() });
    }
    for x in xs {
        check_index(x, i.max(j))?;
    }
    let n = xs.len();
    let mut best = Scored { sum: 0.0, count: 0, rule: QuadrantPolicy::empty(i, j) };
    for s1 in [-1i8, 1] {
        for s2 in [-1i8, 1] {
            let (f1, f2) = (f64::from(s1), f64::from(s2));
            let u: Vec<f64> = xs.iter().map(|x| f1 * x[i]).collect();
            let v: Vec<f64> = xs.iter().map(|x| f2 * x[j]).collect();
            let mut vs = v.clone();
            vs.sort_by(f64::total_cmp);
            vs.dedup();
            let len = vs.len();
            let vpos: Vec<usize> = v.iter().map(|val| vs.partition_point(|w| w < val)).collect();
            // With s2 = +1 a smaller v-threshold means a smaller t2; with
            // s2 = -1 the order flips.
            let mut tree = SuffixTree::new(len + 1, s2 == 1);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| u[b].total_cmp(&u[a]).then(a.cmp(&b)));
            let mut k = 0;
            while k < n {
                let level = u[order[k]];
                while k < n && u[order[k]] == level {
                    tree.add(vpos[order[k]], gains[order[k]]);
                    k += 1;
                }
                let a = if k < n { 0.5 * (u[order[k]] + level) } else { f64::NEG_INFINITY };
                let root = tree.nodes[1].best;
                // leaf `len` is the padding slot standing for b = +inf (empty)
                let b = if root.pos == 0 {
                    f64::NEG_INFINITY
                } else if root.pos >= len {
                    f64::INFINITY
                } else {
                    0.5 * (vs[root.pos - 1] + vs[root.pos])
                };
                let cand = Scored {
                    sum: root.sum,
                    count: root.count,
                    rule: QuadrantPolicy { i, j, s1, s2, t1: f1 * a, t2: f2 * b },
                };
                if compare(&cand, &best) == Ordering::Greater {
                    best = cand;
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::folds::rng_from_seed;
    use rand::Rng;

    pub(crate) fn brute_force(gains: &[f64], xs: &[Vec<f64>], i: usize, j: usize) -> Scored {
        let c1 = candidate_thresholds(xs.iter().map(|x| x[i]));
        let c2 = candidate_thresholds(xs.iter().map(|x| x[j]));
        let mut best = Scored { sum: 0.0, count: 0, rule: QuadrantPolicy::empty(i, j) };
        for s1 in [-1i8, 1] {
            for s2 in [-1i8, 1] {
                for &t1 in &c1 {
                    for &t2 in &c2 {
                        let rule = QuadrantPolicy { i, j, s1, s2, t1, t2 };
                        let (mut sum, mut count) = (0.0, 0);
                        for (g, x) in gains.iter().zip(xs) {
                            if rule.treats(x).unwrap() {
                                sum += g;
                                count += 1;
                            }
                        }
                        let cand = Scored { sum, count, rule };
                        if compare(&cand, &best) == Ordering::Greater {
                            best = cand;
                        }
                    }
                }
            }
        }
        best
    }

    fn instance(n: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut rng = rng_from_seed(seed);
        // dyadic values keep every partial sum exact
        let g = (0..n).map(|_| f64::from(rng.random_range(-16i32..16)) / 8.0).collect();
        let xs = (0..n)
            .map(|_| vec![f64::from(rng.random_range(0..8)), f64::from(rng.random_range(-5..5)) / 2.0])
            .collect();
        (g, xs)
    }

    #[test]
    fn sign_cases() {
        let xs: Vec<Vec<f64>> = (0..6).map(|k| vec![k as f64, (k * 7 % 5) as f64]).collect();
        let none = quadrant_search(&[-1.0; 6], &xs, 0, 1).unwrap();
        assert_eq!(none, QuadrantPolicy::empty(0, 1));
        let all = quadrant_search(&[1.0; 6], &xs, 0, 1).unwrap();
        assert!(xs.iter().all(|x| all.treats(x).unwrap()));
        assert!(matches!(quadrant_search(&[1.0; 6], &xs, 1, 1), Err(Error::NeedTwoFeatures)));
    }

    #[test]
    fn matches_brute_force() {
        for seed in 0..40 {
            let (g, xs) = instance(20, seed);
            let fast = quadrant_search_scored(&g, &xs, 0, 1).unwrap();
            let slow = brute_force(&g, &xs, 0, 1);
            assert_eq!(fast.sum, slow.sum, "seed {seed}");
            assert_eq!(fast.count, slow.count, "seed {seed}");
            assert_eq!(fast.rule, slow.rule, "seed {seed}");
        }
    }

    #[test]
    fn shift_invariance() {
        // adding c to both arms leaves every gain unchanged
        let (g, xs) = instance(30, 77);
        let a = quadrant_search(&g, &xs, 1, 0).unwrap();
        let shifted: Vec<f64> = g.iter().map(|v| (v + 3.0) - 3.0).collect();
        assert_eq!(a, quadrant_search(&shifted, &xs, 1, 0).unwrap());
    }
}
