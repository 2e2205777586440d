use nalgebra::DMatrix;

/// Frobenius budget a single recompression may spend.
const RECOMPRESS_BUDGET: f64 = 1e-12;
/// Columns are merged when doing so moves Z by at most this much.
const MERGE_TOL: f64 = 1e-13;
const DROP_WEIGHT: f64 = 1e-14;
/// `push` only looks this far back for a column to merge with.
const MERGE_WINDOW: usize = 16;

/// `Z = Σ_j w_j W_j W_jᵀ` with unit columns `W_j` and nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankPsd {
    dim: usize,
    columns: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl LowRankPsd {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            columns: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    /// tr(Z) = Σ_j w_j ‖W_j‖².
    pub fn trace(&self) -> f64 {
        self.columns
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * c.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    pub fn entry(&self, a: usize, b: usize) -> f64 {
        let (a, b) = (a.min(b), a.max(b));
        self.columns
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * c[a] * c[b])
            .sum()
    }

    /// Adds `weight · u uᵀ` for a unit vector `u`, merging into one of the
    /// last `MERGE_WINDOW` columns when the two rank-one terms agree to within
    /// `MERGE_TOL`.
    pub fn push(&mut self, weight: f64, u: Vec<f64>) {
        debug_assert_eq!(u.len(), self.dim);
        if weight <= 0.0 {
            return;
        }
        let start = self.columns.len().saturating_sub(MERGE_WINDOW);
        for (c, w) in self.columns[start..].iter().zip(self.weights[start..].iter_mut()).rev() {
            if weight * rank_one_distance(c, &u) <= MERGE_TOL {
                *w += weight;
                return;
            }
        }
        self.columns.push(u);
        self.weights.push(weight);
    }

    /// `Z ← (1−α) Z + α S` where `S = uuᵀ`, or `S = 0` when `u` is `None`.
    pub fn convex_step(&mut self, alpha: f64, u: Option<Vec<f64>>) {
        for w in &mut self.weights {
            *w *= 1.0 - alpha;
        }
        if let Some(u) = u {
            self.push(alpha, u);
        }
    }

    /// Drops negligible weights and merges near-parallel columns that lie
    /// within `MERGE_WINDOW` of each other. Returns the Frobenius-norm change
    /// bound actually spent.
    pub fn recompress(&mut self) -> f64 {
        let mut spent = 0.0;
        let mut keep_cols: Vec<Vec<f64>> = Vec::with_capacity(self.columns.len());
        let mut keep_w: Vec<f64> = Vec::with_capacity(self.columns.len());
        for (c, w) in self.columns.drain(..).zip(self.weights.drain(..)) {
            if w < DROP_WEIGHT && spent + w <= RECOMPRESS_BUDGET {
                spent += w;
                continue;
            }
            let mut merged = false;
            let start = keep_cols.len().saturating_sub(MERGE_WINDOW);
            for (kc, kw) in keep_cols[start..].iter().zip(keep_w[start..].iter_mut()).rev() {
                let dist = w * rank_one_distance(kc, &c);
                if dist <= MERGE_TOL && spent + dist <= RECOMPRESS_BUDGET {
                    *kw += w;
                    spent += dist;
                    merged = true;
                    break;
                }
            }
            if !merged {
                keep_cols.push(c);
                keep_w.push(w);
            }
        }
        self.columns = keep_cols;
        self.weights = keep_w;
        spent
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.dim, self.dim);
        for (c, w) in self.columns.iter().zip(&self.weights) {
            for j in 0..self.dim {
                let s = w * c[j];
                if s == 0.0 {
                    continue;
                }
                for i in j..self.dim {
                    z[(i, j)] += s * c[i];
                }
            }
        }
        for j in 0..self.dim {
            for i in j + 1..self.dim {
                z[(j, i)] = z[(i, j)];
            }
        }
        z
    }

    /// `√w_j · W_j` stacked as an N × t matrix.
    pub fn scaled_factor(&self) -> DMatrix<f64> {
        let t = self.columns.len();
        DMatrix::from_fn(self.dim, t, |i, j| self.weights[j].sqrt() * self.columns[j][i])
    }
}

/// Upper bound on ‖uuᵀ − vvᵀ‖_F for unit `u`, `v`.
fn rank_one_distance(u: &[f64], v: &[f64]) -> f64 {
    let (mut minus, mut plus) = (0.0, 0.0);
    for (x, y) in u.iter().zip(v) {
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    2.0 * minus.min(plus).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn convex_steps_stay_in_spectrahedron() {
        let mut z = LowRankPsd::zero(3);
        z.convex_step(1.0, Some(unit(&[1.0, 2.0, 3.0])));
        for t in 1..50 {
            let alpha = 2.0 / (2.0 + t as f64);
            let u = unit(&[(t as f64).sin(), (t as f64).cos(), 1.0]);
            z.convex_step(alpha, Some(u));
            assert!(z.trace() <= 1.0 + 1e-9);
            assert!(z.weights().iter().all(|&w| w >= 0.0));
        }
        z.convex_step(0.5, None);
        assert!(z.trace() <= 0.5 + 1e-9);
    }

    #[test]
    fn identical_directions_merge() {
        let mut z = LowRankPsd::zero(2);
        let u = unit(&[1.0, 1.0]);
        z.convex_step(1.0, Some(u.clone()));
        z.convex_step(0.5, Some(u.clone()));
        let flipped: Vec<f64> = u.iter().map(|x| -x).collect();
        z.convex_step(0.5, Some(flipped));
        assert_eq!(z.num_columns(), 1);
        assert!((z.trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn recompression_preserves_matrix() {
        let mut z = LowRankPsd::zero(3);
        z.columns = vec![unit(&[1., 0., 0.]), unit(&[1., 1e-16, 0.]), unit(&[0., 1., 1.])];
        z.weights = vec![0.3, 0.2, 1e-15];
        let before = z.to_dense();
        z.recompress();
        assert_eq!(z.num_columns(), 1);
        assert!((z.to_dense() - before).norm() <= 1e-12);
    }

    #[test]
    fn entries_match_dense() {
        let mut z = LowRankPsd::zero(4);
        z.push(0.25, unit(&[1., 2., 0., -1.]));
        z.push(0.5, unit(&[0., 1., 1., 1.]));
        let d = z.to_dense();
        for a in 0..4 {
            for b in 0..4 {
                assert!((z.entry(a, b) - d[(a, b)]).abs() < 1e-15);
            }
        }
        let f = z.scaled_factor();
        assert!((&f * f.transpose() - d).norm() < 1e-14);
    }
}
