//! Symmetric positive-definite solves in skyline (variable-band) storage.
//!
//! Only the lower triangle is stored; row `r` holds columns
//! `first[r] ..= r`. Cholesky fill-in stays inside this envelope, so banded
//! spline problems with a few dense trailing rows (extrinsics, time offset)
//! factor in roughly `O(n · band²)`.

#[derive(Debug, Clone)]
pub struct SkylineMatrix {
    first: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl SkylineMatrix {
    /// Zero matrix with the given per-row first nonzero column.
    pub fn new(first: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(first.len() + 1);
        let mut total = 0;
        for (r, &f) in first.iter().enumerate() {
            assert!(f <= r, "row {r} envelope starts after the diagonal");
            offsets.push(total);
            total += r - f + 1;
        }
        offsets.push(total);
        Self {
            first,
            offsets,
            values: vec![0.0; total],
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn stored_entries(&self) -> usize {
        self.values.len()
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn index(&self, r: usize, c: usize) -> usize {
        debug_assert!(c <= r && c >= self.first[r]);
        self.offsets[r] + c - self.first[r]
    }

    /// Adds `v` at `(r, c)`, `c ≤ r`.
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let i = self.index(r, c);
        self.values[i] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if c > r { (c, r) } else { (r, c) };
        if c < self.first[r] {
            0.0
        } else {
            self.values[self.index(r, c)]
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|r| self.values[self.index(r, r)]).collect()
    }

    pub fn add_diagonal(&mut self, d: &[f64]) {
        for (r, v) in d.iter().enumerate() {
            let i = self.index(r, r);
            self.values[i] += v;
        }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.values[self.offsets[r]..self.offsets[r + 1]]
    }

    /// In-place Cholesky `A = L Lᵀ`. Returns `None` if a pivot is not
    /// strictly positive.
    pub fn cholesky(mut self) -> Option<SkylineCholesky> {
        let n = self.dim();
        for r in 0..n {
            let fr = self.first[r];
            for c in fr..=r {
                let fc = self.first[c];
                let k0 = fr.max(fc);
                let mut s = self.values[self.offsets[r] + c - fr];
                if k0 < c {
                    let lr = &self.values[self.offsets[r] + k0 - fr..self.offsets[r] + c - fr];
                    let lc = &self.values[self.offsets[c] + k0 - fc..self.offsets[c] + c - fc];
                    s -= lr.iter().zip(lc).map(|(a, b)| a * b).sum::<f64>();
                }
                let idx = self.offsets[r] + c - fr;
                if c < r {
                    let d = self.values[self.offsets[c + 1] - 1];
                    self.values[idx] = s / d;
                } else {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    self.values[idx] = s.sqrt();
                }
            }
        }
        Some(SkylineCholesky { l: self })
    }
}

#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    l: SkylineMatrix,
}

impl SkylineCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.dim();
        let mut x = b.to_vec();
        for r in 0..n {
            let row = self.l.row(r);
            let f = self.l.first[r];
            let s: f64 = row[..row.len() - 1].iter().zip(&x[f..r]).map(|(a, b)| a * b).sum();
            x[r] = (x[r] - s) / row[row.len() - 1];
        }
        for r in (0..n).rev() {
            let row = self.l.row(r);
            let f = self.l.first[r];
            x[r] /= row[row.len() - 1];
            let xr = x[r];
            for (k, l) in row[..row.len() - 1].iter().enumerate() {
                x[f + k] -= l * xr;
            }
        }
        x
    }

    /// Squared ratio of the largest to smallest Cholesky pivot, a cheap
    /// lower bound on the condition number.
    pub fn condition_estimate(&self) -> f64 {
        let d = self.l.diagonal();
        let max = d.iter().cloned().fold(0.0, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        (max / min).powi(2)
    }
}
