use crate::dynamics::BoxDomain;
use crate::error::{Error, Result};

/// Regular cubic mesh of side `h` over a box. Cells are numbered with the
/// first axis varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    lo: Vec<f64>,
    hi: Vec<f64>,
    h: f64,
    counts: Vec<usize>,
    strides: Vec<usize>,
}

impl GridSpec {
    pub fn new(domain: &BoxDomain, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(crate::error::invalid(
                "h",
                format!("must be positive, got {h}"),
            ));
        }
        let mut counts = Vec::with_capacity(domain.dim());
        for k in 0..domain.dim() {
            let side = domain.hi()[k] - domain.lo()[k];
            let n = (side / h).round();
            if n < 1.0 || (n * h - side).abs() > 1e-9 {
                return Err(Error::IncommensurateMesh { h, side, axis: k });
            }
            counts.push(n as usize);
        }
        let mut strides = Vec::with_capacity(counts.len());
        let mut s = 1;
        for &n in &counts {
            strides.push(s);
            s *= n;
        }
        Ok(Self {
            lo: domain.lo().to_vec(),
            hi: domain.hi().to_vec(),
            h,
            counts,
            strides,
        })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn n_cells(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        self.counts
            .iter()
            .map(|&n| {
                let r = i % n;
                i /= n;
                r
            })
            .collect()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    /// Coordinate of the `j`-th cell face along axis `k` (`0..=counts[k]`).
    #[inline]
    pub fn face(&self, k: usize, j: usize) -> f64 {
        if j == self.counts[k] {
            self.hi[k]
        } else {
            self.lo[k] + (self.hi[k] - self.lo[k]) * j as f64 / self.counts[k] as f64
        }
    }

    pub fn center(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .enumerate()
            .map(|(k, &j)| 0.5 * (self.face(k, j) + self.face(k, j + 1)))
            .collect()
    }

    /// Cell index along one axis; a coordinate exactly on a face belongs to
    /// the lower cell.
    #[inline]
    pub fn axis_index(&self, k: usize, x: f64) -> usize {
        let n = self.counts[k];
        let t = (x - self.lo[k]) / self.h;
        let mut j = if t <= 0.0 { 0 } else { (t as usize).min(n - 1) };
        if j > 0 && x <= self.face(k, j) {
            j -= 1;
        } else if j + 1 < n && x > self.face(k, j + 1) {
            j += 1;
        }
        j
    }

    /// Cell containing `x` (caller guarantees `x` is in the box).
    #[inline]
    pub fn locate(&self, x: &[f64]) -> usize {
        let mut i = 0;
        for k in 0..self.dim() {
            i += self.axis_index(k, x[k]) * self.strides[k];
        }
        i
    }

    /// All `2^d` corners of cell `i`.
    pub fn corners(&self, i: usize) -> Vec<Vec<f64>> {
        let idx = self.multi_index(i);
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|k| self.face(k, idx[k] + ((mask >> k) & 1)))
                    .collect()
            })
            .collect()
    }
}
