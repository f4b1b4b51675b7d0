//! Row-major covariate/response containers.

use crate::error::{domain, Result};

/// One labeled subset of a dataset: `n` rows of `dim` covariates and their
/// responses, stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Split {
    pub fn new(dim: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != dim * y.len() {
            return Err(domain(format!(
                "covariate buffer has {} entries, expected {} x {}",
                x.len(),
                y.len(),
                dim
            )));
        }
        Ok(Self { dim, x, y })
    }

    /// Build from explicit rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != y.len() {
            return Err(domain(format!("{} rows but {} responses", rows.len(), y.len())));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(domain("covariate rows have unequal lengths"));
        }
        Self::new(dim, rows.concat(), y)
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, x: Vec::new(), y: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn y_mut(&mut self) -> &mut [f64] {
        &mut self.y
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(move |i| (self.row(i), self.y[i]))
    }

    pub fn push(&mut self, row: &[f64], y: f64) {
        assert_eq!(row.len(), self.dim, "row length must match the split dimension");
        self.x.extend_from_slice(row);
        self.y.push(y);
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = Self::empty(self.dim);
        for &i in indices {
            out.push(self.row(i), self.y[i]);
        }
        out
    }

    /// Split into `[0, at)` and `[at, len)`.
    pub fn split_at(&self, at: usize) -> (Self, Self) {
        let at = at.min(self.len());
        let head: Vec<usize> = (0..at).collect();
        let tail: Vec<usize> = (at..self.len()).collect();
        (self.select(&head), self.select(&tail))
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }
}

/// Learning, calibration and test splits sharing one covariate dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub learn: Split,
    pub cal: Split,
    pub test: Split,
}

impl Dataset {
    pub fn new(learn: Split, cal: Split, test: Split) -> Result<Self> {
        if learn.dim() != cal.dim() || learn.dim() != test.dim() {
            return Err(domain("splits disagree on covariate dimension"));
        }
        Ok(Self { learn, cal, test })
    }

    pub fn dim(&self) -> usize {
        self.learn.dim()
    }
}
