use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Volume of the closed Euclidean ball of radius `r` in dimension `dim`.
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    // V_d = 2π/d · V_{d-2}, V_0 = 1, V_1 = 2
    let mut unit = if dim % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if dim % 2 == 0 { 2 } else { 3 };
    while k <= dim {
        unit *= 2.0 * PI / k as f64;
        k += 2;
    }
    unit * r.powi(dim as i32)
}

/// Axis-aligned closed window `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Window {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "window corners must share a dimension");
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l).max(0.0)).product()
    }
}

/// Simulation box `Λ = [0, n_1 δ] × … × [0, n_d δ]`, a finite union of
/// δ-grid cells.
///
/// Cell `k` along an axis is `(kδ, (k+1)δ]`. Points on the outer face `x = 0`
/// are put in cell 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimBox {
    delta: f64,
    cells: Vec<usize>,
}

impl SimBox {
    pub fn new(delta: f64, cells: Vec<usize>) -> Self {
        assert!(delta > 0.0 && delta.is_finite(), "cell side must be positive");
        assert!(!cells.is_empty(), "box needs at least one axis");
        Self { delta, cells }
    }

    pub fn cubic(dim: usize, cells_per_axis: usize, delta: f64) -> Self {
        Self::new(delta, vec![cells_per_axis; dim])
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.cells[axis] as f64 * self.delta
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.side(k)).product()
    }

    pub fn window(&self) -> Window {
        Window::new(vec![0.0; self.dim()], (0..self.dim()).map(|k| self.side(k)).collect())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .enumerate()
                .all(|(k, &v)| v >= 0.0 && v <= self.side(k))
    }

    /// `dist(x, Λ^c)` for a point inside the box.
    pub fn dist_to_complement(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(k, &v)| v.min(self.side(k) - v))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    fn axis_cell(&self, axis: usize, v: f64) -> usize {
        let k = (v / self.delta).ceil() as i64 - 1;
        k.clamp(0, self.cells[axis] as i64 - 1) as usize
    }

    /// Linear index of the cell containing `x` (last axis fastest).
    pub fn cell_of(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for (k, &v) in x.iter().enumerate() {
            idx = idx * self.cells[k] + self.axis_cell(k, v);
        }
        idx
    }

    pub fn cell_coords(&self, mut idx: usize) -> Vec<usize> {
        let mut coords = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            coords[k] = idx % self.cells[k];
            idx /= self.cells[k];
        }
        coords
    }

    pub fn cell_index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.cells)
            .fold(0, |acc, (&c, &n)| acc * n + c)
    }

    pub fn cell_window(&self, idx: usize) -> Window {
        let c = self.cell_coords(idx);
        Window::new(
            c.iter().map(|&k| k as f64 * self.delta).collect(),
            c.iter().map(|&k| (k + 1) as f64 * self.delta).collect(),
        )
    }

    /// True when every point of the cell is at distance more than `r` from
    /// the complement of the box.
    pub fn cell_is_interior(&self, idx: usize, r: f64) -> bool {
        let w = self.cell_window(idx);
        (0..self.dim()).all(|k| w.lo[k] >= r && self.side(k) - w.hi[k] > r)
    }

    /// Face-adjacent cells with a larger linear index.
    pub fn forward_neighbors(&self, idx: usize) -> Vec<usize> {
        let c = self.cell_coords(idx);
        let mut out = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            if c[k] + 1 < self.cells[k] {
                let mut n = c.clone();
                n[k] += 1;
                out.push(self.cell_index(&n));
            }
        }
        out
    }
}
