//! Uniform cell list over a simulation box.
//!
//! Cells have side at least `cutoff`, so every neighbour within `cutoff` of a
//! point lies in the 3^d block of cells around it. Supports insertion,
//! removal and relabelling so MCMC moves stay O(1) amortized.

use super::geometry::SimBox;

const MAX_CELLS: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct NeighborGrid {
    cutoff: f64,
    dims: Vec<usize>,
    width: Vec<f64>,
    cells: Vec<Vec<u32>>,
    /// (cell, slot within cell) per point index
    loc: Vec<(u32, u32)>,
}

impl NeighborGrid {
    pub fn new(bx: &SimBox, cutoff: f64) -> Self {
        let d = bx.dim();
        let per_axis_cap = (MAX_CELLS as f64).powf(1.0 / d as f64).floor().max(1.0) as usize;
        let dims: Vec<usize> = (0..d)
            .map(|k| {
                if cutoff > 0.0 {
                    ((bx.side(k) / cutoff).floor() as usize).clamp(1, per_axis_cap)
                } else {
                    per_axis_cap.min(64)
                }
            })
            .collect();
        let width = (0..d).map(|k| bx.side(k) / dims[k] as f64).collect();
        let n: usize = dims.iter().product();
        Self {
            cutoff,
            dims,
            width,
            cells: vec![Vec::new(); n],
            loc: Vec::new(),
        }
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.loc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loc.is_empty()
    }

    fn axis(&self, k: usize, v: f64) -> usize {
        ((v / self.width[k]).floor().max(0.0) as usize).min(self.dims[k] - 1)
    }

    fn cell_of(&self, x: &[f64]) -> usize {
        x.iter()
            .enumerate()
            .fold(0, |acc, (k, &v)| acc * self.dims[k] + self.axis(k, v))
    }

    /// Appends point index `len()` at position `x`.
    pub fn push(&mut self, x: &[f64]) {
        let c = self.cell_of(x);
        let slot = self.cells[c].len();
        self.cells[c].push(self.loc.len() as u32);
        self.loc.push((c as u32, slot as u32));
    }

    fn detach(&mut self, i: usize) {
        let (c, slot) = self.loc[i];
        let cell = &mut self.cells[c as usize];
        cell.swap_remove(slot as usize);
        if let Some(&moved) = cell.get(slot as usize) {
            self.loc[moved as usize].1 = slot;
        }
    }

    /// Mirrors `Vec::swap_remove(i)` on the point list.
    pub fn swap_remove(&mut self, i: usize) {
        self.detach(i);
        let last = self.loc.len() - 1;
        if i != last {
            let (c, slot) = self.loc[last];
            self.cells[c as usize][slot as usize] = i as u32;
            self.loc[i] = (c, slot);
        }
        self.loc.pop();
    }

    /// Point `i` moved to `x`.
    pub fn relocate(&mut self, i: usize, x: &[f64]) {
        let c = self.cell_of(x);
        if c == self.loc[i].0 as usize {
            return;
        }
        self.detach(i);
        let slot = self.cells[c].len();
        self.cells[c].push(i as u32);
        self.loc[i] = (c as u32, slot as u32);
    }

    /// Calls `f(j)` for every stored index in the 3^d block of cells around
    /// `x`. Candidates only; callers filter by distance.
    pub fn for_each_candidate(&self, x: &[f64], mut f: impl FnMut(usize)) {
        let d = self.dims.len();
        let centre: Vec<usize> = (0..d).map(|k| self.axis(k, x[k])).collect();
        let lo: Vec<usize> = centre.iter().map(|&c| c.saturating_sub(1)).collect();
        let hi: Vec<usize> = (0..d).map(|k| (centre[k] + 1).min(self.dims[k] - 1)).collect();
        let mut cur = lo.clone();
        loop {
            let idx = cur
                .iter()
                .enumerate()
                .fold(0, |acc, (k, &c)| acc * self.dims[k] + c);
            for &j in &self.cells[idx] {
                f(j as usize);
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if cur[k] < hi[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = lo[k];
            }
        }
    }
}
