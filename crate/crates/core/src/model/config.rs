use std::io::{Read, Write};

use super::geometry::SimBox;
use super::grid::NeighborGrid;
use super::params::Color;

#[derive(Debug, thiserror::Error)]
pub enum ConfigIoError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
}

/// Finite point configuration inside a box, with an optional neighbour grid
/// kept in sync with every edit.
#[derive(Debug, Clone)]
pub struct PointConfig {
    bx: SimBox,
    coords: Vec<f64>,
    grid: Option<NeighborGrid>,
}

impl PartialEq for PointConfig {
    fn eq(&self, other: &Self) -> bool {
        self.bx == other.bx && self.coords == other.coords
    }
}

impl PointConfig {
    pub fn empty(bx: SimBox) -> Self {
        Self {
            bx,
            coords: Vec::new(),
            grid: None,
        }
    }

    /// Panics if a point lies outside the box.
    pub fn from_points(bx: SimBox, points: &[Vec<f64>]) -> Self {
        let mut c = Self::empty(bx);
        for p in points {
            c.push(p);
        }
        c
    }

    pub fn sim_box(&self) -> &SimBox {
        &self.bx
    }

    pub fn dim(&self) -> usize {
        self.bx.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim())
    }

    pub fn push(&mut self, x: &[f64]) {
        assert!(self.bx.contains(x), "point {x:?} outside the box");
        self.coords.extend_from_slice(x);
        if let Some(g) = &mut self.grid {
            g.push(x);
        }
    }

    /// Removes point `i`; the last point takes its index.
    pub fn swap_remove(&mut self, i: usize) {
        let d = self.dim();
        let n = self.len();
        assert!(i < n);
        if i != n - 1 {
            let (head, tail) = self.coords.split_at_mut((n - 1) * d);
            head[i * d..(i + 1) * d].copy_from_slice(tail);
        }
        self.coords.truncate((n - 1) * d);
        if let Some(g) = &mut self.grid {
            g.swap_remove(i);
        }
    }

    pub fn set_point(&mut self, i: usize, x: &[f64]) {
        assert!(self.bx.contains(x), "point {x:?} outside the box");
        let d = self.dim();
        self.coords[i * d..(i + 1) * d].copy_from_slice(x);
        if let Some(g) = &mut self.grid {
            g.relocate(i, x);
        }
    }

    /// Builds (or rebuilds) the neighbour grid for queries up to `cutoff`.
    pub fn ensure_index(&mut self, cutoff: f64) {
        if self.grid.as_ref().is_some_and(|g| g.cutoff() >= cutoff) {
            return;
        }
        let mut g = NeighborGrid::new(&self.bx, cutoff);
        for p in self.coords.chunks_exact(self.bx.dim()) {
            g.push(p);
        }
        self.grid = Some(g);
    }

    pub fn index(&self) -> Option<&NeighborGrid> {
        self.grid.as_ref()
    }

    pub fn dist2(&self, i: usize, x: &[f64]) -> f64 {
        self.point(i)
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Calls `f(j, |x_j - x|²)` for every point with `|x_j - x| ≤ r`.
    /// Uses the grid when it covers `r`, otherwise a linear scan.
    pub fn for_each_within(&self, x: &[f64], r: f64, mut f: impl FnMut(usize, f64)) {
        let r2 = r * r;
        match &self.grid {
            Some(g) if g.cutoff() >= r => g.for_each_candidate(x, |j| {
                let d2 = self.dist2(j, x);
                if d2 <= r2 {
                    f(j, d2)
                }
            }),
            _ => {
                for j in 0..self.len() {
                    let d2 = self.dist2(j, x);
                    if d2 <= r2 {
                        f(j, d2)
                    }
                }
            }
        }
    }

    /// All unordered pairs `(i, j, |x_i - x_j|²)` with `i < j` and distance
    /// at most `r`, sorted by `(i, j)`.
    pub fn pairs_within(&self, r: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        let mut row = Vec::new();
        for i in 0..self.len() {
            row.clear();
            self.for_each_within(self.point(i), r, |j, d2| {
                if j > i {
                    row.push((j, d2));
                }
            });
            row.sort_unstable_by_key(|p| p.0);
            out.extend(row.iter().map(|&(j, d2)| (i, j, d2)));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W, colors: Option<&[Color]>) -> Result<(), ConfigIoError> {
        let mut wr = csv::Writer::from_writer(w);
        let d = self.dim();
        let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        header.push("color".into());
        wr.write_record(&header)?;
        for (i, p) in self.points().enumerate() {
            let mut rec: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            rec.push(colors.map_or(String::new(), |c| c[i].to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads `x1..xd,color`; the colour column may be empty or absent.
    pub fn read_csv<R: Read>(
        bx: SimBox,
        r: R,
    ) -> Result<(PointConfig, Option<Vec<Color>>), ConfigIoError> {
        let d = bx.dim();
        let mut rd = csv::Reader::from_reader(r);
        let mut cfg = PointConfig::empty(bx);
        let mut colors = Vec::new();
        let mut all_colored = true;
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let bad = |msg: String| ConfigIoError::Row { row: row + 1, msg };
            if rec.len() < d {
                return Err(bad(format!("expected {d} coordinates")));
            }
            let x: Vec<f64> = (0..d)
                .map(|k| rec[k].trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(e.to_string()))?;
            if !cfg.bx.contains(&x) {
                return Err(bad(format!("point {x:?} outside the box")));
            }
            cfg.push(&x);
            match rec.get(d).map(str::trim).filter(|s| !s.is_empty()) {
                Some(s) => {
                    let label: usize = s.parse().map_err(|_| bad(format!("bad colour {s}")))?;
                    colors.push(Color::from_label(label).ok_or_else(|| bad("colour 0".into()))?);
                }
                None => all_colored = false,
            }
        }
        Ok((cfg, (all_colored && !colors.is_empty()).then_some(colors)))
    }
}

/// Point configuration with a colour per point.
#[derive(Debug, Clone, PartialEq)]
pub struct ColoredConfig {
    pub points: PointConfig,
    pub colors: Vec<Color>,
}

impl ColoredConfig {
    pub fn new(points: PointConfig, colors: Vec<Color>) -> Self {
        assert_eq!(points.len(), colors.len(), "one colour per point");
        Self { points, colors }
    }

    pub fn empty(bx: SimBox) -> Self {
        Self::new(PointConfig::empty(bx), Vec::new())
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn push(&mut self, x: &[f64], c: Color) {
        self.points.push(x);
        self.colors.push(c);
    }

    pub fn swap_remove(&mut self, i: usize) {
        self.points.swap_remove(i);
        self.colors.swap_remove(i);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ConfigIoError> {
        self.points.write_csv(w, Some(&self.colors))
    }
}
