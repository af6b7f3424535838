//! Boolean feasibility grids over `(x, y, alpha)`, connected-component
//! labeling with periodic axes, and the grid dump format.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{Error, Result};

const MAGIC: &str = "FDGRID 1";

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityGrid {
    dims: [usize; 3],
    lo: [f64; 3],
    hi: [f64; 3],
    periodic: [bool; 3],
    cells: Vec<bool>,
}

/// Per-cell component ids; `None` for infeasible cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeLabels {
    pub count: usize,
    pub labels: Vec<Option<u32>>,
}

impl FeasibilityGrid {
    pub fn empty(dims: [usize; 3], axes: [(f64, f64, bool); 3]) -> Self {
        assert!(dims.iter().all(|d| *d >= 1), "grid dims must be >= 1");
        Self {
            dims,
            lo: axes.map(|a| a.0),
            hi: axes.map(|a| a.1),
            periodic: axes.map(|a| a.2),
            cells: vec![false; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        (self.lo, self.hi)
    }

    pub fn periodic(&self) -> [bool; 3] {
        self.periodic
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Row-major index, `alpha` fastest.
    pub fn index(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        let i = idx / (self.dims[1] * self.dims[2]);
        [i, j, k]
    }

    pub fn get(&self, c: [usize; 3]) -> bool {
        self.cells[self.index(c)]
    }

    pub fn set(&mut self, c: [usize; 3], v: bool) {
        let i = self.index(c);
        self.cells[i] = v;
    }

    pub fn fill(&mut self, v: bool) {
        self.cells.fill(v);
    }

    pub fn feasible_count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn feasible_fraction(&self) -> f64 {
        self.feasible_count() as f64 / self.cells.len() as f64
    }

    fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.dims[axis] as f64
    }

    pub fn cell_center(&self, c: [usize; 3]) -> [f64; 3] {
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = self.lo[a] + (c[a] as f64 + 0.5) * self.step(a);
        }
        p
    }

    /// Cell containing `p`; periodic axes wrap, others clamp to the edge.
    /// `None` if a non-periodic coordinate is outside the bounds.
    pub fn cell_of(&self, p: [f64; 3]) -> Option<[usize; 3]> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let t = (p[a] - self.lo[a]) / self.step(a);
            if self.periodic[a] {
                c[a] = (t.floor().rem_euclid(n as f64) as usize).min(n - 1);
            } else {
                if !(p[a] >= self.lo[a] && p[a] <= self.hi[a]) {
                    if n == 1 {
                        c[a] = 0;
                        continue;
                    }
                    return None;
                }
                c[a] = (t.floor().max(0.0) as usize).min(n - 1);
            }
        }
        Some(c)
    }

    fn neighbors(&self, c: [usize; 3], out: &mut Vec<[usize; 3]>) {
        out.clear();
        for a in 0..3 {
            let n = self.dims[a];
            if n == 1 {
                continue;
            }
            for delta in [-1i64, 1] {
                let v = c[a] as i64 + delta;
                let v = if v < 0 || v >= n as i64 {
                    if self.periodic[a] {
                        v.rem_euclid(n as i64)
                    } else {
                        continue;
                    }
                } else {
                    v
                };
                let mut nb = c;
                nb[a] = v as usize;
                if nb != c {
                    out.push(nb);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
    }

    /// Squared distance between cell centers in index units, respecting
    /// periodic wrap.
    fn index_dist2(&self, a: [usize; 3], b: [usize; 3]) -> f64 {
        let mut d2 = 0.0;
        for ax in 0..3 {
            let n = self.dims[ax] as f64;
            let mut d = (a[ax] as f64 - b[ax] as f64).abs();
            if self.periodic[ax] {
                d = d.min(n - d);
            }
            d2 += d * d;
        }
        d2
    }

    /// Mode of a point already known to be feasible: the containing cell's
    /// label, else the nearest labeled cell within one cell diagonal, else
    /// the nearest labeled cell anywhere.
    pub fn nearest_mode(&self, labels: &ModeLabels, p: [f64; 3]) -> Option<u32> {
        let clamped = {
            let mut q = p;
            for a in 0..3 {
                if !self.periodic[a] {
                    q[a] = q[a].clamp(self.lo[a], self.hi[a]);
                }
            }
            q
        };
        let c = self.cell_of(clamped)?;
        if let Some(m) = labels.labels[self.index(c)] {
            return Some(m);
        }
        let mut best: Option<(f64, u32)> = None;
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                for dk in -1i64..=1 {
                    let mut nb = [0usize; 3];
                    let mut ok = true;
                    for (a, d) in [di, dj, dk].into_iter().enumerate() {
                        let n = self.dims[a] as i64;
                        let v = c[a] as i64 + d;
                        nb[a] = if (0..n).contains(&v) {
                            v as usize
                        } else if self.periodic[a] {
                            v.rem_euclid(n) as usize
                        } else {
                            ok = false;
                            0
                        };
                    }
                    if !ok {
                        continue;
                    }
                    if let Some(m) = labels.labels[self.index(nb)] {
                        let d = self.index_dist2(c, nb);
                        if best.map_or(true, |(bd, _)| d < bd) {
                            best = Some((d, m));
                        }
                    }
                }
            }
        }
        if let Some((_, m)) = best {
            return Some(m);
        }
        let mut best: Option<(f64, u32)> = None;
        for (idx, l) in labels.labels.iter().enumerate() {
            if let Some(m) = l {
                let d = self.index_dist2(c, self.coords(idx));
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, *m));
                }
            }
        }
        best.map(|(_, m)| m)
    }

    /// Writes the text header followed by one 0/1 byte per cell.
    pub fn write_dump<W: Write>(&self, out: &mut W, modes: usize) -> Result<()> {
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "dims {} {} {}", self.dims[0], self.dims[1], self.dims[2])?;
        writeln!(
            out,
            "bounds {} {} {} {} {} {}",
            self.lo[0], self.hi[0], self.lo[1], self.hi[1], self.lo[2], self.hi[2]
        )?;
        writeln!(
            out,
            "periodic {} {} {}",
            self.periodic[0] as u8, self.periodic[1] as u8, self.periodic[2] as u8
        )?;
        writeln!(out, "modes {modes}")?;
        writeln!(out, "data")?;
        let bytes: Vec<u8> = self.cells.iter().map(|c| *c as u8).collect();
        out.write_all(&bytes)?;
        Ok(())
    }

    /// Parses a dump written by `write_dump`; returns the grid and mode count.
    pub fn read_dump(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut pos = 0;
        let mut next_line = || -> Result<String> {
            let end = bytes[pos..]
                .iter()
                .position(|b| *b == b'\n')
                .ok_or_else(|| Error::Format("truncated grid header".into()))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end])
                .map_err(|_| Error::Format("grid header is not utf-8".into()))?
                .to_string();
            pos += end + 1;
            Ok(line)
        };
        if next_line()? != MAGIC {
            return Err(Error::Format("missing grid magic".into()));
        }
        let field = |line: String, key: &str, n: usize| -> Result<Vec<String>> {
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Format(format!("expected '{key}' line")));
            }
            let vals: Vec<String> = parts.map(str::to_string).collect();
            if vals.len() != n {
                return Err(Error::Format(format!("'{key}' needs {n} values")));
            }
            Ok(vals)
        };
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad integer '{s}'")));
        let parse_f64 = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number '{s}'")));

        let d = field(next_line()?, "dims", 3)?;
        let dims = [parse_usize(&d[0])?, parse_usize(&d[1])?, parse_usize(&d[2])?];
        let b = field(next_line()?, "bounds", 6)?;
        let bounds: Vec<f64> = b.iter().map(|s| parse_f64(s)).collect::<Result<_>>()?;
        let p = field(next_line()?, "periodic", 3)?;
        let periodic: Vec<bool> = p.iter().map(|s| s == "1").collect();
        let m = field(next_line()?, "modes", 1)?;
        let modes = parse_usize(&m[0])?;
        if next_line()? != "data" {
            return Err(Error::Format("expected 'data' line".into()));
        }
        let n = dims[0] * dims[1] * dims[2];
        let data = &bytes[pos..];
        if data.len() != n {
            return Err(Error::Format(format!("expected {n} data bytes, found {}", data.len())));
        }
        let mut grid = Self::empty(
            dims,
            [
                (bounds[0], bounds[1], periodic[0]),
                (bounds[2], bounds[3], periodic[1]),
                (bounds[4], bounds[5], periodic[2]),
            ],
        );
        for (cell, byte) in grid.cells.iter_mut().zip(data) {
            *cell = match byte {
                0 => false,
                1 => true,
                other => return Err(Error::Format(format!("invalid cell byte {other}"))),
            };
        }
        Ok((grid, modes))
    }

    /// CSV with one row per cell: `x,y,alpha,feasible,mode`.
    pub fn write_csv<W: Write>(&self, out: &mut W, labels: &ModeLabels) -> Result<()> {
        writeln!(out, "x,y,alpha,feasible,mode")?;
        for idx in 0..self.cells.len() {
            let p = self.cell_center(self.coords(idx));
            let mode = labels.labels[idx].map_or(-1, |m| m as i64);
            writeln!(out, "{},{},{},{},{}", p[0], p[1], p[2], self.cells[idx] as u8, mode)?;
        }
        Ok(())
    }

    /// Max-projection onto the `(x, y)` plane.
    pub fn project_xy(&self) -> Vec<Vec<bool>> {
        let mut out = vec![vec![false; self.dims[1]]; self.dims[0]];
        for idx in 0..self.cells.len() {
            if self.cells[idx] {
                let [i, j, _] = self.coords(idx);
                out[i][j] = true;
            }
        }
        out
    }
}

/// 6-connected components of the feasible cells, wrapping periodic axes.
/// Ids are assigned in order of each component's first cell.
pub fn label_modes(grid: &FeasibilityGrid) -> ModeLabels {
    let mut labels: Vec<Option<u32>> = vec![None; grid.len()];
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    let mut nbs = Vec::with_capacity(6);
    for start in 0..grid.len() {
        if !grid.cells[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(count);
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            grid.neighbors(grid.coords(idx), &mut nbs);
            for nb in &nbs {
                let j = grid.index(*nb);
                if grid.cells[j] && labels[j].is_none() {
                    labels[j] = Some(count);
                    queue.push_back(j);
                }
            }
        }
        count += 1;
    }
    ModeLabels {
        count: count as usize,
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axes(periodic_last: bool) -> [(f64, f64, bool); 3] {
        [(0.0, 1.0, false), (0.0, 1.0, false), (0.0, 1.0, periodic_last)]
    }

    #[test]
    fn all_true_is_one_mode() {
        let mut g = FeasibilityGrid::empty([4, 5, 6], axes(true));
        g.fill(true);
        assert_eq!(label_modes(&g).count, 1);
    }

    #[test]
    fn empty_grid_has_no_modes() {
        let g = FeasibilityGrid::empty([4, 5, 6], axes(true));
        assert_eq!(label_modes(&g).count, 0);
    }

    #[test]
    fn wraparound_joins_ends() {
        let mut g = FeasibilityGrid::empty([3, 1, 8], axes(true));
        g.set([1, 0, 0], true);
        g.set([1, 0, 7], true);
        assert_eq!(label_modes(&g).count, 1);
        let mut g2 = FeasibilityGrid::empty([3, 1, 8], axes(false));
        g2.set([1, 0, 0], true);
        g2.set([1, 0, 7], true);
        assert_eq!(label_modes(&g2).count, 2);
    }

    #[test]
    fn diagonal_cells_are_separate() {
        let mut g = FeasibilityGrid::empty([3, 3, 1], axes(false));
        g.set([0, 0, 0], true);
        g.set([1, 1, 0], true);
        assert_eq!(label_modes(&g).count, 2);
    }

    #[test]
    fn dump_round_trip() {
        let mut g = FeasibilityGrid::empty([4, 3, 5], [(0.11, 0.89, false), (0.11, 0.89, false), (0.0, 3.0, true)]);
        g.set([1, 2, 3], true);
        g.set([3, 0, 4], true);
        let mut buf = Vec::new();
        g.write_dump(&mut buf, 2).unwrap();
        let (back, modes) = FeasibilityGrid::read_dump(&buf).unwrap();
        assert_eq!(back, g);
        assert_eq!(modes, 2);
        assert!(FeasibilityGrid::read_dump(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn cell_lookup() {
        let g = FeasibilityGrid::empty([10, 1, 4], [(0.0, 1.0, false), (0.0, 1.0, false), (0.0, 4.0, true)]);
        assert_eq!(g.cell_of([0.05, 0.5, 0.5]), Some([0, 0, 0]));
        assert_eq!(g.cell_of([1.0, 0.5, 4.5]), Some([9, 0, 0]));
        assert_eq!(g.cell_of([1.2, 0.5, 0.0]), None);
        let c = g.cell_center([3, 0, 2]);
        assert_eq!(g.cell_of(c), Some([3, 0, 2]));
    }
}
