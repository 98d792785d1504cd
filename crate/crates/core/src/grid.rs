//! Uniform-grid spatial hashing over trajectory points.
//!
//! Ball queries dominate the cost of the correlation and hitting integrals,
//! so points are bucketed once per radius into cells of side >= r; any ball
//! of radius r is then covered by the 3^d cell neighborhood of its center.
//! Within a cell, point indices are stored in trajectory order, which lets
//! hit-time queries walk entries chronologically and stop early.

use crate::dynsys::{dist, Metric, Trajectory};

pub struct SpatialGrid<'a> {
    traj: &'a Trajectory,
    metric: Metric,
    dim: usize,
    lo: [f64; 3],
    inv_cell: [f64; 3],
    n_cells: [usize; 3],
    wrap: bool,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl<'a> SpatialGrid<'a> {
    /// Bucket all points of `traj` into cells of side >= `r`.
    pub fn build(traj: &'a Trajectory, r: f64) -> Self {
        assert!(r > 0.0, "grid cell side must be positive");
        assert!(
            traj.len() < u32::MAX as usize,
            "trajectories longer than u32::MAX points are not supported"
        );
        let metric = traj.metric();
        let dim = traj.dim();
        let wrap = metric == Metric::TorusEuclidean;

        let mut lo = [0.0f64; 3];
        let mut hi = [1.0f64; 3];
        if !wrap {
            for d in 0..dim {
                let mut mn = f64::INFINITY;
                let mut mx = f64::NEG_INFINITY;
                for s in traj.states() {
                    mn = mn.min(s[d]);
                    mx = mx.max(s[d]);
                }
                lo[d] = mn;
                hi[d] = mx + 1e-12;
            }
        }

        let mut n_cells = [1usize; 3];
        let mut inv_cell = [0.0f64; 3];
        for d in 0..dim {
            let extent = hi[d] - lo[d];
            let n = if wrap {
                // Cell side 1/n >= r so the 3-cell window covers the ball
                // even with wrapping.
                (1.0 / r).floor().max(1.0) as usize
            } else {
                (extent / r).ceil().max(1.0) as usize
            };
            n_cells[d] = n;
            inv_cell[d] = if wrap {
                n as f64
            } else {
                n as f64 / extent.max(f64::MIN_POSITIVE)
            };
        }

        let total: usize = n_cells[..dim].iter().product();
        let mut counts = vec![0u32; total + 1];
        let cell_id = |s: &[f64]| -> usize {
            let mut id = 0usize;
            for d in 0..dim {
                let mut c = ((s[d] - lo[d]) * inv_cell[d]).floor() as isize;
                c = c.clamp(0, n_cells[d] as isize - 1);
                id = id * n_cells[d] + c as usize;
            }
            id
        };
        for s in traj.states() {
            counts[cell_id(s) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts.clone();
        let mut cursor = counts;
        let mut items = vec![0u32; traj.len()];
        for (j, s) in traj.states().enumerate() {
            let c = cell_id(s);
            items[cursor[c] as usize] = j as u32;
            cursor[c] += 1;
        }

        SpatialGrid {
            traj,
            metric,
            dim,
            lo,
            inv_cell,
            n_cells,
            wrap,
            starts,
            items,
        }
    }

    #[inline]
    fn coord_cell(&self, d: usize, x: f64) -> isize {
        let c = ((x - self.lo[d]) * self.inv_cell[d]).floor() as isize;
        if self.wrap {
            c.rem_euclid(self.n_cells[d] as isize)
        } else {
            c.clamp(0, self.n_cells[d] as isize - 1)
        }
    }

    /// Cell slices of the 3^d neighborhood around `z`, deduplicated (small
    /// torus grids would otherwise revisit the same cell).
    fn neighbor_cells(&self, z: &[f64]) -> Vec<usize> {
        let mut base = [0isize; 3];
        for d in 0..self.dim {
            base[d] = self.coord_cell(d, z[d]);
        }
        let mut out = Vec::with_capacity(3usize.pow(self.dim as u32));
        let offsets: &[isize] = &[-1, 0, 1];
        match self.dim {
            1 => {
                for &dx in offsets {
                    if let Some(c) = self.offset_cell(&base, &[dx]) {
                        out.push(c);
                    }
                }
            }
            2 => {
                for &dx in offsets {
                    for &dy in offsets {
                        if let Some(c) = self.offset_cell(&base, &[dx, dy]) {
                            out.push(c);
                        }
                    }
                }
            }
            _ => {
                for &dx in offsets {
                    for &dy in offsets {
                        for &dz in offsets {
                            if let Some(c) = self.offset_cell(&base, &[dx, dy, dz]) {
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn offset_cell(&self, base: &[isize; 3], off: &[isize]) -> Option<usize> {
        let mut id = 0usize;
        for d in 0..self.dim {
            let n = self.n_cells[d] as isize;
            let mut c = base[d] + off[d];
            if self.wrap {
                c = c.rem_euclid(n);
            } else if c < 0 || c >= n {
                return None;
            }
            id = id * self.n_cells[d] + c as usize;
        }
        Some(id)
    }

    #[inline]
    fn cell_items(&self, cell: usize) -> &[u32] {
        &self.items[self.starts[cell] as usize..self.starts[cell + 1] as usize]
    }

    /// Number of points with d(x_j, z) < r.
    pub fn count_in_ball(&self, z: &[f64], r: f64) -> u32 {
        let mut count = 0u32;
        for cell in self.neighbor_cells(z) {
            for &j in self.cell_items(cell) {
                if dist(self.metric, self.traj.state(j as usize), z) < r {
                    count += 1;
                }
            }
        }
        count
    }

    /// Indices of all points with d(x_j, z) < r, ascending.
    pub fn indices_in_ball(&self, z: &[f64], r: f64) -> Vec<u32> {
        let mut out = Vec::new();
        for cell in self.neighbor_cells(z) {
            for &j in self.cell_items(cell) {
                if dist(self.metric, self.traj.state(j as usize), z) < r {
                    out.push(j);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The earliest `max_hits` indices j with j > after and d(x_j, z) < r,
    /// ascending. Walks the neighborhood cells chronologically and stops as
    /// soon as enough entries are found, so large balls stay cheap.
    pub fn first_entries_after(&self, z: &[f64], r: f64, after: i64, max_hits: usize) -> Vec<u32> {
        let cells = self.neighbor_cells(z);
        let mut cursors: Vec<(usize, &[u32])> = cells
            .iter()
            .map(|&c| {
                let items = self.cell_items(c);
                let start = items.partition_point(|&j| (j as i64) <= after);
                (start, items)
            })
            .filter(|(start, items)| *start < items.len())
            .collect();
        let mut out = Vec::with_capacity(max_hits.min(64));
        while out.len() < max_hits {
            let mut best: Option<usize> = None;
            let mut best_j = u32::MAX;
            for (k, (cursor, items)) in cursors.iter().enumerate() {
                let j = items[*cursor];
                if j < best_j {
                    best_j = j;
                    best = Some(k);
                }
            }
            let Some(k) = best else { break };
            cursors[k].0 += 1;
            if cursors[k].0 >= cursors[k].1.len() {
                cursors.swap_remove(k);
            }
            if dist(self.metric, self.traj.state(best_j as usize), z) < r {
                out.push(best_j);
            }
        }
        out
    }
}
