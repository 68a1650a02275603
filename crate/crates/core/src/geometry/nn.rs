//! Exact nearest-neighbour queries on a uniform grid.

use alloc::vec;
use alloc::vec::Vec;

use super::Vec3;
#[allow(unused_imports)]
use num_traits::Float;

/// Uniform-grid index over a fixed point set. Queries are exact: results
/// equal a brute-force scan (ties may resolve to a different index).
#[derive(Debug, Clone)]
pub struct NearestIndex {
    points: Vec<Vec3>,
    origin: Vec3,
    cell: f64,
    dims: [i64; 3],
    cell_start: Vec<u32>,
    order: Vec<u32>,
}

const MAX_DIM: f64 = 512.0;

impl NearestIndex {
    pub fn new(points: &[Vec3]) -> Self {
        let n = points.len().max(1);
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if points.is_empty() {
            lo = Vec3::zeros();
            hi = Vec3::zeros();
        }
        let ext = hi - lo;
        let max_ext = ext.max();
        let per_axis = (n as f64).cbrt().ceil().clamp(1.0, MAX_DIM);
        let mut cell = if max_ext > 0.0 { max_ext / per_axis } else { 1.0 };
        // keep the dense cell table bounded for elongated clouds
        while ext.iter().map(|e| (e / cell).floor() + 1.0).product::<f64>() > 4.0 * n as f64 + 64.0 {
            cell *= 1.5;
        }
        let dims = [
            (ext.x / cell).floor() as i64 + 1,
            (ext.y / cell).floor() as i64 + 1,
            (ext.z / cell).floor() as i64 + 1,
        ];
        let ncells = (dims[0] * dims[1] * dims[2]) as usize;
        let mut idx = Self {
            points: points.to_vec(),
            origin: lo,
            cell,
            dims,
            cell_start: vec![0; ncells + 1],
            order: vec![0; points.len()],
        };
        let keys: Vec<usize> = points.iter().map(|p| idx.linear(idx.cell_of(p))).collect();
        for &k in &keys {
            idx.cell_start[k + 1] += 1;
        }
        for c in 0..ncells {
            idx.cell_start[c + 1] += idx.cell_start[c];
        }
        let mut fill = idx.cell_start.clone();
        for (i, &k) in keys.iter().enumerate() {
            idx.order[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        idx
    }

    #[inline]
    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    fn cell_of(&self, p: &Vec3) -> [i64; 3] {
        let r = (p - self.origin) / self.cell;
        [r.x.floor() as i64, r.y.floor() as i64, r.z.floor() as i64]
    }

    #[inline]
    fn linear(&self, c: [i64; 3]) -> usize {
        let c = [
            c[0].clamp(0, self.dims[0] - 1),
            c[1].clamp(0, self.dims[1] - 1),
            c[2].clamp(0, self.dims[2] - 1),
        ];
        ((c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]) as usize
    }

    /// Visits cells at Chebyshev ring `r` around `c`, in a fixed order.
    fn visit_ring(&self, c: [i64; 3], r: i64, mut f: impl FnMut(u32)) {
        let lo = |a: usize| (c[a] - r).max(0);
        let hi = |a: usize| (c[a] + r).min(self.dims[a] - 1);
        for z in lo(2)..=hi(2) {
            for y in lo(1)..=hi(1) {
                let dz = (z - c[2]).abs();
                let dy = (y - c[1]).abs();
                let on_shell_yz = dz == r || dy == r;
                let mut x = lo(0);
                while x <= hi(0) {
                    let dx = (x - c[0]).abs();
                    if on_shell_yz || dx == r {
                        let k = ((z * self.dims[1] + y) * self.dims[0] + x) as usize;
                        for &i in &self.order[self.cell_start[k] as usize..self.cell_start[k + 1] as usize] {
                            f(i);
                        }
                        x += 1;
                    } else {
                        // jump to the far face of the shell
                        x = c[0] + r;
                    }
                }
            }
        }
    }

    fn ring_bounds(&self, c: [i64; 3]) -> (i64, i64) {
        let mut start = 0;
        let mut end = 0;
        for a in 0..3 {
            let below = -c[a];
            let above = c[a] - (self.dims[a] - 1);
            start = start.max(below).max(above);
            end = end.max((c[a]).abs().max((self.dims[a] - 1 - c[a]).abs()));
        }
        (start.max(0), end)
    }

    /// Nearest point: `(index, squared distance)`.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        self.nearest_within(q, f64::INFINITY)
    }

    /// Nearest point with distance `<= radius`.
    pub fn nearest_within(&self, q: &Vec3, radius: f64) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let c = self.cell_of(q);
        let (start, end) = self.ring_bounds(c);
        let r2 = radius * radius;
        let mut best: Option<(usize, f64)> = None;
        let mut r = start;
        while r <= end {
            self.visit_ring(c, r, |i| {
                let d2 = (self.points[i as usize] - q).norm_squared();
                if d2 <= r2 && best.is_none_or(|(bi, bd)| d2 < bd || (d2 == bd && (i as usize) < bi)) {
                    best = Some((i as usize, d2));
                }
            });
            let reach = r as f64 * self.cell;
            if let Some((_, bd)) = best {
                if bd <= reach * reach {
                    break;
                }
            }
            if reach > radius {
                break;
            }
            r += 1;
        }
        best
    }

    /// The `k` nearest points sorted by distance (ties by index).
    pub fn k_nearest(&self, q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if self.points.is_empty() || k == 0 {
            return best;
        }
        let c = self.cell_of(q);
        let (start, end) = self.ring_bounds(c);
        let mut r = start;
        while r <= end {
            self.visit_ring(c, r, |i| {
                let d2 = (self.points[i as usize] - q).norm_squared();
                let cand = (i as usize, d2);
                if best.len() < k || less(&cand, &best[best.len() - 1]) {
                    let pos = best.partition_point(|b| less(b, &cand));
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            });
            let reach = r as f64 * self.cell;
            if best.len() == k && best[k - 1].1 <= reach * reach {
                break;
            }
            r += 1;
        }
        best
    }
}

#[inline]
fn less(a: &(usize, f64), b: &(usize, f64)) -> bool {
    a.1 < b.1 || (a.1 == b.1 && a.0 < b.0)
}
