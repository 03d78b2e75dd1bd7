//! Uniform node grid on the cube `[0, extent]^3`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Largest grid (nodes per axis) accepted unless the caller raises the cap.
pub const DEFAULT_MAX_POINTS_PER_AXIS: usize = 65;

/// Node grid on an axis-aligned cube. Nodes are numbered `(i * m + j) * m + k`
/// for integer coordinates `(i, j, k)`, so the third axis is contiguous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    pub extent: f64,
    pub points_per_axis: usize,
}

impl GridDomain {
    pub fn new(extent: f64, points_per_axis: usize) -> Result<Self> {
        Self::with_cap(extent, points_per_axis, DEFAULT_MAX_POINTS_PER_AXIS)
    }

    pub fn with_cap(extent: f64, points_per_axis: usize, cap: usize) -> Result<Self> {
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::domain(format!("cube extent must be positive, got {extent}")));
        }
        if points_per_axis < 9 || points_per_axis % 2 == 0 {
            return Err(Error::domain(format!(
                "points per axis must be odd and at least 9, got {points_per_axis}"
            )));
        }
        if points_per_axis > cap {
            return Err(Error::MemoryBudget {
                requested: points_per_axis.pow(3),
                cap: cap.pow(3),
            });
        }
        Ok(Self {
            extent,
            points_per_axis,
        })
    }

    pub fn m(&self) -> usize {
        self.points_per_axis
    }

    pub fn h(&self) -> f64 {
        self.extent / (self.points_per_axis - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.points_per_axis + j) * self.points_per_axis + k
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let m = self.points_per_axis;
        [idx / (m * m), (idx / m) % m, idx % m]
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let h = self.h();
        let [i, j, k] = self.ijk(idx);
        [i as f64 * h, j as f64 * h, k as f64 * h]
    }

    /// Node at signed integer offset from `idx`, if it stays on the grid.
    #[inline]
    pub fn offset(&self, idx: usize, d: [isize; 3]) -> Option<usize> {
        let p = self.ijk(idx);
        let m = self.points_per_axis as isize;
        let mut q = [0usize; 3];
        for a in 0..3 {
            let v = p[a] as isize + d[a];
            if v < 0 || v >= m {
                return None;
            }
            q[a] = v as usize;
        }
        Some(self.index(q[0], q[1], q[2]))
    }

    /// Number of coordinates of the node that lie on the cube faces.
    #[inline]
    pub fn boundary_multiplicity(&self, idx: usize) -> usize {
        let last = self.points_per_axis - 1;
        self.ijk(idx).iter().filter(|&&c| c == 0 || c == last).count()
    }

    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        self.boundary_multiplicity(idx) > 0
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_boundary(i)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_boundary(i)).collect()
    }

    /// Trapezoidal volume weight of a node.
    pub fn volume_weight(&self, idx: usize) -> f64 {
        self.h().powi(3) * 0.5f64.powi(self.boundary_multiplicity(idx) as i32)
    }

    /// Euclidean distance from a point to the cube boundary (0 outside the cube
    /// is not handled here; see [`GridDomain::distance_to_cube`]).
    pub fn distance_to_boundary(&self, x: [f64; 3]) -> f64 {
        x.iter()
            .map(|&c| c.min(self.extent - c))
            .fold(f64::INFINITY, f64::min)
    }

    /// Euclidean distance from a point outside (or on) the cube to the cube.
    pub fn distance_to_cube(&self, x: [f64; 3]) -> f64 {
        x.iter()
            .map(|&c| {
                if c < 0.0 {
                    -c
                } else if c > self.extent {
                    c - self.extent
                } else {
                    0.0
                }
            })
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }

    /// Short content fingerprint used to tie serialized operators to a grid.
    pub fn fingerprint(&self) -> String {
        format!("cube:{:.17e}:{}", self.extent, self.points_per_axis)
    }

    /// Sample a complex function at every node.
    pub fn sample_complex(&self, f: impl Fn([f64; 3]) -> C64) -> ComplexField {
        ComplexField {
            grid: *self,
            values: (0..self.len()).map(|i| f(self.coords(i))).collect(),
        }
    }

    pub fn sample_real(&self, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.coords(i))).collect()
    }
}

/// Complex scalar grid function. The real and imaginary parts are the two
/// components of the equivalent real system.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: GridDomain,
    pub values: Vec<C64>,
}

impl ComplexField {
    pub fn zeros(grid: GridDomain) -> Self {
        Self {
            grid,
            values: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Values on the given node list.
    pub fn gather(&self, nodes: &[usize]) -> Vec<C64> {
        nodes.iter().map(|&i| self.values[i]).collect()
    }
}
