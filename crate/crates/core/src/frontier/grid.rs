//! Uniform periodic grids and rectangular index blocks.
//!
//! Arrays are stored row-major with the last spatial axis contiguous. A
//! two-dimensional grid is handled as a three-dimensional one whose first
//! axis has length one, so all loops are written once.

use serde::{Deserialize, Serialize};

use super::FrontierError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    /// Cells per axis.
    pub n: usize,
    pub h: f64,
    /// Lower corner of the grid.
    pub origin: Vec<f64>,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, h: f64, origin: Vec<f64>) -> Result<Self, FrontierError> {
        if dim != 2 && dim != 3 {
            return Err(FrontierError::UnsupportedDimension(dim));
        }
        if origin.len() != dim {
            return Err(FrontierError::DimensionMismatch {
                expected: dim,
                got: origin.len(),
            });
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(FrontierError::InvalidParameter { name: "h", value: h });
        }
        if n < 4 {
            return Err(FrontierError::InvalidParameter {
                name: "n",
                value: n as f64,
            });
        }
        Ok(GridSpec { dim, n, h, origin })
    }

    /// A grid of `n` cells per axis whose cell `n / 2` is centered on `center`.
    pub fn centered(dim: usize, n: usize, h: f64, center: &[f64]) -> Result<Self, FrontierError> {
        let half = (n / 2) as f64 + 0.5;
        let origin = center.iter().map(|c| c - half * h).collect();
        Self::new(dim, n, h, origin)
    }

    /// Smallest centered grid whose side satisfies the no-wraparound bound
    /// `4 (A + M) duration + 4 δ`, plus room for the exponentially small
    /// precursor the scheme pushes ahead of the front.
    pub fn for_horizon(
        dim: usize,
        h: f64,
        speed: f64,
        duration: f64,
        delta: f64,
        center: &[f64],
    ) -> Result<Self, FrontierError> {
        let side = required_side(speed, duration, delta);
        let mut n = (side / h).ceil() as usize + 2 * PRECURSOR_CELLS;
        n += n % 2;
        Self::centered(dim, n, h, center)
    }

    pub fn side(&self) -> f64 {
        self.n as f64 * self.h
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn total_cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Center coordinate of cell `g` along spatial axis `axis`.
    #[inline]
    pub fn center(&self, axis: usize, g: i64) -> f64 {
        self.origin[axis] + (g as f64 + 0.5) * self.h
    }

    /// Index of the cell containing coordinate `x` along `axis` (may be
    /// outside the grid).
    #[inline]
    pub fn cell_of(&self, axis: usize, x: f64) -> i64 {
        ((x - self.origin[axis]) / self.h).floor() as i64
    }

    /// Padded shape for the full grid.
    pub(crate) fn full_block(&self) -> Block {
        let mut b = Block {
            lo: [0; 3],
            shape: [1; 3],
        };
        for a in 0..self.dim {
            b.shape[a + 3 - self.dim] = self.n;
        }
        b
    }

    /// Internal (padded) axis of spatial axis `a`.
    #[inline]
    pub(crate) fn internal_axis(&self, a: usize) -> usize {
        a + 3 - self.dim
    }

    /// Spatial coordinates of the cell with padded index `g`.
    pub(crate) fn point_of(&self, g: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for (a, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = self.center(a, g[self.internal_axis(a)] as i64);
        }
        x
    }
}

/// Cells kept free on each side of the front for values not yet flushed.
pub const PRECURSOR_CELLS: usize = 24;

pub fn required_side(speed: f64, duration: f64, delta: f64) -> f64 {
    4.0 * speed * duration + 4.0 * delta
}

/// A box of cells `[lo, lo + shape)` in padded coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Block {
    pub lo: [usize; 3],
    pub shape: [usize; 3],
}

impl Block {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn hi(&self, a: usize) -> usize {
        self.lo[a] + self.shape[a]
    }

    pub fn strides(&self) -> [usize; 3] {
        [self.shape[1] * self.shape[2], self.shape[2], 1]
    }

    #[inline]
    pub fn index(&self, g: [usize; 3]) -> usize {
        ((g[0] - self.lo[0]) * self.shape[1] + (g[1] - self.lo[1])) * self.shape[2] + (g[2] - self.lo[2])
    }

    #[inline]
    pub fn contains(&self, g: [usize; 3]) -> bool {
        (0..3).all(|a| g[a] >= self.lo[a] && g[a] < self.hi(a))
    }

    pub fn contains_block(&self, other: &Block) -> bool {
        (0..3).all(|a| other.lo[a] >= self.lo[a] && other.hi(a) <= self.hi(a))
    }

    /// Grows the block by `pad` cells on each side of every axis whose
    /// extent is not the dummy length-one axis. Returns `None` if the result
    /// leaves `[0, n)`.
    pub fn expanded(&self, pad: usize, dim: usize, n: usize) -> Option<Block> {
        let mut out = *self;
        for a in (3 - dim)..3 {
            if self.lo[a] < pad || self.hi(a) + pad > n {
                return None;
            }
            out.lo[a] -= pad;
            out.shape[a] += 2 * pad;
        }
        Some(out)
    }

    /// Like [`Block::expanded`] but clipped to the grid.
    pub fn expanded_clipped(&self, pad: usize, dim: usize, n: usize) -> Block {
        let mut out = *self;
        for a in (3 - dim)..3 {
            let lo = self.lo[a].saturating_sub(pad);
            let hi = (self.hi(a) + pad).min(n);
            out.lo[a] = lo;
            out.shape[a] = hi - lo;
        }
        out
    }

    pub fn union(&self, other: &Block) -> Block {
        let mut out = *self;
        for a in 0..3 {
            let lo = self.lo[a].min(other.lo[a]);
            let hi = self.hi(a).max(other.hi(a));
            out.lo[a] = lo;
            out.shape[a] = hi - lo;
        }
        out
    }

    /// Visits every padded index in row-major order.
    pub fn for_each(&self, mut f: impl FnMut([usize; 3])) {
        for i in self.lo[0]..self.hi(0) {
            for j in self.lo[1]..self.hi(1) {
                for k in self.lo[2]..self.hi(2) {
                    f([i, j, k]);
                }
            }
        }
    }
}
