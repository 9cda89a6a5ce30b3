//! Temporal meshes and uniform spatial grids.

use crate::error::{Error, Result};

/// Temporal mesh family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshKind {
    /// `t_m = T (m/M)^r`, `r = (2 - delta) / delta`
    Graded,
    Uniform,
}

impl std::str::FromStr for MeshKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graded" => Ok(MeshKind::Graded),
            "uniform" => Ok(MeshKind::Uniform),
            other => Err(Error::InvalidMesh(format!("unknown mesh kind '{other}'"))),
        }
    }
}

/// Time points `0 = t_0 < t_1 < ... < t_M = T`.
///
/// Steps are indexed as `tau_j = t_j - t_{j-1}` for `j = 1..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalMesh {
    final_time: f64,
    grading: f64,
    points: Vec<f64>,
}

impl TemporalMesh {
    /// Graded mesh `t_m = T (m/M)^r` with `r = (2 - delta) / delta`.
    pub fn graded(final_time: f64, steps: usize, delta: f64) -> Result<Self> {
        check_order(delta)?;
        Self::with_grading(final_time, steps, (2.0 - delta) / delta)
    }

    pub fn new(kind: MeshKind, final_time: f64, steps: usize, delta: f64) -> Result<Self> {
        match kind {
            MeshKind::Graded => Self::graded(final_time, steps, delta),
            MeshKind::Uniform => Self::uniform(final_time, steps),
        }
    }

    /// Uniform mesh `t_m = m T / M`.
    pub fn uniform(final_time: f64, steps: usize) -> Result<Self> {
        check_common(final_time, steps)?;
        let points = (0..=steps)
            .map(|m| {
                if m == steps {
                    final_time
                } else {
                    final_time * m as f64 / steps as f64
                }
            })
            .collect();
        Ok(Self {
            final_time,
            grading: 1.0,
            points,
        })
    }

    /// Mesh `t_m = T (m/M)^r` for an arbitrary grading exponent `r >= 1`.
    pub fn with_grading(final_time: f64, steps: usize, grading: f64) -> Result<Self> {
        check_common(final_time, steps)?;
        if !(grading >= 1.0 && grading.is_finite()) {
            return Err(Error::InvalidMesh(format!(
                "grading exponent must be finite and >= 1, got {grading}"
            )));
        }
        if grading == 1.0 {
            return Self::uniform(final_time, steps);
        }
        let points: Vec<f64> = (0..=steps)
            .map(|m| final_time * (m as f64 / steps as f64).powf(grading))
            .collect();
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidMesh(format!(
                "grading exponent {grading} with {steps} steps underflows to a non-monotone mesh"
            )));
        }
        Ok(Self {
            final_time,
            grading,
            points,
        })
    }

    /// Number of time steps `M`.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    /// Grading exponent `r` (1 for uniform meshes).
    pub fn grading(&self) -> f64 {
        self.grading
    }

    pub fn is_uniform(&self) -> bool {
        self.grading == 1.0
    }

    /// All `M + 1` time points.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Time point `t_m`, `0 <= m <= M`.
    #[inline]
    pub fn t(&self, m: usize) -> f64 {
        self.points[m]
    }

    /// Step `tau_j = t_j - t_{j-1}`, `1 <= j <= M`.
    #[inline]
    pub fn tau(&self, j: usize) -> f64 {
        self.points[j] - self.points[j - 1]
    }
}

fn check_common(final_time: f64, steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::InvalidMesh("need at least one time step".into()));
    }
    if !(final_time > 0.0 && final_time.is_finite()) {
        return Err(Error::InvalidMesh(format!(
            "final time must be positive, got {final_time}"
        )));
    }
    Ok(())
}

pub(crate) fn check_order(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidOrder(delta))
    }
}

/// Uniform grid on `[0, L]^dim` with `N` interior points per axis and
/// homogeneous Dirichlet boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    dim: usize,
    length: f64,
    interior: usize,
}

impl SpatialGrid {
    /// `interior + 1` must be a power of two.
    pub fn new(dim: usize, length: f64, interior: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "length must be positive, got {length}"
            )));
        }
        if interior == 0 || !(interior + 1).is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "N + 1 must be a power of two, got N = {interior}"
            )));
        }
        Ok(Self {
            dim,
            length,
            interior,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Interior points per axis.
    pub fn interior(&self) -> usize {
        self.interior
    }

    /// Total number of interior unknowns (`N` or `N^2`).
    pub fn points(&self) -> usize {
        self.interior.pow(self.dim as u32)
    }

    /// Mesh width `L / (N + 1)`.
    pub fn h(&self) -> f64 {
        self.length / (self.interior + 1) as f64
    }

    /// Coordinate of the interior node with 0-based axis index `i` (`x_{i+1}`).
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.h()
    }

    /// Halve the number of subdivisions.
    pub fn coarsen(&self) -> Result<Self> {
        if self.interior < 3 {
            return Err(Error::AlreadyCoarsest(self.interior));
        }
        Ok(Self {
            interior: self.interior.div_ceil(2) - 1,
            ..*self
        })
    }

    /// Number of grids from this one down to the single-point grid, inclusive.
    pub fn level_count(&self) -> usize {
        (self.interior + 1).trailing_zeros() as usize
    }
}
