//! Test problems with known solutions, and error metrics.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::fracdisc::L1Coefficients;
use crate::mesh::{check_order, MeshKind, SpatialGrid, TemporalMesh};
use crate::special::gamma;

/// Maximal number of series terms in [`mittag_leffler`].
pub const ML_MAX_TERMS: usize = 500;
/// Supported arguments are `z` in `[-ML_Z_MAX, 0]`; beyond that the
/// alternating series loses too many digits to cancellation.
pub const ML_Z_MAX: f64 = 2.0;

/// One-parameter Mittag-Leffler function `E_delta(z) = sum_k z^k / Gamma(delta k + 1)`.
pub fn mittag_leffler(delta: f64, z: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidOrder(delta));
    }
    if !(-ML_Z_MAX..=0.0).contains(&z) {
        return Err(Error::ArgumentOutOfRange(z));
    }
    let mut sum = 1.0;
    let mut zpow = 1.0;
    for k in 1..ML_MAX_TERMS {
        zpow *= z;
        let term = zpow / gamma(delta * k as f64 + 1.0);
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::SeriesNotConverged(ML_MAX_TERMS))
}

/// `u(x, t) = E_delta(-t^delta) sin x`, the solution of the 1D test problem.
pub fn exact_solution_1d(x: f64, t: f64, delta: f64) -> f64 {
    let e = mittag_leffler(delta, -t.powf(delta)).expect("t in [0, 1]");
    e * x.sin()
}

/// Manufactured 2D solution `u = (t^3 + t^delta) sin x sin y` and its source
/// `f = D_t^delta u - Laplace u`.
pub fn manufactured_2d(x: f64, y: f64, t: f64, delta: f64) -> (f64, f64) {
    let s = x.sin() * y.sin();
    let temporal = t.powi(3) + t.powf(delta);
    let caputo = gamma(delta + 1.0) + gamma(4.0) / gamma(4.0 - delta) * t.powf(3.0 - delta);
    (temporal * s, (2.0 * temporal + caputo) * s)
}

/// Maximum over all grid values of `|u[m][p] - exact(m, p)|`, with `m` the
/// 1-based time index and `p` the flat spatial index.
pub fn max_error<F: Fn(usize, usize) -> f64>(u: &ArrayView2<f64>, exact: F) -> f64 {
    let mut err = 0.0f64;
    for ((m, p), &v) in u.indexed_iter() {
        err = err.max((v - exact(m + 1, p)).abs());
    }
    err
}

/// Errors `E_M` for a sequence of doubling step counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorStudy {
    pub entries: Vec<(usize, f64)>,
}

impl ErrorStudy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, steps: usize, error: f64) {
        self.entries.push((steps, error));
    }

    /// `log2(E_M / E_{2M})` for consecutive entries.
    pub fn orders(&self) -> Result<Vec<f64>> {
        if self.entries.len() < 2 {
            return Err(Error::EmptyStudy);
        }
        Ok(self
            .entries
            .windows(2)
            .map(|w| (w[0].1 / w[1].1).log2())
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// `[0, pi] x [0, 1]`, `f = 0`, `g = sin x`.
    Heat1d,
    /// `(0, pi)^2 x [0, 1]`, zero initial data, manufactured source.
    Heat2d,
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heat1d" => Ok(ProblemKind::Heat1d),
            "heat2d" => Ok(ProblemKind::Heat2d),
            other => Err(Error::InvalidConfig(format!("unknown problem '{other}'"))),
        }
    }
}

/// A discretized test problem: grid, time mesh and fractional order.
#[derive(Debug, Clone)]
pub struct Problem {
    pub kind: ProblemKind,
    pub delta: f64,
    pub grid: SpatialGrid,
    pub mesh: TemporalMesh,
}

impl Problem {
    /// `interior` points per axis on `[0, pi]`, `steps` time steps on `[0, 1]`.
    pub fn new(
        kind: ProblemKind,
        delta: f64,
        interior: usize,
        steps: usize,
        mesh: MeshKind,
    ) -> Result<Self> {
        check_order(delta)?;
        let dim = match kind {
            ProblemKind::Heat1d => 1,
            ProblemKind::Heat2d => 2,
        };
        Ok(Self {
            kind,
            delta,
            grid: SpatialGrid::new(dim, PI, interior)?,
            mesh: TemporalMesh::new(mesh, 1.0, steps, delta)?,
        })
    }

    /// Coordinates of flat spatial index `p` (x fastest).
    pub fn coords(&self, p: usize) -> (f64, f64) {
        let n = self.grid.interior();
        match self.kind {
            ProblemKind::Heat1d => (self.grid.coord(p), 0.0),
            ProblemKind::Heat2d => (self.grid.coord(p % n), self.grid.coord(p / n)),
        }
    }

    fn source(&self, p: usize, t: f64) -> f64 {
        match self.kind {
            ProblemKind::Heat1d => 0.0,
            ProblemKind::Heat2d => {
                let (x, y) = self.coords(p);
                manufactured_2d(x, y, t, self.delta).1
            }
        }
    }

    fn initial(&self, p: usize) -> f64 {
        match self.kind {
            ProblemKind::Heat1d => self.coords(p).0.sin(),
            ProblemKind::Heat2d => 0.0,
        }
    }

    pub fn exact(&self, p: usize, t: f64) -> f64 {
        let (x, y) = self.coords(p);
        match self.kind {
            ProblemKind::Heat1d => exact_solution_1d(x, t, self.delta),
            ProblemKind::Heat2d => manufactured_2d(x, y, t, self.delta).0,
        }
    }

    /// Right-hand side `f(x_p, t_m) + d(m, m) g(x_p)` as an `M x P` array.
    pub fn rhs(&self, l1: &L1Coefficients) -> Array2<f64> {
        let g: Vec<f64> = (0..self.grid.points()).map(|p| self.initial(p)).collect();
        let mut f = l1.initial_lift(&g);
        for ((m, p), v) in f.indexed_iter_mut() {
            *v += self.source(p, self.mesh.t(m + 1));
        }
        f
    }

    /// Exact solution sampled at `(x_p, t_m)`, `m = 1..=M`.
    pub fn exact_field(&self) -> Array2<f64> {
        let steps = self.mesh.steps();
        let mut out = Array2::zeros((steps, self.grid.points()));
        match self.kind {
            // separable: evaluate the Mittag-Leffler factor once per time level
            ProblemKind::Heat1d => {
                for m in 0..steps {
                    let t = self.mesh.t(m + 1);
                    let e = mittag_leffler(self.delta, -t.powf(self.delta)).expect("t in [0, 1]");
                    for p in 0..self.grid.points() {
                        out[[m, p]] = e * self.coords(p).0.sin();
                    }
                }
            }
            ProblemKind::Heat2d => {
                for ((m, p), v) in out.indexed_iter_mut() {
                    *v = self.exact(p, self.mesh.t(m + 1));
                }
            }
        }
        out
    }

    /// Discrete maximum error of a computed solution.
    pub fn max_error(&self, u: &ArrayView2<f64>) -> f64 {
        let exact = self.exact_field();
        max_error(u, |m, p| exact[[m - 1, p]])
    }
}
