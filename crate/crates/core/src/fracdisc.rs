//! L1 discretization of the Caputo derivative on a non-uniform time mesh.
//!
//! With piecewise linear trial functions `phi_j` and point evaluation at `t_m`
//! the discrete operator is the lower triangular matrix
//!
//! ```text
//! R[m][j] = 1/Gamma(1-delta) * int_0^{t_m} (t_m - s)^(-delta) phi_j'(s) ds
//! ```
//!
//! which equals `d(m, m-j+1) - d(m, m-j)` in terms of the L1 weights `d(m, k)`.
//! Entries are evaluated through stable divided differences of `s^(1-delta)`,
//! so tiny steps near `t = 0` on strongly graded meshes do not cancel.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};
use crate::mesh::{check_order, TemporalMesh};
use crate::special::gamma;

/// Below this ratio of step to distance, power differences switch to the
/// binomial series.
const SERIES_THRESHOLD: f64 = 0.05;
const SERIES_MAX_TERMS: usize = 400;

/// `G_q(x) = ((1 + x)^q - 1) / x`, the secant slope of `(1 + x)^q` at zero.
#[inline]
fn secant_slope(q: f64, x: f64) -> f64 {
    (q * x.ln_1p()).exp_m1() / x
}

/// First divided difference `((y + a)^p - y^p) / a` for `y >= 0`, `a > 0`.
pub(crate) fn divided_power(y: f64, a: f64, p: f64) -> f64 {
    if y == 0.0 {
        a.powf(p - 1.0)
    } else {
        y.powf(p - 1.0) * secant_slope(p, a / y)
    }
}

/// `rho^nu * [((y+a)^q - y^q)/a - (y^q - (y-b)^q)/b]` with `q = p - nu`.
///
/// Requires `0 < b <= y` (strictly `b < y` when `q <= 0`). The `rho^nu` factor is
/// folded into `(rho / y)^nu` so that large `nu` neither overflows nor
/// underflows when `y` is tiny.
pub(crate) fn second_divided_power(y: f64, a: f64, b: f64, p: f64, nu: usize, rho: f64) -> f64 {
    debug_assert!(y > 0.0 && a > 0.0 && b > 0.0 && b <= y);
    let q = p - nu as f64;
    let alpha = a / y;
    let beta = b / y;
    let bracket = if alpha.max(beta) <= SERIES_THRESHOLD {
        // sum_{n>=2} binom(q, n) (alpha^(n-1) - (-beta)^(n-1))
        let mut coef = q;
        let mut apow = 1.0;
        let mut bpow = 1.0;
        let mut sum = 0.0;
        for n in 2..SERIES_MAX_TERMS {
            coef *= (q - (n - 1) as f64) / n as f64;
            apow *= alpha;
            bpow *= -beta;
            sum += coef * (apow - bpow);
            // the two powers cancel exactly for even n-1 on uniform steps, so
            // stop on the size of each power rather than on their difference
            let bound = coef.abs() * (apow.abs() + bpow.abs());
            if n > 2 && bound <= 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        secant_slope(q, alpha) - secant_slope(q, -beta)
    };
    let scale = if nu == 0 {
        1.0
    } else {
        (rho / y).powi(nu as i32)
    };
    y.powf(p - 1.0) * scale * bracket
}

/// L1 weights on a given mesh.
#[derive(Debug, Clone)]
pub struct L1Coefficients {
    mesh: TemporalMesh,
    delta: f64,
    /// `1 / Gamma(2 - delta)`
    inv_gamma: f64,
}

impl L1Coefficients {
    pub fn new(mesh: &TemporalMesh, delta: f64) -> Result<Self> {
        check_order(delta)?;
        Ok(Self {
            mesh: mesh.clone(),
            delta,
            inv_gamma: 1.0 / gamma(2.0 - delta),
        })
    }

    pub fn mesh(&self) -> &TemporalMesh {
        &self.mesh
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn steps(&self) -> usize {
        self.mesh.steps()
    }

    /// L1 weight `d(m, k)` for `1 <= k <= m <= M`.
    ///
    /// `d(m, 1) = tau_m^(-delta) / Gamma(2-delta)` and, for `k >= 2`,
    /// `d(m, k) = [(t_m - t_{m-k})^(1-delta) - (t_m - t_{m-k+1})^(1-delta)] / (Gamma(2-delta) tau_{m-k+1})`.
    pub fn d(&self, m: usize, k: usize) -> Result<f64> {
        let steps = self.steps();
        if k == 0 || k > m || m > steps {
            return Err(Error::IndexOutOfRange { m, k, steps });
        }
        Ok(self.d_unchecked(m, k))
    }

    /// `t_m - t_j`. On uniform meshes this is `(m - j) T / M` exactly rather
    /// than a difference of rounded points, which keeps the operator Toeplitz
    /// to the last bit.
    #[inline]
    fn gap(&self, m: usize, j: usize) -> f64 {
        if self.mesh.is_uniform() {
            (m - j) as f64 * self.mesh.final_time() / self.steps() as f64
        } else {
            self.mesh.t(m) - self.mesh.t(j)
        }
    }

    #[inline]
    fn step(&self, j: usize) -> f64 {
        if self.mesh.is_uniform() {
            self.mesh.final_time() / self.steps() as f64
        } else {
            self.mesh.tau(j)
        }
    }

    #[inline]
    fn d_unchecked(&self, m: usize, k: usize) -> f64 {
        let j = m + 1 - k;
        divided_power(self.gap(m, j), self.step(j), 1.0 - self.delta) * self.inv_gamma
    }

    /// Weight of the initial value `u_0` moved to the right-hand side, `d(m, m)`.
    pub fn lift_weight(&self, m: usize) -> f64 {
        self.d_unchecked(m, m)
    }

    /// Matrix entry `R[m][j]` with 1-based indices; zero above the diagonal.
    #[inline]
    pub fn entry(&self, m: usize, j: usize) -> f64 {
        debug_assert!(m >= 1 && j >= 1 && m <= self.steps() && j <= self.steps());
        if j > m {
            0.0
        } else if j == m {
            self.step(m).powf(-self.delta) * self.inv_gamma
        } else {
            second_divided_power(
                self.gap(m, j),
                self.step(j),
                self.step(j + 1),
                1.0 - self.delta,
                0,
                1.0,
            ) * self.inv_gamma
        }
    }

    /// Block of `R` with 1-based inclusive ranges.
    pub fn block(&self, rows: (usize, usize), cols: (usize, usize)) -> Array2<f64> {
        Array2::from_shape_fn((rows.1 + 1 - rows.0, cols.1 + 1 - cols.0), |(i, k)| {
            self.entry(rows.0 + i, cols.0 + k)
        })
    }

    /// Assemble the full dense operator.
    pub fn assemble_dense(&self) -> TimeOperatorDense {
        let steps = self.steps();
        TimeOperatorDense {
            matrix: self.block((1, steps), (1, steps)),
        }
    }

    /// Right-hand side contribution `d(m, m) g` of the initial condition,
    /// laid out as `M x len(g)` (time rows, spatial columns).
    pub fn initial_lift(&self, g: &[f64]) -> Array2<f64> {
        let steps = self.steps();
        let mut lift = Array2::zeros((steps, g.len()));
        for (row, mut out) in lift.rows_mut().into_iter().enumerate() {
            let w = self.lift_weight(row + 1);
            for (o, &gv) in out.iter_mut().zip(g) {
                *o = w * gv;
            }
        }
        lift
    }
}

/// `y += alpha * a * x` through the shared GEMM kernel.
#[inline]
pub(crate) fn gemm_acc(
    alpha: f64,
    a: &ArrayView2<f64>,
    x: &ArrayView2<f64>,
    y: &mut ArrayViewMut2<f64>,
) {
    ndarray::linalg::general_mat_mul(alpha, a, x, 1.0, y);
}

/// Dense lower triangular `M x M` time operator.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeOperatorDense {
    matrix: Array2<f64>,
}

impl TimeOperatorDense {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Entry with 1-based indices.
    pub fn entry(&self, m: usize, j: usize) -> f64 {
        self.matrix[[m - 1, j - 1]]
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Discrete Caputo action `(R u)_m = sum_{j<=m} R[m][j] u_j` for zero initial data.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        let x = ArrayView2::from_shape((u.len(), 1), u).expect("contiguous column");
        let mut y = Array2::zeros((self.dim(), 1));
        gemm_acc(1.0, &self.matrix.view(), &x, &mut y.view_mut());
        Ok(y.into_raw_vec_and_offset().0)
    }

    /// Apply to every column of an `M x P` array.
    pub fn apply_many(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.nrows(),
            });
        }
        let mut y = Array2::zeros((self.dim(), x.ncols()));
        gemm_acc(1.0, &self.matrix.view(), x, &mut y.view_mut());
        Ok(y)
    }

    /// Forward substitution for `(R + shift I) x = b`.
    pub fn shifted_solve(&self, shift: f64, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let mut x = b.to_vec();
        for i in 0..n {
            let row = self.matrix.row(i);
            let mut acc = x[i];
            for j in 0..i {
                acc -= row[j] * x[j];
            }
            x[i] = acc / (row[i] + shift);
        }
        Ok(x)
    }

    /// Write `row,col,value` lines (1-based, lower triangle only).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "row,col,value")?;
        for m in 1..=self.dim() {
            for j in 1..=m {
                writeln!(out, "{m},{j},{:e}", self.entry(m, j))?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
