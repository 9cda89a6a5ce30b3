//! Hierarchical-matrix representation of the L1 time operator.
//!
//! The index set `1..=M` is bisected recursively by cardinality. A block whose
//! row and column time intervals satisfy `diam(I_t) <= dist(I_s, I_t)` is
//! replaced by a rank-`k` product `A B^T` obtained from the truncated Taylor
//! expansion of the kernel `(t - s)^(-delta)` about the midpoint of `I_t`.
//! Blocks above the diagonal are zero, small blocks are stored densely.
//!
//! Only two operations are needed by the solver: the product `y += alpha H x`
//! and forward substitution with `H + c I`. Both act on `M x P` arrays so the
//! time lines of all spatial points are processed together.

use std::fmt::Write as _;

use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::error::{Error, Result};
use crate::fracdisc::{gemm_acc, second_divided_power, L1Coefficients};
use crate::mesh::TemporalMesh;
use crate::special::gamma;

/// Default number of Taylor terms.
pub const DEFAULT_RANK: usize = 20;
/// Default maximal side of a dense leaf.
pub const DEFAULT_LEAF_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HMatrixConfig {
    /// Number of Taylor terms `k` in every low-rank block.
    pub rank: usize,
    /// Blocks with `min(rows, cols) <= leaf_size` are not subdivided further.
    pub leaf_size: usize,
}

impl Default for HMatrixConfig {
    fn default() -> Self {
        Self {
            rank: DEFAULT_RANK,
            leaf_size: DEFAULT_LEAF_SIZE,
        }
    }
}

/// Closed time interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn diam(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Relative slack in the admissibility comparison. On uniform meshes the
/// equality case `diam == dist` is the common one and must not be decided by
/// the rounding of the time points.
const ADMISSIBILITY_SLACK: f64 = 1e-12;

/// Admissibility of `I_t x I_s`: `I_s` must lie strictly left of `I_t` and
/// `diam(I_t) <= dist(I_s, I_t)`.
pub fn admissible(target: Interval, source: Interval) -> bool {
    if source.hi >= target.lo {
        return false;
    }
    target.diam() <= (target.lo - source.hi) * (1.0 + ADMISSIBILITY_SLACK)
}

/// Rows `row_lo..=row_hi` and columns `col_lo..=col_hi` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockIndex {
    pub row_lo: usize,
    pub row_hi: usize,
    pub col_lo: usize,
    pub col_hi: usize,
}

impl BlockIndex {
    pub fn new(rows: (usize, usize), cols: (usize, usize)) -> Self {
        debug_assert!(rows.0 >= 1 && rows.0 <= rows.1 && cols.0 >= 1 && cols.0 <= cols.1);
        Self {
            row_lo: rows.0,
            row_hi: rows.1,
            col_lo: cols.0,
            col_hi: cols.1,
        }
    }

    pub fn rows(&self) -> usize {
        self.row_hi + 1 - self.row_lo
    }

    pub fn cols(&self) -> usize {
        self.col_hi + 1 - self.col_lo
    }

    /// Time interval covering the rows: `[t_{row_lo-1}, t_{row_hi}]`.
    pub fn row_interval(&self, mesh: &TemporalMesh) -> Interval {
        Interval::new(mesh.t(self.row_lo - 1), mesh.t(self.row_hi))
    }

    /// Time interval covering the columns: `[t_{col_lo-1}, t_{col_hi}]`.
    ///
    /// The hat function of the last column reaches one step further, to
    /// `t_{col_hi+1}`; admissibility forces `col_hi + 1 < row_lo`, and steps
    /// never shrink along a graded mesh, so that extra step is at most one
    /// row step and the Taylor series still converges at a rate near 1/3.
    pub fn col_interval(&self, mesh: &TemporalMesh) -> Interval {
        Interval::new(mesh.t(self.col_lo - 1), mesh.t(self.col_hi))
    }

    pub fn is_admissible(&self, mesh: &TemporalMesh) -> bool {
        admissible(self.row_interval(mesh), self.col_interval(mesh))
    }

    /// Entirely above the diagonal.
    pub fn is_upper(&self) -> bool {
        self.col_lo > self.row_hi
    }

    fn split(&self) -> [BlockIndex; 4] {
        let rm = self.row_lo + (self.rows() - 1) / 2;
        let cm = self.col_lo + (self.cols() - 1) / 2;
        [
            BlockIndex::new((self.row_lo, rm), (self.col_lo, cm)),
            BlockIndex::new((self.row_lo, rm), (cm + 1, self.col_hi)),
            BlockIndex::new((rm + 1, self.row_hi), (self.col_lo, cm)),
            BlockIndex::new((rm + 1, self.row_hi), (cm + 1, self.col_hi)),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    Zero,
    Dense,
    LowRank,
}

#[derive(Debug, Clone)]
pub enum HNode {
    Zero(BlockIndex),
    Dense {
        block: BlockIndex,
        data: Array2<f64>,
    },
    LowRank {
        block: BlockIndex,
        a: Array2<f64>,
        b: Array2<f64>,
    },
    /// Children in the order `[11, 12, 21, 22]`.
    Quad {
        block: BlockIndex,
        children: Box<[HNode; 4]>,
    },
}

impl HNode {
    pub fn block(&self) -> BlockIndex {
        match self {
            HNode::Zero(block)
            | HNode::Dense { block, .. }
            | HNode::LowRank { block, .. }
            | HNode::Quad { block, .. } => *block,
        }
    }

    /// `y += alpha * self * x`, with `x` holding this block's columns and `y` its rows.
    fn apply(&self, alpha: f64, x: &ArrayView2<f64>, y: &mut ArrayViewMut2<f64>) {
        match self {
            HNode::Zero(_) => {}
            HNode::Dense { data, .. } => gemm_acc(alpha, &data.view(), x, y),
            HNode::LowRank { a, b, .. } => {
                let mut tmp = Array2::zeros((b.ncols(), x.ncols()));
                ndarray::linalg::general_mat_mul(1.0, &b.t(), x, 0.0, &mut tmp);
                gemm_acc(alpha, &a.view(), &tmp.view(), y);
            }
            HNode::Quad { block, children } => {
                for child in children.iter() {
                    let cb = child.block();
                    let c0 = cb.col_lo - block.col_lo;
                    let r0 = cb.row_lo - block.row_lo;
                    let xs = x.slice(s![c0..c0 + cb.cols(), ..]);
                    let mut ys = y.slice_mut(s![r0..r0 + cb.rows(), ..]);
                    child.apply(alpha, &xs, &mut ys);
                }
            }
        }
    }

    /// Overwrite `x` (holding `b`) with the solution of `(self + shift I) x = b`.
    /// Only valid for diagonal blocks.
    fn solve(&self, shift: f64, x: &mut ArrayViewMut2<f64>) {
        match self {
            HNode::Dense { data, .. } => {
                let n = data.nrows();
                for i in 0..n {
                    let (done, mut rest) = x.view_mut().split_at(Axis(0), i);
                    let mut row = rest.row_mut(0);
                    let coeffs = data.row(i);
                    for j in 0..i {
                        let c = coeffs[j];
                        if c != 0.0 {
                            row.scaled_add(-c, &done.row(j));
                        }
                    }
                    let diag = coeffs[i] + shift;
                    assert!(
                        diag > 0.0,
                        "singular diagonal entry in forward substitution"
                    );
                    row.mapv_inplace(|v| v / diag);
                }
            }
            HNode::Quad { children, .. } => {
                let [c11, c12, c21, c22] = &**children;
                assert!(
                    matches!(c12, HNode::Zero(_)),
                    "diagonal block has a non-zero upper-right child"
                );
                let split = c11.block().rows();
                let (mut x1, mut x2) = x.view_mut().split_at(Axis(0), split);
                c11.solve(shift, &mut x1);
                c21.apply(-1.0, &x1.view(), &mut x2);
                c22.solve(shift, &mut x2);
            }
            HNode::Zero(_) | HNode::LowRank { .. } => {
                panic!("forward substitution reached a non-diagonal block")
            }
        }
    }

    fn visit_leaves<F: FnMut(&HNode)>(&self, f: &mut F) {
        match self {
            HNode::Quad { children, .. } => children.iter().for_each(|c| c.visit_leaves(f)),
            leaf => f(leaf),
        }
    }

    fn dump(&self, depth: usize, out: &mut String) {
        let b = self.block();
        let indent = "  ".repeat(depth);
        let label = match self {
            HNode::Zero(_) => "zero".to_string(),
            HNode::Dense { .. } => "dense".to_string(),
            HNode::LowRank { a, .. } => format!("lowrank k={}", a.ncols()),
            HNode::Quad { .. } => "quad".to_string(),
        };
        let _ = writeln!(
            out,
            "{indent}{label} rows [{}, {}] cols [{}, {}]",
            b.row_lo, b.row_hi, b.col_lo, b.col_hi
        );
        if let HNode::Quad { children, .. } = self {
            for c in children.iter() {
                c.dump(depth + 1, out);
            }
        }
    }
}

/// Low-rank factors `A` (`|rows| x k`) and `B` (`|cols| x k`) of an admissible block.
///
/// The Taylor powers `(t_m - t_0)^nu` are normalized by the half-width `rho`
/// of `I_t`, and `B` carries the compensating `rho^nu`; the product `A B^T`
/// is unchanged but the factors stay bounded for any `k` and any step size.
pub fn lowrank_factors(
    l1: &L1Coefficients,
    block: BlockIndex,
    rank: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let mesh = l1.mesh();
    if !block.is_admissible(mesh) {
        return Err(Error::NotAdmissible);
    }
    // admissible blocks lie strictly below the diagonal, so every column has a right neighbour
    assert!(block.col_hi < mesh.steps());

    let delta = l1.delta();
    let it = block.row_interval(mesh);
    let center = 0.5 * (it.lo + it.hi);
    let rho = 0.5 * it.diam();
    let inv_gamma = 1.0 / gamma(1.0 - delta);

    let a = Array2::from_shape_fn((block.rows(), rank), |(i, nu)| {
        let m = block.row_lo + i;
        ((mesh.t(m) - center) / rho).powi(nu as i32) * inv_gamma
    });

    // c_nu = binom(-delta, nu) divided by the exponent 1 - delta - nu
    let weights: Vec<f64> = {
        let mut c = 1.0;
        (0..rank)
            .map(|nu| {
                if nu > 0 {
                    c *= (-delta - (nu - 1) as f64) / nu as f64;
                }
                c / (1.0 - delta - nu as f64)
            })
            .collect()
    };

    let mut b = Array2::zeros((block.cols(), rank));
    for (jj, mut row) in b.rows_mut().into_iter().enumerate() {
        let j = block.col_lo + jj;
        let y = center - mesh.t(j);
        let (tau_l, tau_r) = (mesh.tau(j), mesh.tau(j + 1));
        for (nu, v) in row.iter_mut().enumerate() {
            *v = weights[nu] * second_divided_power(y, tau_l, tau_r, 1.0 - delta, nu, rho);
        }
    }
    Ok((a, b))
}

/// Scalar counts of a compressed operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StorageReport {
    /// Entries held by dense leaves (lower triangle only for diagonal-touching leaves).
    pub dense_scalars: usize,
    /// `k (|rows| + |cols|)` summed over low-rank leaves.
    pub lowrank_scalars: usize,
    /// Lower triangle of the full `M x M` operator, `M (M + 1) / 2`.
    pub dense_equivalent_scalars: usize,
    pub dense_leaves: usize,
    pub lowrank_leaves: usize,
    pub zero_leaves: usize,
}

impl StorageReport {
    pub fn compressed_scalars(&self) -> usize {
        self.dense_scalars + self.lowrank_scalars
    }

    pub fn bytes_compressed(&self) -> usize {
        self.compressed_scalars() * std::mem::size_of::<f64>()
    }

    pub fn bytes_dense_equivalent(&self) -> usize {
        self.dense_equivalent_scalars * std::mem::size_of::<f64>()
    }
}

/// Compressed time operator.
#[derive(Debug, Clone)]
pub struct HMatrix {
    root: HNode,
    steps: usize,
    config: HMatrixConfig,
    delta: f64,
}

impl HMatrix {
    pub fn build(l1: &L1Coefficients, config: HMatrixConfig) -> Result<Self> {
        if config.rank == 0 {
            return Err(Error::InvalidConfig("rank must be at least 1".into()));
        }
        if config.leaf_size < 2 {
            return Err(Error::InvalidConfig("leaf size must be at least 2".into()));
        }
        let steps = l1.steps();
        let root = build_node(l1, &config, BlockIndex::new((1, steps), (1, steps)))?;
        Ok(Self {
            root,
            steps,
            config,
            delta: l1.delta(),
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn rank(&self) -> usize {
        self.config.rank
    }

    pub fn leaf_size(&self) -> usize {
        self.config.leaf_size
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn root(&self) -> &HNode {
        &self.root
    }

    fn check_rows(&self, rows: usize) -> Result<()> {
        if rows != self.steps {
            return Err(Error::DimensionMismatch {
                expected: self.steps,
                got: rows,
            });
        }
        Ok(())
    }

    /// `y += alpha * H * x` for `M x P` arrays.
    pub fn apply_into(
        &self,
        alpha: f64,
        x: &ArrayView2<f64>,
        y: &mut ArrayViewMut2<f64>,
    ) -> Result<()> {
        self.check_rows(x.nrows())?;
        self.check_rows(y.nrows())?;
        if x.ncols() != y.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                got: y.ncols(),
            });
        }
        self.root.apply(alpha, x, y);
        Ok(())
    }

    /// `H x` for a single time vector.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_rows(x.len())?;
        let xv = ArrayView2::from_shape((x.len(), 1), x).expect("contiguous column");
        let mut y = Array2::zeros((self.steps, 1));
        self.root.apply(1.0, &xv, &mut y.view_mut());
        Ok(y.into_raw_vec_and_offset().0)
    }

    /// Solve `(H + shift I) X = B` in place for every column of an `M x P` array.
    pub fn solve_in_place(&self, shift: f64, x: &mut ArrayViewMut2<f64>) -> Result<()> {
        if shift.is_nan() || shift < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "shift must be non-negative, got {shift}"
            )));
        }
        self.check_rows(x.nrows())?;
        self.root.solve(shift, x);
        Ok(())
    }

    /// Forward substitution with `H + shift I` for a single time vector.
    pub fn shifted_forward_solve(&self, shift: f64, b: &[f64]) -> Result<Vec<f64>> {
        self.check_rows(b.len())?;
        let mut x = Array2::from_shape_vec((b.len(), 1), b.to_vec()).expect("column");
        self.solve_in_place(shift, &mut x.view_mut())?;
        Ok(x.into_raw_vec_and_offset().0)
    }

    /// Expand to a dense `M x M` array.
    pub fn densify(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.steps, self.steps));
        self.root.visit_leaves(&mut |leaf| {
            let b = leaf.block();
            let mut dst = out.slice_mut(s![b.row_lo - 1..b.row_hi, b.col_lo - 1..b.col_hi]);
            match leaf {
                HNode::Dense { data, .. } => dst.assign(data),
                HNode::LowRank { a, b, .. } => dst.assign(&a.dot(&b.t())),
                _ => {}
            }
        });
        out
    }

    /// Leaf blocks in tree order.
    pub fn leaves(&self) -> Vec<(BlockIndex, LeafKind)> {
        let mut out = Vec::new();
        self.root.visit_leaves(&mut |leaf| {
            let kind = match leaf {
                HNode::Zero(_) => LeafKind::Zero,
                HNode::Dense { .. } => LeafKind::Dense,
                HNode::LowRank { .. } => LeafKind::LowRank,
                HNode::Quad { .. } => unreachable!(),
            };
            out.push((leaf.block(), kind));
        });
        out
    }

    pub fn storage_report(&self) -> StorageReport {
        let mut report = StorageReport {
            dense_equivalent_scalars: self.steps * (self.steps + 1) / 2,
            ..Default::default()
        };
        self.root.visit_leaves(&mut |leaf| match leaf {
            HNode::Zero(_) => report.zero_leaves += 1,
            HNode::Dense { block, .. } => {
                report.dense_leaves += 1;
                report.dense_scalars += lower_count(block);
            }
            HNode::LowRank { block, a, .. } => {
                report.lowrank_leaves += 1;
                report.lowrank_scalars += a.ncols() * (block.rows() + block.cols());
            }
            HNode::Quad { .. } => unreachable!(),
        });
        report
    }

    /// Indented text listing of the block tree.
    pub fn tree_dump(&self) -> String {
        let mut out = String::new();
        self.root.dump(0, &mut out);
        out
    }
}

/// Number of entries with `j <= m` inside a block.
fn lower_count(b: &BlockIndex) -> usize {
    (b.row_lo..=b.row_hi)
        .map(|m| {
            if m < b.col_lo {
                0
            } else {
                m.min(b.col_hi) + 1 - b.col_lo
            }
        })
        .sum()
}

fn build_node(l1: &L1Coefficients, config: &HMatrixConfig, block: BlockIndex) -> Result<HNode> {
    if block.is_upper() {
        return Ok(HNode::Zero(block));
    }
    if block.is_admissible(l1.mesh()) {
        let (a, b) = lowrank_factors(l1, block, config.rank)?;
        return Ok(HNode::LowRank { block, a, b });
    }
    if block.rows().min(block.cols()) <= config.leaf_size {
        let data = l1.block((block.row_lo, block.row_hi), (block.col_lo, block.col_hi));
        return Ok(HNode::Dense { block, data });
    }
    let [b11, b12, b21, b22] = block.split();
    let children = Box::new([
        build_node(l1, config, b11)?,
        build_node(l1, config, b12)?,
        build_node(l1, config, b21)?,
        build_node(l1, config, b22)?,
    ]);
    Ok(HNode::Quad { block, children })
}
