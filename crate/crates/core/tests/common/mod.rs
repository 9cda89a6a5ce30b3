//! Independent reference computations shared by the integration tests and
//! the acceptance harness. Nothing here calls into the closed-form weight
//! code of the library; the time operator is rebuilt from its integral
//! definition by quadrature, and space-time systems are solved densely.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use statrs::function::gamma::gamma;
use tfheat::TemporalMesh;

/// Tanh-sinh quadrature of `f` over `[a, b]`.
///
/// `f` receives the distances `(s - a, b - s)` of the node to both ends, each
/// computed without cancellation, so integrable endpoint singularities are
/// handled accurately.
pub fn tanh_sinh<F: Fn(f64, f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let half = 0.5 * (b - a);
    let h = 1.0 / 64.0;
    let mut sum = 0.0;
    let mut k = 0i64;
    loop {
        let t = k as f64 * h;
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        // 1 - tanh(u), accurate for large u
        let comp = 2.0 / ((2.0 * u).exp() + 1.0);
        let sech = 2.0 / (u.exp() + (-u).exp());
        let w = h * std::f64::consts::FRAC_PI_2 * t.cosh() * sech * sech;
        if comp == 0.0 || w == 0.0 {
            break;
        }
        let near = half * comp;
        let far = 2.0 * half - near;
        if k == 0 {
            sum += w * f(half, half);
        } else {
            // nodes at distance `near` from b and from a respectively
            sum += w * f(far, near);
            sum += w * f(near, far);
        }
        k += 1;
    }
    half * sum
}

/// Entry `R[m][j]` (1-based) of the time operator from its integral form
/// `(1/Gamma(1-delta)) int phi_j'(s) (t_m - s)^(-delta) ds`.
///
/// Away from the diagonal the integral is taken by parts, giving a positive
/// integrand and no cancellation between the two halves of the hat.
pub fn r_entry_by_quadrature(mesh: &TemporalMesh, delta: f64, m: usize, j: usize) -> f64 {
    let g = gamma(1.0 - delta);
    let tm = mesh.t(m);
    if j > m {
        return 0.0;
    }
    if j == m {
        // (1/tau_m) int_{t_{m-1}}^{t_m} (t_m - s)^-delta ds
        let tau = mesh.tau(m);
        return tanh_sinh(mesh.t(m - 1), tm, |_, to_b| to_b.powf(-delta)) / (tau * g);
    }
    if j == m - 1 {
        let (tl, tr) = (mesh.tau(j), mesh.tau(m));
        let gap = tm - mesh.t(j);
        let left = tanh_sinh(mesh.t(j - 1), mesh.t(j), |_, to_b| {
            (gap + to_b).powf(-delta)
        }) / tl;
        let right = tanh_sinh(mesh.t(j), tm, |_, to_b| to_b.powf(-delta)) / tr;
        return (left - right) / g;
    }
    // j <= m - 2: -(delta / Gamma(1-delta)) int phi_j(s) (t_m - s)^(-delta-1) ds
    let (t0, t1, t2) = (mesh.t(j - 1), mesh.t(j), mesh.t(j + 1));
    let (tl, tr) = (t1 - t0, t2 - t1);
    let up = tanh_sinh(t0, t1, |from_a, to_b| {
        (from_a / tl) * (tm - t1 + to_b).powf(-delta - 1.0)
    });
    let down = tanh_sinh(t1, t2, |_, to_b| {
        (to_b / tr) * (tm - t2 + to_b).powf(-delta - 1.0)
    });
    -delta / g * (up + down)
}

/// Dense `M x M` time operator from quadrature.
pub fn r_matrix_by_quadrature(mesh: &TemporalMesh, delta: f64) -> DMatrix<f64> {
    let steps = mesh.steps();
    DMatrix::from_fn(steps, steps, |i, k| {
        r_entry_by_quadrature(mesh, delta, i + 1, k + 1)
    })
}

/// Dense negative Laplacian on `n` (or `n x n`) interior points with mesh width `h`.
pub fn laplacian(dim: usize, n: usize, h: f64) -> DMatrix<f64> {
    let np = n.pow(dim as u32);
    let s = 1.0 / (h * h);
    let mut a = DMatrix::zeros(np, np);
    for p in 0..np {
        let (i, j) = (p % n, p / n);
        a[(p, p)] = 2.0 * dim as f64 * s;
        let mut link = |q: usize| a[(p, q)] = -s;
        if i > 0 {
            link(p - 1);
        }
        if i + 1 < n {
            link(p + 1);
        }
        if dim == 2 {
            if j > 0 {
                link(p - n);
            }
            if j + 1 < n {
                link(p + n);
            }
        }
    }
    a
}

/// Assembled space-time matrix `R (x) I + I (x) A`, unknown `(m, p)` at row `m * P + p`.
pub fn space_time_matrix(r: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let (steps, np) = (r.nrows(), a.nrows());
    let mut k = DMatrix::zeros(steps * np, steps * np);
    for m in 0..steps {
        for j in 0..steps {
            for p in 0..np {
                k[(m * np + p, j * np + p)] += r[(m, j)];
            }
        }
        for p in 0..np {
            for q in 0..np {
                k[(m * np + p, m * np + q)] += a[(p, q)];
            }
        }
    }
    k
}

pub fn flatten(u: &Array2<f64>) -> DVector<f64> {
    DVector::from_iterator(u.len(), u.iter().copied())
}

pub fn unflatten(v: &DVector<f64>, steps: usize, np: usize) -> Array2<f64> {
    Array2::from_shape_fn((steps, np), |(m, p)| v[m * np + p])
}

/// One block Gauss-Seidel sweep over the spatial color classes in order,
/// each class solved as one coupled block with a general LU factorization.
pub fn block_gauss_seidel(
    k: &DMatrix<f64>,
    f: &DVector<f64>,
    u: &mut DVector<f64>,
    np: usize,
    colors: &[&[usize]],
) {
    let steps = k.nrows() / np;
    for color in colors {
        let idx: Vec<usize> = (0..steps)
            .flat_map(|m| color.iter().map(move |&p| m * np + p))
            .collect();
        let rest: Vec<usize> = (0..k.nrows()).filter(|i| !idx.contains(i)).collect();
        let kss = DMatrix::from_fn(idx.len(), idx.len(), |a, b| k[(idx[a], idx[b])]);
        let rhs = DVector::from_fn(idx.len(), |a, _| {
            f[idx[a]] - rest.iter().map(|&c| k[(idx[a], c)] * u[c]).sum::<f64>()
        });
        let sol = kss.lu().solve(&rhs).expect("nonsingular block");
        for (a, &i) in idx.iter().enumerate() {
            u[i] = sol[a];
        }
    }
}

pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Deterministic pseudo-random field in `[-1, 1]`.
pub fn test_field(rows: usize, cols: usize, salt: u64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let mut x = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
            ^ salt.wrapping_mul(0x1656_67B1_9E37_79F9);
        x ^= x >> 31;
        x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x ^= x >> 29;
        (x % 2_000_001) as f64 / 1_000_000.0 - 1.0
    })
}
