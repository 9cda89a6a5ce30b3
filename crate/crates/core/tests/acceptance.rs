//! Reproduction checks against reference results and the stated
//! properties of the method. Prints one PASS/FAIL line per criterion.
//!
//! The run always exits successfully so that a failing reproduction shows up
//! in the report without breaking `cargo test`; set `TFHEAT_ACCEPTANCE_STRICT=1`
//! to turn any FAIL into a non-zero exit.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::*;
use ndarray::Array2;
use tfheat::hmatrix::LeafKind;
use tfheat::wrmg::solve_problem;
use tfheat::{
    CycleConfig, ErrorStudy, HMatrix, HMatrixConfig, Hierarchy, InitialGuess, L1Coefficients,
    MeshKind, Problem, ProblemKind, SolveReport, SpatialGrid, TemporalMesh,
};

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        summary: summary.into(),
    }
}

fn table_config(dim: usize) -> CycleConfig {
    let mut cfg = CycleConfig::for_dim(dim);
    cfg.initial_guess = InitialGuess::Random { seed: 0 };
    cfg
}

fn run(
    kind: ProblemKind,
    delta: f64,
    interior: usize,
    steps: usize,
    mesh: MeshKind,
    rank: usize,
    cfg: &CycleConfig,
) -> (Problem, Array2<f64>, SolveReport) {
    let problem = Problem::new(kind, delta, interior, steps, mesh).unwrap();
    let hconfig = HMatrixConfig {
        rank,
        ..HMatrixConfig::default()
    };
    let (u, report) = solve_problem(&problem, hconfig, cfg).unwrap();
    (problem, u.into_inner(), report)
}

fn within_rel(got: f64, want: f64, tol: f64) -> bool {
    ((got - want) / want).abs() <= tol
}

fn errors_and_orders() -> Outcome {
    let reference: [(f64, [f64; 5], [f64; 4]); 3] = [
        (
            0.4,
            [1.9e-3, 7.0e-4, 2.4e-4, 8.5e-5, 2.9e-5],
            [1.44, 1.50, 1.53, 1.55],
        ),
        (
            0.6,
            [3.3e-3, 1.4e-3, 5.5e-4, 2.1e-4, 8.3e-5],
            [1.23, 1.35, 1.35, 1.36],
        ),
        (
            0.8,
            [5.0e-3, 2.4e-3, 1.1e-3, 5.0e-4, 2.2e-4],
            [1.05, 1.12, 1.13, 1.14],
        ),
    ];
    let steps = [32usize, 64, 128, 256, 512];
    let mut pass = true;
    let mut misses = Vec::new();
    println!("  delta  M=32      M=64      M=128     M=256     M=512");
    for (delta, errors, orders) in reference {
        let mut study = ErrorStudy::new();
        for &m in &steps {
            let (p, u, _) = run(
                ProblemKind::Heat1d,
                delta,
                1023,
                m,
                MeshKind::Graded,
                20,
                &CycleConfig::for_dim(1),
            );
            study.push(m, p.max_error(&u.view()));
        }
        let got = study.orders().unwrap();
        let row: Vec<String> = study
            .entries
            .iter()
            .map(|(_, e)| format!("{e:.2e}"))
            .collect();
        println!("  {delta:<5}  E_M {}", row.join("  "));
        let ords: Vec<String> = got.iter().map(|o| format!("{o:.2}")).collect();
        println!("         log2(E_M/E_2M) {}", ords.join("  "));
        for (i, &(m, e)) in study.entries.iter().enumerate() {
            if !within_rel(e, errors[i], 0.10) {
                pass = false;
                misses.push(format!("E_{m}(δ={delta})"));
            }
        }
        for (i, (&o, &w)) in got.iter().zip(&orders).enumerate() {
            if (o - w).abs() > 0.05 {
                pass = false;
                misses.push(format!(
                    "order {}→{}(δ={delta}) {o:.3} vs {w}",
                    steps[i],
                    steps[i + 1]
                ));
            }
        }
    }
    let summary = if pass {
        "all errors within 10%, all orders within ±0.05".to_string()
    } else {
        format!("outside tolerance: {}", misses.join(", "))
    };
    outcome(pass, summary)
}

fn uniform_vs_graded_orders() -> Outcome {
    let mut finest = Vec::new();
    for mesh in [MeshKind::Uniform, MeshKind::Graded] {
        let mut study = ErrorStudy::new();
        for m in [64usize, 128, 256, 512, 1024] {
            let (p, u, _) = run(
                ProblemKind::Heat1d,
                0.4,
                2047,
                m,
                mesh,
                20,
                &CycleConfig::for_dim(1),
            );
            study.push(m, p.max_error(&u.view()));
        }
        let orders = study.orders().unwrap();
        let ords: Vec<String> = orders.iter().map(|o| format!("{o:.3}")).collect();
        println!("  {mesh:?}: orders {}", ords.join(" "));
        finest.push(*orders.last().unwrap());
    }
    let pass = (finest[0] - 0.4).abs() <= 0.1 && (finest[1] - 1.6).abs() <= 0.1;
    outcome(
        pass,
        format!(
            "512→1024 order: uniform {:.3} (0.4±0.1), graded {:.3} (1.6±0.1)",
            finest[0], finest[1]
        ),
    )
}

fn iterations_1d() -> Outcome {
    let reference: [(f64, [usize; 5], [f64; 5]); 4] = [
        (0.2, [11, 11, 11, 11, 11], [0.11, 0.11, 0.11, 0.11, 0.11]),
        (0.4, [11, 11, 11, 10, 9], [0.11, 0.11, 0.11, 0.09, 0.08]),
        (0.6, [10, 9, 8, 7, 7], [0.09, 0.06, 0.05, 0.04, 0.04]),
        (0.8, [8, 7, 7, 7, 7], [0.04, 0.04, 0.04, 0.04, 0.04]),
    ];
    let sizes = [128usize, 256, 512, 1024, 2048];
    let cfg = table_config(1);
    let mut pass = true;
    let mut misses = Vec::new();
    println!("  delta  128x128     256x256     512x512     1024x1024   2048x2048");
    for (delta, its, rhos) in reference {
        let mut row = format!("  {delta:<5}");
        for (i, &n) in sizes.iter().enumerate() {
            let (_, _, r) = run(
                ProblemKind::Heat1d,
                delta,
                n - 1,
                n,
                MeshKind::Graded,
                20,
                &cfg,
            );
            row += &format!("  {:>2} ({:.3})", r.iterations, r.convergence_factor);
            if !r.converged
                || r.iterations.abs_diff(its[i]) > 1
                || (r.convergence_factor - rhos[i]).abs() > 0.03
            {
                pass = false;
                misses.push(format!("δ={delta} {n}x{n}"));
            }
        }
        println!("{row}");
    }
    let summary = if pass {
        "iterations within ±1 and factors within ±0.03 everywhere".to_string()
    } else {
        format!("outside tolerance: {}", misses.join(", "))
    };
    outcome(pass, summary)
}

fn rank_robustness() -> Outcome {
    let ranks = [5usize, 10, 15, 20, 25, 30];
    let mut pass = true;
    let mut misses = Vec::new();
    for (dim, n) in [(1usize, 512usize), (2, 64)] {
        let kind = if dim == 1 {
            ProblemKind::Heat1d
        } else {
            ProblemKind::Heat2d
        };
        println!("  {}D {n}^{}:  k=5 k=10 k=15 k=20 k=25 k=30", dim, dim + 1);
        for delta in [0.2, 0.4, 0.6, 0.8] {
            let its: Vec<usize> = ranks
                .iter()
                .map(|&k| {
                    run(
                        kind,
                        delta,
                        n - 1,
                        n,
                        MeshKind::Graded,
                        k,
                        &table_config(dim),
                    )
                    .2
                    .iterations
                })
                .collect();
            println!("    δ={delta}: {its:?}");
            if its.iter().any(|&i| i != its[0]) {
                pass = false;
                misses.push(format!("{dim}D δ={delta}"));
            }
        }
    }
    let summary = if pass {
        "iteration counts identical across k ∈ {5,…,30}".to_string()
    } else {
        format!("counts vary with k: {}", misses.join(", "))
    };
    outcome(pass, summary)
}

fn iterations_2d() -> Outcome {
    let mut pass = true;
    let mut misses = Vec::new();
    println!("  delta  32x32x32    64x64x64");
    for delta in [0.2, 0.4, 0.6, 0.8] {
        let mut row = format!("  {delta:<5}");
        for n in [32usize, 64] {
            let (_, _, r) = run(
                ProblemKind::Heat2d,
                delta,
                n - 1,
                n,
                MeshKind::Graded,
                20,
                &table_config(2),
            );
            row += &format!("  {:>2} ({:.3})", r.iterations, r.convergence_factor);
            if r.iterations != 9 || !(0.06..=0.09).contains(&r.convergence_factor) {
                pass = false;
                misses.push(format!("δ={delta} {n}^3"));
            }
        }
        println!("{row}");
    }
    let summary = if pass {
        "9 iterations, factor in [0.06, 0.09] everywhere".to_string()
    } else {
        format!("outside tolerance: {}", misses.join(", "))
    };
    outcome(pass, summary)
}

fn truncation_decay() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for delta in [0.2, 0.8] {
        let mesh = TemporalMesh::graded(1.0, 512, delta).unwrap();
        let l1 = L1Coefficients::new(&mesh, delta).unwrap();
        let dense = l1.assemble_dense();
        let mut errs = Vec::new();
        for k in 5..=20 {
            let h = HMatrix::build(
                &l1,
                HMatrixConfig {
                    rank: k,
                    ..HMatrixConfig::default()
                },
            )
            .unwrap();
            let approx = h.densify();
            let mut err = 0.0f64;
            for (b, kind) in h.leaves() {
                if kind != LeafKind::LowRank {
                    continue;
                }
                for m in b.row_lo..=b.row_hi {
                    for j in b.col_lo..=b.col_hi {
                        err = err.max((approx[[m - 1, j - 1]] - dense.entry(m, j)).abs());
                    }
                }
            }
            errs.push(err);
        }
        let ratio = (errs[15] / errs[0]).powf(1.0 / 15.0);
        println!(
            "  δ={delta}: max error k=5 {:.2e}, k=10 {:.2e}, k=15 {:.2e}, k=20 {:.2e}, mean ratio {ratio:.3}",
            errs[0], errs[5], errs[10], errs[15]
        );
        pass &= ratio <= 0.5 && errs[15] < errs[0];
        parts.push(format!("δ={delta} ratio {ratio:.3}"));
    }
    outcome(pass, format!("{} (≤ 0.5)", parts.join(", ")))
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    num / b.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn oracle_suite() -> Outcome {
    let (mut matvec, mut solve, mut entries, mut smoother, mut direct) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for delta in [0.2, 0.5, 0.8] {
        for mesh in [
            TemporalMesh::graded(1.0, 64, delta).unwrap(),
            TemporalMesh::uniform(1.0, 64).unwrap(),
        ] {
            let l1 = L1Coefficients::new(&mesh, delta).unwrap();
            let dense = l1.assemble_dense();
            let h = HMatrix::build(
                &l1,
                HMatrixConfig {
                    rank: 20,
                    leaf_size: 4,
                },
            )
            .unwrap();
            let x: Vec<f64> = test_field(64, 1, 3).iter().copied().collect();
            matvec = matvec.max(rel_diff(&h.matvec(&x).unwrap(), &dense.apply(&x).unwrap()));
            for shift in [0.0, 2.0, 8.0 / (PI / 8.0).powi(2)] {
                let got = h.shifted_forward_solve(shift, &x).unwrap();
                solve = solve.max(rel_diff(&got, &dense.shifted_solve(shift, &x).unwrap()));
            }
            for m in 1..=64 {
                for j in 1..=m {
                    let q = r_entry_by_quadrature(&mesh, delta, m, j);
                    entries = entries.max(((l1.entry(m, j) - q) / q).abs());
                }
            }
        }
    }
    for (dim, n, steps, delta) in [
        (1, 7, 32, 0.3),
        (1, 3, 64, 0.7),
        (2, 3, 16, 0.5),
        (2, 7, 8, 0.4),
    ] {
        let grid = SpatialGrid::new(dim, PI, n).unwrap();
        let mesh = TemporalMesh::graded(1.0, steps, delta).unwrap();
        let l1 = L1Coefficients::new(&mesh, delta).unwrap();
        let hierarchy = Hierarchy::new(
            grid,
            &l1,
            HMatrixConfig {
                rank: 20,
                leaf_size: 4,
            },
            1,
        )
        .unwrap();
        let np = grid.points();
        let k = space_time_matrix(
            &r_matrix_by_quadrature(&mesh, delta),
            &laplacian(dim, n, grid.h()),
        );
        let f = test_field(steps, np, 1);
        let mut u = test_field(steps, np, 2);
        let mut v = flatten(&u);
        hierarchy.smooth(0, &mut u, &f.view()).unwrap();
        let lvl = &hierarchy.levels()[0];
        block_gauss_seidel(&k, &flatten(&f), &mut v, np, &[lvl.red(), lvl.black()]);
        let want = unflatten(&v, steps, np);
        smoother = smoother.max(max_abs_diff(&u, &want) / max_abs(&want));
        let mut cfg = CycleConfig::for_dim(dim);
        cfg.tol = 1e-12;
        let (sol, _) = hierarchy.solve(&f.view(), &cfg).unwrap();
        let exact = unflatten(&k.clone().lu().solve(&flatten(&f)).unwrap(), steps, np);
        direct = direct.max(max_abs_diff(&sol, &exact) / max_abs(&exact));
    }
    let pass =
        matvec <= 1e-6 && solve <= 1e-6 && entries <= 1e-8 && smoother <= 1e-6 && direct <= 1e-6;
    outcome(
        pass,
        format!(
            "matvec {matvec:.1e}, forward solve {solve:.1e}, entries {entries:.1e}, smoother {smoother:.1e}, direct {direct:.1e}"
        ),
    )
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn complexity() -> Outcome {
    let steps = [256usize, 512, 1024, 2048, 4096];
    let mut times = Vec::new();
    for &m in &steps {
        // best of three to suppress scheduling noise
        let best = (0..3)
            .map(|_| {
                let start = Instant::now();
                run(
                    ProblemKind::Heat1d,
                    0.5,
                    127,
                    m,
                    MeshKind::Graded,
                    20,
                    &table_config(1),
                );
                start.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min);
        times.push(best);
    }
    let log_m: Vec<f64> = steps.iter().map(|&m| (m as f64).log2()).collect();
    let log_t: Vec<f64> = times.iter().map(|t| t.log2()).collect();
    let doubling = 2f64.powf(slope(&log_m, &log_t));
    let ratios: Vec<String> = times
        .windows(2)
        .map(|w| format!("{:.2}", w[1] / w[0]))
        .collect();
    println!(
        "  N=127, δ=0.5: times {:?} s, pairwise ratios {}",
        times
            .iter()
            .map(|t| (t * 1e3).round() / 1e3)
            .collect::<Vec<_>>(),
        ratios.join(" ")
    );
    let mut pass = doubling <= 2.6;
    let mut parts = vec![format!("time doubling ratio {doubling:.2} (≤ 2.6)")];
    for delta in [0.2, 0.4, 0.6, 0.8] {
        for kind in [MeshKind::Graded, MeshKind::Uniform] {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for &m in &steps {
                let mesh = TemporalMesh::new(kind, 1.0, m, delta).unwrap();
                let l1 = L1Coefficients::new(&mesh, delta).unwrap();
                let stored = HMatrix::build(&l1, HMatrixConfig::default())
                    .unwrap()
                    .storage_report()
                    .compressed_scalars();
                xs.push((m as f64 * (m as f64).log2()).ln());
                ys.push((stored as f64).ln());
            }
            let s = slope(&xs, &ys);
            println!("  storage δ={delta} {kind:?}: slope vs M log M {s:.3}");
            if kind == MeshKind::Graded && (s - 1.0).abs() > 0.25 {
                pass = false;
                parts.push(format!("graded δ={delta} storage slope {s:.3}"));
            }
        }
    }
    if pass {
        parts.push("graded storage slopes within 25% of 1".into());
    }
    outcome(pass, parts.join(", "))
}

fn invariants() -> Outcome {
    let mut row_sum = 0.0f64;
    let mut toeplitz = 0.0f64;
    let mut coverage = true;
    let mut linearity = 0.0f64;
    let mut monotone = true;
    for delta in [0.1, 0.3, 0.5, 0.7, 0.9] {
        for mesh in [
            TemporalMesh::graded(1.0, 200, delta).unwrap(),
            TemporalMesh::uniform(1.0, 200).unwrap(),
        ] {
            let l1 = L1Coefficients::new(&mesh, delta).unwrap();
            for m in 1..=200 {
                let sum: f64 = (1..=m).map(|j| l1.entry(m, j)).sum();
                let d = l1.d(m, m).unwrap();
                row_sum = row_sum.max((sum - d).abs() / d);
                if mesh.is_uniform() && m < 200 {
                    for j in 1..=m {
                        let a = l1.entry(m, j);
                        toeplitz = toeplitz.max((a - l1.entry(m + 1, j + 1)).abs() / a.abs());
                    }
                }
            }
            for leaf in [2usize, 7, 32] {
                let h = HMatrix::build(
                    &l1,
                    HMatrixConfig {
                        rank: 10,
                        leaf_size: leaf,
                    },
                )
                .unwrap();
                let mut seen = vec![0u8; 200 * 200];
                for (b, _) in h.leaves() {
                    for m in b.row_lo..=b.row_hi {
                        for j in b.col_lo..=b.col_hi {
                            seen[(m - 1) * 200 + j - 1] += 1;
                        }
                    }
                }
                coverage &= seen.iter().all(|&c| c == 1);
                let (x, y) = (test_field(200, 1, 1), test_field(200, 1, 2));
                let (x, y): (Vec<f64>, Vec<f64>) =
                    (x.iter().copied().collect(), y.iter().copied().collect());
                let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 1.7 * a - 0.3 * b).collect();
                let (hx, hy, hc) = (
                    h.matvec(&x).unwrap(),
                    h.matvec(&y).unwrap(),
                    h.matvec(&combo).unwrap(),
                );
                let scale = hx.iter().chain(&hy).fold(0.0f64, |m, v| m.max(v.abs()));
                for i in 0..200 {
                    linearity = linearity.max((hc[i] - (1.7 * hx[i] - 0.3 * hy[i])).abs() / scale);
                }
            }
        }
    }
    for (dim, n, delta) in [(1, 127, 0.2), (1, 255, 0.8), (2, 31, 0.4), (2, 15, 0.6)] {
        let (_, _, r) = run(
            if dim == 1 {
                ProblemKind::Heat1d
            } else {
                ProblemKind::Heat2d
            },
            delta,
            n,
            n + 1,
            MeshKind::Graded,
            20,
            &table_config(dim),
        );
        monotone &= r.converged && r.residuals.windows(2).all(|w| w[1] < w[0]);
    }
    let pass = row_sum <= 1e-12 && toeplitz <= 1e-13 && coverage && linearity <= 1e-13 && monotone;
    outcome(
        pass,
        format!(
            "row sums {row_sum:.1e}, Toeplitz {toeplitz:.1e}, partition {}, linearity {linearity:.1e}, residual monotone {}",
            if coverage { "exact" } else { "BROKEN" },
            if monotone { "yes" } else { "NO" }
        ),
    )
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("1D errors and reduction orders, N=1024", errors_and_orders),
        (
            "uniform vs graded orders, δ=0.4, N=2048",
            uniform_vs_graded_orders,
        ),
        ("1D V(0,1) iterations 128²…2048²", iterations_1d),
        ("rank robustness at 512² and 64³", rank_robustness),
        ("2D V(1,1) iterations 32³ and 64³", iterations_2d),
        ("low-rank truncation decay, M=512", truncation_decay),
        ("dense oracle equivalence", oracle_suite),
        ("complexity slopes, M=256…4096", complexity),
        ("invariants", invariants),
    ];
    let mut failed = 0;
    let mut lines = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        println!("criterion {} — {name}", i + 1);
        let start = Instant::now();
        let o = check();
        let line = format!(
            "criterion {}: {} — {name}: {} [{:.1}s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.summary,
            start.elapsed().as_secs_f64()
        );
        println!("{line}\n");
        failed += usize::from(!o.pass);
        lines.push(line);
    }
    println!("summary");
    for line in &lines {
        println!("{line}");
    }
    println!(
        "{} of {} criteria passed",
        lines.len() - failed,
        lines.len()
    );
    if failed > 0 && std::env::var_os("TFHEAT_ACCEPTANCE_STRICT").is_some_and(|v| v != "0") {
        std::process::exit(1);
    }
}
