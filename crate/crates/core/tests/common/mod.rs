//! Independent reference implementations used across the integration tests.
//!
//! Nothing here calls the library's densities, scores or quadrature: the
//! two-component, one-dimensional, unit-variance model is written out by hand
//! in joint-parameter coordinates, scores come from central differences of
//! those densities, and integrals use Gauss–Legendre rules.

#![allow(dead_code)]

use std::f64::consts::PI;

use clusterinfo::ScenarioKind;
use nalgebra::DMatrix;

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule over `[lo, hi]`.
pub fn composite_rule(lo: f64, hi: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (t, w) = gauss_legendre(order);
    let h = (hi - lo) / panels as f64;
    (0..panels)
        .flat_map(|p| {
            let a = lo + p as f64 * h;
            t.iter()
                .zip(&w)
                .map(move |(ti, wi)| (a + 0.5 * h * (ti + 1.0), 0.5 * h * wi))
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * variance)).exp() / (2.0 * PI * variance).sqrt()
}

/// An observation for the oracle: position, optional zero-based label,
/// optional extra feature.
#[derive(Debug, Clone, Copy)]
pub struct Obs {
    pub x: f64,
    pub y: Option<usize>,
    pub xp: Option<f64>,
}

/// `(a, b1, b2)` read from `u` in the scenario's coordinate order.
fn initial_params(kind: ScenarioKind, u: &[f64]) -> (f64, f64, f64) {
    match kind {
        ScenarioKind::PositiveLabeled { target: 0 } => (u[0], u[2], u[1]),
        ScenarioKind::PositiveLabeled { .. } => (u[0], u[1], u[2]),
        _ => (u[0], u[1], u[2]),
    }
}

/// `p(x, y | u)` of the initial model.
pub fn initial_joint(kind: ScenarioKind, u: &[f64], x: f64, y: usize) -> f64 {
    let (a, b1, b2) = initial_params(kind, u);
    if y == 0 {
        a * normal_pdf(x, b1, 1.0)
    } else {
        (1.0 - a) * normal_pdf(x, b2, 1.0)
    }
}

pub fn initial_marginal(kind: ScenarioKind, u: &[f64], x: f64) -> f64 {
    initial_joint(kind, u, x, 0) + initial_joint(kind, u, x, 1)
}

/// `p_a(z | u)`.
pub fn additional_density(kind: ScenarioKind, u: &[f64], z: Obs) -> f64 {
    let (a, b1, b2) = initial_params(kind, u);
    let n1 = normal_pdf(z.x, b1, 1.0);
    let n2 = normal_pdf(z.x, b2, 1.0);
    match kind {
        ScenarioKind::SameUnlabeled => a * n1 + (1.0 - a) * n2,
        ScenarioKind::SemiSupervisedLabeled => [a * n1, (1.0 - a) * n2][z.y.unwrap()],
        ScenarioKind::PositiveLabeled { target } => [n1, n2][target],
        ScenarioKind::AddedFeature => {
            let xp = z.xp.unwrap();
            a * n1 * normal_pdf(xp, u[3], 1.0) + (1.0 - a) * n2 * normal_pdf(xp, u[4], 1.0)
        }
        ScenarioKind::ClassPriorChange { labeled } => {
            let c = u[3];
            if labeled {
                [c * n1, (1.0 - c) * n2][z.y.unwrap()]
            } else {
                c * n1 + (1.0 - c) * n2
            }
        }
    }
}

/// Central-difference gradient of `ln f` in `u`.
pub fn fd_gradient(u: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..u.len())
        .map(|i| {
            let mut up = u.to_vec();
            let mut dn = u.to_vec();
            up[i] += h;
            dn[i] -= h;
            (f(&up).ln() - f(&dn).ln()) / (2.0 * h)
        })
        .collect()
}

fn outer_acc(m: &mut DMatrix<f64>, s: &[f64], weight: f64) {
    for i in 0..s.len() {
        for j in 0..s.len() {
            m[(i, j)] += weight * s[i] * s[j];
        }
    }
}

/// `(I_XY, I_X, I_Z)` for K = 2, d = 1, σ² = 1 by Gauss–Legendre quadrature
/// of finite-difference scores.
pub fn oracle_fisher(kind: ScenarioKind, u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    const H: f64 = 1e-5;
    let n = u.len();
    let (_, b1, b2) = initial_params(kind, u);
    let lo = b1.min(b2) - 13.0;
    let hi = b1.max(b2) + 13.0;
    let rule = composite_rule(lo, hi, 8, 40);
    let mut i_xy = DMatrix::zeros(n, n);
    let mut i_x = DMatrix::zeros(n, n);
    let mut i_z = DMatrix::zeros(n, n);
    for &(x, w) in &rule {
        for y in 0..2 {
            let p = initial_joint(kind, u, x, y);
            let s = fd_gradient(u, H, |v| initial_joint(kind, v, x, y));
            outer_acc(&mut i_xy, &s, w * p);
        }
        let p = initial_marginal(kind, u, x);
        let s = fd_gradient(u, H, |v| initial_marginal(kind, v, x));
        outer_acc(&mut i_x, &s, w * p);
        match kind {
            ScenarioKind::AddedFeature => {
                let feature_rule = composite_rule(u[3].min(u[4]) - 13.0, u[3].max(u[4]) + 13.0, 4, 40);
                for &(xp, wp) in &feature_rule {
                    let z = Obs {
                        x,
                        y: None,
                        xp: Some(xp),
                    };
                    let p = additional_density(kind, u, z);
                    let s = fd_gradient(u, H, |v| additional_density(kind, v, z));
                    outer_acc(&mut i_z, &s, w * wp * p);
                }
            }
            ScenarioKind::SemiSupervisedLabeled | ScenarioKind::ClassPriorChange { labeled: true } => {
                for y in 0..2 {
                    let z = Obs {
                        x,
                        y: Some(y),
                        xp: None,
                    };
                    let p = additional_density(kind, u, z);
                    if p > 0.0 {
                        let s = fd_gradient(u, H, |v| additional_density(kind, v, z));
                        outer_acc(&mut i_z, &s, w * p);
                    }
                }
            }
            // positive-labeled points all carry the target label
            _ => {
                let z = Obs { x, y: None, xp: None };
                let p = additional_density(kind, u, z);
                let s = fd_gradient(u, H, |v| additional_density(kind, v, z));
                outer_acc(&mut i_z, &s, w * p);
            }
        }
    }
    (i_xy, i_x, i_z)
}

/// Every scenario of a two-component model, both class-prior variants included.
pub fn all_kinds() -> [ScenarioKind; 6] {
    [
        ScenarioKind::SameUnlabeled,
        ScenarioKind::SemiSupervisedLabeled,
        ScenarioKind::PositiveLabeled { target: 0 },
        ScenarioKind::AddedFeature,
        ScenarioKind::ClassPriorChange { labeled: false },
        ScenarioKind::ClassPriorChange { labeled: true },
    ]
}

/// `u*` of the reference experiment for `kind`, written out by hand.
pub fn reference_u(kind: ScenarioKind) -> Vec<f64> {
    match kind {
        ScenarioKind::SameUnlabeled | ScenarioKind::SemiSupervisedLabeled => vec![0.3, 0.0, -2.0],
        ScenarioKind::PositiveLabeled { .. } => vec![0.3, -2.0, 0.0],
        ScenarioKind::AddedFeature => vec![0.3, 0.0, -2.0, 0.0, 0.0],
        ScenarioKind::ClassPriorChange { .. } => vec![0.3, 0.0, -2.0, 0.7],
    }
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
