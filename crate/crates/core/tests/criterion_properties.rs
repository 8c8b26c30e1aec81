mod common;

use clusterinfo::blocks::{schur_inverse_block, shared_blocks, InverseBlock};
use clusterinfo::criterion::{
    baseline_error_coefficient, eigenvalues_shared, ic_value, joint_error_coefficient, VERDICT_TOL,
};
use clusterinfo::fisher::assemble_j;
use clusterinfo::linalg::principal_block;
use clusterinfo::{
    ic_report, layout_for, FisherMethod, FisherTriple, JointParameter, ParameterLayout, QuadratureGrid, Scenario,
    ScenarioKind, ScenarioSpec, Stream, Verdict,
};
use common::{all_kinds, reference_u};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Block layout with no scenario attached.
fn abstract_layout(d1: usize, d2: usize, d3: usize) -> ParameterLayout {
    ParameterLayout {
        kind: ScenarioKind::SameUnlabeled,
        k: 0,
        dim: 0,
        d1,
        d2,
        d3,
        psi_i: (0..d1 + d2).collect(),
        psi_a: (d1..d1 + d2 + d3).collect(),
        coords: Vec::new(),
    }
}

/// Symmetric positive definite `n × n` from a flat vector of `n²` entries.
fn spd(n: usize, entries: &[f64]) -> DMatrix<f64> {
    let b = DMatrix::from_row_slice(n, n, &entries[..n * n]);
    &b * b.transpose() + DMatrix::identity(n, n) * 0.1
}

fn embed(block: &DMatrix<f64>, start: usize, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    m.view_mut((start, start), block.shape()).copy_from(block);
    m
}

prop_compose! {
    /// A triple respecting the structural zeros of a `(d1, d2, d3)` layout.
    fn structured_triple()(d1 in 0usize..=3, d2 in 1usize..=4, d3 in 0usize..=3)
        (entries in prop::collection::vec(-1.0..1.0f64, 3 * 49), d1 in Just(d1), d2 in Just(d2), d3 in Just(d3))
        -> (FisherTriple, ParameterLayout) {
        let n = d1 + d2 + d3;
        let ni = d1 + d2;
        let na = d2 + d3;
        let triple = FisherTriple {
            i_xy: embed(&spd(ni, &entries[..49]), 0, n),
            i_x: embed(&spd(ni, &entries[49..98]), 0, n),
            i_z: embed(&spd(na, &entries[98..]), d1, n),
            at_point: JointParameter::new(vec![0.0; n]),
            method: FisherMethod::MonteCarlo { n_prime: 1 },
        };
        (triple, abstract_layout(d1, d2, d3))
    }
}

proptest! {
    #[test]
    fn error_coefficient_drop_equals_half_log_ic((triple, layout) in structured_triple(), alpha in 0.05..5.0f64) {
        let r = ic_report(&triple, &layout, alpha, VERDICT_TOL).unwrap();
        prop_assert!(r.consistency_residual() <= 1e-8, "residual {}", r.consistency_residual());
    }

    #[test]
    fn common_scaling_leaves_criterion_unchanged((triple, layout) in structured_triple(), c in 0.01..100.0f64) {
        let a = ic_report(&triple, &layout, 1.0, VERDICT_TOL).unwrap();
        let b = ic_report(&triple.scaled(c), &layout, 1.0, VERDICT_TOL).unwrap();
        for (x, y) in a.lambdas.iter().zip(&b.lambdas).chain(a.mus.iter().zip(&b.mus)) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
        }
        prop_assert!((a.ic - b.ic).abs() <= 1e-10 * a.ic);
    }

    #[test]
    fn increasing_in_alpha_when_sufficient_condition_holds((triple, layout) in structured_triple()) {
        let r = ic_report(&triple, &layout, 1.0, VERDICT_TOL).unwrap();
        prop_assume!(r.sufficient_holds);
        let values: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&a| ic_value(&r.lambdas, &r.mus, a).unwrap().1)
            .collect();
        prop_assert!(values.windows(2).all(|w| w[1] > w[0]), "{values:?}");
    }

    #[test]
    fn schur_block_equals_slice_of_inverse(n in 2usize..=20, entries in prop::collection::vec(-1.0..1.0f64, 400), split_frac in 0.0..1.0f64) {
        let m = spd(n, &entries);
        let split = ((n as f64) * split_frac) as usize;
        let full = m.clone().try_inverse().unwrap();
        let lead = schur_inverse_block(&m, split, InverseBlock::Leading, "m").unwrap();
        let trail = schur_inverse_block(&m, split, InverseBlock::Trailing, "m").unwrap();
        let scale = full.amax();
        prop_assert!((lead - principal_block(&full, 0, split)).amax() <= 1e-10 * scale);
        prop_assert!((trail - principal_block(&full, split, n - split)).amax() <= 1e-10 * scale);
    }

    #[test]
    fn shared_blocks_are_equivariant_under_shared_permutation((triple, layout) in structured_triple(), seed in any::<u64>()) {
        let n = layout.dim_u();
        let d2 = layout.d2;
        // a permutation of the shared coordinates only
        let mut shared: Vec<usize> = (0..d2).collect();
        let mut s = seed;
        for i in (1..d2).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shared.swap(i, (s >> 33) as usize % (i + 1));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for (i, &p) in shared.iter().enumerate() {
            perm[layout.d1 + i] = layout.d1 + p;
        }
        let permute = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| m[(perm[i], perm[j])]);
        let moved = FisherTriple {
            i_xy: permute(&triple.i_xy),
            i_x: permute(&triple.i_x),
            i_z: permute(&triple.i_z),
            ..triple.clone()
        };
        let a = shared_blocks(&triple, &layout).unwrap();
        let b = shared_blocks(&moved, &layout).unwrap();
        let back = |m: &DMatrix<f64>| DMatrix::from_fn(d2, d2, |i, j| m[(shared[i], shared[j])]);
        for (x, y) in [(&a.k22_tilde, &b.k22_tilde), (&a.l22_tilde, &b.l22_tilde), (&a.a22_tilde, &b.a22_tilde)] {
            prop_assert!((back(x) - y).amax() <= 1e-10 * (1.0 + x.amax()));
        }
    }
}

#[test]
fn layouts_overlap_exactly_on_the_shared_block() {
    for kind in all_kinds() {
        for (k, dim) in [(2, 1), (3, 2)] {
            let l = layout_for(kind, k, dim).unwrap();
            let mut overlap: Vec<usize> = l.psi_i.iter().filter(|i| l.psi_a.contains(i)).copied().collect();
            overlap.sort();
            assert_eq!(overlap, l.shared_range().collect::<Vec<_>>(), "{kind} k={k} dim={dim}");
        }
    }
}

fn quadrature_triple(kind: ScenarioKind) -> (FisherTriple, Scenario) {
    let s = Scenario::new(ScenarioSpec::new(kind, 1.0).unwrap(), 2, 1, 1.0).unwrap();
    let u = JointParameter::new(reference_u(kind));
    let t = FisherTriple::compute(
        &s,
        &u,
        FisherMethod::Quadrature(QuadratureGrid::default()),
        Stream::new(0),
    )
    .unwrap();
    (t, s)
}

#[test]
fn scenario_laws_at_reference() {
    let (t, s) = quadrature_triple(ScenarioKind::SemiSupervisedLabeled);
    let r = ic_report(&t, &s.layout, 1.0, VERDICT_TOL).unwrap();
    assert!(r.lambdas.iter().all(|l| (l - 1.0).abs() < 1e-6), "{:?}", r.lambdas);
    assert_eq!(r.verdict, Verdict::Effective);

    let (t, s) = quadrature_triple(ScenarioKind::SameUnlabeled);
    let r = ic_report(&t, &s.layout, 1.0, VERDICT_TOL).unwrap();
    assert!(r.mus.iter().all(|m| (m - 1.0).abs() < 1e-6), "{:?}", r.mus);
    assert!(r.lambdas.iter().all(|l| *l <= 1.0 + 1e-9), "{:?}", r.lambdas);
    assert_eq!(r.verdict, Verdict::Effective);
}

#[test]
fn baseline_coefficient_regression() {
    let (t, _) = quadrature_triple(ScenarioKind::SameUnlabeled);
    let c = baseline_error_coefficient(&t.i_xy, &t.i_x).unwrap();
    // independent Gauss–Legendre prototype value
    assert!((c - 1.3415638683154314).abs() < 1e-6, "{c}");
}

#[test]
fn small_alpha_approaches_baseline() {
    for kind in all_kinds() {
        let (t, s) = quadrature_triple(kind);
        let n = s.layout.d1 + s.layout.d2;
        let base = baseline_error_coefficient(&principal_block(&t.i_xy, 0, n), &principal_block(&t.i_x, 0, n)).unwrap();
        let near_zero = joint_error_coefficient(&assemble_j(&t, 1e-8).unwrap(), &s.layout).unwrap();
        let at_zero = joint_error_coefficient(&assemble_j(&t, 0.0).unwrap(), &s.layout).unwrap();
        assert!((near_zero - base).abs() < 1e-6, "{kind}: {near_zero} vs {base}");
        assert_eq!(at_zero, base, "{kind}");
    }
}

#[test]
fn dominant_additional_information_removes_the_error() {
    let (t, s) = quadrature_triple(ScenarioKind::SameUnlabeled);
    let heavy = FisherTriple { i_z: &t.i_z * 1e6, ..t };
    let c = joint_error_coefficient(&assemble_j(&heavy, 1.0).unwrap(), &s.layout).unwrap();
    assert!(c.abs() < 1e-3, "{c}");
}

#[test]
fn semi_supervised_coefficient_two_ways() {
    let (t, s) = quadrature_triple(ScenarioKind::SemiSupervisedLabeled);
    for alpha in [0.3, 1.0, 2.5] {
        let direct = joint_error_coefficient(&assemble_j(&t, alpha).unwrap(), &s.layout).unwrap();
        // eigenvalues ν of I_XY I_X⁻¹: ½ Σ ln[(1 + α) ν / (1 + α ν)]
        let chol = t.i_x.clone().cholesky().unwrap();
        let l_inv = chol.l().try_inverse().unwrap();
        let whitened = &l_inv * &t.i_xy * l_inv.transpose();
        let nu = whitened.symmetric_eigen().eigenvalues;
        let via_eigen: f64 = nu
            .iter()
            .map(|v| 0.5 * ((1.0 + alpha) * v / (1.0 + alpha * v)).ln())
            .sum();
        assert!((direct - via_eigen).abs() < 1e-9, "α={alpha}: {direct} vs {via_eigen}");
    }
}

#[test]
fn shared_eigenvalues_are_positive_at_reference() {
    for kind in all_kinds() {
        let (t, s) = quadrature_triple(kind);
        let (l, m) = eigenvalues_shared(&shared_blocks(&t, &s.layout).unwrap()).unwrap();
        assert!(l.iter().chain(&m).all(|v| *v > 0.0), "{kind}");
    }
}
