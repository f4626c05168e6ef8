//! Checks against values that do not come from this code: the Golub-Welsch
//! eigenproblem for the Laguerre rule, the separable hydrogenic spectrum and
//! the Hylleraas-type helium energy.

use meshcrit::critical::ground_state_energy_scaled;
use meshcrit::eigensolve::EigenOptions;
use meshcrit::hamiltonian::{assemble_dense, build_hamiltonian};
use meshcrit::perimetric::MeshSpec;
use meshcrit::quadmesh::gauss_laguerre_rule;
use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights from the Jacobi matrix of the Laguerre recurrence.
fn golub_welsch(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        j[(k, k)] = (2 * k + 1) as f64;
        if k + 1 < n {
            j[(k, k + 1)] = (k + 1) as f64;
            j[(k + 1, k)] = (k + 1) as f64;
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

#[test]
fn laguerre_rule_matches_golub_welsch() {
    for n in [1, 2, 5, 17, 40] {
        let rule = gauss_laguerre_rule::<f64>(n).unwrap();
        let (nodes, weights) = golub_welsch(n);
        for k in 0..n {
            let (u, w) = (rule.nodes()[k], rule.raw_weights()[k]);
            assert!(
                (u - nodes[k]).abs() <= 1e-12 * nodes[k].max(1.0),
                "n={n} node {k}: {u} {}",
                nodes[k]
            );
            // eigenvector components carry absolute, not relative, accuracy
            assert!(
                (w - weights[k]).abs() <= 1e-13,
                "n={n} weight {k}: {w} {}",
                weights[k]
            );
        }
    }
}

#[test]
fn separable_limit_has_the_hydrogenic_spectrum() {
    // λ = 0: E = -1/(2 n1²) - 1/(2 n2²); the lowest levels are 1s², and 1s2s
    // twice (exchange-symmetric and antisymmetric)
    let h = build_hamiltonian::<f64>(&MeshSpec::symmetric(12, 10, 1.0, 1.0), 0.0, false).unwrap();
    let m = assemble_dense(&h).unwrap();
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    for (got, want) in ev.iter().zip([-1.0, -0.625, -0.625]) {
        assert!((got - want).abs() <= 1e-7, "{got} vs {want}");
    }
}

#[test]
fn helium_ground_state() {
    // nonrelativistic He with infinite nuclear mass, Z = 2, so λ = 1/2 and E = 4 Ẽ
    let reference = -2.903_724_377_034_119_6;
    let spec = MeshSpec::symmetric(24, 16, 0.5, 0.4);
    let sol = ground_state_energy_scaled(&spec, 0.5, None, &EigenOptions::default()).unwrap();
    assert!(sol.record.converged);
    let e = 4.0 * sol.record.energy_scaled;
    assert!((e - reference).abs() <= 1e-12, "{e}");
}

#[test]
fn single_precision_core_agrees_with_double() {
    let spec = MeshSpec::symmetric(6, 5, 0.8, 0.5);
    let lo = meshcrit::eigensolve::dense_lowest(
        &assemble_dense(&build_hamiltonian::<f32>(&spec, 1.0, false).unwrap()).unwrap(),
    )
    .unwrap();
    let hi = meshcrit::eigensolve::dense_lowest(
        &assemble_dense(&build_hamiltonian::<f64>(&spec, 1.0, false).unwrap()).unwrap(),
    )
    .unwrap();
    assert!((lo as f64 - hi).abs() <= 1e-5, "{lo} {hi}");
}
