//! Built-in consistency suites, runnable from the command line.

use std::fmt;

use crate::eigensolve::{dense_lowest, lowest_eigenpair, EigenOptions};
use crate::hamiltonian::{assemble_dense, build_hamiltonian, build_unscaled_hamiltonian};
use crate::perimetric::MeshSpec;
use crate::quadmesh::{gauss_laguerre_rule, BasisKind, LagrangeBasis};
use crate::Result;

/// Names of the suites, in the order they run.
pub const SUITES: [&str; 5] = [
    "quadrature-exactness",
    "derivative-oracle",
    "hermiticity",
    "dense-equivalence",
    "scaling-identity",
];

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SelftestOptions {
    /// Relative perturbation applied to the first weight of every rule in the
    /// exactness suite. Exists to show that the suite notices.
    pub weight_perturbation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed error divided by its tolerance; passes at `<= 1`.
    pub worst_ratio: f64,
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<22} {}  worst error/tolerance {:.3e}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.worst_ratio
        )
    }
}

fn report(name: &'static str, worst_ratio: f64) -> SuiteReport {
    SuiteReport {
        name,
        // NaN fails
        passed: worst_ratio <= 1.0,
        worst_ratio,
    }
}

/// Runs every suite. An `Err` means a suite could not run at all.
pub fn run_all(opts: &SelftestOptions) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        quadrature_exactness(opts.weight_perturbation)?,
        derivative_oracle()?,
        hermiticity()?,
        dense_equivalence()?,
        scaling_identity()?,
    ])
}

fn factorial(k: u32) -> f64 {
    (1..=k).fold(1.0, |a, b| a * b as f64)
}

/// `Σ w_i u_i^k = k!` for `k ≤ min(2n - 1, 30)`.
pub fn quadrature_exactness(perturbation: Option<f64>) -> Result<SuiteReport> {
    let mut worst = 0.0f64;
    for n in [1usize, 3, 10, 25, 40, 70] {
        let mut rule = gauss_laguerre_rule::<f64>(n)?;
        if let Some(rel) = perturbation {
            rule.perturb_weight(0, rel);
        }
        for k in 0..=(2 * n - 1).min(30) {
            let exact = factorial(k as u32);
            let m = rule.integrate_weighted(|u| u.powi(k as i32));
            worst = worst.max((m - exact).abs() / exact);
        }
    }
    Ok(report(SUITES[0], worst / 1e-12))
}

/// Derivative matrices against Richardson-extrapolated central differences.
pub fn derivative_oracle() -> Result<SuiteReport> {
    let mut worst = 0.0f64;
    for kind in [BasisKind::Standard, BasisKind::Regularized] {
        for n in [1usize, 5, 12] {
            let b = LagrangeBasis::new(gauss_laguerre_rule::<f64>(n)?, kind);
            let u = b.rule().nodes().to_vec();
            for i in 0..n {
                for p in 0..n {
                    let exact = b.deriv(i, p);
                    let mut best = f64::INFINITY;
                    for step in [1e-4, 3e-5, 1e-5, 3e-6, 1e-6] {
                        let h = step * u[p].max(1.0);
                        let c = |h: f64| -> Result<f64> {
                            Ok((b.eval(i, u[p] + h)? - b.eval(i, u[p] - h)?) / (2.0 * h))
                        };
                        let rich = (4.0 * c(0.5 * h)? - c(h)?) / 3.0;
                        best = best.min((rich - exact).abs());
                    }
                    let scale = exact.abs().max(b.node_value(i) / u[i].max(1.0)).max(1.0);
                    worst = worst.max(best / scale);
                }
            }
        }
    }
    Ok(report(SUITES[1], worst / 1e-8))
}

fn probe_specs() -> [MeshSpec; 3] {
    [
        MeshSpec::symmetric(5, 4, 0.8, 0.5),
        MeshSpec::new(5, 4, 3, 0.7, 1.1, 0.6),
        MeshSpec::new(3, 6, 4, 2.4, 1.0, 0.4),
    ]
}

/// The assembled operator is symmetric.
pub fn hermiticity() -> Result<SuiteReport> {
    let mut worst = 0.0f64;
    for spec in probe_specs() {
        let h = build_hamiltonian::<f64>(&spec, 1.0, false)?;
        let m = assemble_dense(&h)?;
        let scale = m.amax();
        worst = worst.max((&m - m.transpose()).amax() / scale);
    }
    Ok(report(SUITES[2], worst / 1e-13))
}

fn test_vector(n: usize, seed: usize) -> Vec<f64> {
    (0..n)
        .map(|k| ((k * 7 + seed * 13) as f64 * 0.618_033_988_749_894_9).sin())
        .collect()
}

/// Matrix-free products and the lowest iterative eigenvalue against the
/// assembled matrix.
pub fn dense_equivalence() -> Result<SuiteReport> {
    let mut worst = 0.0f64;
    for spec in probe_specs() {
        let h = build_hamiltonian::<f64>(&spec, 1.0, false)?;
        let m = assemble_dense(&h)?;
        let n = h.len();
        for seed in 0..4 {
            let x = test_vector(n, seed);
            let mut y = vec![0.0; n];
            h.apply_into(&x, &mut y);
            let dense = &m * nalgebra::DVector::from_vec(x);
            let err = y
                .iter()
                .zip(dense.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(err / m.amax() / 1e-12);
        }
        let exact = dense_lowest(&m)?;
        let it = lowest_eigenpair(&h, None, &EigenOptions::default())?;
        worst = worst.max((it.energy - exact).abs() / 1e-11);
    }
    Ok(report(SUITES[3], worst))
}

/// `H(Z)` on a mesh scaled by `1/Z` equals `Z² H̃(1/Z)`.
pub fn scaling_identity() -> Result<SuiteReport> {
    let z: f64 = 0.95;
    let spec = MeshSpec::symmetric(6, 6, 1.0, 0.5);
    let scaled = dense_lowest(&assemble_dense(&build_hamiltonian::<f64>(
        &spec,
        z.recip(),
        false,
    )?)?)?;
    let raw = dense_lowest(&assemble_dense(&build_unscaled_hamiltonian::<f64>(
        &spec.rescaled(z),
        z,
        false,
    )?)?)?;
    Ok(report(SUITES[4], (raw - z * z * scaled).abs() / 1e-13))
}
