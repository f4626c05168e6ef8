//! Acceptance criteria, one line each. Runs without the libtest harness so the
//! lines are printed whether or not a criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use meshcrit::critical::{
    find_critical_charge, ground_state_energy, ground_state_energy_scaled, scan_near_critical,
    threshold_energy, DEFAULT_BRACKET,
};
use meshcrit::eigensolve::{dense_lowest, lowest_eigenpair, EigenOptions};
use meshcrit::hamiltonian::{
    assemble_dense, build_hamiltonian, build_unscaled_hamiltonian, exchange_permute,
    HamiltonianOperator, StateVector,
};
use meshcrit::perimetric::MeshSpec;
use meshcrit::quadmesh::{gauss_laguerre_rule, BasisKind, LagrangeBasis};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

type Outcome = Result<(bool, String), meshcrit::Error>;

fn opts() -> EigenOptions<f64> {
    EigenOptions::default()
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> (bool, String) {
    let err = (got - want).abs();
    (
        err <= tol,
        format!("{name} = {got:.16} (ref {want}, |err| {err:.1e} <= {tol:.0e})"),
    )
}

fn energy_at(spec: MeshSpec, z: f64, want: f64, tol: f64) -> Outcome {
    let sol = ground_state_energy(&spec, z, None, &opts())?;
    let (ok, msg) = within("E", sol.record.energy, want, tol);
    Ok((
        ok && sol.record.converged,
        format!("{msg}, {} iterations", sol.record.iterations),
    ))
}

fn h_minus() -> Outcome {
    energy_at(
        MeshSpec::symmetric(50, 40, 0.8, 0.5),
        1.0,
        -0.527751016544377,
        5e-14,
    )
}

fn z095() -> Outcome {
    energy_at(
        MeshSpec::symmetric(50, 40, 1.0, 0.5),
        0.95,
        -0.4621246996838,
        2e-13,
    )
}

fn z092() -> Outcome {
    energy_at(
        MeshSpec::symmetric(70, 20, 1.0, 0.6),
        0.92,
        -0.425485281676,
        2e-12,
    )
}

fn critical_charge() -> Outcome {
    let z_ref = 0.911028224077;
    // the literature value the threshold reference is quoted for
    let z_full = 0.911_028_224_077_255_73;
    let spec = MeshSpec::symmetric(70, 20, 2.4, 0.4);
    let res = find_critical_charge(&spec, DEFAULT_BRACKET, 1e-11, 1e-13, &opts())?;
    let (ok_z, mz) = within("Z_cr", res.z_critical, z_ref, 1e-11);
    let (ok_e, me) = within("E(Z_cr)", res.energy(), -0.41498621253, 5e-12);
    let (ok_t, mt) = within(
        "E_th(Z_ref)",
        threshold_energy(z_full),
        -0.414986212532679,
        1e-15,
    );
    // the mesh energy at the literature charge, the other reading of the row
    let at_ref = ground_state_energy(&spec, z_full, None, &opts())?;
    let (ok_r, mr) = within("E(Z_ref)", at_ref.record.energy, -0.41498621253, 5e-12);
    let desk = find_critical_charge(
        &MeshSpec::symmetric(50, 20, 2.4, 0.4),
        DEFAULT_BRACKET,
        1e-11,
        1e-13,
        &opts(),
    )?;
    let (ok_d, md) = within("desk Z_cr", desk.z_critical, z_ref, 1e-8);
    Ok((
        ok_z && ok_e
            && ok_t
            && ok_r
            && ok_d
            && res.converged
            && desk.converged
            && at_ref.record.converged,
        format!(
            "{mz}; {me}; {mt}; {mr}, I(Z_ref) = {:.2e}; {md}; {} + {} solves",
            at_ref.record.ionization,
            res.history.len(),
            desk.history.len()
        ),
    ))
}

fn separable() -> Outcome {
    let sol =
        ground_state_energy_scaled(&MeshSpec::symmetric(30, 20, 1.0, 1.0), 0.0, None, &opts())?;
    let (ok, msg) = within("E~", sol.record.energy_scaled, -1.0, 1e-10);
    Ok((ok && sol.record.converged, msg))
}

fn random_vector(rng: &mut StdRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn rel_dev(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let d = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    d / scale
}

fn dense_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(6);
    let (mut worst_apply, mut worst_eig) = (0.0f64, 0.0f64);
    let mut meshes = 0;
    for nx in 1..=8 {
        for ny in 1..=8 {
            for nz in 1..=8 {
                let spec = MeshSpec::new(nx, ny, nz, 0.9, 1.1, 0.6);
                let h = build_hamiltonian::<f64>(&spec, 1.0, false)?;
                let m = assemble_dense(&h)?;
                let n = h.len();
                for _ in 0..20 {
                    let x = random_vector(&mut rng, n);
                    let mut y = vec![0.0; n];
                    h.apply_into(&x, &mut y);
                    let dense = &m * DVector::from_vec(x);
                    worst_apply = worst_apply.max(rel_dev(&y, dense.as_slice()));
                }
                let exact = dense_lowest(&m)?;
                let it = lowest_eigenpair(&h, None, &opts())?;
                worst_eig = worst_eig.max((it.energy - exact).abs());
                meshes += 1;
            }
        }
    }
    Ok((
        worst_apply <= 1e-12 && worst_eig <= 1e-11,
        format!(
            "{meshes} meshes: apply rel dev {worst_apply:.1e} <= 1e-12, eigenvalue dev {worst_eig:.1e} <= 1e-11"
        ),
    ))
}

/// Central differences at `h/2, h, 2h`, extrapolated twice (sixth order).
fn richardson(b: &LagrangeBasis<f64>, i: usize, u: f64, h: f64) -> Result<f64, meshcrit::Error> {
    let c = |h: f64| -> Result<f64, meshcrit::Error> {
        Ok((b.eval(i, u + h)? - b.eval(i, u - h)?) / (2.0 * h))
    };
    let (c1, c2, c4) = (c(0.5 * h)?, c(h)?, c(2.0 * h)?);
    let fine = (4.0 * c1 - c2) / 3.0;
    let coarse = (4.0 * c2 - c4) / 3.0;
    Ok((16.0 * fine - coarse) / 15.0)
}

fn quadrature_and_derivatives() -> Outcome {
    let mut worst_moment = 0.0f64;
    for n in 1..=70 {
        let rule = gauss_laguerre_rule::<f64>(n)?;
        let mut fact = 1.0;
        for k in 0..=(2 * n - 1).min(30) {
            if k > 0 {
                fact *= k as f64;
            }
            let m = rule.integrate_weighted(|u| u.powi(k as i32));
            worst_moment = worst_moment.max((m - fact).abs() / fact);
        }
    }
    let mut worst_fd = 0.0f64;
    for kind in [BasisKind::Standard, BasisKind::Regularized] {
        for n in [1usize, 2, 6, 12, 20] {
            let b = LagrangeBasis::new(gauss_laguerre_rule::<f64>(n)?, kind);
            let u = b.rule().nodes().to_vec();
            for i in 0..n {
                for p in 0..n {
                    let exact = b.deriv(i, p);
                    let mut best = f64::INFINITY;
                    for s in [1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6] {
                        let fd = richardson(&b, i, u[p], s * u[p].max(1.0))?;
                        best = best.min((fd - exact).abs());
                    }
                    let scale = exact.abs().max(b.node_value(i) / u[i].max(1.0)).max(1.0);
                    worst_fd = worst_fd.max(best / scale);
                }
            }
        }
    }
    Ok((
        worst_moment <= 1e-12 && worst_fd <= 1e-8,
        format!(
            "moment rel err {worst_moment:.1e} <= 1e-12, derivative vs FD {worst_fd:.1e} <= 1e-8"
        ),
    ))
}

fn scaling_identity() -> Outcome {
    let z: f64 = 0.95;
    let spec = MeshSpec::symmetric(6, 6, 1.0, 0.5);
    let scaled = assemble_dense(&build_hamiltonian::<f64>(&spec, z.recip(), false)?)?;
    let raw = assemble_dense(&build_unscaled_hamiltonian::<f64>(
        &spec.rescaled(z),
        z,
        false,
    )?)?;
    let target = &scaled * (z * z);
    let op_dev = (&raw - &target).amax() / target.amax();
    let e_dev = (dense_lowest(&raw)? - z * z * dense_lowest(&scaled)?).abs();
    Ok((
        op_dev <= 1e-13 && e_dev <= 1e-12,
        format!("operator rel dev {op_dev:.1e} <= 1e-13, energy dev {e_dev:.1e} <= 1e-12"),
    ))
}

fn apply(
    h: &HamiltonianOperator<f64>,
    v: &StateVector<f64>,
) -> Result<StateVector<f64>, meshcrit::Error> {
    h.apply(v)
}

fn symmetry() -> Outcome {
    let mut rng = StdRng::seed_from_u64(9);
    let mut worst_sym = 0.0f64;
    let mut worst_comm = 0.0f64;
    for spec in [
        MeshSpec::symmetric(5, 4, 0.8, 0.5),
        MeshSpec::symmetric(7, 3, 2.4, 0.4),
        MeshSpec::new(4, 6, 5, 0.7, 1.2, 0.6),
    ] {
        let h = build_hamiltonian::<f64>(&spec, 1.0, false)?;
        let m: DMatrix<f64> = assemble_dense(&h)?;
        worst_sym = worst_sym.max((&m - m.transpose()).amax() / m.amax());
        if spec.nx == spec.ny {
            for _ in 0..5 {
                let v = StateVector::from_vec(h.dims(), random_vector(&mut rng, h.len()))?;
                let hp = apply(&h, &exchange_permute(&v)?)?;
                let ph = exchange_permute(&apply(&h, &v)?)?;
                worst_comm = worst_comm.max(rel_dev(hp.as_slice(), ph.as_slice()));
            }
        }
    }
    // full space, no projection: the ground state must come out symmetric
    let spec = MeshSpec::symmetric(12, 8, 0.8, 0.5);
    let h = build_hamiltonian::<f64>(&spec, 1.0, false)?;
    let ev = lowest_eigenpair(&h, None, &opts())?;
    let pv = exchange_permute(&ev.vector)?;
    let asym = ev
        .vector
        .as_slice()
        .iter()
        .zip(pv.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok((
        worst_sym <= 1e-13 && worst_comm <= 1e-13 && asym <= 1e-10 && ev.converged,
        format!(
            "asymmetry {worst_sym:.1e} <= 1e-13, [H, P] {worst_comm:.1e} <= 1e-13, |v - Pv| {asym:.1e} <= 1e-10"
        ),
    ))
}

fn near_critical() -> Outcome {
    let scan = scan_near_critical(
        &MeshSpec::symmetric(50, 20, 2.4, 0.4),
        0.9111,
        0.9150,
        5,
        &opts(),
    )?;
    let e: Vec<f64> = scan.records.iter().map(|r| r.energy).collect();
    let finite = e.iter().all(|v| v.is_finite()) && scan.records.iter().all(|r| r.converged);
    let first = e
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max);
    let second = scan
        .second_differences
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    // the triangle inequality alone gives second <= 2 first; a kink or a
    // solver jump at this spacing would bring the two to the same order
    Ok((
        finite && second <= 0.1 * first,
        format!("E = {e:?}; max |second difference| {second:.2e} <= 0.1 x max |first| {first:.2e}"),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("H- benchmark (Z=1)", h_minus),
        ("Z=0.95", z095),
        ("Z=0.92", z092),
        ("critical charge", critical_charge),
        ("separable limit", separable),
        ("dense oracle", dense_oracle),
        ("quadrature and derivatives", quadrature_and_derivatives),
        ("scaling identity", scaling_identity),
        ("exchange symmetry", symmetry),
        ("near-critical smoothness", near_critical),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|k| k.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
