//! Ground-state energies as functions of the nuclear charge, the ionization
//! energy, the critical charge where it vanishes, and convergence scans.
//!
//! Every solve uses the scaled Hamiltonian at `λ = 1/Z`; mesh scale
//! parameters always refer to the scaled coordinates. Energies convert as
//! `E = Z² Ẽ` and `I = E + Z²/2`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::eigensolve::{lowest_eigenpair, EigenOptions};
use crate::hamiltonian::{build_hamiltonian, HamiltonianOperator, StateVector};
use crate::perimetric::MeshSpec;
use crate::{Error, Result};

/// Default lattice when none is given.
pub const DEFAULT_POINTS: (usize, usize, usize) = (40, 40, 30);

/// Default bracket for the critical coupling, `Z ∈ [0.893, 0.952]`.
pub const DEFAULT_BRACKET: (f64, f64) = (1.05, 1.12);

/// Upper bound on function evaluations in [`find_critical_charge`].
pub const MAX_ROOT_EVALUATIONS: usize = 60;

/// One energy evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    #[serde(rename = "Z")]
    pub z: f64,
    pub lambda: f64,
    pub spec: MeshSpec,
    /// `Ẽ(λ)`.
    pub energy_scaled: f64,
    /// `E = Z² Ẽ`.
    pub energy: f64,
    /// `I = E + Z²/2`.
    pub ionization: f64,
    pub residual: f64,
    pub iterations: usize,
    pub wall_time_seconds: f64,
    pub converged: bool,
}

impl EnergyRecord {
    /// Record for `Ẽ(λ)`. At `λ = 0` the charge is infinite and so are the
    /// unscaled energies.
    pub fn from_scaled(
        spec: MeshSpec,
        lambda: f64,
        energy_scaled: f64,
        residual: f64,
        iterations: usize,
        wall_time_seconds: f64,
        converged: bool,
    ) -> Self {
        let z = lambda.recip();
        let z2 = z * z;
        let energy = z2 * energy_scaled;
        Self {
            z,
            lambda,
            spec,
            energy_scaled,
            energy,
            ionization: energy + 0.5 * z2,
            residual,
            iterations,
            wall_time_seconds,
            converged,
        }
    }

    /// Placeholder for an evaluation that failed outright.
    pub fn failed(spec: MeshSpec, lambda: f64) -> Self {
        Self::from_scaled(spec, lambda, f64::NAN, f64::NAN, 0, 0.0, false)
    }
}

/// A converged (or flagged) energy together with its eigenvector.
#[derive(Debug, Clone)]
pub struct Solution {
    pub record: EnergyRecord,
    pub vector: StateVector<f64>,
}

/// Outcome of [`find_critical_charge`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalResult {
    pub z_critical: f64,
    pub lambda_critical: f64,
    /// `Z_cr² (Ẽ(λ_cr) + ½)`.
    pub final_ionization: f64,
    /// `-Z_cr²/2`.
    pub threshold_energy: f64,
    /// `(λ, Ẽ, residual)` for every evaluation, in order.
    pub history: Vec<(f64, f64, f64)>,
    pub spec: MeshSpec,
    pub converged: bool,
    /// Full records of the evaluations in `history`.
    #[serde(skip)]
    pub records: Vec<EnergyRecord>,
}

impl CriticalResult {
    /// Energy at the critical charge, `Z_cr² Ẽ(λ_cr)`.
    pub fn energy(&self) -> f64 {
        self.final_ionization + self.threshold_energy
    }
}

/// `(hx, hy, hz)` used when the caller gives none.
pub fn default_h_schedule(z: f64) -> (f64, f64, f64) {
    if z >= 0.99 {
        (0.8, 0.8, 0.5)
    } else if z >= 0.93 {
        (1.0, 1.0, 0.5)
    } else if z >= 0.915 {
        (1.0, 1.0, 0.6)
    } else {
        (2.4, 2.4, 0.4)
    }
}

/// Default lattice with the charge-dependent scale parameters.
pub fn default_spec(z: f64) -> MeshSpec {
    let (nx, ny, nz) = DEFAULT_POINTS;
    let (hx, hy, hz) = default_h_schedule(z);
    MeshSpec::new(nx, ny, nz, hx, hy, hz)
}

/// `E_th = -Z²/2`, the energy of the one-electron ion plus a free electron.
pub fn threshold_energy(z: f64) -> f64 {
    -0.5 * z * z
}

/// A scaled Hamiltonian whose kinetic tables are reused across couplings.
#[derive(Debug, Clone)]
pub struct ScaledProblem {
    op: HamiltonianOperator<f64>,
    opts: EigenOptions<f64>,
}

impl ScaledProblem {
    pub fn new(spec: &MeshSpec, opts: &EigenOptions<f64>) -> Result<Self> {
        spec.validate()?;
        let op = build_hamiltonian(spec, 0.0, spec.is_exchange_symmetric())?;
        Ok(Self { op, opts: *opts })
    }

    pub fn spec(&self) -> &MeshSpec {
        self.op.spec()
    }

    pub fn options(&self) -> &EigenOptions<f64> {
        &self.opts
    }

    /// `Ẽ(λ)`, warm-started from `warm` when its dimensions fit.
    pub fn solve(&self, lambda: f64, warm: Option<&StateVector<f64>>) -> Result<Solution> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "coupling must be finite and non-negative, got {lambda}"
            )));
        }
        let start = Instant::now();
        let op = self.op.with_lambda(lambda);
        let warm = warm.filter(|v| v.dims() == op.dims());
        let res = lowest_eigenpair(&op, warm, &self.opts)?;
        let record = EnergyRecord::from_scaled(
            *self.spec(),
            lambda,
            res.energy,
            res.residual,
            res.iterations,
            start.elapsed().as_secs_f64(),
            res.converged,
        );
        if !res.converged {
            log::warn!(
                "eigensolver did not converge at lambda = {lambda} on {}: residual {:e} after {} iterations",
                self.spec(),
                res.residual,
                res.iterations
            );
        }
        Ok(Solution {
            record,
            vector: res.vector,
        })
    }
}

fn check_charge(z: f64) -> Result<()> {
    if z > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "nuclear charge must be positive and finite, got {z}"
        )))
    }
}

/// `Ẽ(λ)` on `spec`. Non-convergence is reported through `record.converged`.
pub fn ground_state_energy_scaled(
    spec: &MeshSpec,
    lambda: f64,
    warm: Option<&StateVector<f64>>,
    opts: &EigenOptions<f64>,
) -> Result<Solution> {
    ScaledProblem::new(spec, opts)?.solve(lambda, warm)
}

/// `E(Z) = Z² Ẽ(1/Z)`; the scale parameters of `spec` are in the scaled frame.
pub fn ground_state_energy(
    spec: &MeshSpec,
    z: f64,
    warm: Option<&StateVector<f64>>,
    opts: &EigenOptions<f64>,
) -> Result<Solution> {
    check_charge(z)?;
    ground_state_energy_scaled(spec, z.recip(), warm, opts)
}

/// `I(Z) = E(Z) + Z²/2`.
pub fn ionization_energy(spec: &MeshSpec, z: f64, opts: &EigenOptions<f64>) -> Result<f64> {
    Ok(ground_state_energy(spec, z, None, opts)?.record.ionization)
}

/// Result of [`safeguarded_root`].
#[derive(Debug, Clone, PartialEq)]
pub struct RootResult {
    pub x: f64,
    pub g: f64,
    /// Every evaluation `(x, g(x))` in order.
    pub history: Vec<(f64, f64)>,
    pub converged: bool,
}

/// Root of `g` on `[lo, hi]` by secant steps, falling back to bisection
/// whenever a step leaves the bracket or the bracket stops shrinking fast.
///
/// Stops once `|g| <= tol_g` or the bracket is narrower than `tol_x`, and
/// returns the evaluated point with the smallest `|g|`.
pub fn safeguarded_root<F>(
    mut g: F,
    lo: f64,
    hi: f64,
    tol_g: f64,
    tol_x: f64,
    max_evals: usize,
) -> Result<RootResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bracket must be ordered and finite, got [{lo}, {hi}]"
        )));
    }
    if !(tol_g >= 0.0 && tol_x >= 0.0) || max_evals < 2 {
        return Err(Error::InvalidArgument(
            "root tolerances must be non-negative and at least two evaluations allowed".into(),
        ));
    }
    let mut history = Vec::new();
    let mut eval = |x: f64, history: &mut Vec<(f64, f64)>| -> Result<f64> {
        let v = g(x)?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("root function is {v} at {x}")));
        }
        history.push((x, v));
        Ok(v)
    };
    let best = |history: &[(f64, f64)], converged: bool| {
        let &(x, g) = history
            .iter()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("history is never empty");
        RootResult {
            x,
            g,
            history: history.to_vec(),
            converged,
        }
    };

    let (mut a, mut b) = (lo, hi);
    let mut ga = eval(a, &mut history)?;
    if ga.abs() <= tol_g {
        return Ok(best(&history, true));
    }
    let gb = eval(b, &mut history)?;
    if gb.abs() <= tol_g {
        return Ok(best(&history, true));
    }
    if ga.signum() == gb.signum() {
        return Err(Error::Bracket {
            lo,
            hi,
            g_lo: ga,
            g_hi: gb,
        });
    }
    // the last two iterates drive the secant step
    let (mut x0, mut g0, mut x1, mut g1) = (a, ga, b, gb);
    let mut stalls = 0;
    while history.len() < max_evals {
        let width = b - a;
        if width <= tol_x {
            return Ok(best(&history, true));
        }
        let secant = x1 - g1 * (x1 - x0) / (g1 - g0);
        let x = if stalls < 2 && secant.is_finite() && secant > a && secant < b {
            secant
        } else {
            stalls = 0;
            0.5 * (a + b)
        };
        let gx = eval(x, &mut history)?;
        if gx.abs() <= tol_g || (x - x1).abs() <= tol_x {
            return Ok(best(&history, true));
        }
        if gx.signum() == ga.signum() {
            (a, ga) = (x, gx);
        } else {
            b = x;
        }
        stalls = if b - a > 0.7 * width { stalls + 1 } else { 0 };
        (x0, g0, x1, g1) = (x1, g1, x, gx);
    }
    Ok(best(&history, false))
}

/// Critical charge on `spec`: the root of `g(λ) = Ẽ(λ) + ½` inside
/// `bracket`, with each eigensolve warm-started from the previous one.
pub fn find_critical_charge(
    spec: &MeshSpec,
    bracket: (f64, f64),
    tol_i: f64,
    tol_lambda: f64,
    opts: &EigenOptions<f64>,
) -> Result<CriticalResult> {
    let (lo, hi) = bracket;
    if !(lo > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "critical-coupling bracket must be positive, got [{lo}, {hi}]"
        )));
    }
    let problem = ScaledProblem::new(spec, opts)?;
    let mut warm: Option<StateVector<f64>> = None;
    let mut records = Vec::new();
    let root = safeguarded_root(
        |lambda| {
            let sol = problem.solve(lambda, warm.as_ref())?;
            log::info!(
                "lambda = {lambda:.15}: E~ = {:.15}, residual {:e}, {} iterations",
                sol.record.energy_scaled,
                sol.record.residual,
                sol.record.iterations
            );
            records.push(sol.record.clone());
            if !sol.record.converged {
                return Err(Error::NotConverged {
                    lambda,
                    residual: sol.record.residual,
                    iterations: sol.record.iterations,
                });
            }
            warm = Some(sol.vector);
            Ok(sol.record.energy_scaled + 0.5)
        },
        lo,
        hi,
        tol_i,
        tol_lambda,
        MAX_ROOT_EVALUATIONS,
    )?;
    let z = root.x.recip();
    Ok(CriticalResult {
        z_critical: z,
        lambda_critical: root.x,
        final_ionization: z * z * root.g,
        threshold_energy: threshold_energy(z),
        history: records
            .iter()
            .map(|r| (r.lambda, r.energy_scaled, r.residual))
            .collect(),
        spec: *spec,
        converged: root.converged,
        records,
    })
}

/// A scan record with its stabilized-digit count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub record: EnergyRecord,
    /// Leading decimals shared with the reference energy, `-1` if undefined.
    pub stabilized_digits: i32,
}

/// Number of leading decimals two energies share once both are rounded to
/// 15 decimals.
pub fn shared_decimals(a: f64, b: f64) -> i32 {
    if !a.is_finite() || !b.is_finite() {
        return -1;
    }
    let fa = format!("{a:.15}");
    let fb = format!("{b:.15}");
    let (ia, da) = fa.split_once('.').expect("fixed format");
    let (ib, db) = fb.split_once('.').expect("fixed format");
    if ia != ib {
        return 0;
    }
    da.chars()
        .zip(db.chars())
        .take_while(|(x, y)| x == y)
        .count() as i32
}

fn spec_key(s: &MeshSpec) -> (usize, usize, usize, u64, u64, u64) {
    (
        s.nx,
        s.ny,
        s.nz,
        s.hx.to_bits(),
        s.hy.to_bits(),
        s.hz.to_bits(),
    )
}

/// Stabilized digits of each entry against the largest lattice; the largest
/// lattice itself is compared with the next largest. Entries are sorted by
/// lattice size and scale parameters.
pub fn stabilized_digits(records: Vec<EnergyRecord>) -> Vec<ScanEntry> {
    let mut records = records;
    records.sort_by(|a, b| {
        (a.spec.len(), spec_key(&a.spec))
            .cmp(&(b.spec.len(), spec_key(&b.spec)))
            .then(a.z.total_cmp(&b.z))
    });
    let n = records.len();
    let digits: Vec<i32> = (0..n)
        .map(|i| {
            if n < 2 {
                return -1;
            }
            let reference = if i == n - 1 { n - 2 } else { n - 1 };
            shared_decimals(records[i].energy, records[reference].energy)
        })
        .collect();
    records
        .into_iter()
        .zip(digits)
        .map(|(record, stabilized_digits)| ScanEntry {
            record,
            stabilized_digits,
        })
        .collect()
}

/// One energy per lattice in `points × scales`, at charge `z`.
///
/// Failed points are kept as flagged records; the scan continues.
pub fn convergence_scan(
    z: f64,
    points: &[(usize, usize, usize)],
    scales: &[(f64, f64, f64)],
    opts: &EigenOptions<f64>,
) -> Result<Vec<ScanEntry>> {
    check_charge(z)?;
    if points.is_empty() || scales.is_empty() {
        return Err(Error::InvalidArgument(
            "convergence scan needs at least one lattice and one scale set".into(),
        ));
    }
    let mut records = Vec::with_capacity(points.len() * scales.len());
    for &(nx, ny, nz) in points {
        for &(hx, hy, hz) in scales {
            let spec = MeshSpec::new(nx, ny, nz, hx, hy, hz);
            spec.validate()?;
            let record = match ground_state_energy(&spec, z, None, opts) {
                Ok(sol) => sol.record,
                Err(e) => {
                    log::warn!("scan point {spec} failed: {e}");
                    EnergyRecord::failed(spec, z.recip())
                }
            };
            records.push(record);
        }
    }
    Ok(stabilized_digits(records))
}

/// Output of [`scan_near_critical`].
#[derive(Debug, Clone, PartialEq)]
pub struct NearCriticalScan {
    pub records: Vec<EnergyRecord>,
    /// `E(Z_{k-1}) - 2E(Z_k) + E(Z_{k+1})` for the interior points.
    pub second_differences: Vec<f64>,
}

/// `E(Z)` on `n_points` equally spaced charges in `[z_lo, z_hi]`, each solve
/// warm-started from the previous one.
pub fn scan_near_critical(
    spec: &MeshSpec,
    z_lo: f64,
    z_hi: f64,
    n_points: usize,
    opts: &EigenOptions<f64>,
) -> Result<NearCriticalScan> {
    check_charge(z_lo)?;
    check_charge(z_hi)?;
    if !(z_lo < z_hi) {
        return Err(Error::InvalidArgument(format!(
            "charge range must satisfy Z_lo < Z_hi, got [{z_lo}, {z_hi}]"
        )));
    }
    if n_points < 3 {
        return Err(Error::InvalidArgument(format!(
            "near-critical scan needs at least 3 points, got {n_points}"
        )));
    }
    let problem = ScaledProblem::new(spec, opts)?;
    let step = (z_hi - z_lo) / (n_points - 1) as f64;
    let mut warm: Option<StateVector<f64>> = None;
    let mut records = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let z = if k == n_points - 1 {
            z_hi
        } else {
            z_lo + step * k as f64
        };
        match problem.solve(z.recip(), warm.as_ref()) {
            Ok(sol) => {
                records.push(sol.record);
                warm = Some(sol.vector);
            }
            Err(e) => {
                log::warn!("near-critical point Z = {z} failed: {e}");
                records.push(EnergyRecord::failed(*spec, z.recip()));
            }
        }
    }
    let second_differences = records
        .windows(3)
        .map(|w| w[0].energy - 2.0 * w[1].energy + w[2].energy)
        .collect();
    Ok(NearCriticalScan {
        records,
        second_differences,
    })
}
