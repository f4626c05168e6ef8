use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use meshcrit::critical::{
    convergence_scan, find_critical_charge, scan_near_critical, threshold_energy, EnergyRecord,
    ScaledProblem,
};
use meshcrit::eigensolve::EigenOptions;
use meshcrit::perimetric::MeshSpec;
use meshcrit::selftest::{run_all, SelftestOptions};
use meshcrit::Error;
use serde_json::json;

mod artifact;
mod config;

use config::{normalize_key, parse_config_text, render_snapshot, Command, RunConfig, UsageError};

const EXIT_OK: u8 = 0;
const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_BRACKET: u8 = 4;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "meshcrit",
    version,
    about = "Two-electron ion on a Lagrange-Laguerre mesh: energies and the critical charge"
)]
struct Cli {
    /// Worker threads (pins the reduction order for reproducible output)
    #[arg(long, global = true)]
    threads: Option<String>,
    /// Flat `key = value` file; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root for run directories [env: MESHCRIT_OUT_DIR]
    #[arg(long, global = true)]
    out_dir: Option<String>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Ground-state energy at one charge or coupling
    Solve(SolveArgs),
    /// Energies over lattice sizes, or over a charge window
    Scan(ScanArgs),
    /// Critical charge where the ionization energy vanishes
    Critical(CriticalArgs),
    /// Built-in consistency suites
    Selftest(SelftestArgs),
}

#[derive(Args, Debug, Default)]
struct MeshArgs {
    #[arg(long)]
    nx: Option<String>,
    /// Defaults to --nx
    #[arg(long)]
    ny: Option<String>,
    #[arg(long)]
    nz: Option<String>,
    #[arg(long)]
    hx: Option<String>,
    /// Defaults to --hx
    #[arg(long)]
    hy: Option<String>,
    #[arg(long)]
    hz: Option<String>,
    /// Eigensolver residual tolerance, relative to max(1, |E|)
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    maxiter: Option<String>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Nuclear charge
    #[arg(long = "Z")]
    z: Option<String>,
    /// Interelectron coupling 1/Z of the scaled Hamiltonian
    #[arg(long)]
    lambda: Option<String>,
    #[command(flatten)]
    mesh: MeshArgs,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[arg(long = "Z")]
    z: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// Near-critical sweep Z_lo:Z_hi:points on a single lattice
    #[arg(long)]
    z_range: Option<String>,
    /// Lattice values accept start:stop:step ranges and comma lists
    #[command(flatten)]
    mesh: MeshArgs,
}

#[derive(Args, Debug)]
struct CriticalArgs {
    /// Coupling bracket lo:hi
    #[arg(long)]
    bracket: Option<String>,
    /// Tolerance on the scaled ionization energy
    #[arg(long)]
    tol_i: Option<String>,
    /// Tolerance on the coupling
    #[arg(long)]
    tol_lambda: Option<String>,
    #[command(flatten)]
    mesh: MeshArgs,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    #[arg(long, hide = true)]
    perturb_weight: Option<String>,
}

fn put(map: &mut BTreeMap<String, String>, key: &str, v: &Option<String>) {
    if let Some(v) = v {
        map.insert(normalize_key(key), v.clone());
    }
}

impl MeshArgs {
    fn collect(&self, map: &mut BTreeMap<String, String>) {
        put(map, "nx", &self.nx);
        put(map, "ny", &self.ny);
        put(map, "nz", &self.nz);
        put(map, "hx", &self.hx);
        put(map, "hy", &self.hy);
        put(map, "hz", &self.hz);
        put(map, "tol", &self.tol);
        put(map, "maxiter", &self.maxiter);
    }
}

enum Failure {
    Usage(String),
    Solver(Error),
    Io(std::io::Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(m) | Error::Configuration(m) | Error::Domain(m) => {
                Failure::Usage(m)
            }
            e => Failure::Solver(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Usage(_) => EXIT_USAGE,
        Failure::Solver(Error::Bracket { .. }) => EXIT_BRACKET,
        Failure::Solver(Error::NotConverged { .. }) => EXIT_NOT_CONVERGED,
        Failure::Solver(_) | Failure::Io(_) => EXIT_NUMERIC,
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut map = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Failure::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    put(&mut map, "threads", &cli.threads);
    put(&mut map, "out_dir", &cli.out_dir);
    let command = match &cli.command {
        Sub::Solve(a) => {
            put(&mut map, "Z", &a.z);
            put(&mut map, "lambda", &a.lambda);
            // an explicit flag replaces the other one from the file
            match (&a.z, &a.lambda) {
                (Some(_), None) => {
                    map.remove("lambda");
                }
                (None, Some(_)) => {
                    map.remove("Z");
                }
                _ => {}
            }
            a.mesh.collect(&mut map);
            Command::Solve
        }
        Sub::Scan(a) => {
            put(&mut map, "Z", &a.z);
            put(&mut map, "lambda", &a.lambda);
            put(&mut map, "z_range", &a.z_range);
            a.mesh.collect(&mut map);
            Command::Scan
        }
        Sub::Critical(a) => {
            put(&mut map, "bracket", &a.bracket);
            put(&mut map, "tol_i", &a.tol_i);
            put(&mut map, "tol_lambda", &a.tol_lambda);
            a.mesh.collect(&mut map);
            Command::Critical
        }
        Sub::Selftest(a) => {
            put(&mut map, "perturb_weight", &a.perturb_weight);
            Command::Selftest
        }
    };
    Ok(RunConfig::from_map(command, &map)?)
}

fn eigen_options(cfg: &RunConfig) -> EigenOptions<f64> {
    EigenOptions {
        tol: cfg.tol,
        maxiter: cfg.maxiter,
        ..EigenOptions::default()
    }
}

fn single_spec(cfg: &RunConfig) -> MeshSpec {
    MeshSpec::new(
        cfg.nx[0] as usize,
        cfg.ny[0] as usize,
        cfg.nz[0] as usize,
        cfg.hx[0],
        cfg.hy[0],
        cfg.hz[0],
    )
}

/// What a command leaves behind besides its exit code.
struct Outcome {
    code: u8,
    rows: Vec<(EnergyRecord, i32)>,
    result: serde_json::Value,
}

fn print_record(r: &EnergyRecord) {
    println!(
        "{}  lambda = {}  E~ = {}  E = {}  I = {}  residual = {:e}  iterations = {}{}",
        r.spec,
        r.lambda,
        r.energy_scaled,
        r.energy,
        r.ionization,
        r.residual,
        r.iterations,
        if r.converged { "" } else { "  NOT CONVERGED" }
    );
}

fn cmd_solve(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let spec = single_spec(cfg);
    spec.validate()?;
    let sol = ScaledProblem::new(&spec, &eigen_options(cfg))?.solve(cfg.lambda, None)?;
    let r = sol.record;
    println!("mesh       {spec}");
    match cfg.z {
        Some(z) => {
            println!("Z          {z}");
            println!("lambda     {}", r.lambda);
            println!("E~         {}", r.energy_scaled);
            println!("E          {}", r.energy);
            println!("I          {}", r.ionization);
        }
        None => {
            println!("lambda     {}", r.lambda);
            println!("E~         {}", r.energy_scaled);
        }
    }
    println!("residual   {:e}", r.residual);
    println!("iterations {}", r.iterations);
    if !r.converged {
        println!("status     NOT CONVERGED");
    }
    let code = if r.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    };
    Ok(Outcome {
        code,
        rows: vec![(r, -1)],
        result: serde_json::Value::Null,
    })
}

fn cmd_scan(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let opts = eigen_options(cfg);
    if let Some((lo, hi, n)) = cfg.z_range {
        let spec = single_spec(cfg);
        spec.validate()?;
        let scan = scan_near_critical(&spec, lo, hi, n, &opts)?;
        for r in &scan.records {
            print_record(r);
        }
        for (k, d) in scan.second_differences.iter().enumerate() {
            println!("second difference at Z = {}: {d:e}", scan.records[k + 1].z);
        }
        let all_ok = scan
            .records
            .iter()
            .all(|r| r.converged && r.energy.is_finite());
        return Ok(Outcome {
            code: if all_ok { EXIT_OK } else { EXIT_NOT_CONVERGED },
            rows: scan.records.into_iter().map(|r| (r, -1)).collect(),
            result: json!({ "second_differences": scan.second_differences }),
        });
    }
    let z = cfg.z.expect("scan charge resolved");
    let points: Vec<(usize, usize, usize)> = cfg
        .nx
        .iter()
        .zip(&cfg.ny)
        .flat_map(|(&nx, &ny)| {
            cfg.nz
                .iter()
                .map(move |&nz| (nx as usize, ny as usize, nz as usize))
        })
        .collect();
    let scales: Vec<(f64, f64, f64)> = cfg
        .hx
        .iter()
        .zip(&cfg.hy)
        .flat_map(|(&hx, &hy)| cfg.hz.iter().map(move |&hz| (hx, hy, hz)))
        .collect();
    for &(nx, ny, nz) in &points {
        for &(hx, hy, hz) in &scales {
            MeshSpec::new(nx, ny, nz, hx, hy, hz).validate()?;
        }
    }
    let entries = convergence_scan(z, &points, &scales, &opts)?;
    for e in &entries {
        print_record(&e.record);
        println!("    stabilized digits {}", e.stabilized_digits);
    }
    let all_ok = entries.iter().all(|e| e.record.converged);
    Ok(Outcome {
        code: if all_ok { EXIT_OK } else { EXIT_NOT_CONVERGED },
        rows: entries
            .into_iter()
            .map(|e| (e.record, e.stabilized_digits))
            .collect(),
        result: serde_json::Value::Null,
    })
}

fn cmd_critical(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let spec = single_spec(cfg);
    spec.validate()?;
    let res = find_critical_charge(
        &spec,
        cfg.bracket,
        cfg.tol_i,
        cfg.tol_lambda,
        &eigen_options(cfg),
    )?;
    for r in &res.records {
        print_record(r);
    }
    println!("Z_cr       {}", res.z_critical);
    println!("lambda_cr  {}", res.lambda_critical);
    println!("E(Z_cr)    {}", res.energy());
    println!("E_th       {}", threshold_energy(res.z_critical));
    println!("|I|        {:e}", res.final_ionization.abs());
    if !res.converged {
        println!("status     NOT CONVERGED");
    }
    Ok(Outcome {
        code: if res.converged {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        },
        rows: res.records.iter().map(|r| (r.clone(), -1)).collect(),
        result: serde_json::to_value(&res).unwrap_or_default(),
    })
}

fn cmd_selftest(cfg: &RunConfig) -> Result<u8, Failure> {
    let opts = SelftestOptions {
        weight_perturbation: cfg.perturb_weight,
    };
    let reports = run_all(&opts)?;
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        println!("all {} suites passed", reports.len());
        Ok(EXIT_OK)
    } else {
        println!("{failed} of {} suites failed", reports.len());
        Ok(EXIT_NUMERIC)
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let cfg = resolve(cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot set up {n} threads: {e}")))?;
    }
    if cfg.command == Command::Selftest {
        return cmd_selftest(&cfg);
    }
    let started = Utc::now();
    let root = artifact::output_root(cfg.out_dir.as_deref());
    let dir = artifact::create_run_dir(&root, cfg.command.name(), started)?;
    let snapshot = cfg.snapshot();
    artifact::write_text(&dir, artifact::CONFIG_SNAPSHOT, &render_snapshot(&snapshot))?;

    let outcome = match cfg.command {
        Command::Solve => cmd_solve(&cfg),
        Command::Scan => cmd_scan(&cfg),
        Command::Critical => cmd_critical(&cfg),
        Command::Selftest => unreachable!("handled above"),
    };
    let (code, rows, result, error) = match outcome {
        Ok(o) => (o.code, o.rows, o.result, None),
        Err(f) => {
            let msg = match &f {
                Failure::Usage(m) => m.clone(),
                Failure::Solver(e) => e.to_string(),
                Failure::Io(e) => e.to_string(),
            };
            (
                exit_code(&f),
                Vec::new(),
                serde_json::Value::Null,
                Some((f, msg)),
            )
        }
    };
    artifact::write_records(&dir, &rows)?;
    let meta = json!({
        "command_line": std::env::args().collect::<Vec<_>>(),
        "config": snapshot,
        "version": format!("meshcrit {}", env!("CARGO_PKG_VERSION")),
        "started": started.to_rfc3339(),
        "finished": Utc::now().to_rfc3339(),
        "exit_code": code,
        "error": error.as_ref().map(|(_, m)| m.clone()),
        "result": result,
    });
    artifact::write_json(&dir, artifact::RUN_JSON, &meta)?;
    println!("run directory {}", dir.display());
    match error {
        Some((f, _)) => Err(f),
        None => Ok(code),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let code = exit_code(&f);
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}\n\nRun `meshcrit --help` for usage."),
                Failure::Solver(e) => eprintln!("error: {e}"),
                Failure::Io(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(code)
        }
    }
}
