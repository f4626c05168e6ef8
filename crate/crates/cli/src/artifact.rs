//! Per-run output directory with line-delimited records, a CSV table, run
//! metadata and the config snapshot.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use meshcrit::critical::EnergyRecord;
use serde::Serialize;

pub const RECORDS_JSONL: &str = "records.jsonl";
pub const RECORDS_CSV: &str = "records.csv";
pub const RUN_JSON: &str = "run.json";
pub const CONFIG_SNAPSHOT: &str = "config.txt";

pub const CSV_HEADER: [&str; 14] = [
    "Z",
    "lambda",
    "Nx",
    "Ny",
    "Nz",
    "hx",
    "hy",
    "hz",
    "energy",
    "ionization",
    "residual",
    "iterations",
    "wall_s",
    "stab_digits",
];

/// Output root: the flag, then `MESHCRIT_OUT_DIR`, then `meshcrit-runs`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os("MESHCRIT_OUT_DIR") {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => PathBuf::from("meshcrit-runs"),
    }
}

/// Creates a fresh `<timestamp>-<command>` directory under `root`. An
/// existing directory is never reused; clashes get a numeric suffix.
pub fn create_run_dir(root: &Path, command: &str, started: DateTime<Utc>) -> io::Result<PathBuf> {
    fs::create_dir_all(root)?;
    let stem = format!("{}-{command}", started.format("%Y%m%dT%H%M%S%.3fZ"));
    for k in 0..10_000 {
        let name = if k == 0 {
            stem.clone()
        } else {
            format!("{stem}-{k}")
        };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    Err(io::Error::new(
        io::ErrorKind::AlreadyExists,
        format!("no free run directory under {}", root.display()),
    ))
}

/// 17 significant digits; round-trips every finite double.
pub fn fmt_csv(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[derive(Serialize)]
struct JsonRecord<'a> {
    #[serde(flatten)]
    record: &'a EnergyRecord,
    stab_digits: i32,
}

/// Writes `records.jsonl` and `records.csv` with identical content.
pub fn write_records(dir: &Path, rows: &[(EnergyRecord, i32)]) -> io::Result<()> {
    let mut jsonl = BufWriter::new(File::create(dir.join(RECORDS_JSONL))?);
    for (record, stab_digits) in rows {
        serde_json::to_writer(
            &mut jsonl,
            &JsonRecord {
                record,
                stab_digits: *stab_digits,
            },
        )?;
        jsonl.write_all(b"\n")?;
    }
    jsonl.flush()?;

    let mut csv = csv::Writer::from_path(dir.join(RECORDS_CSV))?;
    csv.write_record(CSV_HEADER)?;
    for (r, stab) in rows {
        let s = &r.spec;
        csv.write_record([
            fmt_csv(r.z),
            fmt_csv(r.lambda),
            s.nx.to_string(),
            s.ny.to_string(),
            s.nz.to_string(),
            fmt_csv(s.hx),
            fmt_csv(s.hy),
            fmt_csv(s.hz),
            fmt_csv(r.energy),
            fmt_csv(r.ionization),
            fmt_csv(r.residual),
            r.iterations.to_string(),
            fmt_csv(r.wall_time_seconds),
            stab.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> io::Result<()> {
    fs::write(dir.join(name), text)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()
}
