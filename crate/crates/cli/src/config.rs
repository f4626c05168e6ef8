//! Run configuration: flags and a flat `key = value` file merged into one
//! typed [`RunConfig`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use meshcrit::critical::{default_h_schedule, DEFAULT_BRACKET, DEFAULT_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Scan,
    Critical,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Scan => "scan",
            Command::Critical => "critical",
            Command::Selftest => "selftest",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Command::Solve => &[
                "Z", "lambda", "nx", "ny", "nz", "hx", "hy", "hz", "tol", "maxiter",
            ],
            Command::Scan => &[
                "Z", "lambda", "nx", "ny", "nz", "hx", "hy", "hz", "tol", "maxiter", "z_range",
            ],
            Command::Critical => &[
                "nx",
                "ny",
                "nz",
                "hx",
                "hy",
                "hz",
                "tol",
                "maxiter",
                "bracket",
                "tol_i",
                "tol_lambda",
            ],
            Command::Selftest => &["perturb_weight"],
        }
    }
}

/// Keys every command accepts.
const COMMON: [&str; 3] = ["command", "threads", "out_dir"];

#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

/// Flag and file keys agree up to `-` versus `_`.
pub fn normalize_key(key: &str) -> String {
    let k = key.trim().replace('-', "_");
    if k.eq_ignore_ascii_case("z") {
        "Z".into()
    } else {
        k
    }
}

/// Parses a `key = value` file. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, UsageError> {
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return usage(format!("config line {}: expected key = value", no + 1));
        };
        map.insert(normalize_key(k), v.trim().to_string());
    }
    Ok(map)
}

/// Comma-separated list of `start:stop:step` ranges or single values.
/// `stop` is inclusive.
pub fn parse_list<T>(key: &str, text: &str) -> Result<Vec<T>, UsageError>
where
    T: FromStr + Copy + PartialOrd + Into<f64> + FromF64,
{
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim) {
        let fields: Vec<&str> = part.split(':').collect();
        match fields.as_slice() {
            [one] => out.push(parse_one::<T>(key, one)?),
            [a, b, c] => {
                let (start, stop, step) = (
                    parse_one::<T>(key, a)?.into(),
                    parse_one::<T>(key, b)?.into(),
                    parse_one::<T>(key, c)?.into(),
                );
                if !(step > 0.0) || start > stop {
                    return usage(format!("{key}: empty range {part}"));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                out.extend((0..count).map(|k| T::from_f64(start + step * k as f64)));
            }
            _ => {
                return usage(format!(
                    "{key}: expected start:stop:step or a value, got {part}"
                ))
            }
        }
    }
    if out.is_empty() {
        return usage(format!("{key}: empty list"));
    }
    Ok(out)
}

pub trait FromF64 {
    fn from_f64(x: f64) -> Self;
}

impl FromF64 for f64 {
    fn from_f64(x: f64) -> Self {
        // keep 0.1-step grids free of representation noise
        let r = (x * 1e12).round() / 1e12;
        if (r - x).abs() <= 1e-12 * x.abs().max(1.0) {
            r
        } else {
            x
        }
    }
}

impl FromF64 for u32 {
    fn from_f64(x: f64) -> Self {
        x.round() as u32
    }
}

fn parse_one<T: FromStr>(key: &str, text: &str) -> Result<T, UsageError> {
    text.trim()
        .parse()
        .or_else(|_| usage(format!("{key}: cannot parse {text:?}")))
}

fn parse_pair(key: &str, text: &str) -> Result<(f64, f64), UsageError> {
    match text.split(':').collect::<Vec<_>>().as_slice() {
        [a, b] => Ok((parse_one(key, a)?, parse_one(key, b)?)),
        _ => usage(format!("{key}: expected lo:hi, got {text}")),
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    /// Nuclear charge; `None` only for a pure `λ = 0` solve.
    pub z: Option<f64>,
    pub lambda: f64,
    pub nx: Vec<u32>,
    pub ny: Vec<u32>,
    pub nz: Vec<u32>,
    pub hx: Vec<f64>,
    pub hy: Vec<f64>,
    pub hz: Vec<f64>,
    pub tol: f64,
    pub maxiter: usize,
    pub bracket: (f64, f64),
    pub tol_i: f64,
    pub tol_lambda: f64,
    /// `(Z_lo, Z_hi, points)` of a near-critical sweep.
    pub z_range: Option<(f64, f64, usize)>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub perturb_weight: Option<f64>,
}

impl RunConfig {
    /// Builds the configuration from merged key-value settings.
    pub fn from_map(command: Command, map: &BTreeMap<String, String>) -> Result<Self, UsageError> {
        for key in map.keys() {
            if !COMMON.contains(&key.as_str()) && !command.keys().contains(&key.as_str()) {
                return usage(format!("{key} is not a setting of `{}`", command.name()));
            }
        }
        if let Some(c) = map.get("command") {
            if c != command.name() {
                return usage(format!(
                    "config is for `{c}`, but `{}` was requested",
                    command.name()
                ));
            }
        }
        let get = |k: &str| map.get(k).map(String::as_str);

        let z_flag: Option<f64> = get("Z").map(|v| parse_one("Z", v)).transpose()?;
        let lambda_flag: Option<f64> = get("lambda").map(|v| parse_one("lambda", v)).transpose()?;
        let z_range = get("z_range")
            .map(|v| -> Result<_, UsageError> {
                match v.split(':').collect::<Vec<_>>().as_slice() {
                    [a, b, n] => {
                        let r = (
                            parse_one::<f64>("z_range", a)?,
                            parse_one::<f64>("z_range", b)?,
                            parse_one::<usize>("z_range", n)?,
                        );
                        if !(r.0 > 0.0 && r.0 < r.1) || r.2 < 3 {
                            return usage("z_range needs 0 < Z_lo < Z_hi and at least 3 points");
                        }
                        Ok(r)
                    }
                    _ => usage(format!("z_range: expected Z_lo:Z_hi:points, got {v}")),
                }
            })
            .transpose()?;

        let (z, lambda) = match command {
            Command::Solve => match (z_flag, lambda_flag) {
                (Some(_), Some(_)) => return usage("give either --Z or --lambda, not both"),
                (None, None) => return usage("solve needs --Z or --lambda"),
                (Some(z), None) => (Some(z), z.recip()),
                (None, Some(l)) => ((l > 0.0).then(|| l.recip()), l),
            },
            Command::Scan => match (z_flag, lambda_flag, z_range) {
                (Some(_), Some(_), _) => return usage("give either --Z or --lambda, not both"),
                (Some(z), None, None) => (Some(z), z.recip()),
                (None, Some(l), None) if l > 0.0 => (Some(l.recip()), l),
                (None, None, Some((lo, hi, _))) => {
                    let mid = 0.5 * (lo + hi);
                    (Some(mid), mid.recip())
                }
                (_, _, Some(_)) => return usage("--z-range replaces --Z and --lambda"),
                _ => return usage("scan needs --Z (or a positive --lambda) or --z-range"),
            },
            Command::Critical => {
                let z = 0.5 * (DEFAULT_BRACKET.0.recip() + DEFAULT_BRACKET.1.recip());
                (Some(z), z.recip())
            }
            Command::Selftest => (None, 0.0),
        };
        if let Some(z) = z {
            if !(z > 0.0 && z.is_finite()) {
                return usage(format!("Z must be positive and finite, got {z}"));
            }
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return usage(format!(
                "lambda must be finite and non-negative, got {lambda}"
            ));
        }

        let bracket = get("bracket")
            .map(|v| parse_pair("bracket", v))
            .transpose()?
            .unwrap_or(DEFAULT_BRACKET);
        if !(bracket.0 > 0.0 && bracket.0 < bracket.1) {
            return usage(format!(
                "bracket must satisfy 0 < lo < hi, got {}:{}",
                bracket.0, bracket.1
            ));
        }

        // default lattice and the charge-dependent scales, taken at the
        // smallest charge a run visits since that state is the most diffuse
        let schedule_z = match (command, z_range) {
            (Command::Critical, _) => bracket.1.recip(),
            (_, Some((lo, _, _))) => lo,
            _ => z.unwrap_or(f64::INFINITY),
        };
        let (dhx, dhy, dhz) = default_h_schedule(schedule_z);
        let list_u = |k: &str, d: usize| -> Result<Vec<u32>, UsageError> {
            get(k).map_or(Ok(vec![d as u32]), |v| parse_list::<u32>(k, v))
        };
        let list_f = |k: &str, d: f64| -> Result<Vec<f64>, UsageError> {
            get(k).map_or(Ok(vec![d]), |v| parse_list::<f64>(k, v))
        };
        let nx = list_u("nx", DEFAULT_POINTS.0)?;
        let ny = match get("ny") {
            Some(v) => parse_list::<u32>("ny", v)?,
            None if get("nx").is_some() => nx.clone(),
            None => vec![DEFAULT_POINTS.1 as u32],
        };
        let nz = list_u("nz", DEFAULT_POINTS.2)?;
        let hx = list_f("hx", dhx)?;
        let hy = match get("hy") {
            Some(v) => parse_list::<f64>("hy", v)?,
            None if get("hx").is_some() => hx.clone(),
            None => vec![dhy],
        };
        let hz = list_f("hz", dhz)?;
        if nx.iter().chain(&ny).chain(&nz).any(|&n| n == 0) {
            return usage("lattice sizes must be positive");
        }
        if hx
            .iter()
            .chain(&hy)
            .chain(&hz)
            .any(|&h| !(h > 0.0 && h.is_finite()))
        {
            return usage("scale parameters must be positive and finite");
        }
        if command != Command::Scan
            && [nx.len(), ny.len(), nz.len(), hx.len(), hy.len(), hz.len()]
                .iter()
                .any(|&l| l != 1)
        {
            return usage(format!(
                "{} takes single mesh values, not ranges",
                command.name()
            ));
        }
        if z_range.is_some()
            && [nx.len(), ny.len(), nz.len(), hx.len(), hy.len(), hz.len()]
                .iter()
                .any(|&l| l != 1)
        {
            return usage("a near-critical sweep takes single mesh values");
        }
        if command == Command::Scan && z_range.is_none() && nx.len() != ny.len() {
            return usage("nx and ny ranges must have the same length");
        }
        if command == Command::Scan && z_range.is_none() && hx.len() != hy.len() {
            return usage("hx and hy ranges must have the same length");
        }

        let tol = get("tol").map_or(Ok(1e-12), |v| parse_one("tol", v))?;
        if !(tol >= 1e-14 && tol < 1.0) {
            return usage(format!("tol must lie in [1e-14, 1), got {tol}"));
        }
        let maxiter = get("maxiter").map_or(Ok(5000), |v| parse_one("maxiter", v))?;
        if maxiter == 0 {
            return usage("maxiter must be at least 1");
        }
        let tol_i = get("tol_i").map_or(Ok(1e-11), |v| parse_one("tol_i", v))?;
        if !(tol_i >= 1e-12) {
            return usage(format!("tol_i must be at least 1e-12, got {tol_i}"));
        }
        let tol_lambda = get("tol_lambda").map_or(Ok(1e-13), |v| parse_one("tol_lambda", v))?;
        if !(tol_lambda >= 0.0) {
            return usage(format!("tol_lambda must be non-negative, got {tol_lambda}"));
        }
        let threads = get("threads")
            .map(|v| parse_one::<usize>("threads", v))
            .transpose()?;
        if threads == Some(0) {
            return usage("threads must be at least 1");
        }
        let perturb_weight = get("perturb_weight")
            .map(|v| parse_one::<f64>("perturb_weight", v))
            .transpose()?;

        Ok(Self {
            command,
            z,
            lambda,
            nx,
            ny,
            nz,
            hx,
            hy,
            hz,
            tol,
            maxiter,
            bracket,
            tol_i,
            tol_lambda,
            z_range,
            threads,
            out_dir: get("out_dir").map(PathBuf::from),
            perturb_weight,
        })
    }

    /// Settings that reproduce this run when read back with [`parse_config_text`].
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
        }
        let mut m = BTreeMap::new();
        m.insert("command".into(), self.command.name().into());
        if let Some(t) = self.threads {
            m.insert("threads".into(), t.to_string());
        }
        match self.command {
            Command::Selftest => {
                if let Some(p) = self.perturb_weight {
                    m.insert("perturb_weight".into(), p.to_string());
                }
                return m;
            }
            Command::Solve | Command::Scan => {
                if let Some((lo, hi, n)) = self.z_range {
                    m.insert("z_range".into(), format!("{lo}:{hi}:{n}"));
                } else if self.command == Command::Solve && self.z.is_none() {
                    m.insert("lambda".into(), self.lambda.to_string());
                } else if let Some(z) = self.z {
                    m.insert("Z".into(), z.to_string());
                }
            }
            Command::Critical => {
                m.insert(
                    "bracket".into(),
                    format!("{}:{}", self.bracket.0, self.bracket.1),
                );
                m.insert("tol_i".into(), self.tol_i.to_string());
                m.insert("tol_lambda".into(), self.tol_lambda.to_string());
            }
        }
        m.insert("nx".into(), join(&self.nx));
        m.insert("ny".into(), join(&self.ny));
        m.insert("nz".into(), join(&self.nz));
        m.insert("hx".into(), join(&self.hx));
        m.insert("hy".into(), join(&self.hy));
        m.insert("hz".into(), join(&self.hz));
        m.insert("tol".into(), self.tol.to_string());
        m.insert("maxiter".into(), self.maxiter.to_string());
        m
    }
}

/// `key = value` lines, sorted by key.
pub fn render_snapshot(map: &BTreeMap<String, String>) -> String {
    map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}
