//! Run configuration: `[section]` headers, `key = value` lines, `#` comments.
//! Matrices are written row by row with `;` between rows and `,` between
//! entries.
//!
//! ```text
//! [market]
//! sigma = 0.2, 0; 0.05, 0.3
//! mu = 0.08, 0.06
//! rate = 0.02
//! T = 1
//!
//! [utility]
//! variant = exp_sum
//! atoms = 2:1, 3:1
//!
//! [grid]
//! x_max = 50
//! x_extra = 12.206
//! nx = 200
//! nt = 100
//!
//! [checks]
//! ids = cm_bounds; curvature:expect=convex
//!
//! [output]
//! dir = out
//! formats = csv, json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use blackrt::fixtures::Fixture;
use blackrt::properties::{Check, Route, Subject};
use blackrt::{Atom, MarketParams, TabulatedR, UtilitySpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("line {line}: {message}")]
    Line { line: usize, message: String },

    #[error("missing {key} in [{section}]")]
    Missing { section: &'static str, key: &'static str },
}

fn at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Line {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

const SECTIONS: [&str; 5] = ["market", "utility", "grid", "checks", "output"];

/// Sections of `key = value` entries, with line numbers kept for errors.
#[derive(Debug, Default)]
struct Raw {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl Raw {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Raw::default();
        let mut current: Option<String> = None;
        for (k, line) in text.lines().enumerate() {
            let n = k + 1;
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| at(n, "section header must end with ']'"))?
                    .trim()
                    .to_ascii_lowercase();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(at(n, format!("unknown section [{name}]")));
                }
                if raw.sections.contains_key(&name) {
                    return Err(at(n, format!("section [{name}] appears twice")));
                }
                raw.sections.insert(name.clone(), BTreeMap::new());
                current = Some(name);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(n, format!("expected 'key = value', got '{line}'")))?;
            let section = current
                .as_ref()
                .ok_or_else(|| at(n, "entry before the first section header"))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(at(n, "empty key"));
            }
            let entries = raw.sections.get_mut(section).unwrap();
            if entries.contains_key(&key) {
                return Err(at(n, format!("duplicate key '{key}' in [{section}]")));
            }
            entries.insert(
                key,
                Entry {
                    value: value.trim().to_string(),
                    line: n,
                },
            );
        }
        Ok(raw)
    }

    fn section(&mut self, name: &str) -> Section {
        Section {
            entries: self.sections.remove(name).unwrap_or_default(),
        }
    }
}

struct Section {
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn number<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        self.take(key)
            .map(|e| {
                e.value
                    .parse()
                    .map_err(|_| at(e.line, format!("{key}: '{}' is not a valid number", e.value)))
            })
            .transpose()
    }

    /// Rejects keys nobody asked for.
    fn finish(self, section: &str) -> Result<(), ConfigError> {
        match self.entries.into_iter().min_by_key(|(_, e)| e.line) {
            Some((key, e)) => Err(at(e.line, format!("unknown key '{key}' in [{section}]"))),
            None => Ok(()),
        }
    }
}

fn numbers(e: &Entry, sep: char) -> Result<Vec<f64>, ConfigError> {
    e.value
        .split(sep)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| at(e.line, format!("'{s}' is not a number"))))
        .collect()
}

fn matrix(e: &Entry) -> Result<Vec<Vec<f64>>, ConfigError> {
    e.value
        .split(';')
        .map(|row| {
            numbers(
                &Entry {
                    value: row.to_string(),
                    line: e.line,
                },
                ',',
            )
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub x_max: f64,
    pub nx: usize,
    pub nt: usize,
    pub quad_order: Option<usize>,
    pub z_range: Option<(f64, f64)>,
    pub buffer: f64,
    /// Extra wealth nodes merged into the transform grid of `solve`.
    pub x_extra: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ChecksConfig {
    pub ids: Vec<Check>,
    pub tolerance: Option<f64>,
    pub route: Route,
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub csv: bool,
    pub json: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub market: MarketParams,
    pub utility: Subject,
    pub grid: GridConfig,
    pub checks: ChecksConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut raw = Raw::parse(text)?;
        let market = parse_market(raw.section("market"))?;
        let utility = parse_utility(raw.section("utility"), base)?;
        let grid = parse_grid(raw.section("grid"))?;
        let checks = parse_checks(raw.section("checks"))?;
        let output = parse_output(raw.section("output"), base)?;
        Ok(Self {
            market,
            utility,
            grid,
            checks,
            output,
        })
    }
}

fn parse_market(mut s: Section) -> Result<MarketParams, ConfigError> {
    let horizon_entry = s.take("T").or_else(|| s.take("horizon"));
    let Some(h) = horizon_entry else {
        return Err(ConfigError::Missing {
            section: "market",
            key: "T",
        });
    };
    let horizon: f64 = h
        .value
        .parse()
        .map_err(|_| at(h.line, format!("T: '{}' is not a number", h.value)))?;
    let market = if let Some(l) = s.take("lambda_sq") {
        if let Some(e) = s.take("sigma").or_else(|| s.take("mu")) {
            return Err(at(e.line, "give either lambda_sq or sigma and mu, not both"));
        }
        let l2: f64 = l.value.parse().map_err(|_| at(l.line, "lambda_sq is not a number"))?;
        MarketParams::with_lambda_sq(l2, horizon).map_err(|e| at(l.line, e.to_string()))?
    } else {
        let sigma = s.take("sigma").ok_or(ConfigError::Missing {
            section: "market",
            key: "sigma",
        })?;
        let mu = s.take("mu").ok_or(ConfigError::Missing {
            section: "market",
            key: "mu",
        })?;
        let rate = s.number::<f64>("rate")?.unwrap_or(0.0);
        MarketParams::new(&matrix(&sigma)?, &numbers(&mu, ',')?, rate, horizon)
            .map_err(|e| at(sigma.line, e.to_string()))?
    };
    s.finish("market")?;
    Ok(market)
}

fn parse_atoms(e: &Entry) -> Result<Vec<Atom>, ConfigError> {
    e.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (y, w) = pair
                .split_once(':')
                .ok_or_else(|| at(e.line, format!("atom '{pair}' is not exponent:weight")))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| at(e.line, format!("'{s}' is not a number")))
            };
            Ok(Atom::new(num(y)?, num(w)?))
        })
        .collect()
}

/// Two-column `x,r` table with an optional header line.
fn read_table(path: &Path, line: usize) -> Result<TabulatedR, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| at(line, format!("cannot read {}: {e}", path.display())))?;
    let (mut xs, mut rs) = (Vec::new(), Vec::new());
    for (k, row) in text.lines().enumerate() {
        let row = row.trim();
        if row.is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split(',').map(str::trim).collect();
        let parsed = match cols.as_slice() {
            [x, r] => x.parse::<f64>().ok().zip(r.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some((x, r)) => {
                xs.push(x);
                rs.push(r);
            }
            None if k == 0 => continue,
            None => {
                return Err(at(
                    line,
                    format!("{}:{}: expected two numbers 'x,r'", path.display(), k + 1),
                ))
            }
        }
    }
    TabulatedR::new(xs, rs).map_err(|e| at(line, format!("{}: {e}", path.display())))
}

fn parse_utility(mut s: Section, base: &Path) -> Result<Subject, ConfigError> {
    let variant = s.take("variant").ok_or(ConfigError::Missing {
        section: "utility",
        key: "variant",
    })?;
    let name_entry = s.take("name");
    let subject = match variant.value.as_str() {
        "exp_sum" | "cm_measure" => {
            let atoms = s.take("atoms").ok_or(ConfigError::Missing {
                section: "utility",
                key: "atoms",
            })?;
            let list = parse_atoms(&atoms)?;
            let spec = if variant.value == "exp_sum" {
                UtilitySpec::exp_sum(list)
            } else {
                UtilitySpec::cm_measure(list)
            }
            .map_err(|e| at(atoms.line, e.to_string()))?;
            let name = name_entry.map_or_else(|| variant.value.clone(), |e| e.value);
            Subject::from_spec(name, spec)
        }
        "fixture" => {
            let e = name_entry.ok_or(ConfigError::Missing {
                section: "utility",
                key: "name",
            })?;
            let f: Fixture = e
                .value
                .parse()
                .map_err(|err: blackrt::Error| at(e.line, err.to_string()))?;
            Subject::fixture(f)
        }
        "tabulated" => {
            let file = s.take("file").ok_or(ConfigError::Missing {
                section: "utility",
                key: "file",
            })?;
            let path = base.join(&file.value);
            let table = read_table(&path, file.line)?;
            let name = name_entry.map_or_else(|| "tabulated".to_string(), |e| e.value);
            Subject::from_spec(name, UtilitySpec::tabulated_r(table))
        }
        other => {
            return Err(at(
                variant.line,
                format!("unknown utility variant '{other}' (expected exp_sum, cm_measure, fixture or tabulated)"),
            ))
        }
    };
    s.finish("utility")?;
    Ok(subject)
}

fn parse_grid(mut s: Section) -> Result<GridConfig, ConfigError> {
    let positive = |v: Option<Entry>, name: &str, default: f64| -> Result<f64, ConfigError> {
        match v {
            None => Ok(default),
            Some(e) => match e.value.parse::<f64>() {
                Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
                _ => Err(at(
                    e.line,
                    format!("{name} must be a positive number, got '{}'", e.value),
                )),
            },
        }
    };
    let count = |v: Option<Entry>, name: &str, default: usize| -> Result<usize, ConfigError> {
        match v {
            None => Ok(default),
            Some(e) => match e.value.parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(at(
                    e.line,
                    format!("{name} must be a positive integer, got '{}'", e.value),
                )),
            },
        }
    };
    let x_max = positive(s.take("x_max"), "x_max", 50.0)?;
    let nx = count(s.take("nx"), "nx", 200)?;
    let nt = count(s.take("nt"), "nt", 100)?;
    let quad_order = match s.take("quad_order") {
        None => None,
        Some(e) => Some(count(Some(e), "quad_order", 0)?),
    };
    let z_range = match (s.take("z_min"), s.take("z_max")) {
        (None, None) => None,
        (Some(lo), Some(hi)) => {
            let (a, b) = (lo.value.parse::<f64>(), hi.value.parse::<f64>());
            match (a, b) {
                (Ok(a), Ok(b)) if a < b => Some((a, b)),
                _ => return Err(at(hi.line, "z_min and z_max must be numbers with z_min < z_max")),
            }
        }
        (Some(e), None) | (None, Some(e)) => return Err(at(e.line, "z_min and z_max go together")),
    };
    let buffer = match s.take("buffer") {
        None => blackrt::fd::DEFAULT_BUFFER,
        Some(e) => match e.value.parse::<f64>() {
            Ok(b) if b >= 0.0 => b,
            _ => return Err(at(e.line, "buffer must be a non-negative number")),
        },
    };
    let x_extra = match s.take("x_extra") {
        None => Vec::new(),
        Some(e) => numbers(&e, ',')?,
    };
    s.finish("grid")?;
    Ok(GridConfig {
        x_max,
        nx,
        nt,
        quad_order,
        z_range,
        buffer,
        x_extra,
    })
}

fn parse_checks(mut s: Section) -> Result<ChecksConfig, ConfigError> {
    let ids = match s.take("ids") {
        None => Vec::new(),
        Some(e) => e
            .value
            .split(';')
            .map(str::trim)
            .filter(|id| !id.is_empty())
            .map(|id| id.parse::<Check>().map_err(|err| at(e.line, err.to_string())))
            .collect::<Result<_, _>>()?,
    };
    let tolerance = match s.take("tolerance") {
        None => None,
        Some(e) => match e.value.parse::<f64>() {
            Ok(t) if t >= 0.0 => Some(t),
            _ => return Err(at(e.line, "tolerance must be a non-negative number")),
        },
    };
    let route = match s.take("route") {
        None => Route::Auto,
        Some(e) => match e.value.as_str() {
            "auto" => Route::Auto,
            "transform" => Route::Transform,
            "fd" => Route::Fd,
            other => return Err(at(e.line, format!("unknown route '{other}' (auto, transform or fd)"))),
        },
    };
    s.finish("checks")?;
    Ok(ChecksConfig { ids, tolerance, route })
}

fn parse_output(mut s: Section, base: &Path) -> Result<OutputConfig, ConfigError> {
    let dir = s.take("dir").map_or_else(|| base.join("out"), |e| base.join(e.value));
    let (mut csv, mut json) = (true, true);
    if let Some(e) = s.take("formats") {
        csv = false;
        json = false;
        for f in e.value.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            match f {
                "csv" => csv = true,
                "json" => json = true,
                other => return Err(at(e.line, format!("unknown format '{other}' (csv or json)"))),
            }
        }
    }
    s.finish("output")?;
    Ok(OutputConfig { dir, csv, json })
}
