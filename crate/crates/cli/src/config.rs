//! Key–value run configuration: TOML text, validated into a fully resolved [`RunConfig`].

use crate::CliError;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Apply,
    Solve,
    Extend,
    Geometry,
    Paraboloid,
    Barrier,
    Harnack,
    Holder,
    Cover,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Apply,
        Command::Solve,
        Command::Extend,
        Command::Geometry,
        Command::Paraboloid,
        Command::Barrier,
        Command::Harnack,
        Command::Holder,
        Command::Cover,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Apply => "apply",
            Command::Solve => "solve",
            Command::Extend => "extend",
            Command::Geometry => "geometry",
            Command::Paraboloid => "paraboloid",
            Command::Barrier => "barrier",
            Command::Harnack => "harnack",
            Command::Holder => "holder",
            Command::Cover => "cover",
        }
    }

    fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CoeffSource {
    Identity,
    Random { seed: u64 },
    /// Two columns `x,a` with one row per grid node.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Sine,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Extension,
    Ls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimate {
    #[serde(rename = "K")]
    K,
    #[serde(rename = "theta")]
    Theta,
    #[serde(rename = "constants")]
    Constants,
}

/// Every value a run uses, defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub s: f64,
    pub nodes: usize,
    pub levels: usize,
    pub coefficients: CoeffSource,
    pub lambda: f64,
    pub cap: f64,
    pub data: DataKind,
    pub data_seed: u64,
    pub seed: u64,
    pub trials: usize,
    pub threads: usize,
    pub mode: Mode,
    pub case: Option<u8>,
    pub z0: Option<f64>,
    pub radius: f64,
    pub gamma: f64,
    pub opening: f64,
    pub estimate: Estimate,
    pub samples: usize,
    pub refine: u32,
    pub mu: f64,
    pub residual_tol: f64,
    pub quad_tol: f64,
    pub trace_height: f64,
    pub planted_c: f64,
    pub points: usize,
    pub out: PathBuf,
}

/// Key, expected type, and a one-line description; the schema shown by `--help`.
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("command", "string", "subcommand name; must agree with the CLI subcommand"),
    ("s", "float", "fractional order in (0, 1); default 0.5"),
    ("nodes", "int", "base grid nodes on [0, 1], >= 10; default 65"),
    ("levels", "int", "extension z-levels, >= 4; default 40"),
    ("coefficients", "string", "identity | random | csv; default identity"),
    ("coeff_seed", "int", "seed of the random coefficient field; default 0"),
    ("coeff_file", "string", "x,a CSV when coefficients = csv"),
    ("lambda", "float", "lower ellipticity bound; default 0.5"),
    ("cap", "float", "upper ellipticity bound; default 2.0"),
    ("data", "string", "sine | random input data; default sine"),
    ("data_seed", "int", "seed of random input data; default 0"),
    ("seed", "int", "experiment RNG seed; default 0"),
    ("trials", "int", "ensemble size; default 10"),
    ("threads", "int", "worker threads, overridden by FRAC_THREADS; default 1"),
    ("mode", "string", "extension | ls (harnack, holder); default extension"),
    ("case", "int", "barrier case 1..4; default selected from s and z0"),
    ("z0", "float", "barrier section center height; default per case"),
    ("radius", "float", "barrier section radius; default 0.02"),
    ("gamma", "float", "barrier inner fraction in (0, 1); default 0.25"),
    ("opening", "float", "paraboloid or barrier opening a > 0; default 40 (paraboloid), 1 (barrier)"),
    ("estimate", "string", "K | theta | constants (geometry); default K"),
    ("samples", "int", "random samples for geometry estimates; default 10000"),
    ("refine", "int", "mesh doublings, 0..4; default 0"),
    ("mu", "float", "fraction mu in (0, 1) of the Holder exponent formula; default 0.5"),
    ("residual_tol", "float", "relative residual bound of the L^s solve; default 0.01"),
    ("quad_tol", "float", "quadrature tolerance; default 1e-6"),
    ("trace_height", "float", "lowest z used by the Neumann trace; default 0.01"),
    ("planted_c", "float", "planted covering decay constant in (0, 1); default 0.3"),
    ("points", "int", "random centers for the cube cover; default 400"),
    ("out", "string", "JSON report path; CSV rows go beside it; default out/<command>.json"),
];

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    validate(parse_table(text)?)
}

/// TOML text to a table; duplicate keys are reported by name.
pub fn parse_table(text: &str) -> Result<Table, CliError> {
    text.parse::<Table>().map_err(|e| {
        let mut msg = e.message().trim().to_string();
        if let Some(key) = e.span().and_then(|sp| text.get(sp)).map(str::trim).filter(|k| !k.is_empty()) {
            msg = format!("{msg} `{key}`");
        }
        CliError::Config(vec![msg])
    })
}

/// Collects every problem before failing.
pub fn validate(table: Table) -> Result<RunConfig, CliError> {
    let mut r = Reader { table, errors: Vec::new() };
    for key in r.table.keys() {
        if !SCHEMA.iter().any(|(k, _, _)| k == key) {
            r.errors.push(format!("unknown key `{key}`"));
        }
    }
    let command = match r.string("command") {
        Some(name) => Command::parse(&name).or_else(|| {
            r.errors.push(format!("`command`: unknown subcommand `{name}`"));
            None
        }),
        None => {
            r.errors.push("`command` is required".into());
            None
        }
    };
    let s = r.float("s", 0.5, |v| v > 0.0 && v < 1.0, "must lie in (0, 1)");
    let nodes = r.int("nodes", 65, |v| v >= 10, "must be >= 10") as usize;
    let levels = r.int("levels", 40, |v| v >= 4, "must be >= 4") as usize;
    let coeff_seed = r.int("coeff_seed", 0, |v| v >= 0, "must be >= 0") as u64;
    let coeff_file = r.string("coeff_file");
    let coefficients = match r.string("coefficients").as_deref().unwrap_or("identity") {
        "identity" => CoeffSource::Identity,
        "random" => CoeffSource::Random { seed: coeff_seed },
        "csv" => match coeff_file {
            Some(p) => CoeffSource::Csv { path: PathBuf::from(p) },
            None => {
                r.errors.push("`coeff_file` is required when coefficients = \"csv\"".into());
                CoeffSource::Identity
            }
        },
        other => {
            r.errors.push(format!("`coefficients`: expected identity, random or csv, got `{other}`"));
            CoeffSource::Identity
        }
    };
    let lambda = r.float("lambda", 0.5, |v| v > 0.0, "must be > 0");
    let cap = r.float("cap", 2.0, |v| v > 0.0 && v.is_finite(), "must be finite and > 0");
    if cap < lambda {
        r.errors.push(format!("`cap` ({cap}) must be >= `lambda` ({lambda})"));
    }
    let data = match r.string("data").as_deref().unwrap_or("sine") {
        "sine" => DataKind::Sine,
        "random" => DataKind::Random,
        other => {
            r.errors.push(format!("`data`: expected sine or random, got `{other}`"));
            DataKind::Sine
        }
    };
    let data_seed = r.int("data_seed", 0, |v| v >= 0, "must be >= 0") as u64;
    let seed = r.int("seed", 0, |v| v >= 0, "must be >= 0") as u64;
    let trials = r.int("trials", 10, |v| v >= 1, "must be >= 1") as usize;
    let threads = r.int("threads", 1, |v| v >= 1, "must be >= 1") as usize;
    let mode = match r.string("mode").as_deref().unwrap_or("extension") {
        "extension" => Mode::Extension,
        "ls" => Mode::Ls,
        other => {
            r.errors.push(format!("`mode`: expected extension or ls, got `{other}`"));
            Mode::Extension
        }
    };
    let case = r.opt_int("case", |v| (1..=4).contains(&v), "must be 1, 2, 3 or 4").map(|v| v as u8);
    let z0 = r.opt_float("z0", |v| v.is_finite(), "must be finite");
    let radius = r.float("radius", 0.02, |v| v > 0.0 && v.is_finite(), "must be finite and > 0");
    let gamma = r.float("gamma", 0.25, |v| v > 0.0 && v < 1.0, "must lie in (0, 1)");
    let default_opening = if command == Some(Command::Barrier) { 1.0 } else { 40.0 };
    let opening = r.float("opening", default_opening, |v| v > 0.0 && v.is_finite(), "must be finite and > 0");
    let estimate = match r.string("estimate").as_deref().unwrap_or("K") {
        "K" => Estimate::K,
        "theta" => Estimate::Theta,
        "constants" => Estimate::Constants,
        other => {
            r.errors.push(format!("`estimate`: expected K, theta or constants, got `{other}`"));
            Estimate::K
        }
    };
    let samples = r.int("samples", 10_000, |v| v >= 1, "must be >= 1") as usize;
    let refine = r.int("refine", 0, |v| (0..=4).contains(&v), "must lie in 0..=4") as u32;
    let mu = r.float("mu", 0.5, |v| v > 0.0 && v < 1.0, "must lie in (0, 1)");
    let residual_tol = r.float("residual_tol", 1e-2, |v| v > 0.0, "must be > 0");
    let quad_tol = r.float("quad_tol", 1e-6, |v| v > 0.0, "must be > 0");
    let trace_height = r.float("trace_height", 1e-2, |v| v > 0.0, "must be > 0");
    let planted_c = r.float("planted_c", 0.3, |v| v > 0.0 && v < 1.0, "must lie in (0, 1)");
    let points = r.int("points", 400, |v| v >= 1, "must be >= 1") as usize;
    let out = r.string("out").map(PathBuf::from);
    if !r.errors.is_empty() {
        return Err(CliError::Config(r.errors));
    }
    let command = command.expect("checked above");
    Ok(RunConfig {
        command,
        s,
        nodes,
        levels,
        coefficients,
        lambda,
        cap,
        data,
        data_seed,
        seed,
        trials,
        threads,
        mode,
        case,
        z0,
        radius,
        gamma,
        opening,
        estimate,
        samples,
        refine,
        mu,
        residual_tol,
        quad_tol,
        trace_height,
        planted_c,
        points,
        out: out.unwrap_or_else(|| PathBuf::from("out").join(format!("{command}.json"))),
    })
}

struct Reader {
    table: Table,
    errors: Vec<String>,
}

impl Reader {
    fn string(&mut self, key: &str) -> Option<String> {
        match self.table.get(key)? {
            Value::String(v) => Some(v.clone()),
            other => {
                self.errors.push(format!("`{key}`: expected a string, got {}", other.type_str()));
                None
            }
        }
    }

    fn opt_float(&mut self, key: &str, ok: impl Fn(f64) -> bool, rule: &str) -> Option<f64> {
        let v = match self.table.get(key)? {
            Value::Float(v) => *v,
            Value::Integer(v) => *v as f64,
            other => {
                self.errors.push(format!("`{key}`: expected a number, got {}", other.type_str()));
                return None;
            }
        };
        if !ok(v) {
            self.errors.push(format!("`{key}` = {v}: {rule}"));
            return None;
        }
        Some(v)
    }

    fn float(&mut self, key: &str, default: f64, ok: impl Fn(f64) -> bool, rule: &str) -> f64 {
        self.opt_float(key, ok, rule).unwrap_or(default)
    }

    fn opt_int(&mut self, key: &str, ok: impl Fn(i64) -> bool, rule: &str) -> Option<i64> {
        let v = match self.table.get(key)? {
            Value::Integer(v) => *v,
            other => {
                self.errors.push(format!("`{key}`: expected an integer, got {}", other.type_str()));
                return None;
            }
        };
        if !ok(v) {
            self.errors.push(format!("`{key}` = {v}: {rule}"));
            return None;
        }
        Some(v)
    }

    fn int(&mut self, key: &str, default: i64, ok: impl Fn(i64) -> bool, rule: &str) -> i64 {
        self.opt_int(key, ok, rule).unwrap_or(default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("command = \"harnack\"").unwrap();
        assert_eq!(c.command, Command::Harnack);
        assert_eq!((c.s, c.nodes, c.trials, c.threads), (0.5, 65, 10, 1));
        assert_eq!(c.coefficients, CoeffSource::Identity);
        assert_eq!(c.out, PathBuf::from("out/harnack.json"));
        assert_eq!(parse_config("command = \"barrier\"").unwrap().opening, 1.0);
    }

    #[test]
    fn s_equal_to_one_is_rejected() {
        let err = parse_config("command = \"apply\"\ns = 1.0").unwrap_err();
        assert!(matches!(&err, CliError::Config(v) if v.len() == 1 && v[0].contains("`s`")), "{err}");
    }

    #[test]
    fn duplicate_key_is_named() {
        let err = parse_config("command = \"apply\"\ns = 0.3\ns = 0.4").unwrap_err();
        assert!(err.to_string().contains("`s`"), "{err}");
    }

    #[test]
    fn errors_are_aggregated() {
        let err = parse_config("command = \"apply\"\ns = 2\nnodes = 3\nbogus = 1\nmode = \"fast\"\nlambda = 3.0").unwrap_err();
        match err {
            CliError::Config(v) => {
                assert_eq!(v.len(), 5, "{v:?}");
                assert!(v.iter().any(|m| m.contains("bogus")));
                assert!(v.iter().any(|m| m.contains("`cap`")));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn csv_coefficients_need_a_file() {
        assert!(parse_config("command = \"apply\"\ncoefficients = \"csv\"").is_err());
        let c = parse_config("command = \"apply\"\ncoefficients = \"csv\"\ncoeff_file = \"a.csv\"").unwrap();
        assert_eq!(c.coefficients, CoeffSource::Csv { path: "a.csv".into() });
    }

    #[test]
    fn schema_lists_every_key_once() {
        let mut keys: Vec<_> = SCHEMA.iter().map(|k| k.0).collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), SCHEMA.len());
    }
}
