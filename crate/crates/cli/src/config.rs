use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qpspectra::operators::{convergents, golden_mean, Frequency, Rational, TrigPoly};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Tolerance names accepted by `--tol`, with their defaults.
pub const TOLERANCES: [(&str, f64); 3] = [("bundle", 1e-9), ("coupling", 1e-6), ("step_floor", 1e-10)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrequencySpec {
    Rational { p: i64, q: i64 },
    Irrational { alpha: f64 },
    /// The first `count` continued-fraction convergents of `alpha`.
    Convergents { alpha: f64, count: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl EnergyGrid {
    /// `lo:hi:n`, or a single energy.
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("energy grid '{s}' is not lo:hi:n or a number"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [e] => {
                let e: f64 = e.trim().parse().map_err(|_| bad())?;
                Ok(EnergyGrid { lo: e, hi: e, n: 1 })
            }
            [lo, hi, n] => Ok(EnergyGrid {
                lo: lo.trim().parse().map_err(|_| bad())?,
                hi: hi.trim().parse().map_err(|_| bad())?,
                n: n.trim().parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }

    pub fn points(&self) -> Vec<f64> {
        qpspectra::linalg::linspace(self.lo, self.hi, self.n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CocycleChoice {
    /// Transfer cocycle of the operator, `2d × 2d`, one site per step.
    Longrange,
    /// Strip cocycle, `d` sites per step.
    Dual,
}

/// Everything a run depends on. Fields left `null` are filled per subcommand
/// before the run and echoed resolved.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: String,
    pub command: String,
    pub hopping: TrigPoly,
    pub potential: TrigPoly,
    pub frequency: Option<FrequencySpec>,
    pub energies: Option<EnergyGrid>,
    pub x: Option<f64>,
    pub x_grid: usize,
    pub bloch_grid: usize,
    /// Sites of the finite sections used for the IDS.
    pub volume: usize,
    pub samples: Option<usize>,
    pub iterations: Option<usize>,
    pub eps: Option<Vec<f64>>,
    pub cocycle: Option<CocycleChoice>,
    pub transport_steps: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub seed: u64,
    pub out: PathBuf,
    pub suite: String,
    pub dump_frames: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: env!("CARGO_PKG_VERSION").into(),
            command: String::new(),
            hopping: TrigPoly::cosine(1.0),
            potential: TrigPoly::cosine(2.0),
            frequency: None,
            energies: None,
            x: None,
            x_grid: 256,
            bloch_grid: 64,
            volume: 2000,
            samples: None,
            iterations: None,
            eps: None,
            cocycle: None,
            transport_steps: 64,
            tolerances: TOLERANCES.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            seed: 0,
            out: PathBuf::from("out"),
            suite: "core".into(),
            dump_frames: false,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn poly(v: Value, what: &str) -> Result<TrigPoly, CliError> {
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("{what}: {e}")))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        serde_json::from_str(&read(path)?).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    /// A potential file holds either one polynomial (the potential) or an
    /// object with `hopping` and/or `potential`.
    pub fn load_potential(&mut self, path: &Path) -> Result<(), CliError> {
        let v: Value = serde_json::from_str(&read(path)?)
            .map_err(|e| CliError::Config(format!("potential {}: {e}", path.display())))?;
        if v.get("degree").is_some() {
            self.potential = poly(v, "potential")?;
            return Ok(());
        }
        let Value::Object(mut m) = v else {
            return Err(CliError::Config(format!("potential {}: expected a JSON object", path.display())));
        };
        let hop = m.remove("hopping");
        let pot = m.remove("potential");
        if let Some(k) = m.keys().next() {
            return Err(CliError::Config(format!("potential {}: unknown key '{k}'", path.display())));
        }
        if hop.is_none() && pot.is_none() {
            return Err(CliError::Config(format!("potential {}: no 'hopping' or 'potential'", path.display())));
        }
        if let Some(h) = hop {
            self.hopping = poly(h, "hopping")?;
        }
        if let Some(p) = pot {
            self.potential = poly(p, "potential")?;
        }
        Ok(())
    }

    pub fn load_hopping(&mut self, path: &Path) -> Result<(), CliError> {
        self.hopping = TrigPoly::from_json(&read(path)?)?;
        Ok(())
    }

    pub fn set_tolerance(&mut self, arg: &str) -> Result<(), CliError> {
        let (name, val) = arg
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--tol expects NAME=VAL, got '{arg}'")))?;
        let val: f64 = val.trim().parse().map_err(|_| CliError::Config(format!("tolerance '{name}': not a number")))?;
        self.tolerances.insert(name.trim().to_string(), val);
        Ok(())
    }

    /// `key=value` on the JSON form; dots descend into objects. The value is
    /// read as JSON and falls back to a string.
    pub fn apply_set(self, arg: &str) -> Result<Self, CliError> {
        let (key, raw) = arg
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects key=value, got '{arg}'")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut root = serde_json::to_value(&self).expect("config serializes");
        let path: Vec<&str> = key.trim().split('.').collect();
        let mut node = &mut root;
        for (i, part) in path.iter().enumerate() {
            let last = i + 1 == path.len();
            let Value::Object(map) = node else {
                return Err(CliError::Config(format!("--set {key}: '{}' is not an object", path[..i].join("."))));
            };
            // new tolerance names are allowed here and rejected by validation
            if !map.contains_key(*part) && !(last && i == 1 && path[0] == "tolerances") {
                return Err(CliError::Config(format!("--set {key}: unknown key")));
            }
            if last {
                map.insert(part.to_string(), value.clone());
                break;
            }
            node = map.get_mut(*part).expect("checked");
        }
        serde_json::from_value(root).map_err(|e| CliError::Config(format!("--set {key}: {e}")))
    }

    /// Fills the `null` fields with the defaults of `self.command`.
    pub fn resolve(&mut self) {
        let cmd = self.command.as_str();
        let golden = golden_mean();
        if self.frequency.is_none() {
            self.frequency = Some(match cmd {
                "spectrum" | "gaps" | "duality-check" | "holder" => FrequencySpec::Convergents { alpha: golden, count: 6 },
                _ => FrequencySpec::Irrational { alpha: golden },
            });
        }
        if self.energies.is_none() {
            let b = self.spectral_bound();
            self.energies = Some(match cmd {
                "splitting" | "blockdiag" => EnergyGrid { lo: 0.0, hi: 0.0, n: 1 },
                "transport" => EnergyGrid { lo: 0.0, hi: 1.0, n: 2 },
                _ => EnergyGrid { lo: -b, hi: b, n: 41 },
            });
        }
        if self.x.is_none() && cmd != "gaps" {
            self.x = Some(0.0);
        }
        if self.samples.is_none() {
            self.samples = Some(if cmd == "ids" { 32 } else { 16 });
        }
        if self.iterations.is_none() {
            self.iterations = Some(if cmd == "rotation" { 4000 } else { 20000 });
        }
        if self.eps.is_none() {
            self.eps = Some(match cmd {
                "acceleration" => qpspectra::cocycles::default_eps_grid(0.25),
                _ => vec![0.0],
            });
        }
        if self.cocycle.is_none() {
            self.cocycle = Some(match cmd {
                "splitting" | "blockdiag" | "transport" => CocycleChoice::Dual,
                _ => CocycleChoice::Longrange,
            });
        }
    }

    /// `‖v‖₁ + ‖w‖_∞` rounded up to a quarter, a bound on the spectrum.
    fn spectral_bound(&self) -> f64 {
        ((self.hopping.l1_norm() + self.potential.sup_norm()) * 4.0).ceil() / 4.0
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |m: String| Err(CliError::Config(m));
        for (name, &val) in &self.tolerances {
            if !TOLERANCES.iter().any(|(k, _)| k == name) {
                let known: Vec<&str> = TOLERANCES.iter().map(|(k, _)| *k).collect();
                return cfg(format!("unknown tolerance '{name}' (known: {})", known.join(", ")));
            }
            if !(val > 0.0 && val.is_finite()) {
                return cfg(format!("tolerance '{name}' must be positive, got {val}"));
            }
        }
        if let Some(g) = &self.energies {
            if g.n == 0 || !g.lo.is_finite() || !g.hi.is_finite() || g.lo > g.hi {
                return cfg(format!("energy grid {}:{}:{} is empty or reversed", g.lo, g.hi, g.n));
            }
        }
        for (name, v) in [
            ("x_grid", Some(self.x_grid)),
            ("bloch_grid", Some(self.bloch_grid)),
            ("volume", Some(self.volume)),
            ("samples", self.samples),
            ("iterations", self.iterations),
            ("transport_steps", Some(self.transport_steps)),
        ] {
            if v == Some(0) {
                return cfg(format!("{name} must be positive"));
            }
        }
        if self.x.is_some_and(|x| !x.is_finite()) {
            return cfg("x must be finite".into());
        }
        if self.eps.as_ref().is_some_and(|e| e.is_empty() || e.iter().any(|v| !v.is_finite())) {
            return cfg("eps must be a nonempty list of finite numbers".into());
        }
        match self.frequency {
            Some(FrequencySpec::Rational { p, q }) => {
                Rational::new(p, q)?;
            }
            Some(FrequencySpec::Irrational { alpha }) | Some(FrequencySpec::Convergents { alpha, .. })
                if !alpha.is_finite() =>
            {
                return cfg("alpha must be finite".into());
            }
            Some(FrequencySpec::Convergents { count: 0, .. }) => return cfg("convergent count must be positive".into()),
            _ => {}
        }
        if self.hopping.degree() == 0 {
            return Err(qpspectra::Error::DegenerateDegree.into());
        }
        Ok(())
    }

    pub fn tol(&self, name: &str) -> f64 {
        self.tolerances[name]
    }

    pub fn grid(&self) -> Vec<f64> {
        self.energies.expect("resolved").points()
    }

    /// Rational approximants to sweep over.
    pub fn rationals(&self) -> Result<Vec<Rational>, CliError> {
        match self.frequency.clone().expect("resolved") {
            FrequencySpec::Rational { p, q } => Ok(vec![Rational::new(p, q)?]),
            FrequencySpec::Convergents { alpha, count } => {
                let list: Vec<Rational> = convergents(alpha, i64::MAX / 4).into_iter().take(count).collect();
                if list.len() < count {
                    return Err(CliError::Config(format!("alpha = {alpha} has only {} convergents", list.len())));
                }
                Ok(list)
            }
            FrequencySpec::Irrational { .. } => Err(CliError::Config(format!(
                "{} needs rational frequencies: use --pq or --alpha-convergents",
                self.command
            ))),
        }
    }

    /// The single frequency of a cocycle run.
    pub fn frequency(&self) -> Result<Frequency, CliError> {
        match self.frequency.clone().expect("resolved") {
            FrequencySpec::Rational { p, q } => Ok(Frequency::rational(p, q)?),
            FrequencySpec::Irrational { alpha } => Ok(Frequency::irrational(alpha)),
            FrequencySpec::Convergents { .. } => Err(CliError::Config(format!(
                "{} takes a single frequency: use --pq or --alpha",
                self.command
            ))),
        }
    }
}
