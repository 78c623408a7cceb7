//! Flat `key = value` project configuration.
//!
//! Blank lines and `#` comments are ignored. Lists are comma or whitespace
//! separated. Relative paths are resolved against the config file's
//! directory. Every key is optional; the defaults are listed in
//! [`ProjectConfig::default`] and in `configs/default.cfg`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use empc_core::augment::DisturbanceModel;
use empc_core::condense::MpcSpec;
use empc_core::motor::MotorParams;
use empc_core::pi::PiConfig;
use empc_core::runtime::ScalarWidth;
use nalgebra::{Complex, DMatrix};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("{path}:{line}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectConfig {
    pub motor: MotorParams,
    pub ts: f64,
    /// Number of disturbance states.
    pub p: usize,
    /// Row-major n×p, n = 2 for the speed/position model. `None` means zero.
    pub bd: Option<Vec<f64>>,
    /// Row-major 1×p. `None` means ones.
    pub cd: Option<Vec<f64>>,
    pub observer_poles: Vec<Complex<f64>>,
    pub horizon: usize,
    pub q: f64,
    pub r: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub pi_kp: f64,
    pub pi_ki: f64,
    pub pi_clamp: bool,
    pub scenario: Option<PathBuf>,
    pub out: PathBuf,
    /// Law table file; defaults to `<out>/law.empc`.
    pub table: Option<PathBuf>,
    pub scalar_width: ScalarWidth,
    pub seed: u64,
    pub validation_samples: usize,
    pub endpoint: String,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        let pi = PiConfig::default();
        ProjectConfig {
            motor: MotorParams::REFERENCE,
            ts: 1e-3,
            p: 1,
            bd: None,
            cd: None,
            // the position mode is unobservable, so one pole per observable
            // dimension (speed and disturbance)
            observer_poles: vec![Complex::new(0.5, 0.0), Complex::new(0.6, 0.0)],
            horizon: 2,
            q: 1.0,
            r: 1.0,
            u_min: 0.0,
            u_max: 24.0,
            pi_kp: pi.kp,
            pi_ki: pi.ki,
            pi_clamp: pi.clamp,
            scenario: None,
            out: PathBuf::from("out"),
            table: None,
            scalar_width: ScalarWidth::Eight,
            seed: 1,
            validation_samples: 1000,
            endpoint: String::from("127.0.0.1:5555"),
        }
    }
}

impl ProjectConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Ok(Self::parse(&text, &path.display().to_string(), base)?)
    }

    pub fn parse(text: &str, name: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg = ProjectConfig::default();
        let mut seen = HashSet::new();
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            last_line = line_no;
            let err = |message: String| ConfigError {
                path: name.to_string(),
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(err(format!("empty value for `{key}`")));
            }
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value, base).map_err(err)?;
        }
        cfg.check().map_err(|message| ConfigError {
            path: name.to_string(),
            line: last_line,
            message,
        })?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), String> {
        let path = |v: &str| base.join(v);
        match key {
            "km" => self.motor.km = float(value)?,
            "J" => self.motor.j = float(value)?,
            "fm" => self.motor.fm = float(value)?,
            "Ra" => self.motor.ra = float(value)?,
            "La" => self.motor.la = float(value)?,
            "Ts" => self.ts = positive(value)?,
            "p" => self.p = count(value)?,
            "Bd" => self.bd = Some(list(value)?),
            "Cd" => self.cd = Some(list(value)?),
            "observer.poles" => {
                self.observer_poles = split(value).map(complex).collect::<Result<_, _>>()?;
            }
            "N" => self.horizon = count(value)?,
            "Q" => self.q = float(value)?,
            "R" => self.r = float(value)?,
            "u_min" => self.u_min = float(value)?,
            "u_max" => self.u_max = float(value)?,
            "pi.kp" => self.pi_kp = float(value)?,
            "pi.ki" => self.pi_ki = float(value)?,
            "pi.clamp" => self.pi_clamp = boolean(value)?,
            "scenario" => self.scenario = Some(path(value)),
            "out" => self.out = path(value),
            "table" => self.table = Some(path(value)),
            "scalar_width" => self.scalar_width = width(value)?,
            "seed" => self.seed = value.parse().map_err(|_| format!("`{value}` is not an unsigned integer"))?,
            "validation.samples" => self.validation_samples = count(value)?,
            "serve.endpoint" => self.endpoint = value.to_string(),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Cross-key checks that cannot be made line by line.
    fn check(&self) -> Result<(), String> {
        let n = 2;
        if let Some(bd) = &self.bd {
            if bd.len() != n * self.p {
                return Err(format!("Bd needs {} entries (2×p, row-major), found {}", n * self.p, bd.len()));
            }
        }
        if let Some(cd) = &self.cd {
            if cd.len() != self.p {
                return Err(format!("Cd needs {} entries (1×p), found {}", self.p, cd.len()));
            }
        }
        if self.u_min > self.u_max {
            return Err(format!("u_min = {} exceeds u_max = {}", self.u_min, self.u_max));
        }
        Ok(())
    }

    pub fn disturbance(&self) -> DisturbanceModel {
        let n = 2;
        DisturbanceModel {
            bd: match &self.bd {
                Some(v) => DMatrix::from_row_slice(n, self.p, v),
                None => DMatrix::zeros(n, self.p),
            },
            cd: match &self.cd {
                Some(v) => DMatrix::from_row_slice(1, self.p, v),
                None => DMatrix::from_element(1, self.p, 1.0),
            },
        }
    }

    pub fn mpc_spec(&self) -> MpcSpec {
        MpcSpec::siso(self.horizon, self.q, self.r, self.u_min, self.u_max)
    }

    pub fn pi(&self) -> PiConfig {
        PiConfig {
            kp: self.pi_kp,
            ki: self.pi_ki,
            ts: self.ts,
            u_min: self.u_min,
            u_max: self.u_max,
            clamp: self.pi_clamp,
        }
    }

    pub fn table_path(&self) -> PathBuf {
        self.table.clone().unwrap_or_else(|| self.out.join("law.empc"))
    }
}

fn float(v: &str) -> Result<f64, String> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("`{v}` is not a finite number")),
    }
}

fn positive(v: &str) -> Result<f64, String> {
    let x = float(v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("`{v}` must be positive"))
    }
}

fn count(v: &str) -> Result<usize, String> {
    match v.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("`{v}` is not a positive integer")),
    }
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("`{v}` is not a boolean")),
    }
}

fn width(v: &str) -> Result<ScalarWidth, String> {
    v.parse::<u32>()
        .ok()
        .and_then(ScalarWidth::from_bytes)
        .ok_or_else(|| format!("scalar width must be 4 or 8, found `{v}`"))
}

fn split(v: &str) -> impl Iterator<Item = &str> {
    v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty())
}

fn list(v: &str) -> Result<Vec<f64>, String> {
    split(v).map(float).collect()
}

/// `0.5`, `0.4+0.2j`, `0.4-0.2i`.
fn complex(v: &str) -> Result<Complex<f64>, String> {
    let bad = || format!("`{v}` is not a real or complex number");
    let Some(body) = v.strip_suffix(['j', 'i']) else {
        return float(v).map(|re| Complex::new(re, 0.0));
    };
    // split at the last sign that is not an exponent sign or the leading one
    let bytes = body.as_bytes();
    let at = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'))
        .ok_or_else(bad)?;
    let re = float(&body[..at]).map_err(|_| bad())?;
    let im = match &body[at..] {
        "+" => 1.0,
        "-" => -1.0,
        s => float(s).map_err(|_| bad())?,
    };
    Ok(Complex::new(re, im))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ProjectConfig, ConfigError> {
        ProjectConfig::parse(text, "test.cfg", Path::new("/base"))
    }

    #[test]
    fn empty_is_default() {
        assert_eq!(parse("").unwrap(), ProjectConfig::default());
        assert_eq!(parse("# nothing\n\n").unwrap(), ProjectConfig::default());
    }

    #[test]
    fn values_and_paths() {
        let c = parse("N = 3\nR=0.5 # weight\nobserver.poles = 0.4+0.1j, 0.4-0.1j\nout = res\npi.clamp = no\n").unwrap();
        assert_eq!(c.horizon, 3);
        assert_eq!(c.r, 0.5);
        assert_eq!(c.observer_poles, vec![Complex::new(0.4, 0.1), Complex::new(0.4, -0.1)]);
        assert_eq!(c.out, PathBuf::from("/base/res"));
        assert_eq!(c.table_path(), PathBuf::from("/base/res/law.empc"));
        assert!(!c.pi_clamp);
    }

    #[test]
    fn complex_forms() {
        assert_eq!(complex("1e-1+2e-1j").unwrap(), Complex::new(0.1, 0.2));
        assert_eq!(complex("-0.3-j").unwrap(), Complex::new(-0.3, -1.0));
        assert!(complex("abc").is_err());
        assert!(complex("j").is_err());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("N = 2\n\nbogus = 1\n").unwrap_err();
        assert_eq!((e.line, e.path.as_str()), (3, "test.cfg"));
        assert!(e.message.contains("unknown key"));
        assert_eq!(parse("N = 2\nN = 3\n").unwrap_err().line, 2);
        assert_eq!(parse("Ts = -1\n").unwrap_err().line, 1);
        assert_eq!(parse("Q 1\n").unwrap_err().line, 1);
        assert_eq!(parse("x=1\nscalar_width = 2\n").unwrap_err().line, 1);
        assert_eq!(parse("N=2\nscalar_width = 2\n").unwrap_err().line, 2);
        assert!(parse("p = 2\nBd = 1 0\n").unwrap_err().message.contains("Bd"));
    }

    #[test]
    fn disturbance_matrices() {
        let c = parse("p = 2\nBd = 0 1, 0 0\nCd = 1 0\n").unwrap();
        let d = c.disturbance();
        assert_eq!(d.bd, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert_eq!(d.cd, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert_eq!(ProjectConfig::default().disturbance(), DisturbanceModel::output(2));
    }
}
