//! Scenario files: `key = value` lines (`duration`, `Ts`, `protocol`) and
//! event lines
//!
//! ```text
//! ref   t value
//! dist  t0 t1 amplitude
//! noise t0 t1 amplitude seed
//! ```

use std::path::Path;

use empc_core::harness::{DisturbanceEvent, NoiseEvent, Scenario};

use crate::config::ConfigError;

pub fn load_scenario(path: &Path, ts: f64) -> anyhow::Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read scenario {}: {e}", path.display()))?;
    let sc = parse_scenario(&text, &path.display().to_string(), ts)?;
    sc.validate()
        .map_err(|e| anyhow::anyhow!("scenario {}: {e}", path.display()))?;
    Ok(sc)
}

/// `ts` is used unless the file sets `Ts`. Events are kept in file order
/// except reference steps, which are sorted by time.
pub fn parse_scenario(text: &str, name: &str, ts: f64) -> Result<Scenario, ConfigError> {
    let mut sc = Scenario::new(0.0, ts);
    let mut duration = None;
    for (idx, raw) in text.lines().enumerate() {
        let err = |message: String| ConfigError {
            path: name.to_string(),
            line: idx + 1,
            message,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some((key, value)) = line.split_once('=') {
            let value = value.trim();
            match key.trim() {
                "duration" => duration = Some(num(value).map_err(err)?),
                "Ts" => sc.ts = num(value).map_err(err)?,
                "protocol" => {
                    sc.protocol_in_loop = match value {
                        "true" | "yes" | "on" | "1" => true,
                        "false" | "no" | "off" | "0" => false,
                        _ => return Err(err(format!("`{value}` is not a boolean"))),
                    }
                }
                k => return Err(err(format!("unknown key `{k}`"))),
            }
            continue;
        }
        let mut words = line.split_whitespace();
        let kind = words.next().unwrap_or("");
        let args: Vec<&str> = words.collect();
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(err(format!("`{kind}` takes {n} values, found {}", args.len())))
            }
        };
        match kind {
            "ref" => {
                arity(2)?;
                sc.reference.push((num(args[0]).map_err(err)?, num(args[1]).map_err(err)?));
            }
            "dist" => {
                arity(3)?;
                sc.disturbances.push(DisturbanceEvent {
                    t_start: num(args[0]).map_err(err)?,
                    t_end: num(args[1]).map_err(err)?,
                    amplitude: num(args[2]).map_err(err)?,
                });
            }
            "noise" => {
                arity(4)?;
                sc.noise.push(NoiseEvent {
                    t_start: num(args[0]).map_err(err)?,
                    t_end: num(args[1]).map_err(err)?,
                    amplitude: num(args[2]).map_err(err)?,
                    seed: args[3]
                        .parse()
                        .map_err(|_| err(format!("`{}` is not an unsigned seed", args[3])))?,
                });
            }
            _ => return Err(err(format!("unknown line `{line}`"))),
        }
    }
    sc.reference.sort_by(|a, b| a.0.total_cmp(&b.0));
    // without an explicit duration, run one second past the last event
    sc.duration = duration.unwrap_or_else(|| {
        let last = sc
            .reference
            .iter()
            .map(|r| r.0)
            .chain(sc.disturbances.iter().map(|d| d.t_end))
            .chain(sc.noise.iter().map(|n| n.t_end))
            .fold(0.0, f64::max);
        last + 1.0
    });
    Ok(sc)
}

fn num(v: &str) -> Result<f64, String> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("`{v}` is not a finite number")),
    }
}

/// Scenario file text for a scenario, readable back by [`parse_scenario`].
pub fn render_scenario(sc: &Scenario) -> String {
    let mut out = format!("duration = {}\nTs = {}\n", sc.duration, sc.ts);
    if sc.protocol_in_loop {
        out.push_str("protocol = true\n");
    }
    for (t, v) in &sc.reference {
        out.push_str(&format!("ref {t} {v}\n"));
    }
    for d in &sc.disturbances {
        out.push_str(&format!("dist {} {} {}\n", d.t_start, d.t_end, d.amplitude));
    }
    for n in &sc.noise {
        out.push_str(&format!("noise {} {} {} {}\n", n.t_start, n.t_end, n.amplitude, n.seed));
    }
    out
}
