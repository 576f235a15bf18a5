//! Plain-text `key = value` configuration over dotted field paths, e.g.
//! `tppo.beta = 0.1` or `rm.class_weights = [0.2, 1, 1]`.
//!
//! String fields take the raw text; every other field takes a JSON literal.
//! Unknown keys are errors, so typos never pass silently.

use std::path::Path;

use serde_json::{Map, Value};

use super::ExperimentConfig;
use crate::{Error, Result};

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        _ => out.push((prefix.to_string(), v.clone())),
    }
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn to_value(cfg: &ExperimentConfig) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

/// Every field as a `(dotted key, rendered value)` pair, in a stable order.
pub fn config_entries(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    let mut flat = Vec::new();
    flatten("", &to_value(cfg), &mut flat);
    flat.into_iter().map(|(k, v)| (k, render(&v))).collect()
}

/// The configuration in the file format accepted by [`parse_config`].
pub fn render_config(cfg: &ExperimentConfig) -> String {
    config_entries(cfg)
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

fn lookup<'a>(root: &'a mut Value, key: &str) -> Option<&'a mut Value> {
    let mut cur = root;
    for part in key.split('.') {
        cur = match cur {
            Value::Object(m) => m.get_mut(part)?,
            _ => return None,
        };
    }
    (!cur.is_object()).then_some(cur)
}

/// Applies `key = value` lines on top of `base`. Blank lines and lines
/// starting with `#` are ignored.
pub fn parse_config(text: &str, base: &ExperimentConfig, origin: &Path) -> Result<ExperimentConfig> {
    let mut root = to_value(base);
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            msg,
        };
        let (key, val) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
        let (key, val) = (key.trim(), val.trim());
        let slot = lookup(&mut root, key).ok_or_else(|| err(format!("unknown key `{key}`")))?;
        *slot = if slot.is_string() {
            Value::String(val.to_string())
        } else {
            serde_json::from_str(val).map_err(|e| err(format!("bad value for `{key}`: {e}")))?
        };
    }
    let cfg: ExperimentConfig = serde_json::from_value(root).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    Ok(cfg)
}

/// Reads a configuration file on top of the defaults.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text, &ExperimentConfig::default(), path)
}

/// Object form of the configuration, for JSON artifacts.
pub fn config_json(cfg: &ExperimentConfig) -> Map<String, Value> {
    match to_value(cfg) {
        Value::Object(m) => m,
        _ => unreachable!("config is a struct"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tppo::RewardMode;

    #[test]
    fn round_trips_through_text() {
        let mut cfg = ExperimentConfig::default().with_seed(9);
        cfg.tppo.reward_mode = RewardMode::Sentence;
        cfg.rm.class_weights = [0.1, 2.0, 3.0];
        let text = render_config(&cfg);
        assert!(text.contains("tppo.reward_mode = sentence\n"));
        assert!(text.contains("rm.class_weights = [0.1,2.0,3.0]\n"));
        let back = parse_config(&text, &ExperimentConfig::default(), Path::new("x")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_and_errors() {
        let base = ExperimentConfig::default();
        let cfg = parse_config("# comment\n\ntppo.beta = 0.3\njudge = sentence\n", &base, Path::new("c")).unwrap();
        assert_eq!(cfg.tppo.beta, 0.3);
        assert_eq!(cfg.rm, base.rm);

        for (text, line) in [("tppo.betta = 1", 1), ("\nrm.lr = fast", 2), ("novalue", 1), ("rm = 3", 1)] {
            match parse_config(text, &base, Path::new("c")) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(parse_config("tppo.reward_mode = both", &base, Path::new("c")).is_err());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_config(Path::new("/nonexistent/missing.file")).unwrap_err().to_string();
        assert!(err.contains("missing.file"), "{err}");
    }
}
