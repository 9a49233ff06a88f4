//! `key = value` text form of model specs.
//!
//! ```text
//! # comments start with '#'
//! kind  = PERCEPTRON
//! alpha = 0.5
//! u     = tanh(0.8, 1.0, 0.0)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use super::potential::{Potential, PotentialU};
use super::spec::{GardnerSize, ModelKind, ModelSpec};
use crate::error::{Error, Result};

/// Parsed `key = value` document. Keys are lower-cased; each key keeps the
/// line it came from for error messages.
#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected `key = value`, got `{body}`"),
            })?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(Error::Config { line, message: "empty key".into() });
            }
            if entries.insert(key.clone(), (value.trim().to_string(), line)).is_some() {
                return Err(Error::Config { line, message: format!("duplicate key `{key}`") });
            }
        }
        Ok(Self { entries })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map(|(_, l)| *l).unwrap_or(0)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Parses `key` with `FromStr`, attaching the line on failure.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| Error::Config {
                line: *line,
                message: format!("`{key}`: {e}"),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((v, line)) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|p| {
                p.trim().parse::<T>().map_err(|e| Error::Config {
                    line: *line,
                    message: format!("`{key}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Fails if the document holds a key outside `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for (k, (_, line)) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Config { line: *line, message: format!("unknown key `{k}`") });
            }
        }
        Ok(())
    }
}

pub const MODEL_KEYS: &[&str] = &["kind", "beta", "h", "kappa", "m", "alpha", "u", "u_scale"];

/// Reads the model part of a document. Range checks are left to
/// [`ModelSpec::validate`], whose failures are mapped to the offending line.
pub fn model_spec_from_kv(kv: &KeyValues) -> Result<ModelSpec> {
    let kind: ModelKind = kv.get("kind")?.ok_or(Error::ConfigField {
        field: "kind".into(),
        message: "missing".into(),
    })?;
    let beta = kv.get_or("beta", 0.0)?;
    let h = kv.get_or("h", 0.0)?;
    let kappa = kv.get_or("kappa", 0.0)?;
    let size = match (kv.get::<usize>("m")?, kv.get::<f64>("alpha")?) {
        (Some(_), Some(_)) => {
            return Err(Error::Config {
                line: kv.line_of("alpha"),
                message: "give either `M` or `alpha`, not both".into(),
            })
        }
        (Some(m), None) => Some(GardnerSize::Fixed(m)),
        (None, Some(a)) => Some(GardnerSize::Ratio(a)),
        (None, None) => None,
    };
    let u = match kv.raw("u") {
        Some(text) => {
            let family = Potential::parse(text).map_err(|e| Error::Config {
                line: kv.line_of("u"),
                message: e.to_string(),
            })?;
            PotentialU { family, scale: kv.get_or("u_scale", 1.0)? }
        }
        None => PotentialU::zero(),
    };
    let spec = ModelSpec { kind, beta, h, kappa, size, u };
    spec.validate().map_err(|e| match &e {
        Error::InvalidParameter { name, .. } => {
            let key = name.to_ascii_lowercase();
            let line = kv.line_of(&key);
            if line > 0 {
                Error::Config { line, message: e.to_string() }
            } else {
                Error::ConfigField { field: key, message: e.to_string() }
            }
        }
        _ => e,
    })?;
    Ok(spec)
}

pub fn parse_model_spec(text: &str) -> Result<ModelSpec> {
    let kv = KeyValues::parse(text)?;
    kv.reject_unknown(MODEL_KEYS)?;
    model_spec_from_kv(&kv)
}

pub fn model_spec_to_string(spec: &ModelSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "kind = {}", spec.kind);
    if spec.kind.is_sk() {
        let _ = writeln!(out, "beta = {:?}", spec.beta);
    }
    let _ = writeln!(out, "h = {:?}", spec.h);
    if spec.kind == ModelKind::St {
        let _ = writeln!(out, "kappa = {:?}", spec.kappa);
    }
    match spec.size {
        Some(GardnerSize::Fixed(m)) => {
            let _ = writeln!(out, "M = {m}");
        }
        Some(GardnerSize::Ratio(a)) => {
            let _ = writeln!(out, "alpha = {a:?}");
        }
        None => {}
    }
    if spec.kind.is_gardner() {
        let _ = writeln!(out, "u = {}", spec.u.family);
        if spec.u.scale != 1.0 {
            let _ = writeln!(out, "u_scale = {:?}", spec.u.scale);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let specs = [
            ModelSpec::sk_ising(0.25, 0.3),
            ModelSpec::sk_box(0.1, -1.0),
            ModelSpec::perceptron(
                GardnerSize::Ratio(0.5),
                PotentialU::new(Potential::Tanh { amp: 0.8, slope: 1.5, shift: -0.1 }),
            ),
            ModelSpec::st(
                GardnerSize::Fixed(7),
                PotentialU::new(Potential::NegLogCosh { amp: 0.01, slope: 1.0 }),
                100.0,
                0.1,
            ),
        ];
        for s in specs {
            let text = model_spec_to_string(&s);
            assert_eq!(parse_model_spec(&text).unwrap(), s, "{text}");
        }
    }

    #[test]
    fn errors_carry_lines() {
        let err = parse_model_spec("kind = SK_ISING\n\nbeta = -1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
        let err = parse_model_spec("kind = SK_ISING\nbeta 0.3\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }));
        let err = parse_model_spec("kind = SK_ISING\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }));
        let err = parse_model_spec("beta = 1\n").unwrap_err();
        assert!(matches!(err, Error::ConfigField { .. }));
    }

    #[test]
    fn comments_and_lists() {
        let kv = KeyValues::parse("# header\nn = 8, 12 ,16 # grid\n").unwrap();
        assert_eq!(kv.get_list::<usize>("n").unwrap().unwrap(), vec![8, 12, 16]);
    }
}
