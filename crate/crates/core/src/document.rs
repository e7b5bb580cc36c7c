//! JSON model documents.
//!
//! ```json
//! {
//!   "system": {"energies": ["0", "1"], "beta": "1"},
//!   "ancillas": [
//!     {"energies": ["0", "1"], "beta": "2",
//!      "unitary": {"kind": "partial_swap", "theta": 0.785398}}
//!   ],
//!   "master_seed": 7
//! }
//! ```
//!
//! Energies are exact rationals written as `"num/den"` strings (bare integers
//! are accepted too). Inverse temperatures may be numbers, decimal strings or
//! rational strings. Keys are snake_case; camelCase aliases are accepted.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::Value;

use crate::collision::{JointIndex, UnitaryKind, UnitarySpec};
use crate::error::{Error, Result};
use crate::model::{AncillaConfig, ModelConfig, DEFAULT_DETAILED_BALANCE_TOLERANCE, DEFAULT_ENUMERATION_CAP, DEFAULT_TOLERANCE};
use crate::rational::Rational;
use crate::spectrum::Spectrum;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    system: RawSubsystem,
    ancillas: Vec<RawAncilla>,
    #[serde(default, alias = "masterSeed")]
    master_seed: u64,
    #[serde(default, alias = "enumerationCap")]
    enumeration_cap: Option<f64>,
    #[serde(default)]
    tolerance: Option<f64>,
    #[serde(default, alias = "detailedBalanceTolerance")]
    detailed_balance_tolerance: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubsystem {
    energies: Vec<Value>,
    beta: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAncilla {
    energies: Vec<Value>,
    beta: Value,
    unitary: RawUnitary,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawUnitary {
    Haar {
        #[serde(default, alias = "streamTag")]
        stream_tag: Option<u64>,
    },
    PartialSwap {
        theta: Value,
    },
    Permutation {
        cycles: Vec<Vec<[usize; 2]>>,
    },
    Explicit {
        blocks: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
    },
    Identity,
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn parse_energy(v: &Value, path: &str) -> Result<Rational> {
    match v {
        Value::String(s) => s.parse().map_err(|e: Error| config_error(path, e.to_string())),
        Value::Number(n) => n
            .as_i64()
            .map(Rational::from_integer)
            .ok_or_else(|| config_error(path, format!("energy {n} is not an integer; write it as \"num/den\""))),
        other => Err(config_error(path, format!("expected a rational string, got {other}"))),
    }
}

fn parse_real(v: &Value, path: &str) -> Result<f64> {
    let x = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => match s.parse::<Rational>() {
            Ok(r) => Some(r.to_f64()),
            Err(_) => s.trim().parse::<f64>().ok(),
        },
        _ => None,
    };
    match x {
        Some(x) if x.is_finite() => Ok(x),
        _ => Err(config_error(path, format!("expected a finite real number, got {v}"))),
    }
}

fn parse_spectrum(values: &[Value], path: &str) -> Result<Spectrum> {
    let levels = values
        .iter()
        .enumerate()
        .map(|(k, v)| parse_energy(v, &format!("{path}[{k}]")))
        .collect::<Result<Vec<_>>>()?;
    Spectrum::new(levels, path)
}

fn parse_unitary(raw: RawUnitary, collision: usize, path: &str) -> Result<UnitarySpec> {
    Ok(match raw {
        RawUnitary::Haar { stream_tag } => UnitarySpec::haar(stream_tag.unwrap_or(collision as u64)),
        RawUnitary::PartialSwap { theta } => UnitarySpec::partial_swap(parse_real(&theta, &format!("{path}.theta"))?),
        RawUnitary::Identity => UnitarySpec::identity(),
        RawUnitary::Permutation { cycles } => {
            let cycles = cycles
                .into_iter()
                .map(|c| c.into_iter().map(|[a, n]| JointIndex::new(a, n)).collect())
                .collect();
            UnitarySpec::new(UnitaryKind::Permutation { cycles }, 0)
        }
        RawUnitary::Explicit { blocks } => {
            let mut parsed = BTreeMap::new();
            for (key, rows) in blocks {
                let here = format!("{path}.blocks[{key:?}]");
                let energy: Rational = key.parse().map_err(|e: Error| config_error(&here, e.to_string()))?;
                let size = rows.len();
                if size == 0 || rows.iter().any(|r| r.len() != size) {
                    return Err(config_error(&here, "block must be a non-empty square matrix"));
                }
                let entries: Vec<Complex64> = rows.iter().flatten().map(|[re, im]| Complex64::new(*re, *im)).collect();
                parsed.insert(energy, DMatrix::from_row_slice(size, size, &entries));
            }
            UnitarySpec::new(UnitaryKind::Explicit { blocks: parsed }, 0)
        }
    })
}

/// Parses and validates a model document. Syntax errors carry line and
/// column; semantic errors carry the field path.
pub fn parse_model(text: &str) -> Result<ModelConfig> {
    let raw: RawModel = serde_json::from_str(text)?;
    let system_spectrum = parse_spectrum(&raw.system.energies, "system.energies")?;
    let system_beta = parse_real(&raw.system.beta, "system.beta")?;
    let ancillas = raw
        .ancillas
        .into_iter()
        .enumerate()
        .map(|(k, a)| {
            let path = format!("ancillas[{k}]");
            Ok(AncillaConfig {
                spectrum: parse_spectrum(&a.energies, &format!("{path}.energies"))?,
                beta: parse_real(&a.beta, &format!("{path}.beta"))?,
                unitary: parse_unitary(a.unitary, k + 1, &format!("{path}.unitary"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let enumeration_cap = match raw.enumeration_cap {
        None => DEFAULT_ENUMERATION_CAP,
        Some(c) if c.is_finite() && c >= 1.0 && c.fract() == 0.0 && c <= u64::MAX as f64 => c as u64,
        Some(c) => return Err(config_error("enumeration_cap", format!("must be a positive integer, got {c}"))),
    };
    let config = ModelConfig {
        system_spectrum,
        system_beta,
        ancillas,
        master_seed: raw.master_seed,
        enumeration_cap,
        tolerance: raw.tolerance.unwrap_or(DEFAULT_TOLERANCE),
        detailed_balance_tolerance: raw.detailed_balance_tolerance.unwrap_or(DEFAULT_DETAILED_BALANCE_TOLERANCE),
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;

    const RUNNING: &str = r#"{
        "system": {"energies": ["0", "1"], "beta": "1"},
        "ancillas": [{"energies": ["0", "1"], "beta": "2",
                      "unitary": {"kind": "partial_swap", "theta": 0.785398}}]
    }"#;

    #[test]
    #[allow(clippy::approx_constant)]
    fn minimal_document() {
        let cfg = parse_model(RUNNING).unwrap();
        assert_eq!(cfg.collisions(), 1);
        assert_eq!(cfg.system_beta, 1.0);
        assert_eq!(cfg.ancillas[0].beta, 2.0);
        assert_eq!(cfg.ancillas[0].unitary, UnitarySpec::partial_swap(0.785398));
        assert_eq!(cfg.tolerance, 1e-9);
        assert_eq!(cfg.enumeration_cap, 100_000_000);
        assert_eq!(cfg.master_seed, 0);
        Model::build(&cfg).unwrap();
    }

    #[test]
    fn degenerate_system_is_rejected() {
        let doc = RUNNING.replace(r#"["0", "1"], "beta": "1""#, r#"["0", "0"], "beta": "1""#);
        match parse_model(&doc) {
            Err(Error::DegenerateSpectrum { path, index_a, index_b, .. }) => {
                assert_eq!(path, "system.energies");
                assert_eq!((index_a, index_b), (0, 1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn thirds_with_haar() {
        let doc = r#"{
            "system": {"energies": ["0", "1/3", "2/3"], "beta": 0.5},
            "ancillas": [{"energies": ["0", "1/3", "2/3"], "beta": "3/2", "unitary": {"kind": "haar"}}],
            "masterSeed": 42
        }"#;
        let cfg = parse_model(doc).unwrap();
        assert_eq!(cfg.ancillas[0].beta, 1.5);
        assert_eq!(cfg.ancillas[0].unitary, UnitarySpec::haar(1));
        let model = Model::build(&cfg).unwrap();
        let sizes: Vec<usize> = model.collisions()[0].unitary.partition().shells().iter().map(|s| s.len()).collect();
        assert_eq!(sizes, vec![1, 2, 3, 2, 1]);
    }

    #[test]
    fn malformed_rational_names_field() {
        let doc = RUNNING.replace(r#""energies": ["0", "1"], "beta": "2""#, r#""energies": ["0", "1/0x"], "beta": "2""#);
        match parse_model(&doc) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "ancillas[0].energies[1]"),
            other => panic!("{other:?}"),
        }
        let doc = RUNNING.replace(r#""beta": "1""#, r#""beta": "hot""#);
        match parse_model(&doc) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "system.beta"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_resonant_partial_swap_names_shells() {
        let doc = RUNNING.replace(r#""energies": ["0", "1"], "beta": "2""#, r#""energies": ["0", "2"], "beta": "2""#);
        let cfg = parse_model(&doc).unwrap();
        let err = Model::build(&cfg).unwrap_err().to_string();
        assert!(err.contains("ancillas[0].unitary"), "{err}");
        assert!(err.contains("shells"), "{err}");
    }

    #[test]
    fn syntax_errors_are_positioned() {
        let err = parse_model("{\n \"system\": ,}").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(parse_model(r#"{"system": {"energies": ["0"], "beta": 1}, "ancillas": [], "bogus": 1}"#).is_err());
    }

    #[test]
    fn other_unitary_kinds() {
        let doc = r#"{
            "system": {"energies": ["0", "1"], "beta": 1},
            "ancillas": [
                {"energies": ["0", "1"], "beta": 2, "unitary": {"kind": "permutation", "cycles": [[[0, 1], [1, 0]]]}},
                {"energies": ["0", "1"], "beta": 2, "unitary": {"kind": "explicit",
                    "blocks": {"1": [[[0, 0], [1, 0]], [[1, 0], [0, 0]]]}}},
                {"energies": ["0", "1"], "beta": 2, "unitary": {"kind": "identity"}},
                {"energies": ["0", "1"], "beta": 2, "unitary": {"kind": "haar", "stream_tag": 9}}
            ],
            "enumeration_cap": 1e6,
            "tolerance": 1e-8
        }"#;
        let cfg = parse_model(doc).unwrap();
        assert_eq!(cfg.enumeration_cap, 1_000_000);
        assert_eq!(cfg.tolerance, 1e-8);
        assert_eq!(cfg.ancillas[3].unitary.stream_tag, 9);
        let model = Model::build(&cfg).unwrap();
        // Permutation and explicit swap give the same transition tensor.
        assert_eq!(model.collisions()[0].tensor, model.collisions()[1].tensor);

        let bad = doc.replace("1e6", "0.5");
        assert!(matches!(parse_model(&bad), Err(Error::Config { .. })));
    }
}
