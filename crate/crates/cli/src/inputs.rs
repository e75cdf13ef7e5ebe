//! Argument decoding: numeric lists, states, operators and JSON files.

use std::cell::RefCell;
use std::path::Path;

use locclab::qtensor::linalg::{diag_real, eye};
use locclab::states::{parse_state_spec, DiagonalFamilyParams};
use locclab::{Error, LocalOperator, PureState};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::report::CliError;

/// Shared state for one invocation: tolerance, RNG seed and every input consumed.
pub struct Ctx {
    pub tol: f64,
    pub seed_arg: Option<String>,
    inputs: RefCell<Vec<(String, String)>>,
}

impl Ctx {
    pub fn new(tol: f64, seed_arg: Option<String>) -> Self {
        Self { tol, seed_arg, inputs: RefCell::new(Vec::new()) }
    }

    /// Numeric seed; `0` when unset.
    pub fn seed(&self) -> Result<u64, CliError> {
        match &self.seed_arg {
            None => Ok(0),
            Some(s) => s.trim().parse().map_err(|_| CliError::usage(format!("--seed expects an integer, got {s:?}"))),
        }
    }

    /// The seed argument when it names a state rather than a number.
    pub fn seed_label(&self) -> Option<&str> {
        self.seed_arg.as_deref().filter(|s| s.trim().parse::<u64>().is_err())
    }

    pub fn record(&self, name: &str, content: &str) {
        self.inputs.borrow_mut().push((name.to_string(), content.to_string()));
    }

    /// SHA-256 over the argument vector and the contents of every file read.
    pub fn digest(&self, argv: &[String]) -> String {
        let mut h = Sha256::new();
        for a in argv {
            h.update(a.as_bytes());
            h.update([0u8]);
        }
        for (name, content) in self.inputs.borrow().iter() {
            h.update([1u8]);
            h.update(name.as_bytes());
            h.update([0u8]);
            h.update(content.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Inline JSON when the argument starts with `{` or `[`, otherwise a file path.
    pub fn json(&self, arg: &str) -> Result<Value, CliError> {
        let t = arg.trim();
        let text = if t.starts_with('{') || t.starts_with('[') {
            t.to_string()
        } else {
            let text = std::fs::read_to_string(t).map_err(|e| CliError::usage(format!("cannot read {t}: {e}")))?;
            self.record(t, &text);
            text
        };
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{t}: invalid JSON: {e}")))
    }

    /// A state spec such as `A3` or `GHZ:3`, inline JSON, or a JSON file.
    pub fn state(&self, arg: &str) -> Result<PureState, CliError> {
        let t = arg.trim();
        if t.starts_with('{') || Path::new(t).is_file() {
            return serde_json::from_value(self.json(t)?).map_err(|e| CliError::usage(format!("state: {e}")));
        }
        Ok(parse_state_spec(t)?)
    }

    /// `I:d1,d2,..`, `MA3:a1,b1,a2,b2` (the square-root diagonal operator), inline JSON or a file.
    pub fn operator(&self, arg: &str) -> Result<LocalOperator, CliError> {
        let t = arg.trim();
        if let Some((head, tail)) = t.split_once(':') {
            match head.to_ascii_uppercase().as_str() {
                "I" => {
                    let dims = tail
                        .split(',')
                        .map(|x| x.trim().parse::<usize>().map_err(|e| CliError::usage(format!("{t}: {e}"))))
                        .collect::<Result<Vec<_>, _>>()?;
                    return Ok(LocalOperator::identity(&dims));
                }
                "MA3" => {
                    let v = floats(tail, 4)?;
                    let p = DiagonalFamilyParams::new(v[0], v[1], v[2], v[3])?;
                    return Ok(ma3_operator(&p)?);
                }
                _ => {}
            }
        }
        serde_json::from_value(self.json(t)?).map_err(|e| CliError::usage(format!("operator: {e}")))
    }
}

/// `diag(sqrt a1, sqrt b1, 1) (x) diag(sqrt a2, sqrt b2, 1) (x) 1`.
pub fn ma3_operator(p: &DiagonalFamilyParams) -> locclab::Result<LocalOperator> {
    let [d1, d2, _] = p.diagonals();
    LocalOperator::new(vec![
        diag_real(&d1.map(f64::sqrt)),
        diag_real(&d2.map(f64::sqrt)),
        eye(3),
    ])
}

/// Comma-separated reals; `n = 0` accepts any length.
pub fn floats(s: &str, n: usize) -> Result<Vec<f64>, CliError> {
    let v = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| CliError::usage(format!("{s:?}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if n > 0 && v.len() != n {
        return Err(CliError::usage(format!("expected {n} comma-separated values, got {}", v.len())));
    }
    Ok(v)
}

/// Comma-separated 1-based site labels, returned 0-based.
pub fn sites(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|x| match x.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(CliError::usage(format!("bad site label {x:?}; sites are numbered from 1"))),
            Ok(k) => Ok(k - 1),
        })
        .collect()
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            CliError::numerical(e.to_string())
        } else {
            CliError::usage(e.to_string())
        }
    }
}
