//! Line-oriented backbone description:
//!
//! ```text
//! input H W D
//! circconv2d kh kw cin cout seed
//! pointwise leaky_relu alpha
//! dense rows cols seed
//! identity
//! ```
//!
//! `#` starts a comment; blank lines are ignored.

use std::fmt::Write as _;
use std::str::FromStr;

use super::{BackboneSpec, LayerSpec};
use crate::error::{Error, Result};

/// Reference nonlinear stack served by the worker in the toy pipeline.
pub const TOY_FW_SPEC: &str = "\
input 16 16 1
circconv2d 3 3 1 16 1
pointwise leaky_relu 0.1
circconv2d 3 3 16 16 2
pointwise leaky_relu 0.1
circconv2d 3 3 16 1 3
";

fn field<T: FromStr>(words: &[&str], i: usize, line: usize) -> Result<T> {
    let w = words
        .get(i)
        .ok_or_else(|| Error::Spec(format!("line {line}: missing field {i}")))?;
    w.parse()
        .map_err(|_| Error::Spec(format!("line {line}: cannot parse {w:?}")))
}

fn arity(words: &[&str], n: usize, line: usize) -> Result<()> {
    if words.len() != n {
        return Err(Error::Spec(format!(
            "line {line}: `{}` takes {} fields, got {}",
            words[0],
            n - 1,
            words.len() - 1
        )));
    }
    Ok(())
}

pub fn parse_spec(text: &str) -> Result<BackboneSpec> {
    let mut input = None;
    let mut layers = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let words: Vec<&str> = content.split_whitespace().collect();
        match words[0] {
            "input" => {
                arity(&words, 4, line)?;
                if input.is_some() || !layers.is_empty() {
                    return Err(Error::Spec(format!("line {line}: `input` must come first, once")));
                }
                input = Some([
                    field(&words, 1, line)?,
                    field(&words, 2, line)?,
                    field(&words, 3, line)?,
                ]);
            }
            kind => {
                if input.is_none() {
                    return Err(Error::Spec(format!("line {line}: layer before `input`")));
                }
                let layer = match kind {
                    "identity" => {
                        arity(&words, 1, line)?;
                        LayerSpec::Identity
                    }
                    "circconv2d" => {
                        arity(&words, 6, line)?;
                        LayerSpec::CircConv2d {
                            kh: field(&words, 1, line)?,
                            kw: field(&words, 2, line)?,
                            cin: field(&words, 3, line)?,
                            cout: field(&words, 4, line)?,
                            seed: field(&words, 5, line)?,
                        }
                    }
                    "pointwise" => {
                        arity(&words, 3, line)?;
                        if words[1] != "leaky_relu" {
                            return Err(Error::Spec(format!(
                                "line {line}: unknown pointwise function {:?}",
                                words[1]
                            )));
                        }
                        let alpha: f64 = field(&words, 2, line)?;
                        if !alpha.is_finite() {
                            return Err(Error::Spec(format!("line {line}: slope must be finite")));
                        }
                        LayerSpec::LeakyRelu { alpha }
                    }
                    "dense" => {
                        arity(&words, 4, line)?;
                        LayerSpec::Dense {
                            rows: field(&words, 1, line)?,
                            cols: field(&words, 2, line)?,
                            seed: field(&words, 3, line)?,
                        }
                    }
                    other => return Err(Error::Spec(format!("line {line}: unknown layer {other:?}"))),
                };
                layers.push(layer);
            }
        }
    }
    let input = input.ok_or_else(|| Error::Spec("missing `input` line".into()))?;
    let spec = BackboneSpec { input, layers };
    // Surface shape-chain errors at load time.
    super::Backbone::from_spec(&spec)?;
    Ok(spec)
}

impl BackboneSpec {
    pub fn to_text(&self) -> String {
        let [h, w, d] = self.input;
        let mut out = format!("input {h} {w} {d}\n");
        for l in &self.layers {
            let _ = match l {
                LayerSpec::Identity => writeln!(out, "identity"),
                LayerSpec::CircConv2d {
                    kh,
                    kw,
                    cin,
                    cout,
                    seed,
                } => writeln!(out, "circconv2d {kh} {kw} {cin} {cout} {seed}"),
                LayerSpec::LeakyRelu { alpha } => writeln!(out, "pointwise leaky_relu {alpha}"),
                LayerSpec::Dense { rows, cols, seed } => writeln!(out, "dense {rows} {cols} {seed}"),
            };
        }
        out
    }
}
