//! Text model format.
//!
//! ```text
//! hwr-hmm 1
//! classes <n>
//! class <id> states <S> dim <d>
//! state <j> self <p> next <p> mixtures <G>
//! component <g> weight <w>
//! mean <d values>
//! variance <d values>
//! end
//! ```
//!
//! Floats are written in shortest round-trip exponent form, so a saved model
//! reloads bit-for-bit.

use std::fmt::Write as _;

use super::gmm::{DiagonalGaussian, GaussianMixture};
use super::model::{ClassHmm, HmmState, ModelSet};
use super::HmmError;

pub const MODEL_HEADER: &str = "hwr-hmm";
pub const MODEL_VERSION: u32 = 1;

fn join(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v:e}");
    }
    s
}

pub fn models_to_string(models: &ModelSet) -> String {
    let mut out = format!("{MODEL_HEADER} {MODEL_VERSION}\nclasses {}\n", models.len());
    for m in models.iter() {
        let _ = writeln!(
            out,
            "class {} states {} dim {}",
            m.class_id,
            m.n_states(),
            m.dim()
        );
        for (j, st) in m.states.iter().enumerate() {
            let _ = writeln!(
                out,
                "state {j} self {:e} next {:e} mixtures {}",
                st.self_loop(),
                st.next(),
                st.mixture.len()
            );
            for (g, (w, c)) in st
                .mixture
                .weights()
                .iter()
                .zip(st.mixture.components())
                .enumerate()
            {
                let _ = writeln!(out, "component {g} weight {w:e}");
                let _ = writeln!(out, "mean {}", join(c.mean()));
                let _ = writeln!(out, "variance {}", join(c.variance()));
            }
        }
        out.push_str("end\n");
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self) -> Result<Vec<&'a str>, HmmError> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            return Ok(l.split_whitespace().collect());
        }
        Err(self.err("unexpected end of model file"))
    }

    fn err(&self, msg: &str) -> HmmError {
        HmmError::ModelFormat {
            line: self.line,
            message: msg.to_string(),
        }
    }

    fn expect(&mut self, keyword: &str) -> Result<Vec<&'a str>, HmmError> {
        let toks = self.next_tokens()?;
        if toks.first() != Some(&keyword) {
            return Err(self.err(&format!("expected `{keyword}`")));
        }
        Ok(toks)
    }

    fn field<T: std::str::FromStr>(&self, toks: &[&str], idx: usize) -> Result<T, HmmError> {
        toks.get(idx)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err("malformed field"))
    }

    fn floats(&self, toks: &[&str], n: usize) -> Result<Vec<f64>, HmmError> {
        if toks.len() != n + 1 {
            return Err(self.err(&format!("expected {n} values")));
        }
        toks[1..]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| self.err("bad number")))
            .collect()
    }
}

pub fn models_from_str(text: &str) -> Result<ModelSet, HmmError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let head = lines.expect(MODEL_HEADER)?;
    let version: u32 = lines.field(&head, 1)?;
    if version != MODEL_VERSION {
        return Err(lines.err(&format!("unsupported model version {version}")));
    }
    let toks = lines.expect("classes")?;
    let n_classes: usize = lines.field(&toks, 1)?;
    let mut set = ModelSet::new();
    for _ in 0..n_classes {
        let toks = lines.expect("class")?;
        if toks.len() != 6 || toks[2] != "states" || toks[4] != "dim" {
            return Err(lines.err("expected `class <id> states <S> dim <d>`"));
        }
        let id = toks[1].to_string();
        let n_states: usize = lines.field(&toks, 3)?;
        let dim: usize = lines.field(&toks, 5)?;
        let mut states = Vec::with_capacity(n_states);
        for _ in 0..n_states {
            let st = lines.expect("state")?;
            if st.len() != 8 {
                return Err(lines.err("expected `state <j> self <p> next <p> mixtures <G>`"));
            }
            let self_loop: f64 = lines.field(&st, 3)?;
            let n_mix: usize = lines.field(&st, 7)?;
            let mut weights = Vec::with_capacity(n_mix);
            let mut comps = Vec::with_capacity(n_mix);
            for _ in 0..n_mix {
                let c = lines.expect("component")?;
                weights.push(lines.field::<f64>(&c, 3)?);
                let toks = lines.expect("mean")?;
                let mean = lines.floats(&toks, dim)?;
                let toks = lines.expect("variance")?;
                let var = lines.floats(&toks, dim)?;
                if var.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(lines.err("variances must be positive"));
                }
                comps.push(DiagonalGaussian::new(mean, var));
            }
            states.push(HmmState::new(
                GaussianMixture::new(weights, comps)?,
                self_loop,
            )?);
        }
        lines.expect("end")?;
        set.insert(ClassHmm::new(id, states)?);
    }
    Ok(set)
}
