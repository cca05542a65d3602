//! A trained recognizer on disk: feature settings, lexicon and models.
//!
//! ```text
//! hwr-bundle 1
//! features window 8 cells 8 bins 5 mode unit stride 1 height 64
//! lexicon <n>
//! <character_id>  <class> <class> ...
//! models
//! <model text>
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::{io_err, HarnessError};
use crate::features::{FeatureConfig, WeightMode};
use crate::hmm::{models_from_str, models_to_string, ModelSet};
use crate::recognizer::Lexicon;

pub const BUNDLE_HEADER: &str = "hwr-bundle 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub features: FeatureConfig,
    pub lexicon: Lexicon,
    pub models: ModelSet,
}

impl Bundle {
    pub fn to_text(&self) -> String {
        let f = &self.features;
        let mut out = format!(
            "{BUNDLE_HEADER}\nfeatures window {} cells {} bins {} mode {} stride {} height {}\nlexicon {}\n",
            f.window_width,
            f.cells,
            f.bins,
            f.weight_mode.as_str(),
            f.stride,
            f.standard_height,
            self.lexicon.len()
        );
        for (ch, classes) in self.lexicon.entries() {
            out.push_str(&format!("{ch}\t{}\n", classes.join(" ")));
        }
        out.push_str("models\n");
        out.push_str(&models_to_string(&self.models));
        out
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let bad = |line: usize, m: &str| HarnessError::Bundle {
            line,
            message: m.to_string(),
        };
        let mut lines = text.lines();
        if lines.next() != Some(BUNDLE_HEADER) {
            return Err(bad(1, "missing bundle header"));
        }
        let toks: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
        let features = match toks.as_slice() {
            ["features", "window", w, "cells", h, "bins", b, "mode", m, "stride", s, "height", ht] =>
            {
                let n = |v: &str| v.parse::<usize>().map_err(|_| bad(2, "bad number"));
                FeatureConfig {
                    window_width: n(w)?,
                    cells: n(h)?,
                    bins: n(b)?,
                    weight_mode: m.parse::<WeightMode>().map_err(|e| bad(2, &e))?,
                    stride: n(s)?,
                    standard_height: n(ht)?,
                }
            }
            _ => return Err(bad(2, "malformed features line")),
        };
        let n_entries: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("lexicon "))
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| bad(3, "malformed lexicon line"))?;
        let mut entries = BTreeMap::new();
        for i in 0..n_entries {
            let line = lines
                .next()
                .ok_or_else(|| bad(4 + i, "truncated lexicon"))?;
            let (ch, classes) = line
                .split_once('\t')
                .ok_or_else(|| bad(4 + i, "expected <character>\\t<classes>"))?;
            entries.insert(
                ch.to_string(),
                classes.split_whitespace().map(str::to_string).collect(),
            );
        }
        let models_line = 4 + n_entries;
        if lines.next() != Some("models") {
            return Err(bad(models_line, "expected `models`"));
        }
        let rest: Vec<&str> = lines.collect();
        let models = models_from_str(&rest.join("\n"))?;
        Ok(Bundle {
            features,
            lexicon: Lexicon::new(entries),
            models,
        })
    }
}

pub fn save_bundle(path: &Path, bundle: &Bundle) -> Result<(), HarnessError> {
    std::fs::write(path, bundle.to_text()).map_err(io_err(path))
}

pub fn load_bundle(path: &Path) -> Result<Bundle, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Bundle::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{ClassHmm, DiagonalGaussian, GaussianMixture, HmmState};

    #[test]
    fn round_trip() {
        let st = HmmState::new(
            GaussianMixture::single(DiagonalGaussian::new(vec![0.25, 1.0 / 3.0], vec![0.5, 2.0])),
            0.75,
        )
        .unwrap();
        let models: ModelSet = [
            ClassHmm::new("ka", vec![st.clone(), st.clone()]).unwrap(),
            ClassHmm::new("u_sign", vec![st]).unwrap(),
        ]
        .into_iter()
        .collect();
        let mut lexicon = Lexicon::default();
        lexicon.insert("ka", vec!["ka".into()]);
        lexicon.insert("ku", vec!["ka".into(), "u_sign".into()]);
        let b = Bundle {
            features: FeatureConfig {
                window_width: 4,
                cells: 1,
                bins: 4,
                weight_mode: WeightMode::Magnitude,
                stride: 2,
                standard_height: 16,
            },
            lexicon,
            models,
        };
        assert_eq!(Bundle::parse(&b.to_text()).unwrap(), b);
        assert!(Bundle::parse("hwr-bundle 2\n").is_err());
    }
}
