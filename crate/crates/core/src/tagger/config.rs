use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model variants, from the feature-based CRF baseline to the full model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[serde(rename = "crf")]
    FeatureCrf,
    Blstm,
    BlstmCrf,
    BlstmCrfCe,
    BlstmCrfCeCa,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::FeatureCrf,
        Variant::Blstm,
        Variant::BlstmCrf,
        Variant::BlstmCrfCe,
        Variant::BlstmCrfCeCa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::FeatureCrf => "crf",
            Variant::Blstm => "blstm",
            Variant::BlstmCrf => "blstm-crf",
            Variant::BlstmCrfCe => "blstm-crf-ce",
            Variant::BlstmCrfCeCa => "blstm-crf-ce-ca",
        }
    }

    pub fn is_neural(self) -> bool {
        self != Variant::FeatureCrf
    }

    pub fn use_crf(self) -> bool {
        self != Variant::Blstm
    }

    pub fn use_char_encoder(self) -> bool {
        matches!(self, Variant::BlstmCrfCe | Variant::BlstmCrfCeCa)
    }

    pub fn use_context_attention(self) -> bool {
        self == Variant::BlstmCrfCeCa
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::Invalid(format!("unknown variant '{s}' (expected one of: {})", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggerConfig {
    pub variant: Variant,
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_hidden: usize,
    pub hidden: usize,
    pub context_hidden: usize,
    pub attention_dim: usize,
    /// Number of preceding thread sentences given to the context encoder.
    pub context_cap: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping; `None` never stops early.
    pub patience: Option<usize>,
    pub clip_norm: Option<f64>,
    /// Share of training sentences held out for model selection. With none
    /// held out, selection uses the training sentences themselves.
    pub validation_fraction: f64,
    pub seed: u64,
    pub min_word_count: usize,
    pub lowercase: bool,
    pub freeze_embeddings: bool,
    /// Normalize emissions with a softmax before the CRF layer.
    pub softmax_emissions: bool,
    /// Forbid O→I and cross-type B→I transitions in the CRF.
    pub bio_constraints: bool,
    /// L2 strength of the feature-based CRF.
    pub l2: f64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            variant: Variant::BlstmCrfCeCa,
            word_dim: 200,
            char_dim: 64,
            char_hidden: 64,
            hidden: 256,
            context_hidden: 256,
            attention_dim: 256,
            context_cap: 5,
            learning_rate: 0.01,
            batch_size: 16,
            max_epochs: 20,
            patience: Some(3),
            clip_norm: Some(5.0),
            validation_fraction: 0.1,
            seed: 0,
            min_word_count: 2,
            lowercase: true,
            freeze_embeddings: false,
            softmax_emissions: false,
            bio_constraints: false,
            l2: 1e-4,
        }
    }
}

impl TaggerConfig {
    pub fn for_variant(variant: Variant) -> Self {
        TaggerConfig {
            variant,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("char_hidden", self.char_hidden),
            ("hidden", self.hidden),
            ("context_hidden", self.context_hidden),
            ("attention_dim", self.attention_dim),
            ("batch_size", self.batch_size),
            ("min_word_count", self.min_word_count),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Invalid(format!("config field '{name}' must be positive")));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid("learning_rate must be a finite non-negative number".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Invalid("validation_fraction must lie in [0, 1)".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Invalid("clip_norm must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Invalid("l2 must be a finite non-negative number".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
        assert!("bilstm".parse::<Variant>().is_err());
    }

    #[test]
    fn attention_implies_crf() {
        for v in Variant::ALL {
            assert!(!v.use_context_attention() || v.use_crf());
        }
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c: TaggerConfig = serde_json::from_str(r#"{"variant":"blstm","hidden":32}"#).unwrap();
        assert_eq!(c.hidden, 32);
        assert_eq!(c.batch_size, 16);
        assert!(serde_json::from_str::<TaggerConfig>(r#"{"hiden":32}"#).is_err());
        let mut bad = c.clone();
        bad.hidden = 0;
        assert!(bad.validate().is_err());
        assert!(c.validate().is_ok());
    }
}
