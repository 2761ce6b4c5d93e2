//! Named evaluation configurations, e.g. `oracle:iir:time:nogain`.

use std::fmt;
use std::str::FromStr;

use abe_core::pipeline::{Addition, ExtensionConfig, FilterForm, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// The manifest's second column is already a 16 kHz estimate.
    Given,
    NbOnly,
    Fold,
    Oracle,
    Regressor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Method {
    pub source: Source,
    pub ext: ExtensionConfig,
}

impl Method {
    pub fn new(source: Source, defaults: &ExtensionConfig) -> Self {
        let mut ext = *defaults;
        ext.mode = match source {
            Source::Oracle => Mode::Oracle,
            _ => Mode::Regressor,
        };
        if source != Source::Oracle {
            ext.filter_form = FilterForm::Fir;
        }
        Method { source, ext }
    }

    /// Parses a spec on top of `defaults`: a source name followed by
    /// `:`-separated modifiers from `fir iir dft time gain nogain`.
    pub fn parse(spec: &str, defaults: &ExtensionConfig) -> Result<Self, String> {
        let mut parts = spec.split(':');
        let source = match parts.next().unwrap_or("") {
            "given" => Source::Given,
            "nb-only" => Source::NbOnly,
            "fold" => Source::Fold,
            "oracle" => Source::Oracle,
            "regressor" => Source::Regressor,
            other => return Err(format!("unknown method `{other}` in `{spec}`")),
        };
        let mut m = Method::new(source, defaults);
        for modifier in parts {
            let allowed = match (source, modifier) {
                (Source::Given | Source::NbOnly, _) => false,
                (Source::Fold, "dft" | "time") => true,
                (Source::Fold, _) => false,
                (Source::Regressor, "iir") => false,
                _ => true,
            };
            if !allowed {
                return Err(format!("modifier `{modifier}` does not apply to `{spec}`"));
            }
            match modifier {
                "fir" => m.ext.filter_form = FilterForm::Fir,
                "iir" => m.ext.filter_form = FilterForm::Iir,
                "dft" => m.ext.addition = Addition::Dft,
                "time" => m.ext.addition = Addition::Time,
                "gain" => m.ext.gain_adjust = true,
                "nogain" => m.ext.gain_adjust = false,
                other => return Err(format!("unknown modifier `{other}` in `{spec}`")),
            }
        }
        Ok(m)
    }

    pub fn needs_oracle(&self) -> bool {
        self.source == Source::Oracle
    }
}

fn addition_name(a: Addition) -> &'static str {
    match a {
        Addition::Dft => "dft",
        Addition::Time => "time",
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let gain = if self.ext.gain_adjust { "gain" } else { "nogain" };
        let add = addition_name(self.ext.addition);
        match self.source {
            Source::Given => write!(f, "given"),
            Source::NbOnly => write!(f, "nb-only"),
            Source::Fold => write!(f, "fold:{add}"),
            Source::Regressor => write!(f, "regressor:{add}:{gain}"),
            Source::Oracle => {
                let form = match self.ext.filter_form {
                    FilterForm::Fir => "fir",
                    FilterForm::Iir => "iir",
                };
                write!(f, "oracle:{form}:{add}:{gain}")
            }
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::parse(s, &ExtensionConfig::default())
    }
}
