//! Bayesian network meta-analysis and meta-regression across study designs
//! (randomized and observational) and data formats (participant-level and
//! arm-level), with risk-of-bias adjustment and a gradient-free sampler.

/// `Display` plus case-insensitive `FromStr` over fixed spellings.
macro_rules! text_enum {
    ($ty:ty, $what:literal, { $($variant:path => $text:literal $(| $alias:literal)*),+ $(,)? }) => {
        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                let s = match self { $($variant => $text),+ };
                f.write_str(s)
            }
        }

        impl std::str::FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let t = s.trim();
                $(
                    if t.eq_ignore_ascii_case($text) $(|| t.eq_ignore_ascii_case($alias))* {
                        return Ok($variant);
                    }
                )+
                Err(format!("invalid {} '{}'", $what, s))
            }
        }
    };
}

pub mod config;
pub mod density;
pub mod evidence;
pub mod kernel;
pub mod mcmc;
pub mod space;
pub mod fit;
pub mod nrs;
pub mod oracle;
pub mod report;

pub use config::ModelConfig;
pub use evidence::EvidenceNetwork;
pub use fit::{fit_model, Fit, FitError};
pub use kernel::Posterior;
pub use mcmc::{PosteriorSamples, SamplerSettings};
