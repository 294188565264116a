//! Run configuration read from a TOML file.

use serde::Deserialize;
use toml::Spanned;

use onsager_core::{ChainSpec, MobilityModel, MobilitySpec, ReversibleChain};

use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub chain: Option<Spanned<ChainConfig>>,
    pub mobility: Option<Spanned<MobilitySpec>>,
    pub analyze: Option<AnalyzeConfig>,
    pub simulate: Option<SimulateConfig>,
    pub geodesic: Option<GeodesicConfig>,
    pub transport: Option<TransportConfig>,
    pub sweep: Option<SweepConfig>,
    pub output: Option<OutputConfig>,
}

/// Either a named preset or inline rates `[i, j, Q_ij]` with 1-based states.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub preset: Option<String>,
    pub n: Option<usize>,
    pub rates: Option<Vec<(usize, usize, f64)>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub point: Option<Vec<f64>>,
    pub metric_step: Option<f64>,
    pub christoffel_step: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub p0: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicConfig {
    pub p0: Vec<f64>,
    /// Initial potential; selects the initial value mode.
    pub phi0: Option<Vec<f64>>,
    /// Target point; selects the boundary value mode on `[0, 1]`.
    pub p1: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    pub p0: Vec<f64>,
    pub phi0: Vec<f64>,
    pub etas: Vec<Vec<f64>>,
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: Option<usize>,
    pub metric_step: Option<f64>,
    pub christoffel_step: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<String>,
}

/// Parsed file together with its source, for line numbers in later errors.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: String,
    pub origin: String,
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

impl LoadedConfig {
    pub fn parse(source: String, origin: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(&source).map_err(|e| {
            let line = e.span().map(|s| format!("line {}: ", line_of(&source, s.start))).unwrap_or_default();
            CliError::Config(format!("{origin}: {line}{}", e.message()))
        })?;
        Ok(Self {
            config,
            source,
            origin: origin.to_string(),
        })
    }

    pub fn empty() -> Self {
        Self {
            config: RunConfig::default(),
            source: String::new(),
            origin: "<defaults>".into(),
        }
    }

    fn at<T>(&self, item: &Spanned<T>, key: &str, msg: impl std::fmt::Display) -> CliError {
        CliError::Config(format!(
            "{}: line {}: `{key}`: {msg}",
            self.origin,
            line_of(&self.source, item.span().start)
        ))
    }

    /// Builds the chain; a preset given on the command line wins over the file.
    pub fn chain(&self, preset: Option<&str>) -> Result<ReversibleChain, CliError> {
        if let Some(name) = preset {
            return preset_chain(name).ok_or_else(|| CliError::Config(format!("--preset: unknown preset `{name}`")));
        }
        let spanned = self
            .config
            .chain
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("{}: missing `[chain]` table (or pass --preset)", self.origin)))?;
        let chain = spanned.get_ref();
        match (&chain.preset, chain.n, &chain.rates) {
            (Some(name), None, None) => {
                preset_chain(name).ok_or_else(|| self.at(spanned, "chain.preset", format!("unknown preset `{name}`")))
            }
            (None, Some(n), Some(rates)) => ChainSpec { n, rates: rates.clone() }
                .build()
                .map_err(|e| self.at(spanned, "chain.rates", e)),
            _ => Err(self.at(spanned, "chain", "give either `preset` or both `n` and `rates`")),
        }
    }

    /// Builds the mobility model; defaults to the logarithmic mean.
    pub fn mobility(&self) -> Result<MobilityModel, CliError> {
        match &self.config.mobility {
            None => Ok(MobilityModel::kl()),
            Some(spanned) => spanned.get_ref().build().map_err(|e| self.at(spanned, "mobility", e)),
        }
    }

    pub fn output_path(&self, flag: Option<&str>) -> Option<String> {
        flag.map(str::to_string)
            .or_else(|| self.config.output.as_ref().and_then(|o| o.path.clone()))
    }
}

pub fn preset_chain(name: &str) -> Option<ReversibleChain> {
    match name {
        "triangle-reaction" => Some(ReversibleChain::triangle_reaction()),
        "lattice3" => Some(ReversibleChain::lattice3()),
        _ => None,
    }
}

/// The command section or a config error naming it.
pub fn section<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("missing `[{name}]` table")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_reports_line_and_name() {
        let src = "[chain]\npreset = \"lattice3\"\n\n[mobility]\nkind = \"kl\"\nbogus = 1\n".to_string();
        let err = LoadedConfig::parse(src, "run.toml").err().unwrap().to_string();
        assert!(err.contains("line 6"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn bad_mobility_names_the_table_line() {
        let src = "[chain]\npreset = \"lattice3\"\n[mobility]\nkind = \"alpha\"\nalpha = 1.0\n".to_string();
        let cfg = LoadedConfig::parse(src, "run.toml").unwrap();
        let err = cfg.mobility().unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("`mobility`"), "{err}");
    }

    #[test]
    fn inline_rates_build() {
        let src = "[chain]\nn = 2\nrates = [[1, 2, 1.0], [2, 1, 3.0]]\n".to_string();
        let cfg = LoadedConfig::parse(src, "run.toml").unwrap();
        let chain = cfg.chain(None).unwrap();
        assert!((chain.pi()[0] - 0.75).abs() < 1e-15);
        assert!(cfg.chain(Some("nope")).is_err());
    }
}
