use std::path::PathBuf;
use std::str::FromStr;

use serde::Deserialize;

use crate::decoders::{DecoderKind, RadiusPolicy, ML_BIT_BUDGET};
use crate::error::{Error, Result};
use crate::modem::{Constellation, VofdmConfig};
use crate::sifft::SifftParams;

/// Experiment family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    RmseExact,
    RmseApprox,
    BerSweep,
    Diversity,
    DecoderCompare,
    Joint,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::RmseExact => "rmse-exact",
            Self::RmseApprox => "rmse-approx",
            Self::BerSweep => "ber-sweep",
            Self::Diversity => "diversity",
            Self::DecoderCompare => "decoder-compare",
            Self::Joint => "joint",
        }
    }

    fn default_decoders(&self) -> &'static [&'static str] {
        match self {
            Self::DecoderCompare => &["zf", "mmse", "ml", "pis"],
            _ => &["pis"],
        }
    }

    fn default_estimators(&self) -> &'static [&'static str] {
        match self {
            Self::RmseExact => &["dense", "sifft-exact"],
            Self::RmseApprox => &["dense", "sifft-approx"],
            Self::Joint => &["sifft-approx", "genie"],
            _ => &["genie"],
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s))
            .map_err(|_| Error::Config(format!("unknown mode `{s}`")))
    }
}

/// Where the decoder's channel knowledge comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Genie,
    Dense,
    SifftExact,
    SifftApprox,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Genie => "genie",
            Self::Dense => "dense",
            Self::SifftExact => "sifft-exact",
            Self::SifftApprox => "sifft-approx",
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "genie" => Ok(Self::Genie),
            "dense" => Ok(Self::Dense),
            "sifft-exact" => Ok(Self::SifftExact),
            "sifft-approx" => Ok(Self::SifftApprox),
            other => Err(Error::Config(format!("unknown estimator `{other}`"))),
        }
    }
}

/// How sampled tap gains are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerNorm {
    /// Each tap is `CN(0, 1/K)`, so the average channel energy is 1.
    #[default]
    Average,
    /// Every realization is rescaled to unit energy.
    Unit,
    /// Each tap is `CN(0, 1)`.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v.clone()],
            Self::Many(v) => v.clone(),
        }
    }
}

/// One `[[grid]]` table; list-valued fields expand to their Cartesian product.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct GridBlock {
    pub label: Option<String>,
    pub L: OneOrMany<usize>,
    pub M: OneOrMany<usize>,
    pub P: OneOrMany<usize>,
    /// Ignored when `delays` is set.
    pub K: Option<OneOrMany<usize>>,
    pub D: OneOrMany<usize>,
    /// Cyclic prefix; defaults to `D`.
    pub cp: Option<usize>,
    /// `inf` means noiseless.
    pub snr_db: Option<OneOrMany<f64>>,
    pub radius: Option<OneOrMany<String>>,
    pub decoder: Option<OneOrMany<String>>,
    pub estimator: Option<OneOrMany<String>>,
    /// Fixed tap delays; gains are still drawn per trial.
    pub delays: Option<Vec<usize>>,
    #[serde(default)]
    pub anchored: bool,
    #[serde(default)]
    pub power: PowerNorm,
}

/// A full experiment description, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub mode: Mode,
    #[serde(default)]
    pub label: String,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub sifft: SifftParams,
    pub grid: Vec<GridBlock>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("at least one [[grid]] table is required".into()));
        }
        self.sifft.validate()?;
        self.points().map(|_| ())
    }

    /// Expands every grid table in order. Parse errors are configuration errors;
    /// feasibility is checked separately per point.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        let mut out = Vec::new();
        for block in &self.grid {
            let snrs = block.snr_db.as_ref().map_or_else(
                || vec![if matches!(self.mode, Mode::RmseExact) { f64::INFINITY } else { 10.0 }],
                OneOrMany::values,
            );
            let default_radius = if self.mode == Mode::Joint { "robust" } else { "formula" };
            let radii = parse_all::<RadiusPolicy>(&block.radius, &[default_radius])?;
            let decoders = parse_all::<DecoderKind>(&block.decoder, self.mode.default_decoders())?;
            let estimators = parse_all::<Estimator>(&block.estimator, self.mode.default_estimators())?;
            let ks = match (&block.delays, &block.K) {
                (Some(d), _) => vec![d.len()],
                (None, Some(k)) => k.values(),
                (None, None) => return Err(Error::Config("grid table needs K or delays".into())),
            };
            for l in block.L.values() {
                for m in block.M.values() {
                    for p in block.P.values() {
                        for &k in &ks {
                            for d in block.D.values() {
                                for &snr_db in &snrs {
                                    for &radius in &radii {
                                        out.push(GridPoint {
                                            label: block.label.clone().unwrap_or_else(|| self.label.clone()),
                                            l,
                                            m,
                                            p,
                                            k,
                                            d,
                                            cp: block.cp.unwrap_or(d),
                                            snr_db,
                                            radius,
                                            decoders: decoders.clone(),
                                            estimators: estimators.clone(),
                                            delays: block.delays.clone(),
                                            anchored: block.anchored,
                                            power: block.power,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn parse_all<T: FromStr<Err = Error>>(given: &Option<OneOrMany<String>>, default: &[&str]) -> Result<Vec<T>> {
    match given {
        Some(v) => v.values().iter().map(|s| s.parse()).collect(),
        None => default.iter().map(|s| s.parse()).collect(),
    }
}

/// A single fully specified simulation setting.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub label: String,
    pub l: usize,
    pub m: usize,
    pub p: usize,
    pub k: usize,
    pub d: usize,
    pub cp: usize,
    pub snr_db: f64,
    pub radius: RadiusPolicy,
    pub decoders: Vec<DecoderKind>,
    pub estimators: Vec<Estimator>,
    pub delays: Option<Vec<usize>>,
    pub anchored: bool,
    pub power: PowerNorm,
}

impl GridPoint {
    pub fn config(&self) -> Result<VofdmConfig> {
        VofdmConfig::new(self.l, self.m, self.p, self.cp)
    }

    /// Reason this point cannot run, if any.
    pub fn infeasibility(&self, mode: Mode) -> Option<String> {
        let cfg = match self.config() {
            Ok(c) => c,
            Err(e) => return Some(e.to_string()),
        };
        if self.cp < self.d {
            return Some(format!("cyclic prefix {} shorter than D = {}", self.cp, self.d));
        }
        if self.d >= cfg.n() {
            return Some(format!("D = {} must be below N = {}", self.d, cfg.n()));
        }
        if self.k == 0 || self.k > self.d + 1 {
            return Some(format!("need 1 <= K <= D + 1, got K = {}, D = {}", self.k, self.d));
        }
        if let Some(delays) = &self.delays {
            let mut sorted = delays.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != delays.len() || sorted.last().is_some_and(|&j| j > self.d) {
                return Some(format!("delays {delays:?} must be distinct and at most D = {}", self.d));
            }
        }
        if mode == Mode::Diversity {
            return (cfg.data_indices().is_empty()).then(|| "no data subchannels".into());
        }
        let mp = cfg.pilot_span();
        let estimating = self.estimators.iter().any(|&e| e != Estimator::Genie);
        if estimating && self.d >= mp {
            return Some(format!("D = {} must be below MP = {mp} to estimate from pilots", self.d));
        }
        let sparse = self.estimators.iter().any(|e| matches!(e, Estimator::SifftExact | Estimator::SifftApprox));
        if sparse && (mp < 16 || !mp.is_power_of_two() || 4 * self.k > mp) {
            return Some(format!("sparse IFFT needs MP a power of two >= max(16, 4K), got {mp}"));
        }
        if matches!(mode, Mode::RmseExact | Mode::RmseApprox) {
            return None;
        }
        if cfg.data_indices().is_empty() {
            return Some("no data subchannels".into());
        }
        let bits = Constellation::Bpsk.bits_per_symbol() as usize * self.m;
        if self.decoders.contains(&DecoderKind::Ml) && bits > ML_BIT_BUDGET as usize {
            return Some(format!("ML enumeration of {bits} bits exceeds the {ML_BIT_BUDGET}-bit budget"));
        }
        let needs_radius = !matches!(self.radius, RadiusPolicy::Fixed(_));
        if self.decoders.contains(&DecoderKind::Pis) && needs_radius && !(self.snr_db > 0.0 && self.snr_db.is_finite()) {
            return Some(format!("radius policy needs a finite SNR above 0 dB, got {}", self.snr_db));
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
mode = "ber-sweep"
label = "flat-d"
trials = 10
seed = 7

[[grid]]
L = 256
M = 8
P = 4
K = 4
D = [16, 32, 64]
cp = 64
snr_db = 10
radius = "formula"
"#;

    #[test]
    fn expands_grid_lists() {
        let spec = ExperimentSpec::from_toml(SAMPLE).unwrap();
        let pts = spec.points().unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts.iter().map(|p| p.d).collect::<Vec<_>>(), vec![16, 32, 64]);
        assert!(pts.iter().all(|p| p.cp == 64 && p.decoders == vec![DecoderKind::Pis]));
        assert!(pts.iter().all(|p| p.infeasibility(spec.mode).is_none()));
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(matches!(ExperimentSpec::from_toml(&SAMPLE.replace("seed", "sed")), Err(Error::Config(_))));
        let bad = SAMPLE.replace("radius = \"formula\"", "radius = \"huge\"");
        assert!(matches!(ExperimentSpec::from_toml(&bad), Err(Error::Config(_))));
        assert!(matches!(ExperimentSpec::from_toml(&SAMPLE.replace("trials = 10", "trials = 0")), Err(Error::Config(_))));
    }

    #[test]
    fn infeasible_points_explain_themselves() {
        let spec = ExperimentSpec::from_toml(&SAMPLE.replace("cp = 64", "cp = 20")).unwrap();
        let pts = spec.points().unwrap();
        assert!(pts[0].infeasibility(spec.mode).is_none());
        assert!(pts[1].infeasibility(spec.mode).unwrap().contains("cyclic prefix"));
        let ml = SAMPLE.replace("M = 8", "M = 32").replace("radius = \"formula\"", "decoder = \"ml\"");
        let spec = ExperimentSpec::from_toml(&ml).unwrap();
        assert!(spec.points().unwrap()[0].infeasibility(spec.mode).unwrap().contains("budget"));
    }

    #[test]
    fn mode_defaults() {
        let text = SAMPLE.replace("ber-sweep", "joint").replace("radius = \"formula\"\n", "");
        let pts = ExperimentSpec::from_toml(&text).unwrap().points().unwrap();
        assert_eq!(pts[0].estimators, vec![Estimator::SifftApprox, Estimator::Genie]);
        assert!(matches!(pts[0].radius, RadiusPolicy::Robust { .. }));
        assert_eq!("rmse-approx".parse::<Mode>().unwrap(), Mode::RmseApprox);
    }
}
