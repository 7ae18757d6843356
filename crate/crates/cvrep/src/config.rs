//! Experiment configuration: file format (TOML or JSON), defaults and
//! validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cvrep_core::metrics::{KeyRateInputs, Protocol};
use cvrep_core::swap::chain::{BoundMode, ChainConfig};

use crate::error::{config_err, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    EofSingle,
    EofMulti,
    KeyrateSingle,
    KeyrateBounds,
    Baselines,
    ZnpTable,
    Optimize,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::EofSingle => "eof_single",
            ExperimentKind::EofMulti => "eof_multi",
            ExperimentKind::KeyrateSingle => "keyrate_single",
            ExperimentKind::KeyrateBounds => "keyrate_bounds",
            ExperimentKind::Baselines => "baselines",
            ExperimentKind::ZnpTable => "znp_table",
            ExperimentKind::Optimize => "optimize",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolName {
    Hom,
    Het,
}

impl From<ProtocolName> for Protocol {
    fn from(p: ProtocolName) -> Self {
        match p {
            ProtocolName::Hom => Protocol::Homodyne,
            ProtocolName::Het => Protocol::Heterodyne,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BoundName {
    Numeric,
    Upper,
    Lower,
}

impl From<BoundName> for BoundMode {
    fn from(b: BoundName) -> Self {
        match b {
            BoundName::Numeric => BoundMode::Numeric,
            BoundName::Upper => BoundMode::Upper,
            BoundName::Lower => BoundMode::Lower,
        }
    }
}

impl BoundName {
    pub fn name(self) -> &'static str {
        match self {
            BoundName::Numeric => "numeric",
            BoundName::Upper => "upper",
            BoundName::Lower => "lower",
        }
    }
}

/// Distances either listed or as an inclusive `start..=stop` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistanceSpec {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl DistanceSpec {
    /// Parses `300`, `250,300,350` or `250:400:5`.
    pub fn parse(s: &str) -> RunResult<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| config_err(format!("bad distance `{t}`")))
        };
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err(config_err(format!("distance range `{s}` is not start:stop:step")));
            }
            return Ok(DistanceSpec::Range {
                start: num(parts[0])?,
                stop: num(parts[1])?,
                step: num(parts[2])?,
            });
        }
        Ok(DistanceSpec::List(
            s.split(',').map(num).collect::<RunResult<Vec<f64>>>()?,
        ))
    }

    pub fn points(&self) -> RunResult<Vec<f64>> {
        match self {
            DistanceSpec::List(v) => Ok(v.clone()),
            &DistanceSpec::Range { start, stop, step } => {
                if !(step > 0.0 && step.is_finite() && start.is_finite() && stop >= start) {
                    return Err(config_err(format!(
                        "distance range {start}:{stop}:{step} is empty or malformed"
                    )));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                Ok((0..count).map(|i| start + step * i as f64).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub max_evals: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    pub chi_min: f64,
    pub chi_max: f64,
    pub g_min: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_evals: 300,
            f_tol: 1e-6,
            x_tol: 1e-3,
            chi_min: 0.01,
            chi_max: 0.9,
            g_min: 1.0,
        }
    }
}

/// Everything optional; what a config file or the command line may set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub experiment: Option<ExperimentKind>,
    pub links: Option<u32>,
    pub distance_km: Option<DistanceSpec>,
    pub chi: Option<f64>,
    pub gain_max: Option<Vec<f64>>,
    pub gamma_max: Option<Vec<f64>>,
    pub gamma_scan: Option<Vec<f64>>,
    pub beta: Option<f64>,
    pub protocol: Option<ProtocolName>,
    pub bound: Option<BoundName>,
    pub cutoff: Option<usize>,
    pub attenuation_db_per_km: Option<f64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub optimizer: Option<OptimizerSettings>,
}

impl ConfigOverrides {
    pub fn from_file(path: &Path) -> RunResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
        }
    }

    /// Fields set in `top` win.
    pub fn merge(self, top: ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            experiment: top.experiment.or(self.experiment),
            links: top.links.or(self.links),
            distance_km: top.distance_km.or(self.distance_km),
            chi: top.chi.or(self.chi),
            gain_max: top.gain_max.or(self.gain_max),
            gamma_max: top.gamma_max.or(self.gamma_max),
            gamma_scan: top.gamma_scan.or(self.gamma_scan),
            beta: top.beta.or(self.beta),
            protocol: top.protocol.or(self.protocol),
            bound: top.bound.or(self.bound),
            cutoff: top.cutoff.or(self.cutoff),
            attenuation_db_per_km: top.attenuation_db_per_km.or(self.attenuation_db_per_km),
            workers: top.workers.or(self.workers),
            out: top.out.or(self.out),
            seed: top.seed.or(self.seed),
            trials: top.trials.or(self.trials),
            optimizer: top.optimizer.or(self.optimizer),
        }
    }
}

/// Fully resolved, validated experiment configuration. Serialized verbatim
/// into the sidecar and hashed into the CSV header.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub links: u32,
    pub distances_km: Vec<f64>,
    /// Fixed source squeezing; optimized when absent (key-rate experiments).
    pub chi: Option<f64>,
    pub gain_max: Vec<f64>,
    /// Post-selection radius per swap round, base round first.
    pub gamma_max: Vec<f64>,
    pub gamma_scan: Vec<f64>,
    pub beta: f64,
    pub protocol: ProtocolName,
    pub bound: BoundName,
    pub cutoff: usize,
    pub attenuation_db_per_km: f64,
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub out: PathBuf,
    pub seed: u64,
    pub trials: u64,
    pub optimizer: OptimizerSettings,
}

pub const EOF_CHI: f64 = 0.3;
pub const MAX_CUTOFF: usize = 40;

fn default_gamma(protocol: ProtocolName) -> f64 {
    match protocol {
        ProtocolName::Hom => 0.5,
        ProtocolName::Het => 0.4,
    }
}

impl ExperimentConfig {
    pub fn resolve(o: ConfigOverrides, default_workers: usize) -> RunResult<Self> {
        let experiment = o
            .experiment
            .ok_or_else(|| config_err("no experiment selected"))?;
        let links = o.links.unwrap_or(2);
        if ![2, 4, 8, 16].contains(&links) {
            return Err(config_err(format!("links must be one of 2, 4, 8, 16 (got {links})")));
        }
        let levels = links.trailing_zeros() as usize;
        let experiment = match experiment {
            ExperimentKind::EofSingle | ExperimentKind::EofMulti if links == 2 => {
                ExperimentKind::EofSingle
            }
            ExperimentKind::EofSingle | ExperimentKind::EofMulti => ExperimentKind::EofMulti,
            k => k,
        };
        let is_eof = matches!(experiment, ExperimentKind::EofSingle | ExperimentKind::EofMulti);
        let distances = match o.distance_km {
            Some(d) => d.points()?,
            None => match experiment {
                ExperimentKind::EofSingle | ExperimentKind::EofMulti => {
                    DistanceSpec::Range { start: 5.0, stop: 100.0, step: 5.0 }.points()?
                }
                ExperimentKind::Baselines => {
                    DistanceSpec::Range { start: 10.0, stop: 400.0, step: 10.0 }.points()?
                }
                _ => DistanceSpec::Range { start: 250.0, stop: 400.0, step: 5.0 }.points()?,
            },
        };
        if experiment != ExperimentKind::ZnpTable {
            if distances.is_empty() {
                return Err(config_err("distance grid is empty"));
            }
            if let Some(d) = distances.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
                return Err(config_err(format!("distances must be positive and finite (got {d})")));
            }
        }
        let protocol = o.protocol.unwrap_or(ProtocolName::Hom);
        let bound = o.bound.unwrap_or(if links == 2 {
            BoundName::Numeric
        } else {
            BoundName::Upper
        });
        if bound == BoundName::Numeric && links > 2 && !is_eof {
            return Err(config_err(format!(
                "numeric bound needs two links; {links} links are intractable"
            )));
        }
        let chi = match (o.chi, is_eof) {
            (Some(c), _) => Some(c),
            (None, true) => Some(EOF_CHI),
            (None, false) => None,
        };
        if let Some(c) = chi {
            if !(c > 0.0 && c < 1.0) {
                return Err(config_err(format!("chi must lie in (0, 1) (got {c})")));
            }
        }
        let gain_max = o.gain_max.unwrap_or_else(|| match experiment {
            ExperimentKind::EofSingle => vec![3.0, 4.0, 5.0, 6.0, 7.0],
            ExperimentKind::EofMulti => vec![6.0],
            _ => vec![100.0],
        });
        if gain_max.is_empty() {
            return Err(config_err("gain_max list is empty"));
        }
        if !is_eof && gain_max.len() != 1 {
            return Err(config_err("key-rate experiments take a single gain_max"));
        }
        let optimizer = o.optimizer.unwrap_or_default();
        for &g in &gain_max {
            if !(g.is_finite() && g >= optimizer.g_min && g <= cvrep_core::scissor::MAX_GAIN) {
                return Err(config_err(format!(
                    "gain_max {g} outside [{}, {}]",
                    optimizer.g_min,
                    cvrep_core::scissor::MAX_GAIN
                )));
            }
        }
        let gamma_max = match o.gamma_max {
            None => vec![default_gamma(protocol); levels],
            Some(v) if v.len() == 1 => vec![v[0]; levels],
            Some(v) if v.len() == levels => v,
            Some(v) => {
                return Err(config_err(format!(
                    "{} gamma_max values for {levels} swap rounds",
                    v.len()
                )))
            }
        };
        if let Some(g) = gamma_max.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(config_err(format!("gamma_max must be >= 0 (got {g})")));
        }
        let gamma_scan = o.gamma_scan.unwrap_or_default();
        if !gamma_scan.is_empty() {
            if experiment != ExperimentKind::Optimize {
                return Err(config_err("gamma_scan only applies to optimize"));
            }
            if let Some(g) = gamma_scan.iter().find(|g| !(g.is_finite() && **g > 0.0 && **g <= 2.0)) {
                return Err(config_err(format!("gamma_scan values must lie in (0, 2] (got {g})")));
            }
        }
        let beta = o.beta.unwrap_or(0.95);
        if !(0.0..=1.0).contains(&beta) {
            return Err(config_err(format!("beta must lie in [0, 1] (got {beta})")));
        }
        let cutoff = o.cutoff.unwrap_or(12);
        if !(1..=MAX_CUTOFF).contains(&cutoff) {
            return Err(config_err(format!("cutoff must lie in 1..={MAX_CUTOFF} (got {cutoff})")));
        }
        let attenuation = o
            .attenuation_db_per_km
            .unwrap_or(cvrep_core::channel::DEFAULT_ATTENUATION_DB_PER_KM);
        if !(attenuation.is_finite() && attenuation >= 0.0) {
            return Err(config_err("attenuation must be >= 0"));
        }
        let workers = o.workers.unwrap_or(default_workers);
        if workers == 0 {
            return Err(config_err("workers must be >= 1"));
        }
        let trials = o.trials.unwrap_or(1_000_000);
        if trials == 0 {
            return Err(config_err("trials must be >= 1"));
        }
        let opt = &optimizer;
        if !(opt.chi_min > 0.0 && opt.chi_min < opt.chi_max && opt.chi_max < 1.0) {
            return Err(config_err("optimizer chi bounds must satisfy 0 < chi_min < chi_max < 1"));
        }
        if !(opt.g_min > 0.0 && opt.max_evals > 0 && opt.f_tol > 0.0 && opt.x_tol > 0.0) {
            return Err(config_err("optimizer settings must be positive"));
        }
        let out = o
            .out
            .unwrap_or_else(|| PathBuf::from(format!("{}.csv", experiment.name())));
        Ok(Self {
            experiment,
            links,
            distances_km: distances,
            chi,
            gain_max,
            gamma_max,
            gamma_scan,
            beta,
            protocol,
            bound,
            cutoff,
            attenuation_db_per_km: attenuation,
            workers,
            out,
            seed: o.seed.unwrap_or(0),
            trials,
            optimizer,
        })
    }

    pub fn levels(&self) -> u32 {
        self.links.trailing_zeros()
    }

    pub fn key_inputs(&self) -> KeyRateInputs {
        KeyRateInputs {
            beta: self.beta,
            protocol: self.protocol.into(),
        }
    }

    /// Chain template for one distance; `chi` and `g` are placeholders that
    /// the experiments overwrite.
    pub fn chain(&self, distance_km: f64, bound: BoundName) -> ChainConfig {
        let mut c = ChainConfig::new(
            self.levels(),
            distance_km,
            self.chi.unwrap_or(EOF_CHI),
            self.gain_max[0],
            self.gamma_max.clone(),
        );
        c.attenuation_db_per_km = self.attenuation_db_per_km;
        c.cutoff = self.cutoff;
        c.key = self.key_inputs();
        c.bound_mode = bound.into();
        c
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical_json().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(kind: ExperimentKind) -> ConfigOverrides {
        ConfigOverrides {
            experiment: Some(kind),
            ..Default::default()
        }
    }

    #[test]
    fn distance_grammar() {
        assert_eq!(DistanceSpec::parse("300").unwrap().points().unwrap(), vec![300.0]);
        assert_eq!(
            DistanceSpec::parse("250,300").unwrap().points().unwrap(),
            vec![250.0, 300.0]
        );
        let r = DistanceSpec::parse("250:400:5").unwrap().points().unwrap();
        assert_eq!(r.len(), 31);
        assert_eq!(r[30], 400.0);
        assert!(DistanceSpec::parse("1:2").is_err());
        assert!(DistanceSpec::parse("a,b").is_err());
        assert!(DistanceSpec::parse("5:1:1").unwrap().points().is_err());
    }

    #[test]
    fn defaults_per_experiment() {
        let c = ExperimentConfig::resolve(base(ExperimentKind::EofSingle), 1).unwrap();
        assert_eq!(c.chi, Some(EOF_CHI));
        assert_eq!(c.gain_max, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
        let mut o = base(ExperimentKind::EofSingle);
        o.links = Some(4);
        let c = ExperimentConfig::resolve(o, 1).unwrap();
        assert_eq!(c.experiment, ExperimentKind::EofMulti);
        assert_eq!(c.gamma_max.len(), 2);
        let mut o = base(ExperimentKind::KeyrateSingle);
        o.protocol = Some(ProtocolName::Het);
        let c = ExperimentConfig::resolve(o, 3).unwrap();
        assert_eq!(c.chi, None);
        assert_eq!(c.gamma_max, vec![0.4]);
        assert_eq!(c.workers, 3);
        assert_eq!(c.distances_km.len(), 31);
    }

    #[test]
    fn rejects_bad_values() {
        let cases: Vec<Box<dyn Fn(&mut ConfigOverrides)>> = vec![
            Box::new(|o| o.links = Some(3)),
            Box::new(|o| o.chi = Some(1.0)),
            Box::new(|o| o.beta = Some(1.5)),
            Box::new(|o| o.gain_max = Some(vec![500.0])),
            Box::new(|o| o.gamma_max = Some(vec![0.1, 0.2, 0.3])),
            Box::new(|o| o.distance_km = Some(DistanceSpec::List(vec![]))),
            Box::new(|o| o.distance_km = Some(DistanceSpec::List(vec![-1.0]))),
            Box::new(|o| o.cutoff = Some(0)),
            Box::new(|o| o.workers = Some(0)),
            Box::new(|o| {
                o.links = Some(4);
                o.bound = Some(BoundName::Numeric)
            }),
        ];
        for (i, f) in cases.iter().enumerate() {
            let mut o = base(ExperimentKind::KeyrateSingle);
            f(&mut o);
            assert!(ExperimentConfig::resolve(o, 1).is_err(), "case {i}");
        }
        assert!(ExperimentConfig::resolve(ConfigOverrides::default(), 1).is_err());
    }

    #[test]
    fn toml_and_json_agree() {
        let t: ConfigOverrides = toml::from_str(
            "experiment = \"keyrate_single\"\nlinks = 2\ndistance_km = { start = 250.0, stop = 260.0, step = 5.0 }\ngamma_max = [0.5]\nprotocol = \"het\"\n",
        )
        .unwrap();
        let j: ConfigOverrides = serde_json::from_str(
            r#"{"experiment":"keyrate_single","links":2,"distance_km":{"start":250.0,"stop":260.0,"step":5.0},"gamma_max":[0.5],"protocol":"het"}"#,
        )
        .unwrap();
        assert_eq!(t, j);
        assert!(toml::from_str::<ConfigOverrides>("nonsense = 1").is_err());
    }

    #[test]
    fn hash_tracks_physics_not_plumbing() {
        let a = ExperimentConfig::resolve(base(ExperimentKind::Baselines), 1).unwrap();
        let mut o = base(ExperimentKind::Baselines);
        o.workers = Some(4);
        o.out = Some("elsewhere.csv".into());
        let b = ExperimentConfig::resolve(o, 1).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut o = base(ExperimentKind::Baselines);
        o.beta = Some(0.9);
        let c = ExperimentConfig::resolve(o, 1).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
