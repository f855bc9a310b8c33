//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Overrides (from `--set key=value`) are applied after the file and win.
//! Unknown keys, malformed values and constraint violations are errors that
//! name the key and where it came from.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigLocation, Error, Result};
use crate::harness::{RunSetup, SuccessKind, SweepConfig};
use crate::model::NoiseSpec;
use crate::optimizer::{InitSpec, StepSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    PowerDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Zero,
    BoundedUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub dims: Vec<usize>,
    pub ratios: Vec<f64>,
    pub trials: usize,
    #[serde(rename = "T")]
    pub iterations: usize,
    pub noise: NoiseKind,
    pub sigma: f64,
    pub schedule: ScheduleKind,
    pub eta0: f64,
    pub p: f64,
    pub init: InitKind,
    pub c0: f64,
    pub seed: u64,
    pub success: SuccessKind,
    pub max_cells: usize,
    pub max_cell_flops: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sweep = SweepConfig::default();
        Self {
            m: sweep.m,
            n: 25,
            n_samples: 140,
            dims: sweep.dims,
            ratios: sweep.ratios,
            trials: sweep.trials_per_cell,
            iterations: sweep.iterations,
            noise: NoiseKind::None,
            sigma: 1.0,
            schedule: ScheduleKind::Constant,
            eta0: 1.0,
            p: 1.0,
            init: InitKind::Zero,
            c0: 1.0,
            seed: 0,
            success: SuccessKind::Ergodic,
            max_cells: sweep.max_cells,
            max_cell_flops: sweep.max_cell_flops,
        }
    }
}

/// Every recognised key, in echo order.
pub const KEYS: &[&str] = &[
    "m",
    "n",
    "N",
    "dims",
    "ratios",
    "trials",
    "T",
    "noise",
    "sigma",
    "schedule",
    "eta0",
    "p",
    "init",
    "c0",
    "seed",
    "success",
    "max_cells",
    "max_cell_flops",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Default,
    File { line: usize },
    Override,
}

/// A validated configuration and where each value came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    pub sources: BTreeMap<String, Source>,
}

impl ResolvedConfig {
    pub fn defaulted_keys(&self) -> Vec<&str> {
        self.sources
            .iter()
            .filter(|(_, s)| **s == Source::Default)
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

fn parse_num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse `{value}` as {}", std::any::type_name::<T>()))
}

fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_num)
        .collect()
}

fn parse_enum<T: serde::de::DeserializeOwned>(
    value: &str,
    allowed: &str,
) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| format!("expected one of {allowed}, got `{value}`"))
}

enum ApplyError {
    Unknown,
    Bad(String),
}

fn apply(
    cfg: &mut ExperimentConfig,
    key: &str,
    value: &str,
) -> std::result::Result<(), ApplyError> {
    let r = match key {
        "m" => parse_num(value).map(|v| cfg.m = v),
        "n" => parse_num(value).map(|v| cfg.n = v),
        "N" => parse_num(value).map(|v| cfg.n_samples = v),
        "dims" => parse_list(value).map(|v| cfg.dims = v),
        "ratios" => parse_list(value).map(|v| cfg.ratios = v),
        "trials" => parse_num(value).map(|v| cfg.trials = v),
        "T" => parse_num(value).map(|v| cfg.iterations = v),
        "noise" => parse_enum(value, "none, gaussian").map(|v| cfg.noise = v),
        "sigma" => parse_num(value).map(|v| cfg.sigma = v),
        "schedule" => parse_enum(value, "constant, power_decay").map(|v| cfg.schedule = v),
        "eta0" => parse_num(value).map(|v| cfg.eta0 = v),
        "p" => parse_num(value).map(|v| cfg.p = v),
        "init" => parse_enum(value, "zero, bounded_uniform").map(|v| cfg.init = v),
        "c0" => parse_num(value).map(|v| cfg.c0 = v),
        "seed" => parse_num(value).map(|v| cfg.seed = v),
        "success" => parse_enum(value, "ergodic, last_iterate").map(|v| cfg.success = v),
        "max_cells" => parse_num(value).map(|v| cfg.max_cells = v),
        "max_cell_flops" => parse_num(value).map(|v| cfg.max_cell_flops = v),
        _ => return Err(ApplyError::Unknown),
    };
    r.map_err(ApplyError::Bad)
}

/// First violated constraint, as `(key, message)`.
fn violation(cfg: &ExperimentConfig) -> Option<(&'static str, String)> {
    let positive = |x: f64| x > 0.0 && x.is_finite();
    let checks: [(&'static str, bool, &str); 13] = [
        ("m", cfg.m >= 1, "must be >= 1"),
        ("n", cfg.n >= 1, "must be >= 1"),
        ("N", cfg.n_samples >= 1, "must be >= 1"),
        (
            "dims",
            !cfg.dims.is_empty() && !cfg.dims.contains(&0),
            "must be a non-empty list of positive integers",
        ),
        (
            "ratios",
            !cfg.ratios.is_empty() && cfg.ratios.iter().all(|&r| positive(r)),
            "must be a non-empty list of positive numbers",
        ),
        ("trials", cfg.trials >= 1, "must be >= 1"),
        ("T", cfg.iterations >= 1, "must be >= 1"),
        (
            "sigma",
            cfg.sigma >= 0.0 && cfg.sigma.is_finite(),
            "must be >= 0",
        ),
        ("eta0", positive(cfg.eta0), "must be > 0"),
        ("p", cfg.p > 0.0 && cfg.p <= 1.0, "must lie in (0, 1]"),
        ("c0", cfg.c0 >= 0.0 && cfg.c0.is_finite(), "must be >= 0"),
        ("max_cells", cfg.max_cells >= 1, "must be >= 1"),
        (
            "max_cell_flops",
            positive(cfg.max_cell_flops),
            "must be > 0",
        ),
    ];
    checks
        .into_iter()
        .find(|(_, ok, _)| !ok)
        .map(|(k, _, msg)| (k, msg.to_string()))
}

/// Parses file text and then applies `overrides` in order.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<ResolvedConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut sources: BTreeMap<String, Source> = KEYS
        .iter()
        .map(|k| (k.to_string(), Source::Default))
        .collect();

    let mut set =
        |key: &str, value: &str, location: ConfigLocation, source: Source| -> Result<()> {
            let err = |message: String| Error::Config {
                key: key.to_string(),
                location,
                message,
            };
            match apply(&mut cfg, key, value) {
                Ok(()) => {}
                Err(ApplyError::Unknown) => return Err(err("unknown key".into())),
                Err(ApplyError::Bad(m)) => return Err(err(m)),
            }
            if let (Some(Source::File { .. }), Source::File { .. }) = (sources.get(key), source) {
                return Err(err("duplicate key".into()));
            }
            sources.insert(key.to_string(), source);
            Ok(())
        };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config {
                key: content.to_string(),
                location: ConfigLocation::Line(line),
                message: "expected `key = value`".into(),
            });
        };
        set(
            key.trim(),
            value.trim(),
            ConfigLocation::Line(line),
            Source::File { line },
        )?;
    }
    for (key, value) in overrides {
        set(
            key.trim(),
            value.trim(),
            ConfigLocation::Override,
            Source::Override,
        )?;
    }

    if let Some((key, message)) = violation(&cfg) {
        let location = match sources.get(key) {
            Some(Source::File { line }) => ConfigLocation::Line(*line),
            _ => ConfigLocation::Override,
        };
        return Err(Error::Config {
            key: key.to_string(),
            location,
            message,
        });
    }
    Ok(ResolvedConfig {
        config: cfg,
        sources,
    })
}

/// Splits `key=value` override strings.
pub fn parse_overrides<I, S>(items: I) -> Result<Vec<(String, String)>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    items
        .into_iter()
        .map(|s| {
            let s = s.as_ref();
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config {
                    key: s.to_string(),
                    location: ConfigLocation::Override,
                    message: "expected key=value".into(),
                })
        })
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn enum_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("config enums serialize as strings"),
    }
}

impl ExperimentConfig {
    /// All keys as `key = value` lines; parses back to an identical config.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let values = [
            self.m.to_string(),
            self.n.to_string(),
            self.n_samples.to_string(),
            join(&self.dims),
            join(&self.ratios),
            self.trials.to_string(),
            self.iterations.to_string(),
            enum_name(&self.noise),
            self.sigma.to_string(),
            enum_name(&self.schedule),
            self.eta0.to_string(),
            self.p.to_string(),
            enum_name(&self.init),
            self.c0.to_string(),
            self.seed.to_string(),
            enum_name(&self.success),
            self.max_cells.to_string(),
            self.max_cell_flops.to_string(),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        match self.noise {
            NoiseKind::None => NoiseSpec::None,
            NoiseKind::Gaussian => NoiseSpec::Gaussian { sigma: self.sigma },
        }
    }

    pub fn step_schedule(&self) -> StepSchedule {
        match self.schedule {
            ScheduleKind::Constant => StepSchedule::Constant { eta0: self.eta0 },
            ScheduleKind::PowerDecay => StepSchedule::PowerDecay {
                eta0: self.eta0,
                p: self.p,
            },
        }
    }

    /// Init spec; the bounded-uniform seed is re-derived per trial by the harness.
    pub fn init_spec(&self) -> InitSpec {
        match self.init {
            InitKind::Zero => InitSpec::Zero,
            InitKind::BoundedUniform => InitSpec::BoundedUniform {
                c0: self.c0,
                seed: self.seed,
            },
        }
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            m: self.m,
            dims: self.dims.clone(),
            ratios: self.ratios.clone(),
            trials_per_cell: self.trials,
            iterations: self.iterations,
            noise: self.noise_spec(),
            schedule: self.step_schedule(),
            init: self.init_spec(),
            master_seed: self.seed,
            success_kind: self.success,
            max_cells: self.max_cells,
            max_cell_flops: self.max_cell_flops,
        }
    }

    pub fn run_setup(&self) -> RunSetup {
        RunSetup {
            m: self.m,
            n: self.n,
            n_samples: self.n_samples,
            noise: self.noise_spec(),
            iterations: self.iterations,
            schedule: self.step_schedule(),
            init: self.init_spec(),
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(k: &str, v: &str) -> Vec<(String, String)> {
        vec![(k.to_string(), v.to_string())]
    }

    #[test]
    fn empty_file_gives_defaults() {
        let r = parse_config("", &[]).unwrap();
        assert_eq!(r.config, ExperimentConfig::default());
        assert_eq!(r.defaulted_keys().len(), KEYS.len());
    }

    #[test]
    fn negative_dimension_names_key() {
        let err = parse_config("# header\nn = -1\n", &[]).unwrap_err();
        match err {
            Error::Config { key, location, .. } => {
                assert_eq!(key, "n");
                assert_eq!(location, ConfigLocation::Line(2));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_key(parse_config("n = 0", &[])) == "n");
    }

    fn err_key(r: Result<ResolvedConfig>) -> String {
        match r.unwrap_err() {
            Error::Config { key, .. } => key,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn override_wins() {
        let r = parse_config("eta0 = 0.5\n", &ov("eta0", "2.0")).unwrap();
        assert_eq!(r.config.eta0, 2.0);
        assert_eq!(r.sources["eta0"], Source::Override);
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(err_key(parse_config("bogus = 1", &[])), "bogus");
        assert_eq!(err_key(parse_config("sigma = -0.5", &[])), "sigma");
        assert_eq!(err_key(parse_config("noise = laplace", &[])), "noise");
        assert_eq!(err_key(parse_config("T = 1.5", &[])), "T");
        assert_eq!(err_key(parse_config("m = 3\nm = 4", &[])), "m");
        assert_eq!(err_key(parse_config("p = 1.5", &[])), "p");
        assert_eq!(err_key(parse_config("", &ov("nope", "1"))), "nope");
        assert_eq!(err_key(parse_config("ratios = 1,-2", &[])), "ratios");
    }

    #[test]
    fn comments_and_lists() {
        let text = "dims = 10, 25 # two dims\n\n  ratios=0.5,1.5\nnoise = gaussian\nsigma = 0.25\nsuccess = last_iterate\n";
        let r = parse_config(text, &[]).unwrap();
        assert_eq!(r.config.dims, vec![10, 25]);
        assert_eq!(r.config.ratios, vec![0.5, 1.5]);
        assert_eq!(r.config.noise_spec(), NoiseSpec::Gaussian { sigma: 0.25 });
        assert_eq!(r.config.success, SuccessKind::LastIterate);
        assert_eq!(r.sources["dims"], Source::File { line: 1 });
    }

    #[test]
    fn echo_round_trips() {
        let text = "m = 7\nratios = 0.1,3.3333333333333335\nschedule = power_decay\np = 0.6\ninit = bounded_uniform\nc0 = 0.5\nseed = 18446744073709551615\nmax_cell_flops = 1e300\n";
        let cfg = parse_config(text, &[]).unwrap().config;
        let back = parse_config(&cfg.echo(), &[]).unwrap().config;
        assert_eq!(back, cfg);
        assert_eq!(cfg.echo(), back.echo());
    }

    #[test]
    fn override_syntax() {
        assert_eq!(
            parse_overrides(["a=1", " b = x "]).unwrap(),
            vec![("a".into(), "1".into()), ("b".into(), "x".into())]
        );
        assert!(parse_overrides(["novalue"]).is_err());
    }
}
