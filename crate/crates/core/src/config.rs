//! Run configuration (TOML) and named seed streams.

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admissibility::{PairOrientation, WeightModel};
use crate::base::{mix64, BaseSystem, Region};
use crate::cocycle::{builtin, Cocycle};
use crate::degeneracy::WitnessBudgets;
use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Spectrum,
    Splitting,
    Dichotomy,
    Solve,
    OracleCompare,
    Mane,
    Induce,
    Witness,
    Robustness,
    Report,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Spectrum,
        Experiment::Splitting,
        Experiment::Dichotomy,
        Experiment::Solve,
        Experiment::OracleCompare,
        Experiment::Mane,
        Experiment::Induce,
        Experiment::Witness,
        Experiment::Robustness,
        Experiment::Report,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Splitting => "splitting",
            Experiment::Dichotomy => "dichotomy",
            Experiment::Solve => "solve",
            Experiment::OracleCompare => "oracle-compare",
            Experiment::Mane => "mane",
            Experiment::Induce => "induce",
            Experiment::Witness => "witness",
            Experiment::Robustness => "robustness",
            Experiment::Report => "report",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaseSpec {
    Rotation {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Bernoulli {
        probabilities: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Periodic {
        period: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl BaseSpec {
    pub fn build(&self) -> Result<BaseSystem> {
        match self {
            BaseSpec::Rotation { gamma: None, .. } => Ok(BaseSystem::golden_rotation()),
            BaseSpec::Rotation { gamma: Some(g), .. } => BaseSystem::rotation(*g),
            BaseSpec::Bernoulli { probabilities, .. } => {
                BaseSystem::bernoulli(probabilities.clone())
            }
            BaseSpec::Periodic { period, .. } => BaseSystem::periodic(*period),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            BaseSpec::Rotation { seed, .. }
            | BaseSpec::Bernoulli { seed, .. }
            | BaseSpec::Periodic { seed, .. } => *seed,
        }
    }
}

/// A builtin name with parameters, or generators listed by base label
/// (symbol for Bernoulli, state for periodic bases) as row lists.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CocycleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matrices: Vec<Vec<Vec<f64>>>,
}

impl CocycleSpec {
    pub fn builtin(name: &str, params: &[f64]) -> Self {
        CocycleSpec {
            builtin: Some(name.to_string()),
            params: params.to_vec(),
            matrices: Vec::new(),
        }
    }

    pub fn build(&self) -> Result<Cocycle> {
        match (&self.builtin, self.matrices.is_empty()) {
            (Some(name), true) => builtin(name, &self.params),
            (None, false) => {
                let mut table = Vec::with_capacity(self.matrices.len());
                for (i, rows) in self.matrices.iter().enumerate() {
                    let d = rows.len();
                    if d == 0 || rows.iter().any(|r| r.len() != d) {
                        return Err(LabError::Config(format!(
                            "cocycle.matrices[{i}] is not square"
                        )));
                    }
                    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                    table.push(DMatrix::from_row_slice(d, d, &flat));
                }
                Cocycle::from_table(table, "table")
            }
            (Some(_), false) => Err(LabError::Config(
                "cocycle: give either `builtin` or `matrices`, not both".into(),
            )),
            (None, true) => Err(LabError::Config(
                "cocycle: `builtin` or `matrices` is required".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegionSpec {
    Everything,
    Arc {
        lo: f64,
        hi: f64,
    },
    /// (offset, symbol) pairs.
    Cylinder {
        symbols: Vec<(i64, usize)>,
    },
    States {
        states: Vec<usize>,
    },
}

impl RegionSpec {
    pub fn build(&self) -> Region {
        match self {
            RegionSpec::Everything => Region::everything(),
            RegionSpec::Arc { lo, hi } => Region::arc(*lo, *hi),
            RegionSpec::Cylinder { symbols } => Region::cylinder(symbols.clone()),
            RegionSpec::States { states } => Region::states(states.clone()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Steps for spectrum estimates.
    pub steps: usize,
    pub reorth: usize,
    pub gap_tol: f64,
    pub zero_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    pub n_tail: usize,
    pub safety: f64,
    pub n_max: usize,
    /// Horizon for Birkhoff sums, return times and Mañé construction.
    pub horizon: usize,
    /// Base points sampled (certificate points, Birkhoff starts, solve windows).
    pub samples: usize,
    pub trials: usize,
    pub tol: f64,
    /// Mañé target C, or the witness ratio L.
    pub target: f64,
    /// Constant weight C for solve and witness.
    pub weight: f64,
    pub orientation: PairOrientation,
    /// Half-width of solve windows.
    pub radius: usize,
    pub margin: usize,
    pub max_iters: usize,
    /// Safety of the perturbation budget.
    pub perturbation_safety: f64,
    pub max_period: usize,
    pub max_dim: usize,
    /// Stride of Birkhoff trajectory rows.
    pub stride: usize,
    /// Relative tolerance for statistical comparisons (induced scaling).
    pub rel_tol: f64,
    /// Minimum |exponent| required of perturbed spectra.
    pub min_margin: f64,
    /// Fraction of start points required in statistical assertions.
    pub fraction: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            steps: 10_000,
            reorth: 10,
            gap_tol: 0.02,
            zero_tol: 0.05,
            window: None,
            n_tail: 60,
            safety: 0.25,
            n_max: 200,
            horizon: 100_000,
            samples: 100,
            trials: 20,
            tol: 1e-8,
            target: 3.0,
            weight: 1.0,
            orientation: PairOrientation::WeightedInput,
            radius: 80,
            margin: 30,
            max_iters: 200,
            perturbation_safety: 0.5,
            max_period: 8,
            max_dim: 4,
            stride: 100,
            rel_tol: 0.02,
            min_margin: 0.2,
            fraction: 0.95,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub base: BaseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cocycle: Option<CocycleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionSpec>,
    #[serde(default)]
    pub numerics: Numerics,
    /// Budgets for the witness experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessBudgets>,
}

impl RunConfig {
    pub fn new(
        experiment: Experiment,
        seed: u64,
        base: BaseSpec,
        cocycle: Option<CocycleSpec>,
    ) -> Self {
        RunConfig {
            experiment,
            seed,
            output: None,
            base,
            cocycle,
            region: None,
            numerics: Numerics::default(),
            witness: None,
        }
    }

    /// Parse and validate. Errors carry the TOML line/field diagnostic.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text).map_err(|e| match e {
            LabError::Config(m) => LabError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.numerics;
        for (name, v) in [
            ("gap_tol", n.gap_tol),
            ("zero_tol", n.zero_tol),
            ("tol", n.tol),
            ("target", n.target),
            ("weight", n.weight),
            ("rel_tol", n.rel_tol),
            ("min_margin", n.min_margin),
            ("fraction", n.fraction),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LabError::Config(format!(
                    "numerics.{name} must be positive, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&n.safety) {
            return Err(LabError::Config(
                "numerics.safety must lie in [0, 1)".into(),
            ));
        }
        if !(n.perturbation_safety > 0.0 && n.perturbation_safety < 1.0) {
            return Err(LabError::Config(
                "numerics.perturbation_safety must lie in (0, 1)".into(),
            ));
        }
        for (name, v) in [
            ("steps", n.steps),
            ("reorth", n.reorth),
            ("horizon", n.horizon),
            ("samples", n.samples),
            ("trials", n.trials),
            ("max_iters", n.max_iters),
            ("max_period", n.max_period),
            ("max_dim", n.max_dim),
            ("stride", n.stride),
        ] {
            if v == 0 {
                return Err(LabError::Config(format!(
                    "numerics.{name} must be positive"
                )));
            }
        }
        if self.experiment != Experiment::Report
            && self.experiment != Experiment::OracleCompare
            && self.cocycle.is_none()
        {
            return Err(LabError::Config(format!(
                "experiment {} needs a [cocycle] section",
                self.experiment.name()
            )));
        }
        self.base
            .build()
            .map_err(|e| LabError::Config(format!("base: {e}")))?;
        if let Some(c) = &self.cocycle {
            c.build().map_err(|e| match e {
                LabError::Config(m) => LabError::Config(m),
                other => LabError::Config(format!("cocycle: {other}")),
            })?;
        }
        Ok(())
    }

    pub fn weight(&self) -> Result<WeightModel> {
        WeightModel::constant(self.numerics.weight)
    }

    /// Independent generator for a named sub-stream of the run seed.
    pub fn stream(&self, name: &str) -> ChaCha8Rng {
        let seed = match (name, self.base.seed()) {
            ("base", Some(s)) => s,
            _ => self.seed,
        };
        seed_stream(seed, name)
    }
}

/// FNV-1a of the stream name, mixed with the seed.
pub fn seed_stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(mix64(seed ^ h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    const SAMPLE: &str = r#"
experiment = "spectrum"
seed = 7

[base]
kind = "rotation"

[cocycle]
builtin = "diagonal"
params = [2.0, 0.5]

[numerics]
steps = 10000
"#;

    #[test]
    fn parses_sample() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.experiment, Experiment::Spectrum);
        assert_eq!(cfg.numerics.gap_tol, 0.02);
        assert!(cfg.cocycle.unwrap().build().is_ok());
    }

    #[test]
    fn unknown_key_is_rejected_with_location() {
        let bad = SAMPLE.replace("steps = 10000", "stepz = 10000");
        match RunConfig::parse(&bad) {
            Err(LabError::Config(m)) => assert!(m.contains("stepz") && m.contains("line"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values_are_rejected() {
        let bad = SAMPLE.replace("steps = 10000", "tol = -1.0");
        assert_eq!(RunConfig::parse(&bad).unwrap_err().name(), "Config");
        let bad = SAMPLE.replace("builtin = \"diagonal\"", "builtin = \"nope\"");
        assert_eq!(RunConfig::parse(&bad).unwrap_err().name(), "Config");
    }

    #[test]
    fn table_cocycle() {
        let text = r#"
experiment = "spectrum"
seed = 1
[base]
kind = "bernoulli"
probabilities = [0.5, 0.5]
[cocycle]
matrices = [[[2.0, 1.0], [1.0, 1.0]], [[1.0, 1.0], [1.0, 2.0]]]
"#;
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.cocycle.unwrap().build().unwrap().dim(), 2);
    }

    #[test]
    fn streams_differ_and_repeat() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        let a: u64 = cfg.stream("base").random();
        let b: u64 = cfg.stream("perturbations").random();
        assert_ne!(a, b);
        assert_eq!(a, cfg.stream("base").random::<u64>());
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            0..10usize,
            any::<u64>(),
            prop_oneof![
                (
                    proptest::option::of(0.1f64..0.9),
                    proptest::option::of(any::<u64>())
                )
                    .prop_map(|(gamma, seed)| BaseSpec::Rotation { gamma, seed }),
                (1usize..9).prop_map(|period| BaseSpec::Periodic { period, seed: None }),
                Just(BaseSpec::Bernoulli {
                    probabilities: vec![0.25, 0.75],
                    seed: Some(3)
                }),
            ],
            proptest::collection::vec(0.1f64..4.0, 1..4),
            1usize..100_000,
            1e-12f64..1.0,
            proptest::option::of(1usize..500),
        )
            .prop_map(|(e, seed, base, params, steps, tol, window)| {
                let mut cfg = RunConfig::new(
                    Experiment::ALL[e],
                    seed,
                    base,
                    Some(CocycleSpec::builtin("diagonal", &params)),
                );
                cfg.numerics.steps = steps;
                cfg.numerics.tol = tol;
                cfg.numerics.window = window;
                cfg.region = Some(RegionSpec::Arc { lo: 0.0, hi: tol });
                cfg
            })
    }

    proptest! {
        #[test]
        fn config_round_trip(cfg in arb_config()) {
            let text = cfg.to_toml();
            let back: RunConfig = toml::from_str(&text).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
