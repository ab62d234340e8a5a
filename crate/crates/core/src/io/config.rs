use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, PriorMeanChoice};
use crate::error::{MagicError, Result};
use crate::eval::{EvalConfig, EvalProtocol, Method, ProtocolKind};
use crate::math::{KernelParams, TimeGrid};
use crate::model::{MStepOptions, MagicConfig};
use crate::sim::SimConfig;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "MAGIC_SEED";

/// Every knob of the command-line tool, as one flat TOML table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub grid_start: f64,
    pub grid_end: f64,
    pub grid_points: usize,

    pub num_basis: usize,
    pub interior_knots: Option<Vec<f64>>,
    pub lambda: f64,
    pub roughness_weight: f64,
    pub tolerance: f64,
    pub max_iters: usize,
    pub kernel_lower: f64,
    pub kernel_upper: f64,
    pub noise_lower: f64,
    pub noise_upper: f64,
    pub max_optimizer_iters: usize,

    pub sgp_per_sample: bool,
    pub sgp_prior_mean: PriorMeanChoice,
    pub mtgp_roughness_weight: f64,

    pub method: Method,
    pub protocol: ProtocolKind,
    pub train_fraction: f64,
    pub repetitions: usize,
    pub alphas: Vec<f64>,

    pub mean_period: f64,
    pub class_amplitude: f64,
    pub class_length_scale: f64,
    pub amplitude: f64,
    pub length_scale: f64,
    pub noise_sd: f64,
    pub per_class: usize,

    pub series: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let magic = MagicConfig::default();
        let base = BaselineConfig::default();
        let sim = SimConfig::default();
        let protocol = EvalProtocol::default();
        Self {
            seed: 0,
            grid_start: sim.grid_start,
            grid_end: sim.grid_end,
            grid_points: sim.grid_points,
            num_basis: magic.num_basis,
            interior_knots: None,
            lambda: magic.lambda,
            roughness_weight: magic.roughness_weight,
            tolerance: magic.tolerance,
            max_iters: magic.max_iters,
            kernel_lower: magic.mstep.kernel_bounds.0,
            kernel_upper: magic.mstep.kernel_bounds.1,
            noise_lower: magic.mstep.noise_bounds.0,
            noise_upper: magic.mstep.noise_bounds.1,
            max_optimizer_iters: magic.mstep.max_optimizer_iters,
            sgp_per_sample: base.sgp_per_sample,
            sgp_prior_mean: base.sgp_prior_mean,
            mtgp_roughness_weight: base.mtgp_roughness_weight,
            method: Method::Magic,
            protocol: protocol.kind,
            train_fraction: protocol.train_fraction,
            repetitions: protocol.repetitions,
            alphas: protocol.alphas,
            mean_period: sim.mean_period,
            class_amplitude: sim.class_kernel.amplitude(),
            class_length_scale: sim.class_kernel.length_scale(),
            amplitude: sim.kernel.amplitude(),
            length_scale: sim.kernel.length_scale(),
            noise_sd: sim.noise_sd,
            per_class: sim.per_class,
            series: None,
            labels: None,
            output: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| MagicError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MagicError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            MagicError::Config(m) => MagicError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// Seed precedence: explicit flag, then the environment, then the file.
    pub fn resolve_seed(&mut self, flag: Option<u64>, env: Option<&str>) -> Result<()> {
        if let Some(s) = flag {
            self.seed = s;
        } else if let Some(v) = env {
            self.seed = v.trim().parse().map_err(|_| {
                MagicError::Config(format!("{SEED_ENV}='{v}' is not an unsigned integer"))
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MagicError::Config(m));
        if self.grid_points < 2 || !(self.grid_end > self.grid_start) {
            return bad(format!(
                "grid needs at least 2 points over a non-empty span, got {} over [{}, {}]",
                self.grid_points, self.grid_start, self.grid_end
            ));
        }
        for (name, v) in [
            ("mean_period", self.mean_period),
            ("class_amplitude", self.class_amplitude),
            ("class_length_scale", self.class_length_scale),
            ("amplitude", self.amplitude),
            ("length_scale", self.length_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be non-negative, got {}", self.noise_sd));
        }
        if !(self.mtgp_roughness_weight >= 0.0 && self.mtgp_roughness_weight.is_finite()) {
            return bad(format!(
                "mtgp_roughness_weight must be non-negative, got {}",
                self.mtgp_roughness_weight
            ));
        }
        if self.per_class == 0 {
            return bad("per_class must be at least 1".into());
        }
        let cfg = |e: MagicError| match e {
            MagicError::InvalidParameter(m) => MagicError::Config(m),
            other => other,
        };
        self.magic().validate().map_err(cfg)?;
        self.eval_protocol().validate().map_err(cfg)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.grid_start, self.grid_end, self.grid_points)
    }

    pub fn magic(&self) -> MagicConfig {
        MagicConfig {
            num_basis: self.num_basis,
            interior_knots: self.interior_knots.clone(),
            lambda: self.lambda,
            roughness_weight: self.roughness_weight,
            tolerance: self.tolerance,
            max_iters: self.max_iters,
            mstep: MStepOptions {
                kernel_bounds: (self.kernel_lower, self.kernel_upper),
                noise_bounds: (self.noise_lower, self.noise_upper),
                max_optimizer_iters: self.max_optimizer_iters,
            },
            record_trace: false,
        }
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            magic: self.magic(),
            baseline: BaselineConfig {
                sgp_per_sample: self.sgp_per_sample,
                sgp_prior_mean: self.sgp_prior_mean,
                mtgp_roughness_weight: self.mtgp_roughness_weight,
            },
        }
    }

    pub fn eval_protocol(&self) -> EvalProtocol {
        EvalProtocol {
            kind: self.protocol,
            train_fraction: self.train_fraction,
            repetitions: self.repetitions,
            alphas: self.alphas.clone(),
            seed: self.seed,
        }
    }

    pub fn sim(&self) -> Result<SimConfig> {
        let cfg = SimConfig {
            grid_start: self.grid_start,
            grid_end: self.grid_end,
            grid_points: self.grid_points,
            mean_period: self.mean_period,
            class_kernel: KernelParams::new(self.class_amplitude, self.class_length_scale)?,
            kernel: KernelParams::new(self.amplitude, self.length_scale)?,
            noise_sd: self.noise_sd,
            per_class: self.per_class,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.alphas = vec![0.5, 0.8];
        c.method = Method::Mtgp;
        c.sgp_prior_mean = PriorMeanChoice::Pooled;
        c.series = Some("data/series.csv".into());
        c.interior_knots = Some(vec![10.0, 20.0, 30.0, 40.0]);
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn keys_are_checked() {
        let e = RunConfig::from_toml("lamda = 2.0").unwrap_err();
        assert!(matches!(e, MagicError::Config(ref m) if m.contains("lamda")), "{e}");
        assert!(RunConfig::from_toml("lambda = -1.0").is_err());
        assert!(RunConfig::from_toml("train_fraction = 1.0").is_err());
        assert!(RunConfig::from_toml("alphas = [0.5, 1.0]").is_err());
        assert!(RunConfig::from_toml("num_basis = 6\ninterior_knots = [25.0]").is_err());
        assert!(RunConfig::from_toml("method = \"svm\"").is_err());
        let c = RunConfig::from_toml("method = \"sgp\"\nprotocol = \"nested-mask\"\nseed = 9").unwrap();
        assert_eq!((c.method, c.protocol, c.seed), (Method::Sgp, ProtocolKind::NestedMask, 9));
    }

    #[test]
    fn seed_precedence() {
        let mut c = RunConfig::from_toml("seed = 1").unwrap();
        c.resolve_seed(None, None).unwrap();
        assert_eq!(c.seed, 1);
        c.resolve_seed(None, Some("2")).unwrap();
        assert_eq!(c.seed, 2);
        c.resolve_seed(Some(3), Some("2")).unwrap();
        assert_eq!(c.seed, 3);
        assert!(c.resolve_seed(None, Some("x")).is_err());
    }

    #[test]
    fn derived_configs_validate() {
        let c = RunConfig::default();
        c.magic().validate().unwrap();
        c.sim().unwrap();
        assert_eq!(c.grid().unwrap().len(), 51);
        assert_eq!(c.eval().magic, MagicConfig::default());
    }
}
