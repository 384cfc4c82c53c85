use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use renewal_core::{models, Ball, ControlSpec, ControlTarget, PicardConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub certificates: CertificateSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub preset: String,
    /// Defaults to the preset horizon.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BallKind {
    Relative,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub slab: f64,
    pub eps_fix: f64,
    pub max_iter: usize,
    pub theta_max: f64,
    pub ball: BallKind,
    pub ball_value: f64,
    pub dt_target: f64,
    pub min_slab_fraction: f64,
    /// 0 picks the substep count from the CFL-like default.
    pub substeps: usize,
    pub trace_cache_mb: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = PicardConfig::default();
        let (ball, ball_value) = match d.ball {
            Ball::Relative(f) => (BallKind::Relative, f),
            Ball::Fixed(m) => (BallKind::Fixed, m),
        };
        SolverSection {
            slab: d.slab,
            eps_fix: d.eps_fix,
            max_iter: d.max_iter,
            theta_max: d.theta_max,
            ball,
            ball_value,
            dt_target: d.dt_target,
            min_slab_fraction: d.min_slab_fraction,
            substeps: d.substeps.unwrap_or(0),
            trace_cache_mb: d.trace_cache_bytes >> 20,
        }
    }
}

impl SolverSection {
    pub fn picard(&self) -> PicardConfig {
        PicardConfig {
            slab: self.slab,
            eps_fix: self.eps_fix,
            max_iter: self.max_iter,
            theta_max: self.theta_max,
            ball: match self.ball {
                BallKind::Relative => Ball::Relative(self.ball_value),
                BallKind::Fixed => Ball::Fixed(self.ball_value),
            },
            dt_target: self.dt_target,
            min_slab_fraction: self.min_slab_fraction,
            substeps: if self.substeps == 0 { None } else { Some(self.substeps) },
            trace_cache_bytes: self.trace_cache_mb << 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateKind {
    Hypotheses,
    Apriori,
    Gronwall,
    Contraction,
    Entropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertificateSection {
    /// Empty selects the preset's default list.
    pub run: Vec<CertificateKind>,
    pub tolerance: f64,
    pub entropy_samples: usize,
    pub hypothesis_samples: usize,
}

impl Default for CertificateSection {
    fn default() -> Self {
        CertificateSection { run: Vec::new(), tolerance: renewal_core::analysis::DEFAULT_TOL, entropy_samples: 50, hypothesis_samples: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetName {
    SihrKappa,
    CompetitiveEffort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveName {
    Deaths,
    Peak,
    Profit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub target: TargetName,
    pub objective: ObjectiveName,
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    #[serde(default)]
    pub age_edges: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub budget: usize,
    /// Harvest values `K1`, `K2` for the profit objective.
    #[serde(default = "unit_values")]
    pub values: [f64; 2],
}

fn unit_values() -> [f64; 2] {
    [1.0, 1.0]
}

impl ControlSection {
    pub fn spec(&self) -> ControlSpec {
        ControlSpec {
            target: match self.target {
                TargetName::SihrKappa => ControlTarget::SihrKappa,
                TargetName::CompetitiveEffort => ControlTarget::CompetitiveEffort,
            },
            breakpoints: self.breakpoints.clone(),
            age_edges: self.age_edges.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            budget: self.budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub seed: u64,
    /// Write every n-th stored state (the last one is always written).
    pub state_stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("renewal-out"), seed: 7, state_stride: 1 }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    /// Fills preset defaults so the effective configuration is explicit.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let info = models::preset_info(&self.model.preset).map_err(|e| CliError::Invalid(e.to_string()))?;
        self.model.params = models::preset_params(&self.model.preset, &self.model.params).map_err(|e| CliError::Invalid(e.to_string()))?;
        let horizon = self.model.horizon.unwrap_or(info.horizon);
        self.model.horizon = Some(horizon);
        if self.certificates.run.is_empty() {
            self.certificates.run = default_certificates(&self.model.preset);
        }
        self.certificates.run.sort();
        self.certificates.run.dedup();
        self.validate()?;
        Ok(self)
    }

    pub fn horizon(&self) -> f64 {
        self.model.horizon.unwrap_or(0.0)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Invalid(m));
        let h = self.horizon();
        if !(h > 0.0 && h.is_finite()) {
            return bad(format!("model.horizon must be positive, got {h}"));
        }
        if let Some(&c) = self.model.params.get("cells") {
            if c < 4.0 {
                return bad(format!("model.params.cells must be at least 4, got {c}"));
            }
        }
        self.solver.picard().validate().map_err(|e| CliError::Invalid(format!("solver: {e}")))?;
        if !(self.certificates.tolerance >= 0.0) {
            return bad("certificates.tolerance must be nonnegative".into());
        }
        if self.output.state_stride == 0 {
            return bad("output.state_stride must be at least 1".into());
        }
        if let Some(c) = &self.control {
            c.spec().validate().map_err(|e| CliError::Invalid(format!("control: {e}")))?;
            let ok = match c.target {
                TargetName::SihrKappa => self.model.preset.starts_with("sihr") && c.objective != ObjectiveName::Profit,
                TargetName::CompetitiveEffort => self.model.preset == "competitive" && c.objective == ObjectiveName::Profit,
            };
            if !ok {
                return bad(format!("control target {:?} with objective {:?} does not fit preset `{}`", c.target, c.objective, self.model.preset));
            }
        }
        Ok(())
    }
}

pub fn default_certificates(preset: &str) -> Vec<CertificateKind> {
    use CertificateKind::*;
    if preset.starts_with("blowup") {
        // the global growth bound fails by design
        vec![Apriori, Contraction]
    } else {
        vec![Hypotheses, Apriori, Gronwall, Contraction, Entropy]
    }
}
