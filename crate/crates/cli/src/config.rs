use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tpt_core::{
    BoxDomain, DiffusionModel, DoubleWell1d, FreeDiffusion, Potential, Regions, TripleWell,
};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialName {
    TripleWell,
    Free,
    DoubleWell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionsConfig {
    /// `A = {V ≤ level, x₁ ≤ 0}`, `B = {V ≤ level, x₁ ≥ 0}`.
    SublevelSplit { level: f64 },
    /// `A = {x₁ < a_max}`, `B = {x₁ > b_min}`.
    Slab { a_max: f64, b_min: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskProbeName {
    Center,
    MaxVertex,
    MinVertex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialName,
    /// Barrier height of the one-dimensional double well.
    pub barrier: f64,
    pub beta: f64,
    pub gamma: Vec<f64>,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub regions: RegionsConfig,
    pub h_list: Vec<f64>,
    pub dt: f64,
    pub n_per_cell: u64,
    pub max_steps_per_trajectory: u64,
    pub n_reactive_target: u64,
    /// Step ceiling for the long trajectory.
    pub max_sampling_steps: u64,
    pub burn_in: u64,
    pub start: Vec<f64>,
    pub seed: u64,
    pub t_max: f64,
    pub n_starts: usize,
    pub v_cut: f64,
    pub r_cap: f64,
    pub mask_probe: MaskProbeName,
    pub hist_bins: usize,
    /// Spacing of the FD solution on the analytic regions that stands in
    /// for the exact committor and current in `errors.csv`.
    pub reference_h: f64,
    /// Extra long-trajectory run at a smaller time step, used by `reproduce`.
    pub fine_dt: Option<f64>,
    pub fine_h_list: Vec<f64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            potential: PotentialName::TripleWell,
            barrier: 1.0,
            beta: 1.67,
            gamma: vec![1.0, 1.0],
            box_lo: vec![-2.0, -1.5],
            box_hi: vec![2.0, 2.5],
            regions: RegionsConfig::SublevelSplit { level: -3.0 },
            h_list: vec![0.5, 0.4, 0.25, 0.1, 0.05],
            dt: 0.001,
            n_per_cell: 10_000,
            max_steps_per_trajectory: 1_000_000,
            n_reactive_target: 100_000,
            max_sampling_steps: 1_000_000_000_000,
            burn_in: 0,
            start: vec![0.0, 0.0],
            seed: 1,
            t_max: 1e4,
            n_starts: 20,
            v_cut: 1.0,
            r_cap: 2.0,
            mask_probe: MaskProbeName::Center,
            hist_bins: 20,
            reference_h: 0.025,
            fine_dt: Some(0.00025),
            fine_h_list: vec![0.25, 0.1, 0.05],
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub h: Option<f64>,
    pub dt: Option<f64>,
    pub out: Option<PathBuf>,
}

fn bad(field: &str, reason: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("`{field}` {reason}"))
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, Failure> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| Failure::Config(e.to_string()))?
            }
            None => Self::default(),
        };
        if let Some(s) = overrides.seed {
            config.seed = s;
        }
        if let Some(h) = overrides.h {
            config.h_list = vec![h];
        }
        if let Some(dt) = overrides.dt {
            config.dt = dt;
        }
        if let Some(out) = &overrides.out {
            config.output_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(bad(name, format!("must be positive, got {v}")))
            }
        };
        positive("beta", self.beta)?;
        positive("dt", self.dt)?;
        positive("t_max", self.t_max)?;
        positive("r_cap", self.r_cap)?;
        positive("barrier", self.barrier)?;
        positive("reference_h", self.reference_h)?;
        if !self.v_cut.is_finite() {
            return Err(bad("v_cut", "must be finite"));
        }
        if let Some(f) = self.fine_dt {
            positive("fine_dt", f)?;
        }
        if self.h_list.is_empty() {
            return Err(bad("h_list", "must not be empty"));
        }
        for &h in self.h_list.iter().chain(&self.fine_h_list) {
            positive("h_list", h)?;
        }
        for (name, v) in [
            ("n_per_cell", self.n_per_cell),
            ("n_reactive_target", self.n_reactive_target),
            ("max_steps_per_trajectory", self.max_steps_per_trajectory),
            ("max_sampling_steps", self.max_sampling_steps),
        ] {
            if v == 0 {
                return Err(bad(name, "must be at least 1"));
            }
        }
        if self.n_starts == 0 {
            return Err(bad("n_starts", "must be at least 1"));
        }
        if self.hist_bins == 0 {
            return Err(bad("hist_bins", "must be at least 1"));
        }
        let d = self.box_lo.len();
        if d == 0 || self.box_hi.len() != d {
            return Err(bad("box_hi", "must match box_lo in length"));
        }
        if self.gamma.len() != d {
            return Err(bad("gamma", format!("needs {d} entries")));
        }
        for &g in &self.gamma {
            positive("gamma", g)?;
        }
        if self.start.len() != d {
            return Err(bad("start", format!("needs {d} coordinates")));
        }
        match self.potential {
            PotentialName::TripleWell if d != 2 => {
                return Err(bad("potential", "triple_well needs a 2D box"))
            }
            PotentialName::DoubleWell if d != 1 => {
                return Err(bad("potential", "double_well needs a 1D box"))
            }
            _ => {}
        }
        if let RegionsConfig::Slab { a_max, b_min } = self.regions {
            if !(a_max < b_min) {
                return Err(bad("regions", "slab needs a_max < b_min"));
            }
        }
        Ok(())
    }

    pub fn potential(&self) -> Arc<dyn Potential> {
        match self.potential {
            PotentialName::TripleWell => Arc::new(TripleWell),
            PotentialName::Free => Arc::new(FreeDiffusion {
                dim: self.box_lo.len(),
            }),
            PotentialName::DoubleWell => Arc::new(DoubleWell1d {
                barrier: self.barrier,
            }),
        }
    }

    pub fn model(&self) -> Result<DiffusionModel, Failure> {
        let domain = BoxDomain::new(self.box_lo.clone(), self.box_hi.clone())?;
        Ok(DiffusionModel::new(
            self.potential(),
            self.beta,
            self.gamma.clone(),
            domain,
        )?)
    }

    pub fn regions(&self) -> Regions {
        match self.regions {
            RegionsConfig::SublevelSplit { level } => {
                Regions::sublevel_split(self.potential(), level)
            }
            RegionsConfig::Slab { a_max, b_min } => Regions::slab(a_max, b_min),
        }
    }

    pub fn mask_probe(&self) -> tpt_core::MaskProbe {
        match self.mask_probe {
            MaskProbeName::Center => tpt_core::MaskProbe::Center,
            MaskProbeName::MaxVertex => tpt_core::MaskProbe::MaxVertex,
            MaskProbeName::MinVertex => tpt_core::MaskProbe::MinVertex,
        }
    }
}
