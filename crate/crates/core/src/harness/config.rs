//! Experiment configuration: a TOML file with one flat section per module.

use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::potentials::{PotentialSpec, ScalarProfile, TimeProfile, VectorProfile};
use crate::recovery::ScheduleOverrides;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub t_final: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { nx: 31, ny: 31, nt: 64, t_final: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialsConfig {
    /// Extension pad beyond the unit square.
    pub pad: f64,
    pub base: PotentialSpec,
    /// Unit-amplitude perturbation; `P2(a) = base + a * perturbation`.
    pub perturbation: PotentialSpec,
    /// When positive, the perturbation is replaced by this many seeded
    /// random interior bumps (curl bumps for `A`, plain bumps for `q`).
    pub random_bumps: usize,
    /// Base potential read from a field file instead of `base`.
    pub base_file: Option<String>,
    /// Bound `M` used by the admissibility report.
    pub m_bound: f64,
}

/// Interior curl bump for `A` and a bump for `q`, both of unit size.
pub fn default_perturbation() -> PotentialSpec {
    PotentialSpec {
        a: VectorProfile::Curl {
            stream: ScalarProfile::Poly { center: [0.5, 0.48], radius: 0.3, order: 8, amp: 1.0, time: TimeProfile::Constant },
        },
        q: ScalarProfile::Poly { center: [0.52, 0.5], radius: 0.3, order: 6, amp: 1.0, time: TimeProfile::Constant },
    }
}

impl Default for PotentialsConfig {
    fn default() -> Self {
        Self { pad: 0.1, base: PotentialSpec::zero(), perturbation: default_perturbation(), random_bumps: 0, base_file: None, m_bound: 1e6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DnConfig {
    pub l_time: usize,
    pub m_space: usize,
    /// Doublings allowed by the basis-convergence diagnostic.
    pub max_doublings: usize,
}

impl Default for DnConfig {
    fn default() -> Self {
        Self { l_time: 2, m_space: 2, max_doublings: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForwardConfig {
    /// Index of the boundary basis element used as Dirichlet data.
    pub element: usize,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self { element: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketSide {
    Magnetic,
    Electric,
    Two,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GoConfig {
    pub sigma: Vec<f64>,
    pub delta: f64,
    pub omega: [f64; 2],
    pub tau: f64,
    pub xi: [f64; 2],
    pub sides: Vec<PacketSide>,
}

impl Default for GoConfig {
    fn default() -> Self {
        Self { sigma: vec![2.0, 4.0], delta: 0.2, omega: [1.0, 0.0], tau: 1.0, xi: [0.0, 6.0], sides: vec![PacketSide::Magnetic, PacketSide::Two] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoveryConfig {
    /// Run the recovery at every sweep point.
    pub in_sweep: bool,
    /// Perturbation amplitude used by the `recover` command.
    pub amplitude: f64,
    pub radius: Option<f64>,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self { in_sweep: false, amplitude: 0.1, radius: None, delta: Some(0.2), sigma: None }
    }
}

impl RecoveryConfig {
    pub fn overrides(&self) -> ScheduleOverrides {
        ScheduleOverrides { radius: self.radius, delta: self.delta, sigma: self.sigma }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    /// Explicit ladder; when absent the geometric ladder below is used.
    pub amplitudes: Option<Vec<f64>>,
    pub a_min: f64,
    pub ratio: f64,
    pub levels: usize,
    pub include_zero: bool,
    pub seed: u64,
    pub out: Option<String>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self { amplitudes: None, a_min: 1.0 / 64.0, ratio: 2.0, levels: 6, include_zero: true, seed: 0, out: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub potentials: PotentialsConfig,
    pub dnmap: DnConfig,
    pub forward: ForwardConfig,
    pub go: GoConfig,
    pub recovery: RecoveryConfig,
    pub harness: HarnessConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config serialization: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        let h = &self.harness;
        if h.amplitudes.is_none() && (!(h.a_min > 0.0) || !(h.ratio > 1.0) || h.levels == 0) {
            return Err(Error::invalid("amplitude ladder needs a_min > 0, ratio > 1 and levels >= 1"));
        }
        if let Some(a) = &h.amplitudes {
            if a.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid("amplitudes must be finite and nonnegative"));
            }
        }
        if !(self.potentials.pad > 0.0) {
            return Err(Error::invalid("pad must be positive"));
        }
        if self.dnmap.l_time == 0 || self.dnmap.m_space == 0 {
            return Err(Error::invalid("basis sizes must be at least 1"));
        }
        if self.go.sigma.is_empty() || self.go.sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("go.sigma must be a nonempty list of positive values"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<SpaceTimeGrid> {
        let g = &self.geometry;
        SpaceTimeGrid::new(g.nx, g.ny, g.nt, g.t_final)
    }

    /// Sorted, deduplicated amplitude ladder.
    pub fn ladder(&self) -> Vec<f64> {
        let h = &self.harness;
        let mut a = match &h.amplitudes {
            Some(v) => v.clone(),
            None => (0..h.levels).map(|i| h.a_min * h.ratio.powi(i as i32)).collect(),
        };
        if h.include_zero {
            a.push(0.0);
        }
        a.sort_by(f64::total_cmp);
        a.dedup();
        a
    }

    /// The perturbation actually used, resolving `random_bumps` with the seed.
    pub fn perturbation(&self) -> PotentialSpec {
        let p = &self.potentials;
        if p.random_bumps == 0 {
            return p.perturbation.clone();
        }
        let seed = self.harness.seed;
        PotentialSpec {
            a: VectorProfile::Curl { stream: ScalarProfile::random_bumps(seed, p.random_bumps, 0.1, 0.1, false) },
            q: ScalarProfile::random_bumps(seed.wrapping_add(1), p.random_bumps, 1.0, 0.1, false),
        }
    }

    /// SHA-256 of the canonical TOML form, ignoring the output directory.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.harness.out = None;
        let text = c.to_toml()?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn round_trip_and_hash() {
        let text = r#"
[geometry]
nx = 15
ny = 15
nt = 16

[potentials.perturbation.a]
kind = "curl"
[potentials.perturbation.a.stream]
kind = "bump"
center = [0.5, 0.5]
radius = 0.25
amp = 0.3

[harness]
amplitudes = [0.5, 0.25]
seed = 7
out = "somewhere"
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.geometry.nx, 15);
        assert_eq!(c.ladder(), vec![0.0, 0.25, 0.5]);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        let mut d = c.clone();
        d.harness.out = Some("elsewhere".into());
        assert_eq!(c.hash().unwrap(), d.hash().unwrap());
        d.harness.seed = 8;
        assert_ne!(c.hash().unwrap(), d.hash().unwrap());
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(ExperimentConfig::from_toml("[geometry]\nnx = 3").is_err());
        assert!(ExperimentConfig::from_toml("[nonsense]\nx = 1").is_err());
        assert!(ExperimentConfig::from_toml("[harness]\nratio = 0.5\n").is_err());
        assert!(ExperimentConfig::from_toml("[geometry\n").is_err());
    }

    #[test]
    fn geometric_ladder() {
        let c = ExperimentConfig::default();
        let l = c.ladder();
        assert_eq!(l.len(), 7);
        assert_eq!(l[0], 0.0);
        assert_eq!(l[1], 1.0 / 64.0);
        assert_eq!(l[6], 0.5);
    }
}
