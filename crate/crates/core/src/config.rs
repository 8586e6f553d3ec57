//! Scenario files. Every physical quantity carries its unit in the key name.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ArrayGeometry, LinkBudget, LinkModel, NamedSurface};
use crate::error::{Error, Result};
use crate::geometry::{PlanePose, Vec3};
use crate::ris::{RisConfig, RisScenario};
use crate::stat_model::{CovarianceMethod, StatsOptions};
use crate::surface::PlanarSurfaceSpec;
use crate::units::{db_to_linear, dbm_to_watts, wavelength};

/// A list of values or an inclusive `start..=stop` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Sweep {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            Sweep::List(v) => Ok(v.clone()),
            Sweep::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    return Err(Error::Config(format!("bad sweep {start}..{stop} step {step}")));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                Ok((0..=n).map(|i| start + i as f64 * step).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub name: String,
    /// Explicit element positions; otherwise a UPA from the fields below.
    pub elements_m: Option<Vec<[f64; 3]>>,
    pub center_m: Option<[f64; 3]>,
    pub axis_a: Option<[f64; 3]>,
    pub axis_b: Option<[f64; 3]>,
    pub shape: Option<[usize; 2]>,
    /// Defaults to half a wavelength.
    pub spacing_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub name: String,
    pub origin_m: [f64; 3],
    pub axis_u: [f64; 3],
    pub axis_v: [f64; 3],
    pub extent_m: [f64; 2],
    #[serde(default)]
    pub sigma_z_m: f64,
    pub zeta: f64,
    pub grid_step_m: Option<f64>,
    pub height_cell_m: Option<f64>,
    #[serde(default)]
    pub correlation_length_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub name: String,
    pub tx: String,
    pub rx: String,
    pub beta_ref_db: f64,
    pub path_loss_exponent: f64,
    pub ricean_k_db: f64,
    #[serde(default)]
    pub blockage_db: f64,
    /// Ricean-calibrated scatterers.
    #[serde(default)]
    pub scatterers_m: Vec<[f64; 3]>,
    /// Surface names; all surfaces when absent.
    pub surfaces: Option<Vec<String>>,
    #[serde(default)]
    pub covariance: CovarianceMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub bandwidth_hz: f64,
    pub n0_dbm_per_hz: f64,
    pub noise_figure_db: f64,
}

impl NoiseConfig {
    /// `σ² = W N_0 N_f`, watts.
    pub fn power_w(&self) -> f64 {
        self.bandwidth_hz * dbm_to_watts(self.n0_dbm_per_hz) * db_to_linear(self.noise_figure_db)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RisSection {
    /// Array name under which the RIS elements can be referenced by links.
    pub name: String,
    pub center_m: [f64; 3],
    pub axis_a: [f64; 3],
    pub axis_b: [f64; 3],
    pub shape: [usize; 2],
    pub spacing_m: Option<f64>,
    /// Defaults to `(λ/2)²`.
    pub unit_cell_area_m2: Option<f64>,
    pub n_tiles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyMeanConfig {
    pub surface: String,
    pub tx: String,
    pub rx: String,
    #[serde(default = "default_mean_sweep")]
    pub kappa_sigma: Sweep,
    #[serde(default = "default_100")]
    pub realizations: usize,
    #[serde(default = "default_mean_rel_tol")]
    pub mean_rel_tol: f64,
    #[serde(default = "default_mean_abs_tol")]
    pub mean_abs_tol: f64,
    /// Below this theory value the absolute tolerance applies.
    #[serde(default = "default_abs_floor")]
    pub mean_abs_floor: f64,
    #[serde(default = "default_power_rel_tol")]
    pub power_rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyDistributionConfig {
    pub surface: String,
    pub tx: String,
    pub rx: String,
    #[serde(default = "default_distribution_sweep")]
    pub kappa_sigma: Sweep,
    #[serde(default = "default_500")]
    pub realizations: usize,
    #[serde(default = "default_significance")]
    pub significance: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationCase {
    pub name: String,
    /// `aligned` or `perpendicular`; a label only, the curves follow the
    /// geometry.
    pub placement: String,
    pub surface: String,
    pub tx: String,
    pub rx_center_m: [f64; 3],
    pub axis: [f64; 3],
    pub separation_wl: Sweep,
    pub realizations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyCorrelationConfig {
    #[serde(default = "default_corr_ks")]
    pub kappa_sigma: f64,
    #[serde(default = "default_numeric_tol")]
    pub numeric_tol: f64,
    #[serde(default = "default_empirical_tol")]
    pub empirical_tol: f64,
    pub cases: Vec<CorrelationCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SumRateConfig {
    pub bs: String,
    pub users: Vec<String>,
    pub bs_ris_link: String,
    pub ris_user_links: Vec<String>,
    pub bs_user_links: Vec<String>,
    pub bs_wall: Option<String>,
    pub user_wall: Option<String>,
    #[serde(default = "default_50")]
    pub draws: usize,
    #[serde(default = "default_ordering_tol")]
    pub ordering_tolerance: f64,
    #[serde(default = "default_saturation_bits")]
    pub saturation_gain_bits: f64,
    pub transmit_power_dbm: Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub carrier_frequency_hz: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub arrays: Vec<ArrayConfig>,
    #[serde(default)]
    pub surfaces: Vec<SurfaceConfig>,
    #[serde(default)]
    pub links: Vec<LinkConfig>,
    pub noise: Option<NoiseConfig>,
    pub ris: Option<RisSection>,
    pub verify_mean: Option<VerifyMeanConfig>,
    pub verify_distribution: Option<VerifyDistributionConfig>,
    pub verify_correlation: Option<VerifyCorrelationConfig>,
    pub sum_rate: Option<SumRateConfig>,
}

fn default_mean_sweep() -> Sweep {
    Sweep::Range {
        start: 0.0,
        stop: 5.0,
        step: 0.25,
    }
}
fn default_distribution_sweep() -> Sweep {
    Sweep::List(vec![0.0, 0.5, 3.0])
}
fn default_100() -> usize {
    100
}
fn default_500() -> usize {
    500
}
fn default_50() -> usize {
    50
}
fn default_mean_rel_tol() -> f64 {
    0.05
}
fn default_mean_abs_tol() -> f64 {
    0.02
}
fn default_abs_floor() -> f64 {
    0.05
}
fn default_power_rel_tol() -> f64 {
    0.2
}
fn default_significance() -> f64 {
    0.01
}
fn default_bins() -> usize {
    40
}
fn default_corr_ks() -> f64 {
    3.0
}
fn default_numeric_tol() -> f64 {
    1e-3
}
fn default_empirical_tol() -> f64 {
    0.1
}
fn default_ordering_tol() -> f64 {
    0.1
}
fn default_saturation_bits() -> f64 {
    0.1
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn digest(&self) -> Result<String> {
        let bytes = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(bytes.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn wavelength(&self) -> f64 {
        wavelength(self.carrier_frequency_hz)
    }

    pub fn kappa(&self) -> f64 {
        2.0 * PI / self.wavelength()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_frequency_hz > 0.0 && self.carrier_frequency_hz.is_finite()) {
            return Err(Error::Config(format!("carrier frequency {}", self.carrier_frequency_hz)));
        }
        let mut names = std::collections::BTreeSet::new();
        for a in self.arrays.iter().map(|a| &a.name).chain(self.ris.iter().map(|r| &r.name)) {
            if !names.insert(a.clone()) {
                return Err(Error::Config(format!("duplicate array `{a}`")));
            }
        }
        let arrays = self.arrays()?;
        let surfaces = self.surface_specs()?;
        let array = |n: &String| -> Result<()> {
            arrays.contains_key(n).then_some(()).ok_or_else(|| Error::Config(format!("unknown array `{n}`")))
        };
        let surface = |n: &String| -> Result<()> {
            surfaces.contains_key(n).then_some(()).ok_or_else(|| Error::Config(format!("unknown surface `{n}`")))
        };
        for l in &self.links {
            array(&l.tx)?;
            array(&l.rx)?;
            for s in l.surfaces.iter().flatten() {
                surface(s)?;
            }
        }
        if let Some(v) = &self.verify_mean {
            surface(&v.surface)?;
            array(&v.tx)?;
            array(&v.rx)?;
        }
        if let Some(v) = &self.verify_distribution {
            surface(&v.surface)?;
            array(&v.tx)?;
            array(&v.rx)?;
        }
        if let Some(v) = &self.verify_correlation {
            for c in &v.cases {
                surface(&c.surface)?;
                array(&c.tx)?;
            }
        }
        if let Some(s) = &self.sum_rate {
            array(&s.bs)?;
            for u in &s.users {
                array(u)?;
            }
            for l in std::iter::once(&s.bs_ris_link).chain(&s.ris_user_links).chain(&s.bs_user_links) {
                if !self.links.iter().any(|x| &x.name == l) {
                    return Err(Error::Config(format!("unknown link `{l}`")));
                }
            }
            for w in s.bs_wall.iter().chain(&s.user_wall) {
                surface(w)?;
            }
            if self.ris.is_none() || self.noise.is_none() {
                return Err(Error::Config("sum_rate needs [ris] and [noise]".into()));
            }
        }
        Ok(())
    }

    pub fn ris_config(&self) -> Result<Option<RisConfig>> {
        let lambda = self.wavelength();
        self.ris
            .as_ref()
            .map(|r| {
                RisConfig::new(
                    v3(r.center_m),
                    v3(r.axis_a),
                    v3(r.axis_b),
                    (r.shape[0], r.shape[1]),
                    r.spacing_m.unwrap_or(lambda / 2.0),
                    r.unit_cell_area_m2.unwrap_or((lambda / 2.0).powi(2)),
                    r.n_tiles,
                )
            })
            .transpose()
    }

    /// Every named array, including the RIS.
    pub fn arrays(&self) -> Result<BTreeMap<String, ArrayGeometry>> {
        let lambda = self.wavelength();
        let mut out = BTreeMap::new();
        for a in &self.arrays {
            let geom = if let Some(e) = &a.elements_m {
                ArrayGeometry::new(e.iter().map(|&p| v3(p)).collect())
            } else {
                match (a.center_m, a.axis_a, a.axis_b, a.shape) {
                    (Some(c), Some(ua), Some(ub), Some([na, nb])) => {
                        ArrayGeometry::upa(v3(c), v3(ua), v3(ub), na, nb, a.spacing_m.unwrap_or(lambda / 2.0))
                    }
                    _ => {
                        return Err(Error::Config(format!(
                            "array `{}` needs elements_m or center_m, axis_a, axis_b and shape",
                            a.name
                        )))
                    }
                }
            }
            .map_err(|e| Error::Config(format!("array `{}`: {e}", a.name)))?;
            out.insert(a.name.clone(), geom);
        }
        if let (Some(r), Some(cfg)) = (&self.ris, self.ris_config()?) {
            out.insert(r.name.clone(), cfg.geometry().clone());
        }
        Ok(out)
    }

    pub fn array(&self, name: &str) -> Result<ArrayGeometry> {
        self.arrays()?
            .remove(name)
            .ok_or_else(|| Error::Config(format!("unknown array `{name}`")))
    }

    pub fn surface_specs(&self) -> Result<BTreeMap<String, PlanarSurfaceSpec>> {
        let lambda = self.wavelength();
        let mut out = BTreeMap::new();
        for s in &self.surfaces {
            let pose = PlanePose::from_axes(v3(s.origin_m), v3(s.axis_u), v3(s.axis_v))
                .map_err(|e| Error::Config(format!("surface `{}`: {e}", s.name)))?;
            let mut spec =
                PlanarSurfaceSpec::for_wavelength(pose, (s.extent_m[0], s.extent_m[1]), s.sigma_z_m, s.zeta, lambda)
                    .map_err(|e| Error::Config(format!("surface `{}`: {e}", s.name)))?;
            if let Some(g) = s.grid_step_m {
                spec.grid_step = g;
                spec.height_cell = (lambda / (2.0 * PI).sqrt() / g).round().max(1.0) * g;
            }
            if let Some(h) = s.height_cell_m {
                spec.height_cell = h;
            }
            spec.correlation_length = s.correlation_length_m;
            spec.validate().map_err(|e| Error::Config(format!("surface `{}`: {e}", s.name)))?;
            if out.insert(s.name.clone(), spec).is_some() {
                return Err(Error::Config(format!("duplicate surface `{}`", s.name)));
            }
        }
        Ok(out)
    }

    pub fn surface(&self, name: &str) -> Result<PlanarSurfaceSpec> {
        self.surface_specs()?
            .remove(name)
            .ok_or_else(|| Error::Config(format!("unknown surface `{name}`")))
    }

    pub fn link(&self, name: &str) -> Result<LinkModel> {
        let l = self
            .links
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| Error::Config(format!("unknown link `{name}`")))?;
        let arrays = self.arrays()?;
        let surfaces = self.surface_specs()?;
        let budget = LinkBudget {
            beta_ref_db: l.beta_ref_db,
            path_loss_exponent: l.path_loss_exponent,
            ricean_k_db: l.ricean_k_db,
            blockage_db: l.blockage_db,
        };
        let mut model = LinkModel::new(arrays[&l.tx].clone(), arrays[&l.rx].clone(), budget);
        model.ricean_scatterers = l.scatterers_m.iter().map(|&p| v3(p)).collect();
        model.surfaces = match &l.surfaces {
            Some(names) => names
                .iter()
                .map(|n| NamedSurface {
                    name: n.clone(),
                    spec: surfaces[n].clone(),
                })
                .collect(),
            None => surfaces
                .into_iter()
                .map(|(name, spec)| NamedSurface { name, spec })
                .collect(),
        };
        model.stats = StatsOptions {
            method: l.covariance,
            ..StatsOptions::default()
        };
        Ok(model)
    }

    pub fn ris_scenario(&self) -> Result<RisScenario> {
        let s = self
            .sum_rate
            .as_ref()
            .ok_or_else(|| Error::Config("no [sum_rate] section".into()))?;
        let noise = self.noise.as_ref().ok_or_else(|| Error::Config("no [noise] section".into()))?;
        let ris = self.ris_config()?.ok_or_else(|| Error::Config("no [ris] section".into()))?;
        let surfaces = self.surface_specs()?;
        let links = |names: &[String]| names.iter().map(|n| self.link(n)).collect::<Result<Vec<_>>>();
        Ok(RisScenario {
            wavelength: self.wavelength(),
            bs: self.array(&s.bs)?,
            ris,
            users: s.users.iter().map(|u| self.array(u)).collect::<Result<_>>()?,
            bs_ris: self.link(&s.bs_ris_link)?,
            ris_users: links(&s.ris_user_links)?,
            bs_users: links(&s.bs_user_links)?,
            bs_wall: s.bs_wall.as_ref().map(|w| surfaces[w].clone()),
            user_wall: s.user_wall.as_ref().map(|w| surfaces[w].clone()),
            noise_power_w: noise.power_w(),
        })
    }
}

/// Draws one channel of the named link.
pub fn assemble_channel(scenario: &ScenarioConfig, link: &str, seed: u64) -> Result<crate::matrix::ComplexMatrix> {
    crate::channel::assemble_link(&scenario.link(link)?, scenario.wavelength(), seed)
}
