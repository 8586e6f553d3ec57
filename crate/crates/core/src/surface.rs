//! Rough planar surfaces and their Gaussian height-field realizations.

use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PlanePose, Vec3};

/// A finite rectangular surface centered on `pose.origin()`, spanning
/// `extent.0` along `axis_u` and `extent.1` along `axis_v`.
///
/// Heights are drawn independently per *height cell*, a square block of
/// quadrature cells of side `height_cell`. A `height_cell` of zero (or one
/// not exceeding `grid_step`) gives one independent height per quadrature
/// cell. A positive `correlation_length` additionally smooths the field with an
/// isotropic Gaussian kernel, rescaled so the marginal standard deviation
/// stays `sigma_z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarSurfaceSpec {
    pub pose: PlanePose,
    #[serde(rename = "extent_m")]
    pub extent: (f64, f64),
    #[serde(rename = "sigma_z_m")]
    pub sigma_z: f64,
    pub zeta: f64,
    #[serde(rename = "grid_step_m")]
    pub grid_step: f64,
    #[serde(rename = "height_cell_m", default)]
    pub height_cell: f64,
    #[serde(rename = "correlation_length_m", default)]
    pub correlation_length: f64,
}

impl PlanarSurfaceSpec {
    /// Surface with the default resolution for `wavelength`: grid step λ/10 and
    /// height cells of about λ/√(2π) (rounded to whole grid cells).
    pub fn for_wavelength(
        pose: PlanePose,
        extent: (f64, f64),
        sigma_z: f64,
        zeta: f64,
        wavelength: f64,
    ) -> Result<Self> {
        let grid_step = wavelength / 10.0;
        let cells = (wavelength / (2.0 * PI).sqrt() / grid_step).round().max(1.0);
        let spec = Self {
            pose,
            extent,
            sigma_z,
            zeta,
            grid_step,
            height_cell: cells * grid_step,
            correlation_length: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (l1, l2) = self.extent;
        if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
            return Err(Error::InvalidParameter(format!("surface extent {l1} x {l2} m")));
        }
        if !(self.sigma_z >= 0.0 && self.sigma_z.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma_z = {}", self.sigma_z)));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "zeta = {} outside (0, 1]",
                self.zeta
            )));
        }
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid step {}", self.grid_step)));
        }
        if !(self.height_cell >= 0.0 && self.height_cell.is_finite()) {
            return Err(Error::InvalidParameter(format!("height cell {}", self.height_cell)));
        }
        if !(self.correlation_length >= 0.0 && self.correlation_length.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "correlation length {}",
                self.correlation_length
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.extent.0 * self.extent.1
    }

    /// Quadrature grid dimensions `(⌈L1/step⌉, ⌈L2/step⌉)`.
    pub fn grid_dims(&self) -> (usize, usize) {
        (
            (self.extent.0 / self.grid_step - 1e-9).ceil().max(1.0) as usize,
            (self.extent.1 / self.grid_step - 1e-9).ceil().max(1.0) as usize,
        )
    }

    /// Quadrature cells per height cell along each axis.
    pub fn cells_per_patch(&self) -> usize {
        ((self.height_cell / self.grid_step).round() as usize).max(1)
    }

    /// In-plane coordinates of the center of quadrature cell `(i, j)`.
    pub fn cell_coords(&self, i: usize, j: usize) -> (f64, f64) {
        let (n1, n2) = self.grid_dims();
        let h = self.grid_step;
        (
            (i as f64 + 0.5) * h - 0.5 * n1 as f64 * h,
            (j as f64 + 0.5) * h - 0.5 * n2 as f64 * h,
        )
    }

    /// Whether the in-plane projection of `p` falls on the rectangle.
    pub fn contains_projection(&self, p: Vec3) -> bool {
        let (s, t) = self.pose.local_coords(p);
        s.abs() <= 0.5 * self.extent.0 && t.abs() <= 0.5 * self.extent.1
    }

    /// The four corners, in counter-clockwise order.
    pub fn corners(&self) -> [Vec3; 4] {
        let (a, b) = (0.5 * self.extent.0, 0.5 * self.extent.1);
        [
            self.pose.point_at(-a, -b, 0.0),
            self.pose.point_at(a, -b, 0.0),
            self.pose.point_at(a, b, 0.0),
            self.pose.point_at(-a, b, 0.0),
        ]
    }
}

/// One sampled height field, one value per quadrature cell (row-major over
/// `(i, j)` with `j` fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct RoughRealization {
    spec: PlanarSurfaceSpec,
    dims: (usize, usize),
    heights: Vec<f64>,
    seed: u64,
}

impl RoughRealization {
    /// A realization with all heights zero.
    pub fn flat(spec: &PlanarSurfaceSpec) -> Self {
        let dims = spec.grid_dims();
        Self {
            spec: spec.clone(),
            dims,
            heights: vec![0.0; dims.0 * dims.1],
            seed: 0,
        }
    }

    pub fn spec(&self) -> &PlanarSurfaceSpec {
        &self.spec
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn height(&self, i: usize, j: usize) -> f64 {
        self.heights[i * self.dims.1 + j]
    }

    /// Center of cell `(i, j)` displaced by its height along the normal.
    pub fn cell_point(&self, i: usize, j: usize) -> Vec3 {
        let (s, t) = self.spec.cell_coords(i, j);
        self.spec.pose.point_at(s, t, self.height(i, j))
    }

    /// Writes `x,y,z` rows of displaced cell centers (meters).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,z")?;
        for i in 0..self.dims.0 {
            for j in 0..self.dims.1 {
                let p = self.cell_point(i, j);
                writeln!(w, "{:e},{:e},{:e}", p.x, p.y, p.z)?;
            }
        }
        Ok(())
    }
}

/// Draws a Gaussian height field for `spec`. Deterministic in `(spec, seed)`.
pub fn sample_realization(spec: &PlanarSurfaceSpec, seed: u64) -> Result<RoughRealization> {
    spec.validate()?;
    let (n1, n2) = spec.grid_dims();
    if spec.sigma_z == 0.0 {
        let mut r = RoughRealization::flat(spec);
        r.seed = seed;
        return Ok(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heights = if spec.correlation_length > 0.0 {
        smoothed_field(spec, n1, n2, &mut rng)
    } else {
        let cpp = spec.cells_per_patch();
        let (p1, p2) = (n1.div_ceil(cpp), n2.div_ceil(cpp));
        let patches: Vec<f64> = (0..p1 * p2)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                spec.sigma_z * z
            })
            .collect();
        let mut h = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                h.push(patches[(i / cpp) * p2 + j / cpp]);
            }
        }
        h
    };
    Ok(RoughRealization {
        spec: spec.clone(),
        dims: (n1, n2),
        heights,
        seed,
    })
}

// White noise on a padded grid convolved with a separable Gaussian kernel whose
// taps have unit energy, so every output cell has variance sigma_z².
fn smoothed_field(spec: &PlanarSurfaceSpec, n1: usize, n2: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let ell = spec.correlation_length / spec.grid_step;
    let half = (3.0 * ell).ceil() as usize;
    let mut taps: Vec<f64> = (0..=2 * half)
        .map(|k| {
            let x = k as f64 - half as f64;
            (-x * x / (ell * ell)).exp()
        })
        .collect();
    let energy = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|t| *t /= energy);

    let (m1, m2) = (n1 + 2 * half, n2 + 2 * half);
    let noise: Vec<f64> = (0..m1 * m2)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    // along j
    let mut rows = vec![0.0; m1 * n2];
    for i in 0..m1 {
        for j in 0..n2 {
            rows[i * n2 + j] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * noise[i * m2 + j + k])
                .sum();
        }
    }
    // along i
    let mut out = vec![0.0; n1 * n2];
    for i in 0..n1 {
        for j in 0..n2 {
            let v: f64 = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * rows[(i + k) * n2 + j])
                .sum();
            out[i * n2 + j] = spec.sigma_z * v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    const LAMBDA_28GHZ: f64 = 299_792_458.0 / 28e9;

    fn spec(extent: f64, sigma_z: f64) -> PlanarSurfaceSpec {
        PlanarSurfaceSpec {
            pose: PlanePose::horizontal(0.0),
            extent: (extent, extent),
            sigma_z,
            zeta: 1.0,
            grid_step: LAMBDA_28GHZ / 10.0,
            height_cell: 0.0,
            correlation_length: 0.0,
        }
    }

    #[test]
    fn zero_roughness_is_flat() {
        let r = sample_realization(&spec(0.1, 0.0), 9).unwrap();
        assert!(r.heights().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn grid_dimensions_use_ceiling() {
        let mut s = spec(0.1, 0.0);
        s.grid_step = 0.03;
        s.extent = (0.1, 0.06);
        assert_eq!(s.grid_dims(), (4, 2));
        assert_eq!(sample_realization(&s, 0).unwrap().dims(), (4, 2));
    }

    #[test]
    fn height_std_at_unit_kappa_sigma() {
        let sigma = LAMBDA_28GHZ / (2.0 * PI);
        assert!((sigma - 1.705e-3).abs() < 1e-6);
        let r = sample_realization(&spec(0.15, sigma), 2024).unwrap();
        let h = r.heights();
        assert!(h.len() >= 10_000);
        let n = h.len() as f64;
        let sd = stats::std_dev(h);
        // standard error of the sample std for Gaussian data
        let se = sigma / (2.0 * (n - 1.0)).sqrt();
        assert!((sd - sigma).abs() < 3.0 * se, "sd {sd} vs {sigma}");
        assert!(stats::mean(h).abs() < 3.0 * sigma / n.sqrt());
        assert!(!stats::anderson_darling(h).unwrap().rejects_at(0.01));
    }

    #[test]
    fn same_seed_same_grid() {
        let s = spec(0.05, 1e-3);
        let a = sample_realization(&s, 77).unwrap();
        let b = sample_realization(&s, 77).unwrap();
        assert_eq!(a, b);
        let c = sample_realization(&s, 78).unwrap();
        assert_ne!(a.heights(), c.heights());
    }

    #[test]
    fn patches_hold_constant_height() {
        let mut s = spec(0.05, 1e-3);
        s.height_cell = 4.0 * s.grid_step;
        let r = sample_realization(&s, 1).unwrap();
        assert_eq!(r.height(0, 0), r.height(3, 3));
        assert_ne!(r.height(0, 0), r.height(4, 0));
    }

    #[test]
    fn default_height_cell_is_four_grid_cells() {
        let s = PlanarSurfaceSpec::for_wavelength(
            PlanePose::horizontal(0.0),
            (0.5, 0.5),
            0.0,
            1.0,
            LAMBDA_28GHZ,
        )
        .unwrap();
        assert_eq!(s.cells_per_patch(), 4);
    }

    #[test]
    fn smoothing_keeps_marginal_std() {
        let mut s = spec(0.12, 2e-3);
        s.correlation_length = 3.0 * s.grid_step;
        let r = sample_realization(&s, 5).unwrap();
        let sd = stats::std_dev(r.heights());
        // strongly correlated samples, so only a loose check
        assert!((sd / 2e-3 - 1.0).abs() < 0.15, "sd {sd}");
        // neighbors are correlated
        let a: Vec<f64> = (0..100).map(|i| r.height(i, 10)).collect();
        let b: Vec<f64> = (0..100).map(|i| r.height(i, 11)).collect();
        let ma = stats::mean(&a);
        let mb = stats::mean(&b);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
        assert!(cov > 0.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut s = spec(0.05, f64::NAN);
        assert!(sample_realization(&s, 0).is_err());
        s.sigma_z = 0.0;
        s.zeta = 1.5;
        assert!(s.validate().is_err());
        s.zeta = 1.0;
        s.extent = (0.0, 1.0);
        assert!(s.validate().is_err());
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let mut s = spec(0.01, 1e-3);
        s.grid_step = 0.005;
        let r = sample_realization(&s, 3).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4);
        assert!(text.starts_with("x,y,z\n"));
    }
}
