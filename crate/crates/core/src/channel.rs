//! Near-field channel assembly: line of sight, point scatterers and the
//! specular plus diffuse contribution of every rough surface, scaled by a
//! link budget.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PlanePose, Vec3};
use crate::matrix::ComplexMatrix;
use crate::numerics::derive_seed;
use crate::stat_model::{
    complex_normal_vec, deterministic_component, surface_channel_stats, surface_covers_specular_point, StatsOptions,
    StochasticSampler,
};
use crate::surface::PlanarSurfaceSpec;
use crate::units::db_to_linear;

/// Reference distance `d_0` of the path-loss law.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;

/// Largest `N_rx·N_tx` for which diffuse terms are drawn from a factored
/// covariance; bigger links use [`POINT_SUM_TERMS`] random surface points.
pub const COVARIANCE_SAMPLER_LIMIT: usize = 256;
pub const POINT_SUM_TERMS: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    elements: Vec<Vec3>,
    center: Vec3,
}

impl ArrayGeometry {
    pub fn new(elements: Vec<Vec3>) -> Result<Self> {
        if elements.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("non-finite array element".into()));
        }
        let center = Vec3::mean(&elements).ok_or_else(|| Error::InvalidParameter("array without elements".into()))?;
        Ok(Self { elements, center })
    }

    pub fn single(position: Vec3) -> Result<Self> {
        Self::new(vec![position])
    }

    /// Uniform planar array of `n_a × n_b` elements centered on `center`,
    /// element `(a, b)` at index `a·n_b + b`.
    pub fn upa(center: Vec3, axis_a: Vec3, axis_b: Vec3, n_a: usize, n_b: usize, spacing: f64) -> Result<Self> {
        let ea = axis_a
            .normalized()
            .ok_or_else(|| Error::InvalidParameter("zero array axis".into()))?;
        let eb = axis_b
            .normalized()
            .ok_or_else(|| Error::InvalidParameter("zero array axis".into()))?;
        if ea.dot(eb).abs() > 1e-9 {
            return Err(Error::InvalidParameter("array axes must be orthogonal".into()));
        }
        if n_a == 0 || n_b == 0 || !(spacing > 0.0) {
            return Err(Error::InvalidParameter(format!("UPA {n_a}x{n_b} with spacing {spacing}")));
        }
        let off = |i: usize, n: usize| (i as f64 - (n as f64 - 1.0) / 2.0) * spacing;
        let mut elements = Vec::with_capacity(n_a * n_b);
        for a in 0..n_a {
            for b in 0..n_b {
                elements.push(center + ea * off(a, n_a) + eb * off(b, n_b));
            }
        }
        Self::new(elements)
    }

    pub fn elements(&self) -> &[Vec3] {
        &self.elements
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointScatterer {
    pub position: Vec3,
    pub amplitude: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// Path gain `β` at `d_0`, dB.
    #[serde(rename = "beta_ref_db")]
    pub beta_ref_db: f64,
    pub path_loss_exponent: f64,
    #[serde(rename = "ricean_k_db")]
    pub ricean_k_db: f64,
    /// Extra attenuation of the direct link, dB (≤ 0).
    #[serde(default, rename = "blockage_db")]
    pub blockage_db: f64,
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.path_loss_exponent > 0.0) {
            return Err(Error::InvalidParameter(format!("path-loss exponent {}", self.path_loss_exponent)));
        }
        if !(self.blockage_db <= 0.0) {
            return Err(Error::InvalidParameter(format!("blockage {} dB must be <= 0", self.blockage_db)));
        }
        if !self.beta_ref_db.is_finite() || !self.ricean_k_db.is_finite() {
            return Err(Error::InvalidParameter("non-finite link budget".into()));
        }
        Ok(())
    }

    /// `β (d/d_0)^{-η}` times the blockage loss.
    pub fn direct_power(&self, distance: f64) -> f64 {
        db_to_linear(self.beta_ref_db + self.blockage_db)
            * (distance / REFERENCE_DISTANCE_M).powf(-self.path_loss_exponent)
    }

    /// Multiplier taking a field-unit surface amplitude to link units.
    pub fn surface_scale(&self) -> f64 {
        db_to_linear(self.beta_ref_db).sqrt() * REFERENCE_DISTANCE_M
    }

    /// `(LOS, scatterer)` shares of the direct power.
    pub fn ricean_split(&self) -> (f64, f64) {
        let k = db_to_linear(self.ricean_k_db);
        (k / (1.0 + k), 1.0 / (1.0 + k))
    }
}

fn check_disjoint(a: &[Vec3], b: &[Vec3], what: &str) -> Result<()> {
    for p in a {
        for q in b {
            if p.distance(*q) == 0.0 {
                return Err(Error::CoincidentPoint(format!("{what} at {p:?}")));
            }
        }
    }
    Ok(())
}

/// `[a(u)]_n = e^{jκ‖u_n − u‖}`.
pub fn array_response(array: &ArrayGeometry, point: Vec3, wavelength: f64) -> Vec<Complex64> {
    let kappa = 2.0 * PI / wavelength;
    array
        .elements
        .iter()
        .map(|e| Complex64::from_polar(1.0, kappa * e.distance(point)))
        .collect()
}

/// `[H]_{m,n} = e^{jκ‖u_rx,m − u_tx,n‖}`.
pub fn los_matrix(tx: &ArrayGeometry, rx: &ArrayGeometry, wavelength: f64) -> Result<ComplexMatrix> {
    check_disjoint(tx.elements(), rx.elements(), "Tx and Rx element")?;
    let kappa = 2.0 * PI / wavelength;
    Ok(ComplexMatrix::from_fn(rx.len(), tx.len(), |m, n| {
        Complex64::from_polar(1.0, kappa * rx.elements[m].distance(tx.elements[n]))
    }))
}

/// Column `n` is the receive response to transmit element `n`.
pub fn los_matrix_by_columns(tx: &ArrayGeometry, rx: &ArrayGeometry, wavelength: f64) -> Result<ComplexMatrix> {
    check_disjoint(tx.elements(), rx.elements(), "Tx and Rx element")?;
    let cols: Vec<Vec<Complex64>> = tx.elements.iter().map(|&u| array_response(rx, u, wavelength)).collect();
    Ok(ComplexMatrix::from_fn(rx.len(), tx.len(), |m, n| cols[n][m]))
}

/// Row `m` is the transmit response seen from receive element `m`.
pub fn los_matrix_by_rows(tx: &ArrayGeometry, rx: &ArrayGeometry, wavelength: f64) -> Result<ComplexMatrix> {
    check_disjoint(tx.elements(), rx.elements(), "Tx and Rx element")?;
    let rows: Vec<Vec<Complex64>> = rx.elements.iter().map(|&u| array_response(tx, u, wavelength)).collect();
    Ok(ComplexMatrix::from_fn(rx.len(), tx.len(), |m, n| rows[m][n]))
}

/// `a_rx(u_s) a_tx(u_s)ᵀ`; the amplitude is applied by the caller.
pub fn scatterer_matrix(
    s: &PointScatterer,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    wavelength: f64,
) -> Result<ComplexMatrix> {
    check_disjoint(&[s.position], tx.elements(), "scatterer on a Tx element")?;
    check_disjoint(&[s.position], rx.elements(), "scatterer on an Rx element")?;
    Ok(ComplexMatrix::outer(
        &array_response(rx, s.position, wavelength),
        &array_response(tx, s.position, wavelength),
    ))
}

/// Magnitudes `|c_s| ∝ 1/(‖u_rx − u_s‖‖u_s − u_tx‖)` with `Σ|c_s|² = total_power`.
pub fn scatterer_magnitudes(positions: &[Vec3], tx_center: Vec3, rx_center: Vec3, total_power: f64) -> Vec<f64> {
    let raw: Vec<f64> = positions
        .iter()
        .map(|&p| 1.0 / (p.distance(tx_center) * p.distance(rx_center)))
        .collect();
    let norm = raw.iter().map(|r| r * r).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return vec![0.0; positions.len()];
    }
    raw.iter().map(|r| r / norm * total_power.sqrt()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedSurface {
    pub name: String,
    pub spec: PlanarSurfaceSpec,
}

/// Everything needed to draw the channel of one link.
#[derive(Debug, Clone)]
pub struct LinkModel {
    pub tx: ArrayGeometry,
    pub rx: ArrayGeometry,
    pub budget: LinkBudget,
    /// Scatterers whose power follows the Ricean factor, with random phases
    /// per draw.
    pub ricean_scatterers: Vec<Vec3>,
    /// Scatterers with fixed amplitudes.
    pub fixed_scatterers: Vec<PointScatterer>,
    pub surfaces: Vec<NamedSurface>,
    pub stats: StatsOptions,
}

impl LinkModel {
    pub fn new(tx: ArrayGeometry, rx: ArrayGeometry, budget: LinkBudget) -> Self {
        Self {
            tx,
            rx,
            budget,
            ricean_scatterers: Vec::new(),
            fixed_scatterers: Vec::new(),
            surfaces: Vec::new(),
            stats: StatsOptions::default(),
        }
    }

    pub fn prepare(&self, wavelength: f64) -> Result<PreparedLink> {
        PreparedLink::new(self, wavelength)
    }
}

/// How one surface contributes to a prepared link.
#[derive(Debug, Clone)]
pub struct SurfaceTerm {
    pub name: String,
    /// `c_d H_d` in link units; zero when the specular point misses the
    /// surface.
    pub specular: ComplexMatrix,
    /// Mean power of each diffuse entry, link units.
    pub stoch_power: f64,
    diffuse: Option<DiffuseSampler>,
    tag: u64,
}

#[derive(Debug, Clone)]
enum DiffuseSampler {
    Covariance(StochasticSampler),
    PointSum {
        surface: PlanarSurfaceSpec,
        tx: ArrayGeometry,
        rx: ArrayGeometry,
        amplitude: f64,
        wavelength: f64,
    },
}

impl DiffuseSampler {
    fn sample(&self, seed: u64) -> ComplexMatrix {
        match self {
            DiffuseSampler::Covariance(s) => s.sample(seed),
            DiffuseSampler::PointSum {
                surface,
                tx,
                rx,
                amplitude,
                wavelength,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let gains = complex_normal_vec(&mut rng, POINT_SUM_TERMS);
                let scale = amplitude / (POINT_SUM_TERMS as f64).sqrt();
                let mut h = ComplexMatrix::zeros(rx.len(), tx.len());
                for g in gains {
                    let s = (rng.gen::<f64>() - 0.5) * surface.extent.0;
                    let t = (rng.gen::<f64>() - 0.5) * surface.extent.1;
                    let u = surface.pose.point_at(s, t, 0.0);
                    let a_rx = array_response(rx, u, *wavelength);
                    let a_tx = array_response(tx, u, *wavelength);
                    let c = g * scale;
                    for (m, ar) in a_rx.iter().enumerate() {
                        let ar = ar * c;
                        for (n, at) in a_tx.iter().enumerate() {
                            h[(m, n)] += ar * at;
                        }
                    }
                }
                h
            }
        }
    }
}

/// A link with every seed-independent quantity precomputed.
#[derive(Debug, Clone)]
pub struct PreparedLink {
    rows: usize,
    cols: usize,
    los: ComplexMatrix,
    fixed_scatter: ComplexMatrix,
    random_scatterers: Vec<(ComplexMatrix, f64)>,
    surfaces: Vec<SurfaceTerm>,
}

fn name_tag(name: &str) -> u64 {
    // FNV-1a
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn same_side(pose: &PlanePose, a: &[Vec3], b: &[Vec3]) -> bool {
    let s = pose.signed_distance(a[0]).signum();
    s != 0.0 && a.iter().chain(b).all(|&p| pose.signed_distance(p).signum() == s)
}

impl PreparedLink {
    fn new(link: &LinkModel, wavelength: f64) -> Result<Self> {
        link.budget.validate()?;
        let (tx, rx) = (&link.tx, &link.rx);
        let d = tx.center().distance(rx.center());
        if d == 0.0 {
            return Err(Error::CoincidentPoint("Tx and Rx array centers".into()));
        }
        let direct = link.budget.direct_power(d);
        let (los_share, sc_share) = if link.ricean_scatterers.is_empty() {
            (1.0, 0.0)
        } else {
            link.budget.ricean_split()
        };
        let los = los_matrix(tx, rx, wavelength)?.scale(Complex64::new((direct * los_share).sqrt(), 0.0));

        let mut fixed_scatter = ComplexMatrix::zeros(rx.len(), tx.len());
        for s in &link.fixed_scatterers {
            if !(s.amplitude.norm().is_finite()) {
                return Err(Error::InvalidParameter("non-finite scatterer amplitude".into()));
            }
            fixed_scatter.add_scaled(&scatterer_matrix(s, tx, rx, wavelength)?, s.amplitude)?;
        }
        let mags = scatterer_magnitudes(&link.ricean_scatterers, tx.center(), rx.center(), direct * sc_share);
        let random_scatterers = link
            .ricean_scatterers
            .iter()
            .zip(mags)
            .map(|(&position, mag)| {
                let s = PointScatterer {
                    position,
                    amplitude: Complex64::new(1.0, 0.0),
                };
                Ok((scatterer_matrix(&s, tx, rx, wavelength)?, mag))
            })
            .collect::<Result<_>>()?;

        let scale = link.budget.surface_scale();
        let mut surfaces = Vec::new();
        for ns in &link.surfaces {
            if !same_side(&ns.spec.pose, tx.elements(), rx.elements()) {
                log::debug!("surface {} offers no reflection path for this link", ns.name);
                continue;
            }
            surfaces.push(Self::surface_term(ns, tx, rx, wavelength, scale, &link.stats)?);
        }
        Ok(Self {
            rows: rx.len(),
            cols: tx.len(),
            los,
            fixed_scatter,
            random_scatterers,
            surfaces,
        })
    }

    fn surface_term(
        ns: &NamedSurface,
        tx: &ArrayGeometry,
        rx: &ArrayGeometry,
        wavelength: f64,
        scale: f64,
        opts: &StatsOptions,
    ) -> Result<SurfaceTerm> {
        let covered = surface_covers_specular_point(&ns.spec, tx.center(), rx.center());
        let small = tx.len() * rx.len() <= COVARIANCE_SAMPLER_LIMIT;
        let (c_d, h_d, stoch_power, diffuse) = if small {
            let stats = surface_channel_stats(&ns.spec, tx.elements(), rx.elements(), wavelength, opts)?;
            let mut scaled = stats.clone();
            scaled.stoch_power *= scale * scale;
            let sampler = (scaled.stoch_power > 0.0)
                .then(|| StochasticSampler::new(&scaled).map(DiffuseSampler::Covariance))
                .transpose()?;
            (stats.c_d, stats.h_d, scaled.stoch_power, sampler)
        } else {
            let (c_d, h_d) = deterministic_component(&ns.spec, tx.elements(), rx.elements(), wavelength)?;
            let stoch = diffuse_power(&ns.spec, tx, rx, wavelength, opts)? * scale * scale;
            let sampler = (stoch > 0.0).then(|| DiffuseSampler::PointSum {
                surface: ns.spec.clone(),
                tx: tx.clone(),
                rx: rx.clone(),
                amplitude: stoch.sqrt(),
                wavelength,
            });
            (c_d, h_d, stoch, sampler)
        };
        let specular = if covered {
            h_d.scale(c_d * scale)
        } else {
            log::debug!("specular point of surface {} lies outside it", ns.name);
            ComplexMatrix::zeros(rx.len(), tx.len())
        };
        Ok(SurfaceTerm {
            name: ns.name.clone(),
            specular,
            stoch_power,
            diffuse,
            tag: name_tag(&ns.name),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn surfaces(&self) -> &[SurfaceTerm] {
        &self.surfaces
    }

    /// `c_0 H_LOS`.
    pub fn los(&self) -> &ComplexMatrix {
        &self.los
    }

    /// Expected channel: LOS, fixed scatterers and specular terms.
    pub fn mean(&self) -> ComplexMatrix {
        let mut h = &self.los + &self.fixed_scatter;
        for s in &self.surfaces {
            h = &h + &s.specular;
        }
        h
    }

    pub fn draw(&self, seed: u64) -> ComplexMatrix {
        let mut h = self.mean();
        if !self.random_scatterers.is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0]));
            for (m, mag) in &self.random_scatterers {
                let phase: f64 = rng.gen::<f64>() * 2.0 * PI;
                h.add_scaled(m, Complex64::from_polar(*mag, phase)).expect("same shape");
            }
        }
        for s in &self.surfaces {
            if let Some(d) = &s.diffuse {
                h = &h + &d.sample(derive_seed(seed, &[1, s.tag]));
            }
        }
        h
    }
}

fn diffuse_power(
    surface: &PlanarSurfaceSpec,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    wavelength: f64,
    opts: &StatsOptions,
) -> Result<f64> {
    use crate::stat_model::{isotropic_antenna_area, isotropic_power, link_roughness, stochastic_power};
    let g = link_roughness(surface, tx.elements(), rx.elements(), wavelength)?.g;
    let a_rx = opts.rx_area.unwrap_or_else(|| isotropic_antenna_area(wavelength));
    let iso = isotropic_power(surface, tx.center(), rx.center(), a_rx, opts.tx_directivity, wavelength);
    Ok(stochastic_power(g, iso))
}

/// One draw of a link's channel.
pub fn assemble_link(link: &LinkModel, wavelength: f64, seed: u64) -> Result<ComplexMatrix> {
    Ok(link.prepare(wavelength)?.draw(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::PlanarSurfaceSpec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const LAMBDA: f64 = 299_792_458.0 / 28e9;

    fn budget() -> LinkBudget {
        LinkBudget {
            beta_ref_db: -61.0,
            path_loss_exponent: 2.0,
            ricean_k_db: 10.0,
            blockage_db: 0.0,
        }
    }

    fn line(center: Vec3, n: usize) -> ArrayGeometry {
        ArrayGeometry::upa(center, Vec3::X, Vec3::Y, n, 1, LAMBDA / 2.0).unwrap()
    }

    #[test]
    fn upa_center_and_spacing() {
        let a = ArrayGeometry::upa(Vec3::new(1.0, 2.0, 3.0), Vec3::X, Vec3::Z, 4, 3, 0.01).unwrap();
        assert_eq!(a.len(), 12);
        assert!(a.center().distance(Vec3::new(1.0, 2.0, 3.0)) < 1e-12);
        assert_abs_diff_eq!(a.elements()[0].distance(a.elements()[1]), 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(a.elements()[0].distance(a.elements()[3]), 0.01, epsilon = 1e-12);
        assert!(ArrayGeometry::new(vec![]).is_err());
        assert!(ArrayGeometry::upa(Vec3::ZERO, Vec3::X, Vec3::X, 2, 2, 0.01).is_err());
    }

    #[test]
    fn los_single_pair() {
        let tx = ArrayGeometry::single(Vec3::ZERO).unwrap();
        let rx = ArrayGeometry::single(Vec3::new(3.0, 4.0, 0.0)).unwrap();
        let h = los_matrix(&tx, &rx, LAMBDA).unwrap();
        let k = 2.0 * PI / LAMBDA;
        assert!((h[(0, 0)] - Complex64::from_polar(1.0, 5.0 * k)).norm() < 1e-12);
        assert!(los_matrix(&tx, &tx, LAMBDA).is_err());
    }

    proptest! {
        #[test]
        fn los_constructions_agree(
            cx in -5.0f64..5.0, cy in -5.0f64..5.0, cz in 1.0f64..5.0,
            nt in 1usize..5, nr in 1usize..5,
        ) {
            let tx = line(Vec3::ZERO, nt);
            let rx = ArrayGeometry::upa(Vec3::new(cx, cy, cz), Vec3::Y, Vec3::Z, nr, 2, LAMBDA / 2.0).unwrap();
            let a = los_matrix(&tx, &rx, LAMBDA).unwrap();
            let b = los_matrix_by_columns(&tx, &rx, LAMBDA).unwrap();
            let c = los_matrix_by_rows(&tx, &rx, LAMBDA).unwrap();
            prop_assert!(a.max_abs_diff(&b) <= 1e-12);
            prop_assert!(a.max_abs_diff(&c) <= 1e-12);
            prop_assert!(a.as_slice().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn scatterer_matrix_is_rank_one() {
        let tx = ArrayGeometry::upa(Vec3::ZERO, Vec3::X, Vec3::Y, 3, 2, LAMBDA / 2.0).unwrap();
        let rx = ArrayGeometry::upa(Vec3::new(4.0, 1.0, 0.0), Vec3::Y, Vec3::Z, 2, 2, LAMBDA / 2.0).unwrap();
        let s = PointScatterer {
            position: Vec3::new(1.0, 3.0, 1.0),
            amplitude: Complex64::new(1.0, 0.0),
        };
        let h = scatterer_matrix(&s, &tx, &rx, LAMBDA).unwrap();
        let mut sv: Vec<f64> = nalgebra::linalg::SVD::new(h.to_nalgebra(), false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        assert!(sv[1] <= 1e-10 * sv[0], "{sv:?}");
        let bad = PointScatterer {
            position: tx.elements()[2],
            amplitude: Complex64::new(1.0, 0.0),
        };
        assert!(scatterer_matrix(&bad, &tx, &rx, LAMBDA).is_err());
    }

    #[test]
    fn scatterer_single_pair_phase() {
        let tx = ArrayGeometry::single(Vec3::ZERO).unwrap();
        let rx = ArrayGeometry::single(Vec3::new(2.0, 0.0, 0.0)).unwrap();
        let s = PointScatterer {
            position: Vec3::new(1.0, 1.0, 0.0),
            amplitude: Complex64::new(1.0, 0.0),
        };
        let h = scatterer_matrix(&s, &tx, &rx, LAMBDA).unwrap();
        let k = 2.0 * PI / LAMBDA;
        assert!((h[(0, 0)] - Complex64::from_polar(1.0, k * 2.0 * 2f64.sqrt())).norm() < 1e-9);
    }

    #[test]
    fn scatterer_magnitudes_follow_distance_law() {
        let tx = Vec3::ZERO;
        let rx = Vec3::new(10.0, 0.0, 0.0);
        let ps = [Vec3::new(5.0, 2.0, 0.0), Vec3::new(2.0, 4.0, 1.0), Vec3::new(8.0, -3.0, 0.0)];
        let m = scatterer_magnitudes(&ps, tx, rx, 2.0);
        assert_abs_diff_eq!(m.iter().map(|x| x * x).sum::<f64>(), 2.0, epsilon = 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let ri = ps[i].distance(tx) * ps[i].distance(rx);
                let rj = ps[j].distance(tx) * ps[j].distance(rx);
                assert_abs_diff_eq!(m[i] * ri, m[j] * rj, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn bare_link_is_scaled_los() {
        let tx = line(Vec3::ZERO, 3);
        let rx = line(Vec3::new(0.0, 5.0, 1.0), 2);
        let link = LinkModel::new(tx.clone(), rx.clone(), budget());
        let h = assemble_link(&link, LAMBDA, 4).unwrap();
        let d = tx.center().distance(rx.center());
        let c0 = (db_to_linear(-61.0) / (d * d)).sqrt();
        let expected = los_matrix(&tx, &rx, LAMBDA).unwrap().scale(Complex64::new(c0, 0.0));
        assert!(h.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn blockage_attenuates_direct_power() {
        let tx = line(Vec3::ZERO, 1);
        let rx = line(Vec3::new(0.0, 5.0, 1.0), 1);
        let mut b = budget();
        let open = assemble_link(&LinkModel::new(tx.clone(), rx.clone(), b), LAMBDA, 0).unwrap();
        b.blockage_db = -40.0;
        let blocked = assemble_link(&LinkModel::new(tx, rx, b), LAMBDA, 0).unwrap();
        assert_abs_diff_eq!(blocked[(0, 0)].norm() / open[(0, 0)].norm(), 0.01, epsilon = 1e-12);
        b.blockage_db = 1.0;
        assert!(b.validate().is_err());
    }

    #[test]
    fn ricean_split_of_power() {
        let tx = line(Vec3::ZERO, 1);
        let rx = line(Vec3::new(0.0, 5.0, 1.0), 1);
        let mut link = LinkModel::new(tx.clone(), rx.clone(), budget());
        link.ricean_scatterers = vec![Vec3::new(3.0, 1.0, 0.0), Vec3::new(-2.0, 3.0, 2.0)];
        let p = link.prepare(LAMBDA).unwrap();
        let d = tx.center().distance(rx.center());
        let total = db_to_linear(-61.0) / (d * d);
        let los = p.los()[(0, 0)].norm_sqr();
        let sc: f64 = p.random_scatterers.iter().map(|(_, m)| m * m).sum();
        assert_abs_diff_eq!(los / sc, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(los + sc, total, epsilon = 1e-12 * total);
        assert_ne!(p.draw(1), p.draw(2));
    }

    fn wall() -> NamedSurface {
        NamedSurface {
            name: "floor".into(),
            spec: PlanarSurfaceSpec::for_wavelength(PlanePose::horizontal(0.0), (4.0, 4.0), 0.0, 0.7, LAMBDA).unwrap(),
        }
    }

    #[test]
    fn smooth_surfaces_give_deterministic_channels() {
        let mut link = LinkModel::new(line(Vec3::new(-1.0, 0.0, 2.0), 2), line(Vec3::new(1.0, 0.0, 1.5), 2), budget());
        link.surfaces.push(wall());
        let p = link.prepare(LAMBDA).unwrap();
        assert_eq!(p.draw(1), p.draw(99));
        assert_eq!(p.draw(1), p.mean());
        // specular term is a mirror-image LOS link attenuated by ζ
        let s = &p.surfaces()[0];
        let vrx = crate::geometry::mirror_image(link.rx.center(), &PlanePose::horizontal(0.0));
        let expected = 0.7 * db_to_linear(-61.0).sqrt() / vrx.distance(link.tx.center());
        assert_abs_diff_eq!(s.specular[(0, 0)].norm(), expected, epsilon = 1e-15);
    }

    #[test]
    fn surface_on_the_far_side_is_skipped() {
        let mut link = LinkModel::new(line(Vec3::new(-1.0, 0.0, 2.0), 1), line(Vec3::new(1.0, 0.0, -1.5), 1), budget());
        link.surfaces.push(wall());
        assert!(link.prepare(LAMBDA).unwrap().surfaces().is_empty());
    }

    fn rough_link(n_rx: usize) -> LinkModel {
        let mut w = wall();
        w.spec.sigma_z = 0.5 * LAMBDA / (2.0 * PI);
        let mut link = LinkModel::new(line(Vec3::new(-1.0, 0.0, 2.0), 1), line(Vec3::new(1.0, 0.0, 1.5), n_rx), budget());
        link.surfaces.push(w);
        link
    }

    #[test]
    fn removing_a_surface_removes_its_contribution() {
        let mut link = rough_link(2);
        let mut other = wall();
        other.name = "ceiling".into();
        other.spec.pose = PlanePose::from_axes(Vec3::new(0.0, 0.0, 3.0), Vec3::X, Vec3::Y).unwrap();
        other.spec.sigma_z = 1e-3;
        link.surfaces.push(other);
        let both = link.prepare(LAMBDA).unwrap();
        let mut only_floor = link.clone();
        only_floor.surfaces.pop();
        let floor = only_floor.prepare(LAMBDA).unwrap();
        let ceiling = &both.surfaces()[1];
        let contribution = &ceiling.specular + &ceiling.diffuse.as_ref().unwrap().sample(derive_seed(5, &[1, ceiling.tag]));
        let diff = &both.draw(5) - &floor.draw(5);
        assert!(diff.max_abs_diff(&contribution) < 1e-18);
    }

    #[test]
    fn monte_carlo_mean_and_power() {
        let link = rough_link(3);
        let p = link.prepare(LAMBDA).unwrap();
        let mean = p.mean();
        let n = 1000;
        let mut acc = ComplexMatrix::zeros(3, 1);
        let mut power = 0.0;
        for s in 0..n {
            let h = p.draw(s);
            acc = &acc + &h;
            power += (&h - &mean).frobenius_norm_sq();
        }
        let stoch = p.surfaces()[0].stoch_power;
        assert!(stoch > 0.0);
        acc.scale_in_place(Complex64::new(1.0 / n as f64, 0.0));
        // 3σ on each entry of the sample mean
        let bound = 3.0 * (stoch / n as f64).sqrt();
        assert!((&acc - &mean).as_slice().iter().all(|v| v.norm() < bound));
        let per_entry = power / (n as f64 * 3.0);
        assert!((per_entry / stoch - 1.0).abs() < 0.05, "{per_entry} vs {stoch}");
    }

    #[test]
    fn point_sum_sampler_for_large_links() {
        let link = rough_link(300);
        let p = link.prepare(LAMBDA).unwrap();
        let mean = p.mean();
        let stoch = p.surfaces()[0].stoch_power;
        let n = 200;
        let power: f64 = (0..n).map(|s| (&p.draw(s) - &mean).frobenius_norm_sq()).sum::<f64>() / (n as f64 * 300.0);
        assert!((power / stoch - 1.0).abs() < 0.05, "{power} vs {stoch}");
    }
}
