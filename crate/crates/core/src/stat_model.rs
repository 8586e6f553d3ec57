//! Closed-form statistics of the channel contributed by one rough surface:
//! the mirror-image (specular) part, the roughness factor, power laws, the
//! spatial correlation of the diffuse part and a sampler for it.
//!
//! All amplitudes are in *field units*: the ratio `E(u_rx)/E(u_tx)` with the
//! same normalization as [`crate::hf_oracle`], so a flat surface gives
//! `ζ e^{jκd}/d` for an unfolded path length `d`.

use std::f64::consts::PI;

use nalgebra::linalg::SymmetricEigen;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{incidence_cosines, mirror_image, LocalFrame, Vec3};
use crate::matrix::ComplexMatrix;
use crate::numerics::{composite_gauss_legendre, sinc};
use crate::surface::PlanarSurfaceSpec;

/// Directivity assumed for diffuse re-radiation from the surface (3 dB).
pub const SCATTERING_DIRECTIVITY: f64 = 2.0;

/// Eigenvalues below `-PSD_TOLERANCE` make a correlation matrix unusable;
/// anything between that and zero is clipped.
pub const PSD_TOLERANCE: f64 = 1e-6;

const SR_LIMIT: f64 = 0.1;
const SS_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Specular reflection, κσ_z ≤ 0.1.
    #[serde(rename = "SR")]
    Specular,
    #[serde(rename = "transient")]
    Transient,
    /// Surface scattering, κσ_z ≥ 10.
    #[serde(rename = "SS")]
    Scattering,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Specular => "SR",
            Regime::Transient => "transient",
            Regime::Scattering => "SS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeParams {
    pub g: f64,
    pub kappa_sigma_z: f64,
    pub regime: Regime,
}

/// `g = (κσ_z (cos θ_tx + cos θ_rx))²` and the regime label of `κσ_z`.
pub fn roughness_factor(kappa: f64, sigma_z: f64, cos_tx: f64, cos_rx: f64) -> RegimeParams {
    let ks = kappa * sigma_z;
    let regime = if ks <= SR_LIMIT {
        Regime::Specular
    } else if ks >= SS_LIMIT {
        Regime::Scattering
    } else {
        Regime::Transient
    };
    RegimeParams {
        g: (ks * (cos_tx + cos_rx)).powi(2),
        kappa_sigma_z: ks,
        regime,
    }
}

/// Statistics of one surface's contribution to a Tx→Rx link.
#[derive(Debug, Clone)]
pub struct SurfaceChannelStats {
    /// Specular amplitude `c_d(g)`.
    pub c_d: Complex64,
    /// Unit-modulus specular phase matrix, `N_rx × N_tx`.
    pub h_d: ComplexMatrix,
    /// Mean power `E|c_n(g)|²` of each diffuse entry.
    pub stoch_power: f64,
    /// Normalized spatial correlation over flattened `(m, n)`, index
    /// `m·N_tx + n`.
    pub covariance: ComplexMatrix,
    pub regime: RegimeParams,
}

impl SurfaceChannelStats {
    pub fn dims(&self) -> (usize, usize) {
        self.h_d.shape()
    }
}

fn check_antennas(tx: &[Vec3], rx: &[Vec3]) -> Result<()> {
    if tx.is_empty() || rx.is_empty() {
        return Err(Error::InvalidParameter("empty antenna array".into()));
    }
    Ok(())
}

fn same_side(surface: &PlanarSurfaceSpec, points: &[Vec3]) -> Result<()> {
    let mut side = 0.0;
    for &p in points {
        let d = surface.pose.signed_distance(p);
        if d == 0.0 {
            return Err(Error::GrazingGeometry(format!("{p:?} lies on the surface plane")));
        }
        if side == 0.0 {
            side = d.signum();
        } else if side != d.signum() {
            return Err(Error::NoReflectionPath(
                "antennas on opposite sides of the surface".into(),
            ));
        }
    }
    Ok(())
}

/// Roughness factor of a link, using the array-center incidence cosines.
pub fn link_roughness(
    surface: &PlanarSurfaceSpec,
    tx: &[Vec3],
    rx: &[Vec3],
    wavelength: f64,
) -> Result<RegimeParams> {
    check_antennas(tx, rx)?;
    let tx_c = Vec3::mean(tx).expect("non-empty");
    let rx_c = Vec3::mean(rx).expect("non-empty");
    let (cos_tx, cos_rx) = incidence_cosines(&surface.pose, tx_c, rx_c)?;
    Ok(roughness_factor(2.0 * PI / wavelength, surface.sigma_z, cos_tx, cos_rx))
}

/// Mirror-image component: `c_d = ζ e^{-g/2} / ‖u_vrx − u_tx‖` (array centers)
/// and `[H_d]_{m,n} = e^{jκ‖u_vrx,m − u_tx,n‖}`.
pub fn deterministic_component(
    surface: &PlanarSurfaceSpec,
    tx: &[Vec3],
    rx: &[Vec3],
    wavelength: f64,
) -> Result<(Complex64, ComplexMatrix)> {
    check_antennas(tx, rx)?;
    let all: Vec<Vec3> = tx.iter().chain(rx).copied().collect();
    same_side(surface, &all)?;
    let params = link_roughness(surface, tx, rx, wavelength)?;
    let tx_c = Vec3::mean(tx).expect("non-empty");
    let rx_c = Vec3::mean(rx).expect("non-empty");
    let d = mirror_image(rx_c, &surface.pose).distance(tx_c);
    if !surface_covers_specular_point(surface, tx_c, rx_c) {
        log::warn!("specular point of the link falls outside the surface; the mirror-image term assumes it does not");
    }
    let c_d = Complex64::new(surface.zeta * (-params.g / 2.0).exp() / d, 0.0);
    Ok((c_d, specular_phases(surface, tx, rx, wavelength)))
}

/// `[H_d]_{m,n}` through the virtual receivers.
pub fn specular_phases(surface: &PlanarSurfaceSpec, tx: &[Vec3], rx: &[Vec3], wavelength: f64) -> ComplexMatrix {
    let kappa = 2.0 * PI / wavelength;
    let vrx: Vec<Vec3> = rx.iter().map(|&p| mirror_image(p, &surface.pose)).collect();
    ComplexMatrix::from_fn(rx.len(), tx.len(), |m, n| {
        Complex64::from_polar(1.0, kappa * vrx[m].distance(tx[n]))
    })
}

/// `[H_d]_{m,n}` through the virtual transmitters.
pub fn specular_phases_via_virtual_tx(
    surface: &PlanarSurfaceSpec,
    tx: &[Vec3],
    rx: &[Vec3],
    wavelength: f64,
) -> ComplexMatrix {
    let kappa = 2.0 * PI / wavelength;
    let vtx: Vec<Vec3> = tx.iter().map(|&p| mirror_image(p, &surface.pose)).collect();
    ComplexMatrix::from_fn(rx.len(), tx.len(), |m, n| {
        Complex64::from_polar(1.0, kappa * rx[m].distance(vtx[n]))
    })
}

/// Whether the mirror path from `tx` to `rx` crosses the plane inside the
/// surface rectangle.
pub fn surface_covers_specular_point(surface: &PlanarSurfaceSpec, tx: Vec3, rx: Vec3) -> bool {
    let vrx = mirror_image(rx, &surface.pose);
    let a = surface.pose.signed_distance(tx);
    let b = surface.pose.signed_distance(vrx);
    if a == b {
        return false;
    }
    let t = a / (a - b);
    surface.contains_projection(tx + (vrx - tx) * t)
}

/// Effective area of an isotropic antenna, `λ²/(4π)`.
pub fn isotropic_antenna_area(wavelength: f64) -> f64 {
    wavelength * wavelength / (4.0 * PI)
}

/// Diffuse power of a fully rough surface, `|c_{n,∞}|²`:
///
/// `(4π/λ)² ζ² (A_rx D_r / 4π u_rx²)(A_r D_tx / 4π u_tx²)`
///
/// with `D_r = 2`, `A_r = L1·L2` and `u_tx`, `u_rx` the distances to the
/// surface center. The bracketed product is the power ratio `P_rx/P_tx`;
/// the `(4π/λ)²` factor converts it to field units.
pub fn isotropic_power(
    surface: &PlanarSurfaceSpec,
    u_tx: Vec3,
    u_rx: Vec3,
    a_rx: f64,
    d_tx: f64,
    wavelength: f64,
) -> f64 {
    let c = surface.pose.origin();
    let r_tx2 = (u_tx - c).norm_sq();
    let r_rx2 = (u_rx - c).norm_sq();
    let ratio = surface.zeta.powi(2)
        * (a_rx * SCATTERING_DIRECTIVITY / (4.0 * PI * r_rx2))
        * (surface.area() * d_tx / (4.0 * PI * r_tx2));
    ratio * (4.0 * PI / wavelength).powi(2)
}

/// `E|c_n(g)|² = (1 − e^{−g/2})² |c_{n,∞}|²`.
pub fn stochastic_power(g: f64, c_n_inf_sq: f64) -> f64 {
    (1.0 - (-g / 2.0).exp()).powi(2) * c_n_inf_sq
}

/// `sqrt(e^{−g} + (1 − e^{−g/2})² ratio_inf²)`, the predicted
/// `E|c|/|c_d(0)|`.
pub fn total_power_ratio(g: f64, ratio_inf: f64) -> f64 {
    ((-g).exp() + (1.0 - (-g / 2.0).exp()).powi(2) * ratio_inf * ratio_inf).sqrt()
}

/// Elevation extent of the surface seen from a local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSpec {
    theta_1: f64,
    theta_2: f64,
}

impl CorrelationSpec {
    pub fn new(theta_1: f64, theta_2: f64) -> Result<Self> {
        let lim = PI / 2.0 + 1e-12;
        if !(theta_1 < theta_2 && theta_1 >= -lim && theta_2 <= lim) {
            return Err(Error::InvalidParameter(format!(
                "elevation range [{theta_1}, {theta_2}]"
            )));
        }
        Ok(Self { theta_1, theta_2 })
    }

    /// Antennas aligned with the surface normal: `[−π/2, −π/2 + θ_c]`.
    pub fn aligned(theta_c: f64) -> Result<Self> {
        Self::new(-PI / 2.0, -PI / 2.0 + theta_c)
    }

    /// Antennas parallel to the surface: `[−θ_c/2, θ_c/2]`.
    pub fn perpendicular(theta_c: f64) -> Result<Self> {
        Self::new(-theta_c / 2.0, theta_c / 2.0)
    }

    pub fn theta_1(&self) -> f64 {
        self.theta_1
    }

    pub fn theta_2(&self) -> f64 {
        self.theta_2
    }

    pub fn theta_c(&self) -> f64 {
        self.theta_2 - self.theta_1
    }
}

/// `sinc((2d/λ) cos((θ2+θ1)/2) sin((θ2−θ1)/2))`, the correlation magnitude
/// under isotropic scattering (signed; its absolute value is `|R|`).
pub fn correlation_sinc(d: f64, spec: &CorrelationSpec, wavelength: f64) -> f64 {
    let (a, b) = (spec.theta_1, spec.theta_2);
    sinc(2.0 * d / wavelength * ((a + b) / 2.0).cos() * ((b - a) / 2.0).sin())
}

/// Direct quadrature of the isotropic-sector integral
/// `∫ e^{jκd sinθ} cosθ dθ / (sin θ2 − sin θ1)`, including its phase.
pub fn correlation_sector(d: f64, spec: &CorrelationSpec, wavelength: f64) -> Complex64 {
    let kappa = 2.0 * PI / wavelength;
    let span = spec.theta_c();
    let panels = ((kappa * d * span / PI).ceil() as usize + 2).max(4);
    let norm = spec.theta_2.sin() - spec.theta_1.sin();
    composite_gauss_legendre(spec.theta_1, spec.theta_2, panels, 10)
        .into_iter()
        .map(|(t, w)| Complex64::from_polar(w * t.cos(), kappa * d * t.sin()))
        .sum::<Complex64>()
        / norm
}

/// Weighting of surface points in the correlation integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationWeighting {
    /// Uniform over surface area, `dx dy / |U|`.
    #[default]
    Area,
    /// Uniform over the solid angle subtended at the receive pair (the
    /// transmit pair when the receive antennas coincide).
    SolidAngle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationOptions {
    pub weighting: CorrelationWeighting,
    /// Gauss–Legendre nodes per panel.
    pub order: usize,
    /// Minimum panels per surface axis.
    pub min_panels: usize,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        Self {
            weighting: CorrelationWeighting::Area,
            order: 8,
            min_panels: 4,
        }
    }
}

/// Quadrature of
/// `(1/|U|) ∬ e^{jκ(d_rx sin θ_rx(u) + d_tx sin θ_tx(u))} dx dy`
/// with each pair's local frame centered between the two antennas and its
/// z-axis pointing from the first antenna to the second.
pub fn correlation_numeric(
    surface: &PlanarSurfaceSpec,
    pair_tx: (Vec3, Vec3),
    pair_rx: (Vec3, Vec3),
    wavelength: f64,
) -> Result<Complex64> {
    correlation_numeric_with(surface, pair_tx, pair_rx, wavelength, &CorrelationOptions::default())
}

pub fn correlation_numeric_with(
    surface: &PlanarSurfaceSpec,
    pair_tx: (Vec3, Vec3),
    pair_rx: (Vec3, Vec3),
    wavelength: f64,
    opts: &CorrelationOptions,
) -> Result<Complex64> {
    check_assumptions(surface, &[pair_tx.0, pair_tx.1], &[pair_rx.0, pair_rx.1], wavelength);
    let rule = PairRule::new(surface, pair_tx, pair_rx, wavelength, opts, FrameOrigins::MIDPOINTS)?;
    Ok(rule.evaluate())
}

struct PairRule {
    kappa: f64,
    d_tx: f64,
    d_rx: f64,
    frame_tx: Option<LocalFrame>,
    frame_rx: Option<LocalFrame>,
    nodes: Vec<(Vec3, f64)>,
}

// Reference points for the pair frames: pair midpoints by default, or one
// fixed point per side so that a whole covariance matrix shares them.
#[derive(Clone, Copy)]
struct FrameOrigins {
    tx: Option<Vec3>,
    rx: Option<Vec3>,
}

impl FrameOrigins {
    const MIDPOINTS: Self = Self { tx: None, rx: None };
}

fn pair_frame(pair: (Vec3, Vec3), origin: Option<Vec3>) -> Option<LocalFrame> {
    let f = LocalFrame::for_pair(pair.0, pair.1)?;
    match origin {
        Some(o) => LocalFrame::new(o, f.z_axis()).ok(),
        None => Some(f),
    }
}

impl PairRule {
    fn new(
        surface: &PlanarSurfaceSpec,
        pair_tx: (Vec3, Vec3),
        pair_rx: (Vec3, Vec3),
        wavelength: f64,
        opts: &CorrelationOptions,
        origins: FrameOrigins,
    ) -> Result<Self> {
        let kappa = 2.0 * PI / wavelength;
        let d_tx = pair_tx.0.distance(pair_tx.1);
        let d_rx = pair_rx.0.distance(pair_rx.1);
        let frame_tx = pair_frame(pair_tx, origins.tx);
        let frame_rx = pair_frame(pair_rx, origins.rx);
        let weight_origin = match (origins.rx, origins.tx) {
            (Some(o), _) => o,
            (None, _) if d_rx > 0.0 => (pair_rx.0 + pair_rx.1) * 0.5,
            (None, Some(o)) => o,
            (None, None) => (pair_tx.0 + pair_tx.1) * 0.5,
        };

        // Panels so that each spans at most about π of integrand phase.
        let r_min = [pair_tx.0, pair_tx.1, pair_rx.0, pair_rx.1]
            .iter()
            .map(|&p| surface.pose.signed_distance(p).abs())
            .fold(f64::INFINITY, f64::min);
        if r_min == 0.0 {
            return Err(Error::GrazingGeometry("antenna on the surface plane".into()));
        }
        let phase_rate = kappa * (d_tx + d_rx) / r_min;
        let panels = |len: f64| ((phase_rate * len / PI).ceil() as usize).max(opts.min_panels);
        let (a, b) = (0.5 * surface.extent.0, 0.5 * surface.extent.1);
        let rule_s = composite_gauss_legendre(-a, a, panels(2.0 * a), opts.order);
        let rule_t = composite_gauss_legendre(-b, b, panels(2.0 * b), opts.order);
        let mut nodes = Vec::with_capacity(rule_s.len() * rule_t.len());
        for &(s, ws) in &rule_s {
            for &(t, wt) in &rule_t {
                nodes.push((surface.pose.point_at(s, t, 0.0), ws * wt));
            }
        }
        if opts.weighting == CorrelationWeighting::SolidAngle {
            let n = surface.pose.normal();
            for (u, w) in nodes.iter_mut() {
                let r = *u - weight_origin;
                *w *= n.dot(r).abs() / r.norm().powi(3);
            }
        }
        Ok(Self {
            kappa,
            d_tx,
            d_rx,
            frame_tx,
            frame_rx,
            nodes,
        })
    }

    fn evaluate(&self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut total = 0.0;
        for &(u, w) in &self.nodes {
            let mut phase = 0.0;
            if let Some(f) = &self.frame_rx {
                phase += self.d_rx * f.sin_elevation(u).unwrap_or(0.0);
            }
            if let Some(f) = &self.frame_tx {
                phase += self.d_tx * f.sin_elevation(u).unwrap_or(0.0);
            }
            acc += Complex64::from_polar(w, self.kappa * phase);
            total += w;
        }
        acc / total
    }
}

/// Range of elevation angles `[θ1, θ2]` of the surface rectangle seen from
/// `frame`.
pub fn elevation_range(surface: &PlanarSurfaceSpec, frame: &LocalFrame) -> Result<CorrelationSpec> {
    let o = frame.origin();
    let z = frame.z_axis();
    let sin_at = |u: Vec3| -> f64 { frame.sin_elevation(u).unwrap_or(0.0) };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;

    // The frame axis may pierce the rectangle, reaching sin θ = ±1.
    let n = surface.pose.normal();
    let nz = n.dot(z);
    if nz.abs() > 1e-15 {
        let t = n.dot(surface.pose.origin() - o) / nz;
        if surface.contains_projection(o + z * t) {
            if t > 0.0 {
                hi = 1.0;
            } else {
                lo = -1.0;
            }
        }
    }

    let corners = surface.corners();
    for k in 0..4 {
        let (p, q) = (corners[k], corners[(k + 1) % 4]);
        let at = |s: f64| sin_at(p + (q - p) * s);
        let samples = 64;
        let mut best_lo = (0.0, f64::INFINITY);
        let mut best_hi = (0.0, f64::NEG_INFINITY);
        for i in 0..=samples {
            let s = i as f64 / samples as f64;
            let v = at(s);
            if v < best_lo.1 {
                best_lo = (s, v);
            }
            if v > best_hi.1 {
                best_hi = (s, v);
            }
        }
        let step = 1.0 / samples as f64;
        let refined_hi = golden_max(&at, (best_hi.0 - step).max(0.0), (best_hi.0 + step).min(1.0));
        let refined_lo = -golden_max(|s| -at(s), (best_lo.0 - step).max(0.0), (best_lo.0 + step).min(1.0));
        hi = hi.max(best_hi.1).max(refined_hi);
        lo = lo.min(best_lo.1).min(refined_lo);
    }
    CorrelationSpec::new(lo.clamp(-1.0, 1.0).asin(), hi.clamp(-1.0, 1.0).asin())
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMethod {
    #[default]
    Numeric,
    Sinc,
}

/// Spatial correlation matrix over flattened `(m, n)` antenna pairs.
pub fn build_covariance(
    surface: &PlanarSurfaceSpec,
    tx: &[Vec3],
    rx: &[Vec3],
    wavelength: f64,
    method: CovarianceMethod,
) -> Result<ComplexMatrix> {
    build_covariance_with(surface, tx, rx, wavelength, method, &CorrelationOptions::default())
}

pub fn build_covariance_with(
    surface: &PlanarSurfaceSpec,
    tx: &[Vec3],
    rx: &[Vec3],
    wavelength: f64,
    method: CovarianceMethod,
    opts: &CorrelationOptions,
) -> Result<ComplexMatrix> {
    check_antennas(tx, rx)?;
    check_assumptions(surface, tx, rx, wavelength);
    let n_tx = tx.len();
    let size = rx.len() * n_tx;
    let pairs: Vec<(usize, usize)> = (0..size).flat_map(|i| (i + 1..size).map(move |j| (i, j))).collect();
    let origins = FrameOrigins {
        tx: Vec3::mean(tx),
        rx: Vec3::mean(rx),
    };
    let values: Vec<Complex64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (m, n) = (i / n_tx, i % n_tx);
            let (mp, np) = (j / n_tx, j % n_tx);
            let pt = (tx[n], tx[np]);
            let pr = (rx[m], rx[mp]);
            match method {
                CovarianceMethod::Numeric => Ok(PairRule::new(surface, pt, pr, wavelength, opts, origins)?.evaluate()),
                CovarianceMethod::Sinc => sinc_entry(surface, pt, pr, wavelength, origins),
            }
        })
        .collect::<Result<_>>()?;
    let mut r = ComplexMatrix::identity(size);
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        r[(i, j)] = v;
        r[(j, i)] = v.conj();
    }
    let min = min_eigenvalue(&r);
    if min < -PSD_TOLERANCE {
        return Err(Error::CorrelationInconsistent { min_eigenvalue: min });
    }
    Ok(r)
}

// Isotropic-sector correlation with the band-center phase e^{jκd(s1+s2)/2}.
fn sinc_entry(
    surface: &PlanarSurfaceSpec,
    pair_tx: (Vec3, Vec3),
    pair_rx: (Vec3, Vec3),
    wavelength: f64,
    origins: FrameOrigins,
) -> Result<Complex64> {
    let d_tx = pair_tx.0.distance(pair_tx.1);
    let d_rx = pair_rx.0.distance(pair_rx.1);
    let (pair, d, origin) = match (d_tx > 0.0, d_rx > 0.0) {
        (false, false) => return Ok(Complex64::new(1.0, 0.0)),
        (true, true) => {
            return Err(Error::InvalidParameter(
                "sinc correlation needs antenna pairs on one side only".into(),
            ))
        }
        (true, false) => (pair_tx, d_tx, origins.tx),
        (false, true) => (pair_rx, d_rx, origins.rx),
    };
    let frame = pair_frame(pair, origin).expect("distinct antennas");
    let spec = elevation_range(surface, &frame)?;
    let mid = (spec.theta_1.sin() + spec.theta_2.sin()) / 2.0;
    Ok(Complex64::from_polar(
        correlation_sinc(d, &spec, wavelength),
        2.0 * PI / wavelength * d * mid,
    ))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(r: &ComplexMatrix) -> f64 {
    if r.rows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(r.to_nalgebra())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn check_assumptions(surface: &PlanarSurfaceSpec, tx: &[Vec3], rx: &[Vec3], wavelength: f64) {
    let kappa = 2.0 * PI / wavelength;
    let center = surface.pose.origin();
    for (side, pts) in [("tx", tx), ("rx", rx)] {
        let Some(c) = Vec3::mean(pts) else { continue };
        let u = c.distance(center);
        let span = pts
            .iter()
            .flat_map(|a| pts.iter().map(move |b| a.distance(*b)))
            .fold(0.0, f64::max);
        if 2.0 * span * span / wavelength >= u {
            log::warn!("{side} aperture {span:.3e} m too wide for the local-frame approximation at {u:.3e} m");
        }
        if kappa * span * surface.sigma_z >= 0.1 * u {
            log::warn!("{side} aperture {span:.3e} m and roughness {:.3e} m break the small-phase assumption", surface.sigma_z);
        }
    }
}

/// Draws diffuse matrices with entry covariance `stoch_power · R`, reusing one
/// factorization of `R`.
#[derive(Debug, Clone)]
pub struct StochasticSampler {
    rows: usize,
    cols: usize,
    factor: ComplexMatrix,
    amplitude: f64,
}

impl StochasticSampler {
    pub fn new(stats: &SurfaceChannelStats) -> Result<Self> {
        let (rows, cols) = stats.dims();
        if stats.covariance.shape() != (rows * cols, rows * cols) {
            return Err(Error::DimensionMismatch(format!(
                "covariance {:?} for a {rows}x{cols} channel",
                stats.covariance.shape()
            )));
        }
        if !(stats.stoch_power >= 0.0 && stats.stoch_power.is_finite()) {
            return Err(Error::InvalidParameter(format!("stochastic power {}", stats.stoch_power)));
        }
        let factor = if stats.stoch_power > 0.0 {
            hermitian_sqrt(&stats.covariance)?
        } else {
            ComplexMatrix::zeros(rows * cols, rows * cols)
        };
        Ok(Self {
            rows,
            cols,
            factor,
            amplitude: stats.stoch_power.sqrt(),
        })
    }

    pub fn sample(&self, seed: u64) -> ComplexMatrix {
        if self.amplitude == 0.0 {
            return ComplexMatrix::zeros(self.rows, self.cols);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = complex_normal_vec(&mut rng, self.rows * self.cols);
        let x = self.factor.mul_vec(&z).expect("square factor");
        let data = x.into_iter().map(|v| v * self.amplitude).collect();
        ComplexMatrix::from_vec(self.rows, self.cols, data).expect("sizes agree")
    }
}

/// One draw of the diffuse component.
pub fn sample_stochastic(stats: &SurfaceChannelStats, seed: u64) -> Result<ComplexMatrix> {
    Ok(StochasticSampler::new(stats)?.sample(seed))
}

/// `n` i.i.d. CN(0, 1) values.
pub fn complex_normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

/// `L` with `L Lᴴ = R`, negative eigenvalues down to `-PSD_TOLERANCE`
/// clipped to zero.
pub fn hermitian_sqrt(r: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = SymmetricEigen::new(r.to_nalgebra());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE {
        return Err(Error::CorrelationInconsistent { min_eigenvalue: min });
    }
    let mut v = eig.eigenvectors;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        v.column_mut(k).scale_mut(s);
    }
    Ok(ComplexMatrix::from_nalgebra(&v))
}

/// Settings for [`surface_channel_stats`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsOptions {
    /// Receive effective area; `None` means an isotropic antenna.
    pub rx_area: Option<f64>,
    pub tx_directivity: f64,
    pub method: CovarianceMethod,
    pub correlation: CorrelationOptions,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            rx_area: None,
            tx_directivity: 1.0,
            method: CovarianceMethod::Numeric,
            correlation: CorrelationOptions::default(),
        }
    }
}

/// Full statistics of one surface for one link. The covariance is the
/// identity when the diffuse power is zero.
pub fn surface_channel_stats(
    surface: &PlanarSurfaceSpec,
    tx: &[Vec3],
    rx: &[Vec3],
    wavelength: f64,
    opts: &StatsOptions,
) -> Result<SurfaceChannelStats> {
    let (c_d, h_d) = deterministic_component(surface, tx, rx, wavelength)?;
    let regime = link_roughness(surface, tx, rx, wavelength)?;
    let tx_c = Vec3::mean(tx).expect("non-empty");
    let rx_c = Vec3::mean(rx).expect("non-empty");
    let a_rx = opts.rx_area.unwrap_or_else(|| isotropic_antenna_area(wavelength));
    let c_inf = isotropic_power(surface, tx_c, rx_c, a_rx, opts.tx_directivity, wavelength);
    let stoch_power = stochastic_power(regime.g, c_inf);
    let covariance = if stoch_power > 0.0 {
        build_covariance_with(surface, tx, rx, wavelength, opts.method, &opts.correlation)?
    } else {
        ComplexMatrix::identity(tx.len() * rx.len())
    };
    Ok(SurfaceChannelStats {
        c_d,
        h_d,
        stoch_power,
        covariance,
        regime,
    })
}
