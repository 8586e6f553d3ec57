//! Brute-force Huygens–Fresnel reflection integral over a rough surface
//! realization. Used as ground truth for the statistical model.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::matrix::ComplexMatrix;
use crate::numerics::pairwise_sum;
use crate::surface::{sample_realization, PlanarSurfaceSpec, RoughRealization};

/// Largest admissible quadrature step as a fraction of the wavelength.
pub const MAX_STEP_PER_WAVELENGTH: f64 = 1.0 / 8.0;

/// One oracle evaluation `E(u_rx,m)/E(u_tx,n)` for a given realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HfSample {
    pub value: Complex64,
    pub tx_index: usize,
    pub rx_index: usize,
    pub realization_seed: u64,
}

/// Evaluates the integral for a single Tx/Rx pair.
pub fn hf_integral(
    realization: &RoughRealization,
    u_tx: Vec3,
    u_rx: Vec3,
    wavelength: f64,
) -> Result<Complex64> {
    Ok(hf_matrix(realization, &[u_tx], &[u_rx], wavelength)?[(0, 0)])
}

/// Evaluates the integral for every (Rx, Tx) pair; entry `(m, n)` couples
/// `rx[m]` and `tx[n]`.
///
/// Rows of the quadrature grid are summed in parallel and combined with a
/// fixed pairwise reduction, so the result does not depend on the number of
/// worker threads.
pub fn hf_matrix(
    realization: &RoughRealization,
    tx: &[Vec3],
    rx: &[Vec3],
    wavelength: f64,
) -> Result<ComplexMatrix> {
    let spec = realization.spec();
    check_resolution(spec, wavelength)?;
    let side = illuminated_side(spec, tx, rx)?;
    let pose = spec.pose;
    let kappa = 2.0 * PI / wavelength;
    let (n1, n2) = realization.dims();
    let (n_rx, n_tx) = (rx.len(), tx.len());
    let tx_perp: Vec<f64> = tx.iter().map(|&p| side * pose.signed_distance(p)).collect();
    let rx_perp: Vec<f64> = rx.iter().map(|&p| side * pose.signed_distance(p)).collect();

    let row_sums: Vec<Vec<Complex64>> = (0..n1)
        .into_par_iter()
        .map(|i| {
            let points: Vec<Vec3> = (0..n2).map(|j| realization.cell_point(i, j)).collect();
            let tx_f: Vec<Vec<Complex64>> = tx
                .iter()
                .zip(&tx_perp)
                .map(|(&p, &z)| points.iter().map(|&u| secondary_wave(u, p, z, kappa)).collect())
                .collect();
            let mut out = Vec::with_capacity(n_rx * n_tx);
            let mut buf = vec![Complex64::new(0.0, 0.0); n2];
            for (&q, &z) in rx.iter().zip(&rx_perp) {
                let rx_f: Vec<Complex64> =
                    points.iter().map(|&u| secondary_wave(u, q, z, kappa)).collect();
                for tf in &tx_f {
                    for ((b, a), r) in buf.iter_mut().zip(tf).zip(&rx_f) {
                        *b = a * r;
                    }
                    out.push(pairwise_sum(&buf));
                }
            }
            out
        })
        .collect();

    // ζ/(jλ) · ΔA
    let prefactor = Complex64::new(0.0, -spec.zeta / wavelength) * spec.grid_step * spec.grid_step;
    let mut column = vec![Complex64::new(0.0, 0.0); n1];
    let mut h = ComplexMatrix::zeros(n_rx, n_tx);
    for m in 0..n_rx {
        for n in 0..n_tx {
            let k = m * n_tx + n;
            for (c, row) in column.iter_mut().zip(&row_sums) {
                *c = row[k];
            }
            h[(m, n)] = prefactor * pairwise_sum(&column);
        }
    }
    Ok(h)
}

// (z⊥ / r²) e^{jκr} for the hop between surface point `u` and antenna `p`.
#[inline]
fn secondary_wave(u: Vec3, p: Vec3, perp: f64, kappa: f64) -> Complex64 {
    let r2 = (u - p).norm_sq();
    let r = r2.sqrt();
    let (s, c) = (kappa * r).sin_cos();
    Complex64::new(c, s) * (perp / r2)
}

fn check_resolution(spec: &PlanarSurfaceSpec, wavelength: f64) -> Result<()> {
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(Error::InvalidParameter(format!("wavelength {wavelength}")));
    }
    let limit = wavelength * MAX_STEP_PER_WAVELENGTH;
    if spec.grid_step > limit * (1.0 + 1e-12) {
        return Err(Error::QuadratureResolution {
            grid_step: spec.grid_step,
            limit,
        });
    }
    Ok(())
}

// +1 when all antennas are on the normal side, -1 when all are behind it.
fn illuminated_side(spec: &PlanarSurfaceSpec, tx: &[Vec3], rx: &[Vec3]) -> Result<f64> {
    let mut side = 0.0;
    for &p in tx.iter().chain(rx) {
        if !p.is_finite() {
            return Err(Error::InvalidParameter("antenna position not finite".into()));
        }
        let d = spec.pose.signed_distance(p);
        if d == 0.0 {
            return Err(Error::GrazingGeometry(format!("{p:?} lies on the surface plane")));
        }
        if side == 0.0 {
            side = d.signum();
        } else if d.signum() != side {
            return Err(Error::NoReflectionPath(
                "antennas on opposite sides of the surface".into(),
            ));
        }
    }
    Ok(side)
}

/// One oracle matrix per realization; realization `i` uses seed
/// `base_seed + i`.
pub fn monte_carlo_channel(
    spec: &PlanarSurfaceSpec,
    tx: &[Vec3],
    rx: &[Vec3],
    wavelength: f64,
    n_realizations: usize,
    base_seed: u64,
) -> Result<Vec<ComplexMatrix>> {
    if n_realizations == 0 {
        return Err(Error::InvalidParameter("need at least one realization".into()));
    }
    check_resolution(spec, wavelength)?;
    illuminated_side(spec, tx, rx)?;
    (0..n_realizations)
        .into_par_iter()
        .map(|i| {
            let r = sample_realization(spec, base_seed.wrapping_add(i as u64))?;
            hf_matrix(&r, tx, rx, wavelength)
        })
        .collect()
}

/// Flattens per-realization matrices into samples.
pub fn samples(matrices: &[ComplexMatrix], base_seed: u64) -> Vec<HfSample> {
    let mut out = Vec::new();
    for (i, h) in matrices.iter().enumerate() {
        for m in 0..h.rows() {
            for n in 0..h.cols() {
                out.push(HfSample {
                    value: h[(m, n)],
                    tx_index: n,
                    rx_index: m,
                    realization_seed: base_seed.wrapping_add(i as u64),
                });
            }
        }
    }
    out
}

/// Writes `seed,m,n,re,im` rows.
pub fn write_samples_csv<W: Write>(mut w: W, samples: &[HfSample]) -> Result<()> {
    writeln!(w, "seed,m,n,re,im")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{:e},{:e}",
            s.realization_seed, s.rx_index, s.tx_index, s.value.re, s.value.im
        )?;
    }
    Ok(())
}
