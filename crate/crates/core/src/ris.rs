//! RIS-assisted multi-user downlink: tile focusing, beam planning over line
//! of sight and wall-reflected paths, SINR and sum rate.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{array_response, ArrayGeometry, LinkModel, PreparedLink};
use crate::error::{Error, Result};
use crate::geometry::{mirror_image, Vec3};
use crate::matrix::ComplexMatrix;
use crate::numerics::derive_seed;
use crate::stat_model::surface_covers_specular_point;
use crate::surface::PlanarSurfaceSpec;

#[derive(Debug, Clone)]
pub struct RisConfig {
    geometry: ArrayGeometry,
    n_a: usize,
    n_b: usize,
    element_spacing: f64,
    unit_cell_area: f64,
    tiles: Vec<Vec<usize>>,
}

impl RisConfig {
    /// `n_a × n_b` elements along `axis_a`, `axis_b`, split into `n_tiles`
    /// contiguous rectangular blocks of near-equal size. The larger factor
    /// of the tile grid runs along `axis_b`.
    pub fn new(
        center: Vec3,
        axis_a: Vec3,
        axis_b: Vec3,
        (n_a, n_b): (usize, usize),
        element_spacing: f64,
        unit_cell_area: f64,
        n_tiles: usize,
    ) -> Result<Self> {
        if !(unit_cell_area > 0.0) {
            return Err(Error::InvalidParameter(format!("unit-cell area {unit_cell_area}")));
        }
        let geometry = ArrayGeometry::upa(center, axis_a, axis_b, n_a, n_b, element_spacing)?;
        let (ta, tb) = tile_grid(n_tiles);
        if n_tiles == 0 || ta > n_a || tb > n_b {
            return Err(Error::InvalidParameter(format!("{n_tiles} tiles on a {n_a}x{n_b} RIS")));
        }
        if (n_a * n_b) % n_tiles != 0 {
            log::debug!("{n_tiles} tiles do not divide {} elements; tile sizes differ by one row or column", n_a * n_b);
        }
        let (ra, rb) = (blocks(n_a, ta), blocks(n_b, tb));
        let mut tiles = Vec::with_capacity(n_tiles);
        for a in &ra {
            for b in &rb {
                tiles.push(a.clone().flat_map(|i| b.clone().map(move |j| i * n_b + j)).collect());
            }
        }
        Ok(Self {
            geometry,
            n_a,
            n_b,
            element_spacing,
            unit_cell_area,
            tiles,
        })
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_a, self.n_b)
    }

    pub fn element_spacing(&self) -> f64 {
        self.element_spacing
    }

    pub fn unit_cell_area(&self) -> f64 {
        self.unit_cell_area
    }

    /// `Ω = 4π A_uc / λ²`.
    pub fn omega(&self, wavelength: f64) -> f64 {
        4.0 * PI * self.unit_cell_area / (wavelength * wavelength)
    }

    pub fn tiles(&self) -> &[Vec<usize>] {
        &self.tiles
    }

    pub fn len(&self) -> usize {
        self.geometry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.geometry.is_empty()
    }
}

// Most square factorization `a · b = n` with `a ≤ b`.
fn tile_grid(n: usize) -> (usize, usize) {
    let mut best = (1, n);
    for a in 1..=n {
        if a * a > n {
            break;
        }
        if n.is_multiple_of(a) {
            best = (a, n / a);
        }
    }
    best
}

fn blocks(n: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let len = n / parts + usize::from(i < n % parts);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Which paths the beamformers may use. The first half names the BS–RIS
/// link, the second the RIS–user links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Mode {
    LosLos,
    NlosLos,
    LosNlos,
    NlosNlos,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::NlosNlos, Mode::NlosLos, Mode::LosNlos, Mode::LosLos];

    pub fn label(self) -> &'static str {
        match self {
            Mode::LosLos => "LOS-LOS",
            Mode::NlosLos => "(n)LOS-LOS",
            Mode::LosNlos => "LOS-(n)LOS",
            Mode::NlosNlos => "(n)LOS-(n)LOS",
        }
    }

    pub fn from_label(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.label() == s)
    }

    pub fn bs_nlos(self) -> bool {
        matches!(self, Mode::NlosLos | Mode::NlosNlos)
    }

    pub fn user_nlos(self) -> bool {
        matches!(self, Mode::LosNlos | Mode::NlosNlos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Path {
    Los,
    /// Via the mirror image in the link's wall.
    Nlos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TileAssignment {
    pub user: usize,
    pub path: Path,
}

#[derive(Debug, Clone)]
pub struct BeamPlan {
    pub mode: Mode,
    /// Per-user BS weights, `N_t` each.
    pub bs_weights: Vec<Vec<Complex64>>,
    /// BS–RIS path serving each user.
    pub bs_paths: Vec<Path>,
    /// `ω_n` per RIS element, radians.
    pub ris_phases: Vec<f64>,
    pub tile_assignment: Vec<TileAssignment>,
}

impl BeamPlan {
    pub fn total_power(&self) -> f64 {
        self.bs_weights
            .iter()
            .map(|w| w.iter().map(|x| x.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// Same directions, total power `p_t` split equally.
    pub fn with_power(&self, p_t: f64) -> BeamPlan {
        let k = self.bs_weights.len() as f64;
        let mut out = self.clone();
        for w in &mut out.bs_weights {
            let norm = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            let s = if norm > 0.0 { (p_t / k).sqrt() / norm } else { 0.0 };
            w.iter_mut().for_each(|x| *x *= s);
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SumRateResult {
    pub per_user_sinr: Vec<f64>,
    pub sum_rate: f64,
    pub sum_rate_std: f64,
    pub transmit_power_dbm: f64,
}

/// `ω_n = −κ(‖u_n − source‖ + ‖target − u_n‖) mod 2π` on `subset`.
pub fn focus_phases(ris: &RisConfig, source: Vec3, target: Vec3, subset: &[usize], wavelength: f64) -> Vec<f64> {
    let kappa = 2.0 * PI / wavelength;
    let el = ris.geometry.elements();
    subset
        .iter()
        .map(|&n| (-kappa * (el[n].distance(source) + target.distance(el[n]))).rem_euclid(2.0 * PI))
        .collect()
}

/// `H_d + H_r diag(Ω e^{jω}) H_t`.
pub fn end_to_end_channel(
    h_d: &ComplexMatrix,
    h_r: &ComplexMatrix,
    h_t: &ComplexMatrix,
    omega: f64,
    phases: &[f64],
) -> Result<ComplexMatrix> {
    let n = phases.len();
    if h_r.cols() != n || h_t.rows() != n || h_d.shape() != (h_r.rows(), h_t.cols()) {
        return Err(Error::DimensionMismatch(format!(
            "H_d {:?}, H_r {:?}, {} RIS elements, H_t {:?}",
            h_d.shape(),
            h_r.shape(),
            n,
            h_t.shape()
        )));
    }
    let gains: Vec<Complex64> = phases.iter().map(|&w| Complex64::from_polar(omega, w)).collect();
    let scaled = ComplexMatrix::from_fn(h_r.rows(), n, |m, i| h_r[(m, i)] * gains[i]);
    Ok(&scaled.matmul(h_t)? + h_d)
}

/// One draw of every link of a [`RisScenario`].
#[derive(Debug, Clone)]
pub struct RisChannels {
    pub h_t: ComplexMatrix,
    pub h_r: Vec<ComplexMatrix>,
    pub h_d: Vec<ComplexMatrix>,
}

#[derive(Debug, Clone)]
pub struct RisScenario {
    pub wavelength: f64,
    pub bs: ArrayGeometry,
    pub ris: RisConfig,
    pub users: Vec<ArrayGeometry>,
    pub bs_ris: LinkModel,
    pub ris_users: Vec<LinkModel>,
    pub bs_users: Vec<LinkModel>,
    /// Reflector available to the BS–RIS link.
    pub bs_wall: Option<PlanarSurfaceSpec>,
    /// Reflector available to the RIS–user links.
    pub user_wall: Option<PlanarSurfaceSpec>,
    pub noise_power_w: f64,
}

impl RisScenario {
    pub fn validate(&self) -> Result<()> {
        let k = self.users.len();
        if k == 0 {
            return Err(Error::InvalidParameter("no users".into()));
        }
        if self.ris_users.len() != k || self.bs_users.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "{k} users, {} RIS links, {} BS links",
                self.ris_users.len(),
                self.bs_users.len()
            )));
        }
        if self.users.iter().any(|u| u.len() != 1) {
            return Err(Error::InvalidParameter("users must have a single antenna".into()));
        }
        if self.ris.tiles().len() < k {
            return Err(Error::InvalidParameter(format!("{} tiles for {k} users", self.ris.tiles().len())));
        }
        if !(self.noise_power_w > 0.0) {
            return Err(Error::InvalidParameter(format!("noise power {}", self.noise_power_w)));
        }
        Ok(())
    }

    pub fn prepare(&self) -> Result<PreparedRis> {
        self.validate()?;
        let prep = |l: &LinkModel| l.prepare(self.wavelength);
        Ok(PreparedRis {
            bs_ris: prep(&self.bs_ris)?,
            ris_users: self.ris_users.iter().map(prep).collect::<Result<_>>()?,
            bs_users: self.bs_users.iter().map(prep).collect::<Result<_>>()?,
        })
    }

    fn bs_focus(&self, path: Path) -> (Vec3, Vec3) {
        let (bs, ris) = (self.bs.center(), self.ris.geometry().center());
        match (path, &self.bs_wall) {
            (Path::Nlos, Some(w)) => (mirror_image(ris, &w.pose), mirror_image(bs, &w.pose)),
            _ => (ris, bs),
        }
    }

    fn user_target(&self, k: usize, path: Path) -> Vec3 {
        let u = self.users[k].center();
        match (path, &self.user_wall) {
            (Path::Nlos, Some(w)) => mirror_image(u, &w.pose),
            _ => u,
        }
    }
}

fn reflects(wall: &PlanarSurfaceSpec, a: Vec3, b: Vec3) -> bool {
    let (da, db) = (wall.pose.signed_distance(a), wall.pose.signed_distance(b));
    da * db > 0.0 && surface_covers_specular_point(wall, a, b)
}

#[derive(Debug, Clone)]
pub struct PreparedRis {
    bs_ris: PreparedLink,
    ris_users: Vec<PreparedLink>,
    bs_users: Vec<PreparedLink>,
}

impl PreparedRis {
    pub fn mean(&self) -> RisChannels {
        RisChannels {
            h_t: self.bs_ris.mean(),
            h_r: self.ris_users.iter().map(|l| l.mean()).collect(),
            h_d: self.bs_users.iter().map(|l| l.mean()).collect(),
        }
    }

    pub fn draw(&self, seed: u64) -> RisChannels {
        let k = self.ris_users.len() as u64;
        RisChannels {
            h_t: self.bs_ris.draw(derive_seed(seed, &[0])),
            h_r: (0..k).map(|i| self.ris_users[i as usize].draw(derive_seed(seed, &[1, i]))).collect(),
            h_d: (0..k).map(|i| self.bs_users[i as usize].draw(derive_seed(seed, &[2, i]))).collect(),
        }
    }

    pub fn draws(&self, n: usize, base_seed: u64) -> Vec<RisChannels> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.draw(derive_seed(base_seed, &[i])))
            .collect()
    }
}

/// Effective `1 × N_t` channel of each user.
pub fn effective_channels(ch: &RisChannels, omega: f64, phases: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    ch.h_r
        .iter()
        .zip(&ch.h_d)
        .map(|(h_r, h_d)| Ok(end_to_end_channel(h_d, h_r, &ch.h_t, omega, phases)?.row(0).to_vec()))
        .collect()
}

fn dot(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    h.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// `SINR_k = |h_k w_k|² / (Σ_{j≠k} |h_k w_j|² + σ²)`.
pub fn sinr(h: &[Vec<Complex64>], weights: &[Vec<Complex64>], noise: f64) -> Vec<f64> {
    h.iter()
        .enumerate()
        .map(|(k, hk)| {
            let mut interference = noise;
            let mut signal = 0.0;
            for (j, w) in weights.iter().enumerate() {
                let p = dot(hk, w).norm_sqr();
                if j == k {
                    signal = p;
                } else {
                    interference += p;
                }
            }
            signal / interference
        })
        .collect()
}

pub fn sum_rate(sinrs: &[f64]) -> f64 {
    sinrs.iter().map(|s| (1.0 + s).log2()).sum()
}

fn dbm(watts: f64) -> f64 {
    crate::units::watts_to_dbm(watts)
}

/// Sum rate of `plan` at total power `p_t`, averaged over the given draws.
pub fn evaluate_on_draws(
    scn: &RisScenario,
    draws: &[RisChannels],
    plan: &BeamPlan,
    p_t: f64,
) -> Result<SumRateResult> {
    let plan = plan.with_power(p_t);
    let omega = scn.ris.omega(scn.wavelength);
    let per_draw: Vec<Vec<f64>> = draws
        .par_iter()
        .map(|ch| Ok(sinr(&effective_channels(ch, omega, &plan.ris_phases)?, &plan.bs_weights, scn.noise_power_w)))
        .collect::<Result<_>>()?;
    let k = scn.users.len();
    let n = per_draw.len().max(1) as f64;
    let rates: Vec<f64> = per_draw.iter().map(|s| sum_rate(s)).collect();
    let mean = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(SumRateResult {
        per_user_sinr: (0..k).map(|i| per_draw.iter().map(|s| s[i]).sum::<f64>() / n).collect(),
        sum_rate: mean,
        sum_rate_std: var.sqrt(),
        transmit_power_dbm: dbm(p_t),
    })
}

/// Draws `n_channel_draws` channels from `base_seed` and evaluates `plan`.
pub fn evaluate_sum_rate(
    scn: &RisScenario,
    prepared: &PreparedRis,
    plan: &BeamPlan,
    p_t: f64,
    n_channel_draws: usize,
    base_seed: u64,
) -> Result<SumRateResult> {
    evaluate_on_draws(scn, &prepared.draws(n_channel_draws, base_seed), plan, p_t)
}

/// Beam plan for `mode`: matched BS beams toward the chosen focal point of
/// each user and greedy tile assignment maximizing the sum rate of the
/// mean channel at `p_t`.
pub fn plan_beams(scn: &RisScenario, prepared: &PreparedRis, mode: Mode, p_t: f64) -> Result<BeamPlan> {
    scn.validate()?;
    let k = scn.users.len();
    let ris_c = scn.ris.geometry().center();

    let bs_paths: Vec<Path> = if mode.bs_nlos() {
        let wall = scn
            .bs_wall
            .as_ref()
            .ok_or_else(|| Error::PathUnavailable("no wall for the BS-RIS link".into()))?;
        if !reflects(wall, scn.bs.center(), ris_c) {
            return Err(Error::PathUnavailable("wall does not reflect BS to RIS".into()));
        }
        vec![Path::Los, Path::Nlos]
    } else {
        vec![Path::Los]
    };
    let user_paths: Vec<Vec<Path>> = if mode.user_nlos() {
        let wall = scn
            .user_wall
            .as_ref()
            .ok_or_else(|| Error::PathUnavailable("no wall for the RIS-user links".into()))?;
        let opts: Vec<Vec<Path>> = scn
            .users
            .iter()
            .map(|u| {
                if reflects(wall, ris_c, u.center()) {
                    vec![Path::Los, Path::Nlos]
                } else {
                    vec![Path::Los]
                }
            })
            .collect();
        if opts.iter().all(|o| o.len() == 1) {
            return Err(Error::PathUnavailable("wall reflects toward no user".into()));
        }
        opts
    } else {
        vec![vec![Path::Los]; k]
    };

    let mean = prepared.mean();
    let omega = scn.ris.omega(scn.wavelength);
    let n_t = scn.bs.len();
    let beam = |path: Path| -> Vec<Complex64> {
        let a = array_response(&scn.bs, scn.bs_focus(path).0, scn.wavelength);
        let s = (p_t / k as f64 / n_t as f64).sqrt();
        a.iter().map(|x| x.conj() * s).collect()
    };
    let beams: Vec<(Path, Vec<Complex64>)> = bs_paths.iter().map(|&p| (p, beam(p))).collect();

    // Contribution of tile t, configured for (owner, bs path, user path), to
    // every user's effective channel.
    let tiles = scn.ris.tiles();
    let contribution = |t: usize, owner: usize, bp: Path, up: Path| -> (Vec<f64>, Vec<Vec<Complex64>>) {
        let phases = focus_phases(&scn.ris, scn.bs_focus(bp).1, scn.user_target(owner, up), &tiles[t], scn.wavelength);
        let g = (0..k)
            .map(|user| {
                let mut acc = vec![Complex64::new(0.0, 0.0); n_t];
                for (&n, &w) in tiles[t].iter().zip(&phases) {
                    let c = mean.h_r[user][(0, n)] * Complex64::from_polar(omega, w);
                    for (a, h) in acc.iter_mut().zip(mean.h_t.row(n)) {
                        *a += c * h;
                    }
                }
                acc
            })
            .collect();
        (phases, g)
    };
    let mut table = Vec::new(); // [t][owner][bp][up]
    for t in 0..tiles.len() {
        let mut per_owner = Vec::new();
        for owner in 0..k {
            let mut per_bp = Vec::new();
            for &(bp, _) in &beams {
                per_bp.push(user_paths[owner].iter().map(|&up| (up, contribution(t, owner, bp, up))).collect::<Vec<_>>());
            }
            per_owner.push(per_bp);
        }
        table.push(per_owner);
    }

    let objective = |h: &[Vec<Complex64>], w: &[Vec<Complex64>]| sum_rate(&sinr(h, w, scn.noise_power_w));
    let mut best: Option<(f64, BeamPlan)> = None;
    for combo in path_combos(beams.len(), k) {
        let weights: Vec<Vec<Complex64>> = combo.iter().map(|&b| beams[b].1.clone()).collect();
        let mut h: Vec<Vec<Complex64>> = mean.h_d.iter().map(|m| m.row(0).to_vec()).collect();
        let mut assigned: Vec<Option<(usize, usize)>> = vec![None; tiles.len()];
        let mut served = vec![false; k];
        for _ in 0..tiles.len() {
            let free = assigned.iter().filter(|a| a.is_none()).count();
            let unserved = served.iter().filter(|s| !**s).count();
            let mut pick: Option<(f64, usize, usize, usize)> = None;
            for t in (0..tiles.len()).filter(|&t| assigned[t].is_none()) {
                for owner in 0..k {
                    if free == unserved && served[owner] {
                        continue;
                    }
                    for (ui, (_, (_, g))) in table[t][owner][combo[owner]].iter().enumerate() {
                        let trial: Vec<Vec<Complex64>> =
                            h.iter().zip(g).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
                        let v = objective(&trial, &weights);
                        if pick.is_none_or(|p| v > p.0) {
                            pick = Some((v, t, owner, ui));
                        }
                    }
                }
            }
            let (_, t, owner, ui) = pick.expect("a free tile remains");
            let g = &table[t][owner][combo[owner]][ui].1 .1;
            for (a, b) in h.iter_mut().zip(g) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
            assigned[t] = Some((owner, ui));
            served[owner] = true;
        }
        let value = objective(&h, &weights);
        if best.as_ref().is_none_or(|b| value > b.0) {
            let mut ris_phases = vec![0.0; scn.ris.len()];
            let mut tile_assignment = Vec::with_capacity(tiles.len());
            for (t, a) in assigned.iter().enumerate() {
                let (owner, ui) = a.expect("all tiles assigned");
                let (up, (phases, _)) = &table[t][owner][combo[owner]][ui];
                for (&n, &w) in tiles[t].iter().zip(phases) {
                    ris_phases[n] = w;
                }
                tile_assignment.push(TileAssignment { user: owner, path: *up });
            }
            best = Some((
                value,
                BeamPlan {
                    mode,
                    bs_weights: weights,
                    bs_paths: combo.iter().map(|&b| beams[b].0).collect(),
                    ris_phases,
                    tile_assignment,
                },
            ));
        }
    }
    Ok(best.expect("at least one combination").1)
}

// Every assignment of one of `n` BS paths to each of `k` users, all-LOS first.
fn path_combos(n: usize, k: usize) -> Vec<Vec<usize>> {
    let total = n.pow(k as u32);
    (0..total)
        .map(|mut i| {
            (0..k)
                .map(|_| {
                    let d = i % n;
                    i /= n;
                    d
                })
                .collect()
        })
        .collect()
}

/// First power from which every further step gains less than `tol` bits/s/Hz;
/// `None` if the curve is still climbing at the end.
pub fn saturation_threshold(powers_dbm: &[f64], rates: &[f64], tol: f64) -> Option<f64> {
    let n = rates.len();
    if n < 2 {
        return None;
    }
    let mut start = n - 1;
    while start > 0 && rates[start] - rates[start - 1] < tol {
        start -= 1;
    }
    (start < n - 1).then(|| powers_dbm[start])
}
