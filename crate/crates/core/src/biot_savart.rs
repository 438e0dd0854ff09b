//! Velocity from vorticity by direct summation of the pulled-back Green
//! function over Lagrangian cells.
//!
//! Far cells are midpoint quadrature nodes. A cell whose center lies within
//! `near_field_radius_factor` cell sizes of the evaluation point is also
//! represented as a square of equal area split into `4^refinement_depth`
//! sub-cells; the two representations are blended with a smooth weight of
//! the distance, and sub-cells closer than the exclusion radius to the
//! evaluation point are faded out. Sub-cells that fall outside the sector are
//! folded back onto their mirror images, so every weight stays positive and
//! the edge velocity keeps the sign of the vorticity. The fold is smoothed in
//! a thin band along the boundary so the velocity stays smooth in the cell
//! positions.
//!
//! Summation order is the cell order, so a point gets the same floating-point
//! result regardless of how points are spread over threads.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{derivative_from_polar, power_from_polar, PhysicalPoint, SectorDomain};
use crate::error::{Error, Result};

/// A Lagrangian quadrature cell. Vorticity, area and the nominal shape are
/// fixed at construction; only the position is advected.
///
/// The shape is a rectangle with one side along the radial direction through
/// the cell's current position, which matches the polar mesh cells exactly at
/// time zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VortexCell {
    position: PhysicalPoint,
    omega: f64,
    area: f64,
    initial_position: PhysicalPoint,
    /// Radial and tangential side lengths.
    extent: [f64; 2],
}

impl VortexCell {
    /// A square cell.
    pub fn new(position: PhysicalPoint, omega: f64, area: f64) -> Self {
        let h = area.sqrt();
        VortexCell {
            position,
            omega,
            area,
            initial_position: position,
            extent: [h, h],
        }
    }

    /// A cell with the given radial length; the tangential width follows
    /// from the area.
    pub fn with_radial_length(position: PhysicalPoint, omega: f64, area: f64, radial: f64) -> Self {
        VortexCell {
            extent: [radial, area / radial],
            ..VortexCell::new(position, omega, area)
        }
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn diameter(&self) -> f64 {
        self.extent[0].hypot(self.extent[1])
    }

    pub fn position(&self) -> PhysicalPoint {
        self.position
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn initial_position(&self) -> PhysicalPoint {
        self.initial_position
    }

    /// Side of the square with the cell's area.
    pub fn size(&self) -> f64 {
        self.area.sqrt()
    }

    pub fn moved_to(&self, position: PhysicalPoint) -> Self {
        VortexCell { position, ..*self }
    }
}

pub const MAX_REFINEMENT_DEPTH: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    /// Near-field radius as a multiple of the cell diameter.
    pub near_field_radius_factor: f64,
    /// Near cells are split into about `4^refinement_depth` sub-cells,
    /// distributed between the two sides to keep them close to square.
    pub refinement_depth: u32,
    /// Sub-cells whose centers are closer than this to the evaluation point
    /// are dropped; contributions fade in up to four times this distance.
    /// Defaults to a quarter of the sub-cell size (square root of its area).
    pub exclusion_radius: Option<f64>,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            near_field_radius_factor: 1.0,
            refinement_depth: 2,
            exclusion_radius: None,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.near_field_radius_factor > 0.0) {
            return Err(Error::Config("near_field_radius_factor must be positive".into()));
        }
        if self.refinement_depth > MAX_REFINEMENT_DEPTH {
            return Err(Error::Config(format!(
                "refinement_depth {} exceeds {MAX_REFINEMENT_DEPTH}",
                self.refinement_depth
            )));
        }
        if let Some(r) = self.exclusion_radius {
            if !(r > 0.0) {
                return Err(Error::Config("exclusion_radius must be positive".into()));
            }
        }
        Ok(())
    }

    /// Side of the finest sub-cell of a cell of size `h`.
    pub fn finest_size(&self, h: f64) -> f64 {
        h / f64::from(1u32 << self.refinement_depth)
    }
}

/// Septic smoothstep: 0 below 0, 1 above 1, three continuous derivatives.
#[inline]
fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let t2 = t * t;
        t2 * t2 * (35.0 - 84.0 * t + 70.0 * t2 - 20.0 * t2 * t)
    }
}

/// Derivative of `smoothstep`.
#[inline]
fn smoothstep_slope(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        let s = t * (1.0 - t);
        140.0 * s * s * s
    }
}

/// `G_U(w, y)` in the paired form
/// `log |(w - y)(y w - 1) / ((w - conj y)(conj(y) w - 1))| / 2 pi`, rewritten
/// through `|w - conj y|^2 - |w - y|^2 = |y w - 1|^2 - |conj(y) w - 1|^2 = 4 w2 y2`
/// so that sources a few ulps from the boundary neither underflow nor
/// cancel.
#[inline]
fn green(w: Complex64, y: Complex64) -> f64 {
    let t = (w - y.conj()).norm();
    let s = (y.conj() * w - 1.0).norm();
    let a = (2.0 * w.im / t) * (2.0 * y.im / t);
    let b = (2.0 * w.im / s) * (2.0 * y.im / s);
    ((-a).ln_1p() + b.ln_1p()) / (2.0 * TAU)
}

/// `1 / z` without squaring the modulus (Smith's method), so tiny
/// denominators do not underflow.
#[inline]
fn recip(z: Complex64) -> Complex64 {
    if z.re.abs() >= z.im.abs() {
        let r = z.im / z.re;
        let d = z.re + z.im * r;
        Complex64::new(1.0 / d, -r / d)
    } else {
        let r = z.re / z.im;
        let d = z.re * r + z.im;
        Complex64::new(r / d, -1.0 / d)
    }
}

/// `2 pi (dG_U/dw1 - i dG_U/dw2)` at `w` for a source at `y`.
///
/// The four image terms pair up as
/// `2 i y2 [1 / ((w - y)(w - conj y)) - 1 / ((y w - 1)(conj(y) w - 1))]`,
/// which never forms the Kelvin image explicitly.
#[inline]
fn kernel(w: Complex64, y: Complex64) -> Complex64 {
    let yc = y.conj();
    let near = (w - y) * (w - yc);
    let far = (y * w - 1.0) * (yc * w - 1.0);
    Complex64::new(0.0, 2.0 * y.im) * (recip(near) - recip(far))
}

#[derive(Debug, Clone, Copy)]
struct SubSource {
    /// Sub-cell center folded into the sector, used for the exclusion distance.
    center: PhysicalPoint,
    /// Half-disk image of the (possibly reflected) center.
    mapped: Complex64,
    /// Signed share of the cell's circulation.
    weight: f64,
}

#[derive(Debug, Clone, Copy)]
struct Source {
    position: PhysicalPoint,
    weight: f64,
    /// Near-field radius.
    reach: f64,
    exclusion: f64,
    /// `None` on the boundary, where the kernel vanishes identically.
    mapped: Option<Complex64>,
    subs: (usize, usize),
}

/// Cells prepared for repeated velocity evaluation.
#[derive(Debug, Clone)]
pub struct VelocityField {
    dom: SectorDomain,
    sources: Vec<Source>,
    subs: Vec<SubSource>,
}

impl VelocityField {
    pub fn new(cells: &[VortexCell], dom: &SectorDomain, cfg: &QuadratureConfig) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Argument("velocity evaluation needs at least one cell".into()));
        }
        cfg.validate()?;
        let total = 1usize << (2 * cfg.refinement_depth);
        let mut sources = Vec::with_capacity(cells.len());
        let mut subs = Vec::with_capacity(cells.len() * total);
        for c in cells {
            let (r, phi) = dom.polar(c.position)?;
            let weight = c.omega * c.area;
            let start = subs.len();
            let extent = local_extent(c, r, dom.theta());
            // counts follow the nominal shape so they never jump as the cell moves
            let (n_a, n_b) = split_counts(total, c.extent);
            let share = weight / (n_a * n_b) as f64;
            let band_r = 0.5 * extent[0] / n_a as f64;
            let band_phi = if r > 0.0 { 0.5 * extent[1] / (n_b as f64 * r) } else { 0.0 };
            let (er, et) = if r > 0.0 {
                ([c.position.x1 / r, c.position.x2 / r], [-c.position.x2 / r, c.position.x1 / r])
            } else {
                ([1.0, 0.0], [0.0, 1.0])
            };
            for a in 0..n_a {
                let sa = ((a as f64 + 0.5) / n_a as f64 - 0.5) * extent[0];
                for b in 0..n_b {
                    let sb = ((b as f64 + 0.5) / n_b as f64 - 0.5) * extent[1];
                    let center = PhysicalPoint::new(
                        c.position.x1 + sa * er[0] + sb * et[0],
                        c.position.x2 + sa * er[1] + sb * et[1],
                    );
                    if let Some(image) = fold_into(dom, center, band_r, band_phi) {
                        if let Some(mapped) = mapped_interior(dom, image) {
                            subs.push(SubSource {
                                center: image,
                                mapped,
                                weight: share,
                            });
                        }
                    }
                }
            }
            sources.push(Source {
                position: c.position,
                weight,
                reach: cfg.near_field_radius_factor * extent[0].hypot(extent[1]),
                exclusion: cfg
                    .exclusion_radius
                    .unwrap_or_else(|| 0.25 * (c.area / (n_a * n_b) as f64).sqrt()),
                mapped: mapped_polar(dom, r, phi),
                subs: (start, subs.len()),
            });
        }
        Ok(VelocityField {
            dom: *dom,
            sources,
            subs,
        })
    }

    pub fn domain(&self) -> &SectorDomain {
        &self.dom
    }

    /// Velocity `u = perp grad_x sum_j G(x, y_j) omega_j A_j`.
    pub fn velocity(&self, x: PhysicalPoint) -> Result<[f64; 2]> {
        let (r, phi) = self.dom.polar(x)?;
        if r == 0.0 {
            return Ok([0.0, 0.0]);
        }
        let w = power_from_polar(r, phi, &self.dom).to_complex();
        let dfdz = derivative_from_polar(r, phi, &self.dom)?.complex;

        // The velocity is the perpendicular gradient of
        //   psi = sum_j [(1 - nu_j) w_j G(x, y_j) + nu_j sum_k sigma_k w_k G(x, c_k)]
        // with smooth weights nu_j (near share) and sigma_k (fade). Gradients
        // of G accumulate in `sum`; gradients of the weights times G values
        // accumulate in `grad`, so the field stays divergence-free.
        let mut sum = Complex64::new(0.0, 0.0);
        let mut grad = [0.0f64; 2];
        for s in &self.sources {
            let dx = x.x1 - s.position.x1;
            let dy = x.x2 - s.position.x2;
            let d2 = dx * dx + dy * dy;
            let outer = s.reach;
            if d2 >= outer * outer {
                if let Some(y) = s.mapped {
                    sum += kernel(w, y) * s.weight;
                }
                continue;
            }
            let d = d2.sqrt();
            // 1 inside half the near-field radius, 0 at the radius
            let t = (d - 0.5 * outer) / (0.5 * outer);
            let near_share = 1.0 - smoothstep(t);
            let in_band = near_share > 0.0 && near_share < 1.0;
            if near_share < 1.0 {
                if let Some(y) = s.mapped {
                    sum += kernel(w, y) * (s.weight * (1.0 - near_share));
                }
            }
            if near_share > 0.0 {
                let inner = s.exclusion;
                let mut near = Complex64::new(0.0, 0.0);
                let mut near_psi = 0.0;
                let mut fade_grad = [0.0f64; 2];
                for sub in &self.subs[s.subs.0..s.subs.1] {
                    let ex = x.x1 - sub.center.x1;
                    let ey = x.x2 - sub.center.x2;
                    let rho = ex.hypot(ey);
                    let u = (rho - inner) / (3.0 * inner);
                    let fade = smoothstep(u);
                    if fade == 0.0 {
                        continue;
                    }
                    near += kernel(w, sub.mapped) * (sub.weight * fade);
                    let fading = fade < 1.0;
                    if fading || in_band {
                        let g = sub.weight * green(w, sub.mapped);
                        if in_band {
                            near_psi += fade * g;
                        }
                        if fading {
                            let k = g * smoothstep_slope(u) / (3.0 * inner * rho);
                            fade_grad[0] += k * ex;
                            fade_grad[1] += k * ey;
                        }
                    }
                }
                sum += near * near_share;
                grad[0] += near_share * fade_grad[0];
                grad[1] += near_share * fade_grad[1];
                if in_band {
                    let far_psi = s.mapped.map_or(0.0, |y| s.weight * green(w, y));
                    // d(near_share)/dd = -S'(t) / (outer / 2)
                    let k = -(near_psi - far_psi) * smoothstep_slope(t) / (0.5 * outer * d);
                    grad[0] += k * dx;
                    grad[1] += k * dy;
                }
            }
        }
        // conj(u) = i f'(x) (dG/dw1 - i dG/dw2)
        let conj_u = Complex64::i() * dfdz * sum / TAU;
        Ok([conj_u.re + grad[1], -conj_u.im - grad[0]])
    }

    /// Evaluates every point; points are spread over the rayon pool.
    pub fn velocities(&self, points: &[PhysicalPoint]) -> Result<Vec<[f64; 2]>> {
        points.par_iter().map(|&p| self.velocity(p)).collect()
    }
}

/// Nominal rectangle at radius `r`. The radial side is smoothly capped by
/// `r`: a cell swept towards the corner is squeezed radially and stretched
/// tangentially, and an uncapped rectangle would reach past the corner.
/// The tangential side is capped by the arc length `r theta` so sub-cells
/// need at most one reflection across an edge.
fn local_extent(c: &VortexCell, r: f64, theta: f64) -> [f64; 2] {
    if r == 0.0 {
        return c.extent;
    }
    let cap = |len: f64, limit: f64| (len.powi(-4) + limit.powi(-4)).powf(-0.25);
    let radial = cap(c.extent[0], r);
    [radial, cap(c.area / radial, r * theta)]
}

fn split_counts(total: usize, extent: [f64; 2]) -> (usize, usize) {
    let aspect = extent[0] / extent[1];
    let n_a = ((total as f64 * aspect).sqrt().round() as usize).clamp(1, total);
    let n_b = ((total as f64 / n_a as f64).round() as usize).max(1);
    (n_a, n_b)
}

fn mapped_polar(dom: &SectorDomain, r: f64, phi: f64) -> Option<Complex64> {
    let y = power_from_polar(r, phi, dom);
    (y.w2 > 0.0).then(|| y.to_complex())
}

fn mapped_interior(dom: &SectorDomain, z: PhysicalPoint) -> Option<Complex64> {
    let (r, phi) = dom.polar(z).ok()?;
    mapped_polar(dom, r, phi)
}

/// `|x|` outside `[-band, band]`, an even polynomial inside that matches it
/// to the third derivative. Strictly positive, so a folded point never lands
/// on an edge.
fn soft_abs(x: f64, band: f64) -> f64 {
    let t = x / band;
    if t.abs() >= 1.0 {
        return x.abs();
    }
    let t2 = t * t;
    band * (5.0 + t2 * (15.0 + t2 * (-5.0 + t2))) / 16.0
}

/// Mirrors `z` into the open sector across the edge lines and the arc. The
/// reflections are smoothed within `band_r` of the arc and `band_phi` (an
/// angle) of the edges, so the image is a C3 function of `z` and the
/// quadrature stays smooth while sub-cells cross the boundary. `None` when
/// the point is too far outside for one reflection per side.
fn fold_into(dom: &SectorDomain, z: PhysicalPoint, band_r: f64, band_phi: f64) -> Option<PhysicalPoint> {
    let (theta, big_r) = (dom.theta(), dom.radius());
    let r = z.norm();
    if r == 0.0 {
        return Some(z);
    }
    // angle measured from the bisector, so both edges are reached without wrapping
    let (c, s) = ((0.5 * theta).cos(), (0.5 * theta).sin());
    let phi = 0.5 * theta + (z.x2 * c - z.x1 * s).atan2(z.x1 * c + z.x2 * s);
    let band_phi = band_phi.min(0.25 * theta);
    let phi = theta - soft_abs(theta - soft_abs(phi, band_phi), band_phi);
    let r = big_r - soft_abs(big_r - r, band_r.min(0.5 * big_r));
    (phi > 0.0 && phi < theta && r > 0.0).then(|| PhysicalPoint::from_polar(r, phi))
}

pub fn velocity_at(
    x: PhysicalPoint,
    cells: &[VortexCell],
    dom: &SectorDomain,
    cfg: &QuadratureConfig,
) -> Result<[f64; 2]> {
    VelocityField::new(cells, dom, cfg)?.velocity(x)
}

pub fn velocity_batch(
    points: &[PhysicalPoint],
    cells: &[VortexCell],
    dom: &SectorDomain,
    cfg: &QuadratureConfig,
) -> Result<Vec<[f64; 2]>> {
    VelocityField::new(cells, dom, cfg)?.velocities(points)
}
