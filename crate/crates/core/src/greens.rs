//! Dirichlet Green function of the unit upper half-disk by the method of
//! images, and its conformal pullback to the sector.
//!
//! On the half-disk `U` the source `y` is paired with three images: the
//! Kelvin image `y* = y / |y|^2` (negative), the reflection `conj(y)`
//! (negative) and the reflected Kelvin image `conj(y)* = 1 / y` (positive):
//!
//! ```text
//! G_U(x, y) = (1 / 2pi) (log|x - y| - log|x - y*| - log|conj(x) - y| + log|conj(x) - y*|)
//! ```
//!
//! Gradients are carried in the complex form `dG/dx1 - i dG/dx2`, which for
//! a log potential `log|x - a|` is simply `1 / (x - a)`. Pulling back through
//! the holomorphic map multiplies this complex gradient by `f'(x)`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{rngs::StdRng, Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::conformal::{map_derivative, to_halfdisk, MappedPoint, PhysicalPoint, SectorDomain};
use crate::error::{Error, Result};

/// Sources closer than this to the origin of the half-disk have no usable
/// Kelvin image.
pub const MIN_SOURCE_MODULUS: f64 = 1e-14;

const HALF_DISK_TOL: f64 = 1e-12;

/// A half-disk source with its three images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSet {
    pub y: Complex64,
    /// Kelvin image `y / |y|^2`.
    pub y_star: Complex64,
    /// Reflection `(y1, -y2)`.
    pub y_conj: Complex64,
    /// Reflection of the Kelvin image.
    pub y_conj_star: Complex64,
}

impl ImageSet {
    pub fn new(y: MappedPoint) -> Result<Self> {
        let modulus = y.norm();
        if !(modulus >= MIN_SOURCE_MODULUS) {
            return Err(Error::SourceAtCorner { modulus });
        }
        Ok(Self::from_complex_unchecked(y.to_complex()))
    }

    pub(crate) fn from_complex_unchecked(y: Complex64) -> Self {
        let y_conj = y.conj();
        ImageSet {
            y,
            y_star: y_conj.inv(),
            y_conj,
            y_conj_star: y.inv(),
        }
    }

    /// `2 pi (dG_U/dx1 - i dG_U/dx2)` at the half-disk point `x`.
    #[inline]
    pub(crate) fn scaled_complex_gradient(&self, x: Complex64) -> Complex64 {
        (x - self.y).inv() - (x - self.y_star).inv() - (x - self.y_conj).inv()
            + (x - self.y_conj_star).inv()
    }
}

/// The two logarithmic parts of the half-disk Green function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenParts {
    /// `log(|x - y| / |conj(x) - y|)`.
    pub g_near: f64,
    /// `log(|conj(x) - y*| / |x - y*|)`.
    pub g_far: f64,
    /// `(g_near + g_far) / 2pi`.
    pub total: f64,
}

fn check_half_disk(w: MappedPoint) -> Result<()> {
    if w.w1.is_finite() && w.w2.is_finite() && w.w2 >= -HALF_DISK_TOL && w.norm() <= 1.0 + HALF_DISK_TOL {
        Ok(())
    } else {
        Err(Error::OutsideHalfDisk { w1: w.w1, w2: w.w2 })
    }
}

/// Dirichlet Green function of the unit upper half-disk.
pub fn green_halfdisk(x: MappedPoint, y: MappedPoint) -> Result<GreenParts> {
    check_half_disk(x)?;
    check_half_disk(y)?;
    let images = ImageSet::new(y)?;
    if x == y {
        return Err(Error::Coincident { x1: x.w1, x2: x.w2 });
    }
    let xc = x.to_complex();
    let xb = xc.conj();
    let g_near = ((xc - images.y).norm() / (xb - images.y).norm()).ln();
    let g_far = ((xb - images.y_star).norm() / (xc - images.y_star).norm()).ln();
    Ok(GreenParts {
        g_near,
        g_far,
        total: (g_near + g_far) / TAU,
    })
}

/// Gradient of `G_U(x, y)` with respect to `x`.
pub fn grad_green_halfdisk(x: MappedPoint, y: MappedPoint) -> Result<[f64; 2]> {
    check_half_disk(x)?;
    check_half_disk(y)?;
    let images = ImageSet::new(y)?;
    if x == y {
        return Err(Error::Coincident { x1: x.w1, x2: x.w2 });
    }
    let c = images.scaled_complex_gradient(x.to_complex()) / TAU;
    Ok([c.re, -c.im])
}

/// `G_Omega(x, y) = G_U(f(x), f(y))`.
pub fn green_domain(x: PhysicalPoint, y: PhysicalPoint, dom: &SectorDomain) -> Result<GreenParts> {
    if x == y {
        return Err(Error::Coincident { x1: x.x1, x2: x.x2 });
    }
    green_halfdisk(to_halfdisk(x, dom)?, to_halfdisk(y, dom)?)
}

/// `grad_x G_Omega(x, y) = J(x)^T grad G_U(f(x), f(y))`.
pub fn grad_green_domain(x: PhysicalPoint, y: PhysicalPoint, dom: &SectorDomain) -> Result<[f64; 2]> {
    if x == y {
        return Err(Error::Coincident { x1: x.x1, x2: x.x2 });
    }
    let g = grad_green_halfdisk(to_halfdisk(x, dom)?, to_halfdisk(y, dom)?)?;
    let j = map_derivative(x, dom)?.jacobian;
    Ok([
        j[0][0] * g[0] + j[1][0] * g[1],
        j[0][1] * g[0] + j[1][1] * g[1],
    ])
}

/// Residuals of the half-disk Green function identities over random samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub boundary_residual: f64,
    pub symmetry_residual: f64,
    /// Max difference between `green_domain` and the same value computed
    /// through the complex power and the image formula in the form
    /// `(w - y)(w - 1/y) / ((w - conj y)(w - 1/conj y))`.
    pub pullback_residual: f64,
    /// Max |5-point Laplacian| of `G_Omega(., y)` at step [`HARMONICITY_STEP`].
    pub harmonicity_residual: f64,
    /// `harmonicity_residual` divided by the same residual at half the step.
    pub harmonicity_ratio: f64,
    pub samples: usize,
}

pub const HARMONICITY_STEP: f64 = 1e-3;

const SELFTEST_SEED: u64 = 0x5eed_62ee;

fn random_interior(dom: &SectorDomain, rng: &mut StdRng, lo: f64, hi: f64) -> PhysicalPoint {
    let r = dom.radius() * rng.gen_range(lo..hi);
    let phi = dom.theta() * rng.gen_range(lo..hi);
    PhysicalPoint::from_polar(r, phi)
}

fn random_boundary(dom: &SectorDomain, rng: &mut StdRng) -> PhysicalPoint {
    let s: f64 = rng.gen_range(0.0..1.0);
    match rng.gen_range(0..3) {
        0 => PhysicalPoint::new(s * dom.radius(), 0.0),
        1 => PhysicalPoint::from_polar(s * dom.radius(), dom.theta()),
        _ => PhysicalPoint::from_polar(dom.radius(), s * dom.theta()),
    }
}

/// Second evaluation path for the pullback: complex `powf` instead of the
/// polar map, and the Kelvin images written as reciprocals.
fn composite_green(x: PhysicalPoint, y: PhysicalPoint, dom: &SectorDomain) -> f64 {
    let f = |z: PhysicalPoint| (z.to_complex() / dom.radius()).powf(dom.beta());
    let (a, b) = (f(x), f(y));
    let num = (a - b) * (a - b.inv());
    let den = (a - b.conj()) * (a - b.conj().inv());
    (num.norm() / den.norm()).ln() / TAU
}

/// Sampled well-separated interior pairs used by the harmonicity check.
fn harmonic_pairs(dom: &SectorDomain, samples: usize) -> Vec<(PhysicalPoint, PhysicalPoint)> {
    let mut rng = StdRng::seed_from_u64(SELFTEST_SEED ^ 0x4a);
    let mut pairs = Vec::with_capacity(samples);
    while pairs.len() < samples {
        let x = random_interior(dom, &mut rng, 0.25, 0.75);
        let y = random_interior(dom, &mut rng, 0.1, 0.9);
        if x.distance(y) > 0.2 * dom.radius() {
            pairs.push((x, y));
        }
    }
    pairs
}

/// Max over sampled pairs of the 5-point Laplacian of `G_Omega(., y)` at `x`.
pub fn harmonicity_residual(dom: &SectorDomain, samples: usize, step: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for (x, y) in harmonic_pairs(dom, samples) {
        let g = |dx: f64, dy: f64| -> Result<f64> {
            Ok(green_domain(PhysicalPoint::new(x.x1 + dx, x.x2 + dy), y, dom)?.total)
        };
        let lap = (g(step, 0.0)? + g(-step, 0.0)? + g(0.0, step)? + g(0.0, -step)? - 4.0 * g(0.0, 0.0)?)
            / (step * step);
        worst = worst.max(lap.abs());
    }
    Ok(worst)
}

pub fn green_selftest(dom: &SectorDomain, samples: usize) -> Result<SelftestReport> {
    if samples == 0 {
        return Err(Error::Argument("green_selftest needs at least one sample".into()));
    }
    let mut rng = StdRng::seed_from_u64(SELFTEST_SEED);
    let mut boundary_residual = 0.0f64;
    let mut symmetry_residual = 0.0f64;
    let mut pullback_residual = 0.0f64;
    for _ in 0..samples {
        let y = to_halfdisk(random_interior(dom, &mut rng, 0.01, 0.99), dom)?;
        let xb = to_halfdisk(random_boundary(dom, &mut rng), dom)?;
        if xb != y {
            boundary_residual = boundary_residual.max(green_halfdisk(xb, y)?.total.abs());
        }
        let x = to_halfdisk(random_interior(dom, &mut rng, 0.01, 0.99), dom)?;
        if x != y {
            let forward = green_halfdisk(x, y)?.total;
            let backward = green_halfdisk(y, x)?.total;
            symmetry_residual = symmetry_residual.max((forward - backward).abs());
        }
        let p = random_interior(dom, &mut rng, 0.01, 0.99);
        let q = random_interior(dom, &mut rng, 0.01, 0.99);
        if p != q {
            let direct = green_domain(p, q, dom)?.total;
            pullback_residual = pullback_residual.max((direct - composite_green(p, q, dom)).abs());
        }
    }
    let coarse = harmonicity_residual(dom, samples.min(200), HARMONICITY_STEP)?;
    let fine = harmonicity_residual(dom, samples.min(200), 0.5 * HARMONICITY_STEP)?;
    Ok(SelftestReport {
        boundary_residual,
        symmetry_residual,
        pullback_residual,
        harmonicity_residual: coarse,
        harmonicity_ratio: coarse / fine,
        samples,
    })
}

/// Angle of the bisector-normal direction used by reflection checks.
#[cfg(test)]
fn bisector_normal(dom: &SectorDomain) -> [f64; 2] {
    let a = 0.5 * dom.theta() + std::f64::consts::FRAC_PI_2;
    [a.cos(), a.sin()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sectors() -> Vec<SectorDomain> {
        [PI / 3.0, PI / 2.0, 2.0 * PI / 3.0]
            .into_iter()
            .map(|t| SectorDomain::with_default_radius(t).unwrap())
            .collect()
    }

    /// Independent composite: one complex log-modulus of a product ratio.
    #[test]
    fn vanishes_on_the_diameter() {
        let g = green_halfdisk(MappedPoint::new(0.5, 0.0), MappedPoint::new(0.3, 0.4)).unwrap();
        assert_eq!(g.total, 0.0);
    }

    #[test]
    fn vanishes_on_the_arc() {
        let g = green_halfdisk(MappedPoint::new(0.6, 0.8), MappedPoint::new(0.2, 0.3)).unwrap();
        assert!(g.total.abs() < 1e-15, "{}", g.total);
    }

    #[test]
    fn value_on_the_imaginary_axis() {
        // |x-y| = 1/4, |x-y*| = 7/2, |conj(x)-y| = 3/4, |conj(x)-y*| = 9/2
        let expected = (3.0f64 / 7.0).ln() / TAU;
        let g = green_halfdisk(MappedPoint::new(0.0, 0.5), MappedPoint::new(0.0, 0.25)).unwrap();
        assert!((g.total - expected).abs() < 1e-15);
        assert!((g.total + 0.13486).abs() < 1e-5);
    }

    /// Finite-difference Dirichlet solve of `Lap u = delta_y` on a staircase
    /// approximation of the half-disk.
    #[test]
    fn agrees_with_a_finite_difference_dirichlet_solve() {
        let n = 160usize;
        let h = 1.0 / n as f64;
        let (nx, ny) = (2 * n + 1, n + 1);
        let idx = |i: usize, j: usize| j * nx + i;
        let coord = |i: usize, j: usize| (i as f64 * h - 1.0, j as f64 * h);
        let inside = |i: usize, j: usize| {
            let (a, b) = coord(i, j);
            j > 0 && a * a + b * b < 1.0 - 1e-12
        };
        let mut u = vec![0.0f64; nx * ny];
        let mut rhs = vec![0.0f64; nx * ny];
        let (si, sj) = (n, n / 4);
        rhs[idx(si, sj)] = 1.0 / (h * h);
        let omega = 2.0 / (1.0 + (PI * h).sin());
        for _ in 0..3000 {
            for j in 1..ny - 1 {
                for i in 1..nx - 1 {
                    if !inside(i, j) {
                        continue;
                    }
                    let nb = u[idx(i + 1, j)] + u[idx(i - 1, j)] + u[idx(i, j + 1)] + u[idx(i, j - 1)];
                    let gs = 0.25 * (nb - h * h * rhs[idx(i, j)]);
                    u[idx(i, j)] += omega * (gs - u[idx(i, j)]);
                }
            }
        }
        let fd = u[idx(n, n / 2)];
        let exact = green_halfdisk(MappedPoint::new(0.0, 0.5), MappedPoint::new(0.0, 0.25))
            .unwrap()
            .total;
        assert!((fd - exact).abs() < 5e-3, "fd {fd} vs exact {exact}");
    }

    #[test]
    fn rejects_degenerate_arguments() {
        let y = MappedPoint::new(0.1, 0.2);
        assert!(matches!(green_halfdisk(y, y), Err(Error::Coincident { .. })));
        assert!(matches!(
            green_halfdisk(y, MappedPoint::new(0.0, 0.0)),
            Err(Error::SourceAtCorner { .. })
        ));
        assert!(matches!(
            green_halfdisk(MappedPoint::new(0.0, -0.5), y),
            Err(Error::OutsideHalfDisk { .. })
        ));
        let dom = SectorDomain::with_default_radius(1.0).unwrap();
        assert!(grad_green_domain(PhysicalPoint::new(0.1, 0.01), PhysicalPoint::CORNER, &dom).is_err());
    }

    #[test]
    fn image_set_geometry() {
        let s = ImageSet::new(MappedPoint::new(0.3, 0.2)).unwrap();
        assert!((s.y_star.norm() - 1.0 / s.y.norm()).abs() < 1e-14);
        assert!(s.y_conj.im < 0.0);
        assert!((s.y_conj_star - s.y_star.conj()).norm() < 1e-15);
    }

    #[test]
    fn pullback_matches_independent_composite() {
        let mut rng = StdRng::seed_from_u64(21);
        for dom in sectors() {
            for _ in 0..500 {
                let x = random_interior(&dom, &mut rng, 0.01, 0.99);
                let y = random_interior(&dom, &mut rng, 0.01, 0.99);
                let a = green_domain(x, y, &dom).unwrap().total;
                let b = composite_green(x, y, &dom);
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                assert!(a < 0.0);
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = StdRng::seed_from_u64(5);
        let h = 1e-6;
        for dom in sectors() {
            let mut checked = 0;
            while checked < 20 {
                let x = random_interior(&dom, &mut rng, 0.1, 0.9);
                let y = random_interior(&dom, &mut rng, 0.1, 0.9);
                if x.distance(y) < 0.05 * dom.radius() {
                    continue;
                }
                let g = grad_green_domain(x, y, &dom).unwrap();
                let val = |dx: f64, dy: f64| {
                    green_domain(PhysicalPoint::new(x.x1 + dx, x.x2 + dy), y, &dom).unwrap().total
                };
                let fd = [
                    (val(h, 0.0) - val(-h, 0.0)) / (2.0 * h),
                    (val(0.0, h) - val(0.0, -h)) / (2.0 * h),
                ];
                let err = (g[0] - fd[0]).hypot(g[1] - fd[1]);
                assert!(err < 1e-6 * g[0].hypot(g[1]).max(1.0), "err {err}");
                checked += 1;
            }
        }
    }

    #[test]
    fn gradient_on_the_edge_matches_one_sided_differences() {
        let h = 1e-7;
        for dom in sectors() {
            let y = PhysicalPoint::from_polar(0.4 * dom.radius(), 0.5 * dom.theta());
            for k in 1..10 {
                let x = PhysicalPoint::new(0.08 * k as f64 * dom.radius(), 0.0);
                let g = grad_green_domain(x, y, &dom).unwrap();
                let val = |dx: f64, dy: f64| {
                    green_domain(PhysicalPoint::new(x.x1 + dx, x.x2 + dy), y, &dom).unwrap().total
                };
                // G vanishes on the edge, so the tangential derivative is zero
                let tangential = (val(h, 0.0) - val(-h, 0.0)) / (2.0 * h);
                let normal = (-3.0 * val(0.0, 0.0) + 4.0 * val(0.0, h) - val(0.0, 2.0 * h)) / (2.0 * h);
                assert!((g[0] - tangential).abs() < 1e-5);
                assert!(g[0].abs() < 1e-12);
                assert!((g[1] - normal).abs() < 1e-5 * normal.abs().max(1.0), "{} vs {normal}", g[1]);
                // G < 0 inside and vanishes on the edge
                assert!(g[1] < 0.0);
            }
        }
    }

    #[test]
    fn bisector_reflection_flips_the_normal_component() {
        for dom in sectors() {
            let n = bisector_normal(&dom);
            let y = PhysicalPoint::from_polar(0.3 * dom.radius(), 0.5 * dom.theta());
            for k in 1..8 {
                let x = PhysicalPoint::from_polar(0.1 * k as f64 * dom.radius(), 0.15 * dom.theta());
                let xm = dom.reflect_across_bisector(x);
                let g = grad_green_domain(x, y, &dom).unwrap();
                let gm = grad_green_domain(xm, y, &dom).unwrap();
                let a = g[0] * n[0] + g[1] * n[1];
                let b = gm[0] * n[0] + gm[1] * n[1];
                assert!((a + b).abs() < 1e-9 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn kelvin_term_stays_away_from_small_points() {
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..2000 {
            let x = MappedPoint::new(rng.gen_range(-0.5..0.5), rng.gen_range(0.0..0.5));
            if x.norm() > 0.5 {
                continue;
            }
            let y = loop {
                let y = MappedPoint::new(rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0));
                if y.norm() < 1.0 && y.norm() > 1e-6 {
                    break y;
                }
            };
            let s = ImageSet::new(y).unwrap();
            assert!((x.to_complex() - s.y_star).norm() >= 0.5);
        }
    }

    #[test]
    fn selftest_residuals() {
        for dom in sectors() {
            let report = green_selftest(&dom, 1000).unwrap();
            assert!(report.boundary_residual < 1e-12, "{report:?}");
            assert!(report.symmetry_residual < 1e-12, "{report:?}");
            assert!(report.pullback_residual < 1e-12, "{report:?}");
            assert!((3.0..5.0).contains(&report.harmonicity_ratio), "{report:?}");
        }
        assert!(green_selftest(&sectors()[0], 0).is_err());
    }

    #[test]
    fn selftest_report_serializes_flat() {
        let dom = SectorDomain::with_default_radius(PI / 2.0).unwrap();
        let v = serde_json::to_value(green_selftest(&dom, 10).unwrap()).unwrap();
        for key in ["boundary_residual", "symmetry_residual", "pullback_residual", "harmonicity_residual", "samples"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn half_disk_point() -> impl Strategy<Value = MappedPoint> {
            (0.01f64..0.99, 0.01f64..PI - 0.01).prop_map(|(r, a)| MappedPoint::new(r * a.cos(), r * a.sin()))
        }

        proptest! {
            #[test]
            fn symmetric_and_negative(x in half_disk_point(), y in half_disk_point()) {
                prop_assume!((x.to_complex() - y.to_complex()).norm() > 1e-6);
                let a = green_halfdisk(x, y).unwrap().total;
                let b = green_halfdisk(y, x).unwrap().total;
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!(a < 0.0);
            }
        }
    }
}
