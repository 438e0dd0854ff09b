//! Exact conformal map between a circular sector with its corner at the
//! origin and the closed unit upper half-disk.
//!
//! For a sector of opening angle `theta` and radius `R` the map is the power
//! map `f(z) = (z / R)^beta` with `beta = pi / theta`, taken on the principal
//! branch `arg z in [0, theta]`. Its inverse is `g(w) = R * w^(1 / beta)` on
//! `arg w in [0, pi]`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radius used when a configuration does not specify one. `2 * R < 1` keeps
/// the domain diameter below one for every opening angle.
pub const DEFAULT_RADIUS: f64 = 0.49;

/// Relative slack accepted when classifying round-off-level boundary points.
const MEMBERSHIP_TOL: f64 = 1e-12;

/// Circular sector `{z : 0 < arg z < theta, |z| < radius}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSector", into = "RawSector")]
pub struct SectorDomain {
    theta: f64,
    radius: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSector {
    theta: f64,
    #[serde(default = "default_radius")]
    radius: f64,
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS
}

impl TryFrom<RawSector> for SectorDomain {
    type Error = Error;

    fn try_from(raw: RawSector) -> Result<Self> {
        SectorDomain::new(raw.theta, raw.radius)
    }
}

impl From<SectorDomain> for RawSector {
    fn from(dom: SectorDomain) -> Self {
        RawSector {
            theta: dom.theta,
            radius: dom.radius,
        }
    }
}

impl SectorDomain {
    pub fn new(theta: f64, radius: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < TAU) {
            return Err(Error::Config(format!(
                "sector angle {theta} must lie in (0, 2*pi)"
            )));
        }
        if (theta - PI).abs() < 1e-12 {
            return Err(Error::Config(
                "sector angle pi is a straight boundary, not a corner".into(),
            ));
        }
        if !(radius > 0.0 && 2.0 * radius < 1.0) {
            return Err(Error::Config(format!(
                "sector radius {radius} must satisfy 0 < 2R < 1"
            )));
        }
        Ok(SectorDomain { theta, radius })
    }

    pub fn with_default_radius(theta: f64) -> Result<Self> {
        Self::new(theta, DEFAULT_RADIUS)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Map exponent `pi / theta`.
    pub fn beta(&self) -> f64 {
        PI / self.theta
    }

    /// Polar coordinates of `z` with the angle normalized into `[0, theta]`,
    /// or an error when `z` is outside the closed sector.
    pub fn polar(&self, z: PhysicalPoint) -> Result<(f64, f64)> {
        let r = z.norm();
        if !z.x1.is_finite() || !z.x2.is_finite() {
            return Err(self.outside(z, "non-finite coordinate"));
        }
        if r > self.radius * (1.0 + MEMBERSHIP_TOL) {
            return Err(self.outside(z, "beyond the arc"));
        }
        if r == 0.0 {
            return Ok((0.0, 0.0));
        }
        let mut phi = z.x2.atan2(z.x1);
        if phi < 0.0 {
            phi += TAU;
        }
        let slack = MEMBERSHIP_TOL * TAU;
        if phi <= self.theta {
            Ok((r.min(self.radius), phi))
        } else if phi <= self.theta + slack {
            Ok((r.min(self.radius), self.theta))
        } else if phi >= TAU - slack {
            Ok((r.min(self.radius), 0.0))
        } else {
            Err(self.outside(z, "angle outside [0, theta]"))
        }
    }

    pub fn contains(&self, z: PhysicalPoint) -> bool {
        self.polar(z).is_ok()
    }

    /// Nearest point of the closed sector to `z`.
    pub fn project(&self, z: PhysicalPoint) -> PhysicalPoint {
        if self.contains(z) {
            return z;
        }
        let mut candidates = Vec::with_capacity(3);
        for edge_angle in [0.0, self.theta] {
            let (c, s) = (edge_angle.cos(), edge_angle.sin());
            let t = (z.x1 * c + z.x2 * s).clamp(0.0, self.radius);
            candidates.push(PhysicalPoint::new(t * c, t * s));
        }
        let r = z.norm();
        if r > 0.0 {
            let mut phi = z.x2.atan2(z.x1);
            if phi < 0.0 {
                phi += TAU;
            }
            if phi <= self.theta {
                candidates.push(PhysicalPoint::new(
                    self.radius * phi.cos(),
                    self.radius * phi.sin(),
                ));
            }
        }
        candidates
            .into_iter()
            .min_by(|a, b| a.distance(z).total_cmp(&b.distance(z)))
            .expect("two edge candidates always exist")
    }

    /// Mirror image across the bisector `arg z = theta / 2`.
    pub fn reflect_across_bisector(&self, z: PhysicalPoint) -> PhysicalPoint {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        PhysicalPoint::new(c * z.x1 + s * z.x2, s * z.x1 - c * z.x2)
    }

    fn outside(&self, z: PhysicalPoint, reason: &'static str) -> Error {
        Error::OutsideSector {
            x1: z.x1,
            x2: z.x2,
            reason,
        }
    }
}

/// A point of the physical (sector) plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhysicalPoint {
    pub x1: f64,
    pub x2: f64,
}

impl PhysicalPoint {
    pub const CORNER: PhysicalPoint = PhysicalPoint { x1: 0.0, x2: 0.0 };

    pub const fn new(x1: f64, x2: f64) -> Self {
        PhysicalPoint { x1, x2 }
    }

    pub fn from_polar(r: f64, phi: f64) -> Self {
        PhysicalPoint::new(r * phi.cos(), r * phi.sin())
    }

    pub fn norm(&self) -> f64 {
        self.x1.hypot(self.x2)
    }

    pub fn distance(&self, other: PhysicalPoint) -> f64 {
        (self.x1 - other.x1).hypot(self.x2 - other.x2)
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.x1, self.x2)
    }
}

/// A point of the closed unit upper half-disk.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MappedPoint {
    pub w1: f64,
    pub w2: f64,
}

impl MappedPoint {
    pub const fn new(w1: f64, w2: f64) -> Self {
        MappedPoint { w1, w2 }
    }

    pub fn from_complex(w: Complex64) -> Self {
        MappedPoint::new(w.re, w.im)
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.w1, self.w2)
    }

    pub fn norm(&self) -> f64 {
        self.w1.hypot(self.w2)
    }
}

/// Complex derivative `f'(z)` together with the real Jacobian of
/// `(f1, f2)` with respect to `(x1, x2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapDerivative {
    pub complex: Complex64,
    /// Row-major `[[df1/dx1, df1/dx2], [df2/dx1, df2/dx2]]`.
    pub jacobian: [[f64; 2]; 2],
}

impl MapDerivative {
    fn from_complex(d: Complex64) -> Self {
        MapDerivative {
            complex: d,
            jacobian: [[d.re, -d.im], [d.im, d.re]],
        }
    }
}

/// `w = (z / R)^beta`.
pub fn to_halfdisk(z: PhysicalPoint, dom: &SectorDomain) -> Result<MappedPoint> {
    let (r, phi) = dom.polar(z)?;
    Ok(power_from_polar(r, phi, dom))
}

/// Power map from already-validated polar coordinates.
pub(crate) fn power_from_polar(r: f64, phi: f64, dom: &SectorDomain) -> MappedPoint {
    if r == 0.0 {
        return MappedPoint::new(0.0, 0.0);
    }
    let beta = dom.beta();
    let modulus = (r / dom.radius).powf(beta);
    let angle = beta * phi;
    MappedPoint::new(modulus * angle.cos(), modulus * angle.sin())
}

/// `z = R * w^(1 / beta)`.
pub fn from_halfdisk(w: MappedPoint, dom: &SectorDomain) -> Result<PhysicalPoint> {
    let rho = w.norm();
    if !w.w1.is_finite()
        || !w.w2.is_finite()
        || w.w2 < -MEMBERSHIP_TOL
        || rho > 1.0 + MEMBERSHIP_TOL
    {
        return Err(Error::OutsideHalfDisk { w1: w.w1, w2: w.w2 });
    }
    if rho == 0.0 {
        return Ok(PhysicalPoint::CORNER);
    }
    let mut psi = w.w2.atan2(w.w1);
    if psi < 0.0 {
        // round-off below the diameter: snap to the nearer end of [0, pi]
        psi = if w.w1 >= 0.0 { 0.0 } else { PI };
    }
    let beta = dom.beta();
    let r = dom.radius * rho.min(1.0).powf(1.0 / beta);
    Ok(PhysicalPoint::from_polar(r, psi / beta))
}

/// `f'(z) = (beta / R) (z / R)^(beta - 1)` and its Cauchy-Riemann Jacobian.
pub fn map_derivative(z: PhysicalPoint, dom: &SectorDomain) -> Result<MapDerivative> {
    let (r, phi) = dom.polar(z)?;
    derivative_from_polar(r, phi, dom)
}

pub(crate) fn derivative_from_polar(r: f64, phi: f64, dom: &SectorDomain) -> Result<MapDerivative> {
    let beta = dom.beta();
    if r == 0.0 {
        if beta < 1.0 {
            return Err(Error::SingularDerivative { beta });
        }
        return Ok(MapDerivative::from_complex(Complex64::new(0.0, 0.0)));
    }
    let modulus = beta / dom.radius * (r / dom.radius).powf(beta - 1.0);
    let angle = (beta - 1.0) * phi;
    Ok(MapDerivative::from_complex(Complex64::from_polar(
        modulus, angle,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn sector(theta: f64) -> SectorDomain {
        SectorDomain::new(theta, 0.5 - 1e-9).unwrap_or_else(|_| SectorDomain::with_default_radius(theta).unwrap())
    }

    fn random_interior(dom: &SectorDomain, rng: &mut StdRng) -> PhysicalPoint {
        let r = dom.radius() * rng.gen_range(0.01..0.99);
        let phi = dom.theta() * rng.gen_range(0.01..0.99);
        PhysicalPoint::from_polar(r, phi)
    }

    #[test]
    fn rejects_invalid_sectors() {
        assert!(SectorDomain::new(PI, 0.4).is_err());
        assert!(SectorDomain::new(0.0, 0.4).is_err());
        assert!(SectorDomain::new(TAU, 0.4).is_err());
        assert!(SectorDomain::new(1.0, 0.5).is_err());
        assert!(SectorDomain::new(1.0, -0.1).is_err());
        assert!(SectorDomain::new(4.0, 0.49).is_ok());
    }

    #[test]
    fn beta_is_recomputed_from_theta() {
        let dom = SectorDomain::with_default_radius(PI / 3.0).unwrap();
        assert_eq!(dom.beta(), PI / (PI / 3.0));
        assert_eq!(dom.radius(), DEFAULT_RADIUS);
    }

    #[test]
    fn right_angle_real_axis_point() {
        let dom = SectorDomain::new(PI / 2.0, 0.5 - 1e-12).unwrap();
        let w = to_halfdisk(PhysicalPoint::new(0.25, 0.0), &dom).unwrap();
        assert!((w.w1 - 0.25).abs() < 1e-10);
        assert_eq!(w.w2, 0.0);
    }

    #[test]
    fn corner_maps_to_origin() {
        for theta in [0.4, PI / 2.0, 2.0, 4.0] {
            let dom = SectorDomain::with_default_radius(theta).unwrap();
            let w = to_halfdisk(PhysicalPoint::CORNER, &dom).unwrap();
            assert_eq!(w, MappedPoint::new(0.0, 0.0));
            let z = from_halfdisk(MappedPoint::new(0.0, 0.0), &dom).unwrap();
            assert_eq!(z, PhysicalPoint::CORNER);
        }
    }

    #[test]
    fn sixty_degree_arc_midpoint_maps_to_i() {
        let dom = sector(PI / 3.0);
        let z = PhysicalPoint::from_polar(dom.radius(), PI / 6.0);
        let w = to_halfdisk(z, &dom).unwrap();
        assert!(w.w1.abs() < 1e-12 && (w.w2 - 1.0).abs() < 1e-12, "{w:?}");
    }

    #[test]
    fn inverse_of_i_is_the_diagonal() {
        let dom = SectorDomain::new(PI / 2.0, 0.5 - 1e-15).unwrap();
        let z = from_halfdisk(MappedPoint::new(0.0, 1.0), &dom).unwrap();
        let expected = 0.5 * std::f64::consts::FRAC_1_SQRT_2;
        assert!((z.x1 - expected).abs() < 1e-9 && (z.x2 - expected).abs() < 1e-9);
        assert!((z.x1 - 0.35355).abs() < 1e-5);
    }

    #[test]
    fn edges_and_arc_map_to_the_half_disk_boundary() {
        for theta in [PI / 3.0, PI / 2.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0] {
            let dom = SectorDomain::with_default_radius(theta).unwrap();
            for k in 1..20 {
                let r = dom.radius() * k as f64 / 20.0;
                let w0 = to_halfdisk(PhysicalPoint::new(r, 0.0), &dom).unwrap();
                assert!(w0.w2.abs() < 1e-12 && w0.w1 >= 0.0);
                let w1 = to_halfdisk(PhysicalPoint::from_polar(r, theta), &dom).unwrap();
                assert!(w1.w2.abs() < 1e-12 && w1.w1 <= 0.0, "{w1:?}");
                let phi = theta * k as f64 / 20.0;
                let wa = to_halfdisk(PhysicalPoint::from_polar(dom.radius(), phi), &dom).unwrap();
                assert!((wa.norm() - 1.0).abs() < 1e-12 && wa.w2 >= -1e-15);
            }
        }
    }

    #[test]
    fn outside_points_are_rejected() {
        let dom = SectorDomain::with_default_radius(PI / 3.0).unwrap();
        let err = to_halfdisk(PhysicalPoint::new(0.0, 0.2), &dom).unwrap_err();
        assert!(matches!(err, Error::OutsideSector { x1, x2, .. } if x1 == 0.0 && x2 == 0.2));
        assert!(to_halfdisk(PhysicalPoint::new(0.6, 0.0), &dom).is_err());
        assert!(from_halfdisk(MappedPoint::new(0.0, -0.1), &dom).is_err());
        assert!(from_halfdisk(MappedPoint::new(1.1, 0.0), &dom).is_err());
    }

    #[test]
    fn round_trip_on_random_interior_points() {
        let mut rng = StdRng::seed_from_u64(7);
        for theta in [PI / 3.0, PI / 2.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0] {
            let dom = SectorDomain::with_default_radius(theta).unwrap();
            for _ in 0..100 {
                let w = loop {
                    let w = MappedPoint::new(rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0));
                    if w.norm() < 1.0 {
                        break w;
                    }
                };
                let back = to_halfdisk(from_halfdisk(w, &dom).unwrap(), &dom).unwrap();
                assert!((back.w1 - w.w1).abs() < 1e-12 && (back.w2 - w.w2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_examples() {
        let dom = SectorDomain::new(PI / 2.0, 0.5 - 1e-15).unwrap();
        let d = map_derivative(PhysicalPoint::new(0.25, 0.0), &dom).unwrap();
        assert!((d.complex.re - 2.0).abs() < 1e-12 && d.complex.im.abs() < 1e-15);
        assert!((d.jacobian[0][0] - 2.0).abs() < 1e-12 && (d.jacobian[1][1] - 2.0).abs() < 1e-12);
        assert!(d.jacobian[0][1].abs() < 1e-15 && d.jacobian[1][0].abs() < 1e-15);

        let dom3 = SectorDomain::with_default_radius(PI / 3.0).unwrap();
        let d0 = map_derivative(PhysicalPoint::CORNER, &dom3).unwrap();
        assert_eq!(d0.complex, Complex64::new(0.0, 0.0));

        let reflex = SectorDomain::with_default_radius(4.0 * PI / 3.0).unwrap();
        assert!(matches!(
            map_derivative(PhysicalPoint::CORNER, &reflex),
            Err(Error::SingularDerivative { .. })
        ));
    }

    #[test]
    fn derivative_matches_central_differences() {
        let mut rng = StdRng::seed_from_u64(11);
        let h = 1e-6;
        for theta in [PI / 3.0, PI / 2.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0] {
            let dom = SectorDomain::with_default_radius(theta).unwrap();
            for _ in 0..20 {
                let z = random_interior(&dom, &mut rng);
                let d = map_derivative(z, &dom).unwrap();
                let fp = to_halfdisk(PhysicalPoint::new(z.x1 + h, z.x2), &dom).unwrap();
                let fm = to_halfdisk(PhysicalPoint::new(z.x1 - h, z.x2), &dom).unwrap();
                // df/dx1 = f' for a holomorphic map
                let fd = Complex64::new(fp.w1 - fm.w1, fp.w2 - fm.w2) / (2.0 * h);
                let rel = (fd - d.complex).norm() / d.complex.norm();
                assert!(rel < 1e-6, "theta {theta}: rel {rel}");
            }
        }
    }

    #[test]
    fn conformality_of_the_jacobian() {
        let mut rng = StdRng::seed_from_u64(3);
        let dom = SectorDomain::with_default_radius(2.0 * PI / 3.0).unwrap();
        for _ in 0..50 {
            let z = random_interior(&dom, &mut rng);
            let d = map_derivative(z, &dom).unwrap();
            let j = d.jacobian;
            let s = d.complex.norm_sqr();
            let jtj = [
                [j[0][0] * j[0][0] + j[1][0] * j[1][0], j[0][0] * j[0][1] + j[1][0] * j[1][1]],
                [j[0][1] * j[0][0] + j[1][1] * j[1][0], j[0][1] * j[0][1] + j[1][1] * j[1][1]],
            ];
            assert!((jtj[0][0] - s).abs() <= 1e-10 * s.max(1.0));
            assert!((jtj[1][1] - s).abs() <= 1e-10 * s.max(1.0));
            assert!(jtj[0][1].abs() <= 1e-10 * s.max(1.0));
        }
    }

    #[test]
    fn projection_lands_on_the_sector() {
        let dom = SectorDomain::with_default_radius(PI / 3.0).unwrap();
        let p = dom.project(PhysicalPoint::new(0.1, -0.01));
        assert_eq!(p, PhysicalPoint::new(0.1, 0.0));
        let q = dom.project(PhysicalPoint::new(0.6, 0.0));
        assert!((q.norm() - dom.radius()).abs() < 1e-15);
        assert!(dom.contains(dom.project(PhysicalPoint::new(-0.1, -0.1))));
    }

    #[test]
    fn bisector_reflection_swaps_edges() {
        let dom = SectorDomain::with_default_radius(2.0 * PI / 3.0).unwrap();
        let z = PhysicalPoint::new(0.2, 0.0);
        let m = dom.reflect_across_bisector(z);
        let expected = PhysicalPoint::from_polar(0.2, dom.theta());
        assert!(m.distance(expected) < 1e-15);
        let back = dom.reflect_across_bisector(m);
        assert!(back.distance(z) < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn modulus_law_is_exact(theta in 0.2f64..6.0, s in 0.0f64..1.0, a in 0.0f64..1.0) {
                prop_assume!((theta - PI).abs() > 1e-3);
                let dom = SectorDomain::with_default_radius(theta).unwrap();
                let z = PhysicalPoint::from_polar(s * dom.radius(), a * theta);
                let w = to_halfdisk(z, &dom).unwrap();
                let expected = (z.norm() / dom.radius()).powf(dom.beta());
                prop_assert!((w.norm() - expected).abs() < 1e-12);
                prop_assert!(w.w2 >= -1e-12);
            }
        }
    }
}
