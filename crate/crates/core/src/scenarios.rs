//! Initial vorticity fields, the polar quadrature mesh, and the odd
//! reflection used for reflex corners.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::biot_savart::VortexCell;
use crate::conformal::{PhysicalPoint, SectorDomain};
use crate::error::{Error, Result};

const ANGLE_TOL: f64 = 1e-12;

/// The four initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// `|x| + 1` on an acute or right corner.
    #[serde(rename = "A_abs_plus_one")]
    AbsPlusOne,
    /// `min(|x| / eps + 1, 2)` on a right corner.
    #[serde(rename = "B_capped_ramp")]
    CappedRamp,
    /// `|x|` on an obtuse corner.
    #[serde(rename = "C_abs")]
    Abs,
    /// Distance to the bisector, odd across it, on a reflex corner.
    #[serde(rename = "D_odd_reflection")]
    OddReflection,
}

impl ScenarioKind {
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioKind::AbsPlusOne => "A_abs_plus_one",
            ScenarioKind::CappedRamp => "B_capped_ramp",
            ScenarioKind::Abs => "C_abs",
            ScenarioKind::OddReflection => "D_odd_reflection",
        }
    }

    /// Kind matching the angle regime; `B` is never picked automatically.
    pub fn for_angle(theta: f64) -> Result<Self> {
        if theta > 0.0 && theta <= FRAC_PI_2 + ANGLE_TOL {
            Ok(ScenarioKind::AbsPlusOne)
        } else if theta > FRAC_PI_2 && theta < PI {
            Ok(ScenarioKind::Abs)
        } else if theta > PI && theta < TAU {
            Ok(ScenarioKind::OddReflection)
        } else {
            Err(Error::Config(format!("no scenario covers angle {theta}")))
        }
    }

    /// Whether boundary markers are expected to reach the corner in finite time.
    pub fn is_finite_time(&self) -> bool {
        matches!(self, ScenarioKind::Abs | ScenarioKind::OddReflection)
    }
}

/// Radial breakpoint layout of the polar mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RadialGrading {
    /// `r_i = R i / n_r`.
    Uniform,
    /// `r_0 = 0` and `r_1 .. r_n` geometric from `inner * R` to `R`.
    Geometric { inner: f64 },
}

impl Default for RadialGrading {
    fn default() -> Self {
        RadialGrading::Geometric { inner: 1e-4 }
    }
}

impl RadialGrading {
    pub fn breakpoints(&self, radius: f64, n_r: usize) -> Vec<f64> {
        match *self {
            RadialGrading::Uniform => (0..=n_r).map(|i| radius * i as f64 / n_r as f64).collect(),
            RadialGrading::Geometric { inner } => {
                let mut r = Vec::with_capacity(n_r + 1);
                r.push(0.0);
                if n_r == 1 {
                    r.push(radius);
                    return r;
                }
                for i in 1..=n_r {
                    let e = (n_r - i) as f64 / (n_r - 1) as f64;
                    r.push(radius * inner.powf(e));
                }
                r
            }
        }
    }
}

/// Angular breakpoint layout of the polar mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AngularGrading {
    /// `phi_j = theta j / n_phi`.
    Uniform,
    /// Uniform rows of width `theta / (n_phi - rows)`, except that the row
    /// next to the edge `arg = 0` is replaced by a row `[0, inner theta]`
    /// and `rows` geometric rows up to the first uniform breakpoint. `rows`
    /// defaults to `n_phi / 2`.
    ///
    /// Fluid reaching the corner at time `t` starts exponentially close to
    /// the inflow edge; without these rows the corner region runs out of
    /// cells.
    EdgeRefined {
        inner: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rows: Option<usize>,
    },
}

impl Default for AngularGrading {
    fn default() -> Self {
        AngularGrading::EdgeRefined { inner: 1e-8, rows: None }
    }
}

impl AngularGrading {
    pub fn breakpoints(&self, theta: f64, n_phi: usize) -> Vec<f64> {
        let uniform = |n: usize| (0..=n).map(|j| theta * j as f64 / n as f64).collect::<Vec<_>>();
        match *self {
            AngularGrading::EdgeRefined { inner, rows } if n_phi >= 2 => {
                let n_g = rows.unwrap_or(n_phi / 2).clamp(1, n_phi - 1);
                let n_u = n_phi - n_g;
                let first = theta / n_u as f64;
                let lo = inner * theta;
                let mut phi = vec![0.0];
                for k in 0..n_g {
                    phi.push(lo * (first / lo).powf(k as f64 / n_g as f64));
                }
                phi.extend(uniform(n_u).into_iter().skip(1));
                phi
            }
            _ => uniform(n_phi),
        }
    }
}

fn default_markers() -> Vec<f64> {
    vec![0.02, 0.04, 0.08, 0.16]
}

fn default_epsilon() -> f64 {
    0.02
}

fn default_mesh() -> (usize, usize) {
    (32, 32)
}

/// One experiment's initial data and discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Ramp width for kind `B`.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Opening angle of the full corner.
    pub theta: f64,
    /// Polar resolution `(n_r, n_phi)`.
    #[serde(default = "default_mesh")]
    pub mesh: (usize, usize),
    #[serde(default)]
    pub grading: RadialGrading,
    #[serde(default)]
    pub angular: AngularGrading,
    /// Marker starting distances from the corner, as fractions of `R`.
    #[serde(default = "default_markers")]
    pub marker_starts: Vec<f64>,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, theta: f64) -> Self {
        ScenarioSpec {
            kind,
            epsilon: default_epsilon(),
            theta,
            mesh: default_mesh(),
            grading: RadialGrading::default(),
            angular: AngularGrading::default(),
            marker_starts: default_markers(),
        }
    }

    /// Checks the angle gates and parameter ranges against `radius`.
    pub fn validate(&self, radius: f64) -> Result<()> {
        let t = self.theta;
        let ok = match self.kind {
            ScenarioKind::AbsPlusOne | ScenarioKind::CappedRamp => t > 0.0 && t <= FRAC_PI_2 + ANGLE_TOL,
            ScenarioKind::Abs => t > FRAC_PI_2 + ANGLE_TOL && t < PI,
            ScenarioKind::OddReflection => t > PI && t < TAU,
        };
        if !ok {
            return Err(Error::Config(format!(
                "scenario {} does not apply to angle {t}",
                self.kind.label()
            )));
        }
        if self.kind == ScenarioKind::CappedRamp && !(self.epsilon > 0.0 && self.epsilon < 0.2 * radius) {
            return Err(Error::Config(format!(
                "ramp width {} must lie in (0, 0.2 R)",
                self.epsilon
            )));
        }
        if self.mesh.0 == 0 || self.mesh.1 == 0 {
            return Err(Error::Config("mesh resolution must be at least 1 x 1".into()));
        }
        if let RadialGrading::Geometric { inner } = self.grading {
            if !(inner > 0.0 && inner < 1.0) {
                return Err(Error::Config("geometric grading needs 0 < inner < 1".into()));
            }
        }
        if let AngularGrading::EdgeRefined { inner, rows } = self.angular {
            let n_g = rows.unwrap_or(self.mesh.1 / 2);
            if n_g == 0 || n_g >= self.mesh.1 {
                return Err(Error::Config(format!(
                    "edge refinement needs between 1 and {} graded rows, got {n_g}",
                    self.mesh.1.saturating_sub(1)
                )));
            }
            let n_u = self.mesh.1 - n_g;
            if !(inner > 0.0 && inner < 1.0 / n_u as f64) {
                return Err(Error::Config(format!(
                    "edge refinement needs 0 < inner < 1 / {n_u}"
                )));
            }
        }
        if self.marker_starts.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
            return Err(Error::Config("marker starts must be fractions of R in (0, 1)".into()));
        }
        Ok(())
    }

    /// Domain that is actually simulated: the half-sector for kind `D`.
    pub fn simulation_domain(&self, radius: f64) -> Result<SectorDomain> {
        self.validate(radius)?;
        match self.kind {
            ScenarioKind::OddReflection => SectorDomain::new(0.5 * self.theta, radius),
            _ => SectorDomain::new(self.theta, radius),
        }
    }

    pub fn full_domain(&self, radius: f64) -> Result<SectorDomain> {
        self.validate(radius)?;
        SectorDomain::new(self.theta, radius)
    }
}

/// Closed-form initial vorticity on the simulated domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialVorticity {
    kind: ScenarioKind,
    epsilon: f64,
    theta: f64,
}

impl InitialVorticity {
    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn eval(&self, x: PhysicalPoint) -> f64 {
        let r = x.norm();
        match self.kind {
            ScenarioKind::AbsPlusOne => r + 1.0,
            ScenarioKind::CappedRamp => (r / self.epsilon + 1.0).min(2.0),
            ScenarioKind::Abs => r,
            ScenarioKind::OddReflection => {
                // distance to the full sector's bisector, measured in the lower half
                let phi = x.x2.atan2(x.x1);
                r * (0.5 * self.theta - phi).sin()
            }
        }
    }

    /// Lipschitz seminorm of the closed form.
    pub fn lipschitz(&self) -> f64 {
        match self.kind {
            ScenarioKind::CappedRamp => 1.0 / self.epsilon,
            _ => 1.0,
        }
    }
}

pub fn make_initial_vorticity(spec: &ScenarioSpec) -> Result<InitialVorticity> {
    let t = spec.theta;
    let gate = match spec.kind {
        ScenarioKind::AbsPlusOne | ScenarioKind::CappedRamp => t > 0.0 && t <= FRAC_PI_2 + ANGLE_TOL,
        ScenarioKind::Abs => t > FRAC_PI_2 + ANGLE_TOL && t < PI,
        ScenarioKind::OddReflection => t > PI && t < TAU,
    };
    if !gate {
        return Err(Error::Config(format!(
            "scenario {} does not apply to angle {t}",
            spec.kind.label()
        )));
    }
    if spec.kind == ScenarioKind::CappedRamp && !(spec.epsilon > 0.0) {
        return Err(Error::Config("ramp width must be positive".into()));
    }
    Ok(InitialVorticity {
        kind: spec.kind,
        epsilon: spec.epsilon,
        theta: spec.theta,
    })
}

/// Polar tensor mesh of Lagrangian cells.
///
/// Cell `(i, j)` spans `[r_i, r_{i+1}] x [phi_j, phi_{j+1}]`; its node sits at
/// the area-median radius `sqrt((r_i^2 + r_{i+1}^2) / 2)` and the mid angle.
pub fn build_cells(
    dom: &SectorDomain,
    n_r: usize,
    n_phi: usize,
    grading: RadialGrading,
    omega0: impl Fn(PhysicalPoint) -> f64,
) -> Vec<VortexCell> {
    build_graded_cells(dom, n_r, n_phi, grading, AngularGrading::Uniform, omega0)
}

/// `build_cells` with an explicit angular layout.
pub fn build_graded_cells(
    dom: &SectorDomain,
    n_r: usize,
    n_phi: usize,
    grading: RadialGrading,
    angular: AngularGrading,
    omega0: impl Fn(PhysicalPoint) -> f64,
) -> Vec<VortexCell> {
    let radii = grading.breakpoints(dom.radius(), n_r);
    let angles = angular.breakpoints(dom.theta(), n_phi);
    let mut cells = Vec::with_capacity(n_r * n_phi);
    for pair in radii.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let rc = (0.5 * (a * a + b * b)).sqrt();
        for w in angles.windows(2) {
            let area = 0.5 * (b * b - a * a) * (w[1] - w[0]);
            let p = PhysicalPoint::from_polar(rc, 0.5 * (w[0] + w[1]));
            cells.push(VortexCell::with_radial_length(p, omega0(p), area, b - a));
        }
    }
    cells
}

/// Odd extension of a field given on the half-sector `0 <= arg <= theta / 2`
/// to the full sector, antisymmetric across the bisector.
pub struct OddExtension<F> {
    full: SectorDomain,
    half: F,
}

impl<F: Fn(PhysicalPoint) -> f64> OddExtension<F> {
    /// Value at polar radius `r` and signed angle `s` from the bisector.
    pub fn eval_polar(&self, r: f64, s: f64) -> f64 {
        let mid = 0.5 * self.full.theta();
        if s < 0.0 {
            (self.half)(PhysicalPoint::from_polar(r, mid + s))
        } else if s > 0.0 {
            -(self.half)(PhysicalPoint::from_polar(r, mid - s))
        } else {
            0.0
        }
    }

    pub fn eval(&self, x: PhysicalPoint) -> Result<f64> {
        let (r, phi) = self.full.polar(x)?;
        let s = phi - 0.5 * self.full.theta();
        if s.abs() < ANGLE_TOL {
            return Ok(0.0);
        }
        Ok(self.eval_polar(r, s))
    }
}

pub fn odd_extend<F: Fn(PhysicalPoint) -> f64>(
    half_field: F,
    half_dom: &SectorDomain,
    full_dom: &SectorDomain,
) -> Result<OddExtension<F>> {
    let matches = (2.0 * half_dom.theta() - full_dom.theta()).abs() < ANGLE_TOL
        && half_dom.radius() == full_dom.radius();
    if !matches {
        return Err(Error::Config(format!(
            "half-sector (theta {}, R {}) is not the symmetric half of (theta {}, R {})",
            half_dom.theta(),
            half_dom.radius(),
            full_dom.theta(),
            full_dom.radius()
        )));
    }
    Ok(OddExtension {
        full: *full_dom,
        half: half_field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    #[test]
    fn closed_form_values() {
        let a = make_initial_vorticity(&ScenarioSpec::new(ScenarioKind::AbsPlusOne, PI / 3.0)).unwrap();
        assert!((a.eval(PhysicalPoint::new(0.1, 0.0)) - 1.1).abs() < 1e-15);
        let mut b_spec = ScenarioSpec::new(ScenarioKind::CappedRamp, PI / 2.0);
        b_spec.epsilon = 0.05;
        let b = make_initial_vorticity(&b_spec).unwrap();
        assert_eq!(b.eval(PhysicalPoint::new(0.2, 0.0)), 2.0);
        assert!((b.eval(PhysicalPoint::new(0.025, 0.0)) - 1.5).abs() < 1e-15);
        let c = make_initial_vorticity(&ScenarioSpec::new(ScenarioKind::Abs, 2.0 * PI / 3.0)).unwrap();
        assert_eq!(c.eval(PhysicalPoint::CORNER), 0.0);
        let d = make_initial_vorticity(&ScenarioSpec::new(ScenarioKind::OddReflection, 4.0 * PI / 3.0)).unwrap();
        // on the physical edge the distance to the bisector is r sin(theta / 2)
        let v = d.eval(PhysicalPoint::new(0.1, 0.0));
        assert!((v - 0.1 * (2.0 * PI / 3.0).sin()).abs() < 1e-15);
    }

    #[test]
    fn angle_gates_fail_loudly() {
        for (kind, theta) in [
            (ScenarioKind::AbsPlusOne, 2.0),
            (ScenarioKind::CappedRamp, 1.7),
            (ScenarioKind::Abs, PI / 2.0),
            (ScenarioKind::Abs, 1.0),
            (ScenarioKind::OddReflection, 2.0),
        ] {
            let spec = ScenarioSpec::new(kind, theta);
            assert!(matches!(make_initial_vorticity(&spec), Err(Error::Config(_))), "{kind:?} {theta}");
            assert!(spec.validate(0.49).is_err());
        }
        let mut wide = ScenarioSpec::new(ScenarioKind::CappedRamp, PI / 2.0);
        wide.epsilon = 0.2;
        assert!(wide.validate(0.49).is_err());
        assert!(ScenarioSpec::new(ScenarioKind::AbsPlusOne, PI / 2.0).validate(0.49).is_ok());
    }

    #[test]
    fn positive_minimum_for_a_and_b() {
        let dom = SectorDomain::with_default_radius(PI / 2.0).unwrap();
        for kind in [ScenarioKind::AbsPlusOne, ScenarioKind::CappedRamp] {
            let spec = ScenarioSpec::new(kind, PI / 2.0);
            let w0 = make_initial_vorticity(&spec).unwrap();
            let cells = build_cells(&dom, 16, 16, spec.grading, |p| w0.eval(p));
            assert!(cells.iter().all(|c| c.omega() >= 1.0));
        }
    }

    #[test]
    fn four_cells_cover_the_quarter_disk() {
        let dom = SectorDomain::with_default_radius(PI / 2.0).unwrap();
        for grading in [RadialGrading::Uniform, RadialGrading::default()] {
            let cells = build_cells(&dom, 2, 2, grading, |_| 1.0);
            assert_eq!(cells.len(), 4);
            let total: f64 = cells.iter().map(|c| c.area()).sum();
            let exact = 0.5 * dom.radius().powi(2) * dom.theta();
            assert!((total - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn edge_refined_angles() {
        let phi = AngularGrading::EdgeRefined { inner: 1e-6, rows: None }.breakpoints(1.0, 8);
        assert_eq!(phi.len(), 9);
        assert_eq!(phi[0], 0.0);
        assert!((phi[1] - 1e-6).abs() < 1e-20);
        assert!((phi[5] - 0.25).abs() < 1e-15 && phi[8] == 1.0);
        assert!(phi.windows(2).all(|w| w[1] > w[0]));
        let phi = AngularGrading::EdgeRefined { inner: 1e-6, rows: Some(6) }.breakpoints(1.0, 8);
        assert!((phi[7] - 0.5).abs() < 1e-15 && phi[1] == 1e-6);
        let dom = SectorDomain::with_default_radius(PI / 2.0).unwrap();
        let cells = build_graded_cells(&dom, 4, 8, RadialGrading::default(), AngularGrading::default(), |_| 1.0);
        let total: f64 = cells.iter().map(|c| c.area()).sum();
        assert!((total - 0.5 * dom.radius().powi(2) * dom.theta()).abs() < 1e-14);
    }

    #[test]
    fn no_cell_center_at_the_corner() {
        for theta in [0.3, PI / 2.0, 2.5, 4.0] {
            let dom = SectorDomain::with_default_radius(theta).unwrap();
            for n in [1, 2, 7, 64] {
                for grading in [RadialGrading::Uniform, RadialGrading::default()] {
                    let cells = build_cells(&dom, n, n, grading, |_| 1.0);
                    assert!(cells.iter().all(|c| c.position().norm() > 0.0));
                }
            }
        }
    }

    #[test]
    fn circulation_converges_at_second_order() {
        // oracle: integral of (r + 1) over the sector = theta R^3 / 3 + theta R^2 / 2
        let dom = SectorDomain::with_default_radius(PI / 3.0).unwrap();
        let (t, r) = (dom.theta(), dom.radius());
        let exact = t * r.powi(3) / 3.0 + t * r * r / 2.0;
        let mut errors = Vec::new();
        for n in [8, 16, 32, 64] {
            let cells = build_cells(&dom, n, n, RadialGrading::Uniform, |p| p.norm() + 1.0);
            let total: f64 = cells.iter().map(|c| c.omega() * c.area()).sum();
            errors.push((total - exact).abs());
        }
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio} from {errors:?}");
        }
    }

    #[test]
    fn ramp_lipschitz_constant_on_the_mesh() {
        let mut spec = ScenarioSpec::new(ScenarioKind::CappedRamp, PI / 2.0);
        spec.epsilon = 0.02;
        let dom = spec.simulation_domain(0.49).unwrap();
        let w0 = make_initial_vorticity(&spec).unwrap();
        let cells = build_cells(&dom, spec.mesh.0, spec.mesh.1, spec.grading, |p| w0.eval(p));
        let mut best = 0.0f64;
        for (i, a) in cells.iter().enumerate() {
            for b in &cells[i + 1..] {
                let d = a.position().distance(b.position());
                best = best.max((a.omega() - b.omega()).abs() / d);
            }
        }
        let target = 1.0 / spec.epsilon;
        assert!((best - target).abs() / target < 0.05, "{best} vs {target}");
    }

    #[test]
    fn odd_extension_is_exactly_antisymmetric() {
        let spec = ScenarioSpec::new(ScenarioKind::OddReflection, 4.0 * PI / 3.0);
        let half = spec.simulation_domain(0.49).unwrap();
        let full = spec.full_domain(0.49).unwrap();
        let w0 = make_initial_vorticity(&spec).unwrap();
        let ext = odd_extend(|p| w0.eval(p), &half, &full).unwrap();
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..200 {
            let r = rng.gen_range(0.0..full.radius());
            let s = rng.gen_range(0.0..0.5 * full.theta());
            assert_eq!(ext.eval_polar(r, -s), -ext.eval_polar(r, s));
            let x = PhysicalPoint::from_polar(r, 0.5 * full.theta() - s);
            let xm = full.reflect_across_bisector(x);
            let (a, b) = (ext.eval(x).unwrap(), ext.eval(xm).unwrap());
            assert!((a + b).abs() < 1e-14);
        }
        let axis = PhysicalPoint::from_polar(0.3, 0.5 * full.theta());
        assert_eq!(ext.eval(axis).unwrap(), 0.0);
        // the extension reproduces the signed distance to the bisector
        let x = PhysicalPoint::from_polar(0.2, 0.9 * full.theta());
        let expected = 0.2 * (0.5 * full.theta() - 0.9 * full.theta()).sin();
        assert!((ext.eval(x).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn odd_extension_rejects_mismatched_halves() {
        let full = SectorDomain::with_default_radius(4.0).unwrap();
        let wrong = SectorDomain::with_default_radius(1.5).unwrap();
        assert!(matches!(odd_extend(|_| 1.0, &wrong, &full), Err(Error::Config(_))));
    }

    #[test]
    fn scenario_json_names() {
        let spec = ScenarioSpec::new(ScenarioKind::CappedRamp, PI / 2.0);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"B_capped_ramp\""));
        let back: ScenarioSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let minimal: ScenarioSpec = serde_json::from_str(r#"{"kind":"C_abs","theta":2.0}"#).unwrap();
        assert_eq!(minimal.marker_starts, vec![0.02, 0.04, 0.08, 0.16]);
    }
}
