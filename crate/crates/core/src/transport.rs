//! Time integration of cell and marker trajectories.
//!
//! A step is the classical four-stage Runge-Kutta scheme with the velocity
//! field rebuilt from the stage positions at every stage. States are
//! immutable snapshots: a step returns a new state.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::biot_savart::{QuadratureConfig, VelocityField, VortexCell};
use crate::conformal::{PhysicalPoint, SectorDomain};
use crate::diagnostics::{lipschitz_quotient, GrowthSeries};
use crate::error::{Error, Result};
use crate::scenarios::{build_graded_cells, make_initial_vorticity, ScenarioSpec};

/// A fluid particle that starts on the edge `arg = 0` and stays there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMarker {
    /// Distance from the corner along the edge.
    pub x1: f64,
    /// Initial vorticity carried by the particle.
    pub omega0_value: f64,
    /// Starting distance.
    pub start: f64,
    /// `(time, x1)` after every step.
    pub history: Vec<(f64, f64)>,
    /// Interpolated time at which `x1` fell below the arrival threshold.
    /// Arrived markers are frozen.
    pub arrival: Option<f64>,
}

impl BoundaryMarker {
    pub fn new(x1: f64, omega0_value: f64) -> Self {
        BoundaryMarker {
            x1,
            omega0_value,
            start: x1,
            history: vec![(0.0, x1)],
            arrival: None,
        }
    }

    pub fn position(&self) -> PhysicalPoint {
        PhysicalPoint::new(self.x1, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationState {
    pub time: f64,
    pub cells: Vec<VortexCell>,
    pub markers: Vec<BoundaryMarker>,
    pub dom: SectorDomain,
    pub step_count: usize,
    /// Cells pulled back onto the boundary after leaving the sector.
    pub projections: usize,
    /// Vorticity at the corner, a fixed point of the flow.
    pub corner_omega: f64,
    /// Fixed interior points where the transported vorticity is sampled.
    pub probes: Vec<PhysicalPoint>,
    /// Polar mesh shape `(n_r, n_phi)` of the initial cell layout.
    pub mesh: (usize, usize),
}

impl SimulationState {
    /// Initial state of a scenario on its simulated domain. Probe points are
    /// drawn from `seed` at radii in `[0.05 R, 0.5 R]`.
    pub fn initial(spec: &ScenarioSpec, radius: f64, probe_count: usize, seed: u64) -> Result<Self> {
        let dom = spec.simulation_domain(radius)?;
        let omega0 = make_initial_vorticity(spec)?;
        let (n_r, n_phi) = spec.mesh;
        let cells = build_graded_cells(&dom, n_r, n_phi, spec.grading, spec.angular, |x| omega0.eval(x));
        let markers = spec
            .marker_starts
            .iter()
            .map(|&s| {
                let p = PhysicalPoint::new(s * radius, 0.0);
                BoundaryMarker::new(p.x1, omega0.eval(p))
            })
            .collect();
        let mut rng = StdRng::seed_from_u64(seed);
        let probes = (0..probe_count)
            .map(|_| {
                let r = radius * rng.gen_range(0.05..0.5);
                let phi = dom.theta() * rng.gen_range(0.1..0.9);
                PhysicalPoint::from_polar(r, phi)
            })
            .collect();
        Ok(SimulationState {
            time: 0.0,
            cells,
            markers,
            dom,
            step_count: 0,
            projections: 0,
            corner_omega: omega0.eval(PhysicalPoint::CORNER),
            probes,
            mesh: (n_r, n_phi),
        })
    }

    /// Total circulation `sum omega_j A_j`.
    pub fn circulation(&self) -> f64 {
        self.cells.iter().map(|c| c.omega() * c.area()).sum()
    }

    pub fn omega_range(&self) -> (f64, f64) {
        self.cells.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            (lo.min(c.omega()), hi.max(c.omega()))
        })
    }
}

fn check_finite(u: &[[f64; 2]], n_cells: usize, step: usize) -> Result<()> {
    match u.iter().position(|v| !(v[0].is_finite() && v[1].is_finite())) {
        None => Ok(()),
        Some(i) if i < n_cells => Err(Error::Integration { step, what: "cell", index: i }),
        Some(i) => Err(Error::Integration {
            step,
            what: "marker",
            index: i - n_cells,
        }),
    }
}

/// Advances every cell and every marker that has not arrived by one RK4 step.
///
/// Stage positions are projected back into the closed sector before the
/// velocity is evaluated there. Markers move with the tangential component
/// only and are clamped to `x1 >= 0`.
pub fn rk4_step(state: &SimulationState, dt: f64, quad: &QuadratureConfig) -> Result<SimulationState> {
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("time step must be positive, got {dt}")));
    }
    let dom = state.dom;
    let step = state.step_count + 1;
    let n = state.cells.len();
    let active: Vec<usize> = (0..state.markers.len())
        .filter(|&i| state.markers[i].arrival.is_none())
        .collect();

    let cells0: Vec<PhysicalPoint> = state.cells.iter().map(|c| c.position()).collect();
    let marks0: Vec<f64> = active.iter().map(|&i| state.markers[i].x1).collect();

    let eval = |cells: &[PhysicalPoint], marks: &[f64]| -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
        let moved: Vec<VortexCell> = state
            .cells
            .iter()
            .zip(cells)
            .map(|(c, &p)| c.moved_to(p))
            .collect();
        let field = VelocityField::new(&moved, &dom, quad)?;
        let mut points = cells.to_vec();
        points.extend(marks.iter().map(|&x| PhysicalPoint::new(x, 0.0)));
        let u = field.velocities(&points)?;
        check_finite(&u, n, step)?;
        let tangential = u[n..].iter().map(|v| v[0]).collect();
        let mut u = u;
        u.truncate(n);
        Ok((u, tangential))
    };
    let shift = |h: f64, k: &(Vec<[f64; 2]>, Vec<f64>)| -> (Vec<PhysicalPoint>, Vec<f64>) {
        let cells = cells0
            .iter()
            .zip(&k.0)
            .map(|(p, v)| {
                let q = PhysicalPoint::new(p.x1 + h * v[0], p.x2 + h * v[1]);
                if dom.contains(q) { q } else { dom.project(q) }
            })
            .collect();
        let marks = marks0
            .iter()
            .zip(&k.1)
            .map(|(x, v)| (x + h * v).clamp(0.0, dom.radius()))
            .collect();
        (cells, marks)
    };

    let k1 = eval(&cells0, &marks0)?;
    let s = shift(0.5 * dt, &k1);
    let k2 = eval(&s.0, &s.1)?;
    let s = shift(0.5 * dt, &k2);
    let k3 = eval(&s.0, &s.1)?;
    let s = shift(dt, &k3);
    let k4 = eval(&s.0, &s.1)?;

    let w = dt / 6.0;
    let mut projections = state.projections;
    let cells = state
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let p = cells0[i];
            let dx = k1.0[i][0] + 2.0 * k2.0[i][0] + 2.0 * k3.0[i][0] + k4.0[i][0];
            let dy = k1.0[i][1] + 2.0 * k2.0[i][1] + 2.0 * k3.0[i][1] + k4.0[i][1];
            let mut q = PhysicalPoint::new(p.x1 + w * dx, p.x2 + w * dy);
            if !dom.contains(q) {
                q = dom.project(q);
                projections += 1;
            }
            c.moved_to(q)
        })
        .collect();

    let time = state.time + dt;
    let mut markers = state.markers.clone();
    for (slot, &i) in active.iter().enumerate() {
        let du = k1.1[slot] + 2.0 * k2.1[slot] + 2.0 * k3.1[slot] + k4.1[slot];
        let m = &mut markers[i];
        m.x1 = (marks0[slot] + w * du).clamp(0.0, dom.radius());
    }
    for m in &mut markers {
        m.history.push((time, m.x1));
    }

    Ok(SimulationState {
        time,
        cells,
        markers,
        step_count: step,
        projections,
        ..state.clone()
    })
}

/// Inverse-distance-squared average of the `k` nearest cells' vorticity.
pub fn vorticity_at(x: PhysicalPoint, state: &SimulationState, k: usize) -> f64 {
    if x == PhysicalPoint::CORNER || state.cells.is_empty() {
        return state.corner_omega;
    }
    let mut near: Vec<(f64, usize)> = state
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| (x.distance(c.position()), i))
        .collect();
    let k = k.clamp(1, near.len());
    let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < near.len() {
        near.select_nth_unstable_by(k - 1, by_distance);
        near.truncate(k);
    }
    near.sort_by(by_distance);
    if near[0].0 == 0.0 {
        return state.cells[near[0].1].omega();
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(d, i) in &near {
        let wgt = 1.0 / (d * d);
        num += wgt * state.cells[i].omega();
        den += wgt;
    }
    num / den
}

/// Everything that controls a run besides the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    /// Final time.
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    /// Steps between diagnostic samples.
    pub sample_every: usize,
    pub quad: QuadratureConfig,
    /// Markers closer to the corner than this count as arrived. Defaults to
    /// the diagonal of the finest sub-cell of the smallest cell.
    pub arrival_threshold: Option<f64>,
    /// Neighbors used by `vorticity_at`.
    pub neighbors: usize,
    pub probe_count: usize,
    pub seed: u64,
    /// Keep a copy of the state every this many steps (and at the end).
    pub snapshot_every: Option<usize>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            t_end: 5.0,
            dt: 1e-2,
            sample_every: 5,
            quad: QuadratureConfig::default(),
            arrival_threshold: None,
            neighbors: 4,
            probe_count: 8,
            seed: 7,
            snapshot_every: None,
        }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("T must be finite and non-negative, got {}", self.t_end)));
        }
        if !(self.dt > 0.0) || (self.t_end > 0.0 && self.dt > self.t_end) {
            return Err(Error::Config(format!("dt must lie in (0, T], got {}", self.dt)));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("sample_every must be at least 1".into()));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::Config("snapshot_every must be at least 1".into()));
        }
        if self.neighbors == 0 {
            return Err(Error::Config("neighbors must be at least 1".into()));
        }
        if let Some(t) = self.arrival_threshold {
            if !(t > 0.0) {
                return Err(Error::Config("arrival_threshold must be positive".into()));
            }
        }
        self.quad.validate()
    }

    pub fn threshold_for(&self, cells: &[VortexCell]) -> f64 {
        self.arrival_threshold.unwrap_or_else(|| {
            let smallest = cells.iter().map(|c| c.size()).fold(f64::INFINITY, f64::min);
            std::f64::consts::SQRT_2 * self.quad.finest_size(smallest)
        })
    }
}

/// One diagnostic sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    /// Lipschitz quotient; infinite once a marker sits at the corner.
    pub lipschitz: f64,
    pub marker_x1: Vec<f64>,
    pub circulation: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl Sample {
    pub fn of(state: &SimulationState, neighbors: usize) -> Self {
        let (omega_min, omega_max) = state.omega_range();
        Sample {
            time: state.time,
            lipschitz: lipschitz_quotient(state, neighbors),
            marker_x1: state.markers.iter().map(|m| m.x1).collect(),
            circulation: state.circulation(),
            omega_min,
            omega_max,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub final_state: SimulationState,
    pub samples: Vec<Sample>,
    /// Finite part of the Lipschitz-quotient samples, with the first arrival
    /// time attached when a marker reached the corner.
    pub series: GrowthSeries,
    /// State right after the step in which the first marker arrived.
    pub arrival_state: Option<SimulationState>,
    /// Time at which the run stopped early because every marker arrived.
    pub stop_time: Option<f64>,
    pub arrival_threshold: f64,
    /// Human-readable notes: projections, area distortion, monotonicity.
    pub warnings: Vec<String>,
    /// States kept according to `RunSettings::snapshot_every`.
    pub snapshots: Vec<SimulationState>,
}

/// Initializes the scenario and integrates it to `settings.t_end`.
pub fn run_simulation(spec: &ScenarioSpec, dom: &SectorDomain, settings: &RunSettings) -> Result<RunOutcome> {
    settings.validate()?;
    spec.validate(dom.radius())?;
    if (spec.theta - dom.theta()).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "scenario angle {} differs from domain angle {}",
            spec.theta,
            dom.theta()
        )));
    }
    let state = SimulationState::initial(spec, dom.radius(), settings.probe_count, settings.seed)?;
    continue_simulation(state, spec, settings)
}

/// Integrates an existing state up to `settings.t_end`. Used for resuming
/// from a snapshot; the step grid is `state.time + k dt`.
pub fn continue_simulation(
    mut state: SimulationState,
    spec: &ScenarioSpec,
    settings: &RunSettings,
) -> Result<RunOutcome> {
    settings.validate()?;
    let finite_time = spec.kind.is_finite_time();
    let threshold = settings.threshold_for(&state.cells);
    let initial = state.clone();
    let (circ0, range0) = (state.circulation(), state.omega_range());
    let remaining = ((settings.t_end - state.time) / settings.dt).round().max(0.0) as usize;

    let mut warnings = Vec::new();
    let mut samples = vec![Sample::of(&state, settings.neighbors)];
    let mut arrival_state = None;
    let mut stop_time = None;
    let mut area_checked = false;
    let mut non_monotone = 0usize;
    let mut snapshots = Vec::new();

    for k in 1..=remaining {
        let next = rk4_step(&state, settings.dt, &settings.quad)?;
        let mut next = next;
        for (m, old) in next.markers.iter_mut().zip(&state.markers) {
            if m.x1 > old.x1 {
                non_monotone += 1;
            }
            if finite_time && m.arrival.is_none() && m.x1 < threshold {
                // linear interpolation inside the step
                let frac = ((old.x1 - threshold) / (old.x1 - m.x1)).clamp(0.0, 1.0);
                m.arrival = Some(state.time + frac * settings.dt);
            }
        }
        assert!(
            next.circulation() == circ0 && next.omega_range() == range0,
            "circulation or vorticity range drifted"
        );
        if !area_checked && next.time >= 2.0 - 0.5 * settings.dt {
            area_checked = true;
            let d = crate::diagnostics::area_distortion(&initial, &next);
            if d > 0.1 {
                warnings.push(format!("area distortion {d:.3} exceeds 10% at t = {:.3}", next.time));
            }
        }
        let first_arrival = arrival_state.is_none() && next.markers.iter().any(|m| m.arrival.is_some());
        let all_arrived = finite_time && next.markers.iter().all(|m| m.arrival.is_some());
        state = next;
        if first_arrival {
            arrival_state = Some(state.clone());
        }
        if k % settings.sample_every == 0 || k == remaining || all_arrived || first_arrival {
            samples.push(Sample::of(&state, settings.neighbors));
        }
        if let Some(n) = settings.snapshot_every {
            if k % n == 0 || k == remaining || all_arrived {
                snapshots.push(state.clone());
            }
        }
        if all_arrived {
            stop_time = Some(state.time);
            break;
        }
    }
    if state.projections > initial.projections {
        warnings.push(format!(
            "{} cell positions were projected back onto the boundary",
            state.projections - initial.projections
        ));
    }
    if non_monotone > 0 {
        warnings.push(format!("{non_monotone} marker steps moved away from the corner"));
    }

    let first_arrival = state.markers.iter().filter_map(|m| m.arrival).min_by(f64::total_cmp);
    let series = GrowthSeries::from_samples(&samples, first_arrival, "lipschitz quotient over markers and probes")?;
    Ok(RunOutcome {
        final_state: state,
        samples,
        series,
        arrival_state,
        stop_time,
        arrival_threshold: threshold,
        warnings,
        snapshots,
    })
}
