//! Measurements on simulation states and time series: the Lipschitz
//! quotient at the corner, growth-mode classification, velocity scaling
//! exponents, arrival times and continuity moduli.

use serde::{Deserialize, Serialize};

use crate::biot_savart::{QuadratureConfig, VelocityField, VortexCell};
use crate::conformal::{PhysicalPoint, SectorDomain};
use crate::error::{Error, Result};
use crate::transport::{vorticity_at, Sample, SimulationState};

/// Coefficient of determination below which no growth fit is accepted.
pub const R_SQUARED_MIN: f64 = 0.98;
/// Fraction of samples, counted from the end, used for growth fits.
pub const TRAILING_FRACTION: f64 = 0.6;
/// Number of windows for the slope-increase test.
pub const SLOPE_WINDOWS: usize = 4;
/// Last-to-first windowed slope ratio that counts as accelerating growth.
pub const ACCELERATION_MIN: f64 = 1.25;

/// Positive samples `L(t)` at strictly increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    source: String,
    /// Time at which a marker reached the corner, ending the series.
    arrival: Option<f64>,
}

impl GrowthSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Argument("times and values differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("growth series times must increase strictly".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Argument(format!("growth series values must be positive and finite, got {v}")));
        }
        Ok(GrowthSeries {
            times,
            values,
            source: source.into(),
            arrival: None,
        })
    }

    pub fn with_arrival(mut self, arrival: Option<f64>) -> Self {
        self.arrival = arrival;
        self
    }

    /// Finite samples up to (and not past) the first arrival.
    pub fn from_samples(samples: &[Sample], arrival: Option<f64>, source: &str) -> Result<Self> {
        let cutoff = arrival.unwrap_or(f64::INFINITY);
        let (times, values) = samples
            .iter()
            .take_while(|s| s.lipschitz.is_finite() && s.time <= cutoff)
            .filter(|s| s.lipschitz > 0.0)
            .map(|s| (s.time, s.lipschitz))
            .unzip();
        let infinite = samples.iter().find(|s| !s.lipschitz.is_finite()).map(|s| s.time);
        let arrival = match (arrival, infinite) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        Ok(GrowthSeries::new(times, values, source)?.with_arrival(arrival))
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn arrival(&self) -> Option<f64> {
        self.arrival
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn trailing_start(&self) -> usize {
        let n = self.len();
        let keep = ((TRAILING_FRACTION * n as f64).ceil() as usize).clamp(n.min(3), n);
        n - keep
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthMode {
    Exponential,
    DoubleExponential,
    FiniteTime,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthClassification {
    pub mode: GrowthMode,
    /// Exponential: `c` in `e^{ct}`. Double exponential: `c` in
    /// `exp(a e^{ct})`. Finite time: `q` in `(T - t)^{-q}`.
    pub rate: f64,
    pub r_squared: f64,
    /// Time interval of the fit.
    pub window: (f64, f64),
    /// Slopes of `log L` on consecutive windows of the fit interval.
    pub windowed_slopes: Vec<f64>,
}

/// Least-squares line `y = a + b x`; returns `(b, a, r^2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 0.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    (slope, my - slope * mx, r2)
}

/// Slopes of `log L` against time on `count` consecutive windows of equal
/// sample count covering `series[from..]`.
pub fn windowed_slopes(series: &GrowthSeries, from: usize, count: usize) -> Vec<f64> {
    let t = &series.times[from..];
    let y: Vec<f64> = series.values[from..].iter().map(|v| v.ln()).collect();
    let n = t.len();
    if count == 0 || n < 2 * count {
        return Vec::new();
    }
    (0..count)
        .map(|k| {
            // windows share their end points so that no interval is skipped
            let a = k * (n - 1) / count;
            let b = (k + 1) * (n - 1) / count;
            linear_fit(&t[a..=b], &y[a..=b]).0
        })
        .collect()
}

/// Length of the longest run of strictly increasing consecutive values.
pub fn longest_increasing_run(values: &[f64]) -> usize {
    let mut best = values.len().min(1);
    let mut run = best;
    for w in values.windows(2) {
        run = if w[1] > w[0] { run + 1 } else { 1 };
        best = best.max(run);
    }
    best
}

fn accelerating(slopes: &[f64]) -> bool {
    slopes.len() >= 3
        && longest_increasing_run(slopes) >= 3
        && slopes[0] > 0.0
        && slopes[slopes.len() - 1] >= ACCELERATION_MIN * slopes[0]
}

/// Classifies the growth of `L(t)` on the trailing window.
///
/// A series ending in an arrival is `finite_time`, with the blow-up exponent
/// fitted against `log(T - t)`. Otherwise `log L` and `log log L` are fitted
/// against time; double exponential needs the second fit to pass the r^2
/// threshold and the windowed slopes of `log L` to keep increasing.
pub fn classify_growth(series: &GrowthSeries) -> GrowthClassification {
    let n = series.len();
    let inconclusive = |window, slopes| GrowthClassification {
        mode: GrowthMode::Inconclusive,
        rate: 0.0,
        r_squared: 0.0,
        window,
        windowed_slopes: slopes,
    };
    if n == 0 {
        return inconclusive((0.0, 0.0), Vec::new());
    }
    let from = series.trailing_start();
    let window = (series.times[from], series.times[n - 1]);

    if let Some(t_star) = series.arrival {
        let (x, y): (Vec<f64>, Vec<f64>) = (from..n)
            .filter(|&i| series.times[i] < t_star)
            .map(|i| ((t_star - series.times[i]).ln(), series.values[i].ln()))
            .unzip();
        let (slope, _, r2) = if x.len() >= 3 { linear_fit(&x, &y) } else { (0.0, 0.0, 0.0) };
        return GrowthClassification {
            mode: GrowthMode::FiniteTime,
            rate: -slope,
            r_squared: r2,
            window: (window.0, t_star),
            windowed_slopes: windowed_slopes(series, from, SLOPE_WINDOWS),
        };
    }

    let slopes = windowed_slopes(series, from, SLOPE_WINDOWS);
    let (lo, hi) = series
        .values
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if n < 10 || hi < std::f64::consts::E * lo {
        return inconclusive(window, slopes);
    }
    let t = &series.times[from..];
    let log_l: Vec<f64> = series.values[from..].iter().map(|v| v.ln()).collect();
    let (rate_e, _, r2_e) = linear_fit(t, &log_l);
    let (rate_d, _, r2_d) = if log_l.iter().all(|&v| v > 0.0) {
        let loglog: Vec<f64> = log_l.iter().map(|v| v.ln()).collect();
        linear_fit(t, &loglog)
    } else {
        (0.0, 0.0, 0.0)
    };

    let (mode, rate, r_squared) = if r2_d >= R_SQUARED_MIN && accelerating(&slopes) {
        (GrowthMode::DoubleExponential, rate_d, r2_d)
    } else if r2_e >= R_SQUARED_MIN {
        (GrowthMode::Exponential, rate_e, r2_e)
    } else {
        return inconclusive(window, slopes);
    };
    GrowthClassification {
        mode,
        rate,
        r_squared,
        window,
        windowed_slopes: slopes,
    }
}

/// `max(|omega0(X) - omega0(0)| / x1)` over markers and
/// `|omega(x) - omega0(0)| / |x|` over the probe points. A marker sitting at
/// the corner with a different vorticity gives `+inf`.
pub fn lipschitz_quotient(state: &SimulationState, neighbors: usize) -> f64 {
    let w0 = state.corner_omega;
    let markers = state.markers.iter().map(|m| {
        let d = (m.omega0_value - w0).abs();
        if d == 0.0 {
            0.0
        } else if m.x1 == 0.0 {
            f64::INFINITY
        } else {
            d / m.x1
        }
    });
    let probes = state
        .probes
        .iter()
        .map(|&p| (vorticity_at(p, state, neighbors) - w0).abs() / p.norm());
    markers.chain(probes).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeDirection {
    Edge,
    Bisector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityExponent {
    pub slope: f64,
    pub r_squared: f64,
    pub radii: Vec<f64>,
    pub speeds: Vec<f64>,
    /// `log|u| - fit` at each retained radius.
    pub residuals: Vec<f64>,
    /// Min and max of `|u| / (r log(1/r))`, reported when `beta = 2`.
    pub compensated_range: Option<(f64, f64)>,
}

/// Slope of `log|u|` against `log r` along the edge `arg = 0` or the
/// bisector.
pub fn velocity_exponent_probe(
    dom: &SectorDomain,
    cells: &[VortexCell],
    radii: &[f64],
    direction: ProbeDirection,
    quad: &QuadratureConfig,
) -> Result<VelocityExponent> {
    if let Some(r) = radii.iter().find(|&&r| !(r > 0.0 && r < 0.2 * dom.radius())) {
        return Err(Error::Argument(format!("probe radius {r} must lie in (0, 0.2 R)")));
    }
    let field = VelocityField::new(cells, dom, quad)?;
    let angle = match direction {
        ProbeDirection::Edge => 0.0,
        ProbeDirection::Bisector => 0.5 * dom.theta(),
    };
    let points: Vec<PhysicalPoint> = radii.iter().map(|&r| PhysicalPoint::from_polar(r, angle)).collect();
    let u = field.velocities(&points)?;
    let (kept_r, speeds): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(&u)
        .map(|(&r, v)| (r, v[0].hypot(v[1])))
        .filter(|&(_, s)| s > 1e-300 && s.is_finite())
        .unzip();
    if kept_r.len() < 4 {
        return Err(Error::Argument(format!(
            "only {} probe radii have a measurable velocity",
            kept_r.len()
        )));
    }
    let lx: Vec<f64> = kept_r.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = speeds.iter().map(|s| s.ln()).collect();
    let (slope, icpt, r_squared) = linear_fit(&lx, &ly);
    let residuals = lx.iter().zip(&ly).map(|(x, y)| y - (icpt + slope * x)).collect();
    let compensated_range = ((dom.beta() - 2.0).abs() < 1e-9).then(|| {
        kept_r
            .iter()
            .zip(&speeds)
            .map(|(r, s)| s / (r * (1.0 / r).ln()))
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), c| (lo.min(c), hi.max(c)))
    });
    Ok(VelocityExponent {
        slope,
        r_squared,
        radii: kept_r,
        speeds,
        residuals,
        compensated_range,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalTime {
    /// Interpolated first time with `x1 < threshold`.
    pub time: Option<f64>,
    /// Smallest `x1` in the history.
    pub closest: f64,
}

/// First crossing of `threshold` in a `(time, x1)` history, linearly
/// interpolated between samples.
pub fn arrival_time(history: &[(f64, f64)], threshold: f64) -> ArrivalTime {
    let closest = history.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
    if let Some(&(t0, x0)) = history.first() {
        if x0 < threshold {
            return ArrivalTime { time: Some(t0), closest };
        }
    }
    let time = history.windows(2).find(|w| w[1].1 < threshold).map(|w| {
        let ((ta, xa), (tb, xb)) = (w[0], w[1]);
        ta + (tb - ta) * (xa - threshold) / (xa - xb)
    });
    ArrivalTime { time, closest }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalScaling {
    /// Fitted `p` in `T ∝ X1^p`.
    pub exponent: f64,
    pub r_squared: f64,
    /// Arrival times increase with the starting distance.
    pub monotone: bool,
}

/// Power-law fit of arrival time against starting distance.
pub fn arrival_exponent(starts: &[f64], times: &[f64]) -> Result<ArrivalScaling> {
    if starts.len() != times.len() || starts.len() < 2 {
        return Err(Error::Argument("need at least two (start, arrival) pairs".into()));
    }
    if starts.iter().chain(times).any(|v| !(*v > 0.0)) {
        return Err(Error::Argument("starts and arrival times must be positive".into()));
    }
    let mut pairs: Vec<(f64, f64)> = starts.iter().copied().zip(times.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = pairs.windows(2).all(|w| w[1].1 > w[0].1);
    let lx: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let (exponent, _, r_squared) = linear_fit(&lx, &ly);
    Ok(ArrivalScaling {
        exponent,
        r_squared,
        monotone,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityModulus {
    /// Fitted `alpha` in `max |omega(a) - omega(b)| ~ s^alpha`.
    pub exponent: f64,
    pub scales: Vec<f64>,
    /// Largest vorticity difference over pairs at most `s` apart; `None`
    /// when no pair is that close.
    pub max_differences: Vec<Option<f64>>,
}

/// Vorticity modulus of continuity over the Lagrangian sample set: the
/// corner, the markers and the cells, each with its exact transported value.
/// A pair at zero distance, such as a marker that landed on the corner,
/// counts at every scale.
pub fn continuity_modulus(state: &SimulationState, pair_scales: &[f64]) -> ContinuityModulus {
    let mut pts: Vec<(PhysicalPoint, f64)> = vec![(PhysicalPoint::CORNER, state.corner_omega)];
    pts.extend(state.markers.iter().map(|m| (m.position(), m.omega0_value)));
    pts.extend(state.cells.iter().map(|c| (c.position(), c.omega())));
    let s_max = pair_scales.iter().copied().fold(0.0, f64::max);

    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = pts[i].0.distance(pts[j].0);
            if d <= s_max {
                pairs.push((d, (pts[i].1 - pts[j].1).abs()));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut running = Vec::with_capacity(pairs.len());
    let mut best = 0.0f64;
    for p in &pairs {
        best = best.max(p.1);
        running.push(best);
    }
    let max_differences: Vec<Option<f64>> = pair_scales
        .iter()
        .map(|&s| {
            let k = pairs.partition_point(|p| p.0 <= s);
            (k > 0).then(|| running[k - 1])
        })
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = pair_scales
        .iter()
        .zip(&max_differences)
        .filter_map(|(&s, m)| m.filter(|&v| v > 0.0).map(|v| (s.ln(), v.ln())))
        .unzip();
    let exponent = if lx.len() >= 2 { linear_fit(&lx, &ly).0 } else { f64::NAN };
    ContinuityModulus {
        exponent,
        scales: pair_scales.to_vec(),
        max_differences,
    }
}

/// Largest relative change in the area of quadrilaterals spanned by
/// initially adjacent cell centers.
pub fn area_distortion(initial: &SimulationState, current: &SimulationState) -> f64 {
    let (n_r, n_phi) = initial.mesh;
    if n_r < 2 || n_phi < 2 || current.cells.len() != n_r * n_phi {
        return 0.0;
    }
    let quad_area = |s: &SimulationState, i: usize, j: usize| {
        let p = |a: usize, b: usize| s.cells[a * n_phi + b].position();
        let v = [p(i, j), p(i + 1, j), p(i + 1, j + 1), p(i, j + 1)];
        0.5 * (0..4)
            .map(|k| {
                let (a, b) = (v[k], v[(k + 1) % 4]);
                a.x1 * b.x2 - b.x1 * a.x2
            })
            .sum::<f64>()
    };
    let mut worst = 0.0f64;
    for i in 0..n_r - 1 {
        for j in 0..n_phi - 1 {
            let a0 = quad_area(initial, i, j);
            if a0.abs() > 0.0 {
                worst = worst.max((quad_area(current, i, j) / a0 - 1.0).abs());
            }
        }
    }
    worst
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}
