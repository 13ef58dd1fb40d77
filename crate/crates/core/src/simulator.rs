//! Fixed-step integration of the switched system `Ẋ = B_u X`, of the
//! convexified system and of the bilinear system `ẋ = A_λ x, y = C_λ x`.
//!
//! Piecewise-constant signals step with cached matrix exponentials and are
//! exact up to rounding. State feedback uses classical RK4 with the feedback
//! evaluated at every stage.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bad_locus::LocusGeometry;
use crate::decomposition::BlockFamily;
use crate::error::{GuasError, Result};
use crate::linalg::{expm, frobenius, spectral_norm, Mat, Vector};
use crate::matrix_core::NormalizedPair;

/// Relative size of `‖C₀x − C₁x‖` below which the bad-locus feedback holds its previous value.
pub const HOLD_TOL: f64 = 1e-9;
/// Relative norm decrease over the last window below which a trajectory counts as plateaued.
pub const PLATEAU_TOL: f64 = 1e-6;
/// Final norm (relative to the initial one) below which a trajectory counts as decayed.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub duration: f64,
    pub value: f64,
}

pub type CustomFeedback = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum FeedbackRule {
    /// Greedy adversary: the vertex with the largest `xᵀ(B_uᵀ + B_u)x`.
    WorstCase,
    /// `λ(x)` killing the output of the bilinear system.
    BadLocus,
    Custom(CustomFeedback),
}

impl fmt::Debug for FeedbackRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedbackRule::WorstCase => write!(f, "WorstCase"),
            FeedbackRule::BadLocus => write!(f, "BadLocus"),
            FeedbackRule::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Piecewise-constant signals repeat periodically once their segments are exhausted.
#[derive(Debug, Clone)]
pub enum SwitchingSignal {
    Binary(Vec<Segment>),
    Relaxed(Vec<Segment>),
    Feedback(FeedbackRule),
}

impl SwitchingSignal {
    pub fn binary(segments: &[(f64, u8)]) -> Result<Self> {
        let segs: Vec<Segment> = segments
            .iter()
            .map(|&(duration, v)| {
                if v > 1 {
                    return Err(GuasError::BadSignalSpec(format!("binary value {v} is not 0 or 1")));
                }
                Ok(Segment {
                    duration,
                    value: v as f64,
                })
            })
            .collect::<Result<_>>()?;
        check_segments(&segs)?;
        Ok(SwitchingSignal::Binary(segs))
    }

    pub fn relaxed(segments: &[(f64, f64)]) -> Result<Self> {
        let segs: Vec<Segment> = segments
            .iter()
            .map(|&(duration, value)| Segment { duration, value })
            .collect();
        for s in &segs {
            if !(0.0..=1.0).contains(&s.value) {
                return Err(GuasError::BadSignalSpec(format!(
                    "relaxed value {} outside [0, 1]",
                    s.value
                )));
            }
        }
        check_segments(&segs)?;
        Ok(SwitchingSignal::Relaxed(segs))
    }

    pub fn constant(lambda: f64) -> Result<Self> {
        Self::relaxed(&[(1.0, lambda)])
    }

    fn segments(&self) -> Option<&[Segment]> {
        match self {
            SwitchingSignal::Binary(s) | SwitchingSignal::Relaxed(s) => Some(s),
            SwitchingSignal::Feedback(_) => None,
        }
    }
}

fn check_segments(segs: &[Segment]) -> Result<()> {
    if segs.is_empty() {
        return Err(GuasError::BadSignalSpec("no segments".into()));
    }
    for s in segs {
        if !(s.duration > 0.0 && s.duration.is_finite()) {
            return Err(GuasError::BadSignalSpec(format!(
                "segment duration {} is not a positive number",
                s.duration
            )));
        }
    }
    Ok(())
}

/// Parses `binary:dur=val,dur=val,...`, `relaxed:dur=val,...`, `worst` and `badlocus`.
impl FromStr for SwitchingSignal {
    type Err = GuasError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "worst" => return Ok(SwitchingSignal::Feedback(FeedbackRule::WorstCase)),
            "badlocus" => return Ok(SwitchingSignal::Feedback(FeedbackRule::BadLocus)),
            _ => {}
        }
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| GuasError::BadSignalSpec(format!("cannot parse signal '{s}'")))?;
        let pairs: Vec<(f64, f64)> = rest
            .split(',')
            .map(|item| {
                let (d, v) = item
                    .split_once('=')
                    .ok_or_else(|| GuasError::BadSignalSpec(format!("segment '{item}' is not dur=val")))?;
                let d: f64 = d
                    .trim()
                    .parse()
                    .map_err(|_| GuasError::BadSignalSpec(format!("bad duration '{d}'")))?;
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| GuasError::BadSignalSpec(format!("bad value '{v}'")))?;
                Ok((d, v))
            })
            .collect::<Result<_>>()?;
        match kind {
            "binary" => {
                let segs: Vec<(f64, u8)> = pairs
                    .iter()
                    .map(|&(d, v)| {
                        if v == 0.0 || v == 1.0 {
                            Ok((d, v as u8))
                        } else {
                            Err(GuasError::BadSignalSpec(format!("binary value {v} is not 0 or 1")))
                        }
                    })
                    .collect::<Result<_>>()?;
                SwitchingSignal::binary(&segs)
            }
            "relaxed" => SwitchingSignal::relaxed(&pairs),
            other => Err(GuasError::BadSignalSpec(format!("unknown signal kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum System<'a> {
    Full(&'a NormalizedPair),
    Bilinear(&'a BlockFamily),
}

impl System<'_> {
    fn endpoints(&self) -> (Mat, Mat) {
        match self {
            System::Full(p) => (p.b0.clone(), p.b1.clone()),
            System::Bilinear(b) => (b.a0.clone(), b.a1.clone()),
        }
    }

    fn outputs(&self) -> Option<(Mat, Mat)> {
        match self {
            System::Full(_) => None,
            System::Bilinear(b) => Some((b.c0.clone(), b.c1.clone())),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            System::Full(p) => p.dim(),
            System::Bilinear(b) => b.k(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    LeftF { time: f64 },
    ReachedN { time: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    /// `C_λ x` at each time (bilinear runs only), with the λ applied on the step starting there.
    pub outputs: Option<Vec<Vec<f64>>>,
    /// λ (or u) in force on each step, taken at the step start.
    pub applied_lambda: Vec<f64>,
    /// Steps on which the bad-locus feedback held its previous value near `N`.
    pub held_steps: Vec<usize>,
    pub dt: f64,
    /// Largest admissible norm increase per step.
    pub step_bound: f64,
    pub max_norm_increase: f64,
    pub stop: StopReason,
}

impl Trajectory {
    pub fn final_norm(&self) -> f64 {
        *self.norms.last().expect("trajectory has an initial state")
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().expect("trajectory has an initial state")
    }

    /// CSV with header `t,x_1..x_n,norm[,y_1..y_m,lambda]`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.states.first().map_or(0, |s| s.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.push("norm".into());
        let m = self
            .outputs
            .as_ref()
            .and_then(|o| o.first().map(|y| y.len()));
        if let Some(m) = m {
            header.extend((1..=m).map(|i| format!("y_{i}")));
            header.push("lambda".into());
        }
        w.write_record(&header)?;
        let fmt = |v: f64| format!("{v:.16e}");
        for i in 0..self.times.len() {
            let mut row = vec![fmt(self.times[i])];
            row.extend(self.states[i].iter().map(|&v| fmt(v)));
            row.push(fmt(self.norms[i]));
            if let Some(outs) = &self.outputs {
                row.extend(outs[i].iter().map(|&v| fmt(v)));
                let l = self
                    .applied_lambda
                    .get(i)
                    .or(self.applied_lambda.last())
                    .copied()
                    .unwrap_or(f64::NAN);
                row.push(fmt(l));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

type Monitor<'m> = dyn Fn(f64, &Vector) -> Option<StopReason> + 'm;

fn convex(m0: &Mat, m1: &Mat, l: f64) -> Mat {
    m0 * (1.0 - l) + m1 * l
}

/// Integrate `system` under `signal` from `x0` over `[0, T]` with step `dt`.
pub fn integrate(system: System, signal: &SwitchingSignal, x0: &Vector, t_end: f64, dt: f64) -> Result<Trajectory> {
    integrate_monitored(system, signal, x0, t_end, dt, None)
}

fn integrate_monitored(
    system: System,
    signal: &SwitchingSignal,
    x0: &Vector,
    t_end: f64,
    dt: f64,
    monitor: Option<&Monitor>,
) -> Result<Trajectory> {
    let d = system.dim();
    if x0.len() != d {
        return Err(GuasError::DimensionMismatch(format!(
            "initial state of length {} for a system of dimension {d}",
            x0.len()
        )));
    }
    if !(t_end > 0.0 && t_end.is_finite() && dt > 0.0 && dt.is_finite()) {
        return Err(GuasError::InvalidArgument(format!(
            "need T > 0 and dt > 0, got T = {t_end}, dt = {dt}"
        )));
    }
    let steps = (t_end / dt).round() as usize;
    if steps == 0 {
        return Err(GuasError::InvalidArgument(format!("dt = {dt} exceeds T = {t_end}")));
    }
    if let Some(segs) = signal.segments() {
        let min = segs.iter().map(|s| s.duration).fold(f64::INFINITY, f64::min);
        if dt > min * (1.0 + 1e-12) {
            return Err(GuasError::InvalidArgument(format!(
                "dt = {dt} exceeds the shortest segment duration {min}"
            )));
        }
    }
    let (m0, m1) = system.endpoints();
    let outputs = system.outputs();
    if matches!(signal, SwitchingSignal::Feedback(FeedbackRule::BadLocus)) && outputs.is_none() {
        return Err(GuasError::BadSignalSpec(
            "the bad-locus feedback needs the bilinear system".into(),
        ));
    }
    if matches!(signal, SwitchingSignal::Feedback(FeedbackRule::WorstCase)) && outputs.is_some() {
        return Err(GuasError::BadSignalSpec(
            "the worst-case feedback needs the full switched system".into(),
        ));
    }
    let bnorm = spectral_norm(&m0).max(spectral_norm(&m1));
    let x0n = x0.norm();
    let step_bound = (10.0 * (dt * bnorm).powi(5) * x0n).max(1e-12 * x0n);

    // Step index at which each periodic segment ends, snapped to the grid.
    let schedule = signal.segments().map(|segs| {
        let period: f64 = segs.iter().map(|s| s.duration).sum();
        (segs.to_vec(), period)
    });
    let value_at_step = |i: usize| -> f64 {
        let (segs, period) = schedule.as_ref().expect("segment schedule");
        let t = i as f64 * dt;
        let cycles = (t / period).floor();
        let mut boundary = cycles * period;
        for s in segs {
            boundary += s.duration;
            if i < (boundary / dt).round() as usize {
                return s.value;
            }
        }
        segs[0].value
    };

    let s0 = m0.transpose() + &m0;
    let s1 = m1.transpose() + &m1;
    let tie_scale = frobenius(&s0) + frobenius(&s1);
    let c_scale = outputs
        .as_ref()
        .map(|(c0, c1)| spectral_norm(c0).max(spectral_norm(c1)).max(1.0))
        .unwrap_or(1.0);
    let bad_lambda = |x: &Vector, prev: f64| -> (f64, bool) {
        let (c0, c1) = outputs.as_ref().expect("bilinear outputs");
        let u = c0 * x;
        let v = c1 * x;
        let diff = &u - &v;
        if diff.norm() < HOLD_TOL * c_scale * x.norm().max(f64::MIN_POSITIVE) {
            return (prev, true);
        }
        ((diff.dot(&u) / diff.norm_squared()).clamp(0.0, 1.0), false)
    };
    let custom_lambda = |f: &CustomFeedback, x: &Vector| -> Result<f64> {
        let l = f(x);
        if !(-1e-12..=1.0 + 1e-12).contains(&l) {
            return Err(GuasError::BadSignalSpec(format!("feedback returned λ = {l} outside [0, 1]")));
        }
        Ok(l.clamp(0.0, 1.0))
    };

    let mut exp_cache: HashMap<u64, Mat> = HashMap::new();
    let mut x = x0.clone();
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        norms: Vec::with_capacity(steps + 1),
        outputs: outputs.as_ref().map(|_| Vec::with_capacity(steps + 1)),
        applied_lambda: Vec::with_capacity(steps),
        held_steps: Vec::new(),
        dt,
        step_bound,
        max_norm_increase: 0.0,
        stop: StopReason::Completed,
    };
    let record_output = |traj: &mut Trajectory, x: &Vector, l: f64| {
        if let (Some(outs), Some((c0, c1))) = (traj.outputs.as_mut(), outputs.as_ref()) {
            outs.push((convex(c0, c1, l) * x).iter().copied().collect());
        }
    };
    traj.times.push(0.0);
    traj.states.push(x.iter().copied().collect());
    traj.norms.push(x0n);
    let mut prev_lambda = 0.0;

    for i in 0..steps {
        let t = i as f64 * dt;
        if let Some(mon) = monitor {
            if let Some(reason) = mon(t, &x) {
                traj.stop = reason;
                break;
            }
        }
        let (lambda, next) = match signal {
            SwitchingSignal::Binary(_) | SwitchingSignal::Relaxed(_) => {
                let l = value_at_step(i);
                let e = exp_cache
                    .entry(l.to_bits())
                    .or_insert_with(|| expm(&(convex(&m0, &m1, l) * dt)));
                (l, &*e * &x)
            }
            SwitchingSignal::Feedback(FeedbackRule::WorstCase) => {
                let q0 = x.dot(&(&s0 * &x));
                let q1 = x.dot(&(&s1 * &x));
                let l: f64 = if (q0 - q1).abs() < 1e-9 * tie_scale * x.norm_squared() {
                    prev_lambda
                } else if q1 > q0 {
                    1.0
                } else {
                    0.0
                };
                let e = exp_cache
                    .entry(l.to_bits())
                    .or_insert_with(|| expm(&(convex(&m0, &m1, l) * dt)));
                (l, &*e * &x)
            }
            SwitchingSignal::Feedback(FeedbackRule::BadLocus) => {
                let (l, held) = bad_lambda(&x, prev_lambda);
                if held {
                    traj.held_steps.push(i);
                }
                let f = |y: &Vector| convex(&m0, &m1, bad_lambda(y, l).0) * y;
                (l, rk4(&f, &x, dt))
            }
            SwitchingSignal::Feedback(FeedbackRule::Custom(rule)) => {
                let l = custom_lambda(rule, &x)?;
                let f = |y: &Vector| {
                    let ly = rule(y).clamp(0.0, 1.0);
                    convex(&m0, &m1, ly) * y
                };
                (l, rk4(&f, &x, dt))
            }
        };
        record_output(&mut traj, &x, lambda);
        traj.applied_lambda.push(lambda);
        prev_lambda = lambda;

        let before = x.norm();
        let after = next.norm();
        let increase = after - before;
        traj.max_norm_increase = traj.max_norm_increase.max(increase);
        if increase > step_bound {
            return Err(GuasError::StepTooLarge {
                time: t,
                increase,
                bound: step_bound,
            });
        }
        x = next;
        traj.times.push((i + 1) as f64 * dt);
        traj.states.push(x.iter().copied().collect());
        traj.norms.push(after);
    }
    // Output at the last recorded time, with the last λ in force.
    let last_l = traj.applied_lambda.last().copied().unwrap_or(prev_lambda);
    record_output(&mut traj, &x, last_l);
    Ok(traj)
}

fn rk4(f: &impl Fn(&Vector) -> Vector, x: &Vector, h: f64) -> Vector {
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (h / 2.0)));
    let k3 = f(&(x + &k2 * (h / 2.0)));
    let k4 = f(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Greedy adversary on the full system: at each step the vertex whose
/// quadratic form `xᵀ(B_uᵀ + B_u)x` is larger, ties keeping the previous choice.
pub fn worst_case_switching(pair: &NormalizedPair, x0: &Vector, t_end: f64, dt: f64) -> Result<Trajectory> {
    integrate(
        System::Full(pair),
        &SwitchingSignal::Feedback(FeedbackRule::WorstCase),
        x0,
        t_end,
        dt,
    )
}

/// Follow `ẋ = A_{λ(x)} x` from a unit point of `F` while the state stays in `F₀`.
///
/// Returns the trajectory and the first time at which the state is outside `F`.
/// Reaching `N` stops the run with [`StopReason::ReachedN`].
pub fn bad_feedback_trajectory(
    geometry: &LocusGeometry,
    x0: &Vector,
    t_end: f64,
    dt: f64,
    tol: f64,
) -> Result<(Trajectory, Option<f64>)> {
    if x0.len() != geometry.k {
        return Err(GuasError::DimensionMismatch(format!(
            "initial state of length {} in K of dimension {}",
            x0.len(),
            geometry.k
        )));
    }
    let n = x0.norm();
    if n == 0.0 {
        return Err(GuasError::InvalidArgument("initial state is zero".into()));
    }
    let x0 = x0 / n;
    if !geometry.in_f(&x0, tol)? {
        return Err(GuasError::NotInF);
    }
    let monitor = |t: f64, x: &Vector| -> Option<StopReason> {
        if geometry.in_n(x, tol) {
            Some(StopReason::ReachedN { time: t })
        } else if !geometry.in_f(x, tol).unwrap_or(false) {
            Some(StopReason::LeftF { time: t })
        } else {
            None
        }
    };
    let traj = integrate_monitored(
        System::Bilinear(geometry.blocks),
        &SwitchingSignal::Feedback(FeedbackRule::BadLocus),
        &x0,
        t_end,
        dt,
        Some(&monitor),
    )?;
    let exit = match traj.stop {
        StopReason::LeftF { time } => Some(time),
        _ => None,
    };
    Ok((traj, exit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaLimit {
    pub r: f64,
    pub plateaued: bool,
    pub decayed_to_zero: bool,
}

/// Radius of the sphere carrying the ω-limit set, read off the end of the trajectory.
pub fn estimate_omega_limit(traj: &Trajectory, window: f64) -> Result<OmegaLimit> {
    let duration = traj.duration();
    if !(window > 0.0) || duration < 2.0 * window * (1.0 - 1e-12) {
        return Err(GuasError::InvalidArgument(format!(
            "window {window} needs a trajectory of duration at least {}, got {duration}",
            2.0 * window
        )));
    }
    let r = traj.final_norm();
    let back = ((window / traj.dt).round() as usize).min(traj.norms.len() - 1);
    let earlier = traj.norms[traj.norms.len() - 1 - back];
    let x0n = traj.norms[0];
    Ok(OmegaLimit {
        r,
        plateaued: earlier - r <= PLATEAU_TOL * r,
        decayed_to_zero: r <= ZERO_TOL * x0n,
    })
}

/// Fraction of `[0, T]` on which `‖y(t)‖ > tol` (step-counting surrogate of the Lebesgue measure).
pub fn output_measure(traj: &Trajectory, tol: f64) -> Result<f64> {
    let outs = traj.outputs.as_ref().ok_or(GuasError::NoOutputs)?;
    let steps = traj.applied_lambda.len();
    if steps == 0 {
        return Ok(0.0);
    }
    let hits = outs[..steps]
        .iter()
        .filter(|y| y.iter().map(|v| v * v).sum::<f64>().sqrt() > tol)
        .count();
    Ok(hits as f64 * traj.dt / (steps as f64 * traj.dt))
}

/// Random binary signal with dwell times uniform on whole multiples of `dt` in `[dt, 2·mean_dwell]`.
pub fn random_binary_signal(seed: u64, t_end: f64, dt: f64, mean_dwell: f64) -> Result<SwitchingSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_steps = ((2.0 * mean_dwell / dt).round() as u64).max(1);
    let mut segs = Vec::new();
    let mut t = 0.0;
    while t < t_end {
        let dur = rng.random_range(1..=max_steps) as f64 * dt;
        segs.push((dur, rng.random_range(0..=1u8)));
        t += dur;
    }
    SwitchingSignal::binary(&segs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub greedy_final: f64,
    pub random_finals: Vec<f64>,
    /// Seeds whose random signal ended with a larger norm than the greedy adversary.
    pub violations: Vec<u64>,
}

/// Compare the greedy adversary with `n_runs` random binary signals (seeds `seed..seed+n_runs`).
pub fn dominance_study(
    pair: &NormalizedPair,
    x0: &Vector,
    t_end: f64,
    dt: f64,
    n_runs: usize,
    seed: u64,
) -> Result<DominanceReport> {
    let greedy_final = worst_case_switching(pair, x0, t_end, dt)?.final_norm();
    let random_finals: Vec<f64> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let sig = random_binary_signal(seed + i, t_end, dt, 0.5)?;
            Ok(integrate(System::Full(pair), &sig, x0, t_end, dt)?.final_norm())
        })
        .collect::<Result<_>>()?;
    let violations = random_finals
        .iter()
        .enumerate()
        .filter(|(_, &f)| f > greedy_final * (1.0 + 1e-9))
        .map(|(i, _)| seed + i as u64)
        .collect();
    Ok(DominanceReport {
        greedy_final,
        random_finals,
        violations,
    })
}
