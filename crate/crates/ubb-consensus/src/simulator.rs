//! Fixed-step integration of the switched consensus system.
//!
//! The state obeys `ẋᵢ = uᵢ(xᵢ, y⁽ⁱ⁾)` between switching times and is
//! continuous across them. Integration is classic RK4 with a fixed nominal
//! step; within each switching segment the step is shrunk uniformly so that
//! the grid lands exactly on every switching time, which keeps each RK4
//! step inside one smooth piece of the vector field. Disturbances are
//! evaluated at the RK4 stage times (realizations are continuous); for
//! relaxed step realizations the stage times reuse the step's start value,
//! which is first-order accurate at jumps.
//!
//! The vector field is piecewise-linear in the state with Lipschitz
//! constant at most `2 · maxᵢ |Nᵢ|`, so a fixed step is adequate; the
//! default is `h = 1e-3` s.

use crate::analysis;
use crate::disturbance::DisturbanceRealization;
use crate::protocol::{control_parts, ProtocolMode};
use crate::topology::{AgentId, SwitchingSignal, Topology};
use crate::{Error, Result};
use std::io::Write;

/// Default integration step (seconds).
pub const DEFAULT_STEP: f64 = 1e-3;

/// Equilibrium detection threshold on `‖u‖∞` and the number of consecutive
/// quiet steps required.
pub const EQUILIBRIUM_U_TOL: f64 = 1e-9;
pub const EQUILIBRIUM_QUIET_STEPS: usize = 100;

/// Everything needed to reproduce one simulation run.
#[derive(Debug, Clone)]
pub struct Scenario {
    topology: Topology,
    signal: SwitchingSignal,
    disturbance: DisturbanceRealization,
    x0: Vec<f64>,
    mode: ProtocolMode,
    step: f64,
    horizon: f64,
    stop_at_equilibrium: bool,
}

impl Scenario {
    pub fn new(
        topology: Topology,
        signal: SwitchingSignal,
        disturbance: DisturbanceRealization,
        x0: Vec<f64>,
        mode: ProtocolMode,
        step: f64,
        horizon: f64,
    ) -> Result<Self> {
        let n = topology.agent_count();
        let report = topology.validate();
        if !report.pass {
            let failing: Vec<String> = report
                .per_edgeset
                .iter()
                .filter(|r| !r.pass)
                .map(|r| format!("edgeset {}", r.edgeset))
                .collect();
            return Err(Error::InvalidArgument(format!(
                "topology fails validation ({})",
                failing.join(", ")
            )));
        }
        if x0.len() != n {
            return Err(Error::InvalidArgument(format!(
                "initial state has {} entries for {} agents",
                x0.len(),
                n
            )));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("initial state must be finite".into()));
        }
        if disturbance.n() != n {
            return Err(Error::InvalidArgument(
                "disturbance sized for a different agent count".into(),
            ));
        }
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument("horizon must be non-negative".into()));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidArgument("step must be positive".into()));
        }
        if step > signal.dwell() / 10.0 * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "step {step} exceeds a tenth of the dwell time {}",
                signal.dwell()
            )));
        }
        if signal.horizon() < horizon * (1.0 - 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "signal horizon {} does not cover the integration horizon {horizon}",
                signal.horizon()
            )));
        }
        for seg in signal.segments() {
            if seg.edgeset >= topology.edgeset_count() {
                return Err(Error::InvalidArgument(format!(
                    "signal references edgeset {} but the topology has {}",
                    seg.edgeset,
                    topology.edgeset_count()
                )));
            }
        }
        Ok(Scenario {
            topology,
            signal,
            disturbance,
            x0,
            mode,
            step,
            horizon,
            stop_at_equilibrium: false,
        })
    }

    /// Stop integrating once the control has been numerically quiet for
    /// [`EQUILIBRIUM_QUIET_STEPS`] consecutive steps. Off by default: the
    /// requested horizon is never silently truncated.
    pub fn with_stop_at_equilibrium(mut self, stop: bool) -> Self {
        self.stop_at_equilibrium = stop;
        self
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn signal(&self) -> &SwitchingSignal {
        &self.signal
    }

    pub fn disturbance(&self) -> &DisturbanceRealization {
        &self.disturbance
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    pub fn mode(&self) -> ProtocolMode {
        self.mode
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn stop_at_equilibrium(&self) -> bool {
        self.stop_at_equilibrium
    }

    pub fn xi(&self) -> f64 {
        self.disturbance.xi()
    }
}

/// One integration sample: state, control, and diagnostics at time `t`.
/// `edgeset` is the active edgeset index (right-continuous at switches);
/// the Lyapunov value is taken with respect to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub lyapunov: f64,
    pub spread: f64,
    pub edgeset: usize,
}

/// A completed integration run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub switch_times: Vec<f64>,
    /// Start of the first window of quiet control, when one was observed.
    pub equilibrium_time: Option<f64>,
}

impl Trajectory {
    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("trajectory has samples")
    }

    pub fn final_state(&self) -> &[f64] {
        &self.final_sample().x
    }

    pub fn final_spread(&self) -> f64 {
        self.final_sample().spread
    }

    /// Samples with `t` in `[from, to]`.
    pub fn window(&self, from: f64, to: f64) -> impl Iterator<Item = &Sample> + '_ {
        self.samples
            .iter()
            .filter(move |s| s.t >= from && s.t <= to)
    }

    /// Export as CSV: header `t,x1..xn,u1..un,V,spread,sigma`, one row per
    /// sample, floats with 17 significant digits, LF line endings.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.final_state().len();
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",x{i}"));
        }
        for i in 1..=n {
            header.push_str(&format!(",u{i}"));
        }
        header.push_str(",V,spread,sigma");
        w.write_all(header.as_bytes())?;
        w.write_all(b"\n")?;
        for s in &self.samples {
            let mut row = fmt_f64(s.t);
            for v in &s.x {
                row.push(',');
                row.push_str(&fmt_f64(*v));
            }
            for v in &s.u {
                row.push(',');
                row.push_str(&fmt_f64(*v));
            }
            row.push(',');
            row.push_str(&fmt_f64(s.lyapunov));
            row.push(',');
            row.push_str(&fmt_f64(s.spread));
            row.push_str(&format!(",{}", s.edgeset));
            w.write_all(row.as_bytes())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// 17 significant decimal digits: enough to round-trip any f64 exactly.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct FieldEval<'a> {
    scenario: &'a Scenario,
    /// Scratch for stage states.
    xs: Vec<f64>,
}

impl FieldEval<'_> {
    /// `out = u(x, t)` under edgeset `k`.
    fn eval(&mut self, k: usize, t: f64, x: &[f64], out: &mut [f64]) {
        let sc = self.scenario;
        let adj = sc.topology.adjacency(k);
        let sampler = sc.disturbance.sampler_at(t);
        let xi = sc.disturbance.xi();
        for (i0, nb) in adj.iter().enumerate() {
            let i = i0 + 1;
            let mut sum_y = 0.0;
            for &j in nb {
                sum_y += x[j - 1] + sampler.entry(i, j);
            }
            out[i0] = control_parts(x[i0], sum_y, nb.len(), xi, sc.mode);
        }
    }

    /// One RK4 step of size `h` from `(t, x)` under edgeset `k`, writing the
    /// new state back into `x`. For relaxed step disturbances all stages
    /// reuse the value at `t`.
    fn rk4_step(
        &mut self,
        k: usize,
        t: f64,
        h: f64,
        x: &mut [f64],
        k1: &mut [f64],
        k2: &mut [f64],
        k3: &mut [f64],
        k4: &mut [f64],
    ) {
        let hold = self.scenario.disturbance.is_step();
        let t_mid = if hold { t } else { t + 0.5 * h };
        let t_end = if hold { t } else { t + h };

        self.eval(k, t, x, k1);
        stage_state(&mut self.xs, x, k1, 0.5 * h);
        let xs = std::mem::take(&mut self.xs);
        self.eval(k, t_mid, &xs, k2);
        self.xs = xs;
        stage_state(&mut self.xs, x, k2, 0.5 * h);
        let xs = std::mem::take(&mut self.xs);
        self.eval(k, t_mid, &xs, k3);
        self.xs = xs;
        stage_state(&mut self.xs, x, k3, h);
        let xs = std::mem::take(&mut self.xs);
        self.eval(k, t_end, &xs, k4);
        self.xs = xs;

        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

fn stage_state(out: &mut Vec<f64>, x: &[f64], k: &[f64], scale: f64) {
    out.clear();
    out.extend(x.iter().zip(k).map(|(&xv, &kv)| xv + scale * kv));
}

/// Integrate a scenario over its full horizon. Pure in the scenario: the
/// same inputs always produce the identical trajectory.
pub fn integrate(scenario: &Scenario) -> Result<Trajectory> {
    integrate_impl(scenario, None)
}

/// Integration with an optional early-stop predicate, invoked after every
/// accepted step with the sample time and state. Used by the empirical
/// dwell-time estimator.
pub(crate) fn integrate_impl(
    scenario: &Scenario,
    mut early_stop: Option<&mut dyn FnMut(f64, &[f64]) -> bool>,
) -> Result<Trajectory> {
    let n = scenario.topology.agent_count();
    let mut x = scenario.x0.clone();
    let mut eval = FieldEval {
        scenario,
        xs: vec![0.0; n],
    };
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut u = vec![0.0; n];

    let mut samples = Vec::new();
    let mut quiet_run = 0usize;
    let mut quiet_start = 0.0f64;
    let mut equilibrium_time = None;

    let record =
        |samples: &mut Vec<Sample>, eval: &mut FieldEval, t: f64, x: &[f64], u: &mut [f64]| -> Result<usize> {
            let k = scenario.signal.active_edgeset(t)?;
            eval.eval(k, t, x, u);
            let sample = Sample {
                t,
                x: x.to_vec(),
                u: u.to_vec(),
                lyapunov: analysis::lyapunov(x, &scenario.topology, k),
                spread: analysis::spread(x),
                edgeset: k,
            };
            samples.push(sample);
            Ok(k)
        };

    record(&mut samples, &mut eval, 0.0, &x, &mut u)?;

    // Pieces: [segment start, next start or horizon) clipped to the horizon.
    let segs = scenario.signal.segments();
    let mut switch_times = Vec::new();
    'outer: for (s, seg) in segs.iter().enumerate() {
        if seg.start >= scenario.horizon {
            break;
        }
        if s > 0 {
            switch_times.push(seg.start);
        }
        let end = segs
            .get(s + 1)
            .map(|nx| nx.start)
            .unwrap_or(scenario.horizon)
            .min(scenario.horizon);
        let len = end - seg.start;
        if len <= 0.0 {
            continue;
        }
        let steps = (len / scenario.step - 1e-9).ceil().max(1.0) as usize;
        let h = len / steps as f64;
        for sub in 0..steps {
            let t0 = seg.start + sub as f64 * h;
            eval.rk4_step(seg.edgeset, t0, h, &mut x, &mut k1, &mut k2, &mut k3, &mut k4);
            let t1 = if sub + 1 == steps {
                end
            } else {
                seg.start + (sub + 1) as f64 * h
            };
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integration {
                    t: t1,
                    message: "state is no longer finite (overflow)".into(),
                });
            }
            record(&mut samples, &mut eval, t1, &x, &mut u)?;

            let u_inf = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if u_inf < EQUILIBRIUM_U_TOL {
                if quiet_run == 0 {
                    quiet_start = t1;
                }
                quiet_run += 1;
                if quiet_run == EQUILIBRIUM_QUIET_STEPS && equilibrium_time.is_none() {
                    equilibrium_time = Some(quiet_start);
                    if scenario.stop_at_equilibrium {
                        break 'outer;
                    }
                }
            } else {
                quiet_run = 0;
            }
            if let Some(stop) = early_stop.as_deref_mut() {
                if stop(t1, &x) {
                    break 'outer;
                }
            }
        }
    }

    Ok(Trajectory {
        samples,
        switch_times,
        equilibrium_time,
    })
}

/// Closed-form trajectory of the two-agent reference system: agents `a`
/// (started high) and `b` (started low), one edge, constant disturbance
/// `+ξ` on both measurements. The high agent sits still while the gap is
/// within `2ξ`; otherwise both move until the gap contracts to `2ξ` at
///
/// ```text
/// t̂ = ½ ln((gap₀ - ξ)/ξ)
/// ```
///
/// after which the high agent freezes at its limit. Every trajectory of the
/// full network is dominated by this system seeded with the two largest
/// initial components. The closed form is cross-validated against an RK4
/// integration of the same two-agent system at construction.
pub fn two_agent_reference(x_a0: f64, x_b0: f64, xi: f64, horizon: f64, step: f64) -> Result<Trajectory> {
    if x_a0 < x_b0 {
        return Err(Error::InvalidArgument(format!(
            "reference system expects x_a0 >= x_b0, got {x_a0} < {x_b0}"
        )));
    }
    if !(xi > 0.0) {
        return Err(Error::InvalidArgument("xi must be positive".into()));
    }
    if !(step > 0.0) || !(horizon >= 0.0) {
        return Err(Error::InvalidArgument("need step > 0 and horizon >= 0".into()));
    }

    let eval = reference_state_fn(x_a0, x_b0, xi);

    let steps = (horizon / step).ceil().max(1.0) as usize;
    let h = if horizon > 0.0 { horizon / steps as f64 } else { 0.0 };
    let count = if horizon > 0.0 { steps } else { 0 };
    let mut samples = Vec::with_capacity(count + 1);
    for k in 0..=count {
        let t = if k == count { horizon } else { k as f64 * h };
        let (xa, xb, ua, ub) = eval(t);
        samples.push(Sample {
            t,
            x: vec![xa, xb],
            u: vec![ua, ub],
            lyapunov: 0.5 * (xa - xb) * (xa - xb),
            spread: xa - xb,
            edgeset: 0,
        });
    }

    // Cross-validate against a numeric integration of the same dynamics.
    let h_check = h.min(1e-3).max(1e-6);
    if horizon > 0.0 {
        let mut xa = x_a0;
        let mut xb = x_b0;
        let mut t = 0.0;
        let mut next_sample = 0usize;
        let field = |xa: f64, xb: f64| -> (f64, f64) {
            let ua = control_parts(xa, xb + xi, 1, xi, ProtocolMode::Lazy);
            let ub = control_parts(xb, xa + xi, 1, xi, ProtocolMode::Lazy);
            (ua, ub)
        };
        let total = (horizon / h_check).ceil() as usize;
        for k in 0..=total {
            while next_sample < samples.len() && samples[next_sample].t <= t + 1e-12 {
                let s = &samples[next_sample];
                let err = (s.x[0] - xa).abs().max((s.x[1] - xb).abs());
                if err > 1e-6 * (1.0 + xa.abs().max(xb.abs())) {
                    return Err(Error::Internal(format!(
                        "closed-form reference deviates from its numeric check by {err} at t = {t}"
                    )));
                }
                next_sample += 1;
            }
            if k == total {
                break;
            }
            let hstep = h_check.min(horizon - t);
            if hstep <= 0.0 {
                break;
            }
            let (k1a, k1b) = field(xa, xb);
            let (k2a, k2b) = field(xa + 0.5 * hstep * k1a, xb + 0.5 * hstep * k1b);
            let (k3a, k3b) = field(xa + 0.5 * hstep * k2a, xb + 0.5 * hstep * k2b);
            let (k4a, k4b) = field(xa + hstep * k3a, xb + hstep * k3b);
            xa += hstep / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
            xb += hstep / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
            t += hstep;
        }
    }

    Ok(Trajectory {
        samples,
        switch_times: Vec::new(),
        equilibrium_time: None,
    })
}

/// State and control of the reference system as a function of time.
fn reference_state_fn(x_a0: f64, x_b0: f64, xi: f64) -> impl Fn(f64) -> (f64, f64, f64, f64) {
    let gap0 = x_a0 - x_b0;
    move |t: f64| -> (f64, f64, f64, f64) {
        if gap0 <= 2.0 * xi {
            // The high agent never leaves its deadband; the low one relaxes
            // toward it.
            let xa = x_a0;
            let xb = x_a0 - gap0 * (-t).exp();
            (xa, xb, 0.0, xa - xb)
        } else {
            let t_hat = 0.5 * ((gap0 - xi) / xi).ln();
            if t <= t_hat {
                let e = (-2.0 * t).exp();
                let xa = 0.5 * (xi * (1.0 + 2.0 * t - e) + x_a0 * (1.0 + e) + x_b0 * (1.0 - e));
                let xb = 0.5 * (xi * (-1.0 + 2.0 * t + e) + x_a0 * (1.0 - e) + x_b0 * (1.0 + e));
                (xa, xb, xb + 2.0 * xi - xa, xa - xb)
            } else {
                let xa_inf = 0.5 * (x_a0 + x_b0) + xi + 0.5 * xi * ((gap0 - xi) / xi).ln();
                let xb = xa_inf - 2.0 * xi * (-(t - t_hat)).exp();
                (xa_inf, xb, 0.0, xa_inf - xb)
            }
        }
    }
}

/// Limit value of the reference system (the `β` bound when seeded with the
/// two largest initial components).
pub fn reference_limit(x_a0: f64, x_b0: f64, xi: f64) -> f64 {
    let gap0 = x_a0 - x_b0;
    if gap0 <= 2.0 * xi {
        x_a0
    } else {
        (0.5 * (x_a0 + x_b0) + xi + 0.5 * xi * ((gap0 - xi) / xi).ln()).min(x_a0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disturbance::DisturbanceRealization;
    use crate::matrix::PairMatrix;

    fn simple_scenario(mode: ProtocolMode) -> Scenario {
        Scenario::new(
            Topology::chain(3),
            SwitchingSignal::fixed(0, 5.0),
            DisturbanceRealization::zero(3, 1.0),
            vec![4.0, 1.0, 0.0],
            mode,
            1e-3,
            5.0,
        )
        .unwrap()
    }

    #[test]
    fn consensus_start_stays_fixed() {
        let x0 = vec![std::f64::consts::PI; 3];
        let sc = Scenario::new(
            Topology::chain(3),
            SwitchingSignal::fixed(0, 2.0),
            DisturbanceRealization::constant(PairMatrix::filled(3, 0.8), 1.0).unwrap(),
            x0.clone(),
            ProtocolMode::Lazy,
            1e-3,
            2.0,
        )
        .unwrap();
        let traj = integrate(&sc).unwrap();
        for s in &traj.samples {
            assert_eq!(s.x, x0);
            assert!(s.u.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn equilibrium_detection_reports_without_truncation() {
        let sc = simple_scenario(ProtocolMode::Lazy);
        let traj = integrate(&sc).unwrap();
        assert!(traj.equilibrium_time.is_some());
        let end = traj.final_sample().t;
        assert!((end - 5.0).abs() < 1e-12, "horizon honored, got {end}");

        let stopping = simple_scenario(ProtocolMode::Lazy).with_stop_at_equilibrium(true);
        let truncated = integrate(&stopping).unwrap();
        assert!(truncated.final_sample().t < 5.0);
    }

    #[test]
    fn two_agents_with_witness_disturbance_freeze() {
        // Gap exactly 2ξ frozen by the disturbance d12 = +ξ, d21 = -ξ.
        let d = PairMatrix::from_entries(2, &[(1, 2, 1.0), (2, 1, -1.0)]);
        let sc = Scenario::new(
            Topology::chain(2),
            SwitchingSignal::fixed(0, 3.0),
            DisturbanceRealization::constant(d, 1.0).unwrap(),
            vec![2.0, 0.0],
            ProtocolMode::Lazy,
            1e-3,
            3.0,
        )
        .unwrap();
        let traj = integrate(&sc).unwrap();
        for s in &traj.samples {
            assert_eq!(s.x, vec![2.0, 0.0]);
            assert!(s.u.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn two_agents_zero_disturbance_contract_to_xi_gap() {
        // With d = 0 the deadband is only ξ wide around the measured state,
        // so a gap of 2ξ is *not* at rest: both agents move until the gap
        // is ξ.
        let sc = Scenario::new(
            Topology::chain(2),
            SwitchingSignal::fixed(0, 20.0),
            DisturbanceRealization::zero(2, 1.0),
            vec![2.0, 0.0],
            ProtocolMode::Lazy,
            1e-3,
            20.0,
        )
        .unwrap();
        let traj = integrate(&sc).unwrap();
        let first_u = &traj.samples[0].u;
        assert!((first_u[0] + 1.0).abs() < 1e-12);
        assert!((first_u[1] - 1.0).abs() < 1e-12);
        assert!((traj.final_spread() - 1.0).abs() < 1e-6);
        assert!((traj.final_state()[0] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn switch_times_are_sample_points() {
        let sc = Scenario::new(
            Topology::new(3, vec![vec![(1, 2), (2, 3)], vec![(1, 2), (1, 3)]]).unwrap(),
            SwitchingSignal::periodic(&[0, 1], 1.0, 3.5).unwrap(),
            DisturbanceRealization::zero(3, 1.0),
            vec![1.0, 0.0, 0.5],
            ProtocolMode::Lazy,
            1e-2,
            3.5,
        )
        .unwrap();
        let traj = integrate(&sc).unwrap();
        assert_eq!(traj.switch_times, vec![1.0, 2.0, 3.0]);
        for st in &traj.switch_times {
            assert!(
                traj.samples.iter().any(|s| s.t == *st),
                "switch time {st} missing from samples"
            );
        }
        // Times strictly increase.
        for w in traj.samples.windows(2) {
            assert!(w[1].t > w[0].t);
        }
    }

    #[test]
    fn reference_deadband_case() {
        let traj = two_agent_reference(2.0, 0.0, 1.0, 5.0, 1e-2).unwrap();
        for s in &traj.samples {
            assert_eq!(s.x[0], 2.0);
        }
        assert!((traj.final_state()[1] - 2.0).abs() < 0.05);
    }

    #[test]
    fn reference_contraction_case() {
        // gap = 10 > 2ξ: t̂ = ln(9)/2, limit 6 + ln(9)/2.
        let traj = two_agent_reference(10.0, 0.0, 1.0, 12.0, 1e-3).unwrap();
        let beta = 6.0 + 0.5 * 9.0f64.ln();
        assert!((reference_limit(10.0, 0.0, 1.0) - beta).abs() < 1e-12);
        assert!((traj.final_state()[0] - beta).abs() < 1e-6);
        assert!((traj.final_state()[1] - beta).abs() < 1e-3);
    }

    #[test]
    fn reference_equal_start_is_constant() {
        let traj = two_agent_reference(1.0, 1.0, 0.5, 2.0, 1e-2).unwrap();
        for s in &traj.samples {
            assert_eq!(s.x, vec![1.0, 1.0]);
        }
        assert!(two_agent_reference(0.0, 1.0, 1.0, 1.0, 1e-2).is_err());
    }

    #[test]
    fn csv_format_is_stable() {
        let sc = simple_scenario(ProtocolMode::Lazy);
        let traj = integrate(&sc).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,x3,u1,u2,u3,V,spread,sigma");
        let first = lines.next().unwrap();
        assert!(first.starts_with("0.0000000000000000e0,4.0000000000000000e0,"));
        assert!(first.ends_with(",0"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        // Complete 3-graph.
        assert!(Scenario::new(
            Topology::new(3, vec![vec![(1, 2), (2, 3), (1, 3)]]).unwrap(),
            SwitchingSignal::fixed(0, 1.0),
            DisturbanceRealization::zero(3, 1.0),
            vec![0.0; 3],
            ProtocolMode::Lazy,
            1e-3,
            1.0,
        )
        .is_err());
        // Step too coarse for the dwell.
        assert!(Scenario::new(
            Topology::new(3, vec![vec![(1, 2), (2, 3)], vec![(1, 2), (1, 3)]]).unwrap(),
            SwitchingSignal::periodic(&[0, 1], 1.0, 4.0).unwrap(),
            DisturbanceRealization::zero(3, 1.0),
            vec![0.0; 3],
            ProtocolMode::Lazy,
            0.5,
            4.0,
        )
        .is_err());
        // Wrong state size.
        assert!(Scenario::new(
            Topology::chain(3),
            SwitchingSignal::fixed(0, 1.0),
            DisturbanceRealization::zero(3, 1.0),
            vec![0.0; 4],
            ProtocolMode::Lazy,
            1e-3,
            1.0,
        )
        .is_err());
    }

    #[test]
    fn halving_the_step_barely_moves_the_endpoint() {
        let make = |h: f64| {
            Scenario::new(
                Topology::chain(4),
                SwitchingSignal::fixed(0, 8.0),
                DisturbanceRealization::seeded_random(4, 1.0, 0.5, 8.0, 11).unwrap(),
                vec![5.0, -1.0, 2.0, 0.0],
                ProtocolMode::Lazy,
                h,
                8.0,
            )
            .unwrap()
        };
        let coarse = integrate(&make(1e-3)).unwrap();
        let fine = integrate(&make(5e-4)).unwrap();
        let err = coarse
            .final_state()
            .iter()
            .zip(fine.final_state())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-6, "step halving moved the endpoint by {err}");
    }
}
