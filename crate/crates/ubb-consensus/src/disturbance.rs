//! Bounded disturbance realizations and box-occupancy measures.
//!
//! A disturbance realization is a time function `d(t)` of per-pair
//! measurement errors with every entry bounded by `ξ`. Realizations are
//! continuous by construction (piecewise-linear interpolation between
//! knots); discontinuous step realizations are available behind the
//! explicit `step_relaxed` constructor since the continuity assumption can
//! be weakened.
//!
//! The occupancy measure [`DisturbanceRealization::mu`] returns the length
//! of the longest subinterval of a window on which the realization stays
//! inside a given box `Q ⊆ D`. It is computed exactly for constant and
//! piecewise-linear realizations (crossing times of each linear piece
//! against the box faces); seeded-random and relaxed-step realizations fall
//! back to dense sampling at [`DisturbanceRealization::mu_sampling_step`].

use crate::matrix::PairMatrix;
use crate::topology::SwitchingSignal;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The a-priori magnitude bound `ξ > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceBound {
    xi: f64,
}

impl DisturbanceBound {
    pub fn new(xi: f64) -> Result<Self> {
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "disturbance bound xi must be positive and finite, got {xi}"
            )));
        }
        Ok(DisturbanceBound { xi })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }
}

/// A sub-box `Q = [d⁻, d⁺]` of the disturbance hypercube, given
/// componentwise on ordered agent pairs. A box may be degenerate
/// (`d⁻ = d⁺`); it only needs to be non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceBox {
    lo: PairMatrix,
    hi: PairMatrix,
}

impl DisturbanceBox {
    pub fn new(lo: PairMatrix, hi: PairMatrix) -> Result<Self> {
        if lo.n() != hi.n() {
            return Err(Error::InvalidArgument("box bound sizes differ".into()));
        }
        for (i, j, l) in lo.iter_pairs() {
            if !(l <= hi.get(i, j)) {
                return Err(Error::InvalidArgument(format!(
                    "box is empty at pair ({i}, {j}): {l} > {}",
                    hi.get(i, j)
                )));
            }
        }
        Ok(DisturbanceBox { lo, hi })
    }

    /// Box with every off-diagonal component in `[lo, hi]`.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        DisturbanceBox::new(PairMatrix::filled(n, lo), PairMatrix::filled(n, hi))
    }

    /// The full hypercube `D = [-ξ, ξ]`.
    pub fn full(n: usize, xi: f64) -> Self {
        DisturbanceBox {
            lo: PairMatrix::filled(n, -xi),
            hi: PairMatrix::filled(n, xi),
        }
    }

    pub fn n(&self) -> usize {
        self.lo.n()
    }

    pub fn lo(&self) -> &PairMatrix {
        &self.lo
    }

    pub fn hi(&self) -> &PairMatrix {
        &self.hi
    }

    pub fn contains(&self, d: &PairMatrix) -> bool {
        d.within(&self.lo, &self.hi)
    }

    pub fn center(&self) -> PairMatrix {
        PairMatrix::lerp(&self.lo, &self.hi, 0.5)
    }

    /// Check that the box lies inside the hypercube of radius `xi`.
    pub fn validate_within(&self, xi: f64) -> Result<()> {
        for (i, j, l) in self.lo.iter_pairs() {
            let h = self.hi.get(i, j);
            if l < -xi - 1e-12 * xi || h > xi + 1e-12 * xi {
                return Err(Error::InvalidArgument(format!(
                    "box component ({i}, {j}) = [{l}, {h}] exceeds the bound xi = {xi}"
                )));
            }
        }
        Ok(())
    }
}

/// How a realization was generated; serialized scenario files carry this so
/// that seeded realizations are reproducible.
#[derive(Debug, Clone, PartialEq)]
pub enum RealizationKind {
    Constant,
    PiecewiseLinear,
    SeededRandom { seed: u64, knot_dt: f64 },
    /// Discontinuous steps; opts out of the continuity guarantee.
    RelaxedStep,
}

/// A concrete disturbance time function `d(t) ∈ D`. Internally every kind
/// is a knot sequence; continuous kinds interpolate linearly between knots
/// while the relaxed step kind holds each knot's value. Outside the knot
/// range the realization extends by its boundary value.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceRealization {
    n: usize,
    bound: DisturbanceBound,
    kind: RealizationKind,
    times: Vec<f64>,
    values: Vec<PairMatrix>,
}

/// Snapshot of the interpolation state at one instant; cheap per-entry
/// lookups for the integrator's stage evaluations.
pub(crate) struct Sampler<'a> {
    v0: &'a PairMatrix,
    v1: &'a PairMatrix,
    w: f64,
}

impl Sampler<'_> {
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let a = self.v0.get(i, j);
        a + (self.v1.get(i, j) - a) * self.w
    }
}

impl DisturbanceRealization {
    fn check_values(values: &[PairMatrix], n: usize, xi: f64) -> Result<()> {
        for v in values {
            if v.n() != n {
                return Err(Error::InvalidArgument("knot matrix size mismatch".into()));
            }
            if v.max_abs() > xi * (1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!(
                    "disturbance entry {} exceeds the bound xi = {xi}",
                    v.max_abs()
                )));
            }
        }
        Ok(())
    }

    fn check_times(times: &[f64]) -> Result<()> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("need at least one knot".into()));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidArgument(
                    "knot times must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    /// Constant-in-time disturbance.
    pub fn constant(d: PairMatrix, xi: f64) -> Result<Self> {
        let bound = DisturbanceBound::new(xi)?;
        let n = d.n();
        Self::check_values(std::slice::from_ref(&d), n, xi)?;
        Ok(DisturbanceRealization {
            n,
            bound,
            kind: RealizationKind::Constant,
            times: vec![0.0],
            values: vec![d],
        })
    }

    /// The zero disturbance.
    pub fn zero(n: usize, xi: f64) -> Self {
        DisturbanceRealization::constant(PairMatrix::zeros(n), xi).expect("zero realization")
    }

    /// Piecewise-linear interpolation through `(time, matrix)` knots.
    pub fn piecewise_linear(knots: Vec<(f64, PairMatrix)>, xi: f64) -> Result<Self> {
        let bound = DisturbanceBound::new(xi)?;
        let times: Vec<f64> = knots.iter().map(|(t, _)| *t).collect();
        let values: Vec<PairMatrix> = knots.into_iter().map(|(_, v)| v).collect();
        Self::check_times(&times)?;
        let n = values[0].n();
        Self::check_values(&values, n, xi)?;
        Ok(DisturbanceRealization {
            n,
            bound,
            kind: RealizationKind::PiecewiseLinear,
            times,
            values,
        })
    }

    /// Discontinuous step realization: holds each knot's value until the
    /// next knot. Explicitly opts out of the continuity guarantee.
    pub fn step_relaxed(knots: Vec<(f64, PairMatrix)>, xi: f64) -> Result<Self> {
        let mut real = Self::piecewise_linear(knots, xi)?;
        real.kind = RealizationKind::RelaxedStep;
        Ok(real)
    }

    /// Continuous seeded-random realization: knots every `knot_dt` seconds
    /// with entries drawn uniformly from `[-ξ, ξ]`, linearly interpolated.
    /// Identical `(n, xi, knot_dt, horizon, seed)` reproduce the identical
    /// function.
    pub fn seeded_random(n: usize, xi: f64, knot_dt: f64, horizon: f64, seed: u64) -> Result<Self> {
        let bound = DisturbanceBound::new(xi)?;
        if !(knot_dt > 0.0) {
            return Err(Error::InvalidArgument("knot_dt must be positive".into()));
        }
        if !(horizon >= 0.0) {
            return Err(Error::InvalidArgument("horizon must be non-negative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = (horizon / knot_dt).ceil() as usize + 1;
        let mut times = Vec::with_capacity(count);
        let mut values = Vec::with_capacity(count);
        for k in 0..count {
            let mut m = PairMatrix::zeros(n);
            for i in 1..=n {
                for j in 1..=n {
                    if i != j {
                        m.set(i, j, rng.gen_range(-xi..=xi));
                    }
                }
            }
            times.push(k as f64 * knot_dt);
            values.push(m);
        }
        Ok(DisturbanceRealization {
            n,
            bound,
            kind: RealizationKind::SeededRandom { seed, knot_dt },
            times,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn xi(&self) -> f64 {
        self.bound.xi()
    }

    pub fn bound(&self) -> DisturbanceBound {
        self.bound
    }

    pub fn kind(&self) -> &RealizationKind {
        &self.kind
    }

    pub(crate) fn knots(&self) -> (&[f64], &[PairMatrix]) {
        (&self.times, &self.values)
    }

    pub(crate) fn is_step(&self) -> bool {
        matches!(self.kind, RealizationKind::RelaxedStep)
    }

    /// Sampling step used by `mu` for kinds without exact interval
    /// arithmetic (seeded-random and relaxed-step): documented here rather
    /// than buried in the computation.
    pub fn mu_sampling_step(&self) -> Option<f64> {
        match self.kind {
            RealizationKind::SeededRandom { knot_dt, .. } => Some((knot_dt / 64.0).min(1e-2)),
            RealizationKind::RelaxedStep => Some(1e-2),
            _ => None,
        }
    }

    pub(crate) fn sampler_at(&self, t: f64) -> Sampler<'_> {
        let idx = self.times.partition_point(|&kt| kt <= t);
        if idx == 0 {
            return Sampler {
                v0: &self.values[0],
                v1: &self.values[0],
                w: 0.0,
            };
        }
        let i0 = idx - 1;
        if i0 + 1 >= self.times.len() || self.is_step() {
            return Sampler {
                v0: &self.values[i0],
                v1: &self.values[i0],
                w: 0.0,
            };
        }
        let t0 = self.times[i0];
        let t1 = self.times[i0 + 1];
        Sampler {
            v0: &self.values[i0],
            v1: &self.values[i0 + 1],
            w: (t - t0) / (t1 - t0),
        }
    }

    /// The disturbance matrix at time `t`. Deterministic for a fixed
    /// realization; every entry lies in `[-ξ, ξ]`.
    pub fn evaluate(&self, t: f64) -> PairMatrix {
        let s = self.sampler_at(t);
        if s.w == 0.0 {
            s.v0.clone()
        } else {
            PairMatrix::lerp(s.v0, s.v1, s.w)
        }
    }

    /// Length of the longest subinterval of `[t1, t2]` on which `d(t)` stays
    /// inside `q`. Exact for constant and piecewise-linear kinds; dense
    /// sampling otherwise.
    pub fn mu(&self, q: &DisturbanceBox, t1: f64, t2: f64) -> Result<f64> {
        self.mu_filtered(q, t1, t2, None)
    }

    /// Longest subinterval of `[t1, t2]` on which both `d(t) ∈ q` and the
    /// switching signal is at edgeset `k`.
    pub fn mu_switched(
        &self,
        signal: &SwitchingSignal,
        q: &DisturbanceBox,
        k: usize,
        t1: f64,
        t2: f64,
    ) -> Result<f64> {
        if t2 > signal.horizon() * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "window end {t2} is beyond the signal horizon {}",
                signal.horizon()
            )));
        }
        self.mu_filtered(q, t1, t2, Some((signal, k)))
    }

    fn mu_filtered(
        &self,
        q: &DisturbanceBox,
        t1: f64,
        t2: f64,
        signal: Option<(&SwitchingSignal, usize)>,
    ) -> Result<f64> {
        if !(t1 >= 0.0) || !(t2 >= t1) {
            return Err(Error::InvalidArgument(format!(
                "window [{t1}, {t2}] must satisfy 0 <= t1 <= t2"
            )));
        }
        if q.n() != self.n {
            return Err(Error::InvalidArgument("box size mismatch".into()));
        }
        if let Some((sig, k)) = signal {
            let count = sig.segments().iter().map(|s| s.edgeset).max().unwrap_or(0) + 1;
            if k >= count.max(1) && !sig.segments().iter().any(|s| s.edgeset == k) {
                // Index never active: mu is trivially 0, but an index that
                // is structurally absent is allowed; nothing to reject.
            }
        }
        if t2 == t1 {
            let inside = q.contains(&self.evaluate(t1))
                && signal.map_or(Ok(true), |(sig, k)| {
                    sig.active_edgeset(t1).map(|a| a == k)
                })?;
            return Ok(if inside { 0.0 } else { 0.0 });
        }

        let exact = !matches!(
            self.kind,
            RealizationKind::SeededRandom { .. } | RealizationKind::RelaxedStep
        );
        let mut cuts: Vec<f64> = vec![t1, t2];
        if exact {
            for &kt in &self.times {
                if kt > t1 && kt < t2 {
                    cuts.push(kt);
                }
            }
            self.push_crossings(q, t1, t2, &mut cuts);
        } else {
            let step = self.mu_sampling_step().unwrap_or(1e-2);
            let count = ((t2 - t1) / step).ceil() as usize;
            for s in 1..count {
                cuts.push(t1 + s as f64 * (t2 - t1) / count as f64);
            }
        }
        if let Some((sig, _)) = signal {
            for st in sig.switch_times() {
                if st > t1 && st < t2 {
                    cuts.push(st);
                }
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * t2.abs().max(1.0));

        let mut best = 0.0f64;
        let mut run = 0.0f64;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            let mut inside = q.contains(&self.evaluate(mid));
            if inside {
                if let Some((sig, k)) = signal {
                    inside = sig.active_edgeset(mid)? == k;
                }
            }
            if inside {
                run += b - a;
                best = best.max(run);
            } else {
                run = 0.0;
            }
        }
        Ok(best)
    }

    fn push_crossings(&self, q: &DisturbanceBox, t1: f64, t2: f64, cuts: &mut Vec<f64>) {
        let segments = self.times.len().saturating_sub(1);
        for s in 0..segments {
            let (ta, tb) = (self.times[s], self.times[s + 1]);
            if tb <= t1 || ta >= t2 {
                continue;
            }
            let (va, vb) = (&self.values[s], &self.values[s + 1]);
            for (i, j, a) in va.iter_pairs() {
                let b = vb.get(i, j);
                if a == b {
                    continue;
                }
                for bound in [q.lo().get(i, j), q.hi().get(i, j)] {
                    let w = (bound - a) / (b - a);
                    if w > 0.0 && w < 1.0 {
                        let tc = ta + w * (tb - ta);
                        if tc > t1 && tc < t2 {
                            cuts.push(tc);
                        }
                    }
                }
            }
        }
    }

    /// Build a piecewise-linear realization that, inside every window of
    /// length `m_window`, dwells in each of the given boxes for strictly
    /// longer than `delta`. The construction cycles through the box centers
    /// with continuous transitions and re-verifies the property with `mu`
    /// over a sliding window before returning.
    pub fn box_recurrent(
        boxes: &[DisturbanceBox],
        xi: f64,
        m_window: f64,
        delta: f64,
        horizon: f64,
        seed: u64,
    ) -> Result<Self> {
        let bound = DisturbanceBound::new(xi)?;
        if boxes.is_empty() {
            return Err(Error::InvalidArgument("need at least one box".into()));
        }
        if !(delta >= 0.0) || !(delta < m_window) {
            return Err(Error::Construction(format!(
                "need 0 <= delta < M, got delta = {delta}, M = {m_window}"
            )));
        }
        if horizon < m_window {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} is shorter than the window M = {m_window}"
            )));
        }
        let n = boxes[0].n();
        for b in boxes {
            if b.n() != n {
                return Err(Error::InvalidArgument("box sizes differ".into()));
            }
            b.validate_within(xi)?;
        }
        let r = boxes.len();

        if r == 1 {
            // A single box is occupied permanently by sitting at its center.
            let mut real =
                DisturbanceRealization::constant(boxes[0].center(), xi)?;
            real.kind = RealizationKind::PiecewiseLinear;
            real.verify_box_recurrence(boxes, m_window, delta, horizon)?;
            return Ok(real);
        }

        // Worst-case analysis for a periodic schedule with dwell L and
        // transition T per box: any window of length M >= R(L+T) + L
        // contains a complete dwell in every box. Spend 20% of the slack on
        // transitions.
        let rf = r as f64;
        let slack = m_window - (rf + 1.0) * delta;
        if slack <= 0.0 {
            return Err(Error::Construction(format!(
                "infeasible: {} dwell slots of {delta} s plus transitions do not fit in M = {m_window}",
                r + 1
            )));
        }
        let transition = 0.2 * slack / rf;
        let dwell = (m_window - rf * transition) / (rf + 1.0);

        let centers: Vec<PairMatrix> = boxes.iter().map(|b| b.center()).collect();
        let start = (seed as usize) % r;
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut t = 0.0;
        let mut idx = start;
        while t <= horizon + m_window {
            times.push(t);
            values.push(centers[idx].clone());
            times.push(t + dwell);
            values.push(centers[idx].clone());
            t += dwell + transition;
            idx = (idx + 1) % r;
        }
        let real = DisturbanceRealization {
            n,
            bound,
            kind: RealizationKind::PiecewiseLinear,
            times,
            values,
        };
        real.verify_box_recurrence(boxes, m_window, delta, horizon)?;
        Ok(real)
    }

    fn verify_box_recurrence(
        &self,
        boxes: &[DisturbanceBox],
        m_window: f64,
        delta: f64,
        horizon: f64,
    ) -> Result<()> {
        let span = horizon - m_window;
        let steps = 64usize;
        for q in boxes {
            for s in 0..=steps {
                let t = span * s as f64 / steps as f64;
                let occupancy = self.mu(q, t, t + m_window)?;
                if !(occupancy > delta) {
                    return Err(Error::Construction(format!(
                        "box occupancy {occupancy} in window [{t}, {}] does not exceed delta = {delta}",
                        t + m_window
                    )));
                }
            }
        }
        Ok(())
    }
}
