//! The distributed stationary control law and the lazy estimation rule.
//!
//! Agent `i` receives disturbed measurements `yᵢⱼ = xⱼ + dᵢⱼ` of its
//! neighbors' states, with `|dᵢⱼ| ≤ ξ`. The true neighbor state is therefore
//! only known to lie in `[yᵢⱼ - ξ, yᵢⱼ + ξ]`, and the linear protocol
//! `uᵢ = Σⱼ (ỹᵢⱼ - xᵢ)` depends on which estimates `ỹᵢⱼ` are picked from
//! those intervals.
//!
//! The *lazy* rule picks the estimates that minimize `|uᵢ|`. Only the sum
//! `Σⱼ ỹᵢⱼ` matters, and it has a closed three-branch form: clamp the raw
//! sum by `|Nᵢ| ξ` toward `|Nᵢ| xᵢ`, which yields a deadband feedback —
//! the agent does not move while its own state is within `ξ` of the measured
//! neighborhood mean. The *naive* rule (`ỹᵢⱼ = yᵢⱼ`) is kept only to
//! demonstrate that it admits no equilibria for generic disturbances.
//!
//! ```
//! use ubb_consensus::protocol::{control, Measurement, ProtocolMode};
//!
//! let meas = Measurement::from_pairs(&[(2, 5.0)]);
//! // Own state within ξ of the measured mean: the lazy control is zero.
//! let out = control(5.0, &meas, 1.0, ProtocolMode::Lazy).unwrap();
//! assert_eq!(out.u, 0.0);
//! // One unit above the deadband edge: the lazy control only closes the
//! // excess.
//! let out = control(7.0, &meas, 1.0, ProtocolMode::Lazy).unwrap();
//! assert_eq!(out.u, -1.0);
//! // The naive rule would close the full measured gap.
//! let out = control(7.0, &meas, 1.0, ProtocolMode::Naive).unwrap();
//! assert_eq!(out.u, -2.0);
//! ```

use crate::matrix::PairMatrix;
use crate::topology::{AgentId, Topology};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Which estimation rule the protocol uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolMode {
    /// Minimize the control magnitude over the admissible estimates.
    Lazy,
    /// Use the raw measurements as estimates. No equilibria exist for
    /// generic disturbances; kept for demonstration, not a default.
    Naive,
}

/// Disturbed neighbor measurements available to one agent at one instant.
/// Keys are exactly the agent's current neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    values: BTreeMap<AgentId, f64>,
}

impl Measurement {
    pub fn from_pairs(pairs: &[(AgentId, f64)]) -> Self {
        Measurement {
            values: pairs.iter().copied().collect(),
        }
    }

    /// Measurements `yᵢⱼ = xⱼ + dᵢⱼ` of agent `agent`'s neighbors under
    /// edgeset `k`.
    pub fn observe(
        agent: AgentId,
        x: &[f64],
        d: &PairMatrix,
        topology: &Topology,
        k: usize,
    ) -> Result<Self> {
        let neighbors = topology.neighbors(k, agent)?;
        Ok(Measurement {
            values: neighbors
                .iter()
                .map(|&j| (j, x[j - 1] + d.get(agent, j)))
                .collect(),
        })
    }

    pub fn get(&self, j: AgentId) -> Option<f64> {
        self.values.get(&j).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, f64)> + '_ {
        self.values.iter().map(|(&j, &y)| (j, y))
    }
}

/// Control value together with the estimate sum that produced it
/// (`u = lazy_sum - |Nᵢ| xᵢ`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub u: f64,
    pub lazy_sum: f64,
}

/// Closed form of the minimizing estimate sum. Boundary ties resolve to the
/// deadband branch; the branches agree in value there.
#[inline]
pub(crate) fn lazy_sum_parts(x_i: f64, sum_y: f64, degree: usize, xi: f64) -> f64 {
    let deg = degree as f64;
    let mean = sum_y / deg;
    if x_i > mean + xi {
        sum_y + deg * xi
    } else if x_i < mean - xi {
        sum_y - deg * xi
    } else {
        deg * x_i
    }
}

#[inline]
pub(crate) fn control_parts(x_i: f64, sum_y: f64, degree: usize, xi: f64, mode: ProtocolMode) -> f64 {
    let deg = degree as f64;
    match mode {
        ProtocolMode::Lazy => lazy_sum_parts(x_i, sum_y, degree, xi) - deg * x_i,
        ProtocolMode::Naive => sum_y - deg * x_i,
    }
}

fn check_inputs(meas: &Measurement, xi: f64) -> Result<()> {
    if meas.is_empty() {
        return Err(Error::InvalidArgument(
            "empty neighborhood: connected topologies preclude isolated agents".into(),
        ));
    }
    if !(xi > 0.0) {
        return Err(Error::InvalidArgument("xi must be positive".into()));
    }
    Ok(())
}

/// The estimate sum `Σⱼ ỹᵢⱼ` chosen by the lazy rule.
pub fn lazy_sum(x_i: f64, meas: &Measurement, xi: f64) -> Result<f64> {
    check_inputs(meas, xi)?;
    Ok(lazy_sum_parts(x_i, meas.sum(), meas.len(), xi))
}

/// The stationary control for one agent under the chosen rule.
pub fn control(x_i: f64, meas: &Measurement, xi: f64, mode: ProtocolMode) -> Result<ControlOutput> {
    check_inputs(meas, xi)?;
    let sum_y = meas.sum();
    let deg = meas.len();
    let lazy_sum = match mode {
        ProtocolMode::Lazy => lazy_sum_parts(x_i, sum_y, deg, xi),
        ProtocolMode::Naive => sum_y,
    };
    Ok(ControlOutput {
        u: lazy_sum - deg as f64 * x_i,
        lazy_sum,
    })
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Check, per agent, that the lazy control's sign equals the sign of the
/// undisturbed neighborhood gap `Σⱼ (xⱼ - xᵢ)` or that the control is zero.
/// On valid inputs (`|dᵢⱼ| ≤ ξ`) every entry is expected to be true.
pub fn sign_consistency(
    x: &[f64],
    d: &PairMatrix,
    topology: &Topology,
    k: usize,
    xi: f64,
) -> Result<Vec<bool>> {
    let n = topology.agent_count();
    if x.len() != n {
        return Err(Error::InvalidArgument(format!(
            "state has {} entries, topology has {} agents",
            x.len(),
            n
        )));
    }
    if d.max_abs() > xi {
        return Err(Error::InvalidArgument(
            "disturbance exceeds the bound xi".into(),
        ));
    }
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let neighbors = topology.neighbors(k, i)?;
        let sum_y: f64 = neighbors.iter().map(|&j| x[j - 1] + d.get(i, j)).sum();
        let u = control_parts(x[i - 1], sum_y, neighbors.len(), xi, ProtocolMode::Lazy);
        let gap: f64 = neighbors.iter().map(|&j| x[j - 1] - x[i - 1]).sum();
        out.push(u == 0.0 || sign(u) == sign(gap));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deadband_branch() {
        // Mean ± ξ = [4, 6] contains 5.
        let meas = Measurement::from_pairs(&[(2, 5.0)]);
        assert_eq!(lazy_sum(5.0, &meas, 1.0).unwrap(), 5.0);
    }

    #[test]
    fn upper_branch() {
        let meas = Measurement::from_pairs(&[(2, 5.0)]);
        assert_eq!(lazy_sum(7.0, &meas, 1.0).unwrap(), 6.0);
    }

    #[test]
    fn lower_branch_two_neighbors() {
        let meas = Measurement::from_pairs(&[(2, 5.0), (3, 7.0)]);
        assert_eq!(lazy_sum(2.0, &meas, 1.0).unwrap(), 10.0);
    }

    #[test]
    fn control_examples() {
        let meas = Measurement::from_pairs(&[(2, 5.0)]);
        assert_eq!(control(5.0, &meas, 1.0, ProtocolMode::Lazy).unwrap().u, 0.0);
        assert_eq!(control(7.0, &meas, 1.0, ProtocolMode::Lazy).unwrap().u, -1.0);
        assert_eq!(control(7.0, &meas, 1.0, ProtocolMode::Naive).unwrap().u, -2.0);
    }

    #[test]
    fn empty_neighborhood_rejected() {
        let meas = Measurement::from_pairs(&[]);
        assert!(lazy_sum(0.0, &meas, 1.0).is_err());
        assert!(control(0.0, &meas, 1.0, ProtocolMode::Lazy).is_err());
    }

    #[test]
    fn output_invariant() {
        let meas = Measurement::from_pairs(&[(2, 5.0), (3, 1.0)]);
        for mode in [ProtocolMode::Lazy, ProtocolMode::Naive] {
            let out = control(4.0, &meas, 0.5, mode).unwrap();
            assert_eq!(out.u, out.lazy_sum - 2.0 * 4.0);
        }
    }

    #[test]
    fn consensus_point_sign_consistency() {
        let t = Topology::chain(4);
        let x = vec![std::f64::consts::PI; 4];
        let d = PairMatrix::filled(4, 0.7);
        let ok = sign_consistency(&x, &d, &t, 0, 1.0).unwrap();
        assert!(ok.iter().all(|&b| b));
    }

    #[test]
    fn zero_gap_forces_zero_control() {
        // Agent 2 has symmetric neighbors, so its undisturbed gap is zero;
        // the lazy control must vanish no matter the disturbance.
        let t = Topology::chain(3);
        let x = vec![1.0, 0.0, -1.0];
        for d_val in [-1.0, -0.3, 0.9, 1.0] {
            let d = PairMatrix::filled(3, d_val);
            let neighbors = t.neighbors(0, 2).unwrap();
            let sum_y: f64 = neighbors.iter().map(|&j| x[j - 1] + d.get(2, j)).sum();
            let u = control_parts(x[1], sum_y, 2, 1.0, ProtocolMode::Lazy);
            assert_eq!(u, 0.0);
        }
    }

    proptest! {
        // Sign consistency over random states and in-bound disturbances.
        #[test]
        fn sign_property_random(
            xs in proptest::collection::vec(-50.0f64..50.0, 6),
            ds in proptest::collection::vec(-1.0f64..1.0, 30),
        ) {
            let t = Topology::chain(6);
            let mut d = PairMatrix::zeros(6);
            let mut idx = 0;
            for i in 1..=6usize {
                for j in 1..=6usize {
                    if i != j && idx < ds.len() {
                        d.set(i, j, ds[idx]);
                        idx += 1;
                    }
                }
            }
            let ok = sign_consistency(&xs, &d, &t, 0, 1.0).unwrap();
            prop_assert!(ok.iter().all(|&b| b));
        }

        // Deadband characterization: u = 0 exactly when the agent is within
        // ξ of the measured mean.
        #[test]
        fn deadband_characterization(x_i in -10.0f64..10.0, y1 in -10.0f64..10.0, y2 in -10.0f64..10.0) {
            let meas = Measurement::from_pairs(&[(2, y1), (3, y2)]);
            let out = control(x_i, &meas, 1.0, ProtocolMode::Lazy).unwrap();
            let mean = (y1 + y2) / 2.0;
            prop_assert_eq!(out.u == 0.0, (x_i - mean).abs() <= 1.0);
        }

        // Shift invariance: translating the agent and all measurements by a
        // common constant leaves the control unchanged (up to rounding from
        // the shifted sums).
        #[test]
        fn shift_invariance(x_i in -5.0f64..5.0, y1 in -5.0f64..5.0, y2 in -5.0f64..5.0, c in -20.0f64..20.0) {
            let meas = Measurement::from_pairs(&[(2, y1), (3, y2)]);
            let shifted = Measurement::from_pairs(&[(2, y1 + c), (3, y2 + c)]);
            let a = control(x_i, &meas, 1.0, ProtocolMode::Lazy).unwrap().u;
            let b = control(x_i + c, &shifted, 1.0, ProtocolMode::Lazy).unwrap().u;
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs())));
        }

        // Lazy minimality: |u| = max(0, |Σ yᵢⱼ - |N| xᵢ| - |N| ξ).
        #[test]
        fn lazy_magnitude_closed_form(x_i in -10.0f64..10.0, y1 in -10.0f64..10.0, y2 in -10.0f64..10.0, xi in 0.1f64..3.0) {
            let meas = Measurement::from_pairs(&[(2, y1), (3, y2)]);
            let out = control(x_i, &meas, xi, ProtocolMode::Lazy).unwrap();
            let naive_mag = (y1 + y2 - 2.0 * x_i).abs();
            let expected = (naive_mag - 2.0 * xi).max(0.0);
            prop_assert!((out.u.abs() - expected).abs() <= 1e-9 * (1.0 + expected));
        }
    }
}
