//! Equilibrium polyhedra, membership queries, and tube-radius bounds.
//!
//! For a fixed edgeset `E` and a constant disturbance `d`, the lazy protocol
//! is at rest exactly on the polyhedron
//!
//! ```text
//! P(d,E) = { x : -Σⱼ dᵢⱼ/|Nᵢ| - ξ ≤ Σⱼ xⱼ/|Nᵢ| - xᵢ ≤ -Σⱼ dᵢⱼ/|Nᵢ| + ξ  ∀i }
//! ```
//!
//! For a disturbance box `Q = [d⁻, d⁺]` the union of the `P(d,E)` over
//! `d ∈ Q` is again a polyhedron, `P(Q,E)`, obtained by widening each row
//! with `d⁺` on the lower side and `d⁻` on the upper side. With `Q = D`
//! (the full hypercube) the rows become `|gap| ≤ 2ξ`: `P(D,E)` is the set of
//! all states that some admissible disturbance can freeze.
//!
//! All of these share the translation ray `1` (adding a constant to every
//! agent changes nothing), so extremal queries pin one coordinate to zero —
//! the objectives used here, differences `xᵢ - xⱼ`, are invariant under the
//! pin choice.
//!
//! ```
//! use ubb_consensus::polyhedra::{epsilon_bar, membership, PolyhedronSpec};
//! use ubb_consensus::topology::Topology;
//!
//! let chain = Topology::chain(3);
//! // Largest possible state difference over P(D,E) at ξ = 1.
//! let eps = epsilon_bar(&chain, 0, 1.0).unwrap();
//! assert!((eps - 4.0).abs() < 1e-9);
//!
//! // Every consensus point is an equilibrium.
//! let spec = PolyhedronSpec::full_d(&chain, 0, 1.0).unwrap();
//! let report = membership(&spec, &[2.5, 2.5, 2.5], 0.0);
//! assert!(report.member);
//! ```

mod lp;

pub use lp::{solve_lp, LinearProgram, LpConstraint, LpSolution};

use crate::disturbance::DisturbanceBox;
use crate::matrix::PairMatrix;
use crate::topology::Topology;
use crate::{Error, Result};

/// Which disturbance set the polyhedron quantifies over.
#[derive(Debug, Clone, PartialEq)]
pub enum PolyhedronKind {
    /// `P(d,E)` for one constant disturbance matrix.
    ConstantD(PairMatrix),
    /// `P(Q,E)` for a disturbance box.
    Box(DisturbanceBox),
    /// `P(D,E)` for the full hypercube.
    FullD,
}

/// An equilibrium polyhedron: topology, edgeset, bound, and disturbance set.
#[derive(Debug, Clone)]
pub struct PolyhedronSpec<'t> {
    topology: &'t Topology,
    edgeset: usize,
    xi: f64,
    kind: PolyhedronKind,
}

/// Outcome of a membership query with per-agent margins. `slacks[i]` is the
/// distance of agent `i + 1`'s neighborhood gap from the nearer face
/// (negative when violated).
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipReport {
    pub member: bool,
    pub slacks: Vec<f64>,
}

impl<'t> PolyhedronSpec<'t> {
    fn check_common(topology: &Topology, edgeset: usize, xi: f64) -> Result<()> {
        if edgeset >= topology.edgeset_count() {
            return Err(Error::InvalidArgument(format!(
                "edgeset index {edgeset} out of range (have {})",
                topology.edgeset_count()
            )));
        }
        if !(xi > 0.0) {
            return Err(Error::InvalidArgument("xi must be positive".into()));
        }
        Ok(())
    }

    /// `P(d,E)` for a constant disturbance `d ∈ D`.
    pub fn constant_d(
        topology: &'t Topology,
        edgeset: usize,
        d: PairMatrix,
        xi: f64,
    ) -> Result<Self> {
        Self::check_common(topology, edgeset, xi)?;
        if d.n() != topology.agent_count() {
            return Err(Error::InvalidArgument("disturbance size mismatch".into()));
        }
        if d.max_abs() > xi * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(
                "constant disturbance exceeds the bound xi".into(),
            ));
        }
        Ok(PolyhedronSpec {
            topology,
            edgeset,
            xi,
            kind: PolyhedronKind::ConstantD(d),
        })
    }

    /// `P(Q,E)` for a disturbance box `Q ⊆ D`.
    pub fn for_box(
        topology: &'t Topology,
        edgeset: usize,
        q: DisturbanceBox,
        xi: f64,
    ) -> Result<Self> {
        Self::check_common(topology, edgeset, xi)?;
        if q.n() != topology.agent_count() {
            return Err(Error::InvalidArgument("box size mismatch".into()));
        }
        q.validate_within(xi)?;
        Ok(PolyhedronSpec {
            topology,
            edgeset,
            xi,
            kind: PolyhedronKind::Box(q),
        })
    }

    /// `P(D,E)` for the full hypercube.
    pub fn full_d(topology: &'t Topology, edgeset: usize, xi: f64) -> Result<Self> {
        Self::check_common(topology, edgeset, xi)?;
        Ok(PolyhedronSpec {
            topology,
            edgeset,
            xi,
            kind: PolyhedronKind::FullD,
        })
    }

    pub fn topology(&self) -> &Topology {
        self.topology
    }

    pub fn edgeset(&self) -> usize {
        self.edgeset
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn kind(&self) -> &PolyhedronKind {
        &self.kind
    }

    /// Per-agent admissible interval for the neighborhood gap
    /// `Σⱼ xⱼ/|Nᵢ| - xᵢ`.
    pub fn gap_bounds(&self) -> Vec<(f64, f64)> {
        let n = self.topology.agent_count();
        let adj = self.topology.adjacency(self.edgeset);
        (1..=n)
            .map(|i| {
                let deg = adj[i - 1].len().max(1) as f64;
                match &self.kind {
                    PolyhedronKind::FullD => (-2.0 * self.xi, 2.0 * self.xi),
                    PolyhedronKind::ConstantD(d) => {
                        let mean: f64 =
                            adj[i - 1].iter().map(|&j| d.get(i, j)).sum::<f64>() / deg;
                        (-mean - self.xi, -mean + self.xi)
                    }
                    PolyhedronKind::Box(q) => {
                        let mean_hi: f64 =
                            adj[i - 1].iter().map(|&j| q.hi().get(i, j)).sum::<f64>() / deg;
                        let mean_lo: f64 =
                            adj[i - 1].iter().map(|&j| q.lo().get(i, j)).sum::<f64>() / deg;
                        (-mean_hi - self.xi, -mean_lo + self.xi)
                    }
                }
            })
            .collect()
    }

    /// Neighborhood gaps of a state, one per agent.
    pub fn gaps(&self, x: &[f64]) -> Vec<f64> {
        let n = self.topology.agent_count();
        assert_eq!(x.len(), n, "state length mismatch");
        let adj = self.topology.adjacency(self.edgeset);
        (1..=n)
            .map(|i| {
                let nb = &adj[i - 1];
                let deg = nb.len().max(1) as f64;
                nb.iter().map(|&j| x[j - 1]).sum::<f64>() / deg - x[i - 1]
            })
            .collect()
    }

    /// Constraint rows of the polyhedron over the state variables, for use
    /// in linear programs.
    pub fn lp_rows(&self) -> Vec<LpConstraint> {
        let n = self.topology.agent_count();
        let adj = self.topology.adjacency(self.edgeset);
        self.gap_bounds()
            .iter()
            .enumerate()
            .map(|(i0, &(lo, hi))| {
                let mut coeffs = vec![0.0; n];
                let nb = &adj[i0];
                let deg = nb.len().max(1) as f64;
                for &j in nb {
                    coeffs[j - 1] = 1.0 / deg;
                }
                coeffs[i0] -= 1.0;
                LpConstraint::range(coeffs, lo, hi)
            })
            .collect()
    }
}

/// Default membership tolerance for a state: `1e-9 · max(1, ‖x‖∞)`.
/// Trajectory endpoints approach faces asymptotically, so exact-zero slack
/// cannot be demanded.
pub fn default_tol(x: &[f64]) -> f64 {
    1e-9 * x.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

/// Test whether `x` lies in the polyhedron, each face inflated by `tol`.
pub fn membership(spec: &PolyhedronSpec, x: &[f64], tol: f64) -> MembershipReport {
    assert!(tol >= 0.0, "tolerance must be non-negative");
    let bounds = spec.gap_bounds();
    let gaps = spec.gaps(x);
    let slacks: Vec<f64> = bounds
        .iter()
        .zip(&gaps)
        .map(|(&(lo, hi), &g)| (g - lo).min(hi - g))
        .collect();
    let member = slacks.iter().all(|&s| s >= -tol);
    MembershipReport { member, slacks }
}

/// Conjunction of membership over several polyhedra (intersections over
/// edgesets and/or boxes).
pub fn intersection_membership(specs: &[PolyhedronSpec], x: &[f64], tol: f64) -> bool {
    assert!(!specs.is_empty(), "need at least one polyhedron");
    specs.iter().all(|s| membership(s, x, tol).member)
}

/// Construct the witness disturbance that freezes a state `x ∈ P(Q,E)`:
/// componentwise, pick the box face that pushes the deadband over the
/// agent's gap (`d⁻` where the gap is nonnegative, `d⁺` where negative,
/// `d⁺` on non-edges). The result is verified to lie in `Q` and to make `x`
/// a member of `P(d̂,E)` before it is returned.
pub fn witness_disturbance(
    x: &[f64],
    q: &DisturbanceBox,
    topology: &Topology,
    edgeset: usize,
    xi: f64,
) -> Result<PairMatrix> {
    let spec = PolyhedronSpec::for_box(topology, edgeset, q.clone(), xi)?;
    let tol = default_tol(x);
    if !membership(&spec, x, tol).member {
        return Err(Error::Precondition(
            "state is not in P(Q,E); no witness disturbance exists".into(),
        ));
    }
    let gaps = spec.gaps(x);
    let n = topology.agent_count();
    let mut d_hat = PairMatrix::zeros(n);
    for i in 1..=n {
        let on_lower_face = gaps[i - 1] >= 0.0;
        for j in 1..=n {
            if i == j {
                continue;
            }
            let edge = topology.edgeset(edgeset).contains(i, j);
            let v = if edge && on_lower_face {
                q.lo().get(i, j)
            } else {
                q.hi().get(i, j)
            };
            d_hat.set(i, j, v);
        }
    }
    if !q.contains(&d_hat) {
        return Err(Error::Internal("witness left the box".into()));
    }
    let check = PolyhedronSpec::constant_d(topology, edgeset, d_hat.clone(), xi)?;
    if !membership(&check, x, tol.max(1e-12)).member {
        return Err(Error::Internal(
            "witness disturbance does not freeze the state".into(),
        ));
    }
    Ok(d_hat)
}

fn max_difference_over(spec: &PolyhedronSpec, pin: usize) -> Result<(f64, Vec<(usize, usize, f64)>)> {
    let n = spec.topology.agent_count();
    let mut rows = spec.lp_rows();
    let mut pin_row = vec![0.0; n];
    pin_row[pin - 1] = 1.0;
    rows.push(LpConstraint::range(pin_row, 0.0, 0.0));

    let mut best = 0.0f64;
    let mut per_pair = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            if i == j {
                continue;
            }
            let mut objective = vec![0.0; n];
            objective[i - 1] = 1.0;
            objective[j - 1] = -1.0;
            let lp = LinearProgram {
                objective,
                constraints: rows.clone(),
            };
            match solve_lp(&lp)? {
                LpSolution::Optimal { value, .. } => {
                    per_pair.push((i, j, value));
                    best = best.max(value);
                }
                LpSolution::Unbounded => {
                    return Err(Error::Internal(
                        "difference objective unbounded after pinning; the edgeset is \
                         not connected"
                            .into(),
                    ))
                }
                LpSolution::Infeasible => {
                    return Err(Error::Internal(
                        "equilibrium polyhedron reported empty; it always contains \
                         consensus points"
                            .into(),
                    ))
                }
            }
        }
    }
    Ok((best, per_pair))
}

/// Largest state difference achievable over `P(D,E)`: a strict upper bound
/// on the spread of any reachable equilibrium, computed with `n(n-1)` linear
/// programs. Note this is a *difference* (spread) value; the corresponding
/// tube radius is half of it.
pub fn epsilon_bar(topology: &Topology, edgeset: usize, xi: f64) -> Result<f64> {
    let spec = PolyhedronSpec::full_d(topology, edgeset, xi)?;
    Ok(max_difference_over(&spec, 1)?.0)
}

/// As [`epsilon_bar`], also returning the per-ordered-pair optima.
pub fn epsilon_bar_detailed(
    topology: &Topology,
    edgeset: usize,
    xi: f64,
) -> Result<(f64, Vec<(usize, usize, f64)>)> {
    let spec = PolyhedronSpec::full_d(topology, edgeset, xi)?;
    max_difference_over(&spec, 1)
}

/// `epsilon_bar` with an explicit pinned agent; the optimum is invariant
/// under the pin choice because the objectives ignore uniform translations.
pub(crate) fn epsilon_bar_with_pin(
    topology: &Topology,
    edgeset: usize,
    xi: f64,
    pin: usize,
) -> Result<f64> {
    let spec = PolyhedronSpec::full_d(topology, edgeset, xi)?;
    Ok(max_difference_over(&spec, pin)?.0)
}

/// Maximum spread over `P(Q,E)` (or `P(D,E)`): the tube radius `L(Q,E)` in
/// spread units. States in the tube `S(Q,E,ν)` are those whose spread does
/// not exceed `L + 2ν`.
pub fn tube_radius(spec: &PolyhedronSpec) -> Result<f64> {
    if matches!(spec.kind, PolyhedronKind::ConstantD(_)) {
        return Err(Error::InvalidArgument(
            "tube radius is defined for box or full-hypercube polyhedra".into(),
        ));
    }
    Ok(max_difference_over(spec, 1)?.0)
}

/// Least `ν ≥ 0` such that `x` lies within `ν` (∞-norm) of the polyhedron,
/// found by bisecting `ν` over LP feasibility of
/// `{ y ∈ P : ‖x - y‖∞ ≤ ν }`. Returns 0 exactly when membership at the
/// default tolerance holds.
pub fn distance_to_polyhedron(spec: &PolyhedronSpec, x: &[f64]) -> Result<f64> {
    if membership(spec, x, default_tol(x)).member {
        return Ok(0.0);
    }
    let n = spec.topology.agent_count();
    let rows = spec.lp_rows();
    let feasible = |nu: f64| -> Result<bool> {
        let mut constraints = rows.clone();
        for (i, &xi_val) in x.iter().enumerate() {
            let mut coeffs = vec![0.0; n];
            coeffs[i] = 1.0;
            constraints.push(LpConstraint::range(coeffs, xi_val - nu, xi_val + nu));
        }
        let lp = LinearProgram {
            objective: vec![0.0; n],
            constraints,
        };
        Ok(match solve_lp(&lp)? {
            LpSolution::Optimal { .. } => true,
            LpSolution::Infeasible => false,
            LpSolution::Unbounded => true,
        })
    };

    let mut hi = 1.0f64.max(default_tol(x));
    let mut doublings = 0;
    while !feasible(hi)? {
        hi *= 2.0;
        doublings += 1;
        if doublings > 80 {
            return Err(Error::Internal(
                "no finite distance found; polyhedron should be non-empty".into(),
            ));
        }
    }
    let mut lo = 0.0f64;
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
