//! Discrete Newtonian calculus: difference quotients, norms, traces and the
//! boundary integrals entering the Neumann functional.
//!
//! Two gradient notions are exposed. Edge quotients |Δu|/ℓ drive the
//! energy Σ ω_e (|Δu|/ℓ_e)^p; node upper gradients (the largest incident
//! quotient) carry the pointwise upper-gradient semantics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling;
use crate::space::{Domain, NodeIdx, SpaceDiagnostics};

/// A real value on every node of the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeField(Vec<f64>);

impl NodeField {
    pub fn new(values: Vec<f64>) -> Self {
        NodeField(values)
    }

    pub fn zeros(n: usize) -> Self {
        NodeField(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        NodeField(vec![c; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn get(&self, i: NodeIdx) -> f64 {
        self.0[i]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> NodeField {
        NodeField(self.0.iter().map(|&x| f(x)).collect())
    }

    /// a·self + b·other
    pub fn combine(&self, a: f64, other: &NodeField, b: f64) -> NodeField {
        NodeField(self.0.iter().zip(&other.0).map(|(x, y)| a * x + b * y).collect())
    }

    pub fn to_map(&self, domain: &Domain) -> BTreeMap<String, f64> {
        self.0.iter().enumerate().map(|(i, &v)| (domain.id(i).to_string(), v)).collect()
    }

    /// Builds a field from an id → value map covering every node of the closed domain.
    pub fn from_map(domain: &Domain, map: &BTreeMap<String, f64>) -> Result<Self> {
        let mut values = vec![0.0; domain.node_count()];
        for (id, &v) in map {
            values[domain.index_of(id)?] = v;
        }
        if let Some(&i) = domain.closure().iter().find(|&&i| !map.contains_key(domain.id(i))) {
            return Err(Error::arg(format!("missing value for node `{}`", domain.id(i))));
        }
        Ok(NodeField(values))
    }

    fn check(&self, domain: &Domain) -> Result<()> {
        if self.0.len() != domain.node_count() {
            return Err(Error::arg(format!("field has {} values for {} nodes", self.0.len(), domain.node_count())));
        }
        if let Some(&i) = domain.closure().iter().find(|&&i| !self.0[i].is_finite()) {
            return Err(Error::arg(format!("non-finite value at node `{}`", domain.id(i))));
        }
        Ok(())
    }
}

/// A real value on every boundary node, in [`Domain::boundary`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryField(Vec<f64>);

impl BoundaryField {
    pub fn new(values: Vec<f64>) -> Self {
        BoundaryField(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Value at the boundary node with graph index `node`.
    pub fn at(&self, domain: &Domain, node: NodeIdx) -> Option<f64> {
        domain.boundary_position(node).map(|k| self.0[k])
    }

    pub fn to_map(&self, domain: &Domain) -> BTreeMap<String, f64> {
        domain.boundary().iter().zip(&self.0).map(|(&i, &v)| (domain.id(i).to_string(), v)).collect()
    }

    pub fn from_map(domain: &Domain, map: &BTreeMap<String, f64>) -> Result<Self> {
        for id in map.keys() {
            let i = domain.index_of(id)?;
            if !domain.is_boundary(i) {
                return Err(Error::arg(format!("node `{id}` is not a boundary node")));
            }
        }
        domain
            .boundary()
            .iter()
            .map(|&i| {
                map.get(domain.id(i))
                    .copied()
                    .ok_or_else(|| Error::arg(format!("missing boundary value for `{}`", domain.id(i))))
            })
            .collect::<Result<Vec<_>>>()
            .map(BoundaryField)
    }

    /// Σ_z |h(z)| P(z)
    pub fn l1_norm(&self, domain: &Domain) -> f64 {
        domain.boundary().iter().zip(&self.0).map(|(&z, h)| h.abs() * domain.perimeter(z)).sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientField {
    /// |u(a) − u(b)| / ℓ per graph edge.
    pub edge_quotients: Vec<f64>,
    /// Largest incident edge quotient inside the closed domain (zero on exterior nodes).
    pub node_upper: Vec<f64>,
}

pub fn upper_gradient(domain: &Domain, u: &NodeField) -> GradientField {
    let g = domain.graph();
    let edge_quotients: Vec<f64> = g.edges().iter().map(|e| (u.get(e.a) - u.get(e.b)).abs() / e.len).collect();
    let mut node_upper = vec![0.0f64; g.node_count()];
    for (e, &q) in g.edges().iter().zip(&edge_quotients) {
        if domain.in_closure(e.a) && domain.in_closure(e.b) {
            node_upper[e.a] = node_upper[e.a].max(q);
            node_upper[e.b] = node_upper[e.b].max(q);
        }
    }
    GradientField { edge_quotients, node_upper }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonianNorm {
    /// (Σ_Ω |u|^p μ)^{1/p}
    pub lp_norm: f64,
    /// (Σ_e ω_e (|Δu|/ℓ_e)^p)^{1/p} over the energy edges.
    pub grad_lp_norm: f64,
}

impl NewtonianNorm {
    pub fn total(&self) -> f64 {
        self.lp_norm + self.grad_lp_norm
    }
}

/// Σ_e ω_e (|Δu|/ℓ_e)^p over energy edges, optionally restricted to edges
/// with both endpoints in `within`.
pub(crate) fn edge_energy(domain: &Domain, u: &[f64], p: f64, within: Option<&[bool]>) -> f64 {
    let g = domain.graph();
    domain
        .energy_edges()
        .iter()
        .filter(|&&k| {
            within.is_none_or(|m| {
                let e = g.edge(k);
                m[e.a] && m[e.b]
            })
        })
        .map(|&k| {
            let e = g.edge(k);
            domain.edge_weight(k) * ((u[e.a] - u[e.b]).abs() / e.len).powf(p)
        })
        .sum()
}

pub fn newtonian_norm(domain: &Domain, u: &NodeField, p: f64) -> Result<NewtonianNorm> {
    if !(p >= 1.0) {
        return Err(Error::arg(format!("exponent p must be at least 1, got {p}")));
    }
    u.check(domain)?;
    let lp = domain.interior().iter().map(|&i| u.get(i).abs().powf(p) * domain.mu(i)).sum::<f64>().powf(1.0 / p);
    let grad = edge_energy(domain, u.values(), p, None).powf(1.0 / p);
    Ok(NewtonianNorm { lp_norm: lp, grad_lp_norm: grad })
}

/// Boundary values of `u`: the node values on ∂Ω.
pub fn trace(domain: &Domain, u: &NodeField) -> BoundaryField {
    BoundaryField(domain.boundary().iter().map(|&z| u.get(z)).collect())
}

/// μ-average of `u` over B(z, r) ∩ Ω.
pub fn trace_ball_average(domain: &Domain, u: &NodeField, z: NodeIdx, r: f64) -> Result<f64> {
    let ball = domain.ball(z, r)?;
    let mass = domain.interior_measure(&ball);
    if !(mass > 0.0) {
        return Err(Error::BelowResolution(r));
    }
    let sum: f64 = ball.iter().filter(|&&i| domain.is_interior(i)).map(|&i| u.get(i) * domain.mu(i)).sum();
    Ok(sum / mass)
}

/// Σ_z h(z) P(z)
pub fn boundary_integral(domain: &Domain, h: &BoundaryField) -> Result<f64> {
    if h.len() != domain.boundary().len() {
        return Err(Error::arg(format!(
            "missing boundary value: {} values for {} boundary nodes",
            h.len(),
            domain.boundary().len()
        )));
    }
    Ok(domain.boundary().iter().zip(h.values()).map(|(&z, v)| v * domain.perimeter(z)).sum())
}

/// ‖u − u_Ω‖_{L^p(Ω)} / ‖g_u‖_p with the edge gradient norm; `None` for
/// locally constant `u`.
pub fn sobolev_ratio(domain: &Domain, u: &NodeField, p: f64) -> Option<f64> {
    let grad = edge_energy(domain, u.values(), p, None).powf(1.0 / p);
    if !(grad > 0.0) {
        return None;
    }
    let mass = domain.total_interior_measure();
    let mean = domain.interior().iter().map(|&i| u.get(i) * domain.mu(i)).sum::<f64>() / mass;
    let dev =
        domain.interior().iter().map(|&i| (u.get(i) - mean).abs().powf(p) * domain.mu(i)).sum::<f64>().powf(1.0 / p);
    Some(dev / grad)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SobolevReport {
    pub ratio_max: f64,
    pub witness_trial: usize,
    pub samples: usize,
    pub excluded: usize,
    pub gradient: String,
}

/// Sampled lower bound for the constant in ‖u − u_Ω‖_p ≤ C ‖g_u‖_p.
pub fn check_sobolev_embedding(domain: &Domain, p: f64, trials: usize, seed: u64) -> Result<SobolevReport> {
    if !(p > 1.0) {
        return Err(Error::arg(format!("p must exceed 1, got {p}")));
    }
    if domain.closure().len() < 2 {
        return Err(Error::arg("need at least two nodes"));
    }
    let ratios: Vec<Option<f64>> =
        (0..trials).map(|k| sobolev_ratio(domain, &sampling::trial_field(domain, seed, k), p)).collect();
    let mut best: Option<(f64, usize)> = None;
    for (k, r) in ratios.iter().enumerate() {
        if let Some(r) = *r {
            if best.is_none_or(|(b, _)| r > b) {
                best = Some((r, k));
            }
        }
    }
    let (ratio_max, witness_trial) = best.ok_or(Error::AllConstant)?;
    let samples = ratios.iter().filter(|r| r.is_some()).count();
    Ok(SobolevReport { ratio_max, witness_trial, samples, excluded: trials - samples, gradient: "edge".into() })
}

/// Exponents of the local trace inequality for N^{1,p}(Ω) → L^{p̃}(∂Ω).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceExponents {
    pub s: f64,
    pub p: f64,
    pub p_tilde: f64,
    pub p_star: f64,
    pub epsilon: f64,
    pub aleph: f64,
}

impl TraceExponents {
    /// Validates p < p̃ < p* = p(s−1)/(s−p); ε defaults to half its admissible range.
    pub fn new(s: f64, p: f64, p_tilde: f64, ahlfors: bool) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::arg(format!("p must exceed 1, got {p}")));
        }
        if p >= s {
            return Err(Error::TheoryInapplicable(format!("p = {p} ≥ s = {s}: finite target exponent not covered")));
        }
        let p_star = p * (s - 1.0) / (s - p);
        if !(p < p_tilde && p_tilde < p_star) {
            return Err(Error::EmptyWindow { lower: p, upper: p_star.min(p_tilde) });
        }
        let epsilon = if ahlfors { 0.0 } else { Self::default_epsilon(s, p_tilde, p_star) };
        let aleph = s * (1.0 / p - 1.0 / p_tilde) + epsilon;
        Ok(TraceExponents { s, p, p_tilde, p_star, epsilon, aleph })
    }

    pub fn default_epsilon(s: f64, p_tilde: f64, p_star: f64) -> f64 {
        0.5 * (s - 1.0) * (1.0 / p_tilde - 1.0 / p_star)
    }

    /// Exponent of r in front of ‖g_u‖: 1 − 1/p̃ − ℵ.
    pub fn radius_exponent(&self) -> f64 {
        1.0 - 1.0 / self.p_tilde - self.aleph
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceSample {
    pub center: String,
    pub radius: f64,
    pub trial: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceReport {
    pub exponents: TraceExponents,
    pub ratio_max: f64,
    pub witness: Option<TraceSample>,
    pub samples: usize,
    pub excluded: usize,
    pub gradient: String,
}

/// Left and right sides of the local trace inequality on B(z, r) with unit constant.
pub fn trace_inequality_sides(
    domain: &Domain,
    u: &NodeField,
    z: NodeIdx,
    r: f64,
    ex: &TraceExponents,
    ahlfors_scale: f64,
) -> Result<(f64, f64)> {
    let ball = domain.ball(z, r)?;
    let mut inside = vec![false; domain.node_count()];
    ball.iter().for_each(|&i| inside[i] = true);
    let lhs = ball
        .iter()
        .filter(|&&i| domain.is_boundary(i))
        .map(|&i| u.get(i).abs().powf(ex.p_tilde) * domain.perimeter(i))
        .sum::<f64>()
        .powf(1.0 / ex.p_tilde);
    let mass = domain.interior_measure(&ball);
    if !(mass > 0.0) {
        return Err(Error::BelowResolution(r));
    }
    let aleph = if ahlfors_scale > 0.0 && r >= ahlfors_scale {
        ex.aleph + TraceExponents::default_epsilon(ex.s, ex.p_tilde, ex.p_star)
    } else {
        ex.aleph
    };
    let grad = edge_energy(domain, u.values(), ex.p, Some(&inside)).powf(1.0 / ex.p);
    let l1: f64 = ball.iter().filter(|&&i| domain.is_interior(i)).map(|&i| u.get(i).abs() * domain.mu(i)).sum();
    let per = domain.perimeter_measure(&ball);
    let rhs = r.powf(1.0 - 1.0 / ex.p_tilde - aleph) * grad + per.powf(1.0 / ex.p_tilde) / mass * l1;
    Ok((lhs, rhs))
}

/// Empirical constant of the local trace inequality over sampled boundary balls.
pub fn check_trace_inequality(
    domain: &Domain,
    p: f64,
    p_tilde: f64,
    diag: &SpaceDiagnostics,
    trials: usize,
    seed: u64,
) -> Result<TraceReport> {
    let ex = TraceExponents::new(diag.mass_exponent, p, p_tilde, diag.ahlfors_scale > 0.0)?;
    let resolution = domain.graph().max_edge_len();
    let diam = domain.closure_diameter();
    let mut radii = Vec::new();
    let mut r = diam / 2.0;
    while r > resolution {
        radii.push(r);
        r /= 2.0;
    }
    if radii.is_empty() {
        radii.push(1.5 * resolution);
    }
    let centers = sampling::choose(domain.boundary(), 16, seed);
    let mut witness: Option<TraceSample> = None;
    let (mut samples, mut excluded) = (0, 0);
    for k in 0..trials {
        let u = sampling::trial_field(domain, seed, k);
        for &z in &centers {
            for &r in &radii {
                let (lhs, rhs) = match trace_inequality_sides(domain, &u, z, r, &ex, diag.ahlfors_scale) {
                    Ok(v) => v,
                    Err(Error::BelowResolution(_)) => {
                        excluded += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                if !(rhs > 0.0) {
                    excluded += 1;
                    continue;
                }
                samples += 1;
                let ratio = lhs / rhs;
                if witness.as_ref().is_none_or(|w| ratio > w.ratio) {
                    witness =
                        Some(TraceSample { center: domain.id(z).to_string(), radius: r, trial: k, lhs, rhs, ratio });
                }
            }
        }
    }
    Ok(TraceReport {
        exponents: ex,
        ratio_max: witness.as_ref().map_or(0.0, |w| w.ratio),
        witness,
        samples,
        excluded,
        gradient: "edge".into(),
    })
}

/// ‖Tu‖_{L^1(∂Ω)} / (‖u‖_{L^p(Ω)} + ‖g_u‖_p), `None` when the denominator vanishes.
pub fn global_trace_ratio(domain: &Domain, u: &NodeField, p: f64) -> Option<f64> {
    let norm = newtonian_norm(domain, u, p).ok()?;
    let den = norm.total();
    (den > 0.0).then(|| trace(domain, u).l1_norm(domain) / den)
}

/// A constant C with ‖Tu‖_{L^1(∂Ω)} ≤ C ‖g_u‖_p for every μ-mean-zero u.
///
/// For mean-zero u every value lies within the oscillation of u, which is
/// bounded by Σ_e ℓ_e q_e over positive-weight energy edges; Hölder then gives
/// Σ ℓ q ≤ (Σ ω q^p)^{1/p} (Σ ℓ^{p'} ω^{−p'/p})^{1/p'}.
pub fn certified_trace_constant(domain: &Domain, p: f64) -> f64 {
    let q = p / (p - 1.0);
    let g = domain.graph();
    let dual: f64 = domain
        .energy_edges()
        .iter()
        .filter(|&&k| domain.edge_weight(k) > 0.0)
        .map(|&k| g.edge(k).len.powf(q) * domain.edge_weight(k).powf(-q / p))
        .sum();
    domain.total_perimeter() * dual.powf(1.0 / q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::fixtures::*;
    use crate::space::DomainBuilder;

    fn field(d: &Domain, vals: &[(&str, f64)]) -> NodeField {
        let mut v = vec![0.0; d.node_count()];
        for (id, x) in vals {
            v[d.index_of(id).unwrap()] = *x;
        }
        NodeField::new(v)
    }

    fn two_node() -> Domain {
        let mut b = DomainBuilder::new();
        let x = b.interior("x", 1.0, Some(vec![0.0]));
        let y = b.interior("y", 1.0, Some(vec![1.0]));
        b.edge(x, y, 1.0);
        b.build().unwrap()
    }

    #[test]
    fn gradient_on_path() {
        let d = three_node();
        let u = field(&d, &[("a", 1.0), ("b", 0.0), ("c", -1.0)]);
        let g = upper_gradient(&d, &u);
        assert_eq!(g.edge_quotients, vec![1.0, 1.0]);
        assert_eq!(g.node_upper[d.index_of("b").unwrap()], 1.0);
        let c = upper_gradient(&d, &NodeField::constant(3, 4.0));
        assert!(c.edge_quotients.iter().chain(&c.node_upper).all(|&x| x == 0.0));
    }

    #[test]
    fn gradient_of_coordinate_on_grid() {
        let d = bare_grid(4);
        let u = NodeField::new((0..16).map(|k| (k % 4) as f64).collect());
        let g = upper_gradient(&d, &u);
        for (e, q) in d.graph().edges().iter().zip(&g.edge_quotients) {
            let horizontal = e.b == e.a + 1;
            assert_eq!(*q, if horizontal { 1.0 } else { 0.0 });
        }
        assert!(g.node_upper.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn norms_on_model() {
        let d = three_node();
        let u = field(&d, &[("a", 1.0), ("b", 0.0), ("c", -1.0)]);
        let n = newtonian_norm(&d, &u, 2.0).unwrap();
        assert_eq!((n.lp_norm, n.grad_lp_norm), (0.0, 1.0));
        let c = newtonian_norm(&d, &NodeField::constant(3, -2.5), 2.0).unwrap();
        assert_eq!((c.lp_norm, c.grad_lp_norm), (2.5, 0.0));
        let m = newtonian_norm(&d, &u.map(|x| -3.0 * x), 2.0).unwrap();
        assert!((m.grad_lp_norm - 3.0).abs() < 1e-15);
        assert!(newtonian_norm(&d, &u, 0.5).is_err());
    }

    #[test]
    fn trace_and_boundary_integral() {
        let d = three_node();
        let u = field(&d, &[("a", 1.0), ("b", 0.0), ("c", -1.0)]);
        let t = trace(&d, &u);
        assert_eq!(t.values(), &[1.0, -1.0]);
        let v = field(&d, &[("a", 2.0), ("b", 5.0), ("c", 7.0)]);
        let lin = trace(&d, &u.combine(2.0, &v, -3.0));
        let sep: Vec<f64> = t.values().iter().zip(trace(&d, &v).values()).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        assert_eq!(lin.values(), &sep[..]);

        let h = BoundaryField::new(vec![-1.0, -1.0]);
        assert_eq!(boundary_integral(&d, &h).unwrap(), -2.0);
        assert_eq!(boundary_integral(&d, &BoundaryField::new(vec![0.0, 0.0])).unwrap(), 0.0);
        assert!(boundary_integral(&d, &BoundaryField::new(vec![1.0])).is_err());
    }

    #[test]
    fn ball_average_on_model() {
        let d = three_node();
        let a = d.index_of("a").unwrap();
        let u = field(&d, &[("a", 1.0), ("b", 0.0), ("c", -1.0)]);
        assert_eq!(trace_ball_average(&d, &u, a, 1.5).unwrap(), 0.0);
        assert_eq!(trace_ball_average(&d, &NodeField::constant(3, 5.0), a, 7.0).unwrap(), 5.0);
        assert!(matches!(trace_ball_average(&d, &u, a, 0.5), Err(Error::BelowResolution(_))));
    }

    #[test]
    fn sobolev_ratios_by_hand() {
        let d = three_node();
        let u = field(&d, &[("a", 1.0), ("b", 0.0), ("c", -1.0)]);
        assert_eq!(sobolev_ratio(&d, &u, 2.0), Some(0.0));
        let t = two_node();
        let v = NodeField::new(vec![0.0, 1.0]);
        let r = sobolev_ratio(&t, &v, 2.0).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 1e-15);
        let r7 = sobolev_ratio(&t, &v.map(|x| 7.0 * x), 2.0).unwrap();
        assert!((r7 - r).abs() < 1e-15);
        assert_eq!(sobolev_ratio(&t, &NodeField::constant(2, 1.0), 2.0), None);
        let rep = check_sobolev_embedding(&t, 2.0, 6, 1).unwrap();
        assert!((rep.ratio_max - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn trace_window_arithmetic() {
        let ex = TraceExponents::new(2.0, 1.5, 2.0, false).unwrap();
        assert!((ex.p_star - 3.0).abs() < 1e-15);
        assert!(TraceExponents::new(2.0, 1.5, 3.5, false).is_err());
        assert!(matches!(TraceExponents::new(2.0, 2.0, 3.0, false), Err(Error::TheoryInapplicable(_))));
        let a = TraceExponents::new(2.0, 1.5, 2.0, true).unwrap();
        assert_eq!(a.epsilon, 0.0);
        assert!((a.aleph - 2.0 * (1.0 / 1.5 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn constant_field_trace_ratio_is_one() {
        let d = three_node();
        let ex = TraceExponents::new(2.0, 1.5, 2.0, false).unwrap();
        let a = d.index_of("a").unwrap();
        let (lhs, rhs) = trace_inequality_sides(&d, &NodeField::constant(3, 1.0), a, 1.5, &ex, 0.0).unwrap();
        assert!((lhs / rhs - 1.0).abs() < 1e-15);
        let (l0, r0) = trace_inequality_sides(&d, &NodeField::zeros(3), a, 1.5, &ex, 0.0).unwrap();
        assert_eq!((l0, r0), (0.0, 0.0));
    }

    #[test]
    fn upper_gradient_path_inequality() {
        let d = bare_grid(4);
        let u = sampling::trial_field(&d, 9, 0);
        let g = upper_gradient(&d, &u);
        let graph = d.graph();
        // all simple paths with up to 4 edges
        fn walk(
            graph: &crate::space::MetricGraph,
            u: &NodeField,
            g: &GradientField,
            path: &mut Vec<usize>,
            bound: f64,
        ) {
            let start = path[0];
            let last = *path.last().unwrap();
            assert!((u.get(last) - u.get(start)).abs() <= bound + 1e-12);
            if path.len() > 4 {
                return;
            }
            for &(next, k) in graph.neighbors(last) {
                if path.contains(&next) {
                    continue;
                }
                path.push(next);
                walk(graph, u, g, path, bound + g.node_upper[last] * graph.edge(k).len);
                path.pop();
            }
        }
        for s in 0..d.node_count() {
            walk(graph, &u, &g, &mut vec![s], 0.0);
        }
    }

    #[test]
    fn certified_constant_bounds_mean_zero_fields() {
        let d = bare_grid(5);
        // attach two boundary nodes so the trace is non-trivial
        let mut b = DomainBuilder::new();
        for j in 0..5 {
            for i in 0..5 {
                b.interior(format!("{i}_{j}"), 1.0, Some(vec![i as f64, j as f64]));
            }
        }
        for k in 0..25 {
            if k % 5 + 1 < 5 {
                b.edge(k, k + 1, 1.0);
            }
            if k + 5 < 25 {
                b.edge(k, k + 5, 1.0);
            }
        }
        let z0 = b.boundary("z0", 1.0, None);
        let z1 = b.boundary("z1", 2.0, None);
        b.edge(z0, 0, 1.0).edge(z1, 24, 1.0);
        let dom = b.build().unwrap();
        assert_eq!(d.node_count(), 25);
        let c = certified_trace_constant(&dom, 2.0);
        for k in 0..30 {
            let mut u = sampling::trial_field(&dom, 4, k).into_values();
            let mean = dom.interior().iter().map(|&i| u[i]).sum::<f64>() / 25.0;
            u.iter_mut().for_each(|x| *x -= mean);
            let u = NodeField::new(u);
            let n = newtonian_norm(&dom, &u, 2.0).unwrap();
            assert!(trace(&dom, &u).l1_norm(&dom) <= c * n.grad_lp_norm + 1e-12);
        }
    }
}
