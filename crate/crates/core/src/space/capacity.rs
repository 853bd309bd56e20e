//! Relative p-capacities and the dyadic fine-thinness sum.

use serde::{Deserialize, Serialize};

use super::{Domain, NodeIdx};
use crate::error::{Error, Result};
use crate::minimize::{self, Method, Objective, Settings, Term};

fn capacity_settings() -> Settings {
    Settings {
        tol_grad: 1e-12,
        tol_energy: 1e-16,
        max_iter: 20_000,
        irls_epsilon: 1e-12,
        method: Method::Irls,
        keep_iterates: false,
    }
}

/// cap_p(E, B2): least Σ_e ω_e |Δu/ℓ_e|^p over all graph edges with u = 1 on E
/// and u = 0 off B2. Returns +∞ when E is not contained in B2.
pub fn relative_capacity(domain: &Domain, e: &[NodeIdx], b2: &[NodeIdx], p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::arg(format!("p must exceed 1, got {p}")));
    }
    let g = domain.graph();
    for &i in e.iter().chain(b2) {
        g.check_index(i)?;
    }
    if e.is_empty() {
        return Ok(0.0);
    }
    let n = g.node_count();
    let mut inside = vec![false; n];
    b2.iter().for_each(|&i| inside[i] = true);
    if let Some(&i) = e.iter().find(|&&i| !inside[i]) {
        log::warn!("capacity infeasible: node `{}` of E lies outside B2", g.id(i));
        return Ok(f64::INFINITY);
    }
    let mut fixed: Vec<Option<f64>> = inside.iter().map(|&b| if b { None } else { Some(0.0) }).collect();
    e.iter().for_each(|&i| fixed[i] = Some(1.0));
    let terms = g
        .edges()
        .iter()
        .enumerate()
        .map(|(k, ed)| Term { a: ed.a, b: ed.b, coef: domain.edge_weight(k) / ed.len.powf(p) })
        .filter(|t| t.coef > 0.0)
        .collect();
    let mut obj = Objective { n, p, terms, linear: vec![0.0; n], fixed, mean_weights: None };
    obj.pin_floating()?;
    let init: Vec<f64> = obj.fixed.iter().map(|f| f.unwrap_or(0.5)).collect();
    let out = minimize::minimize(&obj, &init, &capacity_settings());
    if !out.converged {
        log::warn!("capacity solve stopped at residual {:e}", out.residual);
    }
    Ok(out.energy)
}

/// Comparison of cap_p(B(x,r), B(x,2r)) with μ(B(x,r))/r^p.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapacityBounds {
    pub center: String,
    pub radius: f64,
    pub capacity: f64,
    pub ball_measure: f64,
    /// Smallest C with μ(B)/(C r^p) ≤ cap.
    pub lower_constant: f64,
    /// Smallest C with cap ≤ C μ(B)/r^p.
    pub upper_constant: f64,
}

impl CapacityBounds {
    pub fn constant(&self) -> f64 {
        self.lower_constant.max(self.upper_constant)
    }
}

pub fn capacity_ball_bounds(domain: &Domain, x: NodeIdx, r: f64, p: f64) -> Result<CapacityBounds> {
    let ball = domain.ball(x, r)?;
    let ball2 = domain.ball(x, 2.0 * r)?;
    let capacity = relative_capacity(domain, &ball, &ball2, p)?;
    let mass = domain.measure(&ball);
    let scale = mass / r.powf(p);
    Ok(CapacityBounds {
        center: domain.id(x).to_string(),
        radius: r,
        capacity,
        ball_measure: mass,
        lower_constant: scale / capacity,
        upper_constant: capacity / scale,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThinnessReport {
    pub sum: f64,
    /// (level j, radius, term) for every resolved level.
    pub terms: Vec<(usize, f64, f64)>,
    pub skipped_levels: Vec<usize>,
}

/// Σ_j (cap(B(x,ρ_j)∖U, B(x,2ρ_j)) / cap(B(x,ρ_j), B(x,2ρ_j)))^{1/(p−1)}
/// with ρ_j = base_radius·2^{−j}, j = 1..levels.
pub fn fine_thinness_sum(
    domain: &Domain,
    x: NodeIdx,
    u_set: &[NodeIdx],
    p: f64,
    levels: usize,
    base_radius: f64,
) -> Result<ThinnessReport> {
    if !u_set.contains(&x) {
        return Err(Error::arg(format!("node `{}` is not in U", domain.id(x))));
    }
    if levels == 0 || !(base_radius > 0.0) {
        return Err(Error::arg("need at least one dyadic level and a positive base radius"));
    }
    let mut report = ThinnessReport { sum: 0.0, terms: Vec::new(), skipped_levels: Vec::new() };
    for j in 1..=levels {
        let rho = base_radius * 0.5f64.powi(j as i32);
        let ball = domain.ball(x, rho)?;
        let ball2 = domain.ball(x, 2.0 * rho)?;
        let denom = if ball.len() > 1 { relative_capacity(domain, &ball, &ball2, p)? } else { 0.0 };
        if !(denom > 0.0 && denom.is_finite()) {
            log::info!("thinness level {j} (radius {rho}) below resolution; skipped");
            report.skipped_levels.push(j);
            continue;
        }
        let outside: Vec<NodeIdx> = ball.iter().copied().filter(|i| !u_set.contains(i)).collect();
        let num = relative_capacity(domain, &outside, &ball2, p)?;
        let term = (num / denom).powf(1.0 / (p - 1.0));
        report.sum += term;
        report.terms.push((j, rho, term));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::fixtures::*;

    /// Pattern search on the free nodes with halving steps.
    fn brute_capacity(d: &Domain, e: &[usize], b2: &[usize], p: f64) -> f64 {
        let n = d.node_count();
        let free: Vec<usize> = b2.iter().copied().filter(|i| !e.contains(i)).collect();
        let energy = |u: &[f64]| -> f64 {
            d.graph()
                .edges()
                .iter()
                .enumerate()
                .map(|(k, ed)| d.edge_weight(k) * ((u[ed.a] - u[ed.b]).abs() / ed.len).powf(p))
                .sum()
        };
        let mut u = vec![0.0; n];
        e.iter().for_each(|&i| u[i] = 1.0);
        let mut step = 0.25;
        let mut best = energy(&u);
        while step > 1e-9 {
            let mut improved = false;
            for &i in &free {
                for dir in [-1.0, 1.0] {
                    let old = u[i];
                    u[i] = (old + dir * step).clamp(0.0, 1.0);
                    let v = energy(&u);
                    if v < best - 1e-15 {
                        best = v;
                        improved = true;
                    } else {
                        u[i] = old;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
        best
    }

    #[test]
    fn five_node_path_capacity() {
        let d = bare_path(5);
        let b2 = d.ball(2, 2.0).unwrap();
        assert_eq!(b2, vec![1, 2, 3]);
        let cap = relative_capacity(&d, &[2], &b2, 2.0).unwrap();
        assert!((cap - 1.0).abs() < 1e-10, "{cap}");
    }

    #[test]
    fn forced_and_empty_cases() {
        let d = bare_path(5);
        // E = B2: only the two cut edges carry energy, ω = 1, ℓ = 1
        let cap = relative_capacity(&d, &[1, 2, 3], &[1, 2, 3], 3.0).unwrap();
        assert!((cap - 2.0).abs() < 1e-14);
        assert_eq!(relative_capacity(&d, &[], &[1, 2, 3], 2.0).unwrap(), 0.0);
        assert_eq!(relative_capacity(&d, &[0], &[1, 2], 2.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn capacity_monotonicity_against_brute_force() {
        let d = bare_path(5);
        for p in [1.5, 2.0, 3.0] {
            let small = relative_capacity(&d, &[2], &[1, 2, 3], p).unwrap();
            let big_e = relative_capacity(&d, &[2, 3], &[1, 2, 3], p).unwrap();
            let big_b = relative_capacity(&d, &[2], &[0, 1, 2, 3], p).unwrap();
            assert!(small <= big_e + 1e-12);
            assert!(big_b <= small + 1e-12);
            for (e, b2, v) in
                [(&[2][..], &[1, 2, 3][..], small), (&[2, 3], &[1, 2, 3], big_e), (&[2], &[0, 1, 2, 3], big_b)]
            {
                let oracle = brute_capacity(&d, e, b2, p);
                assert!((v - oracle).abs() < 1e-6, "p={p}: {v} vs {oracle}");
            }
        }
    }

    #[test]
    fn ball_capacity_bounds_on_grid() {
        let d = bare_grid(12);
        let x = d.index_of("6_6").unwrap();
        for r in [1.5, 2.5] {
            let b = capacity_ball_bounds(&d, x, r, 2.0).unwrap();
            assert!(b.capacity > 0.0 && b.constant() < 20.0, "{b:?}");
        }
    }

    #[test]
    fn thinness_sums() {
        let d = bare_grid(17);
        let x = d.index_of("8_8").unwrap();
        let all: Vec<usize> = (0..d.node_count()).collect();
        let r = fine_thinness_sum(&d, x, &all, 2.0, 3, 8.0).unwrap();
        assert_eq!(r.sum, 0.0);
        assert_eq!(r.terms.len(), 2);

        let far = d.index_of("0_0").unwrap();
        let most: Vec<usize> = all.iter().copied().filter(|&i| i != far).collect();
        assert_eq!(fine_thinness_sum(&d, x, &most, 2.0, 3, 8.0).unwrap().sum, 0.0);

        let alone = fine_thinness_sum(&d, x, &[x], 2.0, 3, 8.0).unwrap();
        assert_eq!(alone.terms.len(), 2, "{alone:?}");
        assert!(alone.terms.iter().all(|t| t.2 > 0.5 && t.2 <= 1.0 + 1e-9), "{alone:?}");

        let fine = fine_thinness_sum(&d, x, &all, 2.0, 6, 8.0).unwrap();
        assert_eq!(fine.skipped_levels, vec![3, 4, 5, 6]);
        assert!(fine_thinness_sum(&d, x, &most[..3], 2.0, 3, 8.0).is_err());
    }
}
