//! Sampled estimates for the standing assumptions on (X, d, μ) and Ω.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ball_from_distances, Domain, NodeIdx};
use crate::calculus::{upper_gradient, NodeField};
use crate::error::{Error, Result};
use crate::sampling;

/// Spread max/min of μ(B(x,r))/r^s tolerated for Ahlfors regularity.
const AHLFORS_SPREAD: f64 = 10.0;
/// Perimeter comparison constants above this are flagged irregular.
const PERIMETER_IRREGULAR: f64 = 1e3;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpaceDiagnostics {
    pub doubling_constant: f64,
    pub mass_exponent: f64,
    pub mass_constant: f64,
    pub poincare_constant: f64,
    pub density_constant: f64,
    pub perimeter_reg_constant: f64,
    pub perimeter_irregular: bool,
    /// Largest sampled radius below which balls are Ahlfors s-regular; 0 if none.
    pub ahlfors_scale: f64,
    pub radii: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct DiagnoseOptions {
    pub centers: usize,
    pub trials: usize,
    pub p: f64,
    pub seed: u64,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        DiagnoseOptions { centers: 16, trials: 24, p: 2.0, seed: 0 }
    }
}

/// Caches single-source distances.
struct Distances<'a> {
    domain: &'a Domain,
    rows: HashMap<NodeIdx, Vec<f64>>,
}

impl<'a> Distances<'a> {
    fn new(domain: &'a Domain) -> Self {
        Distances { domain, rows: HashMap::new() }
    }

    fn row(&mut self, i: NodeIdx) -> &[f64] {
        let g = self.domain.graph();
        self.rows.entry(i).or_insert_with(|| g.distances_from(i))
    }

    fn ball_measure(&mut self, i: NodeIdx, r: f64) -> f64 {
        let g = self.domain.graph();
        self.row(i).iter().enumerate().filter(|(_, &d)| d < r).map(|(j, _)| g.mu(j)).sum()
    }
}

/// Radii (2^j + 1/2)·ℓ_max up to half the diameter of the closed domain;
/// the half edge keeps ball boundaries off the lattice distances.
pub fn dyadic_radii(domain: &Domain) -> Vec<f64> {
    let top = domain.closure_diameter() / 2.0;
    let h = domain.graph().max_edge_len();
    let mut out = vec![1.5 * h];
    let mut k = 2.0;
    while (k + 0.5) * h <= top {
        out.push((k + 0.5) * h);
        k *= 2.0;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassExponent {
    pub s: f64,
    pub c: f64,
    /// Least-squares slope before the s > 1 correction (NaN without pairs r < R).
    pub fitted_slope: f64,
    pub pairs: usize,
}

impl MassExponent {
    pub fn holds(&self, ratio: f64, t: f64) -> bool {
        ratio >= self.c * t.powf(self.s) * (1.0 - 1e-12)
    }
}

/// One sampled comparison μ(B(x,r))/μ(B(y,R)) with t = r/R, x ∈ B(y,R).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassPair {
    pub ratio: f64,
    pub t: f64,
    pub concentric: bool,
}

pub fn mass_ratio_pairs(domain: &Domain, centers: &[NodeIdx], radii: &[f64]) -> Vec<MassPair> {
    let g = domain.graph();
    let mut dist = Distances::new(domain);
    let mut pairs = Vec::new();
    for &y in centers {
        for &big in radii {
            let ball: Vec<NodeIdx> =
                ball_from_distances(dist.row(y), big).into_iter().filter(|&j| g.mu(j) > 0.0).collect();
            let denom: f64 = ball.iter().map(|&j| g.mu(j)).sum();
            if !(denom > 0.0) {
                continue;
            }
            for &x in &ball {
                for &small in radii.iter().filter(|&&r| r <= big) {
                    let ratio = dist.ball_measure(x, small) / denom;
                    pairs.push(MassPair { ratio, t: small / big, concentric: x == y });
                }
            }
        }
    }
    pairs
}

pub fn estimate_mass_exponent(
    domain: &Domain,
    sample_centers: usize,
    radii: &[f64],
    seed: u64,
) -> Result<MassExponent> {
    if radii.is_empty() || sample_centers == 0 {
        return Err(Error::arg("need at least one radius and one center"));
    }
    if domain.node_count() < 2 {
        return Err(Error::arg("mass exponent undefined on a single node"));
    }
    let g = domain.graph();
    let positive: Vec<NodeIdx> = (0..g.node_count()).filter(|&i| g.mu(i) > 0.0).collect();
    let centers = sampling::choose(&positive, sample_centers, seed);
    Ok(fit_mass_exponent(&mass_ratio_pairs(domain, &centers, radii)))
}

/// Log-log least squares over the lower envelope of concentric ratios
/// (smallest ratio per value of r/R); C is half the largest constant valid on
/// every sampled pair.
pub fn fit_mass_exponent(pairs: &[MassPair]) -> MassExponent {
    let mut envelope: Vec<(f64, f64)> = Vec::new();
    for m in pairs.iter().filter(|m| m.concentric) {
        match envelope.iter_mut().find(|(t, _)| (t - m.t).abs() <= 1e-12 * m.t) {
            Some(slot) => slot.1 = slot.1.min(m.ratio),
            None => envelope.push((m.t, m.ratio)),
        }
    }
    let pts: Vec<(f64, f64)> = envelope.iter().map(|&(t, q)| (t.ln(), q.ln())).collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            f64::NAN
        }
    } else {
        f64::NAN
    };
    let s = if slope.is_finite() { slope.max(1.0 + 1e-6) } else { 1.0 + 1e-6 };
    // half the sampled minimum, so that unsampled centers of similar balls are covered
    let c = 0.5 * pairs.iter().map(|m| m.ratio / m.t.powf(s)).fold(f64::INFINITY, f64::min).min(1.0);
    MassExponent { s, c, fitted_slope: slope, pairs: pairs.len() }
}

/// max μ(B(z,2r))/μ(B(z,r)) over sampled closure centers and radii.
pub fn estimate_doubling_constant(domain: &Domain, sample_centers: usize, radii: &[f64], seed: u64) -> f64 {
    let centers = sampling::choose(domain.closure(), sample_centers, seed);
    let mut dist = Distances::new(domain);
    let mut worst = 1.0f64;
    for &z in &centers {
        for &r in radii {
            let small = dist.ball_measure(z, r);
            if small > 0.0 {
                worst = worst.max(dist.ball_measure(z, 2.0 * r) / small);
            }
        }
    }
    worst
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityReport {
    pub worst_ratio: f64,
    pub witness_node: String,
    pub witness_radius: f64,
}

/// min μ(B(z,r)∩Ω)/μ(B(z,r)) over closure nodes and dyadic radii up to diam(Ω̄).
pub fn check_density(domain: &Domain) -> DensityReport {
    let shortest = if domain.graph().edge_count() == 0 { 1.0 } else { domain.graph().min_edge_len() };
    let top = domain.closure_diameter().max(shortest);
    let floor = shortest / 2.0;
    let mut radii = Vec::new();
    let mut r = top;
    while r >= floor {
        radii.push(r);
        r /= 2.0;
    }
    let first = domain.closure()[0];
    let mut report =
        DensityReport { worst_ratio: 1.0, witness_node: domain.id(first).to_string(), witness_radius: top };
    for &z in domain.closure() {
        let d = domain.graph().distances_from(z);
        for &r in &radii {
            let ball = ball_from_distances(&d, r);
            let total = domain.measure(&ball);
            if total > 0.0 {
                let ratio = domain.interior_measure(&ball) / total;
                if ratio < report.worst_ratio {
                    report =
                        DensityReport { worst_ratio: ratio, witness_node: domain.id(z).to_string(), witness_radius: r };
                }
            }
        }
    }
    report
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerimeterRegularity {
    /// Smallest C with μ(B)/(C r) ≤ P(B).
    pub c_low: f64,
    /// Smallest C with P(B) ≤ C μ(B)/r.
    pub c_high: f64,
    pub irregular: bool,
    pub samples: usize,
}

pub fn check_perimeter_regularity(domain: &Domain, radii: &[f64]) -> Result<PerimeterRegularity> {
    if radii.is_empty() {
        return Err(Error::arg("radius grid is empty"));
    }
    if domain.boundary().is_empty() {
        return Err(Error::arg("domain has no boundary"));
    }
    let (mut c_low, mut c_high, mut samples) = (0.0f64, 0.0f64, 0);
    for &z in domain.boundary() {
        let d = domain.graph().distances_from(z);
        for &r in radii {
            let ball = ball_from_distances(&d, r);
            let mass = domain.measure(&ball);
            if !(mass > 0.0) {
                continue;
            }
            let per = domain.perimeter_measure(&ball);
            c_low = c_low.max(mass / (r * per));
            c_high = c_high.max(r * per / mass);
            samples += 1;
        }
    }
    Ok(PerimeterRegularity {
        c_low,
        c_high,
        irregular: c_low > PERIMETER_IRREGULAR || c_high > PERIMETER_IRREGULAR,
        samples,
    })
}

/// ⨍_{B∩Ω}|u − u_B| / (rad · (⨍_{B∩Ω} g_u^p)^{1/p}) with the node upper gradient;
/// `None` when g_u vanishes on the ball.
pub fn poincare_ratio(domain: &Domain, ball: &[NodeIdx], radius: f64, u: &NodeField, p: f64) -> Option<f64> {
    let g = upper_gradient(domain, u).node_upper;
    let inner: Vec<NodeIdx> = ball.iter().copied().filter(|&i| domain.is_interior(i)).collect();
    let mass = domain.interior_measure(&inner);
    if !(mass > 0.0) {
        return None;
    }
    let avg = |f: &dyn Fn(NodeIdx) -> f64| inner.iter().map(|&i| f(i) * domain.mu(i)).sum::<f64>() / mass;
    let grad = avg(&|i| g[i].powf(p)).powf(1.0 / p);
    if !(grad > 0.0) {
        return None;
    }
    let mean = avg(&|i| u.get(i));
    Some(avg(&|i| (u.get(i) - mean).abs()) / (radius * grad))
}

pub fn estimate_poincare_constant(
    domain: &Domain,
    ball: &[NodeIdx],
    radius: f64,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::arg(format!("p must exceed 1, got {p}")));
    }
    if ball.iter().filter(|&&i| domain.is_interior(i)).count() < 2 || !(radius > 0.0) {
        return Err(Error::arg("ball meets Ω in fewer than two nodes"));
    }
    (0..trials)
        .filter_map(|k| poincare_ratio(domain, ball, radius, &sampling::trial_field(domain, seed, k), p))
        .reduce(f64::max)
        .ok_or(Error::AllConstant)
}

pub fn diagnose(domain: &Domain, opts: &DiagnoseOptions) -> Result<SpaceDiagnostics> {
    let radii = dyadic_radii(domain);
    let mass = estimate_mass_exponent(domain, opts.centers, &radii, opts.seed)?;
    let doubling = estimate_doubling_constant(domain, opts.centers, &radii, opts.seed);
    let density = check_density(domain);
    let (per_const, irregular) = match check_perimeter_regularity(domain, &radii) {
        Ok(r) => (r.c_low.max(r.c_high).max(1.0), r.irregular),
        Err(_) => (1.0, false),
    };
    let mut poincare = 0.0f64;
    for &z in &sampling::choose(domain.closure(), opts.centers, opts.seed) {
        let d = domain.graph().distances_from(z);
        for &r in &radii {
            let ball = ball_from_distances(&d, r);
            match estimate_poincare_constant(domain, &ball, r, opts.p, opts.trials, opts.seed) {
                Ok(c) => poincare = poincare.max(c),
                Err(Error::InvalidArgument(_)) | Err(Error::AllConstant) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(SpaceDiagnostics {
        doubling_constant: doubling,
        mass_exponent: mass.s,
        mass_constant: mass.c,
        poincare_constant: poincare,
        density_constant: 1.0 / density.worst_ratio,
        perimeter_reg_constant: per_const,
        perimeter_irregular: irregular,
        ahlfors_scale: ahlfors_scale(domain, mass.s, &radii, opts.centers, opts.seed),
        radii,
    })
}

/// Largest r0 in the grid with max/min of μ(B(x,r))/r^s bounded by
/// [`AHLFORS_SPREAD`] over all sampled radii r ≤ r0.
fn ahlfors_scale(domain: &Domain, s: f64, radii: &[f64], centers: usize, seed: u64) -> f64 {
    let centers = sampling::choose(domain.closure(), centers, seed);
    let mut dist = Distances::new(domain);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut scale = 0.0;
    for &r in radii {
        for &x in &centers {
            let m = dist.ball_measure(x, r);
            if m > 0.0 {
                let q = m / r.powf(s);
                lo = lo.min(q);
                hi = hi.max(q);
            }
        }
        if hi > 0.0 && hi / lo <= AHLFORS_SPREAD {
            scale = r;
        } else {
            break;
        }
    }
    scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::fixtures::*;
    use crate::space::DomainBuilder;

    #[test]
    fn mass_exponent_of_path_and_grid() {
        let path = bare_path(9);
        let m = estimate_mass_exponent(&path, 9, &dyadic_radii(&path), 1).unwrap();
        assert!((m.s - 1.0).abs() <= 0.2, "{m:?}");

        let grid = bare_grid(16);
        let radii = dyadic_radii(&grid);
        assert_eq!(radii, vec![1.5, 2.5, 4.5, 8.5]);
        let m = estimate_mass_exponent(&grid, 24, &radii, 2).unwrap();
        assert!((m.s - 2.0).abs() <= 0.3, "{m:?}");
        // every center outside the fitting sample
        let fitted = sampling::choose(&(0..256).collect::<Vec<_>>(), 24, 2);
        let fresh: Vec<usize> = (0..256).filter(|i| !fitted.contains(i)).collect();
        for q in mass_ratio_pairs(&grid, &fresh, &radii) {
            assert!(m.holds(q.ratio, q.t), "{q:?}");
        }
    }

    #[test]
    fn single_pair_gives_minimal_exponent() {
        let m = fit_mass_exponent(&[MassPair { ratio: 1.0, t: 1.0, concentric: true }]);
        assert_eq!(m.s, 1.0 + 1e-6);
        assert!(m.c <= 1.0);
    }

    #[test]
    fn doubling_rescan() {
        let grid = bare_grid(8);
        let radii = [1.5, 3.0];
        let cd = estimate_doubling_constant(&grid, 64, &radii, 0);
        for z in 0..64 {
            let d = grid.graph().distances_from(z);
            for r in radii {
                let small = grid.measure(&ball_from_distances(&d, r));
                let big = grid.measure(&ball_from_distances(&d, 2.0 * r));
                assert!(big <= cd * small);
            }
        }
    }

    #[test]
    fn density_without_exterior_is_one() {
        assert_eq!(check_density(&three_node()).worst_ratio, 1.0);
        let mut b = DomainBuilder::new();
        b.interior("x", 1.0, None);
        assert_eq!(check_density(&b.build().unwrap()).worst_ratio, 1.0);
    }

    #[test]
    fn density_of_half_space() {
        // 21×21 ambient grid: columns < 10 interior, column 10 boundary, rest exterior
        let n = 21;
        let mut b = DomainBuilder::new();
        for j in 0..n {
            for i in 0..n {
                let id = format!("{i}_{j}");
                let c = Some(vec![i as f64, j as f64]);
                match i {
                    _ if i < 10 => b.interior(id, 1.0, c),
                    10 => b.boundary(id, 1.0, c),
                    _ => b.exterior(id, 1.0, c),
                };
            }
        }
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                if i + 1 < n {
                    b.edge(k, k + 1, 1.0);
                }
                if j + 1 < n {
                    b.edge(k, k + n, 1.0);
                }
            }
        }
        let d = b.build().unwrap();
        let rep = check_density(&d);
        assert!((rep.worst_ratio - 0.5).abs() < 0.05, "{rep:?}");
        assert!(rep.witness_node.starts_with("10_"));
    }

    #[test]
    fn perimeter_regularity_examples() {
        let mut b = DomainBuilder::new();
        let z = b.boundary("z", 1.0, None);
        let x = b.interior("x", 1.0, None);
        b.edge(z, x, 1.0);
        let d = b.build().unwrap();
        let r = check_perimeter_regularity(&d, &[1.5]).unwrap();
        // μ(B) = 1, P(B) = 1, r = 1.5
        assert!((r.c_low - 1.0 / 1.5).abs() < 1e-15);
        assert!((r.c_high - 1.5).abs() < 1e-15);

        let mut b = DomainBuilder::new();
        let z = b.boundary("z", 1e6, None);
        let x = b.interior("x", 1.0, None);
        let y = b.interior("y", 1.0, None);
        b.edge(z, x, 1.0).edge(x, y, 1.0);
        let d = b.build().unwrap();
        let r = check_perimeter_regularity(&d, &[1.5]).unwrap();
        assert!((r.c_high - 1.5e6).abs() < 1e-6);
        assert!(r.irregular);
        assert!(check_perimeter_regularity(&d, &[]).is_err());
    }

    #[test]
    fn poincare_examples() {
        let mut b = DomainBuilder::new();
        let x = b.interior("x", 1.0, Some(vec![0.0]));
        let y = b.interior("y", 1.0, Some(vec![1.0]));
        b.edge(x, y, 1.0);
        let d = b.build().unwrap();
        let r = poincare_ratio(&d, &[0, 1], 1.0, &NodeField::new(vec![0.0, 1.0]), 2.0).unwrap();
        assert_eq!(r, 0.5);
        assert_eq!(poincare_ratio(&d, &[0, 1], 1.0, &NodeField::constant(2, 3.0), 2.0), None);

        let l = 400;
        let path = bare_path(l + 1);
        let ball: Vec<usize> = (0..=l).collect();
        let u = NodeField::new((0..=l).map(|i| i as f64).collect());
        let r = poincare_ratio(&path, &ball, l as f64 + 0.5, &u, 2.0).unwrap();
        assert!((r - 0.25).abs() < 0.01, "{r}");
        assert!(estimate_poincare_constant(&path, &[0], 1.0, 2.0, 4, 0).is_err());
        assert!(estimate_poincare_constant(&path, &ball, 1.0, 1.0, 4, 0).is_err());
    }
}
