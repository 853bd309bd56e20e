//! Minimization engine for edge p-energies
//!
//!   E(u) = Σ_e c_e |u(a_e) − u(b_e)|^p + Σ_i l_i u_i
//!
//! with optional fixed (Dirichlet) values and an optional weighted
//! mean-zero normalization. Shared by the Neumann solver and the capacity
//! computations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub(crate) struct Term {
    pub a: usize,
    pub b: usize,
    pub coef: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Iteratively reweighted least squares with line search.
    Irls,
    /// Gradient descent with Barzilai–Borwein steps and backtracking.
    Descent,
}

#[derive(Clone, Debug)]
pub(crate) struct Objective {
    pub n: usize,
    pub p: f64,
    pub terms: Vec<Term>,
    pub linear: Vec<f64>,
    pub fixed: Vec<Option<f64>>,
    /// Weights of the mean-zero normalization, if any.
    pub mean_weights: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub(crate) struct Settings {
    pub tol_grad: f64,
    pub tol_energy: f64,
    pub max_iter: usize,
    pub irls_epsilon: f64,
    pub method: Method,
    /// Record every accepted iterate in [`Outcome::iterates`].
    pub keep_iterates: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct Outcome {
    pub u: Vec<f64>,
    pub energy: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub history: Vec<f64>,
    pub fell_back: bool,
    pub iterates: Vec<Vec<f64>>,
}

/// |t|^{p-2} t with the value 0 at t = 0.
#[inline]
pub(crate) fn signed_power(t: f64, p: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.abs().powf(p - 1.0) * t.signum()
    }
}

impl Objective {
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (k, t) in self.terms.iter().enumerate() {
            adj[t.a].push(k);
            adj[t.b].push(k);
        }
        adj
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        let mut e = 0.0;
        for t in &self.terms {
            e += t.coef * (u[t.a] - u[t.b]).abs().powf(self.p);
        }
        for (l, x) in self.linear.iter().zip(u) {
            e += l * x;
        }
        e
    }

    /// I(v) − I(u), evaluated edge by edge so that it keeps its relative
    /// accuracy when the two fields are close.
    pub fn energy_change(&self, u: &[f64], v: &[f64]) -> f64 {
        let step: Vec<f64> = v.iter().zip(u).map(|(a, b)| a - b).collect();
        let mut de = 0.0;
        for t in &self.terms {
            let a = u[t.a] - u[t.b];
            let b = v[t.a] - v[t.b];
            let delta = step[t.a] - step[t.b];
            de += t.coef
                * if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
                    b.abs().powf(self.p) - a.abs().powf(self.p)
                } else {
                    let rel = a.signum() * delta / a.abs();
                    a.abs().powf(self.p) * (self.p * rel.ln_1p()).exp_m1()
                };
        }
        de + self.linear.iter().zip(&step).map(|(l, d)| l * d).sum::<f64>()
    }

    /// Differences below this size are treated as exact zeros when the
    /// gradient is evaluated (they are floating-point noise).
    pub fn zero_threshold(&self, u: &[f64]) -> f64 {
        let scale = u.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        64.0 * f64::EPSILON * scale
    }

    /// Gradient with entries at fixed nodes set to zero.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let zero = self.zero_threshold(u);
        let mut g = self.linear.clone();
        for t in &self.terms {
            let d = u[t.a] - u[t.b];
            let d = if d.abs() <= zero { 0.0 } else { d };
            let flux = t.coef * self.p * signed_power(d, self.p);
            g[t.a] += flux;
            g[t.b] -= flux;
        }
        for (gi, f) in g.iter_mut().zip(&self.fixed) {
            if f.is_some() {
                *gi = 0.0;
            }
        }
        g
    }

    pub fn project(&self, u: &mut [f64]) {
        for (x, f) in u.iter_mut().zip(&self.fixed) {
            if let Some(v) = f {
                *x = *v;
            }
        }
        if let Some(w) = &self.mean_weights {
            let total: f64 = w.iter().sum();
            if total > 0.0 {
                let mean = w.iter().zip(u.iter()).map(|(a, b)| a * b).sum::<f64>() / total;
                u.iter_mut().for_each(|x| *x -= mean);
            }
        }
    }

    /// Free nodes connected to nothing with positive weight and not tied to
    /// a fixed value get pinned to zero; the energy does not depend on them.
    pub fn pin_floating(&mut self) -> Result<()> {
        let adj = self.adjacency();
        let mut comp = vec![usize::MAX; self.n];
        let mut ncomp = 0;
        for s in 0..self.n {
            if comp[s] != usize::MAX || self.fixed[s].is_some() {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = ncomp;
            let mut anchored = false;
            let mut members = vec![s];
            let mut linear = 0.0;
            while let Some(i) = stack.pop() {
                linear += self.linear[i].abs();
                for &k in &adj[i] {
                    let t = self.terms[k];
                    if t.coef <= 0.0 {
                        continue;
                    }
                    let j = if t.a == i { t.b } else { t.a };
                    if self.fixed[j].is_some() {
                        anchored = true;
                    } else if comp[j] == usize::MAX {
                        comp[j] = ncomp;
                        stack.push(j);
                        members.push(j);
                    }
                }
            }
            ncomp += 1;
            if !anchored && self.mean_weights.is_none() {
                if linear > 0.0 {
                    return Err(Error::arg("floating component with linear data: energy unbounded"));
                }
                for i in members {
                    self.fixed[i] = Some(0.0);
                }
            }
        }
        if self.mean_weights.is_some() && ncomp > 1 {
            return Err(Error::arg("energy graph of the closed domain is disconnected"));
        }
        Ok(())
    }

    /// Gradient with its component along the normalization weights removed.
    /// At a minimizer on the mean-zero slice this vanishes.
    pub fn reduced_gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = self.gradient(u);
        if let Some(w) = &self.mean_weights {
            let ww: f64 = w.iter().map(|x| x * x).sum();
            if ww > 0.0 {
                let lambda = w.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / ww;
                g.iter_mut().zip(w).for_each(|(gi, wi)| *gi -= lambda * wi);
            }
        }
        g
    }

    /// Max-norm of the reduced gradient over free nodes.
    pub fn residual(&self, u: &[f64]) -> f64 {
        self.reduced_gradient(u).iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    /// Step from `u` to the minimizer of the reweighted quadratic model,
    /// solved for the step itself with the exact gradient on the right so
    /// that its accuracy scales with the gradient.
    fn irls_direction(&self, u: &[f64], eps: f64) -> Vec<f64> {
        let max_diff = self.terms.iter().fold(0.0f64, |m, t| m.max((u[t.a] - u[t.b]).abs()));
        let weights: Vec<f64> = if max_diff == 0.0 || self.p == 2.0 {
            self.terms.iter().map(|t| t.coef * self.p).collect()
        } else {
            let floor = if self.p < 2.0 { eps * max_diff } else { eps.max(1e-6 * max_diff) };
            self.terms.iter().map(|t| t.coef * self.p * (u[t.a] - u[t.b]).abs().max(floor).powf(self.p - 2.0)).collect()
        };
        let free: Vec<usize> = (0..self.n).filter(|&i| self.fixed[i].is_none()).collect();
        let mut pos = vec![usize::MAX; self.n];
        for (k, &i) in free.iter().enumerate() {
            pos[i] = k;
        }
        // diagonal part from edges to fixed nodes, plus free-free links
        let mut anchor = vec![0.0; free.len()];
        let mut diag = vec![0.0; free.len()];
        let mut links = Vec::with_capacity(self.terms.len());
        for (t, &w) in self.terms.iter().zip(&weights) {
            let (pa, pb) = (pos[t.a], pos[t.b]);
            match (pa != usize::MAX, pb != usize::MAX) {
                (true, true) => {
                    diag[pa] += w;
                    diag[pb] += w;
                    links.push((pa, pb, w));
                }
                (true, false) => {
                    diag[pa] += w;
                    anchor[pa] += w;
                }
                (false, true) => {
                    diag[pb] += w;
                    anchor[pb] += w;
                }
                (false, false) => {}
            }
        }
        let g = self.gradient(u);
        let mut rhs: Vec<f64> = free.iter().map(|&i| -g[i]).collect();
        let singular = self.mean_weights.is_some();
        if singular {
            let m = rhs.iter().sum::<f64>() / rhs.len() as f64;
            rhs.iter_mut().for_each(|r| *r -= m);
        }
        let apply = |x: &[f64], y: &mut [f64]| {
            for (yi, (a, xi)) in y.iter_mut().zip(anchor.iter().zip(x)) {
                *yi = a * xi;
            }
            for &(a, b, w) in &links {
                let flux = w * (x[a] - x[b]);
                y[a] += flux;
                y[b] -= flux;
            }
        };
        let x = pcg(apply, &diag, &rhs, vec![0.0; free.len()], singular);
        let mut dir = vec![0.0; self.n];
        for (k, &i) in free.iter().enumerate() {
            dir[i] = x[k];
        }
        dir
    }
}

/// Jacobi-preconditioned conjugate gradients. With `singular`, residuals are
/// kept orthogonal to constants (consistent Neumann systems).
fn pcg(apply: impl Fn(&[f64], &mut [f64]), diag: &[f64], rhs: &[f64], mut x: Vec<f64>, singular: bool) -> Vec<f64> {
    let n = rhs.len();
    if n == 0 {
        return x;
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let center = |v: &mut [f64]| {
        if singular {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= m);
        }
    };
    let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    center(&mut r);
    let bnorm = dot(rhs, rhs).sqrt();
    let target = (1e-15 * bnorm).max(1e-300);
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let mut best = (dot(&r, &r).sqrt(), x.clone());
    let max_iter = 20 * n + 200;
    for _ in 0..max_iter {
        if best.0 <= target {
            break;
        }
        apply(&d, &mut ax);
        let dad = dot(&d, &ax);
        if !(dad > 0.0) {
            break;
        }
        let alpha = rz / dad;
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * ax[i];
        }
        center(&mut r);
        let rn = dot(&r, &r).sqrt();
        if rn < best.0 {
            best = (rn, x.clone());
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            d[i] = z[i] + beta * d[i];
        }
    }
    best.1
}

struct LineResult {
    u: Vec<f64>,
    change: f64,
}

const ARMIJO: f64 = 1e-4;

/// Step along `dir` from t = `t0`, expanding while the energy keeps dropping
/// and halving until the Armijo condition holds. Reports the energy change.
fn line_search(obj: &Objective, u: &[f64], dir: &[f64], t0: f64) -> Option<LineResult> {
    let slope: f64 = obj.reduced_gradient(u).iter().zip(dir).map(|(g, d)| g * d).sum();
    if !(slope < 0.0) {
        return None;
    }
    let trial = |t: f64| {
        let mut v: Vec<f64> = u.iter().zip(dir).map(|(a, d)| a + t * d).collect();
        obj.project(&mut v);
        let de = obj.energy_change(u, &v);
        (v, de)
    };
    let enough = |t: f64, de: f64| de <= ARMIJO * t * slope;
    let mut t = t0;
    let (mut v, mut de) = trial(t);
    if enough(t, de) {
        for _ in 0..8 {
            let (v2, de2) = trial(2.0 * t);
            if de2 < de {
                t *= 2.0;
                v = v2;
                de = de2;
            } else {
                break;
            }
        }
        return Some(LineResult { u: v, change: de });
    }
    for _ in 0..60 {
        t *= 0.5;
        (v, de) = trial(t);
        if enough(t, de) {
            return Some(LineResult { u: v, change: de });
        }
    }
    None
}

pub(crate) fn minimize(obj: &Objective, init: &[f64], s: &Settings) -> Outcome {
    let mut u = init.to_vec();
    obj.project(&mut u);
    let mut energy = obj.energy(&u);
    let mut history = vec![energy];
    let mut iterates = if s.keep_iterates { vec![u.clone()] } else { Vec::new() };
    let mut method = s.method;
    let mut fell_back = false;
    let mut stalls = 0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut residual = obj.residual(&u);
    while iterations < s.max_iter && residual > s.tol_grad {
        iterations += 1;
        let step = match method {
            Method::Irls => {
                let dir = obj.irls_direction(&u, s.irls_epsilon);
                // the reweighted model has curvature p|Δ|^{p−2}, the energy p(p−1)|Δ|^{p−2}
                line_search(obj, &u, &dir, (1.0 / (obj.p - 1.0)).min(1.0))
            }
            Method::Descent => None,
        };
        let step = match step {
            Some(st) => Some(st),
            None => {
                let g = obj.reduced_gradient(&u);
                let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let alpha = match &prev {
                    Some((pu, pg)) => {
                        let sy: f64 =
                            u.iter().zip(pu).zip(g.iter().zip(pg)).map(|((a, b), (c, d))| (a - b) * (c - d)).sum();
                        let ss: f64 = u.iter().zip(pu).map(|(a, b)| (a - b) * (a - b)).sum();
                        if sy > 0.0 {
                            ss / sy
                        } else {
                            1.0 / gmax.max(1e-300)
                        }
                    }
                    None => 1.0 / gmax.max(1e-300),
                };
                prev = Some((u.clone(), g.clone()));
                let dir: Vec<f64> = g.iter().map(|x| -alpha * x).collect();
                line_search(obj, &u, &dir, 1.0)
            }
        };
        let Some(st) = step else {
            log::trace!("{method:?} line search failed at residual {residual:e}");
            break;
        };
        let decrease = -st.change;
        u = st.u;
        energy += st.change;
        history.push(energy);
        if s.keep_iterates {
            iterates.push(u.clone());
        }
        let before = residual;
        residual = obj.residual(&u);
        log::trace!("{method:?} step {iterations}: decrease {decrease:e}, residual {residual:e}");
        if decrease < s.tol_energy && residual >= before {
            stalls += 1;
            if stalls >= 2 {
                if method == Method::Irls {
                    log::debug!("IRLS stalled at residual {residual:e}; falling back to descent");
                    method = Method::Descent;
                    fell_back = true;
                    stalls = 0;
                    prev = None;
                } else {
                    break;
                }
            }
        } else {
            stalls = 0;
        }
    }
    Outcome { converged: residual <= s.tol_grad, u, energy, iterations, residual, history, fell_back, iterates }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_objective(p: f64) -> Objective {
        // 3-node path with ω = 1/2 on unit edges and data (-1, 0, 1)
        Objective {
            n: 3,
            p,
            terms: vec![Term { a: 0, b: 1, coef: 0.5 }, Term { a: 1, b: 2, coef: 0.5 }],
            linear: vec![-1.0, 0.0, 1.0],
            fixed: vec![None; 3],
            mean_weights: Some(vec![0.0, 1.0, 0.0]),
        }
    }

    fn settings(method: Method) -> Settings {
        Settings {
            tol_grad: 1e-12,
            tol_energy: 1e-15,
            max_iter: 10_000,
            irls_epsilon: 1e-12,
            method,
            keep_iterates: false,
        }
    }

    #[test]
    fn signed_power_at_zero() {
        assert_eq!(signed_power(0.0, 1.5), 0.0);
        assert_eq!(signed_power(-2.0, 3.0), -4.0);
    }

    #[test]
    fn both_methods_agree_on_model() {
        for p in [1.5, 2.0, 3.0] {
            let obj = path_objective(p);
            let a = minimize(&obj, &[0.0; 3], &settings(Method::Irls));
            let b = minimize(&obj, &[0.0; 3], &settings(Method::Descent));
            assert!(a.converged && b.converged, "p={p}: {} {}", a.residual, b.residual);
            for i in 0..3 {
                assert!((a.u[i] - b.u[i]).abs() < 1e-8, "p={p}");
            }
            assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
            assert!(b.history.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn dirichlet_pinning() {
        // 0 -- 1 -- 2, node 0 fixed at 1, node 2 fixed at 0, node 3 floating
        let mut obj = Objective {
            n: 4,
            p: 2.0,
            terms: vec![Term { a: 0, b: 1, coef: 1.0 }, Term { a: 1, b: 2, coef: 1.0 }, Term { a: 2, b: 3, coef: 0.0 }],
            linear: vec![0.0; 4],
            fixed: vec![Some(1.0), None, Some(0.0), None],
            mean_weights: None,
        };
        obj.pin_floating().unwrap();
        assert_eq!(obj.fixed[3], Some(0.0));
        let out = minimize(&obj, &[0.0; 4], &settings(Method::Irls));
        assert!((out.u[1] - 0.5).abs() < 1e-14);
        assert!((out.energy - 0.5).abs() < 1e-14);
    }

    #[test]
    fn neumann_disconnected_is_rejected() {
        let mut obj = path_objective(2.0);
        obj.terms[1].coef = 0.0;
        assert!(obj.pin_floating().is_err());
    }
}
