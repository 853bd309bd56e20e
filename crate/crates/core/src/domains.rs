//! Test domains with known geometry, and boundary data on them.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::calculus::BoundaryField;
use crate::error::{Error, Result};
use crate::sampling;
use crate::space::{Domain, DomainBuilder, NodeIdx};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Path { n: usize },
    Grid { n: usize },
    Lshape { n: usize },
    AnnulusGrid { n: usize },
    Sierpinski { level: usize },
    File { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureConvention {
    Unit,
    CellVolume,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerimeterConvention {
    Unit,
    FaceArea,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub h: f64,
    pub measure: MeasureConvention,
    pub perimeter: PerimeterConvention,
}

impl DomainSpec {
    pub fn new(kind: DomainKind) -> Self {
        DomainSpec { kind, h: 1.0, measure: MeasureConvention::CellVolume, perimeter: PerimeterConvention::FaceArea }
    }
}

impl fmt::Display for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DomainKind::Path { n } => write!(f, "path:{n}")?,
            DomainKind::Grid { n } => write!(f, "grid:{n}")?,
            DomainKind::Lshape { n } => write!(f, "lshape:{n}")?,
            DomainKind::AnnulusGrid { n } => write!(f, "annulus:{n}")?,
            DomainKind::Sierpinski { level } => write!(f, "sierpinski:{level}")?,
            DomainKind::File { path } => return write!(f, "{}", path.display()),
        }
        if self.h != 1.0 {
            write!(f, ":{}", self.h)?;
        }
        Ok(())
    }
}

/// `path:N`, `grid:N`, `lshape:N`, `annulus:N`, `sierpinski:L`, each with an
/// optional `:H` spacing suffix; anything else is a domain file path.
impl FromStr for DomainSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let kind_of = |name: &str, size: usize| match name {
            "path" => Some(DomainKind::Path { n: size }),
            "grid" => Some(DomainKind::Grid { n: size }),
            "lshape" => Some(DomainKind::Lshape { n: size }),
            "annulus" | "annulus_grid" => Some(DomainKind::AnnulusGrid { n: size }),
            "sierpinski" => Some(DomainKind::Sierpinski { level: size }),
            _ => None,
        };
        if parts.len() >= 2 && parts.len() <= 3 {
            if let Ok(size) = parts[1].parse::<usize>() {
                if let Some(kind) = kind_of(parts[0], size) {
                    let mut spec = DomainSpec::new(kind);
                    if let Some(h) = parts.get(2) {
                        spec.h = h.parse().map_err(|_| Error::arg(format!("bad spacing `{h}`")))?;
                    }
                    return Ok(spec);
                }
            }
        }
        let path = s.strip_prefix("file:").unwrap_or(s);
        Ok(DomainSpec::new(DomainKind::File { path: path.into() }))
    }
}

fn letters(mut k: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (k % 26) as u8);
        if k < 26 {
            break;
        }
        k = k / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).unwrap()
}

pub fn generate(spec: &DomainSpec) -> Result<Domain> {
    if !(spec.h > 0.0 && spec.h.is_finite()) {
        return Err(Error::arg(format!("spacing must be positive, got {}", spec.h)));
    }
    match &spec.kind {
        DomainKind::Path { n } => path(*n, spec),
        DomainKind::Grid { n } => {
            check_size(*n, 3, "grid")?;
            lattice(*n, spec, |i, j| i >= 1 && j >= 1 && i + 1 < *n && j + 1 < *n)
        }
        DomainKind::Lshape { n } => {
            check_size(*n, 5, "lshape")?;
            let half = n / 2;
            lattice(*n, spec, |i, j| i >= 1 && j >= 1 && i + 1 < *n && j + 1 < *n && !(i >= half && j >= half))
        }
        DomainKind::AnnulusGrid { n } => {
            check_size(*n, 7, "annulus")?;
            let c = (*n as f64 - 1.0) / 2.0;
            let hole = *n as f64 / 6.0;
            lattice(*n, spec, |i, j| {
                let inside = i >= 1 && j >= 1 && i + 1 < *n && j + 1 < *n;
                inside && !((i as f64 - c).abs() <= hole && (j as f64 - c).abs() <= hole)
            })
        }
        DomainKind::Sierpinski { level } => sierpinski(*level, spec),
        DomainKind::File { path } => Domain::load(path),
    }
}

fn check_size(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        return Err(Error::arg(format!("{what} size must be at least {min} (no interior otherwise), got {n}")));
    }
    Ok(())
}

fn mu_of(spec: &DomainSpec, dim: i32) -> f64 {
    match spec.measure {
        MeasureConvention::Unit => 1.0,
        MeasureConvention::CellVolume => spec.h.powi(dim),
    }
}

/// Path of `n` nodes a, b, c, …; the two ends form the boundary.
fn path(n: usize, spec: &DomainSpec) -> Result<Domain> {
    check_size(n, 3, "path")?;
    let mut b = DomainBuilder::new();
    let mu = mu_of(spec, 1);
    let ids: Vec<NodeIdx> = (0..n)
        .map(|i| {
            let c = Some(vec![i as f64 * spec.h]);
            if i == 0 || i + 1 == n {
                b.boundary(letters(i), 1.0, c)
            } else {
                b.interior(letters(i), mu, c)
            }
        })
        .collect();
    for w in ids.windows(2) {
        b.edge(w[0], w[1], spec.h);
    }
    b.build()
}

/// n×n lattice with interior `mask`; boundary nodes are the unmasked lattice
/// nodes with a masked 4-neighbour, all other nodes are dropped.
fn lattice(n: usize, spec: &DomainSpec, mask: impl Fn(usize, usize) -> bool) -> Result<Domain> {
    let neighbours = |i: usize, j: usize| {
        let mut v = Vec::with_capacity(4);
        if i > 0 {
            v.push((i - 1, j));
        }
        if i + 1 < n {
            v.push((i + 1, j));
        }
        if j > 0 {
            v.push((i, j - 1));
        }
        if j + 1 < n {
            v.push((i, j + 1));
        }
        v
    };
    let mu = mu_of(spec, 2);
    let mut b = DomainBuilder::new();
    let mut index = vec![None; n * n];
    for j in 0..n {
        for i in 0..n {
            let id = format!("{i}_{j}");
            let c = Some(vec![i as f64 * spec.h, j as f64 * spec.h]);
            if mask(i, j) {
                index[j * n + i] = Some(b.interior(id, mu, c));
            } else {
                let faces = neighbours(i, j).into_iter().filter(|&(a, c)| mask(a, c)).count();
                if faces > 0 {
                    let per = match spec.perimeter {
                        PerimeterConvention::Unit => 1.0,
                        PerimeterConvention::FaceArea => spec.h * faces as f64,
                    };
                    index[j * n + i] = Some(b.boundary(id, per, c));
                }
            }
        }
    }
    for j in 0..n {
        for i in 0..n {
            let Some(a) = index[j * n + i] else { continue };
            for (x, y) in [(i + 1, j), (i, j + 1)] {
                if x < n && y < n {
                    if let Some(c) = index[y * n + x] {
                        b.edge(a, c, spec.h);
                    }
                }
            }
        }
    }
    b.build()
}

/// Level-L Sierpinski gasket graph with edge length h·2^{−L}; the three
/// corners form the boundary.
fn sierpinski(level: usize, spec: &DomainSpec) -> Result<Domain> {
    if level == 0 {
        return Err(Error::arg("sierpinski level must be at least 1"));
    }
    if level > 12 {
        return Err(Error::arg("sierpinski level above 12 is too large"));
    }
    let side = 1i64 << level;
    let mut nodes: Vec<(i64, i64)> = Vec::new();
    let mut lookup: HashMap<(i64, i64), usize> = HashMap::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut stack = vec![((0, 0), (side, 0), (0, side), level)];
    while let Some((p0, p1, p2, depth)) = stack.pop() {
        if depth == 0 {
            let mut id = |p: (i64, i64)| {
                *lookup.entry(p).or_insert_with(|| {
                    nodes.push(p);
                    nodes.len() - 1
                })
            };
            let (a, b, c) = (id(p0), id(p1), id(p2));
            edges.extend([(a, b), (b, c), (c, a)]);
            continue;
        }
        let mid = |p: (i64, i64), q: (i64, i64)| ((p.0 + q.0) / 2, (p.1 + q.1) / 2);
        let (m01, m12, m02) = (mid(p0, p1), mid(p1, p2), mid(p0, p2));
        stack.push((m02, m12, p2, depth - 1));
        stack.push((m01, p1, m12, depth - 1));
        stack.push((p0, m01, m02, depth - 1));
    }
    let len = spec.h / side as f64;
    let mu = match spec.measure {
        MeasureConvention::Unit => 1.0,
        MeasureConvention::CellVolume => 3f64.powi(-(level as i32)),
    };
    let corners = [(0, 0), (side, 0), (0, side)];
    let mut b = DomainBuilder::new();
    for &(x, y) in &nodes {
        let id = format!("s{x}_{y}");
        let c = Some(vec![(x as f64 + 0.5 * y as f64) * len, y as f64 * 3f64.sqrt() / 2.0 * len]);
        if corners.contains(&(x, y)) {
            b.boundary(id, 1.0, c);
        } else {
            b.interior(id, mu, c);
        }
    }
    for (a, c) in edges {
        b.edge(a, c, len);
    }
    b.build()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    fn axis(self) -> usize {
        match self {
            Side::Left | Side::Right => 0,
            Side::Bottom | Side::Top => 1,
        }
    }

    fn low(self) -> bool {
        matches!(self, Side::Left | Side::Bottom)
    }

    fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::Bottom => Side::Top,
            Side::Top => Side::Bottom,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Dipole,
    ConstantSignPatch { side: Side },
    RandomCompatible,
}

impl FromStr for DataKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dipole" => DataKind::Dipole,
            "random" | "random_compatible" => DataKind::RandomCompatible,
            "patch" | "constant_sign_patch" | "patch:left" => DataKind::ConstantSignPatch { side: Side::Left },
            "patch:right" => DataKind::ConstantSignPatch { side: Side::Right },
            "patch:bottom" => DataKind::ConstantSignPatch { side: Side::Bottom },
            "patch:top" => DataKind::ConstantSignPatch { side: Side::Top },
            other => return Err(Error::arg(format!("unknown data kind `{other}`"))),
        })
    }
}

fn coord(domain: &Domain, i: NodeIdx, axis: usize) -> Option<f64> {
    domain.graph().node(i).coords.as_ref().and_then(|c| c.get(axis).copied())
}

/// Two far-apart boundary nodes: extreme first coordinates (ties broken
/// towards the centroid of the other coordinates), or a graph-distance
/// diameter pair when nodes carry no coordinates.
fn poles(domain: &Domain) -> (NodeIdx, NodeIdx) {
    let bd = domain.boundary();
    if bd.iter().all(|&z| coord(domain, z, 0).is_some()) {
        let dim = domain.graph().node(bd[0]).coords.as_ref().map_or(1, |c| c.len());
        let centroid: Vec<f64> = (1..dim)
            .map(|a| bd.iter().map(|&z| coord(domain, z, a).unwrap_or(0.0)).sum::<f64>() / bd.len() as f64)
            .collect();
        let off = |z: NodeIdx| -> f64 {
            (1..dim).map(|a| (coord(domain, z, a).unwrap_or(0.0) - centroid[a - 1]).powi(2)).sum()
        };
        let key = |z: NodeIdx, sign: f64| (sign * coord(domain, z, 0).unwrap(), off(z));
        let pick = |sign: f64| {
            *bd.iter()
                .min_by(|&&a, &&b| {
                    let (ka, kb) = (key(a, sign), key(b, sign));
                    ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
                })
                .unwrap()
        };
        return (pick(1.0), pick(-1.0));
    }
    let g = domain.graph();
    let far = |from: NodeIdx| {
        let d = g.distances_from(from);
        *bd.iter().max_by(|&&a, &&b| d[a].total_cmp(&d[b]).then(b.cmp(&a))).unwrap()
    };
    let a = far(bd[0]);
    (a, far(a))
}

/// f = +1 on `plus`, and the constant on `minus` that balances Σ f P.
fn balanced(domain: &Domain, plus: &[NodeIdx], minus: &[NodeIdx]) -> BoundaryField {
    let pp = domain.perimeter_measure(plus);
    let pm = domain.perimeter_measure(minus);
    let mut f = vec![0.0; domain.boundary().len()];
    for &z in minus {
        f[domain.boundary_position(z).unwrap()] = -pp / pm;
    }
    for &z in plus {
        f[domain.boundary_position(z).unwrap()] = 1.0;
    }
    BoundaryField::new(f)
}

pub fn make_boundary_data(domain: &Domain, kind: DataKind, seed: u64) -> Result<BoundaryField> {
    let bd = domain.boundary();
    if bd.len() < 2 {
        log::warn!("fewer than two boundary nodes: compatible data must vanish");
        return Ok(BoundaryField::new(vec![0.0; bd.len()]));
    }
    let f = match kind {
        DataKind::Dipole => {
            let (neg, pos) = poles(domain);
            let radius = domain.closure_diameter() / 8.0;
            let patch = |c: NodeIdx| {
                let d = domain.graph().distances_from(c);
                bd.iter().copied().filter(|&z| d[z] < radius || z == c).collect::<Vec<_>>()
            };
            balanced(domain, &patch(pos), &patch(neg))
        }
        DataKind::ConstantSignPatch { side } => {
            let axis = side.axis();
            let values: Vec<f64> = bd
                .iter()
                .map(|&z| coord(domain, z, axis).ok_or_else(|| Error::arg("patch data needs node coordinates")))
                .collect::<Result<_>>()?;
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tol = 0.5 * domain.graph().min_edge_len();
            let on = |s: Side| -> Vec<NodeIdx> {
                let target = if s.low() { lo } else { hi };
                bd.iter().zip(&values).filter(|(_, &v)| (v - target).abs() <= tol).map(|(&z, _)| z).collect()
            };
            balanced(domain, &on(side), &on(side.opposite()))
        }
        DataKind::RandomCompatible => {
            let mut rng = sampling::rng_for(seed, 0);
            let mut v: Vec<f64> = bd.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let mean = v.iter().zip(bd).map(|(x, &z)| x * domain.perimeter(z)).sum::<f64>() / domain.total_perimeter();
            v.iter_mut().for_each(|x| *x -= mean);
            BoundaryField::new(v)
        }
    };
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{check_density, check_perimeter_regularity, dyadic_radii};

    fn spec(s: &str) -> DomainSpec {
        s.parse().unwrap()
    }

    fn defect(d: &Domain, f: &BoundaryField) -> f64 {
        let s: f64 = d.boundary().iter().zip(f.values()).map(|(&z, v)| v * d.perimeter(z)).sum();
        s.abs() / f.l1_norm(d)
    }

    #[test]
    fn path_three_is_the_model() {
        let d = generate(&spec("path:3")).unwrap();
        assert_eq!(d.node_count(), 3);
        assert_eq!(d.boundary().iter().map(|&z| d.id(z)).collect::<Vec<_>>(), vec!["a", "c"]);
        assert_eq!(d.mu(d.index_of("b").unwrap()), 1.0);
        assert_eq!(d.total_perimeter(), 2.0);
        let f = make_boundary_data(&d, DataKind::Dipole, 0).unwrap();
        assert_eq!(f.values(), &[-1.0, 1.0]);
    }

    #[test]
    fn grid_counts() {
        let d = generate(&spec("grid:3")).unwrap();
        assert_eq!((d.interior().len(), d.boundary().len()), (1, 4));
        let d = generate(&spec("grid:16")).unwrap();
        assert_eq!((d.interior().len(), d.boundary().len()), (196, 56));
        assert!(generate(&spec("grid:2")).is_err());
    }

    #[test]
    fn sierpinski_node_counts() {
        for (level, count) in [(1, 6), (2, 15), (3, 42)] {
            let d = generate(&DomainSpec::new(DomainKind::Sierpinski { level })).unwrap();
            assert_eq!(d.node_count(), (3usize.pow(level as u32 + 1) + 3) / 2);
            assert_eq!(d.node_count(), count);
            assert_eq!(d.boundary().len(), 3);
            assert_eq!(d.graph().edge_count(), 3usize.pow(level as u32 + 1));
        }
    }

    #[test]
    fn shapes_are_valid() {
        for s in ["lshape:8", "annulus:12", "sierpinski:3", "path:10:0.5", "grid:6:0.25"] {
            let d = generate(&spec(s)).unwrap();
            assert_eq!(check_density(&d).worst_ratio, 1.0, "{s}");
            let text = serde_json::to_string(&d.to_file()).unwrap();
            Domain::from_json_str(&text).unwrap();
        }
        let l = generate(&spec("lshape:8")).unwrap();
        assert!(l.index_of("6_6").is_err());
        assert!(l.is_boundary(l.index_of("4_5").unwrap()));
        let a = generate(&spec("annulus:12")).unwrap();
        assert!(a.is_interior(a.index_of("3_5").unwrap()));
        assert!(a.is_boundary(a.index_of("4_5").unwrap()));
        assert!(a.index_of("5_5").is_err());
    }

    #[test]
    fn grid_perimeter_regularity() {
        for n in [8, 16, 32] {
            let d = generate(&spec(&format!("grid:{n}"))).unwrap();
            let r = check_perimeter_regularity(&d, &dyadic_radii(&d)).unwrap();
            assert!(r.c_low <= 10.0 && r.c_high <= 10.0, "n={n}: {r:?}");
        }
    }

    #[test]
    fn data_is_compatible() {
        for s in ["path:3", "grid:8", "lshape:9", "annulus:12", "sierpinski:2"] {
            let d = generate(&spec(s)).unwrap();
            for kind in [DataKind::Dipole, DataKind::RandomCompatible] {
                let f = make_boundary_data(&d, kind, 5).unwrap();
                assert!(defect(&d, &f) <= 1e-14, "{s} {kind:?}");
            }
        }
        let d = generate(&spec("grid:8")).unwrap();
        let a = make_boundary_data(&d, DataKind::RandomCompatible, 5).unwrap();
        assert_eq!(a, make_boundary_data(&d, DataKind::RandomCompatible, 5).unwrap());
    }

    #[test]
    fn patch_on_left_edge() {
        let d = generate(&spec("grid:8")).unwrap();
        let f = make_boundary_data(&d, DataKind::ConstantSignPatch { side: Side::Left }, 0).unwrap();
        assert!(defect(&d, &f) <= 1e-14);
        for (&z, &v) in d.boundary().iter().zip(f.values()) {
            let x = coord(&d, z, 0).unwrap();
            if x == 0.0 {
                assert_eq!(v, 1.0);
            } else if v < 0.0 {
                assert_eq!(x, 7.0);
            } else {
                assert!(x == 7.0 || v == 0.0);
            }
        }
    }

    #[test]
    fn single_boundary_node_gives_zero() {
        let mut b = DomainBuilder::new();
        let z = b.boundary("z", 1.0, None);
        let x = b.interior("x", 1.0, None);
        b.edge(z, x, 1.0);
        let d = b.build().unwrap();
        assert_eq!(make_boundary_data(&d, DataKind::Dipole, 0).unwrap().values(), &[0.0]);
    }

    #[test]
    fn spec_round_trip_and_ids() {
        for s in ["path:3", "grid:16", "sierpinski:2", "grid:8:0.5"] {
            assert_eq!(spec(s).to_string(), s);
        }
        assert!(matches!(spec("some/file.json").kind, DomainKind::File { .. }));
        assert_eq!(letters(0), "a");
        assert_eq!(letters(25), "z");
        assert_eq!(letters(26), "aa");
        assert_eq!(letters(27), "ab");
    }
}
