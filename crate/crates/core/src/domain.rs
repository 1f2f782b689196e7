//! Geometries, grids, quadrature and norms.
//!
//! Three geometries are supported: the flat torus of side `L`, the unit square
//! with Dirichlet or Neumann boundary conditions, and the unit sphere. Planar
//! grids are uniform `N x N` vertex lattices; the sphere carries either a
//! latitude-longitude lattice (Gauss-Legendre latitudes, used for spectral
//! work) or a triangulated icosphere (used for zero-set extraction).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Domain {
    /// Flat torus `[0, side)^2` with periodic identification.
    Torus { side: f64 },
    /// Unit square `[0, 1]^2`.
    Square { bc: BoundaryCondition },
    /// Unit sphere in R^3.
    Sphere,
}

impl Default for Domain {
    fn default() -> Self {
        Domain::torus()
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Torus { side } => write!(f, "torus(L={side})"),
            Domain::Square { bc } => write!(f, "square({bc:?})"),
            Domain::Sphere => write!(f, "sphere"),
        }
    }
}

/// A point in the ambient space: `(x, y, 0)` on planar domains, a unit vector on the sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point(pub [f64; 3]);

impl Point {
    pub fn planar(x: f64, y: f64) -> Self {
        Point([x, y, 0.0])
    }

    /// Longitude in `[0, 2pi)`, latitude in `[-pi/2, pi/2]`.
    pub fn from_lonlat(lon: f64, lat: f64) -> Self {
        let (sl, cl) = lat.sin_cos();
        Point([cl * lon.cos(), cl * lon.sin(), sl])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn lonlat(&self) -> (f64, f64) {
        let [x, y, z] = self.0;
        let lon = y.atan2(x).rem_euclid(2.0 * PI);
        let lat = z.clamp(-1.0, 1.0).asin();
        (lon, lat)
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn normalized(&self) -> Point {
        let n = self.dot(self).sqrt();
        Point([self.0[0] / n, self.0[1] / n, self.0[2] / n])
    }
}

/// Great-circle angle between two unit vectors, accurate at small and antipodal separations.
pub fn sphere_angle(a: &Point, b: &Point) -> f64 {
    let [ax, ay, az] = a.0;
    let [bx, by, bz] = b.0;
    let cx = ay * bz - az * by;
    let cy = az * bx - ax * bz;
    let cz = ax * by - ay * bx;
    let cross = (cx * cx + cy * cy + cz * cz).sqrt();
    cross.atan2(a.dot(b))
}

impl Domain {
    pub fn torus() -> Self {
        Domain::Torus { side: 2.0 * PI }
    }

    pub fn square(bc: BoundaryCondition) -> Self {
        Domain::Square { bc }
    }

    pub fn area(&self) -> f64 {
        match self {
            Domain::Torus { side } => side * side,
            Domain::Square { .. } => 1.0,
            Domain::Sphere => 4.0 * PI,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Domain::Torus { side } => side * std::f64::consts::FRAC_1_SQRT_2,
            Domain::Square { .. } => std::f64::consts::SQRT_2,
            Domain::Sphere => PI,
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, Domain::Sphere)
    }

    pub fn boundary_condition(&self) -> Option<BoundaryCondition> {
        match self {
            Domain::Square { bc } => Some(*bc),
            _ => None,
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        const TOL: f64 = 1e-9;
        let [x, y, z] = p.0;
        match self {
            Domain::Torus { side } => {
                z == 0.0 && (-TOL..=side + TOL).contains(&x) && (-TOL..=side + TOL).contains(&y)
            }
            Domain::Square { .. } => {
                z == 0.0 && (-TOL..=1.0 + TOL).contains(&x) && (-TOL..=1.0 + TOL).contains(&y)
            }
            Domain::Sphere => (p.dot(p).sqrt() - 1.0).abs() <= TOL,
        }
    }

    fn check(&self, p: &Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::DomainMismatch {
                domain: self.to_string(),
                point: p.0,
            })
        }
    }

    /// Geodesic distance: periodic on the torus, Euclidean on the square,
    /// great-circle on the sphere.
    pub fn metric_distance(&self, a: &Point, b: &Point) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.distance_unchecked(a, b))
    }

    /// Same as [`Domain::metric_distance`] without the membership check; used in hot loops.
    #[inline]
    pub fn distance_unchecked(&self, a: &Point, b: &Point) -> f64 {
        match self {
            Domain::Torus { side } => {
                let mut dx = (a.0[0] - b.0[0]).abs() % side;
                let mut dy = (a.0[1] - b.0[1]).abs() % side;
                dx = dx.min(side - dx);
                dy = dy.min(side - dy);
                (dx * dx + dy * dy).sqrt()
            }
            Domain::Square { .. } => {
                let dx = a.0[0] - b.0[0];
                let dy = a.0[1] - b.0[1];
                (dx * dx + dy * dy).sqrt()
            }
            Domain::Sphere => sphere_angle(a, b),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "lowercase")]
pub enum Layout {
    /// `n x n` vertex lattice, node index `j * n + i` with `i` along x.
    Lattice { n: usize },
    /// Gauss-Legendre latitudes (north to south) times uniform longitudes,
    /// node index `i_lat * n_lon + i_lon`.
    LatLon { n_lat: usize, n_lon: usize },
    /// Icosahedron subdivided `level` times and projected to the sphere.
    Icosphere { level: u32 },
}

/// Nodes and quadrature weights on a domain.
#[derive(Clone, Debug)]
pub struct Grid {
    domain: Domain,
    layout: Layout,
    nodes: Vec<Point>,
    weights: Vec<f64>,
    triangles: Vec<[u32; 3]>,
    latitudes: Vec<f64>,
}

impl Grid {
    /// Default grid for a domain: lattice for planar domains, a latitude-longitude
    /// lattice with `resolution` latitudes and twice as many longitudes for the sphere.
    pub fn new(domain: Domain, resolution: usize) -> Result<Arc<Grid>> {
        match domain {
            Domain::Sphere => Grid::latlon(resolution, 2 * resolution),
            _ => Grid::lattice(domain, resolution),
        }
    }

    pub fn lattice(domain: Domain, n: usize) -> Result<Arc<Grid>> {
        if n < 3 {
            return Err(Error::ResolutionTooCoarse(format!(
                "lattice needs n >= 3, got {n}"
            )));
        }
        let (coords, w1): (Vec<f64>, Vec<f64>) = match domain {
            Domain::Torus { side } => {
                if !(side > 0.0) {
                    return Err(Error::InvalidArgument(format!("torus side {side}")));
                }
                let h = side / n as f64;
                ((0..n).map(|i| i as f64 * h).collect(), vec![h; n])
            }
            Domain::Square { .. } => {
                let h = 1.0 / (n - 1) as f64;
                let w = (0..n)
                    .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                    .collect();
                ((0..n).map(|i| i as f64 * h).collect(), w)
            }
            Domain::Sphere => {
                return Err(Error::GridMismatch(
                    "the sphere has no planar lattice".into(),
                ))
            }
        };
        let mut nodes = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                nodes.push(Point::planar(coords[i], coords[j]));
                weights.push(w1[i] * w1[j]);
            }
        }
        Ok(Arc::new(Grid {
            domain,
            layout: Layout::Lattice { n },
            nodes,
            weights,
            triangles: Vec::new(),
            latitudes: Vec::new(),
        }))
    }

    pub fn latlon(n_lat: usize, n_lon: usize) -> Result<Arc<Grid>> {
        if n_lat < 2 || n_lon < 4 {
            return Err(Error::ResolutionTooCoarse(format!(
                "lat-lon grid {n_lat}x{n_lon}"
            )));
        }
        let (mu, w) = gauss_legendre(n_lat);
        // north to south
        let lats: Vec<f64> = mu.iter().rev().map(|m| m.asin()).collect();
        let wts: Vec<f64> = w.iter().rev().copied().collect();
        let dphi = 2.0 * PI / n_lon as f64;
        let mut nodes = Vec::with_capacity(n_lat * n_lon);
        let mut weights = Vec::with_capacity(n_lat * n_lon);
        for (lat, wl) in lats.iter().zip(&wts) {
            for k in 0..n_lon {
                nodes.push(Point::from_lonlat(k as f64 * dphi, *lat));
                weights.push(wl * dphi);
            }
        }
        Ok(Arc::new(Grid {
            domain: Domain::Sphere,
            layout: Layout::LatLon { n_lat, n_lon },
            nodes,
            weights,
            triangles: Vec::new(),
            latitudes: lats,
        }))
    }

    pub fn icosphere(level: u32) -> Result<Arc<Grid>> {
        if level > 9 {
            return Err(Error::InvalidArgument(format!(
                "icosphere level {level} is too fine"
            )));
        }
        let (nodes, triangles) = icosphere_mesh(level);
        let mut weights = vec![0.0; nodes.len()];
        for t in &triangles {
            let a = spherical_triangle_area(
                &nodes[t[0] as usize],
                &nodes[t[1] as usize],
                &nodes[t[2] as usize],
            );
            for &v in t {
                weights[v as usize] += a / 3.0;
            }
        }
        Ok(Arc::new(Grid {
            domain: Domain::Sphere,
            layout: Layout::Icosphere { level },
            nodes,
            weights,
            triangles,
            latitudes: Vec::new(),
        }))
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Triangles of an icosphere grid (empty for lattices).
    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Latitudes of a lat-lon grid, north to south.
    pub fn latitudes(&self) -> &[f64] {
        &self.latitudes
    }

    /// Side of a planar lattice.
    pub fn lattice_size(&self) -> Option<usize> {
        match self.layout {
            Layout::Lattice { n } => Some(n),
            _ => None,
        }
    }

    /// Nominal resolution `N` (lattice side, number of latitudes, or `5 * 2^level`).
    pub fn resolution(&self) -> usize {
        match self.layout {
            Layout::Lattice { n } => n,
            Layout::LatLon { n_lat, .. } => n_lat,
            Layout::Icosphere { level } => 5 << level,
        }
    }

    /// Lattice spacing along one axis.
    pub fn spacing(&self) -> Option<f64> {
        let n = self.lattice_size()? as f64;
        Some(match self.domain {
            Domain::Torus { side } => side / n,
            _ => 1.0 / (n - 1.0),
        })
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// True for nodes on the outer boundary of the square.
    pub fn is_boundary(&self, idx: usize) -> bool {
        match (self.domain, &self.layout) {
            (Domain::Square { .. }, Layout::Lattice { n }) => {
                let (i, j) = (idx % n, idx / n);
                i == 0 || j == 0 || i == n - 1 || j == n - 1
            }
            _ => false,
        }
    }
}

/// Real-valued samples of a function on a grid.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value {v} at node {i}"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn<F>(grid: &Arc<Grid>, f: F) -> Result<Self>
    where
        F: Fn(&Point) -> f64 + Sync + Send,
    {
        let values = par::map_slice(grid.nodes(), |p| f(p));
        Self::new(grid.clone(), values)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn domain(&self) -> Domain {
        self.grid.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &ScalarField) -> Result<ScalarField> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(ScalarField {
            grid: self.grid.clone(),
            values,
        })
    }

    /// Quadrature `sum w_i f_i`.
    pub fn integrate(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.weights())
            .map(|(v, w)| v * w)
            .sum()
    }

    /// L2 inner product by quadrature.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .zip(self.grid.weights())
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    /// `(integral |f|^p)^(1/p)`, or `max |f|` for `p = infinity`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if p.is_infinite() && p > 0.0 {
            return Ok(self.max_abs());
        }
        if !(p >= 1.0) {
            return Err(Error::InvalidExponent(p));
        }
        let s: f64 = if p == 1.0 {
            self.values
                .iter()
                .zip(self.grid.weights())
                .map(|(v, w)| v.abs() * w)
                .sum()
        } else if p == 2.0 {
            self.values
                .iter()
                .zip(self.grid.weights())
                .map(|(v, w)| v * v * w)
                .sum()
        } else {
            self.values
                .iter()
                .zip(self.grid.weights())
                .map(|(v, w)| v.abs().powf(p) * w)
                .sum()
        };
        Ok(s.powf(1.0 / p))
    }

    pub fn l1(&self) -> f64 {
        self.lp_norm(1.0).expect("p = 1 is valid")
    }

    pub fn l2(&self) -> f64 {
        self.lp_norm(2.0).expect("p = 2 is valid")
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Whether the field vanishes on the boundary nodes of a square grid.
    pub fn satisfies_dirichlet(&self, tol: f64) -> bool {
        (0..self.values.len()).all(|i| !self.grid.is_boundary(i) || self.values[i].abs() <= tol)
    }

    /// Resamples a lat-lon field onto another spherical grid by barycentric
    /// interpolation on the triangulated lat-lon cells.
    pub fn resample(&self, target: &Arc<Grid>) -> Result<ScalarField> {
        let (n_lat, n_lon) = match self.grid.layout {
            Layout::LatLon { n_lat, n_lon } => (n_lat, n_lon),
            _ => {
                return Err(Error::GridMismatch(
                    "resampling needs a lat-lon source".into(),
                ))
            }
        };
        if !target.domain.is_sphere() {
            return Err(Error::GridMismatch(
                "resampling target must be spherical".into(),
            ));
        }
        let lats = &self.grid.latitudes;
        let vals = &self.values;
        let ring_mean =
            |r: usize| vals[r * n_lon..(r + 1) * n_lon].iter().sum::<f64>() / n_lon as f64;
        let north = ring_mean(0);
        let south = ring_mean(n_lat - 1);
        let dphi = 2.0 * PI / n_lon as f64;
        let sample = |p: &Point| -> f64 {
            let (lon, lat) = p.lonlat();
            let u = lon / dphi;
            let k0 = (u.floor() as usize) % n_lon;
            let k1 = (k0 + 1) % n_lon;
            let fu = u - u.floor();
            // latitudes decrease with index
            let row = |r: usize| vals[r * n_lon + k0] * (1.0 - fu) + vals[r * n_lon + k1] * fu;
            if lat >= lats[0] {
                let s = (lat - lats[0]) / (PI / 2.0 - lats[0]);
                return row(0) * (1.0 - s) + north * s;
            }
            if lat <= lats[n_lat - 1] {
                let s = (lats[n_lat - 1] - lat) / (lats[n_lat - 1] + PI / 2.0);
                return row(n_lat - 1) * (1.0 - s) + south * s;
            }
            let r = lats.partition_point(|&l| l > lat).max(1) - 1;
            let fv = (lats[r] - lat) / (lats[r] - lats[r + 1]);
            // split the cell along its diagonal, barycentric weights on the triangle
            let (a, b, c, d) = (
                vals[r * n_lon + k0],
                vals[r * n_lon + k1],
                vals[(r + 1) * n_lon + k0],
                vals[(r + 1) * n_lon + k1],
            );
            if fu >= fv {
                a + (b - a) * fu + (d - b) * fv
            } else {
                a + (c - a) * fv + (d - c) * fu
            }
        };
        Self::new(target.clone(), par::map_slice(target.nodes(), sample))
    }

    /// CSV with header `x,y,value` (planar) or `lon,lat,value` (sphere), node order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if self.grid.domain.is_sphere() {
            writeln!(w, "lon,lat,value")?;
            for (p, v) in self.grid.nodes.iter().zip(&self.values) {
                let (lon, lat) = p.lonlat();
                writeln!(w, "{lon},{lat},{v}")?;
            }
        } else {
            writeln!(w, "x,y,value")?;
            for (p, v) in self.grid.nodes.iter().zip(&self.values) {
                writeln!(w, "{},{},{v}", p.x(), p.y())?;
            }
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Area of the spherical triangle with unit-vector corners.
pub fn spherical_triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    let [bx, by, bz] = b.0;
    let [cx, cy, cz] = c.0;
    let triple =
        a.0[0] * (by * cz - bz * cy) + a.0[1] * (bz * cx - bx * cz) + a.0[2] * (bx * cy - by * cx);
    let denom = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * triple.abs().atan2(denom)
}

/// The 12 vertices and 20 faces of the unit icosahedron.
pub(crate) fn icosahedron() -> (Vec<Point>, Vec<[u32; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let verts = raw.iter().map(|v| Point(*v).normalized()).collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (verts, faces)
}

fn icosphere_mesh(level: u32) -> (Vec<Point>, Vec<[u32; 3]>) {
    let (mut verts, mut faces) = icosahedron();
    for _ in 0..level {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Point>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (pa, pb) = (verts[a as usize].0, verts[b as usize].0);
                let m = Point([pa[0] + pb[0], pa[1] + pb[1], pa[2] + pb[2]]).normalized();
                verts.push(m);
                (verts.len() - 1) as u32
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}
