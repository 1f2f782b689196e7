//! Zero sets, their length, and the sign components of a field.

use std::io::Write;

use serde::Serialize;

use crate::domain::{sphere_angle, Domain, Layout, Point, ScalarField};
use crate::error::{Error, Result};
use crate::par;
use crate::report::Svg;
use crate::union_find::UnionFind;

/// Default relative threshold below which a nodal value counts as zero.
pub const DEFAULT_TOL: f64 = 1e-12;

/// `(max(f, 0), max(-f, 0))`.
pub fn signed_parts(f: &ScalarField) -> (ScalarField, ScalarField) {
    (f.map(|v| v.max(0.0)), f.map(|v| (-v).max(0.0)))
}

/// One piece of the zero set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
    pub length: f64,
    /// Positive and negative grid nodes of the first cell edge the segment crosses.
    pub positive_node: usize,
    pub negative_node: usize,
}

/// Piecewise-linear approximation of `{f = 0}`.
#[derive(Clone, Debug)]
pub struct NodalSet {
    domain: Domain,
    segments: Vec<Segment>,
    total_length: f64,
}

impl NodalSet {
    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    /// CSV `x1,y1,x2,y2` (planar) or `lon1,lat1,lon2,lat2` (sphere, radians).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if self.domain.is_sphere() {
            writeln!(w, "lon1,lat1,lon2,lat2")?;
            for s in &self.segments {
                let ((a0, a1), (b0, b1)) = (s.a.lonlat(), s.b.lonlat());
                writeln!(w, "{a0},{a1},{b0},{b1}")?;
            }
        } else {
            writeln!(w, "x1,y1,x2,y2")?;
            for s in &self.segments {
                writeln!(w, "{},{},{},{}", s.a.x(), s.a.y(), s.b.x(), s.b.y())?;
            }
        }
        Ok(())
    }

    /// Segments over a coarse heatmap of `field` (blue negative, red positive).
    /// The sphere is drawn in equirectangular longitude-latitude coordinates
    /// with a 30 degree graticule.
    pub fn to_svg(&self, title: &str, field: Option<&ScalarField>) -> Svg {
        let sphere = self.domain.is_sphere();
        let bounds = match self.domain {
            Domain::Torus { side } => [0.0, side, 0.0, side],
            Domain::Square { .. } => [0.0, 1.0, 0.0, 1.0],
            Domain::Sphere => [
                0.0,
                2.0 * std::f64::consts::PI,
                -std::f64::consts::FRAC_PI_2,
                std::f64::consts::FRAC_PI_2,
            ],
        };
        let (size, m, top) = (520.0, 30.0, 20.0);
        let mut svg = Svg::new(size, size + top);
        svg.text((size / 2.0, 16.0), 14.0, "middle", title);
        let [x0, x1, y0, y1] = bounds;
        let sx = (size - 2.0 * m) / (x1 - x0);
        let sy = (size - 2.0 * m) / (y1 - y0);
        let map = |x: f64, y: f64| (m + (x - x0) * sx, top + size - m - (y - y0) * sy);
        let coords = |p: &Point| if sphere { p.lonlat() } else { (p.x(), p.y()) };
        if let Some(f) = field {
            if let Some(n) = f.grid().lattice_size() {
                let stride = n.div_ceil(96).max(1);
                let scale = f.max_abs().max(f64::MIN_POSITIVE);
                let cell = f.grid().spacing().unwrap_or(1.0) * stride as f64;
                for j in (0..n).step_by(stride) {
                    for i in (0..n).step_by(stride) {
                        let k = j * n + i;
                        let v = (f.values()[k] / scale).clamp(-1.0, 1.0);
                        let (px, py) = map(f.grid().nodes()[k].x(), f.grid().nodes()[k].y() + cell);
                        svg.rect(px, py, cell * sx + 0.5, cell * sy + 0.5, &diverging(v));
                    }
                }
            } else if sphere {
                let nodes = f.grid().nodes();
                let stride = nodes.len().div_ceil(12_000).max(1);
                let scale = f.max_abs().max(f64::MIN_POSITIVE);
                for k in (0..nodes.len()).step_by(stride) {
                    let (lon, lat) = nodes[k].lonlat();
                    let v = (f.values()[k] / scale).clamp(-1.0, 1.0);
                    svg.circle(map(lon, lat), 2.0, &diverging(v));
                }
            }
        }
        if sphere {
            for k in 1..12 {
                let lon = k as f64 * std::f64::consts::PI / 6.0;
                svg.line(map(lon, y0), map(lon, y1), "#cccccc", 0.5);
            }
            for k in 1..6 {
                let lat = -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / 6.0;
                svg.line(map(x0, lat), map(x1, lat), "#cccccc", 0.5);
            }
        }
        let (a, b) = (map(x0, y0), map(x1, y1));
        svg.polyline(&[a, (b.0, a.1), b, (a.0, b.1), a], "gray", 1.0);
        for s in &self.segments {
            let (p, q) = (coords(&s.a), coords(&s.b));
            if sphere && (p.0 - q.0).abs() > std::f64::consts::PI {
                continue;
            }
            svg.line(map(p.0, p.1), map(q.0, q.1), "black", 1.0);
        }
        svg
    }
}

fn diverging(v: f64) -> String {
    let t = v.abs();
    let fade = (255.0 * (1.0 - 0.8 * t)).round() as u8;
    if v >= 0.0 {
        format!("#ff{fade:02x}{fade:02x}")
    } else {
        format!("#{fade:02x}{fade:02x}ff")
    }
}

/// Nodal values with near-zero entries moved to `+tau`, `tau = tol * max|f|`.
fn snapped(f: &ScalarField, tol: f64) -> Result<Vec<f64>> {
    let scale = f.max_abs();
    if scale == 0.0 {
        return Err(Error::DegenerateField);
    }
    let tau = tol.max(0.0) * scale;
    let tau = if tau > 0.0 { tau } else { f64::MIN_POSITIVE };
    Ok(f.values()
        .iter()
        .map(|&v| if v.abs() <= tau { tau } else { v })
        .collect())
}

fn crossing(pa: &Point, pb: &Point, va: f64, vb: f64) -> Point {
    let t = va / (va - vb);
    Point([
        pa.0[0] + t * (pb.0[0] - pa.0[0]),
        pa.0[1] + t * (pb.0[1] - pa.0[1]),
        pa.0[2] + t * (pb.0[2] - pa.0[2]),
    ])
}

fn planar_segments(f: &ScalarField, v: &[f64], n: usize) -> Vec<Segment> {
    let grid = f.grid();
    let periodic = matches!(grid.domain(), Domain::Torus { .. });
    let h = grid.spacing().expect("lattice");
    let cells = if periodic { n } else { n - 1 };
    let rows = par::map_range(cells, |j| {
        let mut out = Vec::new();
        for i in 0..cells {
            let (i1, j1) = ((i + 1) % n, (j + 1) % n);
            let idx = [j * n + i, j * n + i1, j1 * n + i1, j1 * n + i];
            // unwrapped corner positions so the cell stays convex across the seam
            let (x, y) = (i as f64 * h, j as f64 * h);
            let pos = [
                Point::planar(x, y),
                Point::planar(x + h, y),
                Point::planar(x + h, y + h),
                Point::planar(x, y + h),
            ];
            let vals = idx.map(|k| v[k]);
            let pos_sign = vals.map(|x| x > 0.0);
            let mut crossed = [false; 4];
            let mut count = 0;
            for e in 0..4 {
                if pos_sign[e] != pos_sign[(e + 1) % 4] {
                    crossed[e] = true;
                    count += 1;
                }
            }
            if count == 0 {
                continue;
            }
            let edge_point =
                |e: usize| crossing(&pos[e], &pos[(e + 1) % 4], vals[e], vals[(e + 1) % 4]);
            let nodes_of = |e: usize| {
                let (a, b) = (idx[e], idx[(e + 1) % 4]);
                if pos_sign[e] {
                    (a, b)
                } else {
                    (b, a)
                }
            };
            let pairs: Vec<(usize, usize)> = if count == 2 {
                let es: Vec<usize> = (0..4).filter(|&e| crossed[e]).collect();
                vec![(es[0], es[1])]
            } else {
                let centre = vals.iter().sum::<f64>() / 4.0;
                if (centre > 0.0) == pos_sign[0] {
                    vec![(0, 1), (2, 3)]
                } else {
                    vec![(3, 0), (1, 2)]
                }
            };
            for (ea, eb) in pairs {
                let (a, b) = (edge_point(ea), edge_point(eb));
                let length = ((a.x() - b.x()).powi(2) + (a.y() - b.y()).powi(2)).sqrt();
                let first = ea.min(eb);
                let (positive_node, negative_node) = nodes_of(first);
                out.push(Segment {
                    a,
                    b,
                    length,
                    positive_node,
                    negative_node,
                });
            }
        }
        out
    });
    rows.into_iter().flatten().collect()
}

fn sphere_segments(f: &ScalarField, v: &[f64]) -> Vec<Segment> {
    let grid = f.grid();
    let nodes = grid.nodes();
    let per_tri = par::map_slice(grid.triangles(), |t| {
        let idx = t.map(|k| k as usize);
        let s = idx.map(|k| v[k] > 0.0);
        if s[0] == s[1] && s[1] == s[2] {
            return None;
        }
        // the vertex whose sign differs from the other two
        let odd = if s[0] == s[1] {
            2
        } else if s[0] == s[2] {
            1
        } else {
            0
        };
        let (o, p, q) = (idx[odd], idx[(odd + 1) % 3], idx[(odd + 2) % 3]);
        let a = crossing(&nodes[o], &nodes[p], v[o], v[p]).normalized();
        let b = crossing(&nodes[o], &nodes[q], v[o], v[q]).normalized();
        let (positive_node, negative_node) = if v[o] > 0.0 { (o, p) } else { (p, o) };
        Some(Segment {
            a,
            b,
            length: sphere_angle(&a, &b),
            positive_node,
            negative_node,
        })
    });
    per_tri.into_iter().flatten().collect()
}

fn extract(f: &ScalarField, tol: f64) -> Result<(Vec<f64>, Vec<Segment>)> {
    let v = snapped(f, tol)?;
    let segs = match f.grid().layout() {
        Layout::Lattice { n } => planar_segments(f, &v, *n),
        Layout::Icosphere { .. } => sphere_segments(f, &v),
        Layout::LatLon { .. } => {
            return Err(Error::GridMismatch(
                "zero sets on the sphere are extracted on an icosphere; resample first".into(),
            ))
        }
    };
    Ok((v, segs))
}

/// Zero set by marching squares (lattices) or marching triangles (icosphere),
/// with linear interpolation along cell edges and saddle cells resolved by the
/// mean of the four corners. Values within `tol * max|f|` of zero count as positive.
pub fn nodal_length(f: &ScalarField, tol: f64) -> Result<NodalSet> {
    let (_, segments) = extract(f, tol)?;
    let total_length = segments.iter().map(|s| s.length).sum();
    Ok(NodalSet {
        domain: f.domain(),
        segments,
        total_length,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
}

/// Statistics of one connected component of `{f > 0}` or `{f < 0}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentStats {
    pub id: usize,
    pub sign: Sign,
    pub nodes: usize,
    pub area: f64,
    /// Length of the zero-level segments adjacent to the component.
    pub boundary_length: f64,
    /// `integral over D of |f|`; equal to `l1_mass`.
    pub excess_mass: f64,
    pub l1_mass: f64,
}

/// Components together with the node-to-component map.
#[derive(Clone, Debug)]
pub struct ComponentMap {
    pub labels: Vec<usize>,
    pub stats: Vec<ComponentStats>,
}

/// Sign components under 4-adjacency (periodic on the torus; mesh edges on
/// the icosphere). Each nodal segment adds its length to the positive and the
/// negative component it separates.
pub fn component_map(f: &ScalarField) -> Result<ComponentMap> {
    let (v, segments) = match extract(f, DEFAULT_TOL) {
        Ok(x) => x,
        Err(Error::DegenerateField) => {
            return Ok(ComponentMap {
                labels: Vec::new(),
                stats: Vec::new(),
            })
        }
        Err(e) => return Err(e),
    };
    let grid = f.grid();
    let mut uf = UnionFind::new(grid.len());
    match grid.layout() {
        Layout::Lattice { n } => {
            let n = *n;
            let periodic = matches!(grid.domain(), Domain::Torus { .. });
            for j in 0..n {
                for i in 0..n {
                    let k = j * n + i;
                    if i + 1 < n || periodic {
                        let r = j * n + (i + 1) % n;
                        if (v[k] > 0.0) == (v[r] > 0.0) {
                            uf.union(k, r);
                        }
                    }
                    if j + 1 < n || periodic {
                        let u = ((j + 1) % n) * n + i;
                        if (v[k] > 0.0) == (v[u] > 0.0) {
                            uf.union(k, u);
                        }
                    }
                }
            }
        }
        _ => {
            for t in grid.triangles() {
                for e in 0..3 {
                    let (a, b) = (t[e] as usize, t[(e + 1) % 3] as usize);
                    if (v[a] > 0.0) == (v[b] > 0.0) {
                        uf.union(a, b);
                    }
                }
            }
        }
    }
    let (labels, k) = uf.labels();
    let mut stats: Vec<ComponentStats> = (0..k)
        .map(|id| ComponentStats {
            id,
            sign: Sign::Positive,
            nodes: 0,
            area: 0.0,
            boundary_length: 0.0,
            excess_mass: 0.0,
            l1_mass: 0.0,
        })
        .collect();
    for (node, &c) in labels.iter().enumerate() {
        let s = &mut stats[c];
        s.sign = if v[node] > 0.0 {
            Sign::Positive
        } else {
            Sign::Negative
        };
        s.nodes += 1;
        s.area += grid.weights()[node];
        s.l1_mass += f.values()[node].abs() * grid.weights()[node];
    }
    for s in &mut stats {
        s.excess_mass = s.l1_mass;
    }
    for seg in &segments {
        stats[labels[seg.positive_node]].boundary_length += seg.length;
        stats[labels[seg.negative_node]].boundary_length += seg.length;
    }
    Ok(ComponentMap { labels, stats })
}

pub fn components(f: &ScalarField) -> Result<Vec<ComponentStats>> {
    Ok(component_map(f)?.stats)
}

/// `sum over positive components of delta_i^(p+1) / |dD_i|^p`.
pub fn proof_sum(stats: &[ComponentStats], p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidExponent(p));
    }
    let mut sum = 0.0;
    for s in stats.iter().filter(|s| s.sign == Sign::Positive) {
        if !(s.boundary_length > 0.0) {
            return Err(Error::DegenerateComponent { id: s.id });
        }
        sum += s.excess_mass.powf(p + 1.0) / s.boundary_length.powf(p);
    }
    Ok(sum)
}
