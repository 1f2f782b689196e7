//! Area of epsilon-enlargements of planar shapes, measured on pixel grids.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::report::Csv;
use crate::union_find::UnionFind;

/// Pixels across the longer side of a shape's bounding box.
pub const DEFAULT_RESOLUTION: usize = 1024;
/// Upper limit for automatically raised resolutions.
pub const MAX_RESOLUTION: usize = 8192;
/// Automatic resolutions keep at least this many pixels per `eps`.
pub const PIXELS_PER_EPS: f64 = 8.0;

const FAR: f64 = 1e30;

/// Squared Euclidean distance, in pixel units, from every pixel to the
/// nearest `true` pixel of a row-major `nx x ny` mask.
///
/// Exact separable transform (lower envelope of parabolas along rows, then
/// columns). With `periodic` both axes wrap. Pixels with no feature at all
/// receive a huge value.
pub fn squared_distance_transform(mask: &[bool], nx: usize, ny: usize, periodic: bool) -> Vec<f64> {
    assert_eq!(mask.len(), nx * ny, "mask size");
    let mut d: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { FAR }).collect();
    par::for_each_chunk_mut(&mut d, nx, |_, row| {
        let out = envelope_1d(row, periodic);
        row.copy_from_slice(&out);
    });
    let mut cols = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            cols[i * ny + j] = d[j * nx + i];
        }
    }
    par::for_each_chunk_mut(&mut cols, ny, |_, col| {
        let out = envelope_1d(col, periodic);
        col.copy_from_slice(&out);
    });
    for j in 0..ny {
        for i in 0..nx {
            d[j * nx + i] = cols[i * ny + j];
        }
    }
    d
}

fn envelope_1d(f: &[f64], periodic: bool) -> Vec<f64> {
    let n = f.len();
    if !periodic {
        return lower_envelope(f);
    }
    // three copies side by side; the middle one sees every wrapped neighbour
    let tiled: Vec<f64> = (0..3 * n).map(|k| f[k % n]).collect();
    lower_envelope(&tiled)[n..2 * n].to_vec()
}

fn lower_envelope(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![FAR; n];
    let sites: Vec<usize> = (0..n).filter(|&q| f[q] < FAR).collect();
    if sites.is_empty() {
        return out;
    }
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    let intersect = |p: usize, q: usize| -> f64 {
        let (pf, qf) = (p as f64, q as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf))
    };
    for &q in &sites {
        loop {
            match v.last() {
                Some(&p) if intersect(p, q) <= *z.last().unwrap() => {
                    v.pop();
                    z.pop();
                }
                _ => break,
            }
        }
        z.push(if v.is_empty() {
            f64::NEG_INFINITY
        } else {
            intersect(*v.last().unwrap(), q)
        });
        v.push(q);
    }
    z.push(f64::INFINITY);
    let mut k = 0;
    for (x, o) in out.iter_mut().enumerate() {
        let xf = x as f64;
        while z[k + 1] < xf {
            k += 1;
        }
        let dx = xf - v[k] as f64;
        *o = dx * dx + f[v[k]];
    }
    out
}

type Indicator = Arc<dyn Fn(f64, f64) -> bool + Send + Sync>;

/// A planar region given by its indicator, with reference area and perimeter.
#[derive(Clone)]
pub struct TestShape {
    name: String,
    indicator: Indicator,
    area: Option<f64>,
    perimeter: Option<f64>,
    bbox: [f64; 4],
}

impl fmt::Debug for TestShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestShape")
            .field("name", &self.name)
            .field("area", &self.area)
            .field("perimeter", &self.perimeter)
            .field("bbox", &self.bbox)
            .finish()
    }
}

impl TestShape {
    /// `bbox` is `[xmin, xmax, ymin, ymax]` and must contain the region.
    pub fn new<F>(
        name: &str,
        indicator: F,
        area: Option<f64>,
        perimeter: Option<f64>,
        bbox: [f64; 4],
    ) -> Self
    where
        F: Fn(f64, f64) -> bool + Send + Sync + 'static,
    {
        TestShape {
            name: name.to_string(),
            indicator: Arc::new(indicator),
            area,
            perimeter,
            bbox,
        }
    }

    pub fn disk(r: f64) -> Self {
        Self::new(
            "disk",
            move |x, y| x * x + y * y <= r * r,
            Some(PI * r * r),
            Some(2.0 * PI * r),
            [-r, r, -r, r],
        )
    }

    pub fn unit_square() -> Self {
        Self::new(
            "square",
            |x, y| (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y),
            Some(1.0),
            Some(4.0),
            [0.0, 1.0, 0.0, 1.0],
        )
    }

    /// Axis-aligned ellipse with semi-axes `a` and `b`.
    pub fn ellipse(a: f64, b: f64) -> Self {
        Self::new(
            "ellipse",
            move |x, y| (x / a).powi(2) + (y / b).powi(2) <= 1.0,
            Some(PI * a * b),
            Some(ellipse_perimeter(a, b)),
            [-a, a, -b, b],
        )
    }

    /// `[0,2]x[0,1]` joined with `[0,1]x[0,2]`.
    pub fn l_shape() -> Self {
        Self::new(
            "l_shape",
            |x, y| (0.0..=2.0).contains(&x) && (0.0..=2.0).contains(&y) && (x <= 1.0 || y <= 1.0),
            Some(3.0),
            Some(8.0),
            [0.0, 2.0, 0.0, 2.0],
        )
    }

    /// Star polygon with `points` tips at radius `outer` and notches at `inner`.
    pub fn star(points: usize, outer: f64, inner: f64) -> Self {
        let verts: Vec<[f64; 2]> = (0..2 * points)
            .map(|k| {
                let r = if k % 2 == 0 { outer } else { inner };
                let t = PI / 2.0 + PI * k as f64 / points as f64;
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        Self::polygon("star", verts)
    }

    /// Closed disk of radius `outer` minus the open disk of radius `inner`.
    pub fn annulus(outer: f64, inner: f64) -> Self {
        Self::new(
            "annulus",
            move |x, y| {
                let r2 = x * x + y * y;
                r2 <= outer * outer && r2 >= inner * inner
            },
            Some(PI * (outer * outer - inner * inner)),
            Some(2.0 * PI * (outer + inner)),
            [-outer, outer, -outer, outer],
        )
    }

    /// Simple polygon (even-odd rule); area and perimeter come from the vertices.
    pub fn polygon(name: &str, verts: Vec<[f64; 2]>) -> Self {
        let n = verts.len();
        let mut area = 0.0;
        let mut perimeter = 0.0;
        let mut bbox = [
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ];
        for k in 0..n {
            let (p, q) = (verts[k], verts[(k + 1) % n]);
            area += p[0] * q[1] - q[0] * p[1];
            perimeter += (q[0] - p[0]).hypot(q[1] - p[1]);
            bbox = [
                bbox[0].min(p[0]),
                bbox[1].max(p[0]),
                bbox[2].min(p[1]),
                bbox[3].max(p[1]),
            ];
        }
        let contains = move |x: f64, y: f64| {
            let mut inside = false;
            for k in 0..n {
                let (p, q) = (verts[k], verts[(k + 1) % n]);
                if (p[1] > y) != (q[1] > y) && x < p[0] + (y - p[1]) * (q[0] - p[0]) / (q[1] - p[1])
                {
                    inside = !inside;
                }
            }
            inside
        };
        Self::new(
            name,
            contains,
            Some(area.abs() / 2.0),
            Some(perimeter),
            bbox,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.indicator)(x, y)
    }

    pub fn area(&self) -> Option<f64> {
        self.area
    }

    pub fn perimeter(&self) -> Option<f64> {
        self.perimeter
    }

    pub fn bbox(&self) -> [f64; 4] {
        self.bbox
    }

    /// Number of 4-connected pixel clusters of the region at `resolution`.
    pub fn component_count(&self, resolution: usize) -> usize {
        let raster = Raster::new(self, 0.0, resolution);
        let (nx, ny) = (raster.nx, raster.ny);
        let mask = raster.mask(self);
        let mut uf = UnionFind::new(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if !mask[k] {
                    continue;
                }
                if i + 1 < nx && mask[k + 1] {
                    uf.union(k, k + 1);
                }
                if j + 1 < ny && mask[k + nx] {
                    uf.union(k, k + nx);
                }
            }
        }
        let mut roots: Vec<usize> = (0..nx * ny)
            .filter(|&k| mask[k])
            .map(|k| uf.find(k))
            .collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }
}

fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    // trapezoid rule is spectrally accurate for the periodic integrand
    let n = 4096;
    let h = 2.0 * PI / n as f64;
    (0..n)
        .map(|k| k as f64 * h)
        .map(|t| (a * t.sin()).hypot(b * t.cos()))
        .sum::<f64>()
        * h
}

/// Disk, unit square, 10:1 ellipse, L-shape, five-point star and annulus.
pub fn standard_suite() -> Vec<TestShape> {
    vec![
        TestShape::disk(1.0),
        TestShape::unit_square(),
        TestShape::ellipse(1.0, 0.1),
        TestShape::l_shape(),
        TestShape::star(5, 1.0, 0.5),
        TestShape::annulus(1.0, 0.5),
    ]
}

/// Pixel grid over a padded bounding box. The box edges fall on pixel
/// boundaries, so axis-aligned edges are never sampled exactly.
struct Raster {
    x0: f64,
    y0: f64,
    h: f64,
    nx: usize,
    ny: usize,
}

impl Raster {
    fn new(shape: &TestShape, pad: f64, resolution: usize) -> Self {
        let [xa, xb, ya, yb] = shape.bbox;
        let side = (xb - xa).max(yb - ya);
        let h = side / resolution as f64;
        let pad_px = (pad / h).ceil() as usize + 2;
        let cx = ((xb - xa) / h - 1e-9).ceil() as usize;
        let cy = ((yb - ya) / h - 1e-9).ceil() as usize;
        Raster {
            x0: xa - pad_px as f64 * h,
            y0: ya - pad_px as f64 * h,
            h,
            nx: cx + 2 * pad_px,
            ny: cy + 2 * pad_px,
        }
    }

    fn mask(&self, shape: &TestShape) -> Vec<bool> {
        let mut mask = vec![false; self.nx * self.ny];
        par::for_each_chunk_mut(&mut mask, self.nx, |j, row| {
            let y = self.y0 + (j as f64 + 0.5) * self.h;
            for (i, m) in row.iter_mut().enumerate() {
                *m = shape.contains(self.x0 + (i as f64 + 0.5) * self.h, y);
            }
        });
        mask
    }
}

/// Pixel-counted area of `{x outside the shape : d(x, shape) <= eps}` at the
/// given resolution.
///
/// Distances are measured between pixel centres, which overstates the
/// distance to the true boundary by half a pixel on average; the threshold is
/// shifted by `h/2` to compensate.
pub fn enlargement_area(shape: &TestShape, eps: f64, resolution: usize) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let raster = Raster::new(shape, eps, resolution);
    if eps < 2.0 * raster.h {
        return Err(Error::ResolutionTooCoarse(format!(
            "eps = {eps} is below two pixel widths ({}) at resolution {resolution}",
            2.0 * raster.h
        )));
    }
    let mask = raster.mask(shape);
    let d2 = squared_distance_transform(&mask, raster.nx, raster.ny, false);
    let limit = eps / raster.h + 0.5;
    let limit2 = limit * limit;
    let count = mask
        .iter()
        .zip(&d2)
        .filter(|(&m, &d)| !m && d <= limit2)
        .count();
    Ok(count as f64 * raster.h * raster.h)
}

/// Resolution that keeps `eps` at least eight pixels wide, never below the
/// default and never above [`MAX_RESOLUTION`].
pub fn auto_resolution(shape: &TestShape, eps: f64) -> usize {
    let [xa, xb, ya, yb] = shape.bbox;
    let side = (xb - xa).max(yb - ya);
    let need = (PIXELS_PER_EPS * side / eps).ceil();
    (need.max(DEFAULT_RESOLUTION as f64) as usize).min(MAX_RESOLUTION)
}

/// One measurement of the enlargement inequality.
#[derive(Clone, Debug, Serialize)]
pub struct LemmaRow {
    pub shape: String,
    pub eps: f64,
    pub enlargement_area: f64,
    pub perimeter: f64,
    pub ratio: f64,
    pub precondition_ok: bool,
    pub resolution: usize,
}

fn reference(shape: &TestShape) -> Result<(f64, f64)> {
    match (shape.area, shape.perimeter) {
        (Some(a), Some(p)) if a > 0.0 && p > 0.0 => Ok((a, p)),
        _ => Err(Error::InvalidArgument(format!(
            "shape {} lacks a reference area or perimeter",
            shape.name
        ))),
    }
}

/// Measures `enlargement_area / (eps * perimeter)` regardless of whether `eps`
/// satisfies `eps <= sqrt(area)/8`; the outcome is recorded in the row.
pub fn lemma_row(shape: &TestShape, eps: f64) -> Result<LemmaRow> {
    let (area, perimeter) = reference(shape)?;
    let resolution = auto_resolution(shape, eps);
    let enl = enlargement_area(shape, eps, resolution)?;
    Ok(LemmaRow {
        shape: shape.name.clone(),
        eps,
        enlargement_area: enl,
        perimeter,
        ratio: enl / (eps * perimeter),
        precondition_ok: eps <= area.sqrt() / 8.0,
        resolution,
    })
}

/// The ratio `enlargement_area / (eps * perimeter)`. Values of `eps` above
/// `sqrt(area)/8` are still measured, then reported as
/// [`Error::PreconditionViolated`] carrying the ratio.
pub fn lemma_ratio(shape: &TestShape, eps: f64) -> Result<f64> {
    let row = lemma_row(shape, eps)?;
    if !row.precondition_ok {
        let limit = reference(shape)?.0.sqrt() / 8.0;
        return Err(Error::PreconditionViolated {
            eps,
            limit,
            ratio: row.ratio,
        });
    }
    Ok(row.ratio)
}

/// `sqrt(area)/8 * 2^-j` for `j = 0..levels`.
pub fn eps_ladder(shape: &TestShape, levels: usize) -> Result<Vec<f64>> {
    let (area, _) = reference(shape)?;
    Ok((0..levels)
        .map(|j| area.sqrt() / 8.0 * 0.5f64.powi(j as i32))
        .collect())
}

/// Every shape against its own eps ladder, in shape-major order.
pub fn lemma_sweep(shapes: &[TestShape], levels: usize) -> Result<Vec<LemmaRow>> {
    let mut jobs = Vec::new();
    for (s, shape) in shapes.iter().enumerate() {
        for eps in eps_ladder(shape, levels)? {
            jobs.push((s, eps));
        }
    }
    par::map_slice(&jobs, |&(s, eps)| lemma_row(&shapes[s], eps))
        .into_iter()
        .collect()
}

pub fn lemma_csv(rows: &[LemmaRow]) -> Csv {
    let mut csv = Csv::new(&[
        "shape",
        "eps",
        "enlargement_area",
        "perimeter",
        "ratio",
        "precondition_ok",
    ]);
    for r in rows {
        csv.row([
            r.shape.clone(),
            r.eps.to_string(),
            r.enlargement_area.to_string(),
            r.perimeter.to_string(),
            r.ratio.to_string(),
            r.precondition_ok.to_string(),
        ]);
    }
    csv
}
