//! Bounded 2D Voronoi cells by successive half-plane clipping of the box.

use crate::dynamics::BoxDomain;
use crate::error::{Error, Result};

/// Convex polygon whose edge `t` runs from `vertices[t]` to
/// `vertices[t + 1]` and lies on the bisector with `labels[t]`, or on the
/// box wall when the label is `None`.
#[derive(Debug, Clone)]
pub(crate) struct LabelledPolygon {
    pub vertices: Vec<[f64; 2]>,
    pub labels: Vec<Option<usize>>,
}

impl LabelledPolygon {
    fn rectangle(domain: &BoxDomain) -> Self {
        let (lo, hi) = (domain.lo(), domain.hi());
        Self {
            vertices: vec![
                [lo[0], lo[1]],
                [hi[0], lo[1]],
                [hi[0], hi[1]],
                [lo[0], hi[1]],
            ],
            labels: vec![None; 4],
        }
    }

    /// Keep `{x : (x - mid)·n <= 0}`, labelling the new edge with `other`.
    fn clip(&mut self, mid: [f64; 2], n: [f64; 2], other: usize, eps: f64) {
        let m = self.vertices.len();
        let side = |p: &[f64; 2]| (p[0] - mid[0]) * n[0] + (p[1] - mid[1]) * n[1];
        let dist: Vec<f64> = self.vertices.iter().map(side).collect();
        if dist.iter().all(|&s| s <= eps) {
            return;
        }
        let mut verts = Vec::with_capacity(m + 1);
        let mut labels = Vec::with_capacity(m + 1);
        for t in 0..m {
            let (p, q) = (self.vertices[t], self.vertices[(t + 1) % m]);
            let (dp, dq) = (dist[t], dist[(t + 1) % m]);
            let (p_in, q_in) = (dp <= eps, dq <= eps);
            let cross = || {
                let s = dp / (dp - dq);
                [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]
            };
            match (p_in, q_in) {
                (true, true) => {
                    verts.push(p);
                    labels.push(self.labels[t]);
                }
                (true, false) => {
                    verts.push(p);
                    labels.push(self.labels[t]);
                    if dp < -eps {
                        verts.push(cross());
                        labels.push(Some(other));
                    } else {
                        // p sits on the clip line; the edge leaving it follows the line
                        *labels.last_mut().unwrap() = Some(other);
                    }
                }
                (false, true) => {
                    if dq < -eps {
                        verts.push(cross());
                        labels.push(self.labels[t]);
                    }
                }
                (false, false) => {}
            }
        }
        self.vertices = verts;
        self.labels = labels;
        self.dedup(eps);
    }

    fn dedup(&mut self, eps: f64) {
        let mut t = 0;
        while self.vertices.len() > 2 && t < self.vertices.len() {
            let m = self.vertices.len();
            let (p, q) = (self.vertices[t], self.vertices[(t + 1) % m]);
            if (p[0] - q[0]).hypot(p[1] - q[1]) <= eps {
                // drop the zero-length edge starting at t
                self.vertices.remove(t);
                self.labels.remove(t);
            } else {
                t += 1;
            }
        }
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }
}

pub(crate) fn shoelace(poly: &[[f64; 2]]) -> f64 {
    let m = poly.len();
    let mut a = 0.0;
    for t in 0..m {
        let (p, q) = (poly[t], poly[(t + 1) % m]);
        a += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * a.abs()
}

/// Cell polygons for every generator, clipped to the box.
pub(crate) fn voronoi_cells(
    domain: &BoxDomain,
    generators: &[[f64; 2]],
) -> Result<Vec<LabelledPolygon>> {
    let n = generators.len();
    let scale = (domain.hi()[0] - domain.lo()[0]).max(domain.hi()[1] - domain.lo()[1]);
    let eps = 1e-12 * scale;
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (generators[i], generators[j]);
            if (a[0] - b[0]).hypot(a[1] - b[1]) <= 1e-12 {
                return Err(Error::DegenerateGenerators {
                    first: i,
                    second: j,
                });
            }
        }
    }
    let mut cells = Vec::with_capacity(n);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for (i, g) in generators.iter().enumerate() {
        order.clear();
        order.extend(
            generators
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, o)| ((o[0] - g[0]).hypot(o[1] - g[1]), j)),
        );
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut poly = LabelledPolygon::rectangle(domain);
        for &(dist, j) in &order {
            let reach = poly
                .vertices
                .iter()
                .map(|v| (v[0] - g[0]).hypot(v[1] - g[1]))
                .fold(0.0, f64::max);
            if dist > 2.0 * reach + eps {
                break;
            }
            let o = generators[j];
            let mid = [0.5 * (g[0] + o[0]), 0.5 * (g[1] + o[1])];
            let nrm = [(o[0] - g[0]) / dist, (o[1] - g[1]) / dist];
            poly.clip(mid, nrm, j, eps);
        }
        cells.push(poly);
    }
    Ok(cells)
}
