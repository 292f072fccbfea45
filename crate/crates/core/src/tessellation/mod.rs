//! Partitions of the box into grid or 2D Voronoi cells.
//!
//! Every cell `i` has a generator `g_i`; point location is nearest
//! generator with the smallest index winning ties. For adjacent cells the
//! outer unit normal of `S_i` on the shared facet is `(g_k - g_i)/|g_k - g_i|`,
//! and the facet lies in the bisecting hyperplane of the two generators.

mod conditioning;
mod grid;
mod voronoi;

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use rand::Rng;

use crate::dynamics::{BoxDomain, DiffusionModel};
use crate::error::{invalid, Error, Result};

pub use conditioning::{cell_conditioning, conditioning, CellConditioning, ConditioningReport};
pub use grid::GridSpec;

#[derive(Debug, Clone, PartialEq)]
pub enum TessellationKind {
    Grid(GridSpec),
    Voronoi2d,
}

/// Shared facet of two adjacent cells `i < k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub i: usize,
    pub k: usize,
    /// `(d-1)`-dimensional measure of the facet.
    pub measure: f64,
    /// Outer unit normal of cell `i`.
    pub normal: Vec<f64>,
    /// Facet vertices, `d` coordinates each (2D: the two edge endpoints).
    pub vertices: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Tessellation {
    dim: usize,
    domain: BoxDomain,
    kind: TessellationKind,
    generators: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
    facets: Vec<Facet>,
    facet_lookup: HashMap<(usize, usize), usize>,
    polygons: Vec<Vec<[f64; 2]>>,
    volumes: Vec<f64>,
}

/// Cubic mesh of side `h`; generators at cell centres.
pub fn build_grid(domain: &BoxDomain, h: f64) -> Result<Tessellation> {
    let spec = GridSpec::new(domain, h)?;
    let d = spec.dim();
    let n = spec.n_cells();
    let mut generators = Vec::with_capacity(n * d);
    for i in 0..n {
        generators.extend(spec.center(i));
    }
    let mut neighbors = vec![Vec::new(); n];
    let mut facets = Vec::new();
    for i in 0..n {
        let idx = spec.multi_index(i);
        for k in 0..d {
            if idx[k] + 1 < spec.counts()[k] {
                let j = i + spec.strides()[k];
                neighbors[i].push(j);
                neighbors[j].push(i);
                let mut normal = vec![0.0; d];
                normal[k] = 1.0;
                // facet: the cell's upper face along axis k
                let face = spec.face(k, idx[k] + 1);
                let vertices = spec
                    .corners(i)
                    .into_iter()
                    .filter(|c| c[k] == face)
                    .collect();
                facets.push(Facet {
                    i,
                    k: j,
                    measure: h.powi(d as i32 - 1),
                    normal,
                    vertices,
                });
            }
        }
    }
    for nb in &mut neighbors {
        nb.sort_unstable();
    }
    let volumes = vec![h.powi(d as i32); n];
    let polygons = if d == 2 {
        (0..n)
            .map(|i| {
                let c = spec.corners(i);
                // corners come in mask order 00,10,01,11
                vec![
                    [c[0][0], c[0][1]],
                    [c[1][0], c[1][1]],
                    [c[3][0], c[3][1]],
                    [c[2][0], c[2][1]],
                ]
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(Tessellation::assemble(
        d,
        domain.clone(),
        TessellationKind::Grid(spec),
        generators,
        neighbors,
        facets,
        polygons,
        volumes,
    ))
}

/// Voronoi tessellation of a 2D box. Cells are the box clipped by the
/// bisector half-planes; adjacency requires a shared edge of positive length.
pub fn build_voronoi2d(domain: &BoxDomain, generators: &[[f64; 2]]) -> Result<Tessellation> {
    if domain.dim() != 2 {
        return Err(invalid(
            "domain",
            "Voronoi tessellations are supported in 2D only",
        ));
    }
    if generators.is_empty() {
        return Err(invalid("generators", "need at least one generator"));
    }
    for g in generators {
        if !domain.contains(g) {
            return Err(Error::OutOfDomain { point: g.to_vec() });
        }
    }
    let cells = voronoi::voronoi_cells(domain, generators)?;
    let n = generators.len();
    let scale = (domain.hi()[0] - domain.lo()[0]).max(domain.hi()[1] - domain.lo()[1]);
    let min_len = 1e-10 * scale;

    // edge seen from each side; keep the longer reading and the i < k geometry
    let mut shared: HashMap<(usize, usize), (f64, [[f64; 2]; 2])> = HashMap::new();
    for (i, cell) in cells.iter().enumerate() {
        let m = cell.vertices.len();
        for t in 0..m {
            if let Some(j) = cell.labels[t] {
                let (p, q) = (cell.vertices[t], cell.vertices[(t + 1) % m]);
                let len = (p[0] - q[0]).hypot(p[1] - q[1]);
                if len <= min_len {
                    continue;
                }
                let key = (i.min(j), i.max(j));
                let entry = shared.entry(key).or_insert((0.0, [p, q]));
                if i < j || entry.0 == 0.0 {
                    entry.1 = [p, q];
                }
                entry.0 = entry.0.max(len);
            }
        }
    }
    let mut keys: Vec<_> = shared.keys().copied().collect();
    keys.sort_unstable();
    let mut neighbors = vec![Vec::new(); n];
    let mut facets = Vec::with_capacity(keys.len());
    for (i, k) in keys {
        let (measure, [p, q]) = shared[&(i, k)];
        neighbors[i].push(k);
        neighbors[k].push(i);
        facets.push(Facet {
            i,
            k,
            measure,
            normal: unit_difference(&generators[i], &generators[k]),
            vertices: vec![p.to_vec(), q.to_vec()],
        });
    }
    for nb in &mut neighbors {
        nb.sort_unstable();
    }
    let volumes = cells.iter().map(|c| c.area()).collect();
    let polygons = cells.into_iter().map(|c| c.vertices).collect();
    Ok(Tessellation::assemble(
        2,
        domain.clone(),
        TessellationKind::Voronoi2d,
        generators.iter().flat_map(|g| g.iter().copied()).collect(),
        neighbors,
        facets,
        polygons,
        volumes,
    ))
}

fn unit_difference(from: &[f64], to: &[f64]) -> Vec<f64> {
    let diff: Vec<f64> = to.iter().zip(from).map(|(a, b)| a - b).collect();
    let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff.into_iter().map(|v| v / norm).collect()
}

impl Tessellation {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        dim: usize,
        domain: BoxDomain,
        kind: TessellationKind,
        generators: Vec<f64>,
        neighbors: Vec<Vec<usize>>,
        facets: Vec<Facet>,
        polygons: Vec<Vec<[f64; 2]>>,
        volumes: Vec<f64>,
    ) -> Self {
        let facet_lookup = facets
            .iter()
            .enumerate()
            .map(|(f, facet)| ((facet.i, facet.k), f))
            .collect();
        Self {
            dim,
            domain,
            kind,
            generators,
            neighbors,
            facets,
            facet_lookup,
            polygons,
            volumes,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.neighbors.len()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn kind(&self) -> &TessellationKind {
        &self.kind
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        match &self.kind {
            TessellationKind::Grid(g) => Some(g),
            TessellationKind::Voronoi2d => None,
        }
    }

    pub fn generator(&self, i: usize) -> &[f64] {
        &self.generators[i * self.dim..(i + 1) * self.dim]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn facet(&self, i: usize, k: usize) -> Option<&Facet> {
        self.facet_lookup
            .get(&(i.min(k), i.max(k)))
            .map(|&f| &self.facets[f])
    }

    pub fn is_adjacent(&self, i: usize, k: usize) -> bool {
        self.facet(i, k).is_some()
    }

    pub fn facet_measure(&self, i: usize, k: usize) -> Option<f64> {
        self.facet(i, k).map(|f| f.measure)
    }

    /// Outer unit normal of `S_i` on its facet with `S_k`; exactly the
    /// negation of `normal(k, i)`.
    pub fn normal(&self, i: usize, k: usize) -> Option<Vec<f64>> {
        self.facet(i, k).map(|f| {
            if f.i == i {
                f.normal.clone()
            } else {
                f.normal.iter().map(|v| -v).collect()
            }
        })
    }

    /// Lebesgue measure of cell `i`.
    pub fn cell_volume(&self, i: usize) -> f64 {
        self.volumes[i]
    }

    /// Polygon of cell `i` (2D only; counter-clockwise for grids).
    pub fn polygon(&self, i: usize) -> Option<&[[f64; 2]]> {
        self.polygons.get(i).map(|p| p.as_slice())
    }

    /// Extreme points of cell `i`.
    pub fn cell_vertices(&self, i: usize) -> Vec<Vec<f64>> {
        match &self.kind {
            TessellationKind::Grid(g) => g.corners(i),
            TessellationKind::Voronoi2d => self.polygons[i].iter().map(|p| p.to_vec()).collect(),
        }
    }

    /// Largest cell diameter.
    pub fn width(&self) -> f64 {
        match &self.kind {
            TessellationKind::Grid(g) => g.h() * (self.dim as f64).sqrt(),
            TessellationKind::Voronoi2d => self
                .polygons
                .iter()
                .map(|poly| {
                    let mut best: f64 = 0.0;
                    for (a, p) in poly.iter().enumerate() {
                        for q in &poly[a + 1..] {
                            best = best.max((p[0] - q[0]).hypot(p[1] - q[1]));
                        }
                    }
                    best
                })
                .fold(0.0, f64::max),
        }
    }

    fn check_domain(&self, x: &[f64]) -> Result<()> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { point: x.to_vec() })
        }
    }

    fn sq_dist(&self, i: usize, x: &[f64]) -> f64 {
        self.generator(i)
            .iter()
            .zip(x)
            .map(|(g, v)| (g - v) * (g - v))
            .sum()
    }

    /// Cell containing `x`: nearest generator, smallest index on ties.
    #[inline]
    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        self.check_domain(x)?;
        Ok(self.locate_unchecked(x))
    }

    #[inline]
    pub(crate) fn locate_unchecked(&self, x: &[f64]) -> usize {
        match &self.kind {
            TessellationKind::Grid(g) => g.locate(x),
            TessellationKind::Voronoi2d => {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for i in 0..self.n_cells() {
                    let d = self.sq_dist(i, x);
                    if d < best_d {
                        best_d = d;
                        best = i;
                    }
                }
                best
            }
        }
    }

    /// Point location that keeps `prev` when `x` lies exactly on the
    /// boundary of `prev` and the located cell.
    #[inline]
    pub fn locate_with_prev(&self, x: &[f64], prev: Option<usize>) -> Result<usize> {
        let here = self.locate(x)?;
        Ok(match prev {
            Some(p) if p != here && self.on_closure_exact(p, x, here) => p,
            _ => here,
        })
    }

    fn on_closure_exact(&self, p: usize, x: &[f64], here: usize) -> bool {
        match &self.kind {
            TessellationKind::Grid(g) => {
                let a = g.multi_index(p);
                (0..self.dim).all(|k| g.face(k, a[k]) <= x[k] && x[k] <= g.face(k, a[k] + 1))
            }
            TessellationKind::Voronoi2d => self.sq_dist(p, x) == self.sq_dist(here, x),
        }
    }

    /// Every cell whose closure contains `x` up to distance `tol`, ascending.
    pub fn touching_cells(&self, x: &[f64], tol: f64) -> Result<Vec<usize>> {
        self.check_domain(x)?;
        match &self.kind {
            TessellationKind::Grid(g) => {
                let mut per_axis = Vec::with_capacity(self.dim);
                for k in 0..self.dim {
                    let j = g.axis_index(k, x[k]);
                    let mut c = vec![j];
                    if j > 0 && (x[k] - g.face(k, j)).abs() <= tol {
                        c.push(j - 1);
                    }
                    if j + 1 < g.counts()[k] && (x[k] - g.face(k, j + 1)).abs() <= tol {
                        c.push(j + 1);
                    }
                    per_axis.push(c);
                }
                let mut out = vec![0usize];
                for (k, c) in per_axis.iter().enumerate() {
                    out = out
                        .iter()
                        .flat_map(|base| c.iter().map(move |j| base + j * g.strides()[k]))
                        .collect();
                }
                out.sort_unstable();
                Ok(out)
            }
            TessellationKind::Voronoi2d => {
                let here = self.locate_unchecked(x);
                let gh = self.generator(here).to_vec();
                let dh = self.sq_dist(here, x).sqrt();
                let mut out: Vec<usize> = (0..self.n_cells())
                    .filter(|&i| {
                        if i == here {
                            return true;
                        }
                        // distance from x to the bisector of (here, i)
                        let gi = self.generator(i);
                        let sep = ((gi[0] - gh[0]).powi(2) + (gi[1] - gh[1]).powi(2)).sqrt();
                        let di = self.sq_dist(i, x).sqrt();
                        (di * di - dh * dh) / (2.0 * sep) <= tol
                    })
                    .collect();
                out.sort_unstable();
                Ok(out)
            }
        }
    }

    /// Uniform sample from cell `i`.
    pub fn sample_in_cell<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Vec<f64> {
        match &self.kind {
            TessellationKind::Grid(g) => {
                let idx = g.multi_index(i);
                (0..self.dim)
                    .map(|k| {
                        let (a, b) = (g.face(k, idx[k]), g.face(k, idx[k] + 1));
                        a + rng.random::<f64>() * (b - a)
                    })
                    .collect()
            }
            TessellationKind::Voronoi2d => {
                let poly = &self.polygons[i];
                let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
                for p in poly {
                    for k in 0..2 {
                        lo[k] = lo[k].min(p[k]);
                        hi[k] = hi[k].max(p[k]);
                    }
                }
                loop {
                    let x = [
                        lo[0] + rng.random::<f64>() * (hi[0] - lo[0]),
                        lo[1] + rng.random::<f64>() * (hi[1] - lo[1]),
                    ];
                    if self.domain.contains(&x) && self.locate_unchecked(&x) == i {
                        return x.to_vec();
                    }
                }
            }
        }
    }

    /// Stable identifier of the geometry (generators and kind).
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.dim.hash(&mut h);
        matches!(self.kind, TessellationKind::Grid(_)).hash(&mut h);
        for v in &self.generators {
            v.to_bits().hash(&mut h);
        }
        for v in self.domain.lo().iter().chain(self.domain.hi()) {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// Boundary between member and non-member cells as polylines (2D).
    /// Facets on the box wall are not part of the boundary.
    pub fn region_boundary<F: Fn(usize) -> bool>(&self, member: F) -> Vec<Vec<[f64; 2]>> {
        if self.dim != 2 {
            return Vec::new();
        }
        let segs: Vec<[[f64; 2]; 2]> = self
            .facets
            .iter()
            .filter(|f| member(f.i) != member(f.k))
            .map(|f| {
                [
                    [f.vertices[0][0], f.vertices[0][1]],
                    [f.vertices[1][0], f.vertices[1][1]],
                ]
            })
            .collect();
        chain_segments(&segs)
    }
}

fn chain_segments(segs: &[[[f64; 2]; 2]]) -> Vec<Vec<[f64; 2]>> {
    let key = |p: [f64; 2]| ((p[0] * 1e8).round() as i64, (p[1] * 1e8).round() as i64);
    let mut at: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (s, seg) in segs.iter().enumerate() {
        at.entry(key(seg[0])).or_default().push(s);
        at.entry(key(seg[1])).or_default().push(s);
    }
    let mut used = vec![false; segs.len()];
    let mut lines = Vec::new();
    let next_from = |p: [f64; 2], used: &[bool]| {
        at.get(&key(p))
            .and_then(|v| v.iter().copied().find(|&s| !used[s]))
    };
    // start chains at odd-degree points first so open chains are not split
    let mut starts: Vec<usize> = (0..segs.len())
        .filter(|&s| segs[s].iter().any(|p| at[&key(*p)].len() % 2 == 1))
        .collect();
    starts.extend(0..segs.len());
    for s0 in starts {
        if used[s0] {
            continue;
        }
        used[s0] = true;
        let [a, b] = segs[s0];
        let (first, mut tail) = if at[&key(a)].len() % 2 == 1 {
            (a, b)
        } else {
            (b, a)
        };
        let mut line = vec![first, tail];
        while let Some(s) = next_from(tail, &used) {
            used[s] = true;
            let [p, q] = segs[s];
            tail = if key(p) == key(tail) { q } else { p };
            line.push(tail);
        }
        lines.push(line);
    }
    lines
}

/// Index sets `J` (representing `A`) and `K` (representing `B`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetastableIndexSets {
    in_j: Vec<bool>,
    in_k: Vec<bool>,
}

impl MetastableIndexSets {
    pub fn from_masks(in_j: Vec<bool>, in_k: Vec<bool>) -> Result<Self> {
        if in_j.len() != in_k.len() {
            return Err(Error::ShapeMismatch {
                left: in_j.len(),
                right: in_k.len(),
            });
        }
        if let Some(cell) = (0..in_j.len()).find(|&i| in_j[i] && in_k[i]) {
            return Err(Error::OverlappingRegions { cell });
        }
        Ok(Self { in_j, in_k })
    }

    pub fn n_cells(&self) -> usize {
        self.in_j.len()
    }

    #[inline]
    pub fn in_j(&self, i: usize) -> bool {
        self.in_j[i]
    }

    #[inline]
    pub fn in_k(&self, i: usize) -> bool {
        self.in_k[i]
    }

    /// Neither in `J` nor in `K`.
    #[inline]
    pub fn is_free(&self, i: usize) -> bool {
        !self.in_j[i] && !self.in_k[i]
    }

    pub fn j_cells(&self) -> Vec<usize> {
        (0..self.in_j.len()).filter(|&i| self.in_j[i]).collect()
    }

    pub fn k_cells(&self) -> Vec<usize> {
        (0..self.in_k.len()).filter(|&i| self.in_k[i]).collect()
    }

    /// Fails with `NonviableRegions` if either set is empty.
    pub fn ensure_viable(&self) -> Result<()> {
        if !self.in_j.iter().any(|&b| b) {
            return Err(Error::NonviableRegions { which: "J" });
        }
        if !self.in_k.iter().any(|&b| b) {
            return Err(Error::NonviableRegions { which: "K" });
        }
        Ok(())
    }
}

/// `i ∈ J` iff some vertex of `S_i` (or, for Voronoi cells, its generator)
/// lies in region A; likewise for `K` and B.
pub fn assign_metastable<FA, FB>(
    tess: &Tessellation,
    region_a: FA,
    region_b: FB,
) -> Result<MetastableIndexSets>
where
    FA: Fn(&[f64]) -> bool,
    FB: Fn(&[f64]) -> bool,
{
    let n = tess.n_cells();
    let mut in_j = vec![false; n];
    let mut in_k = vec![false; n];
    for i in 0..n {
        let mut pts = tess.cell_vertices(i);
        if matches!(tess.kind(), TessellationKind::Voronoi2d) {
            pts.push(tess.generator(i).to_vec());
        }
        in_j[i] = pts.iter().any(|p| region_a(p));
        in_k[i] = pts.iter().any(|p| region_b(p));
    }
    MetastableIndexSets::from_masks(in_j, in_k)
}

/// Area of `(∪_J S_j) Δ A` plus `(∪_K S_k) Δ B`, by midpoint sampling on an
/// `m`-per-axis subgrid of every cell's bounding box.
pub fn representation_mismatch<FA, FB>(
    tess: &Tessellation,
    sets: &MetastableIndexSets,
    region_a: FA,
    region_b: FB,
    m: usize,
) -> f64
where
    FA: Fn(&[f64]) -> bool,
    FB: Fn(&[f64]) -> bool,
{
    let dom = tess.domain();
    let d = tess.dim();
    let counts: Vec<usize> = (0..d)
        .map(|k| ((dom.hi()[k] - dom.lo()[k]) / tess.width() * m as f64).ceil() as usize)
        .collect();
    let total: usize = counts.iter().product();
    let cell_vol: f64 = (0..d)
        .map(|k| (dom.hi()[k] - dom.lo()[k]) / counts[k] as f64)
        .product();
    let mut x = vec![0.0; d];
    let mut bad = 0usize;
    for mut flat in 0..total {
        for k in 0..d {
            let j = flat % counts[k];
            flat /= counts[k];
            x[k] = dom.lo()[k] + (j as f64 + 0.5) * (dom.hi()[k] - dom.lo()[k]) / counts[k] as f64;
        }
        let c = tess.locate_unchecked(&x);
        if sets.in_j(c) != region_a(&x) {
            bad += 1;
        }
        if sets.in_k(c) != region_b(&x) {
            bad += 1;
        }
    }
    bad as f64 * cell_vol
}

/// Normalised `μ(S_i)` for the Boltzmann–Gibbs measure.
#[derive(Debug, Clone, PartialEq)]
pub struct CellWeights {
    pub mu: Vec<f64>,
    /// Unnormalised total `Z = ∫ exp(-βV)` from the same quadrature.
    pub partition: f64,
}

/// Per-cell quadrature of `exp(-βV)`: tensor trapezoid rule with `m`
/// sub-intervals per axis on grid cells; Voronoi cells are fanned into
/// triangles from the centroid, each split into `m²` sub-triangles
/// integrated by the vertex average.
pub fn mu_weights(tess: &Tessellation, model: &DiffusionModel, m: usize) -> Result<CellWeights> {
    if m == 0 {
        return Err(invalid("m", "quadrature refinement must be at least 1"));
    }
    let raw: Vec<f64> = (0..tess.n_cells())
        .map(|i| cell_integral(tess, i, m, |x| model.boltzmann(x)))
        .collect();
    let partition: f64 = raw.iter().sum();
    Ok(CellWeights {
        mu: raw.iter().map(|r| r / partition).collect(),
        partition,
    })
}

/// Quadrature of `f` over cell `i` with refinement `m` (see [`mu_weights`]).
pub fn cell_integral<F: Fn(&[f64]) -> f64>(tess: &Tessellation, i: usize, m: usize, f: F) -> f64 {
    match tess.kind() {
        TessellationKind::Grid(g) => {
            let d = g.dim();
            let idx = g.multi_index(i);
            let lo: Vec<f64> = (0..d).map(|k| g.face(k, idx[k])).collect();
            let hi: Vec<f64> = (0..d).map(|k| g.face(k, idx[k] + 1)).collect();
            let per_axis = m + 1;
            let total = per_axis.pow(d as u32);
            let mut x = vec![0.0; d];
            let mut acc = 0.0;
            for mut flat in 0..total {
                let mut w = 1.0;
                for k in 0..d {
                    let j = flat % per_axis;
                    flat /= per_axis;
                    x[k] = if j == m {
                        hi[k]
                    } else {
                        lo[k] + (hi[k] - lo[k]) * j as f64 / m as f64
                    };
                    if j == 0 || j == m {
                        w *= 0.5;
                    }
                }
                acc += w * f(&x);
            }
            acc * tess.cell_volume(i) / (m as f64).powi(d as i32)
        }
        TessellationKind::Voronoi2d => {
            let poly = tess.polygon(i).expect("voronoi polygon");
            let c = polygon_centroid(poly);
            let mut acc = 0.0;
            let mf = m as f64;
            for t in 0..poly.len() {
                let (a, b) = (poly[t], poly[(t + 1) % poly.len()]);
                let area =
                    0.5 * ((a[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (a[1] - c[1])).abs();
                let at = |p: usize, q: usize| {
                    let (s, u) = (p as f64 / mf, q as f64 / mf);
                    [
                        c[0] + s * (a[0] - c[0]) + u * (b[0] - c[0]),
                        c[1] + s * (a[1] - c[1]) + u * (b[1] - c[1]),
                    ]
                };
                let mut sum = 0.0;
                for p in 0..m {
                    for q in 0..(m - p) {
                        sum += f(&at(p, q)) + f(&at(p + 1, q)) + f(&at(p, q + 1));
                        if p + q + 2 <= m {
                            sum += f(&at(p + 1, q)) + f(&at(p, q + 1)) + f(&at(p + 1, q + 1));
                        }
                    }
                }
                acc += area / (mf * mf) * sum / 3.0;
            }
            acc
        }
    }
}

pub(crate) fn polygon_centroid(poly: &[[f64; 2]]) -> [f64; 2] {
    let m = poly.len();
    let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
    for t in 0..m {
        let (p, q) = (poly[t], poly[(t + 1) % m]);
        let cr = p[0] * q[1] - q[0] * p[1];
        a2 += cr;
        cx += (p[0] + q[0]) * cr;
        cy += (p[1] + q[1]) * cr;
    }
    [cx / (3.0 * a2), cy / (3.0 * a2)]
}
