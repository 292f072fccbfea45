//! Finite-difference reference committor and reactive current.
//!
//! Nodes sit at the cell centres of a regular grid. The backward operator
//! `L = -Γ⁻¹∇V·∇ + β⁻¹Γ⁻¹Δ` is discretised with a central Laplacian and
//! upwind drift, which makes the assembled matrix an M-matrix. Walls carry
//! homogeneous Neumann data through mirrored ghost nodes.

use crate::dynamics::{BoxDomain, DiffusionModel};
use crate::error::{invalid, Error, Result};
use crate::regions::Regions;
use crate::tessellation::{GridSpec, MetastableIndexSets, Tessellation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    A,
    B,
    /// Free node next to at least one wall.
    Neumann,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdGrid {
    spec: GridSpec,
    classes: Vec<NodeClass>,
}

impl FdGrid {
    /// Classify the centre of every cell of `spec`.
    pub fn new<FA, FB>(spec: GridSpec, in_a: FA, in_b: FB) -> Result<Self>
    where
        FA: Fn(usize, &[f64]) -> bool,
        FB: Fn(usize, &[f64]) -> bool,
    {
        let mut classes = Vec::with_capacity(spec.n_cells());
        for n in 0..spec.n_cells() {
            let x = spec.center(n);
            let (a, b) = (in_a(n, &x), in_b(n, &x));
            classes.push(match (a, b) {
                (true, true) => return Err(Error::OverlappingRegions { cell: n }),
                (true, false) => NodeClass::A,
                (false, true) => NodeClass::B,
                _ => {
                    let idx = spec.multi_index(n);
                    if (0..spec.dim()).any(|k| idx[k] == 0 || idx[k] + 1 == spec.counts()[k]) {
                        NodeClass::Neumann
                    } else {
                        NodeClass::Interior
                    }
                }
            });
        }
        Ok(Self { spec, classes })
    }

    /// Nodes colocated with a grid tessellation; Dirichlet nodes are the
    /// centres of its `J` and `K` cells.
    pub fn from_sets(tess: &Tessellation, sets: &MetastableIndexSets) -> Result<Self> {
        let spec = tess
            .grid()
            .ok_or_else(|| invalid("tess", "finite differences need a grid tessellation"))?
            .clone();
        Self::new(spec, |n, _| sets.in_j(n), |n, _| sets.in_k(n))
    }

    /// Nodes at spacing `h`, classified by the analytic regions.
    pub fn from_regions(domain: &BoxDomain, h: f64, regions: &Regions) -> Result<Self> {
        Self::new(
            GridSpec::new(domain, h)?,
            |_, x| regions.in_a(x),
            |_, x| regions.in_b(x),
        )
    }

    /// Fine nodes at spacing `h`; a node is Dirichlet when it lies in a `J`
    /// or `K` cell of the coarse tessellation.
    pub fn from_coarse_sets(
        h: f64,
        coarse: &Tessellation,
        sets: &MetastableIndexSets,
    ) -> Result<Self> {
        Self::new(
            GridSpec::new(coarse.domain(), h)?,
            |_, x| sets.in_j(coarse.locate_unchecked(x)),
            |_, x| sets.in_k(coarse.locate_unchecked(x)),
        )
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn class(&self, n: usize) -> NodeClass {
        self.classes[n]
    }

    pub fn n_nodes(&self) -> usize {
        self.classes.len()
    }

    pub fn node(&self, n: usize) -> Vec<f64> {
        self.spec.center(n)
    }

    fn is_dirichlet(&self, n: usize) -> bool {
        matches!(self.classes[n], NodeClass::A | NodeClass::B)
    }
}

/// Scalar values at the cell centres of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridScalarField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

/// Vector values (`dim` per node) at the cell centres of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridVectorField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl GridVectorField {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn at(&self, n: usize) -> &[f64] {
        let d = self.dim();
        &self.values[n * d..(n + 1) * d]
    }

    /// Multilinear interpolation between nodes; constant extrapolation in
    /// the half-cell layer next to the walls.
    pub fn sample(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let spec = &self.spec;
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let n = spec.counts()[k];
            let t = (x[k] - spec.lo()[k]) / spec.h() - 0.5;
            if t <= 0.0 || n == 1 {
                base[k] = 0;
                frac[k] = 0.0;
            } else if t >= (n - 1) as f64 {
                base[k] = n - 2;
                frac[k] = 1.0;
            } else {
                base[k] = (t as usize).min(n - 2);
                frac[k] = t - base[k] as f64;
            }
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for mask in 0..1usize << d {
            let mut w = 1.0;
            let mut node = 0;
            for k in 0..d {
                let up = (mask >> k) & 1;
                if spec.counts()[k] == 1 && up == 1 {
                    w = 0.0;
                    break;
                }
                w *= if up == 1 { frac[k] } else { 1.0 - frac[k] };
                node += (base[k] + up) * spec.strides()[k];
            }
            if w != 0.0 {
                for (o, v) in out.iter_mut().zip(self.at(node)) {
                    *o += w * v;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdCommittor {
    pub field: GridScalarField,
    /// `‖A q - b‖₂ / ‖b‖₂` of the returned solution.
    pub residual: f64,
    /// Refinement sweeps used after the direct solve.
    pub iterations: usize,
    /// Largest distance outside `[0, 1]` removed by the final clamp.
    pub excursion: f64,
}

/// Sparse rows of the assembled system plus its right-hand side.
struct Assembled {
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

fn assemble(model: &DiffusionModel, grid: &FdGrid) -> Assembled {
    let spec = &grid.spec;
    let d = spec.dim();
    let h = spec.h();
    let n = grid.n_nodes();
    let mut rows = Vec::with_capacity(n);
    let mut rhs = vec![0.0; n];
    let mut grad = vec![0.0; d];
    for node in 0..n {
        match grid.class(node) {
            NodeClass::A => rows.push(vec![(node, 1.0)]),
            NodeClass::B => {
                rows.push(vec![(node, 1.0)]);
                rhs[node] = 1.0;
            }
            NodeClass::Interior | NodeClass::Neumann => {
                let x = spec.center(node);
                model.potential().gradient(&x, &mut grad);
                let idx = spec.multi_index(node);
                let mut row = Vec::with_capacity(2 * d + 1);
                let mut diag = 0.0;
                for k in 0..d {
                    let gamma = model.gamma()[k];
                    // scaled by h²
                    let diff = 1.0 / (model.beta() * gamma);
                    let drift = -grad[k] / gamma;
                    let up = diff + h * drift.max(0.0);
                    let down = diff + h * (-drift).max(0.0);
                    let s = spec.strides()[k];
                    if idx[k] + 1 < spec.counts()[k] {
                        row.push((node + s, -up));
                        diag += up;
                    }
                    if idx[k] > 0 {
                        row.push((node - s, -down));
                        diag += down;
                    }
                }
                row.push((node, diag));
                row.sort_unstable_by_key(|e| e.0);
                rows.push(row);
            }
        }
    }
    Assembled { rows, rhs }
}

fn apply(rows: &[Vec<(usize, f64)>], x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(rows) {
        *o = row.iter().map(|&(j, a)| a * x[j]).sum();
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Banded LU factorisation without pivoting. Safe for the nonsingular
/// M-matrices produced by [`assemble`].
struct BandedLu {
    n: usize,
    w: usize,
    band: Vec<f64>,
}

impl BandedLu {
    fn factor(rows: &[Vec<(usize, f64)>], w: usize) -> Result<Self> {
        let n = rows.len();
        let width = 2 * w + 1;
        let mut band = vec![0.0; n * width];
        for (i, row) in rows.iter().enumerate() {
            for &(j, a) in row {
                band[i * width + (j + w - i)] = a;
            }
        }
        for p in 0..n {
            let pivot = band[p * width + w];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::NoConvergence {
                    residual: f64::INFINITY,
                    tol: 0.0,
                    iterations: 0,
                });
            }
            let last = (p + w).min(n - 1);
            for i in (p + 1)..=last {
                let ip = i * width + (p + w - i);
                let l = band[ip] / pivot;
                if l == 0.0 {
                    continue;
                }
                band[ip] = l;
                for j in (p + 1)..=last {
                    band[i * width + (j + w - i)] -= l * band[p * width + (j + w - p)];
                }
            }
        }
        Ok(Self { n, w, band })
    }

    fn solve(&self, b: &mut [f64]) {
        let (n, w) = (self.n, self.w);
        let width = 2 * w + 1;
        for i in 0..n {
            let first = i.saturating_sub(w);
            let mut s = b[i];
            for j in first..i {
                s -= self.band[i * width + (j + w - i)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let last = (i + w).min(n - 1);
            let mut s = b[i];
            for j in (i + 1)..=last {
                s -= self.band[i * width + (j + w - i)] * b[j];
            }
            b[i] = s / self.band[i * width + w];
        }
    }
}

/// Solve `Lq = 0` off the Dirichlet nodes with `q = 0` on A and `q = 1` on
/// B. A direct banded solve is followed by up to `max_iters` sweeps of
/// iterative refinement until `‖Aq - b‖/‖b‖ ≤ tol`.
pub fn solve_committor_fd(
    model: &DiffusionModel,
    grid: &FdGrid,
    tol: f64,
    max_iters: usize,
) -> Result<FdCommittor> {
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    if model.dim() != grid.spec.dim() {
        return Err(Error::ShapeMismatch {
            left: model.dim(),
            right: grid.spec.dim(),
        });
    }
    let Assembled { rows, rhs } = assemble(model, grid);
    let bandwidth = *grid.spec.strides().last().unwrap();
    let lu = BandedLu::factor(&rows, bandwidth)?;
    let n = rows.len();
    let bnorm = norm(&rhs).max(f64::MIN_POSITIVE);
    let mut q = rhs.clone();
    lu.solve(&mut q);
    let mut r = vec![0.0; n];
    let mut iterations = 0;
    let residual = loop {
        apply(&rows, &q, &mut r);
        r.iter_mut().zip(&rhs).for_each(|(ri, bi)| *ri = bi - *ri);
        let rel = norm(&r) / bnorm;
        if !rel.is_finite() {
            return Err(Error::NoConvergence {
                residual: rel,
                tol,
                iterations,
            });
        }
        if rel <= tol {
            break rel;
        }
        if iterations >= max_iters {
            return Err(Error::NoConvergence {
                residual: rel,
                tol,
                iterations,
            });
        }
        lu.solve(&mut r);
        q.iter_mut().zip(&r).for_each(|(qi, di)| *qi += di);
        iterations += 1;
    };
    // rounding can leave values a few ulps outside [0, 1]
    let mut excursion: f64 = 0.0;
    for v in &mut q {
        excursion = excursion.max(-*v).max(*v - 1.0);
        *v = v.clamp(0.0, 1.0);
    }
    Ok(FdCommittor {
        field: GridScalarField {
            spec: grid.spec.clone(),
            values: q,
        },
        residual,
        iterations,
        excursion,
    })
}

/// `∫ exp(-βV)` over the box by the tensor trapezoid rule on the vertex
/// lattice of `spec`, refined `m` times per cell and axis.
pub fn partition_function(model: &DiffusionModel, spec: &GridSpec, m: usize) -> f64 {
    let d = spec.dim();
    let counts: Vec<usize> = spec.counts().iter().map(|c| c * m).collect();
    let steps: Vec<f64> = (0..d)
        .map(|k| (spec.hi()[k] - spec.lo()[k]) / counts[k] as f64)
        .collect();
    let total: usize = counts.iter().map(|c| c + 1).product();
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    for mut flat in 0..total {
        let mut w = 1.0;
        for k in 0..d {
            let j = flat % (counts[k] + 1);
            flat /= counts[k] + 1;
            x[k] = if j == counts[k] {
                spec.hi()[k]
            } else {
                spec.lo()[k] + j as f64 * steps[k]
            };
            if j == 0 || j == counts[k] {
                w *= 0.5;
            }
        }
        acc += w * model.boltzmann(&x);
    }
    acc * steps.iter().product::<f64>()
}

/// Reference current `J = Z⁻¹ exp(-βV) β⁻¹ Γ⁻¹ ∇q`, zero on Dirichlet nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCurrent {
    pub field: GridVectorField,
    pub partition: f64,
}

/// Gradient by central differences, one-sided next to the walls.
pub fn reference_current(
    model: &DiffusionModel,
    grid: &FdGrid,
    q: &GridScalarField,
    quadrature_m: usize,
) -> Result<ReferenceCurrent> {
    if q.values.len() != grid.n_nodes() {
        return Err(Error::ShapeMismatch {
            left: q.values.len(),
            right: grid.n_nodes(),
        });
    }
    let spec = &grid.spec;
    let d = spec.dim();
    let h = spec.h();
    let z = partition_function(model, spec, quadrature_m.max(1));
    let mut values = vec![0.0; grid.n_nodes() * d];
    for node in 0..grid.n_nodes() {
        if grid.is_dirichlet(node) {
            continue;
        }
        let x = spec.center(node);
        let idx = spec.multi_index(node);
        let scale = model.boltzmann(&x) / (z * model.beta());
        for k in 0..d {
            let s = spec.strides()[k];
            let has_up = idx[k] + 1 < spec.counts()[k];
            let has_down = idx[k] > 0;
            let g = match (has_down, has_up) {
                (true, true) => (q.values[node + s] - q.values[node - s]) / (2.0 * h),
                (false, true) => (q.values[node + s] - q.values[node]) / h,
                (true, false) => (q.values[node] - q.values[node - s]) / h,
                (false, false) => 0.0,
            };
            values[node * d + k] = scale * g / model.gamma()[k];
        }
    }
    Ok(ReferenceCurrent {
        field: GridVectorField {
            spec: spec.clone(),
            values,
        },
        partition: z,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h_coarse: f64,
    pub h_fine: f64,
    /// Max-norm difference after restricting the fine solution.
    pub max_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Rows whose difference did not shrink relative to the previous row.
    pub non_monotone: Vec<usize>,
}

/// Solve on every spacing in `h_list` (descending) and compare consecutive
/// solutions on the coarser nodes. Fine values are restricted by averaging
/// the fine nodes that fall in each coarse cell.
pub fn fd_convergence_check(
    model: &DiffusionModel,
    regions: &Regions,
    h_list: &[f64],
    tol: f64,
) -> Result<ConvergenceReport> {
    if h_list.is_empty() {
        return Err(invalid("h_list", "must not be empty"));
    }
    if h_list.windows(2).any(|w| w[1] > w[0]) {
        return Err(invalid("h_list", "must be descending"));
    }
    let solutions = h_list
        .iter()
        .map(|&h| {
            let grid = FdGrid::from_regions(model.domain(), h, regions)?;
            solve_committor_fd(model, &grid, tol, 50).map(|s| s.field)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut non_monotone = Vec::new();
    for (r, pair) in solutions.windows(2).enumerate() {
        let restricted = restrict(&pair[1], &pair[0].spec);
        let max_diff = restricted
            .iter()
            .zip(&pair[0].values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if r > 0
            && max_diff
                >= rows
                    .last()
                    .map(|x: &ConvergenceRow| x.max_diff)
                    .unwrap_or(0.0)
            && max_diff > 0.0
        {
            non_monotone.push(r);
        }
        rows.push(ConvergenceRow {
            h_coarse: h_list[r],
            h_fine: h_list[r + 1],
            max_diff,
        });
    }
    Ok(ConvergenceReport { rows, non_monotone })
}

/// Average of fine node values over each coarse cell.
pub fn restrict(fine: &GridScalarField, coarse: &GridSpec) -> Vec<f64> {
    let mut sum = vec![0.0; coarse.n_cells()];
    let mut count = vec![0usize; coarse.n_cells()];
    for (n, v) in fine.values.iter().enumerate() {
        let c = coarse.locate(&fine.spec.center(n));
        sum[c] += v;
        count[c] += 1;
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect()
}
