//! Reactive segments, signed facet crossings and the reconstructed
//! per-cell probability current.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::{DiffusionModel, StreamKey, TrajectoryStepper};
use crate::error::{invalid, Error, Result};
use crate::tessellation::{cell_conditioning, MetastableIndexSets, Tessellation};

const CHAIN_TAG: u64 = 0xf1_0c;

/// Cell labels of a discretely sampled trajectory, one per step.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPath {
    pub labels: Vec<usize>,
    pub dt: f64,
}

impl LabelPath {
    pub fn new(labels: Vec<usize>, dt: f64) -> Self {
        Self { labels, dt }
    }

    /// Number of steps `M` (one fewer than the number of labels).
    pub fn total_steps(&self) -> u64 {
        self.labels.len().saturating_sub(1) as u64
    }
}

/// Label every point; a point exactly on the boundary of the previously
/// occupied cell keeps that label.
pub fn project_labels(points: &[Vec<f64>], tess: &Tessellation, dt: f64) -> Result<LabelPath> {
    let mut labels = Vec::with_capacity(points.len());
    let mut prev = None;
    for p in points {
        let l = tess.locate_with_prev(p, prev)?;
        labels.push(l);
        prev = Some(l);
    }
    Ok(LabelPath::new(labels, dt))
}

/// Inclusive step ranges `[a, b]`: `a - 1` is the last step in `J`, `b`
/// the first step in `K`, and no step in between is in `J`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReactiveSegments {
    pub intervals: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Last {
    None,
    J,
    K,
}

pub fn reactive_segments(path: &LabelPath, sets: &MetastableIndexSets) -> ReactiveSegments {
    let mut intervals = Vec::new();
    let mut last = Last::None;
    let mut open = None;
    for (m, &l) in path.labels.iter().enumerate() {
        if sets.in_j(l) {
            last = Last::J;
            open = None;
        } else {
            if last == Last::J && open.is_none() {
                open = Some(m);
            }
            if sets.in_k(l) {
                if let Some(a) = open.take() {
                    intervals.push((a, m));
                }
                last = Last::K;
            }
        }
    }
    ReactiveSegments { intervals }
}

/// Signed transition counts inside reactive segments.
///
/// Counts are stored once per unordered pair `i < k` as `net(i → k)`, so
/// `net(i, k) = -net(k, i)` holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingLedger {
    n_cells: usize,
    /// Adjacent pairs only.
    pair_net: BTreeMap<(usize, usize), i64>,
    /// Every transition, adjacent or not.
    all_net: BTreeMap<(usize, usize), i64>,
    pub nonadjacent_jumps: u64,
    pub adjacent_transitions: u64,
    pub n_segments: u64,
    pub total_steps: u64,
    dt: f64,
}

fn bump(map: &mut BTreeMap<(usize, usize), i64>, from: usize, to: usize, by: i64) {
    let (key, sign) = if from < to {
        ((from, to), 1)
    } else {
        ((to, from), -1)
    };
    let e = map.entry(key).or_insert(0);
    *e += sign * by;
    if *e == 0 {
        map.remove(&key);
    }
}

fn lookup(map: &BTreeMap<(usize, usize), i64>, i: usize, k: usize) -> i64 {
    if i < k {
        map.get(&(i, k)).copied().unwrap_or(0)
    } else {
        -map.get(&(k, i)).copied().unwrap_or(0)
    }
}

impl CrossingLedger {
    pub fn new(n_cells: usize, dt: f64) -> Self {
        Self {
            n_cells,
            pair_net: BTreeMap::new(),
            all_net: BTreeMap::new(),
            nonadjacent_jumps: 0,
            adjacent_transitions: 0,
            n_segments: 0,
            total_steps: 0,
            dt,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    fn record(&mut self, tess: &Tessellation, from: usize, to: usize) {
        if from == to {
            return;
        }
        bump(&mut self.all_net, from, to, 1);
        if tess.is_adjacent(from, to) {
            bump(&mut self.pair_net, from, to, 1);
            self.adjacent_transitions += 1;
        } else {
            self.nonadjacent_jumps += 1;
        }
    }

    /// Net adjacent transitions `i → k` minus `k → i`.
    pub fn net(&self, i: usize, k: usize) -> i64 {
        lookup(&self.pair_net, i, k)
    }

    /// Net transitions `i → k` counting non-adjacent jumps too.
    pub fn net_all(&self, i: usize, k: usize) -> i64 {
        lookup(&self.all_net, i, k)
    }

    /// Nonzero adjacent entries as `((i, k), net(i → k))` with `i < k`.
    pub fn pairs(&self) -> impl Iterator<Item = ((usize, usize), i64)> + '_ {
        self.pair_net.iter().map(|(&k, &v)| (k, v))
    }

    /// Nonzero entries over all transitions.
    pub fn all_pairs(&self) -> impl Iterator<Item = ((usize, usize), i64)> + '_ {
        self.all_net.iter().map(|(&k, &v)| (k, v))
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Observation window `s`.
    pub fn window(&self) -> f64 {
        self.dt
    }

    /// `T = M · dt`.
    pub fn total_time(&self) -> f64 {
        self.total_steps as f64 * self.dt
    }

    /// `α_ik = net(i, k) / T`.
    pub fn alpha(&self, i: usize, k: usize) -> f64 {
        self.net(i, k) as f64 / self.total_time()
    }

    /// Share of in-segment transitions that jump between non-adjacent cells.
    pub fn nonadjacent_rate(&self) -> f64 {
        let total = self.nonadjacent_jumps + self.adjacent_transitions;
        if total == 0 {
            0.0
        } else {
            self.nonadjacent_jumps as f64 / total as f64
        }
    }

    /// Add counts and observation time of an independent trajectory.
    pub fn merge(&mut self, other: &CrossingLedger) -> Result<()> {
        if other.n_cells != self.n_cells {
            return Err(Error::ShapeMismatch {
                left: self.n_cells,
                right: other.n_cells,
            });
        }
        if other.dt != self.dt {
            return Err(invalid(
                "dt",
                "ledgers with different time steps cannot be merged",
            ));
        }
        for (&(i, k), &v) in &other.pair_net {
            bump(&mut self.pair_net, i, k, v);
        }
        for (&(i, k), &v) in &other.all_net {
            bump(&mut self.all_net, i, k, v);
        }
        self.nonadjacent_jumps += other.nonadjacent_jumps;
        self.adjacent_transitions += other.adjacent_transitions;
        self.n_segments += other.n_segments;
        self.total_steps += other.total_steps;
        Ok(())
    }
}

/// Count every transition `(m-1 → m)` with `m ∈ [a, b]` of every segment,
/// which includes the step leaving `J` and the step entering `K`.
pub fn count_crossings(
    path: &LabelPath,
    segments: &ReactiveSegments,
    tess: &Tessellation,
) -> CrossingLedger {
    let mut ledger = CrossingLedger::new(tess.n_cells(), path.dt);
    ledger.total_steps = path.total_steps();
    for &(a, b) in &segments.intervals {
        for m in a.max(1)..=b {
            ledger.record(tess, path.labels[m - 1], path.labels[m]);
        }
        ledger.n_segments += 1;
    }
    ledger
}

/// Online version of [`reactive_segments`] followed by [`count_crossings`].
/// Transitions of an open excursion are held back until it reaches `K`
/// and dropped if it returns to `J`.
#[derive(Debug, Clone)]
pub struct ReactiveCounter {
    ledger: CrossingLedger,
    prev: Option<usize>,
    last: Last,
    open: bool,
    pending: Vec<(usize, usize)>,
}

impl ReactiveCounter {
    pub fn new(n_cells: usize, dt: f64) -> Self {
        Self {
            ledger: CrossingLedger::new(n_cells, dt),
            prev: None,
            last: Last::None,
            open: false,
            pending: Vec::new(),
        }
    }

    /// Previously pushed label.
    pub fn prev(&self) -> Option<usize> {
        self.prev
    }

    pub fn n_segments(&self) -> u64 {
        self.ledger.n_segments
    }

    #[inline]
    pub fn push(&mut self, label: usize, tess: &Tessellation, sets: &MetastableIndexSets) {
        if let Some(p) = self.prev {
            self.ledger.total_steps += 1;
            if sets.in_j(label) {
                self.pending.clear();
                self.open = false;
            } else {
                if self.last == Last::J && !self.open {
                    self.open = true;
                    self.pending.clear();
                }
                if self.open && p != label {
                    self.pending.push((p, label));
                }
            }
        }
        if sets.in_j(label) {
            self.last = Last::J;
        } else if sets.in_k(label) {
            if self.open {
                for &(from, to) in &self.pending {
                    self.ledger.record(tess, from, to);
                }
                self.pending.clear();
                self.ledger.n_segments += 1;
                self.open = false;
            }
            self.last = Last::K;
        }
        self.prev = Some(label);
    }

    pub fn finish(self) -> CrossingLedger {
        self.ledger
    }

    pub fn ledger(&self) -> &CrossingLedger {
        &self.ledger
    }
}

#[derive(Debug, Clone)]
pub struct SamplerOptions {
    pub dt: f64,
    pub seed: u64,
    /// Reactive segments required on every tessellation.
    pub n_target: u64,
    /// Step ceiling per chain, burn-in excluded.
    pub max_steps: u64,
    /// Steps discarded before labelling starts.
    pub burn_in: u64,
    pub start: Vec<f64>,
    /// Independent chains sharing the target; their ledgers are merged.
    pub n_chains: usize,
}

impl SamplerOptions {
    pub fn new(dt: f64, seed: u64, n_target: u64, start: Vec<f64>) -> Self {
        Self {
            dt,
            seed,
            n_target,
            max_steps: u64::MAX,
            burn_in: 0,
            start,
            n_chains: 1,
        }
    }
}

/// Run long trajectories from `opts.start`, labelling them on every
/// tessellation at once, until each has `n_target` reactive segments.
pub fn sample_reactive_ledgers(
    model: &DiffusionModel,
    targets: &[(&Tessellation, &MetastableIndexSets)],
    opts: &SamplerOptions,
) -> Result<Vec<CrossingLedger>> {
    if opts.n_target == 0 {
        return Err(invalid("n_target", "must be at least 1"));
    }
    if opts.n_chains == 0 {
        return Err(invalid("n_chains", "must be at least 1"));
    }
    if targets.is_empty() {
        return Err(invalid("targets", "need at least one tessellation"));
    }
    for (tess, sets) in targets {
        sets.ensure_viable()?;
        if !tess.domain().contains(&opts.start) {
            return Err(Error::OutOfDomain {
                point: opts.start.clone(),
            });
        }
    }
    let chains = opts.n_chains as u64;
    let per_chain: Vec<u64> = (0..chains)
        .map(|c| opts.n_target / chains + u64::from(c < opts.n_target % chains))
        .collect();
    let results = (0..opts.n_chains)
        .into_par_iter()
        .map(|c| run_chain(model, targets, opts, c as u64, per_chain[c]))
        .collect::<Vec<_>>();
    let mut merged: Option<Vec<CrossingLedger>> = None;
    for r in results {
        let ledgers = r?;
        match &mut merged {
            None => merged = Some(ledgers),
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&ledgers) {
                    a.merge(b)?;
                }
            }
        }
    }
    Ok(merged.unwrap())
}

fn run_chain(
    model: &DiffusionModel,
    targets: &[(&Tessellation, &MetastableIndexSets)],
    opts: &SamplerOptions,
    chain: u64,
    target: u64,
) -> Result<Vec<CrossingLedger>> {
    let mut stepper = TrajectoryStepper::new(
        model,
        opts.dt,
        StreamKey::derive(opts.seed, CHAIN_TAG, chain, 0),
    )?;
    let mut x = opts.start.clone();
    for _ in 0..opts.burn_in {
        stepper.step(&mut x)?;
    }
    let mut counters: Vec<ReactiveCounter> = targets
        .iter()
        .map(|(t, _)| ReactiveCounter::new(t.n_cells(), opts.dt))
        .collect();
    let label = |counter: &ReactiveCounter, tess: &Tessellation, x: &[f64]| {
        let here = tess.locate_unchecked(x);
        match counter.prev() {
            Some(p) if p != here => tess.locate_with_prev(x, Some(p)).unwrap_or(here),
            _ => here,
        }
    };
    for (c, (tess, sets)) in counters.iter_mut().zip(targets) {
        let l = label(c, tess, &x);
        c.push(l, tess, sets);
    }
    let mut steps = 0u64;
    while counters.iter().any(|c| c.n_segments() < target) {
        if steps >= opts.max_steps {
            return Err(Error::SamplingBudget {
                target,
                reached: counters.iter().map(|c| c.n_segments()).min().unwrap_or(0),
                steps,
            });
        }
        stepper.step(&mut x)?;
        steps += 1;
        for (c, (tess, sets)) in counters.iter_mut().zip(targets) {
            let l = label(c, tess, &x);
            c.push(l, tess, sets);
        }
    }
    Ok(counters.into_iter().map(ReactiveCounter::finish).collect())
}

/// Piecewise-constant current, `dim` components per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentField {
    pub dim: usize,
    pub vectors: Vec<f64>,
    /// `‖N_i J_i - α̂_i‖₂` per cell.
    pub residual: Vec<f64>,
    pub tess_id: u64,
}

impl CurrentField {
    pub fn zeros(tess: &Tessellation) -> Self {
        Self {
            dim: tess.dim(),
            vectors: vec![0.0; tess.n_cells() * tess.dim()],
            residual: vec![0.0; tess.n_cells()],
            tess_id: tess.fingerprint(),
        }
    }

    pub fn from_vectors(tess: &Tessellation, vectors: Vec<f64>) -> Result<Self> {
        if vectors.len() != tess.n_cells() * tess.dim() {
            return Err(Error::ShapeMismatch {
                left: vectors.len(),
                right: tess.n_cells() * tess.dim(),
            });
        }
        Ok(Self {
            dim: tess.dim(),
            vectors,
            residual: vec![0.0; tess.n_cells()],
            tess_id: tess.fingerprint(),
        })
    }

    pub fn n_cells(&self) -> usize {
        self.residual.len()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.vector(i).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Facet flux `α̂_ik = net(i, k) / (T σ_ik)`.
pub fn alpha_hat(ledger: &CrossingLedger, tess: &Tessellation, i: usize, k: usize) -> f64 {
    match tess.facet_measure(i, k) {
        Some(sigma) => ledger.alpha(i, k) / sigma,
        None => 0.0,
    }
}

/// Least-squares current per free cell from the normal equations
/// `N_iᵀN_i J_i = N_iᵀ α̂_i`; cells in `J` or `K` get the zero vector.
pub fn reconstruct_current(
    ledger: &CrossingLedger,
    tess: &Tessellation,
    sets: &MetastableIndexSets,
) -> Result<CurrentField> {
    if ledger.n_cells() != tess.n_cells() {
        return Err(Error::ShapeMismatch {
            left: ledger.n_cells(),
            right: tess.n_cells(),
        });
    }
    if !(ledger.total_time() > 0.0) {
        return Err(invalid("ledger", "total time must be positive"));
    }
    let d = tess.dim();
    let cells = (0..tess.n_cells())
        .into_par_iter()
        .map(|i| {
            if !sets.is_free(i) {
                return Ok((vec![0.0; d], 0.0));
            }
            let alpha: Vec<f64> = tess
                .neighbors(i)
                .iter()
                .map(|&k| alpha_hat(ledger, tess, i, k))
                .collect();
            solve_cell(tess, i, &alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut field = CurrentField::zeros(tess);
    for (i, (v, r)) in cells.into_iter().enumerate() {
        field.vectors[i * d..(i + 1) * d].copy_from_slice(&v);
        field.residual[i] = r;
    }
    Ok(field)
}

/// Solve the normal equations of cell `i` for facet fluxes ordered like
/// `tess.neighbors(i)`. Returns the vector and the residual norm.
pub fn solve_cell(tess: &Tessellation, i: usize, alpha: &[f64]) -> Result<(Vec<f64>, f64)> {
    let d = tess.dim();
    let normals: Vec<Vec<f64>> = tess
        .neighbors(i)
        .iter()
        .map(|&k| tess.normal(i, k).expect("neighbour has a facet"))
        .collect();
    if normals.len() != alpha.len() {
        return Err(Error::ShapeMismatch {
            left: normals.len(),
            right: alpha.len(),
        });
    }
    let n = DMatrix::from_fn(normals.len(), d, |r, c| normals[r][c]);
    let a = DVector::from_column_slice(alpha);
    let gram = n.transpose() * &n;
    let rhs = n.transpose() * &a;
    let chol = match gram.cholesky() {
        Some(c) => c,
        None => {
            let rank = match cell_conditioning(&normals, d, i) {
                Err(Error::RankDeficientCell { rank, .. }) => rank,
                _ => d - 1,
            };
            return Err(Error::RankDeficientCell {
                cell: i,
                rank,
                dim: d,
            });
        }
    };
    let v = chol.solve(&rhs);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteSolution { cell: i });
    }
    let residual = (&n * &v - a).norm();
    Ok((v.iter().copied().collect(), residual))
}

/// Current at `x`: the located cell's vector in a cell interior; on a
/// boundary, the largest-norm vector among the touching cells with the
/// smallest index winning ties.
pub fn evaluate_current(field: &CurrentField, tess: &Tessellation, x: &[f64]) -> Result<Vec<f64>> {
    let cell = boundary_choice(field, &tess.touching_cells(x, 0.0)?);
    Ok(field.vector(cell).to_vec())
}

/// Largest-norm cell of `cells` (sorted ascending), smallest index on ties.
pub(crate) fn boundary_choice(field: &CurrentField, cells: &[usize]) -> usize {
    let mut best = cells[0];
    let mut best_norm = field.norm(best);
    for &c in &cells[1..] {
        let n = field.norm(c);
        if n > best_norm {
            best = c;
            best_norm = n;
        }
    }
    best
}

#[cfg(test)]
mod tests;
