//! Monte Carlo estimation of the cell committor and its projection from a
//! reference field.

use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::{run_until, DiffusionModel, StreamKey, TrajectoryStepper};
use crate::error::{invalid, Error, Result};
use crate::reference::GridScalarField;
use crate::regions::Regions;
use crate::tessellation::{MetastableIndexSets, Tessellation};

const START_TAG: u64 = 0xc0_11;
const STEP_TAG: u64 = 0xc0_12;

/// Piecewise-constant committor on a tessellation.
#[derive(Debug, Clone, PartialEq)]
pub struct CommittorField {
    pub values: Vec<f64>,
    /// Trajectories that reached `J ∪ K` (the denominator of each value).
    pub n_samples: Vec<u64>,
    /// Trajectories dropped after exhausting the step budget.
    pub n_censored: Vec<u64>,
    /// Fingerprint of the tessellation the field lives on.
    pub tess_id: u64,
}

impl CommittorField {
    /// Value of the cell containing `x` (smallest index on ties).
    pub fn evaluate(&self, tess: &Tessellation, x: &[f64]) -> Result<f64> {
        Ok(self.values[tess.locate(x)?])
    }

    /// Binomial standard error `sqrt(q(1-q)/n)`; zero for unsampled cells.
    pub fn standard_error(&self, i: usize) -> f64 {
        let n = self.n_samples[i];
        if n == 0 {
            0.0
        } else {
            let q = self.values[i];
            (q * (1.0 - q) / n as f64).sqrt()
        }
    }
}

/// What stops a committor trajectory.
#[derive(Debug, Clone, Default)]
pub enum HittingRule {
    /// Entering a `J` or `K` cell.
    #[default]
    Cells,
    /// Entering the analytic regions.
    Regions(Regions),
}

#[derive(Debug, Clone)]
pub struct CommittorOptions {
    pub n_per_cell: u64,
    pub max_steps: u64,
    pub dt: f64,
    pub seed: u64,
    pub rule: HittingRule,
    /// Largest tolerated censored fraction per cell.
    pub max_censored_fraction: f64,
}

impl CommittorOptions {
    pub fn new(n_per_cell: u64, dt: f64, seed: u64) -> Self {
        Self {
            n_per_cell,
            max_steps: 1_000_000,
            dt,
            seed,
            rule: HittingRule::Cells,
            max_censored_fraction: 0.01,
        }
    }
}

/// Fraction of uniformly started trajectories per free cell that reach `K`
/// before `J`. Cells run in parallel, each trajectory on its own stream.
pub fn estimate_committor(
    tess: &Tessellation,
    sets: &MetastableIndexSets,
    model: &DiffusionModel,
    opts: &CommittorOptions,
) -> Result<CommittorField> {
    sets.ensure_viable()?;
    if opts.n_per_cell == 0 {
        return Err(invalid("n_per_cell", "must be at least 1"));
    }
    if sets.n_cells() != tess.n_cells() {
        return Err(Error::ShapeMismatch {
            left: sets.n_cells(),
            right: tess.n_cells(),
        });
    }
    // validates dt before any work is spawned
    TrajectoryStepper::new(model, opts.dt, StreamKey::new(opts.seed, 0))?;

    let per_cell: Vec<(f64, u64, u64)> = (0..tess.n_cells())
        .into_par_iter()
        .map(|i| {
            if sets.in_j(i) {
                return Ok((0.0, 0, 0));
            }
            if sets.in_k(i) {
                return Ok((1.0, 0, 0));
            }
            let (mut hits_b, mut done, mut censored) = (0u64, 0u64, 0u64);
            for rep in 0..opts.n_per_cell {
                match run_one(tess, sets, model, opts, i, rep)? {
                    Some(true) => {
                        hits_b += 1;
                        done += 1;
                    }
                    Some(false) => done += 1,
                    None => censored += 1,
                }
            }
            if censored as f64 > opts.max_censored_fraction * opts.n_per_cell as f64 {
                return Err(Error::ExcessiveCensoring {
                    cell: i,
                    censored,
                    launched: opts.n_per_cell,
                });
            }
            let q = if done == 0 {
                f64::NAN
            } else {
                hits_b as f64 / done as f64
            };
            Ok((q, done, censored))
        })
        .collect::<Result<_>>()?;

    Ok(CommittorField {
        values: per_cell.iter().map(|c| c.0).collect(),
        n_samples: per_cell.iter().map(|c| c.1).collect(),
        n_censored: per_cell.iter().map(|c| c.2).collect(),
        tess_id: tess.fingerprint(),
    })
}

/// `Some(true)` on reaching B first, `Some(false)` on A, `None` if censored.
fn run_one(
    tess: &Tessellation,
    sets: &MetastableIndexSets,
    model: &DiffusionModel,
    opts: &CommittorOptions,
    cell: usize,
    rep: u64,
) -> Result<Option<bool>> {
    let mut start_rng = StreamKey::derive(opts.seed, START_TAG, cell as u64, rep).rng();
    let start = tess.sample_in_cell(cell, &mut start_rng);
    let mut stepper = TrajectoryStepper::new(
        model,
        opts.dt,
        StreamKey::derive(opts.seed, STEP_TAG, cell as u64, rep),
    )?;
    let outcome = match &opts.rule {
        HittingRule::Cells => run_until(
            &start,
            |x| {
                let c = tess.locate_unchecked(x);
                !sets.is_free(c)
            },
            &mut stepper,
            opts.max_steps,
        )
        .map(|hit| sets.in_k(tess.locate_unchecked(&hit.point))),
        HittingRule::Regions(r) => run_until(
            &start,
            |x| r.in_a(x) || r.in_b(x),
            &mut stepper,
            opts.max_steps,
        )
        .map(|hit| r.in_b(&hit.point)),
    };
    match outcome {
        Ok(b) => Ok(Some(b)),
        Err(Error::BudgetExhausted { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `μ`-weighted cell averages of a reference committor sampled at the
/// nodes of a finer grid.
///
/// Each node carries weight `exp(-βV)`; a node on the boundary of several
/// cells shares it equally among them, which is the trapezoid rule for
/// nodes on faces. Every cell needs at least four nodes.
pub fn project_committor(
    tess: &Tessellation,
    model: &DiffusionModel,
    reference: &GridScalarField,
) -> Result<CommittorField> {
    let n = tess.n_cells();
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    let mut nodes = vec![0usize; n];
    let tol = 1e-12 * reference.spec.h();
    for (node, &q) in reference.values.iter().enumerate() {
        let x = reference.spec.center(node);
        let touching = tess.touching_cells(&x, tol)?;
        let w = model.boltzmann(&x) / touching.len() as f64;
        for c in touching {
            num[c] += w * q;
            den[c] += w;
            nodes[c] += 1;
        }
    }
    if let Some(cell) = (0..n).find(|&c| nodes[c] < 4) {
        return Err(Error::ResolutionTooCoarse {
            cell,
            nodes: nodes[cell],
        });
    }
    Ok(CommittorField {
        values: num.iter().zip(&den).map(|(a, b)| a / b).collect(),
        n_samples: nodes.iter().map(|&c| c as u64).collect(),
        n_censored: vec![0; n],
        tess_id: tess.fingerprint(),
    })
}

/// Stopping step of a sampled path under two detectors: cell labels in
/// `J ∪ K` and geometric membership in the union of those cells.
pub fn hitting_steps_agree<R: Rng>(
    tess: &Tessellation,
    sets: &MetastableIndexSets,
    model: &DiffusionModel,
    dt: f64,
    start_cell: usize,
    rng: &mut R,
    seed: u64,
    max_steps: u64,
) -> Result<(Option<u64>, Option<u64>)> {
    let start = tess.sample_in_cell(start_cell, rng);
    let grid = tess
        .grid()
        .ok_or_else(|| invalid("tess", "geometric membership test needs a grid"))?;
    let mut stepper = TrajectoryStepper::new(model, dt, StreamKey::new(seed, start_cell as u64))?;
    let mut x = start;
    let (mut by_label, mut by_set) = (None, None);
    let in_union = |x: &[f64]| {
        (0..tess.n_cells()).any(|c| {
            !sets.is_free(c) && {
                let idx = grid.multi_index(c);
                (0..x.len())
                    .all(|k| grid.face(k, idx[k]) <= x[k] && x[k] <= grid.face(k, idx[k] + 1))
            }
        })
    };
    for m in 0..=max_steps {
        if m > 0 {
            stepper.step(&mut x)?;
        }
        if by_label.is_none() && !sets.is_free(tess.locate_unchecked(&x)) {
            by_label = Some(m);
        }
        if by_set.is_none() && in_union(&x) {
            by_set = Some(m);
        }
        if by_label.is_some() && by_set.is_some() {
            break;
        }
    }
    Ok((by_label, by_set))
}
