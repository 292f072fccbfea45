use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::Serialize;
use serde_json::json;
use tpt_core::io::{self, ErrorRow};
use tpt_core::{
    assign_metastable, build_grid, bundle, cell_potential, direction_scaling, estimate_committor,
    histogram, l2_mu_error_nodal, loglog_slope, metastable_node_mask, mu_weights,
    reconstruct_current, reference_current, sample_reactive_ledgers, solve_committor_fd,
    CommittorOptions, CurrentField, DiffusionModel, FdGrid, FieldSource, GridScalarField,
    GridVectorField, MetastableIndexSets, NodeClass, Regions, SamplerOptions, StreamlineOptions,
    StreamlineStatus, Tessellation,
};

use crate::config::ExperimentConfig;
use crate::{Failure, FieldKind, StageExt};

const SCHEMA_VERSION: u32 = 1;
const QUADRATURE_M: usize = 4;
const FD_TOL: f64 = 1e-10;
const FD_SWEEPS: usize = 10;

struct Level {
    h: f64,
    dir: PathBuf,
    tess: Tessellation,
    sets: MetastableIndexSets,
    mu: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CommittorLevel {
    pub h: f64,
    pub rho: f64,
    pub l2_mu_q: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurrentLevel {
    pub h: f64,
    pub rho: f64,
    pub dt: f64,
    pub l2_mu_j: f64,
    pub total_time: f64,
    pub n_segments: u64,
    pub nonadjacent_jumps: u64,
    pub nonadjacent_rate: f64,
    #[serde(flatten)]
    pub report: ReportStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportStats {
    pub unmasked_cells: usize,
    pub median_direction_error: f64,
    /// Share of unmasked cells with `0.5 ≤ R ≤ 1.5`.
    pub ratio_near_one: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StreamlineLevel {
    pub h: f64,
    pub field: &'static str,
    pub n: usize,
    pub reached_b: usize,
    pub max_time: usize,
    pub stalled: usize,
    pub chattered: usize,
}

/// FD solution for the analytic regions, used as the exact `q` and `J_AB`.
struct FineReference {
    grid: FdGrid,
    q: GridScalarField,
    j: GridVectorField,
    in_ab: Vec<bool>,
}

pub struct Runner<'c> {
    config: &'c ExperimentConfig,
    model: DiffusionModel,
    regions: Regions,
    out: PathBuf,
    fine: OnceLock<FineReference>,
}

fn h_dir(base: &Path, h: f64) -> PathBuf {
    base.join(format!("h{h}"))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Log-log slope of error against width when at least two widths are usable.
fn slope(pairs: &[(f64, f64)]) -> Option<f64> {
    let usable: Vec<(f64, f64)> = pairs
        .iter()
        .copied()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .collect();
    if usable.len() < 2 {
        return None;
    }
    loglog_slope(&usable).ok().map(|f| f.slope)
}

impl<'c> Runner<'c> {
    pub fn new(config: &'c ExperimentConfig) -> Result<Self, Failure> {
        let model = config.model()?;
        let out = config.output_dir.clone();
        create_dir(&out)?;
        let probe = out.join(".tpt-write-probe");
        fs::write(&probe, b"").map_err(|e| {
            Failure::Config(format!("output_dir {} is not writable: {e}", out.display()))
        })?;
        let _ = fs::remove_file(&probe);
        Ok(Self {
            config,
            model,
            regions: config.regions(),
            out,
            fine: OnceLock::new(),
        })
    }

    fn fine(&self) -> Result<&FineReference, Failure> {
        if let Some(f) = self.fine.get() {
            return Ok(f);
        }
        let grid =
            FdGrid::from_regions(self.model.domain(), self.config.reference_h, &self.regions)
                .stage("reference")?;
        let q = solve_committor_fd(&self.model, &grid, FD_TOL, FD_SWEEPS)
            .stage("reference")?
            .field;
        let j = reference_current(&self.model, &grid, &q, QUADRATURE_M)
            .stage("reference")?
            .field;
        let in_ab = (0..grid.n_nodes())
            .map(|n| matches!(grid.class(n), NodeClass::A | NodeClass::B))
            .collect();
        Ok(self
            .fine
            .get_or_init(|| FineReference { grid, q, j, in_ab }))
    }

    fn level(&self, h: f64, base: &Path) -> Result<Level, Failure> {
        let tess = build_grid(self.model.domain(), h).stage("tessellate")?;
        let sets = assign_metastable(&tess, |x| self.regions.in_a(x), |x| self.regions.in_b(x))
            .stage("tessellate")?;
        sets.ensure_viable().stage("tessellate")?;
        let mu = mu_weights(&tess, &self.model, QUADRATURE_M)
            .stage("tessellate")?
            .mu;
        let dir = h_dir(base, h);
        create_dir(&dir)?;
        Ok(Level {
            h,
            dir,
            tess,
            sets,
            mu,
        })
    }

    fn levels(&self) -> Result<Vec<Level>, Failure> {
        self.config
            .h_list
            .iter()
            .map(|&h| self.level(h, &self.out))
            .collect()
    }

    /// FD committor and current with one node per cell centre.
    fn colocated(
        &self,
        level: &Level,
    ) -> Result<(FdGrid, GridScalarField, GridVectorField), Failure> {
        let grid = FdGrid::from_sets(&level.tess, &level.sets).stage("reference")?;
        let q = solve_committor_fd(&self.model, &grid, FD_TOL, FD_SWEEPS)
            .stage("reference")?
            .field;
        let j = reference_current(&self.model, &grid, &q, QUADRATURE_M)
            .stage("reference")?
            .field;
        Ok((grid, q, j))
    }

    /// Upserts rows of `errors.csv` keyed by `(h, dt)`.
    fn merge_errors(&self, new: &[ErrorRow]) -> Result<(), Failure> {
        let path = self.out.join("errors.csv");
        let mut rows = if path.exists() {
            io::read_errors(&path).stage("output")?
        } else {
            Vec::new()
        };
        for n in new {
            match rows.iter_mut().find(|r| r.h == n.h && r.dt == n.dt) {
                Some(r) => {
                    r.rho = n.rho;
                    r.l2_mu_q = n.l2_mu_q.or(r.l2_mu_q);
                    r.l2_mu_j = n.l2_mu_j.or(r.l2_mu_j);
                }
                None => rows.push(*n),
            }
        }
        rows.sort_by(|a, b| b.dt.total_cmp(&a.dt).then(b.h.total_cmp(&a.h)));
        io::write_errors(&path, &rows).stage("output")
    }

    pub fn tessellate(&self) -> Result<(), Failure> {
        for level in self.levels()? {
            io::write_cells(
                &level.dir.join("cells.csv"),
                &level.tess,
                &level.mu,
                &level.sets,
            )
            .stage("tessellate")?;
            io::write_facets(&level.dir.join("facets.csv"), &level.tess).stage("tessellate")?;
        }
        Ok(())
    }

    pub fn committor(&self) -> Result<Vec<CommittorLevel>, Failure> {
        let c = self.config;
        let mut opts = CommittorOptions::new(c.n_per_cell, c.dt, c.seed);
        opts.max_steps = c.max_steps_per_trajectory;
        let mut out = Vec::new();
        let mut rows = Vec::new();
        for level in self.levels()? {
            let q = estimate_committor(&level.tess, &level.sets, &self.model, &opts)
                .stage("committor")?;
            io::write_committor(&level.dir.join("committor.csv"), &level.tess, &q)
                .stage("committor")?;
            let fine = self.fine()?;
            let err = l2_mu_error_nodal(
                &self.model,
                fine.grid.spec(),
                &fine.q.values,
                &level.tess,
                &q.values,
                1,
                None,
            )
            .stage("committor")?;
            let rho = level.tess.width();
            rows.push(ErrorRow {
                rho,
                h: level.h,
                dt: c.dt,
                l2_mu_q: Some(err),
                l2_mu_j: None,
            });
            out.push(CommittorLevel {
                h: level.h,
                rho,
                l2_mu_q: err,
            });
        }
        self.merge_errors(&rows)?;
        Ok(out)
    }

    pub fn reference(&self) -> Result<(), Failure> {
        for level in self.levels()? {
            let (grid, q, j) = self.colocated(&level)?;
            io::write_reference(&level.dir.join("reference.csv"), &grid, &q, &j)
                .stage("reference")?;
        }
        Ok(())
    }

    /// Samples one long trajectory labelled on every width in `h_list`.
    /// Per-width files go under `base` (the output directory by default);
    /// error rows always go to the top-level `errors.csv`.
    pub fn current(
        &self,
        dt: f64,
        h_list: &[f64],
        base: Option<&Path>,
    ) -> Result<Vec<CurrentLevel>, Failure> {
        let c = self.config;
        let base = base.unwrap_or(&self.out);
        let levels: Vec<Level> = h_list
            .iter()
            .map(|&h| self.level(h, base))
            .collect::<Result<_, _>>()?;
        let targets: Vec<(&Tessellation, &MetastableIndexSets)> =
            levels.iter().map(|l| (&l.tess, &l.sets)).collect();
        let mut opts = SamplerOptions::new(dt, c.seed, c.n_reactive_target, c.start.clone());
        opts.max_steps = c.max_sampling_steps;
        opts.burn_in = c.burn_in;
        let ledgers = sample_reactive_ledgers(&self.model, &targets, &opts).stage("current")?;
        let mut out = Vec::new();
        let mut rows = Vec::new();
        for (level, ledger) in levels.iter().zip(&ledgers) {
            let field = reconstruct_current(ledger, &level.tess, &level.sets).stage("current")?;
            io::write_current(&level.dir.join("current.csv"), &level.tess, &field)
                .stage("current")?;
            io::write_ledger(&level.dir.join("ledger.csv"), &level.tess, ledger)
                .stage("current")?;
            let summary = json!({
                "T": ledger.total_time(),
                "s": ledger.window(),
                "n_segments": ledger.n_segments,
                "nonadjacent_jumps": ledger.nonadjacent_jumps,
            });
            let text = serde_json::to_string_pretty(&summary).expect("plain JSON values");
            io::write_text(&level.dir.join("summary.json"), &text).stage("current")?;
            let (err, report) = self.analyze_level(level, &field)?;
            let rho = level.tess.width();
            rows.push(ErrorRow {
                rho,
                h: level.h,
                dt,
                l2_mu_q: None,
                l2_mu_j: Some(err),
            });
            out.push(CurrentLevel {
                h: level.h,
                rho,
                dt,
                l2_mu_j: err,
                total_time: ledger.total_time(),
                n_segments: ledger.n_segments,
                nonadjacent_jumps: ledger.nonadjacent_jumps,
                nonadjacent_rate: ledger.nonadjacent_rate(),
                report,
            });
        }
        self.merge_errors(&rows)?;
        Ok(out)
    }

    /// `L²(μ)` current error outside `A ∪ B` and the J/K cells, plus `dr_report.csv` and
    /// `histograms.csv` against the FD current on the level's own mesh.
    fn analyze_level(
        &self,
        level: &Level,
        field: &CurrentField,
    ) -> Result<(f64, ReportStats), Failure> {
        let c = self.config;
        let d = level.tess.dim();
        let fine = self.fine()?;
        let skip = metastable_node_mask(
            fine.grid.spec(),
            &level.tess,
            &level.sets,
            Some(&fine.in_ab),
        )
        .stage("analyze")?;
        let err = l2_mu_error_nodal(
            &self.model,
            fine.grid.spec(),
            &fine.j.values,
            &level.tess,
            &field.vectors,
            d,
            Some(&skip),
        )
        .stage("analyze")?;
        let (_, _, j_ref) = self.colocated(level)?;
        let v = cell_potential(&level.tess, self.model.potential(), c.mask_probe());
        let report = direction_scaling(&field.vectors, &j_ref.values, &v, d, c.v_cut, c.r_cap)
            .stage("analyze")?;
        let directions = report.directions();
        let ratios = report.ratios();
        let h_d = histogram(&directions, c.hist_bins, (0.0, PI)).stage("analyze")?;
        let h_r = histogram(&ratios, c.hist_bins, (0.0, c.r_cap)).stage("analyze")?;
        io::write_dr_report(&level.dir.join("dr_report.csv"), &report).stage("analyze")?;
        io::write_histograms(
            &level.dir.join("histograms.csv"),
            &[("D", &h_d), ("R", &h_r)],
        )
        .stage("analyze")?;
        let near = ratios.iter().filter(|r| (0.5..=1.5).contains(*r)).count();
        let stats = ReportStats {
            unmasked_cells: ratios.len(),
            median_direction_error: median(directions),
            ratio_near_one: if ratios.is_empty() {
                f64::NAN
            } else {
                near as f64 / ratios.len() as f64
            },
        };
        Ok((err, stats))
    }

    /// Recomputes the error metrics and reports from `current.csv` files.
    pub fn analyze(&self) -> Result<Vec<(f64, f64, ReportStats)>, Failure> {
        let mut rows = Vec::new();
        let mut out = Vec::new();
        for level in self.levels()? {
            let field =
                io::read_current(&level.dir.join("current.csv"), &level.tess).stage("analyze")?;
            let (err, stats) = self.analyze_level(&level, &field)?;
            rows.push(ErrorRow {
                rho: level.tess.width(),
                h: level.h,
                dt: self.config.dt,
                l2_mu_q: None,
                l2_mu_j: Some(err),
            });
            out.push((level.h, err, stats));
        }
        self.merge_errors(&rows)?;
        Ok(out)
    }

    pub fn streamlines(&self, kind: FieldKind) -> Result<Vec<StreamlineLevel>, Failure> {
        if self.model.dim() != 2 {
            return Err(Failure::Config(
                "streamlines need a two-dimensional box".into(),
            ));
        }
        let opts = StreamlineOptions {
            t_max: self.config.t_max,
            ..Default::default()
        };
        let mut out = Vec::new();
        for level in self.levels()? {
            let (lines, file, name) = match kind {
                FieldKind::Approximate => {
                    let field = io::read_current(&level.dir.join("current.csv"), &level.tess)
                        .stage("streamlines")?;
                    let source = FieldSource::Piecewise(&field);
                    let lines = bundle(
                        source,
                        &level.tess,
                        &level.sets,
                        self.config.n_starts,
                        &opts,
                    );
                    (
                        lines.stage("streamlines")?,
                        "streamlines.csv",
                        "approximate",
                    )
                }
                FieldKind::Reference => {
                    let grid = FdGrid::from_sets(&level.tess, &level.sets).stage("streamlines")?;
                    let (_, j) = io::read_reference(&level.dir.join("reference.csv"), &grid)
                        .stage("streamlines")?;
                    let source = FieldSource::Sampled(&j);
                    let lines = bundle(
                        source,
                        &level.tess,
                        &level.sets,
                        self.config.n_starts,
                        &opts,
                    );
                    (
                        lines.stage("streamlines")?,
                        "reference_streamlines.csv",
                        "reference",
                    )
                }
            };
            io::write_streamlines(&level.dir.join(file), &lines).stage("streamlines")?;
            let count = |s: StreamlineStatus| lines.iter().filter(|l| l.status == s).count();
            out.push(StreamlineLevel {
                h: level.h,
                field: name,
                n: lines.len(),
                reached_b: count(StreamlineStatus::ReachedB),
                max_time: count(StreamlineStatus::MaxTimeExceeded),
                stalled: count(StreamlineStatus::Stalled),
                chattered: count(StreamlineStatus::Chattered),
            });
        }
        Ok(out)
    }

    pub fn reproduce(&self) -> Result<(), Failure> {
        let c = self.config;
        self.tessellate()?;
        let committor = self.committor()?;
        self.reference()?;
        let current = self.current(c.dt, &c.h_list, None)?;
        let (approx_lines, reference_lines) = if self.model.dim() == 2 {
            (
                self.streamlines(FieldKind::Approximate)?,
                self.streamlines(FieldKind::Reference)?,
            )
        } else {
            (Vec::new(), Vec::new())
        };
        let fine = match c.fine_dt {
            Some(fine_dt) if !c.fine_h_list.is_empty() => {
                let base = self.out.join(format!("dt{fine_dt}"));
                create_dir(&base)?;
                Some(self.current(fine_dt, &c.fine_h_list, Some(&base))?)
            }
            _ => None,
        };
        let q_pairs: Vec<(f64, f64)> = committor.iter().map(|l| (l.rho, l.l2_mu_q)).collect();
        let j_pairs = |levels: &[CurrentLevel]| {
            levels
                .iter()
                .map(|l| (l.rho, l.l2_mu_j))
                .collect::<Vec<_>>()
        };
        let summary = json!({
            "schema_version": SCHEMA_VERSION,
            "config": c,
            "committor": {
                "levels": committor,
                "slope": slope(&q_pairs),
            },
            "current": {
                "dt": c.dt,
                "levels": current,
                "slope": slope(&j_pairs(&current)),
            },
            "fine_current": fine.as_ref().map(|f| json!({
                "dt": c.fine_dt,
                "levels": f,
                "slope": slope(&j_pairs(f)),
            })),
            "streamlines": {
                "approximate": approx_lines,
                "reference": reference_lines,
            },
        });
        let text = serde_json::to_string_pretty(&summary).expect("plain JSON values");
        io::write_text(&self.out.join("summary.json"), &text).stage("reproduce")
    }
}
