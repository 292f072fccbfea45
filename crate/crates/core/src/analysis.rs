//! Error metrics between approximate and reference fields: weighted L²
//! norms, direction/scaling diagnostics, histograms and log-log slopes.

use crate::dynamics::{DiffusionModel, Potential};
use crate::error::{invalid, Error, Result};
use crate::tessellation::{GridSpec, MetastableIndexSets, Tessellation};

/// `sqrt(Σ_i w_i |a_i - b_i|²)` over cells with `dim` components each.
/// Cells with `mask[i] == false` are skipped.
pub fn l2_mu_error(
    a: &[f64],
    b: &[f64],
    weights: &[f64],
    dim: usize,
    mask: Option<&[bool]>,
) -> Result<f64> {
    Ok(error_report(a, b, weights, dim, mask)?.l2_mu)
}

/// `‖f - f̃‖_{L²(μ)}` between a field given at the nodes of `spec` and a
/// piecewise-constant cell field on `tess`. Every node is a quadrature
/// point with weight `exp(-βV)`, normalised over all nodes, and belongs to
/// the cell containing it. Nodes with `skip[n]` keep their weight but
/// contribute no error.
pub fn l2_mu_error_nodal(
    model: &DiffusionModel,
    spec: &GridSpec,
    nodal: &[f64],
    tess: &Tessellation,
    cells: &[f64],
    dim: usize,
    skip: Option<&[bool]>,
) -> Result<f64> {
    if dim == 0 {
        return Err(invalid("dim", "must be at least 1"));
    }
    if model.dim() != spec.dim() || tess.dim() != spec.dim() {
        return Err(Error::ShapeMismatch {
            left: spec.dim(),
            right: tess.dim(),
        });
    }
    let n = spec.n_cells();
    if nodal.len() != n * dim {
        return Err(Error::ShapeMismatch {
            left: nodal.len(),
            right: n * dim,
        });
    }
    if cells.len() != tess.n_cells() * dim {
        return Err(Error::ShapeMismatch {
            left: cells.len(),
            right: tess.n_cells() * dim,
        });
    }
    if let Some(s) = skip {
        if s.len() != n {
            return Err(Error::ShapeMismatch {
                left: s.len(),
                right: n,
            });
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for node in 0..n {
        let x = spec.center(node);
        let w = model.boltzmann(&x);
        den += w;
        if skip.is_some_and(|s| s[node]) {
            continue;
        }
        let c = tess.locate(&x)?;
        let e2: f64 = (0..dim)
            .map(|k| (nodal[node * dim + k] - cells[c * dim + k]).powi(2))
            .sum();
        num += w * e2;
    }
    Ok((num / den).sqrt())
}

/// Skip mask for the current norm: nodes of `spec` flagged in `base` or
/// lying in a J or K cell of `tess`, where the cell current is not estimated.
pub fn metastable_node_mask(
    spec: &GridSpec,
    tess: &Tessellation,
    sets: &MetastableIndexSets,
    base: Option<&[bool]>,
) -> Result<Vec<bool>> {
    let n = spec.n_cells();
    if let Some(b) = base {
        if b.len() != n {
            return Err(Error::ShapeMismatch {
                left: b.len(),
                right: n,
            });
        }
    }
    (0..n)
        .map(|node| {
            if base.is_some_and(|b| b[node]) {
                return Ok(true);
            }
            let c = tess.locate(&spec.center(node))?;
            Ok(!sets.is_free(c))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub l2_mu: f64,
    /// `|a_i - b_i|₂` per cell; zero where masked.
    pub per_cell_abs_err: Vec<f64>,
}

impl ErrorReport {
    /// Weighted norm recomputed from the stored per-cell errors.
    pub fn recompute(&self, weights: &[f64]) -> f64 {
        self.per_cell_abs_err
            .iter()
            .zip(weights)
            .map(|(e, w)| w * e * e)
            .sum::<f64>()
            .sqrt()
    }
}

pub fn error_report(
    a: &[f64],
    b: &[f64],
    weights: &[f64],
    dim: usize,
    mask: Option<&[bool]>,
) -> Result<ErrorReport> {
    if dim == 0 {
        return Err(invalid("dim", "must be at least 1"));
    }
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() != weights.len() * dim {
        return Err(Error::ShapeMismatch {
            left: a.len() / dim,
            right: weights.len(),
        });
    }
    if let Some(m) = mask {
        if m.len() != weights.len() {
            return Err(Error::ShapeMismatch {
                left: m.len(),
                right: weights.len(),
            });
        }
    }
    let per_cell_abs_err: Vec<f64> = (0..weights.len())
        .map(|i| {
            if mask.is_some_and(|m| !m[i]) {
                return 0.0;
            }
            (0..dim)
                .map(|k| (a[i * dim + k] - b[i * dim + k]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut report = ErrorReport {
        l2_mu: 0.0,
        per_cell_abs_err,
    };
    report.l2_mu = report.recompute(weights);
    Ok(report)
}

/// Where the potential is probed when masking cells by `V ≤ v_cut`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskProbe {
    #[default]
    Center,
    /// Largest value over the cell vertices.
    MaxVertex,
    /// Smallest value over the cell vertices.
    MinVertex,
}

/// Per-cell potential value used by the `V ≤ v_cut` mask.
pub fn cell_potential(
    tess: &Tessellation,
    potential: &dyn Potential,
    probe: MaskProbe,
) -> Vec<f64> {
    (0..tess.n_cells())
        .map(|i| match probe {
            MaskProbe::Center => potential.value(tess.generator(i)),
            MaskProbe::MaxVertex => tess
                .cell_vertices(i)
                .iter()
                .map(|v| potential.value(v))
                .fold(f64::NEG_INFINITY, f64::max),
            MaskProbe::MinVertex => tess
                .cell_vertices(i)
                .iter()
                .map(|v| potential.value(v))
                .fold(f64::INFINITY, f64::min),
        })
        .collect()
}

/// Angle between `u` and `v` in `[0, π]`, as `2·atan2(|û - v̂|, |û + v̂|)`.
/// Same value as the arccosine of the cosine, without its loss of accuracy
/// near 0 and π.
pub fn direction_error(u: &[f64], v: &[f64]) -> f64 {
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (a, b) = (a / nu, b / nv);
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionScalingReport {
    /// `NaN` where masked.
    pub direction: Vec<f64>,
    /// `NaN` where masked.
    pub ratio: Vec<f64>,
    pub masked: Vec<bool>,
    /// Cells masked because the reference vector vanishes.
    pub zero_reference: usize,
}

impl DirectionScalingReport {
    pub fn unmasked(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.masked.len()).filter(|&i| !self.masked[i])
    }

    pub fn directions(&self) -> Vec<f64> {
        self.unmasked().map(|i| self.direction[i]).collect()
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.unmasked().map(|i| self.ratio[i]).collect()
    }
}

/// Direction error `D` and scaling ratio `R = |approx|/|ref|` capped at
/// `r_cap`, on cells with `potential[i] ≤ v_cut` and a nonzero reference.
pub fn direction_scaling(
    approx: &[f64],
    reference: &[f64],
    potential: &[f64],
    dim: usize,
    v_cut: f64,
    r_cap: f64,
) -> Result<DirectionScalingReport> {
    if dim == 0 {
        return Err(invalid("dim", "must be at least 1"));
    }
    if approx.len() != reference.len() || approx.len() != potential.len() * dim {
        return Err(Error::ShapeMismatch {
            left: approx.len(),
            right: reference.len(),
        });
    }
    let n = potential.len();
    let mut report = DirectionScalingReport {
        direction: vec![f64::NAN; n],
        ratio: vec![f64::NAN; n],
        masked: vec![true; n],
        zero_reference: 0,
    };
    for i in 0..n {
        let u = &approx[i * dim..(i + 1) * dim];
        let v = &reference[i * dim..(i + 1) * dim];
        let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(potential[i] <= v_cut) {
            continue;
        }
        if nv == 0.0 {
            report.zero_reference += 1;
            continue;
        }
        let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        report.masked[i] = false;
        report.ratio[i] = (nu / nv).min(r_cap);
        // a zero approximate vector has no direction; count it as orthogonal
        report.direction[i] = if nu == 0.0 {
            std::f64::consts::FRAC_PI_2
        } else {
            direction_error(u, v)
        };
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn bin_edges(&self, b: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + b as f64 * w, self.lo + (b + 1) as f64 * w)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Bins `[lo + b·w, lo + (b+1)·w)`, the last one closed. Values outside
/// `[lo, hi]` and NaNs are not counted.
pub fn histogram(values: &[f64], n_bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if n_bins == 0 {
        return Err(invalid("n_bins", "must be at least 1"));
    }
    if !(hi > lo) {
        return Err(invalid("range", "needs lo < hi"));
    }
    let mut counts = vec![0u64; n_bins];
    let w = (hi - lo) / n_bins as f64;
    for &v in values {
        if !(lo..=hi).contains(&v) {
            continue;
        }
        let b = (((v - lo) / w) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { lo, hi, counts })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares line through `(log ρ, log err)`.
pub fn loglog_slope(pairs: &[(f64, f64)]) -> Result<PowerFit> {
    if pairs.len() < 2 {
        return Err(invalid("pairs", "need at least two points"));
    }
    if let Some(&(r, e)) = pairs.iter().find(|(r, e)| !(*r > 0.0) || !(*e > 0.0)) {
        return Err(Error::NonPositiveInput {
            value: if r > 0.0 { e } else { r },
        });
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("pairs", "needs at least two distinct widths"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(PowerFit {
        slope,
        intercept: my - slope * mx,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;

    use super::*;

    fn unit_free(d: usize) -> DiffusionModel {
        use crate::dynamics::{BoxDomain, FreeDiffusion};
        use std::sync::Arc;
        DiffusionModel::isotropic(
            Arc::new(FreeDiffusion { dim: d }),
            1.0,
            BoxDomain::new(vec![0.0; d], vec![1.0; d]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn nodal_error_of_cell_averages_of_a_linear_function() {
        // midpoint quadrature of (x - c)² over a cell of width h split into
        // r sub-intervals gives h²/12 (1 - 1/r²)
        use crate::tessellation::build_grid;
        let m = unit_free(2);
        let tess = build_grid(m.domain(), 0.25).unwrap();
        let spec = GridSpec::new(m.domain(), 0.025).unwrap();
        let nodal: Vec<f64> = (0..spec.n_cells()).map(|n| spec.center(n)[0]).collect();
        let cells: Vec<f64> = (0..tess.n_cells()).map(|i| tess.generator(i)[0]).collect();
        let err = l2_mu_error_nodal(&m, &spec, &nodal, &tess, &cells, 1, None).unwrap();
        let exact = (0.25f64.powi(2) / 12.0 * (1.0 - 1.0 / 100.0)).sqrt();
        assert!((err - exact).abs() < 1e-12, "{err} vs {exact}");
    }

    #[test]
    fn nodal_error_skips_and_checks_shapes() {
        use crate::tessellation::build_grid;
        let m = unit_free(2);
        let tess = build_grid(m.domain(), 0.5).unwrap();
        let spec = GridSpec::new(m.domain(), 0.1).unwrap();
        let nodal = vec![1.0; spec.n_cells() * 2];
        let cells = vec![0.0; tess.n_cells() * 2];
        let all = vec![true; spec.n_cells()];
        assert_eq!(
            l2_mu_error_nodal(&m, &spec, &nodal, &tess, &cells, 2, Some(&all)).unwrap(),
            0.0
        );
        let full = l2_mu_error_nodal(&m, &spec, &nodal, &tess, &cells, 2, None).unwrap();
        assert!((full - 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            l2_mu_error_nodal(&m, &spec, &nodal[1..], &tess, &cells, 2, None),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn node_mask_covers_metastable_cells() {
        use crate::tessellation::{assign_metastable, build_grid};
        let m = unit_free(2);
        let tess = build_grid(m.domain(), 0.25).unwrap();
        let sets = assign_metastable(&tess, |x| x[0] < 0.1, |x| x[0] > 0.9).unwrap();
        let spec = GridSpec::new(m.domain(), 0.05).unwrap();
        let mask = metastable_node_mask(&spec, &tess, &sets, None).unwrap();
        for node in 0..spec.n_cells() {
            let x = spec.center(node)[0];
            assert_eq!(mask[node], !(0.25..0.75).contains(&x), "{x}");
        }
        let mut base = vec![false; spec.n_cells()];
        let inner = (0..spec.n_cells()).find(|&n| !mask[n]).unwrap();
        base[inner] = true;
        let with_base = metastable_node_mask(&spec, &tess, &sets, Some(&base)).unwrap();
        assert!(with_base[inner]);
        assert!(matches!(
            metastable_node_mask(&spec, &tess, &sets, Some(&base[1..])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn l2_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(l2_mu_error(&a, &a, &[0.2, 0.3, 0.5], 1, None).unwrap(), 0.0);
        let b = [1.5, 2.5, 3.5];
        let w = [1.0 / 3.0; 3];
        assert!((l2_mu_error(&a, &b, &w, 1, None).unwrap() - 0.5).abs() < 1e-15);
        let e = l2_mu_error(&[0.0, 2.0, -2.0], &[0.0; 3], &[0.5, 0.25, 0.25], 1, None).unwrap();
        assert!((e - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn l2_vector_and_mask() {
        let a = [3.0, 4.0, 1.0, 1.0];
        let b = [0.0; 4];
        let w = [1.0, 1.0];
        let full = l2_mu_error(&a, &b, &w, 2, None).unwrap();
        assert!((full - 27f64.sqrt()).abs() < 1e-14);
        let masked = l2_mu_error(&a, &b, &w, 2, Some(&[true, false])).unwrap();
        assert!((masked - 5.0).abs() < 1e-14);
    }

    #[test]
    fn l2_shape_mismatch() {
        assert!(matches!(
            l2_mu_error(&[1.0], &[1.0, 2.0], &[1.0], 1, None),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            l2_mu_error(&[1.0, 2.0], &[1.0, 2.0], &[1.0], 1, None),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn report_recomputes() {
        let r = error_report(
            &[0.1, 0.7, -0.2],
            &[0.0, 0.2, 0.3],
            &[0.3, 0.3, 0.4],
            1,
            None,
        )
        .unwrap();
        assert!((r.recompute(&[0.3, 0.3, 0.4]) - r.l2_mu).abs() <= 1e-12);
    }

    #[test]
    fn direction_scaling_examples() {
        let r = direction_scaling(
            &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 1.0, 1.0, 1.0, 0.0],
            &[0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 1.5, 0.0],
            2,
            1.0,
            2.0,
        )
        .unwrap();
        assert!((r.direction[0] - PI / 2.0).abs() < 1e-15);
        assert_eq!(r.ratio[0], 1.0);
        assert_eq!((r.direction[1], r.ratio[1]), (0.0, 2.0));
        assert_eq!(r.ratio[2], 2.0);
        assert!(r.masked[3] && r.direction[3].is_nan());
        assert!(r.masked[4]);
        assert_eq!(r.zero_reference, 1);
        assert_eq!(r.directions().len(), 3);
    }

    #[test]
    fn antipodal_is_pi() {
        assert!((direction_error(&[0.3, -1.7], &[-0.3, 1.7]) - PI).abs() <= 1e-12);
        assert_eq!(direction_error(&[2.0, 2.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[0.5], 4, (0.0, 1.0)).unwrap();
        assert_eq!(h.counts, vec![0, 0, 1, 0]);
        let h = histogram(&[1.0, 0.0], 4, (0.0, 1.0)).unwrap();
        assert_eq!(h.counts, vec![1, 0, 0, 1]);
        let vals: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) * PI / 100.0).collect();
        let h = histogram(&vals, 10, (0.0, PI)).unwrap();
        assert!(h.counts.iter().all(|&c| c == 10));
        assert_eq!(h.bin_edges(9).1, PI);
        assert!(histogram(&vals, 0, (0.0, PI)).is_err());
    }

    #[test]
    fn slope_examples() {
        let exact: Vec<(f64, f64)> = [0.5, 0.4, 0.25, 0.1, 0.05]
            .iter()
            .map(|&r| (r, 3.0 * r))
            .collect();
        assert!((loglog_slope(&exact).unwrap().slope - 1.0).abs() <= 1e-12);
        let half: Vec<(f64, f64)> = [0.5, 0.25, 0.1]
            .iter()
            .map(|&r: &f64| (r, 2.0 * r.sqrt()))
            .collect();
        assert!((loglog_slope(&half).unwrap().slope - 0.5).abs() <= 1e-12);
        assert!(matches!(
            loglog_slope(&[(0.5, 1.0), (0.25, 0.0)]),
            Err(Error::NonPositiveInput { .. })
        ));
        assert!(loglog_slope(&[(0.5, 1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn direction_is_scale_invariant(
            u in prop::array::uniform2(-5.0f64..5.0),
            v in prop::array::uniform2(-5.0f64..5.0),
            c in 1e-3f64..1e3,
        ) {
            prop_assume!(u.iter().any(|x| x.abs() > 1e-6) && v.iter().any(|x| x.abs() > 1e-6));
            let d = direction_error(&u, &v);
            let scaled = [c * u[0], c * u[1]];
            prop_assert!((direction_error(&scaled, &v) - d).abs() <= 1e-12);
            prop_assert!((0.0..=PI).contains(&d));
        }

        #[test]
        fn l2_triangle_inequality(
            data in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0, 0.0f64..1.0), 1..40),
        ) {
            let a: Vec<f64> = data.iter().map(|t| t.0).collect();
            let b: Vec<f64> = data.iter().map(|t| t.1).collect();
            let c: Vec<f64> = data.iter().map(|t| t.2).collect();
            let w: Vec<f64> = data.iter().map(|t| t.3).collect();
            let ab = l2_mu_error(&a, &b, &w, 1, None).unwrap();
            let bc = l2_mu_error(&b, &c, &w, 1, None).unwrap();
            let ac = l2_mu_error(&a, &c, &w, 1, None).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn slope_recovers_planted_exponent(p in prop::sample::select(vec![0.5, 1.0, 2.0]), c in 0.01f64..100.0) {
            let pairs: Vec<(f64, f64)> = [0.5, 0.4, 0.25, 0.1, 0.05].iter().map(|&r: &f64| (r, c * r.powf(p))).collect();
            let fit = loglog_slope(&pairs).unwrap();
            prop_assert!((fit.slope - p).abs() <= 1e-10);
        }

        #[test]
        fn histogram_counts_every_in_range_value(vals in prop::collection::vec(0.0f64..=2.0, 0..200), bins in 1usize..20) {
            let h = histogram(&vals, bins, (0.0, 2.0)).unwrap();
            prop_assert_eq!(h.total() as usize, vals.len());
        }
    }
}
