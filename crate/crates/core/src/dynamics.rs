//! Potentials, the overdamped Langevin (Smoluchowski) diffusion and its
//! Euler–Maruyama discretisation with reflecting walls.
//!
//! The SDE is `dX = -Γ⁻¹∇V(X) dt + sqrt(2/β) Γ^{-1/2} dW` on an axis-aligned
//! box. A step proposes the Euler–Maruyama update and then mirrors every
//! violated coordinate back into the box.

use std::fmt::Debug;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};

/// A smooth potential energy on `R^d`.
pub trait Potential: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);

    /// Short identifier used in configuration files and reports.
    fn name(&self) -> &'static str;
}

/// Triple-well potential on the plane with two deep wells near `(±1, 0)`
/// and a shallow well near `(0, 5/3)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TripleWell;

const THIRD: f64 = 1.0 / 3.0;
const FIVE_THIRDS: f64 = 5.0 / 3.0;

/// Value and analytic gradient of the triple-well potential.
pub fn triple_well(x: [f64; 2]) -> (f64, [f64; 2]) {
    let [x1, x2] = x;
    let e1 = 3.0 * (-x1 * x1 - (x2 - THIRD).powi(2)).exp();
    let e2 = -3.0 * (-x1 * x1 - (x2 - FIVE_THIRDS).powi(2)).exp();
    let e3 = -5.0 * (-(x1 - 1.0).powi(2) - x2 * x2).exp();
    let e4 = -5.0 * (-(x1 + 1.0).powi(2) - x2 * x2).exp();
    let v = e1 + e2 + (e3 + e4) + 0.2 * x1.powi(4) + 0.2 * (x2 - THIRD).powi(4);
    let g1 =
        -2.0 * x1 * (e1 + e2) - 2.0 * (x1 - 1.0) * e3 - 2.0 * (x1 + 1.0) * e4 + 0.8 * x1.powi(3);
    let g2 = -2.0 * (x2 - THIRD) * e1 - 2.0 * (x2 - FIVE_THIRDS) * e2 - 2.0 * x2 * (e3 + e4)
        + 0.8 * (x2 - THIRD).powi(3);
    (v, [g1, g2])
}

impl Potential for TripleWell {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        triple_well([x[0], x[1]]).0
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let (_, g) = triple_well([x[0], x[1]]);
        grad[..2].copy_from_slice(&g);
    }

    fn name(&self) -> &'static str {
        "triple_well"
    }
}

/// `V ≡ 0` in any dimension: free (reflected) Brownian motion.
#[derive(Debug, Clone, Copy)]
pub struct FreeDiffusion {
    pub dim: usize,
}

impl Potential for FreeDiffusion {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn gradient(&self, _x: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
    }

    fn name(&self) -> &'static str {
        "zero"
    }
}

/// One-dimensional quartic double well `V(x) = barrier * (x^2 - 1)^2`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWell1d {
    pub barrier: f64,
}

impl Potential for DoubleWell1d {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.barrier * (x[0] * x[0] - 1.0).powi(2)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad[0] = 4.0 * self.barrier * x[0] * (x[0] * x[0] - 1.0);
    }

    fn name(&self) -> &'static str {
        "double_well"
    }
}

/// Axis-aligned box `[lo_k, hi_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(invalid(
                "box",
                "lower and upper corners must have equal, positive length",
            ));
        }
        for (k, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(invalid(
                    "box",
                    format!("axis {k}: need lo < hi, got [{a}, {b}]"),
                ));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// Mirror each coordinate about the violated face until it is inside.
    pub fn reflect(&self, x: &mut [f64]) {
        for ((v, &a), &b) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            let width = b - a;
            if *v < a || *v > b {
                // fold with period 2*width, then mirror the upper half
                let mut r = (*v - a).rem_euclid(2.0 * width);
                if r > width {
                    r = 2.0 * width - r;
                }
                *v = (a + r).clamp(a, b);
            }
        }
    }
}

/// Smoluchowski diffusion: potential, inverse temperature, diagonal friction
/// and the reflecting box.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    potential: Arc<dyn Potential>,
    beta: f64,
    gamma: Vec<f64>,
    domain: BoxDomain,
}

impl DiffusionModel {
    pub fn new(
        potential: Arc<dyn Potential>,
        beta: f64,
        gamma: Vec<f64>,
        domain: BoxDomain,
    ) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(invalid("beta", format!("must be positive, got {beta}")));
        }
        if gamma.len() != domain.dim() || potential.dim() != domain.dim() {
            return Err(invalid(
                "gamma",
                "friction, potential and box dimensions must agree",
            ));
        }
        if gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(invalid("gamma", "friction entries must be positive"));
        }
        Ok(Self {
            potential,
            beta,
            gamma,
            domain,
        })
    }

    /// Unit friction.
    pub fn isotropic(potential: Arc<dyn Potential>, beta: f64, domain: BoxDomain) -> Result<Self> {
        let d = domain.dim();
        Self::new(potential, beta, vec![1.0; d], domain)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn potential(&self) -> &dyn Potential {
        self.potential.as_ref()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    /// Unnormalised Boltzmann density `exp(-βV(x))`.
    pub fn boltzmann(&self, x: &[f64]) -> f64 {
        (-self.beta * self.potential.value(x)).exp()
    }
}

/// Key of a deterministic random stream: ChaCha keyed by the global seed,
/// stream id selecting the ChaCha stream, word position advancing per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub stream: u64,
}

impl StreamKey {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Stream for task `(a, b)` in a pipeline stage identified by `tag`.
    pub fn derive(seed: u64, tag: u64, a: u64, b: u64) -> Self {
        let mut h = splitmix64(tag ^ 0x5bd1_e995);
        h = splitmix64(h ^ a);
        h = splitmix64(h ^ b.rotate_left(29));
        Self { seed, stream: h }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Euler–Maruyama stepper owning its random stream.
#[derive(Debug, Clone)]
pub struct TrajectoryStepper<'m> {
    model: &'m DiffusionModel,
    dt: f64,
    rng: ChaCha8Rng,
    drift_scale: Vec<f64>,
    noise_scale: Vec<f64>,
    grad: Vec<f64>,
}

impl<'m> TrajectoryStepper<'m> {
    pub fn new(model: &'m DiffusionModel, dt: f64, key: StreamKey) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        let drift_scale = model.gamma.iter().map(|g| dt / g).collect();
        let noise_scale = model
            .gamma
            .iter()
            .map(|g| (2.0 * dt / (model.beta * g)).sqrt())
            .collect();
        Ok(Self {
            model,
            dt,
            rng: key.rng(),
            drift_scale,
            noise_scale,
            grad: vec![0.0; model.dim()],
        })
    }

    /// Deterministic gradient descent step (no noise); used by tests.
    pub fn without_noise(mut self) -> Self {
        self.noise_scale.iter_mut().for_each(|s| *s = 0.0);
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn model(&self) -> &'m DiffusionModel {
        self.model
    }

    /// Per-coordinate standard deviation of the Gaussian increment.
    pub fn noise_scale(&self) -> &[f64] {
        &self.noise_scale
    }

    /// Advance `x` by one step in place.
    #[inline]
    pub fn step(&mut self, x: &mut [f64]) -> Result<()> {
        self.model.potential.gradient(x, &mut self.grad);
        for k in 0..x.len() {
            let xi: f64 = StandardNormal.sample(&mut self.rng);
            x[k] += -self.grad[k] * self.drift_scale[k] + self.noise_scale[k] * xi;
            if !x[k].is_finite() {
                return Err(Error::NonFiniteState { coordinate: k });
            }
        }
        self.model.domain.reflect(x);
        Ok(())
    }
}

/// One Euler–Maruyama step from `state`, reflected into the box.
pub fn em_step(state: &[f64], stepper: &mut TrajectoryStepper<'_>) -> Result<Vec<f64>> {
    let mut x = state.to_vec();
    stepper.step(&mut x)?;
    Ok(x)
}

/// Index of the first state satisfying the stopping rule and that state.
#[derive(Debug, Clone, PartialEq)]
pub struct HitRecord {
    pub index: u64,
    pub point: Vec<f64>,
}

/// Simulate from `start` until `stopper` fires, checking `X_0` first.
///
/// Returns [`Error::BudgetExhausted`] after exactly `max_steps` steps when
/// the stopper never fired.
pub fn run_until<F>(
    start: &[f64],
    mut stopper: F,
    stepper: &mut TrajectoryStepper<'_>,
    max_steps: u64,
) -> Result<HitRecord>
where
    F: FnMut(&[f64]) -> bool,
{
    if max_steps == 0 {
        return Err(invalid("max_steps", "must be at least 1"));
    }
    let mut x = start.to_vec();
    if stopper(&x) {
        return Ok(HitRecord { index: 0, point: x });
    }
    for m in 1..=max_steps {
        stepper.step(&mut x)?;
        if stopper(&x) {
            return Ok(HitRecord { index: m, point: x });
        }
    }
    Err(Error::BudgetExhausted {
        steps: max_steps,
        final_point: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn unit_box(d: usize) -> BoxDomain {
        BoxDomain::new(vec![0.0; d], vec![1.0; d]).unwrap()
    }

    fn triple_model() -> DiffusionModel {
        DiffusionModel::isotropic(
            Arc::new(TripleWell),
            1.67,
            BoxDomain::new(vec![-2.0, -1.5], vec![2.0, 2.5]).unwrap(),
        )
        .unwrap()
    }

    fn fd_gradient(p: &dyn Potential, x: &[f64], step: f64) -> Vec<f64> {
        (0..x.len())
            .map(|k| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[k] += step;
                b[k] -= step;
                (p.value(&a) - p.value(&b)) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn triple_well_is_mirror_symmetric() {
        assert_eq!(triple_well([0.7, 0.2]).0, triple_well([-0.7, 0.2]).0);
    }

    #[test]
    fn deep_wells_sit_next_to_unit_points() {
        // gradient descent from (±1, 0) settles within 0.07 of the start
        for s in [1.0, -1.0] {
            let mut x = [s, 0.0];
            for _ in 0..200_000 {
                let (_, g) = triple_well(x);
                x[0] -= 1e-3 * g[0];
                x[1] -= 1e-3 * g[1];
            }
            let (v, g) = triple_well(x);
            assert!(g[0].hypot(g[1]) < 1e-8);
            assert!((x[0] - s).hypot(x[1]) < 0.07, "{x:?}");
            assert!((v + 3.9949).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn triple_well_gradient_matches_finite_differences() {
        let x = [0.3, 1.1];
        let (_, g) = triple_well(x);
        let fd = fd_gradient(&TripleWell, &x, 1e-6);
        for k in 0..2 {
            assert!((g[k] - fd[k]).abs() / g[k].abs().max(1e-12) < 1e-5);
        }
    }

    #[test]
    fn shipped_gradients_match_finite_differences() {
        let mut rng = StreamKey::new(3, 0).rng();
        let potentials: Vec<(Box<dyn Potential>, BoxDomain)> = vec![
            (
                Box::new(TripleWell),
                BoxDomain::new(vec![-2.0, -1.5], vec![2.0, 2.5]).unwrap(),
            ),
            (Box::new(FreeDiffusion { dim: 2 }), unit_box(2)),
            (
                Box::new(DoubleWell1d { barrier: 1.0 }),
                BoxDomain::new(vec![-2.0], vec![2.0]).unwrap(),
            ),
        ];
        for (p, dom) in &potentials {
            let mut g = vec![0.0; p.dim()];
            for _ in 0..1000 {
                let x: Vec<f64> = (0..p.dim())
                    .map(|k| dom.lo()[k] + rng.random::<f64>() * (dom.hi()[k] - dom.lo()[k]))
                    .collect();
                assert!(p.value(&x).is_finite());
                p.gradient(&x, &mut g);
                let fd = fd_gradient(p.as_ref(), &x, 1e-6);
                for k in 0..p.dim() {
                    let err = (g[k] - fd[k]).abs() / (1.0 + g[k].abs());
                    assert!(err <= 1e-5, "{} at {x:?}: {} vs {}", p.name(), g[k], fd[k]);
                }
            }
        }
    }

    #[test]
    fn noise_scale_matches_step_and_temperature() {
        let model =
            DiffusionModel::isotropic(Arc::new(FreeDiffusion { dim: 2 }), 1.67, unit_box(2))
                .unwrap();
        let stepper = TrajectoryStepper::new(&model, 0.001, StreamKey::new(0, 0)).unwrap();
        for s in stepper.noise_scale() {
            assert!((s - 0.0346).abs() < 1e-4, "{s}");
        }
    }

    #[test]
    fn zero_drift_zero_noise_is_identity() {
        let model = DiffusionModel::isotropic(Arc::new(FreeDiffusion { dim: 2 }), 1.0, unit_box(2))
            .unwrap();
        let mut stepper = TrajectoryStepper::new(&model, 0.01, StreamKey::new(0, 0))
            .unwrap()
            .without_noise();
        let x = vec![0.25, 0.75];
        assert_eq!(em_step(&x, &mut stepper).unwrap(), x);
    }

    #[test]
    fn mirror_reflection() {
        let dom = BoxDomain::new(vec![-2.0], vec![2.0]).unwrap();
        let mut x = [2.1];
        dom.reflect(&mut x);
        assert!((x[0] - 1.9).abs() < 1e-12);
        let mut y = [-2.5];
        dom.reflect(&mut y);
        assert!((y[0] + 1.5).abs() < 1e-12);
        // several widths away
        let mut z = [2.0 + 8.0 + 0.3];
        dom.reflect(&mut z);
        assert!((z[0] - 1.7).abs() < 1e-12);
    }

    #[test]
    fn reflection_keeps_states_in_the_box() {
        let model = triple_model();
        let mut rng = StreamKey::new(11, 1).rng();
        let mut stepper = TrajectoryStepper::new(&model, 0.05, StreamKey::new(11, 2)).unwrap();
        let dom = model.domain().clone();
        let mut x = vec![0.0; 2];
        for m in 0..1_000_000 {
            if m % 10 == 0 {
                x[0] = -2.0 + 4.0 * rng.random::<f64>();
                x[1] = -1.5 + 4.0 * rng.random::<f64>();
            }
            stepper.step(&mut x).unwrap();
            assert!(dom.contains(&x), "{x:?}");
        }
    }

    #[test]
    fn equal_seeds_give_identical_paths() {
        let model = triple_model();
        let run = |key: StreamKey| {
            let mut s = TrajectoryStepper::new(&model, 0.001, key).unwrap();
            let mut x = vec![0.0, 0.0];
            let mut out = Vec::new();
            for _ in 0..500 {
                s.step(&mut x).unwrap();
                out.extend_from_slice(&x);
            }
            out
        };
        let a = run(StreamKey::derive(5, 1, 2, 3));
        let b = run(StreamKey::derive(5, 1, 2, 3));
        let c = run(StreamKey::derive(5, 1, 2, 4));
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(a, c);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let mut r1 = StreamKey::derive(9, 0, 0, 0).rng();
        let mut r2 = StreamKey::derive(9, 0, 0, 1).rng();
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let a: f64 = StandardNormal.sample(&mut r1);
            let b: f64 = StandardNormal.sample(&mut r2);
            acc += a * b;
        }
        // sample correlation is ~N(0, 1/n)
        assert!((acc / n as f64).abs() < 5.0 / (n as f64).sqrt());
    }

    #[test]
    fn run_until_immediate_stop() {
        let model = triple_model();
        let mut s = TrajectoryStepper::new(&model, 0.001, StreamKey::new(0, 0)).unwrap();
        let hit = run_until(&[0.0, 0.0], |_| true, &mut s, 10).unwrap();
        assert_eq!(hit.index, 0);
    }

    #[test]
    fn run_until_budget_is_exact() {
        let model = triple_model();
        let mut s = TrajectoryStepper::new(&model, 0.001, StreamKey::new(0, 0)).unwrap();
        let mut calls = 0;
        let err = run_until(
            &[0.0, 0.0],
            |_| {
                calls += 1;
                false
            },
            &mut s,
            5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { steps: 5, .. }));
        assert_eq!(calls, 6);
    }

    #[test]
    fn driftless_exit_probability() {
        // exit to the right of (0.1, 0.9) from 0.5 has probability 1/2
        let model = DiffusionModel::isotropic(Arc::new(FreeDiffusion { dim: 1 }), 1.0, unit_box(1))
            .unwrap();
        let n = 4000;
        let mut right = 0;
        for r in 0..n {
            let mut s =
                TrajectoryStepper::new(&model, 1e-4, StreamKey::derive(21, 0, r, 0)).unwrap();
            let hit =
                run_until(&[0.5], |x| x[0] <= 0.1 || x[0] >= 0.9, &mut s, 10_000_000).unwrap();
            if hit.point[0] >= 0.9 {
                right += 1;
            }
        }
        let p = right as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * se, "p = {p}");
    }

    #[test]
    fn double_well_occupation_matches_boltzmann() {
        let beta = 2.0;
        let model = DiffusionModel::isotropic(
            Arc::new(DoubleWell1d { barrier: 1.0 }),
            beta,
            BoxDomain::new(vec![-2.0], vec![2.0]).unwrap(),
        )
        .unwrap();
        let mut s = TrajectoryStepper::new(&model, 1e-3, StreamKey::new(7, 0)).unwrap();
        let bins = 40;
        let mut hist = vec![0u64; bins];
        let mut x = vec![0.0];
        let steps = 10_000_000;
        for _ in 0..steps {
            s.step(&mut x).unwrap();
            let b = (((x[0] + 2.0) / 4.0 * bins as f64) as usize).min(bins - 1);
            hist[b] += 1;
        }
        // normalised exp(-βV) per bin by fine midpoint quadrature
        let mut target = vec![0.0; bins];
        let sub = 200;
        for (b, t) in target.iter_mut().enumerate() {
            for j in 0..sub {
                let xm = -2.0 + (b as f64 + (j as f64 + 0.5) / sub as f64) * 4.0 / bins as f64;
                *t += model.boltzmann(&[xm]);
            }
        }
        let z: f64 = target.iter().sum();
        let tv: f64 = hist
            .iter()
            .zip(&target)
            .map(|(h, t)| (*h as f64 / steps as f64 - t / z).abs())
            .sum::<f64>()
            * 0.5;
        assert!(tv <= 0.05, "total variation {tv}");
    }
}
