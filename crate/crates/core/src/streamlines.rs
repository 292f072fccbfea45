//! Streamlines of reactive currents from `∂(∪J)` towards `∂(∪K)`.
//!
//! Piecewise-constant fields are integrated exactly: inside a cell the path
//! is a straight ray, and the next event is the first bisector plane or
//! wall it meets. Sampled (smooth) fields use classical RK4 with an
//! arc-length-controlled step.

use crate::error::{invalid, Error, Result};
use crate::flux::{boundary_choice, CurrentField};
use crate::reference::GridVectorField;
use crate::tessellation::{MetastableIndexSets, Tessellation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamlineStatus {
    ReachedB,
    MaxTimeExceeded,
    Stalled,
    Chattered,
}

impl StreamlineStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            StreamlineStatus::ReachedB => "reached_b",
            StreamlineStatus::MaxTimeExceeded => "max_time",
            StreamlineStatus::Stalled => "stalled",
            StreamlineStatus::Chattered => "chattered",
        }
    }
}

/// Time-stamped polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Streamline {
    pub dim: usize,
    pub times: Vec<f64>,
    /// `dim` coordinates per point.
    pub coords: Vec<f64>,
    /// Cell traversed by each segment (piecewise fields only).
    pub cells: Vec<usize>,
    pub status: StreamlineStatus,
}

impl Streamline {
    fn start_at(x: &[f64]) -> Self {
        Self {
            dim: x.len(),
            times: vec![0.0],
            coords: x.to_vec(),
            cells: Vec::new(),
            status: StreamlineStatus::MaxTimeExceeded,
        }
    }

    fn push(&mut self, t: f64, x: &[f64], cell: usize) {
        self.times.push(t);
        self.coords.extend_from_slice(x);
        self.cells.push(cell);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn start(&self) -> &[f64] {
        self.point(0)
    }

    pub fn end(&self) -> &[f64] {
        self.point(self.len() - 1)
    }

    pub fn total_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Euclidean length of the polyline.
    pub fn length(&self) -> f64 {
        (1..self.len())
            .map(|j| dist(self.point(j - 1), self.point(j)))
            .sum()
    }

    /// Linear interpolation in time; clamps to the end points.
    pub fn at(&self, t: f64) -> Vec<f64> {
        if t <= self.times[0] {
            return self.start().to_vec();
        }
        let j = self.times.partition_point(|&s| s < t);
        if j >= self.len() {
            return self.end().to_vec();
        }
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
        self.point(j - 1)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Velocity source for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub enum FieldSource<'a> {
    /// Cell-wise constant field on the tessellation itself.
    Piecewise(&'a CurrentField),
    /// Multilinearly interpolated grid samples.
    Sampled(&'a GridVectorField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamlineOptions {
    pub t_max: f64,
    /// Event budget of the exact integrator; exceeding it reports chatter.
    pub max_events: usize,
    /// Arc length per RK4 step for sampled fields.
    pub ds: f64,
    /// Distance within which a start counts as on `∂(∪J)`.
    pub start_tol: f64,
}

impl Default for StreamlineOptions {
    fn default() -> Self {
        Self {
            t_max: 1e4,
            max_events: 1_000_000,
            ds: 0.01,
            start_tol: 1e-9,
        }
    }
}

/// Integrate from `start`, which must touch a `J` cell and a non-`J` cell.
pub fn integrate(
    source: FieldSource<'_>,
    tess: &Tessellation,
    sets: &MetastableIndexSets,
    start: &[f64],
    opts: &StreamlineOptions,
) -> Result<Streamline> {
    if !(opts.t_max > 0.0) {
        return Err(invalid("t_max", "must be positive"));
    }
    let touching = tess.touching_cells(start, opts.start_tol)?;
    let on_boundary =
        touching.iter().any(|&c| sets.in_j(c)) && touching.iter().any(|&c| !sets.in_j(c));
    if !on_boundary {
        return Err(Error::BadStart {
            point: start.to_vec(),
        });
    }
    match source {
        FieldSource::Piecewise(field) => {
            if field.n_cells() != tess.n_cells() || field.dim != tess.dim() {
                return Err(Error::ShapeMismatch {
                    left: field.n_cells(),
                    right: tess.n_cells(),
                });
            }
            Ok(Exact::new(field, tess, sets, opts).run(start, &touching))
        }
        FieldSource::Sampled(field) => {
            if field.dim() != tess.dim() {
                return Err(Error::ShapeMismatch {
                    left: field.dim(),
                    right: tess.dim(),
                });
            }
            Ok(rk4(field, tess, sets, start, opts))
        }
    }
}

const IDLE_EVENTS: usize = 200;

struct Exact<'a> {
    field: &'a CurrentField,
    tess: &'a Tessellation,
    sets: &'a MetastableIndexSets,
    opts: &'a StreamlineOptions,
    eps: f64,
}

enum Event {
    Facet(usize),
    Wall(usize, f64),
}

impl<'a> Exact<'a> {
    fn new(
        field: &'a CurrentField,
        tess: &'a Tessellation,
        sets: &'a MetastableIndexSets,
        opts: &'a StreamlineOptions,
    ) -> Self {
        let scale = (0..tess.dim())
            .map(|k| tess.domain().hi()[k] - tess.domain().lo()[k])
            .fold(0.0, f64::max);
        Self {
            field,
            tess,
            sets,
            opts,
            eps: 1e-12 * scale,
        }
    }

    /// Cell velocity with outward components removed on walls.
    fn velocity(&self, cell: usize, x: &[f64]) -> Vec<f64> {
        let dom = self.tess.domain();
        let mut v = self.field.vector(cell).to_vec();
        for k in 0..v.len() {
            if (x[k] <= dom.lo()[k] + self.eps && v[k] < 0.0)
                || (x[k] >= dom.hi()[k] - self.eps && v[k] > 0.0)
            {
                v[k] = 0.0;
            }
        }
        v
    }

    /// Earliest exit of the ray `x + τv` from `cell`.
    fn next_event(&self, cell: usize, x: &[f64], v: &[f64]) -> Option<(f64, Event)> {
        let g = self.tess.generator(cell);
        let mut best: Option<(f64, Event)> = None;
        for &k in self.tess.neighbors(cell) {
            let n = self.tess.normal(cell, k).unwrap();
            let vn = dot(v, &n);
            if vn <= 0.0 {
                continue;
            }
            let gk = self.tess.generator(k);
            let gap: f64 = (0..x.len())
                .map(|a| (0.5 * (g[a] + gk[a]) - x[a]) * n[a])
                .sum();
            let tau = (gap / vn).max(0.0);
            if best.as_ref().is_none_or(|b| tau < b.0) {
                best = Some((tau, Event::Facet(k)));
            }
        }
        let dom = self.tess.domain();
        for a in 0..x.len() {
            let tau = if v[a] > 0.0 {
                (dom.hi()[a] - x[a]) / v[a]
            } else if v[a] < 0.0 {
                (dom.lo()[a] - x[a]) / v[a]
            } else {
                continue;
            };
            let wall = if v[a] > 0.0 { dom.hi()[a] } else { dom.lo()[a] };
            let tau = tau.max(0.0);
            if best.as_ref().is_none_or(|b| tau < b.0) {
                best = Some((tau, Event::Wall(a, wall)));
            }
        }
        best
    }

    fn run(&self, start: &[f64], touching: &[usize]) -> Streamline {
        let mut line = Streamline::start_at(start);
        let mut x = start.to_vec();
        let mut t = 0.0;
        let mut cell = boundary_choice(self.field, touching);
        let t_max = self.opts.t_max;
        // consecutive events without visible progress: a Zeno spiral into a
        // vertex or a zero-time cycle between cells
        let mut idle = 0;
        let still = 1e-10 * self.tess.width();
        for _ in 0..self.opts.max_events {
            if idle > IDLE_EVENTS {
                break;
            }
            let before = x.clone();
            if self.sets.in_k(cell) {
                line.status = StreamlineStatus::ReachedB;
                return line;
            }
            let v = self.velocity(cell, &x);
            let Some((tau, event)) = self.next_event(cell, &x, &v) else {
                line.status = StreamlineStatus::Stalled;
                return line;
            };
            if t + tau > t_max {
                let rest = t_max - t;
                let y: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + rest * b).collect();
                line.push(t_max, &y, cell);
                line.status = StreamlineStatus::MaxTimeExceeded;
                return line;
            }
            for (a, b) in x.iter_mut().zip(&v) {
                *a += tau * b;
            }
            t += tau;
            match event {
                Event::Wall(a, wall) => {
                    x[a] = wall;
                    if tau > 0.0 {
                        line.push(t, &x, cell);
                    }
                }
                Event::Facet(k) => {
                    if tau > 0.0 {
                        line.push(t, &x, cell);
                    }
                    let next = self.after_crossing(cell, k, &x, &v);
                    if self.sets.in_k(next) {
                        line.status = StreamlineStatus::ReachedB;
                        return line;
                    }
                    let vn = self.velocity(next, &x);
                    let n = self.tess.normal(cell, next);
                    let back = n.as_ref().is_some_and(|n| dot(&vn, n) < 0.0);
                    if vn.iter().all(|&c| c == 0.0) {
                        line.status = StreamlineStatus::Stalled;
                        return line;
                    }
                    if back {
                        match self.slide(cell, next, &mut x, &mut t, &mut line) {
                            Some(c) => cell = c,
                            None => return line,
                        }
                    } else {
                        cell = next;
                    }
                }
            }
            idle = if dist(&before, &x) <= still {
                idle + 1
            } else {
                0
            };
        }
        line.status = StreamlineStatus::Chattered;
        line
    }

    /// Cell entered when leaving `cell` through its facet with `k` at `x`.
    fn after_crossing(&self, cell: usize, k: usize, x: &[f64], v: &[f64]) -> usize {
        let speed = dot(v, v).sqrt();
        let step = 1e-9 * self.tess.width() / speed;
        let ahead: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + step * b).collect();
        self.pick(&ahead, &[cell], v).unwrap_or(k)
    }

    /// Cell holding `probe`, excluding `skip`. When `probe` sits on a
    /// boundary: cells whose vector keeps moving along `v` first, then the
    /// largest norm, then the smallest index.
    fn pick(&self, probe: &[f64], skip: &[usize], v: &[f64]) -> Option<usize> {
        let tol = 1e-12 * self.tess.width();
        let cells = self.tess.touching_cells(probe, tol).ok()?;
        let mut best: Option<(bool, f64, usize)> = None;
        for c in cells.into_iter().filter(|c| !skip.contains(c)) {
            let key = (dot(self.field.vector(c), v) > 0.0, self.field.norm(c), c);
            let better = match best {
                None => true,
                Some((f, n, _)) => (key.0, key.1) > (f, n),
            };
            if better {
                best = Some(key);
            }
        }
        best.map(|b| b.2)
    }

    /// Sliding along the facet between `a` and `b` with the tangential part
    /// of the larger-norm vector. Returns the cell to continue in, or
    /// `None` after setting a terminal status.
    fn slide(
        &self,
        a: usize,
        b: usize,
        x: &mut [f64],
        t: &mut f64,
        line: &mut Streamline,
    ) -> Option<usize> {
        let owner = boundary_choice(self.field, &[a.min(b), a.max(b)]);
        let w = self.velocity(owner, x);
        let n = self.tess.normal(a, b).unwrap();
        let wn = dot(&w, &n);
        let u: Vec<f64> = w.iter().zip(&n).map(|(wi, ni)| wi - wn * ni).collect();
        let speed = dot(&u, &u).sqrt();
        let facet = self.tess.facet(a, b).unwrap();
        if speed <= 1e-14 * dot(&w, &w).sqrt() || x.len() != 2 || facet.vertices.len() != 2 {
            line.status = StreamlineStatus::Chattered;
            return None;
        }
        let dir: Vec<f64> = u.iter().map(|c| c / speed).collect();
        let end = facet
            .vertices
            .iter()
            .map(|p| {
                (
                    dot(
                        &dir,
                        &p.iter()
                            .zip(x.iter())
                            .map(|(pi, xi)| pi - xi)
                            .collect::<Vec<_>>(),
                    ),
                    p,
                )
            })
            .max_by(|l, r| l.0.total_cmp(&r.0))
            .unwrap();
        let (len, p) = (end.0.max(0.0), end.1.clone());
        let tau = len / speed;
        if *t + tau > self.opts.t_max {
            let rest = self.opts.t_max - *t;
            let y: Vec<f64> = x.iter().zip(&u).map(|(xi, ui)| xi + rest * ui).collect();
            line.push(self.opts.t_max, &y, owner);
            line.status = StreamlineStatus::MaxTimeExceeded;
            return None;
        }
        x.copy_from_slice(&p);
        *t += tau;
        if tau > 0.0 {
            line.push(*t, x, owner);
        }
        let probe: Vec<f64> = x
            .iter()
            .zip(&dir)
            .map(|(xi, di)| xi + 1e-9 * self.tess.width() * di)
            .collect();
        if !self.tess.domain().contains(&probe) {
            line.status = StreamlineStatus::Chattered;
            return None;
        }
        let Some(next) = self.pick(&probe, &[a, b], &dir) else {
            line.status = StreamlineStatus::Chattered;
            return None;
        };
        if self.sets.in_k(next) {
            line.status = StreamlineStatus::ReachedB;
            return None;
        }
        if self.field.norm(next) == 0.0 {
            line.status = StreamlineStatus::Stalled;
            return None;
        }
        Some(next)
    }
}

fn rk4(
    field: &GridVectorField,
    tess: &Tessellation,
    sets: &MetastableIndexSets,
    start: &[f64],
    opts: &StreamlineOptions,
) -> Streamline {
    let d = start.len();
    let dom = tess.domain();
    let clamp = |y: &mut [f64]| {
        for k in 0..d {
            y[k] = y[k].clamp(dom.lo()[k], dom.hi()[k]);
        }
    };
    let mut line = Streamline::start_at(start);
    let mut x = start.to_vec();
    let mut t = 0.0;
    let mut k1 = vec![0.0; d];
    let (mut k2, mut k3, mut k4) = (k1.clone(), k1.clone(), k1.clone());
    let mut y = vec![0.0; d];
    let step = |x: &[f64],
                h: f64,
                k1: &mut [f64],
                k2: &mut [f64],
                k3: &mut [f64],
                k4: &mut [f64],
                y: &mut [f64]| {
        field.sample(x, k1);
        for a in 0..d {
            y[a] = x[a] + 0.5 * h * k1[a];
        }
        clamp(y);
        field.sample(y, k2);
        for a in 0..d {
            y[a] = x[a] + 0.5 * h * k2[a];
        }
        clamp(y);
        field.sample(y, k3);
        for a in 0..d {
            y[a] = x[a] + h * k3[a];
        }
        clamp(y);
        field.sample(y, k4);
        for a in 0..d {
            y[a] = x[a] + h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
        }
        clamp(y);
    };
    for _ in 0..opts.max_events {
        field.sample(&x, &mut k1);
        let speed = dot(&k1, &k1).sqrt();
        if speed == 0.0 {
            line.status = StreamlineStatus::Stalled;
            return line;
        }
        let h = (opts.ds / speed).min(opts.t_max - t);
        step(&x, h, &mut k1, &mut k2, &mut k3, &mut k4, &mut y);
        if sets.in_k(tess.locate_unchecked(&y)) {
            // bisect the step length for the first point inside K
            let (mut lo, mut hi) = (0.0, h);
            let mut z = y.clone();
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                step(&x, mid, &mut k1, &mut k2, &mut k3, &mut k4, &mut z);
                if sets.in_k(tess.locate_unchecked(&z)) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            step(&x, hi, &mut k1, &mut k2, &mut k3, &mut k4, &mut z);
            line.push(t + hi, &z, tess.locate_unchecked(&z));
            line.status = StreamlineStatus::ReachedB;
            return line;
        }
        if dist(&x, &y) == 0.0 {
            line.status = StreamlineStatus::Stalled;
            return line;
        }
        t += h;
        x.copy_from_slice(&y);
        line.push(t, &x, tess.locate_unchecked(&x));
        if t >= opts.t_max {
            line.status = StreamlineStatus::MaxTimeExceeded;
            return line;
        }
    }
    line.status = StreamlineStatus::Chattered;
    line
}

/// `n_starts` points spread evenly by arc length along `∂(∪J)`, at the
/// midpoints of equal arc-length pieces.
pub fn boundary_starts(
    tess: &Tessellation,
    sets: &MetastableIndexSets,
    n_starts: usize,
) -> Vec<Vec<f64>> {
    let lines = tess.region_boundary(|i| sets.in_j(i));
    let total: f64 = lines
        .iter()
        .map(|l| {
            l.windows(2)
                .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
                .sum::<f64>()
        })
        .sum();
    let mut starts = Vec::with_capacity(n_starts);
    if total == 0.0 {
        return starts;
    }
    let mut targets = (0..n_starts)
        .map(|j| (j as f64 + 0.5) * total / n_starts as f64)
        .peekable();
    let mut walked = 0.0;
    for l in &lines {
        for w in l.windows(2) {
            let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            while let Some(&s) = targets.peek() {
                if s > walked + len {
                    break;
                }
                let f = ((s - walked) / len).clamp(0.0, 1.0);
                starts.push(vec![
                    w[0][0] + f * (w[1][0] - w[0][0]),
                    w[0][1] + f * (w[1][1] - w[0][1]),
                ]);
                targets.next();
            }
            walked += len;
        }
    }
    // rounding can leave the last target just past the end
    while starts.len() < n_starts {
        let l = lines.last().unwrap();
        let p = l[l.len() - 1];
        starts.push(vec![p[0], p[1]]);
    }
    starts
}

/// Streamlines from [`boundary_starts`].
pub fn bundle(
    source: FieldSource<'_>,
    tess: &Tessellation,
    sets: &MetastableIndexSets,
    n_starts: usize,
    opts: &StreamlineOptions,
) -> Result<Vec<Streamline>> {
    if n_starts == 0 {
        return Err(invalid("n_starts", "must be at least 1"));
    }
    boundary_starts(tess, sets, n_starts)
        .iter()
        .map(|s| integrate(source, tess, sets, s, opts))
        .collect()
}

/// `sup_{t ≤ min(T_a, T_b)} |a(t) - b(t)|_∞` for streamlines sharing their
/// start point.
pub fn max_deviation(a: &Streamline, b: &Streamline) -> Result<f64> {
    if a.dim != b.dim || dist(a.start(), b.start()) > 1e-12 {
        return Err(Error::MismatchedStart);
    }
    let horizon = a.total_time().min(b.total_time());
    let mut worst: f64 = 0.0;
    let mut check = |t: f64| {
        let (p, q) = (a.at(t), b.at(t));
        let dev = p
            .iter()
            .zip(&q)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        worst = worst.max(dev);
    };
    for &t in a.times.iter().chain(b.times.iter()) {
        if t <= horizon {
            check(t);
        }
    }
    check(horizon);
    Ok(worst)
}
