use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::dynamics::{BoxDomain, TripleWell};
use crate::regions::Regions;
use crate::tessellation::{assign_metastable, build_grid, build_voronoi2d};

/// 1D chain of five unit cells: J = {0}, K = {4}.
fn chain() -> (Tessellation, MetastableIndexSets) {
    let tess = build_grid(&BoxDomain::new(vec![0.0], vec![5.0]).unwrap(), 1.0).unwrap();
    let sets = MetastableIndexSets::from_masks(
        (0..5).map(|i| i == 0).collect(),
        (0..5).map(|i| i == 4).collect(),
    )
    .unwrap();
    (tess, sets)
}

/// 5×5 unit grid: J = left column, K = right column.
fn square() -> (Tessellation, MetastableIndexSets) {
    let tess = build_grid(
        &BoxDomain::new(vec![0.0, 0.0], vec![5.0, 5.0]).unwrap(),
        1.0,
    )
    .unwrap();
    let sets = MetastableIndexSets::from_masks(
        (0..25).map(|i| i % 5 == 0).collect(),
        (0..25).map(|i| i % 5 == 4).collect(),
    )
    .unwrap();
    (tess, sets)
}

fn ledger_for(
    labels: Vec<usize>,
    tess: &Tessellation,
    sets: &MetastableIndexSets,
) -> CrossingLedger {
    let path = LabelPath::new(labels, 0.001);
    let segs = reactive_segments(&path, sets);
    count_crossings(&path, &segs, tess)
}

#[test]
fn labels_follow_the_trajectory() {
    let (tess, _) = square();
    let still = vec![vec![2.5, 2.5]; 4];
    assert_eq!(
        project_labels(&still, &tess, 0.1).unwrap().labels,
        vec![12; 4]
    );
    // second point sits on the face shared by cells 12 and 13
    let pts = vec![vec![3.4, 2.5], vec![3.0, 2.5], vec![2.6, 2.5]];
    assert_eq!(
        project_labels(&pts, &tess, 0.1).unwrap().labels,
        vec![13, 13, 12]
    );
    let cross = vec![
        vec![2.2, 2.5],
        vec![2.7, 2.5],
        vec![3.2, 2.5],
        vec![3.6, 2.5],
    ];
    let l = project_labels(&cross, &tess, 0.1).unwrap().labels;
    assert_eq!(l.windows(2).filter(|w| w[0] != w[1]).count(), 1);
    assert!(project_labels(&[vec![6.0, 1.0]], &tess, 0.1).is_err());
}

#[test]
fn segment_examples() {
    let (_, sets) = chain();
    let seg = |l: Vec<usize>| reactive_segments(&LabelPath::new(l, 1.0), &sets).intervals;
    assert_eq!(seg(vec![0, 2, 2, 4]), vec![(1, 3)]);
    assert_eq!(seg(vec![0, 2, 0, 2, 4]), vec![(3, 4)]);
    assert_eq!(seg(vec![0, 2, 4, 2, 0, 2, 4]), vec![(1, 2), (5, 6)]);
    // trailing incomplete excursion and leading K visits are ignored
    assert_eq!(seg(vec![4, 2, 0, 1, 2]), vec![]);
    // direct jump from J into K
    assert_eq!(seg(vec![0, 4]), vec![(1, 1)]);
}

#[test]
fn alpha_from_counts() {
    let (tess, sets) = chain();
    let mut labels = vec![0, 1, 2, 3, 4, 0, 1, 2, 3, 2, 3, 4, 0, 1, 2, 3, 2, 3, 4];
    labels.resize(1_000_001, 4);
    let ledger = ledger_for(labels, &tess, &sets);
    assert_eq!(ledger.n_segments, 3);
    assert_eq!(ledger.net(2, 3), 3);
    assert_eq!(ledger.net(3, 2), -3);
    assert!((ledger.total_time() - 1000.0).abs() < 1e-9);
    assert!((ledger.alpha(2, 3) - 0.003).abs() < 1e-15);
    assert_eq!(ledger.window(), 0.001);
}

#[test]
fn no_segments_no_counts() {
    let (tess, sets) = chain();
    let ledger = ledger_for(vec![1, 2, 3, 2, 1, 0, 1, 2], &tess, &sets);
    assert_eq!(ledger.pairs().count(), 0);
    assert_eq!(ledger.n_segments, 0);
    let field = reconstruct_current(&ledger, &tess, &sets).unwrap();
    assert!(field.vectors.iter().all(|&v| v == 0.0));
}

#[test]
fn diagonal_jumps_are_tallied_not_counted() {
    let (tess, sets) = square();
    // 5 → 11 is a diagonal move
    let ledger = ledger_for(vec![5, 11, 12, 13, 14], &tess, &sets);
    assert_eq!(ledger.nonadjacent_jumps, 1);
    assert_eq!(ledger.net(5, 11), 0);
    assert_eq!(ledger.net_all(5, 11), 1);
    assert_eq!(ledger.net(11, 12), 1);
    assert_eq!(ledger.adjacent_transitions, 3);
    assert!((ledger.nonadjacent_rate() - 0.25).abs() < 1e-15);
}

#[test]
fn grid_reconstruction_halves_the_normal_sum() {
    let (tess, sets) = square();
    let ledger = ledger_for(
        vec![10, 11, 12, 13, 14, 10, 11, 16, 17, 12, 13, 14],
        &tess,
        &sets,
    );
    let field = reconstruct_current(&ledger, &tess, &sets).unwrap();
    for i in 0..25 {
        if !sets.is_free(i) {
            assert_eq!(field.vector(i), &[0.0, 0.0]);
            continue;
        }
        let mut expect = [0.0; 2];
        for &k in tess.neighbors(i) {
            let n = tess.normal(i, k).unwrap();
            let a = alpha_hat(&ledger, &tess, i, k);
            expect[0] += n[0] * a;
            expect[1] += n[1] * a;
        }
        let g = tess.grid().unwrap().multi_index(i);
        if g[1] > 0 && g[1] < 4 {
            // interior cells: M_i = 2I
            assert!((field.vector(i)[0] - expect[0] / 2.0).abs() < 1e-12);
            assert!((field.vector(i)[1] - expect[1] / 2.0).abs() < 1e-12);
        }
    }
}

#[test]
fn planted_vector_is_recovered() {
    let tess = build_grid(
        &BoxDomain::new(vec![-2.0, -1.5], vec![2.0, 2.5]).unwrap(),
        0.25,
    )
    .unwrap();
    let planted = [1.0, -0.5];
    for i in [0, 17, 100, 255] {
        let alpha: Vec<f64> = tess
            .neighbors(i)
            .iter()
            .map(|&k| {
                let n = tess.normal(i, k).unwrap();
                n[0] * planted[0] + n[1] * planted[1]
            })
            .collect();
        let (v, r) = solve_cell(&tess, i, &alpha).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] + 0.5).abs() < 1e-12);
        assert!(r < 1e-12);
    }
}

#[test]
fn boundary_evaluation_prefers_larger_norm_then_smaller_index() {
    let tess = build_grid(
        &BoxDomain::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap(),
        1.0,
    )
    .unwrap();
    let f = CurrentField::from_vectors(&tess, vec![1.0, 0.0, 2.0, 0.0]).unwrap();
    assert_eq!(
        evaluate_current(&f, &tess, &[0.5, 0.5]).unwrap(),
        vec![1.0, 0.0]
    );
    assert_eq!(
        evaluate_current(&f, &tess, &[1.0, 0.5]).unwrap(),
        vec![2.0, 0.0]
    );
    let g = CurrentField::from_vectors(&tess, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    assert_eq!(
        evaluate_current(&g, &tess, &[1.0, 0.5]).unwrap(),
        vec![0.0, 1.0]
    );
    assert!(evaluate_current(&g, &tess, &[3.0, 0.5]).is_err());
}

#[test]
fn long_trajectory_ledgers_conserve_segments() {
    let model = DiffusionModel::isotropic(
        Arc::new(TripleWell),
        1.67,
        BoxDomain::new(vec![-2.0, -1.5], vec![2.0, 2.5]).unwrap(),
    )
    .unwrap();
    let r = Regions::sublevel_split(Arc::new(TripleWell), -3.0);
    let coarse = build_grid(model.domain(), 0.5).unwrap();
    let fine = build_grid(model.domain(), 0.25).unwrap();
    let sc = assign_metastable(&coarse, |x| r.in_a(x), |x| r.in_b(x)).unwrap();
    let sf = assign_metastable(&fine, |x| r.in_a(x), |x| r.in_b(x)).unwrap();
    let mut opts = SamplerOptions::new(1e-3, 9, 5, vec![0.0, 0.0]);
    opts.n_chains = 2;
    let ledgers = sample_reactive_ledgers(&model, &[(&coarse, &sc), (&fine, &sf)], &opts).unwrap();
    for (l, (t, s)) in ledgers.iter().zip([(&coarse, &sc), (&fine, &sf)]) {
        assert!(l.n_segments >= 5);
        let out_of_j: i64 = l
            .all_pairs()
            .map(|((i, k), v)| match (s.in_j(i), s.in_j(k)) {
                (true, false) => v,
                (false, true) => -v,
                _ => 0,
            })
            .sum();
        assert_eq!(out_of_j, l.n_segments as i64);
        reconstruct_current(l, t, s).unwrap();
    }
    let again = sample_reactive_ledgers(&model, &[(&coarse, &sc), (&fine, &sf)], &opts).unwrap();
    assert_eq!(ledgers, again);

    opts.max_steps = 10;
    opts.n_chains = 1;
    assert!(matches!(
        sample_reactive_ledgers(&model, &[(&coarse, &sc)], &opts),
        Err(Error::SamplingBudget {
            target: 5,
            steps: 10,
            ..
        })
    ));
}

/// Random walk on the 5×5 grid mixing stays, axis moves, diagonal moves
/// and arbitrary jumps.
fn walk(moves: &[(u8, u8)]) -> Vec<usize> {
    let mut at = 12usize;
    let mut out = vec![at];
    for &(kind, dir) in moves {
        let (x, y) = ((at % 5) as i64, (at / 5) as i64);
        let (dx, dy) = match kind % 4 {
            0 => (0, 0),
            1 | 2 => [(1, 0), (-1, 0), (0, 1), (0, -1)][(dir % 4) as usize],
            _ => [(1, 1), (-1, 1), (1, -1), (-1, -1)][(dir % 4) as usize],
        };
        at = if kind % 13 == 12 {
            (dir as usize) % 25
        } else {
            ((y + dy).clamp(0, 4) * 5 + (x + dx).clamp(0, 4)) as usize
        };
        out.push(at);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn streaming_matches_batch(moves in prop::collection::vec((any::<u8>(), any::<u8>()), 0..400)) {
        let (tess, sets) = square();
        let labels = walk(&moves);
        let batch = ledger_for(labels.clone(), &tess, &sets);
        let mut counter = ReactiveCounter::new(25, 0.001);
        for &l in &labels {
            counter.push(l, &tess, &sets);
        }
        prop_assert_eq!(counter.finish(), batch);
    }

    #[test]
    fn ledger_conservation_laws(moves in prop::collection::vec((any::<u8>(), any::<u8>()), 0..400)) {
        let (tess, sets) = square();
        let ledger = ledger_for(walk(&moves), &tess, &sets);
        for i in 0..25 {
            for k in 0..25 {
                prop_assert_eq!(ledger.net(i, k), -ledger.net(k, i));
                prop_assert_eq!(ledger.net_all(i, k), -ledger.net_all(k, i));
            }
        }
        let n = ledger.n_segments as i64;
        let mut out_of_j = 0;
        let mut into_k = 0;
        for ((i, k), v) in ledger.all_pairs() {
            out_of_j += match (sets.in_j(i), sets.in_j(k)) { (true, false) => v, (false, true) => -v, _ => 0 };
            into_k += match (sets.in_k(i), sets.in_k(k)) { (false, true) => v, (true, false) => -v, _ => 0 };
        }
        prop_assert_eq!(out_of_j, n);
        prop_assert_eq!(into_k, n);
        for i in (0..25).filter(|&i| sets.is_free(i)) {
            let balance: i64 = (0..25).map(|k| ledger.net_all(i, k)).sum();
            prop_assert_eq!(balance, 0);
        }
    }

    #[test]
    fn merge_is_order_independent(
        a in prop::collection::vec((any::<u8>(), any::<u8>()), 0..200),
        b in prop::collection::vec((any::<u8>(), any::<u8>()), 0..200),
        c in prop::collection::vec((any::<u8>(), any::<u8>()), 0..200),
    ) {
        let (tess, sets) = square();
        let (la, lb, lc) = (
            ledger_for(walk(&a), &tess, &sets),
            ledger_for(walk(&b), &tess, &sets),
            ledger_for(walk(&c), &tess, &sets),
        );
        let mut x = la.clone();
        x.merge(&lb).unwrap();
        x.merge(&lc).unwrap();
        let mut y = lc.clone();
        y.merge(&la).unwrap();
        y.merge(&lb).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn normal_equations_recover_any_vector(
        seeds in prop::collection::vec((0.01f64..0.99, 0.01f64..0.99), 12..30),
        v in (-5.0f64..5.0, -5.0f64..5.0),
        pick in any::<prop::sample::Index>(),
    ) {
        let dom = BoxDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let gens: Vec<[f64; 2]> = seeds.iter().map(|&(x, y)| [x, y]).collect();
        let Ok(tess) = build_voronoi2d(&dom, &gens) else { return Ok(()); };
        let i = pick.index(tess.n_cells());
        let alpha: Vec<f64> = tess
            .neighbors(i)
            .iter()
            .map(|&k| {
                let n = tess.normal(i, k).unwrap();
                n[0] * v.0 + n[1] * v.1
            })
            .collect();
        match solve_cell(&tess, i, &alpha) {
            Ok((got, _)) => {
                let scale = v.0.hypot(v.1).max(1.0);
                prop_assert!((got[0] - v.0).abs() <= 1e-12 * scale);
                prop_assert!((got[1] - v.1).abs() <= 1e-12 * scale);
            }
            Err(Error::RankDeficientCell { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}
