use super::*;
use crate::belief::{InfoMatrix, LN_2PI_E};
use crate::partition::{PartitionTree, SplitStrategy};
use crate::synthetic::{random_instance, slam_instance, SlamShape};
use approx::assert_relative_eq;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `ln |Λ + A_cᵀA_c|` by LU on a freshly assembled dense matrix.
fn lu_logdet(prop: &GaussianBelief, a: &CollectiveJacobian, members: &[usize]) -> f64 {
    let sel = a.select(members);
    let m = prop.info().as_matrix() + sel.transpose() * &sel;
    m.lu().determinant().ln()
}

fn lu_entropy(prop: &GaussianBelief, a: &CollectiveJacobian, members: &[usize]) -> f64 {
    0.5 * (prop.dim() as f64 * LN_2PI_E - lu_logdet(prop, a, members))
}

fn all(a: &CollectiveJacobian) -> Vec<usize> {
    (0..a.n_components()).collect()
}

fn two_dim(info: DMatrix<f64>) -> GaussianBelief {
    GaussianBelief::new(InfoMatrix::new(info).unwrap(), DVector::zeros(2), &[VarId::Landmark(0)]).unwrap()
}

#[test]
fn exact_without_measurements_is_prior_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let inst = random_instance(&mut rng, 12, 0, 0).unwrap();
    let h = conditional_entropy_exact(&inst.prop, &inst.jacobian).unwrap();
    assert_relative_eq!(h, inst.prop.entropy().unwrap(), epsilon = 1e-12);
}

#[test]
fn exact_diagonal_example() {
    let prop = two_dim(DMatrix::identity(2, 2));
    let a = CollectiveJacobian::per_row(DMatrix::identity(2, 2) * 3f64.sqrt(), 2).unwrap();
    let h = conditional_entropy_exact(&prop, &a).unwrap();
    assert_relative_eq!(h, LN_2PI_E - 4f64.ln(), epsilon = 1e-12);
    assert_relative_eq!(h, 1.451583, epsilon = 1e-6);
}

#[test]
fn exact_matches_lu_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 40, 16, 5).unwrap();
        let h = conditional_entropy_exact(&inst.prop, &inst.jacobian).unwrap();
        let oracle = lu_entropy(&inst.prop, &inst.jacobian, &all(&inst.jacobian));
        assert_relative_eq!(h, oracle, max_relative = 1e-9);
    }
}

#[test]
fn exact_errors() {
    let prop = two_dim(DMatrix::identity(2, 2));
    let a = CollectiveJacobian::per_row(DMatrix::identity(3, 3), 3).unwrap();
    assert!(matches!(
        conditional_entropy_exact(&prop, &a),
        Err(Error::DimensionMismatch { .. })
    ));
    let singular = two_dim(DMatrix::zeros(2, 2));
    let a = CollectiveJacobian::per_row(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), 2).unwrap();
    assert!(matches!(
        conditional_entropy_exact(&singular, &a),
        Err(Error::NotPositiveDefinite(_))
    ));
}

#[test]
fn g_operator_degenerate_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inst = random_instance(&mut rng, 20, 8, 4).unwrap();
    let be = DenseBackend::new(&inst.prop, &inst.jacobian).unwrap();
    let hx = inst.prop.entropy().unwrap();
    assert_relative_eq!(g_operator(&be, &[], &[]).unwrap(), -hx, epsilon = 1e-12);
    let z = all(&inst.jacobian);
    let exact = conditional_entropy_exact(&inst.prop, &inst.jacobian).unwrap();
    assert_relative_eq!(g_operator(&be, &z, &[]).unwrap() + hx, exact, epsilon = 1e-10);
    assert_relative_eq!(g_operator(&be, &[], &z).unwrap() + hx, exact, epsilon = 1e-10);
    assert_eq!(g_operator(&be, &[0, 1], &[1, 2]), Err(Error::OverlappingSets(1)));
}

#[test]
fn g_operator_matches_three_entropies() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, 30, 12, 6).unwrap();
        let a = &inst.jacobian;
        let be = DenseBackend::new(&inst.prop, a).unwrap();
        let (s, s_bar) = ([0, 2, 4], [1, 3, 5]);
        let g = g_operator(&be, &s, &s_bar).unwrap();
        // determinant form: ½(N ln 2πe − ln|Λ+A_sᵀA_s| − ln|Λ+A_s̄ᵀA_s̄| + ln|Λ|)
        let ld0 = inst.prop.info().as_matrix().clone().lu().determinant().ln();
        let det_form = 0.5
            * (inst.prop.dim() as f64 * LN_2PI_E - lu_logdet(&inst.prop, a, &s) - lu_logdet(&inst.prop, a, &s_bar)
                + ld0);
        assert_relative_eq!(g, det_form, max_relative = 1e-9);
    }
}

#[test]
fn upper_bound_endpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inst = random_instance(&mut rng, 20, 10, 4).unwrap();
    let be = DenseBackend::new(&inst.prop, &inst.jacobian).unwrap();
    let tree = PartitionTree::build(4, 1, SplitStrategy::Contiguous).unwrap();
    let exact = conditional_entropy_exact(&inst.prop, &inst.jacobian).unwrap();
    assert_relative_eq!(
        upper_bound(&be, &tree.upper(NodeId::ROOT).unwrap()).unwrap(),
        exact,
        epsilon = 1e-12
    );
    let empty = UpperSelection {
        node: NodeId::ROOT,
        members: vec![],
    };
    assert_relative_eq!(upper_bound(&be, &empty).unwrap(), inst.prop.entropy().unwrap(), epsilon = 1e-12);
}

/// `½ ln |I + A_c Σ A_cᵀ|`: mutual information between the state and `Z^c`.
fn info_gain(sigma: &DMatrix<f64>, a: &CollectiveJacobian, members: &[usize]) -> f64 {
    let sel = a.select(members);
    let m = DMatrix::identity(sel.nrows(), sel.nrows()) + &sel * sigma * sel.transpose();
    0.5 * m.lu().determinant().ln()
}

#[test]
fn bound_gaps_are_mutual_informations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, 25, 12, 6).unwrap();
        let a = &inst.jacobian;
        let sigma = inst.prop.info().as_matrix().clone().try_inverse().unwrap();
        let be = DenseBackend::new(&inst.prop, a).unwrap();
        let tree = PartitionTree::build(6, 1, SplitStrategy::SeededRandom(9)).unwrap();
        let [c1, c2] = NodeId::ROOT.children();
        let (s, s_bar) = (tree.members(c1).unwrap(), tree.members(c2).unwrap());
        let exact = conditional_entropy_exact(&inst.prop, a).unwrap();
        let ub = upper_bound(&be, &tree.upper(c1).unwrap()).unwrap();
        let lb = lower_bound(&be, &tree.lower(&[c1, c2]).unwrap()).unwrap();
        let (i_s, i_sbar, i_all) = (info_gain(&sigma, a, s), info_gain(&sigma, a, s_bar), info_gain(&sigma, a, &all(a)));
        // I(X; Z^s̄ | Z^s) and the double-counted I(Z^s; Z^s̄)
        assert_relative_eq!(ub - exact, i_all - i_s, epsilon = 1e-9);
        assert_relative_eq!(exact - lb, i_s + i_sbar - i_all, epsilon = 1e-9);
    }
}

#[test]
fn block_diagonal_lower_bound_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 8;
    let g1 = DMatrix::from_fn(4, 4, |_, _| rand::Rng::gen_range(&mut rng, -1.0..1.0));
    let g2 = DMatrix::from_fn(4, 4, |_, _| rand::Rng::gen_range(&mut rng, -1.0..1.0));
    let mut info = DMatrix::zeros(n, n);
    info.view_mut((0, 0), (4, 4)).copy_from(&(&g1 * g1.transpose() + DMatrix::identity(4, 4)));
    info.view_mut((4, 4), (4, 4)).copy_from(&(&g2 * g2.transpose() + DMatrix::identity(4, 4)));
    let prop = GaussianBelief::new(
        InfoMatrix::new(info).unwrap(),
        DVector::zeros(n),
        &[VarId::Landmark(0), VarId::Landmark(1), VarId::Landmark(2), VarId::Landmark(3)],
    )
    .unwrap();
    let mut rows = DMatrix::zeros(6, n);
    for r in 0..3 {
        for c in 0..4 {
            rows[(r, c)] = rand::Rng::gen_range(&mut rng, -1.0..1.0);
            rows[(r + 3, c + 4)] = rand::Rng::gen_range(&mut rng, -1.0..1.0);
        }
    }
    let a = CollectiveJacobian::new(rows, vec![0, 0, 0, 1, 1, 1], 2, n).unwrap();
    let be = DenseBackend::new(&prop, &a).unwrap();
    let tree = PartitionTree::build(2, 1, SplitStrategy::Contiguous).unwrap();
    let lb = lower_bound(&be, &tree.level_cover(1).unwrap()).unwrap();
    let exact = lu_entropy(&prop, &a, &[0, 1]);
    assert_relative_eq!(lb, exact, epsilon = 1e-10);
}

#[test]
fn root_selection_is_degenerate() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inst = random_instance(&mut rng, 18, 9, 5).unwrap();
    let be = DenseBackend::new(&inst.prop, &inst.jacobian).unwrap();
    let tree = PartitionTree::build(5, 2, SplitStrategy::default()).unwrap();
    let iv = partitioned_bounds(&be, &tree.upper(NodeId::ROOT).unwrap(), &tree.lower(&[NodeId::ROOT]).unwrap())
        .unwrap();
    let exact = conditional_entropy_exact(&inst.prop, &inst.jacobian).unwrap();
    assert_relative_eq!(iv.lb, exact, epsilon = 1e-12);
    assert_relative_eq!(iv.ub, exact, epsilon = 1e-12);
    assert_eq!(iv.width(), 0.0);
}

#[test]
fn lower_cover_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 30, 16, 8).unwrap();
        let be = DenseBackend::new(&inst.prop, &inst.jacobian).unwrap();
        let tree = PartitionTree::build(8, 2, SplitStrategy::SeededRandom(1)).unwrap();
        let two = lower_bound(&be, &tree.level_cover(1).unwrap()).unwrap();
        let four = lower_bound(&be, &tree.level_cover(2).unwrap()).unwrap();
        let exact = conditional_entropy_exact(&inst.prop, &inst.jacobian).unwrap();
        assert!(four <= two + 1e-9 && two <= exact + 1e-9);
    }
}

#[test]
fn hierarchy_through_g_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..30 {
        let inst = random_instance(&mut rng, 24, 16, 8).unwrap();
        let be = DenseBackend::new(&inst.prop, &inst.jacobian).unwrap();
        let tree = PartitionTree::build(8, 2, SplitStrategy::Interleaved).unwrap();
        let [s, sb] = NodeId::ROOT.children();
        let [s1, s2] = s.children();
        let [sb1, sb2] = sb.children();
        let m = |id| tree.members(id).unwrap();
        let top = g_operator(&be, m(s), m(sb)).unwrap();
        let mid = g_operator(&be, m(s1), m(s2)).unwrap() + g_operator(&be, &[], m(sb)).unwrap();
        let low = g_operator(&be, m(s1), m(s2)).unwrap()
            + g_operator(&be, m(sb1), m(sb2)).unwrap()
            + g_operator(&be, &[], &[]).unwrap();
        assert!(top >= mid - 1e-9 && mid >= low - 1e-9, "{top} {mid} {low}");
        // the chain terms are the 2-, 3- and 4-set cover lower bounds
        let two = lower_bound(&be, &tree.level_cover(1).unwrap()).unwrap();
        let three = lower_bound(&be, &tree.lower(&[s1, s2, sb]).unwrap()).unwrap();
        let four = lower_bound(&be, &tree.level_cover(2).unwrap()).unwrap();
        assert_relative_eq!(top, two, epsilon = 1e-9);
        assert_relative_eq!(mid, three, epsilon = 1e-9);
        assert_relative_eq!(low, four, epsilon = 1e-9);
        // children never beat their parent set
        let hs = be.entropy_given(m(s)).unwrap();
        assert!(be.entropy_given(m(s1)).unwrap() >= hs - 1e-9);
        assert!(be.entropy_given(m(s2)).unwrap() >= hs - 1e-9);
    }
}

#[test]
fn level_bounds_use_best_node() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let inst = random_instance(&mut rng, 20, 12, 6).unwrap();
    let be = DenseBackend::new(&inst.prop, &inst.jacobian).unwrap();
    let tree = PartitionTree::build(6, 2, SplitStrategy::Contiguous).unwrap();
    let cover = tree.level_cover(2).unwrap();
    let iv = level_bounds(&be, &cover).unwrap();
    let best = cover
        .members
        .iter()
        .map(|m| be.entropy_given(m).unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(iv.ub, best);
    assert_eq!(iv.lb, lower_bound(&be, &cover).unwrap());
    assert!(iv.contains(conditional_entropy_exact(&inst.prop, &inst.jacobian).unwrap(), 1e-9));
}

#[test]
fn backends_agree_on_slam_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for horizon in [0, 1, 4] {
        let inst = slam_instance(
            &mut rng,
            SlamShape {
                poses: 10,
                landmarks: 30,
                horizon,
                measurements: 20,
            },
            None,
        )
        .unwrap();
        let prior = RamdlPrior::from_propagation(inst.prior_logdet, &inst.prior_cov, &inst.propagation, &inst.involved)
            .unwrap();
        let dense = DenseBackend::new(&inst.propagation, &inst.jacobian).unwrap();
        let ramdl = RamdlBackend::new(&prior, &inst.jacobian).unwrap();
        assert_relative_eq!(ramdl.prior_logdet(), dense.prior_logdet(), max_relative = 1e-10);
        for members in [vec![], vec![0], (0..10).collect(), (0..20).collect::<Vec<_>>()] {
            let d = dense.logdet_with(&members).unwrap();
            let r = ramdl.logdet_with(&members).unwrap();
            assert_relative_eq!(d, r, max_relative = 1e-8);
            assert_relative_eq!(d, lu_logdet(&inst.propagation, &inst.jacobian, &members), max_relative = 1e-8);
        }
    }
}

#[test]
fn general_ramdl_with_motion_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let inst = slam_instance(
        &mut rng,
        SlamShape {
            poses: 6,
            landmarks: 12,
            horizon: 3,
            measurements: 8,
        },
        None,
    )
    .unwrap();
    // A = [motion rows; measurement rows] over Λ^Aug, with the future poses as A_new
    let p = &inst.propagation;
    let n = p.dim();
    let mut a = DMatrix::zeros(p.motion_rows.len() + inst.jacobian.n_rows(), n);
    for (i, row) in p.motion_rows.iter().chain(inst.jacobian.sparse_rows()).enumerate() {
        for (c, v) in row.iter() {
            a[(i, c)] = v;
        }
    }
    let ld = ramdl_logdet(inst.prior_logdet, &inst.prior_cov, &a, p.prior_dim).unwrap();
    let mut full = DMatrix::zeros(n, n);
    full.view_mut((0, 0), (p.prior_dim, p.prior_dim))
        .copy_from(inst.prior.info().as_matrix());
    full += a.transpose() * &a;
    assert_relative_eq!(ld, full.lu().determinant().ln(), max_relative = 1e-8);
}

#[test]
fn involved_state_bounds_match_partitioned() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let inst = slam_instance(
        &mut rng,
        SlamShape {
            poses: 5,
            landmarks: 10,
            horizon: 3,
            measurements: 9,
        },
        None,
    )
    .unwrap();
    let a = &inst.jacobian;
    let mut per_step = vec![Vec::new(); 3];
    for l in a.labels() {
        per_step[l.step].push(l.landmark);
    }
    let assoc = DataAssociation { per_step };
    let be = DenseBackend::new(&inst.propagation, a).unwrap();
    let tree = PartitionTree::build(9, 2, SplitStrategy::default()).unwrap();
    let up = tree.upper(NodeId::new(1, 0)).unwrap();
    let low = tree.level_cover(2).unwrap();
    let inv = involved_state_bounds(&inst.propagation, &be, &assoc, &up, &low).unwrap();
    let part = partitioned_bounds(&be, &up, &low).unwrap();
    assert_eq!(inv, part);

    let mut wrong = assoc.clone();
    wrong.per_step[0].push(VarId::Landmark(99));
    assert!(matches!(
        involved_state_bounds(&inst.propagation, &be, &wrong, &up, &low),
        Err(Error::InconsistentAssociation(_))
    ));
}

#[test]
fn involved_state_bounds_without_observations() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let inst = slam_instance(
        &mut rng,
        SlamShape {
            poses: 4,
            landmarks: 6,
            horizon: 2,
            measurements: 0,
        },
        None,
    )
    .unwrap();
    let be = DenseBackend::new(&inst.propagation, &inst.jacobian).unwrap();
    let tree = PartitionTree::build(0, 0, SplitStrategy::default()).unwrap();
    let assoc = DataAssociation {
        per_step: vec![vec![], vec![]],
    };
    let iv = involved_state_bounds(
        &inst.propagation,
        &be,
        &assoc,
        &tree.upper(NodeId::ROOT).unwrap(),
        &tree.level_cover(0).unwrap(),
    )
    .unwrap();
    let h = inst.propagation.entropy().unwrap();
    assert_relative_eq!(iv.lb, h, epsilon = 1e-12);
    assert_relative_eq!(iv.ub, h, epsilon = 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sandwich_holds(seed in any::<u64>(), n in 6usize..40, r in 2usize..16, depth in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = r;
        let inst = random_instance(&mut rng, n, r, m).unwrap();
        let be = DenseBackend::new(&inst.prop, &inst.jacobian).unwrap();
        let depth = depth.min(crate::partition::max_depth(m));
        let tree = PartitionTree::build(m, depth, SplitStrategy::SeededRandom(seed)).unwrap();
        let exact = conditional_entropy_exact(&inst.prop, &inst.jacobian).unwrap();
        let cover = tree.level_cover(depth).unwrap();
        for node in &cover.nodes {
            let iv = partitioned_bounds(&be, &tree.upper(*node).unwrap(), &cover).unwrap();
            prop_assert!(iv.lb <= exact + 1e-9 && exact <= iv.ub + 1e-9);
        }
    }

    #[test]
    fn upper_bound_monotone_along_growth(seed in any::<u64>(), r in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 20, r, r).unwrap();
        let be = DenseBackend::new(&inst.prop, &inst.jacobian).unwrap();
        let mut prev = be.prior_entropy();
        for k in 1..=r {
            let members: Vec<usize> = (0..k).collect();
            let h = be.entropy_given(&members).unwrap();
            prop_assert!(h <= prev + 1e-9);
            prev = h;
        }
        let exact = conditional_entropy_exact(&inst.prop, &inst.jacobian).unwrap();
        prop_assert!((prev - exact).abs() <= 1e-9);
    }
}
