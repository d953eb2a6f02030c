use hetcons::error::Error;
use hetcons::matkit::*;
use hetcons::topology::*;

fn six_agent_laplacian() -> Mat {
    Mat::from_rows(&[
        [3.0, 0.0, 0.0, -1.0, -1.0, -1.0],
        [0.0, 2.0, 0.0, 0.0, -1.0, -1.0],
        [0.0, 0.0, 2.0, -1.0, 0.0, -1.0],
        [0.0, -1.0, 0.0, 2.0, 0.0, -1.0],
        [-1.0, -1.0, 0.0, -1.0, 3.0, 0.0],
        [-1.0, -1.0, -1.0, 0.0, 0.0, 3.0],
    ])
    .unwrap()
}

fn pair() -> Digraph {
    Digraph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap()
}

#[test]
fn laplacian_examples() {
    let l = build_laplacian(&pair());
    assert_eq!(l, Mat::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap());

    let g = Digraph::from_laplacian(&six_agent_laplacian()).unwrap();
    assert_eq!(build_laplacian(&g), six_agent_laplacian());

    let empty = Digraph::from_adjacency(Mat::zeros(4, 4)).unwrap();
    assert_eq!(build_laplacian(&empty), Mat::zeros(4, 4));
}

#[test]
fn rejects_bad_adjacency() {
    assert!(Digraph::from_adjacency(Mat::identity(2)).is_err());
    let neg = Mat::from_rows(&[[0.0, -1.0], [1.0, 0.0]]).unwrap();
    assert!(Digraph::from_adjacency(neg).is_err());
}

#[test]
fn spanning_tree_examples() {
    // 1 → 2 → 3: agent 2 receives from 1, agent 3 from 2.
    let chain = Digraph::from_edges(3, &[(1, 0, 1.0), (2, 1, 1.0)]).unwrap();
    assert!(has_spanning_tree(&chain).unwrap());
    assert_eq!(chain.roots(), vec![0]);

    let isolated = Digraph::from_adjacency(Mat::zeros(2, 2)).unwrap();
    assert!(!has_spanning_tree(&isolated).unwrap());

    let g = Digraph::from_laplacian(&six_agent_laplacian()).unwrap();
    assert!(has_spanning_tree(&g).unwrap());
}

#[test]
fn reduce_two_nodes() {
    let b = reduce(&build_laplacian(&pair()), 1, 1).unwrap();
    assert_eq!(b.l_hat, Mat::from_rows(&[[1.0, -1.0]]).unwrap());
    assert!((b.alpha[0] + 1.0).abs() < 1e-12);
    assert!((b.m[(0, 0)] - 2.0).abs() < 1e-12);
}

#[test]
fn reduce_six_agent_graph() {
    let l = six_agent_laplacian();
    let b = reduce(&l, 5, 2).unwrap();
    let alpha = Mat::row_vector(&b.alpha).unwrap();
    let resid = (&(&alpha * &b.l_hat) - &Mat::row_vector(l.row(5)).unwrap()).frobenius_norm();
    assert!(resid <= 1e-10);
    for i in 0..b.l_hat.rows() {
        assert!(b.l_hat.row(i).iter().sum::<f64>().abs() < 1e-12);
    }
    assert_eq!(b.lift.shape(), (12, 10));
    let lifted = &b.lift * &b.l_hat_n();
    assert!((&lifted - &kron_eye(&l, 2)).max_abs() < 1e-9);
}

#[test]
fn reduce_rejects_missing_tree_and_bad_row() {
    let two_roots = Digraph::from_adjacency(Mat::zeros(3, 3)).unwrap();
    assert!(matches!(
        reduce(&build_laplacian(&two_roots), 2, 1),
        Err(Error::NoSpanningTree(_))
    ));
    // Chain 1 → 2 → 3: only row 1 (the root) may be dropped.
    let chain = Digraph::from_edges(3, &[(1, 0, 1.0), (2, 1, 1.0)]).unwrap();
    let l = build_laplacian(&chain);
    assert_eq!(admissible_rows(&l), vec![0]);
    assert!(reduce(&l, 2, 1).is_err());
    assert!(reduce(&l, 0, 1).is_ok());
}

#[test]
fn disagreement_examples() {
    let l = build_laplacian(&pair());
    assert_eq!(disagreement(&l, 1, &[1.0, 0.0]).unwrap(), vec![1.0, -1.0]);
    assert_eq!(disagreement(&l, 2, &[3.0, -1.0, 3.0, -1.0]).unwrap(), vec![0.0; 4]);
    assert!(disagreement(&l, 2, &[1.0; 3]).is_err());

    let lp = six_agent_laplacian();
    let g = Digraph::from_laplacian(&lp).unwrap();
    let x: Vec<f64> = (1..=6).flat_map(|i| [i as f64 + 5.0, i as f64 - 2.0]).collect();
    let xh = disagreement(&lp, 2, &x).unwrap();
    for i in 0..6 {
        for d in 0..2 {
            let direct: f64 = (0..6)
                .map(|j| g.weights()[(i, j)] * (x[2 * i + d] - x[2 * j + d]))
                .sum();
            assert!((xh[2 * i + d] - direct).abs() < 1e-12);
        }
    }
}

#[test]
fn parse_both_layouts() {
    let dense = Digraph::parse("3\n0 1 1\n0 0 1 # comment\n1 0 0\n").unwrap();
    assert_eq!(dense.weights()[(0, 2)], 1.0);
    let edges = Digraph::parse("edges 3\n1 2\n2 3 0.5\n3 1\n").unwrap();
    assert_eq!(edges.weights()[(0, 1)], 1.0);
    assert_eq!(edges.weights()[(1, 2)], 0.5);
    assert!(!edges.is_binary());
    assert!(Digraph::parse("2\n0 1\n").is_err());
    assert!(Digraph::parse("edges 2\n0 1\n").is_err());
}

#[test]
fn random_graphs_are_rooted() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for n in 2..12 {
        for _ in 0..20 {
            let g = Digraph::random_rooted(n, 0.25, &mut rng).unwrap();
            assert!(has_spanning_tree(&g).unwrap());
        }
    }
}
