use hetcons::error::Error;
use hetcons::matkit::*;

fn m(rows: &[&[f64]]) -> Mat {
    Mat::from_rows(rows).unwrap()
}

#[test]
fn rejects_non_finite_and_bad_lengths() {
    assert!(Mat::new(1, 2, vec![1.0, f64::NAN]).is_err());
    assert!(Mat::new(2, 2, vec![1.0; 3]).is_err());
    assert!(Mat::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
}

#[test]
fn kron_identity_scalar() {
    let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
    assert_eq!(kron(&m(&[&[1.0]]), &a), a);
}

#[test]
fn kron_block_structure() {
    let j = m(&[&[0.0, 1.0], &[0.0, 0.0]]);
    let k = kron(&Mat::identity(2), &j);
    let expected = m(&[
        &[0.0, 1.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 1.0],
        &[0.0, 0.0, 0.0, 0.0],
    ]);
    assert_eq!(k, expected);
}

#[test]
fn kron_dimensions() {
    let k = kron(&Mat::zeros(5, 6), &Mat::identity(2));
    assert_eq!(k.shape(), (10, 12));
}

#[test]
fn hadamard_cases() {
    let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
    let ones = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
    assert_eq!(hadamard(&a, &ones).unwrap(), a);
    assert_eq!(hadamard(&a, &Mat::zeros(2, 2)).unwrap(), Mat::zeros(2, 2));
    let b = m(&[&[5.0, 6.0], &[7.0, 8.0]]);
    assert_eq!(
        hadamard(&a, &b).unwrap(),
        m(&[&[5.0, 12.0], &[21.0, 32.0]])
    );
    assert!(matches!(
        hadamard(&a, &Mat::zeros(2, 3)),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn pinv_examples() {
    let p = pinv(&Mat::identity(3), DEFAULT_TOL);
    assert!((&p - &Mat::identity(3)).max_abs() < 1e-14);

    let row = m(&[&[1.0, -1.0]]);
    let p = pinv(&row, DEFAULT_TOL);
    assert_eq!(p.shape(), (2, 1));
    assert!((p[(0, 0)] - 0.5).abs() < 1e-14);
    assert!((p[(1, 0)] + 0.5).abs() < 1e-14);

    assert_eq!(pinv(&Mat::zeros(2, 3), DEFAULT_TOL), Mat::zeros(3, 2));
}

#[test]
fn rank_examples() {
    assert_eq!(rank(&Mat::identity(3), DEFAULT_TOL), 3);
    assert_eq!(rank(&Mat::zeros(3, 4), DEFAULT_TOL), 0);
    let l = m(&[
        &[3.0, 0.0, 0.0, -1.0, -1.0, -1.0],
        &[0.0, 2.0, 0.0, 0.0, -1.0, -1.0],
        &[0.0, 0.0, 2.0, -1.0, 0.0, -1.0],
        &[0.0, -1.0, 0.0, 2.0, 0.0, -1.0],
        &[-1.0, -1.0, 0.0, -1.0, 3.0, 0.0],
        &[-1.0, -1.0, -1.0, 0.0, 0.0, 3.0],
    ]);
    assert_eq!(rank(&l, DEFAULT_TOL), 5);
}

#[test]
fn positive_definite_examples() {
    assert!(is_positive_definite(&Mat::identity(2)).unwrap());
    assert!(!is_positive_definite(&(-&Mat::identity(2))).unwrap());
    let p = m(&[&[0.0608, -0.0363], &[-0.0363, 0.1020]]);
    assert!(is_positive_definite(&p).unwrap());
    assert!(!is_positive_definite(&m(&[&[1.0, 0.5], &[0.0, 1.0]])).unwrap());
    assert!(is_positive_definite(&Mat::zeros(2, 3)).is_err());
}

#[test]
fn sym_eig_examples() {
    let (vals, vecs) = sym_eig(&Mat::identity(2)).unwrap();
    assert_eq!(vals, vec![1.0, 1.0]);
    let gram = &vecs.transpose() * &vecs;
    assert!((&gram - &Mat::identity(2)).max_abs() < 1e-14);

    let (vals, vecs) = sym_eig(&Mat::from_diag(&[7.0, 3.0])).unwrap();
    assert_eq!(vals, vec![3.0, 7.0]);
    assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-14);

    let p = m(&[&[0.0608, -0.0363], &[-0.0363, 0.1020]]);
    let (vals, _) = sym_eig(&p).unwrap();
    assert!(vals.iter().all(|&v| v > 0.0));

    assert!(matches!(
        sym_eig(&m(&[&[1.0, 2.0], &[0.0, 1.0]])),
        Err(Error::Domain { .. })
    ));
}

#[test]
fn serde_round_trip_as_rows() {
    let a = m(&[&[1.0, 2.5], &[-3.0, 4.0]]);
    let s = serde_json::to_string(&a).unwrap();
    assert_eq!(s, "[[1.0,2.5],[-3.0,4.0]]");
    let b: Mat = serde_json::from_str(&s).unwrap();
    assert_eq!(a, b);
}
