//! Oracle-checked behavior of the tensor algebra: products against an
//! independent enumeration of iterated integrals, plus the multiplicative
//! splitting and associativity invariants on random polylines.

mod common;

use common::polyline_signature_oracle;
use proptest::prelude::*;
use rough_flows::{
    piecewise_linear_signature, segment_signature, tensor_product, weak_geometric_defect,
    TensorSeries,
};

#[test]
fn scalar_concatenation_matches_the_integration_oracle() {
    // One-dimensional segments u then v concatenate to the signature of a
    // straight line of increment u + v.
    let (u, v) = (0.6_f64, -0.35_f64);
    let a = segment_signature(&[u], 2).unwrap();
    let b = segment_signature(&[v], 2).unwrap();
    let prod = tensor_product(&a, &b).unwrap();
    let oracle = polyline_signature_oracle(&[vec![0.0], vec![u], vec![u + v]], 2);
    assert!(prod.distance(&oracle) < 1e-15);
    assert!((prod.coord(&[0]) - (u + v)).abs() < 1e-15);
    assert!((prod.coord(&[0, 0]) - (u + v) * (u + v) / 2.0).abs() < 1e-15);
}

#[test]
fn square_loop_matches_chained_segment_products() {
    let square = vec![
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![1.0, 1.0],
        vec![0.0, 1.0],
        vec![0.0, 0.0],
    ];
    let mut chained = TensorSeries::identity(2, 2);
    for w in square.windows(2) {
        let inc = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
        chained = tensor_product(&chained, &segment_signature(&inc, 2).unwrap()).unwrap();
    }
    let direct = piecewise_linear_signature(&square, 2).unwrap();
    assert!(direct.distance(&chained) < 1e-15);
    let oracle = polyline_signature_oracle(&square, 2);
    assert!(direct.distance(&oracle) < 1e-14);
}

#[test]
fn random_polylines_match_the_enumeration_oracle_at_depth_three() {
    let mut state = 0.123_f64;
    let mut next = move || {
        state = (state * 83.0 + 0.17).fract();
        2.0 * state - 1.0
    };
    for dim in [2usize, 3] {
        for _ in 0..25 {
            let points: Vec<Vec<f64>> = (0..5).map(|_| (0..dim).map(|_| next()).collect()).collect();
            let sig = piecewise_linear_signature(&points, 3).unwrap();
            let oracle = polyline_signature_oracle(&points, 3);
            assert!(
                sig.distance(&oracle) < 1e-13,
                "dim {dim}: {}",
                sig.distance(&oracle)
            );
        }
    }
}

fn polyline_strategy(dim: usize, len: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(-1.0..1.0_f64, dim..=dim),
        len..=len,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chen_identity_under_every_split(points in polyline_strategy(2, 6)) {
        let whole = piecewise_linear_signature(&points, 3).unwrap();
        for j in 1..points.len() - 1 {
            let left = piecewise_linear_signature(&points[..=j], 3).unwrap();
            let right = piecewise_linear_signature(&points[j..], 3).unwrap();
            let prod = tensor_product(&left, &right).unwrap();
            prop_assert!(prod.distance(&whole) < 1e-12);
        }
    }

    #[test]
    fn product_is_associative_on_group_like_elements(
        p1 in polyline_strategy(3, 3),
        p2 in polyline_strategy(3, 3),
        p3 in polyline_strategy(3, 3),
    ) {
        let a = piecewise_linear_signature(&p1, 3).unwrap();
        let b = piecewise_linear_signature(&p2, 3).unwrap();
        let c = piecewise_linear_signature(&p3, 3).unwrap();
        let left = tensor_product(&tensor_product(&a, &b).unwrap(), &c).unwrap();
        let right = tensor_product(&a, &tensor_product(&b, &c).unwrap()).unwrap();
        prop_assert!(left.distance(&right) < 1e-12);
    }

    #[test]
    fn signatures_of_paths_are_weak_geometric(points in polyline_strategy(2, 5)) {
        let sig = piecewise_linear_signature(&points, 2).unwrap();
        prop_assert!(weak_geometric_defect(&sig) < 1e-12);
    }
}
