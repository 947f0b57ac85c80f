use btf_core::likelihood::{CellLikelihood, GaussianLik, PoissonLik};
use btf_core::model::FactorState;
use btf_core::rng::seeded;
use btf_core::tensor::ObservationTensor;
use btf_core::BtfError;
use ndarray::Array2;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn records() -> impl Strategy<Value = Vec<(usize, usize, usize, usize, f64)>> {
    prop::collection::btree_map((0usize..4, 0usize..3, 0usize..5, 0usize..3), -100.0..100.0f64, 1..40)
        .prop_map(|m| m.into_iter().map(|((i, j, t, r), v)| (i, j, t, r, v)).collect())
}

proptest! {
    #[test]
    fn long_format_round_trip(recs in records()) {
        let y = ObservationTensor::from_long(recs.clone()).unwrap();
        let back: BTreeMap<_, _> = y
            .to_long()
            .into_iter()
            .map(|r| ((r.row, r.col, r.dose, r.replicate), r.value))
            .collect();
        let want: BTreeMap<_, _> = recs.iter().map(|&(i, j, t, r, v)| ((i, j, t, r), v)).collect();
        prop_assert_eq!(back, want);
        prop_assert_eq!(y.observed_count(), recs.len());
    }

    #[test]
    fn inner_curve_is_linear_in_the_row(seed in 0u64..500, a in -5.0..5.0f64) {
        let mut rng = seeded(seed);
        let f = FactorState::random(2, 3, 4, 3, 1.0, &mut rng);
        let mut g = f.clone();
        g.w.row_mut(1).mapv_inplace(|x| a * x);
        for j in 0..3 {
            let base = f.inner_curve(1, j).unwrap();
            let scaled = g.inner_curve(1, j).unwrap();
            for (b, s) in base.iter().zip(&scaled) {
                prop_assert!((a * b - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn replicate_order_does_not_matter(vals in prop::collection::vec(0.0..20.0f64, 1..6), theta in 0.1..10.0f64) {
        let fwd = ObservationTensor::from_long(vals.iter().enumerate().map(|(r, &v)| (0, 0, 0, r, v.round()))).unwrap();
        let rev = ObservationTensor::from_long(vals.iter().rev().enumerate().map(|(r, &v)| (0, 0, 0, r, v.round()))).unwrap();
        let (a, b) = (fwd.cell_index(), rev.cell_index());
        for lik in [&GaussianLik { nu2: 0.7 } as &dyn CellLikelihood, &PoissonLik] {
            let (la, lb) = (lik.log_lik(&a.cells[0], theta), lik.log_lik(&b.cells[0], theta));
            prop_assert!((la - lb).abs() < 1e-9 * la.abs().max(1.0));
        }
    }
}

#[test]
fn ragged_replicates_are_supported() {
    let y = ObservationTensor::from_long(vec![(0, 0, 0, 0, 1.0), (0, 0, 0, 1, 2.0), (0, 0, 1, 0, 3.0)]).unwrap();
    assert_eq!(y.dims(), (1, 1, 2, 2));
    assert_eq!(y.replicates(0, 0, 0), vec![1.0, 2.0]);
    assert_eq!(y.replicates(0, 0, 1), vec![3.0]);
    assert_eq!(y.get(0, 0, 1, 1), None);
}

#[test]
fn duplicate_records_are_rejected() {
    let err = ObservationTensor::from_long(vec![(0, 0, 0, 0, 1.0), (0, 0, 0, 0, 3.0)]).unwrap_err();
    assert!(matches!(err, BtfError::DuplicateKey(..)), "{err}");
}

#[test]
fn factor_dimensions_must_agree() {
    let w = Array2::zeros((2, 3));
    let v = ndarray::Array3::zeros((4, 5, 2));
    assert!(FactorState::new(w, v).is_err());
}
