use serde::{Deserialize, Serialize};

use super::GaussianBelief;
use crate::{Error, Result};

/// JSON form of a belief: `{customer_id, mean, covariance}`.
///
/// `serde_json` writes the shortest representation that parses back to the
/// same `f64`, so a write/read cycle is lossless.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefRecord {
    pub customer_id: usize,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl BeliefRecord {
    pub fn from_belief(customer_id: usize, belief: &GaussianBelief) -> Self {
        let cov = belief.covariance();
        BeliefRecord {
            customer_id,
            mean: belief.mean().as_slice().to_vec(),
            covariance: (0..cov.nrows())
                .map(|i| cov.row(i).iter().copied().collect())
                .collect(),
        }
    }

    pub fn to_belief(&self) -> Result<GaussianBelief> {
        let n = self.mean.len();
        if self.covariance.len() != n || self.covariance.iter().any(|r| r.len() != n) {
            return Err(Error::invalid(format!(
                "customer {}: covariance must be {n}x{n}",
                self.customer_id
            )));
        }
        let flat: Vec<f64> = self.covariance.iter().flatten().copied().collect();
        GaussianBelief::new(
            nalgebra::DVector::from_vec(self.mean.clone()),
            nalgebra::DMatrix::from_row_slice(n, n, &flat),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(
            mean in proptest::collection::vec(-1e6f64..1e6, 3),
            a in proptest::collection::vec(-3.0f64..3.0, 9),
        ) {
            let a = DMatrix::from_row_slice(3, 3, &a);
            let cov = &a * a.transpose() + DMatrix::identity(3, 3) * 0.1;
            let belief = GaussianBelief::new(DVector::from_vec(mean), cov).unwrap();
            let rec = BeliefRecord::from_belief(7, &belief);
            let text = serde_json::to_string(&rec).unwrap();
            let back: BeliefRecord = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(&back, &rec);
            let b2 = back.to_belief().unwrap();
            prop_assert_eq!(b2.mean(), belief.mean());
            prop_assert_eq!(b2.covariance(), belief.covariance());
        }
    }

    #[test]
    fn rejects_ragged_covariance() {
        let rec = BeliefRecord {
            customer_id: 0,
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 0.0], vec![0.0]],
        };
        assert!(rec.to_belief().is_err());
    }

    #[test]
    fn schema_field_names() {
        let b = GaussianBelief::isotropic(DVector::zeros(2), 1.0).unwrap();
        let v = serde_json::to_value(BeliefRecord::from_belief(3, &b)).unwrap();
        assert_eq!(v["customer_id"], 3);
        assert_eq!(v["mean"], serde_json::json!([0.0, 0.0]));
        assert_eq!(v["covariance"], serde_json::json!([[1.0, 0.0], [0.0, 1.0]]));
    }
}
