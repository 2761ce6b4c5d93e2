//! NB-to-HB feature regression: normalization, the MLP and the GMM
//! mapping, and the serializable model wrapping either.

pub mod gmm;
pub mod mlp;

use serde::{Deserialize, Serialize};

use crate::features::{FeaturePair, HB_DIM, NB_DIM};
use crate::pipeline::{FilterForm, HbEstimate, HbFilter, HbSource};
use crate::signal::LpcModel;
use crate::{AbeError, Result};

pub use gmm::{Gmm, GmmConfig};
pub use mlp::{Activation, Layer, Mlp, TrainConfig};

pub const FORMAT_VERSION: u32 = 1;
pub const STD_FLOOR: f64 = 1e-8;

/// Row-major matrix serialization as `{rows, cols, data}`.
pub(crate) mod serde_mat {
    use crate::linalg::Mat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    impl From<&Mat> for Repr {
        fn from(m: &Mat) -> Self {
            Repr {
                rows: m.nrows(),
                cols: m.ncols(),
                data: m.transpose().as_slice().to_vec(),
            }
        }
    }

    impl TryFrom<Repr> for Mat {
        type Error = String;
        fn try_from(r: Repr) -> Result<Mat, String> {
            if r.rows * r.cols != r.data.len() {
                return Err(format!("matrix {}x{} with {} entries", r.rows, r.cols, r.data.len()));
            }
            Ok(Mat::from_row_slice(r.rows, r.cols, &r.data))
        }
    }

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        Repr::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        Mat::try_from(Repr::deserialize(d)?).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(m: &[Mat], s: S) -> Result<S::Ok, S::Error> {
            m.iter().map(Repr::from).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
            Vec::<Repr>::deserialize(d)?
                .into_iter()
                .map(|r| Mat::try_from(r).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

/// Per-dimension mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl MvnStats {
    pub fn fit(vectors: &[Vec<f64>]) -> Result<Self> {
        if vectors.len() < 2 {
            return Err(AbeError::Config("normalization needs at least two vectors".into()));
        }
        let dim = vectors[0].len();
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(AbeError::Dimension("vectors of unequal length".into()));
        }
        let n = vectors.len() as f64;
        let mean: Vec<f64> = (0..dim).map(|i| vectors.iter().map(|v| v[i]).sum::<f64>() / n).collect();
        let std = (0..dim)
            .map(|i| {
                let var = vectors.iter().map(|v| (v[i] - mean[i]).powi(2)).sum::<f64>() / n;
                var.sqrt().max(STD_FLOOR)
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(AbeError::Dimension(format!(
                "vector of length {} for normalization of dim {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect())
    }

    pub fn invert(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Mlp,
    Gmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub mlp: Option<Mlp>,
    pub gmm: Option<Gmm>,
    pub mvn_in: MvnStats,
    pub mvn_out: MvnStats,
    pub mlp_config: Option<TrainConfig>,
    pub gmm_config: Option<GmmConfig>,
    /// Mean training loss per epoch (MLP) or log-likelihood per EM
    /// iteration (GMM).
    pub history: Vec<f64>,
    pub training_pairs: usize,
}

fn normalized(pairs: &[FeaturePair]) -> Result<(MvnStats, MvnStats, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if pairs.is_empty() {
        return Err(AbeError::Empty("training pairs"));
    }
    let xs: Vec<Vec<f64>> = pairs.iter().map(|p| p.nb.clone()).collect();
    let ys: Vec<Vec<f64>> = pairs.iter().map(|p| p.target()).collect();
    let mvn_in = MvnStats::fit(&xs)?;
    let mvn_out = MvnStats::fit(&ys)?;
    let xs = xs.iter().map(|x| mvn_in.apply(x)).collect::<Result<_>>()?;
    let ys = ys.iter().map(|y| mvn_out.apply(y)).collect::<Result<_>>()?;
    Ok((mvn_in, mvn_out, xs, ys))
}

pub fn train_mlp(pairs: &[FeaturePair], cfg: &TrainConfig) -> Result<RegressorModel> {
    let (mvn_in, mvn_out, xs, ys) = normalized(pairs)?;
    let (net, history) = mlp::train(&xs, &ys, cfg)?;
    Ok(RegressorModel {
        format_version: FORMAT_VERSION,
        kind: ModelKind::Mlp,
        mlp: Some(net),
        gmm: None,
        mvn_in,
        mvn_out,
        mlp_config: Some(*cfg),
        gmm_config: None,
        history,
        training_pairs: pairs.len(),
    })
}

pub fn train_gmm(pairs: &[FeaturePair], cfg: &GmmConfig) -> Result<RegressorModel> {
    let (mvn_in, mvn_out, xs, ys) = normalized(pairs)?;
    let joint: Vec<Vec<f64>> = xs.iter().zip(&ys).map(|(x, y)| x.iter().chain(y).copied().collect()).collect();
    let (g, history) = gmm::fit(&joint, NB_DIM, cfg)?;
    Ok(RegressorModel {
        format_version: FORMAT_VERSION,
        kind: ModelKind::Gmm,
        mlp: None,
        gmm: Some(g),
        mvn_in,
        mvn_out,
        mlp_config: None,
        gmm_config: Some(*cfg),
        history,
        training_pairs: pairs.len(),
    })
}

impl RegressorModel {
    /// Structural checks after loading.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(AbeError::Model(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.mvn_in.dim() != NB_DIM || self.mvn_out.dim() != HB_DIM + 1 {
            return Err(AbeError::Model("normalization dims do not match the feature layout".into()));
        }
        match (self.kind, &self.mlp, &self.gmm) {
            (ModelKind::Mlp, Some(net), _) => {
                net.validate()?;
                if net.inputs() != NB_DIM || net.outputs() != HB_DIM + 1 {
                    return Err(AbeError::Model("network dims do not match the feature layout".into()));
                }
            }
            (ModelKind::Gmm, _, Some(g)) => {
                if g.components() == 0 || g.input_dim != NB_DIM {
                    return Err(AbeError::Model("GMM layout does not match the features".into()));
                }
                if g.means.iter().any(|m| m.len() != NB_DIM + HB_DIM + 1) {
                    return Err(AbeError::Model("GMM mean dims do not match".into()));
                }
            }
            _ => return Err(AbeError::Model("model has no trained parameters".into())),
        }
        Ok(())
    }

    /// Predicted 21-tap HB filter and log-energy ratio for an NB LPC vector.
    pub fn predict_hb(&self, nb: &[f64]) -> Result<(Vec<f64>, f64)> {
        if nb.len() != NB_DIM {
            return Err(AbeError::Dimension(format!("NB feature has {} dims, expected {NB_DIM}", nb.len())));
        }
        let x = self.mvn_in.apply(nb)?;
        let y = match (self.kind, &self.mlp, &self.gmm) {
            (ModelKind::Mlp, Some(net), _) => net.predict(&crate::linalg::Mat::from_column_slice(NB_DIM, 1, &x)).as_slice().to_vec(),
            (ModelKind::Gmm, _, Some(g)) => g.conditional_mean(&x)?,
            _ => return Err(AbeError::Model("model has no trained parameters".into())),
        };
        let mut out = self.mvn_out.invert(&y)?;
        let g1 = out.pop().expect("target has the gain as last entry");
        Ok((out, g1))
    }
}

impl HbSource for RegressorModel {
    fn estimate(&self, _: usize, _: &[f64], lpc: &LpcModel, _: FilterForm) -> Result<Option<HbEstimate>> {
        let (hb, g1) = self.predict_hb(&lpc.coeffs)?;
        Ok(Some(HbEstimate {
            filter: HbFilter::Fir(hb),
            g1,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pairs(n: usize, seed: u64) -> Vec<FeaturePair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let nb: Vec<f64> = (0..NB_DIM).map(|_| rng.random::<f64>() - 0.5).collect();
                let hb: Vec<f64> = (0..HB_DIM).map(|i| nb[i % NB_DIM] * 0.5 + 0.01 * i as f64).collect();
                let g1 = nb.iter().sum::<f64>() * 0.1 - 1.0;
                FeaturePair::new(nb, hb, g1).unwrap()
            })
            .collect()
    }

    #[test]
    fn mvn_standardizes_fitted_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random::<f64>() * 3.0 + 1.0, rng.random::<f64>() - 7.0]).collect();
        let s = MvnStats::fit(&v).unwrap();
        let z: Vec<Vec<f64>> = v.iter().map(|x| s.apply(x).unwrap()).collect();
        for i in 0..2 {
            let m = z.iter().map(|x| x[i]).sum::<f64>() / 50.0;
            let var = z.iter().map(|x| (x[i] - m).powi(2)).sum::<f64>() / 50.0;
            assert!(m.abs() < 1e-10 && (var - 1.0).abs() < 1e-10);
        }
        assert!(s.apply(&[1.0]).is_err());
        assert!(MvnStats::fit(&v[..1]).is_err());
    }

    #[test]
    fn mvn_constant_dimension_is_floored() {
        let v = vec![vec![2.0, 1.0], vec![2.0, 3.0], vec![2.0, 5.0]];
        let s = MvnStats::fit(&v).unwrap();
        assert_eq!(s.std[0], STD_FLOOR);
        assert_eq!(s.apply(&[2.0, 3.0]).unwrap()[0], 0.0);
    }

    proptest! {
        #[test]
        fn mvn_round_trip(v in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 4), 2..20), x in proptest::collection::vec(-1e3f64..1e3, 4)) {
            let s = MvnStats::fit(&v).unwrap();
            let back = s.invert(&s.apply(&x).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn mlp_model_shapes_and_serde() {
        let cfg = TrainConfig {
            hidden_layers: 2,
            hidden_units: 16,
            epochs: 3,
            batch_size: 32,
            ..Default::default()
        };
        let model = train_mlp(&pairs(100, 1), &cfg).unwrap();
        model.validate().unwrap();
        let (hb, g1) = model.predict_hb(&[0.1; NB_DIM]).unwrap();
        assert_eq!(hb.len(), HB_DIM);
        assert!(g1.is_finite());
        let (hb, g1) = (hb.clone(), g1);
        assert!(model.predict_hb(&[0.1; 3]).is_err());

        let json = serde_json::to_string(&model).unwrap();
        let back: RegressorModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.predict_hb(&[0.1; NB_DIM]).unwrap(), (hb, g1));
        let mut bad = model.clone();
        bad.format_version = 99;
        assert!(bad.validate().is_err());
        assert!(train_mlp(&[], &cfg).is_err());
    }

    #[test]
    fn gmm_model_predicts_mean_without_correlation() {
        // Targets independent of inputs: single-Gaussian conditional mean is
        // the target mean, up to sampling cross-covariance.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<FeaturePair> = (0..400)
            .map(|_| {
                let nb: Vec<f64> = (0..NB_DIM).map(|_| rng.random::<f64>()).collect();
                let hb: Vec<f64> = (0..HB_DIM).map(|_| 2.0 + 0.1 * rng.random::<f64>()).collect();
                FeaturePair::new(nb, hb, -0.5).unwrap()
            })
            .collect();
        let model = train_gmm(&data, &GmmConfig { components: 1, ..Default::default() }).unwrap();
        model.validate().unwrap();
        let (hb, g1) = model.predict_hb(&[0.5; NB_DIM]).unwrap();
        assert_eq!(hb.len(), HB_DIM);
        assert!((g1 + 0.5).abs() < 1e-6);
        for v in hb {
            assert!((v - 2.05).abs() < 0.02, "{v}");
        }
    }
}
