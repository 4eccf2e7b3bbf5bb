//! Model-less LV grids: a linear map from nodal injection changes to node
//! voltage and branch current changes around a measured operating point.
//!
//! Coefficients can come from a reference LV model (central differences on
//! the exact load flow, [`coefficients_from_reference`]) or straight from
//! monitoring data ([`coefficients_from_measurements`]). Voltages and
//! currents are magnitudes in p.u.; injections are p.u. on the system base
//! power, generation positive.

mod estimate;
mod reference;

use nalgebra::DMatrix;

use crate::grid::GridError;

pub use estimate::{coefficients_from_measurements, FitReport, MeasurementLayout, MeasurementSample};
pub use reference::{coefficients_from_reference, lv_load_flow, operating_point, LvLoading, ReferenceOptions};

#[derive(Debug, thiserror::Error)]
pub enum LvError {
    #[error("perturbation must be positive, got {0}")]
    InvalidPerturbation(f64),
    #[error("LV load flow failed: {0}")]
    OracleFailure(#[from] GridError),
    #[error("{samples} samples cannot determine {required} coefficients per row")]
    Underdetermined { samples: usize, required: usize },
    #[error("collinear injections; deficient columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("node `{0}` is not an injector of this model")]
    UnknownNode(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// Derivatives of the active/reactive power drawn by the LV grid from the
/// MV/LV transformer with respect to each injector's P and Q.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerSensitivity {
    pub dp_dp: Vec<f64>,
    pub dp_dq: Vec<f64>,
    pub dq_dp: Vec<f64>,
    pub dq_dq: Vec<f64>,
}

impl TransformerSensitivity {
    /// Lossless aggregation: every extra kW injected is a kW less drawn.
    pub fn lossless(n: usize) -> Self {
        TransformerSensitivity { dp_dp: vec![-1.0; n], dp_dq: vec![0.0; n], dq_dp: vec![0.0; n], dq_dq: vec![-1.0; n] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Reference { eps: f64 },
    Measurements { samples: usize },
    Imported,
}

/// Where and around what the coefficients were obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityStamp {
    pub step: Option<usize>,
    pub source: ModelSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityModel {
    pub grid: String,
    /// Observed node voltages (rows of `kvp`/`kvq`).
    pub nodes: Vec<String>,
    /// Observed branch currents (rows of `kip`/`kiq`).
    pub branches: Vec<String>,
    /// Injecting nodes (columns).
    pub injectors: Vec<String>,
    pub kvp: DMatrix<f64>,
    pub kvq: DMatrix<f64>,
    pub kip: DMatrix<f64>,
    pub kiq: DMatrix<f64>,
    pub transformer: TransformerSensitivity,
    pub stamp: ValidityStamp,
}

impl SensitivityModel {
    pub fn validate(&self) -> Result<(), LvError> {
        let (nn, nb, nk) = (self.nodes.len(), self.branches.len(), self.injectors.len());
        for (name, m, rows) in
            [("kvp", &self.kvp, nn), ("kvq", &self.kvq, nn), ("kip", &self.kip, nb), ("kiq", &self.kiq, nb)]
        {
            if m.nrows() != rows || m.ncols() != nk {
                return Err(LvError::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {rows}x{nk}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(LvError::NonFinite(name.to_string()));
            }
        }
        let t = &self.transformer;
        for (name, v) in [("dp_dp", &t.dp_dp), ("dp_dq", &t.dp_dq), ("dq_dp", &t.dq_dp), ("dq_dq", &t.dq_dq)] {
            if v.len() != nk {
                return Err(LvError::DimensionMismatch(format!("transformer {name} has {} entries", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(LvError::NonFinite(format!("transformer {name}")));
            }
        }
        Ok(())
    }

    /// Non-fatal oddities: negative self-sensitivity of voltage to active
    /// injection, which resistive LV feeders should not show.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (k, inj) in self.injectors.iter().enumerate() {
            if let Some(i) = self.nodes.iter().position(|n| n == inj) {
                if self.kvp[(i, k)] < 0.0 {
                    out.push(format!("{}: K_VP at node `{inj}` is negative ({:.3e})", self.grid, self.kvp[(i, k)]));
                }
            }
        }
        out
    }

    pub fn injector_index(&self, node: &str) -> Option<usize> {
        self.injectors.iter().position(|n| n == node)
    }

    pub fn node_index(&self, node: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == node)
    }

    /// Dense (ΔP, ΔQ) vectors over the injectors.
    pub fn delta_vectors(&self, deltas: &[NodeDelta]) -> Result<(Vec<f64>, Vec<f64>), LvError> {
        let mut dp = vec![0.0; self.injectors.len()];
        let mut dq = vec![0.0; self.injectors.len()];
        for d in deltas {
            let k = self.injector_index(&d.node).ok_or_else(|| LvError::UnknownNode(d.node.clone()))?;
            dp[k] += d.dp;
            dq[k] += d.dq;
        }
        Ok((dp, dq))
    }
}

/// Measured LV operating point the coefficients are linearised around.
/// Vectors align with the model's `nodes` / `branches`.
#[derive(Debug, Clone, PartialEq)]
pub struct LvOperatingPoint {
    pub step: usize,
    pub v0: Vec<f64>,
    /// Current magnitudes; a point shifted along the linear model can carry
    /// negative values past a flow reversal.
    pub i0: Vec<f64>,
    /// Voltage drop of each LV node below the transformer primary voltage.
    pub drop: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDelta {
    pub node: String,
    pub dp: f64,
    pub dq: f64,
}

impl NodeDelta {
    pub fn new(node: impl Into<String>, dp: f64, dq: f64) -> Self {
        NodeDelta { node: node.into(), dp, dq }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LvState {
    pub v: Vec<f64>,
    pub i: Vec<f64>,
    /// Change of active power drawn through the MV/LV transformer.
    pub dp_sl: f64,
    pub dq_sl: f64,
}

/// Affine evaluation `V = V₀ + K_VP·ΔP + K_VQ·ΔQ` (same for currents) and
/// the transformer flow change.
pub fn predict_state(
    model: &SensitivityModel,
    op: &LvOperatingPoint,
    deltas: &[NodeDelta],
) -> Result<LvState, LvError> {
    let (dp, dq) = model.delta_vectors(deltas)?;
    if op.v0.len() != model.nodes.len() || op.i0.len() != model.branches.len() {
        return Err(LvError::DimensionMismatch("operating point does not match model".into()));
    }
    let dp_v = nalgebra::DVector::from_column_slice(&dp);
    let dq_v = nalgebra::DVector::from_column_slice(&dq);
    let dv = &model.kvp * &dp_v + &model.kvq * &dq_v;
    let di = &model.kip * &dp_v + &model.kiq * &dq_v;
    let t = &model.transformer;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    Ok(LvState {
        v: op.v0.iter().zip(dv.iter()).map(|(a, b)| a + b).collect(),
        i: op.i0.iter().zip(di.iter()).map(|(a, b)| a + b).collect(),
        dp_sl: dot(&t.dp_dp, &dp) + dot(&t.dp_dq, &dq),
        dq_sl: dot(&t.dq_dp, &dp) + dot(&t.dq_dq, &dq),
    })
}

/// LV voltage at zero flexibility from the squared MV voltage at the
/// transformer, using the tangent of √v at v = 1.
pub fn couple_lv_voltage(v_mv: f64, drop: f64) -> f64 {
    0.5 * (v_mv + 1.0) - drop
}

/// True when any injector moves further than `radius` (p.u.) in P or Q.
pub fn exceeds_trust_radius(dp: &[f64], dq: &[f64], radius: f64) -> bool {
    dp.iter().chain(dq).any(|d| d.abs() > radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model() -> (SensitivityModel, LvOperatingPoint) {
        let kvp = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.05, 0.05, 0.05, 0.09]);
        let kvq = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.02, 0.02, 0.02, 0.04]);
        let kip = DMatrix::from_row_slice(2, 2, &[-0.9, -1.0, 0.0, -1.0]);
        let kiq = DMatrix::from_row_slice(2, 2, &[-0.3, -0.3, 0.0, -0.3]);
        let m = SensitivityModel {
            grid: "g".into(),
            nodes: vec!["t".into(), "a".into(), "b".into()],
            branches: vec!["t-a".into(), "a-b".into()],
            injectors: vec!["a".into(), "b".into()],
            kvp,
            kvq,
            kip,
            kiq,
            transformer: TransformerSensitivity::lossless(2),
            stamp: ValidityStamp { step: None, source: ModelSource::Imported },
        };
        let op = LvOperatingPoint {
            step: 0,
            v0: vec![1.0, 0.99, 0.985],
            i0: vec![0.05, 0.02],
            drop: vec![0.0, 0.01, 0.015],
        };
        (m, op)
    }

    #[test]
    fn zero_delta_returns_operating_point() {
        let (m, op) = model();
        let s = predict_state(&m, &op, &[]).unwrap();
        assert_eq!(s.v, op.v0);
        assert_eq!(s.i, op.i0);
        assert_eq!((s.dp_sl, s.dq_sl), (0.0, 0.0));
    }

    #[test]
    fn single_injection_scales_column() {
        let (m, op) = model();
        let s = predict_state(&m, &op, &[NodeDelta::new("b", 0.01, 0.0)]).unwrap();
        for i in 0..3 {
            assert!((s.v[i] - op.v0[i] - 0.01 * m.kvp[(i, 1)]).abs() < 1e-15);
        }
        assert!((s.dp_sl + 0.01).abs() < 1e-15);
    }

    #[test]
    fn unknown_node_rejected() {
        let (m, op) = model();
        assert!(matches!(predict_state(&m, &op, &[NodeDelta::new("zz", 0.1, 0.0)]), Err(LvError::UnknownNode(_))));
    }

    #[test]
    fn coupling_examples() {
        assert!((couple_lv_voltage(1.0, 0.02) - 0.98).abs() < 1e-15);
        let err = (couple_lv_voltage(0.9801, 0.0) - 0.99f64).abs();
        assert!((err - 5.0e-5).abs() < 1e-9, "{err}");
        let err = (couple_lv_voltage(0.81, 0.0) - 0.9f64).abs();
        assert!((err - 5.0e-3).abs() < 1e-12, "{err}");
    }

    #[test]
    fn negative_self_sensitivity_warns() {
        let (mut m, _) = model();
        m.kvp[(1, 0)] = -0.01;
        assert_eq!(m.warnings().len(), 1);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn bad_dimensions_rejected() {
        let (mut m, _) = model();
        m.kip = DMatrix::zeros(3, 2);
        assert!(matches!(m.validate(), Err(LvError::DimensionMismatch(_))));
    }

    proptest! {
        #[test]
        fn prediction_is_affine(a in -0.05f64..0.05, b in -0.05f64..0.05, c in -0.05f64..0.05, d in -0.05f64..0.05) {
            let (m, op) = model();
            let d1 = [NodeDelta::new("a", a, b)];
            let d2 = [NodeDelta::new("b", c, d), NodeDelta::new("a", 0.0, c)];
            let both = [NodeDelta::new("a", a, b + c), NodeDelta::new("b", c, d)];
            let s1 = predict_state(&m, &op, &d1).unwrap();
            let s2 = predict_state(&m, &op, &d2).unwrap();
            let s12 = predict_state(&m, &op, &both).unwrap();
            for i in 0..3 {
                prop_assert!((s1.v[i] + s2.v[i] - op.v0[i] - s12.v[i]).abs() < 1e-14);
            }
            for i in 0..2 {
                prop_assert!((s1.i[i] + s2.i[i] - op.i0[i] - s12.i[i]).abs() < 1e-14);
            }
        }

        #[test]
        fn coupling_error_bounded(v in 0.81f64..1.21) {
            prop_assert!((couple_lv_voltage(v, 0.0) - v.sqrt()).abs() <= 5.1e-3);
        }
    }
}
