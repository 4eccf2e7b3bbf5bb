use nalgebra::DMatrix;

use super::{LvError, LvOperatingPoint, ModelSource, SensitivityModel, TransformerSensitivity, ValidityStamp};
use crate::grid::{DistflowSolver, FlowState, Network};

/// Loading of a reference LV network: net injections aligned with
/// `Network::nodes` and the voltage magnitude at the LV busbar.
#[derive(Debug, Clone, PartialEq)]
pub struct LvLoading {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub source_v: f64,
}

impl LvLoading {
    pub fn flat(net: &Network) -> Self {
        LvLoading { p: vec![0.0; net.nodes.len()], q: vec![0.0; net.nodes.len()], source_v: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    pub eps: f64,
    /// Differentiate the transformer flow too instead of assuming lossless
    /// aggregation.
    pub transformer_losses: bool,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions { eps: 1e-4, transformer_losses: false }
    }
}

pub fn lv_load_flow(solver: &DistflowSolver, loading: &LvLoading) -> Result<FlowState, LvError> {
    Ok(solver.solve(&loading.p, &loading.q, loading.source_v.powi(2))?)
}

/// Exact LV state at `loading`, expressed as an operating point.
pub fn operating_point(net: &Network, loading: &LvLoading, step: usize) -> Result<LvOperatingPoint, LvError> {
    let solver = DistflowSolver::new(net)?;
    let st = lv_load_flow(&solver, loading)?;
    let v0: Vec<f64> = st.v.iter().map(|v| v.sqrt()).collect();
    Ok(LvOperatingPoint {
        step,
        drop: v0.iter().map(|v| loading.source_v - v).collect(),
        v0,
        i0: st.l.iter().map(|l| l.max(0.0).sqrt()).collect(),
    })
}

/// Central finite differences of node voltage and branch current
/// magnitudes with respect to each non-slack node's P and Q.
pub fn coefficients_from_reference(
    grid: &str,
    net: &Network,
    loading: &LvLoading,
    opts: ReferenceOptions,
) -> Result<SensitivityModel, LvError> {
    if !(opts.eps > 0.0) || !opts.eps.is_finite() {
        return Err(LvError::InvalidPerturbation(opts.eps));
    }
    let solver = DistflowSolver::new(net)?;
    let injectors: Vec<usize> = (0..net.nodes.len()).filter(|&i| net.nodes[i].id != net.slack).collect();
    let (nn, nb, nk) = (net.nodes.len(), net.branches.len(), injectors.len());
    let mut kvp = DMatrix::zeros(nn, nk);
    let mut kvq = DMatrix::zeros(nn, nk);
    let mut kip = DMatrix::zeros(nb, nk);
    let mut kiq = DMatrix::zeros(nb, nk);
    let mut transformer = TransformerSensitivity::lossless(nk);
    let eps = opts.eps;

    for (k, &node) in injectors.iter().enumerate() {
        for reactive in [false, true] {
            let eval = |sign: f64| -> Result<FlowState, LvError> {
                let mut ld = loading.clone();
                if reactive {
                    ld.q[node] += sign * eps;
                } else {
                    ld.p[node] += sign * eps;
                }
                lv_load_flow(&solver, &ld)
            };
            let plus = eval(1.0)?;
            let minus = eval(-1.0)?;
            let (kv, ki) = if reactive { (&mut kvq, &mut kiq) } else { (&mut kvp, &mut kip) };
            for i in 0..nn {
                kv[(i, k)] = (plus.v[i].sqrt() - minus.v[i].sqrt()) / (2.0 * eps);
            }
            for b in 0..nb {
                ki[(b, k)] = (plus.l[b].max(0.0).sqrt() - minus.l[b].max(0.0).sqrt()) / (2.0 * eps);
            }
            if opts.transformer_losses {
                let dp = (plus.slack_p - minus.slack_p) / (2.0 * eps);
                let dq = (plus.slack_q - minus.slack_q) / (2.0 * eps);
                if reactive {
                    transformer.dp_dq[k] = dp;
                    transformer.dq_dq[k] = dq;
                } else {
                    transformer.dp_dp[k] = dp;
                    transformer.dq_dp[k] = dq;
                }
            }
        }
    }

    let model = SensitivityModel {
        grid: grid.to_string(),
        nodes: net.nodes.iter().map(|n| n.id.clone()).collect(),
        branches: net.branches.iter().map(|b| b.id()).collect(),
        injectors: injectors.iter().map(|&i| net.nodes[i].id.clone()).collect(),
        kvp,
        kvq,
        kip,
        kiq,
        transformer,
        stamp: ValidityStamp { step: None, source: ModelSource::Reference { eps } },
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, Node};
    use crate::lv::{predict_state, NodeDelta};

    fn node(id: &str) -> Node {
        Node { id: id.into(), vmin: 0.9, vmax: 1.1 }
    }

    fn line(r: f64, x: f64) -> Network {
        Network {
            base_kva: 1000.0,
            base_kv: 0.4,
            nodes: vec![node("s"), node("a")],
            branches: vec![Branch { from: "s".into(), to: "a".into(), r, x, imax: 1.0 }],
            slack: "s".into(),
            links: vec![],
        }
    }

    fn feeder() -> (Network, LvLoading) {
        let ids = ["s", "a", "b", "c", "d"];
        let net = Network {
            base_kva: 1000.0,
            base_kv: 0.4,
            nodes: ids.iter().map(|i| node(i)).collect(),
            branches: vec![
                Branch { from: "s".into(), to: "a".into(), r: 0.03, x: 0.01, imax: 1.0 },
                Branch { from: "a".into(), to: "b".into(), r: 0.04, x: 0.01, imax: 1.0 },
                Branch { from: "a".into(), to: "c".into(), r: 0.05, x: 0.02, imax: 1.0 },
                Branch { from: "c".into(), to: "d".into(), r: 0.02, x: 0.01, imax: 1.0 },
            ],
            slack: "s".into(),
            links: vec![],
        };
        let loading =
            LvLoading { p: vec![0.0, -0.1, -0.06, -0.08, -0.1], q: vec![0.0, -0.01, 0.0, -0.01, 0.0], source_v: 1.01 };
        (net, loading)
    }

    #[test]
    fn single_line_flat_start() {
        let m = coefficients_from_reference(
            "g",
            &line(0.05, 0.02),
            &LvLoading::flat(&line(0.05, 0.02)),
            ReferenceOptions::default(),
        )
        .unwrap();
        assert!((m.kvp[(1, 0)] - 0.05).abs() < 1e-6, "{}", m.kvp[(1, 0)]);
        assert!((m.kvq[(1, 0)] - 0.02).abs() < 1e-6);
        assert_eq!(m.kvp[(0, 0)], 0.0);
        assert_eq!(m.kvq[(0, 0)], 0.0);
    }

    #[test]
    fn zero_perturbation_rejected() {
        let net = line(0.05, 0.02);
        let opts = ReferenceOptions { eps: 0.0, ..Default::default() };
        assert!(matches!(
            coefficients_from_reference("g", &net, &LvLoading::flat(&net), opts),
            Err(LvError::InvalidPerturbation(_))
        ));
    }

    #[test]
    fn oracle_failure_surfaces() {
        let net = line(0.05, 0.02);
        let mut ld = LvLoading::flat(&net);
        ld.p[1] = -20.0;
        assert!(matches!(
            coefficients_from_reference("g", &net, &ld, ReferenceOptions::default()),
            Err(LvError::OracleFailure(_))
        ));
    }

    #[test]
    fn deterministic() {
        let (net, ld) = feeder();
        let a = coefficients_from_reference("g", &net, &ld, ReferenceOptions::default()).unwrap();
        let b = coefficients_from_reference("g", &net, &ld, ReferenceOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn loss_sensitivity_close_to_lossless() {
        let (net, ld) = feeder();
        let opts = ReferenceOptions { transformer_losses: true, ..Default::default() };
        let m = coefficients_from_reference("g", &net, &ld, opts).unwrap();
        for k in 0..m.injectors.len() {
            assert!((m.transformer.dp_dp[k] + 1.0).abs() < 0.05);
            assert!(m.transformer.dp_dq[k].abs() < 0.05);
        }
    }

    /// Prediction error against the exact load flow for a perturbation of
    /// size `delta` spread over all injectors.
    fn prediction_error(delta: f64) -> f64 {
        let (net, ld) = feeder();
        let m =
            coefficients_from_reference("g", &net, &ld, ReferenceOptions { eps: 1e-5, ..Default::default() }).unwrap();
        let op = operating_point(&net, &ld, 0).unwrap();
        let pattern = [(1, 1.0, 0.3), (2, -0.5, 0.0), (3, 0.8, -0.4), (4, 1.0, 0.2)];
        let deltas: Vec<NodeDelta> =
            pattern.iter().map(|&(i, a, b)| NodeDelta::new(net.nodes[i].id.clone(), a * delta, b * delta)).collect();
        let pred = predict_state(&m, &op, &deltas).unwrap();
        let mut ld2 = ld.clone();
        for &(i, a, b) in &pattern {
            ld2.p[i] += a * delta;
            ld2.q[i] += b * delta;
        }
        let truth = operating_point(&net, &ld2, 0).unwrap();
        pred.v.iter().zip(&truth.v0).chain(pred.i.iter().zip(&truth.i0)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn truncation_error_is_quadratic() {
        for delta in [0.02, 0.01] {
            let ratio = prediction_error(delta) / prediction_error(delta / 2.0);
            assert!((3.5..=4.5).contains(&ratio), "delta {delta}: ratio {ratio}");
        }
    }
}
