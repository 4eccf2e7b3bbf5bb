use nalgebra::DMatrix;

use super::{LvError, ModelSource, SensitivityModel, TransformerSensitivity, ValidityStamp};

/// Names of the observed quantities and injecting nodes for a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementLayout {
    pub grid: String,
    pub nodes: Vec<String>,
    pub branches: Vec<String>,
    pub injectors: Vec<String>,
}

/// One monitoring sample of deviations from the operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSample {
    pub dv: Vec<f64>,
    pub di: Vec<f64>,
    pub dp: Vec<f64>,
    pub dq: Vec<f64>,
    /// Measured transformer flow change, if metered.
    pub dp_sl: Option<f64>,
    pub dq_sl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub samples: usize,
    pub voltage_rms: Vec<f64>,
    pub current_rms: Vec<f64>,
    /// `(p, q)` residual RMS when transformer coefficients were fitted.
    pub transformer_rms: Option<(f64, f64)>,
}

const RANK_TOL: f64 = 1e-10;

/// Least-squares fit of every observed row on `[ΔP, ΔQ]`, optionally with
/// a ridge term. Transformer coefficients are fitted when every sample
/// carries a transformer measurement, otherwise lossless aggregation is used.
pub fn coefficients_from_measurements(
    layout: &MeasurementLayout,
    samples: &[MeasurementSample],
    ridge: f64,
) -> Result<(SensitivityModel, FitReport), LvError> {
    let (nn, nb, nk) = (layout.nodes.len(), layout.branches.len(), layout.injectors.len());
    let n = samples.len();
    if n < 2 * nk {
        return Err(LvError::Underdetermined { samples: n, required: 2 * nk });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(LvError::NonFinite("ridge".into()));
    }
    let with_tr = samples.iter().all(|s| s.dp_sl.is_some() && s.dq_sl.is_some());
    let ny = nn + nb + if with_tr { 2 } else { 0 };

    let mut x = DMatrix::zeros(n, 2 * nk);
    let mut y = DMatrix::zeros(n, ny);
    for (r, s) in samples.iter().enumerate() {
        if s.dv.len() != nn || s.di.len() != nb || s.dp.len() != nk || s.dq.len() != nk {
            return Err(LvError::DimensionMismatch(format!("sample {r} does not match the layout")));
        }
        let vals = s.dp.iter().chain(&s.dq).chain(&s.dv).chain(&s.di).chain(s.dp_sl.iter()).chain(s.dq_sl.iter());
        if vals.clone().any(|v| !v.is_finite()) {
            return Err(LvError::NonFinite(format!("sample {r}")));
        }
        for k in 0..nk {
            x[(r, k)] = s.dp[k];
            x[(r, nk + k)] = s.dq[k];
        }
        for (c, v) in s.dv.iter().chain(&s.di).enumerate() {
            y[(r, c)] = *v;
        }
        if with_tr {
            y[(r, nn + nb)] = s.dp_sl.unwrap_or_default();
            y[(r, nn + nb + 1)] = s.dq_sl.unwrap_or_default();
        }
    }

    let svd = x.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().expect("u requested"), svd.v_t.as_ref().expect("v_t requested"));
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = RANK_TOL * smax.max(f64::MIN_POSITIVE);
    if ridge == 0.0 {
        let mut deficient = Vec::new();
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s <= tol {
                for c in 0..2 * nk {
                    if vt[(i, c)].abs() > 1e-6 {
                        let name = if c < nk {
                            format!("P:{}", layout.injectors[c])
                        } else {
                            format!("Q:{}", layout.injectors[c - nk])
                        };
                        if !deficient.contains(&name) {
                            deficient.push(name);
                        }
                    }
                }
            }
        }
        if !deficient.is_empty() {
            return Err(LvError::RankDeficient { columns: deficient });
        }
    }
    let inv: Vec<f64> = svd.singular_values.iter().map(|&s| if s > 0.0 { s / (s * s + ridge) } else { 0.0 }).collect();
    // B = V · diag(inv) · Uᵀ · Y, shape (2m × ny)
    let mut uty = u.transpose() * &y;
    for (i, w) in inv.iter().enumerate() {
        uty.row_mut(i).scale_mut(*w);
    }
    let b = vt.transpose() * uty;
    let resid = &y - &x * &b;
    let rms = |c: usize| (resid.column(c).iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();

    let coef = |rows: std::ops::Range<usize>, reactive: bool| {
        let off = if reactive { nk } else { 0 };
        DMatrix::from_fn(rows.len(), nk, |i, k| b[(off + k, rows.start + i)])
    };
    let transformer = if with_tr {
        let (cp, cq) = (nn + nb, nn + nb + 1);
        TransformerSensitivity {
            dp_dp: (0..nk).map(|k| b[(k, cp)]).collect(),
            dp_dq: (0..nk).map(|k| b[(nk + k, cp)]).collect(),
            dq_dp: (0..nk).map(|k| b[(k, cq)]).collect(),
            dq_dq: (0..nk).map(|k| b[(nk + k, cq)]).collect(),
        }
    } else {
        TransformerSensitivity::lossless(nk)
    };
    let model = SensitivityModel {
        grid: layout.grid.clone(),
        nodes: layout.nodes.clone(),
        branches: layout.branches.clone(),
        injectors: layout.injectors.clone(),
        kvp: coef(0..nn, false),
        kvq: coef(0..nn, true),
        kip: coef(nn..nn + nb, false),
        kiq: coef(nn..nn + nb, true),
        transformer,
        stamp: ValidityStamp { step: None, source: ModelSource::Measurements { samples: n } },
    };
    model.validate()?;
    let report = FitReport {
        samples: n,
        voltage_rms: (0..nn).map(rms).collect(),
        current_rms: (nn..nn + nb).map(rms).collect(),
        transformer_rms: with_tr.then(|| (rms(nn + nb), rms(nn + nb + 1))),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const NN: usize = 5;
    const NB: usize = 4;
    const NK: usize = 4;

    fn truth(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        // rows: NN voltages then NB currents; cols: P then Q
        (0..NN + NB).map(|_| (0..2 * NK).map(|_| rng.gen_range(-0.1..0.1)).collect()).collect()
    }

    fn layout() -> MeasurementLayout {
        MeasurementLayout {
            grid: "g".into(),
            nodes: (0..NN).map(|i| format!("n{i}")).collect(),
            branches: (0..NB).map(|i| format!("b{i}")).collect(),
            injectors: (1..=NK).map(|i| format!("n{i}")).collect(),
        }
    }

    fn series(k: &[Vec<f64>], n: usize, sigma: f64, seed: u64) -> Vec<MeasurementSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
        (0..n)
            .map(|_| {
                let dp: Vec<f64> = (0..NK).map(|_| rng.gen_range(-0.05..0.05)).collect();
                let dq: Vec<f64> = (0..NK).map(|_| rng.gen_range(-0.05..0.05)).collect();
                let mut out: Vec<f64> = k
                    .iter()
                    .map(|row| row[..NK].iter().zip(&dp).chain(row[NK..].iter().zip(&dq)).map(|(a, b)| a * b).sum())
                    .collect();
                if sigma > 0.0 {
                    for v in &mut out {
                        *v += noise.sample(&mut rng);
                    }
                }
                let dp_sl = -dp.iter().sum::<f64>();
                let dq_sl = -dq.iter().sum::<f64>();
                MeasurementSample {
                    dv: out[..NN].to_vec(),
                    di: out[NN..].to_vec(),
                    dp,
                    dq,
                    dp_sl: Some(dp_sl),
                    dq_sl: Some(dq_sl),
                }
            })
            .collect()
    }

    fn max_err(m: &SensitivityModel, k: &[Vec<f64>]) -> f64 {
        let mut e: f64 = 0.0;
        for (r, row) in k.iter().enumerate() {
            for c in 0..NK {
                let (gp, gq) =
                    if r < NN { (m.kvp[(r, c)], m.kvq[(r, c)]) } else { (m.kip[(r - NN, c)], m.kiq[(r - NN, c)]) };
                e = e.max((gp - row[c]).abs()).max((gq - row[NK + c]).abs());
            }
        }
        e
    }

    #[test]
    fn noise_free_fit_recovers_map() {
        let k = truth(&mut ChaCha8Rng::seed_from_u64(1));
        let (m, rep) = coefficients_from_measurements(&layout(), &series(&k, 50, 0.0, 2), 0.0).unwrap();
        assert!(max_err(&m, &k) < 1e-9);
        assert!(rep.voltage_rms.iter().all(|r| *r < 1e-12));
        for c in 0..NK {
            assert!((m.transformer.dp_dp[c] + 1.0).abs() < 1e-9);
            assert!(m.transformer.dp_dq[c].abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_samples() {
        let k = truth(&mut ChaCha8Rng::seed_from_u64(1));
        let err = coefficients_from_measurements(&layout(), &series(&k, 3, 0.0, 2), 0.0).unwrap_err();
        assert!(matches!(err, LvError::Underdetermined { samples: 3, required: 8 }));
    }

    #[test]
    fn collinear_injections_reported() {
        let k = truth(&mut ChaCha8Rng::seed_from_u64(1));
        let mut s = series(&k, 40, 0.0, 3);
        for smp in &mut s {
            smp.dp[3] = 2.0 * smp.dp[1];
        }
        match coefficients_from_measurements(&layout(), &s, 0.0) {
            Err(LvError::RankDeficient { columns }) => {
                assert!(columns.contains(&"P:n2".to_string()));
                assert!(columns.contains(&"P:n4".to_string()));
                assert!(!columns.iter().any(|c| c.starts_with("Q:")));
            }
            other => panic!("{other:?}"),
        }
        assert!(coefficients_from_measurements(&layout(), &s, 1e-8).is_ok());
    }

    #[test]
    fn noisy_fit_reports_sigma_and_improves_with_samples() {
        let sigma = 1e-3;
        let k = truth(&mut ChaCha8Rng::seed_from_u64(7));
        let mut errs = Vec::new();
        for n in [50, 400, 3200] {
            let (m, rep) = coefficients_from_measurements(&layout(), &series(&k, n, sigma, 11), 0.0).unwrap();
            let expected = sigma * ((n - 2 * NK) as f64 / n as f64).sqrt();
            let mean = rep.voltage_rms.iter().chain(&rep.current_rms).sum::<f64>() / (NN + NB) as f64;
            assert!((mean / expected - 1.0).abs() < 0.2, "n={n}: rms {mean}");
            errs.push(max_err(&m, &k));
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }
}
