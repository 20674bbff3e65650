//! Generated fixture files: mechanism documents, oracle expectation tables and
//! the sinusoidal actuator log. `mechkit fixtures <dir>` rewrites them.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::Result;
use crate::floating::{assemble, inverse_dynamics, TaskSpec};
use crate::io::emit::{emit_csv, fmt_sig17, ResultTable};
use crate::io::{serialize_log, serialize_mechanism, LogSample, LogSeries};
use crate::mechanisms::{self, ClosureOracle, CrankOracle, DiffOracle, KneeOracle};
use crate::kinematics::forward_kinematics;
use crate::model::MechanismModel;

/// True slider position and the encoder offset of the calibration example [m].
pub const CRANK_CALIBRATION: (f64, f64) = (0.012, 0.01);

/// Amplitude [m], frequency [Hz], duration [s] and rate [Hz] of the CRANK log.
pub const SINE_LOG: (f64, f64, f64, f64) = (0.015, 1.0, 10.0, 1000.0);

/// Sinusoid on every actuated DOF, sampled from t = 0.
pub fn sine_log(model: &MechanismModel, amp: f64, freq: f64, seconds: f64, rate: f64) -> LogSeries {
    let na = model.n_actuated();
    let w = 2.0 * PI * freq;
    let count = (seconds * rate).round() as usize + 1;
    let samples = (0..count)
        .map(|k| {
            let t = k as f64 / rate;
            LogSample {
                time: t,
                pos: DVector::from_element(na, amp * (w * t).sin()),
                vel: DVector::from_element(na, amp * w * (w * t).cos()),
                tau: None,
            }
        })
        .collect();
    LogSeries { names: (0..na).map(|k| model.dof_name(model.m + k).to_string()).collect(), has_tau: false, samples }
}

/// One row per actuated sample: actuated values, the oracle configuration and
/// the oracle mapping Jacobian (row-major, passive by actuated).
pub fn oracle_table(oracle: &dyn ClosureOracle, samples: &[DVector<f64>]) -> Result<ResultTable> {
    let m = oracle.model();
    let na = m.n_actuated();
    let mut cols: Vec<String> = (0..na).map(|k| format!("qa_{}", m.dof_name(m.m + k))).collect();
    cols.extend((0..m.n).map(|i| format!("theta_{}", m.dof_name(i))));
    for i in 0..m.m {
        for k in 0..na {
            cols.push(format!("jm_{}_{}", m.dof_name(i), m.dof_name(m.m + k)));
        }
    }
    let mut t = ResultTable::new(cols);
    for qa in samples {
        let mut row: Vec<f64> = qa.iter().copied().collect();
        row.extend(oracle.configuration(qa)?.iter());
        let jm = oracle.mapping_jacobian(qa)?;
        for i in 0..m.m {
            for k in 0..na {
                row.push(jm[(i, k)]);
            }
        }
        t.push(row);
    }
    Ok(t)
}

/// Actuated grid over `frac` of the limits with `per_axis` points per axis.
pub fn limit_grid(model: &MechanismModel, frac: f64, per_axis: usize) -> Vec<DVector<f64>> {
    let na = model.n_actuated();
    let total = per_axis.pow(na as u32);
    (0..total)
        .map(|code| {
            let mut rem = code;
            DVector::from_fn(na, |k, _| {
                let (lo, hi) = model.dof_limits(model.m + k);
                let i = rem % per_axis;
                rem /= per_axis;
                let u = if per_axis > 1 { i as f64 / (per_axis - 1) as f64 } else { 0.5 };
                frac * (lo + (hi - lo) * u)
            })
        })
        .collect()
}

/// Every fixture as (relative path, contents).
pub fn files() -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (stem, doc) in mechanisms::catalog() {
        out.push((format!("{stem}.mech"), serialize_mechanism(&doc)));
    }
    let crank = mechanisms::model_of(&mechanisms::crank());
    let diff = mechanisms::model_of(&mechanisms::diff());
    let knee = mechanisms::model_of(&mechanisms::knee());
    let tables: [(&str, Box<dyn ClosureOracle>, usize); 3] = [
        ("crank", Box::new(CrankOracle::new(crank.clone())), 21),
        ("diff", Box::new(DiffOracle::new(diff.clone())), 5),
        ("knee", Box::new(KneeOracle::new(knee.clone())), 21),
    ];
    for (stem, oracle, per_axis) in tables {
        let grid = limit_grid(oracle.model(), 0.9, per_axis);
        out.push((format!("{stem}_oracle.csv"), emit_csv(&oracle_table(oracle.as_ref(), &grid)?)));
    }
    let (amp, freq, seconds, rate) = SINE_LOG;
    out.push(("sin1khz.csv".into(), serialize_log(&sine_log(&crank, amp, freq, seconds, rate))));
    out.push(("sin_short.csv".into(), serialize_log(&sine_log(&crank, amp, freq, 0.05, rate))));
    let (cal_log, cal_meas) = crank_calibration(&crank)?;
    out.push(("crank_cal.csv".into(), cal_log));
    out.push(("crank_meas.csv".into(), cal_meas));
    out.push(("minileg_stance.csv".into(), serialize_log(&stance_log(&mechanisms::model_of(&mechanisms::minileg()), 5)?)));
    Ok(out)
}

/// Actuator log reading `true - offset` and the matching absolute crank angle.
pub fn crank_calibration(crank: &MechanismModel) -> Result<(String, String)> {
    let (truth, offset) = CRANK_CALIBRATION;
    let oracle = CrankOracle::new(crank.clone());
    let theta = oracle.configuration(&DVector::from_element(1, truth))?;
    let reading = LogSeries {
        names: vec![crank.dof_name(crank.m).to_string()],
        has_tau: false,
        samples: vec![LogSample { time: 0.0, pos: DVector::from_element(1, truth - offset), vel: DVector::zeros(1), tau: None }],
    };
    let d = crank.dof_index("crank").expect("CRANK has a crank joint");
    Ok((serialize_log(&reading), format!("# format: 1\njoint,value\ncrank,{}\n", fmt_sig17(theta[d]))))
}

/// MINILEG standing at home with the efforts that hold it there.
pub fn stance_log(model: &MechanismModel, rows: usize) -> Result<LogSeries> {
    let s = model.home_state();
    let na = model.n_actuated();
    let dc = assemble(model, &s, &model.contacts)?;
    let kin = forward_kinematics(model, &s)?;
    let r = inverse_dynamics(&dc, &TaskSpec::base(model, &kin, DVector::zeros(6)))?;
    let qa = model.actuated(&s.theta);
    Ok(LogSeries {
        names: (0..na).map(|k| model.dof_name(model.m + k).to_string()).collect(),
        has_tau: true,
        samples: (0..rows)
            .map(|k| LogSample { time: k as f64 * 1e-3, pos: qa.clone(), vel: DVector::zeros(na), tau: Some(r.tau.clone()) })
            .collect(),
    })
}
