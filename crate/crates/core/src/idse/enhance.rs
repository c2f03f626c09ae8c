use std::io::Write;

use serde::{Deserialize, Serialize};

use super::aesthetic::{AestheticPlan, AestheticReference};
use super::code::CodeLossPlan;
use super::LossConfig;
use crate::error::{Error, Result};
use crate::idrs::Blueprint;
use crate::raster::{GrayImage, L_MAX};
use crate::scanner::count_errors;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const STOP_WINDOW: usize = 20;
const STOP_REL_CHANGE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub l_code: f64,
    pub l_aesthetic: f64,
    pub e: usize,
    pub e_f: usize,
}

#[derive(Debug, Clone)]
pub struct EnhanceOutcome {
    /// Final image on 8-bit levels; rounding never flips a module the last iterate read
    /// correctly.
    pub image: GrayImage,
    /// One row per evaluated iterate; the last row describes `image`.
    pub trace: Vec<TraceRow>,
    pub stopped_early: bool,
}

impl EnhanceOutcome {
    pub fn final_row(&self) -> &TraceRow {
        self.trace.last().expect("trace has at least the final row")
    }

    /// Trace as JSON lines.
    pub fn write_trace(&self, mut out: impl Write) -> Result<()> {
        for row in &self.trace {
            serde_json::to_writer(&mut out, row)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

struct Objective<'a> {
    code: CodeLossPlan,
    aesthetic: AestheticPlan,
    blueprint: &'a Blueprint,
    spec: crate::qr::QrSpec,
    grad_a: Vec<f64>,
}

impl Objective<'_> {
    fn row(&mut self, iteration: usize, z: &[f64], grad: &mut [f64]) -> Result<TraceRow> {
        let l_code = self.code.evaluate(z, grad)?;
        let l_aesthetic = self.aesthetic.evaluate(z, &mut self.grad_a)?;
        grad.iter_mut().zip(&self.grad_a).for_each(|(g, a)| *g += a);
        let read = self.code.readout(z)?;
        let report = count_errors(&read, &self.blueprint.target_matrix, &self.blueprint.regions, &self.spec)?;
        Ok(TraceRow { iteration, loss: l_code + l_aesthetic, l_code, l_aesthetic, e: report.e, e_f: report.e_f })
    }
}

/// Adam descent on the image toward `argmin L_c + L_a`, starting from `start`.
///
/// Pixels are optimized on a `[0, 1]` scale and clamped after every step. `e` and `e_f`
/// in the trace count modules read by the simulated decoder (each module sampled with
/// its own kernel) against the blueprint target. Stops early once `e = 0` and the total
/// loss has changed by less than `1e-4` (relative) over the last 20 iterations.
pub fn enhance(
    start: &GrayImage,
    blueprint: &Blueprint,
    reference: &AestheticReference,
    config: &LossConfig,
) -> Result<EnhanceOutcome> {
    config.validate()?;
    if !start.same_size(&blueprint.image) {
        return Err(Error::Parameter("start image and blueprint differ in size".into()));
    }
    let (w, h) = (start.width(), start.height());
    let mut obj = Objective {
        code: CodeLossPlan::new(blueprint, config)?,
        aesthetic: AestheticPlan::new(reference, w, h, config)?,
        blueprint,
        spec: blueprint.spec()?,
        grad_a: vec![0.0; w * h],
    };
    let mut z: Vec<f64> = start.data().iter().map(|v| (v / L_MAX).clamp(0.0, 1.0)).collect();
    let mut grad = vec![0.0; z.len()];
    let mut m = vec![0.0; z.len()];
    let mut v = vec![0.0; z.len()];
    let mut trace: Vec<TraceRow> = Vec::with_capacity(config.iterations + 1);
    let mut stopped_early = false;

    for t in 0..config.iterations {
        let row = obj.row(t, &z, &mut grad)?;
        if !row.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { iteration: t });
        }
        let converged = config.early_stop
            && row.e == 0
            && t >= STOP_WINDOW
            && {
                let past = trace[t - STOP_WINDOW].loss;
                (row.loss - past).abs() <= STOP_REL_CHANGE * past.abs().max(f64::MIN_POSITIVE)
            };
        trace.push(row);
        if converged {
            stopped_early = true;
            break;
        }
        let step = t as i32 + 1;
        let (c1, c2) = (1.0 - BETA1.powi(step), 1.0 - BETA2.powi(step));
        for i in 0..z.len() {
            let g = grad[i];
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
            let update = config.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            z[i] = (z[i] - update).clamp(0.0, 1.0);
        }
    }

    let zq = obj.code.quantize(&z)?;
    let image = GrayImage::from_vec(w, h, zq.iter().map(|p| (p * L_MAX).round()).collect())?;
    let last = obj.row(trace.len(), &zq, &mut grad)?;
    trace.push(last);
    Ok(EnhanceOutcome { image, trace, stopped_early })
}
