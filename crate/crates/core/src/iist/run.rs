use std::io::Write;

use log::info;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{bilinear_resize, to_rgb, Image};
use crate::vggnet::{randomize_weights, VggWeights};

use super::config::IistConfig;
use super::stage::{ist_stage, StageResult};

/// One line of the run trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub k: usize,
    pub inner_iterations: usize,
    pub loss: f64,
    pub content_term: f64,
    pub style_term: f64,
    /// Mean absolute difference to the previous stage output; `None` at k = 0.
    pub diff_to_prev: Option<f64>,
}

impl StageRecord {
    fn from_stage(k: usize, stage: &StageResult, diff_to_prev: Option<f64>) -> Self {
        StageRecord {
            k,
            inner_iterations: stage.inner_iterations,
            loss: stage.final_loss,
            content_term: stage.content_term,
            style_term: stage.style_term,
            diff_to_prev,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Consecutive outputs differed by less than epsilon.
    Converged,
    /// `k` reached `max_outer_iters`.
    MaxOuterIterations,
}

#[derive(Debug, Clone)]
pub struct IistOutput {
    /// Final transformed image.
    pub transformed: Image,
    /// Output of stage 0 alone (plain style transfer).
    pub first_stage: Image,
    /// SAR image resized to the optical grid and replicated to RGB.
    pub prepared_sar: Image,
    pub trace: Vec<StageRecord>,
    pub stop: StopReason,
}

/// Resizes the SAR image onto the optical grid and replicates it to RGB.
pub fn prepare_sar(opt: &Image, sar: &Image) -> Result<Image> {
    let resized = bilinear_resize(sar, opt.height(), opt.width())?;
    Ok(to_rgb(&resized))
}

pub fn iist_run(opt: &Image, sar: &Image, base: &VggWeights<f32>, cfg: &IistConfig) -> Result<IistOutput> {
    iist_run_with(opt, sar, base, cfg, |_| {})
}

/// Runs stage 0 under `base`, then stages `k = 1..=N` under perturbed banks,
/// stopping early once the output moves by less than `epsilon`. `observer`
/// sees every trace record as soon as its stage finishes.
pub fn iist_run_with(
    opt: &Image,
    sar: &Image,
    base: &VggWeights<f32>,
    cfg: &IistConfig,
    mut observer: impl FnMut(&StageRecord),
) -> Result<IistOutput> {
    cfg.validate()?;
    if opt.channels() != 3 {
        return Err(Error::InvalidImage("the optical image must have three channels".into()));
    }
    if cfg.alpha.len() != base.layers().len() {
        return Err(Error::Config(format!(
            "alpha has {} entries but the network has {} convolutions",
            cfg.alpha.len(),
            base.layers().len()
        )));
    }
    let prepared = prepare_sar(opt, sar)?;

    let stage0 = ist_stage(&prepared, &prepared, opt, base, cfg)?;
    let mut trace = vec![StageRecord::from_stage(0, &stage0, None)];
    info!("stage 0: loss {:.6e} after {} iterations", stage0.final_loss, stage0.inner_iterations);
    observer(&trace[0]);
    let first_stage = stage0.image.clone();
    let mut previous = stage0.image;
    let mut stop = StopReason::MaxOuterIterations;
    for k in 1..=cfg.max_outer_iters {
        let weights = randomize_weights(base, &cfg.alpha, cfg.seed, k as u64);
        let stage = ist_stage(&previous, &prepared, opt, &weights, cfg)?;
        let diff = stage.image.mean_abs_diff(&previous)?;
        let record = StageRecord::from_stage(k, &stage, Some(diff));
        info!(
            "stage {k}: loss {:.6e}, {} iterations, diff {:.5}",
            record.loss, record.inner_iterations, diff
        );
        observer(&record);
        trace.push(record);
        previous = stage.image;
        if diff < cfg.epsilon {
            stop = StopReason::Converged;
            break;
        }
    }
    Ok(IistOutput {
        transformed: previous,
        first_stage,
        prepared_sar: prepared,
        trace,
        stop,
    })
}

/// Writes one JSON object per stage.
pub fn write_trace(trace: &[StageRecord], mut out: impl Write) -> std::io::Result<()> {
    for record in trace {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_lines_have_the_documented_keys() {
        let trace = vec![
            StageRecord {
                k: 0,
                inner_iterations: 12,
                loss: 1.5,
                content_term: 0.5,
                style_term: 2.0,
                diff_to_prev: None,
            },
            StageRecord {
                k: 1,
                inner_iterations: 3,
                loss: 1.0,
                content_term: 0.25,
                style_term: 1.5,
                diff_to_prev: Some(0.125),
            },
        ];
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            r#"{"k":0,"inner_iterations":12,"loss":1.5,"content_term":0.5,"style_term":2.0,"diff_to_prev":null}"#
        );
        assert!(lines[1].ends_with(r#""diff_to_prev":0.125}"#));
    }

    #[test]
    fn prepare_resizes_and_replicates() {
        let opt = Image::filled(40, 36, 3, 0.5).unwrap();
        let sar = Image::filled(20, 18, 1, 0.25).unwrap();
        let p = prepare_sar(&opt, &sar).unwrap();
        assert_eq!((p.height(), p.width(), p.channels()), (40, 36, 3));
        assert!(p.data().iter().all(|&v| v == 0.25));
    }
}
