use log::debug;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::tensor::Tensor;
use crate::vggnet::VggWeights;

use super::config::IistConfig;
use super::lbfgs::{lbfgs_minimize, Evaluation, Termination};
use super::loss::{loss_and_grad, loss_only, Targets};

/// Output of one style-transfer stage.
#[derive(Debug, Clone)]
pub struct StageResult {
    /// Optimized image, projected onto `[0, 1]`.
    pub image: Image,
    /// Loss of `image` (after projection).
    pub final_loss: f64,
    pub content_term: f64,
    pub style_term: f64,
    /// Loss of the initial image.
    pub initial_loss: f64,
    pub inner_iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Accepted L-BFGS losses (before projection).
    pub loss_history: Vec<f64>,
}

/// Reflects `v` into `[0, 1]` (period 2) and returns the slope there.
#[inline]
fn fold(v: f64) -> (f64, f64) {
    let m = v.rem_euclid(2.0);
    if m <= 1.0 {
        (m, 1.0)
    } else {
        (2.0 - m, -1.0)
    }
}

/// Minimizes the two-term loss from `init`.
///
/// The content target comes from `sar_for_content` and the style target from
/// `opt_for_style`, both under `weights`. The optimizer runs unconstrained
/// over pixel values that are reflected into `[0, 1]` before every
/// evaluation, so it never scores an out-of-range image. The result is
/// clamped to `[0, 1]`, and if the loss ends above that of `init` the initial
/// image is returned instead.
pub fn ist_stage(
    init: &Image,
    sar_for_content: &Image,
    opt_for_style: &Image,
    weights: &VggWeights<f32>,
    cfg: &IistConfig,
) -> Result<StageResult> {
    if !init.same_dims(sar_for_content) || !init.same_dims(opt_for_style) {
        return Err(Error::Shape(
            "initial, content and style images must share dimensions".into(),
        ));
    }
    if init.channels() != 3 {
        return Err(Error::InvalidImage("stage images must have three channels".into()));
    }
    let mode = cfg.pooling;
    let targets = Targets::extract(
        weights,
        &sar_for_content.to_tensor(),
        &opt_for_style.to_tensor(),
        cfg.content_layer,
        mode,
    )?;
    let start = init.to_tensor::<f32>();
    let (c, h, w) = start.shape();
    let objective = |x: &[f64]| -> Result<Evaluation> {
        let t = Tensor::from_vec(c, h, w, x.iter().map(|&v| fold(v).0 as f32).collect())?;
        let e = loss_and_grad(&t, &targets, weights, cfg.lambda_c, mode)?;
        Ok(Evaluation {
            value: e.terms.loss,
            gradient: e.grad.data().iter().zip(x).map(|(&g, &v)| g as f64 * fold(v).1).collect(),
        })
    };
    let x0: Vec<f64> = start.data().iter().map(|&v| v as f64).collect();
    let report = lbfgs_minimize(objective, x0, &cfg.lbfgs)?;
    let initial_loss = report.history[0];
    debug!(
        "stage: {} iterations, {} evaluations, loss {:.6e} -> {:.6e} ({:?})",
        report.iterations, report.evaluations, initial_loss, report.value, report.termination
    );

    let optimized = Tensor::from_vec(c, h, w, report.x.iter().map(|&v| fold(v).0 as f32).collect())?;
    let projected = Image::from_tensor_clamped(&optimized)?;
    let mut image = projected;
    let mut terms = loss_only(&image.to_tensor(), &targets, weights, cfg.lambda_c, mode)?;
    if !(terms.loss <= initial_loss) {
        image = init.clone();
        terms = loss_only(&start, &targets, weights, cfg.lambda_c, mode)?;
    }
    Ok(StageResult {
        image,
        final_loss: terms.loss,
        content_term: terms.content_term,
        style_term: terms.style_term,
        initial_loss,
        inner_iterations: report.iterations,
        evaluations: report.evaluations + 1,
        termination: report.termination,
        loss_history: report.history,
    })
}

#[cfg(test)]
mod tests {
    use super::fold;

    #[test]
    fn fold_reflects_into_unit_interval() {
        assert_eq!(fold(0.25), (0.25, 1.0));
        assert_eq!(fold(1.25), (0.75, -1.0));
        assert_eq!(fold(-0.25), (0.25, -1.0));
        assert_eq!(fold(2.5), (0.5, 1.0));
        for i in -400..400 {
            let v = i as f64 * 0.0137;
            let (y, s) = fold(v);
            assert!((0.0..=1.0).contains(&y));
            let h = 1e-7;
            if (fold(v + h).1 == s) && (fold(v - h).1 == s) {
                assert!(((fold(v + h).0 - fold(v - h).0) / (2.0 * h) - s).abs() < 1e-6);
            }
        }
    }
}
