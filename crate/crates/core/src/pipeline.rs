//! End-to-end helpers: transform, detect, and the pooling / content-layer
//! comparison table.

use std::fmt;
use std::str::FromStr;

use log::info;
use serde::Serialize;

use crate::detect::{
    default_gamma, difference_image, ocsvm_detect, ocsvm_train, otsu_threshold, pixel_features, training_indices,
    ChangeMap, OcsvmModel, OcsvmParams,
};
use crate::error::{Error, Result};
use crate::iist::{iist_run, IistConfig, IistOutput};
use crate::image::{to_rgb, Image};
use crate::metrics::{evaluate, MetricsReport};
use crate::vggnet::{ContentLayer, PoolingMode, VggWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectMethod {
    #[default]
    Otsu,
    Ocsvm,
}

impl DetectMethod {
    pub fn name(self) -> &'static str {
        match self {
            DetectMethod::Otsu => "otsu",
            DetectMethod::Ocsvm => "ocsvm",
        }
    }
}

impl fmt::Display for DetectMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "otsu" => Ok(DetectMethod::Otsu),
            "ocsvm" => Ok(DetectMethod::Ocsvm),
            other => Err(Error::InvalidArgument(format!("unknown detection method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOptions {
    pub method: DetectMethod,
    pub nu: f64,
    /// `None` selects `1 / (d * Var)` of the training features.
    pub gamma: Option<f64>,
    pub radius: usize,
    /// Training pixels for the one-class model; `None` self-trains.
    pub train_mask: Option<ChangeMap>,
    pub max_training_samples: usize,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            method: DetectMethod::Otsu,
            nu: 0.1,
            gamma: None,
            radius: 1,
            train_mask: None,
            max_training_samples: 1500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub map: ChangeMap,
    /// Otsu threshold, when that method ran.
    pub threshold: Option<f32>,
    pub model: Option<OcsvmModel>,
}

/// Runs the chosen detector on the homogeneous pair. Gray inputs are
/// replicated to RGB first.
pub fn detect_changes(pre: &Image, post: &Image, opts: &DetectOptions) -> Result<Detection> {
    let (pre, post) = (to_rgb(pre), to_rgb(post));
    let diff = difference_image(&pre, &post)?;
    match opts.method {
        DetectMethod::Otsu => {
            let (t, map) = otsu_threshold(&diff)?;
            Ok(Detection { map, threshold: Some(t), model: None })
        }
        DetectMethod::Ocsvm => {
            let features = pixel_features(&pre, &post, opts.radius)?;
            let rows = training_indices(&diff, opts.train_mask.as_ref(), opts.max_training_samples)?;
            let samples = features.select(&rows);
            let params = OcsvmParams {
                nu: opts.nu,
                gamma: opts.gamma.unwrap_or_else(|| default_gamma(&samples)),
                ..Default::default()
            };
            let model = ocsvm_train(&samples, &params)?;
            info!(
                "one-class model: {} samples, {} support vectors, gamma {:.4}, rho {:.6}",
                rows.len(),
                model.alpha.len(),
                model.gamma,
                model.rho
            );
            let map = ocsvm_detect(&model, &pre, &post, opts.radius)?;
            Ok(Detection { map, threshold: None, model: Some(model) })
        }
    }
}

pub fn transform(opt: &Image, sar: &Image, weights: &VggWeights<f32>, cfg: &IistConfig) -> Result<IistOutput> {
    iist_run(&to_rgb(opt), sar, weights, cfg)
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub pooling: PoolingMode,
    pub content_layer: ContentLayer,
    pub stages: usize,
    pub metrics: MetricsReport,
}

/// Max vs average pooling at Conv5_4, then the three content layers under
/// max pooling; the shared (max, Conv5_4) setting appears once.
pub fn comparison_settings() -> Vec<(PoolingMode, ContentLayer)> {
    vec![
        (PoolingMode::Max, ContentLayer::Conv5_4),
        (PoolingMode::Average, ContentLayer::Conv5_4),
        (PoolingMode::Max, ContentLayer::Conv3_4),
        (PoolingMode::Max, ContentLayer::Conv4_4),
    ]
}

/// Transforms and detects once per setting, scoring each map against `truth`.
pub fn run_comparison(
    opt: &Image,
    sar: &Image,
    truth: &ChangeMap,
    weights: &VggWeights<f32>,
    cfg: &IistConfig,
    detector: &DetectOptions,
    settings: &[(PoolingMode, ContentLayer)],
) -> Result<Vec<ComparisonRow>> {
    let opt = to_rgb(opt);
    settings
        .iter()
        .map(|&(pooling, content_layer)| {
            let cfg = IistConfig { pooling, content_layer, ..cfg.clone() };
            let out = iist_run(&opt, sar, weights, &cfg)?;
            let det = detect_changes(&opt, &out.transformed, detector)?;
            let metrics = evaluate(&det.map, truth)?;
            info!(
                "{} pooling, {}: Ra {:.4}, Ka {:.4}",
                pooling.name(),
                content_layer.name(),
                metrics.ra,
                metrics.ka
            );
            Ok(ComparisonRow { pooling, content_layer, stages: out.trace.len(), metrics })
        })
        .collect()
}

/// `pooling,content_layer,stages,Ra,Ka` with percentages to two decimals.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("pooling,content_layer,stages,Ra,Ka\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.2},{:.2}\n",
            r.pooling.name(),
            r.content_layer.name(),
            r.stages,
            100.0 * r.metrics.ra,
            100.0 * r.metrics.ka
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_parsing() {
        assert_eq!("OTSU".parse::<DetectMethod>().unwrap(), DetectMethod::Otsu);
        assert_eq!("ocsvm".parse::<DetectMethod>().unwrap(), DetectMethod::Ocsvm);
        assert!("kmeans".parse::<DetectMethod>().is_err());
    }

    #[test]
    fn identical_pair_detects_nothing() {
        let img = crate::synthgen::gen_pair(1, 32, 0.1).unwrap().optical;
        let det = detect_changes(&img, &img, &DetectOptions::default()).unwrap();
        assert_eq!(det.map.changed_count(), 0);
        let opts = DetectOptions { method: DetectMethod::Ocsvm, ..Default::default() };
        let det = detect_changes(&img, &img, &opts).unwrap();
        assert_eq!(det.map.changed_count(), 0);
    }

    #[test]
    fn ocsvm_finds_an_obvious_patch() {
        let pair = crate::synthgen::gen_pair(2, 32, 0.0).unwrap();
        let pre = pair.optical;
        let mut data = pre.data().to_vec();
        let mut truth = vec![false; 32 * 32];
        for y in 10..18 {
            for x in 12..20 {
                truth[y * 32 + x] = true;
                for c in 0..3 {
                    data[(y * 32 + x) * 3 + c] = 1.0 - data[(y * 32 + x) * 3 + c];
                }
            }
        }
        let post = Image::new(32, 32, 3, data).unwrap();
        let truth = ChangeMap::new(32, 32, truth).unwrap();
        let opts = DetectOptions {
            method: DetectMethod::Ocsvm,
            radius: 0,
            train_mask: Some(truth.complement()),
            ..Default::default()
        };
        let det = detect_changes(&pre, &post, &opts).unwrap();
        let m = evaluate(&det.map, &truth).unwrap();
        assert!(m.ka > 0.8, "{m:?}");
        let det = detect_changes(&pre, &post, &DetectOptions::default()).unwrap();
        assert!(evaluate(&det.map, &truth).unwrap().ka > 0.8);
    }

    #[test]
    fn csv_has_one_row_per_setting() {
        let m = MetricsReport { ra: 0.9, rp: 0.8, rr: 0.7, ka: 0.6, pe: 0.5 };
        let rows: Vec<_> = comparison_settings()
            .into_iter()
            .map(|(pooling, content_layer)| ComparisonRow { pooling, content_layer, stages: 3, metrics: m })
            .collect();
        let csv = comparison_csv(&rows);
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(csv.lines().nth(2).unwrap(), "average,conv5_4,3,90.00,60.00");
    }
}
