//! `key = value` run configuration with `#` comments.

use std::collections::HashSet;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dhff_core::pipeline::DetectMethod;
use dhff_core::IistConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub iist: IistConfig,
    pub method: DetectMethod,
    pub nu: f64,
    pub gamma: Option<f64>,
    pub radius: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            iist: IistConfig::default(),
            method: DetectMethod::Otsu,
            nu: 0.1,
            gamma: None,
            radius: 1,
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("{key}: cannot parse {value:?}: {e}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                bail!("line {}: duplicate key {key:?}", n + 1);
            }
            cfg.set(key, value).with_context(|| format!("line {}", n + 1))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        RunConfig::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let iist = &mut self.iist;
        match key {
            "lambda_c" => iist.lambda_c = number(key, value)?,
            "alpha" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| number(key, p.trim()))
                    .collect::<Result<_>>()?;
                iist.alpha = match parts.len() {
                    1 => vec![parts[0]; 16],
                    16 => parts,
                    n => bail!("alpha takes 1 or 16 values, got {n}"),
                };
            }
            "max_outer_iters" => iist.max_outer_iters = number(key, value)?,
            "epsilon" => iist.epsilon = number(key, value)?,
            "content_layer" => iist.content_layer = value.parse()?,
            "pooling" => iist.pooling = value.parse()?,
            "seed" => iist.seed = number(key, value)?,
            "lbfgs_memory" => iist.lbfgs.memory = number(key, value)?,
            "max_inner_iters" => iist.lbfgs.max_iters = number(key, value)?,
            "grad_tol" => iist.lbfgs.grad_tol = number(key, value)?,
            "wolfe_c1" => iist.lbfgs.c1 = number(key, value)?,
            "wolfe_c2" => iist.lbfgs.c2 = number(key, value)?,
            "max_line_search" => iist.lbfgs.max_line_search = number(key, value)?,
            "method" => self.method = value.parse()?,
            "nu" => self.nu = number(key, value)?,
            "gamma" => self.gamma = Some(number(key, value)?),
            "radius" => self.radius = number(key, value)?,
            other => bail!("unknown key {other:?}"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.iist.validate()?;
        self.iist.lbfgs.validate()?;
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            bail!("nu must lie in (0, 1], got {}", self.nu);
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                bail!("gamma must be positive, got {g}");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dhff_core::{ContentLayer, PoolingMode};

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn parses_every_key() {
        let text = "
            lambda_c = 0.05   # content weight
            alpha = 0.5
            max_outer_iters = 3
            epsilon = 0.02
            content_layer = conv4_4
            pooling = average
            seed = 11
            lbfgs_memory = 5
            max_inner_iters = 50
            grad_tol = 1e-6
            wolfe_c1 = 1e-3
            wolfe_c2 = 0.8
            max_line_search = 10
            method = ocsvm
            nu = 0.2
            gamma = 3.5
            radius = 2
        ";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.iist.lambda_c, 0.05);
        assert_eq!(c.iist.alpha, vec![0.5; 16]);
        assert_eq!(c.iist.max_outer_iters, 3);
        assert_eq!(c.iist.content_layer, ContentLayer::Conv4_4);
        assert_eq!(c.iist.pooling, PoolingMode::Average);
        assert_eq!(c.iist.seed, 11);
        assert_eq!(c.iist.lbfgs.memory, 5);
        assert_eq!(c.iist.lbfgs.max_iters, 50);
        assert_eq!(c.iist.lbfgs.c2, 0.8);
        assert_eq!(c.method, DetectMethod::Ocsvm);
        assert_eq!(c.gamma, Some(3.5));
        assert_eq!(c.radius, 2);
    }

    #[test]
    fn per_layer_alpha() {
        let list: Vec<String> = (0..16).map(|i| format!("{}", i as f64 / 10.0)).collect();
        let c = RunConfig::parse(&format!("alpha = {}", list.join(", "))).unwrap();
        assert_eq!(c.iist.alpha[15], 1.5);
        assert!(RunConfig::parse("alpha = 1, 2").is_err());
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "colour = red",
            "lambda_c = 1",
            "lambda_c = 0",
            "lambda_c",
            "epsilon = 0",
            "pooling = median",
            "seed = -1",
            "nu = 1.5",
            "seed = 1\nseed = 2",
            "alpha = -1",
        ] {
            assert!(RunConfig::parse(text).is_err(), "{text:?} accepted");
        }
    }
}
