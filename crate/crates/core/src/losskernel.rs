//! Residual-variance gating and the negative-sample loss.
//!
//! For a variant `V` of an original `H`, the residual variance map is
//! `var3x3(|V - H|) ^ a`. Where the negative variant's map exceeds the
//! positive's, the indication map keeps the negative value; elsewhere it is
//! zero. The negative loss is the gated mean absolute distance between the
//! super-resolved output and the negative GT, and enters the total loss with
//! a minus sign so minimizing the total pushes the output away from it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{local_variance_map, to_luma, ImageBuffer};

pub const DEFAULT_EXPONENT: f64 = 0.75;
pub const VARIANCE_WINDOW: usize = 3;

/// Whether residual maps are computed once on luminance (gating all channels)
/// or separately per channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    #[default]
    Luma,
    PerChannel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualVarianceMap {
    pub values: ImageBuffer,
    pub exponent: f64,
}

/// `v ^ a` for a non-negative variance.
#[inline]
pub fn variance_power(v: f64, a: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        v.powf(a)
    }
}

pub fn residual_variance_map(
    variant: &ImageBuffer,
    original_hr: &ImageBuffer,
    exponent: f64,
) -> Result<ResidualVarianceMap> {
    residual_variance_map_with(variant, original_hr, exponent, ResidualMode::Luma)
}

pub fn residual_variance_map_with(
    variant: &ImageBuffer,
    original_hr: &ImageBuffer,
    exponent: f64,
    mode: ResidualMode,
) -> Result<ResidualVarianceMap> {
    variant.ensure_same_dims(original_hr)?;
    if !(exponent.is_finite() && exponent > 0.0) {
        return Err(Error::InvalidParam(format!("exponent {exponent} must be positive")));
    }
    let per_channel = |img: &ImageBuffer| -> Result<ImageBuffer> {
        let residual = img.map(f64::abs);
        let mut maps = Vec::with_capacity(img.channels());
        for c in 0..img.channels() {
            maps.push(local_variance_map(&residual.channel(c), VARIANCE_WINDOW)?);
        }
        ImageBuffer::from_fn(img.height(), img.width(), img.channels(), |y, x, c| {
            maps[c].get(y, x, 0)
        })
    };
    let diff = variant.with_samples(
        variant
            .samples()
            .iter()
            .zip(original_hr.samples())
            .map(|(a, b)| a - b)
            .collect(),
    );
    let variance = match mode {
        // luma is linear, so luma(V) - luma(H) = luma(V - H)
        ResidualMode::Luma => per_channel(&to_luma(&diff))?,
        ResidualMode::PerChannel => per_channel(&diff)?,
    };
    Ok(ResidualVarianceMap {
        values: variance.map(|v| variance_power(v, exponent)),
        exponent,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndicationMap {
    pub values: ImageBuffer,
}

impl IndicationMap {
    /// Number of open (non-zero) gate entries.
    pub fn active(&self) -> usize {
        self.values.samples().iter().filter(|&&v| v > 0.0).count()
    }
}

/// `m_neg` where it strictly exceeds `m_pos`, zero elsewhere.
pub fn indication_map(m_neg: &ResidualVarianceMap, m_pos: &ResidualVarianceMap) -> Result<IndicationMap> {
    m_neg.values.ensure_same_dims(&m_pos.values)?;
    if m_neg.exponent != m_pos.exponent {
        return Err(Error::InvalidParam(format!(
            "exponents differ: {} vs {}",
            m_neg.exponent, m_pos.exponent
        )));
    }
    let values = m_neg
        .values
        .samples()
        .iter()
        .zip(m_pos.values.samples())
        .map(|(&n, &p)| if n > p { n } else { 0.0 })
        .collect();
    Ok(IndicationMap {
        values: m_neg.values.with_samples(values),
    })
}

/// A loss value and its gradient with respect to the super-resolved image.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: ImageBuffer,
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gate value for sample `i` of an image with `channels` channels.
#[inline]
fn gate_at(gate: &ImageBuffer, i: usize, channels: usize) -> f64 {
    if gate.channels() == channels {
        gate.samples()[i]
    } else {
        gate.samples()[i / channels]
    }
}

/// Mean over all samples of `M_ind * |neg - sr|`. The gradient treats the
/// gate as a constant; the subgradient at ties is zero.
pub fn negative_loss(i_neg: &ImageBuffer, i_sr: &ImageBuffer, m_ind: &IndicationMap) -> Result<LossValue> {
    i_neg.ensure_same_dims(i_sr)?;
    let gate = &m_ind.values;
    let c = i_sr.channels();
    if (gate.height(), gate.width()) != (i_sr.height(), i_sr.width())
        || !(gate.channels() == 1 || gate.channels() == c)
    {
        return Err(Error::DimMismatch {
            left: gate.dims(),
            right: i_sr.dims(),
        });
    }
    let n = i_sr.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(i_sr.len());
    for (i, (&neg, &sr)) in i_neg.samples().iter().zip(i_sr.samples()).enumerate() {
        let m = gate_at(gate, i, c);
        value += m * (neg - sr).abs();
        grad.push(m * sign(sr - neg) / n);
    }
    Ok(LossValue {
        value: value / n,
        gradient: i_sr.with_samples(grad),
    })
}

/// Mean absolute error `mean |sr - target|` with its gradient in `sr`.
pub fn l1_loss(i_sr: &ImageBuffer, target: &ImageBuffer) -> Result<LossValue> {
    i_sr.ensure_same_dims(target)?;
    let n = i_sr.len() as f64;
    let mut value = 0.0;
    let grad = i_sr
        .samples()
        .iter()
        .zip(target.samples())
        .map(|(&s, &t)| {
            value += (s - t).abs();
            sign(s - t) / n
        })
        .collect();
    Ok(LossValue {
        value: value / n,
        gradient: i_sr.with_samples(grad),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for LossWeights {
    /// `(1, 1, 0.1, 300)`
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.1,
            delta: 300.0,
        }
    }
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        let w = Self {
            alpha,
            beta,
            gamma,
            delta,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParam(format!("weight {name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for LossWeights {
    type Err = Error;

    /// `"alpha,beta,gamma,delta"`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::InvalidParam(format!("weights {s:?}: {e}")))?;
        match parts[..] {
            [a, b, g, d] => LossWeights::new(a, b, g, d),
            _ => Err(Error::InvalidParam(format!("weights {s:?}: expected four values"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub perceptual: f64,
    pub adversarial: f64,
    pub negative: f64,
    pub total: f64,
}

/// `alpha*l1 + beta*perceptual + gamma*adversarial - delta*negative`.
pub fn total_loss(
    l1: f64,
    perceptual: f64,
    adversarial: f64,
    negative: f64,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    for (name, v) in [
        ("l1 term", l1),
        ("perceptual term", perceptual),
        ("adversarial term", adversarial),
        ("negative term", negative),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name));
        }
    }
    w.validate()?;
    Ok(LossBreakdown {
        l1,
        perceptual,
        adversarial,
        negative,
        total: w.alpha * l1 + w.beta * perceptual + w.gamma * adversarial - w.delta * negative,
    })
}

/// A loss term computed outside this crate (for example by a pretrained
/// network), supplied as a value and optionally a gradient in `sr`.
pub trait ExternalTerm {
    fn name(&self) -> &str;
    fn evaluate(&self, sr: &ImageBuffer, gt: &ImageBuffer) -> Result<TermValue>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermValue {
    pub value: f64,
    pub gradient: Option<ImageBuffer>,
}

/// Always zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroTerm;

impl ExternalTerm for ZeroTerm {
    fn name(&self) -> &str {
        "zero"
    }

    fn evaluate(&self, _sr: &ImageBuffer, _gt: &ImageBuffer) -> Result<TermValue> {
        Ok(TermValue {
            value: 0.0,
            gradient: None,
        })
    }
}

/// Uniform choice of one positive GT.
pub fn pick_positive_gt<'a, T, R: Rng + ?Sized>(positives: &'a [T], rng: &mut R) -> Result<&'a T> {
    if positives.is_empty() {
        return Err(Error::InvalidParam("no positive GT to choose from".into()));
    }
    Ok(&positives[rng.random_range(0..positives.len())])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemoConfig {
    pub weights: LossWeights,
    pub steps: usize,
    pub step_size: f64,
    pub exponent: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoStep {
    pub image: ImageBuffer,
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoTrajectory {
    /// Starts with the initial image; one entry per completed update after that.
    pub steps: Vec<DemoStep>,
    pub indication: IndicationMap,
    /// Set when a non-finite loss stopped the run early.
    pub aborted: bool,
}

/// Gradient descent directly on pixel values against the total loss, with
/// `l1 = mean |sr - pos|` and the gated negative loss against `neg`. Pixels
/// are clamped to `[0, 1]` after each step.
pub fn optimize_patch_demo(
    i_init: &ImageBuffer,
    i_pos: &ImageBuffer,
    i_neg: &ImageBuffer,
    i_hr: &ImageBuffer,
    cfg: &DemoConfig,
    perceptual: &dyn ExternalTerm,
    adversarial: &dyn ExternalTerm,
) -> Result<DemoTrajectory> {
    if cfg.steps == 0 {
        return Err(Error::InvalidParam("demo needs at least one step".into()));
    }
    for img in [i_pos, i_neg, i_hr] {
        i_init.ensure_same_dims(img)?;
    }
    cfg.weights.validate()?;
    let m_pos = residual_variance_map(i_pos, i_hr, cfg.exponent)?;
    let m_neg = residual_variance_map(i_neg, i_hr, cfg.exponent)?;
    let indication = indication_map(&m_neg, &m_pos)?;
    let w = cfg.weights;

    let mut steps = Vec::with_capacity(cfg.steps + 1);
    let mut sr = i_init.clone();
    for step in 0..=cfg.steps {
        let l1 = l1_loss(&sr, i_pos)?;
        let neg = negative_loss(i_neg, &sr, &indication)?;
        let p = perceptual.evaluate(&sr, i_pos)?;
        let a = adversarial.evaluate(&sr, i_pos)?;
        let loss = match total_loss(l1.value, p.value, a.value, neg.value, &w) {
            Ok(l) => l,
            Err(Error::NonFinite(_)) => {
                return Ok(DemoTrajectory {
                    steps,
                    indication,
                    aborted: true,
                })
            }
            Err(e) => return Err(e),
        };
        steps.push(DemoStep {
            image: sr.clone(),
            loss,
        });
        if step == cfg.steps {
            break;
        }
        let mut grad: Vec<f64> = l1
            .gradient
            .samples()
            .iter()
            .zip(neg.gradient.samples())
            .map(|(g1, gn)| w.alpha * g1 - w.delta * gn)
            .collect();
        for (coef, term) in [(w.beta, &p), (w.gamma, &a)] {
            if let Some(g) = &term.gradient {
                sr.ensure_same_dims(g)?;
                for (acc, gi) in grad.iter_mut().zip(g.samples()) {
                    *acc += coef * gi;
                }
            }
        }
        for (v, g) in sr.samples_mut().iter_mut().zip(&grad) {
            *v = (*v - cfg.step_size * g).clamp(0.0, 1.0);
        }
    }
    Ok(DemoTrajectory {
        steps,
        indication,
        aborted: false,
    })
}
