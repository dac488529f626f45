use std::sync::Arc;

use rand::Rng;

use super::params::{Layout, ParameterVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

/// Architecture of a predictor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelKind {
    /// Multinomial logistic regression, `scores = W x + b`.
    Logistic { inputs: usize, classes: usize },
    /// One ReLU hidden layer.
    Mlp {
        inputs: usize,
        hidden: usize,
        classes: usize,
    },
    /// Frozen backbone with a trainable linear head reading the backbone's
    /// penultimate activations (the raw input for a logistic backbone, the
    /// hidden layer for an MLP).
    Adapter {
        backbone: Box<ModelKind>,
        head_classes: usize,
    },
    /// Trainable prompt vector of length `prompt_len` appended to every input
    /// row of a frozen inner model.
    SoftPrompt {
        inner: Box<ModelKind>,
        prompt_len: usize,
    },
}

impl ModelKind {
    /// Width of an input row.
    pub fn input_dim(&self) -> usize {
        match self {
            ModelKind::Logistic { inputs, .. } | ModelKind::Mlp { inputs, .. } => *inputs,
            ModelKind::Adapter { backbone, .. } => backbone.input_dim(),
            ModelKind::SoftPrompt { inner, prompt_len } => {
                inner.input_dim().saturating_sub(*prompt_len)
            }
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            ModelKind::Logistic { classes, .. } | ModelKind::Mlp { classes, .. } => *classes,
            ModelKind::Adapter { head_classes, .. } => *head_classes,
            ModelKind::SoftPrompt { inner, .. } => inner.classes(),
        }
    }

    /// Width of the representation an adapter head reads from this backbone.
    pub(crate) fn penultimate_dim(&self) -> usize {
        match self {
            ModelKind::Mlp { hidden, .. } => *hidden,
            other => other.input_dim(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            ModelKind::Logistic { inputs, classes } => classes * inputs + classes,
            ModelKind::Mlp {
                inputs,
                hidden,
                classes,
            } => hidden * inputs + hidden + classes * hidden + classes,
            ModelKind::Adapter {
                backbone,
                head_classes,
            } => backbone.param_count() + head_classes * backbone.penultimate_dim() + head_classes,
            ModelKind::SoftPrompt { inner, prompt_len } => prompt_len + inner.param_count(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        match self {
            ModelKind::Logistic { inputs, classes } => {
                if *inputs < 1 {
                    return bad("logistic inputs must be >= 1".into());
                }
                if *classes < 2 {
                    return bad(format!("classes must be >= 2, got {classes}"));
                }
            }
            ModelKind::Mlp {
                inputs,
                hidden,
                classes,
            } => {
                if *inputs < 1 || *hidden < 1 {
                    return bad(format!("mlp needs inputs >= 1 and hidden >= 1, got {inputs}/{hidden}"));
                }
                if *classes < 2 {
                    return bad(format!("classes must be >= 2, got {classes}"));
                }
            }
            ModelKind::Adapter {
                backbone,
                head_classes,
            } => {
                if !matches!(**backbone, ModelKind::Logistic { .. } | ModelKind::Mlp { .. }) {
                    return bad("adapter backbone must be logistic or mlp".into());
                }
                backbone.validate()?;
                if *head_classes < 2 {
                    return bad(format!("head classes must be >= 2, got {head_classes}"));
                }
            }
            ModelKind::SoftPrompt { inner, prompt_len } => {
                if *prompt_len < 1 {
                    return bad("prompt length must be >= 1".into());
                }
                if matches!(**inner, ModelKind::SoftPrompt { .. }) {
                    return bad("soft prompts do not nest".into());
                }
                inner.validate()?;
                if inner.input_dim() < prompt_len + 1 {
                    return bad(format!(
                        "inner input dim {} leaves no room for data beside a {prompt_len}-long prompt",
                        inner.input_dim()
                    ));
                }
            }
        }
        Ok(())
    }

    fn build_layout(&self, prefix: &str, frozen: bool, layout: &mut Layout) {
        match self {
            ModelKind::Logistic { inputs, classes } => {
                layout.push(format!("{prefix}weight"), vec![*classes, *inputs], !frozen);
                layout.push(format!("{prefix}bias"), vec![*classes], !frozen);
            }
            ModelKind::Mlp {
                inputs,
                hidden,
                classes,
            } => {
                layout.push(format!("{prefix}hidden.weight"), vec![*hidden, *inputs], !frozen);
                layout.push(format!("{prefix}hidden.bias"), vec![*hidden], !frozen);
                layout.push(format!("{prefix}output.weight"), vec![*classes, *hidden], !frozen);
                layout.push(format!("{prefix}output.bias"), vec![*classes], !frozen);
            }
            ModelKind::Adapter {
                backbone,
                head_classes,
            } => {
                backbone.build_layout(&format!("{prefix}backbone."), true, layout);
                let feat = backbone.penultimate_dim();
                layout.push(format!("{prefix}head.weight"), vec![*head_classes, feat], !frozen);
                layout.push(format!("{prefix}head.bias"), vec![*head_classes], !frozen);
            }
            ModelKind::SoftPrompt { inner, prompt_len } => {
                layout.push(format!("{prefix}prompt"), vec![*prompt_len], !frozen);
                inner.build_layout(&format!("{prefix}inner."), true, layout);
            }
        }
    }
}

/// A validated architecture together with its parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    kind: ModelKind,
    layout: Arc<Layout>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Result<Self> {
        kind.validate()?;
        let mut layout = Layout::new();
        kind.build_layout("", false, &mut layout);
        debug_assert_eq!(layout.total(), kind.param_count());
        Ok(Self {
            kind,
            layout: Arc::new(layout),
        })
    }

    pub fn logistic(inputs: usize, classes: usize) -> Result<Self> {
        Self::new(ModelKind::Logistic { inputs, classes })
    }

    pub fn mlp(inputs: usize, hidden: usize, classes: usize) -> Result<Self> {
        Self::new(ModelKind::Mlp {
            inputs,
            hidden,
            classes,
        })
    }

    pub fn adapter(backbone: ModelKind, head_classes: usize) -> Result<Self> {
        Self::new(ModelKind::Adapter {
            backbone: Box::new(backbone),
            head_classes,
        })
    }

    pub fn soft_prompt(inner: ModelKind, prompt_len: usize) -> Result<Self> {
        Self::new(ModelKind::SoftPrompt {
            inner: Box::new(inner),
            prompt_len,
        })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn input_dim(&self) -> usize {
        self.kind.input_dim()
    }

    pub fn classes(&self) -> usize {
        self.kind.classes()
    }

    pub fn param_count(&self) -> usize {
        self.layout.total()
    }

    pub fn trainable_mask(&self) -> Vec<bool> {
        self.layout.trainable_mask()
    }

    pub(crate) fn check_params<T: Scalar>(&self, params: &ParameterVector<T>) -> Result<()> {
        if params.layout() != &*self.layout {
            return Err(Error::LayoutMismatch("model spec"));
        }
        Ok(())
    }
}

/// Glorot half-width `sqrt(6 / (fan_in + fan_out))` for a weight matrix of
/// shape `[fan_out, fan_in]`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Glorot-uniform weights, zero biases, zero prompt. Deterministic in `seed`.
pub fn init_params<T: Scalar>(spec: &ModelSpec, seed: u64) -> ParameterVector<T> {
    let mut rng = seed::rng(seed);
    let mut params = ParameterVector::zeros(Arc::clone(spec.layout()));
    let values = params.values_mut();
    for seg in spec.layout().segments() {
        if seg.is_matrix() {
            let a = glorot_bound(seg.shape[1], seg.shape[0]);
            for v in &mut values[seg.range()] {
                *v = T::lit(rng.random_range(-a..=a));
            }
        }
    }
    params
}
