//! Fitted estimators behind one interface, with a text format for the
//! `train` and `evaluate` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::baselines::{fit_adjusted, fit_meta, predict_cate_meta, ForestConfig, ForestModel, LinearFitOptions, LinearModel, MetaKind, MetaLearner};
use crate::causalnet::{build_causalnet, checkpoint_to_string, parse_checkpoint, train, CausalNet, CausalNetConfig, InputShape, TrainConfig};
use crate::datagen::{GeneratorKind, ObservedData};
use crate::error::{Error, Result};
use crate::hexfloat;
use crate::rng;

use super::config::{Method, Overrides};

const MAGIC: &str = "fitted-model 1";

#[derive(Debug, Clone)]
pub enum Fitted {
    Net(CausalNet),
    Meta(MetaLearner),
    Linear { model: LinearModel, interaction: bool },
}

/// Network input block matching a covariate shape.
pub fn input_shape(covariate_shape: &[usize]) -> InputShape {
    match *covariate_shape {
        [channels, height, width] => InputShape::Image { channels, height, width },
        _ => InputShape::Flat(covariate_shape.iter().product()),
    }
}

pub fn net_train_config(o: &Overrides, kind: GeneratorKind, seed: u64) -> TrainConfig {
    let circle = matches!(kind, GeneratorKind::CircleNoiseless | GeneratorKind::CircleNoisy);
    TrainConfig {
        optimizer: o.net_optimizer,
        lr: o.net_lr,
        batch_size: o.net_batch_size,
        epochs: o.net_epochs,
        shuffle_seed: rng::derive(seed, "shuffle", 0),
        standardize_target: o.net_standardize.unwrap_or(!circle),
    }
}

pub fn forest_config(o: &Overrides, seed: u64) -> ForestConfig {
    ForestConfig {
        trees: o.forest_trees,
        mtry: o.forest_mtry,
        min_leaf: o.forest_min_leaf,
        seed,
    }
}

/// Fits `method` on observed data only. `kind` selects generator-dependent
/// defaults and `seed` drives initialization, shuffling and bootstrapping.
pub fn fit_method(method: Method, data: &ObservedData, kind: GeneratorKind, o: &Overrides, seed: u64) -> Result<Fitted> {
    Ok(match method {
        Method::CausalNet => {
            let mut cfg = CausalNetConfig::image(rng::derive(seed, "init", 0));
            cfg.input = input_shape(&data.covariate_shape);
            let mut net = build_causalnet(&cfg)?;
            train(&mut net, data, &net_train_config(o, kind, seed))?;
            Fitted::Net(net)
        }
        Method::SForest => Fitted::Meta(fit_meta(data, MetaKind::S, &forest_config(o, seed))?),
        Method::TForest => Fitted::Meta(fit_meta(data, MetaKind::T, &forest_config(o, seed))?),
        Method::Adj => Fitted::Linear {
            model: fit_adjusted(data, LinearFitOptions::plain())?,
            interaction: false,
        },
        Method::AdjInteraction => Fitted::Linear {
            model: fit_adjusted(data, LinearFitOptions::with_interaction())?,
            interaction: true,
        },
    })
}

impl Fitted {
    pub fn method(&self) -> Method {
        match self {
            Fitted::Net(_) => Method::CausalNet,
            Fitted::Meta(m) => match m.kind() {
                MetaKind::S => Method::SForest,
                MetaKind::T => Method::TForest,
            },
            Fitted::Linear { interaction: false, .. } => Method::Adj,
            Fitted::Linear { interaction: true, .. } => Method::AdjInteraction,
        }
    }

    /// Effect estimates for every record of `data`.
    pub fn cates(&self, data: &ObservedData) -> Result<Vec<f64>> {
        match self {
            Fitted::Net(net) => net.predict_cates(&data.x),
            Fitted::Meta(m) => predict_cate_meta(m, data),
            Fitted::Linear { model, .. } => data.rows().map(|r| model.predict_cate(r)).collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC}\nmethod {}\n", self.method());
        match self {
            Fitted::Net(net) => out.push_str(&checkpoint_to_string(net)),
            Fitted::Meta(MetaLearner::S { joint }) => out.push_str(&joint.to_text()),
            Fitted::Meta(MetaLearner::T { control, treated }) => {
                out.push_str("arm control\n");
                out.push_str(&control.to_text());
                out.push_str("arm treated\n");
                out.push_str(&treated.to_text());
            }
            Fitted::Linear { model, .. } => write_linear(&mut out, model),
        }
        out
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let bad = |d: &str| Error::format(origin, d);
        let mut parts = text.splitn(3, '\n');
        if parts.next() != Some(MAGIC) {
            return Err(bad("expected a `fitted-model 1` header"));
        }
        let method: Method = parts
            .next()
            .and_then(|l| l.strip_prefix("method "))
            .ok_or_else(|| bad("missing method line"))?
            .parse()?;
        let body = parts.next().unwrap_or("");
        let forest = |s: &str| ForestModel::from_text(s).map_err(|e| bad(&e.to_string()));
        Ok(match method {
            Method::CausalNet => Fitted::Net(parse_checkpoint(body, origin)?),
            Method::SForest => Fitted::Meta(MetaLearner::S { joint: forest(body)? }),
            Method::TForest => {
                let rest = body.strip_prefix("arm control\n").ok_or_else(|| bad("missing control arm"))?;
                let (c, t) = rest.split_once("arm treated\n").ok_or_else(|| bad("missing treated arm"))?;
                Fitted::Meta(MetaLearner::T {
                    control: forest(c)?,
                    treated: forest(t)?,
                })
            }
            Method::Adj | Method::AdjInteraction => Fitted::Linear {
                model: read_linear(body, method == Method::AdjInteraction, origin)?,
                interaction: method == Method::AdjInteraction,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

fn write_vec(out: &mut String, label: &str, v: &[f64]) {
    let _ = write!(out, "{label} {}", v.len());
    for x in v {
        out.push(' ');
        hexfloat::write_hex(out, *x);
    }
    out.push('\n');
}

fn write_linear(out: &mut String, m: &LinearModel) {
    write_vec(out, "intercept", &[m.intercept]);
    write_vec(out, "treatment", &[m.treatment]);
    write_vec(out, "covariates", &m.covariates);
    if let Some(g) = &m.interactions {
        write_vec(out, "interactions", g);
    }
    let _ = writeln!(out, "rank {} width {} minimal_norm {}", m.rank, m.design_width, m.minimal_norm);
    for w in &m.warnings {
        let _ = writeln!(out, "warning {}", w.replace('\n', " "));
    }
}

fn read_linear(body: &str, interaction: bool, origin: &str) -> Result<LinearModel> {
    let bad = |d: String| Error::format(origin, d);
    let mut lines = body.lines();
    let mut vec = |label: &str| -> Result<Vec<f64>> {
        let line = lines.next().ok_or_else(|| bad(format!("missing `{label}`")))?;
        let mut f = line.split_whitespace();
        if f.next() != Some(label) {
            return Err(bad(format!("expected `{label}`, found `{line}`")));
        }
        let n: usize = f.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(format!("bad length in `{line}`")))?;
        let vals: Option<Vec<f64>> = f.map(hexfloat::parse).collect();
        match vals {
            Some(v) if v.len() == n => Ok(v),
            _ => Err(bad(format!("bad values for `{label}`"))),
        }
    };
    let intercept = vec("intercept")?[0];
    let treatment = vec("treatment")?[0];
    let covariates = vec("covariates")?;
    let interactions = if interaction { Some(vec("interactions")?) } else { None };
    let meta = lines.next().ok_or_else(|| bad("missing fit metadata".into()))?;
    let f: Vec<&str> = meta.split_whitespace().collect();
    let (rank, design_width, minimal_norm) = match f.as_slice() {
        ["rank", r, "width", w, "minimal_norm", m] => match (r.parse(), w.parse(), m.parse()) {
            (Ok(r), Ok(w), Ok(m)) => (r, w, m),
            _ => return Err(bad(format!("bad fit metadata `{meta}`"))),
        },
        _ => return Err(bad(format!("bad fit metadata `{meta}`"))),
    };
    let mut warnings = Vec::new();
    for l in lines.filter(|l| !l.trim().is_empty()) {
        let w = l.strip_prefix("warning ").ok_or_else(|| bad(format!("unexpected line `{l}`")))?;
        warnings.push(w.to_string());
    }
    if interactions.as_ref().is_some_and(|g| g.len() != covariates.len()) {
        return Err(bad("interaction and covariate lengths differ".into()));
    }
    Ok(LinearModel {
        intercept,
        treatment,
        covariates,
        interactions,
        rank,
        design_width,
        minimal_norm,
        warnings,
    })
}
