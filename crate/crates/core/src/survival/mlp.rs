use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::likelihood::nll_and_gradient;
use super::{check_width, SurvivalDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    /// Width of each hidden layer; `[32]` is one layer of 32 units.
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub l2: f64,
    pub epochs: usize,
    /// Step size per event: each update is scaled by `1 / events` so the
    /// same rate suits cohorts of any size.
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            dropout: 0.2,
            l2: 1e-4,
            epochs: 200,
            learning_rate: 2e-2,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl MlpParams {
    fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::InvalidParameter("hidden layers need at least one unit".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.l2 >= 0.0 && self.learning_rate > 0.0 && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::InvalidParameter(
                "need l2 >= 0, learning_rate > 0 and momentum in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out x in`
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Fully connected network with ReLU hidden units and one linear output.
/// Inputs are standardised with the training means and scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCoxModel {
    pub names: Vec<String>,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub layers: Vec<Dense>,
    pub dropout: f64,
    pub l2: f64,
    /// Training objective after each epoch.
    pub loss_trace: Vec<f64>,
}

struct Forward {
    /// Layer inputs, `n x width`; `acts[0]` is the standardised input.
    acts: Vec<DMatrix<f64>>,
    /// Dropout scale applied to each hidden activation (1 when inactive).
    masks: Vec<DMatrix<f64>>,
    eta: Vec<f64>,
}

impl MlpCoxModel {
    /// Seeded initialisation: weights and biases uniform in
    /// +-1/sqrt(fan_in).
    pub fn init(data: &SurvivalDataset, params: &MlpParams) -> Result<Self> {
        params.validate()?;
        let p = data.p();
        if p == 0 {
            return Err(Error::InvalidParameter("network needs at least one feature".into()));
        }
        let mut input_mean = Vec::with_capacity(p);
        let mut input_scale = Vec::with_capacity(p);
        for j in 0..p {
            let c = data.x.column(j);
            let m = c.mean();
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / c.len() as f64).sqrt();
            input_mean.push(m);
            input_scale.push(if sd > 0.0 { sd } else { 1.0 });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut sizes = vec![p];
        sizes.extend(&params.hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Dense {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..bound)),
                    bias: DVector::from_fn(w[1], |_, _| rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Ok(Self {
            names: data.names.clone(),
            input_mean,
            input_scale,
            layers,
            dropout: params.dropout,
            l2: params.l2,
            loss_trace: Vec::new(),
        })
    }

    fn standardise(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.input_mean[j]) / self.input_scale[j])
    }

    fn forward(&self, z: DMatrix<f64>, rng: Option<&mut ChaCha8Rng>) -> Forward {
        let n = z.nrows();
        let keep = 1.0 - self.dropout;
        let mut rng = rng;
        let mut acts = vec![z];
        let mut masks = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let input = acts.last().unwrap();
            let mut out = input * layer.weights.transpose();
            for mut row in out.row_iter_mut() {
                row += layer.bias.transpose();
            }
            if l == last {
                let eta = out.column(0).iter().copied().collect();
                return Forward { acts, masks, eta };
            }
            out.apply(|v| *v = v.max(0.0));
            let mask = match rng.as_deref_mut() {
                Some(r) if self.dropout > 0.0 => DMatrix::from_fn(n, out.ncols(), |_, _| {
                    if r.random_bool(keep) {
                        1.0 / keep
                    } else {
                        0.0
                    }
                }),
                _ => DMatrix::from_element(n, out.ncols(), 1.0),
            };
            out.component_mul_assign(&mask);
            masks.push(mask);
            acts.push(out);
        }
        unreachable!("network has an output layer")
    }

    fn penalty(&self) -> f64 {
        self.l2 * self.layers.iter().map(|l| l.weights.norm_squared()).sum::<f64>()
    }

    fn backward(&self, fwd: &Forward, time: &[f64], event: &[bool]) -> Result<(f64, Vec<Dense>)> {
        let (nll, g_eta) = nll_and_gradient(&fwd.eta, time, event)?;
        let mut delta = DMatrix::from_column_slice(g_eta.len(), 1, &g_eta);
        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &fwd.acts[l];
            let mut gw = delta.transpose() * input;
            gw += &layer.weights * (2.0 * self.l2);
            let gb = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            if l > 0 {
                let mut back = &delta * &layer.weights;
                // Through dropout and ReLU: the stored activation is zero
                // exactly where either blocked the signal.
                back.zip_apply(&fwd.masks[l - 1], |b, m| *b *= m);
                back.zip_apply(input, |b, a| {
                    if a <= 0.0 {
                        *b = 0.0
                    }
                });
                delta = back;
            }
            grads.push(Dense { weights: gw, bias: gb });
        }
        grads.reverse();
        Ok((nll + self.penalty(), grads))
    }

    /// Objective `nll + l2 * sum |W|^2` and its gradient per layer, with
    /// dropout disabled.
    pub fn loss_and_gradient(&self, data: &SurvivalDataset) -> Result<(f64, Vec<Dense>)> {
        check_width(self.names.len(), &data.x)?;
        let fwd = self.forward(self.standardise(&data.x), None);
        self.backward(&fwd, &data.time, &data.event)
    }

    pub fn loss(&self, data: &SurvivalDataset) -> Result<f64> {
        check_width(self.names.len(), &data.x)?;
        let fwd = self.forward(self.standardise(&data.x), None);
        Ok(super::neg_log_partial_likelihood(&fwd.eta, &data.time, &data.event)? + self.penalty())
    }

    /// Every weight then bias, layer by layer.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum();
        if values.len() != total {
            return Err(Error::ShapeMismatch(format!("{} parameters, expected {total}", values.len())));
        }
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = values[k];
                k += 1;
            }
        }
        Ok(())
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_width(self.names.len(), x)?;
        Ok(self.forward(self.standardise(x), None).eta)
    }
}

/// Full-batch gradient descent with momentum on the penalised Breslow
/// loss. Dropout masks are redrawn every epoch from the seeded stream.
pub fn fit_mlp_cox(data: &SurvivalDataset, params: &MlpParams) -> Result<MlpCoxModel> {
    data.require_events()?;
    let step = params.learning_rate / data.events() as f64;
    let mut model = MlpCoxModel::init(data, params)?;
    let z = model.standardise(&data.x);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x6d6c_7063_6f78);
    let mut velocity: Vec<Dense> = model
        .layers
        .iter()
        .map(|l| Dense {
            weights: DMatrix::zeros(l.weights.nrows(), l.weights.ncols()),
            bias: DVector::zeros(l.bias.len()),
        })
        .collect();
    for epoch in 0..params.epochs {
        let fwd = model.forward(z.clone(), Some(&mut rng));
        let (loss, grads) = model.backward(&fwd, &data.time, &data.event)?;
        if !loss.is_finite() || grads.iter().any(|g| g.weights.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonConvergence {
                iterations: epoch,
                grad_norm: f64::NAN,
                reason: format!(
                    "non-finite loss at epoch {epoch} (last finite {:?}); lower the learning rate",
                    model.loss_trace.last()
                ),
            });
        }
        model.loss_trace.push(loss);
        for ((layer, v), g) in model.layers.iter_mut().zip(&mut velocity).zip(&grads) {
            v.weights = &v.weights * params.momentum - &g.weights * step;
            v.bias = &v.bias * params.momentum - &g.bias * step;
            layer.weights += &v.weights;
            layer.bias += &v.bias;
        }
    }
    Ok(model)
}
