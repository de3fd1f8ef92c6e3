use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub const fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

/// Per-parameter moment estimates for Adam; empty for SGD.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Vec<Matrix>,
    pub second_moment: Vec<Matrix>,
}

/// SGD: `theta -= lr * g`. Adam: bias-corrected first and second moments.
pub fn optimizer_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    state: &mut OptimizerState,
    optimizer: &Optimizer,
    learning_rate: f64,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Input(alloc::format!("{} parameters but {} gradients", params.len(), grads.len())));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::shape("optimizer_step", p.shape(), g.shape()));
        }
    }
    state.step += 1;
    match *optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.iter_mut().zip(grads) {
                for (x, dx) in p.data_mut().iter_mut().zip(g.data()) {
                    *x -= learning_rate * dx;
                }
            }
        }
        Optimizer::Adam { beta1, beta2, epsilon } => {
            if state.first_moment.is_empty() {
                state.first_moment = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
                state.second_moment = state.first_moment.clone();
            }
            let t = state.step as f64;
            let c1 = 1.0 - libm::pow(beta1, t);
            let c2 = 1.0 - libm::pow(beta2, t);
            for (((p, g), m), v) in params
                .iter_mut()
                .zip(grads)
                .zip(state.first_moment.iter_mut())
                .zip(state.second_moment.iter_mut())
            {
                let moments = m.data_mut().iter_mut().zip(v.data_mut().iter_mut());
                for ((x, &dx), (m, v)) in p.data_mut().iter_mut().zip(g.data()).zip(moments) {
                    *m = beta1 * *m + (1.0 - beta1) * dx;
                    *v = beta2 * *v + (1.0 - beta2) * dx * dx;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *x -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
                }
            }
        }
    }
    Ok(())
}
