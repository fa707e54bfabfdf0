//! Adam and AdaDelta, both as flat-slice kernels and as a whole-network
//! [`Optimizer`].

use crate::error::{Error, Result};
use crate::network::Network;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    AdaDelta { lr: f64, rho: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// `lr` scales the unit-free AdaDelta step; 1.0 is the textbook rule.
    pub fn adadelta() -> Self {
        OptimizerKind::AdaDelta { lr: 1.0, rho: 0.95, eps: 1e-6 }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "adam" => Ok(Self::adam()),
            "adadelta" => Ok(Self::adadelta()),
            other => Err(Error::config(format!("unknown optimizer `{other}` (adam|adadelta)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Adam { .. } => "adam",
            OptimizerKind::AdaDelta { .. } => "adadelta",
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimizerKind::Adam { lr, .. } | OptimizerKind::AdaDelta { lr, .. } => lr,
        }
    }

    pub fn with_learning_rate(self, new: f64) -> Self {
        match self {
            OptimizerKind::Adam { beta1, beta2, eps, .. } => OptimizerKind::Adam { lr: new, beta1, beta2, eps },
            OptimizerKind::AdaDelta { rho, eps, .. } => OptimizerKind::AdaDelta { lr: new, rho, eps },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                lr >= 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
            OptimizerKind::AdaDelta { lr, rho, eps } => lr >= 0.0 && (0.0..1.0).contains(&rho) && eps > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid optimizer hyperparameters {self:?}")))
        }
    }
}

/// Adam moments for one tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, beta1: f64, beta2: f64, eps: f64) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    }
}

/// Running averages of squared gradients and squared updates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdaDeltaState {
    pub avg_sq_grad: Vec<f64>,
    pub avg_sq_delta: Vec<f64>,
}

impl AdaDeltaState {
    pub fn new(len: usize) -> Self {
        AdaDeltaState { avg_sq_grad: vec![0.0; len], avg_sq_delta: vec![0.0; len] }
    }
}

pub fn adadelta_step(params: &mut [f64], grads: &[f64], state: &mut AdaDeltaState, lr: f64, rho: f64, eps: f64) {
    debug_assert_eq!(params.len(), grads.len());
    for (((p, &g), eg), ed) in params.iter_mut().zip(grads).zip(&mut state.avg_sq_grad).zip(&mut state.avg_sq_delta) {
        *eg = rho * *eg + (1.0 - rho) * g * g;
        let delta = -((*ed + eps).sqrt() / (*eg + eps).sqrt()) * g;
        *ed = rho * *ed + (1.0 - rho) * delta * delta;
        *p += lr * delta;
    }
}

#[derive(Clone, Debug)]
enum SlotState {
    Adam(AdamState),
    AdaDelta(AdaDeltaState),
}

/// Applies one step to every trainable, unfrozen tensor of a network.
/// State is keyed by visit order, so one optimizer serves one network.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    states: Vec<Option<SlotState>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer { kind, states: Vec::new() }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step(&mut self, net: &mut Network) {
        let kind = self.kind;
        let states = &mut self.states;
        let mut index = 0;
        net.visit_params_mut(&mut |slot| {
            let i = index;
            index += 1;
            if states.len() <= i {
                states.resize_with(i + 1, || None);
            }
            let Some(grad) = slot.grad else { return };
            if slot.frozen {
                return;
            }
            let len = slot.value.len();
            let state = states[i].get_or_insert_with(|| match kind {
                OptimizerKind::Adam { .. } => SlotState::Adam(AdamState::new(len)),
                OptimizerKind::AdaDelta { .. } => SlotState::AdaDelta(AdaDeltaState::new(len)),
            });
            match (kind, state) {
                (OptimizerKind::Adam { lr, beta1, beta2, eps }, SlotState::Adam(s)) => {
                    adam_step(slot.value.data_mut(), grad.data(), s, lr, beta1, beta2, eps)
                }
                (OptimizerKind::AdaDelta { lr, rho, eps }, SlotState::AdaDelta(s)) => {
                    adadelta_step(slot.value.data_mut(), grad.data(), s, lr, rho, eps)
                }
                _ => unreachable!("optimizer state kind is fixed at construction"),
            }
        });
    }
}
